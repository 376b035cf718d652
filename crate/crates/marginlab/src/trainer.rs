//! Full-batch gradient descent with group-resolved bookkeeping.
//!
//! Metrics are reported separately for the shortcut and leftover groups
//! because overall accuracy hides exactly the failure this codebase
//! studies: a shortcut-reliant model scores well overall whenever the
//! test split is shortcut-heavy.

use crate::dgp::Dataset;
use crate::losses::LossSpec;
use crate::model::ModelParams;
#[cfg(test)]
use crate::model::LinearParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

fn default_lr() -> f64 {
    1e-3
}
fn default_momentum() -> f64 {
    0.9
}
fn default_epochs() -> usize {
    1000
}
fn default_eval_every() -> usize {
    100
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: default_lr(),
            momentum: default_momentum(),
            weight_decay: 0.0,
            epochs: default_epochs(),
            eval_every: default_eval_every(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be nonnegative, got {}", self.lr)));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Config("epochs and eval_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GroupEval {
    pub count: usize,
    pub loss: f64,
    pub acc: f64,
}

/// Metrics for one split. Group entries are `None` when the group is
/// empty rather than carrying NaNs. Worst-group accuracy minimizes over
/// the four (y, z) cells; the balanced accuracy averages the two
/// per-label accuracies.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SplitEval {
    pub all: GroupEval,
    pub shortcut: Option<GroupEval>,
    pub leftover: Option<GroupEval>,
    pub worst_group_acc: f64,
    pub balanced_acc: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeightSnapshot {
    pub w_y: f64,
    pub b_wz: f64,
    pub we_norm: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: SplitEval,
    pub test: SplitEval,
    /// Present for linear models only.
    pub weights: Option<WeightSnapshot>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainRecord {
    pub records: Vec<EpochRecord>,
    pub final_params: ModelParams,
}

impl TrainRecord {
    pub fn final_record(&self) -> &EpochRecord {
        self.records.last().expect("training records nonempty")
    }
}

/// Prediction is sign(f) with sign(0) = +1.
pub fn predict_label(f: f64) -> f64 {
    if f >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn eval_subset(f: &[f64], ds: &Dataset, spec: &LossSpec, idx: &[usize]) -> Result<GroupEval> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in idx {
        loss += spec.eval_loss(f[i], ds.y[i])?;
        if predict_label(f[i]) == ds.y[i] {
            correct += 1;
        }
    }
    Ok(GroupEval {
        count: idx.len(),
        loss: loss / idx.len() as f64,
        acc: correct as f64 / idx.len() as f64,
    })
}

pub fn evaluate(params: &ModelParams, ds: &Dataset, spec: &LossSpec) -> Result<SplitEval> {
    if ds.n() == 0 {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    spec.validate()?;
    let f = params.forward(ds)?;
    let all_idx: Vec<usize> = (0..ds.n()).collect();
    let all = eval_subset(&f, ds, spec, &all_idx)?;
    let shortcut = if ds.shortcut_idx.is_empty() {
        None
    } else {
        Some(eval_subset(&f, ds, spec, &ds.shortcut_idx)?)
    };
    let leftover = if ds.leftover_idx.is_empty() {
        None
    } else {
        Some(eval_subset(&f, ds, spec, &ds.leftover_idx)?)
    };

    // (y, z) cells for worst-group; labels for the balanced average
    let mut cell_total = [0usize; 4];
    let mut cell_hit = [0usize; 4];
    let mut label_total = [0usize; 2];
    let mut label_hit = [0usize; 2];
    for i in 0..ds.n() {
        let cell = (if ds.y[i] > 0.0 { 0 } else { 2 }) + (if ds.z[i] > 0.0 { 0 } else { 1 });
        let lab = if ds.y[i] > 0.0 { 0 } else { 1 };
        let hit = (predict_label(f[i]) == ds.y[i]) as usize;
        cell_total[cell] += 1;
        cell_hit[cell] += hit;
        label_total[lab] += 1;
        label_hit[lab] += hit;
    }
    let worst_group_acc = (0..4)
        .filter(|&c| cell_total[c] > 0)
        .map(|c| cell_hit[c] as f64 / cell_total[c] as f64)
        .fold(f64::INFINITY, f64::min);
    let labels_present: Vec<f64> = (0..2)
        .filter(|&l| label_total[l] > 0)
        .map(|l| label_hit[l] as f64 / label_total[l] as f64)
        .collect();
    let balanced_acc = labels_present.iter().sum::<f64>() / labels_present.len() as f64;

    Ok(SplitEval {
        all,
        shortcut,
        leftover,
        worst_group_acc,
        balanced_acc,
    })
}

fn snapshot(params: &ModelParams, b: f64) -> Option<WeightSnapshot> {
    match params {
        ModelParams::Linear(p) => Some(WeightSnapshot {
            w_y: p.w_y(),
            b_wz: b * p.w_z(),
            we_norm: crate::linalg::norm(p.w_e()),
        }),
        ModelParams::Mlp(_) => None,
    }
}

/// Deterministic full-batch GD with classical momentum:
/// v <- momentum·v + g + weight_decay·θ, then θ <- θ − lr·v.
/// Records metrics at epoch 0, every `eval_every` epochs, and at the end.
pub fn train(
    params: &ModelParams,
    train_ds: &Dataset,
    test_ds: &Dataset,
    spec: &LossSpec,
    cfg: &TrainConfig,
) -> Result<TrainRecord> {
    cfg.validate()?;
    spec.validate()?;
    if train_ds.d != test_ds.d || train_ds.b != test_ds.b {
        return Err(Error::Shape(format!(
            "train (d={}, B={}) and test (d={}, B={}) disagree",
            train_ds.d, train_ds.b, test_ds.d, test_ds.b
        )));
    }
    let mut model = params.clone();
    let mut theta = model.to_flat();
    let mut velocity = vec![0.0; theta.len()];
    let mut records = Vec::new();

    let record_at = |epoch: usize, model: &ModelParams, records: &mut Vec<EpochRecord>| -> Result<()> {
        records.push(EpochRecord {
            epoch,
            train: evaluate(model, train_ds, spec)?,
            test: evaluate(model, test_ds, spec)?,
            weights: snapshot(model, train_ds.b),
        });
        Ok(())
    };
    record_at(0, &model, &mut records)?;

    for epoch in 1..=cfg.epochs {
        let (loss, grad) = model.mean_loss_and_grad(train_ds, spec)?;
        if !loss.is_finite() || loss.abs() > 1e12 {
            return Err(Error::Divergence { epoch, loss });
        }
        for j in 0..theta.len() {
            velocity[j] = cfg.momentum * velocity[j] + grad[j] + cfg.weight_decay * theta[j];
            theta[j] -= cfg.lr * velocity[j];
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        model.set_flat(&theta)?;
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            record_at(epoch, &model, &mut records)?;
        }
    }

    Ok(TrainRecord {
        records,
        final_params: model,
    })
}

fn csv_group_row(
    out: &mut String,
    epoch: usize,
    split: &str,
    group: &str,
    g: &GroupEval,
    w: &Option<WeightSnapshot>,
) {
    out.push_str(&format!("{epoch},{split},{group},{},{}", g.loss, g.acc));
    match w {
        Some(s) => out.push_str(&format!(",{},{},{}\n", s.w_y, s.b_wz, s.we_norm)),
        None => out.push_str(",,,\n"),
    }
}

/// Long-format per-epoch CSV. Empty groups contribute no rows.
pub fn write_metrics_csv<W: Write>(record: &TrainRecord, mut w: W) -> Result<()> {
    let mut out = String::from("epoch,split,group,loss,acc,w_y,B_wz,we_norm\n");
    for r in &record.records {
        for (split, ev) in [("train", &r.train), ("test", &r.test)] {
            csv_group_row(&mut out, r.epoch, split, "all", &ev.all, &r.weights);
            if let Some(g) = &ev.shortcut {
                csv_group_row(&mut out, r.epoch, split, "shortcut", g, &r.weights);
            }
            if let Some(g) = &ev.leftover {
                csv_group_row(&mut out, r.epoch, split, "leftover", g, &r.weights);
            }
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}
