//! Command dispatch: turns a validated `ExperimentConfig` into artifacts
//! on disk plus a manifest-bearing summary.

use crate::config::{
    apply_override, CommandKind, ExperimentConfig, ModelSection, SweepSection,
};
use crate::dgp::{leftover_fraction_stats, sample_dataset, Dataset};
use crate::maxmargin::{separation_report, solve_uniform_margin, MarginQp, QpSolution};
use crate::model::{MlpParams, ModelParams};
use crate::report::{csv_cell, ArtifactWriter, RunSummary};
use crate::rng::Rng;
use crate::theory::{
    check_concentration_multi, flow_gd_endpoint, integrate_flow, leftover_accuracy, ConcentrationId,
    ConcentrationParams, FlowParams, NoiseRatioScenario,
};
use crate::trainer::{train, write_metrics_csv, TrainRecord};
use crate::{linalg, Error, Result};
use crate::model::LinearParams;
use serde::Deserialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Runs one command end to end and returns the output directory.
pub fn execute(cfg: &ExperimentConfig, out_override: Option<&Path>, workers: usize) -> Result<PathBuf> {
    let started = Instant::now();
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}", cfg.command)));
    let mut writer = ArtifactWriter::create(&out_dir)?;

    let outputs = match cfg.command {
        CommandKind::Gen => run_gen(cfg, &mut writer)?,
        CommandKind::Train => run_train(cfg, &mut writer)?,
        CommandKind::Maxmargin => run_maxmargin(cfg, &mut writer)?,
        CommandKind::Verify => run_verify(cfg, &mut writer)?,
        CommandKind::Sweep => run_sweep(cfg, &mut writer, workers)?,
    };

    let mut summary = RunSummary::new(&cfg.command.to_string(), serde_json::to_value(cfg)?);
    summary.outputs = outputs;
    summary.wall_time_secs = started.elapsed().as_secs_f64();
    writer.finish(summary)?;
    Ok(out_dir)
}

fn dataset_digest(ds: &Dataset) -> Value {
    json!({
        "n": ds.n(),
        "d": ds.d,
        "B": ds.b,
        "shortcut_count": ds.shortcut_idx.len(),
        "leftover_count": ds.k(),
    })
}

fn run_gen(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value> {
    let train_ds = sample_dataset(&cfg.dgp.train_config())?;
    let test_ds = sample_dataset(&cfg.dgp.test_config())?;
    for (name, ds) in [("train.csv", &train_ds), ("test.csv", &test_ds)] {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf)?;
        writer.write_bytes(name, &buf)?;
    }
    Ok(json!({
        "train": dataset_digest(&train_ds),
        "test": dataset_digest(&test_ds),
    }))
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<ModelParams> {
    let d = cfg.dgp.d;
    Ok(match cfg.model {
        ModelSection::Linear => ModelParams::Linear(LinearParams::zeros(d)),
        ModelSection::Mlp { h, init_seed } => ModelParams::Mlp(MlpParams::init(d, h, init_seed)),
    })
}

/// Shared by the train command and sweep cells.
pub fn train_core(cfg: &ExperimentConfig) -> Result<TrainRecord> {
    let train_ds = sample_dataset(&cfg.dgp.train_config())?;
    let test_ds = sample_dataset(&cfg.dgp.test_config())?;
    let params = build_model(cfg)?;
    train(&params, &train_ds, &test_ds, &cfg.loss, &cfg.train)
}

fn run_train(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value> {
    let record = train_core(cfg)?;
    let mut buf = Vec::new();
    write_metrics_csv(&record, &mut buf)?;
    writer.write_bytes("metrics.csv", &buf)?;
    writer.write_json("params.json", &record.final_params)?;
    Ok(json!({
        "epochs_recorded": record.records.len(),
        "final": record.final_record(),
    }))
}

/// Condensed view of a QP solution for summaries and sweep rows.
fn solution_digest(sol: &QpSolution, b: f64) -> Value {
    let (b_wz, w_y, acc) = if sol.w.len() >= 2 {
        let lin = LinearParams { w: sol.w.clone() };
        let acc = leftover_accuracy(&lin, b).ok();
        (b * sol.w[0], sol.w[1], acc)
    } else {
        (f64::NAN, f64::NAN, None)
    };
    json!({
        "primal_value": sol.primal_value,
        "dual_value": sol.dual_value,
        "iterations": sol.iterations,
        "kkt": sol.kkt,
        "B_wz": b_wz,
        "w_y": w_y,
        "leftover_accuracy": acc,
    })
}

pub fn maxmargin_core(cfg: &ExperimentConfig) -> Result<(Dataset, QpSolution)> {
    let ds = sample_dataset(&cfg.dgp.train_config())?;
    let sol = MarginQp::from_dataset(&ds, cfg.maxmargin.side).solve(cfg.maxmargin.tol)?;
    Ok((ds, sol))
}

fn run_maxmargin(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value> {
    let (ds, sol) = maxmargin_core(cfg)?;
    writer.write_json("maxmargin.json", &sol)?;
    Ok(json!({
        "side": cfg.maxmargin.side,
        "tol": cfg.maxmargin.tol,
        "dataset": dataset_digest(&ds),
        "solution": solution_digest(&sol, ds.b),
    }))
}

fn parse_params<T: for<'de> Deserialize<'de>>(check: &str, params: &Value) -> Result<T> {
    let v = if params.is_null() { json!({}) } else { params.clone() };
    serde_json::from_value(v)
        .map_err(|e| Error::Config(format!("verify {check} params: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct UniformMarginParams {
    b: f64,
    tol: f64,
}

impl Default for UniformMarginParams {
    fn default() -> Self {
        UniformMarginParams { b: 1.0, tol: 1e-8 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeparationParams {
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(rename = "M", default)]
    m: Option<usize>,
    #[serde(default = "default_solver_tol")]
    tol: f64,
    #[serde(default)]
    candidate_seed: u64,
}

fn default_eps() -> f64 {
    1.0
}

fn default_solver_tol() -> f64 {
    crate::maxmargin::DEFAULT_TOL
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConcentrationCheckParams {
    family: ConcentrationId,
    d: usize,
    #[serde(rename = "T_V", default = "one")]
    t_v: usize,
    #[serde(rename = "T_U", default = "one")]
    t_u: usize,
    trials: usize,
    eps: Vec<f64>,
    #[serde(default)]
    seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FlowCheckParams {
    #[serde(rename = "Gamma")]
    gamma_noise: f64,
    n: usize,
    rho: f64,
    horizon: f64,
    step: f64,
    gd_lr: f64,
    gd_steps: usize,
    tol: f64,
}

impl Default for FlowCheckParams {
    fn default() -> Self {
        FlowCheckParams {
            gamma_noise: 20.0,
            n: 20,
            rho: 0.9,
            horizon: 10.0,
            step: 1e-3,
            gd_lr: 1e-3,
            gd_steps: 10_000,
            tol: 1e-3,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseRatioParams {
    n: usize,
    d: usize,
    rho: f64,
    eps_conf: f64,
    gamma_conf: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    seeds: usize,
    #[serde(default = "default_noise_tol")]
    tol: f64,
}

impl NoiseRatioParams {
    fn scenario(&self) -> NoiseRatioScenario {
        NoiseRatioScenario {
            n: self.n,
            d: self.d,
            rho: self.rho,
            eps_conf: self.eps_conf,
            gamma_conf: self.gamma_conf,
            seed: self.seed,
        }
    }
}

fn default_noise_tol() -> f64 {
    0.15
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LeftoverAccuracyParams {
    mc_samples: usize,
    mc_seed: u64,
    tol: f64,
}

impl Default for LeftoverAccuracyParams {
    fn default() -> Self {
        LeftoverAccuracyParams {
            mc_samples: 100_000,
            mc_seed: 0,
            tol: 0.01,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GramOverlapParams {
    seeds: usize,
    band: [f64; 2],
}

impl Default for GramOverlapParams {
    fn default() -> Self {
        GramOverlapParams {
            seeds: 20,
            band: [0.45, 0.55],
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LeftoverStatsParams {
    trials: usize,
}

impl Default for LeftoverStatsParams {
    fn default() -> Self {
        LeftoverStatsParams { trials: 2000 }
    }
}

/// Monte Carlo accuracy on fresh leftover-group samples for a linear
/// weight vector; the oracle the closed form is checked against.
pub fn leftover_accuracy_mc(w: &[f64], b: f64, samples: usize, seed: u64) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::Shape("weight vector needs at least 2 entries".into()));
    }
    if samples == 0 {
        return Err(Error::Domain("mc sample count must be positive".into()));
    }
    let mut rng = Rng::new(seed);
    let mut delta = vec![0.0; w.len() - 2];
    let mut hits = 0usize;
    for _ in 0..samples {
        let y = rng.sign();
        let z = -y;
        rng.fill_normal(&mut delta);
        let f = b * z * w[0] + y * w[1] + linalg::dot(&delta, &w[2..]);
        let pred = if f >= 0.0 { 1.0 } else { -1.0 };
        if pred == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples as f64)
}

fn run_verify(cfg: &ExperimentConfig, writer: &mut ArtifactWriter) -> Result<Value> {
    let section = cfg
        .verify
        .as_ref()
        .expect("validated: verify section present");
    let check = section.check.as_str();
    let outcome = match check {
        "uniform-margin" => {
            let p: UniformMarginParams = parse_params(check, &section.params)?;
            let ds = sample_dataset(&cfg.dgp.train_config())?;
            let w = solve_uniform_margin(&ds, p.b)?;
            let lin = LinearParams { w: w.clone() };
            let max_residual = (0..ds.n())
                .map(|i| (ds.y[i] * lin.forward_row(ds.row(i)) - p.b).abs())
                .fold(0.0_f64, f64::max);
            let w_y_err = (lin.w_y() - p.b).abs();
            let w_z_abs = lin.w_z().abs();
            let we_norm = linalg::norm(lin.w_e());
            let pass = w_y_err <= p.tol && w_z_abs <= p.tol && we_norm <= p.tol;
            json!({
                "b": p.b,
                "tol": p.tol,
                "w_y_err": w_y_err,
                "w_z_abs": w_z_abs,
                "we_norm": we_norm,
                "max_residual": max_residual,
                "pass": pass,
            })
        }
        "separation" => {
            let p: SeparationParams = parse_params(check, &section.params)?;
            let ds = sample_dataset(&cfg.dgp.train_config())?;
            let k = ds.k();
            let m = match p.m {
                Some(m) => m,
                None => {
                    if k == 0 || ds.n() < 2 * k {
                        return Err(Error::Domain(format!(
                            "cannot derive M from n = {}, k = {k}",
                            ds.n()
                        )));
                    }
                    ds.n() / (2 * k)
                }
            };
            let report = separation_report(&ds, m, p.eps, p.tol, p.candidate_seed)?;
            let pass = report.stable_bracket_holds
                && report.shortcut_bracket_holds.unwrap_or(true)
                && report.separation_holds;
            json!({ "report": report, "pass": pass })
        }
        "concentration" => {
            let p: ConcentrationCheckParams = parse_params(check, &section.params)?;
            let params = ConcentrationParams {
                d: p.d,
                t_v: p.t_v,
                t_u: p.t_u,
                trials: p.trials,
            };
            let results = check_concentration_multi(p.family, &params, &p.eps, p.seed)?;
            let pass = results.iter().all(|r| r.pass);
            json!({ "results": results, "pass": pass })
        }
        "flow" => {
            let p: FlowCheckParams = parse_params(check, &section.params)?;
            let fp = FlowParams {
                gamma_noise: p.gamma_noise,
                n: p.n,
                rho: p.rho,
            };
            let traj = integrate_flow(&fp, p.horizon, p.step)?;
            let last = traj.last().copied().expect("trajectory nonempty");
            let (gd_w_y, gd_w_z) = flow_gd_endpoint(&fp, p.gd_lr, p.gd_steps)?;
            let max_diff = (last.w_y - gd_w_y).abs().max((last.w_z - gd_w_z).abs());
            let mut csv = String::from("t,w_y,w_z\n");
            for s in &traj {
                csv.push_str(&format!("{},{},{}\n", s.t, s.w_y, s.w_z));
            }
            writer.write_bytes("flow.csv", csv.as_bytes())?;
            json!({
                "flow_w_y": last.w_y,
                "flow_w_z": last.w_z,
                "gd_w_y": gd_w_y,
                "gd_w_z": gd_w_z,
                "max_diff": max_diff,
                "tol": p.tol,
                "pass": max_diff <= p.tol,
            })
        }
        "noise-ratio" => {
            let p: NoiseRatioParams = parse_params(check, &section.params)?;
            if p.seeds == 0 {
                return Err(Error::Config("noise-ratio needs seeds >= 1".into()));
            }
            let mut checks = Vec::with_capacity(p.seeds);
            let mut within = 0usize;
            for i in 0..p.seeds {
                let mut scenario = p.scenario();
                scenario.seed = p.seed.wrapping_add(i as u64);
                let c = crate::theory::noise_ratio_check(&scenario)?;
                if c.rel_err <= p.tol {
                    within += 1;
                }
                checks.push(c);
            }
            let fraction = within as f64 / p.seeds as f64;
            let pass = if p.seeds == 1 {
                checks[0].rel_err <= p.tol
            } else {
                fraction >= 0.9
            };
            json!({
                "tol": p.tol,
                "seeds": p.seeds,
                "within_tol": within,
                "fraction_within": fraction,
                "checks": checks,
                "pass": pass,
            })
        }
        "leftover-accuracy" => {
            let p: LeftoverAccuracyParams = parse_params(check, &section.params)?;
            let ds = sample_dataset(&cfg.dgp.train_config())?;
            let sol = MarginQp::from_dataset(&ds, cfg.maxmargin.side).solve(cfg.maxmargin.tol)?;
            let lin = LinearParams { w: sol.w.clone() };
            let analytic = leftover_accuracy(&lin, ds.b)?;
            let mc = leftover_accuracy_mc(&sol.w, ds.b, p.mc_samples, p.mc_seed)?;
            let abs_err = (analytic - mc).abs();
            json!({
                "analytic": analytic,
                "monte_carlo": mc,
                "mc_samples": p.mc_samples,
                "abs_err": abs_err,
                "tol": p.tol,
                "pass": abs_err <= p.tol,
            })
        }
        "gram-overlap" => {
            let p: GramOverlapParams = parse_params(check, &section.params)?;
            if p.seeds == 0 {
                return Err(Error::Config("gram-overlap needs seeds >= 1".into()));
            }
            let base = cfg.dgp.train_config();
            let mut fractions = Vec::with_capacity(p.seeds);
            let mut max_inner = 0.0_f64;
            for i in 0..p.seeds {
                let mut c = base;
                c.seed = base.seed.wrapping_add(i as u64);
                let ds = sample_dataset(&c)?;
                let overlap = crate::theory::gs_violation(&ds)?;
                max_inner = max_inner.max(overlap.max_abs_inner);
                fractions.push(overlap.fraction);
            }
            let mean = fractions.iter().sum::<f64>() / p.seeds as f64;
            let pass = mean >= p.band[0] && mean <= p.band[1];
            json!({
                "seeds": p.seeds,
                "band": p.band,
                "mean_fraction": mean,
                "max_abs_inner": max_inner,
                "fractions": fractions,
                "pass": pass,
            })
        }
        "leftover-stats" => {
            let p: LeftoverStatsParams = parse_params(check, &section.params)?;
            let dgp = cfg.dgp.train_config();
            let stats = leftover_fraction_stats(dgp.n, dgp.rho, p.trials, dgp.seed)?;
            let expected = 1.0 - dgp.rho;
            let se = (dgp.rho * expected / (dgp.n as f64 * p.trials as f64)).sqrt();
            let pass = (stats.mean_fraction - expected).abs() <= 3.0 * se;
            json!({
                "stats": stats,
                "expected_fraction": expected,
                "stderr": se,
                "pass": pass,
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown verify check {other:?}; expected one of uniform-margin, separation, \
                 concentration, flow, noise-ratio, leftover-accuracy, gram-overlap, leftover-stats"
            )))
        }
    };
    let doc = json!({
        "check": check,
        "params": section.params,
        "outcome": outcome,
    });
    writer.write_json("verify.json", &doc)?;
    Ok(doc)
}

struct SweepPlan {
    keys: Vec<String>,
    values: Vec<Vec<Value>>,
    total: usize,
}

fn sweep_plan(sweep: &SweepSection) -> SweepPlan {
    let keys: Vec<String> = sweep.grid.keys().cloned().collect();
    let values: Vec<Vec<Value>> = sweep.grid.values().cloned().collect();
    let total = values.iter().map(Vec::len).product();
    SweepPlan { keys, values, total }
}

/// Cell configs are materialized by overriding the resolved base config,
/// with the last grid key varying fastest. Seeds are decorrelated per
/// cell unless the grid pins them explicitly.
fn cell_config(
    cfg: &ExperimentConfig,
    plan: &SweepPlan,
    cell_command: CommandKind,
    index: usize,
) -> Result<(ExperimentConfig, Vec<Value>)> {
    let mut base = serde_json::to_value(cfg)?;
    let obj = base.as_object_mut().expect("config serializes to object");
    obj.insert("command".into(), serde_json::to_value(cell_command)?);
    obj.remove("sweep");
    obj.remove("out_dir");

    let mut rem = index;
    let mut picks = vec![0usize; plan.keys.len()];
    for j in (0..plan.keys.len()).rev() {
        let len = plan.values[j].len();
        picks[j] = rem % len;
        rem /= len;
    }
    let mut cell_values = Vec::with_capacity(plan.keys.len());
    for (j, key) in plan.keys.iter().enumerate() {
        let v = plan.values[j][picks[j]].clone();
        apply_override(&mut base, key, v.clone())?;
        cell_values.push(v);
    }
    let gridded = |k: &str| plan.keys.iter().any(|g| g == k);
    if !gridded("dgp.seed") {
        apply_override(
            &mut base,
            "dgp.seed",
            json!(cfg.dgp.seed ^ index as u64),
        )?;
    }
    if !gridded("train.seed") {
        apply_override(
            &mut base,
            "train.seed",
            json!(cfg.train.seed ^ index as u64),
        )?;
    }
    let parsed = ExperimentConfig::from_json(&base.to_string())
        .map_err(|e| Error::Config(format!("sweep cell {index}: {e}")))?;
    Ok((parsed, cell_values))
}

fn cell_metric_columns(cell_command: CommandKind) -> Vec<&'static str> {
    match cell_command {
        CommandKind::Train => vec![
            "train_loss",
            "train_acc",
            "test_loss",
            "test_acc",
            "test_shortcut_acc",
            "test_leftover_acc",
            "test_worst_group_acc",
            "w_y",
            "B_wz",
            "we_norm",
        ],
        CommandKind::Maxmargin => vec![
            "primal_value",
            "dual_value",
            "gap",
            "iterations",
            "w_y",
            "B_wz",
            "leftover_accuracy",
        ],
        _ => unreachable!("validated cell command"),
    }
}

fn run_cell(cfg: &ExperimentConfig) -> Result<Vec<Value>> {
    match cfg.command {
        CommandKind::Train => {
            let record = train_core(cfg)?;
            let f = record.final_record();
            let (w_y, b_wz, we_norm) = match f.weights {
                Some(w) => (json!(w.w_y), json!(w.b_wz), json!(w.we_norm)),
                None => (Value::Null, Value::Null, Value::Null),
            };
            Ok(vec![
                json!(f.train.all.loss),
                json!(f.train.all.acc),
                json!(f.test.all.loss),
                json!(f.test.all.acc),
                f.test.shortcut.map(|g| json!(g.acc)).unwrap_or(Value::Null),
                f.test.leftover.map(|g| json!(g.acc)).unwrap_or(Value::Null),
                json!(f.test.worst_group_acc),
                w_y,
                b_wz,
                we_norm,
            ])
        }
        CommandKind::Maxmargin => {
            let (ds, sol) = maxmargin_core(cfg)?;
            let lin = LinearParams { w: sol.w.clone() };
            let acc = leftover_accuracy(&lin, ds.b)?;
            Ok(vec![
                json!(sol.primal_value),
                json!(sol.dual_value),
                json!(sol.kkt.gap),
                json!(sol.iterations),
                json!(sol.w[1]),
                json!(ds.b * sol.w[0]),
                json!(acc),
            ])
        }
        _ => unreachable!("validated cell command"),
    }
}

fn run_sweep(cfg: &ExperimentConfig, writer: &mut ArtifactWriter, workers: usize) -> Result<Value> {
    let sweep = cfg.sweep.as_ref().expect("validated: sweep section present");
    let plan = sweep_plan(sweep);
    let cell_command = sweep.cell_command;

    // Materialize and validate every cell config up front: a bad grid
    // value is a config error, not a partial failure.
    let mut cells = Vec::with_capacity(plan.total);
    for idx in 0..plan.total {
        cells.push(cell_config(cfg, &plan, cell_command, idx)?);
    }

    let workers = workers.max(1).min(plan.total.max(1));
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Result<Vec<Value>>>>> =
        Mutex::new((0..plan.total).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= plan.total {
                    break;
                }
                let outcome = run_cell(&cells[idx].0);
                rows.lock().expect("rows lock")[idx] = Some(outcome);
            });
        }
    });
    let rows = rows.into_inner().expect("rows lock");

    let metric_cols = cell_metric_columns(cell_command);
    let mut csv = String::from("cell_index");
    for key in &plan.keys {
        csv.push(',');
        csv.push_str(key);
    }
    csv.push_str(",status,error");
    for col in &metric_cols {
        csv.push(',');
        csv.push_str(col);
    }
    csv.push('\n');

    let mut ok = 0usize;
    let mut failed = Vec::new();
    let mut first_error: Option<Error> = None;
    for (idx, slot) in rows.into_iter().enumerate() {
        let outcome = slot.expect("every cell executed");
        csv.push_str(&idx.to_string());
        for v in &cells[idx].1 {
            csv.push(',');
            csv.push_str(&csv_cell(v));
        }
        match outcome {
            Ok(values) => {
                ok += 1;
                csv.push_str(",ok,");
                for v in &values {
                    csv.push(',');
                    csv.push_str(&csv_cell(v));
                }
            }
            Err(e) => {
                failed.push(idx);
                // keep the error message on one CSV line, comma-free
                let msg = format!("{e}").replace([',', '\n'], ";");
                csv.push_str(",error,");
                csv.push_str(&msg);
                for _ in &metric_cols {
                    csv.push(',');
                }
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
        csv.push('\n');
    }
    writer.write_bytes("sweep.csv", csv.as_bytes())?;

    if ok == 0 {
        if let Some(e) = first_error {
            return Err(e);
        }
    }
    Ok(json!({
        "cell_command": cell_command,
        "grid_keys": plan.keys,
        "cells_total": plan.total,
        "cells_ok": ok,
        "cells_failed": failed.len(),
        "failed_indices": failed,
        "workers": workers,
    }))
}
