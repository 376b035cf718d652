//! JSON experiment configuration: strict schema, reference defaults,
//! and the dotted-path override mechanism sweeps are built on.

use crate::dgp::DgpConfig;
use crate::losses::LossSpec;
use crate::maxmargin::Side;
use crate::trainer::TrainConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Gen,
    Train,
    Maxmargin,
    Verify,
    Sweep,
}

impl std::fmt::Display for CommandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CommandKind::Gen => "gen",
            CommandKind::Train => "train",
            CommandKind::Maxmargin => "maxmargin",
            CommandKind::Verify => "verify",
            CommandKind::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

/// Train and test draws share B, d and n; only the alignment probability
/// (and seed) differ. `test_seed` defaults to `seed + 1` and `n_test`
/// to `n`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    pub rho_train: f64,
    pub rho_test: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub test_seed: Option<u64>,
}

fn default_seed() -> u64 {
    1
}

impl Default for DgpSection {
    /// The reference configuration: shortcut-heavy train split,
    /// shortcut-light test split.
    fn default() -> Self {
        DgpSection {
            rho_train: 0.9,
            rho_test: 0.1,
            b: 10.0,
            d: 300,
            n: 1000,
            n_test: None,
            seed: 1,
            test_seed: None,
        }
    }
}

impl DgpSection {
    pub fn train_config(&self) -> DgpConfig {
        DgpConfig {
            rho: self.rho_train,
            b: self.b,
            d: self.d,
            n: self.n,
            seed: self.seed,
        }
    }

    pub fn test_config(&self) -> DgpConfig {
        DgpConfig {
            rho: self.rho_test,
            b: self.b,
            d: self.d,
            n: self.n_test.unwrap_or(self.n),
            seed: self.test_seed.unwrap_or(self.seed.wrapping_add(1)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.test_config().validate()
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    #[default]
    Linear,
    Mlp {
        #[serde(default = "default_hidden")]
        h: usize,
        #[serde(default)]
        init_seed: u64,
    },
}

fn default_hidden() -> usize {
    200
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxmarginSection {
    #[serde(default)]
    pub side: Side,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    crate::maxmargin::DEFAULT_TOL
}

impl Default for MaxmarginSection {
    fn default() -> Self {
        MaxmarginSection {
            side: Side::None,
            tol: default_tol(),
        }
    }
}

/// Named verification check plus its check-specific parameters, parsed
/// strictly by the dispatcher in `run`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub check: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted config paths to lists of values, e.g. "train.lr": [0.01, 0.001].
    pub grid: BTreeMap<String, Vec<serde_json::Value>>,
    /// Which command each cell runs.
    #[serde(default = "default_cell_command")]
    pub cell_command: CommandKind,
}

fn default_cell_command() -> CommandKind {
    CommandKind::Train
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dgp: DgpSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub maxmargin: MaxmarginSection,
    #[serde(default)]
    pub verify: Option<VerifySection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        if let ModelSection::Mlp { h, .. } = self.model {
            if h == 0 {
                return Err(Error::Config("mlp hidden width must be positive".into()));
            }
        }
        if !(self.maxmargin.tol > 0.0 && self.maxmargin.tol.is_finite()) {
            return Err(Error::Config(format!(
                "maxmargin.tol must be positive, got {}",
                self.maxmargin.tol
            )));
        }
        match self.command {
            CommandKind::Verify => {
                if self.verify.is_none() {
                    return Err(Error::Config(
                        "verify command needs a \"verify\" section with a check name".into(),
                    ));
                }
            }
            CommandKind::Sweep => match &self.sweep {
                None => {
                    return Err(Error::Config(
                        "sweep command needs a \"sweep\" section with a grid".into(),
                    ))
                }
                Some(s) => {
                    if s.grid.is_empty() || s.grid.values().any(|v| v.is_empty()) {
                        return Err(Error::Config(
                            "sweep grid must be non-empty with non-empty value lists".into(),
                        ));
                    }
                    if !matches!(s.cell_command, CommandKind::Train | CommandKind::Maxmargin) {
                        return Err(Error::Config(
                            "sweep cells support only the train and maxmargin commands".into(),
                        ));
                    }
                }
            },
            _ => {}
        }
        Ok(())
    }
}

/// Sets `dotted` (e.g. "train.lr") inside a JSON object tree, creating
/// intermediate objects as needed. The result must still parse against
/// the strict schema, so typos surface as unknown-key errors.
pub fn apply_override(
    root: &mut serde_json::Value,
    dotted: &str,
    value: serde_json::Value,
) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override path {dotted:?}")));
    }
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path {dotted:?} crosses a non-object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("override path {dotted:?} crosses a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
