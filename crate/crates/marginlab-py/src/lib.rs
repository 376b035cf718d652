//! Python bindings for the marginlab core: dataset sampling, training,
//! hard-margin solves, and the analysis helpers. Structured results cross
//! the boundary as plain dicts/lists so the Python side needs no wrapper
//! classes beyond [`Dataset`], [`TrainResult`], and [`MarginSolution`].

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use std::path::PathBuf;

use marginlab::dgp::{self, DgpConfig};
use marginlab::losses::LossSpec;
use marginlab::maxmargin::{self, MarginQp, QpSolution, Side};
use marginlab::model::{LinearParams, MlpParams, ModelParams};
use marginlab::theory;
use marginlab::trainer::{self, TrainConfig, TrainRecord};

fn py_err(e: marginlab::Error) -> PyErr {
    use marginlab::Error as E;
    match &e {
        E::Io(_) => PyIOError::new_err(e.to_string()),
        E::Divergence { .. } | E::Convergence { .. } | E::Degenerate(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn py_to_json(v: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    use serde_json::Value;
    if v.is_none() {
        return Ok(Value::Null);
    }
    if let Ok(b) = v.cast::<PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if let Ok(i) = v.extract::<i64>() {
        return Ok(Value::from(i));
    }
    if let Ok(f) = v.extract::<f64>() {
        return Ok(serde_json::Number::from_f64(f)
            .map(Value::Number)
            .unwrap_or(Value::Null));
    }
    if let Ok(s) = v.extract::<String>() {
        return Ok(Value::String(s));
    }
    if let Ok(list) = v.cast::<PyList>() {
        let mut items = Vec::with_capacity(list.len());
        for item in list.iter() {
            items.push(py_to_json(&item)?);
        }
        return Ok(Value::Array(items));
    }
    if let Ok(dict) = v.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (key, val) in dict.iter() {
            map.insert(key.extract::<String>()?, py_to_json(&val)?);
        }
        return Ok(Value::Object(map));
    }
    Err(PyTypeError::new_err(format!(
        "cannot convert {} to a JSON-like value",
        v.get_type().name()?
    )))
}

/// Accepts either a loss-kind name ("Log", "SigmaDamp", "SigmaStitch",
/// "MargLog", "SpectralDecoupling") or a dict with a "kind" key plus any
/// loss parameters, mirroring the CLI config schema.
fn parse_loss(loss: &Bound<'_, PyAny>) -> PyResult<LossSpec> {
    let value = if let Ok(name) = loss.extract::<String>() {
        serde_json::json!({ "kind": name })
    } else {
        py_to_json(loss)?
    };
    let spec: LossSpec =
        serde_json::from_value(value).map_err(|e| PyValueError::new_err(format!("loss: {e}")))?;
    spec.validate().map_err(py_err)?;
    Ok(spec)
}

fn parse_side(side: &str) -> PyResult<Side> {
    match side {
        "none" => Ok(Side::None),
        "stable" => Ok(Side::Stable),
        "shortcut" => Ok(Side::Shortcut),
        other => Err(PyValueError::new_err(format!(
            "side must be one of none/stable/shortcut, got {other:?}"
        ))),
    }
}

/// A sampled (or loaded) two-feature dataset: x = [B·z, y, noise].
#[pyclass(module = "marginlab_py", skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: dgp::Dataset,
}

#[pymethods]
impl Dataset {
    /// Draw a dataset; `rho` is P(z = y), `b` the shortcut scale.
    #[staticmethod]
    #[pyo3(signature = (rho, b, d, n, seed = 0))]
    fn sample(rho: f64, b: f64, d: usize, n: usize, seed: u64) -> PyResult<Dataset> {
        let config = DgpConfig { rho, b, d, n, seed };
        Ok(Dataset {
            inner: dgp::sample_dataset(&config).map_err(py_err)?,
        })
    }

    /// Build from raw parts; `x` is row-major n x d.
    #[staticmethod]
    fn from_parts(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, d: usize, b: f64) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: dgp::Dataset::from_parts(x, y, z, d, b).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Dataset> {
        let file = std::fs::File::open(&path)
            .map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Ok(Dataset {
            inner: dgp::Dataset::read_csv(std::io::BufReader::new(file)).map_err(py_err)?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path)
            .map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        self.inner
            .write_csv(std::io::BufWriter::new(file))
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    /// Leftover-group size (samples with z != y).
    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.clone()
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.inner.z.clone()
    }

    /// Row-major flat inputs; reshape with n and d.
    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.clone()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n() {
            return Err(PyValueError::new_err(format!(
                "row {i} out of range for n = {}",
                self.inner.n()
            )));
        }
        Ok(self.inner.row(i).to_vec())
    }

    #[getter]
    fn shortcut_index(&self) -> Vec<usize> {
        self.inner.shortcut_idx.clone()
    }

    #[getter]
    fn leftover_index(&self) -> Vec<usize> {
        self.inner.leftover_idx.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, d={}, B={}, k={})",
            self.inner.n(),
            self.inner.d,
            self.inner.b,
            self.inner.k()
        )
    }
}

/// Full training history plus the final parameters.
#[pyclass(module = "marginlab_py")]
pub struct TrainResult {
    inner: TrainRecord,
}

#[pymethods]
impl TrainResult {
    /// The last recorded epoch as a dict (losses, accuracies by group,
    /// linear weight summary when applicable).
    #[getter]
    fn last<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.final_record())
    }

    /// All recorded epochs, oldest first.
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.records)
    }

    /// Final parameters as a flat vector (linear: w; mlp: w1, b1, w2, b2).
    fn weights(&self) -> Vec<f64> {
        self.inner.final_params.to_flat()
    }

    #[getter]
    fn epochs_recorded(&self) -> usize {
        self.inner.records.len()
    }

    fn __repr__(&self) -> String {
        let f = self.inner.final_record();
        format!(
            "TrainResult(epoch={}, train_acc={:.4}, test_acc={:.4})",
            f.epoch, f.train.all.acc, f.test.all.acc
        )
    }
}

/// Full-batch momentum GD on the chosen loss.
#[pyfunction]
#[pyo3(signature = (
    train_data, test_data, loss = None, model = "linear", hidden = 200,
    lr = 1e-2, momentum = 0.0, weight_decay = 0.0, epochs = 1000,
    eval_every = 100, seed = 0, init_seed = 0,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    train_data: &Dataset,
    test_data: &Dataset,
    loss: Option<&Bound<'_, PyAny>>,
    model: &str,
    hidden: usize,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    epochs: usize,
    eval_every: usize,
    seed: u64,
    init_seed: u64,
) -> PyResult<TrainResult> {
    let spec = match loss {
        Some(l) => parse_loss(l)?,
        None => LossSpec::default(),
    };
    let params = match model {
        "linear" => ModelParams::Linear(LinearParams::zeros(train_data.inner.d)),
        "mlp" => ModelParams::Mlp(MlpParams::init(train_data.inner.d, hidden, init_seed)),
        other => {
            return Err(PyValueError::new_err(format!(
                "model must be linear or mlp, got {other:?}"
            )))
        }
    };
    let cfg = TrainConfig {
        lr,
        momentum,
        weight_decay,
        epochs,
        eval_every,
        seed,
    };
    let record = trainer::train(&params, &train_data.inner, &test_data.inner, &spec, &cfg)
        .map_err(py_err)?;
    Ok(TrainResult { inner: record })
}

/// Converged hard-margin QP solution with its optimality certificate.
#[pyclass(module = "marginlab_py")]
pub struct MarginSolution {
    inner: QpSolution,
    shortcut_scale: f64,
}

#[pymethods]
impl MarginSolution {
    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.clone()
    }

    /// Dual multipliers for the margin constraints.
    #[getter]
    fn multipliers(&self) -> Vec<f64> {
        self.inner.lambda.clone()
    }

    /// Multiplier on the one-sided constraint (0 when side = "none").
    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }

    #[getter]
    fn primal_value(&self) -> f64 {
        self.inner.primal_value
    }

    #[getter]
    fn dual_value(&self) -> f64 {
        self.inner.dual_value
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    /// Certificate residuals: margin_violation, complementarity,
    /// stationarity, gap.
    #[getter]
    fn kkt<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.kkt)
    }

    /// Shifted-population accuracy on the leftover group implied by w.
    #[getter]
    fn leftover_accuracy(&self) -> PyResult<f64> {
        let params = LinearParams {
            w: self.inner.w.clone(),
        };
        theory::leftover_accuracy(&params, self.shortcut_scale).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "MarginSolution(primal={:.6}, iterations={}, gap={:.2e})",
            self.inner.primal_value, self.inner.iterations, self.inner.kkt.gap
        )
    }
}

/// Minimum-norm weights with margin >= 1 on every sample. `side` adds the
/// one-sided constraint: "stable" forces w_y >= B·w_z, "shortcut" the
/// mirror image.
#[pyfunction]
#[pyo3(signature = (data, side = "none", tol = 1e-8))]
fn solve_margin(data: &Dataset, side: &str, tol: f64) -> PyResult<MarginSolution> {
    let qp = MarginQp::from_dataset(&data.inner, parse_side(side)?);
    Ok(MarginSolution {
        inner: qp.solve(tol).map_err(py_err)?,
        shortcut_scale: data.inner.b,
    })
}

/// Weights giving every sample exactly margin `b` (least-squares via the
/// normal equations; exact for this data family).
#[pyfunction]
#[pyo3(signature = (data, b = 1.0))]
fn uniform_margin(data: &Dataset, b: f64) -> PyResult<Vec<f64>> {
    maxmargin::solve_uniform_margin(&data.inner, b).map_err(py_err)
}

/// Closed-form leftover-group accuracy of a linear model under the
/// shifted population; `b` is the shortcut scale of the data.
#[pyfunction]
fn leftover_accuracy(w: Vec<f64>, b: f64) -> PyResult<f64> {
    theory::leftover_accuracy(&LinearParams { w }, b).map_err(py_err)
}

/// Lower bound on the stable-side optimum norm^2 (closed form).
#[pyfunction]
fn stable_bound(d: usize, k: usize, m: usize, eps: f64) -> PyResult<f64> {
    maxmargin::stable_bound_formula(d, k, m, eps).map_err(py_err)
}

/// Shortcut-side candidate norm^2 plus its (gamma, beta) coefficients.
#[pyfunction]
fn shortcut_bound(d: usize, k: usize, b: f64, eps: f64) -> PyResult<(f64, f64, f64)> {
    maxmargin::shortcut_bound_formula(d, k, b, eps).map_err(py_err)
}

/// Monte Carlo check of one concentration family ("inner_product",
/// "norm", or "sum") at one slack; returns the full report as a dict.
#[pyfunction]
#[pyo3(signature = (family, d, eps, t_v = 1, t_u = 1, trials = 1000, seed = 0))]
fn concentration<'py>(
    py: Python<'py>,
    family: &str,
    d: usize,
    eps: f64,
    t_v: usize,
    t_u: usize,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let id = match family {
        "inner_product" => theory::ConcentrationId::InnerProduct,
        "norm" => theory::ConcentrationId::NormConcentration,
        "sum" => theory::ConcentrationId::SumBounds,
        other => {
            return Err(PyValueError::new_err(format!(
                "family must be inner_product/norm/sum, got {other:?}"
            )))
        }
    };
    let params = theory::ConcentrationParams { d, t_v, t_u, trials };
    let result = theory::check_concentration(id, &params, eps, seed).map_err(py_err)?;
    to_py(py, &result)
}

/// RK4 trajectory of the two-coordinate gradient flow; returns a list of
/// (t, w_y, w_z) states including t = 0.
#[pyfunction]
#[pyo3(signature = (gamma_noise, n, rho, horizon = 10.0, step = 1e-3))]
fn integrate_flow(
    gamma_noise: f64,
    n: usize,
    rho: f64,
    horizon: f64,
    step: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let params = theory::FlowParams { gamma_noise, n, rho };
    let path = theory::integrate_flow(&params, horizon, step).map_err(py_err)?;
    Ok(path.iter().map(|s| (s.t, s.w_y, s.w_z)).collect())
}

/// Expected-margin-ratio comparison: closed form vs direct computation
/// on one draw; returns {formula, direct, rel_err}.
#[pyfunction]
#[pyo3(signature = (n, d, rho, eps_conf, gamma_conf, seed = 0))]
fn noise_ratio<'py>(
    py: Python<'py>,
    n: usize,
    d: usize,
    rho: f64,
    eps_conf: f64,
    gamma_conf: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let scenario = theory::NoiseRatioScenario {
        n,
        d,
        rho,
        eps_conf,
        gamma_conf,
        seed,
    };
    let check = theory::noise_ratio_check(&scenario).map_err(py_err)?;
    to_py(py, &check)
}

/// Fraction of same-(y, z) pairs whose inner product exceeds B^2 + 1.
#[pyfunction]
fn gs_violation<'py>(py: Python<'py>, data: &Dataset) -> PyResult<Bound<'py, PyAny>> {
    let overlap = theory::gs_violation(&data.inner).map_err(py_err)?;
    to_py(py, &overlap)
}

/// Standard normal CDF (used by the accuracy formulas).
#[pyfunction]
fn normal_cdf(x: f64) -> f64 {
    marginlab::special::normal_cdf(x)
}

#[pymodule]
fn marginlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<TrainResult>()?;
    m.add_class::<MarginSolution>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(solve_margin, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_margin, m)?)?;
    m.add_function(wrap_pyfunction!(leftover_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(stable_bound, m)?)?;
    m.add_function(wrap_pyfunction!(shortcut_bound, m)?)?;
    m.add_function(wrap_pyfunction!(concentration, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_flow, m)?)?;
    m.add_function(wrap_pyfunction!(noise_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(gs_violation, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
