//! Monte Carlo and analytic checks behind the norm-bound story: Gaussian
//! concentration inequalities, the leftover-accuracy formula, the
//! relative noise contribution of the gradient, pairwise overlap of
//! same-group inputs, and the two-variable gradient-flow ODE.

use crate::dgp::Dataset;
use crate::linalg::{dot, norm};
use crate::maxmargin::separation_constants;
use crate::model::{grad_components, LinearParams};
use crate::rng::Rng;
use crate::special::normal_cdf;
use crate::trainer::{train, TrainConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which concentration inequality family to sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationId {
    /// |uᵀv| ≤ ε√d for independent standard Gaussians.
    InnerProduct,
    /// |‖x‖ − √d| ≤ t.
    NormConcentration,
    /// Three bounds on a set V of vectors against a disjoint set U:
    /// scaled sum norm, within-V inner products, cross inner products.
    SumBounds,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationParams {
    pub d: usize,
    #[serde(rename = "T_V", default = "one")]
    pub t_v: usize,
    #[serde(rename = "T_U", default = "one")]
    pub t_u: usize,
    pub trials: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize)]
pub struct SubBound {
    pub name: &'static str,
    /// Fraction of trials violating the inequality.
    pub empirical: f64,
    /// Stated probability bound, clamped to 1.
    pub stated: f64,
    pub stderr: f64,
    /// True when the unclamped stated bound is ≥ 1 and thus says nothing.
    pub vacuous: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationResult {
    pub family: ConcentrationId,
    pub d: usize,
    #[serde(rename = "T_V")]
    pub t_v: usize,
    #[serde(rename = "T_U")]
    pub t_u: usize,
    pub eps: f64,
    pub trials: usize,
    pub bounds: Vec<SubBound>,
    pub pass: bool,
}

/// Per-trial scale-free statistics; thresholding against any ε happens
/// afterwards, which is what lets one sampling pass serve many ε.
enum TrialStat {
    Scalar(f64),
    Sum { norm_excess: f64, self_min: f64, cross_max: f64 },
}

fn sample_trial(family: ConcentrationId, p: &ConcentrationParams, rng: &mut Rng) -> TrialStat {
    let d = p.d;
    match family {
        ConcentrationId::InnerProduct => {
            let mut u = vec![0.0; d];
            let mut v = vec![0.0; d];
            rng.fill_normal(&mut u);
            rng.fill_normal(&mut v);
            TrialStat::Scalar(dot(&u, &v).abs() / (d as f64).sqrt())
        }
        ConcentrationId::NormConcentration => {
            let mut x = vec![0.0; d];
            rng.fill_normal(&mut x);
            TrialStat::Scalar((norm(&x) - (d as f64).sqrt()).abs())
        }
        ConcentrationId::SumBounds => {
            let mut vs = vec![0.0; p.t_v * d];
            rng.fill_normal(&mut vs);
            let mut us = vec![0.0; p.t_u * d];
            rng.fill_normal(&mut us);
            let mut sum = vec![0.0; d];
            for j in 0..p.t_v {
                for (s, x) in sum.iter_mut().zip(&vs[j * d..(j + 1) * d]) {
                    *s += x;
                }
            }
            let norm_excess = norm(&sum) / (p.t_v as f64).sqrt() - (d as f64).sqrt();
            let self_min = (0..p.t_v)
                .map(|j| dot(&vs[j * d..(j + 1) * d], &sum))
                .fold(f64::INFINITY, f64::min);
            let cross_max = (0..p.t_u)
                .map(|j| dot(&us[j * d..(j + 1) * d], &sum).abs())
                .fold(0.0f64, f64::max);
            TrialStat::Sum { norm_excess, self_min, cross_max }
        }
    }
}

fn validate_concentration(family: ConcentrationId, p: &ConcentrationParams, eps: f64) -> Result<()> {
    if p.d == 0 || p.trials == 0 {
        return Err(Error::Config("d and trials must be positive".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("slack must be positive, got {eps}")));
    }
    let consts = separation_constants();
    let sd = (p.d as f64).sqrt();
    match family {
        ConcentrationId::InnerProduct => {
            let cap = consts.g * consts.g * sd;
            if eps >= cap {
                return Err(Error::Config(format!(
                    "inner-product bound needs eps < G²√d = {cap}, got {eps}"
                )));
            }
        }
        ConcentrationId::NormConcentration => {}
        ConcentrationId::SumBounds => {
            if p.t_v == 0 || p.t_u == 0 {
                return Err(Error::Config("T_V and T_U must be positive".into()));
            }
            if eps >= sd {
                return Err(Error::Config(format!(
                    "sum-norm bound needs eps < √d = {sd}, got {eps}"
                )));
            }
        }
    }
    Ok(())
}

fn sub_bound(name: &'static str, violations: usize, trials: usize, raw_bound: f64) -> SubBound {
    let empirical = violations as f64 / trials as f64;
    let stated = raw_bound.min(1.0);
    let stderr = (empirical * (1.0 - empirical) / trials as f64).sqrt();
    SubBound {
        name,
        empirical,
        stated,
        stderr,
        vacuous: raw_bound >= 1.0,
        pass: empirical <= stated + 3.0 * stderr,
    }
}

/// One sampling pass evaluated at several slacks. Per-trial randomness
/// depends only on (seed, trial), so the results are identical to
/// calling [`check_concentration`] once per slack.
pub fn check_concentration_multi(
    family: ConcentrationId,
    params: &ConcentrationParams,
    eps_list: &[f64],
    seed: u64,
) -> Result<Vec<ConcentrationResult>> {
    if eps_list.is_empty() {
        return Err(Error::Config("need at least one slack value".into()));
    }
    for &eps in eps_list {
        validate_concentration(family, params, eps)?;
    }
    let consts = separation_constants();
    let g4 = consts.g.powi(4);
    let d = params.d as f64;
    // per-eps violation counters; SumBounds keeps three per eps
    let mut counts = vec![[0usize; 3]; eps_list.len()];
    for trial in 0..params.trials {
        let mut rng = Rng::derive(seed, trial as u64);
        let stat = sample_trial(family, params, &mut rng);
        for (e, &eps) in eps_list.iter().enumerate() {
            match &stat {
                TrialStat::Scalar(s) => {
                    if *s > eps {
                        counts[e][0] += 1;
                    }
                }
                TrialStat::Sum { norm_excess, self_min, cross_max } => {
                    let tvd = (params.t_v as f64 * d).sqrt();
                    if *norm_excess > eps {
                        counts[e][0] += 1;
                    }
                    if *self_min < d - 3.0 * eps * tvd {
                        counts[e][1] += 1;
                    }
                    if *cross_max > eps * tvd {
                        counts[e][2] += 1;
                    }
                }
            }
        }
    }
    let results = eps_list
        .iter()
        .zip(&counts)
        .map(|(&eps, c)| {
            let tail = (-consts.c * eps * eps / g4).exp();
            let bounds = match family {
                ConcentrationId::InnerProduct => {
                    vec![sub_bound("inner_product", c[0], params.trials, 2.0 * tail)]
                }
                ConcentrationId::NormConcentration => {
                    vec![sub_bound("norm_deviation", c[0], params.trials, 2.0 * tail)]
                }
                ConcentrationId::SumBounds => vec![
                    sub_bound("sum_norm", c[0], params.trials, 2.0 * tail),
                    sub_bound(
                        "self_inner",
                        c[1],
                        params.trials,
                        4.0 * params.t_v as f64 * tail,
                    ),
                    sub_bound(
                        "cross_inner",
                        c[2],
                        params.trials,
                        2.0 * params.t_u as f64 * tail,
                    ),
                ],
            };
            ConcentrationResult {
                family,
                d: params.d,
                t_v: params.t_v,
                t_u: params.t_u,
                eps,
                trials: params.trials,
                pass: bounds.iter().all(|b| b.pass),
                bounds,
            }
        })
        .collect();
    Ok(results)
}

pub fn check_concentration(
    family: ConcentrationId,
    params: &ConcentrationParams,
    eps: f64,
    seed: u64,
) -> Result<ConcentrationResult> {
    Ok(check_concentration_multi(family, params, &[eps], seed)?.remove(0))
}

/// Test accuracy on the leftover group implied by a linear separator:
/// 1 − Φ((B·w_z − w_y)/‖w_e‖), degenerating to a step when ‖w_e‖ = 0.
pub fn leftover_accuracy(w: &LinearParams, b: f64) -> Result<f64> {
    if w.w.len() < 2 {
        return Err(Error::Shape(format!(
            "weight vector needs at least 2 coordinates, got {}",
            w.w.len()
        )));
    }
    let drift = b * w.w_z() - w.w_y();
    let noise = norm(w.w_e());
    if noise == 0.0 {
        Ok(if drift < 0.0 {
            1.0
        } else if drift > 0.0 {
            0.0
        } else {
            0.5
        })
    } else {
        Ok(1.0 - normal_cdf(drift / noise))
    }
}

/// Relative noise contribution scenario: per-sample gradient weights are
/// the confidence complements, `eps_conf` on the shortcut group and
/// `gamma_conf` on the leftover group. `d` is the noise dimension.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRatioScenario {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub eps_conf: f64,
    pub gamma_conf: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NoiseRatioCheck {
    pub formula: f64,
    pub direct: f64,
    pub rel_err: f64,
}

impl NoiseRatioScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if !(self.eps_conf > 0.0 && self.eps_conf <= self.gamma_conf && self.gamma_conf < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < eps_conf <= gamma_conf < 1, got {} and {}",
                self.eps_conf, self.gamma_conf
            )));
        }
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("n and d must be positive".into()));
        }
        let rn = self.rho * self.n as f64;
        if (rn - rn.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "rho*n must be an integer, got {rn}"
            )));
        }
        Ok(())
    }
}

pub fn noise_ratio_formula(s: &NoiseRatioScenario) -> Result<f64> {
    s.validate()?;
    let d = s.d as f64;
    let n = s.n as f64;
    let ratio = s.eps_conf / s.gamma_conf * s.rho / (1.0 - s.rho);
    Ok(d.sqrt() / (((1.0 - s.rho) * n).sqrt() * (ratio + 1.0)))
}

/// Draws one dataset with exactly (1−ρ)n leftover samples and compares
/// the measured stable-to-noise gradient component ratio against the
/// closed form.
pub fn noise_ratio_check(s: &NoiseRatioScenario) -> Result<NoiseRatioCheck> {
    let formula = noise_ratio_formula(s)?;
    let n = s.n;
    let k = n - (s.rho * n as f64).round() as usize;
    if k == 0 {
        return Err(Error::Config("scenario leaves the leftover group empty".into()));
    }
    let mut rng = Rng::new(s.seed);
    let mut leftover_mask = vec![false; n];
    for i in rng.choose(n, k) {
        leftover_mask[i] = true;
    }
    let d_total = s.d + 2;
    let (mut x, mut y, mut z) = (vec![0.0; n * d_total], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let yi = rng.sign();
        let zi = if leftover_mask[i] { -yi } else { yi };
        y[i] = yi;
        z[i] = zi;
        let row = &mut x[i * d_total..(i + 1) * d_total];
        row[0] = zi;
        row[1] = yi;
        rng.fill_normal(&mut row[2..]);
    }
    let ds = Dataset::from_parts(x, y, z, d_total, 1.0)?;
    let weights: Vec<f64> = (0..n)
        .map(|i| if leftover_mask[i] { s.gamma_conf } else { s.eps_conf })
        .collect();
    let (stable, noise) = grad_components(&ds, &weights, &ds.leftover_idx)?;
    let direct = noise / stable;
    Ok(NoiseRatioCheck {
        formula,
        direct,
        rel_err: (direct - formula).abs() / formula,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairOverlap {
    /// Fraction of same-(y,z) pairs with x_iᵀx_j > B² + 1.
    pub fraction: f64,
    pub max_abs_inner: f64,
    pub pairs: usize,
}

/// Inner products between same-group inputs. For two samples sharing
/// (y, z) the product is B² + 1 + δ_iᵀδ_j, so about half the pairs land
/// above B² + 1 and none of them are remotely orthogonal.
pub fn gs_violation(ds: &Dataset) -> Result<PairOverlap> {
    let threshold = ds.b * ds.b + 1.0;
    let mut cells: [Vec<usize>; 4] = Default::default();
    for i in 0..ds.n() {
        let cell =
            (if ds.y[i] > 0.0 { 0 } else { 2 }) + (if ds.z[i] > 0.0 { 0 } else { 1 });
        cells[cell].push(i);
    }
    let mut pairs = 0usize;
    let mut above = 0usize;
    let mut max_abs: f64 = 0.0;
    for cell in &cells {
        for (a, &i) in cell.iter().enumerate() {
            for &j in &cell[a + 1..] {
                let ip = dot(ds.row(i), ds.row(j));
                pairs += 1;
                if ip > threshold {
                    above += 1;
                }
                max_abs = max_abs.max(ip.abs());
            }
        }
    }
    if pairs == 0 {
        return Err(Error::Domain(
            "no two samples share a (y, z) cell".into(),
        ));
    }
    Ok(PairOverlap {
        fraction: above as f64 / pairs as f64,
        max_abs_inner: max_abs,
        pairs,
    })
}

/// Constants of the two-variable gradient-flow system. `gamma_noise` is
/// the shared squared noise norm Γ of the constructed rows.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub gamma_noise: f64,
    pub n: usize,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlowState {
    pub t: f64,
    pub w_y: f64,
    pub w_z: f64,
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0,1), got {}", self.rho)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if !(self.gamma_noise >= 0.0 && self.gamma_noise.is_finite()) {
            return Err(Error::Config(format!(
                "gamma_noise must be nonnegative, got {}",
                self.gamma_noise
            )));
        }
        Ok(())
    }
}

/// Right-hand side of the coupled ODE for (w_y, w_z).
pub fn flow_rhs(p: &FlowParams, w_y: f64, w_z: f64) -> (f64, f64) {
    let nf = p.n as f64;
    let a = 1.0 + p.gamma_noise / (2.0 * nf * p.rho);
    let b = 1.0 + p.gamma_noise / (2.0 * nf * (1.0 - p.rho));
    let aligned = p.rho / (1.0 + (a * (w_y + w_z)).exp());
    let crossed = (1.0 - p.rho) / (1.0 + (b * (w_y - w_z)).exp());
    (aligned + crossed, aligned - crossed)
}

/// Classical RK4 from (0, 0) out to the horizon with a fixed step (the
/// last step shrinks to land exactly on the horizon). The returned
/// trajectory includes the initial state.
pub fn integrate_flow(p: &FlowParams, horizon: f64, step: f64) -> Result<Vec<FlowState>> {
    p.validate()?;
    if !(step > 0.0 && step.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!(
            "horizon and step must be positive, got {horizon} and {step}"
        )));
    }
    let mut traj = vec![FlowState { t: 0.0, w_y: 0.0, w_z: 0.0 }];
    let (mut t, mut w_y, mut w_z) = (0.0f64, 0.0f64, 0.0f64);
    let mut idx = 0usize;
    while t < horizon - 1e-12 * horizon {
        idx += 1;
        let h = step.min(horizon - t);
        let (k1y, k1z) = flow_rhs(p, w_y, w_z);
        let (k2y, k2z) = flow_rhs(p, w_y + 0.5 * h * k1y, w_z + 0.5 * h * k1z);
        let (k3y, k3z) = flow_rhs(p, w_y + 0.5 * h * k2y, w_z + 0.5 * h * k2z);
        let (k4y, k4z) = flow_rhs(p, w_y + h * k3y, w_z + h * k3z);
        w_y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        w_z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        t += h;
        if !w_y.is_finite() || !w_z.is_finite() {
            return Err(Error::Divergence { epoch: idx, loss: w_y });
        }
        traj.push(FlowState { t, w_y, w_z });
    }
    Ok(traj)
}

/// The dataset the flow ODE describes exactly: alternating labels, the
/// first ρn samples aligned (z = y), and per-sample noise √Γ·e_i on its
/// own axis so noise rows are exactly orthogonal with equal norms.
pub fn flow_oracle_dataset(p: &FlowParams) -> Result<Dataset> {
    p.validate()?;
    let n = p.n;
    let rn = p.rho * n as f64;
    if (rn - rn.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("rho*n must be an integer, got {rn}")));
    }
    let aligned = rn.round() as usize;
    let d = n + 2;
    let scale = p.gamma_noise.sqrt();
    let (mut x, mut y, mut z) = (vec![0.0; n * d], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let yi = if i % 2 == 0 { 1.0 } else { -1.0 };
        let zi = if i < aligned { yi } else { -yi };
        y[i] = yi;
        z[i] = zi;
        let row = &mut x[i * d..(i + 1) * d];
        row[0] = zi;
        row[1] = yi;
        row[2 + i] = scale;
    }
    Dataset::from_parts(x, y, z, d, 1.0)
}

/// Endpoint of plain full-batch GD (log-loss, no momentum) on the flow
/// oracle dataset; GD time lr·steps corresponds to flow time.
pub fn flow_gd_endpoint(p: &FlowParams, lr: f64, steps: usize) -> Result<(f64, f64)> {
    let ds = flow_oracle_dataset(p)?;
    let params = crate::model::ModelParams::Linear(LinearParams::zeros(ds.d));
    let cfg = TrainConfig {
        lr,
        momentum: 0.0,
        weight_decay: 0.0,
        epochs: steps,
        eval_every: steps,
        seed: 0,
    };
    let spec = crate::losses::LossSpec::of_kind(crate::losses::LossKind::Log);
    let rec = train(&params, &ds, &ds, &spec, &cfg)?;
    match &rec.final_params {
        crate::model::ModelParams::Linear(lp) => Ok((lp.w_y(), lp.w_z())),
        _ => unreachable!("trained model is linear"),
    }
}
