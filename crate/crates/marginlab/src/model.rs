//! Linear and two-layer predictors with exact forward/backward passes.

use crate::dgp::Dataset;
use crate::linalg::dot;
use crate::losses::LossSpec;
use crate::rng::Rng;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Weights of `f(x) = w·x`. No intercept. The layout mirrors the input:
/// `w[0]` multiplies the shortcut column, `w[1]` the label column, and
/// the tail acts on the noise block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub w: Vec<f64>,
}

impl LinearParams {
    pub fn zeros(d: usize) -> LinearParams {
        LinearParams { w: vec![0.0; d] }
    }

    pub fn w_z(&self) -> f64 {
        self.w[0]
    }

    pub fn w_y(&self) -> f64 {
        self.w[1]
    }

    pub fn w_e(&self) -> &[f64] {
        &self.w[2..]
    }

    pub fn forward_row(&self, x: &[f64]) -> f64 {
        dot(&self.w, x)
    }
}

/// One hidden ReLU layer, scalar output. `w1` is row-major h x d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub h: usize,
    pub d: usize,
}

impl MlpParams {
    /// Weights i.i.d. normal with sd 1/sqrt(fan_in), biases zero.
    pub fn init(d: usize, h: usize, seed: u64) -> MlpParams {
        let mut rng = Rng::new(seed);
        let s1 = 1.0 / (d as f64).sqrt();
        let s2 = 1.0 / (h as f64).sqrt();
        let mut w1 = vec![0.0; h * d];
        rng.fill_normal(&mut w1);
        for v in &mut w1 {
            *v *= s1;
        }
        let mut w2 = vec![0.0; h];
        rng.fill_normal(&mut w2);
        for v in &mut w2 {
            *v *= s2;
        }
        MlpParams {
            w1,
            b1: vec![0.0; h],
            w2,
            b2: 0.0,
            h,
            d,
        }
    }

    /// Fills `hidden` with relu(W1 x + b1) and returns the output.
    fn forward_row_into(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        for j in 0..self.h {
            let pre = dot(&self.w1[j * self.d..(j + 1) * self.d], x) + self.b1[j];
            hidden[j] = if pre > 0.0 { pre } else { 0.0 };
        }
        dot(&self.w2, hidden) + self.b2
    }
}

/// Either predictor behind one interface. The trainer only sees the flat
/// parameter vector; the enum knows how to score rows and differentiate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Linear(LinearParams),
    Mlp(MlpParams),
}

impl ModelParams {
    pub fn input_dim(&self) -> usize {
        match self {
            ModelParams::Linear(p) => p.w.len(),
            ModelParams::Mlp(p) => p.d,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            ModelParams::Linear(p) => p.w.len(),
            ModelParams::Mlp(p) => p.h * p.d + p.h + p.h + 1,
        }
    }

    /// Canonical flattening: linear is w itself; the MLP packs
    /// [W1 row-major, b1, w2, b2]. Gradients use the same layout.
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            ModelParams::Linear(p) => p.w.clone(),
            ModelParams::Mlp(p) => {
                let mut v = Vec::with_capacity(self.num_params());
                v.extend_from_slice(&p.w1);
                v.extend_from_slice(&p.b1);
                v.extend_from_slice(&p.w2);
                v.push(p.b2);
                v
            }
        }
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, model has {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        match self {
            ModelParams::Linear(p) => p.w.copy_from_slice(flat),
            ModelParams::Mlp(p) => {
                let (hd, h) = (p.h * p.d, p.h);
                p.w1.copy_from_slice(&flat[..hd]);
                p.b1.copy_from_slice(&flat[hd..hd + h]);
                p.w2.copy_from_slice(&flat[hd + h..hd + 2 * h]);
                p.b2 = flat[hd + 2 * h];
            }
        }
        Ok(())
    }

    fn check_dims(&self, ds: &Dataset) -> Result<()> {
        if self.input_dim() != ds.d {
            return Err(Error::Shape(format!(
                "model expects d = {}, dataset has d = {}",
                self.input_dim(),
                ds.d
            )));
        }
        Ok(())
    }

    pub fn forward(&self, ds: &Dataset) -> Result<Vec<f64>> {
        self.check_dims(ds)?;
        let n = ds.n();
        let mut f = vec![0.0; n];
        match self {
            ModelParams::Linear(p) => {
                for i in 0..n {
                    f[i] = p.forward_row(ds.row(i));
                }
            }
            ModelParams::Mlp(p) => {
                let mut hidden = vec![0.0; p.h];
                for i in 0..n {
                    f[i] = p.forward_row_into(ds.row(i), &mut hidden);
                }
            }
        }
        Ok(f)
    }

    /// Mean loss over the dataset and its exact gradient in flat layout,
    /// in one pass. The ReLU subgradient at 0 is 0.
    pub fn mean_loss_and_grad(&self, ds: &Dataset, spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
        self.check_dims(ds)?;
        spec.validate()?;
        let n = ds.n();
        let inv_n = 1.0 / n as f64;
        let mut grad = vec![0.0; self.num_params()];
        let mut loss = 0.0;
        match self {
            ModelParams::Linear(p) => {
                for i in 0..n {
                    let x = ds.row(i);
                    let f = p.forward_row(x);
                    loss += spec.eval_loss(f, ds.y[i])?;
                    let g = spec.grad_output(f, ds.y[i])? * inv_n;
                    for (gj, xj) in grad.iter_mut().zip(x) {
                        *gj += g * xj;
                    }
                }
            }
            ModelParams::Mlp(p) => {
                let (hd, h, d) = (p.h * p.d, p.h, p.d);
                let mut hidden = vec![0.0; h];
                for i in 0..n {
                    let x = ds.row(i);
                    let f = p.forward_row_into(x, &mut hidden);
                    loss += spec.eval_loss(f, ds.y[i])?;
                    let g = spec.grad_output(f, ds.y[i])? * inv_n;
                    let (gw1, rest) = grad.split_at_mut(hd);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(h);
                    for j in 0..h {
                        gw2[j] += g * hidden[j];
                        if hidden[j] > 0.0 {
                            let back = g * p.w2[j];
                            gb1[j] += back;
                            let row = &mut gw1[j * d..(j + 1) * d];
                            for (gj, xj) in row.iter_mut().zip(x) {
                                *gj += back * xj;
                            }
                        }
                    }
                    gb2[0] += g;
                }
            }
        }
        Ok((loss * inv_n, grad))
    }
}

/// Summed gradient components from a per-sample weighting of a linear
/// model's pull on the data: the stable-coordinate magnitude
/// |sum_i s_i| over all samples, and the Euclidean norm of
/// sum_{i in subset} s_i·y_i·δ_i over a sample subset. Sums, not means.
pub fn grad_components(
    ds: &Dataset,
    weights: &[f64],
    subset: &[usize],
) -> Result<(f64, f64)> {
    if weights.len() != ds.n() {
        return Err(Error::Shape(format!(
            "{} weights for {} samples",
            weights.len(),
            ds.n()
        )));
    }
    if subset.is_empty() {
        return Err(Error::Domain("gradient component subset is empty".into()));
    }
    for &i in subset {
        if i >= ds.n() {
            return Err(Error::Shape(format!("subset index {i} out of range")));
        }
    }
    let stable: f64 = weights.iter().sum();
    let mut noise_sum = vec![0.0; ds.d - 2];
    for &i in subset {
        let c = weights[i] * ds.y[i];
        for (acc, dv) in noise_sum.iter_mut().zip(ds.delta(i)) {
            *acc += c * dv;
        }
    }
    Ok((stable.abs(), crate::linalg::norm(&noise_sum)))
}
