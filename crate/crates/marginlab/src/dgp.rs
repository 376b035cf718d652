//! The linear shortcut task.
//!
//! A sample is `x = [B·z, y, δ]` with label `y` uniform on ±1, shortcut
//! `z = y` with probability `rho` (independently per sample), and
//! `δ ~ N(0, I_{d−2})`. Samples with `y = z` form the shortcut group;
//! the rest form the leftover group. A model reading only the first
//! coordinate is correct exactly on the shortcut group, which is why the
//! interesting test statistic is accuracy *per group* rather than overall.

use crate::rng::Rng;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    /// P(z = y); must lie strictly inside (0, 1).
    pub rho: f64,
    /// Scale on the shortcut coordinate.
    #[serde(rename = "B")]
    pub b: f64,
    /// Total input dimension including the two feature coordinates.
    pub d: usize,
    pub n: usize,
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!(
                "rho must lie in (0,1), got {}",
                self.rho
            )));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::Config(format!("B must be positive, got {}", self.b)));
        }
        if self.d < 3 {
            return Err(Error::Config(format!("d must be at least 3, got {}", self.d)));
        }
        if self.n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        Ok(())
    }
}

/// One draw of the task, with the group partition precomputed.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Row-major n x d; row i is `[B·z_i, y_i, δ_i]`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub d: usize,
    pub b: f64,
    /// Indices with y = z.
    pub shortcut_idx: Vec<usize>,
    /// Indices with y ≠ z.
    pub leftover_idx: Vec<usize>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Leftover-group size, `k` in the bound formulas.
    pub fn k(&self) -> usize {
        self.leftover_idx.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Noise block of row i (everything past the two feature coordinates).
    pub fn delta(&self, i: usize) -> &[f64] {
        &self.x[i * self.d + 2..(i + 1) * self.d]
    }

    /// Rebuilds the group partition from y and z; used by constructors.
    fn partition(y: &[f64], z: &[f64]) -> (Vec<usize>, Vec<usize>) {
        let mut shortcut = Vec::new();
        let mut leftover = Vec::new();
        for i in 0..y.len() {
            if y[i] == z[i] {
                shortcut.push(i);
            } else {
                leftover.push(i);
            }
        }
        (shortcut, leftover)
    }

    /// Assembles a dataset from parts, recomputing the partition.
    pub fn from_parts(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, d: usize, b: f64) -> Result<Dataset> {
        if y.len() != z.len() || x.len() != y.len() * d {
            return Err(Error::Shape(format!(
                "inconsistent dataset: |x| = {}, |y| = {}, |z| = {}, d = {}",
                x.len(),
                y.len(),
                z.len(),
                d
            )));
        }
        let (shortcut_idx, leftover_idx) = Dataset::partition(&y, &z);
        Ok(Dataset {
            x,
            y,
            z,
            d,
            b,
            shortcut_idx,
            leftover_idx,
        })
    }

    /// Writes `y, z, x_1..x_d` with one header line. Numbers use the
    /// shortest decimal that round-trips through f64.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("y,z");
        for j in 1..=self.d {
            header.push_str(&format!(",x_{j}"));
        }
        header.push('\n');
        w.write_all(header.as_bytes())?;
        let mut line = String::new();
        for i in 0..self.n() {
            line.clear();
            line.push_str(&format!("{},{}", self.y[i], self.z[i]));
            for v in self.row(i) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Reads the format written by [`Dataset::write_csv`]. The shortcut
    /// scale is recovered from the first row (`B = x_1 · z`).
    pub fn read_csv<R: BufRead>(r: R) -> Result<Dataset> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty dataset file".into()))??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 5 || cols[0] != "y" || cols[1] != "z" {
            return Err(Error::Config("dataset header must be y,z,x_1..x_d".into()));
        }
        let d = cols.len() - 2;
        let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.trim_end().split(',');
            let mut next = |name: &str| -> Result<f64> {
                it.next()
                    .ok_or_else(|| {
                        Error::Config(format!("row {}: missing {}", lineno + 2, name))
                    })?
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("row {}: {}", lineno + 2, e)))
            };
            y.push(next("y")?);
            z.push(next("z")?);
            for j in 0..d {
                x.push(next(&format!("x_{}", j + 1))?);
            }
            if it.next().is_some() {
                return Err(Error::Config(format!("row {}: too many columns", lineno + 2)));
            }
        }
        if y.is_empty() {
            return Err(Error::Config("dataset has no rows".into()));
        }
        let b = x[0] * z[0];
        Dataset::from_parts(x, y, z, d, b)
    }
}

/// Draws one dataset. The stream order is fixed (per sample: label coin,
/// shortcut coin, then the d−2 noise coordinates), so a given seed always
/// produces the same bits.
pub fn sample_dataset(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let n = config.n;
    let d = config.d;
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    for i in 0..n {
        let yi = rng.sign();
        let zi = if rng.uniform() < config.rho { yi } else { -yi };
        y[i] = yi;
        z[i] = zi;
        let row = &mut x[i * d..(i + 1) * d];
        row[0] = config.b * zi;
        row[1] = yi;
        rng.fill_normal(&mut row[2..]);
    }
    Dataset::from_parts(x, y, z, d, config.b)
}

#[derive(Clone, Debug, Serialize)]
pub struct LeftoverStats {
    /// Monte Carlo mean of k/n.
    pub mean_fraction: f64,
    /// Empirical frequency of the event k ≥ n/10.
    pub tail_frequency: f64,
    pub trials: usize,
}

/// Monte Carlo distribution of the leftover-group size. Only the
/// shortcut coins matter for k, so each trial draws n uniforms from a
/// derived stream rather than a full dataset.
pub fn leftover_fraction_stats(
    n: usize,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<LeftoverStats> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Config(format!("rho must lie in (0,1), got {rho}")));
    }
    if n < 1 || trials < 1 {
        return Err(Error::Config("n and trials must be at least 1".into()));
    }
    let threshold = n as f64 / 10.0;
    let mut sum_frac = 0.0;
    let mut tail = 0usize;
    for t in 0..trials {
        let mut rng = Rng::derive(seed, t as u64);
        let mut k = 0usize;
        for _ in 0..n {
            if rng.uniform() >= rho {
                k += 1;
            }
        }
        sum_frac += k as f64 / n as f64;
        if k as f64 >= threshold {
            tail += 1;
        }
    }
    Ok(LeftoverStats {
        mean_fraction: sum_frac / trials as f64,
        tail_frequency: tail as f64 / trials as f64,
        trials,
    })
}
