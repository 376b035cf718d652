//! Test-side oracles, implemented independently of the library.
//!
//! Every numeric claim checked by the integration suites comes from one of
//! the routes below rather than from the code under test: a different RNG
//! (xorshift128+ with polar-method Gaussians, vs. the library's splitmix64
//! with Box-Muller), a power-series erf (vs. incomplete-gamma), Poisson
//! partial sums for chi-square tails (vs. continued fractions), exact
//! binomial CDFs, bisection root finding, and central finite differences.

#![allow(dead_code)]

/// xorshift128+ generator. Deliberately a different algorithm from the
/// library RNG so stream artifacts cannot cancel out in comparisons.
pub struct OracleRng {
    s0: u64,
    s1: u64,
    spare: Option<f64>,
}

impl OracleRng {
    pub fn new(seed: u64) -> Self {
        // splitmix-style scrambling just to spread the seed over both words
        let mut x = seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut next = || {
            x = x.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = x;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        };
        let s0 = next().max(1);
        let s1 = next();
        OracleRng { s0, s1, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.s0;
        let y = self.s1;
        self.s0 = y;
        x ^= x << 23;
        self.s1 = x ^ y ^ (x >> 17) ^ (y >> 26);
        self.s1.wrapping_add(y)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let a = 2.0 * self.uniform() - 1.0;
            let b = 2.0 * self.uniform() - 1.0;
            let s = a * a + b * b;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(b * f);
                return a * f;
            }
        }
    }

    pub fn sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// erf by power series: erf(x) = 2/√π · Σ_{k≥0} (-1)^k x^{2k+1} / (k!(2k+1)).
///
/// Converges for the |x| ≤ 6 range used in tests; beyond that erf is ±1 to
/// well under 1e-15.
pub fn erf_series(x: f64) -> f64 {
    if x < 0.0 {
        return -erf_series(-x);
    }
    if x > 6.0 {
        return 1.0;
    }
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for k in 1..200 {
        let kf = k as f64;
        term *= -x2 / kf;
        let add = term / (2.0 * kf + 1.0);
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// Standard normal CDF from the series erf.
pub fn normal_cdf_oracle(x: f64) -> f64 {
    0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

/// Exact chi-square upper tail P(X > x) for even d, via the Poisson partial
/// sum Q(d/2, x/2) = e^{-x/2} Σ_{j<d/2} (x/2)^j / j!, evaluated in log space.
pub fn chi2_tail_even(d: usize, x: f64) -> f64 {
    assert!(d % 2 == 0 && d > 0, "oracle requires even d");
    if x <= 0.0 {
        return 1.0;
    }
    let half = x / 2.0;
    let m = d / 2;
    // log-sum-exp over terms j*ln(half) - ln(j!) - half
    let mut logs = Vec::with_capacity(m);
    let mut log_fact = 0.0;
    for j in 0..m {
        if j > 0 {
            log_fact += (j as f64).ln();
        }
        logs.push(j as f64 * half.ln() - log_fact - half);
    }
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return 0.0;
    }
    let s: f64 = logs.iter().map(|l| (l - mx).exp()).sum();
    (mx + s.ln()).exp().min(1.0)
}

/// P(chi_d > r) for the chi (not chi-square) distribution, even d.
pub fn chi_tail_even(d: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 1.0;
    }
    chi2_tail_even(d, r * r)
}

/// Two-sided band for the norm of a standard Gaussian d-vector:
/// P(|‖x‖ − √d| > t), exact for even d.
pub fn norm_band_tail_even(d: usize, t: f64) -> f64 {
    let root_d = (d as f64).sqrt();
    let upper = chi_tail_even(d, root_d + t);
    let lower = if root_d - t > 0.0 {
        1.0 - chi_tail_even(d, root_d - t)
    } else {
        0.0
    };
    upper + lower
}

/// Exact binomial CDF P(X ≤ k) for X ~ Bin(n, p), via log-space pmf recursion.
pub fn binomial_cdf(n: usize, p: f64, k: usize) -> f64 {
    assert!((0.0..=1.0).contains(&p));
    if p == 0.0 {
        return 1.0;
    }
    if p == 1.0 {
        return if k >= n { 1.0 } else { 0.0 };
    }
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    // log pmf(0) = n ln(1-p); pmf(j)/pmf(j-1) = (n-j+1)/j * p/(1-p)
    let mut log_pmf = n as f64 * lq;
    let mut logs = vec![log_pmf];
    for j in 1..=k.min(n) {
        log_pmf += ((n - j + 1) as f64).ln() - (j as f64).ln() + lp - lq;
        logs.push(log_pmf);
    }
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - mx).exp()).sum();
    (mx + s.ln()).exp().min(1.0)
}

/// Bisection to absolute x-tolerance. f(lo) and f(hi) must bracket a root.
pub fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    assert!(
        flo.signum() != f(hi).signum(),
        "bisect: endpoints do not bracket"
    );
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Central finite difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with an absolute floor so near-zero targets do not blow up.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-8)
}

/// Standard error of a Bernoulli frequency estimate.
pub fn bernoulli_se(p_hat: f64, trials: usize) -> f64 {
    (p_hat * (1.0 - p_hat) / trials as f64).sqrt().max(1e-12)
}

/// Full-batch gradient descent on mean log-loss for a fixed dense matrix,
/// written from scratch (plain loops, no momentum) as the reference
/// dynamics for the flow-ODE comparison.
///
/// Rows of `x` are samples; labels in {−1, +1}. Returns the weight vector
/// after `steps` updates of size `lr`.
pub fn gd_logloss_oracle(x: &[Vec<f64>], y: &[f64], lr: f64, steps: usize) -> Vec<f64> {
    let n = x.len();
    let d = x[0].len();
    let mut w = vec![0.0; d];
    for _ in 0..steps {
        let mut grad = vec![0.0; d];
        for i in 0..n {
            let mut f = 0.0;
            for j in 0..d {
                f += w[j] * x[i][j];
            }
            let m = y[i] * f;
            // dℓ/df for ℓ = log(1+e^{-m}): -y·σ(-m), computed stably
            let s = if m >= 0.0 {
                let e = (-m).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + m.exp())
            };
            let coeff = -y[i] * s / n as f64;
            for j in 0..d {
                grad[j] += coeff * x[i][j];
            }
        }
        for j in 0..d {
            w[j] -= lr * grad[j];
        }
    }
    w
}

/// Mean of a slice.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
