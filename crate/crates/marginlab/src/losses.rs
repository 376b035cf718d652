//! Log-loss and the margin-control losses, with exact derivatives.
//!
//! Every loss here is `ℓ_log` applied to a transformed margin, possibly
//! plus an output penalty. The transforms cap how much margin a sample
//! can buy loss with, which is the whole point: under plain log-loss the
//! cheapest way to drive training loss down is to grow one coordinate
//! forever, and these losses take that route away.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Numerically stable `1/(1+e^{-x})`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1+exp(-a))` without overflow for large |a|.
pub fn log_loss(a: f64) -> f64 {
    (-a.abs()).exp().ln_1p() + (-a).max(0.0)
}

/// d/da log(1+exp(-a)) = -sigma(-a).
fn log_loss_deriv(a: f64) -> f64 {
    -sigmoid(-a)
}

/// Positive root of u·sigma(u) = 1, the margin where the damped transform
/// peaks. Bisection on (1, 2) to 1e-10.
pub fn damp_root() -> f64 {
    static ROOT: OnceLock<f64> = OnceLock::new();
    *ROOT.get_or_init(|| {
        let f = |u: f64| u * sigmoid(u) - 1.0;
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    })
}

/// Where the damped margin transform m(1-sigma(m/T)) attains its maximum,
/// and the value there. The peak value is T·(u*-1), about 0.278·T.
pub fn damp_peak(temperature: f64) -> Result<(f64, f64)> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let m_star = temperature * damp_root();
    let peak = m_star * (1.0 - sigmoid(m_star / temperature));
    Ok((m_star, peak))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Log,
    SigmaDamp,
    SigmaStitch,
    MargLog,
    SpectralDecoupling,
}

/// Which parameterization the damped loss uses.
///
/// `Temperature` transforms the margin as m(1-sigma(m/T_y)); the peak sits
/// at m = u*·T_y. `PerClass` rescales so the peak sits at margin 1 and
/// applies the class temperature outside: T_y·u*·m·(1-sigma(u*·m)).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampForm {
    #[default]
    Temperature,
    PerClass,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(rename = "T_pos")]
    pub t_pos: f64,
    #[serde(rename = "T_neg")]
    pub t_neg: f64,
    /// Stitch threshold; only free in single-class mode.
    pub u: f64,
    pub lambda: f64,
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    pub damp_form: DampForm,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            kind: LossKind::Log,
            t_pos: 1.0,
            t_neg: 1.0,
            u: 1.0,
            lambda: 0.1,
            gamma_pos: 0.0,
            gamma_neg: 0.0,
            damp_form: DampForm::Temperature,
        }
    }
}

impl LossSpec {
    pub fn of_kind(kind: LossKind) -> LossSpec {
        LossSpec {
            kind,
            ..LossSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_pos > 0.0 && self.t_pos.is_finite())
            || !(self.t_neg > 0.0 && self.t_neg.is_finite())
        {
            return Err(Error::Config(format!(
                "temperatures must be positive, got T_pos = {}, T_neg = {}",
                self.t_pos, self.t_neg
            )));
        }
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(Error::Config(format!("u must be positive, got {}", self.u)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !self.gamma_pos.is_finite() || !self.gamma_neg.is_finite() {
            return Err(Error::Config("gamma targets must be finite".into()));
        }
        Ok(())
    }

    /// True when both classes share parameters, in which case the stitch
    /// threshold is free and the per-class target reduces to one gamma.
    pub fn single_class(&self) -> bool {
        self.t_pos == self.t_neg && self.gamma_pos == self.gamma_neg
    }

    fn temperature(&self, y: f64) -> f64 {
        if y > 0.0 {
            self.t_pos
        } else {
            self.t_neg
        }
    }

    fn gamma(&self, y: f64) -> f64 {
        if y > 0.0 {
            self.gamma_pos
        } else {
            self.gamma_neg
        }
    }

    fn stitch_threshold(&self) -> f64 {
        if self.single_class() {
            self.u
        } else {
            1.0
        }
    }

    fn check_input(&self, f: f64, y: f64) -> Result<()> {
        self.validate()?;
        if !f.is_finite() {
            return Err(Error::Domain(format!("model output must be finite, got {f}")));
        }
        if y != 1.0 && y != -1.0 {
            return Err(Error::Domain(format!("label must be +1 or -1, got {y}")));
        }
        Ok(())
    }

    /// Transformed margin `a` fed to log-loss, and da/dm, for the
    /// margin-transforming kinds.
    fn transform(&self, m: f64, y: f64) -> (f64, f64) {
        match self.kind {
            LossKind::Log | LossKind::MargLog | LossKind::SpectralDecoupling => (m, 1.0),
            LossKind::SigmaDamp => match self.damp_form {
                DampForm::Temperature => {
                    let t = self.temperature(y);
                    let s = sigmoid(m / t);
                    let a = m * (1.0 - s);
                    let da = (1.0 - s) - (m / t) * s * (1.0 - s);
                    (a, da)
                }
                DampForm::PerClass => {
                    let t = self.temperature(y);
                    let r = damp_root();
                    let s = sigmoid(r * m);
                    let a = t * r * m * (1.0 - s);
                    let da = t * r * (1.0 - s) * (1.0 - r * m * s);
                    (a, da)
                }
            },
            LossKind::SigmaStitch => {
                let t = self.temperature(y);
                let u = self.stitch_threshold();
                if m <= u {
                    (t * m, t)
                } else {
                    (t * (2.0 * u - m), -t)
                }
            }
        }
    }

    pub fn eval_loss(&self, f: f64, y: f64) -> Result<f64> {
        self.check_input(f, y)?;
        let m = y * f;
        let (a, _) = self.transform(m, y);
        let base = log_loss(a);
        let penalty = match self.kind {
            LossKind::MargLog => {
                let r = f - self.gamma(y);
                self.lambda * (r * r).ln_1p()
            }
            LossKind::SpectralDecoupling => self.lambda * f * f,
            _ => 0.0,
        };
        Ok(base + penalty)
    }

    /// Exact dℓ/df.
    pub fn grad_output(&self, f: f64, y: f64) -> Result<f64> {
        self.check_input(f, y)?;
        let m = y * f;
        let (a, da_dm) = self.transform(m, y);
        let base = y * log_loss_deriv(a) * da_dm;
        let penalty = match self.kind {
            LossKind::MargLog => {
                let r = f - self.gamma(y);
                self.lambda * 2.0 * r / (1.0 + r * r)
            }
            LossKind::SpectralDecoupling => 2.0 * self.lambda * f,
            _ => 0.0,
        };
        Ok(base + penalty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL_KINDS: [LossKind; 5] = [
        LossKind::Log,
        LossKind::SigmaDamp,
        LossKind::SigmaStitch,
        LossKind::MargLog,
        LossKind::SpectralDecoupling,
    ];

    #[test]
    fn log_loss_at_zero_is_log_two() {
        let spec = LossSpec::of_kind(LossKind::Log);
        for y in [1.0, -1.0] {
            assert!((spec.eval_loss(0.0, y).unwrap() - 2f64.ln()).abs() < 1e-15);
        }
        assert!((spec.grad_output(0.0, 1.0).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn stitch_reflects_to_zero_at_twice_threshold() {
        let spec = LossSpec {
            u: 1.3,
            ..LossSpec::of_kind(LossKind::SigmaStitch)
        };
        // margin 2u maps to 2u - 2u = 0, so loss is exactly log 2
        assert!((spec.eval_loss(2.6, 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((spec.eval_loss(-2.6, -1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn damp_peak_value_and_root() {
        let (m_star, peak) = damp_peak(1.0).unwrap();
        assert!((peak - 0.278).abs() < 5e-4, "peak {peak}");
        let r = damp_root();
        assert!((r * sigmoid(r) - 1.0).abs() < 1e-9);
        assert!((1.2784..1.2786).contains(&r), "root {r}");
        assert!((m_star - r).abs() < 1e-12);
        // linear scaling in T is exact
        let (_, p2) = damp_peak(2.0).unwrap();
        assert!((p2 - 2.0 * peak).abs() < 1e-12);
        // the transform really is maximized there
        let spec = LossSpec::of_kind(LossKind::SigmaDamp);
        let at_peak = spec.transform(m_star, 1.0).0;
        for dm in [-0.1, -0.01, 0.01, 0.1] {
            assert!(spec.transform(m_star + dm, 1.0).0 < at_peak);
        }
    }

    #[test]
    fn marglog_penalty_vanishes_at_target() {
        let spec = LossSpec {
            gamma_pos: 0.7,
            gamma_neg: -0.4,
            ..LossSpec::of_kind(LossKind::MargLog)
        };
        let f = 0.7;
        let expect = log_loss(f);
        assert!((spec.eval_loss(f, 1.0).unwrap() - expect).abs() < 1e-15);
        let f = -0.4;
        let expect = log_loss(-1.0 * f);
        assert!((spec.eval_loss(f, -1.0).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn per_class_damp_reduces_to_temperature_form() {
        // with T_y = 1/u* the outer factor cancels the root and both
        // forms evaluate m·(1−σ(u*·m))
        let r = damp_root();
        let per_class = LossSpec {
            t_pos: 1.0 / r,
            t_neg: 1.0 / r,
            damp_form: DampForm::PerClass,
            ..LossSpec::of_kind(LossKind::SigmaDamp)
        };
        let temp = LossSpec {
            t_pos: 1.0 / r,
            t_neg: 1.0 / r,
            damp_form: DampForm::Temperature,
            ..LossSpec::of_kind(LossKind::SigmaDamp)
        };
        for f in [-2.0, -0.5, 0.3, 1.0, 4.0] {
            let a = per_class.eval_loss(f, 1.0).unwrap();
            let b = temp.eval_loss(f, 1.0).unwrap();
            assert!((a - b).abs() < 1e-12, "f {f}: {a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_spec_and_inputs() {
        let mut spec = LossSpec::of_kind(LossKind::SigmaDamp);
        spec.t_pos = 0.0;
        assert!(spec.eval_loss(0.0, 1.0).is_err());
        let mut spec = LossSpec::of_kind(LossKind::MargLog);
        spec.lambda = -0.1;
        assert!(spec.eval_loss(0.0, 1.0).is_err());
        let spec = LossSpec::of_kind(LossKind::Log);
        assert!(spec.eval_loss(f64::NAN, 1.0).is_err());
        assert!(spec.eval_loss(f64::INFINITY, 1.0).is_err());
        assert!(spec.eval_loss(0.0, 0.0).is_err());
        assert!(spec.grad_output(0.0, 2.0).is_err());
    }

    #[test]
    fn spec_json_keys_match_config_schema() {
        let spec: LossSpec = serde_json::from_str(
            r#"{"kind":"SigmaStitch","T_pos":2.0,"T_neg":3.0,"u":1.5,
                "lambda":0.2,"gamma_pos":0.1,"gamma_neg":-0.1,
                "damp_form":"per_class"}"#,
        )
        .unwrap();
        assert_eq!(spec.kind, LossKind::SigmaStitch);
        assert_eq!(spec.t_pos, 2.0);
        assert_eq!(spec.damp_form, DampForm::PerClass);
        assert!(!spec.single_class());
        // unknown keys are config errors, not silent
        assert!(serde_json::from_str::<LossSpec>(r#"{"kind":"Log","temp":1}"#).is_err());
        // defaults fill everything else
        let spec: LossSpec = serde_json::from_str(r#"{"kind":"MargLog"}"#).unwrap();
        assert_eq!(spec.lambda, 0.1);
        assert_eq!(spec.u, 1.0);
        assert!(spec.single_class());
    }

    proptest! {
        #[test]
        fn losses_nonnegative_and_finite(f in -50.0f64..50.0, y_pos in any::<bool>()) {
            let y = if y_pos { 1.0 } else { -1.0 };
            for kind in ALL_KINDS {
                let v = LossSpec::of_kind(kind).eval_loss(f, y).unwrap();
                prop_assert!(v.is_finite() && v >= 0.0, "{kind:?} at {f}: {v}");
            }
        }

        #[test]
        fn single_class_symmetry(f in -30.0f64..30.0) {
            for kind in ALL_KINDS {
                let spec = LossSpec::of_kind(kind);
                let a = spec.eval_loss(f, 1.0).unwrap();
                let b = spec.eval_loss(-f, -1.0).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{kind:?}");
                let ga = spec.grad_output(f, 1.0).unwrap();
                let gb = spec.grad_output(-f, -1.0).unwrap();
                prop_assert!((ga + gb).abs() <= 1e-12 * (1.0 + ga.abs()), "{kind:?}");
            }
        }

        #[test]
        fn log_loss_strictly_decreasing(m in -20.0f64..20.0, step in 0.01f64..2.0) {
            let spec = LossSpec::of_kind(LossKind::Log);
            let a = spec.eval_loss(m, 1.0).unwrap();
            let b = spec.eval_loss(m + step, 1.0).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn capped_losses_rise_past_their_threshold(step in 0.05f64..3.0) {
            // beyond the peak/threshold, more margin means more loss
            let damp = LossSpec::of_kind(LossKind::SigmaDamp);
            let m_star = damp_peak(1.0).unwrap().0;
            prop_assert!(
                damp.eval_loss(m_star + step, 1.0).unwrap()
                    > damp.eval_loss(m_star, 1.0).unwrap()
            );
            let stitch = LossSpec::of_kind(LossKind::SigmaStitch);
            prop_assert!(
                stitch.eval_loss(1.0 + step, 1.0).unwrap()
                    > stitch.eval_loss(1.0, 1.0).unwrap()
            );
        }
    }
}
