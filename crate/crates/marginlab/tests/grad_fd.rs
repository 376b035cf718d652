//! Finite-difference certification of every analytic derivative: the
//! per-sample loss derivatives and the full model/loss backward passes,
//! for both architectures and all loss kinds.

mod common;

use common::{bisect, central_diff, OracleRng};
use marginlab::dgp::{sample_dataset, DgpConfig};
use marginlab::losses::{damp_root, DampForm, LossKind, LossSpec};
use marginlab::model::{MlpParams, ModelParams};

const ALL_KINDS: [LossKind; 5] = [
    LossKind::Log,
    LossKind::SigmaDamp,
    LossKind::SigmaStitch,
    LossKind::MargLog,
    LossKind::SpectralDecoupling,
];

fn spec_variants() -> Vec<LossSpec> {
    let mut specs = Vec::new();
    for kind in ALL_KINDS {
        specs.push(LossSpec::of_kind(kind));
        // an asymmetric two-class variant exercises the per-label branches
        specs.push(LossSpec {
            t_pos: 1.3,
            t_neg: 0.7,
            u: 0.9,
            lambda: 0.25,
            gamma_pos: 0.5,
            gamma_neg: -0.2,
            ..LossSpec::of_kind(kind)
        });
    }
    specs.push(LossSpec {
        damp_form: DampForm::PerClass,
        t_pos: 2.0,
        t_neg: 0.5,
        ..LossSpec::of_kind(LossKind::SigmaDamp)
    });
    specs
}

/// d/df of every loss at 100 random outputs per variant, against a
/// central difference of the loss value itself.
#[test]
fn loss_output_derivative_matches_central_difference() {
    let mut rng = OracleRng::new(41);
    for spec in spec_variants() {
        for trial in 0..100 {
            let f = 4.0 * (2.0 * rng.uniform() - 1.0);
            let y = rng.sign();
            // keep clear of the stitch reflection kink where the
            // derivative genuinely jumps
            if matches!(spec.kind, LossKind::SigmaStitch) {
                let u = if spec.single_class() { spec.u } else { 1.0 };
                if (y * f - u).abs() < 1e-3 {
                    continue;
                }
            }
            let got = spec.grad_output(f, y).unwrap();
            let want = central_diff(|v| spec.eval_loss(v, y).unwrap(), f, 1e-5);
            assert!(
                (got - want).abs() <= 1e-6 * (1.0 + want.abs()),
                "{:?} trial {trial}: f {f} y {y}: {got} vs {want}",
                spec.kind
            );
        }
    }
}

/// The damp transform peaks where u·σ(u) = 1; the bisection root used by
/// the per-class form agrees with an independently bracketed root.
#[test]
fn damp_root_agrees_with_oracle_bisection() {
    let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
    let want = bisect(1.0, 2.0, 1e-12, |u| u * sigma(u) - 1.0);
    assert!((damp_root() - want).abs() < 1e-9, "{} vs {want}", damp_root());
    // stationary point of the transform itself at T = 1
    let a = |m: f64| m * (1.0 - sigma(m));
    let g = central_diff(a, damp_root(), 1e-6);
    assert!(g.abs() < 1e-9, "transform slope at peak: {g}");
}

fn fd_check_model(mut params: ModelParams, spec: &LossSpec, seed: u64, points: usize) {
    let ds = sample_dataset(&DgpConfig {
        rho: 0.7,
        b: 3.0,
        d: params.input_dim(),
        n: 12,
        seed,
    })
    .unwrap();
    let mut rng = OracleRng::new(seed ^ 0x5eed);
    let flat0 = params.to_flat();
    let p = flat0.len();
    for point in 0..points {
        // random parameter point, moderate scale
        let flat: Vec<f64> = flat0
            .iter()
            .map(|_| 0.6 * rng.normal())
            .collect();
        params.set_flat(&flat).unwrap();
        let (_, grad) = params.mean_loss_and_grad(&ds, spec).unwrap();
        // probe a handful of random coordinates per point
        for _ in 0..6 {
            let j = (rng.next_u64() % p as u64) as usize;
            let want = central_diff(
                |v| {
                    let mut flat_j = flat.clone();
                    flat_j[j] = v;
                    let mut probe = params.clone();
                    probe.set_flat(&flat_j).unwrap();
                    let (loss, _) = probe.mean_loss_and_grad(&ds, spec).unwrap();
                    loss
                },
                flat[j],
                1e-5,
            );
            let got = grad[j];
            assert!(
                (got - want).abs() <= 1e-5 * (1.0 + want.abs()),
                "{:?} point {point} coord {j}: {got} vs {want}",
                spec.kind
            );
        }
    }
}

#[test]
fn linear_gradient_matches_central_difference_for_every_loss() {
    for (i, spec) in spec_variants().into_iter().enumerate() {
        let params = ModelParams::Linear(marginlab::model::LinearParams::zeros(8));
        fd_check_model(params, &spec, 100 + i as u64, 10);
    }
}

#[test]
fn mlp_gradient_matches_central_difference_for_every_loss() {
    for (i, spec) in spec_variants().into_iter().enumerate() {
        let params = ModelParams::Mlp(MlpParams::init(6, 5, 77));
        fd_check_model(params, &spec, 200 + i as u64, 10);
    }
}

/// The quadratic penalty of the decoupling loss has a closed-form
/// stationary point in one dimension: σ(-m) = 2λm for a single sample
/// with x = e_1, y = +1. The analytic gradient must vanish there.
#[test]
fn decoupling_stationary_point_from_independent_root() {
    let lambda = 0.1;
    let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
    let m_star = bisect(0.0, 10.0, 1e-12, |m| 2.0 * lambda * m - sigma(-m));
    let spec = LossSpec {
        lambda,
        ..LossSpec::of_kind(LossKind::SpectralDecoupling)
    };
    let g = spec.grad_output(m_star, 1.0).unwrap();
    assert!(g.abs() < 1e-10, "gradient at stationary point: {g}");
}
