mod common;

use adaptive_eigen::operators::{MassKind, ModelConfig};
use adaptive_eigen::oracle::orthogonal_error;
use adaptive_eigen::solvers::{
    accelerate_frozen, coarsening_tolerance, derive_parameters, minieig, minit, perturbed_block,
    perturbed_initial_guess, posteigen_rayleigh, step_tolerance, BlockExit, SpectralBounds,
};
use adaptive_eigen::{CostLedger, Error, SparseVector};
use common::{basin_start, Case};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn diagonal() -> Case {
    Case::new("diagonal(100)", ModelConfig::diagonal(100, 1.0, 1.0))
}

fn tridiag() -> Case {
    Case::new("tridiag(64)", ModelConfig::tridiag(64))
}

fn decay() -> Case {
    Case::new("decay(128)", ModelConfig::decay(128))
}

fn unit_eigenvector(case: &Case) -> SparseVector {
    let u = SparseVector::from_dense(&case.oracle.u);
    u.scale(1.0 / u.norm())
}

#[test]
fn equal_bounds_give_known_constants() {
    let b = SpectralBounds::new(1.0, 1.0, 1.0, 2.0).unwrap();
    let p = derive_parameters(&b, None).unwrap();
    assert!((p.theta - 0.5).abs() < 1e-15);
    assert!((p.beta - 1.0 / 3.0).abs() < 1e-15);
    assert!((p.xi - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn initial_accuracy_above_limit_is_rejected() {
    let case = tridiag();
    let limit = case.params.eps0;
    let err = derive_parameters(&case.instance.bounds, Some(2.0 * limit));
    assert!(matches!(err, Err(Error::InitialAccuracyTooCoarse { .. })));
    assert!(derive_parameters(&case.instance.bounds, Some(0.5 * limit)).is_ok());
}

#[test]
fn theta_is_below_inverse_perp_norm() {
    for case in [diagonal(), tridiag(), decay()] {
        assert!(case.params.theta <= 1.0 / case.oracle.mperp_inverse_norm * (1.0 + 1e-9), "{}", case.name);
    }
}

#[test]
fn exact_eigenvector_is_a_fixed_point() {
    let case = tridiag();
    let u = unit_eigenvector(&case);
    let states = minit(&case.instance, &u, 5).unwrap();
    for s in &states {
        assert!(orthogonal_error(&s.x, &case.oracle.u) < 1e-12);
        assert!((s.lambda - case.oracle.lambda).abs() < 1e-13);
    }
}

#[test]
fn exact_iteration_contracts_on_diagonal() {
    let case = diagonal();
    let x0 = SparseVector::from_pairs([(0, 1.0), (1, 0.1)]);
    let states = minit(&case.instance, &x0, 30).unwrap();
    let errs: Vec<f64> = states.iter().map(|s| orthogonal_error(&s.x, &case.oracle.u)).collect();
    for w in errs.windows(2) {
        assert!(w[1] <= case.params.xi * w[0], "{} -> {}", w[0], w[1]);
    }
    for s in &states {
        let excess = case.rayleigh_excess(&s.x);
        let e = orthogonal_error(&s.x, &case.oracle.u);
        assert!(excess <= case.params.k * e * e + 1e-15);
    }
}

#[test]
fn block_from_eigenvector_exits_on_roundoff_residual() {
    let case = tridiag();
    let u = unit_eigenvector(&case);
    let out = perturbed_block(&case.instance, &case.params, &u, case.params.eps0).unwrap();
    assert_eq!(out.exit, BlockExit::Residual);
    // residual is at roundoff, so the test fires once the step tolerance
    // alone is below the threshold
    let p = &case.params;
    let threshold = p.alpha * p.c1 * p.eps0 / p.m;
    let first = ((1.0 - p.xi) * p.eps0 / threshold).log2().ceil().max(0.0) as usize;
    assert!(out.steps.len() <= first + 2, "{} steps, expected about {}", out.steps.len(), first + 1);
    for s in &out.steps {
        assert!(s.residual_norm < 1e-12);
        assert!(orthogonal_error(&s.iterate, &case.oracle.u) < 1e-12);
    }
}

#[test]
fn block_tolerances_follow_schedule() {
    let case = decay();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0 = basin_start(&case.oracle.u, case.params.eps0, &mut rng);
    let out = perturbed_block(&case.instance, &case.params, &x0, case.params.eps0).unwrap();
    for s in &out.steps {
        let expected = (1.0 - case.params.xi) * case.params.eps0 * (-(s.step as f64)).exp2();
        assert!((s.eta - expected).abs() <= 1e-15 * expected);
        assert_eq!(s.eta, step_tolerance(case.params.xi, case.params.eps0, s.step));
    }
    assert_eq!(out.exit, BlockExit::Residual);
    let e = orthogonal_error(&out.v, &case.oracle.u);
    assert!(e <= case.params.c1 * case.params.eps0, "{e}");
}

#[test]
fn minieig_reaches_target_on_models() {
    for (case, eps) in [(diagonal(), 1e-6), (decay(), 1e-5)] {
        let x0 = perturbed_initial_guess(&unit_eigenvector(&case), case.params.eps0, case.n(), 5).unwrap();
        assert!(orthogonal_error(&x0, &case.oracle.u) <= case.params.eps0 * (1.0 + 1e-12));
        let out = minieig(&case.instance, &case.params, &x0, eps).unwrap();
        assert!(orthogonal_error(&out.u, &case.oracle.u) <= eps, "{}", case.name);
        assert!((out.lambda - case.oracle.lambda).abs() <= 2.0 * eps);
        // accuracy halves per block
        for w in out.blocks.windows(2) {
            assert_eq!(w[1].eps_bar, w[0].eps_bar / 2.0);
        }
        for b in &out.blocks {
            assert_eq!(b.coarsening_tolerance, coarsening_tolerance(case.params.c1, b.eps_bar));
            assert!(b.support_after <= b.support_before);
        }
    }
}

#[test]
fn coarse_target_takes_one_block() {
    let case = decay();
    let x0 = perturbed_initial_guess(&unit_eigenvector(&case), case.params.eps0, case.n(), 3).unwrap();
    let out = minieig(&case.instance, &case.params, &x0, 2.0 * case.params.eps0).unwrap();
    assert_eq!(out.blocks.len(), 1);
}

#[test]
fn minieig_with_mass_operator() {
    let case = Case::new(
        "decay(96) with mass",
        ModelConfig {
            mass: MassKind::Decay,
            ..ModelConfig::decay(96)
        },
    );
    let x0 = perturbed_initial_guess(&unit_eigenvector(&case), case.params.eps0, case.n(), 9).unwrap();
    let out = minieig(&case.instance, &case.params, &x0, 1e-4).unwrap();
    assert!(orthogonal_error(&out.u, &case.oracle.u) <= 1e-4);
}

#[test]
fn posteigen_is_quadratically_accurate() {
    let case = decay();
    let u = unit_eigenvector(&case);
    for eps in [1e-2, 1e-3] {
        let l = posteigen_rayleigh(&case.instance, &u, eps, &mut CostLedger::new()).unwrap();
        assert!((l - case.oracle.lambda).abs() <= eps * eps);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 1e-3;
    let x = basin_start(&case.oracle.u, eps, &mut rng);
    let l = posteigen_rayleigh(&case.instance, &x, eps, &mut CostLedger::new()).unwrap();
    assert!((l - case.oracle.lambda).abs() <= (1.0 + case.params.k) * eps * eps);
}

#[test]
fn frozen_shift_at_eigenvalue_contracts() {
    let case = tridiag();
    let eps = 1e-2;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x0 = basin_start(&case.oracle.u, eps, &mut rng);
    for steps in [1, 5, 20] {
        let run = accelerate_frozen(&case.instance, &case.params, &x0, case.oracle.lambda, eps, steps).unwrap();
        let e = orthogonal_error(&run.x, &case.oracle.u);
        assert!(e <= case.params.beta.powi(steps as i32) * eps + eps * eps, "steps {steps}: {e}");
        assert!(run.norms.iter().all(|&n| (0.5..=2.0).contains(&n)));
    }
}

#[test]
fn frozen_shift_from_solver_output() {
    let case = tridiag();
    let eps = 1e-2;
    let x0 = perturbed_initial_guess(&unit_eigenvector(&case), case.params.eps0, case.n(), 1).unwrap();
    let out = minieig(&case.instance, &case.params, &x0, eps).unwrap();
    let mut ledger = CostLedger::new();
    let lambda_bar = posteigen_rayleigh(&case.instance, &out.u, eps, &mut ledger).unwrap();
    let run = accelerate_frozen(&case.instance, &case.params, &out.u, lambda_bar, eps, 20).unwrap();
    assert!(orthogonal_error(&run.x, &case.oracle.u) <= 10.0 * eps * eps);
    assert!(run.norms.iter().all(|&n| (0.5..=2.0).contains(&n)));
}

#[test]
fn frozen_shift_rejects_bad_inputs() {
    let case = tridiag();
    let u = unit_eigenvector(&case);
    assert!(matches!(
        accelerate_frozen(&case.instance, &case.params, &u, 0.0, 1e-2, 3),
        Err(Error::NonPositiveRayleigh(_))
    ));
    assert!(accelerate_frozen(&case.instance, &case.params, &u, 1.0, 0.0, 3).is_err());
}

#[test]
fn initial_guess_is_deterministic_and_hits_target() {
    let case = decay();
    let u = unit_eigenvector(&case);
    for eps0 in [1e-1, 1e-3, case.params.eps0] {
        let x = perturbed_initial_guess(&u, eps0, case.n(), 17).unwrap();
        let e = orthogonal_error(&x, &case.oracle.u);
        assert!(e <= eps0 * (1.0 + 1e-12) && e >= 0.99 * eps0, "{eps0}: {e}");
        assert_eq!(x, perturbed_initial_guess(&u, eps0, case.n(), 17).unwrap());
    }
    assert!(perturbed_initial_guess(&u, 1.5, case.n(), 1).is_err());
}
