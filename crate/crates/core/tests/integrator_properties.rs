use std::f64::consts::PI;
use std::sync::Arc;

use erem::fem::{BilinearFormSpec, BoundaryCondition, CoefficientField, DiscreteOperators, MassMode};
use erem::integrator::{
    erem_integrate, erem_step, exp_euler_step, jacobian_action, remainder_gn, DenseSemilinear, NemytskiiMode,
    NonlinearTerm, Scheme, SemiDiscrete, SemilinearSystem, StepperConfig,
};
use erem::matfunc::{dense_expm, dense_phi1, krylov_expmv, KrylovParams, LinearOperator};
use erem::mesh::build_interval_mesh;
use erem::problems::problem_semilinear_1d;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square() -> NonlinearTerm {
    NonlinearTerm::new(Arc::new(|u| u * u), Arc::new(|u| 2.0 * u), Arc::new(|_| 2.0), f64::INFINITY)
}

fn scalar(nonlin: NonlinearTerm, a: f64) -> DenseSemilinear {
    DenseSemilinear {
        a: DMatrix::from_element(1, 1, a),
        nonlin,
    }
}

fn ops_1d(n: usize, q: f64, b: f64, bc: BoundaryCondition, c0: f64) -> Arc<DiscreteOperators> {
    let mesh = Arc::new(build_interval_mesh(0.0, 1.0, n).unwrap());
    let spec = BilinearFormSpec::new(CoefficientField::isotropic(q, [b, 0.0]), bc, c0);
    Arc::new(DiscreteOperators::assemble_unchecked(mesh, &spec).unwrap())
}

fn diff_norm(ops: &DiscreteOperators, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    ops.l2_norm(&d)
}

fn dense_of(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = op.apply_vec(&e).unwrap();
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

#[test]
fn one_step_error_is_third_order() {
    // u' = u², u(0) = 1 has u(t) = 1 / (1 - t)
    let sys = scalar(square(), 0.0);
    let p = KrylovParams::default();
    let dts = [0.08, 0.04, 0.02, 0.01];
    let local = |step: &dyn Fn(f64) -> f64| -> Vec<f64> { dts.iter().map(|&dt| (step(dt) - 1.0 / (1.0 - dt)).abs()).collect() };
    let erem = local(&|dt| erem_step(&sys, &[1.0], dt, &p).unwrap()[0]);
    let euler = local(&|dt| exp_euler_step(&sys, &[1.0], dt, &p).unwrap()[0]);
    for w in erem.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((rate - 3.0).abs() < 0.15, "{erem:?}");
    }
    for w in euler.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((rate - 2.0).abs() < 0.15, "{euler:?}");
    }
}

#[test]
fn scalar_hand_values() {
    let sys = scalar(square(), 0.0);
    let p = KrylovParams::default();
    let u1 = erem_step(&sys, &[1.0], 0.1, &p).unwrap()[0];
    assert!((u1 - (0.2f64.exp() + 1.0) / 2.0).abs() < 1e-12);
    assert!((u1 - 1.110_701_379_0).abs() < 1e-10);
    assert!((exp_euler_step(&sys, &[1.0], 0.1, &p).unwrap()[0] - 1.1).abs() < 1e-14);
}

#[test]
fn constant_forcing_matches_variation_of_constants() {
    let ops = ops_1d(12, 0.5, 0.4, BoundaryCondition::Dirichlet, 0.0);
    let k = 0.7;
    let sys = SemilinearSystem::new(ops.clone(), NonlinearTerm::constant(k), MassMode::Lumped);
    let a = dense_of(&*sys.linear());
    let u0 = ops.interpolate(&|x| (PI * x[0]).sin());
    let dt = 0.05;
    let step = erem_step(&sys, &u0, dt, &KrylovParams::default()).unwrap();
    let e = dense_expm(&(&a * dt)).unwrap();
    let phi = dense_phi1(&(&a * dt)).unwrap();
    let oracle = &e * DVector::from_column_slice(&u0) + (&phi * DVector::from_element(ops.n(), k)) * dt;
    let err = diff_norm(&ops, &step, oracle.as_slice()) / ops.l2_norm(oracle.as_slice());
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn linear_reaction_is_integrated_exactly() {
    let ops = ops_1d(32, 1.0, 0.0, BoundaryCondition::Dirichlet, 0.0);
    let c = -0.8;
    let p = KrylovParams::default();
    let sys = SemilinearSystem::new(ops.clone(), NonlinearTerm::linear(c), MassMode::Lumped);
    let u0 = ops.l2_project(&|x| (PI * x[0]).sin()).unwrap();
    let t = 0.1;
    let k = jacobian_action(&sys, &u0).unwrap();
    let oracle = krylov_expmv(&k, t, &u0, &KrylovParams { tol: 1e-12, ..p }).unwrap();
    for n in [1usize, 10, 100] {
        let cfg = StepperConfig::uniform(t, n, p, Scheme::Erem).unwrap();
        let u = erem_integrate(&sys, &u0, &cfg, None).unwrap();
        let rel = diff_norm(&ops, &u, &oracle) / ops.l2_norm(&oracle);
        assert!(rel <= 10.0 * n as f64 * p.tol, "N = {n}: {rel:e}");
    }
}

#[test]
fn zero_reaction_step_is_the_semigroup() {
    let ops = ops_1d(24, 0.3, 0.6, BoundaryCondition::Dirichlet, 0.0);
    let p = KrylovParams::default();
    let sys = SemilinearSystem::new(ops.clone(), NonlinearTerm::zero(), MassMode::Lumped);
    let u0 = ops.interpolate(&|x| x[0] * (1.0 - x[0]));
    let dt = 0.02;
    let a = erem_step(&sys, &u0, dt, &p).unwrap();
    let b = exp_euler_step(&sys, &u0, dt, &p).unwrap();
    let c = krylov_expmv(&*sys.linear(), dt, &u0, &p).unwrap();
    let scale = ops.l2_norm(&c);
    assert!(diff_norm(&ops, &a, &c) <= 10.0 * p.tol * scale);
    assert!(diff_norm(&ops, &b, &c) <= 10.0 * p.tol * scale);

    // independent of the number of steps
    let t = 0.1;
    let exact = krylov_expmv(&*sys.linear(), t, &u0, &p).unwrap();
    for n in [1usize, 7, 40] {
        let cfg = StepperConfig::uniform(t, n, p, Scheme::Erem).unwrap();
        let u = erem_integrate(&sys, &u0, &cfg, None).unwrap();
        assert!(diff_norm(&ops, &u, &exact) <= 10.0 * n as f64 * p.tol * ops.l2_norm(&exact));
    }
}

#[test]
fn garding_shift_does_not_change_the_trajectory() {
    let p = KrylovParams::default();
    let (q, b) = (0.1, 0.5);
    let c0 = b * b / (2.0 * q);
    let f = NonlinearTerm::rational();
    for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
        let plain = ops_1d(32, q, b, bc, 0.0);
        let shifted = ops_1d(32, q, b, bc, c0);
        let modes = [
            (MassMode::Lumped, NemytskiiMode::Nodal),
            (MassMode::Lumped, NemytskiiMode::Projected),
            (MassMode::Consistent, NemytskiiMode::Projected),
        ];
        for (mass, nem) in modes {
            let s0 = SemilinearSystem::new(plain.clone(), f.clone(), mass).with_nemytskii(nem);
            let s1 = SemilinearSystem::new(shifted.clone(), f.shifted(c0), mass).with_nemytskii(nem);
            let u0 = plain.l2_project(&|x| x[0] * (1.0 - x[0]) + 0.2).unwrap();
            let cfg = StepperConfig::uniform(1.0, 8, p, Scheme::Erem).unwrap();
            let a = erem_integrate(&s0, &u0, &cfg, None).unwrap();
            let c = erem_integrate(&s1, &u0, &cfg, None).unwrap();
            let rel = diff_norm(&plain, &a, &c) / plain.l2_norm(&a);
            assert!(rel <= 10.0 * 8.0 * p.tol, "{bc:?} {mass:?} {nem:?}: {rel:e}");
        }
    }
}

#[test]
fn neumann_heat_conserves_mass() {
    let p = KrylovParams::default();
    let ops = ops_1d(40, 1.0, 0.0, BoundaryCondition::Neumann, 0.0);
    let u0 = ops.l2_project(&|x| (PI * x[0]).cos() + 1.0 + x[0]).unwrap();
    let m0 = ops.integral(&u0);
    for mode in [MassMode::Lumped, MassMode::Consistent] {
        let sys = SemilinearSystem::new(ops.clone(), NonlinearTerm::zero(), mode);
        let mut masses = Vec::new();
        let cfg = StepperConfig::uniform(0.1, 10, p, Scheme::Erem).unwrap();
        let mut obs = |_: usize, _: f64, u: &[f64]| masses.push(ops.integral(u));
        let lumped_mass = |u: &[f64]| -> f64 { u.iter().zip(ops.lumped_mass()).map(|(a, b)| a * b).sum() };
        let u = erem_integrate(&sys, &u0, &cfg, Some(&mut obs)).unwrap();
        assert_eq!(masses.len(), 10);
        for m in masses {
            assert!((m - m0).abs() <= 10.0 * p.tol * m0.abs(), "{mode:?}: {m} vs {m0}");
        }
        assert!((lumped_mass(&u) - m0).abs() <= 10.0 * p.tol * m0.abs());
    }
}

#[test]
fn solutions_stay_bounded_under_refinement() {
    let problem = problem_semilinear_1d();
    let p = KrylovParams::default();
    let mut constants = Vec::new();
    for n in [8usize, 16, 32, 64] {
        let ops = Arc::new(problem.operators(Arc::new(problem.mesh(n).unwrap())).unwrap());
        let sys = problem.system(ops.clone(), MassMode::Lumped);
        let u0 = problem.initial_value(&ops).unwrap();
        let mut sup: f64 = ops.l2_norm(&u0);
        let cfg = StepperConfig::uniform(problem.final_time, 16, p, Scheme::Erem).unwrap();
        let mut obs = |_: usize, _: f64, u: &[f64]| sup = sup.max(ops.l2_norm(u));
        erem_integrate(&sys, &u0, &cfg, Some(&mut obs)).unwrap();
        constants.push(sup / (1.0 + ops.l2_norm(&u0)));
    }
    let (lo, hi) = constants.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi.is_finite() && hi < 5.0, "{constants:?}");
    assert!(hi - lo < 0.05, "{constants:?}");
}

#[test]
fn halving_the_step_changes_the_state_at_second_order() {
    let problem = problem_semilinear_1d();
    let p = KrylovParams::default();
    let ops = Arc::new(problem.operators(Arc::new(problem.mesh(64).unwrap())).unwrap());
    let sys = problem.system(ops.clone(), MassMode::Lumped);
    let u0 = problem.initial_value(&ops).unwrap();
    let run = |n: usize| erem_integrate(&sys, &u0, &StepperConfig::uniform(1.0, n, p, Scheme::Erem).unwrap(), None).unwrap();
    let (a, b, c) = (run(8), run(16), run(32));
    let rate = (diff_norm(&ops, &a, &b) / diff_norm(&ops, &b, &c)).log2();
    assert!((rate - 2.0).abs() < 0.2, "{rate}");

    let one = erem_integrate(&sys, &u0, &StepperConfig::uniform(0.1, 1, p, Scheme::Erem).unwrap(), None).unwrap();
    assert_eq!(one, erem_step(&sys, &u0, 0.1, &p).unwrap());
}

#[test]
fn exp_euler_deviates_from_erem_at_second_order_for_linear_reaction() {
    let sys = scalar(NonlinearTerm::linear(1.5), -2.0);
    let p = KrylovParams::default();
    let gaps: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| (erem_step(&sys, &[1.0], dt, &p).unwrap()[0] - exp_euler_step(&sys, &[1.0], dt, &p).unwrap()[0]).abs())
        .collect();
    for w in gaps.windows(2) {
        assert!(((w[0] / w[1]).log2() - 2.0).abs() < 0.1, "{gaps:?}");
    }
}

#[test]
fn nodal_and_projected_nonlinearities_agree_to_second_order() {
    // Requires f(u) to be representable in the discrete space: with Dirichlet
    // conditions and f(0) != 0 the projection has an O(h^1/2) boundary layer.
    let cases = [
        (BoundaryCondition::Neumann, NonlinearTerm::rational()),
        (BoundaryCondition::Dirichlet, square()),
    ];
    for (bc, f) in cases {
        let mut gaps = Vec::new();
        for n in [16, 32, 64] {
            let ops = ops_1d(n, 1.0, 0.0, bc, 0.0);
            let u = ops.interpolate(&|x| (PI * x[0]).sin());
            let a = SemilinearSystem::new(ops.clone(), f.clone(), MassMode::Lumped);
            let b = a.clone().with_nemytskii(NemytskiiMode::Projected);
            gaps.push(diff_norm(&ops, &a.nonlinear(&u).unwrap(), &b.nonlinear(&u).unwrap()));
        }
        for w in gaps.windows(2) {
            assert!(((w[0] / w[1]).log2() - 2.0).abs() < 0.2, "{bc:?}: {gaps:?}");
        }
    }
    let ops = ops_1d(8, 1.0, 0.0, BoundaryCondition::Dirichlet, 0.0);
    let sys = SemilinearSystem::new(ops.clone(), NonlinearTerm::rational(), MassMode::Lumped);
    assert!(sys.nonlinear(&vec![0.0; ops.n()]).unwrap().iter().all(|&v| v == 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jacobian_matches_finite_differences(seed in 0u64..1000, projected in proptest::bool::ANY) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = ops_1d(20, 0.1, 0.5, BoundaryCondition::Dirichlet, 1.25);
        let mode = if projected { NemytskiiMode::Projected } else { NemytskiiMode::Nodal };
        let sys = SemilinearSystem::new(ops.clone(), NonlinearTerm::rational().shifted(1.25), MassMode::Lumped).with_nemytskii(mode);
        let u: Vec<f64> = (0..ops.n()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..ops.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jv = jacobian_action(&sys, &u).unwrap().jacobian().apply_vec(&v).unwrap();
        let mut errs = Vec::new();
        for eps in [1e-3, 1e-4] {
            let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
            let (fp, f0) = (sys.nonlinear(&up).unwrap(), sys.nonlinear(&u).unwrap());
            let fd: Vec<f64> = fp.iter().zip(&f0).map(|(a, b)| (a - b) / eps).collect();
            errs.push(diff_norm(&ops, &fd, &jv));
        }
        // first-order finite-difference error
        prop_assert!(errs[1] < 0.2 * errs[0] || errs[1] < 1e-8, "{errs:?}");
    }

    #[test]
    fn remainder_is_lipschitz(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = ops_1d(16, 0.1, 0.5, BoundaryCondition::Dirichlet, 1.25);
        let f = NonlinearTerm::rational().shifted(1.25);
        let bound = 2.0 * f.lipschitz_bound;
        let sys = SemilinearSystem::new(ops.clone(), f, MassMode::Lumped);
        let mut draw = || -> Vec<f64> { (0..ops.n()).map(|_| rng.gen_range(-3.0..3.0)).collect() };
        let (un, u, w) = (draw(), draw(), draw());
        let gu = remainder_gn(&sys, &un, &u).unwrap();
        let gw = remainder_gn(&sys, &un, &w).unwrap();
        prop_assert!(diff_norm(&ops, &gu, &gw) <= bound * diff_norm(&ops, &u, &w) * (1.0 + 1e-12));
    }

    #[test]
    fn linear_reaction_has_zero_remainder(c in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = ops_1d(10, 1.0, 0.0, BoundaryCondition::Dirichlet, 0.0);
        let sys = SemilinearSystem::new(ops.clone(), NonlinearTerm::linear(c), MassMode::Lumped);
        let un: Vec<f64> = (0..ops.n()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let u: Vec<f64> = (0..ops.n()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        prop_assert!(remainder_gn(&sys, &un, &u).unwrap().iter().all(|g| g.abs() < 1e-12));
    }
}
