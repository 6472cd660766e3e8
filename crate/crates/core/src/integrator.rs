//! Exponential Rosenbrock-Euler time stepping for `u' = A_h u + P_h F(u)`.
//!
//! Each step linearizes around the current state, `K_n = A_h + J_n` with
//! `J_n = D(P_h F)(u_n)`, and advances with the single-`phi_1` update
//!
//! ```text
//! u_{n+1} = u_n + dt phi_1(dt K_n) [K_n u_n + G_n(u_n)],   G_n(u) = P_h F(u) - J_n u.
//! ```
//!
//! The exponential-Euler baseline uses `A_h` alone and no Jacobian.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::fem::{DiscreteOperators, MassMode};
use crate::matfunc::{krylov_phi1v, DiagonalOperator, KrylovParams, LinearOperator};
use crate::sparse::{conjugate_gradient, CsrMatrix};
use crate::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearKind {
    Zero,
    /// `f(u) = c u`
    Linear(f64),
    /// `f(u) = k`
    Constant(f64),
    General,
}

/// Pointwise reaction term `f` with its first two derivatives and a global
/// Lipschitz bound.
#[derive(Clone)]
pub struct NonlinearTerm {
    pub f: RealFn,
    pub df: RealFn,
    pub d2f: RealFn,
    pub lipschitz_bound: f64,
    pub kind: NonlinearKind,
}

impl std::fmt::Debug for NonlinearTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearTerm")
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl NonlinearTerm {
    pub fn new(f: RealFn, df: RealFn, d2f: RealFn, lipschitz_bound: f64) -> Self {
        Self {
            f,
            df,
            d2f,
            lipschitz_bound,
            kind: NonlinearKind::General,
        }
    }

    pub fn zero() -> Self {
        Self {
            f: Arc::new(|_| 0.0),
            df: Arc::new(|_| 0.0),
            d2f: Arc::new(|_| 0.0),
            lipschitz_bound: 0.0,
            kind: NonlinearKind::Zero,
        }
    }

    pub fn linear(c: f64) -> Self {
        Self {
            f: Arc::new(move |u| c * u),
            df: Arc::new(move |_| c),
            d2f: Arc::new(|_| 0.0),
            lipschitz_bound: c.abs(),
            kind: NonlinearKind::Linear(c),
        }
    }

    pub fn constant(k: f64) -> Self {
        Self {
            f: Arc::new(move |_| k),
            df: Arc::new(|_| 0.0),
            d2f: Arc::new(|_| 0.0),
            lipschitz_bound: 0.0,
            kind: NonlinearKind::Constant(k),
        }
    }

    /// `f(u) = (1 - u) / (1 + u²)`
    pub fn rational() -> Self {
        let df = |u: f64| (u * u - 2.0 * u - 1.0) / (1.0 + u * u).powi(2);
        // sup |f'| over R is attained at u = 2 - sqrt(3)
        let lipschitz = df(2.0 - 3f64.sqrt()).abs();
        Self::new(
            Arc::new(|u| (1.0 - u) / (1.0 + u * u)),
            Arc::new(df),
            Arc::new(|u| {
                let d = 1.0 + u * u;
                (2.0 * u - 2.0) / d.powi(2) - 4.0 * u * (u * u - 2.0 * u - 1.0) / d.powi(3)
            }),
            lipschitz,
        )
    }

    /// `f + c₀ u`, the nonlinearity that compensates a Gårding shift `c₀`.
    pub fn shifted(&self, c0: f64) -> Self {
        if c0 == 0.0 {
            return self.clone();
        }
        let kind = match self.kind {
            NonlinearKind::Zero => NonlinearKind::Linear(c0),
            NonlinearKind::Linear(c) => NonlinearKind::Linear(c + c0),
            _ => NonlinearKind::General,
        };
        let (f, df, d2f) = (self.f.clone(), self.df.clone(), self.d2f.clone());
        Self {
            f: Arc::new(move |u| f(u) + c0 * u),
            df: Arc::new(move |u| df(u) + c0),
            d2f,
            lipschitz_bound: self.lipschitz_bound + c0.abs(),
            kind,
        }
    }

    /// True when the remainder `G_n` vanishes identically.
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, NonlinearKind::Zero | NonlinearKind::Linear(_))
    }

    /// Sampled checks of the Lipschitz bound and of both derivatives against
    /// central differences on `[lo, hi]`.
    pub fn check(&self, lo: f64, hi: f64, samples: usize) -> Result<()> {
        let pts: Vec<f64> = (0..samples)
            .map(|i| lo + (hi - lo) * i as f64 / (samples.max(2) - 1) as f64)
            .collect();
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let slope = ((self.f)(a) - (self.f)(b)).abs() / (a - b).abs();
            if slope > self.lipschitz_bound * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "Lipschitz bound {} violated on [{a}, {b}] (slope {slope})",
                    self.lipschitz_bound
                )));
            }
        }
        let eps = 1e-5;
        for &u in &pts {
            let fd1 = ((self.f)(u + eps) - (self.f)(u - eps)) / (2.0 * eps);
            let fd2 = ((self.df)(u + eps) - (self.df)(u - eps)) / (2.0 * eps);
            let (d1, d2) = ((self.df)(u), (self.d2f)(u));
            if (fd1 - d1).abs() > 1e-6 * d1.abs().max(1.0) || (fd2 - d2).abs() > 1e-6 * d2.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "derivative mismatch at u = {u}: f' {d1} vs {fd1}, f'' {d2} vs {fd2}"
                )));
            }
        }
        Ok(())
    }
}

/// How `P_h F(u_h)` is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NemytskiiMode {
    /// `f` applied to nodal values (the lumped-mass projection).
    #[default]
    Nodal,
    /// L2 projection of `x -> f(u_h(x))` by element quadrature.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Erem,
    ExpEuler,
}

/// A semi-discrete system `u' = L u + N(u)` as seen by the exponential integrators.
pub trait SemiDiscrete: Sync {
    fn dim(&self) -> usize;

    /// The linear part `A_h`.
    fn linear(&self) -> Box<dyn LinearOperator + '_>;

    /// The discrete nonlinearity `P_h F(u)`.
    fn nonlinear(&self, u: &[f64]) -> Result<Vec<f64>>;

    /// The Fréchet derivative `J_n = D(P_h F)(u_n)`.
    fn jacobian(&self, u_n: &[f64]) -> Result<Box<dyn LinearOperator + '_>>;
}

/// Finite-element system `u' = A_h u + P_h F(u)`.
#[derive(Debug, Clone)]
pub struct SemilinearSystem {
    pub ops: Arc<DiscreteOperators>,
    /// Already includes any `+c₀ u` Gårding compensation.
    pub nonlin: NonlinearTerm,
    pub mass_mode: MassMode,
    pub nemytskii: NemytskiiMode,
}

impl SemilinearSystem {
    pub fn new(ops: Arc<DiscreteOperators>, nonlin: NonlinearTerm, mass_mode: MassMode) -> Self {
        Self {
            ops,
            nonlin,
            mass_mode,
            nemytskii: NemytskiiMode::default(),
        }
    }

    pub fn with_nemytskii(mut self, mode: NemytskiiMode) -> Self {
        self.nemytskii = mode;
        self
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.ops.n() {
            return Err(Error::DimensionMismatch {
                expected: self.ops.n(),
                found: u.len(),
            });
        }
        Ok(())
    }
}

impl SemiDiscrete for SemilinearSystem {
    fn dim(&self) -> usize {
        self.ops.n()
    }

    fn linear(&self) -> Box<dyn LinearOperator + '_> {
        Box::new(self.ops.generator(self.mass_mode))
    }

    fn nonlinear(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let out = match self.nemytskii {
            NemytskiiMode::Nodal => u.iter().map(|&x| (self.nonlin.f)(x)).collect(),
            NemytskiiMode::Projected => self.ops.project_composition(u, &*self.nonlin.f)?,
        };
        Ok(out)
    }

    fn jacobian(&self, u_n: &[f64]) -> Result<Box<dyn LinearOperator + '_>> {
        self.check_len(u_n)?;
        let diag: Vec<f64> = u_n.iter().map(|&x| (self.nonlin.df)(x)).collect();
        Ok(match self.nemytskii {
            NemytskiiMode::Nodal => Box::new(DiagonalOperator(diag)),
            NemytskiiMode::Projected => {
                let bound = DiagonalOperator(diag).norm_estimate();
                Box::new(ProjectedJacobian {
                    ops: &self.ops,
                    weighted: self.ops.weighted_mass(u_n, &*self.nonlin.df)?,
                    bound,
                })
            }
        })
    }
}

/// `v -> M⁻¹ W v` with `W_ij = ∫ f'(u_n) φ_i φ_j`.
struct ProjectedJacobian<'a> {
    ops: &'a DiscreteOperators,
    weighted: CsrMatrix,
    bound: f64,
}

impl LinearOperator for ProjectedJacobian<'_> {
    fn dim(&self) -> usize {
        self.ops.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let wx = self.weighted.mul_vec(x);
        let sol = conjugate_gradient(self.ops.mass(), &wx, self.ops.cg_options())?;
        y.copy_from_slice(&sol);
        Ok(())
    }

    fn norm_estimate(&self) -> f64 {
        self.bound
    }
}

/// Dense system `u' = A u + f(u)` with `f` acting componentwise.
#[derive(Debug, Clone)]
pub struct DenseSemilinear {
    pub a: DMatrix<f64>,
    pub nonlin: NonlinearTerm,
}

impl SemiDiscrete for DenseSemilinear {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn linear(&self) -> Box<dyn LinearOperator + '_> {
        Box::new(&self.a)
    }

    fn nonlinear(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(u.iter().map(|&x| (self.nonlin.f)(x)).collect())
    }

    fn jacobian(&self, u_n: &[f64]) -> Result<Box<dyn LinearOperator + '_>> {
        Ok(Box::new(DiagonalOperator(u_n.iter().map(|&x| (self.nonlin.df)(x)).collect())))
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        (**self).apply(x, y)
    }

    fn norm_estimate(&self) -> f64 {
        (**self).norm_estimate()
    }
}

/// `K_n = A_h + J_n`, frozen at the state it was built from.
pub struct RosenbrockOperator<'a> {
    linear: Box<dyn LinearOperator + 'a>,
    jacobian: Box<dyn LinearOperator + 'a>,
}

impl RosenbrockOperator<'_> {
    pub fn jacobian(&self) -> &dyn LinearOperator {
        &*self.jacobian
    }

    pub fn linear(&self) -> &dyn LinearOperator {
        &*self.linear
    }
}

impl LinearOperator for RosenbrockOperator<'_> {
    fn dim(&self) -> usize {
        self.linear.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.linear.apply(x, y)?;
        let jx = self.jacobian.apply_vec(x)?;
        y.iter_mut().zip(&jx).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn norm_estimate(&self) -> f64 {
        self.linear.norm_estimate() + self.jacobian.norm_estimate()
    }
}

pub fn nemytskii_apply<S: SemiDiscrete + ?Sized>(sys: &S, u: &[f64]) -> Result<Vec<f64>> {
    let out = sys.nonlinear(u)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { step: 0, t: f64::NAN });
    }
    Ok(out)
}

/// Builds `K_n = A_h + J_n` at `u_n`.
pub fn jacobian_action<'a, S: SemiDiscrete + ?Sized>(sys: &'a S, u_n: &[f64]) -> Result<RosenbrockOperator<'a>> {
    Ok(RosenbrockOperator {
        linear: sys.linear(),
        jacobian: sys.jacobian(u_n)?,
    })
}

/// `G_n(u) = P_h F(u) - J_n u` with `J_n` taken from `k`.
pub fn remainder_with<S: SemiDiscrete + ?Sized>(sys: &S, k: &RosenbrockOperator<'_>, u: &[f64]) -> Result<Vec<f64>> {
    let mut g = nemytskii_apply(sys, u)?;
    let ju = k.jacobian.apply_vec(u)?;
    g.iter_mut().zip(&ju).for_each(|(a, b)| *a -= b);
    Ok(g)
}

/// `G_n(u) = P_h F(u) - J_n u` with `J_n` frozen at `u_n`.
pub fn remainder_gn<S: SemiDiscrete + ?Sized>(sys: &S, u_n: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let k = jacobian_action(sys, u_n)?;
    remainder_with(sys, &k, u)
}

fn check_step_inputs(dim: usize, u: &[f64], dt: f64) -> Result<()> {
    if u.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: u.len(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// One exponential Rosenbrock-Euler step.
pub fn erem_step<S: SemiDiscrete + ?Sized>(sys: &S, u_n: &[f64], dt: f64, krylov: &KrylovParams) -> Result<Vec<f64>> {
    check_step_inputs(sys.dim(), u_n, dt)?;
    let k = jacobian_action(sys, u_n)?;
    let mut r = k.apply_vec(u_n)?;
    let g = remainder_with(sys, &k, u_n)?;
    r.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    let w = krylov_phi1v(&k, dt, &r, krylov)?;
    Ok(u_n.iter().zip(&w).map(|(u, w)| u + dt * w).collect())
}

/// One exponential-Euler step `u_n + dt phi_1(dt A_h) [A_h u_n + P_h F(u_n)]`.
pub fn exp_euler_step<S: SemiDiscrete + ?Sized>(
    sys: &S,
    u_n: &[f64],
    dt: f64,
    krylov: &KrylovParams,
) -> Result<Vec<f64>> {
    check_step_inputs(sys.dim(), u_n, dt)?;
    let a = sys.linear();
    let mut r = a.apply_vec(u_n)?;
    let f = nemytskii_apply(sys, u_n)?;
    r.iter_mut().zip(&f).for_each(|(x, y)| *x += y);
    let w = krylov_phi1v(&*a, dt, &r, krylov)?;
    Ok(u_n.iter().zip(&w).map(|(u, w)| u + dt * w).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub krylov: KrylovParams,
    pub scheme: Scheme,
}

impl StepperConfig {
    /// `n_steps` uniform steps of size `final_time / n_steps`.
    pub fn uniform(final_time: f64, n_steps: usize, krylov: KrylovParams, scheme: Scheme) -> Result<Self> {
        if n_steps == 0 || !(final_time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need a positive final time and at least one step (T = {final_time}, N = {n_steps})"
            )));
        }
        Ok(Self {
            dt: final_time / n_steps as f64,
            n_steps,
            krylov,
            scheme,
        })
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Observer invoked after every accepted step with `(step index, t_n, u_n)`.
pub type Observer<'a> = dyn FnMut(usize, f64, &[f64]) + 'a;

/// Applies `cfg.n_steps` steps of the configured scheme starting from `u0`
/// (the projected initial value) and returns the final state.
pub fn erem_integrate<S: SemiDiscrete + ?Sized>(
    sys: &S,
    u0: &[f64],
    cfg: &StepperConfig,
    observer: Option<&mut Observer<'_>>,
) -> Result<Vec<f64>> {
    let mut observer = observer;
    let mut u = u0.to_vec();
    for n in 0..cfg.n_steps {
        let next = match cfg.scheme {
            Scheme::Erem => erem_step(sys, &u, cfg.dt, &cfg.krylov),
            Scheme::ExpEuler => exp_euler_step(sys, &u, cfg.dt, &cfg.krylov),
        };
        u = next.map_err(|e| Error::Step {
            step: n,
            source: Box::new(e),
        })?;
        let t = (n + 1) as f64 * cfg.dt;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: n + 1, t });
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(n + 1, t, &u);
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(nonlin: NonlinearTerm) -> DenseSemilinear {
        DenseSemilinear {
            a: DMatrix::zeros(1, 1),
            nonlin,
        }
    }

    fn square() -> NonlinearTerm {
        NonlinearTerm::new(Arc::new(|u| u * u), Arc::new(|u| 2.0 * u), Arc::new(|_| 2.0), f64::INFINITY)
    }

    #[test]
    fn rational_term_values_and_derivatives() {
        let f = NonlinearTerm::rational();
        assert_eq!((f.f)(0.0), 1.0);
        assert_eq!((f.f)(1.0), 0.0);
        assert_eq!((f.df)(0.0), -1.0);
        f.check(-10.0, 10.0, 2001).unwrap();
    }

    #[test]
    fn check_detects_wrong_derivative() {
        let mut f = NonlinearTerm::rational();
        f.df = Arc::new(|_| 0.0);
        assert!(f.check(-1.0, 1.0, 11).is_err());
        let mut g = NonlinearTerm::rational();
        g.lipschitz_bound = 0.5;
        assert!(g.check(-3.0, 3.0, 301).is_err());
    }

    #[test]
    fn scalar_square_step_matches_hand_value() {
        let sys = scalar(square());
        let u1 = erem_step(&sys, &[1.0], 0.1, &KrylovParams::default()).unwrap();
        let expected = (0.2f64.exp() + 1.0) / 2.0;
        assert!((u1[0] - expected).abs() < 1e-12, "{} vs {expected}", u1[0]);
        let e1 = exp_euler_step(&sys, &[1.0], 0.1, &KrylovParams::default()).unwrap();
        assert!((e1[0] - 1.1).abs() < 1e-14);
    }

    #[test]
    fn remainder_of_linear_term_vanishes() {
        let sys = scalar(NonlinearTerm::linear(3.0));
        let g = remainder_gn(&sys, &[0.4], &[2.5]).unwrap();
        assert!(g[0].abs() < 1e-15);
        let sq = scalar(square());
        let g = remainder_gn(&sq, &[1.5], &[1.5]).unwrap();
        assert!((g[0] + 2.25).abs() < 1e-15);
    }

    #[test]
    fn jacobian_of_rational_term_at_zero() {
        let sys = DenseSemilinear {
            a: DMatrix::zeros(3, 3),
            nonlin: NonlinearTerm::rational(),
        };
        let k = jacobian_action(&sys, &[0.0; 3]).unwrap();
        let jv = k.jacobian().apply_vec(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(jv, vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn shift_tracks_linearity() {
        assert!(NonlinearTerm::zero().shifted(1.0).is_linear());
        assert_eq!(NonlinearTerm::linear(2.0).shifted(1.0).kind, NonlinearKind::Linear(3.0));
        assert!(!NonlinearTerm::rational().shifted(1.0).is_linear());
        assert!(!NonlinearTerm::constant(1.0).is_linear());
    }

    #[test]
    fn observer_sees_every_step() {
        let sys = scalar(NonlinearTerm::rational());
        let cfg = StepperConfig::uniform(1.0, 4, KrylovParams::default(), Scheme::Erem).unwrap();
        let mut seen = Vec::new();
        let mut obs = |n: usize, t: f64, _: &[f64]| seen.push((n, t));
        erem_integrate(&sys, &[0.0], &cfg, Some(&mut obs)).unwrap();
        assert_eq!(seen, vec![(1, 0.25), (2, 0.5), (3, 0.75), (4, 1.0)]);
    }

    #[test]
    fn blow_up_is_flagged() {
        // u' = u^2 from u0 = 1 blows up at t = 1
        let sys = scalar(square());
        let cfg = StepperConfig::uniform(3.0, 30, KrylovParams::default(), Scheme::ExpEuler).unwrap();
        let err = erem_integrate(&sys, &[1.0], &cfg, None).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. } | Error::Step { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_step() {
        let sys = scalar(square());
        assert!(erem_step(&sys, &[1.0], 0.0, &KrylovParams::default()).is_err());
        assert!(erem_step(&sys, &[1.0, 2.0], 0.1, &KrylovParams::default()).is_err());
    }
}
