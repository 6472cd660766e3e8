//! Registry of test problems.
//!
//! Each problem fixes the domain, coefficients, boundary condition, Gårding
//! shift, reaction term, initial value and final time, and declares the
//! smoothness class `β` of its initial value (`u₀ ∈ D((-A)^{β/2})`). The
//! class is established analytically, not computed.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::fem::{BilinearFormSpec, BoundaryCondition, CoefficientField, DiscreteOperators, MassMode, ScalarFn};
use crate::integrator::{NonlinearTerm, SemilinearSystem};
use crate::mesh::{build_interval_mesh, build_rect_mesh, Mesh};
use crate::{Error, Result};

pub type ExactFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { lower: [f64; 2], upper: [f64; 2] },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    /// Edge length of the domain along its first axis.
    pub fn width(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { lower, upper } => upper[0] - lower[0],
        }
    }

    /// Structured mesh with `n` cells along the first axis (and the same
    /// spacing along the second).
    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        match *self {
            Domain::Interval { a, b } => build_interval_mesh(a, b, n),
            Domain::Rectangle { lower, upper } => {
                let ratio = (upper[1] - lower[1]) / (upper[0] - lower[0]);
                let ny = ((n as f64) * ratio).round().max(1.0) as usize;
                build_rect_mesh(n, ny, lower, upper)
            }
        }
    }
}

/// Smoothness class of the initial value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaClass {
    /// `β ∈ [0, 1)`: error `h^{1+β} t^{(β-1)/2} + Δt²`.
    Sub1,
    /// `β ∈ [1, 2)`: error `h^β + Δt²`.
    OneToTwo,
    /// `β = 2`: error `h² (1 + ln(t/h²)) + Δt²`, or `h² + Δt²` under the
    /// extra smoothing condition on `F`.
    Two,
}

/// Observed-order bands used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderBand {
    pub low: f64,
    pub high: f64,
}

impl OrderBand {
    pub const TEMPORAL: OrderBand = OrderBand { low: 1.8, high: 2.2 };

    pub fn contains(&self, order: f64) -> bool {
        order >= self.low && order <= self.high
    }
}

impl BetaClass {
    pub fn spatial_regime(&self) -> &'static str {
        match self {
            BetaClass::Sub1 => "h^(1+beta) t^((beta-1)/2) + dt^2, beta < 1",
            BetaClass::OneToTwo => "h^beta + dt^2, 1 <= beta < 2",
            BetaClass::Two => "h^2 (1 + ln(t/h^2)) + dt^2 (h^2 + dt^2 under the smoothing condition), beta = 2",
        }
    }

    pub fn spatial_band(&self) -> OrderBand {
        match self {
            BetaClass::Sub1 => OrderBand { low: 1.3, high: 2.0 },
            BetaClass::OneToTwo => OrderBand { low: 1.0, high: 2.15 },
            BetaClass::Two => OrderBand { low: 1.85, high: 2.15 },
        }
    }
}

/// Default discretization parameters per study kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    /// `(h, dt)` for temporal studies (h fixed, dt refined).
    pub temporal: (f64, f64),
    /// `(h, dt)` for spatial studies (h refined, dt fixed).
    pub spatial: (f64, f64),
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub domain: Domain,
    pub coeffs: CoefficientField,
    pub bc: BoundaryCondition,
    pub garding_shift: f64,
    /// Reaction term before the Gårding compensation.
    pub nonlin: NonlinearTerm,
    pub u0: ScalarFn,
    pub final_time: f64,
    pub beta: BetaClass,
    /// Whether `F` is believed to satisfy the extra smoothing condition that
    /// removes the logarithmic factor for `β = 2`.
    pub smoothing_condition: bool,
    pub exact: Option<ExactFn>,
    pub defaults: Defaults,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("bc", &self.bc)
            .field("garding_shift", &self.garding_shift)
            .field("final_time", &self.final_time)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn form_spec(&self) -> BilinearFormSpec {
        BilinearFormSpec::new(self.coeffs.clone(), self.bc, self.garding_shift)
    }

    /// `f + c₀ u`, the reaction term paired with the shifted operator.
    pub fn shifted_nonlinearity(&self) -> NonlinearTerm {
        self.nonlin.shifted(self.garding_shift)
    }

    /// Mesh with `n` cells along the first axis.
    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        self.domain.mesh(n)
    }

    /// Number of cells giving mesh spacing `h` along the first axis.
    pub fn cells_for(&self, h: f64) -> Result<usize> {
        let n = self.domain.width() / h;
        let rounded = n.round();
        if !(h > 0.0) || rounded < 1.0 || (n - rounded).abs() > 1e-9 * n {
            return Err(Error::InvalidArgument(format!(
                "mesh spacing {h} does not divide the domain width {}",
                self.domain.width()
            )));
        }
        Ok(rounded as usize)
    }

    pub fn operators(&self, mesh: Arc<Mesh>) -> Result<DiscreteOperators> {
        DiscreteOperators::assemble(mesh, &self.form_spec())
    }

    pub fn system(&self, ops: Arc<DiscreteOperators>, mass_mode: MassMode) -> SemilinearSystem {
        SemilinearSystem::new(ops, self.shifted_nonlinearity(), mass_mode)
    }

    /// `P_h u₀`.
    pub fn initial_value(&self, ops: &DiscreteOperators) -> Result<Vec<f64>> {
        ops.l2_project(&*self.u0)
    }
}

/// `u(x, t) = Σ c_k e^{-k²π²t} sin(kπx)` on `(0, 1)`, with `|c_k| ≤ bound / k`.
#[derive(Clone)]
pub struct SineSeries {
    coefficient: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    bound: f64,
}

impl SineSeries {
    pub fn new(coefficient: Arc<dyn Fn(usize) -> f64 + Send + Sync>, bound: f64) -> Self {
        Self { coefficient, bound }
    }

    /// Series of the indicator of `(1/4, 3/4)`.
    pub fn step() -> Self {
        Self::new(Arc::new(step_coefficient), 4.0 / PI)
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        (self.coefficient)(k)
    }

    /// Bound on `Σ_{k>n} |c_k| e^{-k²π²t}`.
    pub fn tail_bound(&self, n: usize, t: f64) -> f64 {
        let n = n.max(1) as f64;
        let ratio = (-n * PI * PI * t).exp();
        self.bound / n * (-(n + 1.0) * n * PI * PI * t).exp() / (1.0 - ratio)
    }

    /// Smallest truncation with `tail_bound <= rel_tol * scale`.
    pub fn terms_needed(&self, t: f64, rel_tol: f64) -> usize {
        let scale = self.bound * (-PI * PI * t).exp();
        let mut n = 1;
        while self.tail_bound(n, t) > rel_tol * scale {
            n += 1;
        }
        n
    }

    pub fn eval_truncated(&self, x: f64, t: f64, terms: usize) -> f64 {
        (1..=terms)
            .map(|k| {
                let kf = k as f64;
                self.coefficient(k) * (-kf * kf * PI * PI * t).exp() * (kf * PI * x).sin()
            })
            .sum()
    }

    /// Evaluates with a truncation whose tail is below `1e-12` relative; `t > 0`.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.eval_truncated(x, t, self.terms_needed(t, 1e-12))
    }
}

/// `c_k = 2 ∫_{1/4}^{3/4} sin(kπx) dx = (2 / (kπ)) (cos(kπ/4) - cos(3kπ/4))`.
pub fn step_coefficient(k: usize) -> f64 {
    let kp = k as f64 * PI;
    2.0 / kp * ((kp / 4.0).cos() - (3.0 * kp / 4.0).cos())
}

fn step(x: &[f64]) -> f64 {
    if x[0] > 0.25 && x[0] < 0.75 {
        1.0
    } else {
        0.0
    }
}

pub fn problem_heat_smooth_1d() -> ProblemSpec {
    ProblemSpec {
        name: "heat_smooth_1d",
        description: "u_t = u_xx on (0,1), Dirichlet, u0 = sin(pi x)",
        domain: Domain::Interval { a: 0.0, b: 1.0 },
        coeffs: CoefficientField::isotropic(1.0, [0.0; 2]),
        bc: BoundaryCondition::Dirichlet,
        garding_shift: 0.0,
        nonlin: NonlinearTerm::zero(),
        u0: Arc::new(|x| (PI * x[0]).sin()),
        final_time: 0.1,
        beta: BetaClass::Two,
        smoothing_condition: true,
        exact: Some(Arc::new(|x, t| (-PI * PI * t).exp() * (PI * x[0]).sin())),
        defaults: Defaults {
            temporal: (1.0 / 64.0, 0.1 / 8.0),
            spatial: (1.0 / 8.0, 0.1 / 4096.0),
        },
    }
}

pub fn problem_heat_nonsmooth_1d() -> ProblemSpec {
    let series = SineSeries::step();
    ProblemSpec {
        name: "heat_nonsmooth_1d",
        description: "u_t = u_xx on (0,1), Dirichlet, u0 = indicator of (1/4, 3/4)",
        domain: Domain::Interval { a: 0.0, b: 1.0 },
        coeffs: CoefficientField::isotropic(1.0, [0.0; 2]),
        bc: BoundaryCondition::Dirichlet,
        garding_shift: 0.0,
        nonlin: NonlinearTerm::zero(),
        u0: Arc::new(step),
        final_time: 0.1,
        beta: BetaClass::Sub1,
        smoothing_condition: true,
        exact: Some(Arc::new(move |x, t| if t > 0.0 { series.eval(x[0], t) } else { step(x) })),
        defaults: Defaults {
            temporal: (1.0 / 64.0, 0.1 / 8.0),
            spatial: (1.0 / 8.0, 0.1 / 4096.0),
        },
    }
}

/// Gårding shift `|b|² / (2 q)` for isotropic diffusion `q` and constant
/// advection `b`: `|∫ b·∇v v| ≤ q/2 |∇v|² + |b|²/(2q) |v|²`.
fn garding_shift_for(q: f64, b: [f64; 2]) -> f64 {
    (b[0] * b[0] + b[1] * b[1]) / (2.0 * q)
}

pub fn problem_semilinear_1d() -> ProblemSpec {
    let (q, b) = (0.1, [0.5, 0.0]);
    ProblemSpec {
        name: "semilinear_1d",
        description: "u_t = 0.1 u_xx - 0.5 u_x + (1-u)/(1+u^2) on (0,1), Dirichlet, u0 = x(1-x)",
        domain: Domain::Interval { a: 0.0, b: 1.0 },
        coeffs: CoefficientField::isotropic(q, b),
        bc: BoundaryCondition::Dirichlet,
        garding_shift: garding_shift_for(q, b),
        nonlin: NonlinearTerm::rational(),
        u0: Arc::new(|x| x[0] * (1.0 - x[0])),
        final_time: 1.0,
        beta: BetaClass::Two,
        smoothing_condition: true,
        exact: None,
        defaults: Defaults {
            temporal: (1.0 / 256.0, 1.0 / 8.0),
            spatial: (1.0 / 8.0, 1.0 / 1024.0),
        },
    }
}

pub fn problem_semilinear_1d_step() -> ProblemSpec {
    ProblemSpec {
        name: "semilinear_1d_step",
        description: "semilinear_1d with u0 = indicator of (1/4, 3/4)",
        u0: Arc::new(step),
        beta: BetaClass::Sub1,
        ..problem_semilinear_1d()
    }
}

pub fn problem_semilinear_2d() -> ProblemSpec {
    let (q, b) = (0.1, [0.5, 0.3]);
    ProblemSpec {
        name: "semilinear_2d",
        description: "u_t = 0.1 Lap u - (0.5, 0.3).grad u + (1-u)/(1+u^2) on the unit square, Dirichlet",
        domain: Domain::Rectangle {
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
        },
        coeffs: CoefficientField::isotropic(q, b),
        bc: BoundaryCondition::Dirichlet,
        garding_shift: garding_shift_for(q, b),
        nonlin: NonlinearTerm::rational(),
        u0: Arc::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin()),
        final_time: 0.5,
        beta: BetaClass::Two,
        smoothing_condition: true,
        exact: None,
        defaults: Defaults {
            temporal: (1.0 / 32.0, 0.5 / 8.0),
            spatial: (1.0 / 4.0, 0.5 / 256.0),
        },
    }
}

pub fn problem_robin_1d() -> ProblemSpec {
    ProblemSpec {
        name: "robin_1d",
        description: "u_t = u_xx on (0,1), du/dn + u = 0, u0 = cos(pi x) + 1",
        domain: Domain::Interval { a: 0.0, b: 1.0 },
        coeffs: CoefficientField::isotropic(1.0, [0.0; 2]),
        bc: BoundaryCondition::Robin { alpha0: 1.0 },
        garding_shift: 0.0,
        nonlin: NonlinearTerm::zero(),
        u0: Arc::new(|x| (PI * x[0]).cos() + 1.0),
        final_time: 0.1,
        // u0 is smooth but violates the Robin condition: u0 ∈ H^β for β < 3/2.
        beta: BetaClass::OneToTwo,
        smoothing_condition: true,
        exact: None,
        defaults: Defaults {
            temporal: (1.0 / 64.0, 0.1 / 8.0),
            spatial: (1.0 / 8.0, 0.1 / 1024.0),
        },
    }
}

pub fn registry() -> Vec<ProblemSpec> {
    vec![
        problem_heat_smooth_1d(),
        problem_heat_nonsmooth_1d(),
        problem_semilinear_1d(),
        problem_semilinear_1d_step(),
        problem_semilinear_2d(),
        problem_robin_1d(),
    ]
}

pub fn problem_names() -> Vec<&'static str> {
    registry().iter().map(|p| p.name).collect()
}

pub fn problem_by_name(name: &str) -> Option<ProblemSpec> {
    registry().into_iter().find(|p| p.name == name)
}
