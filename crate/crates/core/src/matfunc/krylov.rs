//! Arnoldi approximations of `exp(tK) v` and `phi_1(tK) v`.
//!
//! Both actions are integrated over `[0, t]` in substeps of length `tau`. A
//! substep builds an Arnoldi basis `V_m`, Hessenberg matrix `H_m` and
//! exponentiates the augmented matrix
//!
//! ```text
//!     [ tau H_m  e_1  0 ]
//!     [    0      0   1 ]
//!     [    0      0   0 ]
//! ```
//!
//! whose blocks hold `exp(tau H) e_1`, `phi_1(tau H) e_1` and `phi_2(tau H) e_1`.
//! The last entries of the phi blocks give the generalized residual error
//! estimate. A substep that has not converged at `m_max` is retried with a
//! step shrunk according to the estimate; a substep that converged well
//! below `m_max` lets the next one double.

use nalgebra::DMatrix;

use super::{dense_expm, LinearOperator};
use crate::sparse::{dot, norm2};
use crate::{Error, Result};

/// Accepted substeps must satisfy `estimate <= SAFETY * tol * (tau / t) * |result|`.
const SAFETY: f64 = 0.1;

/// Breakdown when the new Arnoldi vector is this small relative to `|K v_j|`.
const BREAKDOWN: f64 = 1e-14;

/// Convergence is tested every `CHECK_EVERY` Arnoldi steps (and at `m_max`).
const CHECK_EVERY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovParams {
    /// Maximum Arnoldi dimension.
    pub m_max: usize,
    /// Relative accuracy target for the computed action.
    pub tol: f64,
    /// Cap on the number of Arnoldi substeps (accepted and rejected).
    pub max_substeps: usize,
}

impl Default for KrylovParams {
    fn default() -> Self {
        Self {
            m_max: 60,
            tol: 1e-9,
            max_substeps: 128,
        }
    }
}

impl KrylovParams {
    pub fn validate(&self) -> Result<()> {
        if self.m_max < 2 {
            return Err(Error::InvalidArgument(format!("m_max must be >= 2, got {}", self.m_max)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidArgument(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_substeps == 0 {
            return Err(Error::InvalidArgument("max_substeps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Action {
    Exp,
    Phi1,
}

/// `exp(t K) v` to relative accuracy `params.tol`.
pub fn krylov_expmv(op: &dyn LinearOperator, t: f64, v: &[f64], params: &KrylovParams) -> Result<Vec<f64>> {
    check_inputs(op, t, v, params)?;
    if t == 0.0 || v.iter().all(|&x| x == 0.0) {
        return Ok(v.to_vec());
    }
    let mut w = v.to_vec();
    integrate(op, t, params, |tau, budget, _| {
        Ok(match arnoldi_substep(op, &w, tau, Action::Exp, params.m_max, budget, 0.0)? {
            Substep::Accepted { value, dim } => {
                w = value;
                Attempt::Accepted(dim)
            }
            Substep::Rejected { ratio, dim } => Attempt::Rejected { ratio, dim },
        })
    })?;
    Ok(w)
}

/// `phi_1(t K) v` with `phi_1(z) = (e^z - 1) / z`, to relative accuracy `params.tol`.
///
/// The exponential integrators consume `t * phi_1(t K) r`; the factor `t`
/// is left to the caller.
pub fn krylov_phi1v(op: &dyn LinearOperator, t: f64, v: &[f64], params: &KrylovParams) -> Result<Vec<f64>> {
    check_inputs(op, t, v, params)?;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("phi_1 action needs t > 0, got {t}")));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(v.to_vec());
    }
    // y(s) = s phi_1(s K) v solves y' = K y + v, y(0) = 0, hence
    // y(s + tau) = y(s) + tau phi_1(tau K) (K y(s) + v).
    let n = v.len();
    let mut y = vec![0.0; n];
    let mut rhs = v.to_vec();
    integrate(op, t, params, |tau, budget, first_try| {
        if first_try && y.iter().any(|&x| x != 0.0) {
            op.apply(&y, &mut rhs)?;
            rhs.iter_mut().zip(v).for_each(|(r, vi)| *r += vi);
        }
        let scale = norm2(&y);
        Ok(match arnoldi_substep(op, &rhs, tau, Action::Phi1, params.m_max, budget, scale)? {
            Substep::Accepted { value, dim } => {
                y.iter_mut().zip(&value).for_each(|(a, b)| *a += b);
                Attempt::Accepted(dim)
            }
            Substep::Rejected { ratio, dim } => Attempt::Rejected { ratio, dim },
        })
    })?;
    y.iter_mut().for_each(|x| *x /= t);
    Ok(y)
}

fn check_inputs(op: &dyn LinearOperator, t: f64, v: &[f64], params: &KrylovParams) -> Result<()> {
    params.validate()?;
    if v.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: v.len(),
        });
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be finite and non-negative, got {t}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("input vector has non-finite entries".into()));
    }
    Ok(())
}

enum Substep {
    Accepted { value: Vec<f64>, dim: usize },
    /// `ratio` is the final estimate over the acceptance threshold.
    Rejected { ratio: f64, dim: usize },
}

enum Attempt {
    Accepted(usize),
    Rejected { ratio: f64, dim: usize },
}

/// Drives the substep loop; `substep(tau, rel_budget, first_try)` attempts a
/// step of length `tau`.
fn integrate<F>(op: &dyn LinearOperator, t: f64, params: &KrylovParams, mut substep: F) -> Result<()>
where
    F: FnMut(f64, f64, bool) -> Result<Attempt>,
{
    let mut tau = initial_substep(op.norm_estimate(), t, params);
    let mut done = 0.0;
    let mut attempts = 0;
    let mut first_try = true;
    while done < t {
        let remaining = t - done;
        let last = tau >= remaining * (1.0 - 1e-12);
        let step = if last { remaining } else { tau };
        attempts += 1;
        if attempts > params.max_substeps {
            return Err(Error::NoConvergence {
                substeps: params.max_substeps,
                t,
            });
        }
        match substep(step, params.tol * step / t, first_try)? {
            Attempt::Accepted(dim) => {
                first_try = true;
                if last {
                    break;
                }
                done += step;
                tau = if 3 * dim <= 2 * params.m_max { 2.0 * step } else { step };
            }
            Attempt::Rejected { ratio, dim } => {
                first_try = false;
                let factor = 0.9 * ratio.powf(-1.0 / dim as f64);
                tau = factor.clamp(0.1, 0.5) * step;
            }
        }
    }
    Ok(())
}

/// Starts from the whole interval unless `t |K|` is far beyond what
/// `m_max` Arnoldi vectors can resolve.
fn initial_substep(norm: f64, t: f64, params: &KrylovParams) -> f64 {
    let cap = (params.m_max * params.m_max) as f64 / 4.0;
    let mut tau = t;
    if norm.is_finite() {
        while tau * norm > cap {
            tau *= 0.5;
        }
    }
    tau
}

/// One Arnoldi substep. For `Action::Exp` accepts with `exp(tau K) r`, for
/// `Action::Phi1` with the increment `tau phi_1(tau K) r`; rejects when the
/// error estimate did not meet `rel_budget` within `m_max` steps.
fn arnoldi_substep(
    op: &dyn LinearOperator,
    r: &[f64],
    tau: f64,
    action: Action,
    m_max: usize,
    rel_budget: f64,
    scale_hint: f64,
) -> Result<Substep> {
    let n = r.len();
    let beta = norm2(r);
    if beta == 0.0 {
        let value = match action {
            Action::Exp => r.to_vec(),
            Action::Phi1 => vec![0.0; n],
        };
        return Ok(Substep::Accepted { value, dim: 0 });
    }
    let m_cap = m_max.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_cap + 1);
    basis.push(r.iter().map(|x| x / beta).collect());
    let mut hess = DMatrix::<f64>::zeros(m_cap + 1, m_cap);
    let mut w = vec![0.0; n];
    let mut ratio = f64::INFINITY;

    for j in 0..m_cap {
        op.apply(&basis[j], &mut w)?;
        let w_norm = norm2(&w);
        // modified Gram-Schmidt with one reorthogonalization pass
        for _ in 0..2 {
            for (i, vi) in basis.iter().enumerate() {
                let hij = dot(&w, vi);
                hess[(i, j)] += hij;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
            }
        }
        let h_next = norm2(&w);
        if !h_next.is_finite() {
            return Err(Error::Overflow("Arnoldi vector became non-finite".into()));
        }
        let breakdown = h_next <= BREAKDOWN * w_norm;
        let m = j + 1;
        if breakdown || m == m_cap || (m >= CHECK_EVERY && m % CHECK_EVERY == 0) {
            let (coeffs, estimate) = projected_action(&hess, m, tau, action, beta, h_next)?;
            let coeff_norm = beta * coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            let scale = coeff_norm.max(scale_hint);
            ratio = estimate / (SAFETY * rel_budget * scale);
            if breakdown || ratio <= 1.0 {
                let mut value = vec![0.0; n];
                for (vi, c) in basis.iter().zip(&coeffs) {
                    let s = beta * c;
                    value.iter_mut().zip(vi).for_each(|(o, v)| *o += s * v);
                }
                return Ok(Substep::Accepted { value, dim: m });
            }
        }
        hess[(j + 1, j)] = h_next;
        if m < m_cap {
            basis.push(w.iter().map(|x| x / h_next).collect());
        }
    }
    Ok(Substep::Rejected { ratio, dim: m_cap })
}

/// Small-space coefficients of the action and the generalized residual estimate.
fn projected_action(
    hess: &DMatrix<f64>,
    m: usize,
    tau: f64,
    action: Action,
    beta: f64,
    h_next: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut aug = DMatrix::<f64>::zeros(m + 2, m + 2);
    for i in 0..m {
        for k in 0..m {
            aug[(i, k)] = tau * hess[(i, k)];
        }
    }
    aug[(0, m)] = 1.0;
    aug[(m, m + 1)] = 1.0;
    let e = dense_expm(&aug)?;
    Ok(match action {
        Action::Exp => {
            let coeffs = (0..m).map(|i| e[(i, 0)]).collect();
            let estimate = beta * h_next * tau * e[(m - 1, m)].abs();
            (coeffs, estimate)
        }
        Action::Phi1 => {
            let coeffs = (0..m).map(|i| tau * e[(i, m)]).collect();
            let estimate = beta * h_next * tau * tau * e[(m - 1, m + 1)].abs();
            (coeffs, estimate)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfunc::DiagonalOperator;

    #[test]
    fn zero_time_returns_input() {
        let op = DiagonalOperator(vec![-1.0, -2.0, -3.0]);
        let v = vec![1.0, 2.0, 3.0];
        assert_eq!(krylov_expmv(&op, 0.0, &v, &KrylovParams::default()).unwrap(), v);
    }

    #[test]
    fn diagonal_exponential() {
        let d: Vec<f64> = (0..40).map(|i| -(i as f64)).collect();
        let op = DiagonalOperator(d.clone());
        let v = vec![1.0; 40];
        let w = krylov_expmv(&op, 0.5, &v, &KrylovParams::default()).unwrap();
        for (wi, di) in w.iter().zip(&d) {
            assert!((wi - (0.5 * di).exp()).abs() < 1e-10, "{wi} vs {}", (0.5 * di).exp());
        }
    }

    #[test]
    fn phi1_of_zero_operator_is_identity() {
        let op = DiagonalOperator(vec![0.0; 5]);
        let v = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let w = krylov_phi1v(&op, 0.7, &v, &KrylovParams::default()).unwrap();
        for (a, b) in w.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn phi1_scalar_formula() {
        let a = 3.0;
        let t = 0.4;
        let op = DiagonalOperator(vec![-a]);
        let w = krylov_phi1v(&op, t, &[2.0], &KrylovParams::default()).unwrap();
        let expected = 2.0 * (1.0 - (-a * t).exp()) / (a * t);
        assert!((w[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn substepping_handles_stiff_operator() {
        let d: Vec<f64> = (0..200).map(|i| -(i as f64).powi(2)).collect();
        let op = DiagonalOperator(d.clone());
        let v: Vec<f64> = (0..200).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let params = KrylovParams {
            m_max: 30,
            tol: 1e-9,
            max_substeps: 1000,
        };
        let w = krylov_phi1v(&op, 1.0, &v, &params).unwrap();
        let norm: f64 = norm2(&w);
        for ((wi, di), vi) in w.iter().zip(&d).zip(&v) {
            let exact = if *di == 0.0 { *vi } else { vi * (di.exp() - 1.0) / di };
            assert!((wi - exact).abs() < 1e-9 * norm);
        }
    }

    #[test]
    fn substep_cap_is_reported() {
        let d: Vec<f64> = (0..100).map(|i| -(i as f64).powi(3)).collect();
        let op = DiagonalOperator(d);
        let v = vec![1.0; 100];
        let params = KrylovParams {
            m_max: 4,
            tol: 1e-12,
            max_substeps: 2,
        };
        assert!(matches!(
            krylov_expmv(&op, 1.0, &v, &params),
            Err(Error::NoConvergence { substeps: 2, .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let op = DiagonalOperator(vec![1.0]);
        let bad = KrylovParams {
            m_max: 1,
            ..Default::default()
        };
        assert!(krylov_expmv(&op, 1.0, &[1.0], &bad).is_err());
        assert!(krylov_phi1v(&op, 0.0, &[1.0], &KrylovParams::default()).is_err());
        assert!(krylov_expmv(&op, -1.0, &[1.0], &KrylovParams::default()).is_err());
    }
}
