//! Temporal and spatial convergence studies.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::{DiscreteOperators, MassMode};
use crate::integrator::{erem_integrate, jacobian_action, NemytskiiMode, Scheme, StepperConfig};
use crate::matfunc::{krylov_expmv, KrylovParams};
use crate::mesh::{prolong_nodal, refine_uniform_with_parents, Mesh, NodeParents};
use crate::problems::{BetaClass, OrderBand, ProblemSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Temporal,
    Spatial,
}

impl StudyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyKind::Temporal => "temporal",
            StudyKind::Spatial => "spatial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dt: f64,
    pub t: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    /// Every error is at the Krylov tolerance; no order is fitted.
    Exact,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Exact => "EXACT",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub kind: StudyKind,
    pub problem: String,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log dt` (or `log h`).
    pub fitted_order: Option<f64>,
    pub regime: String,
    pub band: OrderBand,
    /// How the reference solution was obtained.
    pub reference: String,
    /// Ratio of the change under `dt -> dt/2` on the finest mesh to the
    /// finest spatial error; small means the time error is subdominant.
    pub temporal_check: Option<f64>,
    /// Slope of `error / (1 + ln(t / h²))` against `h`, reported for `β = 2`
    /// spatial studies next to the plain fit.
    pub log_corrected_order: Option<f64>,
}

impl ConvergenceTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn verdict(&self) -> Verdict {
        match self.fitted_order {
            None => Verdict::Exact,
            Some(p) if self.band.contains(p) => Verdict::Pass,
            Some(_) => Verdict::Fail,
        }
    }

    /// Errors strictly decrease along the refinement.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("study,problem,h,dt,t,error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.kind.as_str(),
                self.problem,
                r.h,
                r.dt,
                r.t,
                r.error
            );
        }
        for line in self.summary().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "study: {}", self.kind.as_str());
        let _ = writeln!(out, "problem: {}", self.problem);
        let _ = writeln!(out, "reference: {}", self.reference);
        let _ = writeln!(out, "regime: {}", self.regime);
        match self.fitted_order {
            Some(p) => {
                let _ = writeln!(out, "fitted order: {p:.4}");
            }
            None => {
                let _ = writeln!(out, "fitted order: n/a (errors at solver tolerance)");
            }
        }
        if let Some(p) = self.log_corrected_order {
            let _ = writeln!(out, "fitted order with log factor removed: {p:.4}");
        }
        let _ = writeln!(out, "expected band: [{}, {}]", self.band.low, self.band.high);
        if let Some(c) = self.temporal_check {
            let _ = writeln!(out, "time-step check (dt -> dt/2 change / finest error): {c:.3e}");
        }
        let _ = writeln!(out, "monotone: {}", self.is_monotone());
        let _ = writeln!(out, "verdict: {}", self.verdict());
        out
    }
}

/// Least-squares slope of `log error` against `log parameter`.
pub fn estimate_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InsufficientData { rows: points.len() });
    }
    if let Some(&(p, e)) = points.iter().find(|(p, e)| !(*p > 0.0 && *e > 0.0 && p.is_finite() && e.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "order fit needs positive finite data, got ({p}, {e})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(p, _)| p.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("order fit needs distinct parameters".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// What a numerical solution is compared against.
pub enum Reference<'a> {
    /// Exact solution evaluated at time `t`; the error is the L² norm of the
    /// difference computed by quadrature, not through an interpolant (in 1D
    /// the Galerkin solution is superclose to the interpolant at the nodes).
    Exact {
        solution: &'a (dyn Fn(&[f64], f64) -> f64 + Sync),
        t: f64,
    },
    /// Discrete solution on the same mesh.
    SameMesh(&'a [f64]),
    /// Discrete solution on a uniformly refined mesh; `parents[k]` maps level
    /// `k` to level `k + 1`, starting at the numerical solution's mesh.
    Finer {
        ops: &'a DiscreteOperators,
        values: &'a [f64],
        parents: &'a [NodeParents],
    },
}

/// `‖u_numeric - u_ref‖_{L²}`.
pub fn measure_error(ops: &DiscreteOperators, numeric: &[f64], reference: &Reference<'_>) -> Result<f64> {
    match reference {
        Reference::Exact { solution, t } => ops.l2_error(numeric, &|x| solution(x, *t)),
        Reference::SameMesh(r) => {
            if r.len() != numeric.len() {
                return Err(Error::DimensionMismatch {
                    expected: numeric.len(),
                    found: r.len(),
                });
            }
            let d: Vec<f64> = numeric.iter().zip(r.iter()).map(|(a, b)| a - b).collect();
            Ok(ops.l2_norm(&d))
        }
        Reference::Finer {
            ops: fine,
            values,
            parents,
        } => {
            let mut nodal = ops.to_nodal(numeric);
            for p in parents.iter() {
                nodal = prolong_nodal(p, &nodal);
            }
            if nodal.len() != fine.mesh().n_nodes() {
                return Err(Error::DimensionMismatch {
                    expected: fine.mesh().n_nodes(),
                    found: nodal.len(),
                });
            }
            let lifted = fine.from_nodal(&nodal);
            let d: Vec<f64> = lifted.iter().zip(values.iter()).map(|(a, b)| a - b).collect();
            Ok(fine.l2_norm(&d))
        }
    }
}

/// Discretization choices shared by both study kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySettings {
    pub mass_mode: MassMode,
    pub scheme: Scheme,
    pub nemytskii: NemytskiiMode,
    pub krylov: KrylovParams,
    /// Reference step count is this multiple of the finest step count.
    pub reference_factor: usize,
    /// Number of refinements beyond the finest mesh for a discrete spatial reference.
    pub reference_levels: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            mass_mode: MassMode::default(),
            scheme: Scheme::default(),
            nemytskii: NemytskiiMode::default(),
            krylov: KrylovParams::default(),
            reference_factor: 16,
            reference_levels: 3,
        }
    }
}

/// Integrates `problem` on `ops` to its final time with `n_steps` uniform steps.
pub fn solve(problem: &ProblemSpec, ops: &Arc<DiscreteOperators>, n_steps: usize, settings: &StudySettings) -> Result<Vec<f64>> {
    let sys = problem.system(ops.clone(), settings.mass_mode).with_nemytskii(settings.nemytskii);
    let u0 = problem.initial_value(ops)?;
    let cfg = StepperConfig::uniform(problem.final_time, n_steps, settings.krylov, settings.scheme)?;
    erem_integrate(&sys, &u0, &cfg, None)
}

/// Number of uniform steps of size `dt` covering `(0, t]`.
pub fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let n = t / dt;
    let rounded = n.round();
    if !(dt > 0.0) || rounded < 1.0 || (n - rounded).abs() > 1e-9 * n {
        return Err(Error::InvalidArgument(format!("time step {dt} does not divide the final time {t}")));
    }
    Ok(rounded as usize)
}

fn assemble(problem: &ProblemSpec, mesh: Mesh) -> Result<Arc<DiscreteOperators>> {
    Ok(Arc::new(problem.operators(Arc::new(mesh))?))
}

/// Fixes the mesh spacing `h` and refines the time step over `dt_list`.
///
/// When the shifted reaction term is linear the semi-discrete flow is
/// computed directly as `exp(T A) P_h u₀`; otherwise the reference uses a step
/// `settings.reference_factor` times smaller than the finest one.
pub fn run_temporal_study(problem: &ProblemSpec, h: f64, dt_list: &[f64], settings: &StudySettings) -> Result<ConvergenceTable> {
    settings.krylov.validate()?;
    let t_final = problem.final_time;
    let steps: Vec<usize> = dt_list.iter().map(|&dt| steps_for(t_final, dt)).collect::<Result<_>>()?;
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time steps must strictly decrease".into()));
    }
    let mesh = problem.mesh(problem.cells_for(h)?)?;
    let ops = assemble(problem, mesh)?;
    let nonlin = problem.shifted_nonlinearity();

    let (reference, label) = if nonlin.is_linear() {
        let sys = problem.system(ops.clone(), settings.mass_mode).with_nemytskii(settings.nemytskii);
        let u0 = problem.initial_value(&ops)?;
        let op = jacobian_action(&sys, &u0)?;
        let tight = KrylovParams {
            tol: settings.krylov.tol.min(1e-12),
            ..settings.krylov
        };
        let r = krylov_expmv(&op, t_final, &u0, &tight).map_err(|e| e.context("reference flow"))?;
        (r, "exact semi-discrete flow exp(T A) P_h u0".to_string())
    } else {
        let n_ref = settings.reference_factor.max(1) * steps.last().copied().unwrap_or(1);
        let r = solve(problem, &ops, n_ref, settings).map_err(|e| e.context("reference solution"))?;
        (r, format!("same scheme with dt = T/{n_ref}"))
    };

    let solutions: Vec<Vec<f64>> = steps
        .par_iter()
        .map(|&n| solve(problem, &ops, n, settings).map_err(|e| e.context(format!("run with dt = {:e}", t_final / n as f64))))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(steps.len());
    for (sol, &n) in solutions.iter().zip(&steps) {
        let error = measure_error(&ops, sol, &Reference::SameMesh(&reference))?;
        rows.push(ConvergenceRow {
            h,
            dt: t_final / n as f64,
            t: t_final,
            error,
        });
    }

    let scale = ops.l2_norm(&reference).max(f64::MIN_POSITIVE);
    let at_tolerance = rows
        .iter()
        .zip(&steps)
        .all(|(r, &n)| r.error <= 10.0 * n as f64 * settings.krylov.tol * scale);
    let fitted_order = if at_tolerance {
        None
    } else {
        Some(estimate_order(&rows.iter().map(|r| (r.dt, r.error)).collect::<Vec<_>>())?)
    };

    Ok(ConvergenceTable {
        kind: StudyKind::Temporal,
        problem: problem.name.to_string(),
        rows,
        fitted_order,
        regime: "dt^2".into(),
        band: OrderBand::TEMPORAL,
        reference: label,
        temporal_check: None,
        log_corrected_order: None,
    })
}

/// Fixes the time step `dt` and refines the mesh `levels - 1` times from spacing `base_h`.
///
/// Errors are measured against the exact solution when the problem has one,
/// otherwise against a solution on a mesh `settings.reference_levels` levels
/// finer than the finest one.
pub fn run_spatial_study(
    problem: &ProblemSpec,
    base_h: f64,
    levels: usize,
    dt: f64,
    settings: &StudySettings,
) -> Result<ConvergenceTable> {
    settings.krylov.validate()?;
    if levels < 3 {
        return Err(Error::InsufficientData { rows: levels });
    }
    let t_final = problem.final_time;
    let n_steps = steps_for(t_final, dt)?;
    let extra = if problem.exact.is_some() { 0 } else { settings.reference_levels.max(1) };

    let mut meshes = vec![problem.mesh(problem.cells_for(base_h)?)?];
    let mut parents: Vec<NodeParents> = Vec::new();
    for _ in 1..levels + extra {
        let (fine, p) = refine_uniform_with_parents(meshes.last().expect("nonempty"));
        meshes.push(fine);
        parents.push(p);
    }
    let hs: Vec<f64> = (0..levels).map(|k| base_h / (1u64 << k) as f64).collect();

    let ops: Vec<Arc<DiscreteOperators>> = meshes
        .into_par_iter()
        .map(|m| assemble(problem, m))
        .collect::<Result<_>>()?;
    let solutions: Vec<Vec<f64>> = ops
        .par_iter()
        .map(|o| solve(problem, o, n_steps, settings).map_err(|e| e.context(format!("run with h = {:e}", o.mesh().h()))))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(levels);
    let label;
    if let Some(exact) = &problem.exact {
        label = "exact solution".to_string();
        let reference = Reference::Exact {
            solution: exact.as_ref(),
            t: t_final,
        };
        for k in 0..levels {
            rows.push(ConvergenceRow {
                h: hs[k],
                dt,
                t: t_final,
                error: measure_error(&ops[k], &solutions[k], &reference)?,
            });
        }
    } else {
        let top = levels + extra - 1;
        label = format!("discrete solution with h = {:e}", base_h / (1u64 << top) as f64);
        for k in 0..levels {
            let reference = Reference::Finer {
                ops: &ops[top],
                values: &solutions[top],
                parents: &parents[k..top],
            };
            rows.push(ConvergenceRow {
                h: hs[k],
                dt,
                t: t_final,
                error: measure_error(&ops[k], &solutions[k], &reference)?,
            });
        }
    }

    let temporal_check = if problem.shifted_nonlinearity().is_linear() {
        None
    } else {
        let k = levels - 1;
        let halved = solve(problem, &ops[k], 2 * n_steps, settings)?;
        let change = measure_error(&ops[k], &solutions[k], &Reference::SameMesh(&halved))?;
        Some(change / rows[k].error)
    };

    let fitted_order = Some(estimate_order(&rows.iter().map(|r| (r.h, r.error)).collect::<Vec<_>>())?);
    let log_corrected_order = if problem.beta == BetaClass::Two {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.h, r.error / (1.0 + (t_final / (r.h * r.h)).ln())))
            .collect();
        Some(estimate_order(&pts)?)
    } else {
        None
    };
    Ok(ConvergenceTable {
        kind: StudyKind::Spatial,
        problem: problem.name.to_string(),
        rows,
        fitted_order,
        regime: problem.beta.spatial_regime().into(),
        band: problem.beta.spatial_band(),
        reference: label,
        temporal_check,
        log_corrected_order,
    })
}
