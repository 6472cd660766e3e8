//! Executes a resolved configuration and writes its output files.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use log::info;

use crate::config::{ResolvedConfig, StudyMode};
use crate::convergence::{measure_error, run_spatial_study, run_temporal_study, steps_for, ConvergenceTable, Reference};
use crate::integrator::{erem_integrate, StepperConfig};
use crate::Result;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub table: Option<ConvergenceTable>,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Runs the study described by `cfg` and writes its files into `cfg.config.output_path`.
pub fn run(cfg: &ResolvedConfig) -> Result<RunOutcome> {
    let out_dir = &cfg.config.output_path;
    fs::create_dir_all(out_dir)?;
    let problem = &cfg.problem;
    let levels = cfg.config.levels;
    info!("running {:?} study of {}", cfg.config.study, problem.name);

    let mut files = Vec::new();
    let (table, summary) = match cfg.config.study {
        StudyMode::Temporal => {
            let dt_list: Vec<f64> = (0..levels).map(|k| cfg.dt / (1u64 << k) as f64).collect();
            let table = run_temporal_study(problem, cfg.h, &dt_list, &cfg.settings)?;
            let summary = table.summary();
            (Some(table), summary)
        }
        StudyMode::Spatial => {
            let table = run_spatial_study(problem, cfg.h, levels, cfg.dt, &cfg.settings)?;
            let summary = table.summary();
            (Some(table), summary)
        }
        StudyMode::SingleRun => {
            let (csv, summary) = single_run(cfg)?;
            let path = out_dir.join("solution.csv");
            fs::write(&path, csv)?;
            files.push(path);
            (None, summary)
        }
    };

    if let Some(table) = &table {
        let csv = out_dir.join("convergence.csv");
        fs::write(&csv, table.to_csv())?;
        files.push(csv);
        let dat = out_dir.join("convergence.dat");
        fs::write(&dat, plot_data(table))?;
        files.push(dat);
        if cfg.config.svg {
            let svg = out_dir.join("convergence.svg");
            fs::write(&svg, plot_svg(table))?;
            files.push(svg);
        }
    }
    let path = out_dir.join("summary.txt");
    fs::write(&path, &summary)?;
    files.push(path);

    Ok(RunOutcome { table, summary, files })
}

fn single_run(cfg: &ResolvedConfig) -> Result<(String, String)> {
    let problem = &cfg.problem;
    let settings = &cfg.settings;
    let mesh = Arc::new(problem.mesh(problem.cells_for(cfg.h)?)?);
    let ops = Arc::new(problem.operators(mesh)?);
    let sys = problem.system(ops.clone(), settings.mass_mode).with_nemytskii(settings.nemytskii);
    let u0 = problem.initial_value(&ops)?;
    let n_steps = steps_for(problem.final_time, cfg.dt)?;
    let stepper = StepperConfig::uniform(problem.final_time, n_steps, settings.krylov, settings.scheme)?;

    let mut wanted: Vec<usize> = cfg
        .config
        .snapshot_times
        .iter()
        .map(|t| (t / cfg.dt).round() as usize)
        .chain(std::iter::once(n_steps))
        .collect();
    wanted.sort_unstable();
    wanted.dedup();

    let mut snapshots: Vec<(f64, Vec<f64>)> = Vec::new();
    if wanted.first() == Some(&0) {
        snapshots.push((0.0, u0.clone()));
    }
    let mut record = |n: usize, t: f64, u: &[f64]| {
        if wanted.binary_search(&n).is_ok() {
            snapshots.push((t, u.to_vec()));
        }
    };
    let u_final = erem_integrate(&sys, &u0, &stepper, Some(&mut record))?;

    let dim = ops.mesh().dim();
    let mut csv = String::from(if dim == 1 { "t,x,u\n" } else { "t,x,y,u\n" });
    for (t, u) in &snapshots {
        let nodal = ops.to_nodal(u);
        for (i, v) in nodal.iter().enumerate() {
            let x = ops.mesh().node(i);
            let coords: Vec<String> = x.iter().map(|c| format!("{c:.16e}")).collect();
            let _ = writeln!(csv, "{t:.16e},{},{v:.16e}", coords.join(","));
        }
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "study: single_run");
    let _ = writeln!(summary, "problem: {}", problem.name);
    let _ = writeln!(summary, "h: {:e}, dt: {:e}, steps: {n_steps}", cfg.h, cfg.dt);
    let _ = writeln!(summary, "L2 norm at T: {:.10e}", ops.l2_norm(&u_final));
    if let Some(exact) = &problem.exact {
        let err = measure_error(
            &ops,
            &u_final,
            &Reference::Exact {
                solution: exact.as_ref(),
                t: problem.final_time,
            },
        )?;
        let _ = writeln!(summary, "L2 error at T: {err:.10e}");
    }
    Ok((csv, summary))
}

/// Two columns `parameter error` for gnuplot-style tools.
pub fn plot_data(table: &ConvergenceTable) -> String {
    let mut out = format!("# {} {}\n", table.problem, table.kind.as_str());
    for r in &table.rows {
        let p = match table.kind {
            crate::convergence::StudyKind::Temporal => r.dt,
            crate::convergence::StudyKind::Spatial => r.h,
        };
        let _ = writeln!(out, "{p:.16e} {:.16e}", r.error);
    }
    out
}

/// Minimal log-log plot of the error against the refined parameter.
pub fn plot_svg(table: &ConvergenceTable) -> String {
    let (w, h, pad) = (480.0, 360.0, 50.0);
    let pts: Vec<(f64, f64)> = table
        .rows
        .iter()
        .map(|r| {
            let p = match table.kind {
                crate::convergence::StudyKind::Temporal => r.dt,
                crate::convergence::StudyKind::Spatial => r.h,
            };
            (p.log10(), r.error.max(f64::MIN_POSITIVE).log10())
        })
        .collect();
    let (xmin, xmax) = bounds(pts.iter().map(|p| p.0));
    let (ymin, ymax) = bounds(pts.iter().map(|p| p.1));
    let sx = |x: f64| pad + (x - xmin) / (xmax - xmin) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - ymin) / (ymax - ymin) * (h - 2.0 * pad);

    let mut out = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    let _ = writeln!(
        out,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\"/>", path.join(" "));
    for &(x, y) in &pts {
        let _ = writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>", sx(x), sy(y));
    }
    let label = match table.fitted_order {
        Some(p) => format!("{} {}: order {p:.3}", table.problem, table.kind.as_str()),
        None => format!("{} {}", table.problem, table.kind.as_str()),
    };
    let _ = writeln!(out, "<text x=\"{pad}\" y=\"{}\" font-size=\"14\">{label}</text>", pad - 15.0);
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">log10 {}</text>",
        w / 2.0 - 20.0,
        h - 15.0,
        if table.kind == crate::convergence::StudyKind::Temporal { "dt" } else { "h" }
    );
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        (lo - 0.5, lo + 0.5)
    } else {
        (lo, hi)
    }
}
