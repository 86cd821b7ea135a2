//! Executes one scenario and writes its report and data files.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use kolmocouple::certify::{
    check_corollary1, check_example4, check_moments, check_theorem1, check_theorem2,
    MomentCriterion, Verdict,
};
use kolmocouple::coupling::{
    contraction_rate, monotonicity_violations, simulate_coupled, w2_upper_bound, SimulationParams,
};
use kolmocouple::fpk::{
    default_battery, doubled_weak_residual, lyapunov_check, radial_grid, solve_1d, solve_2d,
    weak_residual, PowerBound, Solve1dOutcome, Solve2dOptions, TestFunction,
};
use kolmocouple::measures::{write_grid_csv, CouplingMeasure, GridDensity, MeasureRep, SupportBox};
use kolmocouple::mollify::{
    doubled_regularized_psd, regularize_coefficients, regularized_residual, weak_gap, GridSpec,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::report::{Report, SCHEMA_VERSION};
use crate::scenario::{
    BatterySpec, CertifyKind, CouplingKind, Expectation, MeasureSpec, Scenario, Task,
};
use crate::suite;
use crate::svg::{line_plot, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The run completed and reports a finding the scenario did not expect.
    Finding,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Finding => 2,
        }
    }
}

pub struct RunOutcome {
    pub report: Report,
    pub status: Status,
    /// Human-readable summary for the terminal.
    pub summary: String,
}

/// Runs `scenario` as `task`, resolving relative inputs against `base` and writing into `out`.
pub fn run_scenario(
    scenario: &Scenario,
    task: Task,
    base: &Path,
    out: &Path,
) -> Result<RunOutcome> {
    if let Some(declared) = scenario.task {
        if declared != task {
            bail!(
                "config declares task `{}` but `{}` was requested",
                declared.as_str(),
                task.as_str()
            );
        }
    }
    let mut resolved = scenario.clone();
    resolved.task = Some(task);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (results, status, summary) = match task {
        Task::Certify => run_certify(&resolved, base)?,
        Task::Simulate => run_simulate(&resolved, base, out)?,
        Task::Solve => run_solve(&resolved, base, out)?,
        Task::Residual => run_residual(&resolved, base)?,
        Task::Mollify => run_mollify(&resolved, base, out)?,
        Task::PaperSuite => run_suite(&resolved, out)?,
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        name: resolved.name.clone(),
        task: task.as_str().to_string(),
        seed: resolved.seed,
        scenario: resolved,
        results,
    };
    std::fs::write(out.join("report.json"), report.to_json()?)?;
    Ok(RunOutcome {
        report,
        status,
        summary,
    })
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| anyhow!("config error: missing section `{name}`"))
}

fn battery_for(
    spec: &BatterySpec,
    d: usize,
    default_center: &[f64],
    seed: u64,
) -> Result<(SupportBox, Vec<TestFunction>)> {
    let center = spec
        .center
        .clone()
        .unwrap_or_else(|| default_center.to_vec());
    if center.len() != d {
        bail!(
            "config error: battery center has {} coordinates, expected {d}",
            center.len()
        );
    }
    if spec.half_width.is_nan() || spec.half_width <= 0.0 || spec.count == 0 {
        bail!("config error: battery needs count ≥ 1 and half_width > 0");
    }
    let bx = SupportBox::around(&center, spec.half_width);
    let battery = default_battery(d, &bx, spec.count, seed);
    Ok((bx, battery))
}

fn run_certify(s: &Scenario, base: &Path) -> Result<(Value, Status, String)> {
    let sec = section(&s.certify, "certify")?;
    let field = s.require_field(base)?;
    let mut region = sec.region.clone();
    region.rng_seed = s.seed;
    let lambda = sec.lambda.as_ref().map(|l| l.build()).transpose()?;
    let need_lambda = || {
        lambda
            .as_ref()
            .ok_or_else(|| anyhow!("config error: missing `certify.lambda` for this criterion"))
    };
    let cert = match sec.criterion {
        CertifyKind::Theorem1 => check_theorem1(&field, &region)?,
        CertifyKind::Theorem2 => check_theorem2(&field, need_lambda()?, &region)?,
        CertifyKind::Corollary1 => check_corollary1(&field, need_lambda()?, &region)?,
        CertifyKind::Example4 => check_example4(&field, &region)?,
        CertifyKind::Moments => {
            let spec = sec
                .measure
                .as_ref()
                .ok_or_else(|| anyhow!("config error: missing `certify.measure` for moments"))?;
            let measure = spec.build(base)?;
            let crit = sec
                .moment_criterion
                .clone()
                .unwrap_or(MomentCriterion::Theorem1);
            let rep = check_moments(&field, &measure, crit.clone(), lambda.as_ref())?;
            let finite = rep.integrals.iter().all(|m| m.finite);
            let summary = format!(
                "moments ({:?}) on {}: {}",
                crit,
                rep.measure,
                if finite {
                    "all finite"
                } else {
                    "some integrals not finite"
                }
            );
            return Ok((
                json!({ "field": field.label(), "moments": rep }),
                Status::Ok,
                summary,
            ));
        }
    };
    let unexpected =
        matches!(sec.expect, Some(Expectation::Holds)) && cert.verdict == Verdict::Violated;
    let summary = format!(
        "{}: {:?} {} (extremum {:.6e}, {} evaluations)",
        field.label(),
        cert.criterion,
        cert.verdict,
        cert.extremum,
        cert.budget_used
    );
    let results = json!({
        "field": field.label(),
        "certificate": cert,
        "expect": sec.expect,
        "expectation_met": !unexpected,
    });
    Ok((
        results,
        if unexpected {
            Status::Finding
        } else {
            Status::Ok
        },
        summary,
    ))
}

fn run_simulate(s: &Scenario, base: &Path, out: &Path) -> Result<(Value, Status, String)> {
    let sec = section(&s.simulate, "simulate")?;
    let field = s.require_field(base)?;
    let params = SimulationParams {
        h: sec.h,
        horizon: sec.horizon,
        paths: sec.paths,
        seed: s.seed,
        snapshots: sec.snapshots,
    };
    let ens = simulate_coupled(&field, &sec.mu0, &sec.nu0, &params)?;
    let window = sec
        .fit_window
        .map_or((0.2 * sec.horizon, 0.8 * sec.horizon), |w| (w[0], w[1]));
    let contraction = match contraction_rate(&ens, window) {
        Ok(c) => json!(c),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let times = if sec.w2_times.is_empty() {
        vec![sec.horizon]
    } else {
        sec.w2_times.clone()
    };
    let w2: Vec<_> = times.iter().map(|&t| w2_upper_bound(&ens, t)).collect();
    let violations = monotonicity_violations(&ens, 3.0);
    ens.write_stats_csv(&out.join("coupling_stats.csv"))?;
    if sec.write_states {
        ens.write_states_le(&out.join("coupling_states.f64le"))?;
    }
    let t: Vec<f64> = ens.stats.iter().map(|s| s.t).collect();
    let m: Vec<f64> = ens.stats.iter().map(|s| s.mean_sq_diff).collect();
    let svg = line_plot(
        &format!("synchronous coupling: {}", field.label()),
        "t",
        "E|X_t - Y_t|^2",
        &[Series {
            label: "mean square difference",
            x: &t,
            y: &m,
        }],
        true,
    );
    std::fs::write(out.join("coupling.svg"), svg)?;
    let summary = format!(
        "{}: {} pairs, {} steps, final E|X-Y|² = {:.6e}, {} blow-ups",
        field.label(),
        ens.paths,
        ens.steps,
        m.last().copied().unwrap_or(f64::NAN),
        ens.blown_up()
    );
    let results = json!({
        "field": field.label(),
        "ensemble": ens,
        "contraction": contraction,
        "w2_upper_bounds": w2,
        "monotonicity_violations": violations,
    });
    Ok((results, Status::Ok, summary))
}

fn l1_to_reference(g: &GridDensity, reference: &MeasureRep) -> Result<f64> {
    let MeasureRep::Analytic(a) = reference else {
        bail!("config error: `solve.reference` must be an analytic density");
    };
    if a.dim() != g.shape().len() {
        bail!(
            "config error: reference dimension {} does not match the grid",
            a.dim()
        );
    }
    let vol = g.cell_volume();
    let terms: Vec<f64> = (0..g.len())
        .map(|c| (g.values()[c] - a.density(&g.center(c))).abs() * vol)
        .collect();
    Ok(terms.iter().sum())
}

fn run_solve(s: &Scenario, base: &Path, out: &Path) -> Result<(Value, Status, String)> {
    let sec = section(&s.solve, "solve")?;
    let field = s.require_field(base)?;
    let d = field.d();
    if sec.lo.len() != d || sec.hi.len() != d || sec.n.len() != d {
        bail!("config error: `solve.lo`, `solve.hi` and `solve.n` need {d} entries each");
    }
    let domain = SupportBox::new(sec.lo.clone(), sec.hi.clone())?;
    let (measure, mut solver) = match d {
        1 => {
            let outcome = solve_1d(&field, sec.lo[0], sec.hi[0], sec.n[0])?;
            let info = match &outcome {
                Solve1dOutcome::Density { .. } => json!({ "outcome": "density" }),
                Solve1dOutcome::Dirac { dirac, zero } => {
                    json!({ "outcome": "dirac", "atom": dirac.atom, "zero": zero })
                }
                Solve1dOutcome::Degenerate {
                    zeros, diagnostic, ..
                } => {
                    json!({ "outcome": "degenerate", "zeros": zeros, "diagnostic": diagnostic })
                }
            };
            let measure = match &outcome {
                Solve1dOutcome::Dirac { dirac, .. } => MeasureRep::dirac(dirac.atom.clone()),
                other => MeasureRep::Grid(other.density().expect("grid outcome").clone()),
            };
            (measure, info)
        }
        2 => {
            let mut opts = Solve2dOptions::default();
            if let Some(t) = sec.tolerance {
                opts.tolerance = t;
            }
            if let Some(m) = sec.max_iterations {
                opts.max_iterations = m;
            }
            let rep = solve_2d(&field, &domain, sec.n[0], sec.n[1], &opts)?;
            let info = json!({
                "outcome": "density",
                "iterations": rep.iterations,
                "power_iteration_change": rep.residual,
                "clamped_cells": rep.clamped_cells,
                "options": opts,
            });
            (MeasureRep::Grid(rep.density), info)
        }
        _ => bail!("grid solves are available in one and two dimensions"),
    };
    let (_, battery) = battery_for(&sec.battery, d, &domain.center(), s.seed)?;
    let residual = weak_residual(&field, &measure, &battery)?;
    if let MeasureRep::Grid(g) = &measure {
        write_grid_csv(g, &out.join("density.csv"))?;
        if d == 1 {
            let x: Vec<f64> = (0..g.len()).map(|c| g.center(c)[0]).collect();
            let svg = line_plot(
                &format!("stationary density: {}", field.label()),
                "x",
                "density",
                &[Series {
                    label: "grid solution",
                    x: &x,
                    y: g.values(),
                }],
                false,
            );
            std::fs::write(out.join("density.svg"), svg)?;
        }
        solver["mass"] = json!(g.values().iter().sum::<f64>() * g.cell_volume());
        if let Some(r) = &sec.reference {
            solver["l1_to_reference"] = json!(l1_to_reference(g, &r.build(base)?)?);
        }
    }
    let summary = format!(
        "{}: {} on {:?}, max weak residual {:.3e}",
        field.label(),
        solver["outcome"].as_str().unwrap_or("?"),
        sec.n,
        residual.max_abs
    );
    let results = json!({ "field": field.label(), "solution": solver, "residual": residual });
    Ok((results, Status::Ok, summary))
}

fn run_residual(s: &Scenario, base: &Path) -> Result<(Value, Status, String)> {
    let sec = section(&s.residual, "residual")?;
    let field = s.require_field(base)?;
    let d = field.d();
    let mu = sec.measure.build(base)?;
    let (_, battery) = battery_for(&sec.battery, d, &vec![0.0; d], s.seed)?;
    let rep = weak_residual(&field, &mu, &battery)?;
    let mut summary = format!(
        "{} against {}: max |residual| {:.3e}, max normalized {:.3e}",
        field.label(),
        mu.label(),
        rep.max_abs,
        rep.max_normalized
    );
    let mut results = json!({ "field": field.label(), "measure": mu.label(), "residual": rep });
    if let Some(doubled) = &sec.doubled {
        let coupling = match doubled.kind {
            CouplingKind::Product => {
                let nu = match &doubled.nu {
                    Some(spec) => spec.build(base)?,
                    None => mu.clone(),
                };
                CouplingMeasure::product(mu.clone(), nu)?
            }
            CouplingKind::Diagonal => CouplingMeasure::diagonal(mu.clone()),
        };
        let (_, battery) = battery_for(&doubled.battery, 2 * d, &vec![0.0; 2 * d], s.seed)?;
        let rep = doubled_weak_residual(&field, &coupling, &battery)?;
        summary.push_str(&format!(
            "; doubled ({}) max {:.3e}",
            coupling.label(),
            rep.max_abs
        ));
        results["doubled"] = json!({ "coupling": coupling.label(), "residual": rep });
    }
    if let Some(l) = &sec.lyapunov {
        let radii = radial_grid(l.r_max, l.points);
        let bound = l.bound.map(|[n, m]| PowerBound { n, m });
        let rep = lyapunov_check(&field, &l.powers, &radii, &l.constants, bound)?;
        results["lyapunov"] = json!(rep);
    }
    Ok((results, Status::Ok, summary))
}

fn source_hash(spec: &MeasureSpec, base: &Path) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec)?);
    if let MeasureSpec::GridCsv { path } | MeasureSpec::EmpiricalCsv { path } = spec {
        h.update(std::fs::read(base.join(path))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn run_mollify(s: &Scenario, base: &Path, out: &Path) -> Result<(Value, Status, String)> {
    let sec = section(&s.mollify, "mollify")?;
    let field = s.require_field(base)?;
    let d = field.d();
    let mu = sec.measure.build(base)?;
    let nu = sec.nu.as_ref().map(|n| n.build(base)).transpose()?;
    let spec = GridSpec {
        cells_per_eps: sec.cells_per_eps,
        domain: None,
    };
    let (_, battery) = battery_for(&sec.battery, d, &vec![0.0; d], s.seed)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &eps in &sec.eps {
        let sys = regularize_coefficients(&field, &mu, eps, &spec)?;
        let other = nu
            .as_ref()
            .map(|n| regularize_coefficients(&field, n, eps, &spec))
            .transpose()?;
        let residual = regularized_residual(&sys, &battery)?;
        let gap = weak_gap(&sys, &mu, &battery)?;
        let psd =
            doubled_regularized_psd(&sys, other.as_ref().unwrap_or(&sys), sec.psd_pairs, s.seed)?;
        let drift = sec
            .drift_radius
            .map(|r| sys.quadratic_drift_max(r))
            .transpose()?;
        let file = format!("mollified_eps{eps}.csv");
        if sec.write_csv {
            sys.write_csv(&out.join(&file))?;
        }
        lines.push(format!(
            "eps {eps}: mass {:.12}, residual {:.3e}, weak gap {:.3e}, psd margin {:.3e}",
            sys.mass, residual.max_abs, gap, psd.min_margin
        ));
        rows.push(json!({
            "eps": eps,
            "system": sys,
            "floor_margin": sys.floor_margin(),
            "residual": residual,
            "weak_gap": gap,
            "psd": psd,
            "quadratic_drift_max": drift,
            "csv": sec.write_csv.then_some(file),
        }));
    }
    let manifest = json!({
        "source": mu.label(),
        "source_sha256": source_hash(&sec.measure, base)?,
        "nu_sha256": sec.nu.as_ref().map(|n| source_hash(n, base)).transpose()?,
        "cells_per_eps": sec.cells_per_eps,
        "eps": sec.eps,
    });
    let results = json!({ "field": field.label(), "manifest": manifest, "systems": rows });
    Ok((results, Status::Ok, lines.join("\n")))
}

fn run_suite(s: &Scenario, out: &Path) -> Result<(Value, Status, String)> {
    let only = s.suite.as_ref().map(|x| x.only.clone()).unwrap_or_default();
    let ran = suite::run_all(s.seed, &only, out)?;
    let timings: Vec<Value> = ran
        .iter()
        .map(|(o, secs)| json!({ "id": o.id, "seconds": secs, "budget_seconds": o.budget_seconds }))
        .collect();
    std::fs::write(
        out.join("timings.json"),
        serde_json::to_string_pretty(&timings)? + "\n",
    )?;
    let table = suite::summary_table(&ran);
    std::fs::write(out.join("summary.txt"), &table)?;
    let all_pass = ran.iter().all(|(o, _)| o.passed);
    let outcomes: Vec<_> = ran.into_iter().map(|(o, _)| o).collect();
    let results = json!({ "criteria": outcomes, "all_passed": all_pass });
    Ok((
        results,
        if all_pass {
            Status::Ok
        } else {
            Status::Finding
        },
        table,
    ))
}

/// Report JSON for `scenario` as run inside a pool of `threads` workers.
pub fn report_with_threads(
    scenario: &Scenario,
    task: Task,
    base: &Path,
    out: &Path,
    threads: usize,
) -> Result<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    pool.install(|| run_scenario(scenario, task, base, out))?
        .report
        .to_json()
}
