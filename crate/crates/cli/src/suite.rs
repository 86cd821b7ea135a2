//! Regression suite over the worked examples and module contracts.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use kolmocouple::certify::{
    check_example4, check_theorem1, Criterion, ProbePair, ScanRegion, Verdict,
};
use kolmocouple::coeff::{make_builtin, CoefficientField, FieldParams};
use kolmocouple::coupling::{contraction_rate, simulate_coupled, InitialLaw, SimulationParams};
use kolmocouple::doubling::{apply_doubled, doubled_blocks, psd_margin, q_value};
use kolmocouple::fpk::{
    default_battery, doubled_weak_residual, solve_1d, solve_2d, weak_residual, CoordinateProduct,
    Cutoff, CutoffMode, HalfSquaredDistance, Product, Solve1dOutcome, Solve2dOptions, TestFunction,
};
use kolmocouple::measures::{
    example1_density, gaussian_density, CouplingMeasure, EmpiricalMeasure, MeasureRep, SupportBox,
};
use kolmocouple::mollify::{
    doubled_regularized_psd, regularize_coefficients, regularized_residual, GridSpec,
};
use kolmocouple::rng;
use rand::Rng;
use serde::Serialize;

use crate::run::report_with_threads;
use crate::scenario::{parse_scenario, Scenario, Task};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance bound, e.g. `<= 1e-10`.
    pub bound: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("<= {limit:e}"),
            passed: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!(">= {limit:e}"),
            passed: value >= limit,
        }
    }

    fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("{target} ± {tol:e}"),
            passed: (value - target).abs() <= tol,
        }
    }

    fn flag(name: &str, ok: bool, what: &str) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: what.into(),
            passed: ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub budget_seconds: f64,
    pub checks: Vec<Check>,
    pub note: Option<String>,
}

type CriterionFn = fn(u64, &Path) -> Result<(Vec<Check>, Option<String>)>;

pub struct CriterionDef {
    pub id: &'static str,
    pub title: &'static str,
    pub budget_seconds: f64,
    run: CriterionFn,
}

pub const CRITERIA: &[CriterionDef] = &[
    CriterionDef {
        id: "1",
        title: "doubling identity",
        budget_seconds: 5.0,
        run: doubling_identity,
    },
    CriterionDef {
        id: "2",
        title: "psd of doubled diffusion",
        budget_seconds: 30.0,
        run: psd,
    },
    CriterionDef {
        id: "3",
        title: "power-law non-uniqueness",
        budget_seconds: 120.0,
        run: power_law_non_uniqueness,
    },
    CriterionDef {
        id: "4",
        title: "ou contraction",
        budget_seconds: 120.0,
        run: ou_contraction,
    },
    CriterionDef {
        id: "5",
        title: "product gaussian counterexample",
        budget_seconds: 30.0,
        run: product_gaussian,
    },
    CriterionDef {
        id: "6",
        title: "tanh dichotomy",
        budget_seconds: 120.0,
        run: tanh_dichotomy,
    },
    CriterionDef {
        id: "7",
        title: "isotropic margin",
        budget_seconds: 60.0,
        run: isotropic_margin,
    },
    CriterionDef {
        id: "8",
        title: "mollification identity",
        budget_seconds: 120.0,
        run: mollification,
    },
    CriterionDef {
        id: "9",
        title: "2d solver cross-check",
        budget_seconds: 300.0,
        run: solver_2d,
    },
    CriterionDef {
        id: "10",
        title: "determinism",
        budget_seconds: 300.0,
        run: determinism,
    },
];

/// Runs one criterion, adding the runtime check. Returns the outcome and elapsed seconds.
pub fn run_criterion(def: &CriterionDef, seed: u64, out: &Path) -> (CriterionOutcome, f64) {
    let start = Instant::now();
    let result = (def.run)(seed, out);
    let secs = start.elapsed().as_secs_f64();
    let (mut checks, note) = match result {
        Ok(r) => r,
        Err(e) => (
            vec![Check::flag("completed", false, "no error")],
            Some(format!("error: {e:#}")),
        ),
    };
    checks.push(Check {
        name: "within_budget".into(),
        value: if secs <= def.budget_seconds { 1.0 } else { 0.0 },
        bound: format!("runtime < {} s", def.budget_seconds),
        passed: secs <= def.budget_seconds,
    });
    let outcome = CriterionOutcome {
        id: def.id.into(),
        title: def.title.into(),
        passed: checks.iter().all(|c| c.passed),
        budget_seconds: def.budget_seconds,
        checks,
        note,
    };
    (outcome, secs)
}

pub fn find(id: &str) -> Result<&'static CriterionDef> {
    CRITERIA
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| anyhow!("unknown criterion `{id}`"))
}

/// Runs the selected criteria (all when `only` is empty) in order.
pub fn run_all(seed: u64, only: &[String], out: &Path) -> Result<Vec<(CriterionOutcome, f64)>> {
    let defs: Vec<&CriterionDef> = if only.is_empty() {
        CRITERIA.iter().collect()
    } else {
        only.iter().map(|id| find(id)).collect::<Result<_>>()?
    };
    Ok(defs
        .into_iter()
        .map(|d| run_criterion(d, seed, out))
        .collect())
}

pub fn summary_line(o: &CriterionOutcome, secs: f64) -> String {
    let worst = o
        .checks
        .iter()
        .find(|c| !c.passed)
        .or_else(|| o.checks.first())
        .map(|c| format!("{}={:.6e} ({})", c.name, c.value, c.bound))
        .unwrap_or_default();
    format!(
        "{} {:>2} {:<32} {} runtime {:.1}s/{}s",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.title,
        worst,
        secs,
        o.budget_seconds
    )
}

pub fn summary_table(ran: &[(CriterionOutcome, f64)]) -> String {
    let mut s = String::new();
    for (o, secs) in ran {
        s.push_str(&summary_line(o, *secs));
        s.push('\n');
    }
    let passed = ran.iter().filter(|(o, _)| o.passed).count();
    s.push_str(&format!("{passed}/{} criteria passed\n", ran.len()));
    s
}

fn builtin(params: FieldParams) -> Result<CoefficientField> {
    Ok(make_builtin(&params)?)
}

fn random_field<R: Rng>(rng: &mut R) -> Result<CoefficientField> {
    let d = rng.random_range(1..=3usize);
    let p: f64 = rng.random();
    builtin(match rng.random_range(0..6u32) {
        0 => FieldParams::PowerLaw {
            d,
            alpha: 0.5 + 2.5 * p,
        },
        1 => FieldParams::OrnsteinUhlenbeck {
            d,
            lambda: 0.2 + p,
            sigma0: 0.3 + p,
        },
        2 => FieldParams::Isotropic {
            d,
            scale: 0.5 + p,
            exponent: 0.5 + p,
            drift_rate: p,
        },
        3 => FieldParams::DiagonalMap {
            slope: vec![1.0 + p; d],
            bend: p,
            drift_rate: 1.0,
        },
        4 => FieldParams::Tanh1d,
        _ => FieldParams::Constant {
            d,
            d1: 2,
            sigma: (0..2 * d).map(|i| p - 0.3 * i as f64).collect(),
            drift: vec![p; d],
        },
    })
}

fn random_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-4.0..4.0)).collect()
}

const TRIPLES: usize = 10_000;

fn doubling_identity(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let mut rng = rng::stream(seed, rng::domain::SUITE, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIPLES {
        let f = random_field(&mut rng)?;
        let (x, y) = (random_point(&mut rng, f.d()), random_point(&mut rng, f.d()));
        let q = q_value(&f, &x, &y)?;
        let l = apply_doubled(&f, &HalfSquaredDistance { d: f.d() }, &x, &y)?;
        worst = worst.max((l - q).abs() / (1.0 + q.abs()));
    }
    Ok((
        vec![
            Check::at_least("triples", TRIPLES as f64, 1e4),
            Check::at_most("max |L psi - q| / (1 + |q|)", worst, 1e-10),
        ],
        None,
    ))
}

fn psd(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let mut rng = rng::stream(seed, rng::domain::SUITE, 2);
    let mut raw: f64 = f64::INFINITY;
    for _ in 0..TRIPLES {
        let f = random_field(&mut rng)?;
        let (x, y) = (random_point(&mut rng, f.d()), random_point(&mut rng, f.d()));
        raw = raw.min(psd_margin(&doubled_blocks(&f, &x, &y)?.a_block)?);
    }
    let f1 = builtin(FieldParams::PowerLaw { d: 1, alpha: 1.0 })?;
    let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![1.0])?);
    let nu = MeasureRep::dirac(vec![0.5]);
    let spec = GridSpec::default();
    let s_mu = regularize_coefficients(&f1, &mu, 0.2, &spec)?;
    let s_nu = regularize_coefficients(&f1, &nu, 0.2, &spec)?;
    let one_d = doubled_regularized_psd(&s_mu, &s_nu, TRIPLES, seed)?;
    let f2 = builtin(FieldParams::Isotropic {
        d: 2,
        scale: 1.0,
        exponent: 1.0,
        drift_rate: 1.0,
    })?;
    let emp = MeasureRep::Empirical(EmpiricalMeasure::new(
        2,
        vec![0.0, 0.0, 1.0, 0.5, -0.5, 1.0, 0.3, -0.8],
        vec![0.25; 4],
    )?);
    let spec2 = GridSpec {
        cells_per_eps: 4.0,
        domain: None,
    };
    let s_emp = regularize_coefficients(&f2, &emp, 0.4, &spec2)?;
    let s_dir = regularize_coefficients(&f2, &MeasureRep::dirac(vec![0.2, -0.1]), 0.4, &spec2)?;
    let two_d = doubled_regularized_psd(&s_emp, &s_dir, TRIPLES, seed)?;
    Ok((
        vec![
            Check::at_least("raw min eigenvalue", raw, -1e-9),
            Check::at_least("mollified 1d min eigenvalue", one_d.min_margin, -1e-9),
            Check::at_least("mollified 2d min eigenvalue", two_d.min_margin, -1e-9),
            Check::at_least("pairs per system", one_d.pairs.min(two_d.pairs) as f64, 1e4),
        ],
        None,
    ))
}

fn power_law_non_uniqueness(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let f = builtin(FieldParams::PowerLaw { d: 3, alpha: 2.0 })?;
    let battery = default_battery(3, &SupportBox::around(&[0.0; 3], 2.0), 20, seed);
    let dirac = weak_residual(&f, &MeasureRep::dirac(vec![0.0; 3]), &battery)?;
    let density = example1_density(3)?;
    let normalizer = density.normalizer();
    let smooth = weak_residual(&f, &MeasureRep::Analytic(density), &battery)?;
    let (p1, p2) = (
        (vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]),
        (vec![0.1, 0.0, 0.0], vec![0.2, 0.0, 0.0]),
    );
    let region = ScanRegion {
        radius: 3.0,
        sample_budget: 20_000,
        multistart_count: 8,
        rng_seed: seed,
        probes: vec![
            ProbePair {
                x: p1.0.clone(),
                y: p1.1.clone(),
            },
            ProbePair {
                x: p2.0.clone(),
                y: p2.1.clone(),
            },
        ],
        ..ScanRegion::default()
    };
    let cert = check_theorem1(&f, &region)?;
    let probe_q = |k: usize| -> f64 {
        let w = &cert.probes[k];
        let d2: f64 = w.x.iter().zip(&w.y).map(|(a, b)| (a - b).powi(2)).sum();
        w.value * d2
    };
    let signs = cert.witnesses.iter().any(|w| w.value < 0.0)
        && cert.witnesses.iter().any(|w| w.value > 0.0);
    Ok((
        vec![
            Check::at_most("dirac residual", dirac.max_abs, 0.0),
            Check::at_most("density normalized residual", smooth.max_normalized, 1e-5),
            Check::within("C", normalizer, 0.0634936, 1e-6),
            Check::flag("verdict", cert.verdict == Verdict::Violated, "violated"),
            Check::flag("witness signs", signs, "negative and positive witnesses"),
            Check::within("q((1,0,0),(2,0,0))", probe_q(0), -4.0, 1e-9),
            Check::within("q((0.1,0,0),(0.2,0,0))", probe_q(1), 0.0293, 1e-9),
            Check::within(
                "q direct (0.1,0.2)",
                q_value(&f, &p2.0, &p2.1)?,
                0.0293,
                1e-9,
            ),
        ],
        None,
    ))
}

fn ou_rate(h: f64, seed: u64) -> Result<f64> {
    let f = builtin(FieldParams::OrnsteinUhlenbeck {
        d: 2,
        lambda: 1.0,
        sigma0: 1.0,
    })?;
    let params = SimulationParams {
        h,
        horizon: 5.0,
        paths: 10_000,
        seed,
        snapshots: 100,
    };
    let ens = simulate_coupled(
        &f,
        &InitialLaw::Gaussian {
            mean: vec![1.0, 0.0],
            var: vec![0.5, 0.5],
        },
        &InitialLaw::Point { x: vec![-1.0, 0.0] },
        &params,
    )?;
    Ok(contraction_rate(&ens, (1.0, 4.0))?.rate)
}

fn ou_contraction(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let h = 1e-3;
    let coarse = ou_rate(h, seed)?;
    let fine = ou_rate(h / 2.0, seed)?;
    let (e1, e2) = ((coarse - 1.0).abs(), (fine - 1.0).abs());
    Ok((
        vec![
            Check::within("rate at h", coarse, 1.0, 0.02),
            Check::at_most("error ratio h/2 : h", e2 / e1, 0.6),
            Check::within("rate at h vs -ln(1-h)/h", coarse, -(1.0 - h).ln() / h, 1e-6),
        ],
        None,
    ))
}

fn product_gaussian(_: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let f = builtin(FieldParams::OrnsteinUhlenbeck {
        d: 1,
        lambda: 1.0,
        sigma0: 0.5f64.sqrt(),
    })?;
    let gamma = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5])?);
    let psi: TestFunction = Arc::new(Product(
        Arc::new(CoordinateProduct { n: 2, i: 0, j: 1 }),
        Arc::new(Cutoff::squared_norm(2, 16.0, CutoffMode::QuadraticArg)),
    ));
    let battery = [psi];
    let product = doubled_weak_residual(
        &f,
        &CouplingMeasure::product(gamma.clone(), gamma.clone())?,
        &battery,
    )?;
    let diagonal = doubled_weak_residual(&f, &CouplingMeasure::diagonal(gamma), &battery)?;
    Ok((
        vec![
            Check::within("product coupling", product.entries[0].residual, 1.0, 2e-3),
            Check::within("diagonal coupling", diagonal.entries[0].residual, 0.0, 2e-3),
        ],
        None,
    ))
}

fn tanh_dichotomy(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let f = builtin(FieldParams::Tanh1d)?;
    let dirac_at_zero = match solve_1d(&f, -5.0, 5.0, 400)? {
        Solve1dOutcome::Dirac { dirac, .. } => dirac.atom[0].abs() <= 1e-12,
        _ => false,
    };
    let region = ScanRegion {
        radius: 5.0,
        sample_budget: 20_000,
        multistart_count: 8,
        rng_seed: seed,
        ..ScanRegion::default()
    };
    let cert = check_theorem1(&f, &region)?;
    let params = SimulationParams {
        h: 1e-2,
        horizon: 50.0,
        paths: 2000,
        seed,
        snapshots: 100,
    };
    let ens = simulate_coupled(
        &f,
        &InitialLaw::Point { x: vec![1.0] },
        &InitialLaw::Point { x: vec![-1.0] },
        &params,
    )?;
    let last = ens.stats.last().ok_or_else(|| anyhow!("empty ensemble"))?;
    let first = ens.stats[0].mean_sq_diff;
    let note = (last.mean_sq_diff >= 1e-3).then(|| {
        format!(
            "E|X_T - Y_T|^2 went from {first:.3} to {:.3}; with b = 0 and shared noise, d E|X - Y|^2 = 2 E(tanh X - tanh Y)^2 dt >= 0",
            last.mean_sq_diff
        )
    });
    Ok((
        vec![
            Check::flag("1d solver outcome", dirac_at_zero, "dirac at 0"),
            Check::flag(
                "theorem1 certificate",
                cert.criterion == Criterion::Theorem1Positive
                    && cert.verdict == Verdict::HoldsOnRegion,
                "theorem1_positive holds_on_region",
            ),
            Check::at_most("E|X_T - Y_T|^2 at T = 50", last.mean_sq_diff, 1e-3),
        ],
        note,
    ))
}

fn isotropic_margin(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let f = builtin(FieldParams::Isotropic {
        d: 2,
        scale: 1.0,
        exponent: 1.0,
        drift_rate: 1.0,
    })?;
    let region = ScanRegion {
        radius: 5.0,
        sample_budget: 50_000,
        multistart_count: 16,
        rng_seed: seed,
        ..ScanRegion::default()
    };
    let cert = check_example4(&f, &region)?;
    let margin = *cert
        .margins
        .get("strict_gap_min")
        .ok_or_else(|| anyhow!("certificate has no strict_gap_min margin"))?;
    Ok((
        vec![
            Check::within("min (2r - q)/|x - y|^2", margin, 1.0, 1e-6),
            Check::flag(
                "verdict",
                cert.verdict == Verdict::HoldsOnRegion,
                "holds_on_region",
            ),
        ],
        None,
    ))
}

fn mollification(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let f = builtin(FieldParams::OrnsteinUhlenbeck {
        d: 1,
        lambda: 1.0,
        sigma0: 0.5f64.sqrt(),
    })?;
    let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5])?);
    let battery = default_battery(1, &SupportBox::around(&[0.0], 3.0), 10, seed);
    let residual = |cells: f64| -> Result<f64> {
        let s = regularize_coefficients(
            &f,
            &mu,
            0.1,
            &GridSpec {
                cells_per_eps: cells,
                domain: None,
            },
        )?;
        Ok(regularized_residual(&s, &battery)?.max_abs)
    };
    let (r8, r16) = (residual(8.0)?, residual(16.0)?);
    Ok((
        vec![
            Check::at_most("residual at spacing eps/8", r8, 1e-4),
            Check::at_least("reduction factor at eps/16", r8 / r16, 1.5),
        ],
        None,
    ))
}

/// L¹ distance of the grid solution from `N(0, I/2)` on `ℝ²`.
fn l1_to_half_gaussian(g: &kolmocouple::measures::GridDensity) -> Result<f64> {
    let gauss = gaussian_density(vec![0.0, 0.0], vec![0.5, 0.0, 0.0, 0.5])?;
    let vol = g.cell_volume();
    Ok((0..g.len())
        .map(|c| (g.values()[c] - gauss.density(&g.center(c))).abs() * vol)
        .sum())
}

fn solver_2d(seed: u64, _: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let f = builtin(FieldParams::OrnsteinUhlenbeck {
        d: 2,
        lambda: 1.0,
        sigma0: 0.5f64.sqrt(),
    })?;
    let bx = SupportBox::around(&[0.0, 0.0], 4.0);
    let battery = default_battery(2, &SupportBox::around(&[0.0, 0.0], 2.5), 20, seed);
    let mut residuals = Vec::new();
    let mut l1 = f64::NAN;
    for n in [64, 128, 256] {
        let rep = solve_2d(&f, &bx, n, n, &Solve2dOptions::default())?;
        if n == 128 {
            l1 = l1_to_half_gaussian(&rep.density)?;
        }
        residuals.push(weak_residual(&f, &MeasureRep::Grid(rep.density), &battery)?.max_abs);
    }
    Ok((
        vec![
            Check::at_most("L1 to product gaussian at 128^2", l1, 5e-2),
            Check::at_most("residual ratio 128/64", residuals[1] / residuals[0], 0.6),
            Check::at_most("residual ratio 256/128", residuals[2] / residuals[1], 0.6),
        ],
        None,
    ))
}

const DETERMINISM_SCENARIOS: &[(&str, Task, &str)] = &[
    (
        "certify-ou",
        Task::Certify,
        r#"
name = "certify-ou"
[field]
family = "ornstein_uhlenbeck"
d = 2
lambda = 1.0
sigma0 = 1.0
[certify]
criterion = "theorem1"
region = { radius = 4.0, sample_budget = 4000, multistart_count = 4 }
"#,
    ),
    (
        "simulate-power-law",
        Task::Simulate,
        r#"
name = "simulate-power-law"
[field]
family = "power_law"
d = 2
alpha = 1.0
[simulate]
h = 0.01
horizon = 2.0
paths = 301
snapshots = 20
mu0 = { kind = "gaussian", mean = [1.0, 0.0], var = [0.2, 0.2] }
nu0 = { kind = "point", x = [-1.0, 0.5] }
"#,
    ),
    (
        "residual-example1",
        Task::Residual,
        r#"
name = "residual-example1"
[field]
family = "power_law"
d = 3
alpha = 2.0
[residual]
measure = { kind = "example1" }
battery = { count = 4, half_width = 2.0 }
"#,
    ),
    (
        "solve-ou-1d",
        Task::Solve,
        r#"
name = "solve-ou-1d"
[field]
family = "ornstein_uhlenbeck"
d = 1
lambda = 1.0
sigma0 = 0.7071067811865476
[solve]
lo = [-4.0]
hi = [4.0]
n = [200]
"#,
    ),
    (
        "mollify-ou",
        Task::Mollify,
        r#"
name = "mollify-ou"
[field]
family = "ornstein_uhlenbeck"
d = 1
lambda = 1.0
sigma0 = 0.7071067811865476
[mollify]
measure = { kind = "gaussian", mean = [0.0], cov = [0.5] }
eps = [0.2]
psd_pairs = 2000
"#,
    ),
];

fn determinism(seed: u64, out: &Path) -> Result<(Vec<Check>, Option<String>)> {
    let root = out.join("determinism");
    let mut checks = Vec::new();
    for (name, task, text) in DETERMINISM_SCENARIOS {
        let mut s = parse_scenario(text)?;
        s.seed = seed;
        let dir = root.join(name);
        let one = report_with_threads(&s, *task, &dir, &dir.join("threads1"), 1)?;
        let four = report_with_threads(&s, *task, &dir, &dir.join("threads4"), 4)?;
        let embedded: Scenario = serde_json::from_value(
            serde_json::from_str::<serde_json::Value>(&one)?["scenario"].clone(),
        )?;
        let again = report_with_threads(&embedded, *task, &dir, &dir.join("rerun"), 3)?;
        checks.push(Check::flag(
            &format!("{name}: 1 vs 4 threads"),
            one == four,
            "identical bytes",
        ));
        checks.push(Check::flag(
            &format!("{name}: rerun from embedded scenario"),
            one == again,
            "identical bytes",
        ));
    }
    if checks.is_empty() {
        bail!("no determinism scenarios");
    }
    Ok((checks, None))
}
