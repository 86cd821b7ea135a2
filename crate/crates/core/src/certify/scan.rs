//! Random pair sampling with multistart local refinement.

use rand::Rng;
use rayon::prelude::*;

use crate::coeff::CoefficientField;
use crate::doubling::{PairEvaluator, PairTerms};
use crate::error::Result;
use crate::linalg;
use crate::rng;

use super::{ScanRegion, Witness};

/// Everything an objective may look at for one pair.
pub struct PairContext<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub terms: PairTerms,
    pub sigma_x: &'a [f64],
    pub sigma_y: &'a [f64],
    pub sigma_gap: f64,
}

pub type ObjectiveFn<'a> = Box<dyn Fn(&PairContext) -> Result<f64> + Send + Sync + 'a>;

pub struct Objective<'a> {
    pub name: &'static str,
    pub eval: ObjectiveFn<'a>,
    pub minimize: bool,
    pub maximize: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Extremes {
    pub name: &'static str,
    pub min: Option<Witness>,
    pub max: Option<Witness>,
    pub negatives: usize,
    pub positives: usize,
}

pub struct ScanOutcome {
    pub extremes: Vec<Extremes>,
    pub probes: Vec<Witness>,
    pub evaluations: usize,
}

fn evaluate(ev: &mut PairEvaluator, objs: &[Objective], x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let terms = ev.terms(x, y)?;
    let (sx, sy) = ev.sigmas();
    let ctx = PairContext {
        x,
        y,
        terms,
        sigma_x: sx,
        sigma_y: sy,
        sigma_gap: ev.sigma_gap(),
    };
    objs.iter().map(|o| (o.eval)(&ctx)).collect()
}

fn feasible(region: &ScanRegion, x: &[f64], y: &[f64]) -> bool {
    let slack = 1.0 + 1e-12;
    linalg::norm(x) <= region.radius * slack
        && linalg::norm(y) <= region.radius * slack
        && linalg::dist_sq(x, y).sqrt() >= region.separation_floor
}

/// Pair `i` of the scan, drawn from its own stream.
pub fn sample_pair(region: &ScanRegion, d: usize, i: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::stream(region.rng_seed, rng::domain::SCAN, i as u64);
    let big = region.radius;
    let delta = region.separation_floor;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut u = vec![0.0; d];
    for _ in 0..64 {
        match i % 3 {
            0 => {
                rng::uniform_in_ball(&mut r, big, &mut x);
                rng::uniform_in_ball(&mut r, big, &mut y);
            }
            1 => {
                rng::uniform_in_ball(&mut r, big, &mut x);
                rng::unit_vector(&mut r, &mut u);
                let s = rng::log_uniform(&mut r, delta, (0.25 * big).max(2.0 * delta));
                for k in 0..d {
                    y[k] = x[k] + s * u[k];
                }
                if linalg::norm(&y) > big {
                    for k in 0..d {
                        y[k] = x[k] - s * u[k];
                    }
                }
            }
            _ => {
                let rx = rng::log_uniform(&mut r, delta, big);
                let ry = rng::log_uniform(&mut r, delta, big);
                rng::unit_vector(&mut r, &mut u);
                x.iter_mut().zip(&u).for_each(|(a, b)| *a = rx * b);
                if r.random_bool(0.5) {
                    rng::unit_vector(&mut r, &mut u);
                }
                y.iter_mut().zip(&u).for_each(|(a, b)| *a = ry * b);
            }
        }
        if feasible(region, &x, &y) {
            return (x, y);
        }
    }
    x.fill(0.0);
    y.fill(0.0);
    x[0] = 0.5 * big;
    y[0] = -0.5 * big;
    (x, y)
}

fn project(region: &ScanRegion, z: &mut [f64], d: usize) {
    for part in [0..d, d..2 * d] {
        let n = linalg::norm(&z[part.clone()]);
        if n > region.radius {
            z[part].iter_mut().for_each(|v| *v *= region.radius / n);
        }
    }
}

/// Local minimization of `sign · objective` from `z0`; gradient steps with a
/// pattern-search fallback.
fn refine(
    ev: &mut PairEvaluator,
    objs: &[Objective],
    which: usize,
    sign: f64,
    region: &ScanRegion,
    z0: Vec<f64>,
    v0: f64,
) -> Result<(Vec<f64>, f64, usize)> {
    let d = z0.len() / 2;
    let mut evals = 0usize;
    let mut f = |z: &[f64], evals: &mut usize| -> Result<Option<f64>> {
        if !feasible(region, &z[..d], &z[d..]) {
            return Ok(None);
        }
        *evals += 1;
        let v = evaluate(ev, objs, &z[..d], &z[d..])?[which] * sign;
        Ok(if v.is_finite() { Some(v) } else { None })
    };
    let mut z = z0;
    let mut v = v0 * sign;
    let mut alpha = 0.05 * (1.0 + linalg::norm(&z));
    let mut grad = vec![0.0; 2 * d];
    let mut trial = vec![0.0; 2 * d];
    for _ in 0..60 {
        let mut ok = true;
        for k in 0..2 * d {
            let h = 1e-5 * (1.0 + z[k].abs());
            trial.copy_from_slice(&z);
            trial[k] = z[k] + h;
            let up = f(&trial, &mut evals)?;
            trial[k] = z[k] - h;
            let down = f(&trial, &mut evals)?;
            grad[k] = match (up, down) {
                (Some(a), Some(b)) => (a - b) / (2.0 * h),
                (Some(a), None) => (a - v) / h,
                (None, Some(b)) => (v - b) / h,
                (None, None) => {
                    ok = false;
                    0.0
                }
            };
        }
        let gn = linalg::norm(&grad);
        let mut improved = false;
        if ok && gn.is_finite() && gn > 0.0 {
            let mut t = alpha;
            for _ in 0..30 {
                for k in 0..2 * d {
                    trial[k] = z[k] - t * grad[k] / gn;
                }
                project(region, &mut trial, d);
                if let Some(nv) = f(&trial, &mut evals)? {
                    if nv < v {
                        z.copy_from_slice(&trial);
                        v = nv;
                        alpha = 2.0 * t;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        if !improved {
            let mut step = 0.1 * (1.0 + linalg::norm(&z));
            while !improved && step > 1e-10 * (1.0 + linalg::norm(&z)) {
                for k in 0..2 * d {
                    for s in [step, -step] {
                        trial.copy_from_slice(&z);
                        trial[k] += s;
                        project(region, &mut trial, d);
                        if let Some(nv) = f(&trial, &mut evals)? {
                            if nv < v {
                                z.copy_from_slice(&trial);
                                v = nv;
                                improved = true;
                            }
                        }
                    }
                }
                step *= 0.25;
            }
            alpha = step.max(1e-6);
        }
        if !improved {
            break;
        }
    }
    Ok((z, v * sign, evals))
}

fn witness(name: &'static str, z: &[f64], d: usize, value: f64) -> Witness {
    Witness {
        quantity: name.to_string(),
        x: z[..d].to_vec(),
        y: z[d..].to_vec(),
        value,
    }
}

/// Samples the region, refines the best candidates, and reports extremes per objective.
pub fn run_scan(
    field: &CoefficientField,
    region: &ScanRegion,
    objs: &[Objective],
) -> Result<ScanOutcome> {
    region.validate()?;
    let d = field.d();
    let n = region.sample_budget;
    let values: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map_init(
            || PairEvaluator::new(field),
            |ev, i| {
                let (x, y) = sample_pair(region, d, i);
                evaluate(ev, objs, &x, &y)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut ev = PairEvaluator::new(field);
    let mut probe_vals = Vec::new();
    let mut probes = Vec::new();
    for p in &region.probes {
        super::check_dims(d, &p.x, &p.y)?;
        let v = evaluate(&mut ev, objs, &p.x, &p.y)?;
        for (o, val) in objs.iter().zip(&v) {
            probes.push(Witness {
                quantity: o.name.to_string(),
                x: p.x.clone(),
                y: p.y.clone(),
                value: *val,
            });
        }
        probe_vals.push(v);
    }
    let pair_of = |idx: usize| -> Vec<f64> {
        if idx < n {
            let (x, y) = sample_pair(region, d, idx);
            [x, y].concat()
        } else {
            let p = &region.probes[idx - n];
            [p.x.clone(), p.y.clone()].concat()
        }
    };
    let all = |idx: usize, j: usize| {
        if idx < n {
            values[idx][j]
        } else {
            probe_vals[idx - n][j]
        }
    };
    let total = n + region.probes.len();
    let mut evaluations = total;
    let mut extremes = Vec::with_capacity(objs.len());
    for (j, o) in objs.iter().enumerate() {
        let mut ex = Extremes {
            name: o.name,
            ..Default::default()
        };
        ex.negatives = values.iter().filter(|v| v[j] < 0.0).count();
        ex.positives = values.iter().filter(|v| v[j] > 0.0).count();
        for (sign, wanted) in [(1.0, o.minimize), (-1.0, o.maximize)] {
            if !wanted {
                continue;
            }
            let mut order: Vec<usize> = (0..total).filter(|&i| all(i, j).is_finite()).collect();
            order.sort_by(|&a, &b| {
                (sign * all(a, j))
                    .total_cmp(&(sign * all(b, j)))
                    .then(a.cmp(&b))
            });
            let mut starts: Vec<usize> = order
                .iter()
                .take(region.multistart_count)
                .cloned()
                .collect();
            starts.extend(n..total);
            starts.sort_unstable();
            starts.dedup();
            let refined: Vec<(Vec<f64>, f64, usize)> = starts
                .par_iter()
                .map_init(
                    || PairEvaluator::new(field),
                    |ev, &s| refine(ev, objs, j, sign, region, pair_of(s), all(s, j)),
                )
                .collect::<Result<Vec<_>>>()?;
            let mut best: Option<(Vec<f64>, f64)> = order.first().map(|&i| (pair_of(i), all(i, j)));
            for (z, v, e) in refined {
                evaluations += e;
                if best.as_ref().is_none_or(|(_, bv)| sign * v < sign * bv) {
                    best = Some((z, v));
                }
            }
            let w = best.map(|(z, v)| witness(o.name, &z, d, v));
            if sign > 0.0 {
                ex.min = w;
            } else {
                ex.max = w;
            }
        }
        extremes.push(ex);
    }
    Ok(ScanOutcome {
        extremes,
        probes,
        evaluations,
    })
}
