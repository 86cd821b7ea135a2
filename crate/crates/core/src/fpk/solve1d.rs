use serde::Serialize;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::measures::{DiracMeasure, GridDensity};
use crate::quadrature::{adaptive, QuadOptions};

/// Relative level below which `a` counts as vanishing.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Solve1dOutcome {
    /// Zero-flux density `∝ a⁻¹ exp(∫ b/a)`.
    Density { density: GridDensity },
    /// `a` has a single zero and `b ≡ 0`, forcing `aμ = 0`.
    Dirac { dirac: DiracMeasure, zero: f64 },
    /// `a` vanishes at isolated points while `b` does not vanish identically;
    /// the stationary law of the upwind birth-death chain is returned.
    Degenerate {
        density: GridDensity,
        zeros: Vec<f64>,
        diagnostic: String,
    },
}

impl Solve1dOutcome {
    pub fn density(&self) -> Option<&GridDensity> {
        match self {
            Solve1dOutcome::Density { density } | Solve1dOutcome::Degenerate { density, .. } => {
                Some(density)
            }
            Solve1dOutcome::Dirac { .. } => None,
        }
    }
}

struct Sampler<'a> {
    field: &'a CoefficientField,
    s: Vec<f64>,
    b: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(field: &'a CoefficientField) -> Self {
        Sampler {
            field,
            s: vec![0.0; field.d1()],
            b: vec![0.0],
        }
    }

    fn eval(&mut self, x: f64) -> Result<(f64, f64)> {
        self.field.eval_into(&[x], &mut self.s, &mut self.b)?;
        Ok((self.s.iter().map(|v| v * v).sum(), self.b[0]))
    }
}

fn golden_min(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Stationary solution of `(aμ)'' − (bμ)' = 0` on `[lo, hi]` with zero flux.
pub fn solve_1d(field: &CoefficientField, lo: f64, hi: f64, n: usize) -> Result<Solve1dOutcome> {
    if field.d() != 1 {
        return Err(Error::UnsupportedDimension {
            d: field.d(),
            reason: "solve_1d needs a one-dimensional field".into(),
        });
    }
    if n < 16 {
        return Err(Error::Contract(format!(
            "solve_1d needs at least 16 cells, got {n}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Contract(format!("invalid interval [{lo}, {hi}]")));
    }
    let h = (hi - lo) / n as f64;
    let mut sampler = Sampler::new(field);
    // Even samples are faces, odd samples are cell centres.
    let xs: Vec<f64> = (0..=2 * n).map(|k| lo + 0.5 * h * k as f64).collect();
    let mut a = Vec::with_capacity(xs.len());
    let mut b = Vec::with_capacity(xs.len());
    for &x in &xs {
        let (av, bv) = sampler.eval(x)?;
        a.push(av);
        b.push(bv);
    }
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    if a_max == 0.0 {
        return Err(Error::UnsupportedDegeneracy(
            "a vanishes on the whole interval".into(),
        ));
    }
    let thr = DEGENERACY_THRESHOLD * a_max;
    let b_max = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let drift_free = b_max <= 1e-12;

    let mut zeros: Vec<f64> = Vec::new();
    let mut run = 0usize;
    for k in 0..xs.len() {
        if a[k] < thr {
            run += 1;
            if run >= 3 {
                return Err(Error::UnsupportedDegeneracy(format!(
                    "a vanishes on an interval near x = {}",
                    xs[k]
                )));
            }
        } else {
            run = 0;
        }
        let is_min = (k == 0 || a[k] <= a[k - 1]) && (k + 1 == xs.len() || a[k] <= a[k + 1]);
        if !is_min {
            continue;
        }
        let (x0, x1) = (xs[k.saturating_sub(1)], xs[(k + 1).min(xs.len() - 1)]);
        let mut fa = |x: f64| sampler.eval(x).map(|v| v.0);
        let (xm, am) = golden_min(&mut fa, x0, x1)?;
        let (xz, az) = if a[k] <= am { (xs[k], a[k]) } else { (xm, am) };
        if az < thr && zeros.last().is_none_or(|z| (xz - z).abs() > h) {
            zeros.push(xz);
        }
    }

    if zeros.is_empty() {
        return closed_form(field, lo, hi, n, &a, &b)
            .map(|density| Solve1dOutcome::Density { density });
    }
    if drift_free {
        if zeros.len() > 1 {
            return Err(Error::UnsupportedDegeneracy(format!(
                "a vanishes at {zeros:?} with b = 0; every convex combination of the atoms is stationary"
            )));
        }
        let zero = zeros[0];
        return Ok(Solve1dOutcome::Dirac {
            dirac: DiracMeasure { atom: vec![zero] },
            zero,
        });
    }
    let density = birth_death(lo, hi, n, &a, &b, thr)?;
    let atoms: Vec<f64> = zeros
        .iter()
        .filter_map(|&z| {
            sampler
                .eval(z)
                .ok()
                .filter(|&(_, bz)| bz.abs() <= 1e-12)
                .map(|_| z)
        })
        .collect();
    let diagnostic = if atoms.is_empty() {
        format!("a vanishes at {zeros:?}; upwind chain solution returned")
    } else {
        format!("a vanishes at {zeros:?}; upwind chain solution returned; Dirac masses at {atoms:?} are also stationary")
    };
    Ok(Solve1dOutcome::Degenerate {
        density,
        zeros,
        diagnostic,
    })
}

fn closed_form(
    field: &CoefficientField,
    lo: f64,
    hi: f64,
    n: usize,
    a: &[f64],
    _b: &[f64],
) -> Result<GridDensity> {
    let h = (hi - lo) / n as f64;
    let mut sampler = Sampler::new(field);
    let mut failure = None;
    let mut ratio = |x: f64| match sampler.eval(x) {
        Ok((av, bv)) => bv / av,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let opts = QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-15,
        max_intervals: 100,
    };
    let mut phi = vec![0.0; n];
    for i in 1..n {
        let c0 = lo + (i as f64 - 0.5) * h;
        phi[i] = phi[i - 1] + adaptive(&mut ratio, c0, c0 + h, &opts).value;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let top = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let values: Vec<f64> = (0..n)
        .map(|i| (phi[i] - top).exp() / a[2 * i + 1])
        .collect();
    GridDensity::from_unnormalized(vec![lo], vec![hi], vec![n], values)
}

/// Stationary law of the exponentially fitted birth-death chain on the cells.
fn birth_death(lo: f64, hi: f64, n: usize, a: &[f64], b: &[f64], thr: f64) -> Result<GridDensity> {
    let h = (hi - lo) / n as f64;
    // Face between cells i and i+1 uses the mean of the neighbouring centres.
    let mut up = vec![0.0; n - 1];
    let mut down = vec![0.0; n - 1];
    for i in 0..n - 1 {
        let af = 0.5 * (a[2 * i + 1] + a[2 * i + 3]);
        let bf = 0.5 * (b[2 * i + 1] + b[2 * i + 3]);
        let af = if af < thr { 0.0 } else { af };
        up[i] = fitted_rate(af, bf, h);
        down[i] = fitted_rate(af, -bf, h);
    }
    // Blocks are maximal runs joined by two-way faces; a block is closed when
    // nothing leaves it.
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 0..n - 1 {
        if up[i] == 0.0 || down[i] == 0.0 {
            blocks.push((start, i));
            start = i + 1;
        }
    }
    blocks.push((start, n - 1));
    let closed: Vec<(usize, usize)> = blocks
        .into_iter()
        .filter(|&(s, e)| (s == 0 || down[s - 1] == 0.0) && (e == n - 1 || up[e] == 0.0))
        .collect();
    if closed.len() != 1 {
        return Err(Error::UnsupportedDegeneracy(format!(
            "the discretized dynamics has {} closed classes; the stationary law is not unique",
            closed.len()
        )));
    }
    let (s, e) = closed[0];
    let mut logp = vec![f64::NEG_INFINITY; n];
    logp[s] = 0.0;
    for i in s..e {
        logp[i + 1] = logp[i] + up[i].ln() - down[i].ln();
    }
    let top = logp[s..=e]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let values: Vec<f64> = logp.iter().map(|&l| (l - top).exp()).collect();
    GridDensity::from_unnormalized(vec![lo], vec![hi], vec![n], values)
}

/// Rate towards `+` across a face with diffusion `a` and drift `b`
/// (Scharfetter–Gummel flux; pure upwind when `a = 0`).
pub(crate) fn fitted_rate(a: f64, b: f64, h: f64) -> f64 {
    if a <= 0.0 {
        return b.max(0.0) / h;
    }
    let z = -b * h / a;
    let bern = if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    };
    a / (h * h) * bern
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};

    #[test]
    fn ou_closed_form_matches_gaussian() {
        let f = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap();
        let out = solve_1d(&f, -8.0, 8.0, 1024).unwrap();
        let g = out.density().unwrap();
        let h = g.spacing(0);
        let l1: f64 = (0..1024)
            .map(|i| {
                let x = g.center(i)[0];
                (g.values()[i] - (-x * x).exp() / std::f64::consts::PI.sqrt()).abs() * h
            })
            .sum();
        assert!(l1 <= 1e-3, "{l1}");
    }

    #[test]
    fn tanh_gives_dirac_at_origin() {
        let f = make_builtin(&FieldParams::Tanh1d).unwrap();
        match solve_1d(&f, -4.0, 4.0, 256).unwrap() {
            Solve1dOutcome::Dirac { zero, .. } => assert!(zero.abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flat_field_gives_uniform() {
        let f = make_builtin(&FieldParams::Constant {
            d: 1,
            d1: 1,
            sigma: vec![1.0],
            drift: vec![0.0],
        })
        .unwrap();
        let g = solve_1d(&f, -1.0, 1.0, 64).unwrap();
        for v in g.density().unwrap().values() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_rates_balance_exponentially() {
        let (a, b, h) = (0.5, -0.3, 0.1);
        let r = fitted_rate(a, b, h) / fitted_rate(a, -b, h);
        assert!((r - (b * h / a).exp()).abs() < 1e-14);
        assert_eq!(fitted_rate(0.0, 2.0, 0.5), 4.0);
        assert_eq!(fitted_rate(0.0, -2.0, 0.5), 0.0);
    }
}
