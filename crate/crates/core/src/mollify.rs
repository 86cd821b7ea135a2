//! Mollified measures `μ_ε = εγ + (1 − ε) ω_ε * μ` and the regularized
//! coefficients that make `μ_ε` stationary.
//!
//! Point-like sources (Dirac, empirical, grid cells) are spread with kernel
//! weights normalized on the output grid, so every source keeps its exact
//! mass. Analytic sources are convolved by Gauss–Legendre quadrature over
//! the kernel's ball.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::doubling::psd_margin;
use crate::error::{Error, Result};
use crate::fpk::{grid_pairing, ResidualEntry, ResidualReport, TestFunction};
use crate::linalg;
use crate::measures::{AnalyticKind, GridDensity, MeasureRep, SupportBox};
use crate::quadrature::{adaptive, gauss_legendre, QuadOptions};
use crate::rng;

/// Half-width of the standard Gaussian box (tail mass below `1e-10` per axis).
pub const GAUSSIAN_BOX: f64 = 7.0;
const SOURCE_SIGMAS: f64 = 6.7;

fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// `c_d` with `∫ c_d exp(−1/(1 − |x|²)) dx = 1` over the unit ball.
pub fn bump_normalizer(d: usize) -> f64 {
    let opts = QuadOptions {
        rel_tol: 1e-13,
        abs_tol: 1e-16,
        max_intervals: 200,
    };
    let radial = adaptive(
        &mut |r: f64| r.powi(d as i32 - 1) * bump_profile(r * r),
        0.0,
        1.0,
        &opts,
    )
    .value;
    // Surface area of the unit sphere in ℝ^d.
    let sphere = 2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half(d);
    1.0 / (sphere * radial)
}

/// `Γ(d/2)`.
fn gamma_half(d: usize) -> f64 {
    if d % 2 == 0 {
        (1..d / 2).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut k = 0.5;
        while k < d as f64 / 2.0 - 0.25 {
            g *= k;
            k += 1.0;
        }
        g
    }
}

/// The scaled bump `ω_ε(x) = ε^{-d} ω(x/ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MollifierKernel {
    pub eps: f64,
    pub d: usize,
    pub c_d: f64,
}

impl MollifierKernel {
    pub fn new(eps: f64, d: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid(
                "mollifier",
                "eps",
                format!("must lie in (0, 1), got {eps}"),
            ));
        }
        if !(1..=3).contains(&d) {
            return Err(Error::UnsupportedDimension {
                d,
                reason: "mollification is implemented for d ≤ 3".into(),
            });
        }
        Ok(MollifierKernel {
            eps,
            d,
            c_d: bump_normalizer(d),
        })
    }

    /// `ω(t)` on the unit scale.
    pub fn unit(&self, t: &[f64]) -> f64 {
        self.c_d * bump_profile(linalg::norm_sq(t))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2 = linalg::norm_sq(x) / (self.eps * self.eps);
        self.c_d * bump_profile(r2) / self.eps.powi(self.d as i32)
    }
}

fn std_gaussian(x: &[f64]) -> f64 {
    (-0.5 * linalg::norm_sq(x)).exp() / (2.0 * std::f64::consts::PI).powf(x.len() as f64 / 2.0)
}

/// Output grid: cells of size `ε / cells_per_eps` over `domain` (or the
/// default covering box).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub cells_per_eps: f64,
    pub domain: Option<SupportBox>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            cells_per_eps: 8.0,
            domain: None,
        }
    }
}

/// Box that must be covered: the source support dilated by `ε`, joined with the Gaussian box.
pub fn required_box(measure: &MeasureRep, eps: f64) -> SupportBox {
    let d = measure.dim();
    let source = match measure {
        MeasureRep::Analytic(a) => match a.kind() {
            AnalyticKind::Gaussian { mean, cov } => SupportBox {
                lo: (0..d)
                    .map(|i| mean[i] - SOURCE_SIGMAS * cov[i * d + i].sqrt())
                    .collect(),
                hi: (0..d)
                    .map(|i| mean[i] + SOURCE_SIGMAS * cov[i * d + i].sqrt())
                    .collect(),
            },
            AnalyticKind::Example1Radial => a.effective_box(),
        },
        other => other.bounding_box(),
    };
    source
        .dilate(eps)
        .hull(&SupportBox::around(&vec![0.0; d], GAUSSIAN_BOX))
}

fn output_grid(
    measure: &MeasureRep,
    eps: f64,
    spec: &GridSpec,
) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let h = eps / spec.cells_per_eps;
    if !(spec.cells_per_eps >= 4.0) {
        return Err(Error::Resolution {
            cell: h,
            limit: eps / 4.0,
        });
    }
    let need = required_box(measure, eps);
    let bx = match &spec.domain {
        Some(b) => {
            let covers = (0..need.dim())
                .all(|k| b.lo[k] <= need.lo[k] + 1e-12 && b.hi[k] >= need.hi[k] - 1e-12);
            if !covers {
                return Err(Error::Contract(format!(
                    "grid domain must cover {:?}..{:?} (source support dilated by eps, plus Gaussian tails)",
                    need.lo, need.hi
                )));
            }
            b.clone()
        }
        None => need,
    };
    let n: Vec<usize> = (0..bx.dim())
        .map(|k| ((bx.hi[k] - bx.lo[k]) / h).ceil() as usize)
        .collect();
    let hi = (0..bx.dim()).map(|k| bx.lo[k] + n[k] as f64 * h).collect();
    Ok((bx.lo, hi, n))
}

/// Numerator integrals per node: `∫ω_ε μ`, `∫ω_ε aμ`, `∫ω_ε σμ`, `∫ω_ε bμ`.
struct Numerators {
    m0: Vec<f64>,
    ma: Vec<f64>,
    ms: Vec<f64>,
    mb: Vec<f64>,
}

struct Layout<'a> {
    lo: &'a [f64],
    n: &'a [usize],
    h: f64,
    d: usize,
    d1: usize,
}

impl Layout<'_> {
    fn nodes(&self) -> usize {
        self.n.iter().product()
    }

    fn center(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for k in (0..self.d).rev() {
            let i = rem % self.n[k];
            rem /= self.n[k];
            out[k] = self.lo[k] + (i as f64 + 0.5) * self.h;
        }
    }
}

fn eval_coeffs(
    field: Option<&CoefficientField>,
    y: &[f64],
    d: usize,
    d1: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut s = vec![0.0; d * d1];
    let mut b = vec![0.0; d];
    let mut a = vec![0.0; d * d];
    if let Some(f) = field {
        f.eval_into(y, &mut s, &mut b)?;
        f.diffusion_from_sigma(&s, &mut a);
    }
    Ok((a, s, b))
}

fn atom_numerators(
    atoms: &[(Vec<f64>, f64)],
    kernel: &MollifierKernel,
    field: Option<&CoefficientField>,
    lay: &Layout,
) -> Result<Numerators> {
    let (d, d1) = (lay.d, lay.d1);
    let total = lay.nodes();
    let mut num = Numerators {
        m0: vec![0.0; total],
        ma: vec![0.0; total * d * d],
        ms: vec![0.0; total * d * d1],
        mb: vec![0.0; total * d],
    };
    let vol = lay.h.powi(d as i32);
    let coeffs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = atoms
        .par_iter()
        .map(|(y, _)| eval_coeffs(field, y, d, d1))
        .collect::<Result<Vec<_>>>()?;
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut diff = vec![0.0; d];
    for ((y, mass), (a, s, b)) in atoms.iter().zip(&coeffs) {
        if *mass == 0.0 {
            continue;
        }
        let ranges: Vec<(usize, usize)> = (0..d)
            .map(|k| {
                let lo = ((y[k] - kernel.eps - lay.lo[k]) / lay.h - 0.5)
                    .floor()
                    .max(0.0) as usize;
                let hi =
                    (((y[k] + kernel.eps - lay.lo[k]) / lay.h + 0.5).ceil() as usize).min(lay.n[k]);
                (lo.min(hi), hi)
            })
            .collect();
        let mut touched: Vec<(usize, f64)> = Vec::new();
        crate::measures::for_each_index(&ranges, |ix| {
            idx.copy_from_slice(ix);
            let mut flat = 0;
            for k in 0..d {
                flat = flat * lay.n[k] + idx[k];
                x[k] = lay.lo[k] + (idx[k] as f64 + 0.5) * lay.h;
                diff[k] = x[k] - y[k];
            }
            let w = kernel.value(&diff);
            if w > 0.0 {
                touched.push((flat, w));
            }
        });
        let s_total: f64 = touched.iter().map(|t| t.1).sum::<f64>() * vol;
        if s_total <= 0.0 {
            return Err(Error::Resolution {
                cell: lay.h,
                limit: kernel.eps / 4.0,
            });
        }
        for (flat, w) in touched {
            let c = mass * w / s_total;
            num.m0[flat] += c;
            num.ma[flat * d * d..(flat + 1) * d * d]
                .iter_mut()
                .zip(a)
                .for_each(|(o, v)| *o += c * v);
            num.ms[flat * d * d1..(flat + 1) * d * d1]
                .iter_mut()
                .zip(s)
                .for_each(|(o, v)| *o += c * v);
            num.mb[flat * d..(flat + 1) * d]
                .iter_mut()
                .zip(b)
                .for_each(|(o, v)| *o += c * v);
        }
    }
    Ok(num)
}

/// Quadrature nodes `t` and weights on the unit ball.
fn ball_rule(d: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    match d {
        1 => {
            let (x, w) = gauss_legendre(96);
            Ok((x.into_iter().map(|t| vec![t]).collect(), w))
        }
        2 => {
            let (rx, rw) = gauss_legendre(48);
            let m = 64;
            let mut pts = Vec::with_capacity(48 * m);
            let mut wts = Vec::with_capacity(48 * m);
            for (t, w) in rx.iter().zip(&rw) {
                let r = 0.5 * (t + 1.0);
                for k in 0..m {
                    let th = std::f64::consts::TAU * k as f64 / m as f64;
                    pts.push(vec![r * th.cos(), r * th.sin()]);
                    wts.push(0.5 * w * r * std::f64::consts::TAU / m as f64);
                }
            }
            Ok((pts, wts))
        }
        _ => Err(Error::UnsupportedDimension {
            d,
            reason: "analytic sources are mollified in d ≤ 2".into(),
        }),
    }
}

fn analytic_numerators(
    density: &(dyn Fn(&[f64]) -> f64 + Sync),
    kernel: &MollifierKernel,
    field: Option<&CoefficientField>,
    lay: &Layout,
) -> Result<Numerators> {
    let (d, d1) = (lay.d, lay.d1);
    let (pts, wts) = ball_rule(d)?;
    let kw: Vec<f64> = pts
        .iter()
        .zip(&wts)
        .map(|(t, w)| w * kernel.unit(t))
        .collect();
    let per_node: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..lay.nodes())
        .into_par_iter()
        .map(|flat| {
            let mut x = vec![0.0; d];
            lay.center(flat, &mut x);
            let mut y = vec![0.0; d];
            let mut m0 = 0.0;
            let mut ma = vec![0.0; d * d];
            let mut ms = vec![0.0; d * d1];
            let mut mb = vec![0.0; d];
            for (t, w) in pts.iter().zip(&kw) {
                for k in 0..d {
                    y[k] = x[k] + kernel.eps * t[k];
                }
                let c = w * density(&y);
                if c == 0.0 {
                    continue;
                }
                m0 += c;
                if field.is_some() {
                    let (a, s, b) = eval_coeffs(field, &y, d, d1)?;
                    ma.iter_mut().zip(&a).for_each(|(o, v)| *o += c * v);
                    ms.iter_mut().zip(&s).for_each(|(o, v)| *o += c * v);
                    mb.iter_mut().zip(&b).for_each(|(o, v)| *o += c * v);
                }
            }
            Ok((m0, ma, ms, mb))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut num = Numerators {
        m0: Vec::new(),
        ma: Vec::new(),
        ms: Vec::new(),
        mb: Vec::new(),
    };
    for (m0, ma, ms, mb) in per_node {
        num.m0.push(m0);
        num.ma.extend(ma);
        num.ms.extend(ms);
        num.mb.extend(mb);
    }
    Ok(num)
}

/// `μ_ε` on a grid with the regularized coefficients at every node.
#[derive(Clone, Debug, Serialize)]
pub struct MollifiedSystem {
    pub kernel: MollifierKernel,
    pub d: usize,
    pub d1: usize,
    #[serde(skip)]
    pub density: GridDensity,
    /// Per node, row-major `A_{ε,μ}` (empty without a field).
    #[serde(skip)]
    pub a: Vec<f64>,
    #[serde(skip)]
    pub sigma: Vec<f64>,
    #[serde(skip)]
    pub b: Vec<f64>,
    #[serde(skip)]
    pub gamma: Vec<f64>,
    pub source: String,
    pub field: Option<String>,
    pub shape: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub mass: f64,
}

fn build(
    measure: &MeasureRep,
    eps: f64,
    spec: &GridSpec,
    field: Option<&CoefficientField>,
) -> Result<MollifiedSystem> {
    let d = measure.dim();
    let kernel = MollifierKernel::new(eps, d)?;
    if let Some(f) = field {
        if f.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.d(),
            });
        }
    }
    let d1 = field.map_or(d, |f| f.d1());
    let (lo, hi, n) = output_grid(measure, eps, spec)?;
    let h = eps / spec.cells_per_eps;
    let lay = Layout {
        lo: &lo,
        n: &n,
        h,
        d,
        d1,
    };
    let num = match measure {
        MeasureRep::Dirac(p) => atom_numerators(&[(p.atom.clone(), 1.0)], &kernel, field, &lay)?,
        MeasureRep::Empirical(e) => {
            let atoms: Vec<(Vec<f64>, f64)> = (0..e.len())
                .map(|i| (e.point(i).to_vec(), e.weights()[i]))
                .collect();
            atom_numerators(&atoms, &kernel, field, &lay)?
        }
        MeasureRep::Grid(g) => {
            let vol = g.cell_volume();
            let atoms: Vec<(Vec<f64>, f64)> = (0..g.len())
                .filter(|&c| g.values()[c] > 0.0)
                .map(|c| (g.center(c), g.values()[c] * vol))
                .collect();
            atom_numerators(&atoms, &kernel, field, &lay)?
        }
        MeasureRep::Analytic(a) => analytic_numerators(&|y| a.density(y), &kernel, field, &lay)?,
    };
    let total = lay.nodes();
    let mut values = Vec::with_capacity(total);
    let mut gamma = Vec::with_capacity(total);
    let mut a = Vec::new();
    let mut sigma = Vec::new();
    let mut b = Vec::new();
    let mut x = vec![0.0; d];
    for c in 0..total {
        lay.center(c, &mut x);
        let g = std_gaussian(&x);
        let mu = eps * g + (1.0 - eps) * num.m0[c];
        if !(mu > 1e-300) {
            return Err(Error::DomainTruncation { x: x.clone() });
        }
        values.push(mu);
        gamma.push(g);
        if field.is_some() {
            for i in 0..d {
                for j in 0..d {
                    let floor = if i == j { eps * g } else { 0.0 };
                    a.push(((1.0 - eps) * num.ma[c * d * d + i * d + j] + floor) / mu);
                }
            }
            sigma.extend(
                num.ms[c * d * d1..(c + 1) * d * d1]
                    .iter()
                    .map(|v| (1.0 - eps) * v / mu),
            );
            b.extend((0..d).map(|i| ((1.0 - eps) * num.mb[c * d + i] - eps * g * x[i]) / mu));
        }
    }
    let mass = linalg::pairwise_sum(&values) * h.powi(d as i32);
    let density = GridDensity::new(lo.clone(), hi.clone(), n.clone(), values).map_err(|_| {
        Error::Contract(format!(
            "mollified mass {mass} deviates from 1; widen the grid domain"
        ))
    })?;
    Ok(MollifiedSystem {
        kernel,
        d,
        d1,
        density,
        a,
        sigma,
        b,
        gamma,
        source: measure.label(),
        field: field.map(|f| f.label().to_string()),
        shape: n,
        lo,
        hi,
        mass,
    })
}

/// `μ_ε` alone.
pub fn mollify_measure(measure: &MeasureRep, eps: f64, spec: &GridSpec) -> Result<MollifiedSystem> {
    build(measure, eps, spec, None)
}

/// `μ_ε` with `A_{ε,μ}`, `Σ_{ε,μ}` and `b_{ε,μ}` at every node.
pub fn regularize_coefficients(
    field: &CoefficientField,
    measure: &MeasureRep,
    eps: f64,
    spec: &GridSpec,
) -> Result<MollifiedSystem> {
    build(measure, eps, spec, Some(field))
}

impl MollifiedSystem {
    pub fn eps(&self) -> f64 {
        self.kernel.eps
    }

    pub fn has_coefficients(&self) -> bool {
        !self.a.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.density.len()
    }

    pub fn node_a(&self, c: usize) -> &[f64] {
        &self.a[c * self.d * self.d..(c + 1) * self.d * self.d]
    }

    pub fn node_sigma(&self, c: usize) -> &[f64] {
        &self.sigma[c * self.d * self.d1..(c + 1) * self.d * self.d1]
    }

    pub fn node_b(&self, c: usize) -> &[f64] {
        &self.b[c * self.d..(c + 1) * self.d]
    }

    /// Smallest `μ_ε(x) − εγ(x)` over the nodes.
    pub fn floor_margin(&self) -> f64 {
        self.density
            .values()
            .iter()
            .zip(&self.gamma)
            .map(|(m, g)| m - self.eps() * g)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `L_{ε,μ}|x|²` over nodes with `|x| ≥ radius`.
    pub fn quadratic_drift_max(&self, radius: f64) -> Result<f64> {
        self.require_coefficients()?;
        let d = self.d;
        let mut worst = f64::NEG_INFINITY;
        for c in 0..self.nodes() {
            let x = self.density.center(c);
            if linalg::norm(&x) < radius {
                continue;
            }
            let a = self.node_a(c);
            let tr: f64 = (0..d).map(|i| a[i * d + i]).sum();
            worst = worst.max(2.0 * tr + 2.0 * linalg::dot(self.node_b(c), &x));
        }
        Ok(worst)
    }

    fn require_coefficients(&self) -> Result<()> {
        if self.has_coefficients() {
            Ok(())
        } else {
            Err(Error::Contract(
                "the system was built without coefficients".into(),
            ))
        }
    }

    /// Writes `x1..xd, mu_eps, a_ij, sigma_ij, b_i` per node.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.d;
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("mu_eps".into());
        if self.has_coefficients() {
            header.extend((0..d * d).map(|k| format!("a_{}_{}", k / d + 1, k % d + 1)));
            header.extend(
                (0..d * self.d1).map(|k| format!("sigma_{}_{}", k / self.d1 + 1, k % self.d1 + 1)),
            );
            header.extend((1..=d).map(|k| format!("b_{k}")));
        }
        w.write_record(&header)?;
        for c in 0..self.nodes() {
            let mut row: Vec<String> = self
                .density
                .center(c)
                .iter()
                .map(|v| v.to_string())
                .collect();
            row.push(self.density.values()[c].to_string());
            if self.has_coefficients() {
                row.extend(
                    self.node_a(c)
                        .iter()
                        .chain(self.node_sigma(c))
                        .chain(self.node_b(c))
                        .map(|v| v.to_string()),
                );
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `∫ L_{ε,μ} f · μ_ε dx` for each `f`, paired cell by cell on the grid.
pub fn regularized_residual(
    system: &MollifiedSystem,
    battery: &[TestFunction],
) -> Result<ResidualReport> {
    system.require_coefficients()?;
    if battery.is_empty() {
        return Err(Error::Contract("battery must be nonempty".into()));
    }
    let d = system.d;
    let domain = SupportBox {
        lo: system.lo.clone(),
        hi: system.hi.clone(),
    };
    let entries = battery
        .par_iter()
        .map(|f| {
            if f.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: f.dim(),
                });
            }
            let support = f.support().ok_or(Error::UnboundedSupport)?;
            let mut coeff = |flat: usize, _x: &[f64], a: &mut [f64], b: &mut [f64]| -> Result<()> {
                a.copy_from_slice(system.node_a(flat));
                b.copy_from_slice(system.node_b(flat));
                Ok(())
            };
            let v = grid_pairing(&system.density, f.as_ref(), &mut coeff)?;
            let c2_scale = f.c2_scale();
            let warning = support
                .intersect(&domain)
                .is_none()
                .then(|| "test function supported outside the grid".to_string());
            Ok(ResidualEntry {
                label: f.label(),
                residual: v,
                c2_scale,
                normalized: v.abs() / c2_scale,
                quad_error: 0.0,
                converged: true,
                warning,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::from_entries(entries))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsdReport {
    pub min_margin: f64,
    pub pairs: usize,
    pub worst_x: Vec<f64>,
    pub worst_y: Vec<f64>,
}

/// `𝔸_ε(x, y)` from node values of two systems.
pub fn doubled_regularized_block(
    mu: &MollifiedSystem,
    nu: &MollifiedSystem,
    cx: usize,
    cy: usize,
) -> DMatrix<f64> {
    let (d, d1) = (mu.d, mu.d1);
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    let (ax, ay) = (mu.node_a(cx), nu.node_a(cy));
    let (sx, sy) = (mu.node_sigma(cx), nu.node_sigma(cy));
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = ax[i * d + j];
            m[(d + i, d + j)] = ay[i * d + j];
            let cross: f64 = (0..d1).map(|k| sx[i * d1 + k] * sy[j * d1 + k]).sum();
            m[(i, d + j)] = cross;
            m[(d + j, i)] = cross;
        }
    }
    m
}

/// Minimum eigenvalue of `𝔸_ε` over node pairs drawn uniformly from both grids.
pub fn doubled_regularized_psd(
    mu: &MollifiedSystem,
    nu: &MollifiedSystem,
    pairs: usize,
    seed: u64,
) -> Result<PsdReport> {
    mu.require_coefficients()?;
    nu.require_coefficients()?;
    if mu.eps() != nu.eps() {
        return Err(Error::Contract(format!(
            "systems use different eps ({} and {})",
            mu.eps(),
            nu.eps()
        )));
    }
    if mu.d != nu.d || mu.d1 != nu.d1 {
        return Err(Error::DimensionMismatch {
            expected: mu.d,
            got: nu.d,
        });
    }
    let margins: Vec<(f64, usize, usize)> = (0..pairs)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(seed, rng::domain::PSD, p as u64);
            let cx = r.random_range(0..mu.nodes());
            let cy = if p % 10 == 0 && mu.nodes() == nu.nodes() {
                cx
            } else {
                r.random_range(0..nu.nodes())
            };
            psd_margin(&doubled_regularized_block(mu, nu, cx, cy)).map(|m| (m, cx, cy))
        })
        .collect::<Result<Vec<_>>>()?;
    let (min_margin, cx, cy) =
        margins.into_iter().fold(
            (f64::INFINITY, 0, 0),
            |acc, v| if v.0 < acc.0 { v } else { acc },
        );
    Ok(PsdReport {
        min_margin,
        pairs,
        worst_x: mu.density.center(cx),
        worst_y: nu.density.center(cy),
    })
}

/// `max_f |∫ f dμ_ε − ∫ f dμ|` over the battery.
pub fn weak_gap(
    system: &MollifiedSystem,
    measure: &MeasureRep,
    battery: &[TestFunction],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for f in battery {
        let support = f.support().ok_or(Error::UnboundedSupport)?;
        let smooth = system
            .density
            .midpoint_integral(&mut |x| f.value(x), &support);
        let exact = measure.integrate(&mut |x| f.value(x), &support)?;
        worst = worst.max((smooth - exact).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};
    use crate::fpk::default_battery;
    use crate::measures::gaussian_density;

    #[test]
    fn one_dimensional_normalizer() {
        assert!((bump_normalizer(1) - 2.25228).abs() < 1e-5);
        for d in 1..=3 {
            let k = MollifierKernel::new(0.5, d).unwrap();
            assert!(k.value(&vec![0.5; d]) == 0.0 || d == 1);
        }
    }

    #[test]
    fn dirac_source_gives_scaled_kernel() {
        let m = mollify_measure(
            &MeasureRep::dirac(vec![0.0]),
            0.5,
            &GridSpec {
                cells_per_eps: 256.0,
                domain: None,
            },
        )
        .unwrap();
        let k = MollifierKernel::new(0.5, 1).unwrap();
        for c in (0..m.nodes()).step_by(37) {
            let x = m.density.center(c);
            let want = 0.5 * std_gaussian(&x) + 0.5 * 2.0 * k.unit(&[2.0 * x[0]]);
            assert!(
                (m.density.values()[c] - want).abs() < 1e-6 * (1.0 + want),
                "{x:?}"
            );
        }
        assert!((m.mass - 1.0).abs() < 1e-8);
        assert!(m.floor_margin() >= 0.0);
    }

    #[test]
    fn gaussian_source_conserves_mass() {
        let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let m = mollify_measure(&mu, 0.1, &GridSpec::default()).unwrap();
        assert!((m.mass - 1.0).abs() < 1e-8, "{}", m.mass);
    }

    #[test]
    fn dirac_at_zero_of_power_law() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 1, alpha: 0.5 }).unwrap();
        let s =
            regularize_coefficients(&f, &MeasureRep::dirac(vec![0.0]), 0.3, &GridSpec::default())
                .unwrap();
        for c in (0..s.nodes()).step_by(11) {
            let x = s.density.center(c);
            let mu = s.density.values()[c];
            let g = 0.3 * std_gaussian(&x);
            assert!((s.node_a(c)[0] - g / mu).abs() < 1e-14);
            assert!((s.node_b(c)[0] + g * x[0] / mu).abs() < 1e-14);
        }
    }

    #[test]
    fn ou_identity_residual_is_small() {
        let f = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap();
        let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let s = regularize_coefficients(&f, &mu, 0.1, &GridSpec::default()).unwrap();
        let battery = default_battery(1, &SupportBox::around(&[0.0], 3.0), 10, 1);
        let r = regularized_residual(&s, &battery).unwrap();
        assert!(r.max_abs <= 1e-4, "{r:?}");
    }

    #[test]
    fn near_one_eps_approaches_the_gaussian_pair() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 1, alpha: 2.0 }).unwrap();
        let mu = MeasureRep::Analytic(gaussian_density(vec![1.0], vec![0.2]).unwrap());
        let s = regularize_coefficients(&f, &mu, 0.99, &GridSpec::default()).unwrap();
        let c = s.nodes() / 2;
        let x = s.density.center(c)[0];
        assert!((s.node_a(c)[0] - 1.0).abs() < 0.05 && (s.node_b(c)[0] + x).abs() < 0.05);
    }

    #[test]
    fn regularized_blocks_are_psd() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 1, alpha: 2.0 }).unwrap();
        let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let a = regularize_coefficients(&f, &mu, 0.2, &GridSpec::default()).unwrap();
        let b =
            regularize_coefficients(&f, &MeasureRep::dirac(vec![0.5]), 0.2, &GridSpec::default())
                .unwrap();
        assert!(doubled_regularized_psd(&a, &b, 2000, 3).unwrap().min_margin >= -1e-9);
        assert!(doubled_regularized_psd(&a, &a, 2000, 3).unwrap().min_margin >= -1e-9);
    }

    #[test]
    fn coarse_grid_is_refused() {
        let r = mollify_measure(
            &MeasureRep::dirac(vec![0.0]),
            0.1,
            &GridSpec {
                cells_per_eps: 2.0,
                domain: None,
            },
        );
        assert!(matches!(r, Err(Error::Resolution { .. })));
    }
}
