//! Weak-form residuals `∫ Lf dμ` and `∫ 𝕃ψ dπ`.
//!
//! Analytic and point measures are integrated pointwise. Grid densities are
//! paired cell by cell with the exact cell integrals of `∇f` and `D²f`
//! (computed from face values), coefficients frozen at the cell centre; this
//! keeps the pairing second-order even where the bump is only C².

use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::CoefficientField;
use crate::doubling::DoubledGenerator;
use crate::error::{Error, ErrorSlot, Result};
use crate::linalg;
use crate::measures::{for_each_index, CouplingMeasure, GridDensity, MeasureRep, SupportBox};
use crate::quadrature::QuadOptions;

use super::testfn::{apply_generator, SmoothFunction, TestFunction};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualEntry {
    pub label: String,
    pub residual: f64,
    pub c2_scale: f64,
    /// `|residual| / c2_scale`.
    pub normalized: f64,
    pub quad_error: f64,
    pub converged: bool,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
    pub max_abs: f64,
    pub max_normalized: f64,
    pub flagged: usize,
}

impl ResidualReport {
    pub fn from_entries(entries: Vec<ResidualEntry>) -> Self {
        let max_abs = entries.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
        let max_normalized = entries.iter().map(|e| e.normalized).fold(0.0, f64::max);
        let flagged = entries
            .iter()
            .filter(|e| !e.converged || e.warning.is_some())
            .count();
        ResidualReport {
            entries,
            max_abs,
            max_normalized,
            flagged,
        }
    }
}

pub(crate) fn residual_options() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-9,
        abs_tol: 1e-14,
        max_intervals: 400,
    }
}

const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Exact-in-the-normal-direction cell integrals of `∇f` and `D²f`.
pub struct CellIntegrator {
    n: usize,
    z: Vec<f64>,
    g: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl CellIntegrator {
    pub fn new(n: usize) -> Self {
        CellIntegrator {
            n,
            z: vec![0.0; n],
            g: vec![0.0; n],
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }

    /// Visits the 3-point Gauss tensor over the axes not in `fixed`.
    fn transverse(
        &mut self,
        lo: &[f64],
        hi: &[f64],
        fixed: &[usize],
        mut visit: impl FnMut(&mut Vec<f64>, f64),
    ) {
        let free: Vec<usize> = (0..self.n).filter(|k| !fixed.contains(k)).collect();
        let total = 3usize.pow(free.len() as u32);
        for t in 0..total {
            let mut w = 1.0;
            let mut rem = t;
            for &k in &free {
                let g = rem % 3;
                rem /= 3;
                let h = 0.5 * (hi[k] - lo[k]);
                self.z[k] = 0.5 * (hi[k] + lo[k]) + GL3_X[g] * h;
                w *= GL3_W[g] * h;
            }
            visit(&mut self.z, w);
        }
    }

    pub fn integrate(&mut self, f: &dyn SmoothFunction, lo: &[f64], hi: &[f64]) {
        let n = self.n;
        self.grad.fill(0.0);
        self.hess.fill(0.0);
        let mut g = std::mem::take(&mut self.g);
        for i in 0..n {
            let (mut gi, mut hii) = (0.0, 0.0);
            self.transverse(lo, hi, &[i], |z, w| {
                z[i] = hi[i];
                let fh = f.value(z);
                f.gradient(z, &mut g);
                let dh = g[i];
                z[i] = lo[i];
                let fl = f.value(z);
                f.gradient(z, &mut g);
                gi += w * (fh - fl);
                hii += w * (dh - g[i]);
            });
            self.grad[i] = gi;
            self.hess[i * n + i] = hii;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let mut hij = 0.0;
                self.transverse(lo, hi, &[i, j], |z, w| {
                    let mut s = 0.0;
                    for (zi, si) in [(hi[i], 1.0), (lo[i], -1.0)] {
                        for (zj, sj) in [(hi[j], 1.0), (lo[j], -1.0)] {
                            z[i] = zi;
                            z[j] = zj;
                            s += si * sj * f.value(z);
                        }
                    }
                    hij += w * s;
                });
                self.hess[i * n + j] = hij;
                self.hess[j * n + i] = hij;
            }
        }
        self.g = g;
    }
}

/// `Σ_c μ_c [A_c : ∫_c D²f + b_c · ∫_c ∇f]` over cells meeting `supp f`.
///
/// `coeff(flat, centre, A, b)` fills the row-major diffusion and drift for a cell.
pub fn grid_pairing(
    grid: &GridDensity,
    f: &dyn SmoothFunction,
    coeff: &mut dyn FnMut(usize, &[f64], &mut [f64], &mut [f64]) -> Result<()>,
) -> Result<f64> {
    let n = grid.dim();
    let support = f.support().ok_or(Error::UnboundedSupport)?;
    let Some(ranges) = grid.overlapping(&support) else {
        return Ok(0.0);
    };
    let h: Vec<f64> = (0..n).map(|k| grid.spacing(k)).collect();
    let mut cells = CellIntegrator::new(n);
    let mut x = vec![0.0; n];
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut terms = Vec::new();
    let mut failure = None;
    for_each_index(&ranges, |idx| {
        if failure.is_some() {
            return;
        }
        let flat = grid.flat_index(idx);
        let w = grid.values()[flat];
        if w == 0.0 {
            return;
        }
        grid.center_of(idx, &mut x);
        for k in 0..n {
            lo[k] = x[k] - 0.5 * h[k];
            hi[k] = x[k] + 0.5 * h[k];
        }
        if let Err(e) = coeff(flat, &x, &mut a, &mut b) {
            failure = Some(e);
            return;
        }
        cells.integrate(f, &lo, &hi);
        let tr: f64 = a.iter().zip(&cells.hess).map(|(p, q)| p * q).sum();
        terms.push(w * (tr + linalg::dot(&b, &cells.grad)));
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(linalg::pairwise_sum(&terms))
}

fn field_coeff<'a>(
    field: &'a CoefficientField,
) -> impl FnMut(usize, &[f64], &mut [f64], &mut [f64]) -> Result<()> + 'a {
    let mut s = vec![0.0; field.d() * field.d1()];
    move |_, x, a, b| {
        field.eval_into(x, &mut s, b)?;
        field.diffusion_from_sigma(&s, a);
        Ok(())
    }
}

fn entry(
    f: &dyn SmoothFunction,
    residual: f64,
    quad_error: f64,
    converged: bool,
    warning: Option<String>,
) -> ResidualEntry {
    let c2_scale = f.c2_scale();
    ResidualEntry {
        label: f.label(),
        residual,
        c2_scale,
        normalized: residual.abs() / c2_scale,
        quad_error,
        converged,
        warning: if converged {
            warning
        } else {
            Some(warning.unwrap_or_else(|| "quadrature tolerance not reached".into()))
        },
    }
}

fn check_battery(battery: &[TestFunction], dim: usize) -> Result<()> {
    if battery.is_empty() {
        return Err(Error::Contract("battery must be nonempty".into()));
    }
    for f in battery {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
        if f.support().is_none() {
            return Err(Error::UnboundedSupport);
        }
    }
    Ok(())
}

fn support_warning(support: &SupportBox, domain: &SupportBox) -> Option<String> {
    match support.intersect(domain) {
        None => Some("test function supported outside the measure's domain".into()),
        Some(_) => None,
    }
}

/// `∫ Lf dμ` for every `f` in the battery.
pub fn weak_residual(
    field: &CoefficientField,
    measure: &MeasureRep,
    battery: &[TestFunction],
) -> Result<ResidualReport> {
    if measure.dim() != field.d() {
        return Err(Error::DimensionMismatch {
            expected: field.d(),
            got: measure.dim(),
        });
    }
    check_battery(battery, field.d())?;
    let entries = battery
        .par_iter()
        .map(|f| residual_one(field, measure, f.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::from_entries(entries))
}

fn residual_one(
    field: &CoefficientField,
    measure: &MeasureRep,
    f: &dyn SmoothFunction,
) -> Result<ResidualEntry> {
    let support = f.support().ok_or(Error::UnboundedSupport)?;
    if let MeasureRep::Grid(g) = measure {
        let domain = SupportBox {
            lo: g.lo().to_vec(),
            hi: g.hi().to_vec(),
        };
        let v = grid_pairing(g, f, &mut field_coeff(field))?;
        return Ok(entry(f, v, 0.0, true, support_warning(&support, &domain)));
    }
    let (d, d1) = (field.d(), field.d1());
    let slot = ErrorSlot::default();
    let mut s = vec![0.0; d * d1];
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    let mut integrand = |x: &[f64]| {
        if let Err(e) = field.eval_into(x, &mut s, &mut b) {
            slot.set(e);
            return f64::NAN;
        }
        field.diffusion_from_sigma(&s, &mut a);
        apply_generator(&a, &b, f, x, &mut g, &mut h)
    };
    let r = match f.support_ball() {
        Some((c, radius)) => {
            measure.integrate_ball_with(&mut integrand, &c, radius, &residual_options())?
        }
        None => measure.integrate_with(&mut integrand, &support, &residual_options())?,
    };
    if let Some(e) = slot.take() {
        return Err(e);
    }
    Ok(entry(f, r.value, r.error, r.converged, None))
}

/// `∫ 𝕃ψ dπ` for every `ψ` on `ℝ^{2d}` in the battery.
pub fn doubled_weak_residual(
    field: &CoefficientField,
    coupling: &CouplingMeasure,
    battery: &[TestFunction],
) -> Result<ResidualReport> {
    if coupling.factor_dim() != field.d() {
        return Err(Error::DimensionMismatch {
            expected: field.d(),
            got: coupling.factor_dim(),
        });
    }
    check_battery(battery, 2 * field.d())?;
    let entries = battery
        .par_iter()
        .map(|psi| doubled_one(field, coupling, psi.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport::from_entries(entries))
}

fn doubled_one(
    field: &CoefficientField,
    coupling: &CouplingMeasure,
    psi: &dyn SmoothFunction,
) -> Result<ResidualEntry> {
    let support = psi.support().ok_or(Error::UnboundedSupport)?;
    let d = field.d();
    let d1 = field.d1();
    if let CouplingMeasure::Grid2d(g) = coupling {
        let mut sx = vec![0.0; d * d1];
        let mut sy = vec![0.0; d * d1];
        let mut coeff = |_: usize, z: &[f64], a: &mut [f64], b: &mut [f64]| -> Result<()> {
            let (bx, by) = b.split_at_mut(d);
            field.eval_into(&z[..d], &mut sx, bx)?;
            field.eval_into(&z[d..], &mut sy, by)?;
            crate::doubling::assemble_block(&sx, &sy, d, d1, a);
            Ok(())
        };
        let v = grid_pairing(g, psi, &mut coeff)?;
        return Ok(entry(psi, v, 0.0, true, None));
    }
    let slot = ErrorSlot::default();
    let mut gen = DoubledGenerator::new(field);
    let mut integrand = |z: &[f64]| match gen.apply_stacked(psi, z) {
        Ok(v) => v,
        Err(e) => {
            slot.set(e);
            f64::NAN
        }
    };
    let r = coupling.integrate_with(&mut integrand, &support, &residual_options())?;
    if let Some(e) = slot.take() {
        return Err(e);
    }
    Ok(entry(psi, r.value, r.error, r.converged, None))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelescopingEntry {
    pub j: f64,
    /// `∫ L(f·ψ_j) dμ`.
    pub cut: f64,
    /// `∫ ψ_j · Lf dμ`.
    pub weighted: f64,
    pub gap: f64,
}

/// Compares `∫ L(f·ψ_j) dμ` with `∫ ψ_j Lf dμ` along a cutoff sequence.
pub fn cutoff_telescoping(
    field: &CoefficientField,
    measure: &MeasureRep,
    f: &TestFunction,
    js: &[f64],
    mode: super::testfn::CutoffMode,
) -> Result<Vec<TelescopingEntry>> {
    let d = field.d();
    if f.dim() != d || measure.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: f.dim().max(measure.dim()),
        });
    }
    let mut out = Vec::with_capacity(js.len());
    for &j in js {
        let psi: TestFunction =
            std::sync::Arc::new(super::testfn::Cutoff::squared_norm(d, j, mode));
        let prod = super::testfn::Product(f.clone(), psi.clone());
        let support = prod.support().ok_or(Error::UnboundedSupport)?;
        let slot = ErrorSlot::default();
        let mut s = vec![0.0; d * field.d1()];
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        let mut both = |x: &[f64], weighted: bool| {
            if let Err(e) = field.eval_into(x, &mut s, &mut b) {
                slot.set(e);
                return f64::NAN;
            }
            field.diffusion_from_sigma(&s, &mut a);
            if weighted {
                psi.value(x) * apply_generator(&a, &b, f.as_ref(), x, &mut g, &mut h)
            } else {
                apply_generator(&a, &b, &prod, x, &mut g, &mut h)
            }
        };
        let cut = measure
            .integrate_with(&mut |x| both(x, false), &support, &residual_options())?
            .value;
        let weighted = measure
            .integrate_with(&mut |x| both(x, true), &support, &residual_options())?
            .value;
        if let Some(e) = slot.take() {
            return Err(e);
        }
        out.push(TelescopingEntry {
            j,
            cut,
            weighted,
            gap: (cut - weighted).abs(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::coeff::{make_builtin, FieldParams};
    use crate::fpk::testfn::{PolyBump, SquaredNorm};
    use crate::measures::gaussian_density;

    fn ou1() -> CoefficientField {
        make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap()
    }

    #[test]
    fn cell_integrals_are_exact_for_quadratics() {
        let f = SquaredNorm { n: 2 };
        let mut c = CellIntegrator::new(2);
        // A bounded-support wrapper is not needed for the cell integrals themselves.
        c.integrate(&f, &[0.0, 1.0], &[1.0, 3.0]);
        // ∫∂₁|z|² = ∫∫2z₁ = 2·(1/2)·2 = 2; ∫∂₂|z|² = 2·(9−1)/2·1 = 8.
        assert!((c.grad[0] - 2.0).abs() < 1e-14 && (c.grad[1] - 8.0).abs() < 1e-14);
        assert!((c.hess[0] - 4.0).abs() < 1e-14 && (c.hess[3] - 4.0).abs() < 1e-14);
        assert!(c.hess[1].abs() < 1e-14);
    }

    #[test]
    fn gaussian_is_stationary_for_ou() {
        let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let battery: Vec<TestFunction> = vec![
            Arc::new(PolyBump::new(vec![0.3], 1.0)),
            Arc::new(PolyBump::new(vec![-1.0], 0.5)),
            Arc::new(PolyBump::new(vec![0.0], 3.0)),
        ];
        let r = weak_residual(&ou1(), &mu, &battery).unwrap();
        assert!(r.max_abs <= 1e-8, "{r:?}");
    }

    #[test]
    fn cutoff_gap_shrinks_on_ou() {
        let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let f: TestFunction = Arc::new(SquaredNorm { n: 1 });
        let t = cutoff_telescoping(
            &ou1(),
            &mu,
            &f,
            &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            crate::fpk::CutoffMode::QuadraticArg,
        )
        .unwrap();
        assert!(t.windows(2).all(|w| w[1].gap <= w[0].gap), "{t:?}");
        assert!(t[5].gap < 1e-5, "{t:?}");
    }

    #[test]
    fn grid_pairing_converges_at_second_order() {
        let f: TestFunction = Arc::new(PolyBump::new(vec![0.37], 0.8));
        let mut errs = vec![];
        for n in [100usize, 400] {
            let h = 16.0 / n as f64;
            let vals: Vec<f64> = (0..n)
                .map(|i| {
                    let x = -8.0 + (i as f64 + 0.5) * h;
                    (-x * x).exp()
                })
                .collect();
            let g = GridDensity::from_unnormalized(vec![-8.0], vec![8.0], vec![n], vals).unwrap();
            let r = weak_residual(&ou1(), &MeasureRep::Grid(g), &[f.clone()]).unwrap();
            errs.push(r.max_abs);
        }
        assert!(errs[1] < 0.1 * errs[0], "{errs:?}");
    }
}
