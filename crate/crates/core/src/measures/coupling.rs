use crate::error::{Error, Result};
use crate::quadrature::{QuadOptions, QuadResult};

use super::{GridDensity, MeasureRep, SupportBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    First,
    Second,
}

/// A measure on `ℝ^d × ℝ^d` with known marginals.
#[derive(Clone, Debug)]
pub enum CouplingMeasure {
    Product(Box<MeasureRep>, Box<MeasureRep>),
    Diagonal(Box<MeasureRep>),
    Grid2d(GridDensity),
}

impl CouplingMeasure {
    pub fn product(mu: MeasureRep, nu: MeasureRep) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch {
                expected: mu.dim(),
                got: nu.dim(),
            });
        }
        Ok(CouplingMeasure::Product(Box::new(mu), Box::new(nu)))
    }

    pub fn diagonal(mu: MeasureRep) -> Self {
        CouplingMeasure::Diagonal(Box::new(mu))
    }

    pub fn grid(g: GridDensity) -> Result<Self> {
        if g.dim() % 2 != 0 {
            return Err(Error::Contract(
                "a coupling grid needs an even number of axes".into(),
            ));
        }
        Ok(CouplingMeasure::Grid2d(g))
    }

    /// Dimension `d` of each factor.
    pub fn factor_dim(&self) -> usize {
        match self {
            CouplingMeasure::Product(m, _) | CouplingMeasure::Diagonal(m) => m.dim(),
            CouplingMeasure::Grid2d(g) => g.dim() / 2,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.factor_dim()
    }

    pub fn label(&self) -> String {
        match self {
            CouplingMeasure::Product(m, n) => format!("product({}, {})", m.label(), n.label()),
            CouplingMeasure::Diagonal(m) => format!("diagonal({})", m.label()),
            CouplingMeasure::Grid2d(g) => format!("grid{:?}", g.shape()),
        }
    }

    pub fn project(&self, axis: Axis) -> Result<MeasureRep> {
        match (self, axis) {
            (CouplingMeasure::Product(m, _), Axis::First) => Ok((**m).clone()),
            (CouplingMeasure::Product(_, n), Axis::Second) => Ok((**n).clone()),
            (CouplingMeasure::Diagonal(m), _) => Ok((**m).clone()),
            (CouplingMeasure::Grid2d(g), a) => {
                let d = g.dim() / 2;
                let keep: Vec<usize> = match a {
                    Axis::First => (0..d).collect(),
                    Axis::Second => (d..2 * d).collect(),
                };
                Ok(MeasureRep::Grid(g.marginal(&keep)?))
            }
        }
    }

    /// `∫ f dπ` over `support ⊂ ℝ^{2d}`.
    pub fn integrate_with(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        support: &SupportBox,
        opts: &QuadOptions,
    ) -> Result<QuadResult> {
        if support.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: support.dim(),
            });
        }
        if !support.is_finite() {
            return Err(Error::UnboundedSupport);
        }
        let d = self.factor_dim();
        match self {
            CouplingMeasure::Grid2d(g) => {
                let v = g.midpoint_integral(f, support);
                Ok(QuadResult {
                    value: v,
                    error: 0.0,
                    magnitude: v.abs(),
                    converged: v.is_finite(),
                    evaluations: 1,
                })
            }
            CouplingMeasure::Diagonal(m) => {
                let (sx, sy) = support.split(d);
                let Some(s) = intersect_closed(&sx, &sy) else {
                    return Ok(QuadResult {
                        converged: true,
                        ..Default::default()
                    });
                };
                let mut z = vec![0.0; 2 * d];
                let mut g = |x: &[f64]| {
                    z[..d].copy_from_slice(x);
                    z[d..].copy_from_slice(x);
                    f(&z)
                };
                m.integrate_with(&mut g, &s, opts)
            }
            CouplingMeasure::Product(m, n) => {
                let (sx, sy) = support.split(d);
                let mut z = vec![0.0; 2 * d];
                let mut inner_error: Option<Error> = None;
                let mut inner_ok = true;
                let mut inner_err_sum = 0.0;
                let outer = {
                    let mut g = |x: &[f64]| {
                        z[..d].copy_from_slice(x);
                        let mut h = |y: &[f64]| {
                            z[d..].copy_from_slice(y);
                            f(&z)
                        };
                        match n.integrate_with(&mut h, &sy, opts) {
                            Ok(r) => {
                                inner_ok &= r.converged;
                                inner_err_sum = f64::max(inner_err_sum, r.error);
                                r.value
                            }
                            Err(e) => {
                                inner_error.get_or_insert(e);
                                f64::NAN
                            }
                        }
                    };
                    m.integrate_with(&mut g, &sx, opts)?
                };
                if let Some(e) = inner_error {
                    return Err(e);
                }
                Ok(QuadResult {
                    value: outer.value,
                    error: outer.error + inner_err_sum,
                    magnitude: outer.magnitude,
                    converged: outer.converged && inner_ok,
                    evaluations: outer.evaluations,
                })
            }
        }
    }
}

/// Intersection that keeps degenerate (zero-width) boxes, needed for Dirac factors.
fn intersect_closed(a: &SupportBox, b: &SupportBox) -> Option<SupportBox> {
    let lo: Vec<f64> = a.lo.iter().zip(&b.lo).map(|(p, q)| p.max(*q)).collect();
    let hi: Vec<f64> = a.hi.iter().zip(&b.hi).map(|(p, q)| p.min(*q)).collect();
    if lo.iter().zip(&hi).any(|(p, q)| p > q) {
        None
    } else {
        Some(SupportBox { lo, hi })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::gaussian_density;

    #[test]
    fn projections_return_factors() {
        let mu = MeasureRep::dirac(vec![1.0]);
        let nu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let p = CouplingMeasure::product(mu, nu).unwrap();
        assert!(
            matches!(p.project(Axis::First).unwrap(), MeasureRep::Dirac(ref m) if m.atom == vec![1.0])
        );
        assert!(matches!(
            p.project(Axis::Second).unwrap(),
            MeasureRep::Analytic(_)
        ));
        let diag = CouplingMeasure::diagonal(MeasureRep::dirac(vec![2.0]));
        assert!(
            matches!(diag.project(Axis::Second).unwrap(), MeasureRep::Dirac(ref m) if m.atom == vec![2.0])
        );
    }

    #[test]
    fn grid_projection_sums_rows() {
        let g = GridDensity::uniform(vec![0.0, 0.0], vec![1.0, 1.0], vec![64, 64]).unwrap();
        let c = CouplingMeasure::grid(g).unwrap();
        let MeasureRep::Grid(m) = c.project(Axis::First).unwrap() else {
            panic!()
        };
        assert!(m.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn product_of_gaussians_has_product_moments() {
        let g = || MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let p = CouplingMeasure::product(g(), g()).unwrap();
        let s = SupportBox::around(&[0.0, 0.0], 10.0);
        let r = p
            .integrate_with(
                &mut |z: &[f64]| z[0] * z[0] * z[1] * z[1],
                &s,
                &QuadOptions::default(),
            )
            .unwrap();
        assert!((r.value - 0.25).abs() < 1e-9);
        let diag = CouplingMeasure::diagonal(g());
        let r = diag
            .integrate_with(&mut |z: &[f64]| z[0] * z[1], &s, &QuadOptions::default())
            .unwrap();
        assert!((r.value - 0.5).abs() < 1e-9);
    }
}
