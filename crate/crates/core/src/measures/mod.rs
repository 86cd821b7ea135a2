//! Probability measures with a common integration contract.
//!
//! Every integrand comes with a finite support box; grid densities use the
//! midpoint rule on the cells that meet the box, point measures use weighted
//! sums, and analytic densities use iterated adaptive quadrature (spherical
//! coordinates for the radial family).

mod analytic;
mod coupling;
mod grid;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{QuadOptions, QuadResult};

pub use analytic::{
    example1_density, gaussian_density, AnalyticDensity, AnalyticKind, RADIAL_CUTOFF,
};
pub use coupling::{Axis, CouplingMeasure};
pub use grid::{for_each_index, GridDensity};
pub use io::{read_empirical_csv, read_grid_csv, write_empirical_csv, write_grid_csv};

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SupportBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::UnboundedSupport);
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Contract("support box has lo > hi".into()));
        }
        Ok(SupportBox { lo, hi })
    }

    /// Cube `center ± half`.
    pub fn around(center: &[f64], half: f64) -> Self {
        SupportBox {
            lo: center.iter().map(|c| c - half).collect(),
            hi: center.iter().map(|c| c + half).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn intersect(&self, other: &SupportBox) -> Option<SupportBox> {
        let lo: Vec<f64> = self
            .lo
            .iter()
            .zip(&other.lo)
            .map(|(a, b)| a.max(*b))
            .collect();
        let hi: Vec<f64> = self
            .hi
            .iter()
            .zip(&other.hi)
            .map(|(a, b)| a.min(*b))
            .collect();
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            None
        } else {
            Some(SupportBox { lo, hi })
        }
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &SupportBox) -> SupportBox {
        SupportBox {
            lo: self.lo.iter().chain(&other.lo).copied().collect(),
            hi: self.hi.iter().chain(&other.hi).copied().collect(),
        }
    }

    /// Splits a box on `ℝ^{2d}` into its two `ℝ^d` factors.
    pub fn split(&self, d: usize) -> (SupportBox, SupportBox) {
        (
            SupportBox {
                lo: self.lo[..d].to_vec(),
                hi: self.hi[..d].to_vec(),
            },
            SupportBox {
                lo: self.lo[d..].to_vec(),
                hi: self.hi[d..].to_vec(),
            },
        )
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * linalg::dist_sq(&self.lo, &self.hi).sqrt()
    }

    pub fn hull(&self, other: &SupportBox) -> SupportBox {
        SupportBox {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(a, b)| a.min(*b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(a, b)| a.max(*b))
                .collect(),
        }
    }

    pub fn dilate(&self, r: f64) -> SupportBox {
        SupportBox {
            lo: self.lo.iter().map(|v| v - r).collect(),
            hi: self.hi.iter().map(|v| v + r).collect(),
        }
    }
}

/// Weighted point cloud.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    d: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// `points` is row-major `N × d`; weights must be nonnegative and sum to 1.
    pub fn new(d: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if d == 0 || points.len() != d * weights.len() {
            return Err(Error::DimensionMismatch {
                expected: d * weights.len(),
                got: points.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::Contract(
                "empirical measure needs at least one point".into(),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "empirical point",
                x: vec![],
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Contract(
                "empirical weights must be finite and nonnegative".into(),
            ));
        }
        let total = linalg::pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "empirical weights sum to {total}, expected 1"
            )));
        }
        Ok(EmpiricalMeasure { d, points, weights })
    }

    pub fn uniform(d: usize, points: Vec<f64>) -> Result<Self> {
        let n = if d == 0 { 0 } else { points.len() / d };
        if n == 0 {
            return Err(Error::Contract(
                "empirical measure needs at least one point".into(),
            ));
        }
        let w = vec![1.0 / n as f64; n];
        // Uniform weights may round to a total off by a few ulps; renormalize.
        let total = linalg::pairwise_sum(&w);
        let w = w.into_iter().map(|v| v / total).collect();
        Self::new(d, points, w)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bounding_box(&self) -> SupportBox {
        let mut lo = vec![f64::INFINITY; self.d];
        let mut hi = vec![f64::NEG_INFINITY; self.d];
        for i in 0..self.len() {
            for (k, v) in self.point(i).iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        SupportBox { lo, hi }
    }
}

/// Unit point mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracMeasure {
    pub atom: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum MeasureRep {
    Grid(GridDensity),
    Empirical(EmpiricalMeasure),
    Analytic(AnalyticDensity),
    Dirac(DiracMeasure),
}

impl MeasureRep {
    pub fn dirac(atom: Vec<f64>) -> Self {
        MeasureRep::Dirac(DiracMeasure { atom })
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureRep::Grid(g) => g.dim(),
            MeasureRep::Empirical(e) => e.dim(),
            MeasureRep::Analytic(a) => a.dim(),
            MeasureRep::Dirac(p) => p.atom.len(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeasureRep::Grid(g) => format!("grid{:?}", g.shape()),
            MeasureRep::Empirical(e) => format!("empirical(n={})", e.len()),
            MeasureRep::Analytic(a) => a.label(),
            MeasureRep::Dirac(p) => format!("dirac({:?})", p.atom),
        }
    }

    /// Box outside of which the measure carries no (or negligible) mass.
    pub fn bounding_box(&self) -> SupportBox {
        match self {
            MeasureRep::Grid(g) => SupportBox {
                lo: g.lo().to_vec(),
                hi: g.hi().to_vec(),
            },
            MeasureRep::Empirical(e) => e.bounding_box(),
            MeasureRep::Analytic(a) => a.effective_box(),
            MeasureRep::Dirac(p) => SupportBox {
                lo: p.atom.clone(),
                hi: p.atom.clone(),
            },
        }
    }

    /// `∫ f dμ` over `support`, reporting the quadrature outcome without failing.
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
        let exact = |value: f64| QuadResult {
            value,
            error: 0.0,
            magnitude: value.abs(),
            converged: value.is_finite(),
            evaluations: 1,
        };
        Ok(match self {
            MeasureRep::Grid(g) => exact(g.midpoint_integral(f, support)),
            MeasureRep::Empirical(e) => {
                let terms: Vec<f64> = (0..e.len())
                    .map(|i| {
                        let p = e.point(i);
                        if support.contains(p) {
                            e.weights[i] * f(p)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                exact(linalg::pairwise_sum(&terms))
            }
            MeasureRep::Dirac(p) => exact(f(&p.atom)),
            MeasureRep::Analytic(a) => a.integrate(f, support, opts),
        })
    }

    /// `∫ f dμ` for `f` supported in the ball `B(center, radius)`.
    pub fn integrate_ball_with(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        center: &[f64],
        radius: f64,
        opts: &QuadOptions,
    ) -> Result<QuadResult> {
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: center.len(),
            });
        }
        if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::UnboundedSupport);
        }
        match self {
            MeasureRep::Analytic(a) => Ok(a.integrate_ball(f, center, radius, opts)),
            _ => self.integrate_with(f, &SupportBox::around(center, radius), opts),
        }
    }

    /// `∫ f dμ` with the default tolerance; non-convergence is an error.
    pub fn integrate(&self, f: &mut dyn FnMut(&[f64]) -> f64, support: &SupportBox) -> Result<f64> {
        let r = self.integrate_with(f, support, &QuadOptions::default())?;
        if r.converged {
            Ok(r.value)
        } else {
            Err(Error::Quadrature {
                estimate: r.value,
                error: r.error,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_integrates_by_evaluation() {
        let m = MeasureRep::dirac(vec![0.0, 0.0]);
        let s = SupportBox::around(&[0.0, 0.0], 1.0);
        let v = m
            .integrate(
                &mut |x: &[f64]| (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0).powi(3),
                &s,
            )
            .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn empirical_weights_must_sum_to_one() {
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        let e = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        let m = MeasureRep::Empirical(e);
        let v = m
            .integrate(&mut |x: &[f64]| x[0], &SupportBox::around(&[0.0], 2.0))
            .unwrap();
        assert_eq!(v, 0.75);
    }

    #[test]
    fn unbounded_support_is_rejected() {
        let m = MeasureRep::dirac(vec![0.0]);
        let s = SupportBox {
            lo: vec![f64::NEG_INFINITY],
            hi: vec![0.0],
        };
        assert!(matches!(
            m.integrate(&mut |_| 1.0, &s),
            Err(Error::UnboundedSupport)
        ));
    }

    #[test]
    fn box_algebra() {
        let a = SupportBox::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let b = SupportBox::new(vec![1.0, -1.0], vec![3.0, 1.0]).unwrap();
        let c = a.intersect(&b).unwrap();
        assert_eq!(c.lo, vec![1.0, 0.0]);
        assert_eq!(c.hi, vec![2.0, 1.0]);
        let p = a.product(&b);
        let (x, y) = p.split(2);
        assert_eq!((x, y), (a, b));
    }
}
