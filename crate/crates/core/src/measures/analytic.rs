use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{adaptive, integrate_box, QuadOptions, QuadResult};

use super::SupportBox;

/// Radius beyond which the radial density is treated as zero (tail mass below e^{-72}).
pub const RADIAL_CUTOFF: f64 = 12.0;
const GAUSSIAN_SIGMAS: f64 = 12.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticKind {
    /// `C |x|^{-2} e^{-|x|²/2}` in three dimensions.
    Example1Radial,
    /// Normal law; `cov` is row-major `d × d`.
    Gaussian { mean: Vec<f64>, cov: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticDensity {
    kind: AnalyticKind,
    d: usize,
    normalizer: f64,
    inv_cov: Vec<f64>,
}

/// `C |x|^{-2} e^{-|x|²/2}` on `ℝ³`, with `C` from radial quadrature.
pub fn example1_density(d: usize) -> Result<AnalyticDensity> {
    if d != 3 {
        return Err(Error::UnsupportedDimension {
            d,
            reason: "the radial density is defined for d = 3 only".into(),
        });
    }
    let r = adaptive(
        &mut |t: f64| (-0.5 * t * t).exp(),
        0.0,
        RADIAL_CUTOFF,
        &QuadOptions {
            rel_tol: 1e-14,
            ..Default::default()
        },
    );
    let c = 1.0 / (4.0 * PI * r.value);
    Ok(AnalyticDensity {
        kind: AnalyticKind::Example1Radial,
        d: 3,
        normalizer: c,
        inv_cov: vec![],
    })
}

pub fn gaussian_density(mean: Vec<f64>, cov: Vec<f64>) -> Result<AnalyticDensity> {
    let d = mean.len();
    if d == 0 || cov.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: cov.len(),
        });
    }
    let m = DMatrix::from_row_slice(d, d, &cov);
    if (&m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::invalid("gaussian", "cov", "must be symmetric"));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("gaussian", "cov", "must be positive definite"))?;
    let det: f64 = chol.l().diagonal().iter().map(|v| v * v).product();
    let inv = chol.inverse();
    let normalizer = 1.0 / ((2.0 * PI).powi(d as i32) * det).sqrt();
    Ok(AnalyticDensity {
        kind: AnalyticKind::Gaussian { mean, cov },
        d,
        normalizer,
        inv_cov: linalg::row_major(&inv),
    })
}

impl AnalyticDensity {
    pub fn from_kind(kind: &AnalyticKind) -> Result<Self> {
        match kind {
            AnalyticKind::Example1Radial => example1_density(3),
            AnalyticKind::Gaussian { mean, cov } => gaussian_density(mean.clone(), cov.clone()),
        }
    }

    pub fn kind(&self) -> &AnalyticKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn label(&self) -> String {
        match &self.kind {
            AnalyticKind::Example1Radial => "example1_radial(d=3)".into(),
            AnalyticKind::Gaussian { mean, cov } => format!("gaussian(mean={mean:?}, cov={cov:?})"),
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.kind {
            AnalyticKind::Example1Radial => {
                let r2 = linalg::norm_sq(x);
                self.normalizer * (-0.5 * r2).exp() / r2
            }
            AnalyticKind::Gaussian { mean, .. } => {
                let d = self.d;
                let mut q = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        q += (x[i] - mean[i]) * self.inv_cov[i * d + j] * (x[j] - mean[j]);
                    }
                }
                self.normalizer * (-0.5 * q).exp()
            }
        }
    }

    pub fn effective_box(&self) -> SupportBox {
        match &self.kind {
            AnalyticKind::Example1Radial => SupportBox::around(&[0.0; 3], RADIAL_CUTOFF),
            AnalyticKind::Gaussian { mean, cov } => {
                let d = self.d;
                SupportBox {
                    lo: (0..d)
                        .map(|i| mean[i] - GAUSSIAN_SIGMAS * cov[i * d + i].sqrt())
                        .collect(),
                    hi: (0..d)
                        .map(|i| mean[i] + GAUSSIAN_SIGMAS * cov[i * d + i].sqrt())
                        .collect(),
                }
            }
        }
    }

    pub(super) fn integrate(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        support: &SupportBox,
        opts: &QuadOptions,
    ) -> QuadResult {
        let Some(bx) = support.intersect(&self.effective_box()) else {
            return QuadResult {
                converged: true,
                ..Default::default()
            };
        };
        match self.kind {
            AnalyticKind::Gaussian { .. } => {
                let mut g = |x: &[f64]| {
                    let v = f(x);
                    if v == 0.0 {
                        0.0
                    } else {
                        v * self.density(x)
                    }
                };
                integrate_box(&mut g, &bx.lo, &bx.hi, opts)
            }
            AnalyticKind::Example1Radial => self.integrate_radial(f, &bx, opts),
        }
    }

    /// Spherical coordinates with the polar axis through the box centre; the
    /// `r²` Jacobian cancels the `|x|^{-2}` singularity.
    fn integrate_radial(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        bx: &SupportBox,
        opts: &QuadOptions,
    ) -> QuadResult {
        let nearest: Vec<f64> = (0..3).map(|k| 0.0f64.clamp(bx.lo[k], bx.hi[k])).collect();
        let r_lo = linalg::norm(&nearest);
        let mut r_hi: f64 = 0.0;
        for corner in 0..8 {
            let p: Vec<f64> = (0..3)
                .map(|k| {
                    if (corner >> k) & 1 == 1 {
                        bx.hi[k]
                    } else {
                        bx.lo[k]
                    }
                })
                .collect();
            r_hi = r_hi.max(linalg::norm(&p));
        }
        let r_hi = r_hi.min(RADIAL_CUTOFF);
        if r_lo >= r_hi {
            return QuadResult {
                converged: true,
                ..Default::default()
            };
        }
        let c = bx.center();
        let dist = linalg::norm(&c);
        let rho = bx.half_diagonal();
        let (frame, cap) = if dist > rho {
            (frame_around(&c), (rho / dist).asin())
        } else {
            ([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], PI)
        };
        let norm = self.normalizer;
        let mut x = [0.0; 3];
        let mut g = |s: &[f64]| {
            let (r, th, ph) = (s[0], s[1], s[2]);
            let (st, ct) = th.sin_cos();
            let (sp, cp) = ph.sin_cos();
            let u = [st * cp, st * sp, ct];
            for k in 0..3 {
                x[k] = r * (u[0] * frame[0][k] + u[1] * frame[1][k] + u[2] * frame[2][k]);
            }
            let v = f(&x);
            if v == 0.0 {
                0.0
            } else {
                v * norm * (-0.5 * r * r).exp() * st
            }
        };
        integrate_box(&mut g, &[r_lo, 0.0, 0.0], &[r_hi, cap, 2.0 * PI], opts)
    }
}

impl AnalyticDensity {
    /// `∫ f dμ` for `f` vanishing outside `B(c, radius)`, in spherical
    /// coordinates adapted to the ball so the integrand stays smooth.
    pub(super) fn integrate_ball(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        c: &[f64],
        radius: f64,
        opts: &QuadOptions,
    ) -> QuadResult {
        match self.kind {
            AnalyticKind::Example1Radial => self.radial_ball(f, c, radius, opts),
            AnalyticKind::Gaussian { .. } => {
                let d = self.d;
                let mut x = vec![0.0; d];
                match d {
                    1 => adaptive(
                        &mut |t: f64| {
                            x[0] = t;
                            let v = f(&x);
                            if v == 0.0 {
                                0.0
                            } else {
                                v * self.density(&x)
                            }
                        },
                        c[0] - radius,
                        c[0] + radius,
                        opts,
                    ),
                    2 => {
                        let mut g = |s: &[f64]| {
                            let (sn, cs) = s[1].sin_cos();
                            x[0] = c[0] + s[0] * cs;
                            x[1] = c[1] + s[0] * sn;
                            let v = f(&x);
                            if v == 0.0 {
                                0.0
                            } else {
                                v * self.density(&x) * s[0]
                            }
                        };
                        integrate_box(&mut g, &[0.0, 0.0], &[radius, 2.0 * PI], opts)
                    }
                    3 => {
                        let mut g = |s: &[f64]| {
                            let (st, ct) = s[1].sin_cos();
                            let (sp, cp) = s[2].sin_cos();
                            x[0] = c[0] + s[0] * st * cp;
                            x[1] = c[1] + s[0] * st * sp;
                            x[2] = c[2] + s[0] * ct;
                            let v = f(&x);
                            if v == 0.0 {
                                0.0
                            } else {
                                v * self.density(&x) * s[0] * s[0] * st
                            }
                        };
                        integrate_box(&mut g, &[0.0, 0.0, 0.0], &[radius, PI, 2.0 * PI], opts)
                    }
                    _ => self.integrate(f, &SupportBox::around(c, radius), opts),
                }
            }
        }
    }

    /// Origin-centred spherical coordinates with each ray clipped exactly to
    /// the ball, so neither the `|x|^{-2}` singularity nor the ball boundary
    /// falls inside the integration box.
    fn radial_ball(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        c: &[f64],
        radius: f64,
        opts: &QuadOptions,
    ) -> QuadResult {
        let dist = linalg::norm(c);
        let frame = if dist > 0.0 {
            frame_around(c)
        } else {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        };
        let norm = self.normalizer;
        let r2 = radius * radius;
        let outside = dist > radius;
        // Outside: sin θ = sin θ_max · sin ψ keeps the chord length smooth at the rim.
        let smax = if outside { radius / dist } else { 1.0 };
        let mut x = [0.0; 3];
        let mut g = |s: &[f64]| {
            let (t, w, ph) = (s[0], s[1], s[2]);
            let (st, ct, jac) = if outside {
                let st = smax * w.sin();
                let ct = (1.0 - st * st).sqrt();
                (st, ct, smax * w.cos() / ct)
            } else {
                let (st, ct) = w.sin_cos();
                (st, ct, 1.0)
            };
            let disc = (r2 - dist * dist * st * st).max(0.0).sqrt();
            let (r_lo, r_hi) = if outside {
                (dist * ct - disc, dist * ct + disc)
            } else {
                (0.0, dist * ct + disc)
            };
            let r = r_lo + t * (r_hi - r_lo);
            if r > RADIAL_CUTOFF {
                return 0.0;
            }
            let (sp, cp) = ph.sin_cos();
            let u = [st * cp, st * sp, ct];
            for k in 0..3 {
                x[k] = r * (u[0] * frame[0][k] + u[1] * frame[1][k] + u[2] * frame[2][k]);
            }
            let v = f(&x);
            if v == 0.0 {
                0.0
            } else {
                v * norm * (-0.5 * r * r).exp() * st * jac * (r_hi - r_lo)
            }
        };
        let w_hi = if outside { 0.5 * PI } else { PI };
        integrate_box(&mut g, &[0.0, 0.0, 0.0], &[1.0, w_hi, 2.0 * PI], opts)
    }
}

/// Orthonormal frame whose third vector points along `c`.
fn frame_around(c: &[f64]) -> [[f64; 3]; 3] {
    let n = linalg::norm(c);
    let e3 = [c[0] / n, c[1] / n, c[2] / n];
    let k = (0..3)
        .min_by(|a, b| e3[*a].abs().total_cmp(&e3[*b].abs()))
        .unwrap();
    let mut e1 = [0.0; 3];
    e1[k] = 1.0;
    let p = e1[k] * e3[k];
    for i in 0..3 {
        e1[i] -= p * e3[i];
    }
    let n1 = linalg::norm(&e1);
    e1.iter_mut().for_each(|v| *v /= n1);
    let e2 = [
        e3[1] * e1[2] - e3[2] * e1[1],
        e3[2] * e1[0] - e3[0] * e1[2],
        e3[0] * e1[1] - e3[1] * e1[0],
    ];
    [e1, e2, e3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_density_normalizer_matches_closed_form() {
        let m = example1_density(3).unwrap();
        let closed = 1.0 / (2.0 * 2f64.sqrt() * PI.powf(1.5));
        assert!((m.normalizer() - closed).abs() < 1e-15);
        assert!((m.normalizer() - 0.0634936).abs() < 5e-8);
        assert!((m.density(&[1.0, 0.0, 0.0]) - 0.0385108).abs() < 5e-8);
        assert!((m.density(&[0.0, 0.6, 0.8]) - closed * (-0.5f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn radial_density_rejects_other_dimensions() {
        assert!(matches!(
            example1_density(2),
            Err(Error::UnsupportedDimension { d: 2, .. })
        ));
    }

    #[test]
    fn frame_is_orthonormal() {
        let f = frame_around(&[0.3, -2.0, 0.7]);
        for i in 0..3 {
            for j in 0..3 {
                let d = linalg::dot(&f[i], &f[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_rejects_indefinite_covariance() {
        assert!(gaussian_density(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
    }
}
