//! Coefficient fields `(Σ, b)` and the diffusion `A = ΣΣᵗ`.
//!
//! The generator acting on `f` is `trace(A D²f) + ⟨b, ∇f⟩`, which corresponds
//! to the SDE `dX = √2 Σ(X) dW + b(X) dt`. Matrices are passed row-major in
//! the hot paths; the `DMatrix` accessors are for callers that want checked,
//! owned values.

mod tabulated;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
pub use tabulated::TabulatedField;

/// Family and parameters of a builtin field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FieldParams {
    /// `Σ = |x|^{α/2} I`, `b = −|x|^α x`.
    PowerLaw { d: usize, alpha: f64 },
    /// `Σ = σ₀ I`, `b = −λ x`.
    OrnsteinUhlenbeck { d: usize, lambda: f64, sigma0: f64 },
    /// `Σ = diag(slope_k x_k + bend·tanh x_k)`, `b = −κ x`.
    DiagonalMap {
        slope: Vec<f64>,
        #[serde(default)]
        bend: f64,
        #[serde(default)]
        drift_rate: f64,
    },
    /// `Σ = tanh x`, `b = 0` in one dimension.
    Tanh1d,
    /// Constant `Σ` (row-major `d × d1`) and `b`.
    Constant {
        d: usize,
        d1: usize,
        sigma: Vec<f64>,
        drift: Vec<f64>,
    },
    /// `Σ = c |x|^p I`, `b = −κ x`.
    Isotropic {
        d: usize,
        scale: f64,
        exponent: f64,
        #[serde(default)]
        drift_rate: f64,
    },
    /// Multilinear table loaded from CSV.
    Tabulated { csv: PathBuf },
}

impl FieldParams {
    pub fn family(&self) -> &'static str {
        match self {
            FieldParams::PowerLaw { .. } => "power_law",
            FieldParams::OrnsteinUhlenbeck { .. } => "ornstein_uhlenbeck",
            FieldParams::DiagonalMap { .. } => "diagonal_map",
            FieldParams::Tanh1d => "tanh_1d",
            FieldParams::Constant { .. } => "constant",
            FieldParams::Isotropic { .. } => "isotropic",
            FieldParams::Tabulated { .. } => "tabulated",
        }
    }
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

enum Kind {
    PowerLaw {
        alpha: f64,
    },
    OrnsteinUhlenbeck {
        lambda: f64,
        sigma0: f64,
    },
    DiagonalMap {
        slope: Vec<f64>,
        bend: f64,
        drift_rate: f64,
    },
    Tanh1d,
    Constant {
        sigma: Vec<f64>,
        drift: Vec<f64>,
    },
    Isotropic {
        scale: f64,
        exponent: f64,
        drift_rate: f64,
    },
    Tabulated(TabulatedField),
    Custom {
        sigma: Box<EvalFn>,
        drift: Box<EvalFn>,
    },
}

/// A coefficient field on `ℝ^d` with `d1`-dimensional noise.
#[derive(Clone)]
pub struct CoefficientField {
    d: usize,
    d1: usize,
    label: String,
    kind: Arc<Kind>,
    params: Option<FieldParams>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("d", &self.d)
            .field("d1", &self.d1)
            .field("label", &self.label)
            .finish()
    }
}

fn check_finite(family: &str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(family, name, "must be finite"))
    }
}

fn check_dim(family: &str, d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::invalid(family, "d", "must be at least 1"))
    } else {
        Ok(())
    }
}

/// Builds a field from its family parameters.
pub fn make_builtin(params: &FieldParams) -> Result<CoefficientField> {
    let fam = params.family();
    let (d, d1, label, kind) = match params {
        FieldParams::PowerLaw { d, alpha } => {
            check_dim(fam, *d)?;
            check_finite(fam, "alpha", *alpha)?;
            (
                *d,
                *d,
                format!("power_law(d={d}, alpha={alpha})"),
                Kind::PowerLaw { alpha: *alpha },
            )
        }
        FieldParams::OrnsteinUhlenbeck { d, lambda, sigma0 } => {
            check_dim(fam, *d)?;
            if !(lambda.is_finite() && *lambda > 0.0) {
                return Err(Error::invalid(fam, "lambda", "must be positive"));
            }
            if !(sigma0.is_finite() && *sigma0 >= 0.0) {
                return Err(Error::invalid(fam, "sigma0", "must be nonnegative"));
            }
            (
                *d,
                *d,
                format!("ornstein_uhlenbeck(d={d}, lambda={lambda}, sigma0={sigma0})"),
                Kind::OrnsteinUhlenbeck {
                    lambda: *lambda,
                    sigma0: *sigma0,
                },
            )
        }
        FieldParams::DiagonalMap {
            slope,
            bend,
            drift_rate,
        } => {
            check_dim(fam, slope.len())
                .map_err(|_| Error::invalid(fam, "slope", "must be nonempty"))?;
            for s in slope {
                check_finite(fam, "slope", *s)?;
            }
            check_finite(fam, "bend", *bend)?;
            check_finite(fam, "drift_rate", *drift_rate)?;
            let d = slope.len();
            (
                d,
                d,
                format!("diagonal_map(d={d}, bend={bend}, drift_rate={drift_rate})"),
                Kind::DiagonalMap {
                    slope: slope.clone(),
                    bend: *bend,
                    drift_rate: *drift_rate,
                },
            )
        }
        FieldParams::Tanh1d => (1, 1, "tanh_1d".to_string(), Kind::Tanh1d),
        FieldParams::Constant {
            d,
            d1,
            sigma,
            drift,
        } => {
            check_dim(fam, *d)?;
            if *d1 == 0 {
                return Err(Error::invalid(fam, "d1", "must be at least 1"));
            }
            if sigma.len() != d * d1 {
                return Err(Error::invalid(
                    fam,
                    "sigma",
                    format!("expected {} entries, got {}", d * d1, sigma.len()),
                ));
            }
            if drift.len() != *d {
                return Err(Error::invalid(
                    fam,
                    "drift",
                    format!("expected {d} entries, got {}", drift.len()),
                ));
            }
            for v in sigma.iter().chain(drift) {
                check_finite(fam, "sigma/drift", *v)?;
            }
            (
                *d,
                *d1,
                format!("constant(d={d}, d1={d1})"),
                Kind::Constant {
                    sigma: sigma.clone(),
                    drift: drift.clone(),
                },
            )
        }
        FieldParams::Isotropic {
            d,
            scale,
            exponent,
            drift_rate,
        } => {
            check_dim(fam, *d)?;
            check_finite(fam, "scale", *scale)?;
            check_finite(fam, "drift_rate", *drift_rate)?;
            if !(exponent.is_finite() && *exponent >= 0.0) {
                return Err(Error::invalid(fam, "exponent", "must be nonnegative"));
            }
            (
                *d,
                *d,
                format!(
                    "isotropic(d={d}, scale={scale}, exponent={exponent}, drift_rate={drift_rate})"
                ),
                Kind::Isotropic {
                    scale: *scale,
                    exponent: *exponent,
                    drift_rate: *drift_rate,
                },
            )
        }
        FieldParams::Tabulated { csv } => {
            let t = TabulatedField::from_csv_path(csv)?;
            (
                t.d(),
                t.d1(),
                format!("tabulated({})", csv.display()),
                Kind::Tabulated(t),
            )
        }
    };
    Ok(CoefficientField {
        d,
        d1,
        label,
        kind: Arc::new(kind),
        params: Some(params.clone()),
    })
}

impl CoefficientField {
    /// Field from user closures writing `Σ(x)` (row-major `d × d1`) and `b(x)`.
    pub fn from_fns(
        d: usize,
        d1: usize,
        label: impl Into<String>,
        sigma: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        CoefficientField {
            d,
            d1,
            label: label.into(),
            kind: Arc::new(Kind::Custom {
                sigma: Box::new(sigma),
                drift: Box::new(drift),
            }),
            params: None,
        }
    }

    pub fn from_table(table: TabulatedField, label: impl Into<String>) -> Self {
        CoefficientField {
            d: table.d(),
            d1: table.d1(),
            label: label.into(),
            kind: Arc::new(Kind::Tabulated(table)),
            params: None,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn params(&self) -> Option<&FieldParams> {
        self.params.as_ref()
    }

    /// Writes `Σ(x)` row-major into `out` without validation.
    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        let d1 = self.d1;
        match &*self.kind {
            Kind::PowerLaw { alpha } => {
                out.fill(0.0);
                let s = linalg::norm(x).powf(0.5 * alpha);
                for i in 0..d {
                    out[i * d1 + i] = s;
                }
            }
            Kind::OrnsteinUhlenbeck { sigma0, .. } => {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d1 + i] = *sigma0;
                }
            }
            Kind::DiagonalMap { slope, bend, .. } => {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d1 + i] = slope[i] * x[i] + bend * x[i].tanh();
                }
            }
            Kind::Tanh1d => out[0] = x[0].tanh(),
            Kind::Constant { sigma, .. } => out.copy_from_slice(sigma),
            Kind::Isotropic {
                scale, exponent, ..
            } => {
                out.fill(0.0);
                let s = scale * linalg::norm(x).powf(*exponent);
                for i in 0..d {
                    out[i * d1 + i] = s;
                }
            }
            Kind::Tabulated(t) => t.sigma_into(x, out),
            Kind::Custom { sigma, .. } => sigma(x, out),
        }
    }

    /// Writes `b(x)` into `out` without validation.
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &*self.kind {
            Kind::PowerLaw { alpha } => {
                let ra = linalg::norm(x).powf(*alpha);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -ra * xi;
                }
            }
            Kind::OrnsteinUhlenbeck { lambda, .. } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -lambda * xi;
                }
            }
            Kind::DiagonalMap { drift_rate, .. } | Kind::Isotropic { drift_rate, .. } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -drift_rate * xi;
                }
            }
            Kind::Tanh1d => out[0] = 0.0,
            Kind::Constant { drift, .. } => out.copy_from_slice(drift),
            Kind::Tabulated(t) => t.drift_into(x, out),
            Kind::Custom { drift, .. } => drift(x, out),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "evaluation point",
                x: x.to_vec(),
            });
        }
        Ok(())
    }

    /// Validated evaluation of `Σ(x)` and `b(x)` into caller buffers.
    pub fn eval_into(&self, x: &[f64], sigma: &mut [f64], drift: &mut [f64]) -> Result<()> {
        self.check_point(x)?;
        self.sigma_into(x, sigma);
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "sigma",
                x: x.to_vec(),
            });
        }
        self.drift_into(x, drift);
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "drift",
                x: x.to_vec(),
            });
        }
        Ok(())
    }

    pub fn sigma(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let mut s = vec![0.0; self.d * self.d1];
        self.sigma_into(x, &mut s);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "sigma",
                x: x.to_vec(),
            });
        }
        Ok(DMatrix::from_row_slice(self.d, self.d1, &s))
    }

    pub fn drift(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let mut b = vec![0.0; self.d];
        self.drift_into(x, &mut b);
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "drift",
                x: x.to_vec(),
            });
        }
        Ok(DVector::from_vec(b))
    }

    /// `A(x) = Σ(x)Σ(x)ᵗ`, symmetrized by averaging with its transpose.
    pub fn eval_diffusion(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.sigma(x)?;
        let g = &s * s.transpose();
        Ok((&g + g.transpose()) * 0.5)
    }

    /// Row-major `A(x)` from an already evaluated `Σ(x)`.
    pub fn diffusion_from_sigma(&self, sigma: &[f64], out: &mut [f64]) {
        linalg::gram(sigma, self.d, self.d1, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(d: usize, alpha: f64) -> CoefficientField {
        make_builtin(&FieldParams::PowerLaw { d, alpha }).unwrap()
    }

    #[test]
    fn power_law_hand_values() {
        let f = pl(3, 2.0);
        assert_eq!(f.sigma(&[1.0, 0.0, 0.0]).unwrap(), DMatrix::identity(3, 3));
        assert_eq!(
            f.drift(&[1.0, 0.0, 0.0]).unwrap().as_slice(),
            &[-1.0, 0.0, 0.0]
        );
        assert_eq!(f.sigma(&[0.0; 3]).unwrap(), DMatrix::zeros(3, 3));
        assert_eq!(f.drift(&[0.0; 3]).unwrap().as_slice(), &[0.0; 3]);
        assert_eq!(
            f.eval_diffusion(&[2.0, 0.0, 0.0]).unwrap(),
            DMatrix::identity(3, 3) * 4.0
        );
    }

    #[test]
    fn ou_hand_values() {
        let f = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap();
        assert_eq!(
            f.sigma(&[0.5]).unwrap()[(0, 0)],
            std::f64::consts::FRAC_1_SQRT_2
        );
        assert_eq!(f.drift(&[0.5]).unwrap()[0], -0.5);
    }

    #[test]
    fn tanh_vanishes_at_origin() {
        let f = make_builtin(&FieldParams::Tanh1d).unwrap();
        assert_eq!(f.eval_diffusion(&[0.0]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn invalid_parameters_name_the_offender() {
        let e = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 0.0,
            sigma0: 1.0,
        })
        .unwrap_err();
        assert!(e.to_string().contains("lambda"));
        let e = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: -1.0,
        })
        .unwrap_err();
        assert!(e.to_string().contains("sigma0"));
        let e = make_builtin(&FieldParams::PowerLaw { d: 0, alpha: 1.0 }).unwrap_err();
        assert!(e.to_string().contains("`d`"));
        let e = make_builtin(&FieldParams::PowerLaw {
            d: 2,
            alpha: f64::NAN,
        })
        .unwrap_err();
        assert!(e.to_string().contains("alpha"));
        let e = make_builtin(&FieldParams::Constant {
            d: 2,
            d1: 1,
            sigma: vec![1.0],
            drift: vec![0.0, 0.0],
        })
        .unwrap_err();
        assert!(e.to_string().contains("sigma"));
    }

    #[test]
    fn non_finite_output_carries_location() {
        let f =
            CoefficientField::from_fns(1, 1, "bad", |x, s| s[0] = 1.0 / x[0], |_, b| b[0] = 0.0);
        match f.eval_diffusion(&[0.0]) {
            Err(Error::NonFinite { x, .. }) => assert_eq!(x, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn evaluation_is_bitwise_repeatable() {
        let f = pl(3, 1.3);
        let x = [0.3, -1.7, 2.2];
        let a = f.eval_diffusion(&x).unwrap();
        let b = f.eval_diffusion(&x).unwrap();
        assert!(a
            .iter()
            .zip(b.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
