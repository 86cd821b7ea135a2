//! The doubled operator on `ℝ^d × ℝ^d`.
//!
//! `𝕃ψ = trace(𝔸 D²ψ) + ⟨𝔹, ∇ψ⟩` with
//! `𝔸(x, y) = [[A(x), Σ(x)Σ(y)ᵗ], [Σ(y)Σ(x)ᵗ, A(y)]]` and `𝔹 = (b(x), b(y))`.
//! Applied to `|x − y|²/2` it gives
//! `q(x, y) = ⟨x − y, b(x) − b(y)⟩ + ‖Σ(x) − Σ(y)‖²_F`, and
//! `r(x, y) = |(Σ(x) − Σ(y))ᵗ (x − y)/|x − y||²` for `x ≠ y`.

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::fpk::SmoothFunction;
use crate::linalg;

pub const MAX_DIM: usize = 16;

fn diagonal_tolerance(x: &[f64], y: &[f64]) -> f64 {
    1e-14 * (1.0 + linalg::norm(x) + linalg::norm(y))
}

/// Scalars of one pair evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTerms {
    pub q: f64,
    pub drift_term: f64,
    pub trace_term: f64,
    /// `None` on the diagonal.
    pub r: Option<f64>,
    pub dist_sq: f64,
}

impl PairTerms {
    pub fn q_hat(&self) -> f64 {
        self.q / self.dist_sq
    }
}

/// Reusable buffers for repeated pair evaluations of one field.
pub struct PairEvaluator<'a> {
    field: &'a CoefficientField,
    sx: Vec<f64>,
    sy: Vec<f64>,
    bx: Vec<f64>,
    by: Vec<f64>,
}

impl<'a> PairEvaluator<'a> {
    pub fn new(field: &'a CoefficientField) -> Self {
        let (d, d1) = (field.d(), field.d1());
        PairEvaluator {
            field,
            sx: vec![0.0; d * d1],
            sy: vec![0.0; d * d1],
            bx: vec![0.0; d],
            by: vec![0.0; d],
        }
    }

    pub fn field(&self) -> &CoefficientField {
        self.field
    }

    pub fn terms(&mut self, x: &[f64], y: &[f64]) -> Result<PairTerms> {
        self.field.eval_into(x, &mut self.sx, &mut self.bx)?;
        self.field.eval_into(y, &mut self.sy, &mut self.by)?;
        let (d, d1) = (self.field.d(), self.field.d1());
        let mut drift_term = 0.0;
        let mut dist_sq = 0.0;
        for i in 0..d {
            let dx = x[i] - y[i];
            drift_term += dx * (self.bx[i] - self.by[i]);
            dist_sq += dx * dx;
        }
        let trace_term: f64 = self
            .sx
            .iter()
            .zip(&self.sy)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let r = if dist_sq.sqrt() > diagonal_tolerance(x, y) {
            let inv = 1.0 / dist_sq.sqrt();
            let mut r = 0.0;
            for k in 0..d1 {
                let mut v = 0.0;
                for i in 0..d {
                    v += (self.sx[i * d1 + k] - self.sy[i * d1 + k]) * (x[i] - y[i]) * inv;
                }
                r += v * v;
            }
            Some(r)
        } else {
            None
        };
        // On the exact diagonal both terms are computed from identical inputs.
        let q = if x == y { 0.0 } else { drift_term + trace_term };
        Ok(PairTerms {
            q,
            drift_term,
            trace_term,
            r,
            dist_sq,
        })
    }

    /// `(Σ(x), Σ(y))` row-major, from the last `terms` call.
    pub fn sigmas(&self) -> (&[f64], &[f64]) {
        (&self.sx, &self.sy)
    }

    /// `‖Σ(x) − Σ(y)‖_F` from the buffers of the last `terms` call.
    pub fn sigma_gap(&self) -> f64 {
        self.sx
            .iter()
            .zip(&self.sy)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn check_pair(field: &CoefficientField, x: &[f64], y: &[f64]) -> Result<()> {
    for v in [x, y] {
        if v.len() != field.d() {
            return Err(Error::DimensionMismatch {
                expected: field.d(),
                got: v.len(),
            });
        }
    }
    Ok(())
}

pub fn q_value(field: &CoefficientField, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(field, x, y)?;
    Ok(PairEvaluator::new(field).terms(x, y)?.q)
}

/// `q(x, y)/|x − y|²`.
pub fn q_hat(field: &CoefficientField, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(field, x, y)?;
    let t = PairEvaluator::new(field).terms(x, y)?;
    if t.r.is_none() {
        return Err(Error::DiagonalUndefined {
            separation: t.dist_sq.sqrt(),
        });
    }
    Ok(t.q_hat())
}

pub fn r_value(field: &CoefficientField, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(field, x, y)?;
    let t = PairEvaluator::new(field).terms(x, y)?;
    t.r.ok_or(Error::DiagonalUndefined {
        separation: t.dist_sq.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoubledEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub a_block: DMatrix<f64>,
    pub b_stack: DVector<f64>,
    pub q: f64,
    pub r: Option<f64>,
}

impl Serialize for DoubledEval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.a_block.nrows())
            .map(|i| self.a_block.row(i).iter().copied().collect())
            .collect();
        let mut st = s.serialize_struct("DoubledEval", 6)?;
        st.serialize_field("x", &self.x)?;
        st.serialize_field("y", &self.y)?;
        st.serialize_field("a_block", &rows)?;
        st.serialize_field("b_stack", &self.b_stack.as_slice())?;
        st.serialize_field("q", &self.q)?;
        st.serialize_field("r", &self.r)?;
        st.end()
    }
}

/// Row-major `𝔸(x, y)` from row-major `Σ(x)`, `Σ(y)`.
pub fn assemble_block(sx: &[f64], sy: &[f64], d: usize, d1: usize, out: &mut [f64]) {
    let n = 2 * d;
    for i in 0..d {
        for j in 0..d {
            let xi = &sx[i * d1..(i + 1) * d1];
            let yi = &sy[i * d1..(i + 1) * d1];
            let xj = &sx[j * d1..(j + 1) * d1];
            let yj = &sy[j * d1..(j + 1) * d1];
            out[i * n + j] = linalg::dot(xi, xj);
            out[i * n + d + j] = linalg::dot(xi, yj);
            out[(d + i) * n + j] = linalg::dot(yi, xj);
            out[(d + i) * n + d + j] = linalg::dot(yi, yj);
        }
    }
}

pub fn doubled_blocks(field: &CoefficientField, x: &[f64], y: &[f64]) -> Result<DoubledEval> {
    check_pair(field, x, y)?;
    if field.d() > MAX_DIM {
        return Err(Error::UnsupportedDimension {
            d: field.d(),
            reason: format!("doubled blocks are capped at d = {MAX_DIM}"),
        });
    }
    let mut ev = PairEvaluator::new(field);
    let t = ev.terms(x, y)?;
    let (d, d1) = (field.d(), field.d1());
    let mut a = vec![0.0; 4 * d * d];
    assemble_block(&ev.sx, &ev.sy, d, d1, &mut a);
    let b: Vec<f64> = ev.bx.iter().chain(&ev.by).copied().collect();
    Ok(DoubledEval {
        x: x.to_vec(),
        y: y.to_vec(),
        a_block: DMatrix::from_row_slice(2 * d, 2 * d, &a),
        b_stack: DVector::from_vec(b),
        q: t.q,
        r: t.r,
    })
}

/// Reusable evaluator of `𝕃ψ`.
pub struct DoubledGenerator<'a> {
    field: &'a CoefficientField,
    sx: Vec<f64>,
    sy: Vec<f64>,
    b: Vec<f64>,
    a: Vec<f64>,
    z: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl<'a> DoubledGenerator<'a> {
    pub fn new(field: &'a CoefficientField) -> Self {
        let (d, d1) = (field.d(), field.d1());
        DoubledGenerator {
            field,
            sx: vec![0.0; d * d1],
            sy: vec![0.0; d * d1],
            b: vec![0.0; 2 * d],
            a: vec![0.0; 4 * d * d],
            z: vec![0.0; 2 * d],
            grad: vec![0.0; 2 * d],
            hess: vec![0.0; 4 * d * d],
        }
    }

    /// `𝕃ψ` at the stacked point `z = (x, y)`.
    pub fn apply_stacked(&mut self, psi: &dyn SmoothFunction, z: &[f64]) -> Result<f64> {
        let (d, d1) = (self.field.d(), self.field.d1());
        let (bx, by) = self.b.split_at_mut(d);
        self.field.eval_into(&z[..d], &mut self.sx, bx)?;
        self.field.eval_into(&z[d..], &mut self.sy, by)?;
        assemble_block(&self.sx, &self.sy, d, d1, &mut self.a);
        Ok(crate::fpk::apply_generator(
            &self.a,
            &self.b,
            psi,
            z,
            &mut self.grad,
            &mut self.hess,
        ))
    }

    pub fn apply(&mut self, psi: &dyn SmoothFunction, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.field.d();
        let mut z = std::mem::take(&mut self.z);
        z[..d].copy_from_slice(x);
        z[d..].copy_from_slice(y);
        let v = self.apply_stacked(psi, &z);
        self.z = z;
        v
    }
}

pub fn apply_doubled(
    field: &CoefficientField,
    psi: &dyn SmoothFunction,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    check_pair(field, x, y)?;
    if psi.dim() != 2 * field.d() {
        return Err(Error::DimensionMismatch {
            expected: 2 * field.d(),
            got: psi.dim(),
        });
    }
    DoubledGenerator::new(field).apply(psi, x, y)
}

/// Smallest eigenvalue of a symmetric matrix of size at most `2·MAX_DIM`.
pub fn psd_margin(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Contract("psd_margin needs a square matrix".into()));
    }
    if m.nrows() > 2 * MAX_DIM {
        return Err(Error::UnsupportedDimension {
            d: m.nrows() / 2,
            reason: format!("eigensolves are capped at size {}", 2 * MAX_DIM),
        });
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 {
        return Err(Error::Contract(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(linalg::min_eigenvalue(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};
    use crate::fpk::testfn::{ConstantFn, CoordinateProduct, HalfSquaredDistance};

    fn pl32() -> CoefficientField {
        make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap()
    }

    fn ou() -> CoefficientField {
        make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap()
    }

    #[test]
    fn q_hand_values() {
        let f = pl32();
        assert_eq!(
            q_value(&f, &[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).unwrap(),
            -4.0
        );
        let q = q_value(&f, &[0.1, 0.0, 0.0], &[0.2, 0.0, 0.0]).unwrap();
        assert!((q - 0.0293).abs() < 1e-15);
        assert_eq!(
            q_value(&f, &[0.3, 1.0, -2.0], &[0.3, 1.0, -2.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn r_hand_values() {
        let f = pl32();
        assert!((r_value(&f, &[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            r_value(&f, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::DiagonalUndefined { .. })
        ));
        let c = make_builtin(&FieldParams::Constant {
            d: 2,
            d1: 1,
            sigma: vec![1.0, 2.0],
            drift: vec![0.0, 1.0],
        })
        .unwrap();
        assert_eq!(r_value(&c, &[0.0, 0.0], &[1.0, 3.0]).unwrap(), 0.0);
        let t = make_builtin(&FieldParams::Tanh1d).unwrap();
        assert!((r_value(&t, &[0.0], &[40.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ou_blocks() {
        let e = doubled_blocks(&ou(), &[0.3], &[-1.2]).unwrap();
        for v in e.a_block.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert_eq!(e.b_stack.as_slice(), &[-0.3, 1.2]);
    }

    #[test]
    fn power_law_off_diagonal_block() {
        let e = doubled_blocks(&pl32(), &[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).unwrap();
        let off = e.a_block.view((0, 3), (3, 3)).clone_owned();
        assert_eq!(off, DMatrix::identity(3, 3) * 2.0);
        let diag = doubled_blocks(&pl32(), &[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0]).unwrap();
        let rank = diag
            .a_block
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|s| **s > 1e-12)
            .count();
        assert!(rank <= 3);
    }

    #[test]
    fn doubled_ou_on_xy() {
        let psi = CoordinateProduct { n: 2, i: 0, j: 1 };
        for (x, y) in [(0.3, -0.7), (1.5, 2.0), (0.0, 0.0)] {
            let v = apply_doubled(&ou(), &psi, &[x], &[y]).unwrap();
            assert!((v - (1.0 - 2.0 * x * y)).abs() < 1e-14);
        }
        assert_eq!(
            apply_doubled(&ou(), &ConstantFn { n: 2, c: 3.0 }, &[0.4], &[0.1]).unwrap(),
            0.0
        );
    }

    #[test]
    fn half_squared_distance_gives_q() {
        let f = pl32();
        let (x, y) = ([0.4, -1.0, 0.2], [1.1, 0.3, -0.5]);
        let a = apply_doubled(&f, &HalfSquaredDistance { d: 3 }, &x, &y).unwrap();
        let q = q_value(&f, &x, &y).unwrap();
        assert!((a - q).abs() <= 1e-12 * (1.0 + q.abs()));
    }

    #[test]
    fn psd_margin_examples() {
        assert_eq!(psd_margin(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!((psd_margin(&m).unwrap() + 1.0).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(psd_margin(&bad), Err(Error::Contract(_))));
    }
}
