use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::error::{Error, ErrorSlot, Result};
use crate::linalg;
use crate::measures::{MeasureRep, SupportBox};

use super::LambdaFunction;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentCriterion {
    /// `‖Σ‖²` and `|b||x|`.
    Theorem1,
    /// `‖Σ‖²/(1+|x|²)`, `|b|/(1+|x|)` and `Λ`.
    Theorem2,
    /// `|b|/(1+|x|)` and `Λ`.
    Corollary1,
    /// `(‖A‖ + |⟨b, x⟩|)/(1+|x|²)`.
    Superposition,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentIntegral {
    pub name: String,
    pub value: f64,
    /// Value over the support box shrunk by half about its centre.
    pub half_box_value: f64,
    /// Whether the two values agree within 1%.
    pub finite: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub criterion: MomentCriterion,
    pub measure: String,
    pub integrals: Vec<MomentIntegral>,
}

type Integrand = fn(&Pointwise) -> f64;

struct Pointwise<'a> {
    x: &'a [f64],
    sigma_sq: f64,
    a_norm: f64,
    b: &'a [f64],
    lambda: f64,
}

fn integrands(c: &MomentCriterion) -> Vec<(&'static str, Integrand)> {
    let sig: (&str, Integrand) = ("sigma_sq", |p| p.sigma_sq);
    let bx: (&str, Integrand) = ("drift_times_norm", |p| {
        linalg::norm(p.b) * linalg::norm(p.x)
    });
    let sig_w: (&str, Integrand) = ("sigma_sq_weighted", |p| {
        p.sigma_sq / (1.0 + linalg::norm_sq(p.x))
    });
    let b_w: (&str, Integrand) = ("drift_weighted", |p| {
        linalg::norm(p.b) / (1.0 + linalg::norm(p.x))
    });
    let lam: (&str, Integrand) = ("lambda", |p| p.lambda);
    let sup: (&str, Integrand) = ("superposition", |p| {
        (p.a_norm + linalg::dot(p.b, p.x).abs()) / (1.0 + linalg::norm_sq(p.x))
    });
    match c {
        MomentCriterion::Theorem1 => vec![sig, bx],
        MomentCriterion::Theorem2 => vec![sig_w, b_w, lam],
        MomentCriterion::Corollary1 => vec![b_w, lam],
        MomentCriterion::Superposition => vec![sup],
    }
}

fn shrink(b: &SupportBox) -> SupportBox {
    let c = b.center();
    SupportBox {
        lo: b
            .lo
            .iter()
            .zip(&c)
            .map(|(l, m)| m + 0.5 * (l - m))
            .collect(),
        hi: b
            .hi
            .iter()
            .zip(&c)
            .map(|(h, m)| m + 0.5 * (h - m))
            .collect(),
    }
}

/// Integrability side conditions, truncated at the measure's support box.
pub fn check_moments(
    field: &CoefficientField,
    measure: &MeasureRep,
    criterion: MomentCriterion,
    lambda: Option<&LambdaFunction>,
) -> Result<MomentReport> {
    let d = field.d();
    if measure.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: measure.dim(),
        });
    }
    let needs_lambda = matches!(
        criterion,
        MomentCriterion::Theorem2 | MomentCriterion::Corollary1
    );
    if needs_lambda && lambda.is_none() {
        return Err(Error::Contract(
            "this moment criterion needs a Lambda function".into(),
        ));
    }
    let full = measure.bounding_box();
    let half = shrink(&full);
    let mut integrals = Vec::new();
    for (name, g) in integrands(&criterion) {
        let mut values = [0.0; 2];
        for (slot_idx, bx) in [&full, &half].into_iter().enumerate() {
            let slot = ErrorSlot::default();
            let mut s = vec![0.0; d * field.d1()];
            let mut b = vec![0.0; d];
            let mut a = vec![0.0; d * d];
            let mut f = |x: &[f64]| {
                if let Err(e) = field.eval_into(x, &mut s, &mut b) {
                    slot.set(e);
                    return f64::NAN;
                }
                field.diffusion_from_sigma(&s, &mut a);
                let lam = match lambda.map(|l| l.eval(x)).transpose() {
                    Ok(v) => v.unwrap_or(0.0),
                    Err(e) => {
                        slot.set(e);
                        return f64::NAN;
                    }
                };
                g(&Pointwise {
                    x,
                    sigma_sq: linalg::norm_sq(&s),
                    a_norm: linalg::norm(&a),
                    b: &b,
                    lambda: lam,
                })
            };
            let v = measure.integrate(&mut f, bx);
            if let Some(e) = slot.take() {
                return Err(e);
            }
            values[slot_idx] = v?;
        }
        let [value, half_box_value] = values;
        let finite = value.is_finite()
            && ((value - half_box_value).abs() <= 0.01 * value.abs() || value.abs() < 1e-300);
        integrals.push(MomentIntegral {
            name: name.to_string(),
            value,
            half_box_value,
            finite,
        });
    }
    Ok(MomentReport {
        criterion,
        measure: measure.label(),
        integrals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};
    use crate::measures::{example1_density, gaussian_density};

    #[test]
    fn dirac_at_a_zero_of_the_field() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap();
        let r = check_moments(
            &f,
            &MeasureRep::dirac(vec![0.0; 3]),
            MomentCriterion::Theorem1,
            None,
        )
        .unwrap();
        assert!(r.integrals.iter().all(|i| i.value == 0.0 && i.finite));
    }

    #[test]
    fn radial_density_second_moment() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap();
        let mu = MeasureRep::Analytic(example1_density(3).unwrap());
        let r = check_moments(&f, &mu, MomentCriterion::Theorem1, None).unwrap();
        assert!((r.integrals[0].value - 3.0).abs() < 1e-6, "{r:?}");
        assert!(r.integrals[0].finite);
    }

    #[test]
    fn gaussian_drift_moment() {
        let f = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap();
        let mu = MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap());
        let r = check_moments(&f, &mu, MomentCriterion::Theorem1, None).unwrap();
        assert!((r.integrals[1].value - 0.5).abs() < 1e-8);
    }
}
