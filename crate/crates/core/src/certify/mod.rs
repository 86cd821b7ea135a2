//! Region-bounded certification of the sign conditions on `q` and `r`.
//!
//! Every verdict covers only the scanned ball `|x|, |y| ≤ R` with
//! `|x − y| ≥ δ_min`; no finite scan certifies all of `ℝ^d × ℝ^d`.

mod moments;
mod scan;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::linalg;

pub use moments::{check_moments, MomentCriterion, MomentIntegral, MomentReport};
pub use scan::{run_scan, sample_pair, Extremes, Objective, ObjectiveFn, PairContext, ScanOutcome};

pub const MARGIN_FLOOR: f64 = 1e-8;

const CAVEAT: &str = "verdict covers only the scanned region";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanRegion {
    pub radius: f64,
    pub separation_floor: f64,
    pub sample_budget: usize,
    pub multistart_count: usize,
    pub rng_seed: u64,
    /// Pairs always evaluated and refined (earlier witnesses, hand checks).
    pub probes: Vec<ProbePair>,
}

impl Default for ScanRegion {
    fn default() -> Self {
        ScanRegion {
            radius: 10.0,
            separation_floor: 1e-6,
            sample_budget: 200_000,
            multistart_count: 32,
            rng_seed: 0,
            probes: Vec::new(),
        }
    }
}

impl ScanRegion {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Contract(format!(
                "scan radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.separation_floor > 0.0 && self.separation_floor < self.radius) {
            return Err(Error::Contract(format!(
                "separation floor must lie in (0, radius), got {}",
                self.separation_floor
            )));
        }
        if self.sample_budget == 0 {
            return Err(Error::Contract("sample budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Theorem1Negative,
    Theorem1Positive,
    Theorem2,
    Corollary1,
    Example4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    HoldsOnRegion,
    Violated,
    Indefinite,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::HoldsOnRegion => "holds_on_region",
            Verdict::Violated => "violated",
            Verdict::Indefinite => "indefinite",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub quantity: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub criterion: Criterion,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Extremal pairs per scanned quantity.
    pub witnesses: Vec<Witness>,
    /// Worst observed normalized margin.
    pub extremum: f64,
    /// Minimum (and for `q_hat` also maximum) per quantity.
    pub margins: BTreeMap<String, f64>,
    pub margin_floor: f64,
    pub probes: Vec<Witness>,
    pub budget_used: usize,
    pub region: ScanRegion,
    pub caveat: &'static str,
}

/// A nonnegative weight `Λ` on `ℝ^d`.
#[derive(Clone)]
pub struct LambdaFunction {
    label: String,
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for LambdaFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LambdaFunction({})", self.label)
    }
}

impl Serialize for LambdaFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label)
    }
}

impl LambdaFunction {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        LambdaFunction {
            label: label.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = (self.eval)(x);
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Contract(format!(
                "Lambda({x:?}) = {v} is not a nonnegative number"
            )));
        }
        Ok(v)
    }
}

/// Config-level description of `Λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSpec {
    Constant {
        value: f64,
    },
    /// `Λ(x) = a + b|x|²`.
    Quadratic {
        a: f64,
        b: f64,
    },
}

impl LambdaSpec {
    pub fn build(&self) -> Result<LambdaFunction> {
        match *self {
            LambdaSpec::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::invalid(
                        "lambda",
                        "value",
                        "must be finite and nonnegative",
                    ));
                }
                Ok(LambdaFunction::constant(value))
            }
            LambdaSpec::Quadratic { a, b } => {
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::invalid(
                        "lambda",
                        "a, b",
                        "must be finite and nonnegative",
                    ));
                }
                Ok(LambdaFunction::new(format!("{a} + {b}|x|^2"), move |x| {
                    a + b * linalg::norm_sq(x)
                }))
            }
        }
    }
}

pub(crate) fn check_dims(d: usize, x: &[f64], y: &[f64]) -> Result<()> {
    for v in [x, y] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignReport {
    pub min: f64,
    pub max: f64,
    pub argmin: Option<Witness>,
    pub argmax: Option<Witness>,
    pub negatives: usize,
    pub positives: usize,
    pub probes: Vec<Witness>,
    pub budget_used: usize,
}

fn q_hat_objective<'a>() -> Objective<'a> {
    Objective {
        name: "q_hat",
        eval: Box::new(|c| Ok(c.terms.q_hat())),
        minimize: true,
        maximize: true,
    }
}

fn strict_objective<'a>() -> Objective<'a> {
    Objective {
        name: "strict_gap",
        eval: Box::new(|c| Ok((2.0 * c.terms.r.unwrap_or(0.0) - c.terms.q) / c.terms.dist_sq)),
        minimize: true,
        maximize: false,
    }
}

/// Extremes of `q̂ = q/|x − y|²` over the region.
pub fn scan_sign(field: &CoefficientField, region: &ScanRegion) -> Result<SignReport> {
    let out = run_scan(field, region, &[q_hat_objective()])?;
    let ex = &out.extremes[0];
    Ok(SignReport {
        min: ex.min.as_ref().map_or(f64::NAN, |w| w.value),
        max: ex.max.as_ref().map_or(f64::NAN, |w| w.value),
        argmin: ex.min.clone(),
        argmax: ex.max.clone(),
        negatives: ex.negatives,
        positives: ex.positives,
        probes: out.probes,
        budget_used: out.evaluations,
    })
}

fn collect_witnesses(out: &ScanOutcome) -> (Vec<Witness>, BTreeMap<String, f64>) {
    let mut ws = Vec::new();
    let mut margins = BTreeMap::new();
    for ex in &out.extremes {
        if let Some(w) = &ex.min {
            ws.push(w.clone());
            margins.insert(format!("{}_min", ex.name), w.value);
        }
        if let Some(w) = &ex.max {
            ws.push(w.clone());
            margins.insert(format!("{}_max", ex.name), w.value);
        }
    }
    (ws, margins)
}

/// One-signedness of `q` off the diagonal.
pub fn check_theorem1(field: &CoefficientField, region: &ScanRegion) -> Result<Certificate> {
    let out = run_scan(field, region, &[q_hat_objective()])?;
    let ex = &out.extremes[0];
    let (wmin, wmax) = (
        ex.min.clone().expect("minimized"),
        ex.max.clone().expect("maximized"),
    );
    let floor = MARGIN_FLOOR;
    let (criterion, verdict, witness, extremum) = if wmin.value >= floor {
        (
            Criterion::Theorem1Positive,
            Verdict::HoldsOnRegion,
            None,
            wmin.value,
        )
    } else if wmax.value <= -floor {
        (
            Criterion::Theorem1Negative,
            Verdict::HoldsOnRegion,
            None,
            wmax.value,
        )
    } else if wmin.value < -floor && wmax.value > floor {
        if ex.negatives > ex.positives {
            (
                Criterion::Theorem1Negative,
                Verdict::Violated,
                Some(wmax.clone()),
                wmax.value,
            )
        } else {
            (
                Criterion::Theorem1Positive,
                Verdict::Violated,
                Some(wmin.clone()),
                wmin.value,
            )
        }
    } else if wmin.value < -floor {
        (
            Criterion::Theorem1Negative,
            Verdict::Indefinite,
            Some(wmax.clone()),
            wmax.value,
        )
    } else {
        (
            Criterion::Theorem1Positive,
            Verdict::Indefinite,
            Some(wmin.clone()),
            wmin.value,
        )
    };
    let (witnesses, margins) = collect_witnesses(&out);
    Ok(Certificate {
        criterion,
        verdict,
        witness,
        witnesses,
        extremum,
        margins,
        margin_floor: floor,
        probes: out.probes,
        budget_used: out.evaluations,
        region: region.clone(),
        caveat: CAVEAT,
    })
}

/// Aggregates a non-strict bound (`gap ≥ 0`) with the strict `q < 2r` margin.
fn aggregate(
    criterion: Criterion,
    out: ScanOutcome,
    region: &ScanRegion,
    strict_name: &str,
) -> Certificate {
    let floor = MARGIN_FLOOR;
    let (witnesses, margins) = collect_witnesses(&out);
    let mut verdict = Verdict::HoldsOnRegion;
    let mut witness = None;
    let mut extremum = f64::INFINITY;
    let mut worst_violation = f64::INFINITY;
    for ex in &out.extremes {
        let Some(w) = &ex.min else { continue };
        let strict = ex.name == strict_name;
        if strict {
            extremum = w.value;
        }
        if w.value < -floor {
            if w.value < worst_violation {
                worst_violation = w.value;
                witness = Some(w.clone());
            }
            verdict = Verdict::Violated;
        } else if strict && w.value < floor && verdict != Verdict::Violated {
            verdict = Verdict::Indefinite;
            witness = Some(w.clone());
        }
    }
    if verdict == Verdict::Violated {
        extremum = extremum.min(worst_violation);
    }
    Certificate {
        criterion,
        verdict,
        witness,
        witnesses,
        extremum,
        margins,
        margin_floor: floor,
        probes: out.probes,
        budget_used: out.evaluations,
        region: region.clone(),
        caveat: CAVEAT,
    }
}

/// `q ≤ (Λ(x) + Λ(y))|x − y|²` and `q < 2r` off the diagonal.
pub fn check_theorem2(
    field: &CoefficientField,
    lambda: &LambdaFunction,
    region: &ScanRegion,
) -> Result<Certificate> {
    let bound = Objective {
        name: "lambda_gap",
        eval: Box::new(move |c| Ok(lambda.eval(c.x)? + lambda.eval(c.y)? - c.terms.q_hat())),
        minimize: true,
        maximize: false,
    };
    let out = run_scan(field, region, &[bound, strict_objective()])?;
    Ok(aggregate(Criterion::Theorem2, out, region, "strict_gap"))
}

/// `‖Σ(x) − Σ(y)‖_F ≤ (√Λ(x) + √Λ(y))|x − y|` and `q < 2r` off the diagonal.
pub fn check_corollary1(
    field: &CoefficientField,
    lambda: &LambdaFunction,
    region: &ScanRegion,
) -> Result<Certificate> {
    let bound = Objective {
        name: "lipschitz_gap",
        eval: Box::new(move |c| {
            Ok(lambda.eval(c.x)?.sqrt() + lambda.eval(c.y)?.sqrt()
                - c.sigma_gap / c.terms.dist_sq.sqrt())
        }),
        minimize: true,
        maximize: false,
    };
    let out = run_scan(field, region, &[bound, strict_objective()])?;
    Ok(aggregate(Criterion::Corollary1, out, region, "strict_gap"))
}

/// `σ` when `Σ = σ I`, or an error.
fn isotropic_scale(s: &[f64], d: usize, x: &[f64]) -> Result<f64> {
    if s.len() != d * d {
        return Err(Error::Contract("isotropic check needs square Σ".into()));
    }
    let sigma = s[0];
    let tol = 1e-12 * (1.0 + sigma.abs());
    for i in 0..d {
        for j in 0..d {
            let want = if i == j { sigma } else { 0.0 };
            if (s[i * d + j] - want).abs() > tol {
                return Err(Error::Contract(format!(
                    "Σ is not a multiple of the identity at {x:?}"
                )));
            }
        }
    }
    Ok(sigma)
}

/// `⟨x − y, b(x) − b(y)⟩ < (2 − d)(σ(x) − σ(y))²` for `A = σ² I`.
pub fn check_example4(field: &CoefficientField, region: &ScanRegion) -> Result<Certificate> {
    let d = field.d();
    let gap = Objective {
        name: "example4_gap",
        eval: Box::new(move |c| {
            let sx = isotropic_scale(c.sigma_x, d, c.x)?;
            let sy = isotropic_scale(c.sigma_y, d, c.y)?;
            Ok(((2.0 - d as f64) * (sx - sy).powi(2) - c.terms.drift_term) / c.terms.dist_sq)
        }),
        minimize: true,
        maximize: false,
    };
    let out = run_scan(field, region, &[gap, strict_objective()])?;
    Ok(aggregate(Criterion::Example4, out, region, "example4_gap"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};

    fn small(seed: u64) -> ScanRegion {
        ScanRegion {
            radius: 5.0,
            sample_budget: 3000,
            multistart_count: 4,
            rng_seed: seed,
            ..Default::default()
        }
    }

    #[test]
    fn ou_is_uniformly_negative() {
        let f = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 2,
            lambda: 1.0,
            sigma0: 0.7,
        })
        .unwrap();
        let s = scan_sign(&f, &small(1)).unwrap();
        assert!((s.min + 1.0).abs() < 1e-9 && (s.max + 1.0).abs() < 1e-9);
        let c = check_theorem1(&f, &small(1)).unwrap();
        assert_eq!(
            (c.criterion, c.verdict),
            (Criterion::Theorem1Negative, Verdict::HoldsOnRegion)
        );
    }

    #[test]
    fn constant_field_is_indefinite() {
        let f = make_builtin(&FieldParams::Constant {
            d: 2,
            d1: 2,
            sigma: vec![1.0, 0.0, 0.0, 1.0],
            drift: vec![1.0, 2.0],
        })
        .unwrap();
        assert_eq!(
            check_theorem1(&f, &small(2)).unwrap().verdict,
            Verdict::Indefinite
        );
        let c = check_theorem2(&f, &LambdaFunction::constant(1.0), &small(2)).unwrap();
        assert_eq!(c.verdict, Verdict::Indefinite);
    }

    #[test]
    fn tanh_is_positive_on_radius_five() {
        let f = make_builtin(&FieldParams::Tanh1d).unwrap();
        let c = check_theorem1(&f, &small(3)).unwrap();
        assert_eq!(
            (c.criterion, c.verdict),
            (Criterion::Theorem1Positive, Verdict::HoldsOnRegion),
            "{c:?}"
        );
    }

    #[test]
    fn power_law_has_both_signs() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap();
        let mut r = small(4);
        r.probes = vec![
            ProbePair {
                x: vec![1.0, 0.0, 0.0],
                y: vec![2.0, 0.0, 0.0],
            },
            ProbePair {
                x: vec![0.1, 0.0, 0.0],
                y: vec![0.2, 0.0, 0.0],
            },
        ];
        let c = check_theorem1(&f, &r).unwrap();
        assert_eq!(c.verdict, Verdict::Violated);
        assert!((c.probes[0].value + 4.0).abs() < 1e-9);
        assert!((c.probes[1].value - 2.93).abs() < 1e-9);
        for w in &c.witnesses {
            let again = crate::doubling::q_hat(&f, &w.x, &w.y).unwrap();
            assert!((again - w.value).abs() <= 1e-9 * (1.0 + w.value.abs()));
        }
    }

    #[test]
    fn isotropic_planar_margin_is_one() {
        let f = make_builtin(&FieldParams::Isotropic {
            d: 2,
            scale: 1.0,
            exponent: 1.0,
            drift_rate: 1.0,
        })
        .unwrap();
        let c = check_example4(&f, &small(5)).unwrap();
        assert_eq!(c.verdict, Verdict::HoldsOnRegion);
        assert!((c.margins["strict_gap_min"] - 1.0).abs() < 1e-6);
        let t2 = check_theorem2(&f, &LambdaFunction::constant(2.0), &small(5)).unwrap();
        assert_eq!(t2.verdict, Verdict::HoldsOnRegion);
    }

    #[test]
    fn square_root_scale_breaks_lipschitz_bound() {
        let f = make_builtin(&FieldParams::Isotropic {
            d: 2,
            scale: 1.0,
            exponent: 0.5,
            drift_rate: 1.0,
        })
        .unwrap();
        let c = check_corollary1(&f, &LambdaFunction::constant(1.0), &small(6)).unwrap();
        assert_eq!(c.verdict, Verdict::Violated);
        assert_eq!(c.witness.unwrap().quantity, "lipschitz_gap");
    }

    #[test]
    fn scan_is_deterministic() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 2, alpha: 1.5 }).unwrap();
        let a = check_theorem1(&f, &small(7)).unwrap();
        let b = check_theorem1(&f, &small(7)).unwrap();
        assert_eq!(a, b);
    }
}
