//! Scenario files: one TOML document per run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kolmocouple::certify::{LambdaSpec, MomentCriterion, ScanRegion};
use kolmocouple::coeff::{make_builtin, CoefficientField, FieldParams};
use kolmocouple::coupling::InitialLaw;
use kolmocouple::measures::{
    example1_density, gaussian_density, read_empirical_csv, read_grid_csv, MeasureRep,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Certify,
    Simulate,
    Solve,
    Residual,
    Mollify,
    PaperSuite,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Certify => "certify",
            Task::Simulate => "simulate",
            Task::Solve => "solve",
            Task::Residual => "residual",
            Task::Mollify => "mollify",
            Task::PaperSuite => "paper-suite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<ResidualSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollify: Option<MollifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteSection>,
}

/// A measure named in a scenario; relative paths resolve against the scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Dirac {
        atom: Vec<f64>,
    },
    /// `cov` is row-major `d × d`.
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<f64>,
    },
    /// `C |x|^{-2} e^{-|x|²/2}` on `ℝ³`.
    Example1,
    GridCsv {
        path: PathBuf,
    },
    EmpiricalCsv {
        path: PathBuf,
    },
}

impl MeasureSpec {
    pub fn build(&self, base: &Path) -> Result<MeasureRep> {
        Ok(match self {
            MeasureSpec::Dirac { atom } => MeasureRep::dirac(atom.clone()),
            MeasureSpec::Gaussian { mean, cov } => {
                MeasureRep::Analytic(gaussian_density(mean.clone(), cov.clone())?)
            }
            MeasureSpec::Example1 => MeasureRep::Analytic(example1_density(3)?),
            MeasureSpec::GridCsv { path } => MeasureRep::Grid(
                read_grid_csv(&base.join(path))
                    .with_context(|| format!("reading grid {}", path.display()))?,
            ),
            MeasureSpec::EmpiricalCsv { path } => MeasureRep::Empirical(
                read_empirical_csv(&base.join(path))
                    .with_context(|| format!("reading samples {}", path.display()))?,
            ),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyKind {
    Theorem1,
    Theorem2,
    Corollary1,
    Example4,
    Moments,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Holds,
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub criterion: CertifyKind,
    #[serde(default)]
    pub region: ScanRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    /// Measure for the integrability side conditions (`criterion = "moments"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_criterion: Option<MomentCriterion>,
    /// Regression mode: a verdict of `violated` when `holds` is expected exits with status 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

fn default_snapshots() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub h: f64,
    pub horizon: f64,
    pub paths: usize,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    pub mu0: InitialLaw,
    pub nu0: InitialLaw,
    /// Time window for the exponential fit; defaults to the middle 60% of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Times at which to report the `W₂` upper bound; defaults to the horizon.
    #[serde(default)]
    pub w2_times: Vec<f64>,
    /// Also write raw `[pair][snapshot][x, y]` states as little-endian `f64`.
    #[serde(default)]
    pub write_states: bool,
}

fn default_battery_count() -> usize {
    20
}

fn default_half_width() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    #[serde(default = "default_battery_count")]
    pub count: usize,
    /// Bumps are placed inside the cube of this half-width about `center`.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            count: default_battery_count(),
            half_width: default_half_width(),
            center: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub battery: BatterySpec,
    /// Analytic reference for an `L¹` comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<MeasureSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    Product,
    Diagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubledSpec {
    pub kind: CouplingKind,
    /// Second marginal of a product coupling; defaults to the residual measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<MeasureSpec>,
    #[serde(default)]
    pub battery: BatterySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSpec {
    #[serde(default = "default_powers")]
    pub powers: Vec<f64>,
    pub r_max: f64,
    #[serde(default = "default_radial_points")]
    pub points: usize,
    #[serde(default)]
    pub constants: Vec<f64>,
    /// Reference bound `LV ≤ n − m|x|^p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<[f64; 2]>,
}

fn default_powers() -> Vec<f64> {
    vec![2.0]
}

fn default_radial_points() -> usize {
    401
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualSection {
    pub measure: MeasureSpec,
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doubled: Option<DoubledSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSpec>,
}

fn default_cells_per_eps() -> f64 {
    8.0
}

fn default_psd_pairs() -> usize {
    10_000
}

fn default_mollify_battery() -> BatterySpec {
    BatterySpec {
        count: 10,
        ..BatterySpec::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySection {
    pub measure: MeasureSpec,
    /// Second system for the doubled matrix; defaults to the first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<MeasureSpec>,
    pub eps: Vec<f64>,
    #[serde(default = "default_cells_per_eps")]
    pub cells_per_eps: f64,
    #[serde(default = "default_mollify_battery")]
    pub battery: BatterySpec,
    #[serde(default = "default_psd_pairs")]
    pub psd_pairs: usize,
    /// Radius beyond which `L_ε |x|²` is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_radius: Option<f64>,
    #[serde(default = "default_true")]
    pub write_csv: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    /// Criterion ids to run (for example `["1", "6"]`); empty runs all.
    #[serde(default)]
    pub only: Vec<String>,
}

/// Parses a scenario, naming the offending key path on schema errors.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = toml::Deserializer::new(text);
    match serde_path_to_error::deserialize::<_, Scenario>(de) {
        Ok(s) => Ok(s),
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path == "." || path.is_empty() {
                bail!("config error: {msg}")
            }
            bail!("config error at `{path}`: {msg}")
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_scenario(&text)
}

impl Scenario {
    pub fn require_field(&self, base: &Path) -> Result<CoefficientField> {
        let Some(params) = &self.field else {
            bail!("config error: missing section `field` (with key `family`)");
        };
        let params = match params {
            FieldParams::Tabulated { csv } => FieldParams::Tabulated {
                csv: base.join(csv),
            },
            other => other.clone(),
        };
        Ok(make_builtin(&params)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_family_names_the_key() {
        let err = parse_scenario("name = \"x\"\n[field]\nd = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("field") && msg.contains("family"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = parse_scenario("name = \"x\"\n[simulate]\nh = 0.1\nhorizon = 1.0\npaths = 2\nmu0 = { kind = \"point\", x = [0.0] }\nnu0 = { kind = \"point\", x = [1.0] }\nstep = 3\n").unwrap_err();
        assert!(err.to_string().contains("simulate"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let text = r#"
name = "ou"
task = "certify"
seed = 3
[field]
family = "ornstein_uhlenbeck"
d = 2
lambda = 1.0
sigma0 = 1.0
[certify]
criterion = "theorem1"
expect = "holds"
[certify.region]
radius = 4.0
sample_budget = 1000
"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.task, Some(Task::Certify));
        assert_eq!(s.certify.as_ref().unwrap().region.sample_budget, 1000);
        let again = parse_scenario(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
    }
}
