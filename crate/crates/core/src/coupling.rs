//! Synchronously coupled Euler–Maruyama simulation.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::EmpiricalMeasure;
use crate::rng;

pub const BLOWUP_GUARD: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    Point {
        x: Vec<f64>,
    },
    /// Independent coordinates with the given variances.
    Gaussian {
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Point { x } => x.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let InitialLaw::Gaussian { mean, var } = self {
            if mean.len() != var.len() {
                return Err(Error::DimensionMismatch {
                    expected: mean.len(),
                    got: var.len(),
                });
            }
            if var.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Contract(
                    "initial variances must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, r: &mut R, out: &mut [f64]) {
        match self {
            InitialLaw::Point { x } => out.copy_from_slice(x),
            InitialLaw::Gaussian { mean, var } => {
                for k in 0..out.len() {
                    out[k] = mean[k] + var[k].sqrt() * rng::normal(r);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub h: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
}

fn default_snapshots() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotStat {
    pub t: f64,
    pub mean_sq_diff: f64,
    pub stderr: f64,
    pub alive_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingEnsemble {
    pub label: String,
    pub d: usize,
    pub h: f64,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub snapshot_steps: Vec<usize>,
    pub times: Vec<f64>,
    /// `[pair][snapshot][x then y]`; blown-up pairs hold NaN after the escape.
    #[serde(skip)]
    pub states: Vec<f64>,
    /// Escape time per pair, if any.
    pub blowups: Vec<Option<f64>>,
    pub stats: Vec<SnapshotStat>,
    /// Normal variates consumed by the increments.
    pub normal_draws: u64,
}

impl CouplingEnsemble {
    pub fn state(&self, pair: usize, snapshot: usize) -> (&[f64], &[f64]) {
        let stride = self.times.len() * 2 * self.d;
        let off = pair * stride + snapshot * 2 * self.d;
        let s = &self.states[off..off + 2 * self.d];
        s.split_at(self.d)
    }

    pub fn blown_up(&self) -> usize {
        self.blowups.iter().filter(|b| b.is_some()).count()
    }

    /// Recomputes the snapshot statistics from the stored states.
    pub fn recompute_stats(&self) -> Vec<SnapshotStat> {
        let live: Vec<usize> = (0..self.paths)
            .filter(|&p| self.blowups[p].is_none())
            .collect();
        self.times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let v: Vec<f64> = live
                    .iter()
                    .map(|&p| {
                        let (x, y) = self.state(p, k);
                        linalg::dist_sq(x, y)
                    })
                    .collect();
                let (mean, stderr) = mean_stderr(&v);
                SnapshotStat {
                    t,
                    mean_sq_diff: mean,
                    stderr,
                    alive_paths: live.len(),
                }
            })
            .collect()
    }

    pub fn nearest_snapshot(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    /// `t, mean_sq_diff, stderr, alive_paths` per snapshot.
    pub fn write_stats_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "mean_sq_diff", "stderr", "alive_paths"])?;
        for s in &self.stats {
            w.write_record([
                s.t.to_string(),
                s.mean_sq_diff.to_string(),
                s.stderr.to_string(),
                s.alive_paths.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian `f64` states laid out as `(pair, snapshot, coordinate)`.
    pub fn write_states_le(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.states {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = linalg::pairwise_sum(v) / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (linalg::pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

fn snapshot_steps(steps: usize, count: usize) -> Vec<usize> {
    let count = count.max(1);
    let mut out: Vec<usize> = (0..=count)
        .map(|k| ((k as f64) * steps as f64 / count as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

struct Stepper<'a> {
    field: &'a CoefficientField,
    s: Vec<f64>,
    b: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a CoefficientField) -> Self {
        Stepper {
            field,
            s: vec![0.0; field.d() * field.d1()],
            b: vec![0.0; field.d()],
        }
    }

    /// `z ← z + √2 Σ(z) dw + b(z) h`.
    fn step(&mut self, z: &mut [f64], dw: &[f64], h: f64) {
        let d1 = dw.len();
        self.field.sigma_into(z, &mut self.s);
        self.field.drift_into(z, &mut self.b);
        for i in 0..z.len() {
            let noise: f64 = (0..d1).map(|j| self.s[i * d1 + j] * dw[j]).sum();
            z[i] += std::f64::consts::SQRT_2 * noise + self.b[i] * h;
        }
    }
}

fn escaped(z: &[f64]) -> bool {
    z.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_GUARD)
}

/// Euler–Maruyama for `(X, Y)` driven by one shared Brownian increment per step.
pub fn simulate_coupled(
    field: &CoefficientField,
    mu0: &InitialLaw,
    nu0: &InitialLaw,
    params: &SimulationParams,
) -> Result<CouplingEnsemble> {
    let d = field.d();
    let d1 = field.d1();
    for law in [mu0, nu0] {
        law.validate()?;
        if law.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: law.dim(),
            });
        }
    }
    let SimulationParams {
        h,
        horizon,
        paths,
        seed,
        snapshots,
    } = *params;
    if !(h > 0.0 && h.is_finite()) || !(horizon >= h) || paths == 0 {
        return Err(Error::Contract(format!(
            "need h > 0, T ≥ h and K ≥ 1 (h = {h}, T = {horizon}, K = {paths})"
        )));
    }
    let steps = (horizon / h).round() as usize;
    let snaps = snapshot_steps(steps, snapshots);
    let times: Vec<f64> = snaps.iter().map(|&n| n as f64 * h).collect();
    let sqrt_h = h.sqrt();

    let per_pair: Vec<(Vec<f64>, Option<f64>, u64)> = (0..paths)
        .into_par_iter()
        .map(|pair| {
            let mut init = rng::stream(seed, rng::domain::SAMPLING, pair as u64);
            let mut noise = rng::stream(seed, rng::domain::COUPLING, pair as u64);
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            mu0.sample(&mut init, &mut x);
            nu0.sample(&mut init, &mut y);
            let mut sx = Stepper::new(field);
            let mut sy = Stepper::new(field);
            let mut dw = vec![0.0; d1];
            let mut out = vec![f64::NAN; snaps.len() * 2 * d];
            let mut draws = 0u64;
            let mut blowup = None;
            let mut next = 0;
            for n in 0..=steps {
                if next < snaps.len() && snaps[next] == n {
                    out[next * 2 * d..next * 2 * d + d].copy_from_slice(&x);
                    out[next * 2 * d + d..(next + 1) * 2 * d].copy_from_slice(&y);
                    next += 1;
                }
                if n == steps {
                    break;
                }
                for w in dw.iter_mut() {
                    *w = sqrt_h * rng::normal(&mut noise);
                }
                draws += d1 as u64;
                sx.step(&mut x, &dw, h);
                sy.step(&mut y, &dw, h);
                if escaped(&x) || escaped(&y) {
                    blowup = Some((n + 1) as f64 * h);
                    break;
                }
            }
            (out, blowup, draws)
        })
        .collect();

    let mut states = Vec::with_capacity(paths * snaps.len() * 2 * d);
    let mut blowups = Vec::with_capacity(paths);
    let mut normal_draws = 0;
    for (s, b, n) in per_pair {
        states.extend_from_slice(&s);
        blowups.push(b);
        normal_draws += n;
    }
    let mut ens = CouplingEnsemble {
        label: field.label().to_string(),
        d,
        h,
        horizon,
        steps,
        paths,
        seed,
        snapshot_steps: snaps,
        times,
        states,
        blowups,
        stats: Vec::new(),
        normal_draws,
    };
    ens.stats = ens.recompute_stats();
    Ok(ens)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    /// `λ̂ = −slope / 2`.
    pub rate: f64,
    pub rate_stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// RMS residual of the log-linear fit.
    pub fit_residual: f64,
    pub predicted_final: f64,
    pub observed_final: f64,
}

/// Least-squares fit of `log E|X_t − Y_t|²` against `t` on the window.
pub fn contraction_rate(ens: &CouplingEnsemble, window: (f64, f64)) -> Result<ContractionReport> {
    let (t0, t1) = window;
    if !(t0 < t1) || t0 < 0.0 || t1 > ens.horizon * (1.0 + 1e-12) {
        return Err(Error::Contract(format!(
            "fit window ({t0}, {t1}) must lie inside [0, {}]",
            ens.horizon
        )));
    }
    let pts: Vec<&SnapshotStat> = ens
        .stats
        .iter()
        .filter(|s| s.t >= t0 - 1e-12 && s.t <= t1 + 1e-12)
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateFit(
            "fewer than two snapshots in the fit window".into(),
        ));
    }
    if let Some(bad) = pts.iter().find(|s| !(s.mean_sq_diff > 0.0)) {
        return Err(Error::DegenerateFit(format!(
            "mean square difference {} at t = {}",
            bad.mean_sq_diff, bad.t
        )));
    }
    let n = pts.len() as f64;
    let tbar = pts.iter().map(|s| s.t).sum::<f64>() / n;
    let lbar = pts.iter().map(|s| s.mean_sq_diff.ln()).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|s| (s.t - tbar).powi(2)).sum();
    let slope = pts
        .iter()
        .map(|s| (s.t - tbar) * (s.mean_sq_diff.ln() - lbar))
        .sum::<f64>()
        / sxx;
    let intercept = lbar - slope * tbar;
    let fit_residual = (pts
        .iter()
        .map(|s| (s.mean_sq_diff.ln() - intercept - slope * s.t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let var: f64 = pts
        .iter()
        .map(|s| ((s.t - tbar) / sxx).powi(2) * (s.stderr / s.mean_sq_diff).powi(2))
        .sum();
    let last = pts[pts.len() - 1];
    Ok(ContractionReport {
        rate: -slope / 2.0,
        rate_stderr: var.sqrt() / 2.0,
        window,
        points: pts.len(),
        fit_residual,
        predicted_final: (intercept + slope * last.t).exp(),
        observed_final: last.mean_sq_diff,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct W2Bound {
    pub t_requested: f64,
    pub t_used: f64,
    pub off_grid: bool,
    pub value: f64,
    pub stderr: f64,
}

/// `√E|X_t − Y_t|²` at the nearest snapshot.
pub fn w2_upper_bound(ens: &CouplingEnsemble, t: f64) -> W2Bound {
    let k = ens.nearest_snapshot(t);
    let s = &ens.stats[k];
    let value = s.mean_sq_diff.max(0.0).sqrt();
    let stderr = if value > 0.0 {
        s.stderr / (2.0 * value)
    } else {
        0.0
    };
    W2Bound {
        t_requested: t,
        t_used: s.t,
        off_grid: (s.t - t).abs() > 1e-9 * (1.0 + t.abs()),
        value,
        stderr,
    }
}

/// Snapshot times where the coupling bound increases by more than `slack` standard errors.
pub fn monotonicity_violations(ens: &CouplingEnsemble, slack: f64) -> Vec<f64> {
    ens.stats
        .windows(2)
        .filter(|w| w[1].mean_sq_diff > w[0].mean_sq_diff + slack * (w[0].stderr + w[1].stderr))
        .map(|w| w[1].t)
        .collect()
}

/// Time average of one long trajectory after `burn_in`, sampled every `stride` steps.
pub fn empirical_invariant(
    field: &CoefficientField,
    start: &[f64],
    h: f64,
    burn_in: f64,
    horizon: f64,
    seed: u64,
    stride: usize,
) -> Result<EmpiricalMeasure> {
    let d = field.d();
    if start.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: start.len(),
        });
    }
    if !(h > 0.0) || !(horizon > burn_in) || burn_in < 0.0 || stride == 0 {
        return Err(Error::Contract(format!(
            "need h > 0, T > burn-in ≥ 0, stride ≥ 1 (h = {h}, burn-in = {burn_in}, T = {horizon})"
        )));
    }
    let steps = (horizon / h).round() as usize;
    let first = (burn_in / h).round() as usize;
    let mut noise = rng::stream(seed, rng::domain::INVARIANT, 0);
    let mut st = Stepper::new(field);
    let mut z = start.to_vec();
    let mut dw = vec![0.0; field.d1()];
    let mut points = Vec::new();
    let sqrt_h = h.sqrt();
    for n in 1..=steps {
        for w in dw.iter_mut() {
            *w = sqrt_h * rng::normal(&mut noise);
        }
        st.step(&mut z, &dw, h);
        if escaped(&z) {
            return Err(Error::Blowup { time: n as f64 * h });
        }
        if n > first && (n - first) % stride == 0 {
            points.extend_from_slice(&z);
        }
    }
    if points.is_empty() {
        return Err(Error::Contract(
            "no samples after burn-in; reduce the stride".into(),
        ));
    }
    EmpiricalMeasure::uniform(d, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};

    fn ou(lambda: f64) -> CoefficientField {
        make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap()
    }

    fn params(h: f64, horizon: f64, paths: usize) -> SimulationParams {
        SimulationParams {
            h,
            horizon,
            paths,
            seed: 3,
            snapshots: 100,
        }
    }

    #[test]
    fn constant_sigma_difference_is_deterministic() {
        let ens = simulate_coupled(
            &ou(1.0),
            &InitialLaw::Point { x: vec![1.0] },
            &InitialLaw::Point { x: vec![0.0] },
            &params(1e-3, 1.0, 8),
        )
        .unwrap();
        let k = ens.times.len() - 1;
        let exact = (1.0f64 - 1e-3).powi(2000);
        for p in 0..8 {
            let (x, y) = ens.state(p, k);
            assert!(((x[0] - y[0]).powi(2) - exact).abs() < 1e-12);
        }
        assert!((ens.stats[k].mean_sq_diff - (-2.0f64).exp()).abs() < 2e-3);
        assert_eq!(ens.normal_draws, 8 * 1000);
    }

    #[test]
    fn identical_starts_stay_identical() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap();
        let p = params(1e-3, 0.5, 4);
        let point = InitialLaw::Point {
            x: vec![0.3, 0.2, 0.1],
        };
        let ens = simulate_coupled(&f, &point, &point, &p).unwrap();
        assert!(ens.stats.iter().all(|s| s.mean_sq_diff == 0.0));
        assert!(contraction_rate(&ens, (0.0, 0.5)).is_err());
        assert_eq!(w2_upper_bound(&ens, 0.25).value, 0.0);
    }

    #[test]
    fn ensemble_is_reproducible_and_stats_recompute() {
        let law = InitialLaw::Gaussian {
            mean: vec![0.0],
            var: vec![0.5],
        };
        let a = simulate_coupled(
            &ou(1.0),
            &law,
            &InitialLaw::Point { x: vec![2.0] },
            &params(1e-2, 2.0, 64),
        )
        .unwrap();
        let b = simulate_coupled(
            &ou(1.0),
            &law,
            &InitialLaw::Point { x: vec![2.0] },
            &params(1e-2, 2.0, 64),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.recompute_stats(), a.stats);
    }

    #[test]
    fn fitted_rates_for_ou() {
        for lambda in [1.0, 2.0] {
            let ens = simulate_coupled(
                &ou(lambda),
                &InitialLaw::Point { x: vec![1.0] },
                &InitialLaw::Point { x: vec![-1.0] },
                &params(1e-3, 2.0, 4),
            )
            .unwrap();
            let r = contraction_rate(&ens, (0.0, 2.0)).unwrap();
            assert!(
                (r.rate - lambda).abs() <= 0.02f64.max(3.0 * r.rate_stderr),
                "{r:?}"
            );
        }
    }

    #[test]
    fn off_grid_time_is_flagged() {
        let ens = simulate_coupled(
            &ou(1.0),
            &InitialLaw::Point { x: vec![1.0] },
            &InitialLaw::Point { x: vec![0.0] },
            &params(1e-2, 1.0, 2),
        )
        .unwrap();
        let w = w2_upper_bound(&ens, 0.123);
        assert!(w.off_grid && (w.t_used - 0.12).abs() < 1e-12);
        assert!(!w2_upper_bound(&ens, 0.5).off_grid);
    }

    #[test]
    fn origin_is_a_fixed_point_for_power_law() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap();
        let m = empirical_invariant(&f, &[0.0; 3], 1e-3, 0.1, 1.0, 1, 10).unwrap();
        assert!(m.points().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn blowup_is_reported() {
        let f = CoefficientField::from_fns(
            1,
            1,
            "explosive",
            |_x, s| s[0] = 0.0,
            |x, b| b[0] = x[0] * x[0] * x[0],
        );
        let ens = simulate_coupled(
            &f,
            &InitialLaw::Point { x: vec![2.0] },
            &InitialLaw::Point { x: vec![0.0] },
            &params(1e-2, 5.0, 3),
        )
        .unwrap();
        assert_eq!(ens.blown_up(), 3);
        assert!(matches!(
            empirical_invariant(&f, &[2.0], 1e-2, 0.0, 5.0, 1, 1),
            Err(Error::Blowup { .. })
        ));
    }
}
