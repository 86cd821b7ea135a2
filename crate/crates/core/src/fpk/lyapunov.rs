use serde::Serialize;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::linalg;

/// `n − m |x|^p`, a reference upper bound to compare `LV` against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerBound {
    pub n: f64,
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub c: f64,
    /// Least grid radius beyond which `LV ≤ −c` in every direction.
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovProfile {
    pub label: String,
    pub p: f64,
    pub radii: Vec<f64>,
    pub lv_max: Vec<f64>,
    pub lv_mean: Vec<f64>,
    /// Least `R` with `sup_{|x| ≥ R} LV < 0` on the grid, and `C = −sup`.
    pub valid: Option<(f64, f64)>,
    pub thresholds: Vec<Threshold>,
    /// `max (LV − bound)` over the grid; nonpositive when the bound holds.
    pub bound_excess: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub field: String,
    pub profiles: Vec<LyapunovProfile>,
}

fn directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 16.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            let total = 3usize.pow(d.min(3) as u32);
            for code in 0..total {
                let mut v = vec![0.0; d];
                let mut c = code;
                for slot in v.iter_mut().take(3) {
                    *slot = (c % 3) as f64 - 1.0;
                    c /= 3;
                }
                let n = linalg::norm(&v);
                if n > 0.0 {
                    v.iter_mut().for_each(|x| *x /= n);
                    out.push(v);
                }
            }
            out
        }
    }
}

/// `L|x|^p` at `x`.
pub fn lv_power(field: &CoefficientField, p: f64, x: &[f64]) -> Result<f64> {
    let d = field.d();
    let mut s = vec![0.0; d * field.d1()];
    let mut b = vec![0.0; d];
    let mut a = vec![0.0; d * d];
    field.eval_into(x, &mut s, &mut b)?;
    field.diffusion_from_sigma(&s, &mut a);
    let r2 = linalg::norm_sq(x);
    if r2 == 0.0 {
        let trace: f64 = (0..d).map(|i| a[i * d + i]).sum();
        return Ok(if p == 2.0 { 2.0 * trace } else { 0.0 });
    }
    let r = r2.sqrt();
    // ∇V = p r^{p−2} x, D²V = p r^{p−2} I + p(p−2) r^{p−4} x xᵗ.
    let g = p * r.powf(p - 2.0);
    let h = p * (p - 2.0) * r.powf(p - 4.0);
    let trace: f64 = (0..d).map(|i| a[i * d + i]).sum();
    let mut xax = 0.0;
    for i in 0..d {
        for j in 0..d {
            xax += x[i] * a[i * d + j] * x[j];
        }
    }
    Ok(g * trace + h * xax + g * linalg::dot(&b, x))
}

/// Radial profile of `L|x|^p` for each `p`, with drift thresholds.
pub fn lyapunov_check(
    field: &CoefficientField,
    powers: &[f64],
    radii: &[f64],
    constants: &[f64],
    bound: Option<PowerBound>,
) -> Result<LyapunovReport> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] < 0.0 {
        return Err(Error::Contract(
            "radial grid must be nonempty, nonnegative and increasing".into(),
        ));
    }
    let d = field.d();
    let dirs = directions(d);
    let mut profiles = Vec::new();
    for &p in powers {
        if !(p >= 2.0) {
            return Err(Error::Contract(format!(
                "Lyapunov exponent p = {p} must be at least 2"
            )));
        }
        let mut lv_max = Vec::with_capacity(radii.len());
        let mut lv_mean = Vec::with_capacity(radii.len());
        let mut x = vec![0.0; d];
        let mut excess = f64::NEG_INFINITY;
        for &r in radii {
            let mut vals = Vec::with_capacity(dirs.len());
            for u in &dirs {
                x.iter_mut().zip(u).for_each(|(xi, ui)| *xi = r * ui);
                vals.push(lv_power(field, p, &x)?);
            }
            let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            lv_max.push(mx);
            lv_mean.push(linalg::pairwise_sum(&vals) / vals.len() as f64);
            if let Some(b) = bound {
                excess = excess.max(mx - (b.n - b.m * r.powf(p)));
            }
        }
        // Suffix suprema of the directional maximum.
        let mut tail = vec![f64::NEG_INFINITY; radii.len()];
        let mut acc = f64::NEG_INFINITY;
        for k in (0..radii.len()).rev() {
            acc = acc.max(lv_max[k]);
            tail[k] = acc;
        }
        let valid = (0..radii.len())
            .find(|&k| tail[k] < 0.0)
            .map(|k| (radii[k], -tail[k]));
        let thresholds = constants
            .iter()
            .map(|&c| Threshold {
                c,
                radius: (0..radii.len()).find(|&k| tail[k] <= -c).map(|k| radii[k]),
            })
            .collect();
        profiles.push(LyapunovProfile {
            label: format!("|x|^{p}"),
            p,
            radii: radii.to_vec(),
            lv_max,
            lv_mean,
            valid,
            thresholds,
            bound_excess: bound.map(|_| excess),
        });
    }
    Ok(LyapunovReport {
        field: field.label().to_string(),
        profiles,
    })
}

/// `n` evenly spaced radii on `[0, r_max]`.
pub fn radial_grid(r_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| r_max * k as f64 / (n - 1).max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};

    #[test]
    fn power_law_profile_matches_closed_form() {
        let f = make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap();
        let radii = radial_grid(4.0, 401);
        let rep = lyapunov_check(
            &f,
            &[2.0],
            &radii,
            &[16.0],
            Some(PowerBound { n: 16.0, m: 1.0 }),
        )
        .unwrap();
        let prof = &rep.profiles[0];
        for (r, v) in radii.iter().zip(&prof.lv_max) {
            let exact = 6.0 * r * r - 2.0 * r.powi(4);
            assert!((v - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
        }
        let r16 = prof.thresholds[0].radius.unwrap();
        let root = ((3.0 + 41f64.sqrt()) / 2.0).sqrt();
        assert!(r16 >= root && r16 - root <= 0.01);
        assert!(prof.bound_excess.unwrap() <= 0.0);
    }

    #[test]
    fn ou_profile_in_one_dimension() {
        let f = make_builtin(&FieldParams::OrnsteinUhlenbeck {
            d: 1,
            lambda: 1.0,
            sigma0: 0.5f64.sqrt(),
        })
        .unwrap();
        let rep = lyapunov_check(&f, &[2.0], &radial_grid(3.0, 31), &[], None).unwrap();
        for (r, v) in rep.profiles[0].radii.iter().zip(&rep.profiles[0].lv_max) {
            assert!((v - (1.0 - 2.0 * r * r)).abs() < 1e-12);
        }
        assert!((rep.profiles[0].valid.unwrap().0 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_field_has_no_valid_pair() {
        let f = make_builtin(&FieldParams::Constant {
            d: 2,
            d1: 2,
            sigma: vec![0.0; 4],
            drift: vec![0.0; 2],
        })
        .unwrap();
        let rep = lyapunov_check(&f, &[2.0, 4.0], &radial_grid(5.0, 11), &[1.0], None).unwrap();
        assert!(rep
            .profiles
            .iter()
            .all(|p| p.valid.is_none() && p.lv_max.iter().all(|v| *v == 0.0)));
    }
}
