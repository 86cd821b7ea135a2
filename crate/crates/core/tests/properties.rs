use kolmocouple::certify::{check_theorem1, ScanRegion, Verdict};
use kolmocouple::coeff::{make_builtin, CoefficientField, FieldParams};
use kolmocouple::doubling::{apply_doubled, doubled_blocks, psd_margin, q_hat, q_value, r_value};
use kolmocouple::fpk::{lv_power, lyapunov_check, radial_grid, HalfSquaredDistance};
use kolmocouple::measures::EmpiricalMeasure;
use kolmocouple::mollify::MollifierKernel;
use proptest::prelude::*;

fn field_for(k: usize, d: usize, p: f64) -> CoefficientField {
    let params = match k % 5 {
        0 => FieldParams::PowerLaw {
            d,
            alpha: 0.5 + 2.5 * p,
        },
        1 => FieldParams::OrnsteinUhlenbeck {
            d,
            lambda: 0.2 + p,
            sigma0: 0.3 + p,
        },
        2 => FieldParams::Isotropic {
            d,
            scale: 0.5 + p,
            exponent: 1.0,
            drift_rate: p,
        },
        3 => FieldParams::DiagonalMap {
            slope: vec![1.0 + p; d],
            bend: p,
            drift_rate: 1.0,
        },
        _ => FieldParams::Constant {
            d,
            d1: d,
            sigma: (0..d * d).map(|i| p + i as f64 * 0.1).collect(),
            drift: vec![p; d],
        },
    };
    make_builtin(&params).unwrap()
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, d)
}

fn pair() -> impl Strategy<Value = (usize, f64, Vec<f64>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|d| (0usize..5, 0.0..1.0f64, point(d), point(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn doubled_operator_on_half_squared_distance_is_q((k, p, x, y) in pair()) {
        let f = field_for(k, x.len(), p);
        let q = q_value(&f, &x, &y).unwrap();
        let l = apply_doubled(&f, &HalfSquaredDistance { d: x.len() }, &x, &y).unwrap();
        prop_assert!((l - q).abs() <= 1e-10 * (1.0 + q.abs()));
    }

    #[test]
    fn doubled_diffusion_is_psd((k, p, x, y) in pair()) {
        let f = field_for(k, x.len(), p);
        let blocks = doubled_blocks(&f, &x, &y).unwrap();
        prop_assert!(psd_margin(&blocks.a_block).unwrap() >= -1e-9);
    }

    #[test]
    fn q_is_symmetric_and_r_is_nonnegative((k, p, x, y) in pair()) {
        let f = field_for(k, x.len(), p);
        let (a, b) = (q_value(&f, &x, &y).unwrap(), q_value(&f, &y, &x).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        if x != y {
            prop_assert!(r_value(&f, &x, &y).unwrap() >= 0.0);
        }
    }

    #[test]
    fn ou_q_hat_is_minus_lambda((p, x, y) in (0.0..1.0f64, point(2), point(2))) {
        prop_assume!(x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() > 1e-6);
        let f = make_builtin(&FieldParams::OrnsteinUhlenbeck { d: 2, lambda: 0.2 + p, sigma0: 1.0 }).unwrap();
        prop_assert!((q_hat(&f, &x, &y).unwrap() + 0.2 + p).abs() < 1e-12);
    }

    #[test]
    fn empirical_weights_must_sum_to_one(w in prop::collection::vec(0.01..5.0f64, 1..40)) {
        let n = w.len();
        let total: f64 = w.iter().sum();
        let normalized: Vec<f64> = w.iter().map(|v| v / total).collect();
        let m = EmpiricalMeasure::new(1, (0..n).map(|i| i as f64).collect(), normalized).unwrap();
        prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        if (total - 1.0).abs() > 1e-9 {
            prop_assert!(EmpiricalMeasure::new(1, (0..n).map(|i| i as f64).collect(), w).is_err());
        }
        prop_assert!((EmpiricalMeasure::uniform(1, vec![0.0; n]).unwrap().weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn mollifier_is_nonnegative_and_compactly_supported(eps in 0.01..0.99f64, x in point(2)) {
        let k = MollifierKernel::new(eps, 2).unwrap();
        let v = k.value(&x);
        prop_assert!(v >= 0.0);
        if x.iter().map(|t| t * t).sum::<f64>() >= eps * eps {
            prop_assert_eq!(v, 0.0);
        }
        let scaled: Vec<f64> = x.iter().map(|t| t / eps).collect();
        prop_assert!((v - k.unit(&scaled) / (eps * eps)).abs() <= 1e-12 * (1.0 + v));
    }

    #[test]
    fn lyapunov_radius_bounds_the_tail(alpha in 0.5..3.0f64, c in 0.5..20.0f64) {
        let f = make_builtin(&FieldParams::PowerLaw { d: 1, alpha }).unwrap();
        let radii = radial_grid(6.0, 241);
        let rep = lyapunov_check(&f, &[2.0], &radii, &[c], None).unwrap();
        if let Some(r) = rep.profiles[0].thresholds[0].radius {
            for &t in radii.iter().filter(|&&t| t >= r) {
                for s in [-1.0, 1.0] {
                    prop_assert!(lv_power(&f, 2.0, &[s * t]).unwrap() <= -c);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn violated_certificates_carry_reevaluable_witnesses(alpha in 1.0..3.0f64, seed in 0u64..1000) {
        let f = make_builtin(&FieldParams::PowerLaw { d: 2, alpha }).unwrap();
        let region = ScanRegion { radius: 3.0, sample_budget: 4000, multistart_count: 4, rng_seed: seed, ..ScanRegion::default() };
        let c = check_theorem1(&f, &region).unwrap();
        if c.verdict == Verdict::Violated {
            let w = c.witness.expect("violated certificate without witness");
            let v = q_hat(&f, &w.x, &w.y).unwrap();
            prop_assert!((v - w.value).abs() <= 1e-9);
        }
    }
}
