use kolmocouple::coeff::{make_builtin, FieldParams};
use kolmocouple::fpk::default_battery;
use kolmocouple::measures::{gaussian_density, MeasureRep, SupportBox};
use kolmocouple::mollify::*;

fn ou() -> kolmocouple::coeff::CoefficientField {
    make_builtin(&FieldParams::OrnsteinUhlenbeck {
        d: 1,
        lambda: 1.0,
        sigma0: 0.5f64.sqrt(),
    })
    .unwrap()
}

fn half_gaussian() -> MeasureRep {
    MeasureRep::Analytic(gaussian_density(vec![0.0], vec![0.5]).unwrap())
}

#[test]
fn residual_shrinks_under_refinement() {
    let battery = default_battery(1, &SupportBox::around(&[0.0], 3.0), 10, 1);
    let mut last = f64::INFINITY;
    for cells in [8.0, 16.0] {
        let s = regularize_coefficients(
            &ou(),
            &half_gaussian(),
            0.1,
            &GridSpec {
                cells_per_eps: cells,
                domain: None,
            },
        )
        .unwrap();
        let r = regularized_residual(&s, &battery).unwrap().max_abs;
        println!("cells_per_eps={cells} residual={r:.3e}");
        assert!(r <= 1e-4);
        assert!(r * 1.5 <= last);
        last = r;
    }
}

#[test]
fn dirac_power_law_residual() {
    let f = make_builtin(&FieldParams::PowerLaw { d: 1, alpha: 0.5 }).unwrap();
    let s = regularize_coefficients(&f, &MeasureRep::dirac(vec![0.0]), 0.2, &GridSpec::default())
        .unwrap();
    let battery = default_battery(1, &SupportBox::around(&[0.0], 3.0), 10, 2);
    assert!(regularized_residual(&s, &battery).unwrap().max_abs <= 1e-4);
}

#[test]
fn battery_off_grid_gives_zero_with_warning() {
    let s = regularize_coefficients(&ou(), &half_gaussian(), 0.1, &GridSpec::default()).unwrap();
    let far = default_battery(
        1,
        &SupportBox {
            lo: vec![50.0],
            hi: vec![60.0],
        },
        3,
        0,
    );
    let r = regularized_residual(&s, &far).unwrap();
    assert!(r
        .entries
        .iter()
        .all(|e| e.residual == 0.0 && e.warning.is_some()));
}

#[test]
fn constant_field_sigma_formula() {
    let f = make_builtin(&FieldParams::Constant {
        d: 1,
        d1: 1,
        sigma: vec![0.7],
        drift: vec![0.3],
    })
    .unwrap();
    let eps = 0.2;
    let mu = MeasureRep::dirac(vec![0.4]);
    let s = regularize_coefficients(&f, &mu, eps, &GridSpec::default()).unwrap();
    let plain = mollify_measure(&mu, eps, &GridSpec::default()).unwrap();
    for c in 0..s.nodes() {
        let x = s.density.center(c);
        let m = s.density.values()[c];
        let g = (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let conv = (m - eps * g) / (1.0 - eps);
        assert!((s.node_sigma(c)[0] - (1.0 - eps) * 0.7 * conv / m).abs() < 1e-12);
        assert_eq!(plain.density.values()[c], m);
    }
}

#[test]
fn weak_gap_decreases_with_eps() {
    let battery = default_battery(1, &SupportBox::around(&[0.0], 3.0), 10, 5);
    let gaps: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&e| {
            weak_gap(
                &mollify_measure(&half_gaussian(), e, &GridSpec::default()).unwrap(),
                &half_gaussian(),
                &battery,
            )
            .unwrap()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn zero_diffusion_blocks_are_psd() {
    let f = make_builtin(&FieldParams::Constant {
        d: 2,
        d1: 2,
        sigma: vec![0.0; 4],
        drift: vec![0.0, 0.0],
    })
    .unwrap();
    let mu = MeasureRep::dirac(vec![0.0, 0.0]);
    let s = regularize_coefficients(
        &f,
        &mu,
        0.3,
        &GridSpec {
            cells_per_eps: 4.0,
            domain: None,
        },
    )
    .unwrap();
    assert!(doubled_regularized_psd(&s, &s, 500, 1).unwrap().min_margin >= 0.0);
}

#[test]
fn csv_export_has_one_row_per_node() {
    let s = regularize_coefficients(&ou(), &half_gaussian(), 0.2, &GridSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mollified.csv");
    s.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), s.nodes() + 1);
    assert!(text.starts_with("x1,mu_eps,a_1_1,sigma_1_1,b_1"));
}
