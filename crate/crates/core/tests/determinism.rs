use kolmocouple::certify::{check_theorem1, ScanRegion};
use kolmocouple::coeff::{make_builtin, FieldParams};
use kolmocouple::coupling::{simulate_coupled, InitialLaw, SimulationParams};
use kolmocouple::fpk::{default_battery, weak_residual};
use kolmocouple::measures::{example1_density, MeasureRep, SupportBox};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn simulation_is_thread_count_invariant() {
    let f = make_builtin(&FieldParams::PowerLaw { d: 2, alpha: 1.0 }).unwrap();
    let mu = InitialLaw::Gaussian {
        mean: vec![1.0, 0.0],
        var: vec![0.2, 0.2],
    };
    let nu = InitialLaw::Point { x: vec![-1.0, 0.5] };
    let params = SimulationParams {
        h: 1e-2,
        horizon: 2.0,
        paths: 257,
        seed: 11,
        snapshots: 20,
    };
    let run = |t| in_pool(t, || simulate_coupled(&f, &mu, &nu, &params).unwrap());
    let (a, b) = (run(1), run(5));
    let bits = |e: &kolmocouple::coupling::CouplingEnsemble| {
        e.stats
            .iter()
            .map(|s| s.mean_sq_diff.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    for p in [0, 100, 256] {
        assert_eq!(a.state(p, 20), b.state(p, 20));
    }
}

#[test]
fn scan_and_residual_are_thread_count_invariant() {
    let f = make_builtin(&FieldParams::PowerLaw { d: 3, alpha: 2.0 }).unwrap();
    let region = ScanRegion {
        radius: 3.0,
        sample_budget: 3000,
        multistart_count: 6,
        rng_seed: 4,
        ..ScanRegion::default()
    };
    let c1 = in_pool(1, || check_theorem1(&f, &region).unwrap());
    let c3 = in_pool(3, || check_theorem1(&f, &region).unwrap());
    assert_eq!(format!("{c1:?}"), format!("{c3:?}"));
    let mu = MeasureRep::Analytic(example1_density(3).unwrap());
    let battery = default_battery(3, &SupportBox::around(&[0.0; 3], 2.0), 4, 9);
    let r1 = in_pool(1, || weak_residual(&f, &mu, &battery).unwrap());
    let r4 = in_pool(4, || weak_residual(&f, &mu, &battery).unwrap());
    assert_eq!(format!("{r1:?}"), format!("{r4:?}"));
}
