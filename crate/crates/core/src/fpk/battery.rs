use std::sync::Arc;

use rand::Rng;

use crate::measures::SupportBox;
use crate::rng;

use super::testfn::{Coordinate, PolyBump, Product, TestFunction};

/// Deterministic battery of bumps inside `bx`.
///
/// Centres are stratified over a `k^dim` lattice of the box (strata visited in
/// a seeded order), radii are log-uniform between 0.25 and 0.6 of the stratum
/// width, every bump lies inside the box, and every third function is the
/// coordinate-weighted variant `z_a · bump`.
pub fn default_battery(dim: usize, bx: &SupportBox, count: usize, seed: u64) -> Vec<TestFunction> {
    assert!(count >= 1 && dim >= 1 && bx.dim() == dim);
    let k = (1..).find(|k: &usize| k.pow(dim as u32) >= count).unwrap();
    let strata = k.pow(dim as u32);
    let mut order: Vec<usize> = (0..strata).collect();
    let mut shuffle = rng::stream(seed, rng::domain::BATTERY, 0);
    for i in (1..strata).rev() {
        let j = shuffle.random_range(0..=i);
        order.swap(i, j);
    }
    let width = (0..dim)
        .map(|a| (bx.hi[a] - bx.lo[a]) / k as f64)
        .fold(f64::INFINITY, f64::min);
    let mut out: Vec<TestFunction> = Vec::with_capacity(count);
    for (i, &s) in order.iter().take(count).enumerate() {
        let mut r = rng::stream(seed, rng::domain::BATTERY, i as u64 + 1);
        let radius = rng::log_uniform(&mut r, 0.25 * width, 0.6 * width);
        let mut cell = s;
        let mut center = vec![0.0; dim];
        for a in (0..dim).rev() {
            let si = cell % k;
            cell /= k;
            let span = (bx.hi[a] - bx.lo[a]) - 2.0 * radius;
            let u: f64 = r.random();
            center[a] = bx.lo[a] + radius + (si as f64 + 0.1 + 0.8 * u) * span / k as f64;
        }
        let bump: TestFunction = Arc::new(PolyBump::new(center, radius));
        if i % 3 == 2 {
            let axis = (i / 3) % dim;
            out.push(Arc::new(Product(
                Arc::new(Coordinate { n: dim, i: axis }),
                bump,
            )));
        } else {
            out.push(bump);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_is_reproducible_and_inside_the_box() {
        let bx = SupportBox::around(&[0.0, 0.0], 3.0);
        let a = default_battery(2, &bx, 20, 11);
        let b = default_battery(2, &bx, 20, 11);
        assert_eq!(a.len(), 20);
        for (f, g) in a.iter().zip(&b) {
            assert_eq!(f.label(), g.label());
            let s = f.support().unwrap();
            assert!(s.lo.iter().zip(&bx.lo).all(|(p, q)| p >= q));
            assert!(s.hi.iter().zip(&bx.hi).all(|(p, q)| p <= q));
        }
        let c = default_battery(2, &bx, 20, 12);
        assert_ne!(a[0].label(), c[0].label());
    }
}
