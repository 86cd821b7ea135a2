//! Adaptive Gauss–Kronrod integration and fixed Gauss–Legendre rules.
//!
//! The adaptive driver is the global-bisection scheme with the 15-point
//! Kronrod extension of the 7-point Gauss rule. Tolerances are measured
//! against the integral of `|f|`, so integrands that nearly cancel (weak
//! residuals) are held to an absolute standard rather than chased to zero.
//!
//! Boxes of dimension three and higher use the Genz–Malik degree-7 rule with
//! global subdivision instead of nested one-dimensional integrals.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_intervals: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    /// Integral of `|f|`, the scale the relative tolerance is measured against.
    pub magnitude: f64,
    pub converged: bool,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    magnitude: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gk15<F: FnMut(f64) -> f64 + ?Sized>(f: &mut F, a: f64, b: f64) -> Segment {
    let centr = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);
    let dhlgth = hlgth.abs();
    let fc = f(centr);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..3 {
        let jtw = 2 * j + 1;
        let absc = hlgth * XGK[jtw];
        let f1 = f(centr - absc);
        let f2 = f(centr + absc);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += WG[j] * (f1 + f2);
        resk += WGK[jtw] * (f1 + f2);
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let absc = hlgth * XGK[jtwm1];
        let f1 = f(centr - absc);
        let f2 = f(centr + absc);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * hlgth;
    resabs *= dhlgth;
    resasc *= dhlgth;
    let mut error = ((resk - resg) * hlgth).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment {
        a,
        b,
        value,
        error,
        magnitude: resabs,
    }
}

/// Globally adaptive integral of `f` over `[a, b]`.
pub fn adaptive<F: FnMut(f64) -> f64 + ?Sized>(
    f: &mut F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> QuadResult {
    if a == b {
        return QuadResult {
            converged: true,
            ..Default::default()
        };
    }
    let first = gk15(f, a, b);
    let mut evaluations = 15;
    let mut value = first.value;
    let mut error = first.error;
    let mut magnitude = first.magnitude;
    if !value.is_finite() {
        return QuadResult {
            value,
            error: f64::INFINITY,
            magnitude,
            converged: false,
            evaluations,
        };
    }
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let tol = |m: f64| opts.abs_tol.max(opts.rel_tol * m);
    while error > tol(magnitude) {
        if heap.len() >= opts.max_intervals {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a.min(worst.b) && mid < worst.a.max(worst.b)) {
            heap.push(worst);
            break;
        }
        let left = gk15(f, worst.a, mid);
        let right = gk15(f, mid, worst.b);
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        magnitude += left.magnitude + right.magnitude - worst.magnitude;
        heap.push(left);
        heap.push(right);
        if !value.is_finite() {
            break;
        }
    }
    // Re-sum in interval order so the result does not carry update drift.
    let mut segs: Vec<Segment> = heap.into_vec();
    segs.sort_by(|p, q| p.a.total_cmp(&q.a));
    value = segs.iter().map(|s| s.value).sum();
    error = segs.iter().map(|s| s.error).sum();
    magnitude = segs.iter().map(|s| s.magnitude).sum();
    QuadResult {
        value,
        error,
        magnitude,
        converged: value.is_finite() && error <= tol(magnitude),
        evaluations,
    }
}

/// Aggregated outcome of nested one-dimensional integrations.
#[derive(Clone, Copy, Debug, Default)]
pub struct NestStats {
    pub failures: usize,
    pub evaluations: usize,
}

impl NestStats {
    fn record(&mut self, r: &QuadResult) {
        if !r.converged {
            self.failures += 1;
        }
        self.evaluations += r.evaluations;
    }
}

/// Adaptive integral of `f` over the box `[lo, hi]`.
pub fn integrate_box(
    f: &mut dyn FnMut(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    opts: &QuadOptions,
) -> QuadResult {
    assert_eq!(lo.len(), hi.len());
    if lo.len() >= 3 {
        return cubature(f, lo, hi, opts);
    }
    let mut point = lo.to_vec();
    let mut stats = NestStats::default();
    if lo.is_empty() {
        let v = f(&point);
        return QuadResult {
            value: v,
            error: 0.0,
            magnitude: v.abs(),
            converged: v.is_finite(),
            evaluations: 1,
        };
    }
    let outer = nested(f, lo, hi, opts, &mut point, 0, &mut stats);
    QuadResult {
        value: outer.value,
        error: outer.error,
        magnitude: outer.magnitude,
        converged: outer.converged && stats.failures == 0,
        evaluations: stats.evaluations,
    }
}

fn nested(
    f: &mut dyn FnMut(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    opts: &QuadOptions,
    point: &mut [f64],
    axis: usize,
    stats: &mut NestStats,
) -> QuadResult {
    let last = axis + 1 == lo.len();
    let r = {
        let mut g = |t: f64| {
            point[axis] = t;
            if last {
                f(point)
            } else {
                nested(f, lo, hi, opts, point, axis + 1, stats).value
            }
        };
        adaptive(&mut g, lo[axis], hi[axis], opts)
    };
    if last {
        stats.record(&r);
    } else if !r.converged {
        stats.failures += 1;
    }
    r
}

/// Subregion budget of [`cubature`] per unit of `max_intervals`.
const REGIONS_PER_INTERVAL: usize = 100;

struct Region {
    center: Vec<f64>,
    half: Vec<f64>,
    value: f64,
    error: f64,
    magnitude: f64,
    split: usize,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Region {}
impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Region {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn genz_malik(
    f: &mut dyn FnMut(&[f64]) -> f64,
    center: Vec<f64>,
    half: Vec<f64>,
    p: &mut [f64],
) -> Region {
    let n = center.len();
    let nf = n as f64;
    let l2 = (9.0f64 / 70.0).sqrt();
    let l4 = (9.0f64 / 10.0).sqrt();
    let l5 = (9.0f64 / 19.0).sqrt();
    let vol: f64 = half.iter().map(|h| 2.0 * h).product();
    let mut abs_sum = 0.0;
    let mut count = 0usize;
    let mut eval = |p: &[f64], abs_sum: &mut f64, count: &mut usize| {
        let v = f(p);
        *abs_sum += v.abs();
        *count += 1;
        v
    };
    p.copy_from_slice(&center);
    let f0 = eval(p, &mut abs_sum, &mut count);
    let (mut s2, mut s3, mut s4, mut s5) = (0.0, 0.0, 0.0, 0.0);
    let mut split = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let mut pair = |lam: f64, abs_sum: &mut f64, count: &mut usize| {
            p[i] = center[i] + lam * half[i];
            let a = eval(p, abs_sum, count);
            p[i] = center[i] - lam * half[i];
            let b = eval(p, abs_sum, count);
            p[i] = center[i];
            a + b
        };
        let t2 = pair(l2, &mut abs_sum, &mut count);
        let t3 = pair(l4, &mut abs_sum, &mut count);
        s2 += t2;
        s3 += t3;
        let diff = ((t2 - 2.0 * f0) - (t3 - 2.0 * f0) / 7.0).abs();
        if diff > best || (diff == best && half[i] > half[split]) {
            best = diff;
            split = i;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                p[i] = center[i] + si * l4 * half[i];
                p[j] = center[j] + sj * l4 * half[j];
                s4 += eval(p, &mut abs_sum, &mut count);
            }
            p[i] = center[i];
            p[j] = center[j];
        }
    }
    for corner in 0..(1usize << n) {
        for k in 0..n {
            let s = if (corner >> k) & 1 == 1 { 1.0 } else { -1.0 };
            p[k] = center[k] + s * l5 * half[k];
        }
        s5 += eval(p, &mut abs_sum, &mut count);
    }
    let w1 = (12824.0 - 9120.0 * nf + 400.0 * nf * nf) / 19683.0;
    let w2 = 980.0 / 6561.0;
    let w3 = (1820.0 - 400.0 * nf) / 19683.0;
    let w4 = 200.0 / 19683.0;
    let w5 = 6859.0 / 19683.0 / (1u64 << n) as f64;
    let e1 = (729.0 - 950.0 * nf + 50.0 * nf * nf) / 729.0;
    let e2 = 245.0 / 486.0;
    let e3 = (265.0 - 100.0 * nf) / 1458.0;
    let e4 = 25.0 / 729.0;
    let value = vol * (w1 * f0 + w2 * s2 + w3 * s3 + w4 * s4 + w5 * s5);
    let low = vol * (e1 * f0 + e2 * s2 + e3 * s3 + e4 * s4);
    Region {
        center,
        half,
        value,
        error: (value - low).abs(),
        magnitude: vol * abs_sum / count as f64,
        split,
    }
}

/// Globally adaptive Genz–Malik cubature over `[lo, hi]` (dimension ≥ 2).
pub fn cubature(
    f: &mut dyn FnMut(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    opts: &QuadOptions,
) -> QuadResult {
    let n = lo.len();
    assert!(n >= 2, "Genz–Malik needs at least two dimensions");
    let points = 1 + 4 * n + 2 * n * (n - 1) + (1 << n);
    let mut p = vec![0.0; n];
    let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let half: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
    if half.iter().any(|h| *h == 0.0) {
        return QuadResult {
            converged: true,
            ..Default::default()
        };
    }
    let first = genz_malik(f, center, half, &mut p);
    let (mut value, mut error, mut magnitude) = (first.value, first.error, first.magnitude);
    let mut evaluations = points;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let budget = opts.max_intervals * REGIONS_PER_INTERVAL;
    let tol = |m: f64| opts.abs_tol.max(opts.rel_tol * m);
    while error > tol(magnitude) && heap.len() < budget && value.is_finite() {
        let worst = heap.pop().expect("heap is never empty");
        let k = worst.split;
        let mut half = worst.half.clone();
        half[k] *= 0.5;
        let mut lc = worst.center.clone();
        lc[k] -= half[k];
        let mut rc = worst.center.clone();
        rc[k] += half[k];
        let left = genz_malik(f, lc, half.clone(), &mut p);
        let right = genz_malik(f, rc, half, &mut p);
        evaluations += 2 * points;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        magnitude += left.magnitude + right.magnitude - worst.magnitude;
        heap.push(left);
        heap.push(right);
    }
    let mut regions = heap.into_vec();
    regions.sort_by(|a, b| {
        a.center
            .iter()
            .zip(&b.center)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    value = regions.iter().map(|r| r.value).sum();
    error = regions.iter().map(|r| r.error).sum();
    magnitude = regions.iter().map(|r| r.magnitude).sum();
    QuadResult {
        value,
        error,
        magnitude,
        converged: value.is_finite() && error <= tol(magnitude),
        evaluations,
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_integrates_polynomials_and_gaussians() {
        let r = adaptive(&mut |x: f64| x * x, 0.0, 3.0, &QuadOptions::default());
        assert!((r.value - 9.0).abs() < 1e-12 && r.converged);
        let r = adaptive(
            &mut |x: f64| (-x * x).exp(),
            -10.0,
            10.0,
            &QuadOptions::default(),
        );
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let r = adaptive(
            &mut |x: f64| (x - 0.3).abs(),
            -1.0,
            1.0,
            &QuadOptions::default(),
        );
        assert!((r.value - (0.5 * 1.3 * 1.3 + 0.5 * 0.7 * 0.7)).abs() < 1e-10);
    }

    #[test]
    fn box_integral_of_separable_function() {
        let r = integrate_box(
            &mut |z: &[f64]| z[0] * z[1] * z[1],
            &[0.0, 0.0],
            &[2.0, 3.0],
            &QuadOptions::default(),
        );
        assert!((r.value - 2.0 * 9.0).abs() < 1e-10);
    }

    #[test]
    fn cubature_is_exact_for_degree_seven_and_adapts() {
        let mut poly = |z: &[f64]| z[0].powi(3) * z[1].powi(2) * z[2] + z[1].powi(6);
        let r = integrate_box(
            &mut poly,
            &[0.0, 0.0, 0.0],
            &[1.0, 2.0, 1.0],
            &QuadOptions::default(),
        );
        let exact = 0.25 * (8.0 / 3.0) * 0.5 + 128.0 / 7.0;
        assert!((r.value - exact).abs() < 1e-12 && r.converged);
        let mut g = |z: &[f64]| (-z.iter().map(|t| t * t).sum::<f64>()).exp();
        let r = cubature(&mut g, &[-6.0; 4], &[6.0; 4], &QuadOptions::default());
        let gap = (r.value - std::f64::consts::PI.powi(2)).abs();
        assert!(gap < 1e-6 && gap <= r.error, "{r:?}");
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 5, 16, 96] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
            if n >= 3 {
                assert!((m4 - 0.4).abs() < 1e-13);
            }
        }
    }
}
