//! Smooth test functions with analytic gradients and Hessians.
//!
//! Hessians are written row-major into caller buffers of length `n²`.

use std::sync::Arc;

use crate::linalg;
use crate::measures::SupportBox;

pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], out: &mut [f64]);
    fn hessian(&self, z: &[f64], out: &mut [f64]);

    /// Box outside which value, gradient and Hessian vanish; `None` if unbounded.
    fn support(&self) -> Option<SupportBox> {
        None
    }

    /// Ball `(centre, radius)` containing the support, when the support is round.
    fn support_ball(&self) -> Option<(Vec<f64>, f64)> {
        None
    }

    fn label(&self) -> String;

    /// `sup|f| + sup|∇f| + sup‖D²f‖_F`, estimated on a quasi-random sample of the support.
    fn c2_scale(&self) -> f64 {
        sampled_c2_scale(self)
    }
}

pub type TestFunction = Arc<dyn SmoothFunction>;

fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn sampled_c2_scale<F: SmoothFunction + ?Sized>(f: &F) -> f64 {
    let n = f.dim();
    let bx = f
        .support()
        .unwrap_or_else(|| SupportBox::around(&vec![0.0; n], 1.0));
    let mut z = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n * n];
    let (mut s0, mut s1, mut s2): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let center = bx.center();
    for i in 0..4097 {
        for k in 0..n {
            let u = if i == 0 {
                0.5
            } else {
                halton(i, PRIMES[k % PRIMES.len()])
            };
            z[k] = bx.lo[k] + u * (bx.hi[k] - bx.lo[k]);
        }
        if i == 0 {
            z.copy_from_slice(&center);
        }
        s0 = s0.max(f.value(&z).abs());
        f.gradient(&z, &mut g);
        s1 = s1.max(linalg::norm(&g));
        f.hessian(&z, &mut h);
        s2 = s2.max(linalg::norm(&h));
    }
    s0 + s1 + s2
}

/// `(1 − |z − c|²/R²)³` on the ball of radius `R`, zero outside; C² with compact support.
#[derive(Clone, Debug)]
pub struct PolyBump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl PolyBump {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        assert!(radius > 0.0 && radius.is_finite());
        PolyBump { center, radius }
    }
}

impl SmoothFunction for PolyBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let u = 1.0 - linalg::dist_sq(z, &self.center) / (self.radius * self.radius);
        if u <= 0.0 {
            0.0
        } else {
            u * u * u
        }
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let r2 = self.radius * self.radius;
        let u = 1.0 - linalg::dist_sq(z, &self.center) / r2;
        if u <= 0.0 {
            out.fill(0.0);
            return;
        }
        let c = -6.0 * u * u / r2;
        for (k, o) in out.iter_mut().enumerate() {
            *o = c * (z[k] - self.center[k]);
        }
    }

    fn hessian(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let r2 = self.radius * self.radius;
        let u = 1.0 - linalg::dist_sq(z, &self.center) / r2;
        if u <= 0.0 {
            out.fill(0.0);
            return;
        }
        let diag = -6.0 * u * u / r2;
        let outer = 24.0 * u / (r2 * r2);
        for i in 0..n {
            for j in 0..n {
                let v = outer * (z[i] - self.center[i]) * (z[j] - self.center[j]);
                out[i * n + j] = if i == j { v + diag } else { v };
            }
        }
    }

    fn support(&self) -> Option<SupportBox> {
        Some(SupportBox::around(&self.center, self.radius))
    }

    fn support_ball(&self) -> Option<(Vec<f64>, f64)> {
        Some((self.center.clone(), self.radius))
    }

    fn label(&self) -> String {
        format!("poly_bump(c={:?}, R={})", self.center, self.radius)
    }
}

/// `exp(−|z − c|²/(2s²))`, declared supported on `c ± 8s` (outside, the value is below e^{-32}).
#[derive(Clone, Debug)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl SmoothFunction for GaussianBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, z: &[f64]) -> f64 {
        (-0.5 * linalg::dist_sq(z, &self.center) / (self.scale * self.scale)).exp()
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let s2 = self.scale * self.scale;
        let g = self.value(z);
        for (k, o) in out.iter_mut().enumerate() {
            *o = -g * (z[k] - self.center[k]) / s2;
        }
    }

    fn hessian(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let s2 = self.scale * self.scale;
        let g = self.value(z);
        for i in 0..n {
            for j in 0..n {
                let v = g * (z[i] - self.center[i]) * (z[j] - self.center[j]) / (s2 * s2);
                out[i * n + j] = if i == j { v - g / s2 } else { v };
            }
        }
    }

    fn support(&self) -> Option<SupportBox> {
        Some(SupportBox::around(&self.center, 8.0 * self.scale))
    }

    fn label(&self) -> String {
        format!("gaussian_bump(c={:?}, s={})", self.center, self.scale)
    }
}

/// Quintic smoothstep plateau: 1 on `|t| ≤ 1`, `S(2 − |t|)` on `(1, 2)`, 0 beyond.
/// Returns `(f, f′, f″)`.
pub fn plateau_profile(t: f64) -> (f64, f64, f64) {
    let a = t.abs();
    if a <= 1.0 {
        (1.0, 0.0, 0.0)
    } else if a >= 2.0 {
        (0.0, 0.0, 0.0)
    } else {
        let u = 2.0 - a;
        let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let s1 = 30.0 * u * u * (u - 1.0) * (u - 1.0);
        let s2 = 60.0 * u * (2.0 * u * u - 3.0 * u + 1.0);
        (s, -s1 * t.signum(), s2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    /// Argument `V/j`.
    QuadraticArg,
    /// Argument `ln(1 + V)/j`.
    LogArg,
}

/// `f(t(V(z)))` with the plateau profile `f`.
#[derive(Clone)]
pub struct Cutoff {
    pub j: f64,
    pub mode: CutoffMode,
    potential: TestFunction,
    support: SupportBox,
}

impl Cutoff {
    /// `support` must contain the sublevel set where the argument is below 2.
    pub fn new(j: f64, mode: CutoffMode, potential: TestFunction, support: SupportBox) -> Self {
        assert!(j > 0.0);
        Cutoff {
            j,
            mode,
            potential,
            support,
        }
    }

    /// Cutoff in `V(z) = |z|²` on `ℝⁿ`.
    pub fn squared_norm(n: usize, j: f64, mode: CutoffMode) -> Self {
        let vmax = match mode {
            CutoffMode::QuadraticArg => 2.0 * j,
            CutoffMode::LogArg => (2.0 * j).exp() - 1.0,
        };
        Cutoff::new(
            j,
            mode,
            Arc::new(SquaredNorm { n }),
            SupportBox::around(&vec![0.0; n], vmax.sqrt()),
        )
    }

    fn argument(&self, v: f64) -> (f64, f64, f64) {
        match self.mode {
            CutoffMode::QuadraticArg => (v / self.j, 1.0 / self.j, 0.0),
            CutoffMode::LogArg => {
                let w = 1.0 + v;
                (w.ln() / self.j, 1.0 / (self.j * w), -1.0 / (self.j * w * w))
            }
        }
    }
}

impl SmoothFunction for Cutoff {
    fn dim(&self) -> usize {
        self.potential.dim()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let (t, _, _) = self.argument(self.potential.value(z));
        plateau_profile(t).0
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let (t, t1, _) = self.argument(self.potential.value(z));
        let (_, f1, _) = plateau_profile(t);
        if f1 == 0.0 {
            out.fill(0.0);
            return;
        }
        self.potential.gradient(z, out);
        out.iter_mut().for_each(|g| *g *= f1 * t1);
    }

    fn hessian(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let (t, t1, t2) = self.argument(self.potential.value(z));
        let (_, f1, f2) = plateau_profile(t);
        if f1 == 0.0 && f2 == 0.0 {
            out.fill(0.0);
            return;
        }
        let mut g = vec![0.0; n];
        self.potential.gradient(z, &mut g);
        self.potential.hessian(z, out);
        let outer = f2 * t1 * t1 + f1 * t2;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = f1 * t1 * out[i * n + j] + outer * g[i] * g[j];
            }
        }
    }

    fn support(&self) -> Option<SupportBox> {
        Some(self.support.clone())
    }

    fn label(&self) -> String {
        let m = match self.mode {
            CutoffMode::QuadraticArg => "quadratic_arg",
            CutoffMode::LogArg => "log_arg",
        };
        format!("cutoff(j={}, {m}, V={})", self.j, self.potential.label())
    }
}

/// `|z|²` on `ℝⁿ`.
#[derive(Clone, Debug)]
pub struct SquaredNorm {
    pub n: usize,
}

impl SmoothFunction for SquaredNorm {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[f64]) -> f64 {
        linalg::norm_sq(z)
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(z) {
            *o = 2.0 * v;
        }
    }
    fn hessian(&self, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.n {
            out[i * self.n + i] = 2.0;
        }
    }
    fn label(&self) -> String {
        "|z|^2".into()
    }
}

/// `|x − y|²/2` on `ℝ^{2d}`.
#[derive(Clone, Debug)]
pub struct HalfSquaredDistance {
    pub d: usize,
}

impl SmoothFunction for HalfSquaredDistance {
    fn dim(&self) -> usize {
        2 * self.d
    }
    fn value(&self, z: &[f64]) -> f64 {
        0.5 * linalg::dist_sq(&z[..self.d], &z[self.d..])
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            let v = z[i] - z[d + i];
            out[i] = v;
            out[d + i] = -v;
        }
    }
    fn hessian(&self, _z: &[f64], out: &mut [f64]) {
        let d = self.d;
        let n = 2 * d;
        out.fill(0.0);
        for i in 0..d {
            out[i * n + i] = 1.0;
            out[(d + i) * n + d + i] = 1.0;
            out[i * n + d + i] = -1.0;
            out[(d + i) * n + i] = -1.0;
        }
    }
    fn label(&self) -> String {
        "|x-y|^2/2".into()
    }
}

/// `z_i` on `ℝⁿ`.
#[derive(Clone, Debug)]
pub struct Coordinate {
    pub n: usize,
    pub i: usize,
}

impl SmoothFunction for Coordinate {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[f64]) -> f64 {
        z[self.i]
    }
    fn gradient(&self, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.i] = 1.0;
    }
    fn hessian(&self, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn label(&self) -> String {
        format!("z{}", self.i + 1)
    }
}

/// `z_i z_j` on `ℝⁿ` (`i = j` allowed).
#[derive(Clone, Debug)]
pub struct CoordinateProduct {
    pub n: usize,
    pub i: usize,
    pub j: usize,
}

impl SmoothFunction for CoordinateProduct {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[f64]) -> f64 {
        z[self.i] * z[self.j]
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.i] += z[self.j];
        out[self.j] += z[self.i];
    }
    fn hessian(&self, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.i * self.n + self.j] += 1.0;
        out[self.j * self.n + self.i] += 1.0;
    }
    fn label(&self) -> String {
        format!("z{}*z{}", self.i + 1, self.j + 1)
    }
}

/// Constant function.
#[derive(Clone, Debug)]
pub struct ConstantFn {
    pub n: usize,
    pub c: f64,
}

impl SmoothFunction for ConstantFn {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, _z: &[f64]) -> f64 {
        self.c
    }
    fn gradient(&self, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn label(&self) -> String {
        format!("const({})", self.c)
    }
}

/// Pointwise product `f·g`.
#[derive(Clone)]
pub struct Product(pub TestFunction, pub TestFunction);

impl SmoothFunction for Product {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.0.value(z) * self.1.value(z)
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let (fa, fb) = (self.0.value(z), self.1.value(z));
        let mut gb = vec![0.0; n];
        self.0.gradient(z, out);
        self.1.gradient(z, &mut gb);
        for k in 0..n {
            out[k] = fb * out[k] + fa * gb[k];
        }
    }
    fn hessian(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let (fa, fb) = (self.0.value(z), self.1.value(z));
        let mut ga = vec![0.0; n];
        let mut gb = vec![0.0; n];
        let mut hb = vec![0.0; n * n];
        self.0.gradient(z, &mut ga);
        self.1.gradient(z, &mut gb);
        self.0.hessian(z, out);
        self.1.hessian(z, &mut hb);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] =
                    fb * out[i * n + j] + fa * hb[i * n + j] + ga[i] * gb[j] + gb[i] * ga[j];
            }
        }
    }
    fn support(&self) -> Option<SupportBox> {
        match (self.0.support(), self.1.support()) {
            (Some(a), Some(b)) => Some(a.intersect(&b).unwrap_or_else(|| SupportBox {
                lo: a.lo.clone(),
                hi: a.lo,
            })),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        }
    }
    fn support_ball(&self) -> Option<(Vec<f64>, f64)> {
        match (self.0.support(), self.1.support()) {
            (Some(_), None) => self.0.support_ball(),
            (None, Some(_)) => self.1.support_ball(),
            _ => None,
        }
    }
    fn label(&self) -> String {
        format!("{}*{}", self.0.label(), self.1.label())
    }
}

/// `g(z[offset..offset+m])` seen as a function on `ℝⁿ`.
#[derive(Clone)]
pub struct Embedded {
    pub inner: TestFunction,
    pub n: usize,
    pub offset: usize,
}

impl SmoothFunction for Embedded {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.inner
            .value(&z[self.offset..self.offset + self.inner.dim()])
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let m = self.inner.dim();
        out.fill(0.0);
        self.inner.gradient(
            &z[self.offset..self.offset + m],
            &mut out[self.offset..self.offset + m],
        );
    }
    fn hessian(&self, z: &[f64], out: &mut [f64]) {
        let m = self.inner.dim();
        let mut h = vec![0.0; m * m];
        self.inner.hessian(&z[self.offset..self.offset + m], &mut h);
        out.fill(0.0);
        for i in 0..m {
            for j in 0..m {
                out[(self.offset + i) * self.n + self.offset + j] = h[i * m + j];
            }
        }
    }
    fn support(&self) -> Option<SupportBox> {
        // Unbounded in the other coordinates.
        None
    }
    fn label(&self) -> String {
        format!("embed[{}..]({})", self.offset, self.inner.label())
    }
}

/// `H(g)` with `H(v) = ln(1 + v/δ)`.
#[derive(Clone)]
pub struct LogTransform {
    pub inner: TestFunction,
    pub delta: f64,
}

impl LogTransform {
    fn derivs(&self, v: f64) -> (f64, f64, f64) {
        let w = self.delta + v;
        ((1.0 + v / self.delta).ln(), 1.0 / w, -1.0 / (w * w))
    }
}

impl SmoothFunction for LogTransform {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.derivs(self.inner.value(z)).0
    }
    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let (_, h1, _) = self.derivs(self.inner.value(z));
        self.inner.gradient(z, out);
        out.iter_mut().for_each(|g| *g *= h1);
    }
    fn hessian(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let (_, h1, h2) = self.derivs(self.inner.value(z));
        let mut g = vec![0.0; n];
        self.inner.gradient(z, &mut g);
        self.inner.hessian(z, out);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = h1 * out[i * n + j] + h2 * g[i] * g[j];
            }
        }
    }
    fn support(&self) -> Option<SupportBox> {
        self.inner.support()
    }
    fn label(&self) -> String {
        format!("ln(1+{}/{})", self.inner.label(), self.delta)
    }
}

/// `trace(A D²f) + ⟨b, ∇f⟩` at `z`, with `A` row-major; `grad`/`hess` are scratch.
pub fn apply_generator(
    a: &[f64],
    b: &[f64],
    f: &dyn SmoothFunction,
    z: &[f64],
    grad: &mut [f64],
    hess: &mut [f64],
) -> f64 {
    f.gradient(z, grad);
    f.hessian(z, hess);
    let tr: f64 = a.iter().zip(hess.iter()).map(|(p, q)| p * q).sum();
    tr + linalg::dot(b, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &dyn SmoothFunction, z: &[f64]) {
        let n = f.dim();
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        f.gradient(z, &mut g);
        f.hessian(z, &mut h);
        let step = 1e-5;
        let mut zp = z.to_vec();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        let scale = f.c2_scale();
        for k in 0..n {
            zp[k] = z[k] + step;
            let fp = f.value(&zp);
            f.gradient(&zp, &mut gp);
            zp[k] = z[k] - step;
            let fm = f.value(&zp);
            f.gradient(&zp, &mut gm);
            zp[k] = z[k];
            let dg = (fp - fm) / (2.0 * step);
            assert!(
                (dg - g[k]).abs() <= 1e-5 * scale,
                "{}: grad {k}: {dg} vs {}",
                f.label(),
                g[k]
            );
            for j in 0..n {
                let dh = (gp[j] - gm[j]) / (2.0 * step);
                assert!(
                    (dh - h[j * n + k]).abs() <= 1e-5 * scale,
                    "{}: hess {j},{k}: {dh} vs {}",
                    f.label(),
                    h[j * n + k]
                );
            }
        }
    }

    #[test]
    fn bump_hand_value() {
        let b = PolyBump::new(vec![0.0], 1.0);
        assert_eq!(b.value(&[0.5]), 0.421875);
    }

    #[test]
    fn bump_vanishes_on_boundary() {
        let b = PolyBump::new(vec![0.3, -0.2], 0.7);
        let z = [0.3 + 0.7, -0.2];
        let mut g = [1.0; 2];
        let mut h = [1.0; 4];
        b.gradient(&z, &mut g);
        b.hessian(&z, &mut h);
        assert_eq!(b.value(&z), 0.0);
        assert_eq!(g, [0.0; 2]);
        assert_eq!(h, [0.0; 4]);
    }

    #[test]
    fn cutoff_plateaus() {
        let c = Cutoff::squared_norm(2, 4.0, CutoffMode::QuadraticArg);
        assert_eq!(c.value(&[1.0, 1.0]), 1.0);
        assert_eq!(c.value(&[2.0, 2.0]), 0.0);
        let mut g = [1.0; 2];
        let mut h = [1.0; 4];
        c.gradient(&[0.0, 0.0], &mut g);
        c.hessian(&[0.0, 0.0], &mut h);
        assert_eq!((c.value(&[0.0, 0.0]), g, h), (1.0, [0.0; 2], [0.0; 4]));
        let l = Cutoff::squared_norm(2, 2.0, CutoffMode::LogArg);
        let r = ((4.0f64).exp() - 1.0).sqrt();
        assert_eq!(l.value(&[r, 0.0]), 0.0);
    }

    #[test]
    fn profile_is_c2_at_the_joins() {
        for t in [1.0, 2.0, -1.0, -2.0] {
            let (_, a1, a2) = plateau_profile(t);
            let (_, b1, b2) = plateau_profile(t + 1e-9 * t.signum());
            assert!(a1.abs() < 1e-12 && a2.abs() < 1e-12);
            assert!(b1.abs() < 1e-6 && b2.abs() < 1e-6);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let bump: TestFunction = Arc::new(PolyBump::new(vec![0.2, -0.1], 1.3));
        let funcs: Vec<TestFunction> = vec![
            bump.clone(),
            Arc::new(GaussianBump {
                center: vec![0.1, 0.4],
                scale: 0.7,
            }),
            Arc::new(Cutoff::squared_norm(2, 1.0, CutoffMode::QuadraticArg)),
            Arc::new(Cutoff::squared_norm(2, 1.0, CutoffMode::LogArg)),
            Arc::new(Product(Arc::new(Coordinate { n: 2, i: 0 }), bump.clone())),
            Arc::new(Product(
                Arc::new(CoordinateProduct { n: 2, i: 0, j: 1 }),
                Arc::new(Cutoff::squared_norm(2, 2.0, CutoffMode::QuadraticArg)),
            )),
            Arc::new(LogTransform {
                inner: Arc::new(HalfSquaredDistance { d: 1 }),
                delta: 0.3,
            }),
        ];
        let pts = [
            [0.3, 0.2],
            [-0.5, 0.9],
            [1.1, -0.4],
            [0.05, 0.01],
            [1.2, 0.8],
        ];
        for f in &funcs {
            for z in &pts {
                fd_check(f.as_ref(), z);
            }
        }
    }

    #[test]
    fn generator_of_half_squared_distance_uses_blocks() {
        let f = HalfSquaredDistance { d: 1 };
        let a = [2.0, 1.0, 1.0, 3.0];
        let b = [0.5, -0.5];
        let mut g = [0.0; 2];
        let mut h = [0.0; 4];
        let v = apply_generator(&a, &b, &f, &[1.0, 0.0], &mut g, &mut h);
        assert_eq!(v, 2.0 - 1.0 - 1.0 + 3.0 + 0.5 * 1.0 + 0.5);
    }
}
