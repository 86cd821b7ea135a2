use crate::error::{Error, Result};
use crate::linalg;

use super::SupportBox;

/// Cell-centred density on a box, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GridDensity {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
    values: Vec<f64>,
}

/// Calls `f` on every multi-index in the half-open ranges, last axis fastest.
pub fn for_each_index(ranges: &[(usize, usize)], mut f: impl FnMut(&[usize])) {
    if ranges.iter().any(|(a, b)| a >= b) {
        return;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&idx);
        let mut k = ranges.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < ranges[k].1 {
                break;
            }
            idx[k] = ranges[k].0;
        }
    }
}

fn validate_geometry(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<()> {
    if lo.len() != hi.len() || lo.len() != n.len() || lo.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: lo.len(),
            got: n.len(),
        });
    }
    if lo
        .iter()
        .zip(hi)
        .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
    {
        return Err(Error::Contract(
            "grid box must be finite with lo < hi".into(),
        ));
    }
    if n.contains(&0) {
        return Err(Error::Contract("grid resolution must be positive".into()));
    }
    Ok(())
}

impl GridDensity {
    /// Validated density: nonnegative values with unit mass within 1e-9.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        validate_geometry(&lo, &hi, &n)?;
        let g = GridDensity { lo, hi, n, values };
        if g.values.len() != g.n.iter().product::<usize>() {
            return Err(Error::DimensionMismatch {
                expected: g.n.iter().product(),
                got: g.values.len(),
            });
        }
        if g.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Contract(
                "grid density values must be finite and nonnegative".into(),
            ));
        }
        let m = g.mass();
        if (m - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "grid density has mass {m}, expected 1"
            )));
        }
        Ok(g)
    }

    /// Rescales nonnegative values to unit mass.
    pub fn from_unnormalized(
        lo: Vec<f64>,
        hi: Vec<f64>,
        n: Vec<usize>,
        mut values: Vec<f64>,
    ) -> Result<Self> {
        validate_geometry(&lo, &hi, &n)?;
        let vol: f64 = lo
            .iter()
            .zip(&hi)
            .zip(&n)
            .map(|((a, b), k)| (b - a) / *k as f64)
            .product();
        let total = linalg::pairwise_sum(&values) * vol;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Contract(format!(
                "cannot normalize grid values with total mass {total}"
            )));
        }
        values.iter_mut().for_each(|v| *v /= total);
        Self::new(lo, hi, n, values)
    }

    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        let cells = n.iter().product();
        Self::from_unnormalized(lo, hi, n, vec![1.0; cells])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.n[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    pub fn mass(&self) -> f64 {
        linalg::pairwise_sum(&self.values) * self.cell_volume()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = flat % self.n[k];
            flat /= self.n[k];
        }
    }

    pub fn center_of(&self, idx: &[usize], out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.lo[k] + (idx[k] as f64 + 0.5) * self.spacing(k);
        }
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.multi_index(flat, &mut idx);
        let mut x = vec![0.0; self.dim()];
        self.center_of(&idx, &mut x);
        x
    }

    /// Half-open cell ranges meeting `support` with positive volume.
    pub fn overlapping(&self, support: &SupportBox) -> Option<Vec<(usize, usize)>> {
        let mut ranges = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let h = self.spacing(k);
            let a = ((support.lo[k] - self.lo[k]) / h).floor().max(0.0);
            let b = ((support.hi[k] - self.lo[k]) / h)
                .ceil()
                .min(self.n[k] as f64);
            if !(a < b) {
                return None;
            }
            ranges.push((a as usize, b as usize));
        }
        Some(ranges)
    }

    /// Midpoint rule over the cells meeting `support`.
    pub fn midpoint_integral(&self, f: &mut dyn FnMut(&[f64]) -> f64, support: &SupportBox) -> f64 {
        let Some(ranges) = self.overlapping(support) else {
            return 0.0;
        };
        let mut x = vec![0.0; self.dim()];
        let mut terms = Vec::new();
        for_each_index(&ranges, |idx| {
            let v = self.values[self.flat_index(idx)];
            if v != 0.0 {
                self.center_of(idx, &mut x);
                terms.push(v * f(&x));
            }
        });
        linalg::pairwise_sum(&terms) * self.cell_volume()
    }

    /// Marginal on the axes `keep` (in order), summing over the rest.
    pub fn marginal(&self, keep: &[usize]) -> Result<GridDensity> {
        if keep.is_empty() || keep.iter().any(|k| *k >= self.dim()) {
            return Err(Error::Contract("marginal axes out of range".into()));
        }
        let lo: Vec<f64> = keep.iter().map(|k| self.lo[*k]).collect();
        let hi: Vec<f64> = keep.iter().map(|k| self.hi[*k]).collect();
        let n: Vec<usize> = keep.iter().map(|k| self.n[*k]).collect();
        let drop_vol: f64 = (0..self.dim())
            .filter(|k| !keep.contains(k))
            .map(|k| self.spacing(k))
            .product();
        let cells: usize = n.iter().product();
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); cells];
        let mut idx = vec![0; self.dim()];
        for (flat, v) in self.values.iter().enumerate() {
            self.multi_index(flat, &mut idx);
            let t = keep.iter().fold(0, |acc, k| acc * self.n[*k] + idx[*k]);
            buckets[t].push(*v);
        }
        let values = buckets
            .iter()
            .map(|b| linalg::pairwise_sum(b) * drop_vol)
            .collect();
        GridDensity::from_unnormalized(lo, hi, n, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_marginal_is_uniform() {
        let g = GridDensity::uniform(vec![0.0, 0.0], vec![1.0, 1.0], vec![64, 64]).unwrap();
        let m = g.marginal(&[0]).unwrap();
        assert_eq!(m.shape(), &[64]);
        assert!(m.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn mass_is_validated() {
        assert!(GridDensity::new(vec![0.0], vec![1.0], vec![2], vec![1.0, 2.0]).is_err());
        assert!(GridDensity::new(vec![0.0], vec![1.0], vec![2], vec![1.0, -1.0]).is_err());
        assert!(GridDensity::new(vec![0.0], vec![1.0], vec![2], vec![0.5, 1.5]).is_ok());
    }

    #[test]
    fn midpoint_restricts_to_support() {
        let g = GridDensity::uniform(vec![0.0], vec![1.0], vec![10]).unwrap();
        let s = SupportBox {
            lo: vec![0.0],
            hi: vec![0.5],
        };
        let v = g.midpoint_integral(&mut |_| 1.0, &s);
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn index_iteration_order() {
        let mut seen = Vec::new();
        for_each_index(&[(0, 2), (1, 3)], |i| seen.push((i[0], i[1])));
        assert_eq!(seen, vec![(0, 1), (0, 2), (1, 1), (1, 2)]);
    }
}
