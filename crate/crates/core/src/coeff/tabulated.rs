//! Fields tabulated on a tensor grid, read from CSV.
//!
//! Header: `x1,...,xd,sigma_11,...,sigma_d_d1,b_1,...,b_d` (the `sigma_i_j`
//! spelling is also accepted). Rows may appear in any order but must cover the
//! full tensor product of the coordinate values. Outside the grid the table is
//! clamped to its boundary values.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TabulatedField {
    d: usize,
    d1: usize,
    axes: Vec<Vec<f64>>,
    /// Per node: `d·d1` sigma entries then `d` drift entries.
    nodes: Vec<f64>,
}

fn parse_sigma_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("sigma_")?;
    let (i, j): (usize, usize) = if let Some((a, b)) = rest.split_once('_') {
        (a.parse().ok()?, b.parse().ok()?)
    } else if rest.len() == 2 && rest.chars().all(|c| c.is_ascii_digit()) {
        (rest[..1].parse().ok()?, rest[1..].parse().ok()?)
    } else {
        return None;
    };
    if i == 0 || j == 0 {
        return None;
    }
    Some((i - 1, j - 1))
}

impl TabulatedField {
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        Self::from_reader(rdr)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        Self::from_reader(rdr)
    }

    fn from_reader<R: std::io::Read>(mut rdr: csv::Reader<R>) -> Result<Self> {
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        let d = header.iter().take_while(|h| h.starts_with('x')).count();
        if d == 0 || d > 16 {
            return Err(Error::invalid(
                "tabulated",
                "header",
                "expected 1 to 16 leading x1..xd columns",
            ));
        }
        for (k, h) in header[..d].iter().enumerate() {
            if *h != format!("x{}", k + 1) {
                return Err(Error::invalid(
                    "tabulated",
                    h,
                    format!("expected column x{}", k + 1),
                ));
            }
        }
        let n_sigma = header
            .len()
            .checked_sub(2 * d)
            .filter(|n| *n > 0 && n % d == 0)
            .ok_or_else(|| {
                Error::invalid("tabulated", "header", "column count must be d + d·d1 + d")
            })?;
        let d1 = n_sigma / d;
        let mut sigma_col = vec![usize::MAX; d * d1];
        for (c, h) in header[d..d + n_sigma].iter().enumerate() {
            let (i, j) = parse_sigma_name(h)
                .filter(|(i, j)| *i < d && *j < d1)
                .ok_or_else(|| Error::invalid("tabulated", h, "expected sigma_<i><j> column"))?;
            sigma_col[i * d1 + j] = d + c;
        }
        if sigma_col.contains(&usize::MAX) {
            return Err(Error::invalid(
                "tabulated",
                "header",
                "missing sigma columns",
            ));
        }
        for (k, h) in header[d + n_sigma..].iter().enumerate() {
            if *h != format!("b_{}", k + 1) && *h != format!("b{}", k + 1) {
                return Err(Error::invalid(
                    "tabulated",
                    h,
                    format!("expected column b_{}", k + 1),
                ));
            }
        }

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Parse(format!(
                    "row has {} fields, header has {}",
                    row.len(),
                    header.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("tabulated", "values", "must be finite"));
            }
            rows.push(row);
        }
        let mut axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        let total: usize = axes.iter().map(Vec::len).product();
        if rows.is_empty() || total != rows.len() {
            return Err(Error::invalid(
                "tabulated",
                "rows",
                format!(
                    "{} rows do not form a full tensor grid of {} nodes",
                    rows.len(),
                    total
                ),
            ));
        }
        let stride = d * d1 + d;
        let mut nodes = vec![f64::NAN; total * stride];
        for row in &rows {
            let mut flat = 0;
            for k in 0..d {
                let i = axes[k]
                    .binary_search_by(|a| a.total_cmp(&row[k]))
                    .expect("value is on its axis");
                flat = flat * axes[k].len() + i;
            }
            let slot = &mut nodes[flat * stride..(flat + 1) * stride];
            if !slot[0].is_nan() {
                return Err(Error::invalid("tabulated", "rows", "duplicate grid node"));
            }
            for (e, &c) in sigma_col.iter().enumerate() {
                slot[e] = row[c];
            }
            slot[d * d1..].copy_from_slice(&row[d + n_sigma..]);
        }
        axes.shrink_to_fit();
        Ok(TabulatedField { d, d1, axes, nodes })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    fn interpolate(&self, x: &[f64], offset: usize, len: usize, out: &mut [f64]) {
        let d = self.d;
        let stride = d * self.d1 + d;
        let mut base = [0usize; 16];
        let mut frac = [0.0f64; 16];
        let mut size = [0usize; 16];
        for k in 0..d {
            let ax = &self.axes[k];
            size[k] = ax.len();
            if ax.len() == 1 || x[k] <= ax[0] {
                base[k] = 0;
                frac[k] = 0.0;
            } else if x[k] >= ax[ax.len() - 1] {
                base[k] = ax.len() - 2;
                frac[k] = 1.0;
            } else {
                let i = ax.partition_point(|a| *a <= x[k]) - 1;
                base[k] = i;
                frac[k] = (x[k] - ax[i]) / (ax[i + 1] - ax[i]);
            }
        }
        out[..len].fill(0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                if size[k] == 1 && up {
                    w = 0.0;
                    break;
                }
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                flat = flat * size[k] + base[k] + usize::from(up);
            }
            if w == 0.0 {
                continue;
            }
            let node = &self.nodes[flat * stride + offset..flat * stride + offset + len];
            for (o, v) in out.iter_mut().zip(node) {
                *o += w * v;
            }
        }
    }

    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        self.interpolate(x, 0, self.d * self.d1, out);
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        self.interpolate(x, self.d * self.d1, self.d, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "x1,x2,sigma_11,sigma_12,sigma_21,sigma_22,b_1,b_2
0,0,1,0,0,1,0,0
1,0,2,0,0,1,-1,0
0,1,1,0,0,3,0,-1
1,1,2,0,0,3,-1,-1
";

    #[test]
    fn bilinear_interpolation_and_clamping() {
        let t = TabulatedField::from_csv_str(TABLE).unwrap();
        assert_eq!((t.d(), t.d1()), (2, 2));
        let mut s = [0.0; 4];
        t.sigma_into(&[0.5, 0.25], &mut s);
        assert!((s[0] - 1.5).abs() < 1e-15 && (s[3] - 1.5).abs() < 1e-15);
        let mut b = [0.0; 2];
        t.drift_into(&[5.0, -3.0], &mut b);
        assert_eq!(b, [-1.0, 0.0]);
    }

    #[test]
    fn incomplete_grid_is_rejected() {
        let bad = "x1,sigma_11,b_1\n0,1,0\n1,1,0\n1,2,0\n";
        assert!(TabulatedField::from_csv_str(bad).is_err());
        let bad_header = "x1,s,b_1\n0,1,0\n";
        assert!(TabulatedField::from_csv_str(bad_header).is_err());
    }
}
