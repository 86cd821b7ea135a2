use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::measures::{GridDensity, SupportBox};

use super::solve1d::fitted_rate;

/// Neighbour offsets `(di, dj)`; axis neighbours first, then diagonals.
pub const STENCIL: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Solve2dOptions {
    /// Stop when `‖π_{k+1} − π_k‖₁` falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Fraction of cells allowed to violate the diagonal-dominance bound.
    pub max_violating_fraction: f64,
}

impl Default for Solve2dOptions {
    fn default() -> Self {
        Solve2dOptions {
            tolerance: 1e-12,
            max_iterations: 100_000,
            max_violating_fraction: 0.01,
        }
    }
}

/// Markov generator on the cells of an `nx × ny` grid with reflecting walls.
#[derive(Clone, Debug)]
pub struct Generator2d {
    pub nx: usize,
    pub ny: usize,
    /// Per cell, rates towards each `STENCIL` neighbour.
    pub rates: Vec<[f64; 8]>,
    /// Cells whose cross term was clamped to the positivity bound.
    pub clamped: Vec<(usize, usize)>,
}

impl Generator2d {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Diagonal entry `Q_ii`.
    pub fn diagonal(&self, cell: usize) -> f64 {
        -self.rates[cell].iter().sum::<f64>()
    }

    fn neighbour(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let (di, dj) = STENCIL[k];
        let (ni, nj) = (i as i64 + di, j as i64 + dj);
        if ni < 0 || nj < 0 || ni >= self.nx as i64 || nj >= self.ny as i64 {
            None
        } else {
            Some(ni as usize * self.ny + nj as usize)
        }
    }

    /// Dense row `i` of `Q` (for inspection on small grids).
    pub fn row(&self, cell: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let (i, j) = (cell / self.ny, cell % self.ny);
        for k in 0..8 {
            if let Some(nb) = self.neighbour(i, j, k) {
                out[nb] += self.rates[cell][k];
            }
        }
        out[cell] += self.diagonal(cell);
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Solve2dReport {
    pub density: GridDensity,
    pub iterations: usize,
    /// Last observed `‖π_{k+1} − π_k‖₁`.
    pub residual: f64,
    pub clamped_cells: usize,
}

/// Exponentially fitted upwind discretization of `L` with a nine-point cross term.
pub fn assemble_generator(
    field: &CoefficientField,
    bx: &SupportBox,
    nx: usize,
    ny: usize,
    opts: &Solve2dOptions,
) -> Result<Generator2d> {
    if field.d() != 2 || bx.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            d: field.d(),
            reason: "solve_2d needs a two-dimensional field and box".into(),
        });
    }
    if nx < 2 || ny < 2 || !bx.is_finite() {
        return Err(Error::Contract(
            "solve_2d needs a finite box and at least 2 cells per axis".into(),
        ));
    }
    let hx = (bx.hi[0] - bx.lo[0]) / nx as f64;
    let hy = (bx.hi[1] - bx.lo[1]) / ny as f64;
    let d1 = field.d1();
    let coeffs = |x: f64, y: f64| -> Result<([f64; 3], [f64; 2])> {
        let mut s = vec![0.0; 2 * d1];
        let mut b = [0.0; 2];
        field.eval_into(&[x, y], &mut s, &mut b)?;
        let mut a = [0.0; 4];
        field.diffusion_from_sigma(&s, &mut a);
        Ok(([a[0], a[1], a[3]], b))
    };
    let cx = |i: usize| bx.lo[0] + (i as f64 + 0.5) * hx;
    let cy = |j: usize| bx.lo[1] + (j as f64 + 0.5) * hy;
    let cells: Vec<Result<([f64; 8], bool)>> = (0..nx * ny)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / ny, cell % ny);
            let (x, y) = (cx(i), cy(j));
            let (a, _) = coeffs(x, y)?;
            let bound = (a[0] * hy / hx).min(a[2] * hx / hy);
            let violating = a[1].abs() > bound * (1.0 + 1e-12) + 1e-300;
            let a12 = a[1].clamp(-bound.max(0.0), bound.max(0.0));
            let cross = a12.abs() / (hx * hy);
            let mut r = [0.0; 8];
            for (k, &(di, dj)) in STENCIL.iter().enumerate().take(4) {
                let (fx, fy) = (x + 0.5 * di as f64 * hx, y + 0.5 * dj as f64 * hy);
                let (af, bf) = coeffs(fx, fy)?;
                let (aa, bb, h, other) = if di != 0 {
                    (af[0], bf[0] * di as f64, hx, hy)
                } else {
                    (af[2], bf[1] * dj as f64, hy, hx)
                };
                let eff = (aa - a12.abs() * h / other).max(0.0);
                r[k] = fitted_rate(eff, bb, h);
            }
            if a12 > 0.0 {
                r[4] = cross;
                r[5] = cross;
            } else if a12 < 0.0 {
                r[6] = cross;
                r[7] = cross;
            }
            Ok((r, violating))
        })
        .collect();
    let mut g = Generator2d {
        nx,
        ny,
        rates: Vec::with_capacity(nx * ny),
        clamped: Vec::new(),
    };
    for (cell, c) in cells.into_iter().enumerate() {
        let (r, violating) = c?;
        if violating {
            g.clamped.push((cell / ny, cell % ny));
        }
        g.rates.push(r);
    }
    for cell in 0..nx * ny {
        let (i, j) = (cell / ny, cell % ny);
        for k in 0..8 {
            if g.neighbour(i, j, k).is_none() {
                g.rates[cell][k] = 0.0;
            }
        }
    }
    let total = nx * ny;
    if g.clamped.len() as f64 > opts.max_violating_fraction * total as f64 {
        return Err(Error::Anisotropy {
            violating: g.clamped.len(),
            total,
            cells: g.clamped.iter().take(20).cloned().collect(),
        });
    }
    Ok(g)
}

/// Stationary density of the upwind generator by power iteration on `I + τQᵗ`.
pub fn solve_2d(
    field: &CoefficientField,
    bx: &SupportBox,
    nx: usize,
    ny: usize,
    opts: &Solve2dOptions,
) -> Result<Solve2dReport> {
    let g = assemble_generator(field, bx, nx, ny, opts)?;
    let n = g.len();
    let qmax = (0..n).map(|c| -g.diagonal(c)).fold(0.0, f64::max);
    if qmax == 0.0 {
        let density = GridDensity::uniform(bx.lo.clone(), bx.hi.clone(), vec![nx, ny])?;
        return Ok(Solve2dReport {
            density,
            iterations: 0,
            residual: 0.0,
            clamped_cells: g.clamped.len(),
        });
    }
    let tau = 0.9 / qmax;
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut row_change = vec![0.0; nx];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let check = iterations % 25 == 0;
        next.par_chunks_mut(ny)
            .zip(row_change.par_iter_mut())
            .enumerate()
            .for_each(|(i, (row, change))| {
                let mut acc = 0.0;
                for (j, out) in row.iter_mut().enumerate() {
                    let cell = i * ny + j;
                    let mut v = pi[cell] * (1.0 + tau * g.diagonal(cell));
                    for k in 0..8 {
                        // Flow into `cell` from the neighbour opposite to direction k.
                        let back = k ^ 1;
                        if let Some(src) = g.neighbour(i, j, back) {
                            v += tau * pi[src] * g.rates[src][k];
                        }
                    }
                    if check {
                        acc += (v - pi[cell]).abs();
                    }
                    *out = v;
                }
                *change = acc;
            });
        std::mem::swap(&mut pi, &mut next);
        if check {
            residual = row_change.iter().sum();
            let mass: f64 = crate::linalg::pairwise_sum(&pi);
            pi.iter_mut().for_each(|p| *p /= mass);
            if residual <= opts.tolerance {
                break;
            }
        }
    }
    if residual > opts.tolerance {
        return Err(Error::Convergence {
            iterations,
            residual,
        });
    }
    let density = GridDensity::from_unnormalized(bx.lo.clone(), bx.hi.clone(), vec![nx, ny], pi)?;
    Ok(Solve2dReport {
        density,
        iterations,
        residual,
        clamped_cells: g.clamped.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_builtin, FieldParams};

    #[test]
    fn stencil_pairs_are_opposite() {
        for k in 0..8 {
            let (a, b) = (STENCIL[k], STENCIL[k ^ 1]);
            assert_eq!((a.0 + b.0, a.1 + b.1), (0, 0));
        }
    }

    #[test]
    fn generator_rows_are_conservative() {
        let f = make_builtin(&FieldParams::Isotropic {
            d: 2,
            scale: 1.0,
            exponent: 1.0,
            drift_rate: 1.0,
        })
        .unwrap();
        let bx = SupportBox::around(&[0.3, -0.2], 2.0);
        let g = assemble_generator(
            &f,
            &bx,
            12,
            10,
            &Solve2dOptions {
                max_violating_fraction: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        for c in 0..g.len() {
            let row = g.row(c);
            assert!(row.iter().enumerate().all(|(k, v)| k == c || *v >= 0.0));
            let s: f64 = row.iter().sum();
            assert!(s.abs() <= 1e-12 * row[c].abs().max(1.0));
        }
    }

    #[test]
    fn flat_field_gives_uniform_density() {
        let f = make_builtin(&FieldParams::Constant {
            d: 2,
            d1: 2,
            sigma: vec![1.0, 0.0, 0.0, 1.0],
            drift: vec![0.0, 0.0],
        })
        .unwrap();
        let bx = SupportBox::around(&[0.0, 0.0], 1.0);
        let r = solve_2d(&f, &bx, 16, 16, &Solve2dOptions::default()).unwrap();
        for v in r.density.values() {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn strong_correlation_is_refused() {
        let f = make_builtin(&FieldParams::Constant {
            d: 2,
            d1: 1,
            sigma: vec![1.0, 1.0],
            drift: vec![0.0, 0.0],
        })
        .unwrap();
        let bx = SupportBox::around(&[0.0, 0.0], 1.0);
        let g = assemble_generator(&f, &bx, 8, 16, &Solve2dOptions::default());
        assert!(matches!(g, Err(Error::Anisotropy { .. })));
    }
}
