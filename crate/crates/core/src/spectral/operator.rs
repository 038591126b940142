use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::IntervalMap;
use crate::numeric::{g12, gauss_legendre8};
use crate::open_system::Hole;

use super::grid::Grid;

/// Relative snapping tolerance for image endpoints.
const IMAGE_SNAP: f64 = 1e-9;
/// Quadrature sub-segments narrower than this use a one-point rule and are counted.
const TINY_SEGMENT: f64 = 1e-14;
/// Matrix–vector products switch to rayon above this many rows.
const PAR_ROWS: usize = 4096;

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub(crate) fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(k, _)| k == c).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let row_dot = |r: usize| -> f64 { self.row(r).map(|(c, v)| v * x[c]).sum() };
        if self.n >= PAR_ROWS {
            out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row_dot(r));
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = row_dot(r);
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        Self::from_rows(self.n, rows)
    }

    /// Copy with the given rows and columns removed (set to zero).
    fn masked(&self, mask: &[bool]) -> Self {
        let rows = (0..self.n)
            .map(|r| {
                if mask[r] {
                    Vec::new()
                } else {
                    self.row(r).filter(|&(c, _)| !mask[c]).collect()
                }
            })
            .collect();
        Self::from_rows(self.n, rows)
    }

    /// Dense copy, for small matrices in tests and oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }
}

/// Sparse Galerkin matrix `M[j][i] = |C_j|^{-1} ∫_{C_i ∩ f^{-1} C_j} |Df|^{1-t} dx`
/// on a grid, optionally punctured by a hole.
#[derive(Debug, Clone)]
pub struct WeightedUlamOperator {
    grid: Arc<Grid>,
    t: f64,
    matrix: CsrMatrix,
    transpose: CsrMatrix,
    hole: Option<Hole>,
    hole_cells: Vec<bool>,
    preimage_cells: Vec<bool>,
    tiny_segments: usize,
}

impl WeightedUlamOperator {
    /// Assembles the closed operator, or the punctured one when `hole` is given.
    /// The hole must be resolved by the grid (see [`Grid::for_system`]).
    pub fn build(map: &IntervalMap, t: f64, grid: Arc<Grid>, hole: Option<&Hole>) -> Result<Self> {
        let limit = map.integrability_limit();
        if !t.is_finite() || t >= limit {
            return Err(Error::NonIntegrable { t, limit });
        }
        let n = grid.len();
        let columns: Vec<(Vec<(usize, f64)>, usize)> = (0..n)
            .into_par_iter()
            .map(|i| assemble_column(map, t, &grid, i))
            .collect();
        let tiny_segments = columns.iter().map(|c| c.1).sum();
        if tiny_segments > 0 {
            log::warn!("{tiny_segments} quadrature sub-segments below {TINY_SEGMENT:e} used a one-point rule");
        }
        let transpose = CsrMatrix::from_rows(n, columns.into_iter().map(|c| c.0).collect());
        let matrix = transpose.transpose();
        let mut op = Self {
            grid,
            t,
            matrix,
            transpose,
            hole: None,
            hole_cells: vec![false; n],
            preimage_cells: vec![false; n],
            tiny_segments,
        };
        if let Some(h) = hole {
            op = op.punctured(h)?;
        }
        Ok(op)
    }

    /// Zeroes the rows and columns of the cells inside `hole`. This is the Galerkin
    /// form of `1_{I \ H} L(1_{I \ H} psi) = L(1_{I^1} psi)`; cells meeting `f^{-1} H`
    /// outside `H` are recorded in the mask but keep their entries.
    pub fn punctured(&self, hole: &Hole) -> Result<Self> {
        let hole = hole.snapped_to(&self.grid)?;
        let hole_cells = self.grid.hole_cells(&hole);
        let mut preimage_cells = vec![false; self.grid.len()];
        for i in 0..self.grid.len() {
            if hole_cells[i] {
                continue;
            }
            preimage_cells[i] = self.transpose.row(i).any(|(j, _)| hole_cells[j]);
        }
        let matrix = self.matrix.masked(&hole_cells);
        let transpose = matrix.transpose();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            t: self.t,
            matrix,
            transpose,
            hole: Some(hole),
            hole_cells,
            preimage_cells,
            tiny_segments: self.tiny_segments,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn is_punctured(&self) -> bool {
        self.hole.is_some()
    }

    pub fn hole(&self) -> Option<&Hole> {
        self.hole.as_ref()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn transpose_matrix(&self) -> &CsrMatrix {
        &self.transpose
    }

    /// Cells inside the hole; their rows and columns are zero.
    pub fn hole_cells(&self) -> &[bool] {
        &self.hole_cells
    }

    /// Cells outside the hole that map partly into it.
    pub fn preimage_cells(&self) -> &[bool] {
        &self.preimage_cells
    }

    pub fn tiny_segments(&self) -> usize {
        self.tiny_segments
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Coordinate-list text: a `#` header with `N`, `t`, `p_t` and the hole mask, then
    /// one `row col value` line per nonzero.
    pub fn write_coo<W: Write>(&self, mut out: W, p_t: Option<f64>) -> std::io::Result<()> {
        writeln!(out, "# N {}", self.dim())?;
        writeln!(out, "# t {}", g12(self.t))?;
        match p_t {
            Some(p) => writeln!(out, "# p_t {}", g12(p))?,
            None => writeln!(out, "# p_t none")?,
        }
        let mask: Vec<String> = self
            .hole_cells
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i.to_string())
            .collect();
        writeln!(out, "# hole_cells {}", mask.join(" "))?;
        for (r, c, v) in self.matrix.triplets() {
            writeln!(out, "{r} {c} {}", g12(v))?;
        }
        Ok(())
    }
}

/// Entries of column `i` (source cell) as `(target, value)`, sorted by target.
fn assemble_column(map: &IntervalMap, t: f64, grid: &Grid, i: usize) -> (Vec<(usize, f64)>, usize) {
    let (a, b) = grid.cell(i);
    let mut entries: Vec<(usize, f64)> = Vec::new();
    let mut tiny = 0;
    for (li, lap) in map.laps().iter().enumerate() {
        let sa = a.max(lap.lo);
        let sb = b.min(lap.hi);
        if sb <= sa {
            continue;
        }
        let ya = grid.snap(map.eval_on(li, sa), IMAGE_SNAP);
        let yb = grid.snap(map.eval_on(li, sb), IMAGE_SNAP);
        let (ylo, yhi) = if ya <= yb { (ya, yb) } else { (yb, ya) };
        if yhi <= ylo {
            continue;
        }
        let mut j = grid.locate(ylo);
        while j < grid.len() {
            let (c0, c1) = grid.cell(j);
            if c0 >= yhi {
                break;
            }
            let u0 = ylo.max(c0);
            let u1 = yhi.min(c1);
            if u1 > u0 {
                let integral = match lap.slope {
                    Some(s) => s.abs().powf(-t) * (u1 - u0),
                    None => {
                        let xa = map.inverse_on(li, u0).clamp(sa, sb);
                        let xb = map.inverse_on(li, u1).clamp(sa, sb);
                        let (x0, x1) = if xa <= xb { (xa, xb) } else { (xb, xa) };
                        weight_integral(map, li, t, x0, x1, &mut tiny)
                    }
                };
                let value = integral / (c1 - c0);
                if value > 0.0 {
                    match entries.iter_mut().find(|e| e.0 == j) {
                        Some(e) => e.1 += value,
                        None => entries.push((j, value)),
                    }
                }
            }
            j += 1;
        }
    }
    entries.sort_by_key(|e| e.0);
    (entries, tiny)
}

/// `∫_{x0}^{x1} |Df|^{1-t} dx` on lap `lap`, with a power substitution at critical
/// endpoints and geometric splitting near critical points.
fn weight_integral(map: &IntervalMap, lap: usize, t: f64, x0: f64, x1: f64, tiny: &mut usize) -> f64 {
    let len = x1 - x0;
    if len <= 0.0 {
        return 0.0;
    }
    if t == 1.0 {
        return len;
    }
    let w = |x: f64| map.deriv_on(lap, x).abs().powf(1.0 - t);
    if len < TINY_SEGMENT {
        *tiny += 1;
        return w(0.5 * (x0 + x1)) * len;
    }
    let nearest = map
        .critical_points()
        .iter()
        .map(|c| {
            let d = if c.location <= x0 {
                x0 - c.location
            } else if c.location >= x1 {
                c.location - x1
            } else {
                0.0
            };
            (d, c.location, c.order)
        })
        .min_by(|p, q| p.0.total_cmp(&q.0));
    let Some((d, c, order)) = nearest else {
        return gauss_legendre8(w, x0, x1);
    };
    if d >= len {
        return gauss_legendre8(w, x0, x1);
    }
    // sigma points from the critical point into the segment
    let sigma = if c <= x0 { 1.0 } else { -1.0 };
    let far = d + len;
    let mut acc = 0.0;
    let mut r = d;
    if d <= 1e-15 * far.max(1.0) {
        let head = far / 64.0;
        let beta = (1.0 - t) * (order - 1.0);
        let q = 1.0 / (1.0 + beta);
        let g = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let x = c + sigma * head * s.powf(q);
            w(x) * head * q * s.powf(q - 1.0)
        };
        acc += gauss_legendre8(g, 0.0, 1.0);
        r = head;
    }
    while r < far {
        let next = (2.0 * r).min(far);
        let (p, q) = (c + sigma * r, c + sigma * next);
        acc += gauss_legendre8(w, p.min(q), p.max(q));
        r = next;
    }
    acc
}
