use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::IntervalMap;
use crate::open_system::Hole;

/// Anchors closer than this fraction of the mesh width are snapped onto the mesh.
pub const SNAP_FRACTION: f64 = 1e-3;

/// Cells `C_i = [x_i, x_{i+1}]` covering `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    breakpoints: Vec<f64>,
    uniform_cells: usize,
}

impl Grid {
    pub fn uniform(n: usize) -> Result<Self> {
        Self::with_anchors(n, &[])
    }

    /// Uniform `n`-cell mesh with `anchors` inserted; anchors within
    /// `SNAP_FRACTION * h` of a mesh point are snapped to it instead.
    pub fn with_anchors(n: usize, anchors: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::GridInconsistency("grid needs at least one cell".into()));
        }
        let h = 1.0 / n as f64;
        let mut points: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        for &a in anchors {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::GridInconsistency(format!("anchor {a} outside [0, 1]")));
            }
            let k = (a * n as f64).round();
            if (a - k * h).abs() > SNAP_FRACTION * h {
                points.push(a);
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        let grid = Self {
            breakpoints: points,
            uniform_cells: n,
        };
        for i in 0..grid.len() {
            if grid.width(i) <= 0.0 {
                return Err(Error::GridInconsistency(format!("cell {i} has no width")));
            }
        }
        Ok(grid)
    }

    /// Grid anchored at the lap boundaries and critical points of `map`, the hole
    /// endpoints and any `extra` points.
    pub fn for_system(map: &IntervalMap, hole: Option<&Hole>, n: usize, extra: &[f64]) -> Result<Self> {
        let mut anchors = map.lap_cuts();
        anchors.extend(map.critical_points().iter().map(|c| c.location));
        if let Some(h) = hole {
            anchors.extend(h.boundary());
        }
        anchors.extend_from_slice(extra);
        Self::with_anchors(n, &anchors)
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell count of the underlying uniform mesh.
    pub fn mesh_cells(&self) -> usize {
        self.uniform_cells
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.widths().into_iter().fold(0.0, f64::max)
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.breakpoints[i] + self.breakpoints[i + 1])
    }

    /// Index of the cell containing `x`; shared endpoints go to the right cell, `1` to the last.
    pub fn locate(&self, x: f64) -> usize {
        self.breakpoints
            .partition_point(|&b| b <= x)
            .saturating_sub(1)
            .min(self.len() - 1)
    }

    /// Nearest breakpoint to `x`.
    pub fn nearest_breakpoint(&self, x: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b < x);
        let mut best = f64::INFINITY;
        let mut out = x;
        for idx in [k.saturating_sub(1), k.min(self.breakpoints.len() - 1)] {
            let d = (self.breakpoints[idx] - x).abs();
            if d < best {
                best = d;
                out = self.breakpoints[idx];
            }
        }
        out
    }

    /// Snaps `y` onto a breakpoint when it is within `rel` of the local cell width.
    pub(crate) fn snap(&self, y: f64, rel: f64) -> f64 {
        let b = self.nearest_breakpoint(y);
        let i = self.locate(y);
        if (b - y).abs() <= rel * self.width(i) {
            b
        } else {
            y
        }
    }

    /// Whether every cell lies inside or outside each component of `hole`.
    pub fn resolves(&self, hole: &Hole) -> bool {
        hole.boundary()
            .iter()
            .all(|&b| self.nearest_breakpoint(b) == b)
    }

    /// Cells inside the hole (by midpoint).
    pub fn hole_cells(&self, hole: &Hole) -> Vec<bool> {
        (0..self.len()).map(|i| hole.contains(self.midpoint(i))).collect()
    }
}

impl Hole {
    /// The hole with each endpoint moved to the nearest grid breakpoint.
    pub fn snapped_to(&self, grid: &Grid) -> Result<Hole> {
        let ends: Vec<(f64, f64)> = self
            .components()
            .iter()
            .map(|c| (grid.nearest_breakpoint(c.lo), grid.nearest_breakpoint(c.hi)))
            .collect();
        for (c, &(a, b)) in self.components().iter().zip(&ends) {
            let tol = SNAP_FRACTION * grid.max_width();
            if (a - c.lo).abs() > tol || (b - c.hi).abs() > tol {
                return Err(Error::GridInconsistency(format!(
                    "hole component ({}, {}) is not resolved by the grid",
                    c.lo, c.hi
                )));
            }
        }
        if ends
            .iter()
            .zip(self.components())
            .all(|(&(a, b), c)| a == c.lo && b == c.hi)
        {
            return Ok(self.clone());
        }
        self.with_endpoints(&ends)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_are_snapped_or_inserted() {
        let g = Grid::with_anchors(8, &[0.25 + 1e-7, 0.3]).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.breakpoints().contains(&0.25));
        assert!(g.breakpoints().contains(&0.3));
        assert_eq!(g.locate(0.3), 3);
        assert_eq!(g.locate(1.0), 8);
        assert_eq!(g.locate(0.0), 0);
    }

    #[test]
    fn triadic_grid_resolves_middle_third() {
        let h = Hole::parse("(1/3,2/3)").unwrap();
        let g = Grid::for_system(&IntervalMap::tripling(), Some(&h), 27, &[]).unwrap();
        assert_eq!(g.len(), 27);
        let s = h.snapped_to(&g).unwrap();
        assert!(g.resolves(&s));
        assert_eq!(g.hole_cells(&s).iter().filter(|&&b| b).count(), 9);
    }
}
