use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::g12;

use super::grid::Grid;

/// Probability vector of cell masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeasure {
    #[serde(skip)]
    grid: Arc<Grid>,
    masses: Vec<f64>,
}

impl GridMeasure {
    /// Normalizes nonnegative `weights` to total mass one.
    pub fn from_weights(grid: Arc<Grid>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::GridInconsistency(format!(
                "{} weights for {} cells",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::GridInconsistency("negative or non-finite cell weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::GridInconsistency("measure has no mass".into()));
        }
        let masses = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { grid, masses })
    }

    pub fn lebesgue(grid: Arc<Grid>) -> Self {
        let masses = grid.widths();
        Self { grid, masses }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass of `[a, b]`, splitting partially covered cells in proportion to length.
    pub fn mass_in(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut i = self.grid.locate(a.max(0.0));
        while i < self.grid.len() {
            let (c0, c1) = self.grid.cell(i);
            if c0 >= b {
                break;
            }
            let overlap = b.min(c1) - a.max(c0);
            if overlap > 0.0 {
                acc += self.masses[i] * overlap / (c1 - c0);
            }
            i += 1;
        }
        acc
    }

    /// Mass density with respect to Lebesgue measure, per cell.
    pub fn densities(&self) -> Vec<f64> {
        self.masses
            .iter()
            .zip(self.grid.widths())
            .map(|(m, w)| m / w)
            .collect()
    }

    /// `∫ psi dμ` for a cellwise-constant `psi`.
    pub fn integrate(&self, psi: &[f64]) -> f64 {
        self.masses.iter().zip(psi).map(|(m, p)| m * p).sum()
    }

    /// CSV `cell_lo,cell_hi,value` with the cell masses.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_cell_csv(out, &self.grid, &self.masses)
    }
}

/// CSV `cell_lo,cell_hi,value` for any per-cell vector.
pub fn write_cell_csv<W: Write>(mut out: W, grid: &Grid, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "cell_lo,cell_hi,value")?;
    for (i, v) in values.iter().enumerate() {
        let (a, b) = grid.cell(i);
        writeln!(out, "{},{},{}", g12(a), g12(b), g12(*v))?;
    }
    Ok(())
}
