use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::operator::{CsrMatrix, WeightedUlamOperator};

/// Power-iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    /// Bound on the relative residual `‖Mv - ρv‖₁ / (ρ ‖v‖₁)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Communicating-class structure of the nonzero pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportInfo {
    /// Cells with a nonzero row or column.
    pub support: usize,
    /// Strongly connected classes containing a cycle.
    pub recurrent_classes: usize,
    pub largest_class: usize,
}

/// Leading eigenvalue with nonnegative right and left eigenvectors, each scaled to unit ℓ¹ norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub rho: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    pub residual_right: f64,
    pub residual_left: f64,
    pub iterations: usize,
    pub support: SupportInfo,
}

impl SpectralResult {
    pub fn is_zero(&self) -> bool {
        self.rho == 0.0
    }
}

pub fn support_info(m: &CsrMatrix) -> SupportInfo {
    let n = m.dim();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, m.nnz());
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    let mut active = vec![false; n];
    for (r, c, _) in m.triplets() {
        // M[r][c] moves mass from c to r
        graph.add_edge(nodes[c], nodes[r], ());
        active[r] = true;
        active[c] = true;
    }
    let mut recurrent = 0;
    let mut largest = 0;
    for class in kosaraju_scc(&graph) {
        let cyclic = class.len() > 1 || graph.contains_edge(class[0], class[0]);
        if cyclic {
            recurrent += 1;
            largest = largest.max(class.len());
        }
    }
    SupportInfo {
        support: active.iter().filter(|&&a| a).count(),
        recurrent_classes: recurrent,
        largest_class: largest,
    }
}

/// Dominant eigenvalue and eigenvectors by power iteration from the all-ones vector.
pub fn leading_eigen(op: &WeightedUlamOperator, opts: &EigenOptions) -> Result<SpectralResult> {
    let support = support_info(op.matrix());
    if support.recurrent_classes > 1 {
        log::warn!(
            "operator has {} recurrent classes; the iteration follows the dominant one (largest has {} cells)",
            support.recurrent_classes,
            support.largest_class
        );
    }
    let (rho, right, residual_right, it_r) = power_iteration(op.matrix(), opts)?;
    if rho == 0.0 {
        return Ok(SpectralResult {
            rho: 0.0,
            right: Vec::new(),
            left: Vec::new(),
            residual_right: 0.0,
            residual_left: 0.0,
            iterations: it_r,
            support,
        });
    }
    let (rho_left, left, residual_left, it_l) = power_iteration(op.transpose_matrix(), opts)?;
    if (rho_left - rho).abs() > 1e3 * opts.tol.max(1e-14) * rho {
        log::warn!("left and right eigenvalue estimates differ: {rho} vs {rho_left}");
    }
    Ok(SpectralResult {
        rho,
        right,
        left,
        residual_right,
        residual_left,
        iterations: it_r.max(it_l),
        support,
    })
}

/// Returns `(rho, v, residual, iterations)`. Plain iteration is tried first; if it has
/// not converged after a tenth of the budget, the shifted matrix `M + rho I` is used,
/// which removes the oscillation of periodic classes.
pub fn power_iteration(m: &CsrMatrix, opts: &EigenOptions) -> Result<(f64, Vec<f64>, f64, usize)> {
    let n = m.dim();
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let switch = (opts.max_iter / 10).clamp(1, 2000);
    let mut shift = 0.0;
    for it in 1..=opts.max_iter {
        m.mul_vec(&v, &mut w);
        let norm: f64 = w.iter().sum();
        if norm == 0.0 || !norm.is_finite() {
            if norm == 0.0 {
                return Ok((0.0, Vec::new(), 0.0, it));
            }
            return Err(Error::NonConvergence {
                iterations: it,
                residual: f64::NAN,
            });
        }
        let rho = norm;
        residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - rho * b).abs())
            .sum::<f64>()
            / rho;
        if residual <= opts.tol {
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
            let final_res = relative_residual(m, &v, &mut w);
            let rho = final_res.0;
            return Ok((rho, v, final_res.1, it));
        }
        if it == switch {
            shift = rho;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = (wi + shift * *vi) / (norm + shift);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// `(rho, ‖Mv - ρv‖₁ / (ρ ‖v‖₁))` for a unit-ℓ¹ nonnegative `v`.
fn relative_residual(m: &CsrMatrix, v: &[f64], scratch: &mut [f64]) -> (f64, f64) {
    m.mul_vec(v, scratch);
    let rho: f64 = scratch.iter().sum();
    let r: f64 = scratch
        .iter()
        .zip(v)
        .map(|(a, b)| (a - rho * b).abs())
        .sum();
    (rho, r / rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::IntervalMap;
    use crate::open_system::Hole;
    use crate::spectral::grid::Grid;
    use std::sync::Arc;

    fn solve(map: &IntervalMap, t: f64, n: usize, hole: Option<&str>) -> SpectralResult {
        let hole = hole.map(|h| Hole::parse(h).unwrap());
        let grid = Arc::new(Grid::for_system(map, hole.as_ref(), n, &[]).unwrap());
        let op = WeightedUlamOperator::build(map, t, grid, hole.as_ref()).unwrap();
        leading_eigen(&op, &EigenOptions::default()).unwrap()
    }

    #[test]
    fn doubling_spectrum_is_exact() {
        let r = solve(&IntervalMap::doubling(), 1.0, 64, None);
        assert!((r.rho - 1.0).abs() < 1e-14);
        for (&a, &b) in r.right.iter().zip(&r.left) {
            assert!((a - 1.0 / 64.0).abs() < 1e-15 && (b - 1.0 / 64.0).abs() < 1e-15);
        }
        for t in [0.7, 0.8, 1.3] {
            let r = solve(&IntervalMap::doubling(), t, 128, None);
            assert!((r.rho - 2f64.powf(1.0 - t)).abs() < 1e-13);
        }
    }

    #[test]
    fn tripling_middle_third_rho() {
        let r = solve(&IntervalMap::tripling(), 1.0, 81, Some("(1/3,2/3)"));
        assert!((r.rho - 2.0 / 3.0).abs() < 1e-14);
        assert!(r.residual_right <= 1e-12 && r.residual_left <= 1e-12);
    }

    #[test]
    fn periodic_matrix_still_converges() {
        // a two-cycle with eigenvalues ±√2
        let m = CsrMatrix::from_rows(2, vec![vec![(1, 1.0)], vec![(0, 2.0)]]);
        let (rho, v, res, _) = power_iteration(&m, &EigenOptions::default()).unwrap();
        assert!((rho - 2f64.sqrt()).abs() < 1e-10, "{rho}");
        assert!(res < 1e-12);
        assert!((v[0] / v[1] - 1.0 / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix_gives_zero_rho() {
        let m = CsrMatrix::from_rows(3, vec![vec![], vec![(0, 1.0)], vec![(1, 1.0)]]);
        let (rho, v, _, _) = power_iteration(&m, &EigenOptions::default()).unwrap();
        assert_eq!(rho, 0.0);
        assert!(v.is_empty());
    }
}
