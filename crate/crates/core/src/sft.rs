//! Subshifts of finite type read off piecewise-linear Markov maps: an exact
//! finite oracle for pressure, escape and dimension.

use std::io::Write;

use nalgebra::DMatrix;
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::IntervalMap;
use crate::numeric::g12;
use crate::open_system::Hole;

const MERGE_TOL: f64 = 1e-12;
const MAX_POINTS: usize = 2000;

/// Markov partition of a piecewise-linear map with a hole made of whole cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SftModel {
    /// Partition points; symbol `i` is the cell `[points[i], points[i+1]]`.
    pub points: Vec<f64>,
    /// `closed[i][j]`: cell `j` lies in the image of cell `i`.
    pub closed: Vec<Vec<bool>>,
    /// `closed` with hole symbols removed.
    pub allowed: Vec<Vec<bool>>,
    pub in_hole: Vec<bool>,
    /// Lap index of each symbol.
    pub lap: Vec<usize>,
    /// `log|Df|` on each symbol.
    pub log_slopes: Vec<f64>,
}

impl SftModel {
    /// Builds the partition generated by the forward orbits of the lap endpoints and
    /// hole endpoints. Fails with `OracleUnavailable` for maps that are not
    /// piecewise linear or whose orbit closure is not finite.
    pub fn build(map: &IntervalMap, hole: &Hole) -> Result<Self> {
        if !map.is_piecewise_linear() {
            return Err(Error::OracleUnavailable(format!(
                "{} is not piecewise linear",
                map.spec_string()
            )));
        }
        let mut points: Vec<f64> = vec![0.0, 1.0];
        points.extend(map.lap_cuts());
        points.extend(hole.boundary());
        let mut frontier = points.clone();
        while !frontier.is_empty() {
            let mut fresh = Vec::new();
            for &x in &frontier {
                for (li, lap) in map.laps().iter().enumerate() {
                    if x >= lap.lo - MERGE_TOL && x <= lap.hi + MERGE_TOL {
                        let y = map.eval_on(li, x.clamp(lap.lo, lap.hi));
                        if !points.iter().chain(&fresh).any(|&p| (p - y).abs() <= MERGE_TOL) {
                            fresh.push(y);
                        }
                    }
                }
            }
            points.extend_from_slice(&fresh);
            if points.len() > MAX_POINTS {
                return Err(Error::OracleUnavailable(
                    "orbit closure of the endpoints is not finite (no Markov partition)".into(),
                ));
            }
            frontier = fresh;
        }
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
        let n = points.len() - 1;
        let mut lap = Vec::with_capacity(n);
        let mut log_slopes = Vec::with_capacity(n);
        let mut in_hole = Vec::with_capacity(n);
        let mut closed = vec![vec![false; n]; n];
        for i in 0..n {
            let mid = 0.5 * (points[i] + points[i + 1]);
            let li = map.lap_index(mid);
            lap.push(li);
            log_slopes.push(map.laps()[li].slope.expect("affine").abs().ln());
            in_hole.push(hole.contains(mid));
            let ya = map.eval_on(li, points[i]);
            let yb = map.eval_on(li, points[i + 1]);
            let (ylo, yhi) = (ya.min(yb), ya.max(yb));
            for j in 0..n {
                closed[i][j] = points[j] >= ylo - MERGE_TOL && points[j + 1] <= yhi + MERGE_TOL;
            }
        }
        for hc in hole.components() {
            let aligned = [hc.lo, hc.hi]
                .iter()
                .all(|e| points.iter().any(|p| (p - e).abs() <= MERGE_TOL));
            if !aligned {
                return Err(Error::OracleUnavailable("hole is not a union of Markov cells".into()));
            }
        }
        let allowed = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| closed[i][j] && !in_hole[i] && !in_hole[j])
                    .collect()
            })
            .collect();
        Ok(Self {
            points,
            closed,
            allowed,
            in_hole,
            lap,
            log_slopes,
        })
    }

    pub fn symbols(&self) -> usize {
        self.lap.len()
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.points[i], self.points[i + 1])
    }

    fn adjacency(&self, punctured: bool) -> &Vec<Vec<bool>> {
        if punctured {
            &self.allowed
        } else {
            &self.closed
        }
    }

    /// `B[i][j] = A[i][j] |Df|_i^{-t}`.
    pub fn weighted_matrix(&self, t: f64, punctured: bool) -> DMatrix<f64> {
        let a = self.adjacency(punctured);
        let n = self.symbols();
        DMatrix::from_fn(n, n, |i, j| {
            if a[i][j] {
                (-t * self.log_slopes[i]).exp()
            } else {
                0.0
            }
        })
    }

    /// Number of recurrent communicating classes of the adjacency graph.
    pub fn recurrent_classes(&self, punctured: bool) -> usize {
        let a = self.adjacency(punctured);
        let n = self.symbols();
        let mut g = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for i in 0..n {
            for j in 0..n {
                if a[i][j] {
                    g.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        kosaraju_scc(&g)
            .into_iter()
            .filter(|c| c.len() > 1 || g.contains_edge(c[0], c[0]))
            .count()
    }

    /// Plain-text export: partition points, hole flags, slopes and the adjacency matrix.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# symbols {}", self.symbols())?;
        writeln!(out, "# symbol lo hi lap log_slope in_hole")?;
        for i in 0..self.symbols() {
            let (a, b) = self.cell(i);
            writeln!(
                out,
                "{i} {} {} {} {} {}",
                g12(a),
                g12(b),
                self.lap[i],
                g12(self.log_slopes[i]),
                u8::from(self.in_hole[i])
            )?;
        }
        writeln!(out, "# allowed transitions (hole removed)")?;
        for row in &self.allowed {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// `log ρ(A ⊙ e^{-t log|Df|})` for the hole-removed (`punctured`) or closed shift.
/// Reducible matrices give the pressure of the dominant class, with a warning.
pub fn sft_pressure(model: &SftModel, t: f64, punctured: bool) -> f64 {
    if model.recurrent_classes(punctured) > 1 {
        log::warn!("reducible subshift: pressure taken on the dominant class");
    }
    let b = model.weighted_matrix(t, punctured);
    let rho = b
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    rho.ln()
}

/// Number of closed-shift words `s_0 s_1 .. s_n` with `s_0 = s_n = symbol` and
/// `s_k != symbol` for `0 < k < n`, for `n = 1..=n_max` (index `n - 1`).
pub fn first_return_counts(model: &SftModel, symbol: usize, n_max: usize) -> Vec<u128> {
    let n = model.symbols();
    let mut paths = vec![0u128; n];
    paths[symbol] = 1;
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let mut next = vec![0u128; n];
        for (i, &c) in paths.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for (j, slot) in next.iter_mut().enumerate() {
                if model.closed[i][j] {
                    *slot = slot.saturating_add(c);
                }
            }
        }
        out.push(next[symbol]);
        next[symbol] = 0;
        paths = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_third_shift() {
        let m = SftModel::build(&IntervalMap::tripling(), &Hole::parse("(1/3,2/3)").unwrap()).unwrap();
        assert_eq!(m.symbols(), 3);
        for t in [0.5, 0.8, 1.0, 1.3] {
            let p = sft_pressure(&m, t, true);
            assert!((p - (2f64.ln() - t * 3f64.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_mean_shift() {
        let m = SftModel::build(&IntervalMap::doubling(), &Hole::parse("(0,1/4)").unwrap()).unwrap();
        assert_eq!(m.symbols(), 3);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((sft_pressure(&m, 1.0, true) - (golden.ln() - 2f64.ln())).abs() < 1e-12);
        for t in [0.7, 1.0, 1.3] {
            assert!((sft_pressure(&m, t, false) - (1.0 - t) * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_markov_is_unavailable() {
        let f = IntervalMap::logistic(4.0).unwrap();
        assert!(matches!(
            SftModel::build(&f, &Hole::empty()),
            Err(Error::OracleUnavailable(_))
        ));
        let t = IntervalMap::tent(1.9).unwrap();
        assert!(matches!(
            SftModel::build(&t, &Hole::empty()),
            Err(Error::OracleUnavailable(_))
        ));
    }

    #[test]
    fn first_returns_of_full_shifts() {
        let m = SftModel::build(&IntervalMap::tripling(), &Hole::empty()).unwrap();
        assert_eq!(first_return_counts(&m, 0, 5), vec![1, 2, 4, 8, 16]);
        let m = SftModel::build(&IntervalMap::doubling(), &Hole::empty()).unwrap();
        assert_eq!(first_return_counts(&m, 0, 4), vec![1, 1, 1, 1]);
    }

    #[test]
    fn text_export() {
        let m = SftModel::build(&IntervalMap::doubling(), &Hole::parse("(0,1/4)").unwrap()).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("0 1 1\n1 1 1\n") || s.contains("0 0 0\n0 0 1\n0 1 1\n"), "{s}");
    }
}
