//! Dimension of the survivor set: the zero of the punctured pressure, box counting
//! on the survivor refinement, and boundary-mass scaling of survivor measures.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{Family, IntervalMap};
use crate::numeric::{g12, linear_fit};
use crate::open_system::{Hole, OpenSystem, DEFAULT_INTERVAL_BUDGET};
use crate::spectral::{power_iteration, EigenOptions, Grid, GridMeasure, WeightedUlamOperator};

/// `log ρ` of the punctured operator, `p_t - 𝔢(m_t)`; `-inf` when nothing survives.
pub fn punctured_pressure(map: &IntervalMap, hole: &Hole, t: f64, grid: Arc<Grid>, opts: &EigenOptions) -> Result<f64> {
    let op = WeightedUlamOperator::build(map, t, grid, (!hole.is_empty()).then_some(hole))?;
    let (rho, ..) = power_iteration(op.matrix(), opts)?;
    Ok(if rho > 0.0 { rho.ln() } else { f64::NEG_INFINITY })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BowenOptions {
    pub t_lo: f64,
    pub t_hi: f64,
    pub tol: f64,
    /// Curve samples on `[t_lo, t_hi]`, evaluated concurrently.
    pub samples: usize,
}

impl Default for BowenOptions {
    fn default() -> Self {
        Self {
            t_lo: 0.3,
            t_hi: 1.2,
            tol: 1e-4,
            samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BowenResult {
    pub t_star: f64,
    pub bracket: (f64, f64),
    /// `(t, P^H(t))` samples.
    pub curve: Vec<(f64, f64)>,
    pub strictly_decreasing: bool,
    pub bisection_steps: usize,
    pub grid_cells: usize,
}

impl BowenResult {
    /// CSV `t,P_H`.
    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,P_H")?;
        for (t, p) in &self.curve {
            writeln!(out, "{},{}", g12(*t), g12(*p))?;
        }
        Ok(())
    }
}

/// Sign change of `P^H` on the sampled curve, refined by bisection.
pub fn bowen_root(
    map: &IntervalMap,
    hole: &Hole,
    grid: Arc<Grid>,
    opts: &BowenOptions,
    eigen: &EigenOptions,
) -> Result<BowenResult> {
    if !(opts.t_lo < opts.t_hi) || opts.samples < 2 || !(opts.tol > 0.0) {
        return Err(Error::Precondition("need t_lo < t_hi, two samples and a positive tolerance".into()));
    }
    let ts: Vec<f64> = (0..opts.samples)
        .map(|k| opts.t_lo + (opts.t_hi - opts.t_lo) * k as f64 / (opts.samples - 1) as f64)
        .filter(|&t| t < map.integrability_limit())
        .collect();
    let curve: Vec<(f64, f64)> = ts
        .par_iter()
        .map(|&t| punctured_pressure(map, hole, t, Arc::clone(&grid), eigen).map(|p| (t, p)))
        .collect::<Result<_>>()?;
    let strictly_decreasing = curve.windows(2).all(|w| w[1].1 < w[0].1);
    if !strictly_decreasing {
        log::warn!("punctured pressure is not strictly decreasing on the samples");
    }
    let Some(k) = curve.windows(2).position(|w| w[0].1 > 0.0 && w[1].1 <= 0.0) else {
        return Err(Error::NoSignChange {
            lo: opts.t_lo,
            hi: opts.t_hi,
            curve: curve.clone(),
        });
    };
    let (mut lo, mut hi) = (curve[k].0, curve[k + 1].0);
    let mut steps = 0;
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if punctured_pressure(map, hole, mid, Arc::clone(&grid), eigen)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    Ok(BowenResult {
        t_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        curve,
        strictly_decreasing,
        bisection_steps: steps,
        grid_cells: grid.len(),
    })
}

/// Box sizes `base^{-k}` for `k = k_min..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub base: u32,
    pub k_min: u32,
    pub k_max: u32,
}

impl ScaleLadder {
    /// Ladder matched to the map's slope and the refinement depth.
    pub fn for_depth(map: &IntervalMap, depth: usize) -> Self {
        let base = match map.family() {
            Family::Tripling => 3,
            _ => 2,
        };
        let k_max = depth.max(4) as u32;
        Self {
            base,
            k_min: (k_max / 3).max(1),
            k_max,
        }
    }

    pub fn scales(&self) -> Vec<f64> {
        (self.k_min..=self.k_max)
            .map(|k| (self.base as f64).powi(-(k as i32)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDimension {
    pub dimension: f64,
    pub r_squared: f64,
    /// `(ε, N(ε))`.
    pub counts: Vec<(f64, u64)>,
    pub depth: usize,
    pub partial: bool,
}

/// Relative tolerance, in units of the box size, for endpoints on box edges.
pub const BOX_EDGE_SLACK: f64 = 1e-9;

/// Number of boxes `(jε, (j+1)ε)` whose interior meets one of the sorted, disjoint
/// `intervals`.
pub fn box_count(intervals: &[(f64, f64)], eps: f64) -> u64 {
    let mut count = 0u64;
    let mut last: Option<u64> = None;
    for &(a, b) in intervals {
        if b <= a {
            continue;
        }
        // endpoints within round-off of a box edge count as on the edge
        let first = (a / eps + BOX_EDGE_SLACK).floor() as u64;
        let end = ((b / eps - BOX_EDGE_SLACK).ceil() as u64).max(first + 1);
        let start = match last {
            Some(l) if l >= first => l + 1,
            _ => first,
        };
        if end > start {
            count += end - start;
            last = Some(end - 1);
        }
    }
    count
}

/// Slope of `log N(ε)` against `log(1/ε)` for the depth-`n` survivor refinement.
pub fn box_dimension(sys: &OpenSystem, depth: usize, ladder: &ScaleLadder) -> Result<BoxDimension> {
    if ladder.k_max < ladder.k_min + 3 || ladder.base < 2 {
        return Err(Error::InsufficientData("box counting needs at least 4 ladder points".into()));
    }
    let refinement = sys.refine_survivor(depth, DEFAULT_INTERVAL_BUDGET);
    if refinement.partial {
        log::warn!("survivor refinement stopped at depth {} by the interval budget", refinement.depth);
    }
    let counts: Vec<(f64, u64)> = ladder
        .scales()
        .into_iter()
        .map(|eps| (eps, box_count(&refinement.intervals, eps)))
        .collect();
    if counts.iter().any(|&(_, c)| c == 0) {
        return Err(Error::InsufficientData("survivor set is empty at this depth".into()));
    }
    let xs: Vec<f64> = counts.iter().map(|(e, _)| -e.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&(_, c)| (c as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys).expect("four points");
    Ok(BoxDimension {
        dimension: fit.slope,
        r_squared: fit.r_squared,
        counts,
        depth: refinement.depth,
        partial: refinement.partial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryMass {
    /// `(ε, μ(B_ε(∂H)))`.
    pub rows: Vec<(f64, f64)>,
    /// Log-log slope, the empirical exponent `β`.
    pub beta: f64,
    pub r_squared: f64,
    /// Ladder entries dropped for being finer than the grid.
    pub truncated: usize,
}

/// Mass of the `ε`-neighbourhood of the hole boundary (points of `∂H` inside `(0, 1)`)
/// along the ladder; scales below twice the widest cell are dropped.
pub fn boundary_mass_diagnostic(measure: &GridMeasure, hole: &Hole, ladder: &[f64]) -> Result<BoundaryMass> {
    let floor = 2.0 * measure.grid().max_width();
    let boundary: Vec<f64> = hole.boundary().into_iter().filter(|&z| z > 0.0 && z < 1.0).collect();
    if boundary.is_empty() {
        return Err(Error::Precondition("hole has no interior boundary point".into()));
    }
    let kept: Vec<f64> = ladder.iter().copied().filter(|&e| e >= floor * (1.0 - 1e-12)).collect();
    let truncated = ladder.len() - kept.len();
    if truncated > 0 {
        log::warn!("{truncated} boundary scales below the grid resolution dropped");
    }
    let rows: Vec<(f64, f64)> = kept
        .iter()
        .map(|&e| (e, boundary.iter().map(|&z| measure.mass_in(z - e, z + e)).sum()))
        .collect();
    let used: Vec<&(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).collect();
    if used.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 usable scales".into()));
    }
    let xs: Vec<f64> = used.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|r| r.1.ln()).collect();
    let fit = linear_fit(&xs, &ys).expect("three points");
    Ok(BoundaryMass {
        rows,
        beta: fit.slope,
        r_squared: fit.r_squared,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escape::survivor_equilibrium;
    use crate::spectral::escape_spectral;

    fn grid(map: &IntervalMap, hole: &Hole, n: usize) -> Arc<Grid> {
        Arc::new(Grid::for_system(map, Some(hole), n, &[]).unwrap())
    }

    #[test]
    fn punctured_pressure_examples() {
        let f = IntervalMap::tripling();
        let h = Hole::parse("(1/3,2/3)").unwrap();
        for t in [0.4, 0.9, 1.1] {
            let p = punctured_pressure(&f, &h, t, grid(&f, &h, 243), &EigenOptions::default()).unwrap();
            assert!((p - (2f64.ln() - t * 3f64.ln())).abs() < 1e-12);
        }
        let d = IntervalMap::doubling();
        let p = punctured_pressure(&d, &Hole::empty(), 0.8, Arc::new(Grid::uniform(64).unwrap()), &EigenOptions::default()).unwrap();
        assert!((p - 0.2 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bowen_roots_of_markov_instances() {
        let f = IntervalMap::tripling();
        let h = Hole::parse("(1/3,2/3)").unwrap();
        let r = bowen_root(&f, &h, grid(&f, &h, 729), &BowenOptions::default(), &EigenOptions::default()).unwrap();
        assert!((r.t_star - 2f64.ln() / 3f64.ln()).abs() < 1e-4, "{r:?}");
        assert!(r.strictly_decreasing && r.bracket.1 - r.bracket.0 <= 1e-4);
        let d = IntervalMap::doubling();
        let h = Hole::parse("(0,1/4)").unwrap();
        let r = bowen_root(&d, &h, grid(&d, &h, 256), &BowenOptions::default(), &EigenOptions::default()).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((r.t_star - golden.ln() / 2f64.ln()).abs() < 1e-4);
        let r = bowen_root(&d, &Hole::empty(), Arc::new(Grid::uniform(64).unwrap()), &BowenOptions::default(), &EigenOptions::default()).unwrap();
        assert!((r.t_star - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bowen_without_sign_change_reports_curve() {
        let f = IntervalMap::tripling();
        let h = Hole::parse("(1/3,2/3)").unwrap();
        let opts = BowenOptions { t_lo: 0.8, t_hi: 1.1, ..Default::default() };
        match bowen_root(&f, &h, grid(&f, &h, 81), &opts, &EigenOptions::default()) {
            Err(Error::NoSignChange { curve, .. }) => assert_eq!(curve.len(), 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn box_counting() {
        assert_eq!(box_count(&[(0.0, 1.0 / 3.0), (2.0 / 3.0, 1.0)], 1.0 / 3.0), 2);
        assert_eq!(box_count(&[(0.0, 0.5), (0.5, 1.0)], 0.25), 4);
        assert_eq!(box_count(&[(0.1, 0.2), (0.21, 0.3)], 0.5), 1);
        let f = IntervalMap::tripling();
        let s = OpenSystem::new(f.clone(), Hole::parse("(1/3,2/3)").unwrap()).unwrap();
        let b = box_dimension(&s, 10, &ScaleLadder::for_depth(&f, 10)).unwrap();
        assert!((b.dimension - 2f64.ln() / 3f64.ln()).abs() < 0.02, "{b:?}");
        let d = IntervalMap::doubling();
        let s = OpenSystem::new(d.clone(), Hole::parse("(0,1/4)").unwrap()).unwrap();
        let b = box_dimension(&s, 14, &ScaleLadder::for_depth(&d, 14)).unwrap();
        assert!((b.dimension - 0.694242).abs() < 0.02, "{b:?}");
        let s = OpenSystem::new(d.clone(), Hole::empty()).unwrap();
        let b = box_dimension(&s, 8, &ScaleLadder::for_depth(&d, 8)).unwrap();
        assert!((b.dimension - 1.0).abs() < 1e-12);
        let short = ScaleLadder { base: 2, k_min: 3, k_max: 5 };
        assert!(box_dimension(&s, 8, &short).is_err());
    }

    #[test]
    fn boundary_mass_exponents() {
        let f = IntervalMap::tripling();
        let h = Hole::parse("(1/3,2/3)").unwrap();
        let (_, p) = escape_spectral(&f, &h, 1.0, grid(&f, &h, 3usize.pow(7)), &EigenOptions::default()).unwrap();
        let nu = survivor_equilibrium(&p).unwrap();
        let ladder: Vec<f64> = (1..=8).map(|k| 3f64.powi(-k)).collect();
        let b = boundary_mass_diagnostic(&nu.measure, &h, &ladder).unwrap();
        assert_eq!(b.truncated, 2);
        assert!((b.beta - 2f64.ln() / 3f64.ln()).abs() < 1e-9, "{b:?}");
        let leb = GridMeasure::lebesgue(Arc::new(Grid::uniform(1024).unwrap()));
        let ladder: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
        let b = boundary_mass_diagnostic(&leb, &Hole::parse("(0.3,0.4)").unwrap(), &ladder).unwrap();
        assert!((b.beta - 1.0).abs() < 1e-9);
    }
}
