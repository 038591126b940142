//! Shrinking holes `H_ε(z) = (z - ε, z + ε)`: escape rate over hole measure against
//! its predicted limit, the slow-approach condition, local scaling of `m_t`, and
//! continuation of periodic orbits in a parameter.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::ConditionParams;
use crate::error::{Error, Result};
use crate::maps::{IntervalMap, PeriodicOrbit};
use crate::numeric::{g12, linear_fit, rational_from_f64};
use crate::open_system::{Hole, OpenSystem};
use crate::spectral::{escape_spectral, ClosedSolution, EigenOptions, Grid};

/// `1 - |Df^p(z)|^{-t} e^{-p p_t}` for a periodic centre, `1` otherwise.
pub fn predicted_limit(t: f64, p_t: f64, orbit: Option<&PeriodicOrbit>) -> Result<f64> {
    match orbit {
        None => Ok(1.0),
        Some(o) => {
            if o.multiplier.abs() <= 1.0 {
                return Err(Error::NonHyperbolic(format!(
                    "period-{} orbit at {} has multiplier {}",
                    o.period, o.point, o.multiplier
                )));
            }
            let p = o.period as f64;
            Ok(1.0 - (-t * o.multiplier.abs().ln() - p * p_t).exp())
        }
    }
}

/// The periodic orbit through `z` of least period at most `max_period`, if any.
pub fn periodic_orbit_at(map: &IntervalMap, z: f64, max_period: usize, tol: f64) -> Result<Option<PeriodicOrbit>> {
    for p in 1..=max_period {
        if let Some(o) = map.periodic_points(p, tol)?.into_iter().find(|o| (o.point - z).abs() <= tol) {
            return Ok(Some(o));
        }
    }
    Ok(None)
}

pub fn symmetric_hole(z: f64, eps: f64) -> Result<Hole> {
    if !(eps > 0.0) {
        return Err(Error::InvalidHole(format!("radius {eps} is not positive")));
    }
    let lo = (z - eps).max(0.0);
    let hi = (z + eps).min(1.0);
    Hole::from_exact(vec![(rational_from_f64(lo), rational_from_f64(hi), Some(z))])
}

/// Holes `H_ε(z)` with strictly decreasing radii, each passing the H1 check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoleFamily {
    pub center: f64,
    pub radii: Vec<f64>,
    pub orbit: Option<PeriodicOrbit>,
}

impl HoleFamily {
    pub fn new(map: &IntervalMap, center: f64, radii: Vec<f64>, params: &ConditionParams) -> Result<Self> {
        if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Precondition("radii must be non-empty and strictly decreasing".into()));
        }
        for &eps in &radii {
            let sys = OpenSystem::new(map.clone(), symmetric_hole(center, eps)?)?;
            let h1 = sys.check_h1(params)?;
            if !h1.pass {
                return Err(Error::InvalidHole(format!(
                    "H_ε({center}) with ε = {eps} fails H1 at horizon {}",
                    params.horizon
                )));
            }
        }
        let orbit = periodic_orbit_at(map, center, 8, 1e-10)?;
        Ok(Self { center, radii, orbit })
    }

    /// Radii `2^{-k}` for `k = k_min..=k_max`.
    pub fn dyadic(map: &IntervalMap, center: f64, k_min: i32, k_max: i32, params: &ConditionParams) -> Result<Self> {
        Self::new(map, center, (k_min..=k_max).map(|k| 2f64.powi(-k)).collect(), params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatioOptions {
    pub t: f64,
    /// Smallest grid; each row uses at least `cells_in_hole / (2ε)` cells, rounded up
    /// to a power of two.
    pub grid: usize,
    pub cells_in_hole: usize,
    /// Rows with `𝔢` below this are dropped as unresolved.
    pub min_escape: f64,
    /// Rows used by the linear extrapolation in `ε`.
    pub fit_rows: usize,
    /// Exponent `ς` of the slow-approach check.
    pub varsigma: f64,
    pub eigen: EigenOptions,
}

impl Default for RatioOptions {
    fn default() -> Self {
        Self {
            t: 1.0,
            grid: 1024,
            cells_in_hole: 32,
            min_escape: 1e-9,
            fit_rows: 4,
            varsigma: 0.1,
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub eps: f64,
    pub escape: f64,
    pub mu_hole: f64,
    pub ratio: f64,
    pub grid_cells: usize,
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCurve {
    pub center: f64,
    pub t: f64,
    pub rows: Vec<RatioRow>,
    pub predicted: f64,
    /// Intercept of the least-squares line of ratio against `ε` over the last rows.
    pub extrapolated: Option<f64>,
    /// Ratio of the smallest kept radius.
    pub last_ratio: Option<f64>,
    pub orbit: Option<PeriodicOrbit>,
    pub slow_approach: Option<SlowApproach>,
    /// `max` of `g_t^0` on the 8 cells nearest `z` over its median.
    pub density_ratio: Option<f64>,
}

impl RatioCurve {
    /// CSV `eps,escape,mu_hole,ratio` over the kept rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "eps,escape,mu_hole,ratio")?;
        for r in self.rows.iter().filter(|r| !r.dropped) {
            writeln!(out, "{},{},{},{}", g12(r.eps), g12(r.escape), g12(r.mu_hole), g12(r.ratio))?;
        }
        Ok(())
    }

    /// Gnuplot script plotting `csv` on log-scaled `ε` with the predicted limit.
    pub fn gnuplot_script(&self, csv: &str) -> String {
        format!(
            "set datafile separator ','\nset logscale x 2\nset xlabel 'eps'\nset ylabel 'escape / mu(H)'\n\
             set key bottom right\nplot '{csv}' using 1:4 skip 1 with linespoints title 'ratio', \\\n     \
             {} with lines title 'predicted'\n",
            g12(self.predicted)
        )
    }
}

fn row_grid(eps: f64, opts: &RatioOptions) -> usize {
    let need = (opts.cells_in_hole as f64 / (2.0 * eps)).ceil() as usize;
    opts.grid.max(need.next_power_of_two())
}

/// Escape rate over equilibrium mass of each hole in the family, on per-radius grids.
/// Maps with critical points must pass the slow-approach check at `z` and have a
/// bounded density there (`< 10×` the median).
pub fn ratio_curve(map: &IntervalMap, family: &HoleFamily, opts: &RatioOptions, params: &ConditionParams) -> Result<RatioCurve> {
    let z = family.center;
    let critical = !map.critical_points().is_empty();
    let mut slow = None;
    let mut density_ratio = None;
    if critical {
        let s = slow_approach_check(map, z, opts.varsigma, params.horizon);
        if !s.pass {
            return Err(Error::Precondition(format!(
                "slow approach fails at z = {z} (δ_z = {:e} at n = {:?})",
                s.delta_z, s.worst_n
            )));
        }
        slow = Some(s);
    }
    let rows: Vec<(RatioRow, Option<f64>, f64)> = family
        .radii
        .par_iter()
        .map(|&eps| {
            let hole = symmetric_hole(z, eps)?;
            let n = row_grid(eps, opts);
            let grid = Arc::new(Grid::for_system(map, Some(&hole), n, &[])?);
            let (closed, punctured) = escape_spectral(map, &hole, opts.t, grid, &opts.eigen)?;
            let (density, mu) = closed.equilibrium_state();
            let mu_hole = mu.mass_in(z - eps, z + eps);
            let escape = punctured.escape_rate;
            let dropped = !(escape >= opts.min_escape) || !escape.is_finite() || mu_hole <= 0.0;
            let ratio = if dropped { f64::NAN } else { escape / mu_hole };
            let dens = critical.then(|| density_near(&closed, &density, z));
            Ok((
                RatioRow {
                    eps,
                    escape,
                    mu_hole,
                    ratio,
                    grid_cells: closed.grid().len(),
                    dropped,
                },
                dens,
                closed.pressure(),
            ))
        })
        .collect::<Result<_>>()?;
    if let Some(d) = rows.iter().filter_map(|r| r.1).reduce(f64::max) {
        if d >= 10.0 {
            return Err(Error::Precondition(format!(
                "density near z = {z} is {d:.3}× its median; the limit needs a bounded density"
            )));
        }
        density_ratio = Some(d);
    }
    let p_t = rows.last().map(|r| r.2).unwrap_or(0.0);
    let predicted = predicted_limit(opts.t, p_t, family.orbit.as_ref())?;
    let rows: Vec<RatioRow> = rows.into_iter().map(|r| r.0).collect();
    for r in rows.iter().filter(|r| r.dropped) {
        log::warn!("radius {} dropped: escape rate {:e} below resolution", r.eps, r.escape);
    }
    let kept: Vec<&RatioRow> = rows.iter().filter(|r| !r.dropped).collect();
    let last_ratio = kept.last().map(|r| r.ratio);
    let tail = &kept[kept.len().saturating_sub(opts.fit_rows)..];
    let extrapolated = if tail.len() >= 2 {
        let xs: Vec<f64> = tail.iter().map(|r| r.eps).collect();
        let ys: Vec<f64> = tail.iter().map(|r| r.ratio).collect();
        linear_fit(&xs, &ys).map(|f| f.intercept)
    } else {
        None
    };
    Ok(RatioCurve {
        center: z,
        t: opts.t,
        rows,
        predicted,
        extrapolated,
        last_ratio,
        orbit: family.orbit,
        slow_approach: slow,
        density_ratio,
    })
}

/// `max` of the density over the 8 cells nearest `z`, divided by its median.
fn density_near(closed: &ClosedSolution, density: &[f64], z: f64) -> f64 {
    let grid = closed.grid();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| (grid.midpoint(a) - z).abs().total_cmp(&(grid.midpoint(b) - z).abs()));
    let near = order.iter().take(8).map(|&i| density[i]).fold(0.0, f64::max);
    let mut sorted = density.to_vec();
    sorted.sort_by(f64::total_cmp);
    near / sorted[sorted.len() / 2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlowApproach {
    /// `min_{n <= N, c} e^{nς} |f^n(c) - z|`.
    pub delta_z: f64,
    pub varsigma: f64,
    pub horizon: usize,
    pub worst_n: Option<usize>,
    pub pass: bool,
    /// No critical points: nothing to check.
    pub vacuous: bool,
}

/// Smallest distance below which a slow-approach constant counts as zero.
pub const SLOW_APPROACH_FLOOR: f64 = 1e-12;

pub fn slow_approach_check(map: &IntervalMap, z: f64, varsigma: f64, horizon: usize) -> SlowApproach {
    let mut delta = f64::INFINITY;
    let mut worst = None;
    for c in map.critical_points() {
        let mut x = c.location;
        for n in 0..=horizon {
            let d = (x - z).abs() * (varsigma * n as f64).exp();
            if d < delta {
                delta = d;
                worst = Some(n);
            }
            x = map.eval_on(map.lap_index(x), x);
        }
    }
    let vacuous = map.critical_points().is_empty();
    SlowApproach {
        delta_z: delta,
        varsigma,
        horizon,
        worst_n: worst,
        pass: vacuous || delta > SLOW_APPROACH_FLOOR,
        vacuous,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingExponent {
    /// `t + p_t / λ(z)`.
    pub s_t: f64,
    pub lyapunov: f64,
    /// Log-log slope of `m_t(B_δ(z))` against `2δ`.
    pub empirical: f64,
    pub gap: f64,
    pub rows: Vec<(f64, f64)>,
}

/// `s_t = t + p_t / λ(z)` with `λ(z)` from the orbit when `z` is periodic, else
/// `∫ log|Df| dμ_t`; compared with the slope of `m_t(B_δ(z))` over `deltas`.
pub fn scaling_exponent(
    map: &IntervalMap,
    closed: &ClosedSolution,
    z: f64,
    orbit: Option<&PeriodicOrbit>,
    deltas: &[f64],
) -> Result<ScalingExponent> {
    let t = closed.t();
    let p_t = closed.pressure();
    let lyapunov = match orbit {
        Some(o) => o.lyapunov,
        None => {
            let (_, mu) = closed.equilibrium_state();
            let grid = mu.grid();
            let logd: Vec<f64> = (0..grid.len())
                .map(|i| map.deriv(grid.midpoint(i)).map_or(0.0, |d| d.abs().max(f64::MIN_POSITIVE).ln()))
                .collect();
            mu.integrate(&logd)
        }
    };
    if !(lyapunov > 0.0) {
        return Err(Error::NonHyperbolic(format!("Lyapunov exponent {lyapunov} is not positive")));
    }
    let s_t = t + p_t / lyapunov;
    let m = closed.conformal_measure();
    let floor = 2.0 * closed.grid().max_width();
    let rows: Vec<(f64, f64)> = deltas
        .iter()
        .copied()
        .filter(|&d| d >= floor)
        .map(|d| (d, m.mass_in(z - d, z + d)))
        .filter(|r| r.1 > 0.0)
        .collect();
    if rows.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 resolved radii".into()));
    }
    let xs: Vec<f64> = rows.iter().map(|r| (2.0 * r.0).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let empirical = linear_fit(&xs, &ys).expect("three points").slope;
    Ok(ScalingExponent {
        s_t,
        lyapunov,
        empirical,
        gap: (empirical - s_t).abs(),
        rows,
    })
}

/// Lebesgue fraction `|H ∩ f^{-p} H| / |H|` for an interval hole `(lo, hi)`.
pub fn hole_return_fraction(map: &IntervalMap, hole: (f64, f64), p: usize) -> f64 {
    let (lo, hi) = hole;
    let mut kept = 0.0;
    for lap in map.iterate_laps(p) {
        let a = lap.lo.max(lo);
        let b = lap.hi.min(hi);
        if b <= a {
            continue;
        }
        let ya = map.forward_along(&lap.itinerary, a);
        let yb = map.forward_along(&lap.itinerary, b);
        let (ilo, ihi) = (ya.min(yb), ya.max(yb));
        let u = ilo.max(lo);
        let v = ihi.min(hi);
        if v <= u {
            continue;
        }
        let xu = map.pullback(&lap.itinerary, u);
        let xv = map.pullback(&lap.itinerary, v);
        kept += (xu - xv).abs();
    }
    kept / (hi - lo)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Continuation {
    /// `(parameter, orbit)` at each accepted step, starting at the initial parameter.
    pub path: Vec<(f64, PeriodicOrbit)>,
    pub complete: bool,
    /// Reason the path stopped early.
    pub stopped: Option<String>,
}

/// Multiplier margin `|Df^p| >= 1 + margin` required along a continuation.
pub const CONTINUATION_MARGIN: f64 = 1e-3;

/// Follows a repelling periodic orbit of `map` from its parameter to `to` in `steps`
/// equal steps, polishing `f^p(x) = x` by damped Newton at each step.
pub fn continue_periodic(map: &IntervalMap, orbit: &PeriodicOrbit, to: f64, steps: usize) -> Result<Continuation> {
    let from = map
        .parameter()
        .ok_or_else(|| Error::InvalidMap(format!("{} has no parameter", map.spec_string())))?;
    let p = orbit.period;
    let mut path = vec![(from, *orbit)];
    if from == to {
        return Ok(Continuation { path, complete: true, stopped: None });
    }
    let steps = steps.max(1);
    let mut x = orbit.point;
    for k in 1..=steps {
        let lam = from + (to - from) * k as f64 / steps as f64;
        let f = map.with_parameter(lam)?;
        let g = |x: f64| -> (f64, f64) {
            let mut y = x;
            let mut d = 1.0;
            for _ in 0..p {
                let lap = f.lap_index(y);
                d *= f.deriv_on(lap, y);
                y = f.eval_on(lap, y);
            }
            (y - x, d)
        };
        let mut converged = false;
        for _ in 0..100 {
            let (r, d) = g(x);
            if r.abs() <= 1e-14 {
                converged = true;
                break;
            }
            let step = r / (d - 1.0);
            let mut damping = 1.0;
            loop {
                let trial = (x - damping * step).clamp(0.0, 1.0);
                if g(trial).0.abs() < r.abs() || damping < 1e-6 {
                    x = trial;
                    break;
                }
                damping *= 0.5;
            }
            if step.abs() * damping <= 1e-15 {
                converged = g(x).0.abs() <= 1e-12;
                break;
            }
        }
        let (r, multiplier) = g(x);
        if !converged && r.abs() > 1e-12 {
            return Ok(Continuation {
                path,
                complete: false,
                stopped: Some(format!("root polish failed at parameter {lam} (residual {r:e})")),
            });
        }
        if multiplier.abs() < 1.0 + CONTINUATION_MARGIN {
            return Ok(Continuation {
                path,
                complete: false,
                stopped: Some(format!("multiplier {multiplier} within margin at parameter {lam}")),
            });
        }
        path.push((
            lam,
            PeriodicOrbit {
                point: x,
                period: p,
                multiplier,
                lyapunov: multiplier.abs().ln() / p as f64,
            },
        ));
    }
    Ok(Continuation { path, complete: true, stopped: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicted_limits() {
        let f = IntervalMap::logistic(4.0).unwrap();
        let o = periodic_orbit_at(&f, 0.75, 3, 1e-10).unwrap().unwrap();
        assert_eq!(o.period, 1);
        assert!((predicted_limit(1.0, 0.0, Some(&o)).unwrap() - 0.5).abs() < 1e-12);
        let d = IntervalMap::doubling();
        let o = periodic_orbit_at(&d, 1.0 / 3.0, 3, 1e-10).unwrap().unwrap();
        assert_eq!(o.period, 2);
        assert!((predicted_limit(1.0, 0.0, Some(&o)).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(predicted_limit(1.0, 0.0, None).unwrap(), 1.0);
        let attracting = PeriodicOrbit { point: 0.5, period: 1, multiplier: 0.5, lyapunov: 0.5f64.ln() };
        assert!(predicted_limit(1.0, 0.0, Some(&attracting)).is_err());
    }

    #[test]
    fn slow_approach_examples() {
        let f = IntervalMap::logistic(4.0).unwrap();
        for s in [0.05, 0.1, 0.5] {
            let r = slow_approach_check(&f, 0.75, s, 50);
            assert!(r.pass && (r.delta_z - 0.25).abs() < 1e-15);
        }
        assert!(!slow_approach_check(&f, 0.0, 0.1, 50).pass);
        assert!(slow_approach_check(&IntervalMap::doubling(), 0.3, 0.1, 50).vacuous);
    }

    #[test]
    fn return_fraction_of_period_two_hole() {
        let d = IntervalMap::doubling();
        for k in 6..=12 {
            let e = 2f64.powi(-k);
            let frac = hole_return_fraction(&d, (1.0 / 3.0 - e, 1.0 / 3.0 + e), 2);
            assert!((frac - 0.25).abs() < 1e-9, "{k} {frac}");
        }
    }

    #[test]
    fn doubling_ratio_curve() {
        let d = IntervalMap::doubling();
        let fam = HoleFamily::dyadic(&d, 1.0 / 3.0, 6, 10, &ConditionParams::default()).unwrap();
        let c = ratio_curve(&d, &fam, &RatioOptions::default(), &ConditionParams::default()).unwrap();
        assert_eq!(c.predicted, 0.75);
        assert!((c.extrapolated.unwrap() - 0.75).abs() < 0.05, "{c:?}");
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("eps,escape,mu_hole,ratio\n0.015625,"));
    }

    #[test]
    fn scaling_exponents() {
        let d = IntervalMap::doubling();
        let deltas: Vec<f64> = (3..9).map(|k| 2f64.powi(-k)).collect();
        for t in [0.7, 1.0] {
            let c = ClosedSolution::solve(&d, t, Arc::new(Grid::uniform(1024).unwrap()), &EigenOptions::default()).unwrap();
            let s = scaling_exponent(&d, &c, 0.3, None, &deltas).unwrap();
            assert!((s.s_t - 1.0).abs() < 1e-9 && (s.empirical - 1.0).abs() < 1e-9, "{s:?}");
        }
        let f = IntervalMap::tripling();
        let c = ClosedSolution::solve(&f, 0.8, Arc::new(Grid::uniform(729).unwrap()), &EigenOptions::default()).unwrap();
        let s = scaling_exponent(&f, &c, 0.5, None, &deltas).unwrap();
        assert!((s.s_t - 1.0).abs() < 1e-9);
    }

    #[test]
    fn continuation_of_logistic_orbits() {
        let f = IntervalMap::logistic(4.0).unwrap();
        let fixed = periodic_orbit_at(&f, 0.75, 1, 1e-12).unwrap().unwrap();
        let c = continue_periodic(&f, &fixed, 3.9, 20).unwrap();
        assert!(c.complete);
        for (lam, o) in &c.path {
            assert!((o.point - (lam - 1.0) / lam).abs() < 1e-9);
        }
        let two = f.periodic_points(2, 1e-12).unwrap();
        let target = IntervalMap::logistic(3.9).unwrap().periodic_points(2, 1e-12).unwrap();
        for o in &two {
            let c = continue_periodic(&f, o, 3.9, 20).unwrap();
            let end = c.path.last().unwrap().1.point;
            assert!(target.iter().any(|q| (q.point - end).abs() < 1e-9), "{end}");
        }
        let same = continue_periodic(&f, &fixed, 4.0, 5).unwrap();
        assert_eq!(same.path.len(), 1);
        // the fixed point loses hyperbolicity at λ = 3
        let c = continue_periodic(&f, &fixed, 2.9, 50).unwrap();
        assert!(!c.complete && c.path.last().unwrap().0 > 3.0);
    }
}
