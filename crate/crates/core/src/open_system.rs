//! Holes, the open system `(f, H)`, survivor-set refinements and the
//! finite-horizon hole placement checks.

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::conditions::{ConditionEntry, ConditionParams, ConditionReport};
use crate::error::{Error, Result};
use crate::maps::{IntervalMap, CRITICAL_CLEARANCE};
use crate::numeric::{parse_rational, rational_from_f64, rational_one, rational_to_f64};

/// Default cap on the number of intervals held by a survivor refinement.
pub const DEFAULT_INTERVAL_BUDGET: usize = 10_000_000;

/// One open interval `(lo, hi)` of a hole, with its marked point.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleComponent {
    pub lo: f64,
    pub hi: f64,
    pub lo_exact: BigRational,
    pub hi_exact: BigRational,
    pub center: f64,
}

impl HoleComponent {
    pub fn length(&self) -> f64 {
        rational_to_f64(&(&self.hi_exact - &self.lo_exact))
    }
}

/// A finite union of open intervals with disjoint closures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hole {
    components: Vec<HoleComponent>,
}

impl Hole {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a hole from exact endpoints and optional centers (default: midpoint).
    pub fn from_exact(parts: Vec<(BigRational, BigRational, Option<f64>)>) -> Result<Self> {
        let zero = BigRational::zero();
        let one = rational_one();
        let mut components = Vec::with_capacity(parts.len());
        for (a, b, center) in parts {
            if a >= b {
                return Err(Error::InvalidHole(format!(
                    "component ({}, {}) is empty",
                    rational_to_f64(&a),
                    rational_to_f64(&b)
                )));
            }
            if a < zero || b > one {
                return Err(Error::InvalidHole(format!(
                    "component ({}, {}) leaves [0, 1]",
                    rational_to_f64(&a),
                    rational_to_f64(&b)
                )));
            }
            let lo = rational_to_f64(&a);
            let hi = rational_to_f64(&b);
            let center = center.unwrap_or(0.5 * (lo + hi));
            if !(center > lo && center < hi) {
                return Err(Error::InvalidHole(format!(
                    "center {center} is not interior to ({lo}, {hi})"
                )));
            }
            components.push(HoleComponent {
                lo,
                hi,
                lo_exact: a,
                hi_exact: b,
                center,
            });
        }
        components.sort_by(|x, y| x.lo_exact.cmp(&y.lo_exact));
        for w in components.windows(2) {
            if w[0].hi_exact >= w[1].lo_exact {
                return Err(Error::InvalidHole(format!(
                    "components ({}, {}) and ({}, {}) have intersecting closures",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        let hole = Self { components };
        if hole.length() >= 1.0 {
            return Err(Error::InvalidHole("hole covers the whole interval".into()));
        }
        Ok(hole)
    }

    pub fn from_intervals(parts: &[(f64, f64)]) -> Result<Self> {
        Self::from_exact(
            parts
                .iter()
                .map(|&(a, b)| (rational_from_f64(a), rational_from_f64(b), None))
                .collect(),
        )
    }

    /// Parses `(a,b)[;(a,b)]*`, each component optionally followed by `center=z`.
    /// `none` or an empty string gives the empty hole.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text.eq_ignore_ascii_case("none") {
            return Ok(Self::empty());
        }
        let mut parts = Vec::new();
        for raw in text.split(';') {
            let raw = raw.trim();
            let open = raw
                .strip_prefix('(')
                .ok_or_else(|| Error::Parse(format!("hole component `{raw}` must start with `(`")))?;
            let (inner, rest) = open
                .split_once(')')
                .ok_or_else(|| Error::Parse(format!("hole component `{raw}` is missing `)`")))?;
            let (a, b) = inner
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("hole component `{raw}` needs two endpoints")))?;
            let rest = rest.trim().trim_start_matches(',').trim();
            let center = if rest.is_empty() {
                None
            } else {
                let z = rest
                    .strip_prefix("center")
                    .map(|r| r.trim_start())
                    .and_then(|r| r.strip_prefix('='))
                    .ok_or_else(|| Error::Parse(format!("unexpected `{rest}` after hole component")))?;
                Some(rational_to_f64(&parse_rational(z)?))
            };
            parts.push((parse_rational(a)?, parse_rational(b)?, center));
        }
        Self::from_exact(parts)
    }

    pub fn components(&self) -> &[HoleComponent] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.components.iter().map(HoleComponent::length).sum()
    }

    /// Membership in the open hole.
    pub fn contains(&self, x: f64) -> bool {
        self.components.iter().any(|c| x > c.lo && x < c.hi)
    }

    pub fn contains_exact(&self, x: &BigRational) -> bool {
        self.components
            .iter()
            .any(|c| *x > c.lo_exact && *x < c.hi_exact)
    }

    /// Endpoints of all components, ascending.
    pub fn boundary(&self) -> Vec<f64> {
        self.components.iter().flat_map(|c| [c.lo, c.hi]).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.center).collect()
    }

    pub fn boundary_distance(&self, x: f64) -> f64 {
        self.boundary()
            .into_iter()
            .map(|b| (x - b).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Same components with new endpoints (used to snap onto a grid); centers are kept
    /// when still interior, otherwise reset to midpoints.
    pub fn with_endpoints(&self, endpoints: &[(f64, f64)]) -> Result<Self> {
        if endpoints.len() != self.components.len() {
            return Err(Error::InvalidHole("endpoint count mismatch".into()));
        }
        Self::from_exact(
            self.components
                .iter()
                .zip(endpoints)
                .map(|(c, &(a, b))| {
                    let center = (c.center > a && c.center < b).then_some(c.center);
                    (rational_from_f64(a), rational_from_f64(b), center)
                })
                .collect(),
        )
    }

    /// Closed complement `[0, 1] \ H` as non-degenerate intervals.
    pub fn complement_exact(&self) -> Vec<(BigRational, BigRational)> {
        let mut out = Vec::new();
        let mut left = BigRational::zero();
        for c in &self.components {
            if c.lo_exact > left {
                out.push((left.clone(), c.lo_exact.clone()));
            }
            left = c.hi_exact.clone();
        }
        if left < rational_one() {
            out.push((left, rational_one()));
        }
        out
    }

    pub fn complement(&self) -> Vec<(f64, f64)> {
        self.complement_exact()
            .iter()
            .map(|(a, b)| (rational_to_f64(a), rational_to_f64(b)))
            .collect()
    }

    /// Canonical text form, accepted by [`Hole::parse`].
    pub fn to_spec_string(&self) -> String {
        if self.is_empty() {
            return "none".into();
        }
        self.components
            .iter()
            .map(|c| format!("({},{}) center={}", c.lo, c.hi, c.center))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// A map together with a hole whose closure avoids the critical set.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystem {
    map: IntervalMap,
    hole: Hole,
}

impl OpenSystem {
    pub fn new(map: IntervalMap, hole: Hole) -> Result<Self> {
        for c in map.critical_points() {
            for h in hole.components() {
                if c.location >= h.lo && c.location <= h.hi {
                    return Err(Error::InvalidHole(format!(
                        "critical point {} lies in the closure of ({}, {})",
                        c.location, h.lo, h.hi
                    )));
                }
                if (h.center - c.location).abs() <= CRITICAL_CLEARANCE {
                    return Err(Error::InvalidHole(format!(
                        "center {} coincides with a critical point",
                        h.center
                    )));
                }
            }
        }
        Ok(Self { map, hole })
    }

    pub fn map(&self) -> &IntervalMap {
        &self.map
    }

    pub fn hole(&self) -> &Hole {
        &self.hole
    }

    /// `true` iff `f^k(x)` avoids the hole for every `0 <= k <= n`.
    pub fn survives(&self, x: f64, n: usize) -> Result<bool> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(x));
        }
        let mut y = x;
        for k in 0..=n {
            if self.hole.contains(y) {
                return Ok(false);
            }
            if k < n {
                y = self.map.eval_on(self.map.lap_index(y), y);
            }
        }
        Ok(true)
    }

    /// Exact-arithmetic survival test for maps with affine laps.
    pub fn survives_exact(&self, x: &BigRational, n: usize) -> Option<bool> {
        let orbit = self.map.orbit_exact(x, n)?;
        Some(orbit.iter().all(|y| !self.hole.contains_exact(y)))
    }

    /// Interval decomposition of the closure of `I^n = {x : f^k x not in H, k <= n}`.
    /// Exact rational endpoints for maps with affine laps, floating endpoints otherwise.
    pub fn refine_survivor(&self, n: usize, budget: usize) -> SurvivorRefinement {
        match self.map.exact_laps() {
            Some(laps) => {
                let base = self.hole.complement_exact();
                let lap_images: Vec<_> = laps.iter().map(|l| l.image()).collect();
                let (depth, intervals, partial) = refine(
                    base,
                    &lap_images,
                    |i, y| laps[i].inverse(y),
                    n,
                    budget,
                );
                let mass: BigRational = intervals
                    .iter()
                    .fold(BigRational::zero(), |acc, (a, b)| acc + (b - a));
                SurvivorRefinement {
                    depth,
                    intervals: intervals
                        .iter()
                        .map(|(a, b)| (rational_to_f64(a), rational_to_f64(b)))
                        .collect(),
                    lebesgue_mass: rational_to_f64(&mass),
                    exact_mass: Some(mass),
                    partial,
                }
            }
            None => {
                let base = self.hole.complement();
                let lap_images: Vec<_> = (0..self.map.laps().len())
                    .map(|i| self.map.lap_image(i))
                    .collect();
                let (depth, intervals, partial) = refine(
                    base,
                    &lap_images,
                    |i, y| self.map.inverse_on(i, *y),
                    n,
                    budget,
                );
                let mass = intervals.iter().map(|(a, b)| b - a).sum();
                SurvivorRefinement {
                    depth,
                    intervals,
                    lebesgue_mass: mass,
                    exact_mass: None,
                    partial,
                }
            }
        }
    }

    /// Slow approach of critical orbits to the hole boundary:
    /// `min_k e^{theta k} dist(f^k c, boundary H) / delta0` over `0 <= k <= horizon`.
    pub fn check_h1(&self, params: &ConditionParams) -> Result<ConditionReport> {
        let mut report = ConditionReport::new("H1", params.horizon);
        if self.map.critical_points().is_empty() {
            report.notes.push("empty critical set: vacuous pass".into());
            return Ok(report);
        }
        if self.hole.is_empty() {
            report.notes.push("empty hole: vacuous pass".into());
            return Ok(report);
        }
        params.validate(self.map.max_critical_order().unwrap_or(2.0))?;
        if params.theta_is_default() {
            report
                .notes
                .push("theta_c defaulted to big_lambda / (10 * order)".into());
        }
        for c in self.map.critical_points() {
            let theta = params.theta_for(c.order);
            let orbit = self.map.orbit(c.location, params.horizon)?;
            let mut entry = ConditionEntry::new(c.location);
            let mut worst = f64::INFINITY;
            for (k, &y) in orbit.iter().enumerate() {
                let ratio = (theta * k as f64).exp() * self.hole.boundary_distance(y) / params.delta0;
                if ratio < worst {
                    worst = ratio;
                    entry.witness_step = Some(k);
                }
            }
            entry.min_clearance_ratio = Some(worst);
            entry.pass = worst > 1.0;
            report.push(entry);
        }
        Ok(report)
    }

    /// Center orbits avoid the critical set up to the horizon, and the first `r` with
    /// `|Df^r(b)| >= max(kappa e^{gamma r}, 4)` is recorded for each center.
    pub fn check_h2_orbit_separation(&self, params: &ConditionParams) -> Result<ConditionReport> {
        let mut report = ConditionReport::new("H2", params.horizon);
        report
            .notes
            .push("(b) preimage combinatorics is not checked; (a) and (c) are evaluated at the centers".into());
        for b in self.hole.centers() {
            let orbit = self.map.orbit(b, params.horizon)?;
            let mut entry = ConditionEntry::new(b);
            let mut min_clear = f64::INFINITY;
            for (k, &y) in orbit.iter().enumerate() {
                for c in self.map.critical_points() {
                    let d = (y - c.location).abs();
                    if d < min_clear {
                        min_clear = d;
                    }
                    if d <= CRITICAL_CLEARANCE && entry.pass {
                        entry.pass = false;
                        entry.witness_step = Some(k);
                    }
                }
            }
            if min_clear.is_finite() {
                entry.min_clearance_ratio = Some(min_clear / params.delta0);
            }
            let mut log_d = 0.0;
            for r in 1..=params.horizon {
                let y = orbit[r - 1];
                log_d += self.map.deriv(y)?.abs().ln();
                let need = (params.kappa.ln() + params.gamma * r as f64).max(4f64.ln());
                if log_d >= need - 1e-12 {
                    entry.return_step = Some(r);
                    entry.return_derivative = Some(log_d.exp());
                    break;
                }
            }
            if entry.return_step.is_none() {
                entry.pass = false;
            }
            report.push(entry);
        }
        let cover = self.covering_time(params.delta0 / 3.0, params.horizon, 64);
        report.notes.push(match cover {
            Some(n) => format!("empirical covering time for intervals of length delta0/3: {n}"),
            None => format!(
                "intervals of length delta0/3 do not cover [0, 1] within {} steps",
                params.horizon
            ),
        });
        Ok(report)
    }

    /// Largest, over `samples` evenly placed intervals of length `len`, of the first
    /// `n` with `f^n(omega) = [0, 1]`.
    pub fn covering_time(&self, len: f64, horizon: usize, samples: usize) -> Option<usize> {
        let mut worst = 0;
        for s in 0..samples {
            let lo = (1.0 - len) * s as f64 / (samples.max(2) - 1) as f64;
            let mut set = vec![(lo, lo + len)];
            let mut hit = None;
            for n in 1..=horizon {
                set = image_of_union(&self.map, &set);
                let covered: f64 = set.iter().map(|(a, b)| b - a).sum();
                if covered >= 1.0 - 1e-12 {
                    hit = Some(n);
                    break;
                }
            }
            worst = worst.max(hit?);
        }
        Some(worst)
    }
}

/// Forward image of a union of intervals, merged.
fn image_of_union(f: &IntervalMap, set: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in set {
        for (i, lap) in f.laps().iter().enumerate() {
            let lo = a.max(lap.lo);
            let hi = b.min(lap.hi);
            if hi > lo {
                let ya = f.eval_on(i, lo);
                let yb = f.eval_on(i, hi);
                out.push((ya.min(yb), ya.max(yb)));
            }
        }
    }
    merge_sorted(out)
}

fn merge_sorted<T: PartialOrd + Clone>(mut v: Vec<(T, T)>) -> Vec<(T, T)> {
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("ordered endpoints"));
    let mut out: Vec<(T, T)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => {
                if b > last.1 {
                    last.1 = b;
                }
            }
            _ => out.push((a, b)),
        }
    }
    out
}

/// Intersection of two sorted, merged interval lists; degenerate pieces are dropped.
fn intersect_sorted<T: PartialOrd + Clone>(x: &[(T, T)], y: &[(T, T)]) -> Vec<(T, T)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        let lo = if x[i].0 >= y[j].0 { &x[i].0 } else { &y[j].0 };
        let hi = if x[i].1 <= y[j].1 { &x[i].1 } else { &y[j].1 };
        if lo < hi {
            out.push((lo.clone(), hi.clone()));
        }
        if x[i].1 <= y[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// `I^k = base ∩ f^{-1}(I^{k-1})` via the inverse laps. Returns the depth reached,
/// the intervals at that depth and whether the budget cut the recursion short.
fn refine<T, F>(
    base: Vec<(T, T)>,
    lap_images: &[(T, T)],
    inverse: F,
    n: usize,
    budget: usize,
) -> (usize, Vec<(T, T)>, bool)
where
    T: PartialOrd + Clone,
    F: Fn(usize, &T) -> T,
{
    let base = merge_sorted(base);
    let mut current = base.clone();
    for depth in 1..=n {
        let mut pre = Vec::new();
        for (a, b) in &current {
            for (li, (ilo, ihi)) in lap_images.iter().enumerate() {
                let lo = if a >= ilo { a } else { ilo };
                let hi = if b <= ihi { b } else { ihi };
                if lo < hi {
                    let xa = inverse(li, lo);
                    let xb = inverse(li, hi);
                    pre.push(if xa <= xb { (xa, xb) } else { (xb, xa) });
                }
            }
            if pre.len() > budget {
                log::warn!("survivor refinement budget {budget} exceeded at depth {depth}");
                return (depth - 1, current, true);
            }
        }
        current = intersect_sorted(&base, &merge_sorted(pre));
    }
    (n, current, false)
}

/// Closed intervals whose union is the closure of `I^depth`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivorRefinement {
    pub depth: usize,
    pub intervals: Vec<(f64, f64)>,
    pub lebesgue_mass: f64,
    #[serde(skip)]
    pub exact_mass: Option<BigRational>,
    /// Set when the interval budget stopped the recursion before the requested depth.
    pub partial: bool,
}

impl SurvivorRefinement {
    /// CSV `lo,hi`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lo,hi")?;
        for (a, b) in &self.intervals {
            writeln!(out, "{},{}", crate::numeric::g12(*a), crate::numeric::g12(*b))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn sys(map: IntervalMap, hole: &str) -> OpenSystem {
        OpenSystem::new(map, Hole::parse(hole).unwrap()).unwrap()
    }

    #[test]
    fn survives_examples() {
        let s = sys(IntervalMap::doubling(), "(0,1/4)");
        assert!(s.survives(1.0 / 3.0, 100).unwrap());
        assert_eq!(s.survives_exact(&q(1, 3), 100), Some(true));
        assert!(!s.survives(0.125, 0).unwrap());
        let t = sys(IntervalMap::tripling(), "(1/3,2/3)");
        // 1/4 = 0.020202..._3 never has digit 1
        assert!(t.survives(0.25, 10).unwrap());
        assert_eq!(t.survives_exact(&q(1, 4), 10), Some(true));
        assert_eq!(t.survives_exact(&q(1, 2), 10), Some(false));
        // 0.0012_3 = 5/81 has digit 1 at position 3
        assert_eq!(t.survives_exact(&q(5, 81), 1), Some(true));
        assert_eq!(t.survives_exact(&q(5, 81), 2), Some(false));
    }

    #[test]
    fn middle_third_refinement() {
        let s = sys(IntervalMap::tripling(), "(1/3,2/3)");
        for n in 0..8 {
            let r = s.refine_survivor(n, DEFAULT_INTERVAL_BUDGET);
            assert_eq!(r.intervals.len(), 1 << (n + 1));
            let len = 3f64.powi(-(n as i32 + 1));
            for (a, b) in &r.intervals {
                assert_relative_eq!(b - a, len, epsilon = 1e-15);
            }
            let exact = r.exact_mass.unwrap();
            assert_eq!(exact, num_traits::pow(q(2, 3), n + 1));
        }
    }

    #[test]
    fn doubling_quarter_hole_refinement() {
        let s = sys(IntervalMap::doubling(), "(0,1/4)");
        let r0 = s.refine_survivor(0, DEFAULT_INTERVAL_BUDGET);
        assert_eq!(r0.exact_mass.unwrap(), q(3, 4));
        // [1/4, 1] ∩ ([1/8, 1/2] ∪ [5/8, 1]) = [1/4, 1/2] ∪ [5/8, 1]
        let r1 = s.refine_survivor(1, DEFAULT_INTERVAL_BUDGET);
        assert_eq!(r1.intervals, vec![(0.25, 0.5), (0.625, 1.0)]);
        assert_eq!(r1.exact_mass.unwrap(), q(5, 8));
    }

    #[test]
    fn budget_flags_partial_result() {
        let s = sys(IntervalMap::tripling(), "(1/3,2/3)");
        let r = s.refine_survivor(10, 100);
        assert!(r.partial);
        assert!(r.depth < 10);
        assert_eq!(r.intervals.len(), 1 << (r.depth + 1));
    }

    #[test]
    fn refinement_is_nested_and_mass_decreasing() {
        let s = sys(IntervalMap::logistic(4.0).unwrap(), "(0.7,0.8)");
        let mut prev = s.refine_survivor(0, DEFAULT_INTERVAL_BUDGET);
        for n in 1..8 {
            let r = s.refine_survivor(n, DEFAULT_INTERVAL_BUDGET);
            assert!(r.lebesgue_mass <= prev.lebesgue_mass + 1e-15);
            for (a, b) in &r.intervals {
                assert!(prev
                    .intervals
                    .iter()
                    .any(|(c, d)| *a >= c - 1e-12 && *b <= d + 1e-12));
            }
            prev = r;
        }
    }

    #[test]
    fn h1_examples() {
        let params = ConditionParams::default();
        let f = IntervalMap::logistic(4.0).unwrap();
        let s = OpenSystem::new(f.clone(), Hole::from_intervals(&[(0.74, 0.76)]).unwrap()).unwrap();
        let r = s.check_h1(&params).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.entries[0].min_clearance_ratio.unwrap(), 2.4, epsilon = 1e-9);

        let s = OpenSystem::new(f, Hole::from_intervals(&[(0.0, 0.1)]).unwrap()).unwrap();
        let r = s.check_h1(&params).unwrap();
        assert!(!r.pass);
        assert_eq!(r.entries[0].witness_step, Some(2));

        let d = sys(IntervalMap::doubling(), "(0.3,0.4)");
        assert!(d.check_h1(&params).unwrap().pass);
    }

    #[test]
    fn h2_examples() {
        let params = ConditionParams::default();
        let d = sys(IntervalMap::doubling(), "(0.3,0.36) center=1/3");
        let r = d.check_h2_orbit_separation(&params).unwrap();
        assert!(r.pass);
        assert_eq!(r.entries[0].return_step, Some(2));
        assert_relative_eq!(r.entries[0].return_derivative.unwrap(), 4.0, epsilon = 1e-12);

        let f = IntervalMap::logistic(4.0).unwrap();
        let s = OpenSystem::new(f.clone(), Hole::parse("(0.74,0.76) center=0.75").unwrap()).unwrap();
        assert!(s.check_h2_orbit_separation(&params).unwrap().pass);

        assert!(OpenSystem::new(f, Hole::parse("(0.4,0.6)").unwrap()).is_err());
    }

    #[test]
    fn hole_parsing_and_validation() {
        let h = Hole::parse("(0.1,0.2); (1/3,1/2) center=0.4").unwrap();
        assert_eq!(h.components().len(), 2);
        assert_eq!(h.components()[1].lo_exact, q(1, 3));
        assert_eq!(h.components()[1].center, 0.4);
        assert_relative_eq!(h.components()[0].center, 0.15);
        assert!(Hole::parse("(0.2,0.1)").is_err());
        assert!(Hole::parse("(0.1,0.3);(0.3,0.4)").is_err());
        assert!(Hole::parse("(0.1,0.3) center=0.5").is_err());
        assert!(Hole::parse("(0,1)").is_err());
        assert!(Hole::parse("none").unwrap().is_empty());
        let round = Hole::parse(&h.to_spec_string()).unwrap();
        assert_eq!(round.components().len(), 2);
    }

    #[test]
    fn refinement_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let systems = [
            sys(IntervalMap::doubling(), "(0,1/4)"),
            sys(IntervalMap::tripling(), "(1/3,2/3)"),
            sys(IntervalMap::logistic(4.0).unwrap(), "(0.7,0.8)"),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples = 200_000;
        for s in &systems {
            let n = 4;
            let mass = s.refine_survivor(n, DEFAULT_INTERVAL_BUDGET).lebesgue_mass;
            let hits = (0..samples)
                .filter(|_| s.survives(rng.random::<f64>(), n).unwrap())
                .count();
            let p = hits as f64 / samples as f64;
            let se = (mass * (1.0 - mass) / samples as f64).sqrt();
            assert!((p - mass).abs() <= 4.0 * se, "{p} vs {mass}");
        }
    }

    #[test]
    fn covering_time_is_finite_for_full_branch_maps() {
        let s = sys(IntervalMap::doubling(), "(0.3,0.4)");
        let n = s.covering_time(0.1 / 3.0, 50, 16).unwrap();
        assert!((5..=8).contains(&n), "{n}");
    }
}
