//! Closed-form interval maps on `[0, 1]`: evaluation, derivatives, inverse
//! branches, orbits, periodic points and the Collet–Eckmann check.

use std::f64::consts::PI;
use std::path::Path;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::conditions::{ConditionEntry, ConditionParams, ConditionReport};
use crate::error::{Error, Result};
use crate::numeric::{bisect, parse_rational, rational_from_f64, rational_to_f64};

/// Clearance below which an orbit point counts as sitting on a critical point.
pub const CRITICAL_CLEARANCE: f64 = 1e-10;
/// Default root tolerance.
pub const ROOT_TOL: f64 = 1e-12;

/// A non-flat critical point `c` of order `order`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub location: f64,
    pub order: f64,
}

/// Affine branch sending `[lo, hi]` onto the segment from `image_lo = f(lo)` to `image_hi = f(hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBranch {
    lo: BigRational,
    hi: BigRational,
    image_lo: BigRational,
    image_hi: BigRational,
}

impl AffineBranch {
    pub fn new(
        lo: BigRational,
        hi: BigRational,
        image_lo: BigRational,
        image_hi: BigRational,
    ) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidMap(format!(
                "branch domain [{}, {}] is empty",
                rational_to_f64(&lo),
                rational_to_f64(&hi)
            )));
        }
        Ok(Self {
            lo,
            hi,
            image_lo,
            image_hi,
        })
    }

    pub fn from_f64(lo: f64, hi: f64, image_lo: f64, image_hi: f64) -> Result<Self> {
        for v in [lo, hi, image_lo, image_hi] {
            if !v.is_finite() {
                return Err(Error::InvalidMap(format!("non-finite branch coordinate {v}")));
            }
        }
        Self::new(
            rational_from_f64(lo),
            rational_from_f64(hi),
            rational_from_f64(image_lo),
            rational_from_f64(image_hi),
        )
    }

    fn slope_exact(&self) -> BigRational {
        (&self.image_hi - &self.image_lo) / (&self.hi - &self.lo)
    }
}

/// Supported map families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Logistic { lambda: f64 },
    Tent { slope: f64 },
    Doubling,
    Tripling,
    PiecewiseLinear(Vec<AffineBranch>),
    /// `x -> (1 + T_k(2x - 1)) / 2` for the Chebyshev polynomial `T_k`.
    Chebyshev { degree: u32 },
}

/// A maximal interval on which the map is monotone and given by one formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lap {
    pub lo: f64,
    pub hi: f64,
    pub increasing: bool,
    /// Constant slope for affine laps.
    pub slope: Option<f64>,
}

/// Exact affine lap `x -> slope * x + intercept` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLap {
    pub lo: BigRational,
    pub hi: BigRational,
    pub slope: BigRational,
    pub intercept: BigRational,
}

impl ExactLap {
    pub fn eval(&self, x: &BigRational) -> BigRational {
        &self.slope * x + &self.intercept
    }

    pub fn inverse(&self, y: &BigRational) -> BigRational {
        (y - &self.intercept) / &self.slope
    }

    /// Image endpoints in increasing order.
    pub fn image(&self) -> (BigRational, BigRational) {
        let a = self.eval(&self.lo);
        let b = self.eval(&self.hi);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

/// A lap of `f^n` together with the itinerary of laps of `f` it follows.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedLap {
    pub lo: f64,
    pub hi: f64,
    pub itinerary: Vec<usize>,
    /// `f^n(lo)` and `f^n(hi)` evaluated along the itinerary.
    pub image_at_lo: f64,
    pub image_at_hi: f64,
}

/// A repelling periodic orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub point: f64,
    pub period: usize,
    /// `Df^p(point)`.
    pub multiplier: f64,
    /// `log|Df^p(point)| / p`.
    pub lyapunov: f64,
}

/// A multimodal self-map of `[0, 1]` with closed-form derivative and inverse branches.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMap {
    family: Family,
    critical_points: Vec<CriticalPoint>,
    laps: Vec<Lap>,
}

impl IntervalMap {
    pub fn logistic(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 4.0) {
            return Err(Error::InvalidMap(format!("logistic parameter {lambda} outside (0, 4]")));
        }
        Ok(Self {
            family: Family::Logistic { lambda },
            critical_points: vec![CriticalPoint {
                location: 0.5,
                order: 2.0,
            }],
            laps: vec![
                Lap {
                    lo: 0.0,
                    hi: 0.5,
                    increasing: true,
                    slope: None,
                },
                Lap {
                    lo: 0.5,
                    hi: 1.0,
                    increasing: false,
                    slope: None,
                },
            ],
        })
    }

    pub fn tent(slope: f64) -> Result<Self> {
        if !(slope > 1.0 && slope <= 2.0) {
            return Err(Error::InvalidMap(format!("tent slope {slope} outside (1, 2]")));
        }
        Ok(Self {
            family: Family::Tent { slope },
            critical_points: Vec::new(),
            laps: vec![
                Lap {
                    lo: 0.0,
                    hi: 0.5,
                    increasing: true,
                    slope: Some(slope),
                },
                Lap {
                    lo: 0.5,
                    hi: 1.0,
                    increasing: false,
                    slope: Some(-slope),
                },
            ],
        })
    }

    pub fn doubling() -> Self {
        Self::k_adic(Family::Doubling, 2)
    }

    pub fn tripling() -> Self {
        Self::k_adic(Family::Tripling, 3)
    }

    fn k_adic(family: Family, k: usize) -> Self {
        let laps = (0..k)
            .map(|j| Lap {
                lo: j as f64 / k as f64,
                hi: (j + 1) as f64 / k as f64,
                increasing: true,
                slope: Some(k as f64),
            })
            .collect();
        Self {
            family,
            critical_points: Vec::new(),
            laps,
        }
    }

    /// Piecewise-linear map from a list of contiguous affine branches covering `[0, 1]`.
    pub fn piecewise_linear(mut branches: Vec<AffineBranch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidMap("no branches".into()));
        }
        branches.sort_by(|a, b| a.lo.cmp(&b.lo));
        let zero = BigRational::zero();
        let one = crate::numeric::rational_one();
        if branches[0].lo != zero || branches.last().unwrap().hi != one {
            return Err(Error::InvalidMap("branches must cover [0, 1]".into()));
        }
        for w in branches.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::InvalidMap(format!(
                    "branches not contiguous at {}",
                    rational_to_f64(&w[0].hi)
                )));
            }
        }
        let mut laps = Vec::with_capacity(branches.len());
        for b in &branches {
            for v in [&b.image_lo, &b.image_hi] {
                if *v < zero || *v > one {
                    return Err(Error::InvalidMap(format!(
                        "branch image leaves [0, 1]: {}",
                        rational_to_f64(v)
                    )));
                }
            }
            let slope = b.slope_exact();
            if slope.abs() <= one {
                return Err(Error::InvalidMap(format!(
                    "branch slope {} must exceed 1 in absolute value",
                    rational_to_f64(&slope)
                )));
            }
            let s = rational_to_f64(&slope);
            laps.push(Lap {
                lo: rational_to_f64(&b.lo),
                hi: rational_to_f64(&b.hi),
                increasing: s > 0.0,
                slope: Some(s),
            });
        }
        Ok(Self {
            family: Family::PiecewiseLinear(branches),
            critical_points: Vec::new(),
            laps,
        })
    }

    pub fn chebyshev(degree: u32) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidMap("Chebyshev degree must be at least 2".into()));
        }
        let k = degree as usize;
        // critical points x_j = (1 + cos(j pi / k)) / 2, ascending for j = k-1, ..., 1
        let mut cuts = vec![0.0];
        let mut critical_points = Vec::new();
        for j in (1..k).rev() {
            let x = 0.5 * (1.0 + (j as f64 * PI / k as f64).cos());
            cuts.push(x);
            critical_points.push(CriticalPoint {
                location: x,
                order: 2.0,
            });
        }
        cuts.push(1.0);
        let laps = (0..k)
            .map(|m| {
                let j = k - 1 - m;
                Lap {
                    lo: cuts[m],
                    hi: cuts[m + 1],
                    increasing: j.is_multiple_of(2),
                    slope: None,
                }
            })
            .collect();
        Ok(Self {
            family: Family::Chebyshev { degree },
            critical_points,
            laps,
        })
    }

    /// Parses `logistic:4.0 | doubling | tripling | tent:2.0 | chebyshev[:k] | plm:<path>`.
    /// Relative branch-table paths resolve against `base_dir`.
    pub fn parse_spec(spec: &str, base_dir: Option<&Path>) -> Result<Self> {
        let spec = spec.trim();
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| Error::Parse(format!("map `{name}` needs a parameter")))?;
            Ok(rational_to_f64(&parse_rational(a)?))
        };
        match name.to_ascii_lowercase().as_str() {
            "logistic" => Self::logistic(num(arg)?),
            "tent" => Self::tent(num(arg)?),
            "doubling" => Ok(Self::doubling()),
            "tripling" => Ok(Self::tripling()),
            "chebyshev" => {
                let k = match arg {
                    Some(a) => a
                        .parse::<u32>()
                        .map_err(|_| Error::Parse(format!("bad Chebyshev degree `{a}`")))?,
                    None => 3,
                };
                Self::chebyshev(k)
            }
            "plm" => {
                let path = arg.ok_or_else(|| Error::Parse("plm needs a branch-table path".into()))?;
                let mut p = Path::new(path).to_path_buf();
                if p.is_relative() {
                    if let Some(dir) = base_dir {
                        p = dir.join(p);
                    }
                }
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Parse(format!("cannot read branch table {}: {e}", p.display())))?;
                Self::piecewise_linear(parse_branch_table(&text)?)
            }
            other => Err(Error::Parse(format!("unknown map family `{other}`"))),
        }
    }

    /// Canonical spec string (inverse of [`IntervalMap::parse_spec`] except for `plm`).
    pub fn spec_string(&self) -> String {
        match &self.family {
            Family::Logistic { lambda } => format!("logistic:{lambda}"),
            Family::Tent { slope } => format!("tent:{slope}"),
            Family::Doubling => "doubling".into(),
            Family::Tripling => "tripling".into(),
            Family::Chebyshev { degree } => format!("chebyshev:{degree}"),
            Family::PiecewiseLinear(b) => format!("plm[{} branches]", b.len()),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }

    pub fn laps(&self) -> &[Lap] {
        &self.laps
    }

    /// Lap boundaries in the interior of `[0, 1]`.
    pub fn lap_cuts(&self) -> Vec<f64> {
        self.laps.iter().skip(1).map(|l| l.lo).collect()
    }

    pub fn is_piecewise_linear(&self) -> bool {
        self.laps.iter().all(|l| l.slope.is_some())
    }

    /// Maps whose laps are `x -> kx - j`; the endpoints 0 and 1 are identified
    /// when counting periodic points.
    pub fn is_circle_like(&self) -> bool {
        matches!(self.family, Family::Doubling | Family::Tripling)
    }

    pub fn max_critical_order(&self) -> Option<f64> {
        self.critical_points
            .iter()
            .map(|c| c.order)
            .fold(None, |m, o| Some(m.map_or(o, |m: f64| m.max(o))))
    }

    /// Upper bound on `t` for which `|Df|^{1-t}` is treated as integrable.
    pub fn integrability_limit(&self) -> f64 {
        match self.max_critical_order() {
            Some(l) => 2.0 - 1.0 / l,
            None => f64::INFINITY,
        }
    }

    /// Family parameter, when the family has one.
    pub fn parameter(&self) -> Option<f64> {
        match self.family {
            Family::Logistic { lambda } => Some(lambda),
            Family::Tent { slope } => Some(slope),
            Family::Chebyshev { degree } => Some(degree as f64),
            _ => None,
        }
    }

    /// Same family at a different parameter value.
    pub fn with_parameter(&self, p: f64) -> Result<Self> {
        match self.family {
            Family::Logistic { .. } => Self::logistic(p),
            Family::Tent { .. } => Self::tent(p),
            _ => Err(Error::InvalidMap(format!(
                "{} has no continuous parameter",
                self.spec_string()
            ))),
        }
    }

    /// Index of the lap containing `x`; shared endpoints belong to the right lap.
    pub fn lap_index(&self, x: f64) -> usize {
        let idx = self.laps.partition_point(|l| l.lo <= x);
        idx.saturating_sub(1).min(self.laps.len() - 1)
    }

    fn check_domain(x: f64) -> Result<()> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(Error::Domain(x))
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.eval_on(self.lap_index(x), x))
    }

    /// Signed derivative `Df(x)`.
    pub fn deriv(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.deriv_on(self.lap_index(x), x))
    }

    /// Evaluates the formula of lap `lap` at `x` (used at shared endpoints for one-sided limits).
    pub fn eval_on(&self, lap: usize, x: f64) -> f64 {
        let y = match &self.family {
            Family::Logistic { lambda } => lambda * x * (1.0 - x),
            Family::Tent { slope } => {
                if lap == 0 {
                    slope * x
                } else {
                    slope * (1.0 - x)
                }
            }
            Family::Doubling => 2.0 * x - lap as f64,
            Family::Tripling => 3.0 * x - lap as f64,
            Family::PiecewiseLinear(_) => {
                let l = &self.laps[lap];
                let s = l.slope.expect("affine lap");
                self.plm_image_lo(lap) + s * (x - l.lo)
            }
            Family::Chebyshev { degree } => 0.5 * (1.0 + chebyshev_t(*degree, 2.0 * x - 1.0)),
        };
        y.clamp(0.0, 1.0)
    }

    fn plm_image_lo(&self, lap: usize) -> f64 {
        match &self.family {
            Family::PiecewiseLinear(b) => rational_to_f64(&b[lap].image_lo),
            _ => unreachable!(),
        }
    }

    pub fn deriv_on(&self, lap: usize, x: f64) -> f64 {
        match &self.family {
            Family::Logistic { lambda } => lambda * (1.0 - 2.0 * x),
            Family::Chebyshev { degree } => {
                *degree as f64 * chebyshev_u(*degree as i64 - 1, 2.0 * x - 1.0)
            }
            _ => self.laps[lap].slope.expect("affine lap"),
        }
    }

    /// Image of lap `lap` as an increasing pair.
    pub fn lap_image(&self, lap: usize) -> (f64, f64) {
        let l = &self.laps[lap];
        let a = self.eval_on(lap, l.lo);
        let b = self.eval_on(lap, l.hi);
        (a.min(b), a.max(b))
    }

    /// Preimage of `y` under lap `lap`, closed form; `y` is clamped into the lap image.
    pub fn inverse_on(&self, lap: usize, y: f64) -> f64 {
        let l = &self.laps[lap];
        let (ilo, ihi) = self.lap_image(lap);
        let y = y.clamp(ilo, ihi);
        let x = match &self.family {
            Family::Logistic { lambda } => {
                let r = (4.0 * y / lambda).min(1.0);
                let s = (1.0 - r).max(0.0).sqrt();
                let left = 0.5 * r / (1.0 + s);
                if lap == 0 {
                    left
                } else {
                    1.0 - left
                }
            }
            Family::Tent { slope } => {
                if lap == 0 {
                    y / slope
                } else {
                    1.0 - y / slope
                }
            }
            Family::Doubling => (y + lap as f64) / 2.0,
            Family::Tripling => (y + lap as f64) / 3.0,
            Family::PiecewiseLinear(_) => {
                let s = l.slope.expect("affine lap");
                l.lo + (y - self.plm_image_lo(lap)) / s
            }
            Family::Chebyshev { degree } => {
                let k = *degree as usize;
                let j = k - 1 - lap;
                let phi = (2.0 * y - 1.0).clamp(-1.0, 1.0).acos();
                let k_theta = if j.is_multiple_of(2) {
                    j as f64 * PI + phi
                } else {
                    (j + 1) as f64 * PI - phi
                };
                0.5 * (1.0 + (k_theta / k as f64).cos())
            }
        };
        x.clamp(l.lo, l.hi)
    }

    /// Exact affine laps, available for the piecewise-linear families.
    pub fn exact_laps(&self) -> Option<Vec<ExactLap>> {
        let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        match &self.family {
            Family::Doubling | Family::Tripling => {
                let k = self.laps.len() as i64;
                Some(
                    (0..k)
                        .map(|j| ExactLap {
                            lo: q(j, k),
                            hi: q(j + 1, k),
                            slope: q(k, 1),
                            intercept: q(-j, 1),
                        })
                        .collect(),
                )
            }
            Family::Tent { slope } => {
                let s = rational_from_f64(*slope);
                Some(vec![
                    ExactLap {
                        lo: q(0, 1),
                        hi: q(1, 2),
                        slope: s.clone(),
                        intercept: q(0, 1),
                    },
                    ExactLap {
                        lo: q(1, 2),
                        hi: q(1, 1),
                        slope: -s.clone(),
                        intercept: s,
                    },
                ])
            }
            Family::PiecewiseLinear(branches) => Some(
                branches
                    .iter()
                    .map(|b| {
                        let slope = b.slope_exact();
                        let intercept = &b.image_lo - &slope * &b.lo;
                        ExactLap {
                            lo: b.lo.clone(),
                            hi: b.hi.clone(),
                            slope,
                            intercept,
                        }
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// `[x, f(x), ..., f^n(x)]`.
    pub fn orbit(&self, x: f64, n: usize) -> Result<Vec<f64>> {
        Self::check_domain(x)?;
        let mut out = Vec::with_capacity(n + 1);
        let mut y = x;
        out.push(y);
        for _ in 0..n {
            y = self.eval_on(self.lap_index(y), y);
            out.push(y);
        }
        Ok(out)
    }

    /// Orbit in exact rational arithmetic; `None` for families without exact laps.
    pub fn orbit_exact(&self, x: &BigRational, n: usize) -> Option<Vec<BigRational>> {
        let laps = self.exact_laps()?;
        let mut out = Vec::with_capacity(n + 1);
        let mut y = x.clone();
        out.push(y.clone());
        for _ in 0..n {
            let idx = laps.partition_point(|l| l.lo <= y).saturating_sub(1).min(laps.len() - 1);
            y = laps[idx].eval(&y);
            out.push(y.clone());
        }
        Some(out)
    }

    fn critical_distance(&self, x: f64) -> Option<(f64, f64)> {
        self.critical_points
            .iter()
            .map(|c| ((x - c.location).abs(), c.location))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// `S_n log|Df|(x) = sum_{k<n} log|Df(f^k x)|`.
    pub fn birkhoff_log_deriv(&self, x: f64, n: usize) -> Result<f64> {
        let orbit = self.orbit(x, n)?;
        let mut acc = 0.0;
        for (k, &y) in orbit.iter().take(n).enumerate() {
            if let Some((d, c)) = self.critical_distance(y) {
                if d <= CRITICAL_CLEARANCE {
                    return Err(Error::SingularDerivative {
                        point: x,
                        critical: c,
                        step: k,
                        distance: d,
                    });
                }
            }
            acc += self.deriv_on(self.lap_index(y), y).abs().ln();
        }
        Ok(acc)
    }

    /// Pulls `y` back through `itinerary` (last lap first).
    pub fn pullback(&self, itinerary: &[usize], y: f64) -> f64 {
        itinerary
            .iter()
            .rev()
            .fold(y, |acc, &lap| self.inverse_on(lap, acc))
    }

    /// `f^n` along `itinerary`, using each lap's formula.
    pub fn forward_along(&self, itinerary: &[usize], x: f64) -> f64 {
        itinerary.iter().fold(x, |acc, &lap| self.eval_on(lap, acc))
    }

    /// `log|D f^n|` along `itinerary` starting at `x`.
    pub fn log_deriv_along(&self, itinerary: &[usize], x: f64) -> f64 {
        let mut y = x;
        let mut acc = 0.0;
        for &lap in itinerary {
            acc += self.deriv_on(lap, y).abs().ln();
            y = self.eval_on(lap, y);
        }
        acc
    }

    /// Laps of `f^n`, sorted by left endpoint.
    pub fn iterate_laps(&self, n: usize) -> Vec<IteratedLap> {
        assert!(n >= 1, "iterate_laps needs n >= 1");
        let mut current: Vec<IteratedLap> = self
            .laps
            .iter()
            .enumerate()
            .map(|(i, l)| IteratedLap {
                lo: l.lo,
                hi: l.hi,
                itinerary: vec![i],
                image_at_lo: self.eval_on(i, l.lo),
                image_at_hi: self.eval_on(i, l.hi),
            })
            .collect();
        for _ in 1..n {
            let mut next = Vec::with_capacity(current.len() * self.laps.len());
            for piece in &current {
                let (jlo, jhi) = ordered(piece.image_at_lo, piece.image_at_hi);
                for (li, lap) in self.laps.iter().enumerate() {
                    let klo = jlo.max(lap.lo);
                    let khi = jhi.min(lap.hi);
                    if khi <= klo {
                        continue;
                    }
                    let xa = self.pullback(&piece.itinerary, klo);
                    let xb = self.pullback(&piece.itinerary, khi);
                    let ya = self.eval_on(li, klo);
                    let yb = self.eval_on(li, khi);
                    let mut itinerary = piece.itinerary.clone();
                    itinerary.push(li);
                    let (lo, hi, ilo, ihi) = if xa <= xb {
                        (xa, xb, ya, yb)
                    } else {
                        (xb, xa, yb, ya)
                    };
                    if hi > lo {
                        next.push(IteratedLap {
                            lo,
                            hi,
                            itinerary,
                            image_at_lo: ilo,
                            image_at_hi: ihi,
                        });
                    }
                }
            }
            next.sort_by(|a, b| a.lo.total_cmp(&b.lo));
            current = next;
        }
        current
    }

    /// All repelling points of prime period `p`, found by sign-change bisection of
    /// `f^p(x) - x` on each lap of `f^p`.
    pub fn periodic_points(&self, p: usize, tol: f64) -> Result<Vec<PeriodicOrbit>> {
        if p == 0 {
            return Err(Error::Precondition("period must be at least 1".into()));
        }
        let mut roots: Vec<f64> = Vec::new();
        for lap in self.iterate_laps(p) {
            let g = |x: f64| self.forward_along(&lap.itinerary, x) - x;
            if let Some(mut z) = bisect(g, lap.lo, lap.hi, tol * 1e-3) {
                // polish by the contracting inverse iteration
                for _ in 0..8 {
                    let next = self.pullback(&lap.itinerary, z).clamp(lap.lo, lap.hi);
                    if (next - z).abs() == 0.0 {
                        break;
                    }
                    z = next;
                }
                roots.push(z);
            }
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-10);
        if self.is_circle_like() && roots.first() == Some(&0.0) {
            roots.retain(|&z| z != 1.0);
        }
        let mut out = Vec::new();
        for z in roots {
            let orbit = self.orbit(z, p)?;
            let residual = (orbit[p] - z).abs();
            let mut multiplier = 1.0;
            for &y in &orbit[..p] {
                multiplier *= self.deriv(y)?;
            }
            if residual > tol * multiplier.abs().max(1.0) {
                continue;
            }
            let prime = (1..p)
                .filter(|q| p.is_multiple_of(*q))
                .all(|q| (orbit[q] - z).abs() > 1e-9);
            if !prime {
                continue;
            }
            if multiplier.abs() < 1.0 + tol {
                log::warn!("excluding non-hyperbolic period-{p} point {z} (multiplier {multiplier})");
                continue;
            }
            out.push(PeriodicOrbit {
                point: z,
                period: p,
                multiplier,
                lyapunov: multiplier.abs().ln() / p as f64,
            });
        }
        Ok(out)
    }

    /// Collet–Eckmann growth and slow recurrence along each critical orbit up to the horizon.
    pub fn check_collet_eckmann(&self, params: &ConditionParams) -> Result<ConditionReport> {
        let mut report = ConditionReport::new("C2", params.horizon);
        if self.critical_points.is_empty() {
            report.notes.push("empty critical set: vacuous pass".into());
            return Ok(report);
        }
        params.validate(self.max_critical_order().unwrap_or(2.0))?;
        if params.theta_is_default() {
            report
                .notes
                .push("theta_c defaulted to big_lambda / (10 * order)".into());
        }
        for c in &self.critical_points {
            let theta = params.theta_for(c.order);
            let orbit = self.orbit(c.location, params.horizon)?;
            let mut entry = ConditionEntry::new(c.location);
            let mut log_growth = 0.0;
            let mut min_rate = f64::INFINITY;
            let mut min_ratio = f64::INFINITY;
            let mut witness = None;
            for k in 1..=params.horizon {
                let x = orbit[k];
                let (dist, _) = self.critical_distance(x).expect("critical set non-empty");
                if dist <= CRITICAL_CLEARANCE {
                    entry.pass = false;
                    witness = Some(k);
                    min_ratio = 0.0;
                    min_rate = f64::NEG_INFINITY;
                    break;
                }
                let ratio = (theta * k as f64).exp() * dist / params.delta0;
                if ratio < min_ratio {
                    min_ratio = ratio;
                    if ratio <= 1.0 {
                        witness.get_or_insert(k);
                    }
                }
                // growth |Df^k(f c)| uses orbit[1..=k]
                log_growth += self.deriv(x)?.abs().ln();
                let rate = log_growth / k as f64;
                if rate < min_rate {
                    min_rate = rate;
                }
                if rate < params.big_lambda {
                    witness.get_or_insert(k);
                }
            }
            entry.min_growth_rate = Some(min_rate);
            entry.min_clearance_ratio = Some(min_ratio);
            entry.pass &= min_rate >= params.big_lambda && min_ratio > 1.0;
            entry.witness_step = witness;
            report.push(entry);
        }
        Ok(report)
    }

    /// Sampled check of expansion outside the critical neighbourhood, on orbit
    /// segments of up to `horizon` steps from `samples` evenly spaced points.
    /// Returns the worst margin `log|Df^n(x)| - (gamma n + log kappa + (l_max - 1) log delta)`.
    pub fn check_expansion_sampled(&self, params: &ConditionParams, samples: usize) -> Result<ConditionReport> {
        let mut report = ConditionReport::new("C1", params.horizon);
        report
            .notes
            .push("sampled orbit segments only; a diagnostic, not a proof".into());
        let l_max = self.max_critical_order().unwrap_or(1.0);
        let floor_const = params.kappa.ln() + (l_max - 1.0) * params.delta0.ln();
        let mut worst = f64::INFINITY;
        let mut worst_point = 0.0;
        let mut worst_step = 0;
        for s in 0..samples {
            let x0 = (s as f64 + 0.5) / samples as f64;
            let mut x = x0;
            let mut acc = 0.0;
            for n in 1..=params.horizon {
                if self
                    .critical_distance(x)
                    .is_some_and(|(d, _)| d < params.delta0)
                {
                    break;
                }
                acc += self.deriv(x)?.abs().ln();
                x = self.eval(x)?;
                let margin = acc - (params.gamma * n as f64 + floor_const);
                if margin < worst {
                    worst = margin;
                    worst_point = x0;
                    worst_step = n;
                }
            }
        }
        let mut entry = ConditionEntry::new(worst_point);
        entry.min_growth_rate = Some(worst);
        entry.witness_step = Some(worst_step);
        entry.pass = worst >= 0.0;
        report.push(entry);
        Ok(report)
    }
}

/// `lambda(z) = log|Df^p(z)| / p` for a periodic orbit.
pub fn lyapunov_at_periodic(orbit: &PeriodicOrbit) -> f64 {
    orbit.multiplier.abs().ln() / orbit.period as f64
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn chebyshev_t(k: u32, u: f64) -> f64 {
    let (mut t0, mut t1) = (1.0, u);
    if k == 0 {
        return t0;
    }
    for _ in 1..k {
        let t2 = 2.0 * u * t1 - t0;
        t0 = t1;
        t1 = t2;
    }
    t1
}

fn chebyshev_u(k: i64, u: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let (mut u0, mut u1) = (1.0, 2.0 * u);
    if k == 0 {
        return u0;
    }
    for _ in 1..k {
        let u2 = 2.0 * u * u1 - u0;
        u0 = u1;
        u1 = u2;
    }
    u1
}

/// Parses a branch table: one `a b c d` line per affine branch `[a, b] -> [c, d]`.
/// Blank lines and `#` comments are ignored; numbers may be decimals or `p/q`.
pub fn parse_branch_table(text: &str) -> Result<Vec<AffineBranch>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "branch table line {}: expected 4 numbers, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let vals = fields
            .iter()
            .map(|f| parse_rational(f))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Parse(format!("branch table line {}: {e}", lineno + 1)))?;
        let [a, b, c, d]: [BigRational; 4] = vals.try_into().expect("four fields");
        out.push(AffineBranch::new(a, b, c, d)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn golden_mean_map() -> IntervalMap {
        let a = (5f64.sqrt() - 1.0) / 2.0;
        IntervalMap::piecewise_linear(vec![
            AffineBranch::from_f64(0.0, a, 0.0, 1.0).unwrap(),
            AffineBranch::from_f64(a, 1.0, 0.0, a).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn eval_and_deriv_examples() {
        let f = IntervalMap::logistic(4.0).unwrap();
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.deriv(0.75).unwrap(), -2.0);
        let d = IntervalMap::doubling();
        for x in [0.0, 0.1, 0.3, 0.7, 0.99] {
            assert_eq!(d.deriv(x).unwrap(), 2.0);
        }
        assert!(matches!(f.eval(1.5), Err(Error::Domain(_))));
        assert!(matches!(f.deriv(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn orbit_examples() {
        let f = IntervalMap::logistic(4.0).unwrap();
        assert_eq!(f.orbit(0.5, 3).unwrap(), vec![0.5, 1.0, 0.0, 0.0]);
        let d = IntervalMap::doubling();
        let o = d.orbit(1.0 / 3.0, 2).unwrap();
        assert_relative_eq!(o[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(o[2], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(d.orbit(0.3, 0).unwrap(), vec![0.3]);
    }

    #[test]
    fn exact_orbit_stays_rational() {
        let d = IntervalMap::doubling();
        let third = BigRational::new(1.into(), 3.into());
        let orbit = d.orbit_exact(&third, 100).unwrap();
        assert_eq!(orbit[100], third);
        assert_eq!(orbit[99], BigRational::new(2.into(), 3.into()));
    }

    #[test]
    fn birkhoff_examples() {
        let d = IntervalMap::doubling();
        assert_relative_eq!(d.birkhoff_log_deriv(1.0 / 3.0, 2).unwrap(), 2.0 * LN_2, epsilon = 1e-12);
        let f = IntervalMap::logistic(4.0).unwrap();
        assert_relative_eq!(f.birkhoff_log_deriv(0.75, 1).unwrap(), LN_2, epsilon = 1e-12);
        let t = IntervalMap::tripling();
        assert_relative_eq!(t.birkhoff_log_deriv(0.123, 3).unwrap(), 3.0 * 3f64.ln(), epsilon = 1e-12);
        assert!(matches!(
            f.birkhoff_log_deriv(0.5, 2),
            Err(Error::SingularDerivative { step: 0, .. })
        ));
    }

    #[test]
    fn periodic_point_examples() {
        let d = IntervalMap::doubling();
        let p2 = d.periodic_points(2, 1e-12).unwrap();
        assert_eq!(p2.len(), 2);
        assert_relative_eq!(p2[0].point, 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p2[1].point, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(p2[0].multiplier, 4.0);

        let f = IntervalMap::logistic(4.0).unwrap();
        let p1: Vec<f64> = f.periodic_points(1, 1e-12).unwrap().iter().map(|o| o.point).collect();
        assert_eq!(p1.len(), 2);
        assert!(p1[0].abs() < 1e-12);
        assert_relative_eq!(p1[1], 0.75, epsilon = 1e-12);

        let t = IntervalMap::tripling();
        let p1: Vec<f64> = t.periodic_points(1, 1e-12).unwrap().iter().map(|o| o.point).collect();
        assert_eq!(p1, vec![0.0, 0.5]);
    }

    #[test]
    fn doubling_periodic_counts() {
        // points of period dividing p, with 0 ~ 1: 2^p - 1
        let d = IntervalMap::doubling();
        for p in 1..=8usize {
            let total: usize = (1..=p)
                .filter(|q| p % q == 0)
                .map(|q| d.periodic_points(q, 1e-12).unwrap().len())
                .sum();
            assert_eq!(total, (1usize << p) - 1, "p = {p}");
        }
    }

    #[test]
    fn lyapunov_examples() {
        let d = IntervalMap::doubling();
        let o = d.periodic_points(2, 1e-12).unwrap()[0];
        assert_relative_eq!(lyapunov_at_periodic(&o), LN_2, epsilon = 1e-12);
        let f = IntervalMap::logistic(4.0).unwrap();
        let fixed = f.periodic_points(1, 1e-12).unwrap()[1];
        assert_relative_eq!(lyapunov_at_periodic(&fixed), LN_2, epsilon = 1e-12);
        let t = IntervalMap::tripling();
        let half = t.periodic_points(1, 1e-12).unwrap()[1];
        assert_relative_eq!(lyapunov_at_periodic(&half), 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn collet_eckmann_logistic_four() {
        let f = IntervalMap::logistic(4.0).unwrap();
        let params = ConditionParams {
            big_lambda: 4f64.ln() - 0.01,
            delta0: 0.1,
            horizon: 50,
            ..ConditionParams::default()
        };
        let r = f.check_collet_eckmann(&params).unwrap();
        assert!(r.pass, "{r:?}");
        assert_relative_eq!(r.entries[0].min_growth_rate.unwrap(), 4f64.ln(), epsilon = 1e-12);
        // dist(f^k(c), c) = 1/2 for every k >= 1
        let theta = params.theta_for(2.0);
        assert_relative_eq!(r.entries[0].min_clearance_ratio.unwrap(), (theta).exp() * 0.5 / 0.1, epsilon = 1e-12);

        let d = IntervalMap::doubling();
        let r = d.check_collet_eckmann(&params).unwrap();
        assert!(r.pass && r.entries.is_empty());
    }

    #[test]
    fn collet_eckmann_failure_persists() {
        // superattracting: the critical orbit sits on the critical point
        let f = IntervalMap::logistic(2.0).unwrap(); // f(1/2) = 1/2
        let params = ConditionParams {
            horizon: 5,
            ..ConditionParams::default()
        };
        let r = f.check_collet_eckmann(&params).unwrap();
        assert!(!r.pass);
        assert_eq!(r.entries[0].witness_step, Some(1));
        for n in [6, 20, 80] {
            let r = f
                .check_collet_eckmann(&ConditionParams {
                    horizon: n,
                    ..params.clone()
                })
                .unwrap();
            assert!(!r.pass);
        }
    }

    #[test]
    fn inverse_branches_invert() {
        let maps = [
            IntervalMap::logistic(4.0).unwrap(),
            IntervalMap::logistic(3.7).unwrap(),
            IntervalMap::tent(1.8).unwrap(),
            IntervalMap::doubling(),
            IntervalMap::tripling(),
            IntervalMap::chebyshev(3).unwrap(),
            IntervalMap::chebyshev(2).unwrap(),
            golden_mean_map(),
        ];
        for f in &maps {
            for (i, lap) in f.laps().iter().enumerate() {
                for k in 1..20 {
                    let x = lap.lo + (lap.hi - lap.lo) * k as f64 / 20.0;
                    let y = f.eval_on(i, x);
                    let back = f.inverse_on(i, y);
                    assert!((back - x).abs() < 1e-9, "{} lap {i}: {x} -> {y} -> {back}", f.spec_string());
                }
            }
        }
    }

    #[test]
    fn chebyshev_three_is_bimodal() {
        let f = IntervalMap::chebyshev(3).unwrap();
        assert_eq!(f.critical_points().len(), 2);
        assert_relative_eq!(f.critical_points()[0].location, 0.25, epsilon = 1e-15);
        assert_relative_eq!(f.eval(0.25).unwrap(), 1.0, epsilon = 1e-15);
        assert!(f.eval(0.75).unwrap().abs() < 1e-15);
        assert!(f.deriv(0.25).unwrap().abs() < 1e-12);
    }

    #[test]
    fn parses_specs_and_branch_tables() {
        assert_eq!(IntervalMap::parse_spec("logistic:4.0", None).unwrap(), IntervalMap::logistic(4.0).unwrap());
        assert_eq!(IntervalMap::parse_spec("doubling", None).unwrap(), IntervalMap::doubling());
        assert!(IntervalMap::parse_spec("tent:2.0", None).is_ok());
        assert!(IntervalMap::parse_spec("henon", None).is_err());
        assert!(IntervalMap::parse_spec("logistic:5", None).is_err());
        let table = "# golden mean style\n0 1/2 0 1\n1/2 3/4 0 1\n3/4 1 1 0\n";
        let branches = parse_branch_table(table).unwrap();
        let f = IntervalMap::piecewise_linear(branches).unwrap();
        assert_eq!(f.laps().len(), 3);
        assert!(!f.laps()[2].increasing);
        assert!(parse_branch_table("0 1 0").is_err());
        // slope 1 is rejected
        let flat = parse_branch_table("0 1 0 1").unwrap();
        assert!(IntervalMap::piecewise_linear(flat).is_err());
    }

    #[test]
    fn exact_laps_match_float_laps() {
        let f = golden_mean_map();
        let exact = f.exact_laps().unwrap();
        for (lap, e) in f.laps().iter().zip(&exact) {
            assert_relative_eq!(lap.slope.unwrap(), rational_to_f64(&e.slope), epsilon = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn deriv_matches_finite_difference(x in 0.01f64..0.99, which in 0usize..5) {
            let f = [
                IntervalMap::logistic(4.0).unwrap(),
                IntervalMap::logistic(3.83).unwrap(),
                IntervalMap::chebyshev(3).unwrap(),
                IntervalMap::tent(1.7).unwrap(),
                IntervalMap::tripling(),
            ][which].clone();
            let near_cut = f.lap_cuts().iter().any(|c| (x - c).abs() < 1e-3);
            proptest::prop_assume!(!near_cut);
            let h = 1e-6;
            let fd = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
            let d = f.deriv(x).unwrap();
            proptest::prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-3), "{fd} vs {d}");
        }

        #[test]
        fn plm_birkhoff_is_sum_of_slopes(x in 0.0f64..1.0, n in 1usize..12) {
            let f = golden_mean_map();
            let orbit = f.orbit(x, n).unwrap();
            let expected: f64 = orbit[..n]
                .iter()
                .map(|&y| f.laps()[f.lap_index(y)].slope.unwrap().abs().ln())
                .sum();
            proptest::prop_assert!((f.birkhoff_log_deriv(x, n).unwrap() - expected).abs() < 1e-12);
        }
    }
}
