//! Inducing schemes over a base interval: full branches onto the base, their
//! inducing-time tail, distortion and return-time statistics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{Family, IntervalMap};
use crate::numeric::{g12, linear_fit};
use crate::open_system::{Hole, OpenSystem};
use crate::spectral::GridMeasure;

/// Chebyshev nodes per branch in the distortion estimate.
pub const DISTORTION_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InducingOptions {
    pub depth: usize,
    pub budget: usize,
    pub min_width: f64,
}

impl Default for InducingOptions {
    fn default() -> Self {
        Self {
            depth: 40,
            budget: 1_000_000,
            min_width: 1e-15,
        }
    }
}

/// A domain interval mapped by `f^tau` monotonically onto the base.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub domain: (f64, f64),
    pub tau: usize,
    pub itinerary: Vec<usize>,
    /// Some image `f^k(domain)`, `k < tau`, lies in the hole.
    pub hole_visit: bool,
}

/// A piece still waiting for a full return when the construction stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Unresolved {
    pub domain: (f64, f64),
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InducedScheme {
    pub base: (f64, f64),
    pub branches: Vec<Branch>,
    pub unresolved: Vec<Unresolved>,
    pub options: InducingOptions,
    pub pieces: usize,
    /// The piece budget ran out; the remaining pieces are listed as unresolved.
    pub partial: bool,
}

/// Heap entry: widest domain first, then insertion order.
struct Queued {
    width: f64,
    order: u64,
    piece: Piece,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.width
            .total_cmp(&other.width)
            .then_with(|| other.order.cmp(&self.order))
    }
}

#[derive(Debug, Clone)]
struct Piece {
    image: (f64, f64),
    itinerary: Vec<usize>,
    hole_visit: bool,
}

/// A base interval around the orientation-reversing fixed point of smooth families,
/// clear of the critical orbit; the left half otherwise.
pub fn default_base(map: &IntervalMap) -> (f64, f64) {
    match map.family() {
        Family::Logistic { lambda } => (0.52, (lambda / 4.0 - 0.02).min(0.98)),
        Family::Chebyshev { .. } => (0.52, 0.98),
        _ => (0.0, 0.5),
    }
}

/// Builds the scheme widest piece first, up to `budget` pieces: images are cut at lap boundaries and hole
/// boundaries, and a piece whose image covers the base emits the branch onto the base
/// while the parts of the image outside the base keep going.
pub fn induce(sys: &OpenSystem, base: (f64, f64), opts: &InducingOptions) -> Result<InducedScheme> {
    let (x0, x1) = base;
    if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0) {
        return Err(Error::Precondition(format!("base [{x0}, {x1}] is not a subinterval of [0, 1]")));
    }
    if opts.depth == 0 {
        return Err(Error::Precondition("inducing depth must be positive".into()));
    }
    let f = sys.map();
    let hole = sys.hole();
    if hole.components().iter().any(|c| c.lo < x1 && c.hi > x0) {
        return Err(Error::Precondition(format!("base [{x0}, {x1}] meets the hole")));
    }
    let mut cuts: Vec<f64> = f.lap_cuts();
    cuts.extend(hole.boundary());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut scheme = InducedScheme {
        base,
        branches: Vec::new(),
        unresolved: Vec::new(),
        options: *opts,
        pieces: 0,
        partial: false,
    };
    let domain_of = |p: &Piece| -> (f64, f64) {
        let a = f.pullback(&p.itinerary, p.image.0);
        let b = f.pullback(&p.itinerary, p.image.1);
        (a.min(b), a.max(b))
    };
    let mut queue = BinaryHeap::new();
    queue.push(Queued {
        width: x1 - x0,
        order: 0,
        piece: Piece {
            image: base,
            itinerary: Vec::new(),
            hole_visit: false,
        },
    });
    let mut order = 0u64;
    while let Some(Queued { piece, .. }) = queue.pop() {
        let depth = piece.itinerary.len() + 1;
        scheme.pieces += 1;
        if scheme.pieces > opts.budget {
            scheme.partial = true;
            scheme.unresolved.push(Unresolved {
                domain: domain_of(&piece),
                depth: depth - 1,
            });
            scheme.unresolved.extend(queue.drain().map(|q| Unresolved {
                domain: domain_of(&q.piece),
                depth: q.piece.itinerary.len(),
            }));
            break;
        }
        let (a, b) = piece.image;
        let mut ends = vec![a];
        ends.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
        ends.push(b);
        for w in ends.windows(2) {
            let (c, d) = (w[0], w[1]);
            if d <= c {
                continue;
            }
            let mid = 0.5 * (c + d);
            let lap = f.lap_index(mid);
            let (u, v) = (f.eval_on(lap, c), f.eval_on(lap, d));
            let mut itinerary = piece.itinerary.clone();
            itinerary.push(lap);
            let child = Piece {
                image: (u.min(v), u.max(v)),
                itinerary,
                hole_visit: piece.hole_visit || hole.contains(mid),
            };
            let (lo, hi) = child.image;
            let rest: Vec<(f64, f64)> = if lo <= x0 && hi >= x1 {
                let onto = Piece { image: base, ..child.clone() };
                scheme.branches.push(Branch {
                    domain: domain_of(&onto),
                    tau: depth,
                    itinerary: onto.itinerary,
                    hole_visit: child.hole_visit,
                });
                [(lo, x0), (x1, hi)].into_iter().filter(|(p, q)| q > p).collect()
            } else {
                vec![(lo, hi)]
            };
            for image in rest {
                let p = Piece { image, ..child.clone() };
                let dom = domain_of(&p);
                if dom.1 - dom.0 < opts.min_width || depth == opts.depth {
                    scheme.unresolved.push(Unresolved { domain: dom, depth });
                } else {
                    order += 1;
                    queue.push(Queued {
                        width: dom.1 - dom.0,
                        order,
                        piece: p,
                    });
                }
            }
        }
    }
    scheme.branches.sort_by(|p, q| p.domain.0.total_cmp(&q.domain.0));
    scheme.unresolved.sort_by(|p, q| p.domain.0.total_cmp(&q.domain.0));
    Ok(scheme)
}

/// Exponential fit `m_t(τ > n) / m_t(X) <= C_0 e^{-α n}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    /// `m_t(τ > n) / m_t(X)` for `n = 0..=depth`.
    pub tail: Vec<f64>,
    pub alpha: f64,
    pub c0: f64,
    pub window: (usize, usize),
    pub r_squared: f64,
    /// `m_t` of the unresolved pieces relative to `m_t(X)`.
    pub unresolved_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    /// `max |e^{S_τ φ_t(x) - S_τ φ_t(y)} - 1| / |F(x) - F(y)|` over node pairs of each branch.
    pub constant: f64,
    pub worst_tau: Option<usize>,
    /// Per-branch worst ratio, in branch order.
    pub per_branch: Vec<f64>,
}

impl TailReport {
    /// CSV `n,mass`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,mass")?;
        for (n, v) in self.tail.iter().enumerate() {
            writeln!(out, "{n},{}", g12(*v))?;
        }
        Ok(())
    }
}

impl InducedScheme {
    fn base_mass(&self, m: &GridMeasure) -> Result<f64> {
        let z = m.mass_in(self.base.0, self.base.1);
        if z <= 0.0 {
            return Err(Error::Precondition("base interval carries no mass".into()));
        }
        Ok(z)
    }

    pub fn unresolved_mass(&self, m: &GridMeasure) -> Result<f64> {
        let z = self.base_mass(m)?;
        Ok(self.unresolved.iter().map(|u| m.mass_in(u.domain.0, u.domain.1)).sum::<f64>() / z)
    }

    /// Tail of the inducing time under `m` and its exponential rate, fitted on
    /// `[n_hi/3, n_hi]` where `n_hi` is the last depth whose tail exceeds ten times
    /// the unresolved mass.
    pub fn tail(&self, m: &GridMeasure) -> Result<TailReport> {
        let z = self.base_mass(m)?;
        let depth = self.options.depth;
        let unresolved = self.unresolved_mass(m)?;
        let mut by_tau = vec![0.0; depth + 2];
        for b in &self.branches {
            by_tau[b.tau] += m.mass_in(b.domain.0, b.domain.1) / z;
        }
        let mut tail = vec![0.0; depth + 1];
        let mut acc = unresolved;
        for n in (0..=depth).rev() {
            acc += by_tau[n + 1];
            tail[n] = acc;
        }
        // stop where the unresolved floor would flatten the fit
        let n_hi = tail
            .iter()
            .rposition(|&v| v > 0.0 && v >= 10.0 * unresolved)
            .unwrap_or(0);
        let n_lo = n_hi / 3;
        if n_hi < n_lo + 4 {
            return Err(Error::InsufficientData(format!(
                "tail vanishes after {n_hi} steps; fewer than 5 fit points"
            )));
        }
        let xs: Vec<f64> = (n_lo..=n_hi).map(|n| n as f64).collect();
        let ys: Vec<f64> = (n_lo..=n_hi).map(|n| tail[n].ln()).collect();
        let fit = linear_fit(&xs, &ys).expect("five points");
        let alpha = -fit.slope;
        if alpha <= 0.0 {
            return Err(Error::InsufficientData(format!(
                "tail does not decay (fitted rate {alpha})"
            )));
        }
        let c0 = tail
            .iter()
            .enumerate()
            .map(|(n, v)| v * (alpha * n as f64).exp())
            .fold(0.0, f64::max);
        Ok(TailReport {
            tail,
            alpha,
            c0,
            window: (n_lo, n_hi),
            r_squared: fit.r_squared,
            unresolved_mass: unresolved,
        })
    }

    /// Distortion of `e^{S_τ φ_t}` with `φ_t = -t log|Df|` over pairs of Chebyshev
    /// nodes of the base pulled back along each branch. Sums are kept in log space.
    pub fn distortion(&self, map: &IntervalMap, t: f64) -> DistortionReport {
        let (x0, x1) = self.base;
        let nodes: Vec<f64> = (0..DISTORTION_NODES)
            .map(|k| {
                let c = ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * DISTORTION_NODES) as f64).cos();
                0.5 * (x0 + x1) + 0.5 * (x1 - x0) * c
            })
            .collect();
        let exact = t == 0.0 || map.is_piecewise_linear();
        let per_branch: Vec<f64> = self
            .branches
            .par_iter()
            .map(|b| {
                if exact {
                    return 0.0;
                }
                let phi: Vec<f64> = nodes
                    .iter()
                    .map(|&y| -t * map.log_deriv_along(&b.itinerary, map.pullback(&b.itinerary, y)))
                    .collect();
                let mut worst: f64 = 0.0;
                for i in 0..nodes.len() {
                    for j in i + 1..nodes.len() {
                        let r = (phi[i] - phi[j]).exp_m1().abs() / (nodes[i] - nodes[j]).abs();
                        worst = worst.max(r);
                    }
                }
                worst
            })
            .collect();
        let (constant, worst_tau) = per_branch
            .iter()
            .zip(&self.branches)
            .fold((0.0, None), |(c, w), (&r, b)| if r > c { (r, Some(b.tau)) } else { (c, w) });
        DistortionReport {
            constant,
            worst_tau,
            per_branch,
        }
    }

    /// Mass of branches whose orbit meets the hole before returning, relative to `m(X)`.
    pub fn escaped_mass(&self, m: &GridMeasure) -> Result<f64> {
        let z = self.base_mass(m)?;
        Ok(self
            .branches
            .iter()
            .filter(|b| b.hole_visit)
            .map(|b| m.mass_in(b.domain.0, b.domain.1))
            .sum::<f64>()
            / z)
    }

    /// `|X| - Σ|X_i| - |unresolved|` in Lebesgue measure; zero up to rounding.
    pub fn lebesgue_defect(&self) -> f64 {
        let len = |d: (f64, f64)| d.1 - d.0;
        self.base.1 - self.base.0
            - self.branches.iter().map(|b| len(b.domain)).sum::<f64>()
            - self.unresolved.iter().map(|u| len(u.domain)).sum::<f64>()
    }

    /// `h(ν) / ∫τ dν` for the induced Bernoulli measure `ν(X_i) ∝ |X_i|` on the
    /// resolved branches, with `h(ν) = -Σ ν_i log ν_i`.
    pub fn abramov_ratio(&self) -> f64 {
        let total: f64 = self.branches.iter().map(|b| b.domain.1 - b.domain.0).sum();
        let (h, mean_tau) = self.branches.iter().fold((0.0, 0.0), |(h, m), b| {
            let nu = (b.domain.1 - b.domain.0) / total;
            if nu > 0.0 {
                (h - nu * nu.ln(), m + nu * b.tau as f64)
            } else {
                (h, m)
            }
        });
        h / mean_tau
    }

    /// `Σ_branches τ μ(branch)`; equals one for a first-return scheme of an ergodic
    /// invariant `μ` once nothing is left unresolved.
    pub fn abramov_sum(&self, mu: &GridMeasure) -> f64 {
        self.branches
            .iter()
            .map(|b| b.tau as f64 * mu.mass_in(b.domain.0, b.domain.1))
            .sum()
    }

    /// Number of branches with `τ = n` for `n = 1..=depth` (index `n - 1`).
    pub fn tau_histogram(&self) -> Vec<u128> {
        let mut h = vec![0u128; self.options.depth];
        for b in &self.branches {
            h[b.tau - 1] += 1;
        }
        h
    }

    /// Header `# base`, `# hole`, `# depth`, `# unresolved_mass` (Lebesgue), then `lo hi tau`
    /// per branch.
    pub fn write_text<W: Write>(&self, mut out: W, hole: &Hole) -> std::io::Result<()> {
        let unresolved: f64 = self.unresolved.iter().map(|u| u.domain.1 - u.domain.0).sum::<f64>()
            / (self.base.1 - self.base.0);
        writeln!(out, "# base {} {}", g12(self.base.0), g12(self.base.1))?;
        writeln!(out, "# hole {}", hole.to_spec_string())?;
        writeln!(out, "# depth {}", self.options.depth)?;
        writeln!(out, "# unresolved_mass {}", g12(unresolved))?;
        for b in &self.branches {
            writeln!(out, "{} {} {}", g12(b.domain.0), g12(b.domain.1), b.tau)?;
        }
        Ok(())
    }

    /// Branches whose orbit stays out of the hole until `τ`.
    pub fn surviving_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| !b.hole_visit)
    }
}
