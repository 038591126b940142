//! Escape-rate estimators independent of the eigenvalue route, the survivor-set
//! equilibrium measure and the variational check against the exact subshift.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, LineFit};
use crate::open_system::OpenSystem;
use crate::sft::{sft_pressure, SftModel};
use crate::spectral::{ClosedSolution, GridMeasure, PuncturedSolution};

/// Samples per seeded Monte Carlo block.
pub const MC_BLOCK: usize = 65_536;
/// Minimal survivor count at the end of the Monte Carlo window.
pub const MC_MIN_SURVIVORS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeMethod {
    Spectral,
    DirectFit,
    MonteCarlo,
}

/// An escape-rate estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeEstimate {
    pub method: EscapeMethod,
    pub rate: f64,
    pub stderr: f64,
    pub window: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    /// Cell count of the grid, for grid-based methods.
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

impl EscapeEstimate {
    pub fn spectral(p: &PuncturedSolution) -> Self {
        Self {
            method: EscapeMethod::Spectral,
            rate: p.escape_rate,
            stderr: p.spectrum.residual_right.max(p.spectrum.residual_left),
            window: None,
            r_squared: None,
            grid: Some(p.op.dim()),
            samples: None,
            seed: None,
        }
    }
}

/// `log m_t(I^n)` for `n = 0..=n_max`, from `m_t(I^n) = w^T M_H^n 1_{I \ H} e^{-n p_t}`.
pub fn log_survivor_masses(closed: &ClosedSolution, punctured: &PuncturedSolution, n_max: usize) -> Vec<f64> {
    let m = closed.conformal_measure();
    let p = closed.pressure();
    let mut u: Vec<f64> = punctured
        .op
        .hole_cells()
        .iter()
        .map(|&h| if h { 0.0 } else { 1.0 })
        .collect();
    let mut next = vec![0.0; u.len()];
    let mut log_scale = 0.0;
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mass = m.integrate(&u);
        out.push(if mass > 0.0 {
            mass.ln() + log_scale - n as f64 * p
        } else {
            f64::NEG_INFINITY
        });
        if n < n_max {
            punctured.op.matrix().mul_vec(&u, &mut next);
            let s: f64 = next.iter().sum();
            if s > 0.0 {
                for x in next.iter_mut() {
                    *x /= s;
                }
                log_scale += s.ln();
            }
            std::mem::swap(&mut u, &mut next);
        }
    }
    out
}

/// Least-squares slope of `-log m_t(I^n)` over the latest window that is linear to
/// `R² >= 0.999` with at least ten points; the window starts at `[n_max/2, n_max]`
/// and moves its left end forward until the fit qualifies.
pub fn escape_direct(closed: &ClosedSolution, punctured: &PuncturedSolution, n_max: usize) -> Result<EscapeEstimate> {
    let logs = log_survivor_masses(closed, punctured, n_max);
    let finite = logs.iter().take_while(|v| v.is_finite()).count();
    if finite < 10 {
        return Err(Error::InsufficientData(format!(
            "survivor mass vanishes after {finite} steps; use a smaller hole or fewer steps"
        )));
    }
    let hi = finite - 1;
    let mut lo = (n_max / 2).min(hi.saturating_sub(9));
    loop {
        let xs: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
        let ys: Vec<f64> = (lo..=hi).map(|n| -logs[n]).collect();
        let fit = linear_fit(&xs, &ys).expect("at least two points");
        if fit.r_squared >= 0.999 || hi - lo < 10 {
            if fit.r_squared < 0.999 {
                return Err(Error::InsufficientData(format!(
                    "log survivor mass is not linear on any window ending at {hi} (R² = {:.6})",
                    fit.r_squared
                )));
            }
            return Ok(direct_estimate(fit, lo, hi, closed.grid().len()));
        }
        lo += 1;
    }
}

fn direct_estimate(fit: LineFit, lo: usize, hi: usize, cells: usize) -> EscapeEstimate {
    EscapeEstimate {
        method: EscapeMethod::DirectFit,
        rate: fit.slope.max(0.0),
        stderr: fit.slope_stderr,
        window: Some((lo, hi)),
        r_squared: Some(fit.r_squared),
        grid: Some(cells),
        samples: None,
        seed: None,
    }
}

/// Survivor counts `N_k = #{x : f^j x not in H, j <= k}` for `k = 0..=n` from
/// `samples` uniform starts. Block `b` draws from `ChaCha8(seed)` on stream `b`, so the
/// counts do not depend on the thread count.
pub fn survivor_counts(sys: &OpenSystem, n: usize, samples: usize, seed: u64) -> Vec<u64> {
    let blocks = samples.div_ceil(MC_BLOCK);
    let per_block: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut counts = vec![0u64; n + 1];
            let f = sys.map();
            let hole = sys.hole();
            for _ in 0..count {
                let mut x: f64 = rng.random();
                for c in counts.iter_mut() {
                    if hole.contains(x) {
                        break;
                    }
                    *c += 1;
                    x = f.eval_on(f.lap_index(x), x);
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; n + 1];
    for c in per_block {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
}

/// Lebesgue escape rate by Monte Carlo: `-log(N_hi / N_lo) / (hi - lo)`, where `hi` is the
/// last step with at least 100 survivors and `lo = ceil(0.4 hi)`, with the conditional
/// binomial standard error.
pub fn escape_mc(sys: &OpenSystem, n: usize, samples: usize, seed: u64) -> Result<EscapeEstimate> {
    let base = EscapeEstimate {
        method: EscapeMethod::MonteCarlo,
        rate: 0.0,
        stderr: 0.0,
        window: Some((0, n)),
        r_squared: None,
        grid: None,
        samples: Some(samples),
        seed: Some(seed),
    };
    if sys.hole().is_empty() {
        return Ok(base);
    }
    let counts = survivor_counts(sys, n, samples, seed);
    let Some(hi) = counts.iter().rposition(|&c| c >= MC_MIN_SURVIVORS) else {
        return Err(Error::InsufficientData(format!(
            "fewer than {MC_MIN_SURVIVORS} survivors at every step"
        )));
    };
    let lo = (0.4 * hi as f64).ceil() as usize;
    if hi < 2 || hi - lo < 1 {
        return Err(Error::InsufficientData(format!(
            "survivor window [{lo}, {hi}] too short; raise the sample count"
        )));
    }
    let q = counts[hi] as f64 / counts[lo] as f64;
    let span = (hi - lo) as f64;
    Ok(EscapeEstimate {
        rate: -q.ln() / span,
        stderr: ((1.0 - q) / (counts[lo] as f64 * q)).sqrt() / span,
        window: Some((lo, hi)),
        ..base
    })
}

/// `ν_t^H` on the grid, with the finite-`n` path kept for validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivorMeasure {
    pub measure: GridMeasure,
    /// Set when the measure was produced by the finite-`n` limit formula.
    pub n_used: Option<usize>,
    pub eigenvector_product: bool,
}

/// `ν_t^H(C_i) ∝ w^H_i v^H_i`.
pub fn survivor_equilibrium(punctured: &PuncturedSolution) -> Result<SurvivorMeasure> {
    if punctured.spectrum.is_zero() {
        return Err(Error::Precondition("empty survivor set: no survivor measure".into()));
    }
    let weights = punctured
        .spectrum
        .left
        .iter()
        .zip(&punctured.spectrum.right)
        .map(|(w, v)| w * v)
        .collect();
    Ok(SurvivorMeasure {
        measure: GridMeasure::from_weights(Arc::clone(punctured.op.grid()), weights)?,
        n_used: None,
        eigenvector_product: true,
    })
}

/// `ν_n(C_i) ∝ e^{𝔢 n} ∫_{I^n ∩ C_i} g_t^H dm_t = (w^T M_H^n)_i g_i / ρ_H^n`.
pub fn survivor_equilibrium_finite(
    closed: &ClosedSolution,
    punctured: &PuncturedSolution,
    n: usize,
) -> Result<SurvivorMeasure> {
    if punctured.spectrum.is_zero() {
        return Err(Error::Precondition("empty survivor set: no survivor measure".into()));
    }
    let mut u = closed.conformal_measure().masses().to_vec();
    let mut next = vec![0.0; u.len()];
    for _ in 0..n {
        punctured.op.transpose_matrix().mul_vec(&u, &mut next);
        let s: f64 = next.iter().sum();
        if s <= 0.0 {
            return Err(Error::Precondition("survivor mass vanished".into()));
        }
        for (a, b) in u.iter_mut().zip(&next) {
            *a = b / s;
        }
    }
    let weights = u.iter().zip(&punctured.density).map(|(a, g)| a * g).collect();
    Ok(SurvivorMeasure {
        measure: GridMeasure::from_weights(Arc::clone(punctured.op.grid()), weights)?,
        n_used: Some(n),
        eigenvector_product: false,
    })
}

/// One step of the survivor chain `P(i -> j) = M_H[j][i] w_j / (ρ_H w_i)` applied to `nu`.
pub fn transport_step(punctured: &PuncturedSolution, nu: &[f64]) -> Vec<f64> {
    let w = &punctured.spectrum.left;
    let rho = punctured.spectrum.rho;
    let mut out = vec![0.0; nu.len()];
    for (i, &mass) in nu.iter().enumerate() {
        if mass == 0.0 || w[i] == 0.0 {
            continue;
        }
        for (j, m) in punctured.op.transpose_matrix().row(i) {
            out[j] += mass * m * w[j] / (rho * w[i]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleStatus {
    Ok,
    OracleUnavailable,
}

/// Spectral `p_t - 𝔢(m_t)` against the exact subshift pressure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalReport {
    pub t: f64,
    pub p_t: f64,
    pub escape_rate: f64,
    /// `p_t - 𝔢(m_t) = log ρ_H`.
    pub spectral: f64,
    pub sft: Option<f64>,
    pub gap: Option<f64>,
    /// `h(ν) = P_SFT + t ∫ log|Df| dν`, exact on subshift instances.
    pub entropy: Option<f64>,
    pub lyapunov: Option<f64>,
    pub status: OracleStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn variational_check(sys: &OpenSystem, closed: &ClosedSolution, punctured: &PuncturedSolution) -> Result<VariationalReport> {
    let t = closed.t();
    let spectral = punctured.punctured_pressure();
    let mut report = VariationalReport {
        t,
        p_t: closed.pressure(),
        escape_rate: punctured.escape_rate,
        spectral,
        sft: None,
        gap: None,
        entropy: None,
        lyapunov: None,
        status: OracleStatus::OracleUnavailable,
        note: None,
    };
    match SftModel::build(sys.map(), sys.hole()) {
        Ok(model) => {
            let exact = sft_pressure(&model, t, true);
            report.sft = Some(exact);
            report.gap = Some((spectral - exact).abs());
            report.status = OracleStatus::Ok;
            if !punctured.spectrum.is_zero() {
                let nu = survivor_equilibrium(punctured)?;
                let grid = nu.measure.grid();
                let logd: Vec<f64> = (0..grid.len())
                    .map(|i| {
                        let x = grid.midpoint(i);
                        sys.map().deriv(x).map_or(0.0, |d| d.abs().ln())
                    })
                    .collect();
                let lyap = nu.measure.integrate(&logd);
                report.lyapunov = Some(lyap);
                report.entropy = Some(exact + t * lyap);
            }
        }
        Err(Error::OracleUnavailable(msg)) => {
            log::info!("variational check: {msg}; spectral value {spectral}");
            report.note = Some(msg);
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// Per-depth Gibbs ratios `ν(Z) / exp(-t S_n log|Df| - n log ρ_H)` over survivor cylinders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsReport {
    /// `(n, min ratio, max ratio, cylinders)`.
    pub rows: Vec<(usize, f64, f64, usize)>,
    /// Smallest `C` with `C^{-1} <= ratio <= C` across all rows.
    pub constant: f64,
}

/// Gibbs constant of `ν_t^H` over cylinders of the Markov partition for `n` up to
/// `n_max` (at most 12), limited to depths whose cylinders are unions of grid cells.
pub fn gibbs_constant(sys: &OpenSystem, punctured: &PuncturedSolution, n_max: usize) -> Result<GibbsReport> {
    let model = SftModel::build(sys.map(), sys.hole())?;
    let nu = survivor_equilibrium(punctured)?;
    let grid = nu.measure.grid();
    let cell_floor = grid.max_width() * (1.0 - 1e-9);
    let log_rho = punctured.punctured_pressure();
    let t = punctured.t;
    let f = sys.map();
    let live: Vec<usize> = (0..model.symbols()).filter(|&i| !model.in_hole[i]).collect();
    // cylinders as (interval, first symbol, S_n log|Df|), grown by prepending symbols
    let mut cylinders: Vec<((f64, f64), usize, f64)> = live
        .iter()
        .map(|&i| (model.cell(i), i, model.log_slopes[i]))
        .collect();
    let mut rows = Vec::new();
    let mut constant: f64 = 1.0;
    for n in 1..=n_max.min(12) {
        if n > 1 {
            let mut next = Vec::new();
            for &((a, b), first, s) in &cylinders {
                for &i in &live {
                    if !model.allowed[i][first] {
                        continue;
                    }
                    let lap = model.lap[i];
                    let u = f.inverse_on(lap, a);
                    let v = f.inverse_on(lap, b);
                    next.push(((u.min(v), u.max(v)), i, s + model.log_slopes[i]));
                }
            }
            cylinders = next;
        }
        if cylinders.iter().any(|((a, b), _, _)| b - a < cell_floor) {
            break;
        }
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for &((a, b), _, s) in &cylinders {
            let mass = nu.measure.mass_in(a, b);
            let ratio = mass / (-t * s - n as f64 * log_rho).exp();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        if lo <= 0.0 {
            return Err(Error::GridInconsistency("survivor cylinder with zero ν-mass".into()));
        }
        constant = constant.max(hi).max(1.0 / lo);
        rows.push((n, lo, hi, cylinders.len()));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("grid too coarse for depth-1 cylinders".into()));
    }
    Ok(GibbsReport { rows, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::IntervalMap;
    use crate::open_system::Hole;
    use crate::spectral::{escape_spectral, EigenOptions, Grid};

    fn setup(map: IntervalMap, hole: &str, t: f64, n: usize) -> (OpenSystem, ClosedSolution, PuncturedSolution) {
        let h = Hole::parse(hole).unwrap();
        let g = Arc::new(Grid::for_system(&map, Some(&h), n, &[]).unwrap());
        let (c, p) = escape_spectral(&map, &h, t, g, &EigenOptions::default()).unwrap();
        (OpenSystem::new(map, h).unwrap(), c, p)
    }

    #[test]
    fn direct_fit_middle_third() {
        let (_, c, p) = setup(IntervalMap::tripling(), "(1/3,2/3)", 1.0, 81);
        let logs = log_survivor_masses(&c, &p, 10);
        for (n, l) in logs.iter().enumerate() {
            assert!((l - (n as f64 + 1.0) * (2.0f64 / 3.0).ln()).abs() < 1e-12);
        }
        let e = escape_direct(&c, &p, 60).unwrap();
        assert!((e.rate - 1.5f64.ln()).abs() < 1e-10);
        assert_eq!(e.window, Some((30, 60)));
    }

    #[test]
    fn direct_fit_without_hole_is_zero() {
        let f = IntervalMap::doubling();
        let g = Arc::new(Grid::uniform(32).unwrap());
        let (c, p) = escape_spectral(&f, &Hole::empty(), 1.0, g, &EigenOptions::default()).unwrap();
        let e = escape_direct(&c, &p, 60).unwrap();
        assert!(e.rate.abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let s = OpenSystem::new(IntervalMap::tripling(), Hole::parse("(1/3,2/3)").unwrap()).unwrap();
        let a = survivor_counts(&s, 8, 100_000, 42);
        let b = survivor_counts(&s, 8, 100_000, 42);
        assert_eq!(a, b);
        assert_ne!(a, survivor_counts(&s, 8, 100_000, 43));
        let e = escape_mc(&s, 12, 200_000, 1).unwrap();
        assert!((e.rate - 1.5f64.ln()).abs() < 4.0 * e.stderr, "{e:?}");
        let none = OpenSystem::new(IntervalMap::tripling(), Hole::empty()).unwrap();
        assert_eq!(escape_mc(&none, 12, 1000, 1).unwrap().rate, 0.0);
    }

    #[test]
    fn survivor_measure_middle_third_is_uniform() {
        let (_, c, p) = setup(IntervalMap::tripling(), "(1/3,2/3)", 1.0, 243);
        let nu = survivor_equilibrium(&p).unwrap();
        let live: Vec<f64> = nu.measure.masses().iter().copied().filter(|&m| m > 0.0).collect();
        assert_eq!(live.len(), 32);
        for m in &live {
            assert!((m - 1.0 / 32.0).abs() < 1e-12);
        }
        let fin = survivor_equilibrium_finite(&c, &p, 50).unwrap();
        for (a, b) in fin.measure.masses().iter().zip(nu.measure.masses()) {
            assert!((a - b).abs() < 1e-6);
        }
        let moved = transport_step(&p, nu.measure.masses());
        for (a, b) in moved.iter().zip(nu.measure.masses()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_mean_survivor_measure_is_parry() {
        let (_, _, p) = setup(IntervalMap::doubling(), "(0,1/4)", 1.0, 64);
        let nu = survivor_equilibrium(&p).unwrap();
        // Parry measure of [[0,1],[1,1]] on symbols a = [1/4,1/2], b = [1/2,1]:
        // u = v = (1, φ), μ(a) = 1/(1+φ²), μ(b) = φ²/(1+φ²)
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let mu_a = 1.0 / (1.0 + golden * golden);
        assert!((nu.measure.mass_in(0.25, 0.5) - mu_a).abs() < 1e-10);
        // [1/2, 3/4] = word "b a" with mass μ(b→a) = μ(a)
        assert!((nu.measure.mass_in(0.5, 0.75) - mu_a).abs() < 1e-10);
    }

    #[test]
    fn variational_gap_on_markov_instances() {
        for t in [0.7, 0.8, 1.0, 1.2, 1.3] {
            for (map, hole) in [(IntervalMap::tripling(), "(1/3,2/3)"), (IntervalMap::doubling(), "(0,1/4)")] {
                let (s, c, p) = setup(map, hole, t, 81 * 4);
                let r = variational_check(&s, &c, &p).unwrap();
                assert_eq!(r.status, OracleStatus::Ok);
                assert!(r.gap.unwrap() <= 1e-10, "{r:?}");
            }
        }
        let (s, c, p) = setup(IntervalMap::tripling(), "(1/3,2/3)", 1.0, 243);
        let r = variational_check(&s, &c, &p).unwrap();
        // h(ν) = log 2 for the symmetric measure
        assert!((r.entropy.unwrap() - 2f64.ln()).abs() < 1e-10);
        let f = IntervalMap::logistic(4.0).unwrap();
        let h = Hole::from_intervals(&[(0.7, 0.8)]).unwrap();
        let g = Arc::new(Grid::for_system(&f, Some(&h), 256, &[]).unwrap());
        let (c, p) = escape_spectral(&f, &h, 1.0, g, &EigenOptions::default()).unwrap();
        let r = variational_check(&OpenSystem::new(f, h).unwrap(), &c, &p).unwrap();
        assert_eq!(r.status, OracleStatus::OracleUnavailable);
        assert!(r.spectral.is_finite());
    }

    #[test]
    fn gibbs_constant_is_finite() {
        let (s, _, p) = setup(IntervalMap::doubling(), "(0,1/4)", 1.0, 4096);
        let g = gibbs_constant(&s, &p, 12).unwrap();
        assert!(g.rows.len() >= 8);
        assert!(g.constant.is_finite() && g.constant < 10.0, "{g:?}");
        let (s, _, p) = setup(IntervalMap::tripling(), "(1/3,2/3)", 0.8, 729);
        let g = gibbs_constant(&s, &p, 12).unwrap();
        assert!((g.constant - 1.0).abs() < 1e-9, "{g:?}");
    }
}
