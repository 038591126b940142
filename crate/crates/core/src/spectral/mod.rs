//! Weighted Ulam–Galerkin discretization of the transfer operator with potential
//! `-t log|Df|`, its punctured version, and the measures read off its eigenvectors.

mod eigen;
mod grid;
mod measures;
mod operator;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use eigen::{leading_eigen, power_iteration, support_info, EigenOptions, SpectralResult, SupportInfo};
pub use grid::{Grid, SNAP_FRACTION};
pub use measures::{write_cell_csv, GridMeasure};
pub use operator::{CsrMatrix, WeightedUlamOperator};

use crate::error::{Error, Result};
use crate::maps::IntervalMap;
use crate::numeric::linear_fit;
use crate::open_system::Hole;

/// Eigenvalues of the punctured operator may exceed the closed one by this much before
/// the grid is declared inconsistent.
pub const LAMBDA_SLACK: f64 = 1e-9;

/// `t` together with the pressure once computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Potential {
    pub t: f64,
    pub p_t: Option<f64>,
}

/// Closed operator at parameter `t` with its leading eigendata.
#[derive(Debug, Clone)]
pub struct ClosedSolution {
    pub op: WeightedUlamOperator,
    pub spectrum: SpectralResult,
    pub potential: Potential,
}

impl ClosedSolution {
    pub fn solve(map: &IntervalMap, t: f64, grid: Arc<Grid>, opts: &EigenOptions) -> Result<Self> {
        let op = WeightedUlamOperator::build(map, t, grid, None)?;
        let spectrum = leading_eigen(&op, opts)?;
        if spectrum.is_zero() {
            return Err(Error::GridInconsistency("closed operator is nilpotent".into()));
        }
        let potential = Potential {
            t,
            p_t: Some(spectrum.rho.ln()),
        };
        Ok(Self {
            op,
            spectrum,
            potential,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.op.grid()
    }

    pub fn t(&self) -> f64 {
        self.potential.t
    }

    /// `p_t = log ρ`.
    pub fn pressure(&self) -> f64 {
        self.potential.p_t.expect("set by solve")
    }

    /// Normalized left eigenvector: `m_t(C_i) = w_i / Σ w`.
    pub fn conformal_measure(&self) -> GridMeasure {
        GridMeasure::from_weights(Arc::clone(self.grid()), self.spectrum.left.clone())
            .expect("nonnegative left eigenvector")
    }

    /// Density `g_t^0` with `Σ g_i m_t(C_i) = 1` and the equilibrium state `μ_t(C_i) = g_i m_t(C_i)`.
    pub fn equilibrium_state(&self) -> (Vec<f64>, GridMeasure) {
        let m = self.conformal_measure();
        let density = normalize_density(&self.spectrum.right, &m).expect("right eigenvector charges m_t");
        let weights = density.iter().zip(m.masses()).map(|(g, w)| g * w).collect();
        let mu = GridMeasure::from_weights(Arc::clone(self.grid()), weights).expect("nonnegative");
        (density, mu)
    }

    /// `‖ρ m - mM‖₁ / ‖m‖₁`.
    pub fn conformality_residual(&self) -> f64 {
        let w = &self.spectrum.left;
        let mut wm = vec![0.0; w.len()];
        self.op.transpose_matrix().mul_vec(w, &mut wm);
        let rho = self.spectrum.rho;
        wm.iter().zip(w).map(|(a, b)| (a - rho * b).abs()).sum::<f64>() / w.iter().sum::<f64>()
    }
}

/// Punctured operator on the grid of a closed solution.
#[derive(Debug, Clone)]
pub struct PuncturedSolution {
    pub op: WeightedUlamOperator,
    pub spectrum: SpectralResult,
    pub t: f64,
    pub p_t: f64,
    /// `λ_t^H = ρ_H e^{-p_t}`.
    pub lambda: f64,
    /// `-log λ_t^H`, infinite when everything escapes.
    pub escape_rate: f64,
    /// `g_t^H`, normalized by `∫ g dm_t = 1`; empty when `ρ_H = 0`.
    pub density: Vec<f64>,
}

impl PuncturedSolution {
    pub fn solve(hole: &Hole, closed: &ClosedSolution, opts: &EigenOptions) -> Result<Self> {
        let op = closed.op.punctured(hole)?;
        let spectrum = leading_eigen(&op, opts)?;
        let p_t = closed.pressure();
        let lambda = spectrum.rho / p_t.exp();
        if lambda > 1.0 + LAMBDA_SLACK {
            return Err(Error::GridInconsistency(format!(
                "punctured eigenvalue exceeds the closed one (λ = {lambda})"
            )));
        }
        let (escape_rate, density) = if spectrum.is_zero() {
            (f64::INFINITY, Vec::new())
        } else {
            let m = closed.conformal_measure();
            (
                -lambda.min(1.0).ln(),
                normalize_density(&spectrum.right, &m)?,
            )
        };
        Ok(Self {
            op,
            spectrum,
            t: closed.t(),
            p_t,
            lambda,
            escape_rate,
            density,
        })
    }

    /// `log ρ_H = p_t - 𝔢(m_t)`.
    pub fn punctured_pressure(&self) -> f64 {
        if self.spectrum.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.spectrum.rho.ln()
        }
    }

    /// `‖M_H g - ρ_H g‖₁ / ‖g‖₁`.
    pub fn conditional_invariance_residual(&self) -> f64 {
        if self.density.is_empty() {
            return 0.0;
        }
        let g = &self.density;
        let mut mg = vec![0.0; g.len()];
        self.op.matrix().mul_vec(g, &mut mg);
        let rho = self.spectrum.rho;
        mg.iter().zip(g).map(|(a, b)| (a - rho * b).abs()).sum::<f64>() / g.iter().sum::<f64>()
    }
}

fn normalize_density(v: &[f64], m: &GridMeasure) -> Result<Vec<f64>> {
    let z = m.integrate(v);
    if z <= 0.0 {
        return Err(Error::GridInconsistency(
            "eigenvector carries no conformal mass".into(),
        ));
    }
    Ok(v.iter().map(|x| x / z).collect())
}

/// `p_t = log ρ` of the closed operator.
pub fn pressure(map: &IntervalMap, t: f64, grid: Arc<Grid>, opts: &EigenOptions) -> Result<f64> {
    Ok(ClosedSolution::solve(map, t, grid, opts)?.pressure())
}

/// Closed and punctured solutions on a grid resolving `hole`.
pub fn escape_spectral(
    map: &IntervalMap,
    hole: &Hole,
    t: f64,
    grid: Arc<Grid>,
    opts: &EigenOptions,
) -> Result<(ClosedSolution, PuncturedSolution)> {
    let closed = ClosedSolution::solve(map, t, grid, opts)?;
    let punctured = PuncturedSolution::solve(hole, &closed, opts)?;
    Ok((closed, punctured))
}

/// `L¹(m_t)` distances of normalized punctured pushforwards of `psi` to `g_t^H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub distances: Vec<f64>,
    /// `exp` of the slope of `log d_n` over the terms above `1e-13`; 0 when fewer than two remain.
    pub rate: f64,
    /// `|λ_2| / ρ` of the punctured matrix when it is small enough for a dense solve.
    pub spectral_ratio: Option<f64>,
}

pub fn convergence_trace(
    closed: &ClosedSolution,
    punctured: &PuncturedSolution,
    psi: &[f64],
    n_max: usize,
) -> Result<ConvergenceTrace> {
    let n = closed.grid().len();
    if psi.len() != n {
        return Err(Error::GridInconsistency(format!("psi has {} entries for {n} cells", psi.len())));
    }
    if psi.iter().any(|&x| x < 0.0) {
        return Err(Error::Precondition("psi must be nonnegative".into()));
    }
    if punctured.density.is_empty() {
        return Err(Error::Precondition("punctured operator has no surviving mass".into()));
    }
    let m = closed.conformal_measure();
    let g = &punctured.density;
    let mut current = psi.to_vec();
    let mut next = vec![0.0; n];
    let mut distances = Vec::with_capacity(n_max + 1);
    for k in 0..=n_max {
        let norm = m.integrate(&current);
        if !(norm > 1e-300) {
            if k <= 1 {
                return Err(Error::Precondition("psi vanishes on the survivor support".into()));
            }
            log::warn!("pushforward underflowed at step {k}; trace truncated");
            break;
        }
        let d: f64 = current
            .iter()
            .zip(g)
            .zip(m.masses())
            .map(|((c, gi), mi)| (c / norm - gi).abs() * mi)
            .sum();
        distances.push(d);
        if k < n_max {
            punctured.op.matrix().mul_vec(&current, &mut next);
            let scale: f64 = next.iter().sum();
            if scale > 0.0 {
                for x in next.iter_mut() {
                    *x /= scale;
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = distances
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &d)| d > 1e-13)
        .map(|(k, &d)| (k as f64, d.ln()))
        .unzip();
    let rate = linear_fit(&xs, &ys).map_or(0.0, |f| f.slope.exp());
    let spectral_ratio = (n <= 400).then(|| second_eigen_ratio(punctured.op.matrix())).flatten();
    Ok(ConvergenceTrace {
        distances,
        rate,
        spectral_ratio,
    })
}

/// `|λ_2| / |λ_1|` by a dense eigenvalue solve.
pub fn second_eigen_ratio(m: &CsrMatrix) -> Option<f64> {
    let n = m.dim();
    let dense = nalgebra::DMatrix::from_fn(n, n, |r, c| m.get(r, c));
    let mut mods: Vec<f64> = dense.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mods.sort_by(|a, b| b.total_cmp(a));
    match mods.as_slice() {
        [a, b, ..] if *a > 0.0 => Some(b / a),
        _ => None,
    }
}

/// Pressure samples `(t, p_t)` on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureCurve {
    pub samples: Vec<(f64, f64)>,
    /// Whether the samples are non-increasing in `t`.
    pub monotone: bool,
}

pub fn pressure_curve(map: &IntervalMap, ts: &[f64], grid: Arc<Grid>, opts: &EigenOptions) -> Result<PressureCurve> {
    let samples = ts
        .par_iter()
        .map(|&t| pressure(map, t, Arc::clone(&grid), opts).map(|p| (t, p)))
        .collect::<Result<Vec<_>>>()?;
    let monotone = samples
        .windows(2)
        .all(|w| w[0].0 >= w[1].0 || w[1].1 <= w[0].1 + 1e-12);
    if !monotone {
        log::warn!("pressure is not monotone in t on this grid");
    }
    Ok(PressureCurve { samples, monotone })
}
