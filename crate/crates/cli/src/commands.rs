use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use opendyn::dimension::{bowen_root, box_dimension, BowenOptions, ScaleLadder};
use opendyn::escape::{
    escape_direct, escape_mc, log_survivor_masses, survivor_equilibrium, variational_check, EscapeEstimate,
};
use opendyn::inducing::{induce, InducingOptions};
use opendyn::numeric::g12;
use opendyn::open_system::{Hole, OpenSystem, DEFAULT_INTERVAL_BUDGET};
use opendyn::spectral::{
    convergence_trace, escape_spectral, pressure_curve, write_cell_csv, ClosedSolution, Grid,
};
use opendyn::zerohole::{ratio_curve, HoleFamily, RatioOptions};

use crate::config::Settings;
use crate::CliError;

/// Files produced by a run, in write order, and the summary table.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<(String, String)>,
}

impl Output {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable report");
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
    }

    fn text<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        self.files.push((name.into(), buf));
        Ok(())
    }

    fn row(&mut self, key: &str, value: impl Into<String>) {
        self.summary.push((key.into(), value.into()));
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), g12)
}

fn grid_for(s: &Settings, hole: Option<&Hole>, extra: &[f64]) -> Result<Arc<Grid>, CliError> {
    let map = s.interval_map()?;
    Ok(Arc::new(Grid::for_system(&map, hole, s.grid, extra)?))
}

pub fn execute(cmd: &str, s: &Settings) -> Result<Output, CliError> {
    match cmd {
        "pressure" => pressure(s),
        "escape" => escape(s),
        "converge" => converge(s),
        "induce" => induce_cmd(s),
        "bowen" => bowen(s),
        "zerohole" => zerohole(s),
        "variational" => variational(s),
        "check-conditions" => check_conditions(s),
        other => Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    }
}

fn pressure(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let grid = grid_for(s, None, &[])?;
    let curve = pressure_curve(&map, &s.t_values, Arc::clone(&grid), &s.eigen())?;
    let mut out = Output::default();
    out.text("pressure.csv", |w| {
        use std::io::Write;
        writeln!(w, "t,p_t")?;
        for (t, p) in &curve.samples {
            writeln!(w, "{},{}", g12(*t), g12(*p))?;
        }
        Ok(())
    })?;
    let first = ClosedSolution::solve(&map, s.t_values[0], Arc::clone(&grid), &s.eigen())?;
    let (density, mu) = first.equilibrium_state();
    out.json(
        "pressure.json",
        &json!({
            "samples": curve.samples,
            "monotone": curve.monotone,
            "grid_cells": grid.len(),
            "measures_t": s.t_values[0],
            "conformality_residual": first.conformality_residual(),
        }),
    );
    out.text("conformal.csv", |w| first.conformal_measure().write_csv(w))?;
    out.text("equilibrium_density.csv", |w| write_cell_csv(w, &grid, &density))?;
    out.text("equilibrium.csv", |w| mu.write_csv(w))?;
    if s.export_operator {
        out.text("operator.coo", |w| first.op.write_coo(w, Some(first.pressure())))?;
    }
    out.row("grid cells", grid.len().to_string());
    for (t, p) in &curve.samples {
        out.row(&format!("p_t at t = {}", g12(*t)), g12(*p));
    }
    Ok(out)
}

fn escape(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let hole = s.hole()?;
    let grid = grid_for(s, Some(&hole), &[])?;
    let (closed, punctured) = escape_spectral(&map, &hole, s.t, Arc::clone(&grid), &s.eigen())?;
    let sys = OpenSystem::new(map, hole)?;
    let spectral = EscapeEstimate::spectral(&punctured);
    let direct = escape_direct(&closed, &punctured, s.steps).map_err(|e| e.to_string());
    let mc = if s.t == 1.0 {
        escape_mc(&sys, s.steps, s.samples, s.seed).map_err(|e| e.to_string())
    } else {
        Err("Monte Carlo estimates the Lebesgue rate and runs only at t = 1".to_string())
    };
    let estimate = |r: &Result<EscapeEstimate, String>| match r {
        Ok(e) => json!(e),
        Err(msg) => json!({ "error": msg }),
    };
    let mut out = Output::default();
    out.json(
        "escape.json",
        &json!({
            "t": s.t,
            "p_t": closed.pressure(),
            "lambda": punctured.lambda,
            "grid_cells": grid.len(),
            "conditional_invariance_residual": punctured.conditional_invariance_residual(),
            "spectral": spectral,
            "direct_fit": estimate(&direct),
            "monte_carlo": estimate(&mc),
        }),
    );
    let logs = log_survivor_masses(&closed, &punctured, s.steps);
    out.text("survival.csv", |w| {
        use std::io::Write;
        writeln!(w, "n,log_mass")?;
        for (n, v) in logs.iter().enumerate() {
            writeln!(w, "{n},{}", g12(*v))?;
        }
        Ok(())
    })?;
    if !punctured.density.is_empty() {
        out.text("density.csv", |w| write_cell_csv(w, &grid, &punctured.density))?;
        let nu = survivor_equilibrium(&punctured)?;
        out.text("survivor_measure.csv", |w| nu.measure.write_csv(w))?;
    }
    out.row("grid cells", grid.len().to_string());
    out.row("p_t", g12(closed.pressure()));
    out.row("lambda_t^H", g12(punctured.lambda));
    out.row("escape (spectral)", g12(spectral.rate));
    out.row("escape (direct fit)", direct.as_ref().map_or("-".into(), |e| g12(e.rate)));
    out.row(
        "escape (Monte Carlo)",
        mc.as_ref().map_or("-".into(), |e| format!("{} ± {}", g12(e.rate), g12(e.stderr))),
    );
    Ok(out)
}

fn converge(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let hole = s.hole()?;
    let grid = grid_for(s, Some(&hole), &[])?;
    let (closed, punctured) = escape_spectral(&map, &hole, s.t, Arc::clone(&grid), &s.eigen())?;
    let psi = match s.psi.as_str() {
        "density" => closed.equilibrium_state().0,
        _ => vec![1.0; grid.len()],
    };
    let trace = convergence_trace(&closed, &punctured, &psi, s.steps)?;
    let mut out = Output::default();
    out.text("converge.csv", |w| {
        use std::io::Write;
        writeln!(w, "n,distance")?;
        for (n, d) in trace.distances.iter().enumerate() {
            writeln!(w, "{n},{}", g12(*d))?;
        }
        Ok(())
    })?;
    out.json(
        "converge.json",
        &json!({
            "psi": s.psi,
            "rate": trace.rate,
            "spectral_ratio": trace.spectral_ratio,
            "escape_rate": punctured.escape_rate,
            "conditional_invariance_residual": punctured.conditional_invariance_residual(),
            "grid_cells": grid.len(),
        }),
    );
    out.row("grid cells", grid.len().to_string());
    out.row("fitted rate", g12(trace.rate));
    out.row("|λ2|/ρ", opt(trace.spectral_ratio));
    out.row("final distance", opt(trace.distances.last().copied()));
    Ok(out)
}

fn induce_cmd(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let hole = s.hole()?;
    let base = (s.base[0], s.base[1]);
    let sys = OpenSystem::new(map.clone(), hole.clone())?;
    let opts = InducingOptions {
        depth: s.depth,
        budget: s.budget,
        ..InducingOptions::default()
    };
    let scheme = induce(&sys, base, &opts)?;
    let h = (!hole.is_empty()).then_some(&hole);
    let grid = grid_for(s, h, &[base.0, base.1])?;
    let closed = ClosedSolution::solve(&map, s.t, grid, &s.eigen())?;
    let m = closed.conformal_measure();
    let tail = scheme.tail(&m)?;
    let distortion = scheme.distortion(&map, s.t);
    let escaped = scheme.escaped_mass(&m)?;
    let mut out = Output::default();
    out.text("scheme.txt", |w| scheme.write_text(w, &hole))?;
    out.text("tail.csv", |w| tail.write_csv(w))?;
    out.json(
        "tail.json",
        &json!({
            "base": base,
            "t": s.t,
            "branches": scheme.branches.len(),
            "unresolved_pieces": scheme.unresolved.len(),
            "pieces": scheme.pieces,
            "partial": scheme.partial,
            "c0": tail.c0,
            "alpha": tail.alpha,
            "window": tail.window,
            "r_squared": tail.r_squared,
            "unresolved_mass": tail.unresolved_mass,
            "escaped_mass": escaped,
            "lebesgue_defect": scheme.lebesgue_defect(),
            "abramov_ratio": scheme.abramov_ratio(),
            "distortion_constant": distortion.constant,
            "distortion_worst_tau": distortion.worst_tau,
            "tau_histogram": scheme.tau_histogram(),
        }),
    );
    out.text("distortion.csv", |w| {
        use std::io::Write;
        writeln!(w, "lo,hi,tau,ratio")?;
        for (b, r) in scheme.branches.iter().zip(&distortion.per_branch) {
            writeln!(w, "{},{},{},{}", g12(b.domain.0), g12(b.domain.1), b.tau, g12(*r))?;
        }
        Ok(())
    })?;
    out.row("base", format!("({}, {})", g12(base.0), g12(base.1)));
    out.row("branches", scheme.branches.len().to_string());
    out.row("alpha", g12(tail.alpha));
    out.row("C_0", g12(tail.c0));
    out.row("unresolved mass", g12(tail.unresolved_mass));
    out.row("distortion C_d", g12(distortion.constant));
    Ok(out)
}

fn bowen(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let hole = s.hole()?;
    let grid = grid_for(s, Some(&hole), &[])?;
    let opts = BowenOptions {
        t_lo: s.t_range[0],
        t_hi: s.t_range[1],
        tol: s.bowen_tol,
        samples: s.curve_samples,
    };
    let result = bowen_root(&map, &hole, grid, &opts, &s.eigen())?;
    let sys = OpenSystem::new(map.clone(), hole)?;
    let boxdim = box_dimension(&sys, s.box_depth, &ScaleLadder::for_depth(&map, s.box_depth));
    let survivor = sys.refine_survivor(s.box_depth, DEFAULT_INTERVAL_BUDGET);
    let box_json: Value = match &boxdim {
        Ok(b) => json!(b),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut out = Output::default();
    out.json(
        "bowen.json",
        &json!({
            "t_star": result.t_star,
            "bracket": result.bracket,
            "curve": result.curve,
            "strictly_decreasing": result.strictly_decreasing,
            "bisection_steps": result.bisection_steps,
            "grid_cells": result.grid_cells,
            "box_dimension": box_json,
        }),
    );
    out.text("bowen_curve.csv", |w| result.write_curve_csv(w))?;
    out.text("survivor.csv", |w| survivor.write_csv(w))?;
    out.row("grid cells", result.grid_cells.to_string());
    out.row("t*", g12(result.t_star));
    out.row("bracket", format!("[{}, {}]", g12(result.bracket.0), g12(result.bracket.1)));
    out.row("box dimension", boxdim.as_ref().map_or("-".into(), |b| g12(b.dimension)));
    Ok(out)
}

fn zerohole(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let center = s.center.expect("validated");
    let params = s.conditions();
    let family = HoleFamily::dyadic(&map, center, s.eps_k[0], s.eps_k[1], &params)?;
    let opts = RatioOptions {
        t: s.t,
        grid: s.grid,
        cells_in_hole: s.cells_in_hole,
        varsigma: s.varsigma,
        eigen: s.eigen(),
        ..RatioOptions::default()
    };
    let curve = ratio_curve(&map, &family, &opts, &params)?;
    let mut out = Output::default();
    out.text("ratio_curve.csv", |w| curve.write_csv(w))?;
    out.json("ratio_curve.json", &curve);
    out.files
        .push(("ratio_curve.gp".into(), curve.gnuplot_script("ratio_curve.csv").into_bytes()));
    out.row("centre", g12(center));
    out.row(
        "periodic",
        curve
            .orbit
            .as_ref()
            .map_or("no".into(), |o| format!("period {}", o.period)),
    );
    out.row("predicted", g12(curve.predicted));
    out.row("last ratio", opt(curve.last_ratio));
    out.row("extrapolated", opt(curve.extrapolated));
    Ok(out)
}

fn variational(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let hole = s.hole()?;
    let grid = grid_for(s, Some(&hole), &[])?;
    let sys = OpenSystem::new(map.clone(), hole.clone())?;
    let reports = s
        .t_values
        .iter()
        .map(|&t| {
            let (closed, punctured) = escape_spectral(&map, &hole, t, Arc::clone(&grid), &s.eigen())?;
            Ok(variational_check(&sys, &closed, &punctured)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = Output::default();
    out.text("variational.csv", |w| {
        use std::io::Write;
        writeln!(w, "t,p_t,escape,spectral,sft,gap")?;
        for r in &reports {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                g12(r.t),
                g12(r.p_t),
                g12(r.escape_rate),
                g12(r.spectral),
                r.sft.map_or(String::new(), g12),
                r.gap.map_or(String::new(), g12)
            )?;
        }
        Ok(())
    })?;
    out.json("variational.json", &json!({ "grid_cells": grid.len(), "reports": reports }));
    out.row("grid cells", grid.len().to_string());
    for r in &reports {
        out.row(
            &format!("t = {}", g12(r.t)),
            format!("p_t - e = {}, SFT = {}, gap = {}", g12(r.spectral), opt(r.sft), opt(r.gap)),
        );
    }
    Ok(out)
}

fn check_conditions(s: &Settings) -> Result<Output, CliError> {
    let map = s.interval_map()?;
    let hole = s.hole()?;
    let params = s.conditions();
    let c1 = map.check_expansion_sampled(&params, s.samples)?;
    let c2 = map.check_collet_eckmann(&params)?;
    let mut reports = vec![c1, c2];
    let mut covering = None;
    let sys = OpenSystem::new(map, hole)?;
    if !sys.hole().is_empty() {
        reports.push(sys.check_h1(&params)?);
        reports.push(sys.check_h2_orbit_separation(&params)?);
        covering = sys.covering_time(params.delta0 / 3.0, params.horizon, 64);
    }
    let mut out = Output::default();
    out.json(
        "conditions.json",
        &json!({
            "reports": reports,
            "covering_time": covering,
            "covering_length": params.delta0 / 3.0,
        }),
    );
    for r in &reports {
        out.row(&r.condition, if r.pass { "pass" } else { "fail" });
    }
    if !sys.hole().is_empty() {
        out.row("covering time", covering.map_or("-".into(), |n| n.to_string()));
    }
    Ok(out)
}
