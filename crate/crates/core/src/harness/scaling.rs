//! Log-log scaling fits of the measured divergence against the support
//! diameter, the energy and early lab time.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::comparison::{run_comparison_full, ComparisonRun};
use super::config::{Config, DistKind};
use crate::dynamics::{csv_error, fmt};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares line through `(ln x, ln y)` with the standard error of the
/// slope. Nonpositive or nonfinite values, fewer than three points or no
/// spread in `x` make the fit degenerate.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 3", xs.len())));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateFit(format!("value {v} has no logarithm")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("no spread in the abscissa".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LogLogFit {
        exponent: slope,
        stderr: (ssr / (m - 2.0) / sxx).sqrt(),
        intercept,
        points: lx.len(),
    })
}

/// A fit or the reason it could not be made (for instance a vanishing
/// divergence in the cold-fluid limit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fit(LogLogFit),
    Degenerate { degenerate: String },
}

impl FitOutcome {
    fn from_result(r: Result<LogLogFit>) -> Self {
        match r {
            Ok(f) => Self::Fit(f),
            Err(e) => Self::Degenerate {
                degenerate: format!("cold-fluid or degenerate case: {e}"),
            },
        }
    }

    pub fn fit(&self) -> Option<&LogLogFit> {
        match self {
            Self::Fit(f) => Some(f),
            Self::Degenerate { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub sweep: String,
    pub alpha_target: f64,
    pub energy_target: f64,
    /// Measured at `t = 0`.
    pub alpha: f64,
    pub energy: f64,
    pub max_div_x: f64,
    pub max_div_v: f64,
    pub multiplier_x: Option<f64>,
    pub multiplier_v: Option<f64>,
    pub pass: bool,
    pub hypotheses_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFits {
    /// Position divergence against alpha at fixed energy.
    pub alpha: FitOutcome,
    /// Position divergence against energy at fixed alpha.
    pub energy: FitOutcome,
    /// Position divergence against early lab time.
    pub time: FitOutcome,
    pub alpha_velocity: FitOutcome,
    pub energy_velocity: FitOutcome,
    pub time_velocity: FitOutcome,
    pub t_early: f64,
    /// Every grid point satisfied both bounds.
    pub all_pass: bool,
}

#[derive(Clone, Debug)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    pub fits: ScalingFits,
    /// The run at the fixed `(alpha, E)` of the energy sweep used for the
    /// time fits.
    pub base: ComparisonRun,
}

/// Configuration for one grid point: a gaussian bump of diameter `alpha`
/// centered at `y^0 = energy`.
pub fn grid_config(base: &Config, alpha: f64, energy: f64) -> Result<Config> {
    if !(energy >= 1.0) {
        return Err(Error::OutOfRange(format!("grid energy must be >= 1, got {energy}")));
    }
    let mut cfg = base.clone();
    cfg.dist.kind = DistKind::GaussianBump;
    cfg.dist.sigma = base.sigma_for_alpha(alpha);
    cfg.dist.center_rapidity = energy.acosh();
    cfg.run.tol = base.scaling.tol;
    Ok(cfg)
}

fn max_of(run: &ComparisonRun, f: impl Fn(&super::comparison::SeriesPoint) -> f64) -> f64 {
    run.report.series.iter().map(f).fold(0.0, f64::max)
}

/// Sweeps alpha at fixed energy and energy at fixed alpha, then fits the
/// maximal divergences and the early-time growth of the base run.
pub fn scaling_study(cfg: &Config) -> Result<ScalingStudy> {
    let sc = &cfg.scaling;
    let mut grid: Vec<(&str, f64, f64)> = sc.alphas.iter().map(|&a| ("alpha", a, sc.energy)).collect();
    grid.extend(sc.energies.iter().map(|&e| ("energy", sc.alpha, e)));
    if !sc.energies.contains(&sc.energy) {
        grid.push(("base", sc.alpha, sc.energy));
    }
    let runs: Vec<ComparisonRun> = grid
        .par_iter()
        .map(|&(_, a, e)| run_comparison_full(&grid_config(cfg, a, e)?))
        .collect::<Result<_>>()?;

    let rows: Vec<ScalingRow> = grid
        .iter()
        .zip(&runs)
        .map(|(&(sweep, a, e), run)| ScalingRow {
            sweep: sweep.into(),
            alpha_target: a,
            energy_target: e,
            alpha: run.report.alpha_initial,
            energy: run.report.energy_initial,
            max_div_x: max_of(run, |p| p.div_x),
            max_div_v: max_of(run, |p| p.div_v),
            multiplier_x: run.report.multiplier_x,
            multiplier_v: run.report.multiplier_v,
            pass: run.report.pass,
            hypotheses_ok: run.report.hypotheses.satisfied,
        })
        .collect();

    let floor = 10.0 * sc.tol;
    let sweep_fit = |name: &str, x: fn(&ScalingRow) -> f64, y: fn(&ScalingRow) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.sweep == name).map(|r| (x(r), y(r))).unzip();
        if ys.iter().all(|v| *v <= floor) {
            return FitOutcome::Degenerate {
                degenerate: format!("cold-fluid case: every divergence is below {floor:e}"),
            };
        }
        FitOutcome::from_result(loglog_fit(&xs, &ys))
    };

    let base_idx = grid
        .iter()
        .position(|&(s, a, e)| (s == "energy" || s == "base") && a == sc.alpha && e == sc.energy)
        .or_else(|| grid.iter().position(|&(_, a, e)| a == sc.alpha && e == sc.energy))
        .expect("base point is on the grid");
    let base = runs[base_idx].clone();
    let early: Vec<_> = base
        .report
        .series
        .iter()
        .filter(|p| p.t > 0.0 && p.t <= sc.t_early)
        .collect();
    let ts: Vec<f64> = early.iter().map(|p| p.t).collect();
    let time_fit = |y: fn(&&super::comparison::SeriesPoint) -> f64| {
        let ys: Vec<f64> = early.iter().map(y).collect();
        if ys.iter().all(|v| *v <= floor) {
            return FitOutcome::Degenerate {
                degenerate: format!("cold-fluid case: every divergence is below {floor:e}"),
            };
        }
        FitOutcome::from_result(loglog_fit(&ts, &ys))
    };

    let fits = ScalingFits {
        alpha: sweep_fit("alpha", |r| r.alpha, |r| r.max_div_x),
        energy: sweep_fit("energy", |r| r.energy, |r| r.max_div_x),
        time: time_fit(|p| p.div_x),
        alpha_velocity: sweep_fit("alpha", |r| r.alpha, |r| r.max_div_v),
        energy_velocity: sweep_fit("energy", |r| r.energy, |r| r.max_div_v),
        time_velocity: time_fit(|p| p.div_v),
        t_early: sc.t_early,
        all_pass: rows.iter().all(|r| r.pass),
    };
    Ok(ScalingStudy { rows, fits, base })
}

/// Writes the grid table as CSV.
pub fn write_scaling_csv<W: Write>(out: W, rows: &[ScalingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sweep",
        "alpha_target",
        "energy_target",
        "alpha",
        "energy",
        "max_div_x",
        "max_div_v",
        "multiplier_x",
        "multiplier_v",
        "pass",
        "hypotheses_ok",
    ])
    .map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.sweep.clone(),
            fmt(r.alpha_target),
            fmt(r.energy_target),
            fmt(r.alpha),
            fmt(r.energy),
            fmt(r.max_div_x),
            fmt(r.max_div_v),
            opt(r.multiplier_x),
            opt(r.multiplier_v),
            r.pass.to_string(),
            r.hypotheses_ok.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
