//! Experiment orchestration: paired Lorentz and averaged trajectories,
//! divergence bounds, hypothesis diagnostics, scaling fits and the
//! invariant check suite.

mod bounds;
pub mod check;
mod comparison;
pub mod config;
mod hypotheses;
mod scaling;

use std::io::Write;

pub use bounds::{position_bound, t_max_estimate, velocity_bound};
pub use comparison::{
    compare_ensemble, initial_ensemble, run_comparison, run_comparison_full, CompareOptions, ComparisonReport,
    ComparisonRun, CurvePoint, ReportConstants, SeriesPoint,
};
pub use config::{Config, DistKind, MomentMode, Thresholds};
pub use hypotheses::{check_hypotheses, DiagnosticSample, HypothesisDiagnostics};
pub use scaling::{
    grid_config, loglog_fit, scaling_study, write_scaling_csv, FitOutcome, LogLogFit, ScalingFits, ScalingRow,
    ScalingStudy,
};

use crate::dynamics::{csv_error, fmt};
use crate::Result;

/// Pretty JSON followed by a newline.
pub fn to_json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// `t, div_x, bound_x, div_v, bound_v` rows.
pub fn write_series_csv<W: Write>(out: W, series: &[SeriesPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "div_x", "bound_x", "div_v", "bound_v"])
        .map_err(csv_error)?;
    for p in series {
        w.write_record([fmt(p.t), fmt(p.div_x), fmt(p.bound_x), fmt(p.div_v), fmt(p.bound_v)])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Both curves side by side: `t, s, x0.., y0.., s_avg, xa0.., ya0..`.
pub fn write_curves_csv<W: Write>(out: W, lorentz: &[CurvePoint], averaged: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = lorentz.first().map_or(0, |p| p.x.len());
    let mut header = vec!["t".to_string(), "s".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("y{i}")));
    header.push("s_avg".into());
    header.extend((0..n).map(|i| format!("xa{i}")));
    header.extend((0..n).map(|i| format!("ya{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for (l, a) in lorentz.iter().zip(averaged) {
        let mut row = vec![fmt(l.t), fmt(l.s)];
        row.extend(l.x.iter().chain(l.y.iter()).map(|&v| fmt(v)));
        row.push(fmt(a.s));
        row.extend(a.x.iter().chain(a.y.iter()).map(|&v| fmt(v)));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
