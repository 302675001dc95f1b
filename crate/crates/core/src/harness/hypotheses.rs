//! Diagnostics for the hypotheses under which the divergence bounds are
//! claimed: ultra-relativistic energy, narrow support, small warm-fluid
//! gap and slowly varying energy.

use serde::{Deserialize, Serialize};

use super::config::Thresholds;
use crate::Vector;

/// State of the three curves and the ensemble at one output time.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticSample {
    pub t: f64,
    pub energy: f64,
    pub alpha: f64,
    /// Lorentz trajectory velocity.
    pub y: Vector,
    /// Ensemble mean `<y>`.
    pub mean: Vector,
    /// Averaged trajectory velocity.
    pub y_avg: Vector,
    /// `<(y - <y>)(y - <y>)> eta`.
    pub warm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisDiagnostics {
    #[serde(rename = "E_min")]
    pub e_min: f64,
    pub alpha_max: f64,
    pub theta2: Vec<f64>,
    pub theta_bar2: Vec<f64>,
    pub theta_gap_max: f64,
    /// Absolute warm-fluid statistic per output time.
    pub warm_fluid: Vec<f64>,
    /// `|theta^2 - theta_bar^2| / |warm|` at `t = 0`.
    pub warm_gap_ratio: Option<f64>,
    /// Deviation of the initial gap from `2 |U_spatial|^2 |warm|`.
    pub warm_identity_residual: f64,
    pub adiabaticity: f64,
    pub thresholds: Thresholds,
    pub energy_ok: bool,
    pub alpha_ok: bool,
    pub theta_ok: bool,
    pub adiabatic_ok: bool,
    pub satisfied: bool,
}

fn spatial_sq(v: &Vector) -> f64 {
    v.rows(1, v.len() - 1).norm_squared()
}

/// Computes the diagnostics over a run. `theta^2 = |y|^2 - |<y>|^2` and
/// `theta_bar^2 = |<y>|^2 - |y_avg|^2` use spatial Euclidean norms.
pub fn check_hypotheses(samples: &[DiagnosticSample], thresholds: &Thresholds) -> HypothesisDiagnostics {
    let e_min = samples.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
    let alpha_max = samples.iter().map(|s| s.alpha).fold(0.0, f64::max);
    let theta2: Vec<f64> = samples.iter().map(|s| spatial_sq(&s.y) - spatial_sq(&s.mean)).collect();
    let theta_bar2: Vec<f64> = samples
        .iter()
        .map(|s| spatial_sq(&s.mean) - spatial_sq(&s.y_avg))
        .collect();
    let theta_gap_max = theta2
        .iter()
        .zip(&theta_bar2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let warm_fluid: Vec<f64> = samples.iter().map(|s| s.warm.abs()).collect();

    let (warm_gap_ratio, warm_identity_residual) = match samples.first() {
        Some(s0) => {
            let gap = (theta2[0] - theta_bar2[0]).abs();
            let w = s0.warm.abs();
            let q = s0.mean[0] * s0.mean[0] - spatial_sq(&s0.mean);
            let u_sp = if q > 0.0 { spatial_sq(&s0.mean) / q } else { 0.0 };
            let ratio = if w > 0.0 { Some(gap / w) } else { None };
            (ratio, (gap - 2.0 * u_sp * w).abs())
        }
        None => (None, 0.0),
    };

    let mut adiabaticity: f64 = 0.0;
    for pair in samples.windows(2) {
        let dt = pair[1].t - pair[0].t;
        if dt > 0.0 && pair[0].energy > 0.0 && pair[1].energy > 0.0 {
            adiabaticity = adiabaticity.max(((pair[1].energy / pair[0].energy).ln() / dt).abs());
        }
    }

    let energy_ok = e_min >= thresholds.e_min;
    let alpha_ok = alpha_max <= thresholds.alpha_max;
    let theta_ok = theta_gap_max <= thresholds.theta_gap;
    let adiabatic_ok = adiabaticity <= thresholds.adiabaticity;
    HypothesisDiagnostics {
        e_min,
        alpha_max,
        theta2,
        theta_bar2,
        theta_gap_max,
        warm_fluid,
        warm_gap_ratio,
        warm_identity_residual,
        adiabaticity,
        thresholds: *thresholds,
        energy_ok,
        alpha_ok,
        theta_ok,
        adiabatic_ok,
        satisfied: energy_ok && alpha_ok && theta_ok && adiabatic_ok,
    }
}
