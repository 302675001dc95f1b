//! Paired integration of the Lorentz trajectory, the averaged trajectory
//! and the transported ensemble, with divergences measured against the
//! closed-form bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{position_bound, t_max_estimate, velocity_bound};
use super::config::{Config, DistKind, MomentMode, Thresholds};
use super::hypotheses::{check_hypotheses, DiagnosticSample, HypothesisDiagnostics};
use crate::averaging::{averaged_acceleration_of_sample, BoundConstants};
use crate::connections::spray_at;
use crate::fields::FaradayField;
use crate::geometry::{operator_norm, MetricField, PointGeometry, RiemannianMetric};
use crate::kinetics::{
    fiber_sample, moments_of_sample, moments_with, sample_ensemble, FiberSample, MomentSet, Particle,
    QuadratureOptions, SUPPORT_THRESHOLD,
};
use crate::ode::{dopri5, Control, DenseStep, Dopri5Options};
use crate::{Error, Result, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub div_x: f64,
    pub bound_x: f64,
    pub div_v: f64,
    pub bound_v: f64,
}

/// The constants entering the position and velocity bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConstants {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
}

impl From<&BoundConstants> for ReportConstants {
    fn from(b: &BoundConstants) -> Self {
        Self {
            c: b.c,
            c2: b.c2,
            b2: b.b2,
            k: b.k,
            k2: b.k2,
            d2: b.d2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub energy: f64,
    #[serde(rename = "norm_F")]
    pub norm_f: f64,
    pub constants: ReportConstants,
    pub series: Vec<SeriesPoint>,
    pub hypotheses: HypothesisDiagnostics,
    pub pass: bool,
    /// Diameter and energy of the initial distribution; `alpha` and
    /// `energy` above are the sup and inf over the run.
    pub alpha_initial: f64,
    pub energy_initial: f64,
    /// Smallest factor on the position bound for which the inequality
    /// holds at every output time; absent when the bound vanishes.
    pub multiplier_x: Option<f64>,
    pub multiplier_v: Option<f64>,
    /// Validity horizon; absent when `alpha |F| = 0`.
    pub t_max: Option<f64>,
    pub mode: MomentMode,
    pub tol: f64,
    pub particles: usize,
    pub steps: usize,
    pub rejected: usize,
}

/// One point of a curve in lab time; `s` is its own parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub s: f64,
    pub x: Vector,
    pub y: Vector,
}

#[derive(Clone, Debug)]
pub struct ComparisonRun {
    pub report: ComparisonReport,
    pub lorentz: Vec<CurvePoint>,
    pub averaged: Vec<CurvePoint>,
    pub ensemble: Vec<(f64, Vec<Particle>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareOptions {
    pub t_end: f64,
    pub tol: f64,
    pub n_out: usize,
    pub mode: MomentMode,
    pub constants: BoundConstants,
    pub thresholds: Thresholds,
    pub l0: f64,
}

impl CompareOptions {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            t_end: cfg.run.t,
            tol: cfg.run.tol,
            n_out: cfg.run.n_out,
            mode: cfg.run.mode,
            constants: cfg.constants,
            thresholds: cfg.hypotheses,
            l0: cfg.run.l0,
        }
    }
}

/// Initial ensemble for a configuration: the quadrature nodes inside the
/// support as weighted particles, or `dist.N` Monte Carlo samples.
pub fn initial_ensemble(cfg: &Config, metric: &dyn MetricField, x0: &Vector) -> Result<FiberSample> {
    let dist = cfg.distribution()?;
    if let (Some(count), true) = (cfg.dist.n, cfg.dist.kind != DistKind::Dirac) {
        let particles = sample_ensemble(&dist, metric, x0, count, cfg.seed())?;
        return Ok(FiberSample {
            density: particles.iter().map(|p| p.weight).collect(),
            weights: particles.iter().map(|p| p.weight).collect(),
            points: particles.into_iter().map(|p| p.y).collect(),
        });
    }
    let opts = QuadratureOptions {
        nodes_per_axis: cfg.dist.nodes.or(Some(default_nodes(cfg.dimension))),
    };
    let full = fiber_sample(&dist, metric, x0, &opts)?;
    let max_density = full.density.iter().copied().fold(0.0, f64::max);
    let mut sample = FiberSample {
        points: Vec::new(),
        weights: Vec::new(),
        density: Vec::new(),
    };
    for ((p, w), d) in full.points.into_iter().zip(full.weights).zip(full.density) {
        if d > SUPPORT_THRESHOLD * max_density {
            sample.points.push(p);
            sample.weights.push(w);
            sample.density.push(d);
        }
    }
    Ok(sample)
}

fn default_nodes(n: usize) -> usize {
    match n {
        2 => 32,
        3 => 12,
        _ => 8,
    }
}

/// Runs the comparison described by `cfg` from the origin.
pub fn run_comparison(cfg: &Config) -> Result<ComparisonReport> {
    Ok(run_comparison_full(cfg)?.report)
}

pub fn run_comparison_full(cfg: &Config) -> Result<ComparisonRun> {
    cfg.validate()?;
    let metric = cfg.metric_field()?;
    let field = cfg.field_preset()?;
    let x0 = Vector::zeros(cfg.dimension);
    let ensemble = initial_ensemble(cfg, &metric, &x0)?;
    // the full-resolution quadrature sees the support edge better than
    // the transported node set
    let reference = match cfg.dist.kind {
        DistKind::Dirac => None,
        _ => Some(moments_with(
            &cfg.distribution()?,
            &metric,
            &x0,
            &QuadratureOptions::default(),
        )?),
    };
    compare_ensemble(
        &metric,
        &field,
        &x0,
        &ensemble,
        reference.as_ref(),
        &CompareOptions::from_config(cfg),
    )
}

/// Support points and weights of the ensemble read off a state vector.
type EnsembleAt<'a> = dyn Fn(&[f64]) -> (Vec<Vector>, Vec<f64>) + Sync + 'a;

struct Layout {
    n: usize,
    particles: usize,
}

impl Layout {
    fn particle(&self, p: usize) -> usize {
        2 * self.n * p
    }
    fn lorentz(&self) -> usize {
        2 * self.n * self.particles
    }
    fn averaged(&self) -> usize {
        self.lorentz() + 2 * self.n + 1
    }
    fn len(&self) -> usize {
        self.averaged() + 2 * self.n + 1
    }
}

/// Lab-time derivative of `(x, y)` under the Lorentz force.
fn lorentz_rhs(metric: &dyn MetricField, faraday: &dyn FaradayField, t: f64, u: &[f64], du: &mut [f64]) -> Result<()> {
    let n = u.len() / 2;
    let x = Vector::from_column_slice(&u[..n]);
    let y = Vector::from_column_slice(&u[n..2 * n]);
    if !(y[0] > 0.0) {
        return Err(Error::NonPositiveTime(y[0]));
    }
    let g = spray_at(metric, faraday, &x, &y).map_err(|e| match e {
        Error::OutsideAdmissible { norm } => Error::ConeProximity { s: t, norm },
        other => other,
    })?;
    for i in 0..n {
        du[i] = y[i] / y[0];
        du[n + i] = -g.0[i] / y[0];
    }
    Ok(())
}

/// Integrates the ensemble, the Lorentz trajectory and the averaged
/// trajectory from `x0` with the common initial velocity `<y>/|<y>|`.
pub fn compare_ensemble(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x0: &Vector,
    ensemble: &FiberSample,
    reference: Option<&MomentSet>,
    opts: &CompareOptions,
) -> Result<ComparisonRun> {
    let n = metric.dimension();
    if ensemble.points.is_empty() {
        return Err(Error::EmptySupport(0.0));
    }
    if !(opts.t_end > 0.0) || opts.n_out == 0 {
        return Err(Error::OutOfRange("comparison needs T > 0 and n_out >= 1".into()));
    }
    let eta0 = metric.metric(x0);
    let moms0 = moments_of_sample(ensemble, &eta0)?;
    let u0 = moms0.mean_direction(&eta0)?;

    let layout = Layout {
        n,
        particles: ensemble.points.len(),
    };
    let mut state = vec![0.0; layout.len()];
    for (p, y) in ensemble.points.iter().enumerate() {
        let o = layout.particle(p);
        state[o..o + n].copy_from_slice(x0.as_slice());
        state[o + n..o + 2 * n].copy_from_slice(y.as_slice());
    }
    for o in [layout.lorentz(), layout.averaged()] {
        state[o..o + n].copy_from_slice(x0.as_slice());
        state[o + n..o + 2 * n].copy_from_slice(u0.as_slice());
    }
    let y0_time: Vec<f64> = ensemble.points.iter().map(|y| y[0]).collect();
    let frozen_points = ensemble.points.clone();

    let ensemble_at = |u: &[f64]| -> (Vec<Vector>, Vec<f64>) {
        let points: Vec<Vector> = (0..layout.particles)
            .map(|p| {
                let o = layout.particle(p) + n;
                Vector::from_column_slice(&u[o..o + n])
            })
            .collect();
        let weights = points
            .iter()
            .zip(&ensemble.weights)
            .zip(&y0_time)
            .map(|((y, w), y00)| w * y00 / y[0])
            .collect();
        (points, weights)
    };

    let rhs = |t: f64, u: &[f64], du: &mut [f64]| -> Result<()> {
        let split = layout.lorentz();
        du[..split]
            .par_chunks_mut(2 * n)
            .zip(u[..split].par_chunks(2 * n))
            .try_for_each(|(d, s)| lorentz_rhs(metric, faraday, t, s, d))?;
        let o = layout.lorentz();
        lorentz_rhs(metric, faraday, t, &u[o..o + 2 * n], &mut du[o..o + 2 * n])?;
        du[o + 2 * n] = 1.0 / u[o + n];

        let o = layout.averaged();
        let x = Vector::from_column_slice(&u[o..o + n]);
        let y = Vector::from_column_slice(&u[o + n..o + 2 * n]);
        if !(y[0] > 0.0) {
            return Err(Error::NonPositiveTime(y[0]));
        }
        let a = match opts.mode {
            MomentMode::Vlasov => {
                let (points, weights) = ensemble_at(u);
                averaged_acceleration_of_sample(metric, faraday, &x, &y, &points, &weights)?
            }
            MomentMode::Frozen => {
                averaged_acceleration_of_sample(metric, faraday, &x, &y, &frozen_points, &ensemble.weights)?
            }
        };
        for i in 0..n {
            du[o + i] = y[i] / y[0];
            du[o + n + i] = -a[i] / y[0];
        }
        du[o + 2 * n] = 1.0 / y[0];
        Ok(())
    };

    let targets: Vec<f64> = (0..=opts.n_out)
        .map(|k| opts.t_end * k as f64 / opts.n_out as f64)
        .collect();
    let t0 = x0[0];
    let mut outputs: Vec<(f64, Vec<f64>)> = vec![(0.0, state.clone())];
    let mut next = 1usize;
    let ode_opts = Dopri5Options::with_tol(opts.tol);
    let sol = dopri5(rhs, t0, &state, t0 + opts.t_end, &ode_opts, |step: &DenseStep| {
        while next <= opts.n_out && t0 + targets[next] <= step.t1() {
            let u = if next == opts.n_out && step.t1() == t0 + opts.t_end {
                step.y1.to_vec()
            } else {
                step.eval(t0 + targets[next])
            };
            outputs.push((targets[next], u));
            next += 1;
        }
        Ok(if next > opts.n_out {
            Control::Stop
        } else {
            Control::Continue
        })
    })?;
    if outputs.len() != targets.len() {
        return Err(Error::OutOfRange(format!(
            "integration ended at t = {} before the output grid was covered",
            sol.t
        )));
    }

    assemble(
        metric,
        faraday,
        ensemble,
        reference,
        opts,
        &layout,
        &outputs,
        &ensemble_at,
        sol.stats,
    )
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    ensemble: &FiberSample,
    reference: Option<&MomentSet>,
    opts: &CompareOptions,
    layout: &Layout,
    outputs: &[(f64, Vec<f64>)],
    ensemble_at: &EnsembleAt<'_>,
    stats: crate::ode::OdeStats,
) -> Result<ComparisonRun> {
    let n = layout.n;
    let curve = |o: usize, t: f64, u: &[f64]| CurvePoint {
        t,
        s: u[o + 2 * n],
        x: Vector::from_column_slice(&u[o..o + n]),
        y: Vector::from_column_slice(&u[o + n..o + 2 * n]),
    };
    let identity = RiemannianMetric::identity(n);

    let per_time: Vec<_> = outputs
        .par_iter()
        .map(|(t, u)| -> Result<_> {
            let lor = curve(layout.lorentz(), *t, u);
            let avg = curve(layout.averaged(), *t, u);
            let (points, weights) = ensemble_at(u);
            let sample = FiberSample {
                points,
                weights,
                density: ensemble.density.clone(),
            };
            let geo = PointGeometry::at(metric, &avg.x)?;
            let moms = moments_of_sample(&sample, &geo.eta)?;
            let lgeo = PointGeometry::at(metric, &lor.x)?;
            let norm_f = operator_norm(&identity, &faraday.faraday(&lor.x).mixed(&lgeo.eta_inv));
            let particles: Vec<Particle> = (0..layout.particles)
                .map(|p| {
                    let o = layout.particle(p);
                    Particle {
                        x: Vector::from_column_slice(&u[o..o + n]),
                        y: sample.points[p].clone(),
                        weight: sample.weights[p],
                    }
                })
                .collect();
            Ok((lor, avg, moms, norm_f, particles))
        })
        .collect::<Result<_>>()?;

    let mut alpha = reference.map_or(0.0, |r| r.alpha);
    let mut energy = reference.map_or(f64::INFINITY, |r| r.energy);
    let alpha_initial = alpha.max(per_time[0].2.alpha);
    let energy_initial = energy.min(per_time[0].2.energy);
    let mut norm_f: f64 = 0.0;
    let mut series = Vec::with_capacity(per_time.len());
    let mut diagnostics = Vec::with_capacity(per_time.len());
    let mut pass = true;
    let mut mult_x: Option<f64> = None;
    let mut mult_v: Option<f64> = None;
    let slack = 10.0 * opts.tol;
    let c = &opts.constants;
    for (lor, avg, moms, f, _) in &per_time {
        alpha = alpha.max(moms.alpha);
        energy = energy.min(moms.energy);
        norm_f = norm_f.max(*f);
        let t = lor.t;
        let div_x = (avg.x.rows(1, n - 1) - lor.x.rows(1, n - 1)).norm();
        let div_v = (avg.y.rows(1, n - 1) / avg.y[0] - lor.y.rows(1, n - 1) / lor.y[0]).norm();
        let bound_x = position_bound(alpha, energy, t, norm_f, c.c, c.c2, c.b2)?;
        let bound_v = velocity_bound(alpha, energy, t, norm_f, c.k, c.k2, c.d2)?;
        pass &= div_x <= bound_x + slack && div_v <= bound_v + slack;
        if bound_x > 0.0 {
            mult_x = Some(mult_x.unwrap_or(0.0).max(div_x / bound_x));
        }
        if bound_v > 0.0 {
            mult_v = Some(mult_v.unwrap_or(0.0).max(div_v / bound_v));
        }
        series.push(SeriesPoint {
            t,
            div_x,
            bound_x,
            div_v,
            bound_v,
        });
        diagnostics.push(DiagnosticSample {
            t,
            energy: moms.energy,
            alpha: moms.alpha,
            y: lor.y.clone(),
            mean: moms.m1.clone(),
            y_avg: avg.y.clone(),
            warm: moms.warm_fluid_statistic(&metric.metric(&avg.x)),
        });
    }
    let hypotheses = check_hypotheses(&diagnostics, &opts.thresholds);
    let t_max = t_max_estimate(energy, alpha, opts.l0, opts.constants.c, norm_f).ok();

    let mut lorentz = Vec::with_capacity(per_time.len());
    let mut averaged = Vec::with_capacity(per_time.len());
    let mut snapshots = Vec::with_capacity(per_time.len());
    for (lor, avg, _, _, particles) in per_time {
        snapshots.push((lor.t, particles));
        lorentz.push(lor);
        averaged.push(avg);
    }
    Ok(ComparisonRun {
        report: ComparisonReport {
            alpha,
            energy,
            norm_f,
            constants: ReportConstants::from(&opts.constants),
            series,
            hypotheses,
            pass,
            alpha_initial,
            energy_initial,
            multiplier_x: mult_x,
            multiplier_v: mult_v,
            t_max,
            mode: opts.mode,
            tol: opts.tol,
            particles: layout.particles,
            steps: stats.accepted,
            rejected: stats.rejected,
        },
        lorentz,
        averaged,
        ensemble: snapshots,
    })
}
