//! Invariant suite over the preset fields. Every check reports the
//! measured value next to the tolerance it is held to.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::comparison::run_comparison;
use super::config::{Config, DistKind};
use super::scaling::{loglog_fit, LogLogFit};
use crate::averaging::{
    averaged_gamma, coefficient_distance, connection_difference, connection_distance, delta_tensor, distance_bound,
    AveragedConnection, BoundConstants,
};
use crate::connections::{decompose_lt, lorentz_gamma, spray_at, ConnectionField, LorentzConnection, TildeConnection};
use crate::dynamics::{constraint_drift, integrate_autoparallel, integrate_lorentz, IntegrationOptions};
use crate::fields::{
    gauge_transform, preset_field, ExteriorDerivative, FaradayField, FieldParams, FnScalarField, PresetField,
};
use crate::geometry::{MetricField, Minkowski};
use crate::kinetics::{
    boosted_velocity, fiber_sample, moments, FiberFrame, HyperboloidDistribution, Particle, QuadratureOptions,
    SUPPORT_THRESHOLD,
};
use crate::{Matrix, Result, Tensor3, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= tolerance,
            value,
            tolerance,
        }
    }
}

fn mink(n: usize) -> Minkowski {
    Minkowski::new(n).expect("n >= 2")
}

fn preset(name: &str, n: usize) -> PresetField {
    preset_field(name, &FieldParams::default(), n).expect("preset exists")
}

/// `a sin(k.x + phi) + (c.x)^2 / 2 + b x^0 x^1` with analytic derivatives.
pub fn random_gauge(rng: &mut impl Rng, n: usize) -> FnScalarField {
    let a: f64 = rng.random_range(-2.0..2.0);
    let b: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let k = Vector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
    let c = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let (k1, k2, c1, c2) = (k.clone(), k.clone(), c.clone(), c.clone());
    let (kk, cc) = (k.clone(), c.clone());
    FnScalarField::new(move |x: &Vector| a * (kk.dot(x) + phi).sin() + 0.5 * cc.dot(x).powi(2) + b * x[0] * x[1])
        .with_gradient(move |x: &Vector| {
            let mut g = &k1 * (a * (k1.dot(x) + phi).cos()) + &c1 * c1.dot(x);
            g[0] += b * x[1];
            g[1] += b * x[0];
            g
        })
        .with_hessian(move |x: &Vector| {
            let mut h: Matrix = &k2 * k2.transpose() * (-a * (k2.dot(x) + phi).sin()) + &c2 * c2.transpose();
            h[(0, 1)] += b;
            h[(1, 0)] += b;
            h
        })
}

/// Admissible state with `y` inside the future cone but off the hyperboloid.
fn random_admissible(rng: &mut ChaCha8Rng) -> (Vector, Vector) {
    let x = Vector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
    let sp = Vector::from_fn(3, |_, _| rng.random_range(-1.5..1.5));
    let y0 = (1.0 + sp.norm_squared()).sqrt() * rng.random_range(1.0..1.6);
    (x, Vector::from_vec(vec![y0, sp[0], sp[1], sp[2]]))
}

fn random_unit(rng: &mut ChaCha8Rng) -> (Vector, Vector) {
    let x = Vector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
    let sp = Vector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
    (
        x,
        Vector::from_vec(vec![(1.0 + sp.norm_squared()).sqrt(), sp[0], sp[1], sp[2]]),
    )
}

/// Largest change of the Lorentz and averaged coefficients under `trials`
/// random gauge transformations of the `crossed_EB` and `quadrupole`
/// potentials.
pub fn gauge_invariance(trials: usize, seed: u64) -> Result<f64> {
    let metric = mink(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moms = moments(
        &HyperboloidDistribution::gaussian_bump(boosted_velocity(4, 1.0, &[1.0, 0.0, 0.0])?, 0.05, 4.0),
        &metric,
        &Vector::zeros(4),
    )?;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let base = preset(if t % 2 == 0 { "crossed_EB" } else { "quadrupole" }, 4);
        let moved = ExteriorDerivative(gauge_transform(base.clone(), random_gauge(&mut rng, 4)));
        let plain = ExteriorDerivative(base);
        let (x, y) = random_admissible(&mut rng);
        let a = lorentz_gamma(&metric, &plain, &x, &y)?;
        let b = lorentz_gamma(&metric, &moved, &x, &y)?;
        worst = worst.max(a.max_abs_diff(&b));
        let a = averaged_gamma(&metric, &plain, &moms, &x)?;
        let b = averaged_gamma(&metric, &moved, &moms, &x)?;
        worst = worst.max(a.max_abs_diff(&b));
    }
    Ok(worst)
}

/// Largest deviation between half the finite-difference Hessian of the
/// spray (step `h`) and the Lorentz coefficients.
pub fn hessian_identity(states: usize, h: f64, seed: u64) -> Result<f64> {
    let metric = mink(4);
    let f = preset("crossed_EB", 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let (x, y) = random_admissible(&mut rng);
        let gamma = lorentz_gamma(&metric, &f, &x, &y)?;
        let g = |v: &Vector| spray_at(&metric, &f, &x, v).map(|s| s.0);
        for j in 0..4 {
            for k in 0..4 {
                let shift = |a: f64, b: f64| {
                    let mut v = y.clone();
                    v[j] += a;
                    v[k] += b;
                    g(&v)
                };
                let d2 = (shift(h, h)? - shift(h, -h)? - shift(-h, h)? + shift(-h, -h)?) / (4.0 * h * h);
                for i in 0..4 {
                    worst = worst.max((0.5 * d2[i] - gamma[(i, j, k)]).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Largest `|T(y, y)|` over random hyperboloid states.
pub fn transversality(states: usize, seed: u64) -> Result<f64> {
    let metric = mink(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for s in 0..states {
        let f = preset(["uniform_E", "uniform_B", "crossed_EB", "quadrupole"][s % 4], 4);
        let (x, y) = random_unit(&mut rng);
        let (_, t) = decompose_lt(&metric, &f, &x, &y)?;
        worst = worst.max(t.contract(&y, &y).amax());
    }
    Ok(worst)
}

/// Largest divergence between the Lorentz and averaged trajectories for a
/// Dirac distribution (both position and velocity).
pub fn cold_fluid_divergence(t_end: f64, tol: f64) -> Result<f64> {
    let mut cfg = Config::default();
    cfg.dist.kind = DistKind::Dirac;
    cfg.run.t = t_end;
    cfg.run.tol = tol;
    let report = run_comparison(&cfg)?;
    Ok(report.series.iter().map(|p| p.div_x.max(p.div_v)).fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticDynamics {
    /// Distance from the start after one lab period over the radius.
    pub cyclotron_closure: f64,
    /// Largest deviation from the hyperbolic-motion profile.
    pub hyperbolic_error: f64,
    /// Largest `|eta(y,y) - 1|` over both runs.
    pub drift: f64,
}

/// Cyclotron orbit (`v = 0.6`, `B = 1`) and hyperbolic motion (`E = 0.8`).
pub fn analytic_dynamics(tol: f64) -> Result<AnalyticDynamics> {
    let metric = mink(4);
    let opts = IntegrationOptions {
        tol,
        n_out: 200,
        ..Default::default()
    };
    let v: f64 = 0.6;
    let g = 1.0 / (1.0 - v * v).sqrt();
    let y0 = Vector::from_vec(vec![g, g * v, 0.0, 0.0]);
    let period = 2.0 * PI * g;
    let tr = integrate_lorentz(&metric, &preset("uniform_B", 4), &Vector::zeros(4), &y0, period, &opts)?;
    let cyclotron_closure = tr.last().x.rows(1, 3).norm() / (g * v);
    let mut drift = constraint_drift(&tr, &metric);

    let e = 0.8;
    let field = preset_field(
        "uniform_E",
        &FieldParams {
            e0: Some(e),
            ..Default::default()
        },
        4,
    )?;
    let rest = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    let tr = integrate_lorentz(&metric, &field, &Vector::zeros(4), &rest, 5.0, &opts)?;
    let mut hyperbolic_error: f64 = 0.0;
    for s in &tr.samples {
        let et = e * s.tau;
        for d in [
            s.y[0] - et.cosh(),
            s.y[1] + et.sinh(),
            s.x[1] + (et.cosh() - 1.0) / e,
            s.t - et.sinh() / e,
        ] {
            hyperbolic_error = hyperbolic_error.max(d.abs());
        }
    }
    drift = drift.max(constraint_drift(&tr, &metric));
    Ok(AnalyticDynamics {
        cyclotron_closure,
        hyperbolic_error,
        drift,
    })
}

/// Largest difference between the averaged coefficients and the weighted
/// sum of per-point Lorentz coefficients over a five-point ensemble in
/// two dimensions.
pub fn averaging_oracle() -> Result<f64> {
    let metric = mink(2);
    let x = Vector::from_vec(vec![0.2, 0.3]);
    let mut worst: f64 = 0.0;
    for e0 in [0.7, -1.3] {
        let f = preset_field(
            "uniform_E",
            &FieldParams {
                e0: Some(e0),
                ..Default::default()
            },
            2,
        )?;
        let rap = [0.1, 0.5, 0.9, 1.2, -0.3];
        let wts = [0.1, 0.3, 0.2, 0.25, 0.15];
        let particles: Vec<Particle> = rap
            .iter()
            .zip(wts)
            .map(|(&r, w)| Particle {
                x: x.clone(),
                y: Vector::from_vec(vec![f64::cosh(r), f64::sinh(r)]),
                weight: w,
            })
            .collect();
        let moms = moments(&HyperboloidDistribution::ensemble(particles.clone()), &metric, &x)?;
        let avg = averaged_gamma(&metric, &f, &moms, &x)?;
        let mut brute = Tensor3::zeros(2);
        for p in &particles {
            brute = brute.combine(1.0, lorentz_gamma(&metric, &f, &x, &p.y)?.tensor(), p.weight);
        }
        worst = worst.max(avg.tensor().max_abs_diff(&brute));
    }
    Ok(worst)
}

/// Largest residual between the closed-form difference and direct
/// subtraction at support points of narrow bumps.
pub fn decomposition_residual(seed: u64) -> Result<f64> {
    let metric = mink(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Vector::from_vec(vec![0.0, 0.3, -0.2, 0.1]);
    let mut worst: f64 = 0.0;
    for (rap, sigma) in [(0.8, 0.03), (2.0, 0.01), (3.0, 0.005)] {
        let center = boosted_velocity(4, rap, &[1.0, 0.5, 0.0])?;
        let dist = HyperboloidDistribution::gaussian_bump(center.clone(), sigma, 4.0);
        let moms = moments(&dist, &metric, &x)?;
        let frame = FiberFrame::new(&Minkowski::matrix(4), &center)?;
        for name in ["uniform_B", "crossed_EB", "quadrupole"] {
            let f = preset(name, 4);
            for _ in 0..10 {
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0 * sigma..2.0 * sigma)).collect();
                let rep = connection_difference(&metric, &f, &moms, &x, &frame.point(&w))?;
                worst = worst.max(rep.residual);
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBoundPoint {
    pub alpha: f64,
    pub distance: f64,
    pub bound: f64,
}

/// Measured connection distance against its bound for gaussian bumps of
/// diameter `alpha` in `uniform_B` at the origin.
pub fn distance_bound_sweep(
    field: &str,
    alphas: &[f64],
    rapidity: f64,
    samples: usize,
) -> Result<Vec<DistanceBoundPoint>> {
    let metric: Arc<dyn MetricField> = Arc::new(mink(4));
    let f: Arc<dyn FaradayField> = Arc::new(preset(field, 4));
    let x = Vector::zeros(4);
    let center = boosted_velocity(4, rapidity, &[1.0, 0.0, 0.0])?;
    let r_cut = 4.0;
    alphas
        .iter()
        .map(|&alpha| {
            let dist = HyperboloidDistribution::gaussian_bump(center.clone(), alpha / (2.0 * r_cut), r_cut);
            let moms = moments(&dist, metric.as_ref(), &x)?;
            let lor = LorentzConnection::new(metric.clone(), f.clone());
            let avg = AveragedConnection::new(metric.clone(), f.clone(), Arc::new(moms.clone()));
            let d = connection_distance(&lor, &avg, metric.as_ref(), &dist, &x, samples)?;
            let bound = distance_bound(metric.as_ref(), f.as_ref(), &moms, &x, &BoundConstants::default())?;
            Ok(DistanceBoundPoint {
                alpha: moms.alpha,
                distance: d.value,
                bound,
            })
        })
        .collect()
}

pub fn distance_exponent(points: &[DistanceBoundPoint]) -> Result<LogLogFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.alpha).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.distance).collect();
    loglog_fit(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricAxioms {
    /// Largest `|d(A,B) - d(B,A)|`.
    pub asymmetry: f64,
    /// Largest `d(A,A)`.
    pub self_distance: f64,
    /// Largest `d(A,C) - d(A,B) - d(B,C)`, negative when all hold.
    pub triangle_excess: f64,
}

/// Metric axioms of the coefficient distance on random coefficient triples
/// with directions drawn from a bump support.
pub fn metric_axioms(trials: usize, seed: u64) -> Result<MetricAxioms> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = boosted_velocity(4, 1.0, &[0.0, 1.0, 0.0])?;
    let frame = FiberFrame::new(&Minkowski::matrix(4), &center)?;
    let dirs: Vec<Vector> = (0..64)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-0.1..0.1)).collect();
            frame.point(&w)
        })
        .collect();
    let g = crate::geometry::eta_bar_at(&mink(4), &center, &Vector::zeros(4))?;
    let mut out = MetricAxioms {
        asymmetry: 0.0,
        self_distance: 0.0,
        triangle_excess: f64::NEG_INFINITY,
    };
    for _ in 0..trials {
        let mut t = || Tensor3::from_fn(4, |_, _, _| rng.random_range(-1.0..1.0));
        let (a, b, c) = (t(), t(), t());
        let d = |p: &Tensor3, q: &Tensor3| coefficient_distance(p, q, &g, &dirs);
        out.asymmetry = out.asymmetry.max((d(&a, &b) - d(&b, &a)).abs());
        out.self_distance = out.self_distance.max(d(&a, &a));
        out.triangle_excess = out.triangle_excess.max(d(&a, &c) - d(&a, &b) - d(&b, &c));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaBounds {
    /// `max |delta|_eta_bar - 2 alpha` over the support.
    pub norm_excess: f64,
    /// `max |delta . y| - 2 alpha - alpha^2` over the support.
    pub contraction_excess: f64,
}

/// Both bounds on `delta = <y> - y` over the support nodes of gaussian
/// bumps and a uniform ball.
pub fn delta_bounds() -> Result<DeltaBounds> {
    let metric = mink(4);
    let x = Vector::zeros(4);
    let eta = Minkowski::matrix(4);
    let mut out = DeltaBounds {
        norm_excess: f64::NEG_INFINITY,
        contraction_excess: f64::NEG_INFINITY,
    };
    let dists = [
        HyperboloidDistribution::gaussian_bump(boosted_velocity(4, 1.0, &[1.0, 0.0, 0.0])?, 0.0125, 4.0),
        HyperboloidDistribution::gaussian_bump(boosted_velocity(4, 3.0, &[1.0, 1.0, 0.0])?, 0.025, 4.0),
        HyperboloidDistribution::uniform_ball(boosted_velocity(4, 2.0, &[0.0, 0.0, 1.0])?, 0.1),
    ];
    for dist in &dists {
        let opts = QuadratureOptions {
            nodes_per_axis: Some(16),
        };
        let sample = fiber_sample(dist, &metric, &x, &opts)?;
        let moms = crate::kinetics::moments_of_sample(&sample, &eta)?;
        let g = moms.eta_bar(&eta)?;
        let max_density = sample.density.iter().copied().fold(0.0, f64::max);
        let a = moms.alpha;
        for (y, d) in sample.points.iter().zip(&sample.density) {
            if *d <= SUPPORT_THRESHOLD * max_density {
                continue;
            }
            let delta = delta_tensor(&moms, y);
            out.norm_excess = out.norm_excess.max(g.norm(&delta) - 2.0 * a);
            out.contraction_excess = out
                .contraction_excess
                .max(delta.dot(&(&eta * y)).abs() - 2.0 * a - a * a);
        }
    }
    Ok(out)
}

/// Largest coordinate difference between the direct Lorentz solution and
/// the auto-parallels of the Lorentz and alternate connections.
pub fn autoparallel_equivalence(tol: f64) -> Result<f64> {
    let metric: Arc<dyn MetricField> = Arc::new(mink(4));
    let f: Arc<dyn FaradayField> = Arc::new(preset_field(
        "crossed_EB",
        &FieldParams {
            e0: Some(0.3),
            ..Default::default()
        },
        4,
    )?);
    let y0 = boosted_velocity(4, 1.1, &[1.0, 0.0, 0.0])?;
    let x0 = Vector::zeros(4);
    let opts = IntegrationOptions {
        tol,
        n_out: 100,
        ..Default::default()
    };
    let direct = integrate_lorentz(metric.as_ref(), f.as_ref(), &x0, &y0, 10.0, &opts)?;
    let mut worst: f64 = 0.0;
    for conn in [
        Arc::new(LorentzConnection::new(metric.clone(), f.clone())) as Arc<dyn ConnectionField>,
        Arc::new(TildeConnection::new(metric.clone(), f.clone())),
    ] {
        let auto = integrate_autoparallel(conn.as_ref(), metric.as_ref(), &x0, &y0, 10.0, &opts)?;
        for (a, b) in auto.samples.iter().zip(&direct.samples) {
            worst = worst.max((&a.x - &b.x).amax());
        }
    }
    Ok(worst)
}

/// Runs the whole suite.
pub fn run_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        CheckResult::at_most("gauge_invariance", gauge_invariance(20, seed)?, 1e-10),
        CheckResult::at_most("hessian_identity", hessian_identity(100, 1e-4, seed)?, 1e-6),
        CheckResult::at_most("transversality", transversality(100, seed)?, 1e-12),
    ];
    let tol = 1e-10;
    out.push(CheckResult::at_most(
        "cold_fluid",
        cold_fluid_divergence(20.0, tol)?,
        10.0 * tol,
    ));
    let dynamics = analytic_dynamics(1e-12)?;
    out.push(CheckResult::at_most(
        "cyclotron_closure",
        dynamics.cyclotron_closure,
        1e-8,
    ));
    out.push(CheckResult::at_most(
        "hyperbolic_motion",
        dynamics.hyperbolic_error,
        1e-8,
    ));
    out.push(CheckResult::at_most("constraint_drift", dynamics.drift, 1e-8));
    out.push(CheckResult::at_most("averaging_oracle", averaging_oracle()?, 1e-12));
    out.push(CheckResult::at_most(
        "difference_decomposition",
        decomposition_residual(seed)?,
        1e-10,
    ));
    let sweep = distance_bound_sweep("uniform_B", &[0.05, 0.1, 0.2], 1.0, 500)?;
    let worst = sweep.iter().map(|p| p.distance / p.bound).fold(0.0, f64::max);
    out.push(CheckResult::at_most("distance_bound_ratio", worst, 1.0));
    let axioms = metric_axioms(1000, seed)?;
    out.push(CheckResult::at_most("distance_symmetry", axioms.asymmetry, 0.0));
    out.push(CheckResult::at_most("distance_identity", axioms.self_distance, 0.0));
    out.push(CheckResult::at_most("distance_triangle", axioms.triangle_excess, 1e-12));
    let delta = delta_bounds()?;
    out.push(CheckResult::at_most("delta_norm", delta.norm_excess, 1e-6));
    out.push(CheckResult::at_most(
        "delta_contraction",
        delta.contraction_excess,
        1e-6,
    ));
    out.push(CheckResult::at_most(
        "autoparallel_equivalence",
        autoparallel_equivalence(tol)?,
        10.0 * tol,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarField;

    #[test]
    fn random_gauge_derivatives_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lam = random_gauge(&mut rng, 4);
        let x = Vector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (lam.value(&xp) - lam.value(&xm)) / (2.0 * h);
            assert!((fd - lam.gradient(&x)[i]).abs() < 1e-8);
            let fd = (lam.gradient(&xp) - lam.gradient(&xm)) / (2.0 * h);
            assert!((fd - lam.hessian(&x).column(i)).amax() < 1e-7);
        }
    }

    #[test]
    fn quick_checks_pass() {
        assert!(gauge_invariance(4, 2).unwrap() <= 1e-10);
        assert!(transversality(20, 2).unwrap() <= 1e-12);
        assert!(averaging_oracle().unwrap() <= 1e-12);
        let ax = metric_axioms(50, 2).unwrap();
        assert_eq!(ax.asymmetry, 0.0);
        assert_eq!(ax.self_distance, 0.0);
        assert!(ax.triangle_excess <= 1e-12);
    }

    #[test]
    fn check_result_compares_against_tolerance() {
        assert!(CheckResult::at_most("a", 1.0, 1.0).pass);
        assert!(!CheckResult::at_most("a", 1.5, 1.0).pass);
        assert!(!CheckResult::at_most("a", f64::NAN, 1.0).pass);
    }
}
