//! Auto-parallel and Lorentz-force integration, time reparameterization
//! and hyperboloid constraint monitoring.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::connections::{spray_at, ConnectionField};
use crate::fields::FaradayField;
use crate::geometry::{MetricField, UNIT_TIMELIKE_TOL};
use crate::ode::{dopri5, Control, DenseStep, Dopri5Options};
use crate::tensor::{check_dim, Vector};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub tol: f64,
    /// Number of lab-time intervals in the output grid.
    pub n_out: usize,
    /// Abort when `eta(y,y)` falls below this along velocity-dependent
    /// dynamics.
    pub cone_margin: f64,
    pub max_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            n_out: 200,
            cone_margin: 0.1,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub tau: f64,
    pub t: f64,
    pub x: Vector,
    pub y: Vector,
    /// `dy/dtau`
    pub accel: Vector,
}

/// Which parameter is uniformly spaced in the samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeGrid {
    Lab,
    Proper,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub grid: TimeGrid,
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub tol: f64,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has samples")
    }

    /// Writes `tau, t, x0..x{n-1}, y0..y{n-1}, eta_norm`.
    pub fn write_csv<W: Write>(&self, out: W, metric: &dyn MetricField) -> Result<()> {
        let n = metric.dimension();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tau".to_string(), "t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("y{i}")));
        header.push("eta_norm".into());
        w.write_record(&header).map_err(csv_error)?;
        for s in &self.samples {
            let eta = metric.metric(&s.x);
            let mut row = vec![fmt(s.tau), fmt(s.t)];
            row.extend(s.x.iter().map(|&v| fmt(v)));
            row.extend(s.y.iter().map(|&v| fmt(v)));
            row.push(fmt(s.y.dot(&(&eta * &s.y))));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn check_initial(metric: &dyn MetricField, x0: &Vector, y0: &Vector) -> Result<()> {
    check_dim(metric.dimension(), x0.len())?;
    check_dim(metric.dimension(), y0.len())?;
    if !(y0[0] > 0.0) {
        return Err(Error::NonPositiveTime(y0[0]));
    }
    let eta = metric.metric(x0);
    let q = y0.dot(&(&eta * y0));
    if (q - 1.0).abs() > UNIT_TIMELIKE_TOL {
        return Err(Error::NotOnHyperboloid { norm: q });
    }
    Ok(())
}

/// Solves `x'' + a(x, x') = 0` in its own parameter and samples the curve
/// where `x^0` crosses the lab grid `x0^0 + k T / n_out`.
fn integrate_second_order(
    accel: &dyn Fn(&Vector, &Vector) -> Result<Vector>,
    cone: Option<(&dyn MetricField, f64)>,
    x0: &Vector,
    y0: &Vector,
    t_lab: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let n = x0.len();
    let n_out = opts.n_out.max(1);
    let start = x0[0];
    let dir = if t_lab >= 0.0 { 1.0 } else { -1.0 };
    let targets: Vec<f64> = (0..=n_out).map(|k| start + t_lab * k as f64 / n_out as f64).collect();

    let rhs = |s: f64, u: &[f64], du: &mut [f64]| -> Result<()> {
        let x = Vector::from_column_slice(&u[..n]);
        let y = Vector::from_column_slice(&u[n..]);
        if let Some((metric, margin)) = cone {
            let eta = metric.metric(&x);
            let q = y.dot(&(&eta * &y));
            if !(q >= margin) {
                return Err(Error::ConeProximity { s, norm: q });
            }
        }
        let a = accel(&x, &y)?;
        du[..n].copy_from_slice(&u[n..]);
        for i in 0..n {
            du[n + i] = -a[i];
        }
        Ok(())
    };

    let sample_at = |tau: f64, u: &[f64]| -> Result<TrajectorySample> {
        let x = Vector::from_column_slice(&u[..n]);
        let y = Vector::from_column_slice(&u[n..]);
        let a = -accel(&x, &y)?;
        Ok(TrajectorySample {
            tau,
            t: x[0],
            x,
            y,
            accel: a,
        })
    };

    let mut samples = vec![sample_at(0.0, &[x0.as_slice(), y0.as_slice()].concat())?];
    if n_out == 0 || t_lab == 0.0 {
        return Ok(Trajectory {
            samples,
            grid: TimeGrid::Lab,
            steps: 0,
            rejected: 0,
            evaluations: 0,
            tol: opts.tol,
        });
    }
    let mut next = 1usize;
    let u0: Vec<f64> = x0.iter().chain(y0.iter()).copied().collect();
    let ode_opts = Dopri5Options {
        max_steps: opts.max_steps,
        ..Dopri5Options::with_tol(opts.tol)
    };
    let s_end = dir * f64::INFINITY;
    let sol = dopri5(rhs, 0.0, &u0, s_end, &ode_opts, |step: &DenseStep| {
        let t_a = step.y0[0];
        let t_b = step.y1[0];
        while next <= n_out && (targets[next] - t_b) * dir <= 0.0 {
            let target = targets[next];
            if (target - t_a) * dir < 0.0 {
                return Err(Error::NonPositiveTime(t_b - t_a));
            }
            let s = find_crossing(step, target);
            let u = step.eval(s);
            let mut sample = sample_at(s, &u)?;
            sample.t = target;
            samples.push(sample);
            next += 1;
        }
        if !((t_b - t_a) * dir > 0.0) {
            return Err(Error::NonPositiveTime(t_b - t_a));
        }
        Ok(if next > n_out { Control::Stop } else { Control::Continue })
    })?;
    Ok(Trajectory {
        samples,
        grid: TimeGrid::Lab,
        steps: sol.stats.accepted,
        rejected: sol.stats.rejected,
        evaluations: sol.stats.evaluations,
        tol: opts.tol,
    })
}

/// Parameter inside the dense step at which component 0 equals `target`.
fn find_crossing(step: &DenseStep, target: f64) -> f64 {
    let f = |s: f64| step.eval_component(s, 0) - target;
    let (mut a, mut b) = (step.t0, step.t1());
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    // Illinois variant of regula falsi
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            return c;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    (a * fb - b * fa) / (fb - fa)
}

/// Lorentz force equation `x'' + Gamma x' x' + F(x') sqrt(eta(x', x')) = 0`
/// in proper time, sampled on a lab-time grid of length `t_lab`.
pub fn integrate_lorentz(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x0: &Vector,
    y0: &Vector,
    t_lab: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    check_initial(metric, x0, y0)?;
    let accel = |x: &Vector, y: &Vector| Ok(spray_at(metric, faraday, x, y)?.0);
    integrate_second_order(&accel, Some((metric, opts.cone_margin)), x0, y0, t_lab, opts)
}

/// Auto-parallels `x'' + Gamma(x[, x']) x' x' = 0` of any connection field.
pub fn integrate_autoparallel(
    connection: &dyn ConnectionField,
    metric: &dyn MetricField,
    x0: &Vector,
    y0: &Vector,
    t_lab: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    check_initial(metric, x0, y0)?;
    check_dim(metric.dimension(), connection.dimension())?;
    let accel = |x: &Vector, y: &Vector| connection.acceleration(x, y);
    let cone = if connection.is_affine() {
        None
    } else {
        Some((metric, opts.cone_margin))
    };
    integrate_second_order(&accel, cone, x0, y0, t_lab, opts)
}

/// Quintic Hermite interpolation of one coordinate given value, first and
/// second derivative at both ends; returns value, first and second
/// derivative at `s`.
fn quintic(s0: f64, s1: f64, p0: [f64; 3], p1: [f64; 3], s: f64) -> [f64; 3] {
    let h = s1 - s0;
    let u = (s - s0) / h;
    let (u2, u3, u4, u5) = (u * u, u * u * u, u.powi(4), u.powi(5));
    let h00 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
    let h10 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
    let h20 = 0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5);
    let h01 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5;
    let h11 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5;
    let h21 = 0.5 * (u3 - 2.0 * u4 + u5);
    let d00 = -30.0 * u2 + 60.0 * u3 - 30.0 * u4;
    let d10 = 1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4;
    let d20 = 0.5 * (2.0 * u - 9.0 * u2 + 12.0 * u3 - 5.0 * u4);
    let d01 = -d00;
    let d11 = -12.0 * u2 + 28.0 * u3 - 15.0 * u4;
    let d21 = 0.5 * (3.0 * u2 - 8.0 * u3 + 5.0 * u4);
    let e00 = -60.0 * u + 180.0 * u2 - 120.0 * u3;
    let e10 = -36.0 * u + 96.0 * u2 - 60.0 * u3;
    let e20 = 0.5 * (2.0 - 18.0 * u + 36.0 * u2 - 20.0 * u3);
    let e01 = -e00;
    let e11 = -24.0 * u + 84.0 * u2 - 60.0 * u3;
    let e21 = 0.5 * (6.0 * u - 24.0 * u2 + 20.0 * u3);
    let v = h00 * p0[0] + h * h10 * p0[1] + h * h * h20 * p0[2] + h01 * p1[0] + h * h11 * p1[1] + h * h * h21 * p1[2];
    let d = (d00 * p0[0] + d01 * p1[0]) / h + d10 * p0[1] + d11 * p1[1] + h * (d20 * p0[2] + d21 * p1[2]);
    let dd = (e00 * p0[0] + e01 * p1[0]) / (h * h) + (e10 * p0[1] + e11 * p1[1]) / h + e20 * p0[2] + e21 * p1[2];
    [v, d, dd]
}

fn interpolate(a: &TrajectorySample, b: &TrajectorySample, tau: f64) -> TrajectorySample {
    let n = a.x.len();
    let mut x = Vector::zeros(n);
    let mut y = Vector::zeros(n);
    let mut acc = Vector::zeros(n);
    for i in 0..n {
        let [v, d, dd] = quintic(
            a.tau,
            b.tau,
            [a.x[i], a.y[i], a.accel[i]],
            [b.x[i], b.y[i], b.accel[i]],
            tau,
        );
        x[i] = v;
        y[i] = d;
        acc[i] = dd;
    }
    TrajectorySample {
        tau,
        t: x[0],
        x,
        y,
        accel: acc,
    }
}

/// Resamples on a uniform grid of the target parameter with the same
/// number of samples, using `dt/dtau = y^0`.
pub fn reparameterize(traj: &Trajectory, target: TimeGrid) -> Result<Trajectory> {
    let samples = &traj.samples;
    if samples.iter().any(|s| !(s.y[0] > 0.0)) {
        let bad = samples.iter().find(|s| !(s.y[0] > 0.0)).unwrap();
        return Err(Error::NonPositiveTime(bad.y[0]));
    }
    let m = samples.len();
    if m < 2 {
        return Ok(Trajectory {
            grid: target,
            ..traj.clone()
        });
    }
    let (first, last) = (&samples[0], &samples[m - 1]);
    let mut out = Vec::with_capacity(m);
    let mut seg = 0usize;
    for k in 0..m {
        let frac = k as f64 / (m - 1) as f64;
        let sample = match target {
            TimeGrid::Proper => {
                let tau = first.tau + (last.tau - first.tau) * frac;
                let tau = if k == m - 1 { last.tau } else { tau };
                while seg + 2 < m && (samples[seg + 1].tau - tau) * (last.tau - first.tau) < 0.0 {
                    seg += 1;
                }
                interpolate(&samples[seg], &samples[seg + 1], tau)
            }
            TimeGrid::Lab => {
                let t = first.t + (last.t - first.t) * frac;
                let t = if k == m - 1 { last.t } else { t };
                while seg + 2 < m && (samples[seg + 1].t - t) * (last.t - first.t) < 0.0 {
                    seg += 1;
                }
                let (a, b) = (&samples[seg], &samples[seg + 1]);
                let tau = solve_lab_time(a, b, t);
                let mut s = interpolate(a, b, tau);
                s.t = t;
                s
            }
        };
        out.push(sample);
    }
    out[0] = first.clone();
    Ok(Trajectory {
        samples: out,
        grid: target,
        ..traj.clone()
    })
}

fn solve_lab_time(a: &TrajectorySample, b: &TrajectorySample, t: f64) -> f64 {
    if t == a.t {
        return a.tau;
    }
    if t == b.t {
        return b.tau;
    }
    // Newton on x^0(tau) = t with dx^0/dtau = y^0 > 0, started from the
    // linear guess
    let mut tau = a.tau + (b.tau - a.tau) * (t - a.t) / (b.t - a.t);
    for _ in 0..50 {
        let [v, d, _] = quintic(
            a.tau,
            b.tau,
            [a.x[0], a.y[0], a.accel[0]],
            [b.x[0], b.y[0], b.accel[0]],
            tau,
        );
        let step = (v - t) / d;
        tau -= step;
        if step.abs() <= 1e-16 * (1.0 + tau.abs()) {
            break;
        }
    }
    tau
}

/// `max |eta(y,y) - 1|` over the samples.
pub fn constraint_drift(traj: &Trajectory, metric: &dyn MetricField) -> f64 {
    traj.samples
        .iter()
        .map(|s| {
            let eta = metric.metric(&s.x);
            (s.y.dot(&(&eta * &s.y)) - 1.0).abs()
        })
        .fold(0.0, f64::max)
}
