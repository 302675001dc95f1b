//! Dormand-Prince 5(4) with PI step control and 4th-order dense output.

use crate::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Copy, Debug)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; estimated when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self::with_tol(1e-10)
    }
}

impl Dopri5Options {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

/// An accepted step with its continuous extension.
pub struct DenseStep<'a> {
    pub t0: f64,
    pub h: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    rcont: &'a [Vec<f64>; 5],
}

impl DenseStep<'_> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let r = self.rcont;
        r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])))
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        (0..self.y0.len()).map(|i| self.eval_component(t, i)).collect()
    }
}

pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub t: f64,
    pub y: Vec<f64>,
    pub stats: OdeStats,
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &Dopri5Options) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sk) * (e / sk)
        })
        .sum();
    (s / n).sqrt()
}

fn rms_scaled(v: &[f64], y: &[f64], opts: &Dopri5Options) -> f64 {
    let n = v.len().max(1) as f64;
    let s: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let sk = opts.atol + opts.rtol * b.abs();
            (a / sk) * (a / sk)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` towards `t_end` (which may be
/// infinite when the observer stops the run). The observer sees every
/// accepted step. A right-hand-side error inside a step rejects it with a
/// reduced step; the error surfaces only if the step size underflows.
pub fn dopri5<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &Dopri5Options,
    mut observer: O,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(&DenseStep) -> Result<Control>,
{
    let n = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    if t_end == t0 {
        return Ok(OdeSolution { t, y, stats });
    }

    let mut k1 = vec![0.0; n];
    f(t, &y, &mut k1)?;
    stats.evaluations += 1;

    let mut h = match opts.h_init {
        Some(h) => h.abs() * dir,
        None => {
            let d0 = rms_scaled(&y, &y, opts);
            let d1 = rms_scaled(&k1, &y, opts);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(opts.h_max);
            let y1: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + dir * h0 * b).collect();
            let mut f1 = vec![0.0; n];
            let h1 = match f(t + dir * h0, &y1, &mut f1) {
                Ok(()) => {
                    stats.evaluations += 1;
                    let diff: Vec<f64> = f1.iter().zip(&k1).map(|(a, b)| (a - b) / h0).collect();
                    let d2 = rms_scaled(&diff, &y, opts);
                    let m = d1.max(d2);
                    if m <= 1e-15 {
                        (h0 * 1e-3).max(1e-6)
                    } else {
                        (0.01 / m).powf(0.2)
                    }
                }
                Err(_) => h0,
            };
            dir * (100.0 * h0).min(h1).min(opts.h_max)
        }
    };

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut pending_error: Option<Error> = None;
    let beta = 0.04;
    let safe = 0.9;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        if t_end.is_finite() && (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        let underflow = h.abs() <= 1e-14 * t.abs().max(1.0);
        if underflow {
            return Err(pending_error.unwrap_or(Error::StepSizeUnderflow { s: t, h }));
        }

        let stages = (|| -> Result<()> {
            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &ytmp, &mut k2)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &ytmp, &mut k3)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &ytmp, &mut k4)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &ytmp, &mut k5)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, &ytmp, &mut k6)?;
            for i in 0..n {
                ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, &ynew, &mut k7)?;
            Ok(())
        })();

        match stages {
            Ok(()) => {}
            Err(e) => {
                stats.evaluations += 6;
                stats.rejected += 1;
                pending_error = Some(e);
                h *= 0.25;
                last_rejected = true;
                continue;
            }
        }
        stats.evaluations += 6;

        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&err, &y, &ynew, opts);
        if !e.is_finite() {
            stats.rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }
        let fac11 = e.powf(0.2 - beta * 0.75);
        if e <= 1.0 {
            pending_error = None;
            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * k7[i] - bspl;
                rcont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            stats.accepted += 1;
            let step = DenseStep {
                t0: t,
                h,
                y0: &y,
                y1: &ynew,
                rcont: &rcont,
            };
            let control = observer(&step)?;
            t += h;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            if matches!(control, Control::Stop) || (t_end.is_finite() && (t - t_end) * dir >= 0.0) {
                return Ok(OdeSolution { t, y, stats });
            }
            let fac = (fac11 / facold.powf(beta) / safe).clamp(0.1, 5.0);
            let mut hnew = h / fac;
            if last_rejected {
                hnew = dir * hnew.abs().min(h.abs());
            }
            facold = e.max(1e-4);
            h = dir * hnew.abs().min(opts.h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h /= (fac11 / safe).min(5.0);
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = y[1];
        dy[1] = -y[0];
        Ok(())
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let sol = dopri5(
            harmonic,
            0.0,
            &[1.0, 0.0],
            10.0,
            &Dopri5Options::with_tol(1e-12),
            |_| Ok(Control::Continue),
        )
        .unwrap();
        assert_eq!(sol.t, 10.0);
        assert!((sol.y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((sol.y[1] + 10f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let mut worst: f64 = 0.0;
        dopri5(harmonic, 0.0, &[1.0, 0.0], 5.0, &Dopri5Options::with_tol(1e-11), |s| {
            for q in 1..8 {
                let t = s.t0 + s.h * q as f64 / 8.0;
                worst = worst.max((s.eval_component(t, 0) - t.cos()).abs());
            }
            Ok(Control::Continue)
        })
        .unwrap();
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn backward_integration_and_exponential() {
        let sol = dopri5(
            |_t, y, dy| {
                dy[0] = y[0];
                Ok(())
            },
            1.0,
            &[1.0],
            -1.0,
            &Dopri5Options::with_tol(1e-12),
            |_| Ok(Control::Continue),
        )
        .unwrap();
        assert!((sol.y[0] - (-2f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn observer_stop_and_infinite_horizon() {
        let sol = dopri5(
            harmonic,
            0.0,
            &[1.0, 0.0],
            f64::INFINITY,
            &Dopri5Options::default(),
            |s| Ok(if s.t1() > 3.0 { Control::Stop } else { Control::Continue }),
        )
        .unwrap();
        assert!(sol.t > 3.0 && sol.t < 10.0);
    }

    #[test]
    fn rhs_error_surfaces_on_underflow() {
        let res = dopri5(
            |t, _y, dy| {
                if t > 0.5 {
                    Err(Error::ConeProximity { s: t, norm: 0.0 })
                } else {
                    dy[0] = 1.0;
                    Ok(())
                }
            },
            0.0,
            &[0.0],
            1.0,
            &Dopri5Options::default(),
            |_| Ok(Control::Continue),
        );
        assert!(matches!(res, Err(Error::ConeProximity { .. })));
    }

    #[test]
    fn order_is_at_least_four() {
        // error with fixed step sizes h and h/2 via a loose tolerance sweep
        let run = |tol: f64| {
            let sol = dopri5(harmonic, 0.0, &[1.0, 0.0], 20.0, &Dopri5Options::with_tol(tol), |_| {
                Ok(Control::Continue)
            })
            .unwrap();
            ((sol.y[0] - 20f64.cos()).abs(), sol.stats.accepted as f64)
        };
        let (e1, n1) = run(1e-6);
        let (e2, n2) = run(1e-10);
        let order = (e1 / e2).ln() / (n2 / n1).ln();
        assert!(order >= 4.0, "observed order {order}");
    }
}
