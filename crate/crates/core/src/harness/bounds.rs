//! Closed-form divergence bounds and the validity horizon.

use crate::{Error, Result};

fn check_inputs(alpha: f64, energy: f64, t: f64, norm_f: f64, constants: &[f64]) -> Result<()> {
    if !(energy > 0.0) {
        return Err(Error::OutOfRange(format!("energy must be positive, got {energy}")));
    }
    for (name, v) in [("alpha", alpha), ("t", t), ("norm_F", norm_f)] {
        if !(v >= 0.0) {
            return Err(Error::OutOfRange(format!("{name} must be nonnegative, got {v}")));
        }
    }
    if constants.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::OutOfRange(format!(
            "constants must be nonnegative, got {constants:?}"
        )));
    }
    Ok(())
}

/// `2 (C |F| + C2^2 (1 + B2 alpha)) alpha^2 E^-2 t^2`
pub fn position_bound(alpha: f64, energy: f64, t: f64, norm_f: f64, c: f64, c2: f64, b2: f64) -> Result<f64> {
    check_inputs(alpha, energy, t, norm_f, &[c, c2, b2])?;
    Ok(2.0 * (c * norm_f + c2 * c2 * (1.0 + b2 * alpha)) * alpha * alpha * t * t / (energy * energy))
}

/// `(K |F| + K2^2 (1 + D2 alpha)) alpha^2 E^-1 t`
pub fn velocity_bound(alpha: f64, energy: f64, t: f64, norm_f: f64, k: f64, k2: f64, d2: f64) -> Result<f64> {
    check_inputs(alpha, energy, t, norm_f, &[k, k2, d2])?;
    Ok((k * norm_f + k2 * k2 * (1.0 + d2 * alpha)) * alpha * alpha * t / energy)
}

/// Lab time after which the averaged and true trajectories are expected to
/// separate by `l0`: `E (l0 / (alpha C |F|))^(1/2)`.
pub fn t_max_estimate(energy: f64, alpha: f64, l0: f64, c: f64, norm_f: f64) -> Result<f64> {
    let denom = alpha * c * norm_f;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::OutOfRange(format!(
            "validity horizon needs alpha C |F| > 0, got {denom}"
        )));
    }
    if !(l0 >= 0.0) {
        return Err(Error::OutOfRange(format!("L0 must be nonnegative, got {l0}")));
    }
    Ok(energy * (l0 / denom).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn position_bound_examples() {
        assert_eq!(position_bound(0.0, 10.0, 5.0, 1.0, 2.0, 1.0, 1.0).unwrap(), 0.0);
        let b = position_bound(0.1, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((b - 4.2e-4).abs() < 1e-18);
        let b2 = position_bound(0.1, 10.0, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((b2 - 4.0 * b).abs() < 1e-18);
        assert!(position_bound(0.1, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(position_bound(-0.1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn velocity_bound_examples() {
        assert_eq!(velocity_bound(0.0, 10.0, 5.0, 1.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
        let b = velocity_bound(0.1, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((b - 2.1e-3).abs() < 1e-17);
        let b2 = velocity_bound(0.1, 10.0, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((b2 - 2.0 * b).abs() < 1e-17);
        assert!(velocity_bound(0.1, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn horizon_examples() {
        assert!((t_max_estimate(100.0, 0.01, 1.0, 1.0, 1.0).unwrap() - 1000.0).abs() < 1e-9);
        let a = t_max_estimate(10.0, 0.04, 1.0, 2.0, 1.0).unwrap();
        assert!((t_max_estimate(20.0, 0.04, 1.0, 2.0, 1.0).unwrap() - 2.0 * a).abs() < 1e-12);
        assert!((t_max_estimate(10.0, 0.01, 1.0, 2.0, 1.0).unwrap() - 2.0 * a).abs() < 1e-12);
        assert!(t_max_estimate(10.0, 0.0, 1.0, 2.0, 1.0).is_err());
        assert!(t_max_estimate(10.0, 0.1, 1.0, 2.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn position_bound_is_monotone(
            alpha in 0.0..0.5f64, e in 1.0..100.0f64, t in 0.0..50.0f64, f in 0.0..5.0f64,
            da in 0.0..0.1f64, de in 0.0..10.0f64, dt in 0.0..5.0f64, df in 0.0..1.0f64,
        ) {
            let b = position_bound(alpha, e, t, f, 2.0, 1.0, 1.0).unwrap();
            prop_assert!(b >= 0.0);
            prop_assert!(position_bound(alpha + da, e, t, f, 2.0, 1.0, 1.0).unwrap() >= b);
            prop_assert!(position_bound(alpha, e, t + dt, f, 2.0, 1.0, 1.0).unwrap() >= b);
            prop_assert!(position_bound(alpha, e, t, f + df, 2.0, 1.0, 1.0).unwrap() >= b);
            prop_assert!(position_bound(alpha, e + de, t, f, 2.0, 1.0, 1.0).unwrap() <= b);
        }
    }
}
