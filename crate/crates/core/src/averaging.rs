//! The fiber-averaged Lorentz connection, its difference from the Lorentz
//! connection, the connection distance and the convex interpolation family.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::connections::{lorentz_gamma, ConnectionCoefficients, ConnectionField};
use crate::fields::FaradayField;
use crate::geometry::{operator_norm, MetricField, PointGeometry, RiemannianMetric};
use crate::kinetics::{
    fiber_sample, sample_ensemble, HyperboloidDistribution, MomentSet, QuadratureOptions, SUPPORT_THRESHOLD,
};
use crate::tensor::{check_dim, Matrix, Tensor3, Vector};
use crate::{Error, Result};

/// Tolerance on `eta(y,y) = 1` for operations defined on the hyperboloid.
pub const HYPERBOLOID_TOL: f64 = 1e-10;

fn averaged_tensor(geo: &PointGeometry, fm: &Matrix, moms: &MomentSet) -> Tensor3 {
    let n = geo.dimension();
    let eta = &geo.eta;
    let m1_low = geo.lower(&moms.m1);
    let fm1 = fm * &moms.m1;
    // eta_js eta_kl m3^{msl}
    let mut m3_low = Tensor3::zeros(n);
    for m in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut acc = 0.0;
                for s in 0..n {
                    for l in 0..n {
                        acc += eta[(j, s)] * eta[(k, l)] * moms.m3[(m, s, l)];
                    }
                }
                m3_low[(m, j, k)] = acc;
                m3_low[(m, k, j)] = acc;
            }
        }
    }
    let mut out = geo.christoffel.clone();
    for j in 0..n {
        for k in j..n {
            let eta_jk = 0.5 * (eta[(j, k)] + eta[(k, j)]);
            for i in 0..n {
                let mut t = 0.0;
                for m in 0..n {
                    t += fm[(i, m)] * m3_low[(m, j, k)];
                }
                let v = out[(i, j, k)]
                    + 0.5 * (fm[(i, j)] * m1_low[k] + fm[(i, k)] * m1_low[j])
                    + 0.5 * (fm1[i] * eta_jk - t);
                out[(i, j, k)] = v;
                out[(i, k, j)] = v;
            }
        }
    }
    out
}

/// `<Gamma>^i_jk = Gamma^i_jk + (F^i_j <y>_k + F^i_k <y>_j) / 2
///   + F^i_m (<y^m> eta_jk - eta_js eta_kl <y^m y^s y^l>) / 2`.
pub fn averaged_gamma(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    moms: &MomentSet,
    x: &Vector,
) -> Result<ConnectionCoefficients> {
    check_dim(metric.dimension(), moms.dimension())?;
    let geo = PointGeometry::at(metric, x)?;
    let fm = faraday.faraday(x).mixed(&geo.eta_inv);
    Ok(ConnectionCoefficients::affine(averaged_tensor(&geo, &fm, moms)))
}

/// `<Gamma>(y, y)` for the normalized weighted sample `points`, evaluated
/// through centered moments so that the large `m1 m1 m1` part cancels
/// analytically instead of in floating point.
pub fn averaged_acceleration_of_sample(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x: &Vector,
    y: &Vector,
    points: &[Vector],
    weights: &[f64],
) -> Result<Vector> {
    let n = metric.dimension();
    check_dim(n, y.len())?;
    let vol: f64 = weights.iter().sum();
    if points.is_empty() || !(vol > 0.0) {
        return Err(Error::EmptySupport(vol));
    }
    let geo = PointGeometry::at(metric, x)?;
    let y_low = geo.lower(y);
    let mut m1 = Vector::zeros(n);
    for (p, &w) in points.iter().zip(weights) {
        m1.axpy(w / vol, p, 1.0);
    }
    // <d (d.y)^2>, <d (d.y)>, <(d.y)^2> with d = y_p - m1
    let mut c3yy = Vector::zeros(n);
    let mut c2y = Vector::zeros(n);
    let mut c2yy = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        let d = p - &m1;
        let dy = d.dot(&y_low);
        let w = w / vol;
        c3yy.axpy(w * dy * dy, &d, 1.0);
        c2y.axpy(w * dy, &d, 1.0);
        c2yy += w * dy * dy;
    }
    let m1y = m1.dot(&y_low);
    let q = y.dot(&y_low);
    let m3yy = c3yy + &m1 * (c2yy + m1y * m1y) + c2y * (2.0 * m1y);
    let fm = faraday.faraday(x).mixed(&geo.eta_inv);
    let fy = &fm * y;
    Ok(geo.christoffel.contract(y, y) + fy * m1y + &fm * (&m1 * q - m3yy) * 0.5)
}

/// `delta = <y> - y`.
pub fn delta_tensor(moms: &MomentSet, y: &Vector) -> Vector {
    &moms.m1 - y
}

/// Second- and third-order correction vectors at `y`:
/// `O2^m = (<y^m> (delta.y)^2 + <y^m> <(delta.y)^2> + 2 (<y>.y) <delta^m (delta.y)>) / 2`,
/// `O3^m = <delta^m (delta.y)^2> / 2`, with `delta = <y> - y` averaged over
/// the distribution.
pub fn correction_tensors(moms: &MomentSet, eta: &Matrix, y: &Vector) -> (Vector, Vector) {
    let n = y.len();
    let y_low = eta * y;
    let m1 = &moms.m1;
    let d = delta_tensor(moms, y);
    let dy = d.dot(&y_low);
    let s2_y = &moms.c2 * &y_low;
    let s2_yy = s2_y.dot(&y_low);
    let s3_yy = moms.c3.contract(&y_low, &y_low);
    let m1y = m1.dot(&y_low);
    let o2 = m1 * (0.5 * dy * dy + 0.5 * s2_yy) + &s2_y * m1y;
    // <delta delta delta> = -c3 since delta = <y> - y
    let o3 = &s3_yy * -0.5;
    debug_assert_eq!(o3.len(), n);
    (o2, o3)
}

/// Both evaluations of `(Lorentz Gamma - <Gamma>)(y, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceReport {
    /// `leading + F O2 - F O3`.
    pub closed_form: Vector,
    pub direct: Vector,
    /// `-(i_delta F)^sharp (delta . y) = F^i_j delta^j (delta . y)`.
    pub leading: Vector,
    pub o2: Vector,
    pub o3: Vector,
    pub o2_term: Vector,
    pub o3_term: Vector,
    pub residual: f64,
}

pub fn connection_difference(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    moms: &MomentSet,
    x: &Vector,
    y: &Vector,
) -> Result<DifferenceReport> {
    check_dim(metric.dimension(), y.len())?;
    let geo = PointGeometry::at(metric, x)?;
    let q = geo.inner(y, y);
    if (q - 1.0).abs() > HYPERBOLOID_TOL {
        return Err(Error::NotOnHyperboloid { norm: q });
    }
    let fm = faraday.faraday(x).mixed(&geo.eta_inv);
    let d = delta_tensor(moms, y);
    let dy = d.dot(&geo.lower(y));
    let leading = &fm * &d * dy;
    let (o2, o3) = correction_tensors(moms, &geo.eta, y);
    let o2_term = &fm * &o2;
    let o3_term = -(&fm * &o3);
    let closed_form = &leading + &o2_term + &o3_term;
    let lorentz = lorentz_gamma(metric, faraday, x, y)?.contract(y, y);
    let averaged = averaged_tensor(&geo, &fm, moms).contract(y, y);
    let direct = lorentz - averaged;
    let residual = (&closed_form - &direct).amax();
    Ok(DifferenceReport {
        closed_form,
        direct,
        leading,
        o2,
        o3,
        o2_term,
        o3_term,
        residual,
    })
}

/// `max_X |(A - B)(X, X)|_g / g(X, X)` over the given directions.
pub fn coefficient_distance(a: &Tensor3, b: &Tensor3, g: &RiemannianMetric, directions: &[Vector]) -> f64 {
    let diff = a.sub(b);
    directions
        .iter()
        .map(|v| {
            let nv = g.inner(v, v);
            if nv > 0.0 {
                g.norm(&diff.contract(v, v)) / nv
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Same as [`coefficient_distance`] for connection fields evaluated at
/// `(x, X)`.
pub fn field_distance(
    a: &dyn ConnectionField,
    b: &dyn ConnectionField,
    x: &Vector,
    g: &RiemannianMetric,
    directions: &[Vector],
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for v in directions {
        let ca = a.coefficients(x, v)?;
        let cb = b.coefficients(x, v)?;
        best = best.max(coefficient_distance(
            ca.tensor(),
            cb.tensor(),
            g,
            std::slice::from_ref(v),
        ));
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub samples: usize,
}

/// Support points of the distribution used as sup candidates: quadrature
/// nodes (or ensemble members) inside the support first, then seeded random
/// draws from the distribution. Every prefix of the sequence is stable, so
/// the estimate is nondecreasing in `samples`.
pub fn support_directions(
    dist: &HyperboloidDistribution,
    metric: &dyn MetricField,
    x: &Vector,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vector>> {
    let fs = fiber_sample(dist, metric, x, &QuadratureOptions::default())?;
    let max_density = fs.density.iter().copied().fold(0.0, f64::max);
    let mut out: Vec<Vector> = fs
        .points
        .into_iter()
        .zip(fs.density)
        .filter(|(_, d)| *d > SUPPORT_THRESHOLD * max_density)
        .map(|(p, _)| p)
        .take(samples)
        .collect();
    if out.len() < samples {
        let extra = sample_ensemble(dist, metric, x, samples - out.len(), seed)?;
        out.extend(extra.into_iter().map(|p| p.y));
    }
    Ok(out)
}

/// Estimate of the connection distance over `supp(f_x)` using `samples`
/// candidate directions, with `eta_bar` built from the mean of `dist`.
pub fn connection_distance(
    a: &dyn ConnectionField,
    b: &dyn ConnectionField,
    metric: &dyn MetricField,
    dist: &HyperboloidDistribution,
    x: &Vector,
    samples: usize,
) -> Result<DistanceEstimate> {
    if samples == 0 {
        return Err(Error::OutOfRange("sample count must be at least 1".into()));
    }
    let moms = crate::kinetics::moments(dist, metric, x)?;
    let g = moms.eta_bar(&metric.metric(x))?;
    let dirs = support_directions(dist, metric, x, samples, 0x5eed)?;
    Ok(DistanceEstimate {
        value: field_distance(a, b, x, &g, &dirs)?,
        samples: dirs.len(),
    })
}

/// `((xi_max - xi) A + xi B) / xi_max`.
#[derive(Clone)]
pub struct ConvexConnection {
    a: Arc<dyn ConnectionField>,
    b: Arc<dyn ConnectionField>,
    weight: f64,
}

pub fn convex_interpolate(
    a: Arc<dyn ConnectionField>,
    b: Arc<dyn ConnectionField>,
    xi: f64,
    xi_max: f64,
) -> Result<ConvexConnection> {
    if !(xi_max > 0.0) || !(0.0..=xi_max).contains(&xi) {
        return Err(Error::OutOfRange(format!(
            "convex parameter {xi} outside [0, {xi_max}]"
        )));
    }
    check_dim(a.dimension(), b.dimension())?;
    Ok(ConvexConnection {
        a,
        b,
        weight: xi / xi_max,
    })
}

impl ConnectionField for ConvexConnection {
    fn dimension(&self) -> usize {
        self.a.dimension()
    }

    fn is_affine(&self) -> bool {
        self.a.is_affine() && self.b.is_affine()
    }

    fn coefficients(&self, x: &Vector, y: &Vector) -> Result<ConnectionCoefficients> {
        let ta = self.a.coefficients(x, y)?.into_tensor();
        let tb = self.b.coefficients(x, y)?.into_tensor();
        let t = ta.combine(1.0 - self.weight, &tb, self.weight);
        Ok(if self.is_affine() {
            ConnectionCoefficients::affine(t)
        } else {
            ConnectionCoefficients::velocity_dependent(t)
        })
    }
}

/// Moments as a function of position (lab time is `x^0`).
pub trait MomentSource: Send + Sync {
    fn moments_at(&self, x: &Vector) -> Result<MomentSet>;
}

impl MomentSource for MomentSet {
    fn moments_at(&self, _x: &Vector) -> Result<MomentSet> {
        Ok(self.clone())
    }
}

pub struct FnMomentSource<F>(pub F);

impl<F: Fn(&Vector) -> Result<MomentSet> + Send + Sync> MomentSource for FnMomentSource<F> {
    fn moments_at(&self, x: &Vector) -> Result<MomentSet> {
        (self.0)(x)
    }
}

/// The averaged connection as an affine field.
#[derive(Clone)]
pub struct AveragedConnection {
    metric: Arc<dyn MetricField>,
    faraday: Arc<dyn FaradayField>,
    source: Arc<dyn MomentSource>,
}

impl AveragedConnection {
    pub fn new(metric: Arc<dyn MetricField>, faraday: Arc<dyn FaradayField>, source: Arc<dyn MomentSource>) -> Self {
        Self {
            metric,
            faraday,
            source,
        }
    }
}

impl ConnectionField for AveragedConnection {
    fn dimension(&self) -> usize {
        self.metric.dimension()
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn coefficients(&self, x: &Vector, _y: &Vector) -> Result<ConnectionCoefficients> {
        let moms = self.source.moments_at(x)?;
        averaged_gamma(self.metric.as_ref(), self.faraday.as_ref(), &moms, x)
    }
}

/// Order-one constants of the divergence bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConstants {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "B3")]
    pub b3: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c: 2.0,
            c2: 1.0,
            c3: 1.0,
            b2: 1.0,
            b3: 1.0,
            k: 1.0,
            k2: 1.0,
            d2: 1.0,
        }
    }
}

/// `|F| C alpha^2 + 2 C2^2 alpha^2 (1 + alpha) + C3^3 alpha^3 (1 + alpha)`.
pub fn distance_bound_value(norm_f: f64, alpha: f64, c: f64, c2: f64, c3: f64) -> f64 {
    let a2 = alpha * alpha;
    norm_f * c * a2 + 2.0 * c2 * c2 * a2 * (1.0 + alpha) + c3.powi(3) * a2 * alpha * (1.0 + alpha)
}

/// The distance bound at `x` with `|F|` measured by `eta_bar` of the
/// distribution mean and `alpha` from the moments.
pub fn distance_bound(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    moms: &MomentSet,
    x: &Vector,
    constants: &BoundConstants,
) -> Result<f64> {
    let geo = PointGeometry::at(metric, x)?;
    let g = moms.eta_bar(&geo.eta)?;
    let norm_f = operator_norm(&g, &faraday.faraday(x).mixed(&geo.eta_inv));
    Ok(distance_bound_value(
        norm_f,
        moms.alpha,
        constants.c,
        constants.c2,
        constants.c3,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connections::{ConstantConnection, LeviCivitaConnection, LorentzConnection};
    use crate::fields::{gauge_transform, preset_field, ExteriorDerivative, FieldParams, FnScalarField, PresetField};
    use crate::geometry::{christoffel_at, Minkowski};
    use crate::kinetics::{boosted_velocity, moments, moments_with, Particle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mink(n: usize) -> Minkowski {
        Minkowski::new(n).unwrap()
    }

    fn field(name: &str) -> PresetField {
        preset_field(name, &FieldParams::default(), 4).unwrap()
    }

    fn boosted(phi: f64) -> Vector {
        boosted_velocity(4, phi, &[1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn zero_field_gives_levi_civita() {
        let x = Vector::zeros(4);
        let moms = moments(
            &HyperboloidDistribution::gaussian_bump(boosted(1.0), 0.1, 4.0),
            &mink(4),
            &x,
        )
        .unwrap();
        let avg = averaged_gamma(&mink(4), &field("null"), &moms, &x).unwrap();
        assert_eq!(avg.tensor(), christoffel_at(&mink(4), &x).unwrap().tensor());
        assert!(!avg.is_y_dependent());
    }

    #[test]
    fn dirac_average_coincides_with_lorentz_connection() {
        let x = Vector::from_vec(vec![0.0, 0.4, -0.3, 0.2]);
        let v = boosted_velocity(4, 1.3, &[0.3, 1.0, -0.5]).unwrap();
        let moms = MomentSet::dirac(&v, 1.0);
        for name in ["uniform_E", "crossed_EB", "quadrupole"] {
            let avg = averaged_gamma(&mink(4), &field(name), &moms, &x).unwrap();
            let lor = lorentz_gamma(&mink(4), &field(name), &x, &v).unwrap();
            assert!(avg.max_abs_diff(&lor) < 1e-12, "{name}");
        }
    }

    #[test]
    fn delta_examples() {
        let m1 = Vector::from_vec(vec![2f64.sqrt(), 1.0, 0.0, 0.0]);
        let moms = MomentSet::dirac(&m1, 1.0);
        assert_eq!(delta_tensor(&moms, &m1), Vector::zeros(4));
        let d = delta_tensor(&moms, &boosted(0.0));
        assert_eq!(d, Vector::from_vec(vec![2f64.sqrt() - 1.0, 1.0, 0.0, 0.0]));
        let (o2, o3) = correction_tensors(&moms, &Minkowski::matrix(4), &m1);
        assert_eq!(o2.amax(), 0.0);
        assert_eq!(o3.amax(), 0.0);
    }

    #[test]
    fn sample_acceleration_matches_contracted_tensor() {
        let m = mink(4);
        let field = preset_field("crossed_EB", &FieldParams::default(), 4).unwrap();
        let x = Vector::from_vec(vec![0.3, 0.1, -0.2, 0.5]);
        let dist = HyperboloidDistribution::gaussian_bump(boosted(2.0), 0.05, 4.0);
        let sample = fiber_sample(
            &dist,
            &m,
            &x,
            &QuadratureOptions {
                nodes_per_axis: Some(6),
            },
        )
        .unwrap();
        let moms = crate::kinetics::moments_of_sample(&sample, &Minkowski::matrix(4)).unwrap();
        let y = boosted(1.9);
        let a = averaged_acceleration_of_sample(&m, &field, &x, &y, &sample.points, &sample.weights).unwrap();
        let b = averaged_gamma(&m, &field, &moms, &x).unwrap().contract(&y, &y);
        assert!((&a - &b).amax() < 1e-11 * b.amax(), "{}", (&a - &b).amax());
    }

    #[test]
    fn symmetric_bump_has_negligible_third_order_term() {
        // an isotropic bump is symmetric in its rest-frame coordinates; the
        // third centered moment only picks up the curvature of the
        // hyperboloid, far below the sigma^3 scale of a skewed distribution
        let x = Vector::zeros(4);
        let sigma = 0.05;
        let moms = moments(
            &HyperboloidDistribution::gaussian_bump(boosted(0.0), sigma, 4.0),
            &mink(4),
            &x,
        )
        .unwrap();
        let y = boosted(0.02);
        let (_, o3) = correction_tensors(&moms, &Minkowski::matrix(4), &y);
        assert!(o3.amax() < 1e-3 * sigma.powi(3), "{}", o3.amax());
    }

    fn skewed_ensemble(center: &Vector, sigma: f64) -> HyperboloidDistribution {
        let frame = crate::kinetics::FiberFrame::new(&Minkowski::matrix(4), center).unwrap();
        let pattern = [
            ([1.0, 0.0, 0.0], 0.2),
            ([-0.5, 0.3, 0.0], 0.3),
            ([-0.2, -0.6, 0.4], 0.25),
            ([0.1, 0.2, -0.9], 0.15),
            ([2.0, 1.0, 0.5], 0.1),
        ];
        HyperboloidDistribution::ensemble(
            pattern
                .iter()
                .map(|(p, w)| Particle {
                    x: Vector::zeros(4),
                    y: frame.point(&p.map(|v| v * sigma)),
                    weight: *w,
                })
                .collect(),
        )
    }

    #[test]
    fn correction_tensors_scale_with_width() {
        let x = Vector::zeros(4);
        let center = boosted(1.0);
        let frame = crate::kinetics::FiberFrame::new(&Minkowski::matrix(4), &center).unwrap();
        // fixed probe off the support; the (delta . y)^2 part of O2 tends to a
        // nonzero constant there, so only the covariance part is compared
        let y = frame.point(&[0.5, 0.25, 0.0]);
        let eta = Minkowski::matrix(4);
        let norms = |dist: HyperboloidDistribution, _sigma: f64| {
            let moms = moments(&dist, &mink(4), &x).unwrap();
            let (o2, o3) = correction_tensors(&moms, &eta, &y);
            let dy = delta_tensor(&moms, &y).dot(&(&eta * &y));
            ((o2 - &moms.m1 * (0.5 * dy * dy)).norm(), o3.norm())
        };
        let bump = |s: f64| HyperboloidDistribution::gaussian_bump(center.clone(), s, 4.0);
        let (a2, _) = norms(bump(0.04), 0.04);
        let (b2, _) = norms(bump(0.02), 0.02);
        assert!((a2 / b2 - 4.0).abs() < 0.4, "{}", a2 / b2);
        let (a2, a3) = norms(skewed_ensemble(&center, 0.004), 0.004);
        let (b2, b3) = norms(skewed_ensemble(&center, 0.002), 0.002);
        assert!((a2 / b2 - 4.0).abs() < 0.4, "{}", a2 / b2);
        assert!((a3 / b3 - 8.0).abs() < 0.8, "{}", a3 / b3);
    }

    #[test]
    fn closed_form_difference_matches_direct_subtraction() {
        let x = Vector::from_vec(vec![0.0, 0.3, -0.2, 0.1]);
        let center = boosted_velocity(4, 0.8, &[1.0, 0.5, 0.0]).unwrap();
        let dist = HyperboloidDistribution::gaussian_bump(center.clone(), 0.03, 4.0);
        let moms = moments(&dist, &mink(4), &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let frame = crate::kinetics::FiberFrame::new(&Minkowski::matrix(4), &center).unwrap();
        for name in ["uniform_B", "crossed_EB", "quadrupole"] {
            for _ in 0..10 {
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(-0.06..0.06)).collect();
                let y = frame.point(&w);
                let rep = connection_difference(&mink(4), &field(name), &moms, &x, &y).unwrap();
                assert!(rep.residual <= 1e-10, "{name}: {}", rep.residual);
            }
        }
        let rep = connection_difference(&mink(4), &field("null"), &moms, &x, &center).unwrap();
        assert_eq!(rep.direct.amax(), 0.0);
        assert_eq!(rep.leading.amax(), 0.0);
    }

    #[test]
    fn brute_force_average_over_five_point_ensemble() {
        let m = mink(2);
        let x = Vector::from_vec(vec![0.0, 0.3]);
        let f = preset_field(
            "uniform_E",
            &FieldParams {
                e0: Some(0.7),
                ..Default::default()
            },
            2,
        )
        .unwrap();
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
        let moms = moments(&HyperboloidDistribution::ensemble(particles.clone()), &m, &x).unwrap();
        let avg = averaged_gamma(&m, &f, &moms, &x).unwrap();
        let mut brute = Tensor3::zeros(2);
        for p in &particles {
            brute = brute.combine(1.0, lorentz_gamma(&m, &f, &x, &p.y).unwrap().tensor(), p.weight);
        }
        assert!(avg.tensor().max_abs_diff(&brute) <= 1e-12);
    }

    #[test]
    fn averaged_connection_is_symmetric_and_gauge_invariant() {
        let x = Vector::from_vec(vec![0.1, 0.5, -0.4, 0.2]);
        let moms = moments(
            &HyperboloidDistribution::gaussian_bump(boosted(1.5), 0.05, 4.0),
            &mink(4),
            &x,
        )
        .unwrap();
        let base = field("quadrupole");
        let a = averaged_gamma(&mink(4), &base, &moms, &x).unwrap();
        assert_eq!(a.tensor().lower_asymmetry(), 0.0);
        let lam = FnScalarField::new(|x: &Vector| x[0] * x[1] * x[1] + (x[3]).cos())
            .with_gradient(|x: &Vector| Vector::from_vec(vec![x[1] * x[1], 2.0 * x[0] * x[1], 0.0, -x[3].sin()]))
            .with_hessian(|x: &Vector| {
                let mut h = Matrix::zeros(4, 4);
                h[(0, 1)] = 2.0 * x[1];
                h[(1, 0)] = 2.0 * x[1];
                h[(1, 1)] = 2.0 * x[0];
                h[(3, 3)] = -x[3].cos();
                h
            });
        let moved = ExteriorDerivative(gauge_transform(base, lam));
        let b = averaged_gamma(&mink(4), &moved, &moms, &x).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-10);
    }

    #[test]
    fn only_first_and_third_moments_matter() {
        let x = Vector::zeros(4);
        let moms = moments(
            &HyperboloidDistribution::gaussian_bump(boosted(1.0), 0.1, 4.0),
            &mink(4),
            &x,
        )
        .unwrap();
        let mut other = moms.clone();
        other.m2 *= 3.0;
        other.c2 *= -2.0;
        other.vol = 17.0;
        other.alpha = 0.9;
        let f = field("crossed_EB");
        assert_eq!(
            averaged_gamma(&mink(4), &f, &moms, &x).unwrap(),
            averaged_gamma(&mink(4), &f, &other, &x).unwrap()
        );
    }

    #[test]
    fn convex_family_endpoints_and_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ta = Tensor3::from_fn(4, |_, _, _| rng.random_range(-1.0..1.0));
        let tb = Tensor3::from_fn(4, |_, _, _| rng.random_range(-1.0..1.0));
        let a: Arc<dyn ConnectionField> = Arc::new(ConstantConnection::new(ta.clone()));
        let b: Arc<dyn ConnectionField> = Arc::new(ConstantConnection::new(tb.clone()));
        let x = Vector::zeros(4);
        let y = boosted(0.0);
        let at = |xi: f64| {
            convex_interpolate(a.clone(), b.clone(), xi, 2.0)
                .unwrap()
                .coefficients(&x, &y)
                .unwrap()
        };
        assert_eq!(at(0.0).tensor(), &ta);
        assert_eq!(at(2.0).tensor(), &tb);
        assert!(at(1.0).tensor().max_abs_diff(&ta.combine(0.5, &tb, 0.5)) < 1e-16);
        assert!(convex_interpolate(a.clone(), b.clone(), 2.5, 2.0).is_err());
        assert!(convex_interpolate(a, b, 0.0, 0.0).is_err());
    }

    #[test]
    fn distance_axioms_on_random_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = RiemannianMetric::identity(4);
        let dirs: Vec<Vector> = (0..50).map(|k| boosted(0.02 * k as f64)).collect();
        for _ in 0..200 {
            let mut t = || Tensor3::from_fn(4, |_, _, _| rng.random_range(-1.0..1.0));
            let (a, b, c) = (t(), t(), t());
            let dab = coefficient_distance(&a, &b, &g, &dirs);
            assert_eq!(dab, coefficient_distance(&b, &a, &g, &dirs));
            assert_eq!(coefficient_distance(&a, &a, &g, &dirs), 0.0);
            let dac = coefficient_distance(&a, &c, &g, &dirs);
            let dbc = coefficient_distance(&b, &c, &g, &dirs);
            assert!(dac <= dab + dbc + 1e-12);
        }
    }

    #[test]
    fn connection_distance_is_monotone_in_samples() {
        let metric: Arc<dyn MetricField> = Arc::new(mink(4));
        let f: Arc<dyn FaradayField> = Arc::new(field("uniform_B"));
        let x = Vector::zeros(4);
        let dist = HyperboloidDistribution::gaussian_bump(boosted(1.0), 0.02, 4.0);
        let moms = moments(&dist, metric.as_ref(), &x).unwrap();
        let lor = LorentzConnection::new(metric.clone(), f.clone());
        let avg = AveragedConnection::new(metric.clone(), f.clone(), Arc::new(moms));
        let mut last = 0.0;
        for s in [1, 10, 100, 1000] {
            let d = connection_distance(&lor, &avg, metric.as_ref(), &dist, &x, s).unwrap();
            assert_eq!(d.samples, s);
            assert!(d.value >= last);
            last = d.value;
        }
        let lc = LeviCivitaConnection::new(metric.clone());
        assert_eq!(
            connection_distance(&lc, &lc, metric.as_ref(), &dist, &x, 10)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn bound_examples() {
        assert_eq!(distance_bound_value(1.0, 0.0, 2.0, 1.0, 1.0), 0.0);
        assert!((distance_bound_value(1.0, 0.1, 2.0, 1.0, 1.0) - 0.0431).abs() < 1e-15);
        let x = Vector::zeros(4);
        let moms = moments_with(
            &HyperboloidDistribution::gaussian_bump(boosted(0.0), 0.0125, 4.0),
            &mink(4),
            &x,
            &QuadratureOptions {
                nodes_per_axis: Some(16),
            },
        )
        .unwrap();
        let b = distance_bound(&mink(4), &field("uniform_B"), &moms, &x, &BoundConstants::default()).unwrap();
        // rest frame: |F| = B = 1
        assert!((b - distance_bound_value(1.0, moms.alpha, 2.0, 1.0, 1.0)).abs() < 1e-12);
    }
}
