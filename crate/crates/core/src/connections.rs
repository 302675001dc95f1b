//! The Lorentz spray, its nonlinear connection, the linear Lorentz
//! connection coefficients with their `L`/`T` split, and the T-free variant.
//!
//! Conventions: the equation of motion is `x'' + G(x, x') = 0` with
//! `G^i = Gamma^i_jk y^j y^k + F^i_k y^k sqrt(eta(y,y))`, and
//! `N^i_k = (1/2) dG^i/dy^k`, so that `y^k N^i_k = G^i`.

use std::ops::Index;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fields::FaradayField;
use crate::geometry::{MetricField, PointGeometry};
use crate::tensor::{check_dim, Matrix, Tensor3, Vector};
use crate::{Error, Result};

/// Smallest `eta(y,y)` accepted by the velocity-dependent operations.
pub const ADMISSIBLE_MARGIN: f64 = 1e-12;

/// Coefficients `Gamma^i_jk`, symmetric in `(j, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionCoefficients {
    tensor: Tensor3,
    y_dependent: bool,
}

impl ConnectionCoefficients {
    pub fn affine(tensor: Tensor3) -> Self {
        Self {
            tensor,
            y_dependent: false,
        }
    }

    pub fn velocity_dependent(tensor: Tensor3) -> Self {
        Self {
            tensor,
            y_dependent: true,
        }
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.tensor
    }

    pub fn is_y_dependent(&self) -> bool {
        self.y_dependent
    }

    pub fn dimension(&self) -> usize {
        self.tensor.dim()
    }

    /// `Gamma^i_jk a^j b^k`.
    pub fn contract(&self, a: &Vector, b: &Vector) -> Vector {
        self.tensor.contract(a, b)
    }

    pub fn max_abs_diff(&self, other: &ConnectionCoefficients) -> f64 {
        self.tensor.max_abs_diff(&other.tensor)
    }
}

impl Index<(usize, usize, usize)> for ConnectionCoefficients {
    type Output = f64;

    fn index(&self, idx: (usize, usize, usize)) -> &f64 {
        &self.tensor[idx]
    }
}

/// Spray values `G^i(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SprayCoefficients(pub Vector);

impl SprayCoefficients {
    pub fn values(&self) -> &Vector {
        &self.0
    }
}

/// Everything the Lorentz formulas need at one tangent state.
struct LorentzPoint {
    geo: PointGeometry,
    /// `F^i_j`
    fm: Matrix,
    /// `F^i_m y^m`
    fy: Vector,
    /// `eta_jk y^k`
    y_low: Vector,
    /// `eta(y, y)`
    q: f64,
    s: f64,
}

impl LorentzPoint {
    fn new(metric: &dyn MetricField, faraday: &dyn FaradayField, x: &Vector, y: &Vector) -> Result<Self> {
        check_dim(metric.dimension(), faraday.dimension())?;
        check_dim(metric.dimension(), y.len())?;
        let geo = PointGeometry::at(metric, x)?;
        let y_low = geo.lower(y);
        let q = y.dot(&y_low);
        if !(q >= ADMISSIBLE_MARGIN) {
            return Err(Error::OutsideAdmissible { norm: q });
        }
        let fm = faraday.faraday(x).mixed(&geo.eta_inv);
        let fy = &fm * y;
        Ok(Self {
            geo,
            fm,
            fy,
            y_low,
            q,
            s: q.sqrt(),
        })
    }

    fn n(&self) -> usize {
        self.y_low.len()
    }

    fn l_tensor(&self, scale: f64) -> Tensor3 {
        let n = self.n();
        let mut l = Tensor3::zeros(n);
        for j in 0..n {
            for k in j..n {
                for i in 0..n {
                    let v = scale * (self.fm[(i, j)] * self.y_low[k] + self.fm[(i, k)] * self.y_low[j]);
                    l[(i, j, k)] = v;
                    l[(i, k, j)] = v;
                }
            }
        }
        l
    }

    fn t_tensor(&self) -> Tensor3 {
        let n = self.n();
        let mut t = Tensor3::zeros(n);
        let eta = &self.geo.eta;
        for j in 0..n {
            for k in j..n {
                let p = 0.5 * (eta[(j, k)] + eta[(k, j)]) - self.y_low[j] * self.y_low[k] / self.q;
                for i in 0..n {
                    let v = self.fy[i] / (2.0 * self.s) * p;
                    t[(i, j, k)] = v;
                    t[(i, k, j)] = v;
                }
            }
        }
        t
    }
}

/// `G^i = Gamma^i_jk y^j y^k + F^i_k y^k sqrt(eta(y,y))`.
pub fn spray_at(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x: &Vector,
    y: &Vector,
) -> Result<SprayCoefficients> {
    let p = LorentzPoint::new(metric, faraday, x, y)?;
    Ok(SprayCoefficients(p.geo.christoffel.contract(y, y) + &p.fy * p.s))
}

/// `N^i_k = Gamma^i_kl y^l + (F^i_k s + F^i_m y^m y_k / s) / 2`.
pub fn nonlinear_connection(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x: &Vector,
    y: &Vector,
) -> Result<Matrix> {
    let p = LorentzPoint::new(metric, faraday, x, y)?;
    let n = p.n();
    let gamma = &p.geo.christoffel;
    Ok(Matrix::from_fn(n, n, |i, k| {
        let mut acc = 0.0;
        for l in 0..n {
            acc += gamma[(i, k, l)] * y[l];
        }
        acc + 0.5 * (p.fm[(i, k)] * p.s + p.fy[i] * p.y_low[k] / p.s)
    }))
}

/// Linear Lorentz connection coefficients `Gamma + L + T`.
pub fn lorentz_gamma(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x: &Vector,
    y: &Vector,
) -> Result<ConnectionCoefficients> {
    let p = LorentzPoint::new(metric, faraday, x, y)?;
    let l = p.l_tensor(0.5 / p.s);
    let t = p.t_tensor();
    Ok(ConnectionCoefficients::velocity_dependent(
        p.geo.christoffel.add(&l).add(&t),
    ))
}

/// The two Faraday parts of the Lorentz connection:
/// `L^i_jk = (F^i_j y_k + F^i_k y_j) / (2s)` and
/// `T^i_jk = F^i_m y^m / (2s) (eta_jk - y_j y_k / s^2)`.
pub fn decompose_lt(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x: &Vector,
    y: &Vector,
) -> Result<(Tensor3, Tensor3)> {
    let p = LorentzPoint::new(metric, faraday, x, y)?;
    Ok((p.l_tensor(0.5 / p.s), p.t_tensor()))
}

/// T-free variant `Gamma^i_jk + (F^i_j y_k + F^i_k y_j) / (2 eta(y,y))`.
///
/// Its contraction with `(y, y)` is `Gamma y y + F y`, which agrees with
/// the Lorentz connection only where `eta(y,y) = 1`.
pub fn tilde_gamma(
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    x: &Vector,
    y: &Vector,
) -> Result<ConnectionCoefficients> {
    let p = LorentzPoint::new(metric, faraday, x, y)?;
    let l = p.l_tensor(0.5 / p.q);
    Ok(ConnectionCoefficients::velocity_dependent(p.geo.christoffel.add(&l)))
}

/// A connection defined along the manifold (and possibly on the fiber).
pub trait ConnectionField: Send + Sync {
    fn dimension(&self) -> usize;

    /// True when the coefficients do not depend on `y`.
    fn is_affine(&self) -> bool;

    fn coefficients(&self, x: &Vector, y: &Vector) -> Result<ConnectionCoefficients>;

    /// `Gamma^i_jk(x, y) y^j y^k`.
    fn acceleration(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        Ok(self.coefficients(x, y)?.contract(y, y))
    }
}

impl<T: ConnectionField + ?Sized> ConnectionField for Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn is_affine(&self) -> bool {
        (**self).is_affine()
    }

    fn coefficients(&self, x: &Vector, y: &Vector) -> Result<ConnectionCoefficients> {
        (**self).coefficients(x, y)
    }

    fn acceleration(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        (**self).acceleration(x, y)
    }
}

#[derive(Clone)]
pub struct LeviCivitaConnection {
    metric: Arc<dyn MetricField>,
}

impl LeviCivitaConnection {
    pub fn new(metric: Arc<dyn MetricField>) -> Self {
        Self { metric }
    }
}

impl ConnectionField for LeviCivitaConnection {
    fn dimension(&self) -> usize {
        self.metric.dimension()
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn coefficients(&self, x: &Vector, _y: &Vector) -> Result<ConnectionCoefficients> {
        crate::geometry::christoffel_at(self.metric.as_ref(), x)
    }
}

/// The Lorentz connection as a field.
#[derive(Clone)]
pub struct LorentzConnection {
    metric: Arc<dyn MetricField>,
    faraday: Arc<dyn FaradayField>,
}

impl LorentzConnection {
    pub fn new(metric: Arc<dyn MetricField>, faraday: Arc<dyn FaradayField>) -> Self {
        Self { metric, faraday }
    }
}

impl ConnectionField for LorentzConnection {
    fn dimension(&self) -> usize {
        self.metric.dimension()
    }

    fn is_affine(&self) -> bool {
        false
    }

    fn coefficients(&self, x: &Vector, y: &Vector) -> Result<ConnectionCoefficients> {
        lorentz_gamma(self.metric.as_ref(), self.faraday.as_ref(), x, y)
    }
}

/// The T-free connection as a field.
#[derive(Clone)]
pub struct TildeConnection {
    metric: Arc<dyn MetricField>,
    faraday: Arc<dyn FaradayField>,
}

impl TildeConnection {
    pub fn new(metric: Arc<dyn MetricField>, faraday: Arc<dyn FaradayField>) -> Self {
        Self { metric, faraday }
    }
}

impl ConnectionField for TildeConnection {
    fn dimension(&self) -> usize {
        self.metric.dimension()
    }

    fn is_affine(&self) -> bool {
        false
    }

    fn coefficients(&self, x: &Vector, y: &Vector) -> Result<ConnectionCoefficients> {
        tilde_gamma(self.metric.as_ref(), self.faraday.as_ref(), x, y)
    }
}

/// The same coefficients everywhere.
#[derive(Clone, Debug)]
pub struct ConstantConnection {
    coefficients: ConnectionCoefficients,
}

impl ConstantConnection {
    pub fn new(tensor: Tensor3) -> Self {
        Self {
            coefficients: ConnectionCoefficients::affine(tensor),
        }
    }
}

impl ConnectionField for ConstantConnection {
    fn dimension(&self) -> usize {
        self.coefficients.dimension()
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn coefficients(&self, _x: &Vector, _y: &Vector) -> Result<ConnectionCoefficients> {
        Ok(self.coefficients.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{preset_field, FieldParams, PresetField};
    use crate::geometry::{christoffel_at, FnMetric, Minkowski};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mink() -> Minkowski {
        Minkowski::new(4).unwrap()
    }

    fn field(name: &str) -> PresetField {
        preset_field(name, &FieldParams::default(), 4).unwrap()
    }

    fn curved2() -> FnMetric {
        FnMetric::new(2, |x: &Vector| {
            let a = 1.0 + 0.3 * x[1];
            Matrix::from_row_slice(2, 2, &[1.0 + 0.1 * x[0] * x[0], 0.05, 0.05, -a * a])
        })
    }

    struct ConstantFaraday(Matrix);

    impl FaradayField for ConstantFaraday {
        fn dimension(&self) -> usize {
            self.0.nrows()
        }
        fn faraday(&self, _x: &Vector) -> crate::fields::FaradayTensor {
            crate::fields::FaradayTensor::from_upper(&self.0)
        }
    }

    fn random_state(rng: &mut ChaCha8Rng) -> (Vector, Vector) {
        let x = Vector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let sp = Vector::from_fn(3, |_, _| rng.random_range(-1.5..1.5));
        let y0 = (1.0 + sp.norm_squared()).sqrt() * rng.random_range(1.0..1.6);
        let y = Vector::from_vec(vec![y0, sp[0], sp[1], sp[2]]);
        (x, y)
    }

    #[test]
    fn free_spray_vanishes() {
        let y = Vector::from_vec(vec![2.0, 1.0, 0.5, 0.0]);
        let g = spray_at(&mink(), &field("null"), &Vector::zeros(4), &y).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        let n = nonlinear_connection(&mink(), &field("null"), &Vector::zeros(4), &y).unwrap();
        assert!(n.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_electric_spray_at_rest() {
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let g = spray_at(&mink(), &field("uniform_E"), &Vector::zeros(4), &y).unwrap();
        assert_eq!(g.values()[0], 0.0);
        assert!((g.values()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inadmissible_states_are_rejected() {
        let null = Vector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        let err = spray_at(&mink(), &field("uniform_B"), &Vector::zeros(4), &null).unwrap_err();
        assert!(matches!(err, Error::OutsideAdmissible { .. }));
        let space = Vector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        assert!(lorentz_gamma(&mink(), &field("uniform_B"), &Vector::zeros(4), &space).is_err());
    }

    #[test]
    fn spray_homogeneity_and_euler_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = field("crossed_EB");
        for _ in 0..50 {
            let (x, y) = random_state(&mut rng);
            let g1 = spray_at(&mink(), &f, &x, &y).unwrap().0;
            let g2 = spray_at(&mink(), &f, &x, &(&y * 2.0)).unwrap().0;
            assert!((g2 - &g1 * 4.0).amax() < 1e-12 * (1.0 + g1.amax()));
            let n = nonlinear_connection(&mink(), &f, &x, &y).unwrap();
            assert!((&n * &y - &g1).amax() < 1e-10);
        }
    }

    #[test]
    fn nonlinear_connection_matches_half_fd_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = field("quadrupole");
        let h = 1e-5;
        for _ in 0..30 {
            let (x, y) = random_state(&mut rng);
            let n = nonlinear_connection(&mink(), &f, &x, &y).unwrap();
            for k in 0..4 {
                let mut yp = y.clone();
                yp[k] += h;
                let mut ym = y.clone();
                ym[k] -= h;
                let d =
                    (spray_at(&mink(), &f, &x, &yp).unwrap().0 - spray_at(&mink(), &f, &x, &ym).unwrap().0) / (4.0 * h);
                for i in 0..4 {
                    assert!((d[i] - n[(i, k)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_field_reduces_to_levi_civita() {
        let metric = curved2();
        let f = ConstantFaraday(Matrix::zeros(2, 2));
        let x = Vector::from_vec(vec![0.3, 0.2]);
        let y = Vector::from_vec(vec![1.3, 0.4]);
        let lc = christoffel_at(&metric, &x).unwrap();
        assert_eq!(lorentz_gamma(&metric, &f, &x, &y).unwrap().tensor(), lc.tensor());
        assert_eq!(tilde_gamma(&metric, &f, &x, &y).unwrap().tensor(), lc.tensor());
        let (l, t) = decompose_lt(&metric, &f, &x, &y).unwrap();
        assert_eq!(l.max_abs(), 0.0);
        assert_eq!(t.max_abs(), 0.0);
    }

    #[test]
    fn hessian_of_spray_is_lorentz_connection() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = field("crossed_EB");
        let h = 1e-4;
        for _ in 0..20 {
            let (x, y) = random_state(&mut rng);
            let gamma = lorentz_gamma(&mink(), &f, &x, &y).unwrap();
            let g = |v: &Vector| spray_at(&mink(), &f, &x, v).unwrap().0;
            for j in 0..4 {
                for k in 0..4 {
                    let shift = |a: f64, b: f64| {
                        let mut v = y.clone();
                        v[j] += a;
                        v[k] += b;
                        g(&v)
                    };
                    let d2 = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
                    for i in 0..4 {
                        assert!((0.5 * d2[i] - gamma[(i, j, k)]).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn contraction_on_hyperboloid_reproduces_lorentz_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = field("crossed_EB");
        for _ in 0..50 {
            let (x, y) = random_state(&mut rng);
            let y = &y / (y[0] * y[0] - y.rows(1, 3).norm_squared()).sqrt();
            let full = lorentz_gamma(&mink(), &f, &x, &y).unwrap().contract(&y, &y);
            let fm = f.faraday(&x).mixed(&Minkowski::matrix(4));
            assert!((full - &fm * &y).amax() < 1e-12);
            let tilde = tilde_gamma(&mink(), &f, &x, &y).unwrap().contract(&y, &y);
            assert!((tilde - &fm * &y).amax() < 1e-12);
        }
    }

    #[test]
    fn tilde_differs_off_hyperboloid() {
        let f = field("uniform_E");
        let x = Vector::zeros(4);
        let y = Vector::from_vec(vec![2.0, 0.0, 0.0, 0.0]);
        let a = lorentz_gamma(&mink(), &f, &x, &y).unwrap().contract(&y, &y);
        let b = tilde_gamma(&mink(), &f, &x, &y).unwrap().contract(&y, &y);
        assert!((a - b).amax() > 0.5);
    }

    #[test]
    fn reassembly_and_transversality() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let f = field("quadrupole");
        let metric = mink();
        let mut max_tzz: f64 = 0.0;
        for _ in 0..50 {
            let (x, y) = random_state(&mut rng);
            let (l, t) = decompose_lt(&metric, &f, &x, &y).unwrap();
            let full = lorentz_gamma(&metric, &f, &x, &y).unwrap();
            let lc = christoffel_at(&metric, &x).unwrap();
            assert!(lc.tensor().add(&l).add(&t).max_abs_diff(full.tensor()) < 1e-12);
            let u = &y / (y[0] * y[0] - y.rows(1, 3).norm_squared()).sqrt();
            let (_, tu) = decompose_lt(&metric, &f, &x, &u).unwrap();
            assert!(tu.contract(&u, &u).amax() < 1e-12);
            let z = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            max_tzz = max_tzz.max(tu.contract(&z, &z).amax());
        }
        assert!(max_tzz > 1e-3);
    }

    #[test]
    fn normal_coordinate_obstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let metric = mink();
        let x = Vector::zeros(4);
        let deviation = |f: &PresetField, y: &Vector| {
            let full = lorentz_gamma(&metric, f, &x, y).unwrap().contract(y, y);
            (full - christoffel_at(&metric, &x).unwrap().contract(y, y)).norm()
        };
        let e = field("uniform_E");
        let null = field("null");
        let mut min_dev = f64::INFINITY;
        for _ in 0..100 {
            let sp = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let y = Vector::from_vec(vec![(1.0 + sp.norm_squared()).sqrt(), sp[0], sp[1], sp[2]]);
            min_dev = min_dev.min(deviation(&e, &y));
            assert_eq!(deviation(&null, &y), 0.0);
        }
        assert!(min_dev > 0.5);
    }

    #[test]
    fn gauge_invariance_of_lorentz_connection() {
        use crate::fields::{gauge_transform, ExteriorDerivative, FnScalarField};
        let base = field("crossed_EB");
        let lam = FnScalarField::new(|x: &Vector| (0.7 * x[0]).sin() * x[1] + x[2] * x[3] * x[3])
            .with_gradient(|x: &Vector| {
                Vector::from_vec(vec![
                    0.7 * (0.7 * x[0]).cos() * x[1],
                    (0.7 * x[0]).sin(),
                    x[3] * x[3],
                    2.0 * x[2] * x[3],
                ])
            })
            .with_hessian(|x: &Vector| {
                let mut h = Matrix::zeros(4, 4);
                h[(0, 0)] = -0.49 * (0.7 * x[0]).sin() * x[1];
                h[(0, 1)] = 0.7 * (0.7 * x[0]).cos();
                h[(1, 0)] = h[(0, 1)];
                h[(2, 3)] = 2.0 * x[3];
                h[(3, 2)] = h[(2, 3)];
                h[(3, 3)] = 2.0 * x[2];
                h
            });
        let a = ExteriorDerivative(base.clone());
        let b = ExteriorDerivative(gauge_transform(base, lam));
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (x, y) = random_state(&mut rng);
            let ga = lorentz_gamma(&mink(), &a, &x, &y).unwrap();
            let gb = lorentz_gamma(&mink(), &b, &x, &y).unwrap();
            assert!(ga.max_abs_diff(&gb) <= 1e-10);
        }
    }

    #[test]
    fn field_wrappers_agree_with_free_functions() {
        let metric: Arc<dyn MetricField> = Arc::new(mink());
        let f: Arc<dyn FaradayField> = Arc::new(field("crossed_EB"));
        let x = Vector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let y = Vector::from_vec(vec![1.5, 0.2, 0.3, 0.1]);
        let lor = LorentzConnection::new(metric.clone(), f.clone());
        assert!(!lor.is_affine());
        assert_eq!(
            lor.coefficients(&x, &y).unwrap(),
            lorentz_gamma(metric.as_ref(), f.as_ref(), &x, &y).unwrap()
        );
        let lc = LeviCivitaConnection::new(metric.clone());
        assert!(lc.acceleration(&x, &y).unwrap().iter().all(|&v| v == 0.0));
        let c = ConstantConnection::new(Tensor3::zeros(4));
        assert!(c.is_affine());
    }

    proptest! {
        #[test]
        fn produced_coefficients_are_lower_symmetric(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
            x1 in -3.0f64..3.0, x2 in -3.0f64..3.0,
        ) {
            let f = field("quadrupole");
            let x = Vector::from_vec(vec![0.0, x1, x2, 0.5]);
            let y = Vector::from_vec(vec![(1.0 + a*a + b*b + c*c).sqrt(), a, b, c]);
            for g in [
                lorentz_gamma(&mink(), &f, &x, &y).unwrap(),
                tilde_gamma(&mink(), &f, &x, &y).unwrap(),
            ] {
                prop_assert_eq!(g.tensor().lower_asymmetry(), 0.0);
            }
        }
    }
}
