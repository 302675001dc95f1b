//! Lorentzian metric fields, Levi-Civita coefficients, the auxiliary
//! Riemannian metric built from a unit timelike vector, and the Randers
//! diagnostic function.

use std::collections::HashSet;
use std::sync::Mutex;

use nalgebra::SymmetricEigen;

use crate::connections::ConnectionCoefficients;
use crate::fields::Potential;
use crate::tensor::{check_dim, Matrix, Tensor3, Vector};
use crate::{Error, Result};

/// Tolerance on `eta(U,U) = 1` for the timelike vector defining the
/// Riemannian metric.
pub const UNIT_TIMELIKE_TOL: f64 = 1e-10;

/// Symmetry tolerance applied to evaluated metric matrices.
const SYMMETRY_TOL: f64 = 1e-14;

/// A Lorentzian metric with signature `(+,-,...,-)` on a coordinate patch.
pub trait MetricField: Send + Sync {
    fn dimension(&self) -> usize;

    /// `eta_ij(x)`.
    fn metric(&self, x: &Vector) -> Matrix;

    /// `[d_0 eta, d_1 eta, ..., d_{n-1} eta]` at `x`.
    ///
    /// Falls back to fourth-order central differences.
    fn derivatives(&self, x: &Vector) -> Vec<Matrix> {
        finite_difference_derivatives(&|p: &Vector| self.metric(p), x)
    }

    /// Verify the signature at `x`.
    fn ensure_lorentzian(&self, x: &Vector) -> Result<()> {
        check_signature(&self.metric(x), x)
    }
}

/// Flat metric `diag(1, -1, ..., -1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Minkowski {
    n: usize,
}

impl Minkowski {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::OutOfRange(format!("dimension must be >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn matrix(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (a, b) if a == b => -1.0,
            _ => 0.0,
        })
    }
}

impl MetricField for Minkowski {
    fn dimension(&self) -> usize {
        self.n
    }

    fn metric(&self, _x: &Vector) -> Matrix {
        Self::matrix(self.n)
    }

    fn derivatives(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(self.n, self.n); self.n]
    }

    fn ensure_lorentzian(&self, _x: &Vector) -> Result<()> {
        Ok(())
    }
}

type MatrixFn = Box<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type DerivativeFn = Box<dyn Fn(&Vector) -> Vec<Matrix> + Send + Sync>;

/// User-supplied metric. Without an analytic derivative evaluator the
/// derivatives come from fourth-order central differences.
pub struct FnMetric {
    n: usize,
    metric: MatrixFn,
    derivatives: Option<DerivativeFn>,
    checked: Mutex<HashSet<Vec<u64>>>,
}

impl FnMetric {
    pub fn new(n: usize, metric: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        Self {
            n,
            metric: Box::new(metric),
            derivatives: None,
            checked: Mutex::new(HashSet::new()),
        }
    }

    pub fn with_derivatives(mut self, derivatives: impl Fn(&Vector) -> Vec<Matrix> + Send + Sync + 'static) -> Self {
        self.derivatives = Some(Box::new(derivatives));
        self
    }
}

impl MetricField for FnMetric {
    fn dimension(&self) -> usize {
        self.n
    }

    fn metric(&self, x: &Vector) -> Matrix {
        (self.metric)(x)
    }

    fn derivatives(&self, x: &Vector) -> Vec<Matrix> {
        match &self.derivatives {
            Some(d) => d(x),
            None => finite_difference_derivatives(&|p: &Vector| (self.metric)(p), x),
        }
    }

    fn ensure_lorentzian(&self, x: &Vector) -> Result<()> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if self.checked.lock().expect("signature cache poisoned").contains(&key) {
            return Ok(());
        }
        check_signature(&self.metric(x), x)?;
        self.checked.lock().expect("signature cache poisoned").insert(key);
        Ok(())
    }
}

/// Fourth-order central differences of a matrix-valued function, step
/// `1e-5 * (1 + |x_k|)` along each coordinate.
pub fn finite_difference_derivatives(f: &dyn Fn(&Vector) -> Matrix, x: &Vector) -> Vec<Matrix> {
    (0..x.len())
        .map(|k| {
            let h = 1e-5 * (1.0 + x[k].abs());
            let at = |offset: f64| {
                let mut p = x.clone();
                p[k] += offset;
                f(&p)
            };
            (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h)
        })
        .collect()
}

/// Checks symmetry and a `(+,-,...,-)` signature by eigenvalue signs.
pub fn check_signature(eta: &Matrix, x: &Vector) -> Result<()> {
    let n = eta.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = 1.0 + eta[(i, j)].abs().max(eta[(j, i)].abs());
            if (eta[(i, j)] - eta[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::BadSignature {
                    x: x.iter().copied().collect(),
                    eigenvalues: vec![],
                });
            }
        }
    }
    let eig = SymmetricEigen::new(eta.clone()).eigenvalues;
    let positive = eig.iter().filter(|&&l| l > 0.0).count();
    let negative = eig.iter().filter(|&&l| l < 0.0).count();
    if positive == 1 && negative == n - 1 {
        Ok(())
    } else {
        Err(Error::BadSignature {
            x: x.iter().copied().collect(),
            eigenvalues: eig.iter().copied().collect(),
        })
    }
}

/// Metric data at a single point: `eta`, its inverse and the Levi-Civita
/// coefficients.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub eta: Matrix,
    pub eta_inv: Matrix,
    pub christoffel: Tensor3,
    pub det: f64,
}

impl PointGeometry {
    pub fn at(metric: &dyn MetricField, x: &Vector) -> Result<Self> {
        let n = metric.dimension();
        check_dim(n, x.len())?;
        metric.ensure_lorentzian(x)?;
        let eta = metric.metric(x);
        let det = eta.determinant();
        let scale = eta.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        if det.abs() <= 1e-14 * scale.powi(n as i32) {
            return Err(Error::DegenerateMetric {
                x: x.iter().copied().collect(),
            });
        }
        let eta_inv = eta.clone().try_inverse().ok_or_else(|| Error::DegenerateMetric {
            x: x.iter().copied().collect(),
        })?;
        let christoffel = levi_civita(&eta_inv, &metric.derivatives(x));
        Ok(Self {
            eta,
            eta_inv,
            christoffel,
            det,
        })
    }

    pub fn dimension(&self) -> usize {
        self.eta.nrows()
    }

    /// `eta(a, b)`
    pub fn inner(&self, a: &Vector, b: &Vector) -> f64 {
        a.dot(&(&self.eta * b))
    }

    /// `eta_ij y^j`
    pub fn lower(&self, v: &Vector) -> Vector {
        &self.eta * v
    }
}

fn levi_civita(eta_inv: &Matrix, d_eta: &[Matrix]) -> Tensor3 {
    let n = eta_inv.nrows();
    // symmetrized derivatives so that lower symmetry is exact
    let d: Vec<Matrix> = d_eta.iter().map(|m| (m + m.transpose()) * 0.5).collect();
    let mut gamma = Tensor3::zeros(n);
    for j in 0..n {
        for k in j..n {
            for i in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += eta_inv[(i, l)] * (d[j][(l, k)] + d[k][(l, j)] - d[l][(j, k)]);
                }
                gamma[(i, j, k)] = 0.5 * acc;
                gamma[(i, k, j)] = 0.5 * acc;
            }
        }
    }
    gamma
}

/// Levi-Civita coefficients `Gamma^i_jk` of the metric at `x`.
pub fn christoffel_at(metric: &dyn MetricField, x: &Vector) -> Result<ConnectionCoefficients> {
    let geo = PointGeometry::at(metric, x)?;
    Ok(ConnectionCoefficients::affine(geo.christoffel))
}

/// Positive-definite metric on a tangent space.
#[derive(Clone, Debug, PartialEq)]
pub struct RiemannianMetric {
    matrix: Matrix,
}

impl RiemannianMetric {
    pub fn new(matrix: Matrix) -> Self {
        Self { matrix }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(Matrix::identity(n, n))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn inner(&self, a: &Vector, b: &Vector) -> f64 {
        a.dot(&(&self.matrix * b))
    }

    pub fn norm(&self, v: &Vector) -> f64 {
        eta_bar_norm(self, v)
    }

    pub fn distance(&self, a: &Vector, b: &Vector) -> f64 {
        self.norm(&(a - b))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues().iter().all(|&l| l > 0.0)
    }

    /// Matrix `W` with `|W v|_2 = |v|_g`, used to map vectors into
    /// Euclidean coordinates.
    pub fn whitening(&self) -> Matrix {
        match self.matrix.clone().cholesky() {
            Some(ch) => ch.l().transpose(),
            None => self.sqrt(),
        }
    }

    fn sqrt(&self) -> Matrix {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let d = Matrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        &eig.eigenvectors * d * eig.eigenvectors.transpose()
    }
}

/// `eta_bar(X,Y) = -eta(X,Y) + 2 eta(X,U) eta(Y,U)` for unit timelike `U`.
pub fn eta_bar_at(metric: &dyn MetricField, u: &Vector, x: &Vector) -> Result<RiemannianMetric> {
    check_dim(metric.dimension(), u.len())?;
    let eta = metric.metric(x);
    eta_bar_from_matrix(&eta, u)
}

pub(crate) fn eta_bar_from_matrix(eta: &Matrix, u: &Vector) -> Result<RiemannianMetric> {
    let eu = eta * u;
    let norm = u.dot(&eu);
    if (norm - 1.0).abs() > UNIT_TIMELIKE_TOL {
        return Err(Error::NotUnitTimelike { norm });
    }
    let g = -eta + (&eu * eu.transpose()) * 2.0;
    Ok(RiemannianMetric::new((&g + g.transpose()) * 0.5))
}

/// `sqrt(v . g . v)`.
pub fn eta_bar_norm(g: &RiemannianMetric, v: &Vector) -> f64 {
    g.inner(v, v).max(0.0).sqrt()
}

/// Operator norm of the mixed tensor `A` under `g`: the largest singular
/// value of `G^{1/2} A G^{-1/2}`.
pub fn operator_norm(g: &RiemannianMetric, a: &Matrix) -> f64 {
    let eig = SymmetricEigen::new(g.matrix.clone());
    let q = &eig.eigenvectors;
    let sqrt = Matrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    let inv_sqrt = Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let m = q * sqrt * q.transpose() * a * q * inv_sqrt * q.transpose();
    m.singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Randers function `sqrt|eta(y,y)| + A_i y^i`; both sides of the light cone
/// use the absolute value.
pub fn randers_function(metric: &dyn MetricField, potential: &dyn Potential, x: &Vector, y: &Vector) -> Result<f64> {
    check_dim(metric.dimension(), y.len())?;
    let eta = metric.metric(x);
    let q = y.dot(&(&eta * y));
    Ok(q.abs().sqrt() + potential.value(x).dot(y))
}
