//! Electromagnetic potentials, the Faraday 2-form and preset external fields.
//!
//! Charge-to-mass ratio is absorbed into the field strength.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::tensor::{Matrix, Vector};
use crate::{Error, Result};

/// A 1-form `A_i(x)`.
pub trait Potential: Send + Sync {
    fn dimension(&self) -> usize;

    fn value(&self, x: &Vector) -> Vector;

    /// `jac[(i, j)] = d_j A_i`. Defaults to fourth-order central differences.
    fn jacobian(&self, x: &Vector) -> Matrix {
        let n = self.dimension();
        let mut jac = Matrix::zeros(n, n);
        for j in 0..n {
            let col = central_difference(|p| self.value(p), x, j);
            jac.set_column(j, &col);
        }
        jac
    }
}

/// A scalar function on the manifold, used as a gauge function.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Vector) -> f64;

    fn gradient(&self, x: &Vector) -> Vector {
        Vector::from_fn(x.len(), |k, _| {
            central_difference(|p| Vector::from_element(1, self.value(p)), x, k)[0]
        })
    }

    /// Symmetric Hessian `d_i d_j lambda`.
    fn hessian(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let mut h = Matrix::zeros(n, n);
        for j in 0..n {
            let col = central_difference(|p| self.gradient(p), x, j);
            h.set_column(j, &col);
        }
        (&h + h.transpose()) * 0.5
    }
}

fn central_difference(f: impl Fn(&Vector) -> Vector, x: &Vector, k: usize) -> Vector {
    let h = 1e-4 * (1.0 + x[k].abs());
    let at = |offset: f64| {
        let mut p = x.clone();
        p[k] += offset;
        f(&p)
    };
    (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h)
}

type ScalarFn = Box<dyn Fn(&Vector) -> f64 + Send + Sync>;
type GradientFn = Box<dyn Fn(&Vector) -> Vector + Send + Sync>;
type HessianFn = Box<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// Scalar field from closures; missing derivatives fall back to finite
/// differences.
pub struct FnScalarField {
    value: ScalarFn,
    gradient: Option<GradientFn>,
    hessian: Option<HessianFn>,
}

impl FnScalarField {
    pub fn new(value: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Box::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }
}

impl ScalarField for FnScalarField {
    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        match &self.gradient {
            Some(g) => g(x),
            None => Vector::from_fn(x.len(), |k, _| {
                central_difference(|p| Vector::from_element(1, (self.value)(p)), x, k)[0]
            }),
        }
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        match &self.hessian {
            Some(h) => h(x),
            None => {
                let n = x.len();
                let mut h = Matrix::zeros(n, n);
                for j in 0..n {
                    h.set_column(j, &central_difference(|p| self.gradient(p), x, j));
                }
                (&h + h.transpose()) * 0.5
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NullPotential {
    n: usize,
}

impl NullPotential {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl Potential for NullPotential {
    fn dimension(&self) -> usize {
        self.n
    }

    fn value(&self, _x: &Vector) -> Vector {
        Vector::zeros(self.n)
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(self.n, self.n)
    }
}

/// Spatially constant covector; pure gauge.
#[derive(Clone, Debug)]
pub struct ConstantPotential {
    a: Vector,
}

impl ConstantPotential {
    pub fn new(a: Vector) -> Self {
        Self { a }
    }
}

impl Potential for ConstantPotential {
    fn dimension(&self) -> usize {
        self.a.len()
    }

    fn value(&self, _x: &Vector) -> Vector {
        self.a.clone()
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        let n = self.a.len();
        Matrix::zeros(n, n)
    }
}

/// `A + d lambda`.
pub struct GaugeTransformed<P, S> {
    base: P,
    gauge: S,
}

impl<P: Potential, S: ScalarField> Potential for GaugeTransformed<P, S> {
    fn dimension(&self) -> usize {
        self.base.dimension()
    }

    fn value(&self, x: &Vector) -> Vector {
        self.base.value(x) + self.gauge.gradient(x)
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        // d_j (d_i lambda) is the Hessian, symmetric in (i, j)
        self.base.jacobian(x) + self.gauge.hessian(x)
    }
}

/// Gauge transformation `A -> A + d lambda`.
pub fn gauge_transform<P: Potential, S: ScalarField>(a: P, lambda: S) -> GaugeTransformed<P, S> {
    GaugeTransformed { base: a, gauge: lambda }
}

/// Antisymmetric `F_ij` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FaradayTensor {
    lower: Matrix,
}

impl FaradayTensor {
    /// Builds from the upper triangle of `m`; the lower triangle is set to
    /// the exact negation.
    pub fn from_upper(m: &Matrix) -> Self {
        let n = m.nrows();
        let mut lower = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                lower[(i, j)] = m[(i, j)];
                lower[(j, i)] = -m[(i, j)];
            }
        }
        Self { lower }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            lower: Matrix::zeros(n, n),
        }
    }

    pub fn dimension(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// `F^i_j = eta^ik F_kj`.
    pub fn mixed(&self, eta_inv: &Matrix) -> Matrix {
        eta_inv * &self.lower
    }

    pub fn is_zero(&self) -> bool {
        self.lower.iter().all(|&v| v == 0.0)
    }
}

/// `F_ij = d_i A_j - d_j A_i`.
pub fn faraday_at(a: &dyn Potential, x: &Vector) -> FaradayTensor {
    let jac = a.jacobian(x);
    let n = jac.nrows();
    let mut upper = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            upper[(i, j)] = jac[(j, i)] - jac[(i, j)];
        }
    }
    FaradayTensor::from_upper(&upper)
}

/// Source of the Faraday tensor consumed by the connections.
pub trait FaradayField: Send + Sync {
    fn dimension(&self) -> usize;
    fn faraday(&self, x: &Vector) -> FaradayTensor;
}

/// Faraday field obtained by exterior differentiation of a potential.
pub struct ExteriorDerivative<P>(pub P);

impl<P: Potential> FaradayField for ExteriorDerivative<P> {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn faraday(&self, x: &Vector) -> FaradayTensor {
        faraday_at(&self.0, x)
    }
}

impl<T: FaradayField + ?Sized> FaradayField for Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn faraday(&self, x: &Vector) -> FaradayTensor {
        (**self).faraday(x)
    }
}

impl<T: Potential + ?Sized> Potential for Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn value(&self, x: &Vector) -> Vector {
        (**self).value(x)
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        (**self).jacobian(x)
    }
}

/// Parameters for the preset fields; absent entries take their defaults
/// (`E0 = B0 = gradient = 1`, `axis = "z"`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    #[serde(rename = "E0", default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<f64>,
    #[serde(rename = "B0", default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PresetKind {
    Null,
    /// `A = (-E0 x^1, 0, ...)`.
    UniformE {
        e0: f64,
    },
    /// Uniform magnetic field in the coordinate plane `(p, q)`:
    /// `A_p = -B0 x^q / 2`, `A_q = B0 x^p / 2`, so `F_pq = B0`.
    UniformB {
        b0: f64,
        plane: (usize, usize),
    },
    CrossedEB {
        e0: f64,
        b0: f64,
        plane: (usize, usize),
    },
    /// `A_3 = g ((x^1)^2 - (x^2)^2) / 2`: `F_13 = g x^1`, `F_23 = -g x^2`.
    Quadrupole {
        gradient: f64,
    },
}

/// A preset external field carrying both its potential and the closed-form
/// Faraday tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetField {
    n: usize,
    kind: PresetKind,
}

fn axis_plane(axis: &str) -> Result<(usize, usize)> {
    match axis {
        "x" | "1" => Ok((2, 3)),
        "y" | "2" => Ok((3, 1)),
        "z" | "3" => Ok((1, 2)),
        other => Err(Error::Config(format!("unknown field axis {other:?}"))),
    }
}

/// Builds one of `null`, `uniform_E`, `uniform_B`, `crossed_EB`,
/// `quadrupole` in dimension `n`.
pub fn preset_field(name: &str, params: &FieldParams, n: usize) -> Result<PresetField> {
    let e0 = params.e0.unwrap_or(1.0);
    let b0 = params.b0.unwrap_or(1.0);
    let axis = params.axis.as_deref().unwrap_or("z");
    let kind = match name {
        "null" => PresetKind::Null,
        "uniform_E" => PresetKind::UniformE { e0 },
        "uniform_B" => PresetKind::UniformB {
            b0,
            plane: axis_plane(axis)?,
        },
        "crossed_EB" => PresetKind::CrossedEB {
            e0,
            b0,
            plane: axis_plane(axis)?,
        },
        "quadrupole" => PresetKind::Quadrupole {
            gradient: params.gradient.unwrap_or(1.0),
        },
        other => return Err(Error::Config(format!("unknown field preset {other:?}"))),
    };
    let needed = match kind {
        PresetKind::Null => 2,
        PresetKind::UniformE { .. } => 2,
        PresetKind::UniformB { plane, .. } | PresetKind::CrossedEB { plane, .. } => plane.0.max(plane.1) + 1,
        PresetKind::Quadrupole { .. } => 4,
    };
    if n < needed {
        return Err(Error::Config(format!(
            "field preset {name:?} needs dimension >= {needed}, got {n}"
        )));
    }
    Ok(PresetField { n, kind })
}

impl PresetField {
    pub fn kind(&self) -> PresetKind {
        self.kind
    }

    fn add_magnetic(a: &mut Vector, x: &Vector, b0: f64, (p, q): (usize, usize)) {
        a[p] -= 0.5 * b0 * x[q];
        a[q] += 0.5 * b0 * x[p];
    }

    fn add_magnetic_jacobian(jac: &mut Matrix, b0: f64, (p, q): (usize, usize)) {
        jac[(p, q)] -= 0.5 * b0;
        jac[(q, p)] += 0.5 * b0;
    }
}

impl Potential for PresetField {
    fn dimension(&self) -> usize {
        self.n
    }

    fn value(&self, x: &Vector) -> Vector {
        let mut a = Vector::zeros(self.n);
        match self.kind {
            PresetKind::Null => {}
            PresetKind::UniformE { e0 } => a[0] = -e0 * x[1],
            PresetKind::UniformB { b0, plane } => Self::add_magnetic(&mut a, x, b0, plane),
            PresetKind::CrossedEB { e0, b0, plane } => {
                a[0] = -e0 * x[1];
                Self::add_magnetic(&mut a, x, b0, plane);
            }
            PresetKind::Quadrupole { gradient } => {
                a[3] = 0.5 * gradient * (x[1] * x[1] - x[2] * x[2]);
            }
        }
        a
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let mut jac = Matrix::zeros(self.n, self.n);
        match self.kind {
            PresetKind::Null => {}
            PresetKind::UniformE { e0 } => jac[(0, 1)] = -e0,
            PresetKind::UniformB { b0, plane } => Self::add_magnetic_jacobian(&mut jac, b0, plane),
            PresetKind::CrossedEB { e0, b0, plane } => {
                jac[(0, 1)] = -e0;
                Self::add_magnetic_jacobian(&mut jac, b0, plane);
            }
            PresetKind::Quadrupole { gradient } => {
                jac[(3, 1)] = gradient * x[1];
                jac[(3, 2)] = -gradient * x[2];
            }
        }
        jac
    }
}

impl FaradayField for PresetField {
    fn dimension(&self) -> usize {
        self.n
    }

    fn faraday(&self, x: &Vector) -> FaradayTensor {
        let n = self.n;
        let mut upper = Matrix::zeros(n, n);
        let mut set = |i: usize, j: usize, v: f64| {
            if i < j {
                upper[(i, j)] += v;
            } else {
                upper[(j, i)] -= v;
            }
        };
        match self.kind {
            PresetKind::Null => {}
            PresetKind::UniformE { e0 } => set(1, 0, -e0),
            PresetKind::UniformB { b0, plane } => set(plane.0, plane.1, b0),
            PresetKind::CrossedEB { e0, b0, plane } => {
                set(1, 0, -e0);
                set(plane.0, plane.1, b0);
            }
            PresetKind::Quadrupole { gradient } => {
                set(1, 3, gradient * x[1]);
                set(2, 3, -gradient * x[2]);
            }
        }
        FaradayTensor::from_upper(&upper)
    }
}
