//! Distributions on the unit hyperboloid, fiber quadrature and moments,
//! support diameter, energy function, and ensemble sampling and transport.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{csv_error, fmt, integrate_lorentz, IntegrationOptions};
use crate::fields::FaradayField;
use crate::geometry::{eta_bar_from_matrix, MetricField, RiemannianMetric, UNIT_TIMELIKE_TOL};
use crate::quadrature::box_rule;
use crate::tensor::{check_dim, CompensatedSum, Matrix, Tensor3, Vector};
use crate::{Error, Result};

/// Nodes whose density is below this fraction of the maximum are not part
/// of the support for `alpha` and `E`.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: Vector,
    pub y: Vector,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HyperboloidDistribution {
    Dirac {
        center: Vector,
        weight: f64,
    },
    /// `exp(-sum w_a^2 / 2 sigma_a^2) (1 - rho^2)^2` for `rho < 1`, where
    /// `rho^2 = sum (w_a / (r_cut sigma_a))^2` and `w` are rest-frame
    /// coordinates of the center.
    GaussianBump {
        center: Vector,
        sigma: Vec<f64>,
        r_cut: f64,
    },
    /// Constant density on the rest-frame ball `|w| < radius`.
    UniformBall {
        center: Vector,
        radius: f64,
    },
    Ensemble {
        particles: Vec<Particle>,
    },
}

impl HyperboloidDistribution {
    pub fn dirac(center: Vector) -> Self {
        Self::Dirac { center, weight: 1.0 }
    }

    /// Isotropic bump of width `sigma` truncated at `r_cut * sigma`.
    pub fn gaussian_bump(center: Vector, sigma: f64, r_cut: f64) -> Self {
        let d = center.len().saturating_sub(1);
        Self::GaussianBump {
            center,
            sigma: vec![sigma; d],
            r_cut,
        }
    }

    pub fn uniform_ball(center: Vector, radius: f64) -> Self {
        Self::UniformBall { center, radius }
    }

    pub fn ensemble(particles: Vec<Particle>) -> Self {
        Self::Ensemble { particles }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Dirac { .. } => "dirac",
            Self::GaussianBump { .. } => "gaussian_bump",
            Self::UniformBall { .. } => "uniform_ball",
            Self::Ensemble { .. } => "ensemble",
        }
    }

    fn center(&self) -> Option<&Vector> {
        match self {
            Self::Dirac { center, .. } | Self::GaussianBump { center, .. } | Self::UniformBall { center, .. } => {
                Some(center)
            }
            Self::Ensemble { .. } => None,
        }
    }

    /// Density in rest-frame coordinates of the center (unnormalized).
    fn density(&self, w: &[f64]) -> f64 {
        match self {
            Self::GaussianBump { sigma, r_cut, .. } => {
                let mut rho2 = 0.0;
                let mut q = 0.0;
                for (a, &s) in sigma.iter().enumerate() {
                    q += w[a] * w[a] / (s * s);
                    rho2 += (w[a] / (r_cut * s)).powi(2);
                }
                if rho2 >= 1.0 {
                    0.0
                } else {
                    (-0.5 * q).exp() * (1.0 - rho2).powi(2)
                }
            }
            Self::UniformBall { radius, .. } => {
                if w.iter().map(|v| v * v).sum::<f64>() < radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Dirac { .. } | Self::Ensemble { .. } => 0.0,
        }
    }

    fn half_widths(&self) -> Vec<f64> {
        match self {
            Self::GaussianBump { sigma, r_cut, .. } => sigma.iter().map(|s| s * r_cut).collect(),
            Self::UniformBall { center, radius } => vec![*radius; center.len() - 1],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Gauss-Legendre nodes per spatial axis; defaults to 64 for n = 2,
    /// 40 for n = 3 and 24 otherwise.
    pub nodes_per_axis: Option<usize>,
}

impl QuadratureOptions {
    fn nodes(&self, n: usize) -> usize {
        self.nodes_per_axis.unwrap_or(match n {
            2 => 64,
            3 => 40,
            _ => 24,
        })
    }
}

/// Rest frame `(e_0 = V, e_1, ..., e_{n-1})` of a unit timelike vector,
/// orthonormal for `eta`.
#[derive(Clone, Debug)]
pub struct FiberFrame {
    basis: Vec<Vector>,
}

impl FiberFrame {
    pub fn new(eta: &Matrix, v: &Vector) -> Result<Self> {
        let n = eta.nrows();
        check_dim(n, v.len())?;
        let norm = v.dot(&(eta * v));
        if (norm - 1.0).abs() > UNIT_TIMELIKE_TOL || !(v[0] > 0.0) {
            return Err(Error::NotUnitTimelike { norm });
        }
        let ip = |a: &Vector, b: &Vector| a.dot(&(eta * b));
        let mut basis = vec![v.clone()];
        for a in 1..n {
            let mut e = Vector::zeros(n);
            e[a] = 1.0;
            let mut u = e.clone();
            u -= v * ip(&e, v);
            for b in basis.iter().skip(1) {
                u += b * ip(&e, b);
            }
            let q = ip(&u, &u);
            if !(q < 0.0) {
                return Err(Error::BadSignature {
                    x: Vec::new(),
                    eigenvalues: vec![q],
                });
            }
            basis.push(u / (-q).sqrt());
        }
        Ok(Self { basis })
    }

    /// `sqrt(1 + |w|^2) e_0 + w^a e_a`.
    pub fn point(&self, w: &[f64]) -> Vector {
        let w0 = (1.0 + w.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let mut y = &self.basis[0] * w0;
        for (a, &wa) in w.iter().enumerate() {
            y += &self.basis[a + 1] * wa;
        }
        y
    }
}

/// Weighted points on the fiber; `density` decides support membership.
#[derive(Clone, Debug)]
pub struct FiberSample {
    pub points: Vec<Vector>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub vol: f64,
    /// `<y^i>`
    pub m1: Vector,
    /// `<y^i y^j>`
    pub m2: Matrix,
    /// `<y^m y^s y^l>`
    pub m3: Tensor3,
    /// Centered second moment `<(y - m1)(y - m1)>`.
    pub c2: Matrix,
    /// Centered third moment.
    pub c3: Tensor3,
    pub alpha: f64,
    pub energy: f64,
    pub nodes: usize,
}

impl MomentSet {
    /// Moments of `weight * delta(y - v)`.
    pub fn dirac(v: &Vector, weight: f64) -> Self {
        let n = v.len();
        Self {
            vol: weight,
            m1: v.clone(),
            m2: v * v.transpose(),
            m3: Tensor3::from_fn(n, |i, j, k| v[i] * v[j] * v[k]),
            c2: Matrix::zeros(n, n),
            c3: Tensor3::zeros(n),
            alpha: 0.0,
            energy: v[0],
            nodes: 1,
        }
    }

    pub fn dimension(&self) -> usize {
        self.m1.len()
    }

    /// Mean direction `U = m1 / sqrt(eta(m1, m1))`.
    pub fn mean_direction(&self, eta: &Matrix) -> Result<Vector> {
        let q = self.m1.dot(&(eta * &self.m1));
        if !(q > 0.0) {
            return Err(Error::NotUnitTimelike { norm: q });
        }
        Ok(&self.m1 / q.sqrt())
    }

    /// `eta_bar` built from the mean direction.
    pub fn eta_bar(&self, eta: &Matrix) -> Result<RiemannianMetric> {
        eta_bar_from_matrix(eta, &self.mean_direction(eta)?)
    }

    /// `<(y - m1)^j (y - m1)^k> eta_jk`.
    pub fn warm_fluid_statistic(&self, eta: &Matrix) -> f64 {
        self.c2.component_mul(eta).sum()
    }
}

fn sorted_triples(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                out.push((i, j, k));
            }
        }
    }
    out
}

fn mirror3(n: usize, vals: &[(usize, usize, usize, f64)]) -> Tensor3 {
    let mut t = Tensor3::zeros(n);
    for &(i, j, k, v) in vals {
        for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            t[(a, b, c)] = v;
        }
    }
    t
}

/// Moments, `alpha` and `E` of a weighted fiber sample.
pub fn moments_of_sample(sample: &FiberSample, eta: &Matrix) -> Result<MomentSet> {
    let n = eta.nrows();
    let mut vol = CompensatedSum::default();
    for &w in &sample.weights {
        vol.add(w);
    }
    let vol = vol.value();
    if !(vol > 0.0) || sample.points.is_empty() {
        return Err(Error::EmptySupport(vol));
    }
    let mean_of = |f: &dyn Fn(&Vector) -> f64| -> f64 {
        let mut s = CompensatedSum::default();
        for (p, &w) in sample.points.iter().zip(&sample.weights) {
            s.add(w * f(p));
        }
        s.value() / vol
    };
    let m1 = Vector::from_fn(n, |i, _| mean_of(&|p| p[i]));
    let mut m2 = Matrix::zeros(n, n);
    let mut c2 = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = mean_of(&|p| p[i] * p[j]);
            let c = mean_of(&|p| (p[i] - m1[i]) * (p[j] - m1[j]));
            m2[(i, j)] = v;
            m2[(j, i)] = v;
            c2[(i, j)] = c;
            c2[(j, i)] = c;
        }
    }
    let triples = sorted_triples(n);
    let raw: Vec<_> = triples
        .iter()
        .map(|&(i, j, k)| (i, j, k, mean_of(&|p| p[i] * p[j] * p[k])))
        .collect();
    let centered: Vec<_> = triples
        .iter()
        .map(|&(i, j, k)| (i, j, k, mean_of(&|p| (p[i] - m1[i]) * (p[j] - m1[j]) * (p[k] - m1[k]))))
        .collect();

    let max_density = sample.density.iter().copied().fold(0.0, f64::max);
    let support: Vec<&Vector> = sample
        .points
        .iter()
        .zip(&sample.density)
        .filter(|(_, &d)| d > SUPPORT_THRESHOLD * max_density)
        .map(|(p, _)| p)
        .collect();
    let energy = support.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);

    let mut moms = MomentSet {
        vol,
        m1,
        m2,
        m3: mirror3(n, &raw),
        c2,
        c3: mirror3(n, &centered),
        alpha: 0.0,
        energy,
        nodes: sample.points.len(),
    };
    let g = moms.eta_bar(eta)?;
    moms.alpha = diameter(&support, &g);
    Ok(moms)
}

/// Largest pairwise `eta_bar` chord distance in a point set.
pub fn diameter(points: &[&Vector], g: &RiemannianMetric) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let w = g.whitening();
    let white: Vec<Vector> = points.iter().map(|p| &w * *p).collect();
    let n = white[0].len();
    let centroid = white.iter().fold(Vector::zeros(n), |acc, p| acc + p) / white.len() as f64;
    let mut order: Vec<(f64, usize)> = white
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - &centroid).norm(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    // exact search pruned by the triangle inequality through the centroid
    let far = &white[order[0].1];
    let mut best = white.par_iter().map(|p| (p - far).norm()).reduce(|| 0.0, f64::max);
    let r0 = order[0].0;
    for (a, &(ri, i)) in order.iter().enumerate() {
        if ri + r0 <= best {
            break;
        }
        for &(rj, j) in &order[..a] {
            if ri + rj <= best {
                break;
            }
            best = best.max((&white[i] - &white[j]).norm());
        }
    }
    best
}

/// Quadrature nodes (or ensemble members) of the distribution on the fiber
/// over `x`.
pub fn fiber_sample(
    dist: &HyperboloidDistribution,
    metric: &dyn MetricField,
    x: &Vector,
    opts: &QuadratureOptions,
) -> Result<FiberSample> {
    let n = metric.dimension();
    check_dim(n, x.len())?;
    match dist {
        HyperboloidDistribution::Dirac { center, weight } => Ok(FiberSample {
            points: vec![center.clone()],
            weights: vec![*weight],
            density: vec![1.0],
        }),
        HyperboloidDistribution::Ensemble { particles } => Ok(FiberSample {
            points: particles.iter().map(|p| p.y.clone()).collect(),
            weights: particles.iter().map(|p| p.weight).collect(),
            density: particles.iter().map(|p| p.weight).collect(),
        }),
        _ => {
            let center = dist.center().expect("continuous kinds have a center");
            check_dim(n, center.len())?;
            let frame = FiberFrame::new(&metric.metric(x), center)?;
            let rule = box_rule(&dist.half_widths(), opts.nodes(n));
            let nodes: Vec<(Vector, f64, f64)> = rule
                .par_iter()
                .filter_map(|(w, qw)| {
                    let d = dist.density(w);
                    if d > 0.0 {
                        let w0 = (1.0 + w.iter().map(|v| v * v).sum::<f64>()).sqrt();
                        Some((frame.point(w), qw * d / w0, d))
                    } else {
                        None
                    }
                })
                .collect();
            let mut s = FiberSample {
                points: Vec::with_capacity(nodes.len()),
                weights: Vec::with_capacity(nodes.len()),
                density: Vec::with_capacity(nodes.len()),
            };
            for (p, w, d) in nodes {
                s.points.push(p);
                s.weights.push(w);
                s.density.push(d);
            }
            Ok(s)
        }
    }
}

/// Normalized fiber moments of `dist` at `x`.
pub fn moments(dist: &HyperboloidDistribution, metric: &dyn MetricField, x: &Vector) -> Result<MomentSet> {
    moments_with(dist, metric, x, &QuadratureOptions::default())
}

pub fn moments_with(
    dist: &HyperboloidDistribution,
    metric: &dyn MetricField,
    x: &Vector,
    opts: &QuadratureOptions,
) -> Result<MomentSet> {
    if let HyperboloidDistribution::Dirac { center, weight } = dist {
        check_dim(metric.dimension(), center.len())?;
        if !(*weight > 0.0) {
            return Err(Error::EmptySupport(*weight));
        }
        return Ok(MomentSet::dirac(center, *weight));
    }
    let sample = fiber_sample(dist, metric, x, opts)?;
    moments_of_sample(&sample, &metric.metric(x))
}

/// Support diameter in `eta_bar` units, `eta_bar` built from the mean
/// direction of the distribution.
pub fn support_diameter(dist: &HyperboloidDistribution, metric: &dyn MetricField, x: &Vector) -> Result<f64> {
    Ok(moments(dist, metric, x)?.alpha)
}

/// `inf y^0` over the support.
pub fn energy(dist: &HyperboloidDistribution, metric: &dyn MetricField, x: &Vector) -> Result<f64> {
    Ok(moments(dist, metric, x)?.energy)
}

/// Future-directed `y` on the unit hyperboloid with the given spatial part.
pub fn hyperboloid_lift(metric: &dyn MetricField, x: &Vector, spatial: &[f64]) -> Result<Vector> {
    let n = metric.dimension();
    check_dim(n - 1, spatial.len())?;
    let eta = metric.metric(x);
    let a = eta[(0, 0)];
    let mut b = 0.0;
    let mut c = 0.0;
    for i in 1..n {
        b += eta[(0, i)] * spatial[i - 1];
        for j in 1..n {
            c += eta[(i, j)] * spatial[i - 1] * spatial[j - 1];
        }
    }
    // a t^2 + 2 b t + (c - 1) = 0
    let disc = b * b - a * (c - 1.0);
    if !(a > 0.0) || !(disc >= 0.0) {
        return Err(Error::NoHyperboloidRoot);
    }
    let t = (-b + disc.sqrt()) / a;
    if !(t > 0.0) {
        return Err(Error::NoHyperboloidRoot);
    }
    let mut y = Vector::zeros(n);
    y[0] = t;
    for i in 1..n {
        y[i] = spatial[i - 1];
    }
    Ok(y)
}

/// `sqrt|det eta| / y^0`.
pub fn volume_density(metric: &dyn MetricField, x: &Vector, y: &Vector) -> Result<f64> {
    if !(y[0] > 0.0) {
        return Err(Error::NonPositiveTime(y[0]));
    }
    Ok(metric.metric(x).determinant().abs().sqrt() / y[0])
}

/// `count` particles at `x` drawn from the distribution, each with weight
/// `1 / count`. Deterministic for a given seed.
pub fn sample_ensemble(
    dist: &HyperboloidDistribution,
    metric: &dyn MetricField,
    x: &Vector,
    count: usize,
    seed: u64,
) -> Result<Vec<Particle>> {
    let n = metric.dimension();
    check_dim(n, x.len())?;
    if count == 0 {
        return Err(Error::OutOfRange("ensemble size must be at least 1".into()));
    }
    let weight = 1.0 / count as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make = |y: Vector| Particle {
        x: x.clone(),
        y,
        weight,
    };
    match dist {
        HyperboloidDistribution::Dirac { center, .. } => Ok(vec![make(center.clone()); count]),
        HyperboloidDistribution::Ensemble { particles } => {
            if particles.is_empty() {
                return Err(Error::EmptySupport(0.0));
            }
            let idx =
                WeightedIndex::new(particles.iter().map(|p| p.weight)).map_err(|e| Error::OutOfRange(e.to_string()))?;
            Ok((0..count)
                .map(|_| make(particles[idx.sample(&mut rng)].y.clone()))
                .collect())
        }
        HyperboloidDistribution::GaussianBump { center, sigma, r_cut } => {
            let frame = FiberFrame::new(&metric.metric(x), center)?;
            let normals: Vec<Normal<f64>> = sigma
                .iter()
                .map(|&s| Normal::new(0.0, s).map_err(|e| Error::OutOfRange(e.to_string())))
                .collect::<Result<_>>()?;
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let w: Vec<f64> = normals.iter().map(|d| d.sample(&mut rng)).collect();
                let rho2: f64 = w.iter().zip(sigma).map(|(v, s)| (v / (r_cut * s)).powi(2)).sum();
                if rho2 >= 1.0 {
                    continue;
                }
                let w0 = (1.0 + w.iter().map(|v| v * v).sum::<f64>()).sqrt();
                let accept = (1.0 - rho2).powi(2) / w0;
                if rng.random::<f64>() < accept {
                    out.push(make(frame.point(&w)));
                }
            }
            Ok(out)
        }
        HyperboloidDistribution::UniformBall { center, radius } => {
            let frame = FiberFrame::new(&metric.metric(x), center)?;
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let w: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-radius..*radius)).collect();
                let r2: f64 = w.iter().map(|v| v * v).sum();
                if r2 >= radius * radius {
                    continue;
                }
                if rng.random::<f64>() < 1.0 / (1.0 + r2).sqrt() {
                    out.push(make(frame.point(&w)));
                }
            }
            Ok(out)
        }
    }
}

/// Advances every particle by lab time `dt` under the Lorentz force. The
/// weight with respect to the fiber measure `d y / y^0` is rescaled by
/// `y^0(0) / y^0(t)`, which keeps the phase-space mass of each particle.
pub fn transport_ensemble(
    particles: &[Particle],
    metric: &dyn MetricField,
    faraday: &dyn FaradayField,
    dt: f64,
    tol: f64,
) -> Result<Vec<Particle>> {
    let opts = IntegrationOptions {
        tol,
        n_out: 1,
        ..Default::default()
    };
    particles
        .par_iter()
        .map(|p| {
            let tr = integrate_lorentz(metric, faraday, &p.x, &p.y, dt, &opts)?;
            let end = tr.last();
            Ok(Particle {
                x: end.x.clone(),
                y: end.y.clone(),
                weight: p.weight * p.y[0] / end.y[0],
            })
        })
        .collect()
}

/// Writes `t, id, weight, x0.., y0..` rows for one ensemble snapshot.
pub fn write_ensemble_csv<W: Write>(out: W, snapshots: &[(f64, Vec<Particle>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = snapshots
        .iter()
        .find_map(|(_, ps)| ps.first().map(|p| p.x.len()))
        .unwrap_or(4);
    let mut header = vec!["t".to_string(), "id".into(), "weight".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..n).map(|i| format!("y{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for (t, particles) in snapshots {
        for (id, p) in particles.iter().enumerate() {
            let mut row = vec![fmt(*t), id.to_string(), fmt(p.weight)];
            row.extend(p.x.iter().map(|&v| fmt(v)));
            row.extend(p.y.iter().map(|&v| fmt(v)));
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Minkowski-frame boost of the rest velocity with the given rapidity along
/// a spatial direction.
pub fn boosted_velocity(n: usize, rapidity: f64, direction: &[f64]) -> Result<Vector> {
    check_dim(n - 1, direction.len())?;
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::OutOfRange("boost direction must be nonzero".into()));
    }
    let mut y = Vector::zeros(n);
    y[0] = rapidity.cosh();
    for a in 1..n {
        y[a] = rapidity.sinh() * direction[a - 1] / norm;
    }
    Ok(y)
}
