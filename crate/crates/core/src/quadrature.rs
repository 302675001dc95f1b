//! Tensor-product Gauss-Legendre rules on boxes.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights of the `m`-point rule on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let m = NonZeroUsize::new(m.max(1)).expect("nonzero");
    let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(m)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (x, w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Tensor-product rule on the box `prod [-h_a, h_a]`, returned in
/// lexicographic node order (last axis fastest).
pub fn box_rule(half_widths: &[f64], m: usize) -> Vec<(Vec<f64>, f64)> {
    let base = gauss_legendre(m);
    let d = half_widths.len();
    let total = base.len().pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut point = Vec::with_capacity(d);
        let mut w = 1.0;
        for (a, &i) in idx.iter().enumerate() {
            point.push(base[i].0 * half_widths[a]);
            w *= base[i].1 * half_widths[a];
        }
        out.push((point, w));
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < base.len() {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// Integral of `f` over the box `prod [-h_a, h_a]`.
pub fn integrate_box(f: impl Fn(&[f64]) -> f64, half_widths: &[f64], m: usize) -> f64 {
    let mut sum = crate::tensor::CompensatedSum::default();
    for (p, w) in box_rule(half_widths, m) {
        sum.add(w * f(&p));
    }
    sum.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        for m in [1, 2, 5, 24, 64] {
            let s: f64 = gauss_legendre(m).iter().map(|p| p.1).sum();
            assert!((s - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2m_minus_1() {
        let m = 6;
        for deg in 0..(2 * m) {
            let q: f64 = gauss_legendre(m).iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn box_integral_of_gaussian() {
        let v = integrate_box(|p| (-(p[0] * p[0] + p[1] * p[1])).exp(), &[6.0, 6.0], 40);
        assert!((v - std::f64::consts::PI).abs() < 1e-10);
        assert_eq!(box_rule(&[1.0, 2.0, 3.0], 4).len(), 64);
    }
}
