//! Tensor-product Gauss–Legendre rules on the reference square `[0,1]^2`.

use crate::{Error, Result};

/// A quadrature rule on the reference square.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// Points per direction.
    pub order: usize,
}

impl QuadratureRule {
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Tensor-product Gauss–Legendre rule with `q` points per direction,
/// exact for separate degree up to `2q - 1`.
pub fn gauss_rule(q: usize) -> Result<QuadratureRule> {
    if !(1..=12).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "quadrature order must be between 1 and 12, got {q}"
        )));
    }
    let (nodes, weights) = gauss_legendre_unit_interval(q);
    let mut points2 = Vec::with_capacity(q * q);
    let mut weights2 = Vec::with_capacity(q * q);
    for (i, &x) in nodes.iter().enumerate() {
        for (j, &y) in nodes.iter().enumerate() {
            points2.push([x, y]);
            weights2.push(weights[i] * weights[j]);
        }
    }
    Ok(QuadratureRule {
        points: points2,
        weights: weights2,
        order: q,
    })
}

/// 1D Gauss–Legendre nodes and weights on [0,1].
///
/// Nodes are found by Newton iteration on the Legendre polynomial from the
/// Chebyshev initial guess, converged to 1e-15 on [-1,1], then mapped.
pub fn gauss_legendre_unit_interval(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for k in 0..q {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(q, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(q, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // cos of a decreasing angle sequence: k = 0 is the largest node
        nodes[q - 1 - k] = 0.5 * (x + 1.0);
        weights[q - 1 - k] = 0.5 * w;
    }
    nodes
        .iter()
        .zip(nodes.iter().skip(1))
        .for_each(|(a, b)| debug_assert!(a < b));
    (nodes, weights)
}

/// Legendre `P_n(x)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_rule() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.points()[0][0] - 0.5).abs() < 1e-15);
        assert!((r.points()[0][1] - 0.5).abs() < 1e-15);
        assert!((r.weights()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_rule_integrates_x2y2() {
        let r = gauss_rule(2).unwrap();
        let v = r.integrate(|x, y| x * x * y * y);
        assert!((v - 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn three_point_rule_integrates_x5() {
        let r = gauss_rule(3).unwrap();
        let v = r.integrate(|x, _| x.powi(5));
        assert!((v - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_area() {
        for q in 1..=12 {
            let r = gauss_rule(q).unwrap();
            let s: f64 = r.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "q={q}: weight sum {s}");
        }
    }

    #[test]
    fn exactness_through_degree_2q_minus_1() {
        for q in 1..=12usize {
            let r = gauss_rule(q).unwrap();
            let dmax = 2 * q - 1;
            for i in 0..=dmax {
                for j in 0..=dmax {
                    let got = r.integrate(|x, y| x.powi(i as i32) * y.powi(j as i32));
                    let want = 1.0 / ((i + 1) as f64 * (j + 1) as f64);
                    assert!(
                        (got - want).abs() < 1e-13,
                        "q={q} x^{i} y^{j}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn rule_is_symmetric() {
        for q in [2usize, 3, 5, 8] {
            let r = gauss_rule(q).unwrap();
            let pts = r.points();
            let wts = r.weights();
            for (k, p) in pts.iter().enumerate() {
                // x <-> y swap appears with an identical weight
                let swapped = pts
                    .iter()
                    .position(|s| (s[0] - p[1]).abs() < 1e-15 && (s[1] - p[0]).abs() < 1e-15)
                    .unwrap();
                assert!((wts[swapped] - wts[k]).abs() < 1e-15);
                // reflection about the midlines
                let reflected = pts
                    .iter()
                    .position(|s| {
                        (s[0] - (1.0 - p[0])).abs() < 1e-14 && (s[1] - p[1]).abs() < 1e-15
                    })
                    .unwrap();
                assert!((wts[reflected] - wts[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn out_of_range_orders_rejected() {
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(13).is_err());
    }
}
