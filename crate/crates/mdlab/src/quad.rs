//! Gauss–Legendre rules and product rules for compactly supported kernels.
//!
//! Kernels in this crate are radial with support on a disk or ball. A
//! Cartesian tensor rule over the bounding box converges only algebraically
//! for such integrands (the profile is C^{1,1} at the support sphere), so all
//! disk/ball integrals use a radial Gauss rule tensored with spectrally
//! accurate angular rules. 1D integrals over the profile's own interval are
//! plain Gauss–Legendre (the integrands are polynomial times smooth there).

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_on_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let nodes = xs.iter().map(|x| mid + half * x).collect();
    let weights = ws.iter().map(|w| w * half).collect();
    (nodes, weights)
}

/// A quadrature node in d dimensions with its weight.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub point: [f64; 3],
    pub weight: f64,
}

/// Product rule for the disk/ball of radius `radius` in dimension d ∈ {1, 2, 3}.
///
/// Radial direction: Gauss of order `radial_order` (weights carry the r^{d-1}
/// Jacobian). Angular directions: uniform trapezoid in the circle angle
/// (spectral for periodic smooth integrands) and Gauss in cos(theta) for d=3.
pub fn ball_rule(dim: usize, radius: f64, radial_order: usize, angular_order: usize) -> Vec<Node> {
    let (rs, rws) = gauss_on_interval(radial_order, 0.0, radius);
    let mut nodes = Vec::new();
    match dim {
        1 => {
            // "Ball" in 1D is the symmetric interval.
            for (&r, &w) in rs.iter().zip(&rws) {
                nodes.push(Node { point: [r, 0.0, 0.0], weight: w });
                nodes.push(Node { point: [-r, 0.0, 0.0], weight: w });
            }
        }
        2 => {
            let m = angular_order.max(4);
            let dtheta = 2.0 * PI / m as f64;
            for (&r, &w) in rs.iter().zip(&rws) {
                for j in 0..m {
                    let th = dtheta * j as f64;
                    nodes.push(Node {
                        point: [r * th.cos(), r * th.sin(), 0.0],
                        weight: w * r * dtheta,
                    });
                }
            }
        }
        3 => {
            let (mus, muws) = gauss_legendre(angular_order.max(4) / 2);
            let m = angular_order.max(4);
            let dphi = 2.0 * PI / m as f64;
            for (&r, &w) in rs.iter().zip(&rws) {
                for (&mu, &mw) in mus.iter().zip(&muws) {
                    let sin_t = (1.0 - mu * mu).sqrt();
                    for j in 0..m {
                        let ph = dphi * j as f64;
                        nodes.push(Node {
                            point: [r * sin_t * ph.cos(), r * sin_t * ph.sin(), r * mu],
                            weight: w * r * r * mw * dphi,
                        });
                    }
                }
            }
        }
        _ => panic!("ball_rule supports dim 1..3, got {dim}"),
    }
    nodes
}

/// Tensor Gauss rule on a rectangle [a0,b0] x [a1,b1] (for smooth integrands,
/// e.g. cell volume Jacobians).
pub fn rect_rule(n: usize, a: [f64; 2], b: [f64; 2]) -> Vec<Node> {
    let (x0, w0) = gauss_on_interval(n, a[0], b[0]);
    let (x1, w1) = gauss_on_interval(n, a[1], b[1]);
    let mut nodes = Vec::with_capacity(n * n);
    for (u, wu) in x0.iter().zip(&w0) {
        for (v, wv) in x1.iter().zip(&w1) {
            nodes.push(Node { point: [*u, *v, 0.0], weight: wu * wv });
        }
    }
    nodes
}

/// Tensor Gauss rule on a box in 3D.
pub fn box_rule(n: usize, a: [f64; 3], b: [f64; 3]) -> Vec<Node> {
    let (x0, w0) = gauss_on_interval(n, a[0], b[0]);
    let (x1, w1) = gauss_on_interval(n, a[1], b[1]);
    let (x2, w2) = gauss_on_interval(n, a[2], b[2]);
    let mut nodes = Vec::with_capacity(n * n * n);
    for (u, wu) in x0.iter().zip(&w0) {
        for (v, wv) in x1.iter().zip(&w1) {
            for (s, ws) in x2.iter().zip(&w2) {
                nodes.push(Node { point: [*u, *v, *s], weight: wu * wv * ws });
            }
        }
    }
    nodes
}

/// Neumaier compensated sum in slice order. Used for every deterministic
/// reduction so totals are independent of how the per-item work was produced.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        let (xs, ws) = gauss_legendre(20);
        // degree 39 is integrated exactly; x^38 over [-1,1] = 2/39
        let val: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(38)).sum();
        assert_relative_eq!(val, 2.0 / 39.0, max_relative = 1e-13);
    }

    #[test]
    fn gauss_interval_length() {
        let (_, ws) = gauss_on_interval(8, 0.25, 0.75);
        let total: f64 = ws.iter().sum();
        assert_relative_eq!(total, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn disk_rule_area_and_moments() {
        let rule = ball_rule(2, 1.0, 20, 64);
        let area: f64 = rule.iter().map(|n| n.weight).sum();
        assert_relative_eq!(area, PI, max_relative = 1e-13);
        // second moment of the unit disk: ∫ x^2 = π/4
        let m2: f64 = rule.iter().map(|n| n.weight * n.point[0] * n.point[0]).sum();
        assert_relative_eq!(m2, PI / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn ball3_rule_volume() {
        let rule = ball_rule(3, 2.0, 16, 24);
        let vol: f64 = rule.iter().map(|n| n.weight).sum();
        assert_relative_eq!(vol, 4.0 / 3.0 * PI * 8.0, max_relative = 1e-12);
    }

    #[test]
    fn compensated_sum_matches_exact() {
        let vals = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(&vals), 2.0);
    }
}
