//! Analytic test geometries with exact metric densities, curvature oracles,
//! and closed-form target functionals.
//!
//! Four families are supported: flat tori (no boundary, R = 0), round spheres
//! (constant R = d(d-1)/rho^2, no boundary), Euclidean balls (flat, boundary
//! mean curvature K = (d-1)/r), and a C^{1,1} perturbed flat chart used by the
//! smoothing experiments. All oracles are pure functions of the immutable
//! descriptor and safe for concurrent use.

use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("chart domain exceeded: |offset| {got} >= limit {limit}")]
    ChartDomainExceeded { got: f64, limit: f64 },
    #[error("geometry has no boundary")]
    NoBoundary,
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("unsupported dimension {0} (supported: 2, 3)")]
    UnsupportedDimension(usize),
    #[error("no closed-form chart for this geometry: {0}")]
    NoClosedForm(&'static str),
}

pub type GeoResult<T> = Result<T, GeometryError>;

/// A point on the manifold. Coordinates depend on the geometry kind:
/// torus and ball use chart coordinates in R^d, spheres use the unit-vector
/// embedding in R^{d+1} scaled to radius rho, the perturbed chart uses (x, t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point(pub [f64; 4]);

impl Point {
    pub fn from_slice(v: &[f64]) -> Self {
        let mut c = [0.0; 4];
        c[..v.len()].copy_from_slice(v);
        Point(c)
    }
}

/// Analytic geometry descriptor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Geometry {
    FlatTorus { dim: usize, periods: Vec<f64> },
    RoundSphere { dim: usize, radius: f64 },
    EuclideanBall { dim: usize, radius: f64 },
    /// Flat unit chart [0, L]^2 with boundary edge at t = 0 and metric
    /// g = (1 + psi) delta, psi = a (max(0, 1 - |x-x0|^2/rho_b^2))^2.
    /// The squared ramp makes g C^{1,1} but not C^2.
    PerturbedChart { amplitude: f64, center: [f64; 2], bump_radius: f64, side: f64 },
}

/// Closed-form target integrals and the limit functional value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExactFunctionals {
    pub vol: f64,
    pub total_r: f64,
    pub area: f64,
    pub total_k: f64,
    pub f_limit: f64,
}

fn check_dim(dim: usize) -> GeoResult<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(GeometryError::UnsupportedDimension(dim))
    }
}

impl Geometry {
    pub fn flat_torus(dim: usize, periods: &[f64]) -> GeoResult<Self> {
        check_dim(dim)?;
        assert_eq!(periods.len(), dim);
        Ok(Geometry::FlatTorus { dim, periods: periods.to_vec() })
    }

    pub fn round_sphere(dim: usize, radius: f64) -> GeoResult<Self> {
        check_dim(dim)?;
        Ok(Geometry::RoundSphere { dim, radius })
    }

    pub fn euclidean_ball(dim: usize, radius: f64) -> GeoResult<Self> {
        check_dim(dim)?;
        Ok(Geometry::EuclideanBall { dim, radius })
    }

    pub fn perturbed_chart(amplitude: f64, center: [f64; 2], bump_radius: f64) -> Self {
        Geometry::PerturbedChart { amplitude, center, bump_radius, side: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            Geometry::FlatTorus { dim, .. }
            | Geometry::RoundSphere { dim, .. }
            | Geometry::EuclideanBall { dim, .. } => *dim,
            Geometry::PerturbedChart { .. } => 2,
        }
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self, Geometry::EuclideanBall { .. } | Geometry::PerturbedChart { .. })
    }

    /// Tubular radius of the normal exponential map along the boundary.
    pub fn reach(&self) -> Option<f64> {
        match self {
            Geometry::EuclideanBall { radius, .. } => Some(*radius),
            Geometry::PerturbedChart { side, .. } => Some(*side),
            _ => None,
        }
    }

    /// Radius of the normal-coordinate chart at `x` (injectivity bound, and
    /// for the ball the distance to the boundary).
    pub fn chart_radius(&self, x: &Point) -> GeoResult<f64> {
        match self {
            Geometry::FlatTorus { periods, .. } => {
                Ok(periods.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0)
            }
            Geometry::RoundSphere { radius, .. } => Ok(PI * radius),
            Geometry::EuclideanBall { dim, radius } => {
                let r2: f64 = x.0[..*dim].iter().map(|c| c * c).sum();
                Ok(radius - r2.sqrt())
            }
            Geometry::PerturbedChart { .. } => {
                Err(GeometryError::NoClosedForm("perturbed chart has no normal chart oracle"))
            }
        }
    }

    /// Exact volume density sqrt(det g) in geodesic normal coordinates
    /// centered at `x`, evaluated at chart offset `z`.
    pub fn density_normal(&self, x: &Point, z: &[f64]) -> GeoResult<f64> {
        let u: f64 = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        let limit = self.chart_radius(x)?;
        if u >= limit {
            return Err(GeometryError::ChartDomainExceeded { got: u, limit });
        }
        match self {
            Geometry::FlatTorus { .. } | Geometry::EuclideanBall { .. } => Ok(1.0),
            Geometry::RoundSphere { dim, radius } => {
                let s = if u == 0.0 {
                    1.0
                } else {
                    let a = u / radius;
                    a.sin() / a
                };
                Ok(s.powi(*dim as i32 - 1))
            }
            Geometry::PerturbedChart { .. } => unreachable!(),
        }
    }

    /// Exact Fermi-chart volume density at boundary footpoint `s`, tangential
    /// offset `zt`, and inward normal depth `t`. The tangential coordinate is
    /// arc length on the boundary.
    pub fn density_fermi(&self, _s: &Point, zt: &[f64], t: f64) -> GeoResult<f64> {
        match self {
            Geometry::EuclideanBall { dim, radius } => {
                let reach = *radius;
                if t < 0.0 || t >= reach {
                    return Err(GeometryError::ChartDomainExceeded { got: t, limit: reach });
                }
                let tan: f64 = zt.iter().map(|c| c * c).sum::<f64>().sqrt();
                if tan >= PI * radius {
                    return Err(GeometryError::ChartDomainExceeded { got: tan, limit: PI * radius });
                }
                Ok(((radius - t) / radius).powi(*dim as i32 - 1))
            }
            Geometry::PerturbedChart { .. } => {
                Err(GeometryError::NoClosedForm("perturbed chart has no Fermi chart oracle"))
            }
            _ => Err(GeometryError::NoBoundary),
        }
    }

    /// Exact scalar curvature at `x`. For the perturbed chart this is the
    /// almost-everywhere classical value of the conformal factor formula; the
    /// working reference for experiments is the finite-difference oracle grid.
    pub fn scalar_curvature(&self, x: &Point) -> f64 {
        match self {
            Geometry::FlatTorus { .. } | Geometry::EuclideanBall { .. } => 0.0,
            Geometry::RoundSphere { dim, radius } => {
                (*dim as f64) * (*dim as f64 - 1.0) / (radius * radius)
            }
            Geometry::PerturbedChart { .. } => {
                let (c, gx, gt, lap) = self.conformal_jet(x.0[0], x.0[1]);
                // R = -(c Δc - |∇c|^2) / c^3 for g = c δ in 2D
                -(c * lap - (gx * gx + gt * gt)) / (c * c * c)
            }
        }
    }

    /// Exact boundary mean curvature (outer-normal convention; K > 0 on
    /// spheres) at boundary point `s`.
    pub fn mean_curvature(&self, s: &Point) -> GeoResult<f64> {
        match self {
            Geometry::EuclideanBall { dim, radius } => Ok((*dim as f64 - 1.0) / radius),
            Geometry::PerturbedChart { .. } => {
                // Fermi density (1 - t K + O(t^2)) gives K = -∂_t c / (2 c^{3/2}) at t = 0.
                let (c, _, gt, _) = self.conformal_jet(s.0[0], 0.0);
                Ok(-gt / (2.0 * c.powf(1.5)))
            }
            _ => Err(GeometryError::NoBoundary),
        }
    }

    /// Closed-form integrals and the limit value c0 vol + c1 ∫R + c2 ∫K.
    pub fn exact_functionals(&self, c0: f64, c1: f64, c2: f64) -> ExactFunctionals {
        let (vol, total_r, area, total_k) = match self {
            Geometry::FlatTorus { periods, .. } => {
                (periods.iter().product(), 0.0, 0.0, 0.0)
            }
            Geometry::RoundSphere { dim, radius } => {
                let vol = match dim {
                    2 => 4.0 * PI * radius * radius,
                    _ => 2.0 * PI * PI * radius.powi(3),
                };
                let r_scalar = (*dim as f64) * (*dim as f64 - 1.0) / (radius * radius);
                (vol, r_scalar * vol, 0.0, 0.0)
            }
            Geometry::EuclideanBall { dim, radius } => {
                let (vol, area) = match dim {
                    2 => (PI * radius * radius, 2.0 * PI * radius),
                    _ => (4.0 / 3.0 * PI * radius.powi(3), 4.0 * PI * radius * radius),
                };
                let k = (*dim as f64 - 1.0) / radius;
                (vol, 0.0, area, k * area)
            }
            Geometry::PerturbedChart { amplitude, center, bump_radius, side } => {
                // Volume is side^2 + ∫psi; the bump integral over the full disk
                // is a π rho_b^2 / 3, reduced by the part clipped at the edge.
                let vol = side * side + self.bump_volume(*amplitude, *center, *bump_radius, *side);
                // Reference curvature integrals come from the oracle grid.
                let (tr, tk, arc) = self.chart_reference_integrals();
                (vol, tr, arc, tk)
            }
        };
        ExactFunctionals {
            vol,
            total_r,
            area,
            total_k,
            f_limit: c0 * vol + c1 * total_r + c2 * total_k,
        }
    }

    /// Geometry with all lengths multiplied by sigma.
    pub fn rescale(&self, sigma: f64) -> GeoResult<Geometry> {
        if sigma <= 0.0 {
            return Err(GeometryError::NonPositiveScale(sigma));
        }
        Ok(match self {
            Geometry::FlatTorus { dim, periods } => Geometry::FlatTorus {
                dim: *dim,
                periods: periods.iter().map(|l| l * sigma).collect(),
            },
            Geometry::RoundSphere { dim, radius } => {
                Geometry::RoundSphere { dim: *dim, radius: radius * sigma }
            }
            Geometry::EuclideanBall { dim, radius } => {
                Geometry::EuclideanBall { dim: *dim, radius: radius * sigma }
            }
            Geometry::PerturbedChart { amplitude, center, bump_radius, side } => {
                Geometry::PerturbedChart {
                    amplitude: *amplitude,
                    center: [center[0] * sigma, center[1] * sigma],
                    bump_radius: bump_radius * sigma,
                    side: side * sigma,
                }
            }
        })
    }

    /// Geodesic distance between two points.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        match self {
            Geometry::FlatTorus { dim, periods } => {
                let mut acc = 0.0;
                for i in 0..*dim {
                    let mut d = (a.0[i] - b.0[i]).abs() % periods[i];
                    if d > periods[i] / 2.0 {
                        d = periods[i] - d;
                    }
                    acc += d * d;
                }
                acc.sqrt()
            }
            Geometry::RoundSphere { dim, radius } => {
                let mut dot = 0.0;
                for i in 0..=*dim {
                    dot += a.0[i] * b.0[i];
                }
                let cosang = (dot / (radius * radius)).clamp(-1.0, 1.0);
                radius * cosang.acos()
            }
            Geometry::EuclideanBall { dim, .. } => {
                let mut acc = 0.0;
                for i in 0..*dim {
                    let d = a.0[i] - b.0[i];
                    acc += d * d;
                }
                acc.sqrt()
            }
            Geometry::PerturbedChart { .. } => {
                let dx = a.0[0] - b.0[0];
                let dt = a.0[1] - b.0[1];
                (dx * dx + dt * dt).sqrt()
            }
        }
    }

    // ---- perturbed chart internals ----

    /// psi and its chart derivatives (a.e. values).
    pub fn psi(&self, x: f64, t: f64) -> f64 {
        match self {
            Geometry::PerturbedChart { amplitude, center, bump_radius, .. } => {
                let s = ((x - center[0]).powi(2) + (t - center[1]).powi(2))
                    / (bump_radius * bump_radius);
                let q = (1.0 - s).max(0.0);
                amplitude * q * q
            }
            _ => 0.0,
        }
    }

    /// (c, ∂_x c, ∂_t c, Δc) for c = 1 + psi, a.e. classical values.
    fn conformal_jet(&self, x: f64, t: f64) -> (f64, f64, f64, f64) {
        match self {
            Geometry::PerturbedChart { amplitude, center, bump_radius, .. } => {
                let rb2 = bump_radius * bump_radius;
                let dx = x - center[0];
                let dt = t - center[1];
                let s = (dx * dx + dt * dt) / rb2;
                if s >= 1.0 {
                    return (1.0, 0.0, 0.0, 0.0);
                }
                let q = 1.0 - s;
                let c = 1.0 + amplitude * q * q;
                // ∂psi = -2 a q ∂s, ∂s = 2(x - x0)/rb^2
                let gx = -2.0 * amplitude * q * 2.0 * dx / rb2;
                let gt = -2.0 * amplitude * q * 2.0 * dt / rb2;
                // Δpsi = 2a |∇s|^2 - 2 a q Δs, |∇s|^2 = 4 s / rb^2, Δs = 4/rb^2
                let lap = 8.0 * amplitude * (2.0 * s - 1.0) / rb2;
                (c, gx, gt, lap)
            }
            _ => (1.0, 0.0, 0.0, 0.0),
        }
    }

    /// Lipschitz constant of the first metric derivatives, computable from
    /// (a, rho_b): sup |∂^2 psi| = 8 a / rho_b^2.
    pub fn metric_gradient_lipschitz(&self) -> f64 {
        match self {
            Geometry::PerturbedChart { amplitude, bump_radius, .. } => {
                8.0 * amplitude / (bump_radius * bump_radius)
            }
            _ => 0.0,
        }
    }

    fn bump_volume(&self, a: f64, center: [f64; 2], rb: f64, side: f64) -> f64 {
        let inside = center[0] - rb >= 0.0
            && center[0] + rb <= side
            && center[1] - rb >= 0.0
            && center[1] + rb <= side;
        if inside {
            // ∫ a (1-s)^2 over the disk = a π rb^2 / 3
            return a * PI * rb * rb / 3.0;
        }
        // Clipped bump: polar rule about the center, dropping nodes outside.
        let rule = crate::quad::ball_rule(2, rb, 64, 256);
        let mut acc = 0.0;
        for n in &rule {
            let x = center[0] + n.point[0];
            let t = center[1] + n.point[1];
            if x >= 0.0 && x <= side && t >= 0.0 && t <= side {
                acc += n.weight * self.psi(x, t);
            }
        }
        acc
    }

    /// Curvature integrals of the perturbed chart from the a.e. formulas by
    /// midpoint sums on a fine grid (reference quality O(1e-4); the smoothing
    /// experiments use their own finite-difference oracle).
    fn chart_reference_integrals(&self) -> (f64, f64, f64) {
        let Geometry::PerturbedChart { side, .. } = self else { return (0.0, 0.0, 0.0) };
        let n = 1200usize;
        let dx = side / n as f64;
        let mut total_r = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.5) * dx;
                let t = (j as f64 + 0.5) * dx;
                let r = self.scalar_curvature(&Point([x, t, 0.0, 0.0]));
                let (c, ..) = self.conformal_jet(x, t);
                total_r += r * c * dx * dx;
            }
        }
        let mut total_k = 0.0;
        let mut arc = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) * dx;
            let (c, ..) = self.conformal_jet(x, 0.0);
            let k = self.mean_curvature(&Point([x, 0.0, 0.0, 0.0])).unwrap();
            // Only the t=0 edge is treated as boundary for the chart model.
            total_k += k * c.sqrt() * dx;
            arc += c.sqrt() * dx;
        }
        (total_r, total_k, arc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn origin() -> Point {
        Point([0.0; 4])
    }

    #[test]
    fn torus_density_is_one() {
        let g = Geometry::flat_torus(2, &[1.0, 1.0]).unwrap();
        let d = g.density_normal(&Point([0.3, 0.4, 0.0, 0.0]), &[0.1, -0.05]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn sphere_density_closed_form() {
        let g = Geometry::round_sphere(2, 1.0).unwrap();
        let p = Point([0.0, 0.0, 1.0, 0.0]);
        let d = g.density_normal(&p, &[0.1, 0.0]).unwrap();
        assert_relative_eq!(d, (0.1f64).sin() / 0.1, max_relative = 1e-15);
        // cross-check against the second-order expansion 1 - |z|^2/6
        assert!((d - (1.0 - 0.01 / 6.0)).abs() < 1e-5);
        assert_eq!(g.density_normal(&p, &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn sphere_density_taylor_coefficient() {
        // Fit the |z|^2 coefficient at |z| <= 1e-2 and compare with the
        // expansion 1 - (d-1) u^2 / (6 rho^2) + O(u^4): writing
        // e(u) = c u^2 + q u^4, Richardson over u and u/2 gives
        // c = (16 e(u/2) - e(u)) / (3 u^2).
        for (dim, rho) in [(2usize, 1.0f64), (3, 2.0)] {
            let g = Geometry::round_sphere(dim, rho).unwrap();
            let p = Point([0.0, 0.0, 0.0, rho]);
            let u = 1e-2;
            let z1 = [u, 0.0, 0.0];
            let z2 = [u / 2.0, 0.0, 0.0];
            let e1 = 1.0 - g.density_normal(&p, &z1[..dim]).unwrap();
            let e2 = 1.0 - g.density_normal(&p, &z2[..dim]).unwrap();
            let c = (16.0 * e2 - e1) / (3.0 * u * u);
            let expected = (dim as f64 - 1.0) / (6.0 * rho * rho);
            assert!(
                (c - expected).abs() / expected < 1e-4,
                "dim {dim}: fitted {c} vs expected {expected}"
            );
        }
    }

    #[test]
    fn sphere_chart_domain() {
        let g = Geometry::round_sphere(2, 1.0).unwrap();
        let p = Point([0.0, 0.0, 1.0, 0.0]);
        let err = g.density_normal(&p, &[4.0, 0.0]).unwrap_err();
        assert!(matches!(err, GeometryError::ChartDomainExceeded { .. }));
    }

    #[test]
    fn ball_fermi_density() {
        let g = Geometry::euclidean_ball(2, 1.0).unwrap();
        let s = Point([1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.density_fermi(&s, &[0.0], 0.0).unwrap(), 1.0);
        assert_relative_eq!(g.density_fermi(&s, &[0.1], 0.1).unwrap(), 0.9, max_relative = 1e-15);
        let g3 = Geometry::euclidean_ball(3, 2.0).unwrap();
        let s3 = Point([2.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(
            g3.density_fermi(&s3, &[0.0, 0.0], 0.1).unwrap(),
            0.9025,
            max_relative = 1e-15
        );
    }

    #[test]
    fn fermi_linear_coefficient_matches_mean_curvature() {
        for (dim, r) in [(2usize, 1.0f64), (3, 2.0)] {
            let g = Geometry::euclidean_ball(dim, r).unwrap();
            let mut s = origin();
            s.0[0] = r;
            let t = 1e-2;
            let e1 = 1.0 - g.density_fermi(&s, &[0.0, 0.0], t).unwrap();
            let e2 = 1.0 - g.density_fermi(&s, &[0.0, 0.0], t / 2.0).unwrap();
            // e(t) = K t + c2 t^2: eliminate the quadratic term
            let k_fit = (4.0 * e2 - e1) / (2.0 * (t / 2.0));
            let k = g.mean_curvature(&s).unwrap();
            assert!((k_fit - k).abs() / k < 1e-4, "fit {k_fit} vs {k}");
        }
    }

    #[test]
    fn fermi_errors() {
        let torus = Geometry::flat_torus(2, &[1.0, 1.0]).unwrap();
        assert_eq!(torus.density_fermi(&origin(), &[0.0], 0.1), Err(GeometryError::NoBoundary));
        let ball = Geometry::euclidean_ball(2, 1.0).unwrap();
        let mut s = origin();
        s.0[0] = 1.0;
        assert!(matches!(
            ball.density_fermi(&s, &[0.0], 1.5),
            Err(GeometryError::ChartDomainExceeded { .. })
        ));
    }

    #[test]
    fn curvature_oracles() {
        let sphere = Geometry::round_sphere(2, 1.0).unwrap();
        assert_eq!(sphere.scalar_curvature(&Point([0.0, 0.0, 1.0, 0.0])), 2.0);
        let ball = Geometry::euclidean_ball(2, 1.0).unwrap();
        let mut s = origin();
        s.0[0] = 1.0;
        assert_eq!(ball.mean_curvature(&s).unwrap(), 1.0);
        let torus = Geometry::flat_torus(2, &[1.0, 1.0]).unwrap();
        assert_eq!(torus.scalar_curvature(&origin()), 0.0);
        assert_eq!(torus.mean_curvature(&origin()), Err(GeometryError::NoBoundary));
    }

    #[test]
    fn exact_functional_values() {
        let ball = Geometry::euclidean_ball(2, 1.0).unwrap();
        let f = ball.exact_functionals(0.0, 0.0, 1.0);
        assert_relative_eq!(f.f_limit, 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(f.total_k, 2.0 * PI, max_relative = 1e-15);

        let sphere = Geometry::round_sphere(2, 1.0).unwrap();
        let f = sphere.exact_functionals(0.0, 1.0, 0.0);
        assert_relative_eq!(f.f_limit, 8.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(f.vol, 4.0 * PI, max_relative = 1e-15);

        let torus = Geometry::flat_torus(2, &[1.0, 1.0]).unwrap();
        let f = torus.exact_functionals(3.5, 1.0, 1.0);
        assert_relative_eq!(f.f_limit, 3.5, max_relative = 1e-15);
    }

    #[test]
    fn rescale_homogeneities_exact() {
        let ball = Geometry::euclidean_ball(2, 1.0).unwrap();
        let f2 = ball.rescale(2.0).unwrap().exact_functionals(0.0, 0.0, 1.0);
        assert_relative_eq!(f2.total_k, 2.0 * PI, max_relative = 1e-15); // d-2 = 0

        let sphere = Geometry::round_sphere(3, 1.0).unwrap();
        let f = sphere.exact_functionals(1.0, 0.0, 0.0);
        let f2 = sphere.rescale(2.0).unwrap().exact_functionals(1.0, 0.0, 0.0);
        assert_relative_eq!(f2.vol, 8.0 * f.vol, max_relative = 1e-15); // sigma^d

        let ball3 = Geometry::euclidean_ball(3, 1.0).unwrap();
        let k1 = ball3.exact_functionals(0.0, 0.0, 1.0).total_k;
        let k2 = ball3.rescale(2.0).unwrap().exact_functionals(0.0, 0.0, 1.0).total_k;
        assert_relative_eq!(k2, 2.0 * k1, max_relative = 1e-15); // sigma^{d-2}

        let tr1 = sphere.exact_functionals(0.0, 1.0, 0.0).total_r;
        let tr2 = sphere.rescale(2.0).unwrap().exact_functionals(0.0, 1.0, 0.0).total_r;
        assert_relative_eq!(tr2, 2.0 * tr1, max_relative = 1e-15);
    }

    #[test]
    fn rescale_rejects_nonpositive() {
        let g = Geometry::euclidean_ball(2, 1.0).unwrap();
        assert_eq!(g.rescale(0.0).unwrap_err(), GeometryError::NonPositiveScale(0.0));
    }

    #[test]
    fn unsupported_dimension() {
        assert_eq!(
            Geometry::round_sphere(4, 1.0).unwrap_err(),
            GeometryError::UnsupportedDimension(4)
        );
    }

    #[test]
    fn perturbed_chart_regularity_data() {
        let g = Geometry::perturbed_chart(0.15, [0.5, 0.32], 0.4);
        assert_relative_eq!(g.metric_gradient_lipschitz(), 8.0 * 0.15 / 0.16, max_relative = 1e-15);
        // psi vanishes outside the bump
        assert_eq!(g.psi(0.95, 0.95), 0.0);
        // conformal curvature is zero outside the bump
        assert_eq!(g.scalar_curvature(&Point([0.95, 0.95, 0.0, 0.0])), 0.0);
        // boundary K is nonzero under the bump footprint
        let k = g.mean_curvature(&Point([0.5, 0.0, 0.0, 0.0])).unwrap();
        assert!(k.abs() > 1e-3, "expected nonzero edge curvature, got {k}");
    }

    #[test]
    fn torus_distance_wraps() {
        let g = Geometry::flat_torus(2, &[1.0, 1.0]).unwrap();
        let d = g.distance(&Point([0.05, 0.0, 0.0, 0.0]), &Point([0.95, 0.0, 0.0, 0.0]));
        assert_relative_eq!(d, 0.1, max_relative = 1e-12);
    }
}
