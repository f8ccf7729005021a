//! Interior isotropic window and anisotropic boundary window, with
//! normalization, moment computation, and class verification.
//!
//! Windows are value objects in the dimensionless variable xi = z/h. The
//! interior window is a compactly supported radial kernel (default quartic
//! bump (1-u^2)^2); the boundary window pairs a 1D normal profile on
//! [0, c_star] (default triangular) with a tangential copy of the interior
//! kernel in d-1 dimensions. Moments are computed with a radial Gauss rule
//! tensored with spectrally accurate angular rules, and cross-checked against
//! an independent 1D radial reduction.

use crate::quad::{ball_rule, gauss_on_interval, Node};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("window profile is negative at u = {0}")]
    NegativeProfile(f64),
    #[error("window profile has zero mass")]
    ZeroMass,
}

/// Radial profile for the interior window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InteriorProfile {
    /// (1 - u^2)^2 on [0, 1].
    Quartic,
}

impl InteriorProfile {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            InteriorProfile::Quartic => {
                if u >= 1.0 {
                    0.0
                } else {
                    let q = 1.0 - u * u;
                    q * q
                }
            }
        }
    }
}

/// Normal profile for the boundary window on [0, c_star].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BoundaryProfile {
    /// 2 (1 - tau/c_star) / c_star; first moment c_star / 3.
    Triangular,
    /// (1/3) uniform + (2/3) parabolic 3 (c-tau)^2 / c^3; same first moment
    /// c_star / 3 as the triangular profile, different shape. Used by the
    /// window-shape invariance experiment.
    Blended,
}

impl BoundaryProfile {
    pub fn eval(&self, tau: f64, c_star: f64) -> f64 {
        if !(0.0..=c_star).contains(&tau) {
            return 0.0;
        }
        match self {
            BoundaryProfile::Triangular => 2.0 * (1.0 - tau / c_star) / c_star,
            BoundaryProfile::Blended => {
                let c = c_star;
                (1.0 / 3.0) / c + (2.0 / 3.0) * 3.0 * (c - tau) * (c - tau) / (c * c * c)
            }
        }
    }
}

/// Interior window: normalized radial kernel in dimension `dim` with support
/// bound `lambda_z`. `shift` displaces the profile along e1 (used only for
/// fault-injection tests; a compliant window has shift = 0).
#[derive(Debug, Clone)]
pub struct InteriorWindow {
    pub dim: usize,
    pub profile: InteriorProfile,
    pub lambda_z: f64,
    pub shift: f64,
    pub quad_order: usize,
    norm: f64,
    nodes: Vec<Node>,
}

impl InteriorWindow {
    pub fn new(
        dim: usize,
        profile: InteriorProfile,
        lambda_z: f64,
        shift: f64,
        quad_order: usize,
    ) -> Result<Self, WindowError> {
        let angular = match dim {
            1 => 0,
            2 => 64,
            _ => 40,
        };
        let rule = ball_rule(dim, lambda_z, quad_order, angular);
        let mut mass = 0.0;
        for n in &rule {
            let u = norm3(&n.point) / lambda_z;
            let p = profile.eval(u);
            if p < 0.0 {
                return Err(WindowError::NegativeProfile(u));
            }
            mass += n.weight * p;
        }
        if mass <= f64::EPSILON {
            return Err(WindowError::ZeroMass);
        }
        let nodes = rule
            .iter()
            .map(|n| {
                let u = norm3(&n.point) / lambda_z;
                let mut point = n.point;
                point[0] += shift;
                Node { point, weight: n.weight * profile.eval(u) / mass }
            })
            .collect();
        Ok(InteriorWindow { dim, profile, lambda_z, shift, quad_order, norm: mass, nodes })
    }

    pub fn default_for_dim(dim: usize) -> Self {
        InteriorWindow::new(dim, InteriorProfile::Quartic, 1.0, 0.0, 20).unwrap()
    }

    /// Quadrature nodes in xi-space; weights sum to 1.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Normalization constant Z (mass of the unnormalized profile).
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Window-average of `f(xi)`.
    pub fn average(&self, mut f: impl FnMut(&[f64; 3]) -> f64) -> f64 {
        let mut acc = 0.0;
        for n in &self.nodes {
            acc += n.weight * f(&n.point);
        }
        acc
    }

    /// Independent oracle for mu2 via the 1D radial reduction
    /// mu2 = (1/d) ∫ phi(u) u^{d+1} du / ∫ phi(u) u^{d-1} du, scaled by
    /// lambda_z^2. Only valid for the unshifted window.
    pub fn mu2_radial_oracle(&self) -> f64 {
        let (us, ws) = gauss_on_interval(64, 0.0, 1.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (&u, &w) in us.iter().zip(&ws) {
            let p = self.profile.eval(u);
            num += w * p * u.powi(self.dim as i32 + 1);
            den += w * p * u.powi(self.dim as i32 - 1);
        }
        self.lambda_z * self.lambda_z * num / den / self.dim as f64
    }

    /// Independent oracle for <|xi|^k>.
    pub fn radial_moment_oracle(&self, k: u32) -> f64 {
        let (us, ws) = gauss_on_interval(64, 0.0, 1.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (&u, &w) in us.iter().zip(&ws) {
            let p = self.profile.eval(u);
            num += w * p * u.powi(self.dim as i32 - 1 + k as i32);
            den += w * p * u.powi(self.dim as i32 - 1);
        }
        self.lambda_z.powi(k as i32) * num / den
    }
}

fn norm3(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Boundary window: 1D normal profile w0 on [0, c_star] plus a tangential
/// interior window in dim-1 dimensions.
#[derive(Debug, Clone)]
pub struct BoundaryWindow {
    pub dim: usize,
    pub profile: BoundaryProfile,
    pub c_star: f64,
    pub quad_order: usize,
    pub tangential: InteriorWindow,
    normal_nodes: Vec<(f64, f64)>,
    norm: f64,
}

impl BoundaryWindow {
    pub fn new(
        dim: usize,
        profile: BoundaryProfile,
        c_star: f64,
        tangential: InteriorWindow,
        quad_order: usize,
    ) -> Result<Self, WindowError> {
        assert_eq!(tangential.dim, dim - 1);
        let (taus, ws) = gauss_on_interval(quad_order, 0.0, c_star);
        let mut mass = 0.0;
        for (&t, &w) in taus.iter().zip(&ws) {
            let p = profile.eval(t, c_star);
            if p < 0.0 {
                return Err(WindowError::NegativeProfile(t));
            }
            mass += w * p;
        }
        if mass <= f64::EPSILON {
            return Err(WindowError::ZeroMass);
        }
        let normal_nodes = taus
            .iter()
            .zip(&ws)
            .map(|(&t, &w)| (t, w * profile.eval(t, c_star) / mass))
            .collect();
        Ok(BoundaryWindow { dim, profile, c_star, quad_order, tangential, normal_nodes, norm: mass })
    }

    pub fn default_for_dim(dim: usize, c_star: f64) -> Self {
        let tang = InteriorWindow::new(dim - 1, InteriorProfile::Quartic, 1.0, 0.0, 20).unwrap();
        BoundaryWindow::new(dim, BoundaryProfile::Triangular, c_star, tang, 20).unwrap()
    }

    /// Normal-direction nodes (tau, weight); weights sum to 1.
    pub fn normal_nodes(&self) -> &[(f64, f64)] {
        &self.normal_nodes
    }

    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// First normal moment mu1 = <tau>.
    pub fn mu1(&self) -> f64 {
        self.normal_nodes.iter().map(|(t, w)| w * t).sum()
    }

    /// <tau^k>.
    pub fn normal_moment(&self, k: u32) -> f64 {
        self.normal_nodes.iter().map(|(t, w)| w * t.powi(k as i32)).sum()
    }

    /// Average of f(zeta, tau) over the product window (zeta tangential).
    pub fn average(&self, mut f: impl FnMut(&[f64; 3], f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (tau, wn) in &self.normal_nodes {
            for n in self.tangential.nodes() {
                acc += wn * n.weight * f(&n.point, *tau);
            }
        }
        acc
    }

    /// Closed-form oracle for mu1 of the built-in profiles.
    pub fn mu1_oracle(&self) -> f64 {
        match self.profile {
            BoundaryProfile::Triangular => self.c_star / 3.0,
            BoundaryProfile::Blended => self.c_star / 3.0,
        }
    }
}

/// Moment report for a window pair, with the residuals the class demands.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub interior_norm: f64,
    pub mu2: f64,
    pub mu2_oracle: f64,
    pub interior_c_k: [f64; 4],
    pub max_odd1: f64,
    pub max_odd3: f64,
    pub iso_offdiag: f64,
    pub iso_diag_spread: f64,
    pub boundary_norm: f64,
    pub mu1: f64,
    pub mu1_oracle: f64,
    pub boundary_t_k: [f64; 4],
    pub mass_residual: f64,
}

/// Compute normalization and all moments for a window pair.
pub fn normalize_and_moments(interior: &InteriorWindow, boundary: &BoundaryWindow) -> MomentReport {
    let d = interior.dim;
    let mass: f64 = interior.nodes().iter().map(|n| n.weight).sum();

    let mut first = [0.0f64; 3];
    let mut second = [[0.0f64; 3]; 3];
    let mut third_max = 0.0f64;
    let mut c_k = [0.0f64; 4];
    for n in interior.nodes() {
        let p = n.point;
        let r = norm3(&p);
        for i in 0..d {
            first[i] += n.weight * p[i];
            for j in 0..d {
                second[i][j] += n.weight * p[i] * p[j];
            }
        }
        for (k, slot) in c_k.iter_mut().enumerate() {
            *slot += n.weight * r.powi(k as i32 + 1);
        }
    }
    // third moments: track the largest of the d^3 components
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let m: f64 = interior
                    .nodes()
                    .iter()
                    .map(|n| n.weight * n.point[i] * n.point[j] * n.point[k])
                    .sum();
                third_max = third_max.max(m.abs());
            }
        }
    }
    let mu2 = (0..d).map(|i| second[i][i]).sum::<f64>() / d as f64;
    let mut offdiag = 0.0f64;
    let mut diag_spread = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                offdiag = offdiag.max(second[i][j].abs());
            }
        }
        diag_spread = diag_spread.max((second[i][i] - mu2).abs());
    }
    let max_odd1 = first.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let bmass: f64 = boundary.normal_nodes().iter().map(|(_, w)| w).sum();
    let t_k = [
        boundary.normal_moment(1),
        boundary.normal_moment(2),
        boundary.normal_moment(3),
        boundary.normal_moment(4),
    ];

    MomentReport {
        interior_norm: interior.normalization(),
        mu2,
        mu2_oracle: interior.mu2_radial_oracle(),
        interior_c_k: c_k,
        max_odd1,
        max_odd3: third_max,
        iso_offdiag: offdiag,
        iso_diag_spread: diag_spread,
        boundary_norm: boundary.normalization(),
        mu1: boundary.mu1(),
        mu1_oracle: boundary.mu1_oracle(),
        boundary_t_k: t_k,
        mass_residual: (mass - 1.0).abs().max((bmass - 1.0).abs()),
    }
}

/// Verdict of the window-class verification: failures are verdicts, not errors.
#[derive(Debug, Clone, Serialize)]
pub struct WindowVerdict {
    pub pass: bool,
    pub violations: Vec<String>,
}

/// Tolerances for the window class (defaults per the moment conditions).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowTolerances {
    pub mass: f64,
    pub odd: f64,
    pub isotropy: f64,
    pub oracle_agreement: f64,
}

impl Default for WindowTolerances {
    fn default() -> Self {
        WindowTolerances { mass: 1e-12, odd: 1e-12, isotropy: 1e-12, oracle_agreement: 1e-10 }
    }
}

pub fn verify_window_class(report: &MomentReport, tol: WindowTolerances) -> WindowVerdict {
    let mut violations = Vec::new();
    if report.mass_residual > tol.mass {
        violations.push(format!("mass residual {} > {}", report.mass_residual, tol.mass));
    }
    if report.max_odd1 > tol.odd {
        violations.push(format!("first moment <xi^i> residual {} > {}", report.max_odd1, tol.odd));
    }
    if report.max_odd3 > tol.odd {
        violations.push(format!("third moment residual {} > {}", report.max_odd3, tol.odd));
    }
    if report.iso_offdiag > tol.isotropy {
        violations.push(format!("second moment off-diagonal {} > {}", report.iso_offdiag, tol.isotropy));
    }
    if report.iso_diag_spread > tol.isotropy {
        violations.push(format!("second moment anisotropy {} > {}", report.iso_diag_spread, tol.isotropy));
    }
    let gap = (report.mu2 - report.mu2_oracle).abs();
    if gap > tol.oracle_agreement {
        violations.push(format!("mu2 two-oracle gap {} > {}", gap, tol.oracle_agreement));
    }
    let bgap = (report.mu1 - report.mu1_oracle).abs();
    if bgap > tol.oracle_agreement {
        violations.push(format!("mu1 two-oracle gap {} > {}", bgap, tol.oracle_agreement));
    }
    WindowVerdict { pass: violations.is_empty(), violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_pair(dim: usize) -> (InteriorWindow, BoundaryWindow) {
        (InteriorWindow::default_for_dim(dim), BoundaryWindow::default_for_dim(dim, 0.6))
    }

    #[test]
    fn quartic_mu2_d2() {
        let (iw, bw) = default_pair(2);
        let rep = normalize_and_moments(&iw, &bw);
        assert_relative_eq!(rep.mu2, 0.125, max_relative = 1e-12);
        assert!((rep.mu2 - rep.mu2_oracle).abs() < 1e-12);
    }

    #[test]
    fn quartic_mu2_d3() {
        let (iw, bw) = default_pair(3);
        let rep = normalize_and_moments(&iw, &bw);
        assert_relative_eq!(rep.mu2, 1.0 / 9.0, max_relative = 1e-11);
        assert!((rep.mu2 - rep.mu2_oracle).abs() < 1e-10);
    }

    #[test]
    fn triangular_mu1() {
        let (_, bw) = default_pair(2);
        assert_relative_eq!(bw.mu1(), 0.2, max_relative = 1e-13);
    }

    #[test]
    fn blended_profile_same_mu1() {
        let tang = InteriorWindow::default_for_dim(1);
        let bw = BoundaryWindow::new(2, BoundaryProfile::Blended, 0.6, tang, 20).unwrap();
        assert_relative_eq!(bw.mu1(), 0.2, max_relative = 1e-13);
    }

    #[test]
    fn odd_moments_vanish() {
        let (iw, bw) = default_pair(2);
        let rep = normalize_and_moments(&iw, &bw);
        assert!(rep.max_odd1 <= 1e-12, "odd1 {}", rep.max_odd1);
        assert!(rep.max_odd3 <= 1e-12, "odd3 {}", rep.max_odd3);
        assert!(verify_window_class(&rep, WindowTolerances::default()).pass);
    }

    #[test]
    fn shifted_window_fails_verification() {
        let iw = InteriorWindow::new(2, InteriorProfile::Quartic, 1.0, 0.1, 20).unwrap();
        let bw = BoundaryWindow::default_for_dim(2, 0.6);
        let rep = normalize_and_moments(&iw, &bw);
        let verdict = verify_window_class(&rep, WindowTolerances::default());
        assert!(!verdict.pass);
        assert!(verdict.violations.iter().any(|v| v.contains("first moment")));
    }

    #[test]
    fn normalization_absorbs_profile_scale() {
        // scaling the raw profile is absorbed by Z; the normalized moments agree
        let (iw, bw) = default_pair(2);
        let rep = normalize_and_moments(&iw, &bw);
        // mass of the normalized window is exactly 1 by construction
        assert!(rep.mass_residual <= 1e-12);
        assert!(rep.interior_norm > 0.0 && rep.boundary_norm > 0.0);
    }

    #[test]
    fn moment_bounds_hold() {
        let (iw, bw) = default_pair(2);
        let rep = normalize_and_moments(&iw, &bw);
        // <|xi|^k> <= Lambda_z^k and <t^k> <= c_star^k
        for (k, c) in rep.interior_c_k.iter().enumerate() {
            assert!(*c <= iw.lambda_z.powi(k as i32 + 1) + 1e-12);
        }
        for (k, t) in rep.boundary_t_k.iter().enumerate() {
            assert!(*t <= bw.c_star.powi(k as i32 + 1) + 1e-12);
        }
        // C4 of the quartic in d=2 is 1/10
        assert_relative_eq!(rep.interior_c_k[3], 0.1, max_relative = 1e-11);
    }
}
