//! Analytic regions for the quasi-additivity experiments: annular sectors
//! concentric about the chart origin (d = 2), with exact set distances,
//! perimeters, and intersections.
//!
//! Cell membership follows the mesoscale rule: a cell belongs to a region iff
//! its block B_R(x_c) meets the region, i.e. dist(x_c, region) < R. A sharp
//! barycenter rule would make the additivity defect trivially zero.

use crate::geometry::Geometry;
use crate::mesh::{Mesh, MeshError};
use serde::Serialize;
use std::f64::consts::PI;

/// Annular sector about the origin: r in [r_lo, r_hi], theta in the optional
/// interval (None = full annulus). The interval must satisfy hi - lo <= 2 pi.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Region {
    pub r_lo: f64,
    pub r_hi: f64,
    pub theta: Option<(f64, f64)>,
}

impl Region {
    pub fn disk(radius: f64) -> Self {
        Region { r_lo: 0.0, r_hi: radius, theta: None }
    }

    pub fn sector(r_lo: f64, r_hi: f64, theta_lo: f64, theta_hi: f64) -> Self {
        assert!(theta_hi > theta_lo && theta_hi - theta_lo <= 2.0 * PI);
        Region { r_lo, r_hi, theta: Some((theta_lo, theta_hi)) }
    }

    fn angle_in(&self, th: f64) -> bool {
        match self.theta {
            None => true,
            Some((lo, hi)) => {
                let mut t = th;
                while t < lo {
                    t += 2.0 * PI;
                }
                while t >= lo + 2.0 * PI {
                    t -= 2.0 * PI;
                }
                t <= hi
            }
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let r = (x * x + y * y).sqrt();
        r >= self.r_lo && r <= self.r_hi && self.angle_in(y.atan2(x))
    }

    /// Euclidean distance from a point to the set (0 inside).
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let r = (x * x + y * y).sqrt();
        let th = y.atan2(x);
        if self.angle_in(th) {
            return (self.r_lo - r).max(r - self.r_hi).max(0.0);
        }
        let Some((lo, hi)) = self.theta else { unreachable!() };
        // nearest point lies on one of the two radial edges
        let mut best = f64::INFINITY;
        for edge in [lo, hi] {
            let (c, s) = (edge.cos(), edge.sin());
            // projection of (x, y) onto the ray, clamped to [r_lo, r_hi]
            let proj = (x * c + y * s).clamp(self.r_lo, self.r_hi);
            let dx = x - proj * c;
            let dy = y - proj * s;
            best = best.min((dx * dx + dy * dy).sqrt());
        }
        best
    }

    /// Exact perimeter (arc lengths plus radial segments).
    pub fn perimeter(&self) -> f64 {
        match self.theta {
            None => 2.0 * PI * (self.r_hi + self.r_lo),
            Some((lo, hi)) => {
                let dth = hi - lo;
                if dth >= 2.0 * PI {
                    2.0 * PI * (self.r_hi + self.r_lo)
                } else {
                    dth * (self.r_hi + self.r_lo) + 2.0 * (self.r_hi - self.r_lo)
                }
            }
        }
    }

    /// Intersection of two concentric regions; None when empty. Angular
    /// intervals are intersected after normalizing the second interval into
    /// the first one's frame; the overlap must be contiguous.
    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let r_lo = self.r_lo.max(other.r_lo);
        let r_hi = self.r_hi.min(other.r_hi);
        if r_lo >= r_hi {
            return None;
        }
        let theta = match (self.theta, other.theta) {
            (None, x) | (x, None) => x,
            (Some((a0, a1)), Some((b0, b1))) => {
                let mut lo = b0;
                let mut hi = b1;
                while hi <= a0 {
                    lo += 2.0 * PI;
                    hi += 2.0 * PI;
                }
                while lo >= a1 {
                    lo -= 2.0 * PI;
                    hi -= 2.0 * PI;
                }
                let lo2 = lo.max(a0);
                let hi2 = hi.min(a1);
                if lo2 >= hi2 {
                    return None;
                }
                Some((lo2, hi2))
            }
        };
        Some(Region { r_lo, r_hi, theta })
    }

    /// Outermost extent from the origin.
    pub fn outer_radius(&self) -> f64 {
        self.r_hi
    }
}

/// Cells whose mesoscale block of radius `block_radius` meets the region.
/// Checks the interface margin dist(interface, boundary) >= eps0 for
/// geometries with boundary.
pub fn select_region(
    mesh: &Mesh,
    region: &Region,
    block_radius: f64,
    eps0: f64,
) -> Result<Vec<u32>, MeshError> {
    if let Geometry::EuclideanBall { radius, .. } = &mesh.geom {
        let dist = radius - region.outer_radius();
        if dist < eps0 {
            return Err(MeshError::InterfaceTouchesBoundary { dist, eps0 });
        }
    }
    Ok(mesh
        .cells
        .iter()
        .filter(|c| region.distance(c.anchor.0[0], c.anchor.0[1]) < block_radius)
        .map(|c| c.id)
        .collect())
}

/// Membership for the union of two regions (block meets A or B).
pub fn select_union(
    mesh: &Mesh,
    a: &Region,
    b: &Region,
    block_radius: f64,
    eps0: f64,
) -> Result<Vec<u32>, MeshError> {
    let sa = select_region(mesh, a, block_radius, eps0)?;
    let sb = select_region(mesh, b, block_radius, eps0)?;
    let mut ids: Vec<u32> = sa.into_iter().chain(sb).collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn half_disk_perimeter() {
        // A = {|x| < 0.5}, B = {x1 > 0, |x| < 0.6}: A ∩ B is the right half
        // disk of radius 0.5 with perimeter pi/2 + 1.
        let a = Region::disk(0.5);
        let b = Region::sector(0.0, 0.6, -PI / 2.0, PI / 2.0);
        let i = a.intersect(&b).unwrap();
        assert_relative_eq!(i.perimeter(), PI / 2.0 + 1.0, max_relative = 1e-14);
    }

    #[test]
    fn sector_distance() {
        let s = Region::sector(0.0, 1.0, 0.0, PI / 2.0);
        assert_eq!(s.distance(0.3, 0.3), 0.0);
        assert_relative_eq!(s.distance(2.0, 0.0), 1.0, max_relative = 1e-13);
        // below the lower edge: distance to the x-axis segment
        assert_relative_eq!(s.distance(0.5, -0.2), 0.2, max_relative = 1e-13);
    }

    #[test]
    fn annulus_distance_and_perimeter() {
        let a = Region { r_lo: 0.2, r_hi: 0.5, theta: None };
        assert_relative_eq!(a.distance(0.05, 0.0), 0.15, max_relative = 1e-13);
        assert_relative_eq!(a.perimeter(), 2.0 * PI * 0.7, max_relative = 1e-14);
    }

    #[test]
    fn disjoint_sectors_intersect_empty() {
        let a = Region::sector(0.25, 0.45, 0.0, 0.4 * PI);
        let b = Region::sector(0.25, 0.45, PI, 1.4 * PI);
        assert!(a.intersect(&b).is_none());
    }

    #[test]
    fn interface_margin_enforced() {
        let g = Geometry::euclidean_ball(2, 1.0).unwrap();
        let mesh = crate::mesh::build_mesh(&g, 0.1, 0.6).unwrap();
        let too_big = Region::disk(0.9);
        assert!(matches!(
            select_region(&mesh, &too_big, 0.05, 0.25),
            Err(MeshError::InterfaceTouchesBoundary { .. })
        ));
        let ok = Region::disk(0.5);
        let cells = select_region(&mesh, &ok, 0.05, 0.25).unwrap();
        assert!(!cells.is_empty());
    }
}
