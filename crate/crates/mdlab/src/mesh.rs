//! Boundary-fitted, shape-regular partitions at meshsize h with layer
//! classification and exact cell measures.
//!
//! Torus: uniform grid of d-cubes. Sphere: equiangular cubed-sphere cells
//! (d=2: 6 faces of the cube, d=3: 8 faces of the tesseract), volumes exact
//! by spherical excess in d=2 and high-order quadrature of the closed-form
//! projection Jacobian in d=3. Ball: polar/spherical rings with exact sector
//! volumes; the outermost ring is the first boundary layer with barycenter
//! depth equal to half the radial step, and the rings end exactly at the
//! boundary (Hausdorff fitting error zero).

use crate::geometry::{Geometry, Point};
use crate::quad;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("meshsize {h} too large for reach {reach} (need h < reach/4)")]
    MeshsizeTooLarge { h: f64, reach: f64 },
    #[error("meshsize {h} does not divide the torus periods within 1%")]
    IncompatibleMeshsize { h: f64 },
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("region interface at distance {dist} from the boundary violates the margin {eps0}")]
    InterfaceTouchesBoundary { dist: f64, eps0: f64 },
    #[error("cell id {0} not in mesh")]
    UnknownCell(u32),
}

/// Layer classification of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Layer {
    Interior,
    FirstLayer { depth: f64, footpoint: Point, base_area: f64 },
    Deeper { band: usize, depth: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub id: u32,
    /// Barycenter in the geometry's point representation; chart anchor for
    /// feature evaluation.
    pub anchor: Point,
    pub volume: f64,
    pub diameter: f64,
    pub min_angle_deg: f64,
    pub layer: Layer,
}

impl Cell {
    pub fn depth(&self) -> Option<f64> {
        match self.layer {
            Layer::Interior => None,
            Layer::FirstLayer { depth, .. } => Some(depth),
            Layer::Deeper { depth, .. } => Some(depth),
        }
    }

    pub fn is_first_layer(&self) -> bool {
        matches!(self.layer, Layer::FirstLayer { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub geom: Geometry,
    pub h: f64,
    pub c_star: f64,
    pub cells: Vec<Cell>,
}

/// Shape-regularity diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ShapeReport {
    pub cell_count: usize,
    pub first_layer_count: usize,
    pub min_diameter: f64,
    pub max_diameter: f64,
    pub aspect: f64,
    pub min_angle_deg: f64,
    pub hausdorff_boundary_error: f64,
    pub partition_rel_error: f64,
    pub first_layer_area_rel_error: f64,
    pub pass: bool,
}

pub fn build_mesh(geom: &Geometry, h: f64, c_star: f64) -> Result<Mesh, MeshError> {
    let dim = geom.dim();
    if dim != 2 && dim != 3 {
        return Err(MeshError::UnsupportedDimension(dim));
    }
    if let Some(reach) = geom.reach() {
        if h >= reach / 4.0 {
            return Err(MeshError::MeshsizeTooLarge { h, reach });
        }
    }
    let cells = match geom {
        Geometry::FlatTorus { dim, periods } => torus_cells(*dim, periods, h)?,
        Geometry::RoundSphere { dim, radius } => sphere_cells(*dim, *radius, h),
        Geometry::EuclideanBall { dim, radius } => ball_cells(*dim, *radius, h, c_star),
        Geometry::PerturbedChart { .. } => return Err(MeshError::UnsupportedDimension(0)),
    };
    Ok(Mesh { geom: geom.clone(), h, c_star, cells })
}

fn torus_cells(dim: usize, periods: &[f64], h: f64) -> Result<Vec<Cell>, MeshError> {
    let mut counts = Vec::with_capacity(dim);
    let mut steps = Vec::with_capacity(dim);
    for &l in periods {
        let n = (l / h).round().max(1.0);
        let step = l / n;
        if (step - h).abs() > 0.01 * h {
            return Err(MeshError::IncompatibleMeshsize { h });
        }
        counts.push(n as usize);
        steps.push(step);
    }
    let vol: f64 = steps.iter().product();
    let diam: f64 = steps.iter().map(|s| s * s).sum::<f64>().sqrt();
    let mut cells = Vec::new();
    let mut idx = vec![0usize; dim];
    let mut id = 0u32;
    loop {
        let mut c = [0.0; 4];
        for i in 0..dim {
            c[i] = (idx[i] as f64 + 0.5) * steps[i];
        }
        cells.push(Cell {
            id,
            anchor: Point(c),
            volume: vol,
            diameter: diam,
            min_angle_deg: 90.0,
            layer: Layer::Interior,
        });
        id += 1;
        // odometer increment
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dim {
                return Ok(cells);
            }
        }
    }
}

/// Unit-vector corner of a cube/tesseract face under the equiangular map.
fn face_point(dim: usize, face: usize, a: &[f64]) -> [f64; 4] {
    // face encodes axis and sign: axis = face / 2, sign = +- per parity.
    let axis = face / 2;
    let sign = if face.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut p = [0.0; 4];
    let mut j = 0;
    for i in 0..=dim {
        if i == axis {
            p[i] = sign;
        } else {
            p[i] = a[j].tan();
            j += 1;
        }
    }
    let norm: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut p {
        *x /= norm;
    }
    p
}

/// Solid angle of the spherical triangle spanned by unit vectors (a, b, c).
fn triangle_solid_angle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let cross = [b[1] * c[2] - b[2] * c[1], b[2] * c[0] - b[0] * c[2], b[0] * c[1] - b[1] * c[0]];
    let num = (a[0] * cross[0] + a[1] * cross[1] + a[2] * cross[2]).abs();
    let ab = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let bc = b[0] * c[0] + b[1] * c[1] + b[2] * c[2];
    let ca = c[0] * a[0] + c[1] * a[1] + c[2] * a[2];
    2.0 * (num).atan2(1.0 + ab + bc + ca)
}

fn quad_solid_angle(corners: [[f64; 3]; 4]) -> f64 {
    triangle_solid_angle(corners[0], corners[1], corners[2])
        + triangle_solid_angle(corners[0], corners[2], corners[3])
}

fn corner_angles_deg(corners: [[f64; 3]; 4]) -> f64 {
    let mut min_angle = 180.0f64;
    for i in 0..4 {
        let p = corners[i];
        let q = corners[(i + 1) % 4];
        let r = corners[(i + 3) % 4];
        // project edge directions to the tangent plane at p
        let proj = |v: [f64; 3]| {
            let dot = v[0] * p[0] + v[1] * p[1] + v[2] * p[2];
            [v[0] - dot * p[0], v[1] - dot * p[1], v[2] - dot * p[2]]
        };
        let e1 = proj(q);
        let e2 = proj(r);
        let n1 = (e1.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let n2 = (e2.iter().map(|x| x * x).sum::<f64>()).sqrt();
        if n1 > 0.0 && n2 > 0.0 {
            let cosang =
                ((e1[0] * e2[0] + e1[1] * e2[1] + e1[2] * e2[2]) / (n1 * n2)).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cosang.acos().to_degrees());
        }
    }
    min_angle
}

fn unit3(p: [f64; 4]) -> [f64; 3] {
    [p[0], p[1], p[2]]
}

fn sphere_cells(dim: usize, radius: f64, h: f64) -> Vec<Cell> {
    let n = ((PI / 2.0) * radius / h).round().max(1.0) as usize;
    let da = (PI / 2.0) / n as f64;
    let mut cells = Vec::new();
    let mut id = 0u32;
    let faces = 2 * (dim + 1);
    match dim {
        2 => {
            for face in 0..faces {
                for i in 0..n {
                    for j in 0..n {
                        let a0 = -PI / 4.0 + i as f64 * da;
                        let b0 = -PI / 4.0 + j as f64 * da;
                        let corners = [
                            unit3(face_point(dim, face, &[a0, b0])),
                            unit3(face_point(dim, face, &[a0 + da, b0])),
                            unit3(face_point(dim, face, &[a0 + da, b0 + da])),
                            unit3(face_point(dim, face, &[a0, b0 + da])),
                        ];
                        let omega = quad_solid_angle(corners);
                        let mid = face_point(dim, face, &[a0 + da / 2.0, b0 + da / 2.0]);
                        let anchor =
                            Point([mid[0] * radius, mid[1] * radius, mid[2] * radius, 0.0]);
                        let diag1 = arc(corners[0], corners[2], radius);
                        let diag2 = arc(corners[1], corners[3], radius);
                        cells.push(Cell {
                            id,
                            anchor,
                            volume: omega * radius * radius,
                            diameter: diag1.max(diag2),
                            min_angle_deg: corner_angles_deg(corners),
                            layer: Layer::Interior,
                        });
                        id += 1;
                    }
                }
            }
        }
        _ => {
            // S^3: 8 cubic faces of the tesseract, equiangular grid, volume by
            // Gauss quadrature of the closed-form Jacobian
            // rho^3 sec^2(a) sec^2(b) sec^2(c) / l^4, l = |(tan a, tan b, tan c, 1)|.
            for face in 0..faces {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let lo = [
                                -PI / 4.0 + i as f64 * da,
                                -PI / 4.0 + j as f64 * da,
                                -PI / 4.0 + k as f64 * da,
                            ];
                            let hi = [lo[0] + da, lo[1] + da, lo[2] + da];
                            let rule = quad::box_rule(8, lo, hi);
                            let mut vol = 0.0;
                            for node in &rule {
                                let (ta, tb, tc) =
                                    (node.point[0].tan(), node.point[1].tan(), node.point[2].tan());
                                let l2 = 1.0 + ta * ta + tb * tb + tc * tc;
                                let jac = (1.0 + ta * ta) * (1.0 + tb * tb) * (1.0 + tc * tc)
                                    / (l2 * l2);
                                vol += node.weight * jac;
                            }
                            vol *= radius.powi(3);
                            let mid = face_point(
                                dim,
                                face,
                                &[lo[0] + da / 2.0, lo[1] + da / 2.0, lo[2] + da / 2.0],
                            );
                            let anchor = Point([
                                mid[0] * radius,
                                mid[1] * radius,
                                mid[2] * radius,
                                mid[3] * radius,
                            ]);
                            let c0 = face_point(dim, face, &lo);
                            let c1 = face_point(dim, face, &hi);
                            let diam = arc4(c0, c1, radius);
                            cells.push(Cell {
                                id,
                                anchor,
                                volume: vol,
                                diameter: diam,
                                min_angle_deg: 90.0 - (da.to_degrees() / 2.0),
                                layer: Layer::Interior,
                            });
                            id += 1;
                        }
                    }
                }
            }
        }
    }
    cells
}

fn arc(a: [f64; 3], b: [f64; 3], radius: f64) -> f64 {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
    radius * dot.acos()
}

fn arc4(a: [f64; 4], b: [f64; 4], radius: f64) -> f64 {
    let dot =
        (a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]).clamp(-1.0, 1.0);
    radius * dot.acos()
}

fn ball_cells(dim: usize, radius: f64, h: f64, c_star: f64) -> Vec<Cell> {
    let m = (radius / h).round().max(4.0) as usize;
    let dr = radius / m as f64;
    let mut cells = Vec::new();
    let mut id = 0u32;
    match dim {
        2 => {
            for ring in 0..m {
                let r_lo = ring as f64 * dr;
                let r_hi = r_lo + dr;
                let r_mid = 0.5 * (r_lo + r_hi);
                let nseg = ((2.0 * PI * r_mid) / h).round().max(4.0) as usize;
                let dth = 2.0 * PI / nseg as f64;
                let vol = 0.5 * dth * (r_hi * r_hi - r_lo * r_lo);
                let outer = ring == m - 1;
                let depth = radius - r_mid;
                for s in 0..nseg {
                    let th = (s as f64 + 0.5) * dth;
                    let anchor = Point([r_mid * th.cos(), r_mid * th.sin(), 0.0, 0.0]);
                    let layer = if outer && depth <= c_star * h {
                        Layer::FirstLayer {
                            depth,
                            footpoint: Point([radius * th.cos(), radius * th.sin(), 0.0, 0.0]),
                            base_area: dth * radius,
                        }
                    } else {
                        Layer::Deeper { band: (depth / h).floor() as usize, depth }
                    };
                    // diameter: max of the outer chord, radial extent, diagonal
                    let chord = 2.0 * r_hi * (dth / 2.0).sin();
                    let diam = (chord * chord + dr * dr).sqrt();
                    // apex wedges have angle dth at the origin, ring cells are
                    // right-angled where radial edges meet the arcs
                    let min_angle = if ring == 0 { dth.to_degrees().min(90.0) } else { 90.0 };
                    cells.push(Cell { id, anchor, volume: vol, diameter: diam, min_angle_deg: min_angle, layer });
                    id += 1;
                }
            }
        }
        _ => {
            for shell in 0..m {
                let r_lo = shell as f64 * dr;
                let r_hi = r_lo + dr;
                let r_mid = 0.5 * (r_lo + r_hi);
                let n_ang = ((PI / 2.0) * r_mid / h).round().max(1.0) as usize;
                let da = (PI / 2.0) / n_ang as f64;
                let outer = shell == m - 1;
                let depth = radius - r_mid;
                let shell_vol_factor = (r_hi.powi(3) - r_lo.powi(3)) / 3.0;
                for face in 0..6 {
                    for i in 0..n_ang {
                        for j in 0..n_ang {
                            let a0 = -PI / 4.0 + i as f64 * da;
                            let b0 = -PI / 4.0 + j as f64 * da;
                            let corners = [
                                unit3(face_point(2, face, &[a0, b0])),
                                unit3(face_point(2, face, &[a0 + da, b0])),
                                unit3(face_point(2, face, &[a0 + da, b0 + da])),
                                unit3(face_point(2, face, &[a0, b0 + da])),
                            ];
                            let omega = quad_solid_angle(corners);
                            let mid = face_point(2, face, &[a0 + da / 2.0, b0 + da / 2.0]);
                            let anchor = Point([
                                mid[0] * r_mid,
                                mid[1] * r_mid,
                                mid[2] * r_mid,
                                0.0,
                            ]);
                            let layer = if outer && depth <= c_star * h {
                                Layer::FirstLayer {
                                    depth,
                                    footpoint: Point([
                                        mid[0] * radius,
                                        mid[1] * radius,
                                        mid[2] * radius,
                                        0.0,
                                    ]),
                                    base_area: omega * radius * radius,
                                }
                            } else {
                                Layer::Deeper { band: (depth / h).floor() as usize, depth }
                            };
                            let arc_len = arc(corners[0], corners[2], r_hi);
                            let diam = (arc_len * arc_len + dr * dr).sqrt();
                            cells.push(Cell {
                                id,
                                anchor,
                                volume: omega * shell_vol_factor,
                                diameter: diam,
                                min_angle_deg: corner_angles_deg(corners),
                                layer,
                            });
                            id += 1;
                        }
                    }
                }
            }
        }
    }
    cells
}

impl Mesh {
    /// Layer histogram: cell counts per normal-depth band [k h, (k+1) h).
    /// Closed geometries report a single interior bucket.
    pub fn classify_layers(&self) -> Vec<(String, usize)> {
        if !self.geom.has_boundary() {
            return vec![("interior".to_string(), self.cells.len())];
        }
        let mut bands: Vec<usize> = Vec::new();
        for cell in &self.cells {
            if let Some(depth) = cell.depth() {
                let band = (depth / self.h).floor() as usize;
                if bands.len() <= band {
                    bands.resize(band + 1, 0);
                }
                bands[band] += 1;
            }
        }
        bands
            .iter()
            .enumerate()
            .map(|(k, c)| (format!("band_{k}"), *c))
            .collect()
    }

    pub fn first_layer_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.is_first_layer())
    }

    pub fn cell(&self, id: u32) -> Result<&Cell, MeshError> {
        self.cells.get(id as usize).ok_or(MeshError::UnknownCell(id))
    }

    pub fn total_volume(&self) -> f64 {
        let vols: Vec<f64> = self.cells.iter().map(|c| c.volume).collect();
        quad::compensated_sum(&vols)
    }

    pub fn shape_report(&self) -> ShapeReport {
        let exact = self.geom.exact_functionals(0.0, 0.0, 0.0);
        let total = self.total_volume();
        let partition_rel_error = ((total - exact.vol) / exact.vol).abs();
        let mut min_d = f64::INFINITY;
        let mut max_d: f64 = 0.0;
        let mut min_angle: f64 = 180.0;
        let mut fl_area = 0.0;
        let mut fl_count = 0usize;
        for c in &self.cells {
            min_d = min_d.min(c.diameter);
            max_d = max_d.max(c.diameter);
            min_angle = min_angle.min(c.min_angle_deg);
            if let Layer::FirstLayer { base_area, .. } = c.layer {
                fl_area += base_area;
                fl_count += 1;
            }
        }
        let fl_area_err = if exact.area > 0.0 {
            ((fl_area - exact.area) / exact.area).abs()
        } else {
            0.0
        };
        let aspect = max_d / min_d;
        let pass = partition_rel_error <= 1e-10
            && aspect <= 4.0
            && min_angle >= 30.0
            && fl_area_err <= 2.0 * self.h;
        ShapeReport {
            cell_count: self.cells.len(),
            first_layer_count: fl_count,
            min_diameter: min_d,
            max_diameter: max_d,
            aspect,
            min_angle_deg: min_angle,
            // rings and cubed-sphere patches end exactly on the analytic boundary
            hausdorff_boundary_error: 0.0,
            partition_rel_error,
            first_layer_area_rel_error: fl_area_err,
            pass,
        }
    }
}
