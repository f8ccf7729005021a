//! Smoothing operator on sampled 2D chart metrics: interior mollification,
//! reflected mollification across the boundary edge, cutoff blending, and the
//! C^1 / L^1-curvature stability measurements.
//!
//! The reflection across t = 0 acts componentwise with the parity of the
//! pullback under (s, t) -> (s, -t): tangential-tangential and normal-normal
//! components extend evenly, the mixed component oddly. Lateral and far edges
//! use plain even padding; it only affects a margin that the measurement
//! region excludes.
//!
//! Discrete norms: C^0/C^1 as max over nodes of values / first central
//! differences; L^1 as Riemann sums with the grid weight. They converge to
//! the continuum norms at O(dx^2) for the smooth comparisons used here.

use crate::geometry::Geometry;
use crate::windows::InteriorProfile;
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error("smoothing radius {eps} exceeds the admissible fraction of reach {limit}")]
    RadiusExceedsReach { eps: f64, limit: f64 },
    #[error("grid spacing {dx} too coarse for radius {eps} (need dx <= eps/8)")]
    ResolutionTooCoarse { dx: f64, eps: f64 },
    #[error("grid too small: need at least 5x5 nodes")]
    GridTooSmall,
    #[error("corrupt grid file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fraction of the reach admissible as smoothing radius (c < 1/2).
pub const REACH_FRACTION: f64 = 0.45;

const MAGIC: &[u8; 8] = b"MDLGRID1";

/// Symmetric 2x2 metric sampled on a uniform chart grid. Index (i, j) maps to
/// chart point (i dx, j dx); row-major storage j * nx + i. `g11` is the
/// tangential-tangential component, `g22` normal-normal, `g12` mixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledChartMetric {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub boundary_edge: bool,
    pub reach: f64,
    pub ell_lo: f64,
    pub ell_hi: f64,
    pub g11: Vec<f64>,
    pub g12: Vec<f64>,
    pub g22: Vec<f64>,
}

/// Even compactly supported mollifier profile with radius eps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MollifierSpec {
    pub profile: InteriorProfile,
    pub radius: f64,
}

impl MollifierSpec {
    pub fn quartic(radius: f64) -> Self {
        MollifierSpec { profile: InteriorProfile::Quartic, radius }
    }
}

impl SampledChartMetric {
    pub fn flat(nx: usize, nt: usize, dx: f64, boundary_edge: bool) -> Self {
        let n = nx * nt;
        SampledChartMetric {
            nx,
            nt,
            dx,
            boundary_edge,
            reach: nt as f64 * dx,
            ell_lo: 1.0,
            ell_hi: 1.0,
            g11: vec![1.0; n],
            g12: vec![0.0; n],
            g22: vec![1.0; n],
        }
    }

    /// Sample the perturbed-chart conformal metric g = (1 + psi) delta on an
    /// n x n node grid over its chart square.
    pub fn from_perturbed_chart(geom: &Geometry, nodes_per_side: usize) -> Self {
        let Geometry::PerturbedChart { amplitude, side, .. } = geom else {
            panic!("from_perturbed_chart expects a PerturbedChart geometry");
        };
        let n = nodes_per_side;
        let dx = side / (n - 1) as f64;
        let mut m = SampledChartMetric::flat(n, n, dx, true);
        m.reach = *side;
        for j in 0..n {
            for i in 0..n {
                let c = 1.0 + geom.psi(i as f64 * dx, j as f64 * dx);
                m.g11[j * n + i] = c;
                m.g22[j * n + i] = c;
            }
        }
        m.ell_lo = 1.0;
        m.ell_hi = 1.0 + amplitude;
        m
    }

    /// Sample the round-sphere metric (rho = 1) in the normal chart at a
    /// point: g = (sin^2 u / u^2)(I - P) + P, P = z z^T / u^2, on the square
    /// [-half, half]^2.
    pub fn sphere_normal_chart(nodes_per_side: usize, half: f64) -> Self {
        let n = nodes_per_side;
        let dx = 2.0 * half / (n - 1) as f64;
        let mut m = SampledChartMetric::flat(n, n, dx, false);
        for j in 0..n {
            for i in 0..n {
                let z1 = -half + i as f64 * dx;
                let z2 = -half + j as f64 * dx;
                let u2 = z1 * z1 + z2 * z2;
                let (s2, q) = if u2 < 1e-8 {
                    // sin^2(u)/u^2 = 1 - u^2/3 + 2u^4/45; (1 - s2)/u^2 = 1/3 - 2u^2/45
                    (1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 45.0, 1.0 / 3.0 - 2.0 * u2 / 45.0)
                } else {
                    let u = u2.sqrt();
                    let s2 = (u.sin() / u).powi(2);
                    (s2, (1.0 - s2) / u2)
                };
                let idx = j * n + i;
                m.g11[idx] = s2 + q * z1 * z1;
                m.g22[idx] = s2 + q * z2 * z2;
                m.g12[idx] = q * z1 * z2;
            }
        }
        let (lo, hi) = m.eigen_bounds();
        m.ell_lo = lo;
        m.ell_hi = hi;
        m
    }

    /// Sample the ball Fermi chart (tangential arc length, inward depth):
    /// g = diag(((r - t)/r)^2, 1).
    pub fn ball_fermi_chart(radius: f64, nodes_per_side: usize, extent: f64) -> Self {
        let n = nodes_per_side;
        let dx = extent / (n - 1) as f64;
        let mut m = SampledChartMetric::flat(n, n, dx, true);
        m.reach = radius;
        for j in 0..n {
            let t = j as f64 * dx;
            let a = ((radius - t) / radius).powi(2);
            for i in 0..n {
                m.g11[j * n + i] = a;
            }
        }
        m.ell_lo = ((radius - extent) / radius).powi(2);
        m.ell_hi = 1.0;
        m
    }

    /// Min/max eigenvalues of the sampled metric over all nodes.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..self.g11.len() {
            let (a, b, c) = (self.g11[k], self.g12[k], self.g22[k]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            lo = lo.min(mid - rad);
            hi = hi.max(mid + rad);
        }
        (lo, hi)
    }

    /// Write the grid in the binary format (header: dims, spacing; body:
    /// row-major g11, g12, g22 as little-endian f64). Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<(), SmoothError> {
        let mut buf = Vec::with_capacity(64 + 24 * self.g11.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.nx as u64).to_le_bytes());
        buf.extend_from_slice(&(self.nt as u64).to_le_bytes());
        buf.extend_from_slice(&self.dx.to_le_bytes());
        buf.push(self.boundary_edge as u8);
        buf.extend_from_slice(&self.reach.to_le_bytes());
        buf.extend_from_slice(&self.ell_lo.to_le_bytes());
        buf.extend_from_slice(&self.ell_hi.to_le_bytes());
        for arr in [&self.g11, &self.g12, &self.g22] {
            for v in arr.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SmoothError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 57 || &buf[..8] != MAGIC {
            return Err(SmoothError::BadFile("missing header".into()));
        }
        let mut off = 8;
        fn take_u64(buf: &[u8], off: &mut usize) -> u64 {
            let v = u64::from_le_bytes(buf[*off..*off + 8].try_into().unwrap());
            *off += 8;
            v
        }
        fn take_f64(buf: &[u8], off: &mut usize) -> f64 {
            let v = f64::from_le_bytes(buf[*off..*off + 8].try_into().unwrap());
            *off += 8;
            v
        }
        let nx = take_u64(&buf, &mut off) as usize;
        let nt = take_u64(&buf, &mut off) as usize;
        let dx = take_f64(&buf, &mut off);
        let boundary_edge = buf[off] != 0;
        off += 1;
        let reach = take_f64(&buf, &mut off);
        let ell_lo = take_f64(&buf, &mut off);
        let ell_hi = take_f64(&buf, &mut off);
        let n = nx
            .checked_mul(nt)
            .ok_or_else(|| SmoothError::BadFile("dims overflow".into()))?;
        if buf.len() != off + 24 * n {
            return Err(SmoothError::BadFile(format!(
                "body length {} does not match dims {nx}x{nt}",
                buf.len() - off
            )));
        }
        let mut arrays = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for arr in arrays.iter_mut() {
            for _ in 0..n {
                arr.push(take_f64(&buf, &mut off));
            }
        }
        let g22 = arrays.pop().unwrap();
        let g12 = arrays.pop().unwrap();
        let g11 = arrays.pop().unwrap();
        Ok(SampledChartMetric { nx, nt, dx, boundary_edge, reach, ell_lo, ell_hi, g11, g12, g22 })
    }
}

/// Component parity under the reflection (s, t) -> (s, -t).
#[derive(Clone, Copy, PartialEq)]
enum Parity {
    Even,
    Odd,
}

/// Reflected sample lookup: j < 0 mirrors across the t = 0 node line with the
/// given parity; indices beyond the other edges mirror evenly (plain padding).
fn sample(arr: &[f64], nx: usize, nt: usize, i: isize, j: isize, parity: Parity) -> f64 {
    let mut sign = 1.0;
    let mut jj = j;
    if jj < 0 {
        jj = -jj;
        if parity == Parity::Odd {
            sign = -sign;
        }
    }
    if jj as usize >= nt {
        jj = 2 * (nt as isize - 1) - jj;
    }
    let mut ii = i;
    if ii < 0 {
        ii = -ii;
    }
    if ii as usize >= nx {
        ii = 2 * (nx as isize - 1) - ii;
    }
    sign * arr[(jj as usize) * nx + ii as usize]
}

fn sample_plain(arr: &[f64], nx: usize, nt: usize, i: isize, j: isize) -> f64 {
    sample(arr, nx, nt, i, j, Parity::Even)
}

struct Kernel {
    taps: Vec<(isize, isize, f64)>,
}

impl Kernel {
    /// Discrete normalized taps of the radial profile at radius eps; the
    /// discrete normalization makes constants exact fixed points.
    fn build(moll: &MollifierSpec, dx: f64) -> Kernel {
        let r = moll.radius / dx;
        let m = r.ceil() as isize;
        let mut taps = Vec::new();
        let mut total = 0.0;
        for dj in -m..=m {
            for di in -m..=m {
                let u = ((di * di + dj * dj) as f64).sqrt() / r;
                let w = moll.profile.eval(u);
                if w > 0.0 {
                    taps.push((di, dj, w));
                    total += w;
                }
            }
        }
        for t in &mut taps {
            t.2 /= total;
        }
        Kernel { taps }
    }
}

fn quintic_smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
}

/// Apply the smoothing operator. For charts with a boundary edge, the output
/// blends the plain interior convolution with the parity-reflected one via a
/// quintic cutoff supported in {t < REACH_FRACTION * reach}.
pub fn smooth(
    metric: &SampledChartMetric,
    moll: &MollifierSpec,
) -> Result<SampledChartMetric, SmoothError> {
    if metric.nx < 5 || metric.nt < 5 {
        return Err(SmoothError::GridTooSmall);
    }
    let eps = moll.radius;
    if metric.boundary_edge {
        let limit = REACH_FRACTION * metric.reach;
        if eps > limit {
            return Err(SmoothError::RadiusExceedsReach { eps, limit });
        }
    }
    if metric.dx > eps / 8.0 {
        return Err(SmoothError::ResolutionTooCoarse { dx: metric.dx, eps });
    }
    let kernel = Kernel::build(moll, metric.dx);
    let (nx, nt) = (metric.nx, metric.nt);
    let mut out = metric.clone();
    let blend_width = REACH_FRACTION * metric.reach;
    let comps: [(&Vec<f64>, Parity); 3] =
        [(&metric.g11, Parity::Even), (&metric.g12, Parity::Odd), (&metric.g22, Parity::Even)];
    let mut results: Vec<Vec<f64>> = Vec::with_capacity(3);
    for (arr, parity) in comps {
        let mut dst = vec![0.0; nx * nt];
        for j in 0..nt {
            let t = j as f64 * metric.dx;
            let chi_bdry = if metric.boundary_edge {
                1.0 - quintic_smoothstep(t / blend_width)
            } else {
                0.0
            };
            for i in 0..nx {
                let mut interior = 0.0;
                let mut reflected = 0.0;
                for &(di, dj, w) in &kernel.taps {
                    let ii = i as isize + di;
                    let jj = j as isize + dj;
                    interior += w * sample_plain(arr, nx, nt, ii, jj);
                    if chi_bdry > 0.0 {
                        reflected += w * sample(arr, nx, nt, ii, jj, parity);
                    }
                }
                dst[j * nx + i] = if chi_bdry > 0.0 {
                    (1.0 - chi_bdry) * interior + chi_bdry * reflected
                } else {
                    interior
                };
            }
        }
        results.push(dst);
    }
    out.g22 = results.pop().unwrap();
    out.g12 = results.pop().unwrap();
    out.g11 = results.pop().unwrap();
    let (lo, hi) = out.eigen_bounds();
    out.ell_lo = lo;
    out.ell_hi = hi;
    Ok(out)
}

/// Scalar curvature field on the interior nodes (margin 2) and boundary mean
/// curvature along t = 0 when the chart has a boundary edge.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    pub nx: usize,
    pub nt: usize,
    pub margin: usize,
    /// R at nodes margin <= i < nx - margin, margin <= j < nt - margin,
    /// row-major over that window.
    pub r: Vec<f64>,
    /// K at boundary nodes 1 <= i < nx - 1 (empty without a boundary edge).
    pub k: Vec<f64>,
}

/// Christoffel symbols at offset (di, dj) from the stencil center, by central
/// differences of the sampled metric.
fn gamma_at(
    g: &impl Fn(isize, isize) -> [[f64; 2]; 2],
    dx: f64,
    di: isize,
    dj: isize,
) -> [[[f64; 2]; 2]; 2] {
    let gm = g(di, dj);
    let det = gm[0][0] * gm[1][1] - gm[0][1] * gm[0][1];
    let inv = [[gm[1][1] / det, -gm[0][1] / det], [-gm[0][1] / det, gm[0][0] / det]];
    let gx1 = g(di + 1, dj);
    let gx0 = g(di - 1, dj);
    let gt1 = g(di, dj + 1);
    let gt0 = g(di, dj - 1);
    // dg[l][a][b] = d_l g_ab
    let mut dg = [[[0.0f64; 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            dg[0][a][b] = (gx1[a][b] - gx0[a][b]) / (2.0 * dx);
            dg[1][a][b] = (gt1[a][b] - gt0[a][b]) / (2.0 * dx);
        }
    }
    let mut gam = [[[0.0f64; 2]; 2]; 2];
    for k in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                let mut s = 0.0;
                for l in 0..2 {
                    s += inv[k][l] * (dg[a][b][l] + dg[b][a][l] - dg[l][a][b]);
                }
                gam[k][a][b] = 0.5 * s;
            }
        }
    }
    gam
}

/// Scalar curvature at the stencil center via Rm = dGamma + Gamma * Gamma
/// with second-order central differences. The sampler returns the metric at
/// integer offsets from the center.
fn scalar_r_at(g: &impl Fn(isize, isize) -> [[f64; 2]; 2], dx: f64) -> f64 {
    let gm = g(0, 0);
    let det = gm[0][0] * gm[1][1] - gm[0][1] * gm[0][1];
    let inv = [[gm[1][1] / det, -gm[0][1] / det], [-gm[0][1] / det, gm[0][0] / det]];
    let gc = gamma_at(g, dx, 0, 0);
    let gx1 = gamma_at(g, dx, 1, 0);
    let gx0 = gamma_at(g, dx, -1, 0);
    let gt1 = gamma_at(g, dx, 0, 1);
    let gt0 = gamma_at(g, dx, 0, -1);
    let dgam = |l: usize, k: usize, a: usize, b: usize| -> f64 {
        match l {
            0 => (gx1[k][a][b] - gx0[k][a][b]) / (2.0 * dx),
            _ => (gt1[k][a][b] - gt0[k][a][b]) / (2.0 * dx),
        }
    };
    // Ric_ab = d_k Gamma^k_ab - d_a Gamma^k_kb
    //        + Gamma^k_kl Gamma^l_ab - Gamma^k_al Gamma^l_kb
    let mut scalar = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let mut ric = 0.0;
            for k in 0..2 {
                ric += dgam(k, k, a, b) - dgam(a, k, k, b);
                for l in 0..2 {
                    ric += gc[k][k][l] * gc[l][a][b] - gc[k][a][l] * gc[l][k][b];
                }
            }
            scalar += inv[a][b] * ric;
        }
    }
    scalar
}

/// Second-order central finite differences for Gamma and R
/// (Rm = dGamma + Gamma * Gamma); one-sided differences for the normal
/// derivative at t = 0 give II and K = tr_h II with the outer-normal sign.
pub fn curvature_fd(metric: &SampledChartMetric) -> Result<CurvatureField, SmoothError> {
    let (nx, nt) = (metric.nx, metric.nt);
    if nx < 5 || nt < 5 {
        return Err(SmoothError::GridTooSmall);
    }
    let dx = metric.dx;
    let margin = 2usize;
    let wnx = nx - 2 * margin;
    let wnt = nt - 2 * margin;
    let mut r_field = vec![0.0; wnx * wnt];
    for j in margin..nt - margin {
        for i in margin..nx - margin {
            let g = |di: isize, dj: isize| -> [[f64; 2]; 2] {
                let k = (j as isize + dj) as usize * nx + (i as isize + di) as usize;
                [[metric.g11[k], metric.g12[k]], [metric.g12[k], metric.g22[k]]]
            };
            r_field[(j - margin) * wnx + (i - margin)] = scalar_r_at(&g, dx);
        }
    }
    let k_line = if metric.boundary_edge { boundary_k_line(metric, 0) } else { Vec::new() };
    Ok(CurvatureField { nx, nt, margin, r: r_field, k: k_line })
}

/// Reference curvature of the perturbed chart: the finite-difference oracle
/// at `sub` times the base-lattice resolution, evaluated at the base nodes
/// (the only places the experiments read it). The metric is sampled
/// analytically, so no fine grid is materialized.
pub fn chart_oracle(geom: &Geometry, n_base: usize, sub: usize) -> CurvatureField {
    let Geometry::PerturbedChart { side, .. } = geom else {
        panic!("chart_oracle expects a PerturbedChart geometry");
    };
    let dx_f = side / (n_base * sub) as f64;
    let margin = 1usize;
    let sample = |fi: isize, fj: isize| -> [[f64; 2]; 2] {
        let c = 1.0 + geom.psi(fi as f64 * dx_f, fj as f64 * dx_f);
        [[c, 0.0], [0.0, c]]
    };
    let wn = n_base + 1 - 2 * margin;
    let mut r_field = vec![0.0; wn * wn];
    for j in margin..=n_base - margin {
        for i in margin..=n_base - margin {
            let (fi, fj) = ((i * sub) as isize, (j * sub) as isize);
            let g = move |di: isize, dj: isize| sample(fi + di, fj + dj);
            r_field[(j - margin) * wn + (i - margin)] = scalar_r_at(&g, dx_f);
        }
    }
    let mut k_line = Vec::with_capacity(n_base - 1);
    for i in 1..n_base {
        let fi = (i * sub) as isize;
        let h0 = sample(fi, 0)[0][0];
        let h1 = sample(fi, 1)[0][0];
        let h2 = sample(fi, 2)[0][0];
        let dh = (-3.0 * h0 + 4.0 * h1 - h2) / (2.0 * dx_f);
        let gtt = sample(fi, 0)[1][1];
        k_line.push(-dh / (2.0 * h0 * gtt.sqrt()));
    }
    CurvatureField { nx: n_base + 1, nt: n_base + 1, margin, r: r_field, k: k_line }
}

/// Mean curvature along the row at depth `row * dx` from a one-sided
/// second-order normal stencil: K = -d_{t_g} h / (2h) with geodesic depth
/// dt_g = sqrt(g_tt) dt. Assumes g12 = 0 on the line (the parity reflection
/// preserves this). Row 0 is the boundary itself; smoothed metrics are read
/// just beyond the mollification collar because the even reflection forces
/// the edge-anchored normal derivative to vanish identically.
pub fn boundary_k_line(metric: &SampledChartMetric, row: usize) -> Vec<f64> {
    let (nx, nt, dx) = (metric.nx, metric.nt, metric.dx);
    assert!(row + 2 < nt, "k line row {row} needs two rows above");
    let mut k_line = Vec::with_capacity(nx - 2);
    for i in 1..nx - 1 {
        let h0 = metric.g11[row * nx + i];
        let h1 = metric.g11[(row + 1) * nx + i];
        let h2 = metric.g11[(row + 2) * nx + i];
        let dh = (-3.0 * h0 + 4.0 * h1 - h2) / (2.0 * dx);
        let gtt = metric.g22[row * nx + i];
        k_line.push(-dh / (2.0 * h0 * gtt.sqrt()));
    }
    k_line
}

/// One row of the stability table.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub grid_nodes: usize,
    pub c0_dist: f64,
    pub c1_dist: f64,
    pub l1_r: f64,
    pub l1_k: f64,
    pub ell_lo: f64,
    pub ell_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    pub l1_r_reference: f64,
    pub l1_k_reference: f64,
}

/// Max over the measurement window of |a - b| over components, and the same
/// including first central differences (C^1 distance). The window excludes
/// `skip_x` nodes laterally and `skip_far` nodes at the normal-direction
/// edges; near a reflection boundary the even extension of a curved metric
/// has a normal-derivative kink, so the classical C^1 convolution estimate
/// holds only outside that collar.
pub fn c0_c1_distance(
    a: &SampledChartMetric,
    b: &SampledChartMetric,
    skip_x: usize,
    skip_far: usize,
) -> (f64, f64) {
    let (nx, nt, dx) = (a.nx, a.nt, a.dx);
    let mut c0 = 0.0f64;
    let mut seminorm = 0.0f64;
    for j in skip_far..nt - skip_far {
        for i in skip_x..nx - skip_x {
            let k = j * nx + i;
            for (pa, pb) in [(&a.g11, &b.g11), (&a.g12, &b.g12), (&a.g22, &b.g22)] {
                let d = pa[k] - pb[k];
                c0 = c0.max(d.abs());
                if i > 0 && i + 1 < nx {
                    let dd = ((pa[k + 1] - pb[k + 1]) - (pa[k - 1] - pb[k - 1])) / (2.0 * dx);
                    seminorm = seminorm.max(dd.abs());
                }
                if j > 0 && j + 1 < nt {
                    let dd = ((pa[k + nx] - pb[k + nx]) - (pa[k - nx] - pb[k - nx])) / (2.0 * dx);
                    seminorm = seminorm.max(dd.abs());
                }
            }
        }
    }
    (c0, c0.max(seminorm))
}

/// Grid oversampling of the smoothing radius: dx = eps / OVERSAMPLE
/// (tighter than the eps/8 contract so the kink-collar maxima are resolved).
const OVERSAMPLE: usize = 10;

/// Stability experiment over an eps list on the perturbed chart: per-eps
/// grids at dx = eps/OVERSAMPLE nested in a common lattice, with the
/// finite-difference oracle at 8x the finest grid as curvature reference.
pub fn stability_experiment(
    geom: &Geometry,
    eps_list: &[f64],
) -> Result<StabilityTable, SmoothError> {
    let Geometry::PerturbedChart { side, .. } = geom else {
        panic!("stability_experiment expects a PerturbedChart geometry");
    };
    let eps_min = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps_max = eps_list.iter().cloned().fold(0.0f64, f64::max);
    let n_base = (OVERSAMPLE as f64 * side / eps_min).ceil() as usize;
    let dx_base = side / n_base as f64;
    let oracle_curv = chart_oracle(geom, n_base, 8);
    // measurement window keeps the boundary edge for the K column and trims
    // eps_max-polluted margins (including the reflection collar) elsewhere
    let margin = 1.5 * eps_max;

    let mut rows = Vec::new();
    for &eps in eps_list {
        let stride = (eps / eps_min).round() as usize;
        let n = n_base / stride;
        let metric = SampledChartMetric::from_perturbed_chart(geom, n + 1);
        let sm = smooth(&metric, &MollifierSpec::quartic(eps))?;
        let skip = (margin / metric.dx).ceil() as usize;
        let (c0d, c1d) = c0_c1_distance(&sm, &metric, skip, skip);
        let curv = curvature_fd(&sm)?;
        let (l1r, _) = l1_r_against_oracle(&curv, metric.dx, &oracle_curv, stride, margin, *side);
        // smoothed K read just beyond the mollification collar (depth 2 eps)
        let k_row = (2.0 * eps / metric.dx).ceil() as usize;
        let k_sm = boundary_k_line(&sm, k_row);
        let (l1k, _) =
            l1_k_against_oracle(&k_sm, metric.dx, &oracle_curv.k, stride, margin, *side);
        let (lo, hi) = sm.eigen_bounds();
        rows.push(StabilityRow {
            eps,
            grid_nodes: n + 1,
            c0_dist: c0d,
            c1_dist: c1d,
            l1_r: l1r,
            l1_k: l1k,
            ell_lo: lo,
            ell_hi: hi,
        });
    }
    let (_, ref_r) = l1_r_against_oracle(&oracle_curv, dx_base, &oracle_curv, 1, margin, *side);
    let (_, ref_k) = l1_k_against_oracle(&oracle_curv.k, dx_base, &oracle_curv.k, 1, margin, *side);
    Ok(StabilityTable { rows, l1_r_reference: ref_r, l1_k_reference: ref_k })
}

/// L1 distance between a scalar-curvature field and the oracle restricted to
/// the coarse nodes (every `stride`-th oracle node coincides with a coarse
/// node), plus the oracle's own L1 mass over the same window.
fn l1_r_against_oracle(
    curv: &CurvatureField,
    dx: f64,
    oracle: &CurvatureField,
    stride: usize,
    margin: f64,
    side: f64,
) -> (f64, f64) {
    let skip = (margin / dx).ceil() as usize;
    let wnx = curv.nx - 2 * curv.margin;
    let onx = oracle.nx - 2 * oracle.margin;
    let imax = ((side - margin) / dx).floor() as usize;
    let mut l1r = 0.0;
    let mut ref_r = 0.0;
    for j in skip.max(curv.margin)..=imax.min(curv.nt - 1 - curv.margin) {
        for i in skip.max(curv.margin)..=imax.min(curv.nx - 1 - curv.margin) {
            let rv = curv.r[(j - curv.margin) * wnx + (i - curv.margin)];
            let (oi, oj) = (i * stride, j * stride);
            if oi < oracle.margin
                || oj < oracle.margin
                || oi >= oracle.nx - oracle.margin
                || oj >= oracle.nt - oracle.margin
            {
                continue;
            }
            let ov = oracle.r[(oj - oracle.margin) * onx + (oi - oracle.margin)];
            l1r += (rv - ov).abs() * dx * dx;
            ref_r += ov.abs() * dx * dx;
        }
    }
    (l1r, ref_r)
}

/// L1 distance between a boundary K line (at nodes 1..nx-1) and the oracle K
/// line at the strided nodes, plus the oracle's own L1 mass.
fn l1_k_against_oracle(
    k_line: &[f64],
    dx: f64,
    oracle_k: &[f64],
    stride: usize,
    margin: f64,
    side: f64,
) -> (f64, f64) {
    let skip = (margin / dx).ceil() as usize;
    let imax = ((side - margin) / dx).floor() as usize;
    let mut l1k = 0.0;
    let mut ref_k = 0.0;
    for i in skip.max(1)..=imax.min(k_line.len()) {
        let kv = k_line[i - 1];
        let oi = i * stride;
        if oi < 1 || oi > oracle_k.len() {
            continue;
        }
        let ov = oracle_k[oi - 1];
        l1k += (kv - ov).abs() * dx;
        ref_k += ov.abs() * dx;
    }
    (l1k, ref_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_metric_is_fixed_point() {
        let m = SampledChartMetric::flat(64, 64, 1.0 / 63.0, false);
        let sm = smooth(&m, &MollifierSpec::quartic(0.15)).unwrap();
        for k in 0..m.g11.len() {
            assert!((sm.g11[k] - 1.0).abs() <= 1e-14);
            assert!(sm.g12[k].abs() <= 1e-14);
        }
    }

    #[test]
    fn smoothing_is_linear() {
        let g = Geometry::perturbed_chart(0.15, [0.5, 0.32], 0.4);
        let a = SampledChartMetric::from_perturbed_chart(&g, 129);
        let g2 = Geometry::perturbed_chart(0.07, [0.4, 0.5], 0.3);
        let b = SampledChartMetric::from_perturbed_chart(&g2, 129);
        let mut ab = a.clone();
        for k in 0..ab.g11.len() {
            ab.g11[k] += b.g11[k];
            ab.g12[k] += b.g12[k];
            ab.g22[k] += b.g22[k];
        }
        let moll = MollifierSpec::quartic(0.1);
        let sa = smooth(&a, &moll).unwrap();
        let sb = smooth(&b, &moll).unwrap();
        let sab = smooth(&ab, &moll).unwrap();
        for k in 0..ab.g11.len() {
            assert!((sab.g11[k] - sa.g11[k] - sb.g11[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn reflected_smoothing_parity() {
        // the odd-reflected mixed component vanishes on the boundary line
        let n = 129usize;
        let mut m = SampledChartMetric::flat(n, n, 1.0 / (n - 1) as f64, true);
        for j in 0..n {
            for i in 0..n {
                let x = i as f64 / (n - 1) as f64;
                let t = j as f64 / (n - 1) as f64;
                // Fermi-class charts have g12(., 0) = 0; the odd extension is
                // continuous exactly for such fields
                m.g12[j * n + i] = 0.1 * (3.0 * x).sin() * (2.0 * t).sin();
            }
        }
        let sm = smooth(&m, &MollifierSpec::quartic(0.1)).unwrap();
        for i in 0..n {
            assert!(sm.g12[i].abs() <= 1e-13, "g12 at boundary {}", sm.g12[i]);
        }

        // even-in-t input: the half-grid reflected smoothing must match the
        // smoothing of the explicit even extension on a doubled grid
        let g = Geometry::perturbed_chart(0.15, [0.5, 0.0], 0.4);
        let half = SampledChartMetric::from_perturbed_chart(&g, n);
        let eps = 0.08;
        let sm_half = smooth(&half, &MollifierSpec::quartic(eps)).unwrap();
        let n2 = 2 * n - 1;
        let mut doubled = SampledChartMetric::flat(n, n2, half.dx, false);
        for j in 0..n2 {
            let t = (j as isize - (n as isize - 1)) as f64 * half.dx;
            for i in 0..n {
                let c = 1.0 + g.psi(i as f64 * half.dx, t.abs());
                doubled.g11[j * n + i] = c;
                doubled.g22[j * n + i] = c;
            }
        }
        let sm_doubled = smooth(&doubled, &MollifierSpec::quartic(eps)).unwrap();
        // compare a few rows near the boundary away from lateral edges
        for j in 0..16 {
            for i in 16..n - 16 {
                let a = sm_half.g11[j * n + i];
                let b = sm_doubled.g11[(j + n - 1) * n + i];
                assert!((a - b).abs() <= 1e-12, "row {j} col {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn norms_are_monotone() {
        let g = Geometry::perturbed_chart(0.15, [0.5, 0.32], 0.4);
        let m = SampledChartMetric::from_perturbed_chart(&g, 257);
        let sm = smooth(&m, &MollifierSpec::quartic(0.05)).unwrap();
        let (c0, c1) = c0_c1_distance(&sm, &m, 10, 10);
        assert!(c0 <= c1);
    }

    #[test]
    fn curvature_fd_flat_and_analytic() {
        let flat = SampledChartMetric::flat(33, 33, 1.0 / 32.0, true);
        let c = curvature_fd(&flat).unwrap();
        assert!(c.r.iter().all(|v| v.abs() <= 1e-12));
        assert!(c.k.iter().all(|v| v.abs() <= 1e-12));

        // sphere normal chart: R = 2 up to O(dx^2)
        let sph = SampledChartMetric::sphere_normal_chart(201, 0.5);
        let c = curvature_fd(&sph).unwrap();
        for v in &c.r {
            assert!((v - 2.0).abs() < 5e-3, "sphere R {v}");
        }

        // ball Fermi chart r=1: K = 1, R = 0
        let ball = SampledChartMetric::ball_fermi_chart(1.0, 201, 0.5);
        let c = curvature_fd(&ball).unwrap();
        for v in &c.k {
            assert!((v - 1.0).abs() < 1e-3, "ball K {v}");
        }
        for v in &c.r {
            assert!(v.abs() < 1e-4, "ball R {v}");
        }
    }

    #[test]
    fn curvature_fd_convergence_order() {
        // halving dx quarters the max R error on the sphere chart
        let err = |n: usize| -> f64 {
            let sph = SampledChartMetric::sphere_normal_chart(n, 0.4);
            let c = curvature_fd(&sph).unwrap();
            c.r.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max)
        };
        let e1 = err(101);
        let e2 = err(201);
        let rate = (e1 / e2).log2();
        assert!(rate > 1.7, "FD convergence rate {rate}");
    }

    #[test]
    fn smoothing_guards() {
        let m = SampledChartMetric::flat(65, 65, 1.0 / 64.0, true);
        assert!(matches!(
            smooth(&m, &MollifierSpec::quartic(0.6)),
            Err(SmoothError::RadiusExceedsReach { .. })
        ));
        assert!(matches!(
            smooth(&m, &MollifierSpec::quartic(0.05)),
            Err(SmoothError::ResolutionTooCoarse { .. })
        ));
        let tiny = SampledChartMetric::flat(3, 3, 0.5, false);
        assert!(matches!(curvature_fd(&tiny), Err(SmoothError::GridTooSmall)));
    }

    #[test]
    fn grid_file_round_trip_bit_exact() {
        let g = Geometry::perturbed_chart(0.15, [0.5, 0.32], 0.4);
        let m = SampledChartMetric::from_perturbed_chart(&g, 33);
        let dir = std::env::temp_dir().join("mdlab_grid_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("metric.grid");
        m.save(&path).unwrap();
        let back = SampledChartMetric::load(&path).unwrap();
        assert_eq!(m, back);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn ellipticity_degrades_at_most_linearly() {
        let g = Geometry::perturbed_chart(0.15, [0.5, 0.32], 0.4);
        let m = SampledChartMetric::from_perturbed_chart(&g, 257);
        let eps = 0.05;
        let sm = smooth(&m, &MollifierSpec::quartic(eps)).unwrap();
        let c = g.metric_gradient_lipschitz().max(1.0);
        assert!(sm.ell_lo >= m.ell_lo - c * eps, "lo {} vs {}", sm.ell_lo, m.ell_lo);
        assert!(sm.ell_hi <= m.ell_hi + c * eps, "hi {} vs {}", sm.ell_hi, m.ell_hi);
    }
}
