//! Artifact emission: the protocol report as a single JSON document plus
//! per-experiment CSV tables and self-contained SVG log-log plots.
//!
//! Determinism contract: identical report data yields byte-identical files.
//! CSVs are UTF-8 with a header row, '.' decimal separator, and a trailing
//! newline. SVG plots carry the fitted line with its slope annotated to three
//! decimals.

use crate::analysis::ProtocolReport;
use crate::config::RunConfig;
use crate::energy::{cell_energy, compute_features};
use crate::fitting::RateFit;
use crate::mesh::{build_mesh, Layer};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

fn write_file(dir: &Path, name: &str, content: &str) -> io::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

/// Minimal self-contained log-log scatter with the fitted line.
pub fn svg_loglog(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    points: &[(f64, f64)],
    fit: Option<&RateFit>,
) -> String {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let xs: Vec<f64> = points.iter().map(|(x, _)| x.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, y)| y.log10()).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mb - mt);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\">{}</text>",
        ml, title
    );
    // frame
    let _ = writeln!(
        s,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        w - ml - mr,
        h - mb - mt
    );
    // axis labels
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"13\">log10 {}</text>",
        w / 2.0 - 40.0,
        h - 12.0,
        xlabel
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" font-family=\"monospace\" font-size=\"13\" transform=\"rotate(-90 16 {})\">log10 {}</text>",
        h / 2.0,
        h / 2.0,
        ylabel
    );
    // tick labels at the corners
    let _ = writeln!(
        s,
        "<text x=\"{ml}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2}</text>",
        h - mb + 16.0,
        x0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2}</text>",
        w - mr - 30.0,
        h - mb + 16.0,
        x1
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2}</text>",
        ml - 45.0,
        h - mb,
        y0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2}</text>",
        ml - 45.0,
        mt + 10.0,
        y1
    );
    if let Some(f) = fit {
        // y_ln = intercept + slope ln x, converted to log10
        let ln10 = std::f64::consts::LN_10;
        let yl = |xl: f64| (f.intercept + f.slope * (xl * ln10)) / ln10;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"steelblue\" stroke-width=\"1.5\"/>",
            px(x0),
            py(yl(x0)),
            px(x1),
            py(yl(x1))
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"14\" fill=\"steelblue\">slope = {:.3}</text>",
            ml + 12.0,
            mt + 20.0,
            f.slope
        );
    }
    for (x, y) in points {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"crimson\"/>",
            px(x.log10()),
            py(y.log10())
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.08 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Per-cell energy dump for the ball at a given h: cell id, layer, depth,
/// volume, base area, feature, delta-l, energy, and the residuals under both
/// normalization readings (density form and aggregate form).
pub fn percell_csv(cfg: &RunConfig, h: f64) -> Result<String, crate::analysis::AnalysisError> {
    let pair = crate::analysis::build_window_pair(cfg, cfg.dim)?;
    let geom = crate::geometry::Geometry::euclidean_ball(cfg.dim, 1.0)?;
    let mesh = build_mesh(&geom, h, cfg.windows.c_star)?;
    let feats = compute_features(&mesh, &pair)?;
    let moments = crate::windows::normalize_and_moments(&pair.interior, &pair.boundary);
    let alpha1 = moments.mu2 / 6.0;
    let beta1 = moments.mu1;
    let mut out = String::new();
    out.push_str(
        "cell_id,layer,depth,volume,base_area,feature,delta_ell,energy,density_residual,aggregate_residual\n",
    );
    for (cell, feat) in mesh.cells.iter().zip(&feats) {
        let e = cell_energy(feat, cfg.loss, cfg.rho0);
        let delta_ell = cfg.loss.eval(feat.phi) - cfg.loss.eval(1.0);
        let (layer, depth, base) = match cell.layer {
            Layer::Interior => ("interior", f64::NAN, f64::NAN),
            Layer::FirstLayer { depth, base_area, .. } => ("first_layer", depth, base_area),
            Layer::Deeper { depth, .. } => ("deeper", depth, f64::NAN),
        };
        // density reading: E/Vol - rho0 - alpha1 R (interior), E/base - beta1 K
        // (first layer); aggregate reading compares against the h^2-weighted
        // curvature term instead.
        let (dres, ares) = if cell.is_first_layer() {
            let k = (cfg.dim as f64 - 1.0) / 1.0;
            let d = ((e - cfg.rho0 * cell.volume) / base - beta1 * k).abs();
            let a = ((e - cfg.rho0 * cell.volume) / base - h * beta1 * k).abs();
            (d, a)
        } else {
            let r = 0.0; // flat ball interior
            let d = (e / cell.volume - cfg.rho0 - alpha1 * r).abs();
            let a = (e / cell.volume - cfg.rho0 - h * h * alpha1 * r).abs();
            (d, a)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            cell.id, layer, depth, cell.volume, base, feat.phi, delta_ell, e, dres, ares
        );
    }
    Ok(out)
}

/// Write the full artifact set for a protocol report. Returns the paths.
pub fn emit_report(report: &ProtocolReport, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    paths.push(write_file(out_dir, "report.json", &(json + "\n"))?);

    if let Some(w) = &report.windows {
        let mut csv = String::from("quantity,value\n");
        let m = &w.moments;
        for (k, v) in [
            ("interior_norm", m.interior_norm),
            ("mu2", m.mu2),
            ("mu2_oracle", m.mu2_oracle),
            ("mu1", m.mu1),
            ("mu1_oracle", m.mu1_oracle),
            ("max_odd1", m.max_odd1),
            ("max_odd3", m.max_odd3),
            ("iso_offdiag", m.iso_offdiag),
            ("iso_diag_spread", m.iso_diag_spread),
            ("mass_residual", m.mass_residual),
            ("c1", m.interior_c_k[0]),
            ("c2", m.interior_c_k[1]),
            ("c3", m.interior_c_k[2]),
            ("c4", m.interior_c_k[3]),
            ("t1", m.boundary_t_k[0]),
            ("t2", m.boundary_t_k[1]),
            ("t3", m.boundary_t_k[2]),
            ("t4", m.boundary_t_k[3]),
        ] {
            let _ = writeln!(csv, "{k},{v}");
        }
        paths.push(write_file(out_dir, "windows_moments.csv", &csv)?);
    }

    if let Some(c) = &report.calibration {
        let mut csv = String::from("h,alpha1,beta1\n");
        for ((h, a), (_, b)) in c.alpha1.per_h.iter().zip(&c.beta1.per_h) {
            let _ = writeln!(csv, "{h},{a},{b}");
        }
        let _ = writeln!(csv, "extrapolated,{},{}", c.alpha1.extrapolated, c.beta1.extrapolated);
        let _ = writeln!(csv, "predicted,{},{}", c.alpha1.predicted, c.beta1.predicted);
        paths.push(write_file(out_dir, "calibration.csv", &csv)?);
    }

    for (law, name) in [(&report.interior_law, "interior_law"), (&report.boundary_law, "boundary_law")] {
        if let Some(l) = law {
            let mut csv = String::from("h,max_residual\n");
            for (h, r) in &l.points {
                let _ = writeln!(csv, "{h},{r}");
            }
            paths.push(write_file(out_dir, &format!("{name}.csv"), &csv)?);
            let svg = svg_loglog(
                &format!("{name} per-cell residual"),
                "h",
                "max residual",
                &l.points,
                Some(&l.fit),
            );
            paths.push(write_file(out_dir, &format!("{name}.svg"), &svg)?);
        }
    }

    for r in &report.rates {
        let tag = if r.geometry.contains("Torus") {
            "torus"
        } else if r.geometry.contains("Sphere") {
            "sphere"
        } else {
            "ball"
        };
        let mut csv =
            String::from("h,f_n,f_limit,error,interior_sum,first_layer_sum,deeper_sum\n");
        for p in &r.points {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                p.h, p.f_n, p.f_limit, p.error, p.interior_sum, p.first_layer_sum, p.deeper_sum
            );
        }
        paths.push(write_file(out_dir, &format!("rates_{tag}.csv"), &csv)?);
        if let Some(fit) = &r.fit {
            let pts: Vec<(f64, f64)> = r.points.iter().map(|p| (p.h, p.error)).collect();
            let svg =
                svg_loglog(&format!("global rate: {tag}"), "h", "|F_n - F|", &pts, Some(fit));
            paths.push(write_file(out_dir, &format!("rates_{tag}.svg"), &svg)?);
        }
    }

    if let Some(r) = &report.recovery {
        let mut csv = String::from("eps,c0_dist,c1_dist,l1_r,l1_k\n");
        for row in &r.table.rows {
            let _ = writeln!(csv, "{},{},{},{},{}", row.eps, row.c0_dist, row.c1_dist, row.l1_r, row.l1_k);
        }
        paths.push(write_file(out_dir, "recovery.csv", &csv)?);
        let pts: Vec<(f64, f64)> = r.table.rows.iter().map(|x| (x.eps, x.c1_dist)).collect();
        let svg = svg_loglog("recovery eps = eta h", "eps", "C1 distance", &pts, Some(&r.c1_fit));
        paths.push(write_file(out_dir, "recovery.svg", &svg)?);
    }

    if let Some(q) = &report.quasi_add {
        let mut csv = String::from("delta_n,defect,defect_over_perimeter\n");
        for (d, v, r) in &q.points {
            let _ = writeln!(csv, "{d},{v},{r}");
        }
        paths.push(write_file(out_dir, "quasi_add.csv", &csv)?);
        let pts: Vec<(f64, f64)> = q.points.iter().map(|(d, _, r)| (*d, *r)).collect();
        let svg = svg_loglog("quasi-additivity defect", "delta_n", "defect / Per", &pts, Some(&q.fit));
        paths.push(write_file(out_dir, "quasi_add.svg", &svg)?);
    }

    if let Some(sc) = &report.scan {
        let mut csv =
            String::from("h,delta_n,max_defect,bound_constant,static_defect,torus_max_defect\n");
        for p in &sc.per_h {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                p.h, p.delta_n, p.max_defect, p.bound_constant, p.static_defect, p.torus_max_defect
            );
        }
        paths.push(write_file(out_dir, "scan.csv", &csv)?);
    }

    if let Some(b) = &report.layer_bound {
        let mut csv = String::from("eps,band_width,anomalous_sum\n");
        for (e, w, s) in &b.eps_points {
            let _ = writeln!(csv, "{e},{w},{s}");
        }
        let _ = writeln!(csv, "# h,bound_constant");
        for (h, c) in &b.h_points {
            let _ = writeln!(csv, "{h},{c}");
        }
        paths.push(write_file(out_dir, "layer_bound.csv", &csv)?);
        let pts: Vec<(f64, f64)> = b.eps_points.iter().map(|(_, w, s)| (*w, *s)).collect();
        let svg = svg_loglog("layer-band anomaly", "band width", "anomalous sum", &pts, Some(&b.eps_fit));
        paths.push(write_file(out_dir, "layer_bound.svg", &svg)?);
    }

    if let Some(f) = &report.flat_ref {
        let mut csv = String::from("h,loss_gap,lambda_h\n");
        for ((h, g), (_, l)) in f.gap_points.iter().zip(&f.lambda_points) {
            let _ = writeln!(csv, "{h},{g},{l}");
        }
        paths.push(write_file(out_dir, "flat_ref.csv", &csv)?);
        let svg = svg_loglog(
            "flat-reference variant gap",
            "h",
            "per-cell loss gap",
            &f.gap_points,
            Some(&f.gap_fit),
        );
        paths.push(write_file(out_dir, "flat_ref.svg", &svg)?);
    }

    if let Some(s) = &report.scaling {
        let mut csv =
            String::from("geometry,sigma,component,measured_ratio,expected_ratio,rel_error,pass\n");
        for c in &s.cases {
            let _ = writeln!(
                csv,
                "\"{}\",{},{},{},{},{},{}",
                c.geometry, c.sigma, c.component, c.measured_ratio, c.expected_ratio, c.rel_error, c.pass
            );
        }
        paths.push(write_file(out_dir, "scaling.csv", &csv)?);
    }

    if let Some(sm) = &report.smoothing {
        let mut csv = String::from("eps,grid_nodes,c0_dist,c1_dist,l1_r,l1_k,ell_lo,ell_hi\n");
        for r in &sm.table.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                r.eps, r.grid_nodes, r.c0_dist, r.c1_dist, r.l1_r, r.l1_k, r.ell_lo, r.ell_hi
            );
        }
        let _ = writeln!(csv, "# l1_r_reference,{}", sm.table.l1_r_reference);
        paths.push(write_file(out_dir, "smoothing.csv", &csv)?);
        let pts: Vec<(f64, f64)> = sm.table.rows.iter().map(|r| (r.eps, r.c1_dist)).collect();
        let svg = svg_loglog("smoothing C1 stability", "eps", "C1 distance", &pts, Some(&sm.c1_fit));
        paths.push(write_file(out_dir, "smoothing.svg", &svg)?);
    }

    // per-cell energy dump for the ball at the middle h of the sweep
    let cfg = &report.config;
    if !cfg.h_list.is_empty() {
        let h = cfg.h_list[cfg.h_list.len() / 2];
        if let Ok(csv) = percell_csv(cfg, h) {
            paths.push(write_file(out_dir, "percell_ball.csv", &csv)?);
        }
    }
    Ok(paths)
}

/// One pass/fail line per experiment, for terminal output.
pub fn verdict_lines(report: &ProtocolReport) -> Vec<(String, bool)> {
    let mut lines: Vec<(String, bool)> = Vec::new();
    let named: [(&str, Option<bool>); 10] = [
        ("windows", report.windows.as_ref().map(|r| r.pass)),
        ("calibration", report.calibration.as_ref().map(|r| r.pass)),
        ("interior-law", report.interior_law.as_ref().map(|r| r.pass)),
        ("boundary-law", report.boundary_law.as_ref().map(|r| r.pass)),
        ("recovery", report.recovery.as_ref().map(|r| r.pass)),
        ("quasi-additivity", report.quasi_add.as_ref().map(|r| r.pass)),
        ("scan-indifference", report.scan.as_ref().map(|r| r.pass)),
        ("layer-bound", report.layer_bound.as_ref().map(|r| r.pass)),
        ("flat-ref-uniqueness", report.flat_ref.as_ref().map(|r| r.pass)),
        ("scaling", report.scaling.as_ref().map(|r| r.pass)),
    ];
    for (name, pass) in named.iter().take(4) {
        if let Some(p) = pass {
            lines.push((name.to_string(), *p));
        }
    }
    for r in &report.rates {
        let tag = if r.geometry.contains("Torus") {
            "rates-torus"
        } else if r.geometry.contains("Sphere") {
            "rates-sphere"
        } else {
            "rates-ball"
        };
        lines.push((tag.to_string(), r.pass));
    }
    for (name, pass) in named.iter().skip(4) {
        if let Some(p) = pass {
            lines.push((name.to_string(), *p));
        }
    }
    if let Some(s) = &report.smoothing {
        lines.push(("smoothing".to_string(), s.pass));
    }
    if !report.shape_reports.is_empty() {
        lines.push(("mesh-shape".to_string(), report.shape_reports.iter().all(|r| r.pass)));
    }
    lines
}
