//! Run configuration: line-oriented `key = value` files with section
//! headers, parsed with line-numbered diagnostics and serialized in a
//! canonical order (parse -> serialize -> parse is a fixpoint).

use crate::energy::Loss;
use crate::windows::BoundaryProfile;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Line { line, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryConfig {
    pub torus_period: f64,
    pub sphere_radius: f64,
    pub ball_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowConfig {
    pub interior_profile: String,
    pub boundary_profile: String,
    pub c_star: f64,
    pub lambda_z: f64,
    pub quad_order: usize,
    /// Nonzero shifts deliberately break the moment conditions (fault
    /// injection for verify-windows).
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerBoundConfig {
    pub block_radius: f64,
    pub h_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub h_fixed: f64,
    pub eps_fixed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiAddConfig {
    pub h: f64,
    pub delta_list: Vec<f64>,
    pub rho0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingConfig {
    pub amplitude: f64,
    pub center_x: f64,
    pub center_t: f64,
    pub bump_radius: f64,
    pub eps_factors: Vec<f64>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentToggles {
    pub windows: bool,
    pub calibrate: bool,
    pub interior_law: bool,
    pub boundary_law: bool,
    pub rates: bool,
    pub quasi_add: bool,
    pub scan: bool,
    pub layer_bound: bool,
    pub flat_ref: bool,
    pub scaling: bool,
    pub smoothing: bool,
    pub recovery: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dim: usize,
    pub h_list: Vec<f64>,
    pub rho0: f64,
    pub loss: Loss,
    pub seed: u64,
    pub out_dir: String,
    /// Interface-to-boundary margin for region experiments.
    pub eps0: f64,
    pub scan_pairs: usize,
    /// Mesoscale exponent a in r_n = h^{-a} (block radius R_n = h^{1-a}).
    pub rn_exponent: f64,
    pub geometry: GeometryConfig,
    pub windows: WindowConfig,
    pub layer_bound: LayerBoundConfig,
    pub quasi_add: QuasiAddConfig,
    pub smoothing: SmoothingConfig,
    pub experiments: ExperimentToggles,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 2,
            h_list: vec![0.2, 0.1, 0.05, 0.025],
            rho0: 0.0,
            loss: Loss::NegLog,
            seed: 42,
            out_dir: "out".to_string(),
            eps0: 0.2,
            scan_pairs: 10,
            rn_exponent: 0.5,
            geometry: GeometryConfig {
                torus_period: 1.0,
                sphere_radius: 1.0,
                ball_radius: 1.0,
            },
            windows: WindowConfig {
                interior_profile: "quartic".to_string(),
                boundary_profile: "triangular".to_string(),
                c_star: 0.6,
                lambda_z: 1.0,
                quad_order: 20,
                shift: 0.0,
            },
            layer_bound: LayerBoundConfig {
                block_radius: 0.7,
                h_list: vec![0.1, 0.05, 0.025],
                eps_list: vec![0.1, 0.15, 0.2, 0.25, 0.3],
                h_fixed: 0.05,
                eps_fixed: 0.3,
            },
            quasi_add: QuasiAddConfig {
                h: 0.0078125,
                delta_list: vec![0.1, 0.0707, 0.05, 0.0354, 0.025],
                rho0: 1.0,
            },
            smoothing: SmoothingConfig {
                amplitude: 0.15,
                center_x: 0.5,
                center_t: 0.32,
                bump_radius: 0.4,
                eps_factors: vec![0.2, 0.1, 0.05, 0.025],
                eta: 0.25,
            },
            experiments: ExperimentToggles {
                windows: true,
                calibrate: true,
                interior_law: true,
                boundary_law: true,
                rates: true,
                quasi_add: true,
                scan: true,
                layer_bound: true,
                flat_ref: true,
                scaling: true,
                smoothing: true,
                recovery: true,
            },
        }
    }
}

impl RunConfig {
    /// d=3 subset: torus/sphere/ball calibration, per-cell laws, rates, and
    /// the scaling test at the coarser h list the dimension affords.
    pub fn default_d3() -> Self {
        let mut cfg = RunConfig::default();
        cfg.dim = 3;
        cfg.h_list = vec![0.2, 0.1, 0.05];
        cfg.experiments = ExperimentToggles {
            windows: true,
            calibrate: true,
            interior_law: true,
            boundary_law: true,
            rates: true,
            quasi_add: false,
            scan: false,
            layer_bound: false,
            flat_ref: false,
            scaling: true,
            smoothing: false,
            recovery: false,
        };
        cfg
    }

    pub fn loss_name(&self) -> &'static str {
        match self.loss {
            Loss::NegLog => "neglog",
            Loss::Quadratic => "quadratic",
        }
    }

    pub fn boundary_profile(&self) -> BoundaryProfile {
        match self.windows.boundary_profile.as_str() {
            "blended" => BoundaryProfile::Blended,
            _ => BoundaryProfile::Triangular,
        }
    }

    /// Canonical text form.
    pub fn serialize(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s.push_str("[run]\n");
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("h_list = {}\n", list(&self.h_list)));
        s.push_str(&format!("rho0 = {}\n", self.rho0));
        s.push_str(&format!("loss = {}\n", self.loss_name()));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("out_dir = {}\n", self.out_dir));
        s.push_str(&format!("eps0 = {}\n", self.eps0));
        s.push_str(&format!("scan_pairs = {}\n", self.scan_pairs));
        s.push_str(&format!("rn_exponent = {}\n", self.rn_exponent));
        s.push_str("\n[geometry]\n");
        s.push_str(&format!("torus_period = {}\n", self.geometry.torus_period));
        s.push_str(&format!("sphere_radius = {}\n", self.geometry.sphere_radius));
        s.push_str(&format!("ball_radius = {}\n", self.geometry.ball_radius));
        s.push_str("\n[windows]\n");
        s.push_str(&format!("interior_profile = {}\n", self.windows.interior_profile));
        s.push_str(&format!("boundary_profile = {}\n", self.windows.boundary_profile));
        s.push_str(&format!("c_star = {}\n", self.windows.c_star));
        s.push_str(&format!("lambda_z = {}\n", self.windows.lambda_z));
        s.push_str(&format!("quad_order = {}\n", self.windows.quad_order));
        s.push_str(&format!("shift = {}\n", self.windows.shift));
        s.push_str("\n[layer_bound]\n");
        s.push_str(&format!("block_radius = {}\n", self.layer_bound.block_radius));
        s.push_str(&format!("h_list = {}\n", list(&self.layer_bound.h_list)));
        s.push_str(&format!("eps_list = {}\n", list(&self.layer_bound.eps_list)));
        s.push_str(&format!("h_fixed = {}\n", self.layer_bound.h_fixed));
        s.push_str(&format!("eps_fixed = {}\n", self.layer_bound.eps_fixed));
        s.push_str("\n[quasi_add]\n");
        s.push_str(&format!("h = {}\n", self.quasi_add.h));
        s.push_str(&format!("delta_list = {}\n", list(&self.quasi_add.delta_list)));
        s.push_str(&format!("rho0 = {}\n", self.quasi_add.rho0));
        s.push_str("\n[smoothing]\n");
        s.push_str(&format!("amplitude = {}\n", self.smoothing.amplitude));
        s.push_str(&format!("center_x = {}\n", self.smoothing.center_x));
        s.push_str(&format!("center_t = {}\n", self.smoothing.center_t));
        s.push_str(&format!("bump_radius = {}\n", self.smoothing.bump_radius));
        s.push_str(&format!("eps_factors = {}\n", list(&self.smoothing.eps_factors)));
        s.push_str(&format!("eta = {}\n", self.smoothing.eta));
        s.push_str("\n[experiments]\n");
        let e = &self.experiments;
        for (name, val) in [
            ("windows", e.windows),
            ("calibrate", e.calibrate),
            ("interior_law", e.interior_law),
            ("boundary_law", e.boundary_law),
            ("rates", e.rates),
            ("quasi_add", e.quasi_add),
            ("scan", e.scan),
            ("layer_bound", e.layer_bound),
            ("flat_ref", e.flat_ref),
            ("scaling", e.scaling),
            ("smoothing", e.smoothing),
            ("recovery", e.recovery),
        ] {
            s.push_str(&format!("{name} = {val}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return err(lineno, "unterminated section header");
                }
                section = line[1..line.len() - 1].trim().to_string();
                match section.as_str() {
                    "run" | "geometry" | "windows" | "layer_bound" | "quasi_add" | "smoothing"
                    | "experiments" => {}
                    other => return err(lineno, format!("unknown section '{other}'")),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(lineno, "expected 'key = value'");
            };
            let key = key.trim();
            let value = value.trim();
            apply(&mut cfg, &section, key, value, lineno)?;
        }
        if cfg.h_list.len() < 3 {
            return err(0, "h_list needs at least 3 decreasing values");
        }
        Ok(cfg)
    }
}

fn parse_f64(value: &str, line: usize) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::Line { line, msg: format!("bad number '{value}'") })
}

fn parse_usize(value: &str, line: usize) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| ConfigError::Line { line, msg: format!("bad integer '{value}'") })
}

fn parse_bool(value: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => err(line, format!("bad boolean '{value}'")),
    }
}

fn parse_list(value: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|p| parse_f64(p.trim(), line)).collect()
}

fn apply(
    cfg: &mut RunConfig,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), ConfigError> {
    match (section, key) {
        ("run", "dim") => cfg.dim = parse_usize(value, line)?,
        ("run", "h_list") => cfg.h_list = parse_list(value, line)?,
        ("run", "rho0") => cfg.rho0 = parse_f64(value, line)?,
        ("run", "loss") => {
            cfg.loss = match value {
                "neglog" => Loss::NegLog,
                "quadratic" => Loss::Quadratic,
                other => return err(line, format!("unknown loss '{other}'")),
            }
        }
        ("run", "seed") => {
            cfg.seed = value
                .parse()
                .map_err(|_| ConfigError::Line { line, msg: format!("bad seed '{value}'") })?
        }
        ("run", "out_dir") => cfg.out_dir = value.to_string(),
        ("run", "eps0") => cfg.eps0 = parse_f64(value, line)?,
        ("run", "scan_pairs") => cfg.scan_pairs = parse_usize(value, line)?,
        ("run", "rn_exponent") => {
            let a = parse_f64(value, line)?;
            if !(0.0 < a && a < 1.0) {
                return err(line, "rn_exponent must lie in (0, 1)");
            }
            cfg.rn_exponent = a;
        }
        ("geometry", "torus_period") => cfg.geometry.torus_period = parse_f64(value, line)?,
        ("geometry", "sphere_radius") => cfg.geometry.sphere_radius = parse_f64(value, line)?,
        ("geometry", "ball_radius") => cfg.geometry.ball_radius = parse_f64(value, line)?,
        ("windows", "interior_profile") => {
            if value != "quartic" {
                return err(line, format!("unknown interior profile '{value}'"));
            }
            cfg.windows.interior_profile = value.to_string();
        }
        ("windows", "boundary_profile") => {
            if value != "triangular" && value != "blended" {
                return err(line, format!("unknown boundary profile '{value}'"));
            }
            cfg.windows.boundary_profile = value.to_string();
        }
        ("windows", "c_star") => {
            let c = parse_f64(value, line)?;
            if !(0.0 < c && c < 1.0) {
                return err(line, "c_star must lie in (0, 1)");
            }
            cfg.windows.c_star = c;
        }
        ("windows", "lambda_z") => cfg.windows.lambda_z = parse_f64(value, line)?,
        ("windows", "quad_order") => cfg.windows.quad_order = parse_usize(value, line)?,
        ("windows", "shift") => cfg.windows.shift = parse_f64(value, line)?,
        ("layer_bound", "block_radius") => cfg.layer_bound.block_radius = parse_f64(value, line)?,
        ("layer_bound", "h_list") => cfg.layer_bound.h_list = parse_list(value, line)?,
        ("layer_bound", "eps_list") => cfg.layer_bound.eps_list = parse_list(value, line)?,
        ("layer_bound", "h_fixed") => cfg.layer_bound.h_fixed = parse_f64(value, line)?,
        ("layer_bound", "eps_fixed") => cfg.layer_bound.eps_fixed = parse_f64(value, line)?,
        ("quasi_add", "h") => cfg.quasi_add.h = parse_f64(value, line)?,
        ("quasi_add", "delta_list") => cfg.quasi_add.delta_list = parse_list(value, line)?,
        ("quasi_add", "rho0") => cfg.quasi_add.rho0 = parse_f64(value, line)?,
        ("smoothing", "amplitude") => cfg.smoothing.amplitude = parse_f64(value, line)?,
        ("smoothing", "center_x") => cfg.smoothing.center_x = parse_f64(value, line)?,
        ("smoothing", "center_t") => cfg.smoothing.center_t = parse_f64(value, line)?,
        ("smoothing", "bump_radius") => cfg.smoothing.bump_radius = parse_f64(value, line)?,
        ("smoothing", "eps_factors") => cfg.smoothing.eps_factors = parse_list(value, line)?,
        ("smoothing", "eta") => cfg.smoothing.eta = parse_f64(value, line)?,
        ("experiments", name) => {
            let v = parse_bool(value, line)?;
            let e = &mut cfg.experiments;
            match name {
                "windows" => e.windows = v,
                "calibrate" => e.calibrate = v,
                "interior_law" => e.interior_law = v,
                "boundary_law" => e.boundary_law = v,
                "rates" => e.rates = v,
                "quasi_add" => e.quasi_add = v,
                "scan" => e.scan = v,
                "layer_bound" => e.layer_bound = v,
                "flat_ref" => e.flat_ref = v,
                "scaling" => e.scaling = v,
                "smoothing" => e.smoothing = v,
                "recovery" => e.recovery = v,
                other => return err(line, format!("unknown experiment toggle '{other}'")),
            }
        }
        (sec, k) => return err(line, format!("unknown key '{k}' in section '[{sec}]'")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_fixpoint() {
        let cfg = RunConfig::default();
        let text = cfg.serialize();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.serialize(), text);

        let cfg3 = RunConfig::default_d3();
        let back3 = RunConfig::parse(&cfg3.serialize()).unwrap();
        assert_eq!(cfg3, back3);
    }

    #[test]
    fn bad_lines_are_located() {
        let text = "[run]\ndim = 2\nrho0 = abc\n";
        match RunConfig::parse(text).unwrap_err() {
            ConfigError::Line { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("abc"));
            }
        }
        let text = "[run]\nnope = 1\n";
        assert!(matches!(RunConfig::parse(text), Err(ConfigError::Line { line: 2, .. })));
        let text = "[wat]\n";
        assert!(matches!(RunConfig::parse(text), Err(ConfigError::Line { line: 1, .. })));
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let text = "# comment\n\n[run]\nseed = 7\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn c_star_range_enforced() {
        let text = "[windows]\nc_star = 1.5\n";
        assert!(RunConfig::parse(text).is_err());
    }
}
