//! Run configuration: a TOML file whose defaults reproduce the reference quartic run.
//!
//! Lengths and momenta are given in physical units and converted to scaled
//! units (`b = hbar = 1`) at the boundary; times are not rescaled.

use std::fmt;
use std::path::Path;

use civr_core::oracle::{EigenConfig, SplitOpConfig};
use civr_core::propagator::{CivrParams, FilterMode, LabelGrid, Quadrature};
use civr_core::{CoherentLabel, QuarticSpec, StepControl, UnitScaling, XGrid};
use serde::{Deserialize, Serialize};

/// A configuration problem, with the line it was found on when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hamiltonian: HamiltonianConfig,
    pub initial: InitialConfig,
    pub run: RunSection,
    pub civr: CivrConfig,
    /// Final labels `z_f` of the propagator and of the reconstruction sum.
    pub labels: LabelGrid,
    /// Position grid shared by the reconstruction and the split-operator oracle.
    pub x_grid: XGridConfig,
    pub oracle: OracleConfig,
    pub integrator: StepControl,
    pub eigen: EigenSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hamiltonian: HamiltonianConfig::default(),
            initial: InitialConfig::default(),
            run: RunSection::default(),
            civr: CivrConfig::default(),
            labels: LabelGrid::default_labels(),
            x_grid: XGridConfig::default(),
            oracle: OracleConfig::default(),
            integrator: StepControl::default(),
            eigen: EigenSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianConfig {
    /// Harmonic frequency `Omega`.
    pub omega: f64,
    pub lambda: f64,
    /// Wavepacket width.
    pub b: f64,
    pub hbar: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self { omega: 1.0, lambda: 0.4, b: 1.0, hbar: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub q0: f64,
    pub p0: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { q0: 0.0, p0: -2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub times: Vec<f64>,
    /// Base integration step of the trajectories.
    pub dt: f64,
    /// Scale reconstructed wavefunctions to unit norm (the raw norm is always reported).
    pub renormalize: bool,
    /// Write a per-trajectory summary CSV for every ensemble.
    pub dump_trajectories: bool,
    /// Fail with a numerical error when more trajectories than this are invalid.
    pub max_invalid_fraction: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            times: vec![1.0, 8.5],
            dt: 1e-3,
            renormalize: false,
            dump_trajectories: false,
            max_invalid_fraction: 0.1,
        }
    }
}

/// One value for every time, or one value per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerTime {
    One(f64),
    Many(Vec<f64>),
}

impl PerTime {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            PerTime::One(v) => *v,
            PerTime::Many(v) => v[i],
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            PerTime::One(v) => vec![*v],
            PerTime::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Smooth,
    Sudden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CivrConfig {
    pub mode: Mode,
    /// Smoothing width per time.
    pub a: PerTime,
    /// Cutoff per time.
    pub c: PerTime,
    /// Sudden-mode delta width relative to the label spacing.
    pub eps: f64,
    pub quadrature: Quadrature,
    /// Companion-point grid of the trajectory launches.
    pub grid1: LabelGrid,
    /// Interpret `grid1` relative to `(q0, p0)` instead of absolutely.
    pub grid1_centered: bool,
    pub scan: ScanConfig,
}

impl Default for CivrConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Smooth,
            a: PerTime::Many(vec![1.5, 0.4]),
            c: PerTime::Many(vec![2.5, 1.0]),
            eps: 0.25,
            quadrature: Quadrature::Riemann,
            grid1: LabelGrid::default_companions(),
            grid1_centered: false,
            scan: ScanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub a_min: f64,
    pub a_max: f64,
    pub steps: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { a_min: 0.3, a_max: 0.6, steps: 7 }
    }
}

impl ScanConfig {
    pub fn values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.a_min];
        }
        let h = (self.a_max - self.a_min) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.a_min + k as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XGridConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Power of two; the grid is periodic, `x_max` excluded.
    pub n: usize,
}

impl Default for XGridConfig {
    fn default() -> Self {
        Self { x_min: -12.0, x_max: 12.0, n: 2048 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub dt: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { dt: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenSection {
    pub states: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub dtau: f64,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for EigenSection {
    fn default() -> Self {
        let e = EigenConfig::default();
        Self { states: 3, x_min: e.x_min, x_max: e.x_max, n_x: e.n_x, dtau: e.dtau, tol: e.tol, max_steps: e.max_steps }
    }
}

/// Parses a TOML config (or a run manifest, which embeds one) and applies
/// `key=value` overrides, e.g. `civr.a=0.5` or `run.times=[1.0]`.
pub fn load(path: &Path, overrides: &[String]) -> Result<(RunConfig, String), ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { message: format!("cannot read {}: {e}", path.display()), line: None })?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        from_manifest(&src, overrides)?
    } else {
        parse(&src, overrides)?
    };
    Ok((cfg, src))
}

/// Parses TOML text with overrides and validates the result.
pub fn parse(src: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    // Deserialising the text directly keeps spans, so type errors in the file get a line.
    let file_cfg: RunConfig = toml::from_str(src).map_err(|e| toml_error(src, &e))?;
    let cfg = if overrides.is_empty() {
        file_cfg
    } else {
        let mut table: toml::Table = src.parse().map_err(|e: toml::de::Error| toml_error(src, &e))?;
        apply_overrides(&mut table, overrides)?;
        table.try_into().map_err(|e: toml::de::Error| ConfigError {
            message: format!("after overrides: {}", e.message()),
            line: None,
        })?
    };
    cfg.validate()
        .map_err(|(path, message)| ConfigError { line: locate(src, &path), message: format!("{path}: {message}") })?;
    Ok(cfg)
}

fn from_manifest(src: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(src).map_err(|e| ConfigError { message: e.to_string(), line: Some(e.line()) })?;
    let cfg = value
        .get("config")
        .ok_or_else(|| ConfigError { message: "manifest has no `config` entry".into(), line: None })?;
    let cfg: RunConfig = serde_json::from_value(cfg.clone())
        .map_err(|e| ConfigError { message: format!("manifest config: {e}"), line: None })?;
    // Round-trip through TOML so overrides behave exactly as for a config file.
    let text = toml::to_string(&cfg).map_err(|e| ConfigError { message: e.to_string(), line: None })?;
    parse(&text, overrides)
}

fn toml_error(src: &str, e: &toml::de::Error) -> ConfigError {
    let line = e.span().map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
    ConfigError { message: e.message().to_string(), line }
}

fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), ConfigError> {
    for o in overrides {
        let err = |m: &str| ConfigError { message: format!("override `{o}`: {m}"), line: None };
        let (key, raw) = o.split_once('=').ok_or_else(|| err("expected key=value"))?;
        let value: toml::Value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut cur = &mut *table;
        for part in &parts[..parts.len() - 1] {
            cur = cur
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| err("path crosses a non-table value"))?;
        }
        cur.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

/// Line of `key` inside `[section]` for a dotted path, if it is written out.
fn locate(src: &str, path: &str) -> Option<usize> {
    let (section, key) = path.rsplit_once('.').unwrap_or(("", path));
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                section_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}

type Invalid = (String, String);

fn check(ok: bool, path: &str, message: impl Into<String>) -> Result<(), Invalid> {
    if ok {
        Ok(())
    } else {
        Err((path.to_string(), message.into()))
    }
}

fn check_grid(g: &LabelGrid, path: &str) -> Result<(), Invalid> {
    check(g.n_q >= 2, &format!("{path}.n_q"), "needs at least 2 points")?;
    check(g.n_p >= 2, &format!("{path}.n_p"), "needs at least 2 points")?;
    check(
        g.q_min.is_finite() && g.q_max.is_finite() && g.q_max > g.q_min,
        &format!("{path}.q_max"),
        "needs q_max > q_min",
    )?;
    check(
        g.p_min.is_finite() && g.p_max.is_finite() && g.p_max > g.p_min,
        &format!("{path}.p_max"),
        "needs p_max > p_min",
    )
}

impl RunConfig {
    /// Semantic checks; the error carries the dotted key it refers to.
    pub fn validate(&self) -> Result<(), Invalid> {
        let h = &self.hamiltonian;
        check(h.b.is_finite() && h.b > 0.0, "hamiltonian.b", format!("must be positive, got {}", h.b))?;
        check(h.hbar.is_finite() && h.hbar > 0.0, "hamiltonian.hbar", format!("must be positive, got {}", h.hbar))?;
        check(h.omega.is_finite() && h.omega >= 0.0, "hamiltonian.omega", format!("must be >= 0, got {}", h.omega))?;
        check(
            h.lambda.is_finite() && h.lambda >= 0.0,
            "hamiltonian.lambda",
            format!("must be >= 0, got {}", h.lambda),
        )?;
        check(self.initial.q0.is_finite(), "initial.q0", "must be finite")?;
        check(self.initial.p0.is_finite(), "initial.p0", "must be finite")?;

        let r = &self.run;
        check(r.times.iter().all(|t| t.is_finite() && *t >= 0.0), "run.times", "times must be finite and >= 0")?;
        check(r.dt.is_finite() && r.dt > 0.0, "run.dt", format!("must be positive, got {}", r.dt))?;
        check((0.0..=1.0).contains(&r.max_invalid_fraction), "run.max_invalid_fraction", "must lie in [0, 1]")?;

        let c = &self.civr;
        for (name, v) in [("civr.a", &c.a), ("civr.c", &c.c)] {
            if let (PerTime::Many(list), false) = (v, r.times.is_empty()) {
                check(
                    list.len() == r.times.len(),
                    name,
                    format!(
                        "has {} entries but run.times has {}; give one value or one per time",
                        list.len(),
                        r.times.len()
                    ),
                )?;
            }
        }
        check(c.a.values().iter().all(|a| a.is_finite() && *a > 0.0), "civr.a", "widths must be positive")?;
        check(c.c.values().iter().all(|v| !v.is_nan()), "civr.c", "cutoffs must not be NaN")?;
        check(c.eps.is_finite() && c.eps > 0.0, "civr.eps", format!("must be positive, got {}", c.eps))?;
        check_grid(&c.grid1, "civr.grid1")?;
        check(c.scan.a_min.is_finite() && c.scan.a_min > 0.0, "civr.scan.a_min", "must be positive")?;
        check(c.scan.a_max >= c.scan.a_min, "civr.scan.a_max", "must be >= a_min")?;
        check(c.scan.steps >= 1, "civr.scan.steps", "must be >= 1")?;
        check_grid(&self.labels, "labels")?;

        let x = &self.x_grid;
        check(x.n.is_power_of_two() && x.n >= 8, "x_grid.n", format!("must be a power of two >= 8, got {}", x.n))?;
        check(x.x_min.is_finite() && x.x_max.is_finite() && x.x_max > x.x_min, "x_grid.x_max", "needs x_max > x_min")?;
        check(self.oracle.dt.is_finite() && self.oracle.dt > 0.0, "oracle.dt", "must be positive")?;

        let s = &self.integrator;
        check(s.tol.is_finite() && s.tol > 0.0, "integrator.tol", "must be positive")?;
        check(s.h2_cap.is_finite() && s.h2_cap > 0.0, "integrator.h2_cap", "must be positive")?;

        let e = &self.eigen;
        check(e.n_x.is_power_of_two() && e.n_x >= 8, "eigen.n_x", "must be a power of two >= 8")?;
        check(e.dtau.is_finite() && e.dtau > 0.0, "eigen.dtau", "must be positive")?;
        Ok(())
    }

    pub fn scaling(&self) -> UnitScaling {
        UnitScaling { b: self.hamiltonian.b, hbar: self.hamiltonian.hbar }
    }

    pub fn spec(&self) -> QuarticSpec {
        QuarticSpec::new(self.hamiltonian.omega, self.hamiltonian.lambda, self.scaling())
    }

    /// Initial label in scaled units.
    pub fn z0(&self) -> CoherentLabel {
        self.scaling().scale_label(CoherentLabel::new(self.initial.q0, self.initial.p0))
    }

    fn scale_grid(&self, g: &LabelGrid) -> LabelGrid {
        let s = self.scaling();
        let (q_min, p_min) = s.scale(g.q_min, g.p_min);
        let (q_max, p_max) = s.scale(g.q_max, g.p_max);
        LabelGrid { q_min, q_max, p_min, p_max, ..*g }
    }

    /// Companion grid in scaled units.
    pub fn grid1(&self) -> LabelGrid {
        let g = if self.civr.grid1_centered {
            self.civr.grid1.shifted(self.initial.q0, self.initial.p0)
        } else {
            self.civr.grid1
        };
        self.scale_grid(&g)
    }

    /// Final-label grid in scaled units.
    pub fn labels(&self) -> LabelGrid {
        self.scale_grid(&self.labels)
    }

    /// Position grid in scaled units.
    pub fn x_grid(&self) -> XGrid {
        let s = self.scaling();
        XGrid::periodic(s.scale_q(self.x_grid.x_min), s.scale_q(self.x_grid.x_max), self.x_grid.n)
    }

    pub fn split_op(&self, t: f64) -> SplitOpConfig {
        let g = self.x_grid();
        SplitOpConfig { x_min: g.x_min, x_max: g.x_min + g.dx * g.n as f64, n_x: g.n, dt: self.oracle.dt, t }
    }

    pub fn eigen_config(&self) -> EigenConfig {
        let e = &self.eigen;
        let s = self.scaling();
        EigenConfig {
            x_min: s.scale_q(e.x_min),
            x_max: s.scale_q(e.x_max),
            n_x: e.n_x,
            dtau: e.dtau,
            tol: e.tol,
            max_steps: e.max_steps,
        }
    }

    /// Propagator parameters for the `i`-th time, with width `a`.
    pub fn params(&self, i: usize, a: f64) -> CivrParams {
        let mode = match self.civr.mode {
            Mode::Smooth => FilterMode::Smooth,
            Mode::Sudden => FilterMode::Sudden { eps: self.civr.eps },
        };
        CivrParams { a, c: self.civr.c.get(i), mode, quadrature: self.civr.quadrature }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let cfg = parse("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.run.times, vec![1.0, 8.5]);
        assert_eq!(cfg.civr.a.get(0), 1.5);
        assert_eq!(cfg.civr.a.get(1), 0.4);
        assert_eq!(cfg.civr.c.get(0), 2.5);
        assert_eq!(cfg.civr.c.get(1), 1.0);
        assert_eq!(cfg.grid1(), LabelGrid::default_companions());
        assert_eq!(cfg.labels(), LabelGrid::default_labels());
        assert_eq!(cfg.z0(), CoherentLabel::new(0.0, -2.0));
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        assert_eq!(parse(&text, &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn validation_errors_name_the_line() {
        let src = "[run]\ntimes = [1.0]\n\n[civr]\nmode = \"smooth\"\na = [1.0, 2.0]\n";
        let err = parse(src, &[]).unwrap_err();
        assert_eq!(err.line, Some(6), "{err}");
        assert!(err.message.contains("2 entries"));

        let err = parse("[hamiltonian]\nomega = 1.0\nb = -1.0\n", &[]).unwrap_err();
        assert_eq!(err.line, Some(3));

        let err = parse("[run]\ndt = \"fast\"\n", &[]).unwrap_err();
        assert_eq!(err.line, Some(2), "{err}");

        let err = parse("[civr]\nwidth = 1.0\n", &[]).unwrap_err();
        assert!(err.message.contains("width"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let cfg = parse("", &["civr.a=0.5".into(), "run.times=[2.0]".into(), "civr.c=1.0".into()]).unwrap();
        assert_eq!(cfg.civr.a, PerTime::One(0.5));
        assert_eq!(cfg.run.times, vec![2.0]);
        assert!(parse("", &["civr.a".into()]).is_err());
        let cfg = parse("", &["civr.mode=sudden".into()]).unwrap();
        assert_eq!(cfg.civr.mode, Mode::Sudden);
    }

    #[test]
    fn scaling_converts_bounds() {
        let cfg = parse("[hamiltonian]\nb = 2.0\n[initial]\nq0 = 1.0\np0 = -2.0\n", &[]).unwrap();
        assert_eq!(cfg.z0(), CoherentLabel::new(0.5, -4.0));
        assert_eq!(cfg.grid1().q_min, -1.5);
        assert_eq!(cfg.grid1().p_max, 8.0);
    }

    #[test]
    fn centered_grid_shifts_by_initial_label() {
        let cfg = parse("[civr]\ngrid1_centered = true\n", &[]).unwrap();
        let g = cfg.grid1();
        assert_eq!((g.q_min, g.p_min, g.p_max), (-3.0, -6.0, 2.0));
    }

    #[test]
    fn scan_values() {
        assert_eq!(ScanConfig { a_min: 0.5, a_max: 2.5, steps: 9 }.values().len(), 9);
        assert_eq!(ScanConfig { a_min: 0.5, a_max: 2.5, steps: 1 }.values(), vec![0.5]);
    }
}
