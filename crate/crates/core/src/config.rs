//! Run configuration: a flat `key = value` document.
//!
//! ```text
//! # comment
//! [pulse]                 # section header, prefixes following keys
//! duration = 5 fs         # optional unit suffix, checked against the key
//! cep = pi/2              # products and quotients of numbers and `pi`
//! grid.gamma_count = 60   # dotted keys work anywhere
//! ```
//!
//! Unknown keys, malformed values, out-of-range values and unit mismatches are
//! rejected with the line and column of the offending text. Lists are comma
//! separated. [`RunConfig::to_document`] writes the fully resolved
//! configuration back in the same grammar.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::constants::angular_frequency;
use crate::error::{Error, Result};
use crate::model::{DriveParams, MaterialSpec, RegimeThresholds};
use crate::observables::KWindowPolicy;
use crate::propagator::DEFAULT_TOL;
use crate::sweep::{Axis, GridSpec, MapKind, PulseTemplate};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "LZS_WORKERS";

const UNITS: &[&str] = &["V/nm", "nm/fs", "fs^2", "fs^3", "fs2", "fs3", "1/nm", "rad", "eV", "fs"];

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialConfig {
    /// eV; derived from M when absent.
    pub gap: Option<f64>,
    /// nm/fs.
    pub fermi_velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseConfig {
    /// eV.
    pub photon_energy: f64,
    /// V/nm; derived from γ when absent.
    pub peak_field: Option<f64>,
    /// fs.
    pub duration: f64,
    pub cep: f64,
    /// fs².
    pub gdd: f64,
    /// fs³.
    pub tod: f64,
}

/// Single working point for `trace` and `regimes`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    pub gamma: Option<f64>,
    pub m_photon: Option<f64>,
    /// 1/nm.
    pub k0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// None picks the command default (120 for population maps, 60 for
    /// current maps).
    pub gamma_count: Option<usize>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub m_count: Option<usize>,
    pub m_min: f64,
    pub m_max: f64,
    pub k_policy: KWindowPolicy,
    /// Iso-field lines from `iso_min` to `iso_max` in steps of `iso_step`, V/nm.
    pub iso_min: f64,
    pub iso_max: f64,
    pub iso_step: f64,
    pub iso_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceConfig {
    pub max_order: u32,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LzConfig {
    pub deltas: Vec<f64>,
    /// Relative tolerance against the asymptotic formula.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// None defers to the environment, then to the core count.
    pub workers: Option<usize>,
    pub tolerance: f64,
    /// Write `checkpoint.bin` next to the map output.
    pub checkpoint: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<String>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub material: MaterialConfig,
    pub pulse: PulseConfig,
    pub point: PointConfig,
    /// fs; None disables dephasing.
    pub t2: Option<f64>,
    pub grid: GridConfig,
    pub thresholds: RegimeThresholds,
    pub resonance: ResonanceConfig,
    pub lz: LzConfig,
    pub engine: EngineConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let k = KWindowPolicy::default();
        RunConfig {
            material: MaterialConfig {
                gap: None,
                fermi_velocity: 1.0,
            },
            pulse: PulseConfig {
                photon_energy: 1.55,
                peak_field: None,
                duration: 5.0,
                cep: PI / 2.0,
                gdd: 0.0,
                tod: 0.0,
            },
            point: PointConfig {
                gamma: None,
                m_photon: None,
                k0: 0.0,
            },
            t2: None,
            grid: GridConfig {
                gamma_count: None,
                gamma_min: 0.1,
                gamma_max: 10.0,
                m_count: None,
                m_min: 0.2,
                m_max: 3.2,
                k_policy: k,
                iso_min: 1.0,
                iso_max: 20.0,
                iso_step: 0.25,
                iso_samples: 8,
            },
            thresholds: RegimeThresholds::default(),
            resonance: ResonanceConfig {
                max_order: 5,
                gamma_min: 0.1,
                gamma_max: 10.0,
                gamma_count: 200,
            },
            lz: LzConfig {
                deltas: vec![0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0],
                tolerance: 0.02,
            },
            engine: EngineConfig {
                workers: None,
                tolerance: DEFAULT_TOL,
                checkpoint: true,
            },
            output: OutputConfig {
                directory: "out".into(),
                formats: vec!["csv".into()],
            },
        }
    }
}

/// Where a value came from, for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

fn err(pos: Pos, message: impl Into<String>) -> Error {
    Error::Config {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

/// Parses a document, applying defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

/// Parses a document followed by `key=value` overrides. Errors in an
/// override report line 0 and the column inside that override.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: BTreeMap<String, Pos> = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = strip_comment(raw);
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        let col = raw[..indent].chars().count() + 1;
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(Pos { line, column: col }, "unterminated section header"))?
                .trim();
            if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(Pos { line, column: col + 1 }, format!("invalid section name `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value, key_col, value_col) = split_entry(body, Pos { line, column: 1 })?;
        let full = if section.is_empty() || key.contains('.') {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        assign(&mut cfg, &full, value, Pos { line, column: key_col }, Pos { line, column: value_col })?;
        seen.insert(full, Pos { line, column: key_col });
    }
    for o in overrides {
        let (key, value, key_col, value_col) = split_entry(o, Pos { line: 0, column: 1 })
            .map_err(|e| with_prefix(e, "--set"))?;
        assign(&mut cfg, key, value, Pos { line: 0, column: key_col }, Pos { line: 0, column: value_col })
            .map_err(|e| with_prefix(e, "--set"))?;
        seen.insert(key.to_string(), Pos { line: 0, column: key_col });
    }
    cross_check(&cfg, &seen)?;
    Ok(cfg)
}

fn with_prefix(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { line, column, message } => Error::Config {
            line,
            column,
            message: format!("{prefix}: {message}"),
        },
        other => other,
    }
}

fn strip_comment(raw: &str) -> &str {
    match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    }
}

// Splits `key = value`, returning 1-based character columns.
fn split_entry(body: &str, at: Pos) -> Result<(&str, &str, usize, usize)> {
    let eq = body
        .find('=')
        .ok_or_else(|| err(at, format!("expected `key = value`, got `{}`", body.trim())))?;
    let (k, v) = (&body[..eq], &body[eq + 1..]);
    let key = k.trim();
    let key_col = body[..k.len() - k.trim_start().len()].chars().count() + 1;
    let value = v.trim();
    let value_col = body[..eq + 1 + (v.len() - v.trim_start().len())].chars().count() + 1;
    if key.is_empty() {
        return Err(err(Pos { line: at.line, column: key_col }, "missing key"));
    }
    if value.is_empty() {
        return Err(err(Pos { line: at.line, column: value_col }, format!("missing value for `{key}`")));
    }
    Ok((key, value, key_col, value_col))
}

/// Evaluates `a*b/c` where each factor is a number, `pi`, or a number
/// immediately followed by `pi`, with an optional unit suffix.
fn quantity(text: &str, unit: Option<&str>, pos: Pos) -> Result<f64> {
    let mut expr = text.trim();
    let mut found_unit = None;
    for u in UNITS {
        if let Some(head) = expr.strip_suffix(u) {
            // `5fs` or `5 fs`, but not the `pi` in an expression
            if head.is_empty() || head.ends_with(|c: char| c.is_ascii_digit() || c == ' ' || c == '.') {
                found_unit = Some(*u);
                expr = head.trim_end();
                break;
            }
        }
    }
    if let Some(u) = found_unit {
        let normal = |s: &str| s.replace('^', "");
        match unit {
            Some(want) if normal(want) == normal(u) => {}
            Some(want) => return Err(err(pos, format!("unit mismatch: expected {want}, got {u}"))),
            None => return Err(err(pos, format!("value is dimensionless, got unit {u}"))),
        }
    }
    if expr.is_empty() {
        return Err(err(pos, "missing number"));
    }
    match expr {
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (sign, body) = match expr.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, expr.strip_prefix('+').unwrap_or(expr)),
    };
    let mut value = sign;
    let mut op = '*';
    let mut rest = body;
    loop {
        let end = rest.find(['*', '/']).unwrap_or(rest.len());
        let factor = rest[..end].trim();
        let f = if factor == "pi" {
            PI
        } else if let Some(num) = factor.strip_suffix("pi") {
            num.trim().parse::<f64>().map_err(|_| err(pos, format!("cannot parse `{text}` as a number")))? * PI
        } else {
            factor.parse::<f64>().map_err(|_| err(pos, format!("cannot parse `{text}` as a number")))?
        };
        value = if op == '*' { value * f } else { value / f };
        if end == rest.len() {
            break;
        }
        op = rest[end..].chars().next().unwrap();
        rest = &rest[end + 1..];
    }
    if value.is_nan() {
        return Err(err(pos, format!("`{text}` is not a number")));
    }
    Ok(value)
}

fn positive(v: f64, pos: Pos, key: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(err(pos, format!("`{key}` must be finite and > 0, got {v}")))
    }
}

fn finite(v: f64, pos: Pos, key: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(pos, format!("`{key}` must be finite, got {v}")))
    }
}

fn count(text: &str, pos: Pos, key: &str, min: usize) -> Result<usize> {
    let n: usize = text
        .parse()
        .map_err(|_| err(pos, format!("`{key}` must be a non-negative integer, got `{text}`")))?;
    if n < min {
        return Err(err(pos, format!("`{key}` must be ≥ {min}, got {n}")));
    }
    Ok(n)
}

fn auto_or<T>(text: &str, parse: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if text == "auto" {
        Ok(None)
    } else {
        parse(text).map(Some)
    }
}

fn flag(text: &str, pos: Pos, key: &str) -> Result<bool> {
    match text {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(err(pos, format!("`{key}` must be true or false, got `{text}`"))),
    }
}

fn assign(cfg: &mut RunConfig, key: &str, v: &str, kpos: Pos, vpos: Pos) -> Result<()> {
    let q = |unit: Option<&str>| quantity(v, unit, vpos);
    let k = &mut cfg.grid.k_policy;
    match key {
        "material.gap" => {
            cfg.material.gap = auto_or(v, |_| {
                let g = q(Some("eV"))?;
                if !(g.is_finite() && g >= 0.0) {
                    return Err(err(vpos, format!("`{key}` must be finite and ≥ 0, got {g}")));
                }
                Ok(g)
            })?
        }
        "material.fermi_velocity" => cfg.material.fermi_velocity = positive(q(Some("nm/fs"))?, vpos, key)?,
        "pulse.photon_energy" => cfg.pulse.photon_energy = positive(q(Some("eV"))?, vpos, key)?,
        "pulse.peak_field" => cfg.pulse.peak_field = auto_or(v, |_| positive(q(Some("V/nm"))?, vpos, key))?,
        "pulse.duration" => cfg.pulse.duration = positive(q(Some("fs"))?, vpos, key)?,
        "pulse.cep" => cfg.pulse.cep = finite(q(Some("rad"))?, vpos, key)?,
        "pulse.gdd" => cfg.pulse.gdd = finite(q(Some("fs^2"))?, vpos, key)?,
        "pulse.tod" => cfg.pulse.tod = finite(q(Some("fs^3"))?, vpos, key)?,
        "gamma" | "point.gamma" => cfg.point.gamma = auto_or(v, |_| positive(q(None)?, vpos, key))?,
        "M" | "point.M" => cfg.point.m_photon = auto_or(v, |_| positive(q(None)?, vpos, key))?,
        "k0" | "point.k0" => cfg.point.k0 = finite(q(Some("1/nm"))?, vpos, key)?,
        "dephasing.t2" => {
            cfg.t2 = match v {
                "off" | "inf" => None,
                _ => Some(positive(q(Some("fs"))?, vpos, key)?),
            }
        }
        "grid.gamma_count" => cfg.grid.gamma_count = auto_or(v, |t| count(t, vpos, key, 1))?,
        "grid.gamma_min" => cfg.grid.gamma_min = positive(q(None)?, vpos, key)?,
        "grid.gamma_max" => cfg.grid.gamma_max = positive(q(None)?, vpos, key)?,
        "grid.m_count" => cfg.grid.m_count = auto_or(v, |t| count(t, vpos, key, 1))?,
        "grid.m_min" => cfg.grid.m_min = positive(q(None)?, vpos, key)?,
        "grid.m_max" => cfg.grid.m_max = positive(q(None)?, vpos, key)?,
        "grid.k_scale" => k.scale = finite(q(None)?, vpos, key)?,
        "grid.k_margin" => k.margin = finite(q(Some("1/nm"))?, vpos, key)?,
        "grid.k_points" => {
            let n = count(v, vpos, key, 3)?;
            if n % 2 == 0 {
                return Err(err(vpos, format!("`{key}` must be odd, got {n}")));
            }
            k.points = n;
        }
        "grid.k_extension" => k.extension_factor = finite(q(None)?, vpos, key)?,
        "grid.k_max_extensions" => k.max_extensions = count(v, vpos, key, 0)?,
        "grid.k_refine_tolerance" => k.refine_tolerance = positive(q(None)?, vpos, key)?,
        "grid.k_max_refinements" => k.max_refinements = count(v, vpos, key, 0)?,
        "grid.k_zero_floor" => k.zero_floor = finite(q(None)?, vpos, key)?,
        "grid.iso_min" => cfg.grid.iso_min = positive(q(Some("V/nm"))?, vpos, key)?,
        "grid.iso_max" => cfg.grid.iso_max = positive(q(Some("V/nm"))?, vpos, key)?,
        "grid.iso_step" => cfg.grid.iso_step = positive(q(Some("V/nm"))?, vpos, key)?,
        "grid.iso_samples" => cfg.grid.iso_samples = count(v, vpos, key, 1)?,
        "thresholds.gamma_boundary" => cfg.thresholds.gamma_boundary = positive(q(None)?, vpos, key)?,
        "thresholds.z_r_boundary" => cfg.thresholds.z_r_boundary = positive(q(None)?, vpos, key)?,
        "thresholds.p_hi" => cfg.thresholds.p_hi = finite(q(None)?, vpos, key)?,
        "thresholds.p_lo" => cfg.thresholds.p_lo = finite(q(None)?, vpos, key)?,
        "thresholds.relativistic_gamma" => cfg.thresholds.relativistic_gamma = finite(q(None)?, vpos, key)?,
        "resonance.max_order" => cfg.resonance.max_order = count(v, vpos, key, 1)? as u32,
        "resonance.gamma_min" => cfg.resonance.gamma_min = positive(q(None)?, vpos, key)?,
        "resonance.gamma_max" => cfg.resonance.gamma_max = positive(q(None)?, vpos, key)?,
        "resonance.gamma_count" => cfg.resonance.gamma_count = count(v, vpos, key, 1)?,
        "lz.deltas" => {
            let mut out = Vec::new();
            for part in v.split(',') {
                out.push(positive(quantity(part, None, vpos)?, vpos, key)?);
            }
            cfg.lz.deltas = out;
        }
        "lz.tolerance" => cfg.lz.tolerance = positive(q(None)?, vpos, key)?,
        "engine.workers" => cfg.engine.workers = auto_or(v, |t| count(t, vpos, key, 1))?,
        "engine.tolerance" => {
            let t = positive(q(None)?, vpos, key)?;
            if t >= 1.0 {
                return Err(err(vpos, format!("`{key}` must be < 1, got {t}")));
            }
            cfg.engine.tolerance = t;
        }
        "engine.checkpoint" => cfg.engine.checkpoint = flag(v, vpos, key)?,
        "output.directory" => cfg.output.directory = v.to_string(),
        "output.formats" => {
            let formats: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
            if let Some(bad) = formats.iter().find(|f| f.as_str() != "csv") {
                return Err(err(vpos, format!("unsupported output format `{bad}` (only csv)")));
            }
            cfg.output.formats = formats;
        }
        _ => return Err(err(kpos, format!("unknown key `{key}`"))),
    }
    Ok(())
}

fn cross_check(cfg: &RunConfig, seen: &BTreeMap<String, Pos>) -> Result<()> {
    let at = |keys: &[&str]| {
        keys.iter()
            .filter_map(|k| seen.get(*k).copied())
            .max_by_key(|p| (p.line == 0, p.line, p.column))
            .unwrap_or(Pos { line: 0, column: 0 })
    };
    let g = &cfg.grid;
    if g.gamma_max < g.gamma_min {
        return Err(err(at(&["grid.gamma_min", "grid.gamma_max"]), "grid.gamma_max must be ≥ grid.gamma_min"));
    }
    if g.m_max < g.m_min {
        return Err(err(at(&["grid.m_min", "grid.m_max"]), "grid.m_max must be ≥ grid.m_min"));
    }
    if g.iso_max < g.iso_min {
        return Err(err(at(&["grid.iso_min", "grid.iso_max"]), "grid.iso_max must be ≥ grid.iso_min"));
    }
    if let Err(e) = g.k_policy.validate() {
        return Err(err(at(&["grid.k_scale", "grid.k_margin", "grid.k_extension"]), e.to_string()));
    }
    let t = &cfg.thresholds;
    if !(0.0 <= t.p_lo && t.p_lo < t.p_hi && t.p_hi <= 1.0) {
        return Err(err(
            at(&["thresholds.p_lo", "thresholds.p_hi"]),
            "thresholds need 0 ≤ p_lo < p_hi ≤ 1",
        ));
    }
    let r = &cfg.resonance;
    if r.gamma_max < r.gamma_min {
        return Err(err(at(&["resonance.gamma_min", "resonance.gamma_max"]), "resonance.gamma_max must be ≥ resonance.gamma_min"));
    }
    if cfg.material.gap.is_some() && cfg.point.m_photon.is_some() {
        return Err(err(at(&["material.gap", "M", "point.M"]), "set either material.gap or M, not both"));
    }
    if cfg.pulse.peak_field.is_some() && cfg.point.gamma.is_some() {
        return Err(err(at(&["pulse.peak_field", "gamma", "point.gamma"]), "set either pulse.peak_field or gamma, not both"));
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or("auto".into(), |x| x.to_string())
}

fn opt_num(v: &Option<f64>) -> String {
    v.map_or("auto".into(), num)
}

impl RunConfig {
    /// Writes every key, defaults included, so that parsing the result
    /// reproduces this configuration exactly.
    pub fn to_document(&self) -> String {
        let mut s = String::new();
        let mut w = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        w("material.gap", opt_num(&self.material.gap));
        w("material.fermi_velocity", num(self.material.fermi_velocity));
        w("pulse.photon_energy", num(self.pulse.photon_energy));
        w("pulse.peak_field", opt_num(&self.pulse.peak_field));
        w("pulse.duration", num(self.pulse.duration));
        w("pulse.cep", num(self.pulse.cep));
        w("pulse.gdd", num(self.pulse.gdd));
        w("pulse.tod", num(self.pulse.tod));
        w("point.gamma", opt_num(&self.point.gamma));
        w("point.M", opt_num(&self.point.m_photon));
        w("point.k0", num(self.point.k0));
        w("dephasing.t2", self.t2.map_or("off".into(), num));
        let g = &self.grid;
        w("grid.gamma_count", opt(&g.gamma_count));
        w("grid.gamma_min", num(g.gamma_min));
        w("grid.gamma_max", num(g.gamma_max));
        w("grid.m_count", opt(&g.m_count));
        w("grid.m_min", num(g.m_min));
        w("grid.m_max", num(g.m_max));
        w("grid.k_scale", num(g.k_policy.scale));
        w("grid.k_margin", num(g.k_policy.margin));
        w("grid.k_points", g.k_policy.points.to_string());
        w("grid.k_extension", num(g.k_policy.extension_factor));
        w("grid.k_max_extensions", g.k_policy.max_extensions.to_string());
        w("grid.k_refine_tolerance", num(g.k_policy.refine_tolerance));
        w("grid.k_max_refinements", g.k_policy.max_refinements.to_string());
        w("grid.k_zero_floor", num(g.k_policy.zero_floor));
        w("grid.iso_min", num(g.iso_min));
        w("grid.iso_max", num(g.iso_max));
        w("grid.iso_step", num(g.iso_step));
        w("grid.iso_samples", g.iso_samples.to_string());
        let t = &self.thresholds;
        w("thresholds.gamma_boundary", num(t.gamma_boundary));
        w("thresholds.z_r_boundary", num(t.z_r_boundary));
        w("thresholds.p_hi", num(t.p_hi));
        w("thresholds.p_lo", num(t.p_lo));
        w("thresholds.relativistic_gamma", num(t.relativistic_gamma));
        w("resonance.max_order", self.resonance.max_order.to_string());
        w("resonance.gamma_min", num(self.resonance.gamma_min));
        w("resonance.gamma_max", num(self.resonance.gamma_max));
        w("resonance.gamma_count", self.resonance.gamma_count.to_string());
        w(
            "lz.deltas",
            self.lz.deltas.iter().map(|d| num(*d)).collect::<Vec<_>>().join(", "),
        );
        w("lz.tolerance", num(self.lz.tolerance));
        w("engine.workers", opt(&self.engine.workers));
        w("engine.tolerance", num(self.engine.tolerance));
        w("engine.checkpoint", self.engine.checkpoint.to_string());
        w("output.directory", self.output.directory.clone());
        w("output.formats", self.output.formats.join(", "));
        s
    }

    /// Material and drive of the single working point. Δ comes from
    /// `material.gap` or `M·ħω`; E0 from `pulse.peak_field` or γ.
    pub fn working_point(&self) -> Result<(MaterialSpec, DriveParams)> {
        let hw = self.pulse.photon_energy;
        let vf = self.material.fermi_velocity;
        let gap = match (self.material.gap, self.point.m_photon) {
            (Some(g), _) => g,
            (None, Some(m)) => m * hw,
            (None, None) => {
                return Err(crate::error::invalid("working point", "set M or material.gap"));
            }
        };
        let field = match (self.pulse.peak_field, self.point.gamma) {
            (Some(e0), _) => e0,
            (None, Some(gamma)) => {
                if gap == 0.0 {
                    return Err(crate::error::invalid("working point", "γ cannot fix E0 for a gapless band"));
                }
                angular_frequency(hw) * gap / (2.0 * vf * crate::constants::ELEMENTARY_CHARGE * gamma)
            }
            (None, None) => {
                return Err(crate::error::invalid("working point", "set gamma or pulse.peak_field"));
            }
        };
        Ok((MaterialSpec::new(gap, vf)?, DriveParams::new(hw, field)?))
    }

    /// Map definition for a sweep; unset counts take `default_count`.
    pub fn grid_spec(&self, default_count: usize) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            gamma_axis: Axis::logarithmic(g.gamma_count.unwrap_or(default_count), g.gamma_min, g.gamma_max),
            m_axis: Axis::linear(g.m_count.unwrap_or(default_count), g.m_min, g.m_max),
            photon_energy: self.pulse.photon_energy,
            fermi_velocity: self.material.fermi_velocity,
            pulse: PulseTemplate {
                duration: self.pulse.duration,
                cep: self.pulse.cep,
                gdd: self.pulse.gdd,
                tod: self.pulse.tod,
            },
            k_policy: g.k_policy,
            thresholds: self.thresholds,
            tol: self.engine.tolerance,
        }
    }

    /// Default map size per kind.
    pub fn default_count(kind: MapKind) -> usize {
        match kind {
            MapKind::Population => 120,
            MapKind::Current => 60,
        }
    }

    /// Iso-field values `iso_min, iso_min + step, …, ≤ iso_max`.
    pub fn iso_fields(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = ((g.iso_max - g.iso_min) / g.iso_step + 1e-9).floor() as usize;
        (0..=n).map(|i| g.iso_min + i as f64 * g.iso_step).collect()
    }

    /// Worker count: explicit setting, else the environment, else all cores
    /// (0).
    pub fn workers(&self) -> Result<usize> {
        if let Some(w) = self.engine.workers {
            return Ok(w);
        }
        workers_from_env()
    }
}

/// Reads [`WORKERS_ENV`]; 0 when unset.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| Error::Config {
            line: 0,
            column: 0,
            message: format!("{WORKERS_ENV} must be a non-negative integer, got `{v}`"),
        }),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(e: Error) -> (usize, usize, String) {
        match e {
            Error::Config { line, column, message } => (line, column, message),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pulse.duration, 5.0);
        assert_eq!(cfg.pulse.cep, PI / 2.0);
        assert_eq!(cfg.pulse.photon_energy, 1.55);
        assert_eq!(cfg.material.fermi_velocity, 1.0);
    }

    #[test]
    fn symbolic_and_unit_values() {
        let cfg = parse_config("pulse.cep = pi/2\n[pulse]\nduration = 7.5 fs\ngdd = 180.8fs^2\ntod=137.3 fs3\n").unwrap();
        assert!((cfg.pulse.cep - 1.570_796_3).abs() < 1e-7);
        assert_eq!(cfg.pulse.duration, 7.5);
        assert_eq!(cfg.pulse.gdd, 180.8);
        assert_eq!(cfg.pulse.tod, 137.3);
        let cfg = parse_config("pulse.cep = 3*pi/4  # trailing comment\npulse.peak_field = 2 V/nm").unwrap();
        assert!((cfg.pulse.cep - 0.75 * PI).abs() < 1e-15);
        assert_eq!(cfg.pulse.peak_field, Some(2.0));
        let cfg = parse_config("pulse.cep = -2pi").unwrap();
        assert!((cfg.pulse.cep + 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_position() {
        let (line, col, msg) = at(parse_config("\n# x\npulse.duration = -5").unwrap_err());
        assert_eq!((line, col), (3, 18));
        assert!(msg.contains("pulse.duration"), "{msg}");

        let (line, col, msg) = at(parse_config("[pulse]\n  durration = 5").unwrap_err());
        assert_eq!((line, col), (2, 3));
        assert!(msg.contains("unknown key `pulse.durration`"), "{msg}");

        let (_, _, msg) = at(parse_config("pulse.duration = 5 eV").unwrap_err());
        assert!(msg.contains("unit mismatch"), "{msg}");

        let (_, _, msg) = at(parse_config("gamma = 0.2 fs").unwrap_err());
        assert!(msg.contains("dimensionless"), "{msg}");

        let (line, _, _) = at(parse_config("pulse.cep = pie").unwrap_err());
        assert_eq!(line, 1);
        assert!(parse_config("[pulse\nduration = 5").is_err());
        assert!(parse_config("no equals sign").is_err());
        assert!(parse_config("grid.k_points = 256").is_err());
    }

    #[test]
    fn conflicting_working_point_is_rejected() {
        let (line, _, msg) = at(parse_config("M = 1\nmaterial.gap = 1.55").unwrap_err());
        assert_eq!(line, 2);
        assert!(msg.contains("not both"), "{msg}");
        assert!(parse_config("grid.m_min = 3\ngrid.m_max = 1").is_err());
        assert!(parse_config("thresholds.p_lo = 0.95").is_err());
    }

    #[test]
    fn overrides_apply_last() {
        let cfg = parse_config_with("gamma = 1", &["gamma=0.2".into(), "M = 2.2".into()]).unwrap();
        assert_eq!(cfg.point.gamma, Some(0.2));
        assert_eq!(cfg.point.m_photon, Some(2.2));
        let (line, _, msg) = at(parse_config_with("", &["bogus=1".into()]).unwrap_err());
        assert_eq!(line, 0);
        assert!(msg.starts_with("--set"), "{msg}");
    }

    #[test]
    fn resolved_document_round_trips() {
        let mut cfg = parse_config(
            "gamma = 0.2\nM = 2.2\ndephasing.t2 = 3 fs\nlz.deltas = 0.1, 1\ngrid.gamma_count = 7\npulse.cep = pi/3\n",
        )
        .unwrap();
        cfg.engine.workers = Some(3);
        cfg.thresholds.p_hi = 0.1 + 0.2 + 0.5;
        let again = parse_config(&cfg.to_document()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(parse_config(&RunConfig::default().to_document()).unwrap(), RunConfig::default());
    }

    #[test]
    fn working_point_from_dimensionless_values() {
        let cfg = parse_config("gamma = 0.2\nM = 2.2").unwrap();
        let (mat, drive) = cfg.working_point().unwrap();
        let r = crate::compute_report(&mat, &drive).unwrap();
        assert!((r.gamma - 0.2).abs() < 1e-12 && (r.m_photon - 2.2).abs() < 1e-12);
        let cfg = parse_config("material.gap = 1.55\npulse.peak_field = 1").unwrap();
        let (mat, drive) = cfg.working_point().unwrap();
        assert_eq!((mat.gap, drive.peak_field), (1.55, 1.0));
        assert!(parse_config("").unwrap().working_point().is_err());
    }

    #[test]
    fn iso_fields_cover_the_range() {
        let cfg = RunConfig::default();
        let e = cfg.iso_fields();
        assert_eq!(e.first(), Some(&1.0));
        assert!((e.last().unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(e.len(), 77);
    }
}
