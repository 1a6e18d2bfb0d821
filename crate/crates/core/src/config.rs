//! Run configuration: a TOML document with `[carreau]`, `[profile]`,
//! `[domain]`, `[numerics]` and `[output]` sections.
//!
//! `[carreau]` and `[profile]` are required. Omitted keys elsewhere take
//! documented defaults, and every default that was applied is recorded in
//! [`RunConfig::defaults_applied`] so the caller can echo it. Unknown keys and
//! keys that do not belong to the selected profile family or force kind are
//! rejected.

use crate::carreau::CarreauParams;
use crate::cell::CellNumerics;
use crate::geometry::{Force, MacroDomain, RoughnessProfile, SampledProfile};
use crate::macroscale::MacroNumerics;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("[{section}] {message}")]
    Invalid { section: &'static str, message: String },
    #[error("bad override '{0}': expected section.key=value")]
    Override(String),
}

/// Flux-table grid settings; `rho_max = None` means "estimate from the domain".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSettings {
    pub m: usize,
    pub n: usize,
    pub rho_max: Option<f64>,
    pub rho_min_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: CarreauParams,
    pub profile: RoughnessProfile,
    pub domain: MacroDomain,
    pub cell: CellNumerics,
    pub table: TableSettings,
    pub macro_numerics: MacroNumerics,
    pub output_dir: PathBuf,
    /// `section.key = value` for every default that was filled in.
    pub defaults_applied: Vec<String>,
}

type Table = toml::map::Map<String, toml::Value>;

/// Parses a configuration; relative paths are resolved against the current directory.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_in(text, Path::new("."), &[])
}

/// Parses a configuration, applying `section.key=value` overrides first.
/// Relative profile files are resolved against `base` (normally the directory
/// of the config file); the output directory stays relative to the caller.
pub fn parse_config_in(text: &str, base: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut doc: Table = text.parse::<Table>().map_err(|e| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    for key in doc.keys() {
        if !["carreau", "profile", "domain", "numerics", "output"].contains(&key.as_str()) {
            return Err(ConfigError::Parse(format!("unknown section [{key}]")));
        }
    }
    let mut defaults = Vec::new();

    let mut carreau = Section::take(&mut doc, "carreau", true)?;
    let params = CarreauParams::new(
        carreau.req_f64("eta0")?,
        carreau.req_f64("eta_inf")?,
        carreau.req_f64("lambda")?,
        carreau.req_f64("r")?,
    )
    .map_err(|e| carreau.invalid(e.to_string()))?;
    carreau.finish()?;

    let mut prof = Section::take(&mut doc, "profile", true)?;
    let family = prof.req_str("family")?;
    let profile = match family.as_str() {
        "constant" => RoughnessProfile::constant(prof.req_f64("h0")?),
        "cosine2d" => RoughnessProfile::cosine2d(prof.req_f64("h0")?, prof.req_f64("a1")?, prof.req_f64("a2")?),
        "layered-smooth" => {
            RoughnessProfile::layered_smooth(prof.req_f64("h0")?, prof.req_f64("a1")?, prof.req_f64("width")?)
        }
        "sampled" => {
            let file = base.join(prof.req_str("file")?);
            let text = std::fs::read_to_string(&file)
                .map_err(|e| prof.invalid(format!("cannot read {}: {e}", file.display())))?;
            SampledProfile::from_csv(&text).map(RoughnessProfile::Sampled)
        }
        other => {
            return Err(prof.invalid(format!(
                "unknown family '{other}' (expected constant, cosine2d, layered-smooth or sampled)"
            )))
        }
    }
    .map_err(|e| prof.invalid(e.to_string()))?;
    prof.finish()?;

    let mut dom = Section::take(&mut doc, "domain", false)?;
    let l1 = dom.f64_or("l1", 1.0, &mut defaults)?;
    let l2 = dom.f64_or("l2", 1.0, &mut defaults)?;
    let n1 = dom.usize_or("n1", 64, &mut defaults)?;
    let n2 = dom.usize_or("n2", 64, &mut defaults)?;
    let kind = dom.str_or("force", "zero", &mut defaults)?;
    let force = match kind.as_str() {
        "zero" => Force::Zero,
        "uniform" => Force::Uniform { f1: dom.f64_or("f1", 0.0, &mut defaults)?, f2: dom.f64_or("f2", 0.0, &mut defaults)? },
        "sine-shear" => Force::SineShear { amplitude: dom.f64_or("amplitude", 1.0, &mut defaults)? },
        "cosine-shear" => Force::CosineShear { amplitude: dom.f64_or("amplitude", 1.0, &mut defaults)? },
        other => {
            return Err(dom.invalid(format!(
                "unknown force '{other}' (expected zero, uniform, sine-shear or cosine-shear)"
            )))
        }
    };
    let domain = MacroDomain::new(l1, l2, n1, n2, force).map_err(|e| dom.invalid(e.to_string()))?;
    dom.finish()?;

    let mut num = Section::take(&mut doc, "numerics", false)?;
    let cd = CellNumerics::default();
    let cell = CellNumerics {
        n: num.usize_or("cell_n", cd.n, &mut defaults)?,
        tol: num.f64_or("cell_tol", cd.tol, &mut defaults)?,
        max_iter: num.usize_or("cell_max_iter", cd.max_iter, &mut defaults)?,
        damping: num.f64_or("cell_damping", cd.damping, &mut defaults)?,
        ..cd
    };
    cell.validate().map_err(|e| num.invalid(e.to_string()))?;
    let table = TableSettings {
        m: num.usize_or("table_m", 24, &mut defaults)?,
        n: num.usize_or("table_n", 16, &mut defaults)?,
        rho_max: num.opt_f64("table_rho_max")?,
        rho_min_ratio: num.f64_or("table_rho_min_ratio", 1e-3, &mut defaults)?,
    };
    if table.m == 0 || table.n == 0 {
        return Err(num.invalid("table_m and table_n must be positive".into()));
    }
    if table.rho_max.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
        return Err(num.invalid("table_rho_max must be positive".into()));
    }
    if !(table.rho_min_ratio > 0.0 && table.rho_min_ratio < 1.0) {
        return Err(num.invalid("table_rho_min_ratio must lie in (0, 1)".into()));
    }
    let md = MacroNumerics::default();
    let macro_numerics = MacroNumerics {
        tol: num.f64_or("macro_tol", md.tol, &mut defaults)?,
        max_iter: num.usize_or("macro_max_iter", md.max_iter, &mut defaults)?,
        damping: num.f64_or("macro_damping", md.damping, &mut defaults)?,
        ..md
    };
    macro_numerics.validate().map_err(|e| num.invalid(e.to_string()))?;
    num.finish()?;

    let mut out = Section::take(&mut doc, "output", false)?;
    let output_dir = PathBuf::from(out.str_or("dir", "rugose-out", &mut defaults)?);
    out.finish()?;

    Ok(RunConfig { params, profile, domain, cell, table, macro_numerics, output_dir, defaults_applied: defaults })
}

/// Applies `section.key=value`; the value is read as a TOML value, falling
/// back to a bare string.
fn apply_override(doc: &mut Table, assignment: &str) -> Result<(), ConfigError> {
    let (path, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let (section, key) = path.trim().split_once('.').ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    if section.is_empty() || key.is_empty() {
        return Err(ConfigError::Override(assignment.to_string()));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let entry = doc.entry(section.to_string()).or_insert_with(|| toml::Value::Table(Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), parsed);
            Ok(())
        }
        _ => Err(ConfigError::Override(assignment.to_string())),
    }
}

struct Section {
    name: &'static str,
    table: Table,
}

impl Section {
    fn take(doc: &mut Table, name: &'static str, required: bool) -> Result<Self, ConfigError> {
        match doc.remove(name) {
            Some(toml::Value::Table(table)) => Ok(Self { name, table }),
            Some(_) => Err(ConfigError::Parse(format!("'{name}' must be a section"))),
            None if required => Err(ConfigError::Invalid { section: name, message: "section is required".into() }),
            None => Ok(Self { name, table: Table::new() }),
        }
    }

    fn invalid(&self, message: String) -> ConfigError {
        ConfigError::Invalid { section: self.name, message }
    }

    fn number(&self, key: &str, v: toml::Value) -> Result<f64, ConfigError> {
        match v {
            toml::Value::Float(x) => Ok(x),
            toml::Value::Integer(i) => Ok(i as f64),
            other => Err(self.invalid(format!("{key} must be a number, got {other}"))),
        }
    }

    fn req_f64(&mut self, key: &str) -> Result<f64, ConfigError> {
        let v = self.table.remove(key).ok_or_else(|| self.invalid(format!("missing key '{key}'")))?;
        self.number(key, v)
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.table.remove(key).map(|v| self.number(key, v)).transpose()
    }

    fn f64_or(&mut self, key: &str, default: f64, log: &mut Vec<String>) -> Result<f64, ConfigError> {
        match self.opt_f64(key)? {
            Some(v) => Ok(v),
            None => {
                log.push(format!("{}.{key} = {default:?}", self.name));
                Ok(default)
            }
        }
    }

    fn usize_or(&mut self, key: &str, default: usize, log: &mut Vec<String>) -> Result<usize, ConfigError> {
        match self.table.remove(key) {
            Some(toml::Value::Integer(i)) if i >= 0 => Ok(i as usize),
            Some(other) => Err(self.invalid(format!("{key} must be a non-negative integer, got {other}"))),
            None => {
                log.push(format!("{}.{key} = {default}", self.name));
                Ok(default)
            }
        }
    }

    fn req_str(&mut self, key: &str) -> Result<String, ConfigError> {
        match self.table.remove(key) {
            Some(toml::Value::String(s)) => Ok(s),
            Some(other) => Err(self.invalid(format!("{key} must be a string, got {other}"))),
            None => Err(self.invalid(format!("missing key '{key}'"))),
        }
    }

    fn str_or(&mut self, key: &str, default: &str, log: &mut Vec<String>) -> Result<String, ConfigError> {
        if self.table.contains_key(key) {
            return self.req_str(key);
        }
        log.push(format!("{}.{key} = \"{default}\"", self.name));
        Ok(default.to_string())
    }

    /// Rejects whatever keys were not consumed.
    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().next() {
            Some(k) => Err(self.invalid(format!("unknown or inapplicable key '{k}'"))),
            None => Ok(()),
        }
    }
}
