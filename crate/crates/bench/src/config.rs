//! Run configuration: a plain `key = value` file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use stiffexp::integrators::{Family, SchemeSpec};
use stiffexp::ionic::{BeelerReuter, BeelerReuterParams, StimulusProfile, DEFAULT_HORIZON};
use stiffexp::newton::NewtonConfig;
use stiffexp::TimeMesh;
use thiserror::Error;

/// Step sizes of the standard study (ms).
pub const DEFAULT_STEPS: [f64; 6] = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625];

pub const DEFAULT_REFINEMENT: u32 = 8;
pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    fn value(key: &str, value: &str, reason: impl ToString) -> Self {
        ConfigError::Value { key: key.into(), value: value.into(), reason: reason.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    BeelerReuter,
}

impl ModelId {
    pub fn name(self) -> &'static str {
        match self {
            ModelId::BeelerReuter => "beeler-reuter",
        }
    }
}

/// Everything a command needs to know.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelId,
    pub horizon: f64,
    /// Family named by `scheme`; an order in the same string wins over `order`.
    pub scheme: Option<String>,
    pub order: Option<usize>,
    pub m: Option<usize>,
    pub h: Option<f64>,
    pub refinement: u32,
    pub stimulus: StimulusProfile,
    pub params: BeelerReuterParams,
    pub newton: NewtonConfig,
    pub out: Option<PathBuf>,
    pub plot_dir: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub repeats: usize,
    pub expectations: Option<PathBuf>,
    pub schemes: Vec<SchemeSpec>,
    pub steps: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelId::BeelerReuter,
            horizon: DEFAULT_HORIZON,
            scheme: None,
            order: None,
            m: None,
            h: None,
            refinement: DEFAULT_REFINEMENT,
            stimulus: StimulusProfile::default(),
            params: BeelerReuterParams::default(),
            newton: NewtonConfig::default(),
            out: None,
            plot_dir: None,
            cache_dir: PathBuf::from("stiffexp-cache"),
            repeats: DEFAULT_REPEATS,
            expectations: None,
            schemes: SchemeSpec::catalogue(),
            steps: DEFAULT_STEPS.to_vec(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::value(key, value, e))
}

fn parse_list<T, F>(key: &str, value: &str, f: F) -> Result<Vec<T>, ConfigError>
where
    F: Fn(&str) -> Result<T, ConfigError>,
{
    let items: Vec<T> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::value(key, value, "empty list"));
    }
    Ok(items)
}

/// Parses a comma-separated scheme list; `all` is the full catalogue.
pub fn parse_schemes(value: &str) -> Result<Vec<SchemeSpec>, ConfigError> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(SchemeSpec::catalogue());
    }
    parse_list("schemes", value, |s| s.parse::<SchemeSpec>().map_err(|e| ConfigError::value("schemes", s, e)))
}

pub fn parse_steps(value: &str) -> Result<Vec<f64>, ConfigError> {
    parse_list("steps", value, |s| parse_num("steps", s))
}

impl RunConfig {
    /// Reads a configuration file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { path: origin.into(), line: no + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key. Keys are the long flag names without dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let opt_path = |v: &str| Some(PathBuf::from(v));
        match key {
            "model" => match value.to_ascii_lowercase().as_str() {
                "beeler-reuter" | "br" => self.model = ModelId::BeelerReuter,
                _ => return Err(ConfigError::value(key, value, "only beeler-reuter is available")),
            },
            "T" | "horizon" => self.horizon = parse_num(key, value)?,
            "scheme" => self.scheme = Some(value.to_string()),
            "order" => self.order = Some(parse_num(key, value)?),
            "m" => {
                self.m = Some(parse_num(key, value)?);
                self.h = None;
            }
            "h" => {
                self.h = Some(parse_num(key, value)?);
                self.m = None;
            }
            "r" => self.refinement = parse_num(key, value)?,
            "out" => self.out = opt_path(value),
            "plot_dir" => self.plot_dir = opt_path(value),
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            "repeats" => self.repeats = parse_num(key, value)?,
            "expectations" => self.expectations = opt_path(value),
            "schemes" => self.schemes = parse_schemes(value)?,
            "steps" => self.steps = parse_steps(value)?,
            "stim_center" => self.stimulus.center = parse_num(key, value)?,
            "stim_half_width" => self.stimulus.half_width = parse_num(key, value)?,
            "stim_charge" => self.stimulus.total_charge = parse_num(key, value)?,
            "stim_smoothness" => self.stimulus.smoothness = parse_num(key, value)?,
            "g_na" => self.params.g_na = parse_num(key, value)?,
            "g_nac" => self.params.g_nac = parse_num(key, value)?,
            "e_na" => self.params.e_na = parse_num(key, value)?,
            "g_s" => self.params.g_s = parse_num(key, value)?,
            "c_m" => self.params.c_m = parse_num(key, value)?,
            "newton_rel_tol" => self.newton.rel_tol = parse_num(key, value)?,
            "newton_abs_tol" => self.newton.abs_tol = parse_num(key, value)?,
            "newton_max_iter" => self.newton.max_iter = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ConfigError::Invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.stimulus.half_width > 0.0 && self.stimulus.total_charge >= 0.0) {
            return Err(ConfigError::Invalid("stimulus needs a positive width and a nonnegative charge".into()));
        }
        if self.params.c_m <= 0.0 {
            return Err(ConfigError::Invalid("membrane capacitance must be positive".into()));
        }
        self.newton.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for &h in &self.steps {
            self.steps_for(h)?;
        }
        Ok(())
    }

    pub fn model(&self) -> BeelerReuter {
        match self.model {
            ModelId::BeelerReuter => BeelerReuter::new(self.params, self.stimulus, self.horizon),
        }
    }

    /// `m = T/h`, checked to be an integer multiple of 3.
    pub fn steps_for(&self, h: f64) -> Result<usize, ConfigError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(ConfigError::Invalid(format!("step size must be positive, got {h}")));
        }
        let ratio = self.horizon / h;
        let m = ratio.round();
        if (ratio - m).abs() > 1e-9 * ratio {
            return Err(ConfigError::Invalid(format!("T = {} is not a whole number of steps h = {h}", self.horizon)));
        }
        check_steps(m as usize)
    }

    /// Step count of a single run from `m` or `h`.
    pub fn resolve_steps(&self) -> Result<usize, ConfigError> {
        match (self.m, self.h) {
            (Some(m), _) => check_steps(m),
            (None, Some(h)) => self.steps_for(h),
            (None, None) => Err(ConfigError::Invalid("set either h or m".into())),
        }
    }

    pub fn mesh(&self) -> Result<TimeMesh, ConfigError> {
        Ok(TimeMesh::new(self.horizon, self.resolve_steps()?))
    }

    /// The scheme of a single run.
    pub fn resolve_scheme(&self) -> Result<SchemeSpec, ConfigError> {
        let name = self.scheme.as_deref().ok_or_else(|| ConfigError::Invalid("no scheme given".into()))?;
        let spec = if let Ok(spec) = name.parse::<SchemeSpec>() {
            if let Some(order) = self.order {
                if order != spec.order() {
                    return Err(ConfigError::value("order", &order.to_string(), format!("conflicts with scheme {spec}")));
                }
            }
            spec
        } else {
            let family: Family = name.parse().map_err(|e| ConfigError::value("scheme", name, e))?;
            let order = match (self.order, family) {
                (Some(k), _) => k,
                (None, Family::Cn) => 2,
                (None, Family::Rk) => 4,
                (None, _) => return Err(ConfigError::Invalid(format!("scheme {name} needs an order"))),
            };
            SchemeSpec::new(family, order).map_err(|e| ConfigError::value("order", &order.to_string(), e))?
        };
        spec.with_newton(self.newton).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Study schemes with the configured Newton settings.
    pub fn study_schemes(&self) -> Result<Vec<SchemeSpec>, ConfigError> {
        self.schemes
            .iter()
            .map(|s| s.with_newton(self.newton).map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect()
    }
}

fn check_steps(m: usize) -> Result<usize, ConfigError> {
    if m == 0 || !m.is_multiple_of(3) {
        return Err(ConfigError::Invalid(format!("step count {m} is not a positive multiple of 3")));
    }
    Ok(m)
}
