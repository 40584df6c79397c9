//! Tolerance-tagged expectations on a study report, read from TOML.

use std::path::Path;

use serde::Deserialize;
use stiffexp::integrators::SchemeSpec;
use thiserror::Error;

use crate::study::{same_step, ConvergenceReport};

/// Marks a cell where the scheme is expected to diverge.
pub const DASH: &str = "--";

#[derive(Debug, Error)]
pub enum ExpectationError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Value(f64),
    #[serde(deserialize_with = "dash")]
    Diverged,
}

fn dash<'de, D: serde::Deserializer<'de>>(d: D) -> Result<(), D::Error> {
    let s = String::deserialize(d)?;
    if s == DASH {
        Ok(())
    } else {
        Err(serde::de::Error::custom(format!("expected a number or \"{DASH}\", got \"{s}\"")))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed ratio between computed and expected `e_inf`, either way.
    pub magnitude_factor: f64,
    /// Allowed `|slope - order|` of the fitted `e_inf` slope.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeRow {
    pub name: String,
    pub e_inf: Vec<Cell>,
    /// Steps whose value is reported but not checked.
    #[serde(default)]
    pub non_binding: Vec<f64>,
}

/// A single cell with its own tolerance factor.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spot {
    pub scheme: String,
    pub h: f64,
    pub e_inf: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub steps: Vec<f64>,
    pub tolerances: Tolerances,
    #[serde(rename = "scheme")]
    pub schemes: Vec<SchemeRow>,
    #[serde(default, rename = "spot")]
    pub spots: Vec<Spot>,
}

/// Outcome of one expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub pass: bool,
    /// Non-binding checks are reported but never fail a run.
    pub binding: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        let tag = match (self.pass, self.binding) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "INFO",
        };
        format!("{tag} {}: {}", self.label, self.detail)
    }
}

fn parse_scheme(name: &str) -> Result<SchemeSpec, ExpectationError> {
    name.parse().map_err(|e| ExpectationError::Invalid(format!("{name}: {e}")))
}

fn within(value: f64, expected: f64, factor: f64) -> bool {
    value > 0.0 && value <= expected * factor && value >= expected / factor
}

impl Expectations {
    pub fn from_toml(text: &str) -> Result<Self, ExpectationError> {
        let exp: Self = toml::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> Result<Self, ExpectationError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExpectationError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<(), ExpectationError> {
        if self.tolerances.magnitude_factor < 1.0 || self.tolerances.slope < 0.0 {
            return Err(ExpectationError::Invalid("tolerances out of range".into()));
        }
        for row in &self.schemes {
            parse_scheme(&row.name)?;
            if row.e_inf.len() != self.steps.len() {
                return Err(ExpectationError::Invalid(format!("{}: {} cells for {} steps", row.name, row.e_inf.len(), self.steps.len())));
            }
        }
        for spot in &self.spots {
            parse_scheme(&spot.scheme)?;
        }
        Ok(())
    }

    /// The scheme specs listed, in file order.
    pub fn scheme_specs(&self) -> Vec<SchemeSpec> {
        self.schemes.iter().map(|r| parse_scheme(&r.name).expect("validated")).collect()
    }

    /// Whether `h` of `row` is flagged as non-binding.
    fn binding(row: &SchemeRow, h: f64) -> bool {
        !row.non_binding.iter().any(|&nb| same_step(nb, h))
    }

    /// Stable/diverged status of every listed cell against the report.
    pub fn pattern_checks(&self, report: &ConvergenceReport) -> Vec<Check> {
        let mut out = Vec::new();
        for row in &self.schemes {
            let spec = parse_scheme(&row.name).expect("validated");
            for (&h, cell) in self.steps.iter().zip(&row.e_inf) {
                let want = matches!(cell, Cell::Value(_));
                let (pass, detail) = match report.row(&spec, h) {
                    Some(r) => (r.stable == want, format!("expected {}, got {}", status(want), status(r.stable))),
                    None => (false, "not computed".into()),
                };
                out.push(Check { label: format!("stability {spec} h={h}"), pass, binding: true, detail });
            }
        }
        out
    }

    /// `e_inf` of every populated cell within `magnitude_factor`.
    pub fn magnitude_checks(&self, report: &ConvergenceReport) -> Vec<Check> {
        let factor = self.tolerances.magnitude_factor;
        let mut out = Vec::new();
        for row in &self.schemes {
            let spec = parse_scheme(&row.name).expect("validated");
            for (&h, cell) in self.steps.iter().zip(&row.e_inf) {
                let Cell::Value(expected) = *cell else { continue };
                let got = report.row(&spec, h).and_then(|r| r.e_inf);
                let (pass, detail) = match got {
                    Some(e) => (within(e, expected, factor), format!("e_inf {e:.3e} vs {expected:.3e} (ratio {:.2})", e / expected)),
                    None => (false, format!("no e_inf (expected {expected:.3e})")),
                };
                out.push(Check { label: format!("magnitude {spec} h={h}"), pass, binding: Self::binding(row, h), detail });
            }
        }
        out
    }

    /// Fitted `e_inf` slope of each scheme within `slope` of its order.
    pub fn slope_checks(&self, report: &ConvergenceReport) -> Vec<Check> {
        self.scheme_specs()
            .iter()
            .map(|spec| {
                let fit = report.slope(spec);
                let (pass, detail) = match fit.and_then(|f| f.e_inf.map(|s| (s, f.stable_rows))) {
                    Some((s, n)) => (
                        (s - spec.order() as f64).abs() <= self.tolerances.slope,
                        format!("slope {s:.3} over {n} stable rows, order {}", spec.order()),
                    ),
                    None => (false, "slope undefined".into()),
                };
                Check { label: format!("order {spec}"), pass, binding: true, detail }
            })
            .collect()
    }

    pub fn spot_checks(&self, report: &ConvergenceReport) -> Vec<Check> {
        self.spots
            .iter()
            .map(|spot| {
                let spec = parse_scheme(&spot.scheme).expect("validated");
                let got = report.row(&spec, spot.h).and_then(|r| r.e_inf);
                let (pass, detail) = match got {
                    Some(e) => (within(e, spot.e_inf, spot.factor), format!("e_inf {e:.3e} vs {:.3e} within x{}", spot.e_inf, spot.factor)),
                    None => (false, "no e_inf".into()),
                };
                Check { label: format!("spot {spec} h={}", spot.h), pass, binding: true, detail }
            })
            .collect()
    }

    pub fn check_report(&self, report: &ConvergenceReport) -> Vec<Check> {
        let mut all = self.pattern_checks(report);
        all.extend(self.magnitude_checks(report));
        all.extend(self.slope_checks(report));
        all.extend(self.spot_checks(report));
        all
    }
}

fn status(stable: bool) -> &'static str {
    if stable {
        "stable"
    } else {
        "diverged"
    }
}

/// The expectations shipped with this crate.
pub fn bundled_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("expectations").join("expected_errors.toml")
}
