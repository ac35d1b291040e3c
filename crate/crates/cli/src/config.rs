//! Scenario files.
//!
//! ```json
//! {
//!   "capacity": 500,
//!   "classes": [{"b": 50, "mu": 3.0, "lambda": 5.0}, {"b": 7, "mu": 0.42, "lambda": 5.0}],
//!   "qos": [0.04, 0.01],
//!   "weights": {"omega": [20, 10], "theta": [60, 20]},
//!   "profile": [{"capacity": 450}, {"capacity": 500, "lambdas": [6.0, 5.0]}],
//!   "simulation": {"horizon": 10000, "warmup": 100, "seed": 1, "replications": 10}
//! }
//! ```
//!
//! Only `capacity` and `classes` are required. Command-line flags override
//! file values, which override built-in defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chargecap::model::into_scenario;
use chargecap::{
    validate_scenario, Diagnostic, Period, QosTargets, RawClass, Scenario, ServiceDistribution,
    Severity, TimeProfile, UtilityWeights,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub capacity: f64,
    pub classes: Vec<RawClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qos: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<Period>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceDistribution>,
}

/// A config problem, reported with the file and, where known, the position
/// and field path.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub location: Option<(usize, usize)>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some((line, col)) = self.location {
            write!(f, ":{line}:{col}")?;
        }
        if let Some(field) = &self.field {
            write!(f, ": field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let error = |e: serde_json::Error, field: Option<String>| {
            let line = e.line();
            ConfigError {
                path: path.to_path_buf(),
                location: (line > 0).then(|| (line, e.column())),
                field,
                message: strip_position(&e.to_string()),
            }
        };
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            error(e.into_inner(), (field != ".").then_some(field))
        })?;
        de.end().map_err(|e| error(e, None))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            location: None,
            field: None,
            message: e.to_string(),
        })?;
        let cfg = Self::parse(&text, path)?;
        Ok((cfg, digest(&text)))
    }

    /// Every problem in the file, beyond what parsing already caught.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = validate_scenario(self.capacity, &self.classes);
        let n = self.classes.len();
        let mut error = |message: String| {
            out.push(Diagnostic {
                severity: Severity::Error,
                message,
            })
        };
        if let Some(qos) = &self.qos {
            if let Err(e) = QosTargets::new(qos.clone()) {
                error(format!("qos: {e}"));
            } else if qos.len() != n {
                error(format!("qos has {} targets for {n} classes", qos.len()));
            }
        }
        if let Some(w) = &self.weights {
            if let Err(e) = UtilityWeights::new(w.omega.clone(), w.theta.clone()) {
                error(format!("weights: {e}"));
            } else if w.omega.len() != n {
                error(format!(
                    "weights cover {} classes, expected {n}",
                    w.omega.len()
                ));
            }
        }
        for (k, p) in self.profile.iter().flatten().enumerate() {
            if let Some(l) = &p.lambdas {
                if l.len() != n {
                    error(format!(
                        "profile period {k}: {} rates for {n} classes",
                        l.len()
                    ));
                } else if l.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    error(format!("profile period {k}: rates must be nonnegative"));
                }
            }
        }
        out
    }

    pub fn scenario(&self, capacity: Option<u32>) -> anyhow::Result<Scenario> {
        let s = into_scenario(self.capacity, &self.classes)?;
        Ok(match capacity {
            Some(c) => s.with_capacity(c),
            None => s,
        })
    }

    pub fn weights(&self) -> Option<anyhow::Result<UtilityWeights>> {
        self.weights
            .as_ref()
            .map(|w| UtilityWeights::new(w.omega.clone(), w.theta.clone()).map_err(Into::into))
    }

    pub fn profile(&self) -> Option<TimeProfile> {
        self.profile.clone().map(TimeProfile::new)
    }
}

/// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// SHA-256 of the config's canonical form: keys sorted, whitespace dropped.
pub fn digest(text: &str) -> String {
    let canonical = match serde_json::from_str::<serde_json::Value>(text) {
        Ok(v) => serde_json::to_vec(&v).expect("values serialize"),
        Err(_) => text.as_bytes().to_vec(),
    };
    format!("sha256:{}", hex::encode(Sha256::digest(canonical)))
}
