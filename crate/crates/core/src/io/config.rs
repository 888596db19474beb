//! TOML scenario configuration: corridor, routes, arrivals, an optional
//! random arrival generator and simulation options.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::corridor::{CorridorSpec, Route, ValidationIssue};
use crate::sim::{Arrival, Scenario, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Optimal,
    Baseline,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub mode: ModeSelection,
    /// Output sampling step (s).
    pub sample_dt: f64,
    /// Baseline integration step (s).
    pub baseline_dt: f64,
    /// Simulated time allowed after the last arrival (s).
    pub drain_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let o = SimOptions::default();
        Self {
            mode: ModeSelection::Both,
            sample_dt: o.sample_dt,
            baseline_dt: o.baseline_dt,
            drain_time: o.drain_time,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub route: String,
    /// Mean arrival rate (veh/s).
    pub rate: f64,
}

/// Random arrivals: per stream, inter-arrival times are `min_headway` plus
/// an exponential with the remaining mean, speeds uniform in `speed_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Arrivals are drawn in `[start, start + horizon)` (s).
    pub horizon: f64,
    #[serde(default)]
    pub start: f64,
    pub speed_range: [f64; 2],
    /// Smallest time between arrivals on the same entry lane (s).
    pub min_headway: f64,
    pub streams: Vec<StreamConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub corridor: CorridorSpec,
    pub routes: BTreeMap<String, Route>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arrivals: Vec<Arrival>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Parse {
        path: PathBuf,
        message: String,
    },
    Invalid {
        path: PathBuf,
        issues: Vec<ValidationIssue>,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            ConfigError::Parse { path, message } => write!(f, "{}: {message}", path.display()),
            ConfigError::Invalid { path, issues } => {
                write!(f, "{}: {} validation error(s)", path.display(), issues.len())?;
                for issue in issues {
                    write!(f, "\n  {issue}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        ConfigError::Invalid { issues, .. } => ConfigError::Invalid {
            path: path.to_path_buf(),
            issues,
        },
        other => other,
    })
}

/// Parses and validates a configuration held in memory.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::new(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid {
            path: PathBuf::new(),
            issues,
        })
    }
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Every problem found, each addressed by a field path.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut issues = self.corridor.validate();
        if self.routes.is_empty() {
            issues.push(ValidationIssue::new("routes", "at least one route is required"));
        }
        for (name, route) in &self.routes {
            issues.extend(route.validate(&self.corridor, &format!("routes.{name}")));
        }
        let p = &self.corridor.params;
        for (i, a) in self.arrivals.iter().enumerate() {
            let path = format!("arrivals[{i}]");
            if !self.routes.contains_key(&a.route) {
                issues.push(ValidationIssue::new(
                    format!("{path}.route"),
                    format!("unknown route `{}`", a.route),
                ));
            }
            if !a.t0.is_finite() {
                issues.push(ValidationIssue::new(format!("{path}.t0"), "must be finite"));
            }
            if !(a.v0 > 0.0 && a.v0 >= p.v_min && a.v0 <= p.v_max) {
                issues.push(ValidationIssue::new(
                    format!("{path}.v0"),
                    format!("must be positive and within [{}, {}]", p.v_min, p.v_max),
                ));
            }
        }
        if let Some(g) = &self.generator {
            if !(g.horizon > 0.0) {
                issues.push(ValidationIssue::new("generator.horizon", "must be > 0"));
            }
            if !g.start.is_finite() {
                issues.push(ValidationIssue::new("generator.start", "must be finite"));
            }
            let [lo, hi] = g.speed_range;
            if !(lo > 0.0 && lo <= hi && lo >= p.v_min && hi <= p.v_max) {
                issues.push(ValidationIssue::new(
                    "generator.speed_range",
                    format!("must satisfy 0 < lo <= hi within [{}, {}]", p.v_min, p.v_max),
                ));
            }
            if !(g.min_headway >= 0.0) {
                issues.push(ValidationIssue::new("generator.min_headway", "must be >= 0"));
            }
            if g.streams.is_empty() {
                issues.push(ValidationIssue::new(
                    "generator.streams",
                    "at least one stream is required",
                ));
            }
            for (i, s) in g.streams.iter().enumerate() {
                if !self.routes.contains_key(&s.route) {
                    issues.push(ValidationIssue::new(
                        format!("generator.streams[{i}].route"),
                        format!("unknown route `{}`", s.route),
                    ));
                }
                if !(s.rate > 0.0 && 1.0 / s.rate > g.min_headway) {
                    issues.push(ValidationIssue::new(
                        format!("generator.streams[{i}].rate"),
                        "must be > 0 with mean headway 1/rate above min_headway",
                    ));
                }
            }
        }
        if self.arrivals.is_empty() && self.generator.is_none() {
            issues.push(ValidationIssue::new("arrivals", "no arrivals and no generator"));
        }
        let s = &self.simulation;
        for (field, value) in [
            ("sample_dt", s.sample_dt),
            ("baseline_dt", s.baseline_dt),
            ("drain_time", s.drain_time),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                issues.push(ValidationIssue::new(format!("simulation.{field}"), "must be > 0"));
            }
        }
        issues
    }

    pub fn options(&self) -> SimOptions {
        SimOptions {
            sample_dt: self.simulation.sample_dt,
            baseline_dt: self.simulation.baseline_dt,
            drain_time: self.simulation.drain_time,
        }
    }

    /// Explicit arrivals merged with generated ones, sorted by time.
    pub fn all_arrivals(&self) -> Vec<Arrival> {
        let mut out = self.arrivals.clone();
        if let Some(g) = &self.generator {
            out.extend(generate_arrivals(g, &self.routes));
        }
        out.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        out
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            corridor: self.corridor.clone(),
            routes: self.routes.clone(),
            arrivals: self.all_arrivals(),
            options: self.options(),
        }
    }
}

/// Draws arrivals for every stream, then pushes back any arrival that would
/// follow another on the same entry lane by less than `min_headway`.
pub fn generate_arrivals(g: &GeneratorConfig, routes: &BTreeMap<String, Route>) -> Vec<Arrival> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let end = g.start + g.horizon;
    let mut out: Vec<Arrival> = Vec::new();
    for stream in &g.streams {
        let extra_mean = 1.0 / stream.rate - g.min_headway;
        let exp = Exp::new(1.0 / extra_mean).expect("validated rate");
        let mut t = g.start + exp.sample(&mut rng);
        while t < end {
            let v0 = if g.speed_range[1] > g.speed_range[0] {
                rng.random_range(g.speed_range[0]..g.speed_range[1])
            } else {
                g.speed_range[0]
            };
            out.push(Arrival {
                t0: t,
                v0,
                route: stream.route.clone(),
            });
            t += g.min_headway + exp.sample(&mut rng);
        }
    }
    out.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    let entry = |a: &Arrival| {
        routes
            .get(&a.route)
            .and_then(|r| r.legs.first())
            .map(|l| (l.zone.clone(), l.approach.clone()))
    };
    let mut last: BTreeMap<_, f64> = BTreeMap::new();
    for a in &mut out {
        if let Some(key) = entry(a) {
            if let Some(&prev) = last.get(&key) {
                a.t0 = a.t0.max(prev + g.min_headway);
            }
            last.insert(key, a.t0);
        }
    }
    out.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    out
}
