//! Plain-text `key = value` configuration with `[section]` headers.
//!
//! Every value has a default, so an empty file is a valid GMK run at ε = 0.
//! [`ExperimentConfig::echo`] writes the canonical form: all keys, fixed order,
//! shortest round-trip float formatting. Parsing an echo and echoing again gives
//! the same bytes.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use phlab_core::torus::{make_map, Family, IntMatrix, MapParams, TorusMap, TorusPoint};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("field `{field}`: {message}")]
    Range { field: String, message: String },
}

impl ConfigError {
    fn syntax(line: usize, message: impl Into<String>) -> Self {
        Self::Syntax {
            line,
            message: message.into(),
        }
    }

    fn range(field: &str, message: impl Into<String>) -> Self {
        Self::Range {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapBlock {
    pub family: Family,
    pub epsilon: f64,
    pub matrix: Option<IntMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Local product scale.
    pub eps0: f64,
    /// Leaf polyline spacing.
    pub tol: f64,
    /// Close-encounter distance for loop searches.
    pub tau: f64,
    pub chi_min: f64,
    /// Allowed ratio error of evenly spaced chains.
    pub delta: f64,
    pub flow_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budgets {
    pub node_cap: usize,
    pub max_iter: usize,
    pub max_searches: usize,
    /// Worker threads; `None` means available parallelism.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Write CSV sidecars for bulk point data.
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub point: [f64; 3],
    pub radius: f64,
    pub grid: usize,
    /// Chain length N.
    pub n: usize,
    /// Target chain diameter.
    pub eps: f64,
    pub npush: usize,
    pub n_max: usize,
    /// Number of random base points where a run samples several.
    pub samples: usize,
    /// Acceptance criteria run by `accept`.
    pub criteria: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub map: MapBlock,
    pub tolerances: Tolerances,
    pub budgets: Budgets,
    pub output: OutputBlock,
    pub experiment: Experiment,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            map: MapBlock {
                family: Family::Gmk,
                epsilon: 0.0,
                matrix: None,
            },
            tolerances: Tolerances {
                eps0: 1.0,
                tol: 0.02,
                tau: 0.1,
                chi_min: 1e-4,
                delta: 0.2,
                flow_step: 0.005,
            },
            budgets: Budgets {
                node_cap: 4_000_000,
                max_iter: 60,
                max_searches: 48,
                threads: None,
            },
            output: OutputBlock {
                dir: PathBuf::from("."),
                csv: true,
            },
            experiment: Experiment {
                point: [0.3, 0.6, 0.1],
                radius: 200.0,
                grid: 64,
                n: 8,
                eps: 0.02,
                npush: 12,
                n_max: 40,
                samples: 10,
                criteria: (1..=10).collect(),
            },
        }
    }
}

fn num<T: FromStr>(field: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::range(field, format!("`{v}` is not a valid number")))
}

fn list<T: FromStr>(field: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|s| num(field, s.trim())).collect()
}

fn point(field: &str, v: &str) -> Result<[f64; 3], ConfigError> {
    let xs: Vec<f64> = list(field, v)?;
    xs.try_into()
        .map_err(|_| ConfigError::range(field, "expected three comma-separated coordinates"))
}

fn flag(field: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::range(field, format!("`{v}` is not a boolean"))),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one key of a section (top-level keys have an empty section).
    /// Returns `Ok(false)` for unknown keys. Range errors name the key.
    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<bool, ConfigError> {
        let f = key;
        let t = &mut self.tolerances;
        let b = &mut self.budgets;
        let e = &mut self.experiment;
        match (section, key) {
            ("", "seed") => self.seed = num(f, v)?,
            ("map", "family") => {
                self.map.family = v
                    .parse()
                    .map_err(|_| ConfigError::range(f, format!("unknown family `{v}`")))?
            }
            ("map", "epsilon") => self.map.epsilon = num(f, v)?,
            ("map", "matrix") => {
                self.map.matrix = if v == "none" {
                    None
                } else {
                    Some(
                        v.parse()
                            .map_err(|err| ConfigError::range(f, format!("{err}")))?,
                    )
                }
            }
            ("tolerances", "eps0") => t.eps0 = num(f, v)?,
            ("tolerances", "tol") => t.tol = num(f, v)?,
            ("tolerances", "tau") => t.tau = num(f, v)?,
            ("tolerances", "chi_min") => t.chi_min = num(f, v)?,
            ("tolerances", "delta") => t.delta = num(f, v)?,
            ("tolerances", "flow_step") => t.flow_step = num(f, v)?,
            ("budgets", "node_cap") => b.node_cap = num(f, v)?,
            ("budgets", "max_iter") => b.max_iter = num(f, v)?,
            ("budgets", "max_searches") => b.max_searches = num(f, v)?,
            ("budgets", "threads") => b.threads = if v == "auto" { None } else { Some(num(f, v)?) },
            ("output", "dir") => self.output.dir = PathBuf::from(v),
            ("output", "csv") => self.output.csv = flag(f, v)?,
            ("experiment", "point") => e.point = point(f, v)?,
            ("experiment", "radius") => e.radius = num(f, v)?,
            ("experiment", "grid") => e.grid = num(f, v)?,
            ("experiment", "n") => e.n = num(f, v)?,
            ("experiment", "eps") => e.eps = num(f, v)?,
            ("experiment", "npush") => e.npush = num(f, v)?,
            ("experiment", "n_max") => e.n_max = num(f, v)?,
            ("experiment", "samples") => e.samples = num(f, v)?,
            ("experiment", "criteria") => e.criteria = list(f, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Range checks that do not depend on the input syntax.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::range(field, format!("{x} must be positive")))
            }
        };
        if !(self.map.epsilon.is_finite() && self.map.epsilon >= 0.0) {
            return Err(ConfigError::range(
                "epsilon",
                "must be a finite nonnegative number",
            ));
        }
        let t = &self.tolerances;
        for (name, x) in [
            ("eps0", t.eps0),
            ("tol", t.tol),
            ("tau", t.tau),
            ("chi_min", t.chi_min),
            ("delta", t.delta),
            ("flow_step", t.flow_step),
        ] {
            positive(name, x)?;
        }
        if t.eps0 <= t.tol {
            return Err(ConfigError::range("eps0", "must exceed tol"));
        }
        let b = &self.budgets;
        for (name, x) in [
            ("node_cap", b.node_cap),
            ("max_iter", b.max_iter),
            ("max_searches", b.max_searches),
            ("threads", b.threads.unwrap_or(1)),
        ] {
            if x == 0 {
                return Err(ConfigError::range(name, "budgets must be positive"));
            }
        }
        let e = &self.experiment;
        positive("radius", e.radius)?;
        positive("eps", e.eps)?;
        if e.point.iter().any(|c| !c.is_finite()) {
            return Err(ConfigError::range("point", "coordinates must be finite"));
        }
        for (name, x) in [
            ("grid", e.grid),
            ("n", e.n),
            ("npush", e.npush),
            ("n_max", e.n_max),
            ("samples", e.samples),
        ] {
            if x == 0 {
                return Err(ConfigError::range(name, "must be positive"));
            }
        }
        if let Some(c) = e.criteria.iter().find(|c| !(1..=10).contains(*c)) {
            return Err(ConfigError::range(
                "criteria",
                format!("no acceptance criterion {c}"),
            ));
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn echo(&self) -> String {
        let t = &self.tolerances;
        let b = &self.budgets;
        let e = &self.experiment;
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n[map]");
        let _ = writeln!(s, "family = {}", self.map.family);
        let _ = writeln!(s, "epsilon = {}", self.map.epsilon);
        let matrix = self
            .map
            .matrix
            .map_or_else(|| "none".to_string(), |m| m.to_string());
        let _ = writeln!(s, "matrix = {matrix}");
        let _ = writeln!(s, "\n[tolerances]");
        let _ = writeln!(s, "eps0 = {}", t.eps0);
        let _ = writeln!(s, "tol = {}", t.tol);
        let _ = writeln!(s, "tau = {}", t.tau);
        let _ = writeln!(s, "chi_min = {}", t.chi_min);
        let _ = writeln!(s, "delta = {}", t.delta);
        let _ = writeln!(s, "flow_step = {}", t.flow_step);
        let _ = writeln!(s, "\n[budgets]");
        let _ = writeln!(s, "node_cap = {}", b.node_cap);
        let _ = writeln!(s, "max_iter = {}", b.max_iter);
        let _ = writeln!(s, "max_searches = {}", b.max_searches);
        let threads = b
            .threads
            .map_or_else(|| "auto".to_string(), |n| n.to_string());
        let _ = writeln!(s, "threads = {threads}");
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output.dir.display());
        let _ = writeln!(s, "csv = {}", self.output.csv);
        let _ = writeln!(s, "\n[experiment]");
        let _ = writeln!(s, "point = {}", join(&e.point));
        let _ = writeln!(s, "radius = {}", e.radius);
        let _ = writeln!(s, "grid = {}", e.grid);
        let _ = writeln!(s, "n = {}", e.n);
        let _ = writeln!(s, "eps = {}", e.eps);
        let _ = writeln!(s, "npush = {}", e.npush);
        let _ = writeln!(s, "n_max = {}", e.n_max);
        let _ = writeln!(s, "samples = {}", e.samples);
        let _ = writeln!(s, "criteria = {}", join(&e.criteria));
        s
    }

    /// Builds the configured map.
    pub fn build_map(&self) -> phlab_core::Result<TorusMap> {
        let epsilon = match self.map.family {
            Family::Linear => None,
            _ => Some(self.map.epsilon),
        };
        make_map(
            self.map.family,
            &MapParams {
                epsilon,
                matrix: self.map.matrix,
            },
        )
    }

    pub fn point(&self) -> TorusPoint {
        let [x, y, z] = self.experiment.point;
        TorusPoint::new(x, y, z)
    }
}

/// Parses and validates a config. Comments start with `#` or `;`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::syntax(line_no, "unterminated section header"))?
                .trim();
            if !["map", "tolerances", "budgets", "output", "experiment"].contains(&name) {
                return Err(ConfigError::syntax(
                    line_no,
                    format!("unknown section `{name}`"),
                ));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::syntax(line_no, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::syntax(line_no, "empty key"));
        }
        if !cfg.set(&section, key, value)? {
            return Err(ConfigError::syntax(line_no, format!("unknown key `{key}`")));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
