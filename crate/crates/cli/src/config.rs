//! Flat `key = value` experiment configuration, command-line overrides and
//! defaulting.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sepwalk_core::model::{perturbed_rates, ModelError, ModelParams, PerturbationParams, DEFAULT_EPS_CONFIRM};

pub const DEFAULT_REPLICAS: u64 = 1000;
pub const DEFAULT_HORIZON: f64 = 1000.0;
pub const DEFAULT_PROBE_RATE: f64 = 1.0;
pub const DEFAULT_CENSORING_BUDGET: f64 = 0.05;
pub const DEFAULT_TORUS_SITES: u32 = 12;
pub const DEFAULT_ORACLE_EVENTS: u64 = 10_000;
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.02, 0.04, 0.06, 0.08, 0.10];
pub const DEFAULT_EPS_GRID: [f64; 2] = [0.1, 0.2];
pub const DEFAULT_T_GRID: [f64; 4] = [25.0, 50.0, 100.0, 200.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Speed,
    Blocks,
    Clt,
    Ldp,
    Density,
    Einstein,
    Oracle,
}

impl Mode {
    pub const ALL: [Mode; 7] =
        [Mode::Speed, Mode::Blocks, Mode::Clt, Mode::Ldp, Mode::Density, Mode::Einstein, Mode::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Speed => "speed",
            Mode::Blocks => "blocks",
            Mode::Clt => "clt",
            Mode::Ldp => "ldp",
            Mode::Density => "density",
            Mode::Einstein => "einstein",
            Mode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| ConfigError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown mode `{0}` (expected one of speed, blocks, clt, ldp, density, einstein, oracle)")]
    UnknownMode(String),
    #[error("conflicting modes: `{command}` on the command line, `{file}` in the config file")]
    ConflictingMode { command: Mode, file: Mode },
    #[error("no mode given")]
    MissingMode,
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("{context}: {source}")]
    Model { context: String, source: ModelError },
}

/// Keys accepted in a config file. Every key is optional at this stage;
/// requirements are enforced by [`RawConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Option<Mode>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub f0: Option<f64>,
    pub f1: Option<f64>,
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub horizon: Option<f64>,
    pub estimation_replicas: Option<u64>,
    pub estimation_horizon: Option<f64>,
    pub eps_confirm: Option<f64>,
    pub probe_rate: Option<f64>,
    pub censoring_budget: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub eps_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub torus_sites: Option<u32>,
    pub oracle_events: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RawConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Applies defaults, checks every constraint and validates the model
    /// parameters. `mode` is the mode named on the command line.
    pub fn resolve(self, mode: Option<Mode>) -> Result<Config, ConfigError> {
        let mode = match (mode, self.mode) {
            (Some(c), Some(f)) if c != f => return Err(ConfigError::ConflictingMode { command: c, file: f }),
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => return Err(ConfigError::MissingMode),
        };
        let rho = self.rho.ok_or(ConfigError::Missing("rho"))?;
        let model = if mode == Mode::Einstein {
            if self.alpha0.is_some() || self.alpha1.is_some() || self.beta0.is_some() || self.beta1.is_some() {
                return Err(ConfigError::Invalid {
                    key: "alpha0",
                    message: "einstein mode takes base rates alpha, beta and f0, f1".into(),
                });
            }
            let f0 = self.f0.ok_or(ConfigError::Missing("f0"))?;
            let q = PerturbationParams {
                alpha: self.alpha.ok_or(ConfigError::Missing("alpha"))?,
                beta: self.beta.ok_or(ConfigError::Missing("beta"))?,
                lambda: 0.0,
                f0,
                f1: self.f1.unwrap_or(1.0 - f0),
            };
            ModelSpec::Perturbed { base: q, rho }
        } else {
            if self.f0.is_some() || self.f1.is_some() || self.lambda_grid.is_some() {
                return Err(ConfigError::Invalid {
                    key: "f0",
                    message: "only einstein mode takes f0, f1, lambda_grid".into(),
                });
            }
            let pick = |specific: Option<f64>, shared: Option<f64>, key: &'static str| match (specific, shared) {
                (Some(_), Some(_)) => Err(ConfigError::Invalid {
                    key,
                    message: "give either the per-state rates or the shared rate, not both".into(),
                }),
                (Some(v), None) | (None, Some(v)) => Ok(v),
                (None, None) => Err(ConfigError::Missing(key)),
            };
            ModelSpec::Fixed(ModelParams {
                alpha0: pick(self.alpha0, self.alpha, "alpha0")?,
                alpha1: pick(self.alpha1, self.alpha, "alpha1")?,
                beta0: pick(self.beta0, self.beta, "beta0")?,
                beta1: pick(self.beta1, self.beta, "beta1")?,
                rho,
            })
        };

        let cfg = Config {
            mode,
            model,
            seed: self.seed.unwrap_or(0),
            replicas: self.replicas.unwrap_or(DEFAULT_REPLICAS),
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            estimation_replicas: self.estimation_replicas.or(self.replicas).unwrap_or(DEFAULT_REPLICAS),
            estimation_horizon: self.estimation_horizon.or(self.horizon).unwrap_or(DEFAULT_HORIZON),
            eps_confirm: self.eps_confirm.unwrap_or(DEFAULT_EPS_CONFIRM),
            probe_rate: self.probe_rate.unwrap_or(DEFAULT_PROBE_RATE),
            censoring_budget: self.censoring_budget.unwrap_or(DEFAULT_CENSORING_BUDGET),
            lambda_grid: self.lambda_grid.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec()),
            eps_grid: self.eps_grid.unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec()),
            t_grid: self.t_grid.unwrap_or_else(|| DEFAULT_T_GRID.to_vec()),
            torus_sites: self.torus_sites.unwrap_or(DEFAULT_TORUS_SITES),
            oracle_events: self.oracle_events.unwrap_or(DEFAULT_ORACLE_EVENTS),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub horizon: Option<f64>,
    pub eps_confirm: Option<f64>,
    pub probe_rate: Option<f64>,
    pub censoring_budget: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(self, raw: &mut RawConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { raw.$f = Some(v); } )* };
        }
        set!(seed, replicas, horizon, eps_confirm, probe_rate, censoring_budget, out);
    }
}

/// Either fixed rates, or the perturbed family swept over a λ grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Fixed(ModelParams),
    Perturbed { base: PerturbationParams, rho: f64 },
}

impl ModelSpec {
    pub fn rho(&self) -> f64 {
        match self {
            ModelSpec::Fixed(p) => p.rho,
            ModelSpec::Perturbed { rho, .. } => *rho,
        }
    }
}

/// A fully resolved, validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub mode: Mode,
    pub model: ModelSpec,
    pub seed: u64,
    pub replicas: u64,
    pub horizon: f64,
    /// Replicas and horizon of the run that estimates the speed and variance
    /// in the modes that also draw a separate sample (clt, density).
    pub estimation_replicas: u64,
    pub estimation_horizon: f64,
    pub eps_confirm: f64,
    pub probe_rate: f64,
    /// Largest admissible fraction of simulated time left inside censored
    /// blocks.
    pub censoring_budget: f64,
    pub lambda_grid: Vec<f64>,
    /// Deviations as fractions of the estimated speed.
    pub eps_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub torus_sites: u32,
    pub oracle_events: u64,
    pub out: PathBuf,
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid { key, message: format!("must be finite and > 0 (got {v})") })
    }
}

fn grid(key: &'static str, g: &[f64]) -> Result<(), ConfigError> {
    if g.is_empty() {
        return Err(ConfigError::Invalid { key, message: "must not be empty".into() });
    }
    for &v in g {
        positive(key, v)?;
    }
    if g.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::Invalid { key, message: "must be strictly increasing".into() });
    }
    Ok(())
}

impl Config {
    /// Parses a config file, applies overrides and resolves.
    pub fn load(path: &Path, mode: Option<Mode>, overrides: Overrides) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::load(path)?;
        overrides.apply(&mut raw);
        raw.resolve(mode)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.model {
            ModelSpec::Fixed(p) => {
                p.validate().map_err(|source| ConfigError::Model { context: "model parameters".into(), source })?
            }
            ModelSpec::Perturbed { base, rho } => {
                grid("lambda_grid", &self.lambda_grid)?;
                base.validate().map_err(|source| ConfigError::Model { context: "base rates".into(), source })?;
                for &lambda in std::iter::once(&0.0).chain(&self.lambda_grid) {
                    perturbed_rates(&base.with_lambda(lambda), rho).map_err(|source| ConfigError::Model {
                        context: format!("perturbed rates at lambda = {lambda}"),
                        source,
                    })?;
                }
            }
        }
        if self.replicas < 2 {
            return Err(ConfigError::Invalid { key: "replicas", message: "at least 2 replicas are needed".into() });
        }
        if self.estimation_replicas < 2 {
            return Err(ConfigError::Invalid {
                key: "estimation_replicas",
                message: "at least 2 replicas are needed".into(),
            });
        }
        positive("horizon", self.horizon)?;
        positive("estimation_horizon", self.estimation_horizon)?;
        if !(self.eps_confirm > 0.0 && self.eps_confirm < 1.0) {
            return Err(ConfigError::Invalid {
                key: "eps_confirm",
                message: format!("must lie in (0, 1) (got {})", self.eps_confirm),
            });
        }
        positive("probe_rate", self.probe_rate)?;
        if !(0.0..=1.0).contains(&self.censoring_budget) {
            return Err(ConfigError::Invalid {
                key: "censoring_budget",
                message: format!("must lie in [0, 1] (got {})", self.censoring_budget),
            });
        }
        if self.mode == Mode::Ldp {
            grid("eps_grid", &self.eps_grid)?;
            grid("t_grid", &self.t_grid)?;
            if self.t_grid[self.t_grid.len() - 1] > self.horizon {
                return Err(ConfigError::Invalid {
                    key: "t_grid",
                    message: "snapshot times must not exceed the horizon".into(),
                });
            }
        }
        if self.mode == Mode::Oracle && self.torus_sites < 3 {
            return Err(ConfigError::Invalid { key: "torus_sites", message: "need at least 3 sites".into() });
        }
        Ok(())
    }

    /// Fixed-rate parameters, or the unperturbed rates of a sweep.
    pub fn params(&self) -> ModelParams {
        match self.model {
            ModelSpec::Fixed(p) => p,
            ModelSpec::Perturbed { base, rho } => perturbed_rates(&base, rho).expect("validated"),
        }
    }

    /// The resolved configuration as a flat table, in the input key names.
    pub fn to_table(&self) -> toml::Table {
        let mut t = toml::Table::new();
        let mut put = |k: &str, v: toml::Value| {
            t.insert(k.to_string(), v);
        };
        let floats = |g: &[f64]| toml::Value::Array(g.iter().map(|&x| toml::Value::Float(x)).collect());
        put("mode", self.mode.name().into());
        match self.model {
            ModelSpec::Fixed(p) => {
                put("alpha0", p.alpha0.into());
                put("alpha1", p.alpha1.into());
                put("beta0", p.beta0.into());
                put("beta1", p.beta1.into());
            }
            ModelSpec::Perturbed { base, .. } => {
                put("alpha", base.alpha.into());
                put("beta", base.beta.into());
                put("f0", base.f0.into());
                put("f1", base.f1.into());
                put("lambda_grid", floats(&self.lambda_grid));
            }
        }
        put("rho", self.model.rho().into());
        // u64 seeds above i64::MAX keep their bit pattern
        put("seed", toml::Value::Integer(self.seed as i64));
        put("replicas", toml::Value::Integer(self.replicas as i64));
        put("horizon", self.horizon.into());
        if matches!(self.mode, Mode::Clt | Mode::Density) {
            put("estimation_replicas", toml::Value::Integer(self.estimation_replicas as i64));
            put("estimation_horizon", self.estimation_horizon.into());
        }
        put("eps_confirm", self.eps_confirm.into());
        put("probe_rate", self.probe_rate.into());
        put("censoring_budget", self.censoring_budget.into());
        match self.mode {
            Mode::Ldp => {
                put("eps_grid", floats(&self.eps_grid));
                put("t_grid", floats(&self.t_grid));
            }
            Mode::Oracle => {
                put("torus_sites", toml::Value::Integer(self.torus_sites.into()));
                put("oracle_events", toml::Value::Integer(self.oracle_events as i64));
            }
            _ => {}
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RawConfig {
        RawConfig::parse(text, Path::new("test.toml")).unwrap()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse("mode = \"speed\"\nalpha = 3.0\nbeta = 0.5\nrho = 0.5\nseed = 4\n").resolve(None).unwrap();
        assert_eq!(c.replicas, 1000);
        assert_eq!(c.horizon, 1000.0);
        assert_eq!(c.eps_confirm, 1e-12);
        assert_eq!(c.params(), ModelParams::homogeneous(3.0, 0.5, 0.5).unwrap());
    }

    #[test]
    fn density_is_required() {
        let err = parse("alpha = 3.0\nbeta = 0.5\n").resolve(Some(Mode::Speed)).unwrap_err();
        assert!(matches!(err, ConfigError::Missing("rho")));
    }

    #[test]
    fn conflicting_modes_are_rejected() {
        let err = parse("mode = \"ldp\"\nalpha = 3.0\nbeta = 0.5\nrho = 0.5\n").resolve(Some(Mode::Speed)).unwrap_err();
        assert!(matches!(err, ConfigError::ConflictingMode { .. }));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = RawConfig::parse("rho = 0.5\nalhpa = 3.0\n", Path::new("x.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alhpa") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn overrides_win() {
        let mut raw = parse("alpha = 3.0\nbeta = 0.5\nrho = 0.5\nseed = 1\nreplicas = 7\n");
        Overrides { seed: Some(9), ..Default::default() }.apply(&mut raw);
        let c = raw.resolve(Some(Mode::Speed)).unwrap();
        assert_eq!((c.seed, c.replicas), (9, 7));
    }

    #[test]
    fn einstein_lambda_violating_drift2() {
        // a negative interaction constant slows the walk on occupied sites
        let raw = parse("alpha = 2.0\nbeta = 0.5\nf0 = 2.0\nf1 = -1.0\nrho = 0.5\nlambda_grid = [0.1, 0.5]\n");
        let err = raw.resolve(Some(Mode::Einstein)).unwrap_err();
        assert!(err.to_string().contains("drift2"), "{err}");
    }

    #[test]
    fn shared_and_specific_rates_conflict() {
        let raw = parse("alpha = 3.0\nalpha0 = 3.0\nbeta = 0.5\nrho = 0.5\n");
        assert!(matches!(raw.resolve(Some(Mode::Speed)), Err(ConfigError::Invalid { key: "alpha0", .. })));
    }

    #[test]
    fn resolved_table_round_trips() {
        let c = parse("alpha0 = 2.5\nalpha1 = 4.0\nbeta0 = 0.4\nbeta1 = 0.6\nrho = 0.6\nseed = 3\n")
            .resolve(Some(Mode::Blocks))
            .unwrap();
        let text = toml::to_string(&c.to_table()).unwrap();
        let back = parse(&text).resolve(None).unwrap();
        assert_eq!(back, c);
    }
}
