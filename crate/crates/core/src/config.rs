//! Flat `key = value` configuration files and the run configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::envs::PredPreyConfig;
use crate::error::{Error, Result};

/// Ordered key/value pairs as read from or written to a flat config file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    pairs: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.pairs.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.pairs.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}", lineno + 1), "empty key"));
            }
            if kv.get(k).is_some() {
                return Err(Error::config(k, "key given twice"));
            }
            kv.set(k, v);
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn serialize(&self) -> String {
        self.pairs
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

/// A configuration that maps to and from flat key/value pairs.
pub trait FlatConfig: Sized {
    fn to_kv(&self) -> KeyValues;

    /// Sets one key; unknown keys are an error naming the key.
    fn apply(&mut self, key: &str, value: &str) -> Result<()>;

    fn apply_all(&mut self, kv: &KeyValues) -> Result<()> {
        for (k, v) in kv.iter() {
            self.apply(k, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    Matrix,
    PredPrey,
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix" => Ok(EnvName::Matrix),
            "predprey" => Ok(EnvName::PredPrey),
            other => Err(Error::config(
                "env",
                format!("unknown environment `{other}` (expected matrix or predprey)"),
            )),
        }
    }
}

impl Display for EnvName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvName::Matrix => "matrix",
            EnvName::PredPrey => "predprey",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Vdn,
    Qmix,
    OptQmix,
}

impl Algo {
    /// Whether the run trains the optimistic network and joint critic.
    pub fn is_optimistic(self) -> bool {
        self == Algo::OptQmix
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vdn" => Ok(Algo::Vdn),
            "qmix" => Ok(Algo::Qmix),
            "opt-qmix" => Ok(Algo::OptQmix),
            other => Err(Error::config(
                "algo",
                format!("unknown algorithm `{other}` (expected vdn, qmix or opt-qmix)"),
            )),
        }
    }
}

impl Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Vdn => "vdn",
            Algo::Qmix => "qmix",
            Algo::OptQmix => "opt-qmix",
        })
    }
}

/// Everything one seeded training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvName,
    pub algo: Algo,
    pub seed: u64,
    /// Total environment steps of training.
    pub steps: usize,

    pub gamma: f64,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub grad_clip: f64,
    /// Episodes per sampled batch.
    pub batch_size: usize,
    /// Replay capacity in episodes.
    pub buffer_size: usize,
    /// Loss weight for optimistic targets below the current estimate.
    pub w: f64,
    /// Training steps between target-network refreshes.
    pub target_update_interval: usize,
    /// Episodes collected per training step.
    pub train_interval: usize,

    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_horizon: usize,
    /// Final upper end of the optimistic normalization range; `None`
    /// feeds raw optimistic estimates to the softmax.
    pub optnorm_cap_end: Option<f64>,
    pub optnorm_horizon: usize,

    pub hidden_dim: usize,
    pub mixer_embed: usize,
    pub critic_feature_dim: usize,

    /// Environment steps between greedy evaluations.
    pub eval_interval: usize,
    pub eval_episodes: usize,

    pub predprey: PredPreyConfig,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Defaults for the given environment.
    pub fn preset(env: EnvName) -> Self {
        let base = RunConfig {
            env,
            algo: Algo::OptQmix,
            seed: 0,
            steps: 20_000,
            gamma: 0.99,
            lr: 5e-4,
            rms_decay: 0.99,
            rms_eps: 1e-5,
            grad_clip: 10.0,
            batch_size: 32,
            buffer_size: 5000,
            w: 0.01,
            target_update_interval: 200,
            train_interval: 1,
            eps_start: 1.0,
            eps_end: 1.0,
            eps_horizon: 1,
            optnorm_cap_end: None,
            optnorm_horizon: 1,
            hidden_dim: 64,
            mixer_embed: 32,
            critic_feature_dim: 32,
            eval_interval: 1000,
            eval_episodes: 32,
            predprey: PredPreyConfig::default(),
            out_dir: PathBuf::from("runs"),
        };
        match env {
            EnvName::Matrix => base,
            EnvName::PredPrey => RunConfig {
                steps: 200_000,
                eps_start: 1.0,
                eps_end: 0.05,
                eps_horizon: 200_000,
                optnorm_cap_end: Some(2.0),
                optnorm_horizon: 20_000,
                eval_interval: 1000,
                ..base
            },
        }
    }

    /// Builds a configuration from a preset, an optional config file, and
    /// explicit overrides (later sources win). The environment is taken from
    /// the overrides if present, then the file, then `matrix`.
    pub fn resolve(file: Option<&KeyValues>, overrides: &KeyValues) -> Result<Self> {
        let env_name = overrides
            .get("env")
            .or_else(|| file.and_then(|f| f.get("env")))
            .unwrap_or("matrix");
        let mut cfg = RunConfig::preset(env_name.parse()?);
        if let Some(f) = file {
            cfg.apply_all(f)?;
        }
        cfg.apply_all(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::config("w", "must lie in [0, 1]"));
        }
        for (k, v) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(k, "must lie in [0, 1]"));
            }
        }
        if matches!(self.optnorm_cap_end, Some(c) if c < 0.0) {
            return Err(Error::config("optnorm_cap_end", "must be nonnegative"));
        }
        for (k, v) in [
            ("batch_size", self.batch_size),
            ("buffer_size", self.buffer_size),
            ("target_update_interval", self.target_update_interval),
            ("train_interval", self.train_interval),
            ("hidden_dim", self.hidden_dim),
            ("mixer_embed", self.mixer_embed),
            ("critic_feature_dim", self.critic_feature_dim),
            ("eval_interval", self.eval_interval),
            ("eps_horizon", self.eps_horizon),
            ("optnorm_horizon", self.optnorm_horizon),
        ] {
            if v == 0 {
                return Err(Error::config(k, "must be positive"));
            }
        }
        if self.env == EnvName::PredPrey {
            self.predprey.validate()?;
        }
        Ok(())
    }

    /// Directory for this run's files: `<out_dir>/<env>-<algo>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir
            .join(format!("{}-{}-s{}", self.env, self.algo, self.seed))
    }
}

impl FlatConfig for RunConfig {
    fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("env", self.env);
        kv.set("algo", self.algo);
        kv.set("seed", self.seed);
        kv.set("steps", self.steps);
        kv.set("gamma", self.gamma);
        kv.set("lr", self.lr);
        kv.set("rms_decay", self.rms_decay);
        kv.set("rms_eps", self.rms_eps);
        kv.set("grad_clip", self.grad_clip);
        kv.set("batch_size", self.batch_size);
        kv.set("buffer_size", self.buffer_size);
        kv.set("w", self.w);
        kv.set("target_update_interval", self.target_update_interval);
        kv.set("train_interval", self.train_interval);
        kv.set("eps_start", self.eps_start);
        kv.set("eps_end", self.eps_end);
        kv.set("eps_horizon", self.eps_horizon);
        match self.optnorm_cap_end {
            Some(c) => kv.set("optnorm_cap_end", c),
            None => kv.set("optnorm_cap_end", "none"),
        }
        kv.set("optnorm_horizon", self.optnorm_horizon);
        kv.set("hidden_dim", self.hidden_dim);
        kv.set("mixer_embed", self.mixer_embed);
        kv.set("critic_feature_dim", self.critic_feature_dim);
        kv.set("eval_interval", self.eval_interval);
        kv.set("eval_episodes", self.eval_episodes);
        for (k, v) in self.predprey.to_kv().iter() {
            kv.set(k, v);
        }
        kv.set("out_dir", self.out_dir.display());
        kv
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let p = |v: &str| -> Result<f64> { parse_value(key, v) };
        let u = |v: &str| -> Result<usize> { parse_value(key, v) };
        match key {
            "env" => self.env = value.parse()?,
            "env_config" => {
                let kv = KeyValues::read(Path::new(value))
                    .map_err(|e| Error::config("env_config", e.to_string()))?;
                self.predprey.apply_all(&kv)?;
            }
            "algo" => self.algo = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "steps" => self.steps = u(value)?,
            "gamma" => self.gamma = p(value)?,
            "lr" => self.lr = p(value)?,
            "rms_decay" => self.rms_decay = p(value)?,
            "rms_eps" => self.rms_eps = p(value)?,
            "grad_clip" => self.grad_clip = p(value)?,
            "batch_size" => self.batch_size = u(value)?,
            "buffer_size" => self.buffer_size = u(value)?,
            "w" => self.w = p(value)?,
            "target_update_interval" => self.target_update_interval = u(value)?,
            "train_interval" => self.train_interval = u(value)?,
            "eps_start" => self.eps_start = p(value)?,
            "eps_end" => self.eps_end = p(value)?,
            "eps_horizon" => self.eps_horizon = u(value)?,
            "optnorm_cap_end" => {
                self.optnorm_cap_end = match value {
                    "none" => None,
                    v => Some(p(v)?),
                }
            }
            "optnorm_horizon" => self.optnorm_horizon = u(value)?,
            "hidden_dim" => self.hidden_dim = u(value)?,
            "mixer_embed" => self.mixer_embed = u(value)?,
            "critic_feature_dim" => self.critic_feature_dim = u(value)?,
            "eval_interval" => self.eval_interval = u(value)?,
            "eval_episodes" => self.eval_episodes = u(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => self.predprey.apply(other, value).map_err(|e| match e {
                Error::Config { key, .. } if key == other => {
                    Error::config(other, "unknown configuration key")
                }
                e => e,
            })?,
        }
        Ok(())
    }
}
