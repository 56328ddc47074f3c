//! TOML configuration with `[env]`, `[train]`, `[agent]`, and `[ga]`
//! sections. Every key has a default; unknown keys are hard errors. The
//! resolved snapshot written into a run directory re-parses to an identical
//! effective configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, Hyperparams};
use crate::env::EnvName;
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub name: EnvName,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection { name: EnvName::PointReach }
    }
}

/// The `[agent]` section: the six searched hyperparameters (defaults are
/// the hand-set baseline arm) plus the fixed agent constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub gamma: f64,
    pub polyak: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub random_eps: f64,
    pub noise_eps: f64,
    pub hidden_sizes: Vec<usize>,
    pub normalizer_clip: f64,
    pub action_l2: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let hp = Hyperparams::baseline();
        let cfg = AgentConfig::default();
        AgentSection {
            gamma: hp.gamma,
            polyak: hp.polyak,
            actor_lr: hp.actor_lr,
            critic_lr: hp.critic_lr,
            random_eps: hp.random_eps,
            noise_eps: hp.noise_eps,
            hidden_sizes: cfg.hidden_sizes,
            normalizer_clip: cfg.normalizer_clip,
            action_l2: cfg.action_l2,
        }
    }
}

impl AgentSection {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            gamma: self.gamma,
            polyak: self.polyak,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            random_eps: self.random_eps,
            noise_eps: self.noise_eps,
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            hidden_sizes: self.hidden_sizes.clone(),
            normalizer_clip: self.normalizer_clip,
            action_l2: self.action_l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub env: EnvSection,
    pub train: TrainConfig,
    pub agent: AgentSection,
    pub ga: GaConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.hyperparams().validate()?;
        self.train.validate()?;
        self.ga.validate()?;
        if self.agent.hidden_sizes.is_empty() || self.agent.hidden_sizes.contains(&0) {
            return Err(Error::Config("agent.hidden_sizes must be non-empty positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// A standalone hyperparameter file: exactly the six searched keys.
pub fn load_hyperparams(path: &Path) -> Result<Hyperparams> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read hyperparams {}: {e}", path.display())))?;
    let hp: Hyperparams = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    hp.validate()?;
    Ok(hp)
}

pub fn save_hyperparams(path: &Path, hp: &Hyperparams) -> Result<()> {
    let text = toml::to_string_pretty(hp).expect("hyperparams serialize");
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.env.name, EnvName::PointReach);
        assert_eq!(cfg.train.batch_size, 256);
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = Config::parse("[train]\nepochs_max = 3\n\n[env]\nname = \"arm-reach\"\n").unwrap();
        assert_eq!(cfg.train.epochs_max, 3);
        assert_eq!(cfg.train.cycles_per_epoch, 10);
        assert_eq!(cfg.env.name, EnvName::ArmReach);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let err = Config::parse("[train]\nepocs_max = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epocs_max"), "{msg}");
    }

    #[test]
    fn out_of_bounds_hyperparams_are_rejected() {
        assert!(Config::parse("[agent]\ngamma = 0.2\n").is_err());
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let cfg = Config::parse("[train]\nseed = 9\n[agent]\ngamma = 0.9\n").unwrap();
        let again = Config::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn hyperparams_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hp.toml");
        let hp = Hyperparams { gamma: 0.95, ..Hyperparams::baseline() };
        save_hyperparams(&path, &hp).unwrap();
        assert_eq!(load_hyperparams(&path).unwrap(), hp);
    }
}
