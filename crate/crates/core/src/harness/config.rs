//! Training configuration. Defaults mirror the reference hyperparameter
//! table: Adam at 5e-4, batch of one episode, 1000 generator epochs, L = 10
//! refresh episodes, K = 20 diffusion iterations, p = 0.001 unconditional
//! probability, patch dimension 5, 4 attention heads.

use crate::agents::{MixerKind, SgSource};
use serde::{Deserialize, Serialize};

/// Which training loop a run uses. `vdn`/`qmix` go through the
/// value-decomposition loop (sum vs monotonic mixer); `mappo` through the
/// policy-gradient loop.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Vdn,
    Qmix,
    Mappo,
}

impl Algo {
    pub fn parse(s: &str) -> Option<Algo> {
        match s {
            "vdn" => Some(Algo::Vdn),
            "qmix" => Some(Algo::Qmix),
            "mappo" => Some(Algo::Mappo),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Vdn => "vdn",
            Algo::Qmix => "qmix",
            Algo::Mappo => "mappo",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    // value-decomposition / policy-gradient shared
    pub gamma: f32,
    pub epsilon_start: f32,
    pub epsilon_end: f32,
    /// Fraction of total env steps over which ε anneals linearly.
    pub epsilon_anneal_frac: f32,
    /// Target-network swap period, in episodes.
    pub target_period: u32,
    pub batch_episodes: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f32,
    pub mixer: MixerSetting,
    pub sg_source: SgSetting,
    pub rnn_hidden: usize,

    // state generator
    pub gen_last_episodes: usize,
    pub gen_epochs: usize,
    pub diffusion_k: usize,
    pub beta_start: f32,
    pub beta_end: f32,
    pub p_uncond: f32,
    pub gen_learning_rate: f32,
    pub gen_widths: [usize; 3],
    pub gen_embed_dim: usize,

    // state extractor
    pub patch_dim: usize,
    pub attention_heads: usize,
    pub sg_dim: usize,

    // run control
    pub total_env_steps: u64,
    /// Hard cap on training episodes (0 = unlimited); whichever of the
    /// step budget or episode cap hits first ends the run.
    pub max_episodes: u64,
    /// Evaluate (and refresh the generator) every N training episodes;
    /// 0 disables evaluation entirely.
    pub eval_interval_episodes: u64,
    pub eval_episodes: usize,
    pub workers: usize,
    pub seed: u64,

    // policy-gradient specifics
    pub ppo_epochs: usize,
    pub ppo_batch_episodes: usize,
    pub ppo_clip: f32,
    pub ppo_learning_rate: f32,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MixerSetting {
    Vdn,
    Monotonic,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SgSetting {
    State,
    Obs,
    None,
}

impl From<MixerSetting> for MixerKind {
    fn from(m: MixerSetting) -> MixerKind {
        match m {
            MixerSetting::Vdn => MixerKind::Vdn,
            MixerSetting::Monotonic => MixerKind::Monotonic,
        }
    }
}

impl From<SgSetting> for SgSource {
    fn from(s: SgSetting) -> SgSource {
        match s {
            SgSetting::State => SgSource::State,
            SgSetting::Obs => SgSource::Obs,
            SgSetting::None => SgSource::None,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_frac: 0.2,
            target_period: 200,
            batch_episodes: 8,
            buffer_capacity: 2000,
            learning_rate: 0.0005,
            mixer: MixerSetting::Vdn,
            sg_source: SgSetting::State,
            rnn_hidden: 64,
            gen_last_episodes: 10,
            gen_epochs: 1000,
            diffusion_k: 20,
            beta_start: 0.05,
            beta_end: 0.5,
            p_uncond: 0.001,
            gen_learning_rate: 0.0005,
            gen_widths: [32, 64, 128],
            gen_embed_dim: 64,
            patch_dim: 5,
            attention_heads: 4,
            sg_dim: 32,
            total_env_steps: 50_000,
            max_episodes: 0,
            eval_interval_episodes: 200,
            eval_episodes: 32,
            workers: 1,
            seed: 0,
            ppo_epochs: 4,
            ppo_batch_episodes: 8,
            ppo_clip: 0.2,
            ppo_learning_rate: 0.0005,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err("epsilon bounds must lie in [0, 1]".into());
        }
        if self.diffusion_k == 0 {
            return Err("diffusion_k must be positive".into());
        }
        if self.patch_dim == 0 {
            return Err("patch_dim must be positive".into());
        }
        if self.attention_heads == 0 || self.sg_dim == 0 {
            return Err("extractor dims must be positive".into());
        }
        if self.total_env_steps == 0 {
            return Err("total_env_steps must be positive".into());
        }
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        if self.batch_episodes == 0 || self.buffer_capacity == 0 {
            return Err("replay settings must be positive".into());
        }
        if self.gen_last_episodes == 0 {
            return Err("gen_last_episodes must be positive".into());
        }
        Ok(())
    }

    /// Linear ε anneal over the first `epsilon_anneal_frac` of the budget.
    pub fn epsilon_at(&self, env_steps: u64) -> f32 {
        let horizon = (self.total_env_steps as f64 * self.epsilon_anneal_frac as f64).max(1.0);
        let frac = (env_steps as f64 / horizon).min(1.0) as f32;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn epsilon_anneals_linearly_then_floors() {
        let cfg = TrainConfig { total_env_steps: 1000, ..Default::default() };
        assert_eq!(cfg.epsilon_at(0), 1.0);
        let mid = cfg.epsilon_at(100); // halfway through the 200-step anneal
        assert!((mid - 0.525).abs() < 1e-6);
        assert!((cfg.epsilon_at(200) - 0.05).abs() < 1e-6);
        assert!((cfg.epsilon_at(900) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn toml_roundtrip_rejects_unknown_keys() {
        let cfg = TrainConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let bad = format!("{text}\ndiffusson_k = 3\n");
        assert!(toml::from_str::<TrainConfig>(&bad).is_err());
    }
}
