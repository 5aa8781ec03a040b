//! Run configuration file: sections [env], [diffusion], [extractor], [rl],
//! [run]. Every field is optional and falls back to the built-in default;
//! unknown keys anywhere are rejected with a line-anchored message.

use serde::Deserialize;
use sidiff_core::env::Scenario;
use sidiff_core::harness::{MixerSetting, SgSetting, TrainConfig};
use std::path::Path;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub extractor: ExtractorSection,
    #[serde(default)]
    pub rl: RlSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    /// Built-in scenario name or a path to a scenario TOML file.
    pub scenario: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub k: Option<usize>,
    pub beta_start: Option<f32>,
    pub beta_end: Option<f32>,
    pub p_uncond: Option<f32>,
    pub learning_rate: Option<f32>,
    pub epochs: Option<usize>,
    pub last_episodes: Option<usize>,
    pub widths: Option<[usize; 3]>,
    pub embed_dim: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExtractorSection {
    pub patch_dim: Option<usize>,
    pub heads: Option<usize>,
    pub sg_dim: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RlSection {
    pub gamma: Option<f32>,
    pub epsilon_start: Option<f32>,
    pub epsilon_end: Option<f32>,
    pub epsilon_anneal_frac: Option<f32>,
    pub target_period: Option<u32>,
    pub batch_episodes: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub learning_rate: Option<f32>,
    pub mixer: Option<MixerSetting>,
    pub sg_source: Option<SgSetting>,
    pub rnn_hidden: Option<usize>,
    pub ppo_epochs: Option<usize>,
    pub ppo_batch_episodes: Option<usize>,
    pub ppo_clip: Option<f32>,
    pub ppo_learning_rate: Option<f32>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub total_env_steps: Option<u64>,
    pub max_episodes: Option<u64>,
    pub eval_interval_episodes: Option<u64>,
    pub eval_episodes: Option<usize>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Resolves the scenario: a built-in name first, then a file path.
    pub fn scenario(&self, base_dir: &Path) -> Result<Scenario, String> {
        let spec = self.env.scenario.as_deref().unwrap_or("2_vs_8");
        if let Ok(s) = Scenario::builtin(spec) {
            return Ok(s);
        }
        let path = if Path::new(spec).is_absolute() {
            Path::new(spec).to_path_buf()
        } else {
            base_dir.join(spec)
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("scenario '{spec}': {e} (not a built-in: {:?})", Scenario::builtin_names()))?;
        Scenario::from_toml(&text).map_err(|e| e.to_string())
    }

    /// Freezes the file into a complete TrainConfig.
    pub fn to_train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            gamma: self.rl.gamma.unwrap_or(d.gamma),
            epsilon_start: self.rl.epsilon_start.unwrap_or(d.epsilon_start),
            epsilon_end: self.rl.epsilon_end.unwrap_or(d.epsilon_end),
            epsilon_anneal_frac: self.rl.epsilon_anneal_frac.unwrap_or(d.epsilon_anneal_frac),
            target_period: self.rl.target_period.unwrap_or(d.target_period),
            batch_episodes: self.rl.batch_episodes.unwrap_or(d.batch_episodes),
            buffer_capacity: self.rl.buffer_capacity.unwrap_or(d.buffer_capacity),
            learning_rate: self.rl.learning_rate.unwrap_or(d.learning_rate),
            mixer: self.rl.mixer.unwrap_or(d.mixer),
            sg_source: self.rl.sg_source.unwrap_or(d.sg_source),
            rnn_hidden: self.rl.rnn_hidden.unwrap_or(d.rnn_hidden),
            gen_last_episodes: self.diffusion.last_episodes.unwrap_or(d.gen_last_episodes),
            gen_epochs: self.diffusion.epochs.unwrap_or(d.gen_epochs),
            diffusion_k: self.diffusion.k.unwrap_or(d.diffusion_k),
            beta_start: self.diffusion.beta_start.unwrap_or(d.beta_start),
            beta_end: self.diffusion.beta_end.unwrap_or(d.beta_end),
            p_uncond: self.diffusion.p_uncond.unwrap_or(d.p_uncond),
            gen_learning_rate: self.diffusion.learning_rate.unwrap_or(d.gen_learning_rate),
            gen_widths: self.diffusion.widths.unwrap_or(d.gen_widths),
            gen_embed_dim: self.diffusion.embed_dim.unwrap_or(d.gen_embed_dim),
            patch_dim: self.extractor.patch_dim.unwrap_or(d.patch_dim),
            attention_heads: self.extractor.heads.unwrap_or(d.attention_heads),
            sg_dim: self.extractor.sg_dim.unwrap_or(d.sg_dim),
            total_env_steps: self.run.total_env_steps.unwrap_or(d.total_env_steps),
            max_episodes: self.run.max_episodes.unwrap_or(d.max_episodes),
            eval_interval_episodes: self
                .run
                .eval_interval_episodes
                .unwrap_or(d.eval_interval_episodes),
            eval_episodes: self.run.eval_episodes.unwrap_or(d.eval_episodes),
            workers: self.run.workers.unwrap_or(d.workers),
            seed: self.run.seed.unwrap_or(d.seed),
            ppo_epochs: self.rl.ppo_epochs.unwrap_or(d.ppo_epochs),
            ppo_batch_episodes: self.rl.ppo_batch_episodes.unwrap_or(d.ppo_batch_episodes),
            ppo_clip: self.rl.ppo_clip.unwrap_or(d.ppo_clip),
            ppo_learning_rate: self.rl.ppo_learning_rate.unwrap_or(d.ppo_learning_rate),
        }
    }
}
