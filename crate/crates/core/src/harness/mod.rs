//! CTDE orchestration: rollouts, replay storage, training loops,
//! decentralized evaluation, metrics, and run artifacts.
//!
//! Run directory layout: `config.toml` (frozen snapshot), `scenario.toml`,
//! `checkpoints/`, `replays/`, `state_pairs/`, `metrics.csv`.

pub mod config;
pub mod episode;
pub mod eval;
pub mod export;
pub mod metrics;
pub mod probes;
pub mod rollout;
pub mod train;
pub mod train_pg;

pub use config::{Algo, MixerSetting, SgSetting, TrainConfig};
pub use episode::{EpisodeRecord, ReplayBuffer};
pub use eval::{run_evaluation, EvalSummary};
pub use export::{fidelity_fraction, read_state_pairs, write_state_pairs, StatePairRow};
pub use probes::{ProbeSnapshot, Probes};
pub use rollout::{
    collect_eval_episode, collect_pg_episode, collect_training_episode, EvalActor, EvalEpisode,
};
pub use train::{generator_pairs, run_training, EvalPoint, RunArtifacts};
pub use train_pg::{run_training_pg, PgArtifacts};

use crate::agents::ppo::ActorCritic;
use crate::agents::{MixerKind, PolicySet};
use crate::diffusion::{ScheduleError, StateGenerator};
use crate::env::{Scenario, ScenarioError};
use crate::numerics::checkpoint::{self, CheckpointError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("config error: {0}")]
    Config(String),
    #[error("run directory {0} already exists (use force to overwrite)")]
    OutDirExists(PathBuf),
}

/// The frozen per-run configuration written into the run directory.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct RunSnapshot {
    pub algo: Algo,
    pub scenario: String,
    pub config: TrainConfig,
}

/// Trained components re-hydrated from a run directory.
pub enum LoadedPolicy {
    Value(PolicySet, Option<StateGenerator>),
    Pg(ActorCritic, Option<StateGenerator>),
}

/// Loads the config snapshot, scenario, and checkpoints of a finished run.
pub fn load_run(run_dir: &Path) -> Result<(RunSnapshot, Scenario, LoadedPolicy), HarnessError> {
    let snapshot: RunSnapshot =
        toml::from_str(&std::fs::read_to_string(run_dir.join("config.toml"))?)
            .map_err(|e| HarnessError::Config(format!("config.toml: {e}")))?;
    let scenario = Scenario::from_toml(&std::fs::read_to_string(run_dir.join("scenario.toml"))?)?;
    let policy_path = run_dir.join("checkpoints/policy.sidf");
    let gen_path = run_dir.join("checkpoints/generator.sidf");

    let sg_source = snapshot.config.sg_source.into();
    let generator = if gen_path.exists() {
        Some(StateGenerator::load(&gen_path)?)
    } else {
        None
    };
    let dims = train::policy_dims(&snapshot.config, &scenario);
    let loaded = match snapshot.algo {
        Algo::Vdn | Algo::Qmix => {
            let mixer =
                if snapshot.algo == Algo::Vdn { MixerKind::Vdn } else { MixerKind::Monotonic };
            let mut policy = PolicySet::new(&dims, sg_source, mixer, 0);
            checkpoint::load_into(&mut policy.store, &policy_path)?;
            LoadedPolicy::Value(policy, generator)
        }
        Algo::Mappo => {
            let mut ac = ActorCritic::new(&dims, sg_source, crate::env::N_ACTIONS, 0);
            checkpoint::load_into(&mut ac.store, &policy_path)?;
            ac.target_store = ac.store.clone();
            LoadedPolicy::Pg(ac, generator)
        }
    };
    Ok((snapshot, scenario, loaded))
}
