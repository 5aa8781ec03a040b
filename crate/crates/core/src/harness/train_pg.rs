//! Policy-gradient training loop (MAPPO-style) under the same CTDE timing
//! contract as the value-decomposition loop: true-state `s_g` while
//! training, reconstruction only in the evaluation branch.

use super::config::{Algo, TrainConfig};
use super::eval::run_evaluation;
use super::export::write_state_pairs;
use super::metrics::{MetricsRow, MetricsWriter};
use super::probes::Probes;
use super::rollout::{collect_pg_episode, EvalActor};
use super::train::{generator_config, generator_pairs, policy_dims, prepare_run_dir, EvalPoint};
use super::HarnessError;
use crate::agents::ppo::{ppo_update, ActorCritic, ActorCriticConfig};
use crate::diffusion::{StateGenerator, StatePair};
use crate::env::{Scenario, N_ACTIONS};
use crate::numerics::{AdamState, Rng};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct PgArtifacts {
    pub out_dir: PathBuf,
    pub episodes: u64,
    pub env_steps: u64,
    pub eval_history: Vec<EvalPoint>,
    pub probes: super::probes::ProbeSnapshot,
    pub ac: ActorCritic,
    pub generator: Option<StateGenerator>,
}

impl PgArtifacts {
    pub fn final_eval(&self) -> Option<&EvalPoint> {
        self.eval_history.last()
    }
}

pub fn run_training_pg(
    config: &TrainConfig,
    scenario: &Scenario,
    out_dir: &Path,
    force: bool,
) -> Result<PgArtifacts, HarnessError> {
    config.validate().map_err(HarnessError::Config)?;
    prepare_run_dir(out_dir, force, Algo::Mappo, config, scenario)?;

    let root = Rng::new(config.seed);
    let sg_source = config.sg_source.into();
    let mut ac = ActorCritic::new(
        &policy_dims(config, scenario),
        sg_source,
        N_ACTIONS,
        root.fork(1).seed(),
    );
    let ppo_cfg = ActorCriticConfig {
        clip: config.ppo_clip,
        gamma: config.gamma,
        value_coef: 0.5,
        polyak: 0.995,
    };
    let mut adam = AdamState::new(&ac.store, config.ppo_learning_rate);
    let mut generator = if sg_source == crate::agents::SgSource::State {
        Some(
            StateGenerator::new(
                scenario.state_dim(),
                scenario.obs_dim(),
                scenario.n_allies(),
                &generator_config(config),
                root.fork(2).seed(),
            )
            .map_err(HarnessError::Schedule)?,
        )
    } else {
        None
    };

    let mut metrics = MetricsWriter::create(&out_dir.join("metrics.csv"))?;
    let probes = Probes::new();
    let started = Instant::now();
    let mut episode: u64 = 0;
    let mut env_steps: u64 = 0;
    let mut eval_history = Vec::new();
    let mut refresh_count: u64 = 0;
    // recent on-policy episodes feed the generator refresh
    let mut recent = std::collections::VecDeque::new();

    let episode_cap = if config.max_episodes == 0 { u64::MAX } else { config.max_episodes };
    while env_steps < config.total_env_steps && episode < episode_cap {
        let mut batch = Vec::with_capacity(config.ppo_batch_episodes);
        let mut rows = Vec::new();
        let eval_boundary_before = episode / config.eval_interval_episodes.max(1);
        for _ in 0..config.ppo_batch_episodes {
            episode += 1;
            let env_seed = root.fork(0x10_0000 + episode).seed();
            let mut action_rng = root.fork(0x20_0000 + episode);
            let record = collect_pg_episode(scenario, env_seed, &ac, &probes, &mut action_rng);
            env_steps += record.len() as u64;
            rows.push((episode, env_steps, record.total_reward()));
            batch.push(record);
        }
        let refs: Vec<&super::episode::EpisodeRecord> = batch.iter().collect();
        let mut policy_loss = 0.0;
        for _ in 0..config.ppo_epochs.max(1) {
            let (pl, _vl) = ppo_update(&mut ac, &refs, &ppo_cfg, &mut adam);
            policy_loss = pl;
        }
        for record in batch {
            recent.push_back(record);
            if recent.len() > config.gen_last_episodes {
                recent.pop_front();
            }
        }

        let eval_boundary_after = episode / config.eval_interval_episodes.max(1);
        let run_ends = env_steps >= config.total_env_steps || episode >= episode_cap;
        let do_eval = config.eval_interval_episodes > 0
            && (eval_boundary_after > eval_boundary_before || run_ends);
        let (mut sg_loss, mut eval_win, mut eval_ret) = (None, None, None);
        if do_eval {
            if let Some(generator) = generator.as_mut() {
                refresh_count += 1;
                let episodes: Vec<Vec<StatePair>> = recent
                    .iter()
                    .map(generator_pairs)
                    .filter(|p| !p.is_empty())
                    .collect();
                if !episodes.is_empty() {
                    let mut gen_rng = root.fork(0x40_0000 + refresh_count);
                    let summary = generator.fit(&episodes, config.gen_epochs, &mut gen_rng);
                    sg_loss = Some(summary.final_loss);
                }
            }
            let actor = EvalActor::Sampling { ac: &ac, generator: generator.as_ref() };
            let eval_seed = root.fork(0x50_0000 + episode).seed();
            let summary = run_evaluation(
                scenario,
                &actor,
                config.eval_episodes,
                eval_seed,
                config.workers,
                &probes,
            );
            eval_win = Some(summary.win_rate);
            eval_ret = Some(summary.mean_return);
            if let Some(first) = summary.episodes.first() {
                write_state_pairs(
                    &out_dir.join(format!("state_pairs/eval_{episode}.jsonl")),
                    first,
                )?;
            }
            eval_history.push(EvalPoint {
                episode,
                env_steps,
                win_rate: summary.win_rate,
                mean_return: summary.mean_return,
                sg_loss,
            });
        }

        let n_rows = rows.len();
        for (i, (ep_no, steps, ret)) in rows.into_iter().enumerate() {
            let last = i + 1 == n_rows;
            metrics.append(&MetricsRow {
                episode: ep_no,
                env_steps: steps,
                epsilon: 0.0,
                train_return: ret,
                td_loss: if last { Some(policy_loss) } else { None },
                sg_loss: if last { sg_loss } else { None },
                eval_win_rate: if last { eval_win } else { None },
                eval_return: if last { eval_ret } else { None },
                wall_clock_s: started.elapsed().as_secs_f64(),
            })?;
        }
    }

    crate::numerics::checkpoint::save(&ac.store, &out_dir.join("checkpoints/policy.sidf"))?;
    if let Some(generator) = &generator {
        generator.save(&out_dir.join("checkpoints/generator.sidf"))?;
    }

    Ok(PgArtifacts {
        out_dir: out_dir.to_path_buf(),
        episodes: episode,
        env_steps,
        eval_history,
        probes: probes.snapshot(),
        ac,
        generator,
    })
}
