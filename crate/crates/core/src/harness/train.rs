//! Value-decomposition training loop (centralized training, decentralized
//! evaluation).
//!
//! Per episode: collect with ε-greedy actions where `s_g` comes from the
//! true state, store in replay, one TD update of agents + mixer + extractor
//! jointly, target swap every M episodes. The state generator trains only
//! right before each evaluation, on the last L episodes.

use super::config::{Algo, TrainConfig};
use super::episode::{EpisodeRecord, ReplayBuffer};
use super::eval::{run_evaluation, EvalSummary};
use super::export::write_state_pairs;
use super::metrics::{MetricsRow, MetricsWriter};
use super::probes::{ProbeSnapshot, Probes};
use super::rollout::{collect_training_episode, EvalActor};
use super::{HarnessError, RunSnapshot};
use crate::agents::td::td_loss_and_backward;
use crate::agents::{MixerKind, PolicyDims, PolicySet};
use crate::diffusion::{ConditionContext, GeneratorConfig, StateGenerator, StatePair};
use crate::env::{ReplayRecorder, Scenario};
use crate::numerics::{AdamState, Rng};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct EvalPoint {
    pub episode: u64,
    pub env_steps: u64,
    pub win_rate: f32,
    pub mean_return: f32,
    pub sg_loss: Option<f32>,
}

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub episodes: u64,
    pub env_steps: u64,
    pub eval_history: Vec<EvalPoint>,
    pub probes: ProbeSnapshot,
    pub policy: PolicySet,
    pub generator: Option<StateGenerator>,
}

impl RunArtifacts {
    pub fn final_eval(&self) -> Option<&EvalPoint> {
        self.eval_history.last()
    }
}

pub(super) fn policy_dims(config: &TrainConfig, scenario: &Scenario) -> PolicyDims {
    PolicyDims {
        state_dim: scenario.state_dim(),
        obs_dim: scenario.obs_dim(),
        n_agents: scenario.n_allies(),
        sg_dim: config.sg_dim,
        patch_dim: config.patch_dim,
        attention_heads: config.attention_heads,
        rnn_hidden: config.rnn_hidden,
    }
}

pub(super) fn generator_config(config: &TrainConfig) -> GeneratorConfig {
    GeneratorConfig {
        k_steps: config.diffusion_k,
        beta_start: config.beta_start,
        beta_end: config.beta_end,
        p_uncond: config.p_uncond,
        learning_rate: config.gen_learning_rate,
        widths: config.gen_widths,
        embed_dim: config.gen_embed_dim,
        k_code_dim: 32,
    }
}

/// Training pairs for the generator: every (state, per-agent context) of an
/// episode where that agent is alive.
pub fn generator_pairs(ep: &EpisodeRecord) -> Vec<StatePair> {
    let n = ep.n_agents();
    let mut out = Vec::new();
    for t in 0..ep.len() {
        for a in 0..n {
            if !ep.alive[t][a] {
                continue;
            }
            let ctx = ConditionContext::from_history(
                a,
                &ep.obs_history(a, t),
                ep.observations[t][a].len(),
            );
            out.push(StatePair { state: ep.states[t].clone(), ctx });
        }
    }
    out
}

pub(super) fn prepare_run_dir(
    out_dir: &Path,
    force: bool,
    algo: Algo,
    config: &TrainConfig,
    scenario: &Scenario,
) -> Result<(), HarnessError> {
    if out_dir.exists() {
        if !force {
            return Err(HarnessError::OutDirExists(out_dir.to_path_buf()));
        }
        std::fs::remove_dir_all(out_dir)?;
    }
    std::fs::create_dir_all(out_dir.join("checkpoints"))?;
    std::fs::create_dir_all(out_dir.join("replays"))?;
    std::fs::create_dir_all(out_dir.join("state_pairs"))?;
    let snapshot = RunSnapshot {
        algo,
        scenario: scenario.name.clone(),
        config: config.clone(),
    };
    std::fs::write(
        out_dir.join("config.toml"),
        toml::to_string_pretty(&snapshot).expect("config serializes"),
    )?;
    std::fs::write(out_dir.join("scenario.toml"), scenario.to_toml())?;
    Ok(())
}

/// Replays an evaluation episode's actions through a fresh env to record a
/// tick-by-tick replay file.
fn dump_replay(scenario: &Scenario, ep: &EpisodeRecord, path: &Path) -> Result<(), HarnessError> {
    let mut env = crate::env::MabcEnv::new(scenario.clone(), ep.seed);
    let mut rec = ReplayRecorder::new(&env);
    for acts in &ep.actions {
        let actions: Vec<crate::env::Action> =
            acts.iter().map(|&u| crate::env::Action::from_index(u)).collect();
        let out = env.step(&actions).expect("replaying recorded episode");
        rec.record(&env, &actions, out.reward);
    }
    std::fs::write(path, rec.to_jsonl())?;
    Ok(())
}

/// Refreshes the generator on the last L episodes; returns the summary loss.
fn refresh_generator(
    generator: &mut StateGenerator,
    buffer: &ReplayBuffer,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Option<f32> {
    let recent = buffer.last_n(config.gen_last_episodes);
    let episodes: Vec<Vec<StatePair>> = recent
        .iter()
        .map(|ep| generator_pairs(ep))
        .filter(|pairs| !pairs.is_empty())
        .collect();
    if episodes.is_empty() {
        return None;
    }
    let summary = generator.fit(&episodes, config.gen_epochs, rng);
    Some(summary.final_loss)
}

/// Algorithm: value decomposition with the reconstruction-based evaluation
/// branch. `algo` picks the mixer (VDN or the monotonic variant).
pub fn run_training(
    algo: Algo,
    config: &TrainConfig,
    scenario: &Scenario,
    out_dir: &Path,
    force: bool,
) -> Result<RunArtifacts, HarnessError> {
    config.validate().map_err(HarnessError::Config)?;
    let mixer = match algo {
        Algo::Vdn => MixerKind::Vdn,
        Algo::Qmix => MixerKind::Monotonic,
        Algo::Mappo => return Err(HarnessError::Config("mappo uses run_training_pg".into())),
    };
    prepare_run_dir(out_dir, force, algo, config, scenario)?;

    let root = Rng::new(config.seed);
    let sg_source = config.sg_source.into();
    let mut policy = PolicySet::new(&policy_dims(config, scenario), sg_source, mixer, root.fork(1).seed());
    let mut target_store = policy.target_copy();
    let mut adam = AdamState::new(&policy.store, config.learning_rate);
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

    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut metrics = MetricsWriter::create(&out_dir.join("metrics.csv"))?;
    let probes = Probes::new();
    let started = Instant::now();

    let mut episode: u64 = 0;
    let mut env_steps: u64 = 0;
    let mut eval_history = Vec::new();
    let mut refresh_count: u64 = 0;

    let episode_cap = if config.max_episodes == 0 { u64::MAX } else { config.max_episodes };
    while env_steps < config.total_env_steps && episode < episode_cap {
        episode += 1;
        let epsilon = config.epsilon_at(env_steps);
        let env_seed = root.fork(0x10_0000 + episode).seed();
        let mut action_rng = root.fork(0x20_0000 + episode);
        let record =
            collect_training_episode(scenario, env_seed, &policy, epsilon, &probes, &mut action_rng);
        env_steps += record.len() as u64;
        let train_return = record.total_reward();
        buffer.push(record);

        let td_loss = if buffer.len() >= config.batch_episodes {
            let mut sample_rng = root.fork(0x30_0000 + episode);
            let batch = buffer.sample(config.batch_episodes, &mut sample_rng);
            policy.store.zero_grads();
            let loss = td_loss_and_backward(
                &policy.nets,
                &mut policy.store,
                &policy.nets,
                &target_store,
                &batch,
                config.gamma,
            );
            adam.step(&mut policy.store);
            Some(loss)
        } else {
            None
        };

        if config.target_period > 0 && episode % config.target_period as u64 == 0 {
            target_store = policy.target_copy();
        }

        let run_ends = env_steps >= config.total_env_steps || episode >= episode_cap;
        let do_eval = config.eval_interval_episodes > 0
            && (episode % config.eval_interval_episodes == 0 || run_ends);
        let (mut sg_loss, mut eval_win, mut eval_ret) = (None, None, None);
        if do_eval {
            if let Some(generator) = generator.as_mut() {
                refresh_count += 1;
                let mut gen_rng = root.fork(0x40_0000 + refresh_count);
                sg_loss = refresh_generator(generator, &buffer, config, &mut gen_rng);
            }
            let actor = EvalActor::Value { policy: &policy, generator: generator.as_ref() };
            let eval_seed = root.fork(0x50_0000 + episode).seed();
            let summary: EvalSummary = run_evaluation(
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
                dump_replay(
                    scenario,
                    &first.record,
                    &out_dir.join(format!("replays/eval_{episode}.jsonl")),
                )?;
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
            log::info!(
                "episode {episode}: eval win_rate {:.3} return {:.2}",
                summary.win_rate,
                summary.mean_return
            );
        }

        metrics.append(&MetricsRow {
            episode,
            env_steps,
            epsilon,
            train_return,
            td_loss,
            sg_loss,
            eval_win_rate: eval_win,
            eval_return: eval_ret,
            wall_clock_s: started.elapsed().as_secs_f64(),
        })?;
    }

    crate::numerics::checkpoint::save(&policy.store, &out_dir.join("checkpoints/policy.sidf"))?;
    if let Some(generator) = &generator {
        generator.save(&out_dir.join("checkpoints/generator.sidf"))?;
    }

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        episodes: episode,
        env_steps,
        eval_history,
        probes: probes.snapshot(),
        policy,
        generator,
    })
}
