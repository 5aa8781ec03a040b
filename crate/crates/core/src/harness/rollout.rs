//! Episode collection for both sides of the CTDE split.
//!
//! Training rollouts compute `s_g` from the true global state (and never
//! reconstruct). Evaluation rollouts are fully decentralized: each agent
//! sees only its own observation history plus its own reconstruction; the
//! true state is recorded for logging alone.

use super::episode::EpisodeRecord;
use super::probes::Probes;
use crate::agents::ppo::ActorCritic;
use crate::agents::{greedy, sample_categorical, select_eps_greedy, PolicySet, SgSource};
use crate::diffusion::{ConditionContext, StateGenerator};
use crate::env::{Action, MabcEnv, Scenario};
use crate::numerics::Rng;

/// ε-greedy training rollout with centralized `s_g`.
pub fn collect_training_episode(
    scenario: &Scenario,
    env_seed: u64,
    policy: &PolicySet,
    epsilon: f32,
    probes: &Probes,
    rng: &mut Rng,
) -> EpisodeRecord {
    let mut env = MabcEnv::new(scenario.clone(), env_seed);
    let n = scenario.n_allies();
    let mut hiddens: Vec<Vec<f32>> = (0..n).map(|_| policy.nets.agent.zero_hidden()).collect();
    let mut states = vec![env.global_state()];
    let mut observations = vec![env.observations()];
    let mut alive = vec![env.alive_mask()];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut terminated = Vec::new();

    loop {
        let obs_now = observations.last().unwrap().clone();
        let alive_now = alive.last().unwrap().clone();
        let shared_sg = match policy.nets.sg_source {
            SgSource::State => {
                probes.note_truth_sg_train();
                Some(policy.extract_sg(states.last().unwrap()))
            }
            _ => None,
        };
        let mut act_idx = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n);
        for a in 0..n {
            if !alive_now[a] {
                act_idx.push(Action::NoOp.index());
                acts.push(Action::NoOp);
                continue;
            }
            let sg = match policy.nets.sg_source {
                SgSource::State => shared_sg.clone().unwrap(),
                SgSource::Obs => policy.extract_sg(&obs_now[a]),
                SgSource::None => vec![0.0; policy.nets.sg_dim],
            };
            let (q, h) = policy.q_step(&obs_now[a], a, &hiddens[a], &sg);
            hiddens[a] = h;
            let u = select_eps_greedy(&q, epsilon, rng);
            act_idx.push(u);
            acts.push(Action::from_index(u));
        }
        let out = env.step(&acts).expect("training env stepped while live");
        actions.push(act_idx);
        rewards.push(out.reward);
        terminated.push(out.terminated);
        states.push(out.state);
        observations.push(out.observations);
        alive.push(env.alive_mask());
        if out.terminated {
            break;
        }
    }

    EpisodeRecord {
        seed: env_seed,
        states,
        observations,
        alive,
        actions,
        rewards,
        terminated,
        outcome: env.outcome(),
        log_probs: None,
    }
}

/// On-policy rollout for the policy-gradient path; stores behavior
/// log-probabilities. `s_g` again comes from the true state (training side).
pub fn collect_pg_episode(
    scenario: &Scenario,
    env_seed: u64,
    ac: &ActorCritic,
    probes: &Probes,
    rng: &mut Rng,
) -> EpisodeRecord {
    let mut env = MabcEnv::new(scenario.clone(), env_seed);
    let n = scenario.n_allies();
    let mut hiddens: Vec<Vec<f32>> = (0..n).map(|_| ac.nets.actor.zero_hidden()).collect();
    let mut states = vec![env.global_state()];
    let mut observations = vec![env.observations()];
    let mut alive = vec![env.alive_mask()];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut terminated = Vec::new();
    let mut log_probs = Vec::new();

    loop {
        let obs_now = observations.last().unwrap().clone();
        let alive_now = alive.last().unwrap().clone();
        let shared_sg = match ac.nets.sg_source {
            SgSource::State => {
                probes.note_truth_sg_train();
                Some(ac.extract_sg(states.last().unwrap()))
            }
            _ => None,
        };
        let mut act_idx = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n);
        let mut lps = Vec::with_capacity(n);
        for a in 0..n {
            if !alive_now[a] {
                act_idx.push(Action::NoOp.index());
                acts.push(Action::NoOp);
                lps.push(0.0);
                continue;
            }
            let sg = match ac.nets.sg_source {
                SgSource::State => shared_sg.clone().unwrap(),
                SgSource::Obs => ac.extract_sg(&obs_now[a]),
                SgSource::None => vec![0.0; ac.nets.sg_dim],
            };
            let (probs, h) = ac.policy_step(&obs_now[a], a, &hiddens[a], &sg);
            hiddens[a] = h;
            let u = sample_categorical(&probs, rng);
            act_idx.push(u);
            acts.push(Action::from_index(u));
            lps.push(probs[u].max(1e-20).ln());
        }
        let out = env.step(&acts).expect("pg env stepped while live");
        actions.push(act_idx);
        rewards.push(out.reward);
        terminated.push(out.terminated);
        log_probs.push(lps);
        states.push(out.state);
        observations.push(out.observations);
        alive.push(env.alive_mask());
        if out.terminated {
            break;
        }
    }

    EpisodeRecord {
        seed: env_seed,
        states,
        observations,
        alive,
        actions,
        rewards,
        terminated,
        outcome: env.outcome(),
        log_probs: Some(log_probs),
    }
}

/// Which trained components drive a decentralized evaluation episode.
pub enum EvalActor<'a> {
    /// Greedy action on Q values.
    Value { policy: &'a PolicySet, generator: Option<&'a StateGenerator> },
    /// Action sampled from the policy distribution.
    Sampling { ac: &'a ActorCritic, generator: Option<&'a StateGenerator> },
}

impl EvalActor<'_> {
    fn sg_source(&self) -> SgSource {
        match self {
            EvalActor::Value { policy, .. } => policy.nets.sg_source,
            EvalActor::Sampling { ac, .. } => ac.nets.sg_source,
        }
    }

    fn sg_dim(&self) -> usize {
        match self {
            EvalActor::Value { policy, .. } => policy.nets.sg_dim,
            EvalActor::Sampling { ac, .. } => ac.nets.sg_dim,
        }
    }

    fn generator(&self) -> Option<&StateGenerator> {
        match self {
            EvalActor::Value { generator, .. } => *generator,
            EvalActor::Sampling { generator, .. } => *generator,
        }
    }

    fn zero_hidden(&self) -> Vec<f32> {
        match self {
            EvalActor::Value { policy, .. } => policy.nets.agent.zero_hidden(),
            EvalActor::Sampling { ac, .. } => ac.nets.actor.zero_hidden(),
        }
    }
}

pub struct EvalEpisode {
    pub record: EpisodeRecord,
    /// `[t][agent]` reconstructed states; None where no reconstruction ran
    /// (dead agent, or a source that does not reconstruct).
    pub reconstructions: Vec<Vec<Option<Vec<f32>>>>,
}

/// Fully decentralized evaluation episode. The decision path below touches
/// only observation histories, hidden states, and the generator; the true
/// state is read solely into the log record.
pub fn collect_eval_episode(
    scenario: &Scenario,
    env_seed: u64,
    actor: &EvalActor<'_>,
    probes: &Probes,
    stream: &Rng,
) -> EvalEpisode {
    let mut env = MabcEnv::new(scenario.clone(), env_seed);
    let n = scenario.n_allies();
    let source = actor.sg_source();
    if source == SgSource::State {
        assert!(
            actor.generator().is_some(),
            "state-sourced evaluation requires a trained state generator"
        );
    }
    let mut hiddens: Vec<Vec<f32>> = (0..n).map(|_| actor.zero_hidden()).collect();
    let mut histories: Vec<Vec<Vec<f32>>> = vec![Vec::new(); n];
    let mut states = vec![env.global_state()];
    let mut observations = vec![env.observations()];
    let mut alive = vec![env.alive_mask()];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut terminated = Vec::new();
    let mut reconstructions = Vec::new();
    let mut action_rng = stream.fork(0xAC7);
    let mut t = 0u64;

    loop {
        let obs_now = observations.last().unwrap().clone();
        let alive_now = alive.last().unwrap().clone();
        for a in 0..n {
            histories[a].push(obs_now[a].clone());
        }
        let mut act_idx = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n);
        let mut recon_row: Vec<Option<Vec<f32>>> = vec![None; n];
        for a in 0..n {
            if !alive_now[a] {
                act_idx.push(Action::NoOp.index());
                acts.push(Action::NoOp);
                continue;
            }
            let sg = match source {
                SgSource::State => {
                    let generator = actor.generator().unwrap();
                    let ctx = ConditionContext::from_history(a, &histories[a], obs_now[a].len());
                    probes.note_reconstruct_eval();
                    let mut recon_rng = stream.fork(0x1_0000_0000 + 8 * t + a as u64);
                    let s_hat = generator.reconstruct(&ctx, &mut recon_rng);
                    let sg = match actor {
                        EvalActor::Value { policy, .. } => policy.extract_sg(&s_hat),
                        EvalActor::Sampling { ac, .. } => ac.extract_sg(&s_hat),
                    };
                    recon_row[a] = Some(s_hat);
                    sg
                }
                SgSource::Obs => match actor {
                    EvalActor::Value { policy, .. } => policy.extract_sg(&obs_now[a]),
                    EvalActor::Sampling { ac, .. } => ac.extract_sg(&obs_now[a]),
                },
                SgSource::None => vec![0.0; actor.sg_dim()],
            };
            let u = match actor {
                EvalActor::Value { policy, .. } => {
                    let (q, h) = policy.q_step(&obs_now[a], a, &hiddens[a], &sg);
                    hiddens[a] = h;
                    greedy(&q)
                }
                EvalActor::Sampling { ac, .. } => {
                    let (probs, h) = ac.policy_step(&obs_now[a], a, &hiddens[a], &sg);
                    hiddens[a] = h;
                    sample_categorical(&probs, &mut action_rng)
                }
            };
            act_idx.push(u);
            acts.push(Action::from_index(u));
        }
        let out = env.step(&acts).expect("eval env stepped while live");
        actions.push(act_idx);
        rewards.push(out.reward);
        terminated.push(out.terminated);
        reconstructions.push(recon_row);
        states.push(out.state);
        observations.push(out.observations);
        alive.push(env.alive_mask());
        t += 1;
        if out.terminated {
            break;
        }
    }

    EvalEpisode {
        record: EpisodeRecord {
            seed: env_seed,
            states,
            observations,
            alive,
            actions,
            rewards,
            terminated,
            outcome: env.outcome(),
            log_probs: None,
        },
        reconstructions,
    }
}
