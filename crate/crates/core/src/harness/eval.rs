//! Decentralized evaluation over many episodes, optionally in parallel.

use super::probes::Probes;
use super::rollout::{collect_eval_episode, EvalActor, EvalEpisode};
use crate::env::{Outcome, Scenario};
use crate::numerics::Rng;
use rayon::prelude::*;

pub struct EvalSummary {
    pub win_rate: f32,
    pub mean_return: f32,
    pub episodes: Vec<EvalEpisode>,
}

/// Runs `n_episodes` greedy/sampled decentralized episodes. Each episode
/// derives its own seed and rng stream from `eval_seed` and its index, so
/// results are identical for any worker count.
pub fn run_evaluation(
    scenario: &Scenario,
    actor: &EvalActor<'_>,
    n_episodes: usize,
    eval_seed: u64,
    workers: usize,
    probes: &Probes,
) -> EvalSummary {
    if n_episodes == 0 {
        return EvalSummary { win_rate: 0.0, mean_return: 0.0, episodes: Vec::new() };
    }
    let root = Rng::new(eval_seed);
    let one = |i: usize| -> EvalEpisode {
        let env_seed = root.fork(0xE9 + 2 * i as u64).seed();
        let stream = root.fork(0x57 + 2 * i as u64 + 1);
        collect_eval_episode(scenario, env_seed, actor, probes, &stream)
    };
    let episodes: Vec<EvalEpisode> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool");
        pool.install(|| (0..n_episodes).into_par_iter().map(one).collect())
    } else {
        (0..n_episodes).map(one).collect()
    };
    let wins = episodes.iter().filter(|e| e.record.outcome == Outcome::Win).count();
    let mean_return =
        episodes.iter().map(|e| e.record.total_reward()).sum::<f32>() / n_episodes as f32;
    EvalSummary {
        win_rate: wins as f32 / n_episodes as f32,
        mean_return,
        episodes,
    }
}
