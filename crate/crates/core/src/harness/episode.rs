//! Episode traces and the replay buffer.

use crate::env::Outcome;
use crate::numerics::Rng;
use std::collections::VecDeque;

/// One complete episode. States, observations, and alive flags hold T+1
/// entries (including the post-terminal snapshot); actions, rewards, and
/// termination flags hold T.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub states: Vec<Vec<f32>>,
    /// `[t][agent]`.
    pub observations: Vec<Vec<Vec<f32>>>,
    /// `[t][agent]`, alive before acting at t.
    pub alive: Vec<Vec<bool>>,
    /// `[t][agent]` action indices.
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f32>,
    /// Termination flag per transition; true at most once, at the end.
    pub terminated: Vec<bool>,
    pub outcome: Outcome,
    /// `[t][agent]` behavior log-probabilities, stored by on-policy runs.
    pub log_probs: Option<Vec<Vec<f32>>>,
}

impl EpisodeRecord {
    /// Number of transitions T.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f32 {
        self.rewards.iter().sum()
    }

    pub fn n_agents(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }

    /// Checks the length and single-terminal invariants.
    pub fn validate(&self) {
        let t = self.len();
        assert!(t > 0, "empty episode");
        assert_eq!(self.states.len(), t + 1, "states must hold T+1 entries");
        assert_eq!(self.observations.len(), t + 1);
        assert_eq!(self.alive.len(), t + 1);
        assert_eq!(self.rewards.len(), t);
        assert_eq!(self.terminated.len(), t);
        let terminals = self.terminated.iter().filter(|&&b| b).count();
        assert!(terminals <= 1, "multiple terminal flags");
        if terminals == 1 {
            assert!(self.terminated[t - 1], "terminal flag must be last");
        }
        if let Some(lp) = &self.log_probs {
            assert_eq!(lp.len(), t, "log-prob rows must match transitions");
        }
    }

    /// Observation history of one agent up to and including time t.
    pub fn obs_history(&self, agent: usize, t: usize) -> Vec<Vec<f32>> {
        (0..=t).map(|i| self.observations[i][agent].clone()).collect()
    }
}

/// FIFO ring of episodes with uniform sampling.
pub struct ReplayBuffer {
    items: VecDeque<EpisodeRecord>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { items: VecDeque::new(), capacity }
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        episode.validate();
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(episode);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<&EpisodeRecord> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| &self.items[rng.below(self.items.len())]).collect()
    }

    /// The most recent `n` episodes, oldest first.
    pub fn last_n(&self, n: usize) -> Vec<&EpisodeRecord> {
        let start = self.items.len().saturating_sub(n);
        self.items.iter().skip(start).collect()
    }
}
