//! Instrumented counters for the CTDE separation contract.
//!
//! Training may read the true state on the decision path; evaluation may
//! not. Reconstruction belongs to evaluation only. Every call site that
//! converts a true state into `s_g` for action selection, and every
//! reconstruction call, bumps one of these counters under the phase the
//! harness declared.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Default, Debug)]
pub struct Probes {
    /// True state fed the extractor for action selection during training
    /// rollouts (allowed; this is the CTDE training side).
    pub truth_sg_train_rollout: AtomicU64,
    /// True state fed the extractor on the evaluation decision path
    /// (must stay zero).
    pub truth_sg_eval_decision: AtomicU64,
    /// Reconstruction calls during training rollouts (must stay zero).
    pub reconstruct_train_rollout: AtomicU64,
    /// Reconstruction calls on the evaluation decision path.
    pub reconstruct_eval: AtomicU64,
}

impl Probes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn note_truth_sg_train(&self) {
        self.truth_sg_train_rollout.fetch_add(1, Ordering::Relaxed);
    }

    pub fn note_truth_sg_eval(&self) {
        self.truth_sg_eval_decision.fetch_add(1, Ordering::Relaxed);
    }

    pub fn note_reconstruct_train(&self) {
        self.reconstruct_train_rollout.fetch_add(1, Ordering::Relaxed);
    }

    pub fn note_reconstruct_eval(&self) {
        self.reconstruct_eval.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> ProbeSnapshot {
        ProbeSnapshot {
            truth_sg_train_rollout: self.truth_sg_train_rollout.load(Ordering::Relaxed),
            truth_sg_eval_decision: self.truth_sg_eval_decision.load(Ordering::Relaxed),
            reconstruct_train_rollout: self.reconstruct_train_rollout.load(Ordering::Relaxed),
            reconstruct_eval: self.reconstruct_eval.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeSnapshot {
    pub truth_sg_train_rollout: u64,
    pub truth_sg_eval_decision: u64,
    pub reconstruct_train_rollout: u64,
    pub reconstruct_eval: u64,
}

impl ProbeSnapshot {
    /// The separation contract: no truth on the eval decision path, no
    /// reconstruction on the training rollout path.
    pub fn ctde_clean(&self) -> bool {
        self.truth_sg_eval_decision == 0 && self.reconstruct_train_rollout == 0
    }
}
