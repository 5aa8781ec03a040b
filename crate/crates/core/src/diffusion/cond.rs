//! Conditioning inputs for the state generator.

/// Trajectory window length: the past four observations plus the current one.
pub const HISTORY_WINDOW: usize = 5;

/// The condition c = {agent, trajectory} for noise prediction, plus the
/// unconditional-class flag. A null context embeds to exact zero vectors.
#[derive(Clone, Debug)]
pub struct ConditionContext {
    pub agent_id: usize,
    /// Exactly [`HISTORY_WINDOW`] observation slots, oldest first,
    /// zero-padded at episode start.
    pub trajectory: Vec<Vec<f32>>,
    pub is_null: bool,
}

impl ConditionContext {
    /// Builds the window ending at `history.len() - 1` from an agent's
    /// observation history, zero-padding slots before the episode start.
    pub fn from_history(agent_id: usize, history: &[Vec<f32>], obs_dim: usize) -> Self {
        let mut trajectory = Vec::with_capacity(HISTORY_WINDOW);
        for offset in (0..HISTORY_WINDOW).rev() {
            if history.len() > offset {
                let obs = &history[history.len() - 1 - offset];
                assert_eq!(obs.len(), obs_dim, "observation dim mismatch in history");
                trajectory.push(obs.clone());
            } else {
                trajectory.push(vec![0.0; obs_dim]);
            }
        }
        ConditionContext { agent_id, trajectory, is_null: false }
    }

    /// The unconditional class: downstream embeddings are exactly zero.
    pub fn null(obs_dim: usize) -> Self {
        ConditionContext {
            agent_id: 0,
            trajectory: vec![vec![0.0; obs_dim]; HISTORY_WINDOW],
            is_null: true,
        }
    }

    /// One-hot agent input, or zeros for the null class.
    pub fn agent_input(&self, n_agents: usize) -> Vec<f32> {
        let mut v = vec![0.0; n_agents];
        if !self.is_null {
            assert!(self.agent_id < n_agents, "agent id {} out of range", self.agent_id);
            v[self.agent_id] = 1.0;
        }
        v
    }

    /// Flattened trajectory window, or zeros for the null class.
    pub fn trajectory_input(&self) -> Vec<f32> {
        assert_eq!(self.trajectory.len(), HISTORY_WINDOW, "window must hold 5 slots");
        if self.is_null {
            return vec![0.0; self.trajectory.iter().map(Vec::len).sum()];
        }
        self.trajectory.iter().flatten().copied().collect()
    }
}

/// Sinusoidal position code of the diffusion iteration k.
pub fn iteration_code(k: usize, dim: usize) -> Vec<f32> {
    assert!(dim % 2 == 0, "iteration code dim must be even");
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(i as f64) * (10_000.0f64).ln() / half as f64).exp();
        let arg = k as f64 * freq;
        out.push(arg.sin() as f32);
        out.push(arg.cos() as f32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_pads_at_episode_start() {
        let history = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let ctx = ConditionContext::from_history(1, &history, 2);
        assert_eq!(ctx.trajectory.len(), 5);
        assert_eq!(ctx.trajectory[0], vec![0.0, 0.0]);
        assert_eq!(ctx.trajectory[2], vec![0.0, 0.0]);
        assert_eq!(ctx.trajectory[3], vec![1.0, 2.0]);
        assert_eq!(ctx.trajectory[4], vec![3.0, 4.0]);
    }

    #[test]
    fn window_keeps_only_last_five() {
        let history: Vec<Vec<f32>> = (0..8).map(|i| vec![i as f32]).collect();
        let ctx = ConditionContext::from_history(0, &history, 1);
        let flat = ctx.trajectory_input();
        assert_eq!(flat, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn null_context_inputs_are_zero() {
        let ctx = ConditionContext::null(3);
        assert!(ctx.agent_input(4).iter().all(|&v| v == 0.0));
        assert!(ctx.trajectory_input().iter().all(|&v| v == 0.0));
        assert_eq!(ctx.trajectory_input().len(), 15);
    }

    #[test]
    fn iteration_codes_distinguish_k() {
        let a = iteration_code(1, 32);
        let b = iteration_code(2, 32);
        assert_eq!(a.len(), 32);
        assert_ne!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }
}
