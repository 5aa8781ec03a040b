//! Bias-corrected Adam over a [`ParamStore`].

use super::param::ParamStore;

pub const DEFAULT_LEARNING_RATE: f32 = 0.0005;

/// Per-parameter first/second moment state.
pub struct AdamState {
    first_moment: Vec<Vec<f32>>,
    second_moment: Vec<Vec<f32>>,
    step_count: u64,
    pub learning_rate: f32,
    beta1: f32,
    beta2: f32,
    epsilon: f32,
}

impl AdamState {
    pub fn new(store: &ParamStore, learning_rate: f32) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        let first_moment = store.ids().map(|id| vec![0.0; store.value(id).numel()]).collect();
        let second_moment = store.ids().map(|id| vec![0.0; store.value(id).numel()]).collect();
        AdamState {
            first_moment,
            second_moment,
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one in-place update from the store's accumulated gradients.
    ///
    /// Panics if no backward pass has populated gradients since the last
    /// `zero_grads`, or if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert!(
            store.grads_populated(),
            "adam_step called without populated gradients"
        );
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let slot = id.0 as usize;
            let grads = store.grad(id).to_vec();
            assert!(
                grads.iter().all(|g| g.is_finite()),
                "non-finite gradient for {}",
                store.name(id)
            );
            let m = &mut self.first_moment[slot];
            let v = &mut self.second_moment[slot];
            let w = store.value_mut(id).data_mut();
            for i in 0..w.len() {
                let g = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
