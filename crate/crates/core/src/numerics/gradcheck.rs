//! Central finite-difference gradient verification.
//!
//! The caller populates analytic gradients (zero, forward, backward), then
//! hands over a pure loss closure. The reported error is the ∞-norm of the
//! difference relative to the larger gradient magnitude, which keeps the
//! check meaningful under f32 forward noise.

use super::param::ParamStore;
use super::rng::Rng;

pub struct GradCheck {
    pub h: f32,
    /// Upper bound on probed coordinates per parameter (sampled
    /// deterministically when a parameter is larger).
    pub max_coords_per_param: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { h: 1e-3, max_coords_per_param: 24 }
    }
}

impl GradCheck {
    /// Max relative error between the store's analytic gradients and central
    /// finite differences of `loss_fn`. Parameter values are restored.
    pub fn max_rel_err(
        &self,
        store: &mut ParamStore,
        rng: &mut Rng,
        loss_fn: impl Fn(&ParamStore) -> f32,
    ) -> f32 {
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for id in store.ids().collect::<Vec<_>>() {
            let n = store.value(id).numel();
            let coords: Vec<usize> = if n <= self.max_coords_per_param {
                (0..n).collect()
            } else {
                (0..self.max_coords_per_param).map(|_| rng.below(n)).collect()
            };
            for c in coords {
                let orig = store.value(id).data()[c];
                store.value_mut(id).data_mut()[c] = orig + self.h;
                let plus = loss_fn(store);
                store.value_mut(id).data_mut()[c] = orig - self.h;
                let minus = loss_fn(store);
                store.value_mut(id).data_mut()[c] = orig;
                numeric.push(((plus as f64 - minus as f64) / (2.0 * self.h as f64)) as f32);
                analytic.push(store.grad(id)[c]);
            }
        }
        let scale = analytic
            .iter()
            .chain(numeric.iter())
            .fold(0.0f32, |m, &v| m.max(v.abs()))
            .max(1e-6);
        analytic
            .iter()
            .zip(&numeric)
            .fold(0.0f32, |m, (&a, &n)| m.max((a - n).abs() / scale))
    }
}
