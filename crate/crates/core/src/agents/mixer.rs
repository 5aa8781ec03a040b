//! Value-decomposition mixers: plain sum (VDN) and a monotonic
//! hypernetwork mixer (QMIX-style) behind a config switch.

use crate::numerics::layers::AffineParams;
use crate::numerics::{Graph, ParamStore, Rng, Tensor, Var};

/// Parameter-free sum: Q_tot = Σ_a Q_a. The all-dead edge mixes to 0.
pub fn mix_vdn(g: &mut Graph, per_agent: &[Var]) -> Var {
    if per_agent.is_empty() {
        return g.input(Tensor::scalar(0.0));
    }
    let stacked = g.concat0(per_agent);
    g.sum_all(stacked)
}

/// Hypernetwork mixer with non-negative mixing weights (absolute value),
/// so ∂Q_tot/∂Q_a ≥ 0 for every agent.
pub struct MonotonicMixer {
    pub n_agents: usize,
    pub embed: usize,
    hyper_w1: AffineParams,
    hyper_b1: AffineParams,
    hyper_w2: AffineParams,
    hyper_v1: AffineParams,
    hyper_v2: AffineParams,
}

impl MonotonicMixer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        rng: &mut Rng,
    ) -> Self {
        MonotonicMixer {
            n_agents,
            embed,
            hyper_w1: AffineParams::register(
                store,
                &format!("{prefix}/hw1"),
                state_dim,
                embed * n_agents,
                rng,
            ),
            hyper_b1: AffineParams::register(store, &format!("{prefix}/hb1"), state_dim, embed, rng),
            hyper_w2: AffineParams::register(store, &format!("{prefix}/hw2"), state_dim, embed, rng),
            hyper_v1: AffineParams::register(store, &format!("{prefix}/hv1"), state_dim, embed, rng),
            hyper_v2: AffineParams::register(store, &format!("{prefix}/hv2"), embed, 1, rng),
        }
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> MonotonicVars {
        MonotonicVars {
            n_agents: self.n_agents,
            embed: self.embed,
            hw1_w: g.param(store, self.hyper_w1.w),
            hw1_b: g.param(store, self.hyper_w1.b),
            hb1_w: g.param(store, self.hyper_b1.w),
            hb1_b: g.param(store, self.hyper_b1.b),
            hw2_w: g.param(store, self.hyper_w2.w),
            hw2_b: g.param(store, self.hyper_w2.b),
            hv1_w: g.param(store, self.hyper_v1.w),
            hv1_b: g.param(store, self.hyper_v1.b),
            hv2_w: g.param(store, self.hyper_v2.w),
            hv2_b: g.param(store, self.hyper_v2.b),
        }
    }
}

pub struct MonotonicVars {
    n_agents: usize,
    embed: usize,
    hw1_w: Var,
    hw1_b: Var,
    hb1_w: Var,
    hb1_b: Var,
    hw2_w: Var,
    hw2_b: Var,
    hv1_w: Var,
    hv1_b: Var,
    hv2_w: Var,
    hv2_b: Var,
}

impl MonotonicVars {
    /// `q` is the per-agent utility vector `[n_agents]`; `state` the global
    /// state the hypernetwork conditions on.
    pub fn forward(&self, g: &mut Graph, q: Var, state: Var) -> Var {
        assert_eq!(g.value(q).shape(), &[self.n_agents], "per-agent utilities");
        let w1_flat_pre = g.affine_vec(self.hw1_w, state, self.hw1_b);
        let w1_flat = g.abs(w1_flat_pre);
        let w1 = g.reshape(w1_flat, vec![self.embed, self.n_agents]);
        let b1 = g.affine_vec(self.hb1_w, state, self.hb1_b);
        let hidden_pre = g.matvec(w1, q);
        let hidden_sum = g.add(hidden_pre, b1);
        let hidden = g.elu(hidden_sum);

        let w2_pre = g.affine_vec(self.hw2_w, state, self.hw2_b);
        let w2 = g.abs(w2_pre);
        let v_hidden_pre = g.affine_vec(self.hv1_w, state, self.hv1_b);
        let v_hidden = g.elu(v_hidden_pre);
        let v = g.affine_vec(self.hv2_w, v_hidden, self.hv2_b);

        let mixed = g.dot(w2, hidden);
        g.add(mixed, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vdn_sums_utilities() {
        let mut g = Graph::new();
        let a = g.input(Tensor::scalar(1.0));
        let b = g.input(Tensor::scalar(2.5));
        let tot = mix_vdn(&mut g, &[a, b]);
        assert_eq!(g.value(tot).item(), 3.5);
    }

    #[test]
    fn vdn_empty_mixes_to_zero() {
        let mut g = Graph::new();
        let tot = mix_vdn(&mut g, &[]);
        assert_eq!(g.value(tot).item(), 0.0);
    }

    #[test]
    fn vdn_is_linear() {
        let mut g = Graph::new();
        let q1 = [0.3f32, -1.2];
        let q2 = [0.9f32, 2.0];
        let mk = |g: &mut Graph, q: &[f32]| -> Vec<Var> {
            q.iter().map(|&v| g.input(Tensor::scalar(v))).collect()
        };
        let v1 = mk(&mut g, &q1);
        let v2 = mk(&mut g, &q2);
        let sum: Vec<f32> = q1.iter().zip(&q2).map(|(a, b)| a + b).collect();
        let vs = mk(&mut g, &sum);
        let t1 = mix_vdn(&mut g, &v1);
        let t2 = mix_vdn(&mut g, &v2);
        let ts = mix_vdn(&mut g, &vs);
        assert!(
            (g.value(ts).item() - (g.value(t1).item() + g.value(t2).item())).abs() < 1e-6
        );
    }

    #[test]
    fn monotonic_mixer_never_decreases_in_any_utility() {
        // 100 random nets/inputs; bumping one utility must not lower Q_tot
        let state_dim = 6;
        for trial in 0..100 {
            let mut store = ParamStore::new();
            let mut rng = Rng::new(5000 + trial);
            let mixer = MonotonicMixer::new(&mut store, "mix", 3, state_dim, 8, &mut rng);
            let state: Vec<f32> = rng.uniform_vec(state_dim, 0.0, 1.0);
            let q: Vec<f32> = rng.uniform_vec(3, -2.0, 2.0);
            let eval = |qv: &[f32]| -> f32 {
                let mut g = Graph::new();
                let vars = mixer.bind(&mut g, &store);
                let qi = g.input(Tensor::vector(qv));
                let si = g.input(Tensor::vector(&state));
                let tot = vars.forward(&mut g, qi, si);
                g.value(tot).item()
            };
            let base = eval(&q);
            for a in 0..3 {
                let mut bumped = q.clone();
                bumped[a] += 0.25;
                assert!(
                    eval(&bumped) >= base - 1e-5,
                    "trial {trial}: increasing Q_{a} decreased Q_tot"
                );
            }
        }
    }
}
