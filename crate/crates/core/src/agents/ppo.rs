//! Clipped-ratio policy gradient (MAPPO-style) with a centralized critic.

use super::qnet::{AgentNet, AgentNetConfig};
use super::{PolicyDims, SgSource};
use crate::extractor::{patchify, ExtractorNet};
use crate::harness::episode::EpisodeRecord;
use crate::numerics::layers::AffineParams;
use crate::numerics::{Graph, ParamStore, Rng, Tensor, Var};

#[derive(Clone, Debug)]
pub struct ActorCriticConfig {
    pub clip: f32,
    pub gamma: f32,
    pub value_coef: f32,
    /// Target-critic polyak coefficient (fraction of the old target kept).
    pub polyak: f32,
}

impl Default for ActorCriticConfig {
    fn default() -> Self {
        ActorCriticConfig { clip: 0.2, gamma: 0.99, value_coef: 0.5, polyak: 0.995 }
    }
}

/// Centralized state-value MLP.
pub struct CriticNet {
    l1: AffineParams,
    l2: AffineParams,
}

impl CriticNet {
    fn new(store: &mut ParamStore, prefix: &str, state_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        CriticNet {
            l1: AffineParams::register(store, &format!("{prefix}/l1"), state_dim, hidden, rng),
            l2: AffineParams::register(store, &format!("{prefix}/l2"), hidden, 1, rng),
        }
    }

    fn bind(&self, g: &mut Graph, store: &ParamStore) -> CriticVars {
        CriticVars {
            l1_w: g.param(store, self.l1.w),
            l1_b: g.param(store, self.l1.b),
            l2_w: g.param(store, self.l2.w),
            l2_b: g.param(store, self.l2.b),
        }
    }
}

pub struct CriticVars {
    l1_w: Var,
    l1_b: Var,
    l2_w: Var,
    l2_b: Var,
}

impl CriticVars {
    pub fn forward(&self, g: &mut Graph, state: Var) -> Var {
        let h_pre = g.affine_vec(self.l1_w, state, self.l1_b);
        let h = g.silu(h_pre);
        g.affine_vec(self.l2_w, h, self.l2_b)
    }
}

pub struct AcNets {
    pub actor: AgentNet,
    pub critic: CriticNet,
    pub extractor: Option<ExtractorNet>,
    pub sg_source: SgSource,
    pub state_dim: usize,
    pub patch_dim: usize,
    pub sg_dim: usize,
}

/// Actor, critic, extractor and their parameters, plus the polyak-averaged
/// target critic snapshot.
pub struct ActorCritic {
    pub nets: AcNets,
    pub store: ParamStore,
    pub target_store: ParamStore,
}

impl ActorCritic {
    pub fn new(dims: &PolicyDims, sg_source: SgSource, n_actions: usize, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let mut cfg = AgentNetConfig::new(dims.obs_dim, dims.n_agents, dims.sg_dim);
        cfg.hidden = dims.rnn_hidden;
        cfg.n_actions = n_actions;
        let actor = AgentNet::new(&mut store, "actor", cfg, &mut rng);
        let critic = CriticNet::new(&mut store, "critic", dims.state_dim, dims.rnn_hidden, &mut rng);
        let extractor = match sg_source {
            SgSource::State => Some(ExtractorNet::new(
                &mut store,
                "se",
                dims.state_dim,
                dims.patch_dim,
                dims.attention_heads,
                dims.sg_dim,
                &mut rng,
            )),
            SgSource::Obs => Some(ExtractorNet::new(
                &mut store,
                "se",
                dims.obs_dim,
                dims.patch_dim,
                dims.attention_heads,
                dims.sg_dim,
                &mut rng,
            )),
            SgSource::None => None,
        };
        let target_store = store.clone();
        ActorCritic {
            nets: AcNets {
                actor,
                critic,
                extractor,
                sg_source,
                state_dim: dims.state_dim,
                patch_dim: dims.patch_dim,
                sg_dim: dims.sg_dim,
            },
            store,
            target_store,
        }
    }

    pub fn extract_sg(&self, input: &[f32]) -> Vec<f32> {
        match &self.nets.extractor {
            Some(net) => net.extract(&self.store, input),
            None => vec![0.0; self.nets.sg_dim],
        }
    }

    /// Forward-only policy step: action probabilities and next hidden.
    pub fn policy_step(
        &self,
        obs: &[f32],
        agent_id: usize,
        hidden: &[f32],
        sg: &[f32],
    ) -> (Vec<f32>, Vec<f32>) {
        let mut g = Graph::new();
        let vars = self.nets.actor.bind(&mut g, &self.store);
        let input = g.input(Tensor::vector(&self.nets.actor.encode_input(obs, agent_id)));
        let h = g.input(Tensor::vector(hidden));
        let sg_v = g.input(Tensor::vector(sg));
        let (logits, h1) = vars.forward(&mut g, input, h, sg_v);
        let probs = g.softmax(logits, 0);
        (g.detach(probs).into_data(), g.detach(h1).into_data())
    }

    /// State value under the online or target critic.
    pub fn value_of(&self, state: &[f32], use_target: bool) -> f32 {
        let store = if use_target { &self.target_store } else { &self.store };
        let mut g = Graph::new();
        let vars = self.nets.critic.bind(&mut g, store);
        let s = g.input(Tensor::vector(state));
        let v = vars.forward(&mut g, s);
        g.value(v).item()
    }

    fn polyak_target(&mut self, tau: f32) {
        self.target_store.polyak_from(&self.store, tau);
    }
}

/// Discounted suffix returns of one episode.
pub fn episode_returns(rewards: &[f32], gamma: f32) -> Vec<f32> {
    let mut out = vec![0.0f32; rewards.len()];
    let mut acc = 0.0f32;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// One PPO-clip update over a batch of on-policy episodes with stored
/// log-probabilities. Returns (policy loss, value loss). Also polyak-updates
/// the target critic.
pub fn ppo_update(
    ac: &mut ActorCritic,
    batch: &[&EpisodeRecord],
    cfg: &ActorCriticConfig,
    adam: &mut crate::numerics::AdamState,
) -> (f32, f32) {
    assert!(!batch.is_empty(), "PPO update over an empty batch");
    for ep in batch {
        assert!(
            ep.log_probs.is_some(),
            "PPO batch episodes must carry stored log-probabilities"
        );
    }
    ac.store.zero_grads();
    let nets = &ac.nets;
    let mut g = Graph::new();
    let actor_vars = nets.actor.bind(&mut g, &ac.store);
    let critic_vars = nets.critic.bind(&mut g, &ac.store);
    let ext_vars = nets.extractor.as_ref().map(|e| e.bind(&mut g, &ac.store));

    let mut policy_items = Vec::new();
    let mut value_items = Vec::new();
    for ep in batch {
        let n_agents = ep.n_agents();
        let returns = episode_returns(&ep.rewards, cfg.gamma);
        let logps = ep.log_probs.as_ref().unwrap();
        let mut hiddens: Vec<Var> = (0..n_agents)
            .map(|_| g.input(Tensor::vector(&nets.actor.zero_hidden())))
            .collect();
        for t in 0..ep.len() {
            let state_leaf = g.input(Tensor::vector(&ep.states[t]));
            let shared_sg = match (nets.sg_source, &ext_vars) {
                (SgSource::State, Some(ext)) => {
                    let patches = g.input(patchify(&ep.states[t], nets.patch_dim).patches);
                    Some(ext.forward(&mut g, patches))
                }
                _ => None,
            };
            // advantage against the frozen target critic
            let advantage = returns[t] - ac.value_of(&ep.states[t], true);
            for a in 0..n_agents {
                if !ep.alive[t][a] {
                    continue;
                }
                let sg = match (nets.sg_source, &ext_vars) {
                    (SgSource::State, _) => shared_sg.unwrap(),
                    (SgSource::Obs, Some(ext)) => {
                        let patches =
                            g.input(patchify(&ep.observations[t][a], nets.patch_dim).patches);
                        ext.forward(&mut g, patches)
                    }
                    _ => g.input(Tensor::vector(&vec![0.0; nets.sg_dim])),
                };
                let input = g
                    .input(Tensor::vector(&nets.actor.encode_input(&ep.observations[t][a], a)));
                let (logits, h1) = actor_vars.forward(&mut g, input, hiddens[a], sg);
                hiddens[a] = h1;
                let probs = g.softmax(logits, 0);
                let safe = g.clamp(probs, 1e-20, 1.0);
                let logp_all = g.log(safe);
                let mut onehot = vec![0.0f32; nets.actor.config.n_actions];
                onehot[ep.actions[t][a]] = 1.0;
                let sel = g.input(Tensor::vector(&onehot));
                let logp_new = g.dot(logp_all, sel);
                let log_ratio = g.add_scalar(logp_new, -logps[t][a]);
                let ratio = g.exp(log_ratio);
                let surr1 = g.scale(ratio, advantage);
                let clipped = g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
                let surr2 = g.scale(clipped, advantage);
                let obj = g.min_elem(surr1, surr2);
                policy_items.push(obj);
            }
            let v = critic_vars.forward(&mut g, state_leaf);
            let diff = g.add_scalar(v, -returns[t]);
            value_items.push(g.mul(diff, diff));
        }
    }
    let policy_obj = g.mean_vars(&policy_items);
    let policy_loss = g.neg(policy_obj);
    let value_loss = g.mean_vars(&value_items);
    let scaled_value = g.scale(value_loss, cfg.value_coef);
    let total = g.add(policy_loss, scaled_value);
    let (pol_v, val_v) = (g.value(policy_loss).item(), g.value(value_loss).item());
    g.backward(total, &mut ac.store);
    adam.step(&mut ac.store);
    ac.polyak_target(cfg.polyak);
    (pol_v, val_v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_are_discounted_suffix_sums() {
        let r = [1.0, 0.0, 2.0];
        let g = episode_returns(&r, 0.5);
        assert_eq!(g, vec![1.0 + 0.5 * (0.0 + 0.5 * 2.0), 1.0, 2.0]);
    }
}
