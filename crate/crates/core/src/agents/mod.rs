//! Agent networks, mixers, action selection, and the TD / PPO updates.

pub mod mixer;
pub mod ppo;
pub mod qnet;
pub mod select;
pub mod td;

pub use mixer::{mix_vdn, MonotonicMixer};
pub use ppo::{ActorCritic, ActorCriticConfig};
pub use qnet::{AgentNet, AgentNetConfig};
pub use select::{greedy, sample_categorical, select_eps_greedy};

use crate::extractor::ExtractorNet;
use crate::numerics::{ParamStore, Rng};

/// Where the extractor's input comes from.
///
/// `State` is the full method (true state while training, reconstruction at
/// evaluation). `Obs` feeds each agent's own observation through the
/// extractor instead (the generator-free control). `None` zeroes `s_g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgSource {
    State,
    Obs,
    None,
}

pub enum MixerNets {
    Vdn,
    Monotonic(MonotonicMixer),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixerKind {
    Vdn,
    Monotonic,
}

/// Network layout for the jointly-trained trio: agent net + mixer +
/// extractor. Parameters live in the sibling store of [`PolicySet`].
pub struct PolicyNets {
    pub agent: AgentNet,
    pub mixer: MixerNets,
    pub extractor: Option<ExtractorNet>,
    pub sg_source: SgSource,
    pub state_dim: usize,
    pub patch_dim: usize,
    pub sg_dim: usize,
}

pub struct PolicySet {
    pub nets: PolicyNets,
    pub store: ParamStore,
}

pub struct PolicyDims {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub n_agents: usize,
    pub sg_dim: usize,
    pub patch_dim: usize,
    pub attention_heads: usize,
    pub rnn_hidden: usize,
}

impl PolicySet {
    pub fn new(dims: &PolicyDims, sg_source: SgSource, mixer_kind: MixerKind, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let mut cfg = AgentNetConfig::new(dims.obs_dim, dims.n_agents, dims.sg_dim);
        cfg.hidden = dims.rnn_hidden;
        let agent = AgentNet::new(&mut store, "agent", cfg, &mut rng);
        let mixer = match mixer_kind {
            MixerKind::Vdn => MixerNets::Vdn,
            MixerKind::Monotonic => MixerNets::Monotonic(MonotonicMixer::new(
                &mut store,
                "mix",
                dims.n_agents,
                dims.state_dim,
                32,
                &mut rng,
            )),
        };
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
        PolicySet {
            nets: PolicyNets {
                agent,
                mixer,
                extractor,
                sg_source,
                state_dim: dims.state_dim,
                patch_dim: dims.patch_dim,
                sg_dim: dims.sg_dim,
            },
            store,
        }
    }

    /// Frozen copy for target networks.
    pub fn target_copy(&self) -> ParamStore {
        self.store.clone()
    }

    /// `s_g` from whatever vector this policy's source feeds the extractor
    /// (forward-only; no graph kept).
    pub fn extract_sg(&self, input: &[f32]) -> Vec<f32> {
        match &self.nets.extractor {
            Some(net) => net.extract(&self.store, input),
            None => vec![0.0; self.nets.sg_dim],
        }
    }

    /// Forward-only Q step for rollouts.
    pub fn q_step(
        &self,
        obs: &[f32],
        agent_id: usize,
        hidden: &[f32],
        sg: &[f32],
    ) -> (Vec<f32>, Vec<f32>) {
        self.nets.agent.q_values(&self.store, obs, agent_id, hidden, sg)
    }
}
