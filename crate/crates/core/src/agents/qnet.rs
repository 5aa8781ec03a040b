//! Recurrent per-agent value network.
//!
//! Parameters are shared across agents; the agent id is appended one-hot to
//! the observation. The state embedding `s_g` enters through the fully
//! connected layer after the GRU, never before it.

use crate::numerics::layers::{gru_cell, AffineParams, GruParams, GruVars};
use crate::numerics::{Graph, ParamStore, Rng, Tensor, Var};

#[derive(Clone, Debug)]
pub struct AgentNetConfig {
    pub obs_dim: usize,
    pub n_agents: usize,
    pub sg_dim: usize,
    pub hidden: usize,
    pub n_actions: usize,
}

impl AgentNetConfig {
    pub fn new(obs_dim: usize, n_agents: usize, sg_dim: usize) -> Self {
        AgentNetConfig { obs_dim, n_agents, sg_dim, hidden: 64, n_actions: 6 }
    }

    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.n_agents
    }
}

pub struct AgentNet {
    pub config: AgentNetConfig,
    enc: AffineParams,
    gru: GruParams,
    post: AffineParams,
    head: AffineParams,
}

impl AgentNet {
    pub fn new(store: &mut ParamStore, prefix: &str, config: AgentNetConfig, rng: &mut Rng) -> Self {
        let enc = AffineParams::register(
            store,
            &format!("{prefix}/enc"),
            config.input_dim(),
            config.hidden,
            rng,
        );
        let gru = GruParams::register(store, &format!("{prefix}/gru"), config.hidden, config.hidden, rng);
        let post = AffineParams::register(
            store,
            &format!("{prefix}/post"),
            config.hidden + config.sg_dim,
            config.hidden,
            rng,
        );
        let head =
            AffineParams::register(store, &format!("{prefix}/head"), config.hidden, config.n_actions, rng);
        AgentNet { config, enc, gru, post, head }
    }

    /// Observation with the agent's one-hot id appended.
    pub fn encode_input(&self, obs: &[f32], agent_id: usize) -> Vec<f32> {
        assert_eq!(obs.len(), self.config.obs_dim, "obs dim mismatch");
        assert!(agent_id < self.config.n_agents);
        let mut v = obs.to_vec();
        let mut onehot = vec![0.0; self.config.n_agents];
        onehot[agent_id] = 1.0;
        v.extend_from_slice(&onehot);
        v
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> AgentVars {
        AgentVars {
            enc_w: g.param(store, self.enc.w),
            enc_b: g.param(store, self.enc.b),
            gru: GruVars::bind(g, store, &self.gru),
            post_w: g.param(store, self.post.w),
            post_b: g.param(store, self.post.b),
            head_w: g.param(store, self.head.w),
            head_b: g.param(store, self.head.b),
        }
    }

    /// Forward-only step outside any training graph.
    pub fn q_values(
        &self,
        store: &ParamStore,
        obs: &[f32],
        agent_id: usize,
        hidden: &[f32],
        sg: &[f32],
    ) -> (Vec<f32>, Vec<f32>) {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let input = g.input(Tensor::vector(&self.encode_input(obs, agent_id)));
        let h = g.input(Tensor::vector(hidden));
        let sg_v = g.input(Tensor::vector(sg));
        let (q, h1) = vars.forward(&mut g, input, h, sg_v);
        (g.detach(q).into_data(), g.detach(h1).into_data())
    }

    pub fn zero_hidden(&self) -> Vec<f32> {
        vec![0.0; self.config.hidden]
    }
}

pub struct AgentVars {
    enc_w: Var,
    enc_b: Var,
    gru: GruVars,
    post_w: Var,
    post_b: Var,
    head_w: Var,
    head_b: Var,
}

impl AgentVars {
    /// One step: encoded obs → GRU → fc over [hidden; s_g] → action values.
    /// Returns (q, next hidden).
    pub fn forward(&self, g: &mut Graph, input: Var, hidden: Var, sg: Var) -> (Var, Var) {
        let e_pre = g.affine_vec(self.enc_w, input, self.enc_b);
        let e = g.silu(e_pre);
        let h1 = gru_cell(g, e, hidden, &self.gru);
        let joined = g.concat0(&[h1, sg]);
        let f_pre = g.affine_vec(self.post_w, joined, self.post_b);
        let f = g.silu(f_pre);
        let q = g.affine_vec(self.head_w, f, self.head_b);
        (q, h1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeroed_net(config: AgentNetConfig) -> (ParamStore, AgentNet) {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1);
        let net = AgentNet::new(&mut store, "agent", config, &mut rng);
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        (store, net)
    }

    #[test]
    fn zero_parameters_give_zero_q() {
        let (store, net) = zeroed_net(AgentNetConfig::new(5, 2, 3));
        let (q, _) = net.q_values(&store, &[0.4; 5], 1, &net.zero_hidden(), &[0.9; 3]);
        assert_eq!(q, vec![0.0; 6]);
    }

    #[test]
    fn sg_changes_q_for_random_weights() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(2);
        let net = AgentNet::new(&mut store, "agent", AgentNetConfig::new(5, 2, 3), &mut rng);
        let h = net.zero_hidden();
        let (q1, _) = net.q_values(&store, &[0.4; 5], 0, &h, &[0.0, 0.0, 0.0]);
        let (q2, _) = net.q_values(&store, &[0.4; 5], 0, &h, &[0.7, -0.1, 0.4]);
        assert_ne!(q1, q2);
    }

    #[test]
    fn hidden_state_evolves_across_steps() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(3);
        let net = AgentNet::new(&mut store, "agent", AgentNetConfig::new(4, 2, 2), &mut rng);
        let obs = [0.2, 0.8, 0.1, 0.5];
        let sg = [0.3, 0.3];
        let (q1, h1) = net.q_values(&store, &obs, 0, &net.zero_hidden(), &sg);
        let (q2, _) = net.q_values(&store, &obs, 0, &h1, &sg);
        assert_ne!(q1, q2, "repeated observation must be state-dependent");
    }

    #[test]
    fn agent_id_feeds_the_network() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(4);
        let net = AgentNet::new(&mut store, "agent", AgentNetConfig::new(4, 3, 2), &mut rng);
        let h = net.zero_hidden();
        let (q0, _) = net.q_values(&store, &[0.5; 4], 0, &h, &[0.0; 2]);
        let (q2, _) = net.q_values(&store, &[0.5; 4], 2, &h, &[0.0; 2]);
        assert_ne!(q0, q2);
    }
}
