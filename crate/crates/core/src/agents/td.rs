//! Episodic TD loss for value decomposition.
//!
//! Online networks unroll over each sampled episode with gradients; target
//! networks (a frozen parameter snapshot of the same layout) provide
//! bootstrap values `r + γ·Q_tot(next, greedy)`. Terminal transitions use
//! the raw reward. Dead agents contribute a masked-out constant.

use super::{MixerNets, PolicyNets, SgSource};
use crate::extractor::patchify;
use crate::harness::episode::EpisodeRecord;
use crate::numerics::{Graph, ParamStore, Tensor, Var};

/// Greedy `Q_tot` at every time index `0..T` of an episode, computed with
/// the given (usually target) parameters. No gradients are kept.
fn greedy_qtots(nets: &PolicyNets, store: &ParamStore, ep: &EpisodeRecord) -> Vec<f32> {
    let n_agents = ep.n_agents();
    let mut g = Graph::new();
    let agent_vars = nets.agent.bind(&mut g, store);
    let ext_vars = nets.extractor.as_ref().map(|e| e.bind(&mut g, store));
    let mixer_vars = match &nets.mixer {
        MixerNets::Monotonic(m) => Some(m.bind(&mut g, store)),
        MixerNets::Vdn => None,
    };
    let mut hiddens: Vec<Var> = (0..n_agents)
        .map(|_| g.input(Tensor::vector(&nets.agent.zero_hidden())))
        .collect();
    let mut out = Vec::with_capacity(ep.len());
    for t in 0..ep.len() {
        let shared_sg = match (nets.sg_source, &ext_vars) {
            (SgSource::State, Some(ext)) => {
                let patches = g.input(patchify(&ep.states[t], nets.patch_dim).patches);
                Some(ext.forward(&mut g, patches))
            }
            _ => None,
        };
        let mut maxes = Vec::with_capacity(n_agents);
        for a in 0..n_agents {
            let sg = match (nets.sg_source, &ext_vars) {
                (SgSource::State, _) => shared_sg.unwrap(),
                (SgSource::Obs, Some(ext)) => {
                    let patches =
                        g.input(patchify(&ep.observations[t][a], nets.patch_dim).patches);
                    ext.forward(&mut g, patches)
                }
                _ => g.input(Tensor::vector(&vec![0.0; nets.sg_dim])),
            };
            let input =
                g.input(Tensor::vector(&nets.agent.encode_input(&ep.observations[t][a], a)));
            let (q, h1) = agent_vars.forward(&mut g, input, hiddens[a], sg);
            hiddens[a] = h1;
            let best = g
                .value(q)
                .data()
                .iter()
                .cloned()
                .fold(f32::NEG_INFINITY, f32::max);
            maxes.push(if ep.alive[t][a] { best } else { 0.0 });
        }
        let qtot = match &mixer_vars {
            None => maxes.iter().sum::<f32>(),
            Some(mv) => {
                let qv = g.input(Tensor::vector(&maxes));
                let sv = g.input(Tensor::vector(&ep.states[t]));
                let tot = mv.forward(&mut g, qv, sv);
                g.value(tot).item()
            }
        };
        out.push(qtot);
    }
    out
}

/// Bootstrap targets `y_t` for each episode of the batch.
pub fn td_targets(
    target_nets: &PolicyNets,
    target_store: &ParamStore,
    batch: &[&EpisodeRecord],
    gamma: f32,
) -> Vec<Vec<f32>> {
    batch
        .iter()
        .map(|ep| {
            let qtots = greedy_qtots(target_nets, target_store, ep);
            (0..ep.len())
                .map(|t| {
                    if ep.terminated[t] || t + 1 >= ep.len() {
                        ep.rewards[t]
                    } else {
                        ep.rewards[t] + gamma * qtots[t + 1]
                    }
                })
                .collect()
        })
        .collect()
}

/// Builds the differentiable TD loss for precomputed targets.
fn td_loss_graph(
    nets: &PolicyNets,
    store: &ParamStore,
    batch: &[&EpisodeRecord],
    targets: &[Vec<f32>],
) -> (Graph, Var) {
    assert!(!batch.is_empty(), "TD loss over an empty batch");
    let mut g = Graph::new();
    let agent_vars = nets.agent.bind(&mut g, store);
    let ext_vars = nets.extractor.as_ref().map(|e| e.bind(&mut g, store));
    let mixer_vars = match &nets.mixer {
        MixerNets::Monotonic(m) => Some(m.bind(&mut g, store)),
        MixerNets::Vdn => None,
    };
    let mut items = Vec::new();
    for (ep, ys) in batch.iter().zip(targets) {
        let n_agents = ep.n_agents();
        let mut hiddens: Vec<Var> = (0..n_agents)
            .map(|_| g.input(Tensor::vector(&nets.agent.zero_hidden())))
            .collect();
        for t in 0..ep.len() {
            let shared_sg = match (nets.sg_source, &ext_vars) {
                (SgSource::State, Some(ext)) => {
                    let patches = g.input(patchify(&ep.states[t], nets.patch_dim).patches);
                    Some(ext.forward(&mut g, patches))
                }
                _ => None,
            };
            let mut chosen = Vec::with_capacity(n_agents);
            for a in 0..n_agents {
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
                    .input(Tensor::vector(&nets.agent.encode_input(&ep.observations[t][a], a)));
                let (q, h1) = agent_vars.forward(&mut g, input, hiddens[a], sg);
                hiddens[a] = h1;
                let mut onehot = vec![0.0f32; nets.agent.config.n_actions];
                onehot[ep.actions[t][a]] = 1.0;
                let sel = g.input(Tensor::vector(&onehot));
                let q_u = g.dot(q, sel);
                // dead agents contribute a masked constant (zero)
                let mask = if ep.alive[t][a] { 1.0 } else { 0.0 };
                chosen.push(g.scale(q_u, mask));
            }
            let qtot = match &mixer_vars {
                None => super::mix_vdn(&mut g, &chosen),
                Some(mv) => {
                    let qv = g.concat0(&chosen);
                    let sv = g.input(Tensor::vector(&ep.states[t]));
                    mv.forward(&mut g, qv, sv)
                }
            };
            let diff = g.add_scalar(qtot, -ys[t]);
            items.push(g.mul(diff, diff));
        }
    }
    let loss = g.mean_vars(&items);
    (g, loss)
}

/// Forward-only TD loss value (used by gradient checks and logging).
pub fn td_loss_value(
    nets: &PolicyNets,
    store: &ParamStore,
    target_nets: &PolicyNets,
    target_store: &ParamStore,
    batch: &[&EpisodeRecord],
    gamma: f32,
) -> f32 {
    let targets = td_targets(target_nets, target_store, batch, gamma);
    let (g, loss) = td_loss_graph(nets, store, batch, &targets);
    g.value(loss).item()
}

/// TD loss with gradients accumulated into `store`; returns the loss.
pub fn td_loss_and_backward(
    nets: &PolicyNets,
    store: &mut ParamStore,
    target_nets: &PolicyNets,
    target_store: &ParamStore,
    batch: &[&EpisodeRecord],
    gamma: f32,
) -> f32 {
    let targets = td_targets(target_nets, target_store, batch, gamma);
    let (mut g, loss) = td_loss_graph(nets, store, batch, &targets);
    let value = g.value(loss).item();
    g.backward(loss, store);
    value
}
