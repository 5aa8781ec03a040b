//! The state generator: training and sampling around the U-Net.
//!
//! Environment states live in [0, 1]; diffusion runs in [−1, 1] model space
//! (zero-centered data matches the N(0, I) prior), so `fit` remaps inputs
//! and `reconstruct` remaps outputs back.

use super::cond::ConditionContext;
use super::schedule::{denoise_step_from, forward_diffuse, DiffusionSchedule, ScheduleError};
use super::unet::{StateGeneratorNet, UNetConfig};
use crate::numerics::checkpoint::{self, CheckpointError};
use crate::numerics::{AdamState, Graph, ParamStore, Rng, Tensor};
use std::path::Path;

#[derive(Clone, Debug)]
pub struct GeneratorConfig {
    pub k_steps: usize,
    pub beta_start: f32,
    pub beta_end: f32,
    pub p_uncond: f32,
    pub learning_rate: f32,
    pub widths: [usize; 3],
    pub embed_dim: usize,
    pub k_code_dim: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            k_steps: 20,
            beta_start: 0.05,
            beta_end: 0.5,
            p_uncond: 0.001,
            learning_rate: 0.0005,
            widths: [32, 64, 128],
            embed_dim: 64,
            k_code_dim: 32,
        }
    }
}

/// One training item: a global state (in [0, 1]) and the condition under
/// which its noise must be predicted.
#[derive(Clone, Debug)]
pub struct StatePair {
    pub state: Vec<f32>,
    pub ctx: ConditionContext,
}

#[derive(Clone, Debug)]
pub struct FitSummary {
    pub final_loss: f32,
    pub epochs_run: usize,
    pub optimizer_steps: usize,
}

/// Diffusion state generator shared by all agents; conditioning on the
/// agent id (e_A) is what differentiates per-agent reconstructions.
pub struct StateGenerator {
    pub net: StateGeneratorNet,
    pub store: ParamStore,
    pub sched: DiffusionSchedule,
    pub p_uncond: f32,
    adam: AdamState,
}

impl StateGenerator {
    pub fn new(
        state_dim: usize,
        obs_dim: usize,
        n_agents: usize,
        cfg: &GeneratorConfig,
        seed: u64,
    ) -> Result<Self, ScheduleError> {
        let sched = DiffusionSchedule::make(cfg.k_steps, cfg.beta_start, cfg.beta_end)?;
        if !sched.is_strong() {
            log::warn!(
                "weak diffusion schedule (alpha_bar[K] = {}); reconstruction from pure noise \
                 will be biased",
                sched.alpha_bar(cfg.k_steps)
            );
        }
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let unet_cfg = UNetConfig {
            state_dim,
            obs_dim,
            n_agents,
            widths: cfg.widths,
            embed_dim: cfg.embed_dim,
            k_code_dim: cfg.k_code_dim,
        };
        let net = StateGeneratorNet::new(&mut store, "sg", unet_cfg, &mut rng);
        let adam = AdamState::new(&store, cfg.learning_rate);
        Ok(StateGenerator { net, store, sched, p_uncond: cfg.p_uncond, adam })
    }

    pub fn state_dim(&self) -> usize {
        self.net.config.state_dim
    }

    fn obs_dim(&self) -> usize {
        self.net.config.obs_dim
    }

    /// Eq.-style training loss over a batch, without touching parameters:
    /// per item draw k ~ U{1..K}, ε ~ N(0,I), β ~ Bern(p); noise the state,
    /// predict under (possibly nulled) conditions, mean squared-norm error.
    pub fn sg_loss(&self, batch: &[StatePair], rng: &mut Rng) -> f32 {
        self.sg_loss_with_p(batch, rng, self.p_uncond)
    }

    /// [`Self::sg_loss`] with an explicit masking probability (1.0 forces
    /// the unconditional class everywhere).
    pub fn sg_loss_with_p(&self, batch: &[StatePair], rng: &mut Rng, p_uncond: f32) -> f32 {
        let (loss, g) = self.loss_graph(batch, rng, p_uncond);
        g.value(loss).item()
    }

    /// Evaluates the loss and accumulates its gradients into the store
    /// without stepping the optimizer.
    pub fn sg_loss_and_backward(&mut self, batch: &[StatePair], rng: &mut Rng) -> f32 {
        let (loss, mut g) = self.loss_graph(batch, rng, self.p_uncond);
        let value = g.value(loss).item();
        g.backward(loss, &mut self.store);
        value
    }

    fn loss_graph(&self, batch: &[StatePair], rng: &mut Rng, p_uncond: f32) -> (crate::numerics::Var, Graph) {
        assert!(!batch.is_empty(), "sg_loss over an empty batch");
        let d = self.state_dim();
        let mut g = Graph::new();
        let vars = self.net.bind(&mut g, &self.store);
        let mut items = Vec::with_capacity(batch.len());
        for pair in batch {
            assert_eq!(pair.state.len(), d, "state dim mismatch");
            let k = 1 + rng.below(self.sched.k_steps());
            let eps = rng.normal_vec(d);
            let masked = rng.bernoulli(p_uncond);
            let x0 = to_model_space(&pair.state);
            let x_k = forward_diffuse(&x0, k, &eps, &self.sched);
            let xv = g.input(Tensor::matrix(1, d, x_k));
            let target = g.input(Tensor::matrix(1, d, eps));
            let pred = if masked {
                let null = ConditionContext::null(self.obs_dim());
                vars.forward(&mut g, xv, k, &null)
            } else {
                vars.forward(&mut g, xv, k, &pair.ctx)
            };
            items.push(g.sq_diff_sum(target, pred));
        }
        let loss = g.mean_vars(&items);
        (loss, g)
    }

    /// One Adam step over one episode's pairs; returns the pre-step loss.
    fn train_step(&mut self, pairs: &[StatePair], rng: &mut Rng) -> f32 {
        self.store.zero_grads();
        let (loss, mut g) = self.loss_graph(pairs, rng, self.p_uncond);
        let value = g.value(loss).item();
        g.backward(loss, &mut self.store);
        self.adam.step(&mut self.store);
        value
    }

    /// Trains for `epochs` passes over the episodes; each optimizer step
    /// consumes one episode's pairs (batch size: one episode).
    pub fn fit(&mut self, episodes: &[Vec<StatePair>], epochs: usize, rng: &mut Rng) -> FitSummary {
        assert!(!episodes.is_empty(), "fit over an empty episode set");
        assert!(episodes.iter().all(|e| !e.is_empty()), "fit with an empty episode");
        let mut steps = 0;
        for _ in 0..epochs {
            for episode in episodes {
                self.train_step(episode, rng);
                steps += 1;
            }
        }
        // summary loss on the full data, fresh sampling stream
        let all: Vec<StatePair> = episodes.iter().flatten().cloned().collect();
        let final_loss = self.sg_loss(&all, &mut rng.fork(0x5105));
        FitSummary { final_loss, epochs_run: epochs, optimizer_steps: steps }
    }

    /// One reverse step from a noise estimate produced by the live net
    /// (model space).
    pub fn denoise_step(
        &self,
        s_hat_k: &[f32],
        ctx: &ConditionContext,
        k: usize,
        z: &[f32],
    ) -> Vec<f32> {
        let eps_hat = self.net.predict_noise(&self.store, s_hat_k, ctx, k);
        denoise_step_from(s_hat_k, &eps_hat, k, &self.sched, z)
    }

    /// Full reverse chain from N(0, I); returns a state-space vector.
    ///
    /// Panics on a null context: reconstruction is per-agent by contract.
    pub fn reconstruct(&self, ctx: &ConditionContext, rng: &mut Rng) -> Vec<f32> {
        assert!(!ctx.is_null, "reconstruct requires a non-null condition context");
        let d = self.state_dim();
        let mut x = rng.normal_vec(d);
        let mut g = Graph::new();
        let vars = self.net.bind(&mut g, &self.store);
        for k in (1..=self.sched.k_steps()).rev() {
            let xv = g.input(Tensor::matrix(1, d, x.clone()));
            let pred = vars.forward(&mut g, xv, k, ctx);
            let eps_hat = g.value(pred).data().to_vec();
            let z = if k == 1 { vec![0.0; d] } else { rng.normal_vec(d) };
            x = denoise_step_from(&x, &eps_hat, k, &self.sched, &z);
        }
        to_state_space(&x)
    }

    /// Serializes parameters plus (K, beta_start, beta_end) and the shape
    /// metadata needed to rebuild the net, so sampling is reproducible from
    /// file alone.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut snapshot = self.store.clone();
        let (bs, be) = self.sched.beta_range();
        let cfg = &self.net.config;
        snapshot.add(
            "sg/schedule_meta",
            Tensor::vector(&[
                self.sched.k_steps() as f32,
                bs,
                be,
                cfg.state_dim as f32,
                cfg.obs_dim as f32,
                cfg.n_agents as f32,
                cfg.widths[0] as f32,
                cfg.widths[1] as f32,
                cfg.widths[2] as f32,
                cfg.embed_dim as f32,
                cfg.k_code_dim as f32,
                self.p_uncond,
                self.adam.learning_rate,
            ]),
        );
        checkpoint::save(&snapshot, path)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let entries = checkpoint::load_entries(path)?;
        let meta = entries
            .iter()
            .find(|(n, _)| n == "sg/schedule_meta")
            .ok_or_else(|| CheckpointError::NameMismatch("sg/schedule_meta missing".into()))?
            .1
            .data()
            .to_vec();
        if meta.len() != 13 {
            return Err(CheckpointError::Corrupt("schedule_meta length".into()));
        }
        let cfg = GeneratorConfig {
            k_steps: meta[0] as usize,
            beta_start: meta[1],
            beta_end: meta[2],
            p_uncond: meta[11],
            learning_rate: meta[12],
            widths: [meta[6] as usize, meta[7] as usize, meta[8] as usize],
            embed_dim: meta[9] as usize,
            k_code_dim: meta[10] as usize,
        };
        let mut gen = StateGenerator::new(
            meta[3] as usize,
            meta[4] as usize,
            meta[5] as usize,
            &cfg,
            0,
        )
        .map_err(|e| CheckpointError::Corrupt(format!("schedule: {e}")))?;
        let mut filtered = ParamStore::new();
        for (name, t) in entries {
            if name != "sg/schedule_meta" {
                filtered.add(&name, t);
            }
        }
        if filtered.len() != gen.store.len() {
            return Err(CheckpointError::NameMismatch(format!(
                "{} parameters vs {} expected",
                filtered.len(),
                gen.store.len()
            )));
        }
        for id in filtered.ids().collect::<Vec<_>>() {
            let name = filtered.name(id).to_string();
            let target = gen
                .store
                .id(&name)
                .ok_or_else(|| CheckpointError::NameMismatch(name.clone()))?;
            *gen.store.value_mut(target) = filtered.value(id).clone();
        }
        Ok(gen)
    }
}

/// [0, 1] state features → [−1, 1] diffusion space.
pub fn to_model_space(s: &[f32]) -> Vec<f32> {
    s.iter().map(|&v| 2.0 * v - 1.0).collect()
}

/// [−1, 1] diffusion space → [0, 1] state features.
pub fn to_state_space(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| (v + 1.0) / 2.0).collect()
}

/// Eq.-style loss with an injectable noise predictor (for stub-net tests
/// and cross-checking the graph path). Consumes the rng in the same order
/// as [`StateGenerator::sg_loss`].
pub fn sg_loss_with(
    mut predict: impl FnMut(&[f32], &ConditionContext, usize) -> Vec<f32>,
    batch: &[StatePair],
    sched: &DiffusionSchedule,
    p_uncond: f32,
    obs_dim: usize,
    rng: &mut Rng,
) -> f32 {
    assert!(!batch.is_empty(), "sg_loss over an empty batch");
    let mut total = 0.0f64;
    for pair in batch {
        let d = pair.state.len();
        let k = 1 + rng.below(sched.k_steps());
        let eps = rng.normal_vec(d);
        let masked = rng.bernoulli(p_uncond);
        let x0 = to_model_space(&pair.state);
        let x_k = forward_diffuse(&x0, k, &eps, sched);
        let null;
        let ctx = if masked {
            null = ConditionContext::null(obs_dim);
            &null
        } else {
            &pair.ctx
        };
        let pred = predict(&x_k, ctx, k);
        total += eps
            .iter()
            .zip(&pred)
            .map(|(&e, &p)| (e as f64 - p as f64).powi(2))
            .sum::<f64>();
    }
    (total / batch.len() as f64) as f32
}
