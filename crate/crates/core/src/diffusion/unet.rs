//! Conditional 1D U-Net noise predictor.
//!
//! Encoder and decoder are mirrored stacks of convolutional residual blocks
//! with stride-2 downsampling and nearest-neighbour upsampling. Each decoder
//! level consumes its encoder skip feature and is conditioned elementwise:
//! the previous feature map `f_L` becomes `(e_T + e_A) ⊙ f_L + e_K`
//! broadcast over the spatial axis, concatenated channel-wise with the skip.
//! Agent and trajectory embeddings go through bias-free maps so the
//! unconditional (null) class is exactly the zero vector.

use super::cond::{iteration_code, ConditionContext};
use crate::numerics::layers::AffineParams;
use crate::numerics::{Graph, ParamId, ParamStore, Rng, Tensor, Var};

#[derive(Clone, Debug)]
pub struct UNetConfig {
    pub state_dim: usize,
    pub obs_dim: usize,
    pub n_agents: usize,
    /// Channel widths for the three resolution levels.
    pub widths: [usize; 3],
    /// Width of the shared condition embeddings.
    pub embed_dim: usize,
    /// Sinusoidal iteration-code size.
    pub k_code_dim: usize,
}

impl UNetConfig {
    pub fn desk_scale(state_dim: usize, obs_dim: usize, n_agents: usize) -> Self {
        UNetConfig {
            state_dim,
            obs_dim,
            n_agents,
            widths: [32, 64, 128],
            embed_dim: 64,
            k_code_dim: 32,
        }
    }

    pub fn cond_dim(&self) -> usize {
        super::cond::HISTORY_WINDOW * self.obs_dim
    }
}

struct ResBlockParams {
    norm1_g: ParamId,
    norm1_b: ParamId,
    conv1_w: ParamId,
    conv1_b: ParamId,
    norm2_g: ParamId,
    norm2_b: ParamId,
    conv2_w: ParamId,
    conv2_b: ParamId,
    shortcut: Option<(ParamId, ParamId)>,
}

impl ResBlockParams {
    fn register(
        store: &mut ParamStore,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan1 = c_in * 3;
        let fan2 = c_out * 3;
        ResBlockParams {
            norm1_g: store.add(&format!("{prefix}/n1_g"), Tensor::filled(vec![c_in], 1.0)),
            norm1_b: store.add_zeros(&format!("{prefix}/n1_b"), vec![c_in]),
            conv1_w: store.add_uniform_fan_in(
                &format!("{prefix}/c1_w"),
                vec![c_out, c_in, 3],
                fan1,
                rng,
            ),
            conv1_b: store.add_zeros(&format!("{prefix}/c1_b"), vec![c_out]),
            norm2_g: store.add(&format!("{prefix}/n2_g"), Tensor::filled(vec![c_out], 1.0)),
            norm2_b: store.add_zeros(&format!("{prefix}/n2_b"), vec![c_out]),
            conv2_w: store.add_uniform_fan_in(
                &format!("{prefix}/c2_w"),
                vec![c_out, c_out, 3],
                fan2,
                rng,
            ),
            conv2_b: store.add_zeros(&format!("{prefix}/c2_b"), vec![c_out]),
            shortcut: (c_in != c_out).then(|| {
                (
                    store.add_uniform_fan_in(
                        &format!("{prefix}/sc_w"),
                        vec![c_out, c_in, 1],
                        c_in,
                        rng,
                    ),
                    store.add_zeros(&format!("{prefix}/sc_b"), vec![c_out]),
                )
            }),
        }
    }
}

struct ResBlockVars {
    norm1_g: Var,
    norm1_b: Var,
    conv1_w: Var,
    conv1_b: Var,
    norm2_g: Var,
    norm2_b: Var,
    conv2_w: Var,
    conv2_b: Var,
    shortcut: Option<(Var, Var)>,
}

impl ResBlockVars {
    fn bind(g: &mut Graph, store: &ParamStore, p: &ResBlockParams) -> Self {
        ResBlockVars {
            norm1_g: g.param(store, p.norm1_g),
            norm1_b: g.param(store, p.norm1_b),
            conv1_w: g.param(store, p.conv1_w),
            conv1_b: g.param(store, p.conv1_b),
            norm2_g: g.param(store, p.norm2_g),
            norm2_b: g.param(store, p.norm2_b),
            conv2_w: g.param(store, p.conv2_w),
            conv2_b: g.param(store, p.conv2_b),
            shortcut: p.shortcut.map(|(w, b)| (g.param(store, w), g.param(store, b))),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = channel_norm(g, x, self.norm1_g, self.norm1_b);
        let h = g.silu(h);
        let h = g.conv1d(h, self.conv1_w, self.conv1_b, 1, 1);
        let h = channel_norm(g, h, self.norm2_g, self.norm2_b);
        let h = g.silu(h);
        let h = g.conv1d(h, self.conv2_w, self.conv2_b, 1, 1);
        let short = match self.shortcut {
            Some((w, b)) => g.conv1d(x, w, b, 1, 0),
            None => x,
        };
        g.add(h, short)
    }
}

/// Normalizes `[C, L]` over the channel axis per position.
fn channel_norm(g: &mut Graph, x: Var, gamma: Var, beta: Var) -> Var {
    let t = g.transpose(x);
    let n = g.layer_norm(t, gamma, beta);
    g.transpose(n)
}

/// Parameter handles for the full noise-prediction network.
pub struct StateGeneratorNet {
    pub config: UNetConfig,
    lengths: [usize; 3],
    stem_w: ParamId,
    stem_b: ParamId,
    enc0: ResBlockParams,
    down0_w: ParamId,
    down0_b: ParamId,
    enc1: ResBlockParams,
    down1_w: ParamId,
    down1_b: ParamId,
    mid: ResBlockParams,
    emb_k: AffineParams,
    emb_a: ParamId,
    emb_t: ParamId,
    dec1_proj_k: AffineParams,
    dec1_proj_a: ParamId,
    dec1_proj_t: ParamId,
    dec1: ResBlockParams,
    dec0_proj_k: AffineParams,
    dec0_proj_a: ParamId,
    dec0_proj_t: ParamId,
    dec0: ResBlockParams,
    head_w: ParamId,
    head_b: ParamId,
}

fn down_len(l: usize) -> usize {
    // stride-2 conv, kernel 3, pad 1
    (l + 2 - 3) / 2 + 1
}

impl StateGeneratorNet {
    pub fn new(store: &mut ParamStore, prefix: &str, config: UNetConfig, rng: &mut Rng) -> Self {
        let [w0, w1, w2] = config.widths;
        let l0 = config.state_dim;
        let l1 = down_len(l0);
        let l2 = down_len(l1);
        let embed = config.embed_dim;
        let cond = config.cond_dim();
        StateGeneratorNet {
            lengths: [l0, l1, l2],
            stem_w: store.add_uniform_fan_in(&format!("{prefix}/stem_w"), vec![w0, 1, 3], 3, rng),
            stem_b: store.add_zeros(&format!("{prefix}/stem_b"), vec![w0]),
            enc0: ResBlockParams::register(store, &format!("{prefix}/enc0"), w0, w0, rng),
            down0_w: store.add_uniform_fan_in(
                &format!("{prefix}/down0_w"),
                vec![w1, w0, 3],
                w0 * 3,
                rng,
            ),
            down0_b: store.add_zeros(&format!("{prefix}/down0_b"), vec![w1]),
            enc1: ResBlockParams::register(store, &format!("{prefix}/enc1"), w1, w1, rng),
            down1_w: store.add_uniform_fan_in(
                &format!("{prefix}/down1_w"),
                vec![w2, w1, 3],
                w1 * 3,
                rng,
            ),
            down1_b: store.add_zeros(&format!("{prefix}/down1_b"), vec![w2]),
            mid: ResBlockParams::register(store, &format!("{prefix}/mid"), w2, w2, rng),
            emb_k: AffineParams::register(store, &format!("{prefix}/emb_k"), config.k_code_dim, embed, rng),
            emb_a: store.add_uniform_fan_in(
                &format!("{prefix}/emb_a_w"),
                vec![embed, config.n_agents],
                config.n_agents,
                rng,
            ),
            emb_t: store.add_uniform_fan_in(&format!("{prefix}/emb_t_w"), vec![embed, cond], cond, rng),
            dec1_proj_k: AffineParams::register(store, &format!("{prefix}/dec1/pk"), embed, w2, rng),
            dec1_proj_a: store.add_uniform_fan_in(
                &format!("{prefix}/dec1/pa_w"),
                vec![w2, embed],
                embed,
                rng,
            ),
            dec1_proj_t: store.add_uniform_fan_in(
                &format!("{prefix}/dec1/pt_w"),
                vec![w2, embed],
                embed,
                rng,
            ),
            dec1: ResBlockParams::register(store, &format!("{prefix}/dec1"), w2 + w1, w1, rng),
            dec0_proj_k: AffineParams::register(store, &format!("{prefix}/dec0/pk"), embed, w1, rng),
            dec0_proj_a: store.add_uniform_fan_in(
                &format!("{prefix}/dec0/pa_w"),
                vec![w1, embed],
                embed,
                rng,
            ),
            dec0_proj_t: store.add_uniform_fan_in(
                &format!("{prefix}/dec0/pt_w"),
                vec![w1, embed],
                embed,
                rng,
            ),
            dec0: ResBlockParams::register(store, &format!("{prefix}/dec0"), w1 + w0, w0, rng),
            head_w: store.add_uniform_fan_in(&format!("{prefix}/head_w"), vec![1, w0, 3], w0 * 3, rng),
            head_b: store.add_zeros(&format!("{prefix}/head_b"), vec![1]),
            config,
        }
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> UNetVars<'_> {
        UNetVars {
            net: self,
            stem_w: g.param(store, self.stem_w),
            stem_b: g.param(store, self.stem_b),
            enc0: ResBlockVars::bind(g, store, &self.enc0),
            down0_w: g.param(store, self.down0_w),
            down0_b: g.param(store, self.down0_b),
            enc1: ResBlockVars::bind(g, store, &self.enc1),
            down1_w: g.param(store, self.down1_w),
            down1_b: g.param(store, self.down1_b),
            mid: ResBlockVars::bind(g, store, &self.mid),
            emb_k_w: g.param(store, self.emb_k.w),
            emb_k_b: g.param(store, self.emb_k.b),
            emb_a: g.param(store, self.emb_a),
            emb_t: g.param(store, self.emb_t),
            dec1_pk_w: g.param(store, self.dec1_proj_k.w),
            dec1_pk_b: g.param(store, self.dec1_proj_k.b),
            dec1_pa: g.param(store, self.dec1_proj_a),
            dec1_pt: g.param(store, self.dec1_proj_t),
            dec1: ResBlockVars::bind(g, store, &self.dec1),
            dec0_pk_w: g.param(store, self.dec0_proj_k.w),
            dec0_pk_b: g.param(store, self.dec0_proj_k.b),
            dec0_pa: g.param(store, self.dec0_proj_a),
            dec0_pt: g.param(store, self.dec0_proj_t),
            dec0: ResBlockVars::bind(g, store, &self.dec0),
            head_w: g.param(store, self.head_w),
            head_b: g.param(store, self.head_b),
        }
    }

    /// One-shot noise prediction outside any training graph.
    pub fn predict_noise(
        &self,
        store: &ParamStore,
        x_k: &[f32],
        ctx: &ConditionContext,
        k: usize,
    ) -> Vec<f32> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let x = g.input(Tensor::matrix(1, self.config.state_dim, x_k.to_vec()));
        let out = vars.forward(&mut g, x, k, ctx);
        g.detach(out).into_data()
    }
}

/// Network parameters bound into one graph.
pub struct UNetVars<'n> {
    net: &'n StateGeneratorNet,
    stem_w: Var,
    stem_b: Var,
    enc0: ResBlockVars,
    down0_w: Var,
    down0_b: Var,
    enc1: ResBlockVars,
    down1_w: Var,
    down1_b: Var,
    mid: ResBlockVars,
    emb_k_w: Var,
    emb_k_b: Var,
    emb_a: Var,
    emb_t: Var,
    dec1_pk_w: Var,
    dec1_pk_b: Var,
    dec1_pa: Var,
    dec1_pt: Var,
    dec1: ResBlockVars,
    dec0_pk_w: Var,
    dec0_pk_b: Var,
    dec0_pa: Var,
    dec0_pt: Var,
    dec0: ResBlockVars,
    head_w: Var,
    head_b: Var,
}

impl UNetVars<'_> {
    /// Predicts the noise in `x_k` (`[1, state_dim]`) for iteration `k`
    /// under the given condition context.
    pub fn forward(&self, g: &mut Graph, x_k: Var, k: usize, ctx: &ConditionContext) -> Var {
        let agent = ctx.agent_input(self.net.config.n_agents);
        let traj = ctx.trajectory_input();
        self.forward_raw(g, x_k, k, &agent, &traj)
    }

    /// Same as [`Self::forward`] but with explicit condition vectors; a
    /// zero-filled pair reproduces the null class bit for bit.
    pub fn forward_raw(
        &self,
        g: &mut Graph,
        x_k: Var,
        k: usize,
        agent_input: &[f32],
        traj_input: &[f32],
    ) -> Var {
        let cfg = &self.net.config;
        let [l0, l1, _l2] = self.net.lengths;
        assert_eq!(
            g.value(x_k).shape(),
            &[1, cfg.state_dim],
            "x_k must be [1, state_dim]"
        );
        assert!(k >= 1, "iteration k must be >= 1");
        assert_eq!(agent_input.len(), cfg.n_agents, "agent input length");
        assert_eq!(traj_input.len(), cfg.cond_dim(), "trajectory input length");

        // condition embeddings: e_K keeps its bias, e_A/e_T are bias-free
        let k_code = g.input(Tensor::vector(&iteration_code(k, cfg.k_code_dim)));
        let e_k = {
            let wx = g.matvec(self.emb_k_w, k_code);
            g.add(wx, self.emb_k_b)
        };
        let a_in = g.input(Tensor::vector(agent_input));
        let t_in = g.input(Tensor::vector(traj_input));
        let e_a = g.matvec(self.emb_a, a_in);
        let e_t = g.matvec(self.emb_t, t_in);

        // encoder
        let x = g.conv1d(x_k, self.stem_w, self.stem_b, 1, 1);
        let skip0 = self.enc0.forward(g, x);
        let x = g.conv1d(skip0, self.down0_w, self.down0_b, 2, 1);
        let skip1 = self.enc1.forward(g, x);
        let x = g.conv1d(skip1, self.down1_w, self.down1_b, 2, 1);
        let x = self.mid.forward(g, x);

        // decoder level 1
        let x = g.upsample_nearest(x, l1);
        let x = self.condition(g, x, e_k, e_a, e_t, self.dec1_pk_w, self.dec1_pk_b, self.dec1_pa, self.dec1_pt);
        let x = g.concat0(&[x, skip1]);
        let x = self.dec1.forward(g, x);

        // decoder level 0
        let x = g.upsample_nearest(x, l0);
        let x = self.condition(g, x, e_k, e_a, e_t, self.dec0_pk_w, self.dec0_pk_b, self.dec0_pa, self.dec0_pt);
        let x = g.concat0(&[x, skip0]);
        let x = self.dec0.forward(g, x);

        g.conv1d(x, self.head_w, self.head_b, 1, 1)
    }

    /// `(e_T + e_A) ⊙ f_L + e_K` broadcast over the spatial axis.
    #[allow(clippy::too_many_arguments)]
    fn condition(
        &self,
        g: &mut Graph,
        f_l: Var,
        e_k: Var,
        e_a: Var,
        e_t: Var,
        pk_w: Var,
        pk_b: Var,
        pa: Var,
        pt: Var,
    ) -> Var {
        let scale_a = g.matvec(pa, e_a);
        let scale_t = g.matvec(pt, e_t);
        let scale = g.add(scale_t, scale_a);
        let bias = {
            let wx = g.matvec(pk_w, e_k);
            g.add(wx, pk_b)
        };
        let scaled = g.mul_rows(f_l, scale);
        g.add_rows(scaled, bias)
    }
}
