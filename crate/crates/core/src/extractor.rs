//! Patch-attention state extractor.
//!
//! A global state vector is cut into fixed-size 1D patches, position codes
//! are added, and one multi-head attention layer distills the sequence into
//! a compact embedding `s_g`. The extractor has no loss of its own: it is
//! trained end-to-end by whatever RL loss consumes `s_g`.

use crate::numerics::layers::AffineParams;
use crate::numerics::{Graph, ParamId, ParamStore, Rng, Tensor, Var};

/// Non-overlapping patches of a state vector, final patch zero-padded.
#[derive(Clone, Debug)]
pub struct PatchSequence {
    /// `[N, d]` patch matrix.
    pub patches: Tensor,
    /// Zero-padded trailing slots in the last patch.
    pub pad_count: usize,
}

impl PatchSequence {
    pub fn n_patches(&self) -> usize {
        self.patches.shape()[0]
    }

    pub fn patch_dim(&self) -> usize {
        self.patches.shape()[1]
    }

    /// Inverse of [`patchify`]: concatenation with padding trimmed.
    pub fn unpatch(&self) -> Vec<f32> {
        let total = self.patches.numel() - self.pad_count;
        self.patches.data()[..total].to_vec()
    }
}

/// Cuts `state` into `ceil(len/d)` patches of dimension `d`.
///
/// Panics on an empty state vector or `d == 0`.
pub fn patchify(state: &[f32], d: usize) -> PatchSequence {
    assert!(!state.is_empty(), "patchify of empty state vector");
    assert!(d >= 1, "patch dimension must be >= 1");
    let n = state.len().div_ceil(d);
    let mut data = state.to_vec();
    let pad_count = n * d - state.len();
    data.resize(n * d, 0.0);
    PatchSequence { patches: Tensor::matrix(n, d, data), pad_count }
}

/// Parameter handles for the extractor: per-head Q/K/V projections, the
/// learned position-code table, and the output affine map.
pub struct ExtractorNet {
    wq: Vec<ParamId>,
    wk: Vec<ParamId>,
    wv: Vec<ParamId>,
    pos: ParamId,
    out: AffineParams,
    pub state_dim: usize,
    pub patch_dim: usize,
    pub heads: usize,
    pub sg_dim: usize,
}

impl ExtractorNet {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        state_dim: usize,
        patch_dim: usize,
        heads: usize,
        sg_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let n = state_dim.div_ceil(patch_dim);
        let mut wq = Vec::new();
        let mut wk = Vec::new();
        let mut wv = Vec::new();
        for j in 0..heads {
            wq.push(store.add_uniform_fan_in(
                &format!("{prefix}/h{j}/wq"),
                vec![patch_dim, patch_dim],
                patch_dim,
                rng,
            ));
            wk.push(store.add_uniform_fan_in(
                &format!("{prefix}/h{j}/wk"),
                vec![patch_dim, patch_dim],
                patch_dim,
                rng,
            ));
            wv.push(store.add_uniform_fan_in(
                &format!("{prefix}/h{j}/wv"),
                vec![patch_dim, patch_dim],
                patch_dim,
                rng,
            ));
        }
        let pos = store.add_uniform_fan_in(&format!("{prefix}/pos"), vec![n, patch_dim], patch_dim, rng);
        let out = AffineParams::register(store, &format!("{prefix}/out"), heads * patch_dim, sg_dim, rng);
        ExtractorNet { wq, wk, wv, pos, out, state_dim, patch_dim, heads, sg_dim }
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> ExtractorVars {
        ExtractorVars {
            wq: self.wq.iter().map(|&id| g.param(store, id)).collect(),
            wk: self.wk.iter().map(|&id| g.param(store, id)).collect(),
            wv: self.wv.iter().map(|&id| g.param(store, id)).collect(),
            pos: g.param(store, self.pos),
            out_w: g.param(store, self.out.w),
            out_b: g.param(store, self.out.b),
            patch_dim: self.patch_dim,
        }
    }

    /// Convenience: extract `s_g` from a raw state without keeping a graph.
    pub fn extract(&self, store: &ParamStore, state: &[f32]) -> Vec<f32> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, store);
        let seq = patchify(state, self.patch_dim);
        let patches = g.input(seq.patches);
        let sg = vars.forward(&mut g, patches);
        g.detach(sg).into_data()
    }
}

/// Extractor parameters bound into one graph.
pub struct ExtractorVars {
    wq: Vec<Var>,
    wk: Vec<Var>,
    wv: Vec<Var>,
    pos: Var,
    out_w: Var,
    out_b: Var,
    patch_dim: usize,
}

impl ExtractorVars {
    /// `[N, d]` patches → `s_g`.
    pub fn forward(&self, g: &mut Graph, patches: Var) -> Var {
        self.forward_with_attention(g, patches).0
    }

    /// Also returns each head's `[N, N]` attention weights (row-stochastic).
    pub fn forward_with_attention(&self, g: &mut Graph, patches: Var) -> (Var, Vec<Var>) {
        assert_eq!(
            g.value(patches).shape()[1],
            self.patch_dim,
            "patch dim mismatch with extractor params"
        );
        let p = g.add(patches, self.pos);
        let inv_scale = 1.0 / (self.patch_dim as f32).sqrt();
        let mut head_outputs_t = Vec::new();
        let mut attentions = Vec::new();
        for j in 0..self.wq.len() {
            let q = g.matmul(p, self.wq[j]);
            let k = g.matmul(p, self.wk[j]);
            let v = g.matmul(p, self.wv[j]);
            let kt = g.transpose(k);
            let scores_raw = g.matmul(q, kt);
            let scores = g.scale(scores_raw, inv_scale);
            let attn = g.softmax(scores, 1);
            let head = g.matmul(attn, v);
            head_outputs_t.push(g.transpose(head));
            attentions.push(attn);
        }
        // heads side by side: [H·d, N] stacked, transposed to [N, H·d]
        let stacked = g.concat0(&head_outputs_t);
        let merged = g.transpose(stacked);
        let pooled = g.mean_axis0(merged);
        let sg = {
            let wx = g.matvec(self.out_w, pooled);
            g.add(wx, self.out_b)
        };
        (sg, attentions)
    }
}
