//! Small reusable layer compositions over the graph primitives.

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use super::rng::Rng;

/// Parameter ids for a single gated-recurrent-unit cell.
///
/// Gate layout along axis 0 of the stacked matrices is `[reset, update,
/// candidate]`, each `hidden` rows.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

impl GruParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        GruParams {
            w_ih: store.add_uniform_fan_in(
                &format!("{prefix}/w_ih"),
                vec![3 * hidden, input],
                input,
                rng,
            ),
            w_hh: store.add_uniform_fan_in(
                &format!("{prefix}/w_hh"),
                vec![3 * hidden, hidden],
                hidden,
                rng,
            ),
            b_ih: store.add_zeros(&format!("{prefix}/b_ih"), vec![3 * hidden]),
            b_hh: store.add_zeros(&format!("{prefix}/b_hh"), vec![3 * hidden]),
            hidden,
        }
    }
}

/// Bound GRU vars for one graph.
#[derive(Clone, Copy)]
pub struct GruVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b_ih: Var,
    pub b_hh: Var,
    pub hidden: usize,
}

impl GruVars {
    pub fn bind(g: &mut Graph, store: &ParamStore, p: &GruParams) -> Self {
        GruVars {
            w_ih: g.param(store, p.w_ih),
            w_hh: g.param(store, p.w_hh),
            b_ih: g.param(store, p.b_ih),
            b_hh: g.param(store, p.b_hh),
            hidden: p.hidden,
        }
    }
}

/// One GRU step: reset/update gates with a tanh candidate; output stays in
/// (−1, 1) elementwise for finite inputs.
pub fn gru_cell(g: &mut Graph, x: Var, h: Var, p: &GruVars) -> Var {
    let n = p.hidden;
    let gi = g.affine_vec(p.w_ih, x, p.b_ih);
    let gh = g.affine_vec(p.w_hh, h, p.b_hh);
    let gi_r = g.slice0(gi, 0, n);
    let gi_z = g.slice0(gi, n, n);
    let gi_n = g.slice0(gi, 2 * n, n);
    let gh_r = g.slice0(gh, 0, n);
    let gh_z = g.slice0(gh, n, n);
    let gh_n = g.slice0(gh, 2 * n, n);

    let r_pre = g.add(gi_r, gh_r);
    let reset = g.sigmoid(r_pre);
    let z_pre = g.add(gi_z, gh_z);
    let update = g.sigmoid(z_pre);
    let gated = g.mul(reset, gh_n);
    let n_pre = g.add(gi_n, gated);
    let cand = g.tanh(n_pre);

    // h' = (1 − z)·n + z·h
    let neg_z = g.neg(update);
    let one_minus_z = g.add_scalar(neg_z, 1.0);
    let a = g.mul(one_minus_z, cand);
    let b = g.mul(update, h);
    g.add(a, b)
}

/// Parameter ids for an affine map with bias.
#[derive(Clone, Copy, Debug)]
pub struct AffineParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl AffineParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Self {
        AffineParams {
            w: store.add_uniform_fan_in(&format!("{prefix}/w"), vec![output, input], input, rng),
            b: store.add_zeros(&format!("{prefix}/b"), vec![output]),
        }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.affine_vec(w, x, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    fn zero_gru(store: &mut ParamStore, d_in: usize, d_h: usize) -> GruParams {
        GruParams {
            w_ih: store.add_zeros("gru/w_ih", vec![3 * d_h, d_in]),
            w_hh: store.add_zeros("gru/w_hh", vec![3 * d_h, d_h]),
            b_ih: store.add_zeros("gru/b_ih", vec![3 * d_h]),
            b_hh: store.add_zeros("gru/b_hh", vec![3 * d_h]),
            hidden: d_h,
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let mut store = ParamStore::new();
        let p = zero_gru(&mut store, 2, 3);
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(&[0.0, 0.0]));
        let h = g.input(Tensor::vector(&[0.0; 3]));
        let vars = GruVars::bind(&mut g, &store, &p);
        let h1 = gru_cell(&mut g, x, h, &vars);
        assert_eq!(g.value(h1).data(), &[0.0; 3]);
    }

    #[test]
    fn statefulness_two_steps_differ_from_one() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(9);
        let p = GruParams::register(&mut store, "gru", 2, 3, &mut rng);
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(&[0.4, -0.2]));
        let h0 = g.input(Tensor::vector(&[0.0; 3]));
        let vars = GruVars::bind(&mut g, &store, &p);
        let h1 = gru_cell(&mut g, x, h0, &vars);
        let h2 = gru_cell(&mut g, x, h1, &vars);
        assert_ne!(g.value(h1).data(), g.value(h2).data());
    }

    #[test]
    fn output_stays_bounded_by_unit_interval() {
        // mathematically (−1, 1); f32 tanh may saturate to ±1 exactly
        let mut store = ParamStore::new();
        let mut rng = Rng::new(4);
        let p = GruParams::register(&mut store, "gru", 4, 8, &mut rng);
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(&rng.uniform_vec(4, -10.0, 10.0)));
        let mut h = g.input(Tensor::vector(&[0.0; 8]));
        let vars = GruVars::bind(&mut g, &store, &p);
        for _ in 0..5 {
            h = gru_cell(&mut g, x, h, &vars);
        }
        assert!(g.value(h).data().iter().all(|v| v.abs() <= 1.0));
    }
}
