//! Finite-difference verification of every graph primitive.
//!
//! Each primitive is exercised on 20 random instances; the analytic
//! backward pass must match central finite differences (h = 1e-3) to a
//! relative error of 1e-3.

use sidiff_core::numerics::gradcheck::GradCheck;
use sidiff_core::numerics::layers::{gru_cell, GruParams, GruVars};
use sidiff_core::numerics::{Graph, ParamStore, Rng, Tensor, Var};

const INSTANCES: usize = 20;
const TOL: f32 = 1e-3;

/// Runs one gradcheck instance: `build` wires params (already in `store`)
/// into a scalar loss on the given graph.
fn check(
    label: &str,
    store: &mut ParamStore,
    rng: &mut Rng,
    build: impl Fn(&mut Graph, &ParamStore) -> Var,
) {
    store.zero_grads();
    let mut g = Graph::new();
    let loss = build(&mut g, store);
    g.backward(loss, store);
    let err = GradCheck::default().max_rel_err(store, rng, |s| {
        let mut g = Graph::new();
        let loss = build(&mut g, s);
        g.value(loss).item()
    });
    assert!(err <= TOL, "{label}: rel err {err} > {TOL}");
}

/// Fixed projection of an op output to a scalar, with non-uniform weights
/// so every output coordinate carries distinct gradient signal.
fn project(g: &mut Graph, y: Var, rng: &mut Rng) -> Var {
    let n = g.value(y).numel();
    let shape = g.value(y).shape().to_vec();
    let u = g.input(Tensor::new(shape, rng.uniform_vec(n, -1.0, 1.0)));
    let p = g.mul(y, u);
    g.sum_all(p)
}

fn rand_param(store: &mut ParamStore, name: &str, shape: Vec<usize>, rng: &mut Rng) {
    let n: usize = shape.iter().product();
    store.add(name, Tensor::new(shape, rng.uniform_vec(n, -0.9, 0.9)));
}

#[test]
fn matmul_gradients() {
    let mut rng = Rng::new(101);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        rand_param(&mut store, "a", vec![3, 4], &mut rng);
        rand_param(&mut store, "b", vec![4, 2], &mut rng);
        let proj = rng.fork(i as u64);
        check("matmul", &mut store, &mut rng, |g, s| {
            let a = g.param(s, s.id("a").unwrap());
            let b = g.param(s, s.id("b").unwrap());
            let y = g.matmul(a, b);
            project(g, y, &mut proj.clone())
        });
    }
}

#[test]
fn matvec_gradients() {
    let mut rng = Rng::new(102);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        rand_param(&mut store, "w", vec![5, 3], &mut rng);
        rand_param(&mut store, "x", vec![3], &mut rng);
        let proj = rng.fork(i as u64);
        check("matvec", &mut store, &mut rng, |g, s| {
            let w = g.param(s, s.id("w").unwrap());
            let x = g.param(s, s.id("x").unwrap());
            let y = g.matvec(w, x);
            project(g, y, &mut proj.clone())
        });
    }
}

#[test]
fn conv1d_gradients() {
    let mut rng = Rng::new(103);
    for i in 0..INSTANCES {
        let stride = 1 + i % 2;
        let pad = i % 3;
        let mut store = ParamStore::new();
        rand_param(&mut store, "x", vec![2, 7], &mut rng);
        rand_param(&mut store, "w", vec![3, 2, 3], &mut rng);
        rand_param(&mut store, "b", vec![3], &mut rng);
        let proj = rng.fork(i as u64);
        check("conv1d", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let w = g.param(s, s.id("w").unwrap());
            let b = g.param(s, s.id("b").unwrap());
            let y = g.conv1d(x, w, b, stride, pad);
            project(g, y, &mut proj.clone())
        });
    }
}

#[test]
fn softmax_gradients_all_axes() {
    let mut rng = Rng::new(104);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        rand_param(&mut store, "x", vec![6], &mut rng);
        rand_param(&mut store, "m", vec![3, 4], &mut rng);
        let proj = rng.fork(i as u64);
        check("softmax", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let m = g.param(s, s.id("m").unwrap());
            let y1 = g.softmax(x, 0);
            let y2 = g.softmax(m, 1);
            let y3 = g.softmax(m, 0);
            let mut p = proj.clone();
            let l1 = project(g, y1, &mut p);
            let l2 = project(g, y2, &mut p);
            let l3 = project(g, y3, &mut p);
            let s12 = g.add(l1, l2);
            g.add(s12, l3)
        });
    }
}

#[test]
fn gru_cell_gradients() {
    let mut rng = Rng::new(105);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        let mut init = rng.fork(1000 + i as u64);
        let p = GruParams::register(&mut store, "gru", 3, 4, &mut init);
        rand_param(&mut store, "x", vec![3], &mut rng);
        rand_param(&mut store, "h", vec![4], &mut rng);
        let proj = rng.fork(i as u64);
        check("gru_cell", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let h = g.param(s, s.id("h").unwrap());
            let vars = GruVars::bind(g, s, &p);
            let h1 = gru_cell(g, x, h, &vars);
            project(g, h1, &mut proj.clone())
        });
    }
}

#[test]
fn gru_cell_matches_scalar_reference() {
    // independent scalar-loop recurrence oracle
    let mut rng = Rng::new(106);
    let (d_in, d_h) = (3usize, 2usize);
    let mut store = ParamStore::new();
    let p = GruParams::register(&mut store, "gru", d_in, d_h, &mut rng);
    let x: Vec<f32> = rng.uniform_vec(d_in, -1.0, 1.0);
    let h: Vec<f32> = rng.uniform_vec(d_h, -0.5, 0.5);

    let sig = |v: f32| 1.0 / (1.0 + (-v).exp());
    let w_ih = store.value(p.w_ih).data();
    let w_hh = store.value(p.w_hh).data();
    let b_ih = store.value(p.b_ih).data();
    let b_hh = store.value(p.b_hh).data();
    let mut expected = vec![0.0f32; d_h];
    for j in 0..d_h {
        let dot = |w: &[f32], v: &[f32], row: usize, cols: usize| -> f32 {
            (0..cols).map(|c| w[row * cols + c] * v[c]).sum()
        };
        let r = sig(dot(w_ih, &x, j, d_in) + b_ih[j] + dot(w_hh, &h, j, d_h) + b_hh[j]);
        let z = sig(
            dot(w_ih, &x, d_h + j, d_in)
                + b_ih[d_h + j]
                + dot(w_hh, &h, d_h + j, d_h)
                + b_hh[d_h + j],
        );
        let n = (dot(w_ih, &x, 2 * d_h + j, d_in)
            + b_ih[2 * d_h + j]
            + r * (dot(w_hh, &h, 2 * d_h + j, d_h) + b_hh[2 * d_h + j]))
            .tanh();
        expected[j] = (1.0 - z) * n + z * h[j];
    }

    let mut g = Graph::new();
    let xv = g.input(Tensor::vector(&x));
    let hv = g.input(Tensor::vector(&h));
    let vars = GruVars::bind(&mut g, &store, &p);
    let out = gru_cell(&mut g, xv, hv, &vars);
    for (a, e) in g.value(out).data().iter().zip(&expected) {
        assert!((a - e).abs() < 1e-6, "gru mismatch {a} vs {e}");
    }
}

#[test]
fn elementwise_activation_gradients() {
    let mut rng = Rng::new(107);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        // keep values away from relu/abs kinks at 0
        let data: Vec<f32> = (0..8)
            .map(|_| {
                let v = rng.range(0.1, 0.9);
                if rng.bernoulli(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        store.add("x", Tensor::vector(&data));
        let proj = rng.fork(i as u64);
        check("activations", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let a = g.sigmoid(x);
            let b = g.tanh(x);
            let c = g.silu(x);
            let d = g.elu(x);
            let e = g.relu(x);
            let f = g.abs(x);
            let ex = g.exp(x);
            let mut p = proj.clone();
            let parts = [a, b, c, d, e, f, ex]
                .iter()
                .map(|&y| project(g, y, &mut p))
                .collect::<Vec<_>>();
            g.sum_vars(&parts)
        });
    }
}

#[test]
fn log_gradients_on_positive_inputs() {
    let mut rng = Rng::new(108);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        store.add("x", Tensor::vector(&rng.uniform_vec(6, 0.2, 2.0)));
        let proj = rng.fork(i as u64);
        check("log", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let y = g.log(x);
            project(g, y, &mut proj.clone())
        });
    }
}

#[test]
fn layer_norm_gradients() {
    let mut rng = Rng::new(109);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        rand_param(&mut store, "x", vec![3, 5], &mut rng);
        rand_param(&mut store, "gamma", vec![5], &mut rng);
        rand_param(&mut store, "beta", vec![5], &mut rng);
        let proj = rng.fork(i as u64);
        check("layer_norm", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let gamma = g.param(s, s.id("gamma").unwrap());
            let beta = g.param(s, s.id("beta").unwrap());
            let y = g.layer_norm(x, gamma, beta);
            project(g, y, &mut proj.clone())
        });
    }
}

#[test]
fn shape_op_gradients() {
    let mut rng = Rng::new(110);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        rand_param(&mut store, "a", vec![2, 4], &mut rng);
        rand_param(&mut store, "b", vec![3, 4], &mut rng);
        rand_param(&mut store, "s", vec![2], &mut rng);
        let proj = rng.fork(i as u64);
        check("shape_ops", &mut store, &mut rng, |g, s| {
            let a = g.param(s, s.id("a").unwrap());
            let b = g.param(s, s.id("b").unwrap());
            let sv = g.param(s, s.id("s").unwrap());
            let cat = g.concat0(&[a, b]);
            let sliced = g.slice0(cat, 1, 3);
            let t = g.transpose(sliced);
            let up = g.upsample_nearest(a, 7);
            let scaled = g.mul_rows(up, sv);
            let shifted = g.add_rows(scaled, sv);
            let pooled = g.mean_axis0(shifted);
            let mut p = proj.clone();
            let l1 = project(g, t, &mut p);
            let l2 = project(g, pooled, &mut p);
            g.add(l1, l2)
        });
    }
}

#[test]
fn piecewise_op_gradients_away_from_kinks() {
    let mut rng = Rng::new(111);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new();
        // clamp bounds at ±0.8; keep inputs > h away from them
        let data: Vec<f32> = (0..8)
            .map(|_| {
                let v = rng.range(0.05, 0.7);
                if rng.bernoulli(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        store.add("x", Tensor::vector(&data));
        rand_param(&mut store, "y", vec![8], &mut rng);
        let proj = rng.fork(i as u64);
        check("piecewise", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let y = g.param(s, s.id("y").unwrap());
            let c = g.clamp(x, -0.8, 0.8);
            let m = g.min_elem(c, y);
            project(g, m, &mut proj.clone())
        });
    }
}

#[test]
fn deep_composition_gradients() {
    // conv → norm → activation → pool → affine, the U-Net building pattern
    let mut rng = Rng::new(112);
    for i in 0..8 {
        let mut store = ParamStore::new();
        rand_param(&mut store, "x", vec![2, 9], &mut rng);
        rand_param(&mut store, "w", vec![4, 2, 3], &mut rng);
        rand_param(&mut store, "b", vec![4], &mut rng);
        rand_param(&mut store, "gamma", vec![4], &mut rng);
        rand_param(&mut store, "beta", vec![4], &mut rng);
        rand_param(&mut store, "head", vec![3, 4], &mut rng);
        rand_param(&mut store, "hb", vec![3], &mut rng);
        let proj = rng.fork(i as u64);
        check("deep", &mut store, &mut rng, |g, s| {
            let x = g.param(s, s.id("x").unwrap());
            let w = g.param(s, s.id("w").unwrap());
            let b = g.param(s, s.id("b").unwrap());
            let gamma = g.param(s, s.id("gamma").unwrap());
            let beta = g.param(s, s.id("beta").unwrap());
            let head = g.param(s, s.id("head").unwrap());
            let hb = g.param(s, s.id("hb").unwrap());
            let y = g.conv1d(x, w, b, 2, 1);
            let yt = g.transpose(y); // [L', C] rows = positions
            let n = g.layer_norm(yt, gamma, beta);
            let act = g.silu(n);
            let pooled = g.mean_axis0(act); // per-channel means [C]
            let out = g.affine_vec(head, pooled, hb);
            project(g, out, &mut proj.clone())
        });
    }
}
