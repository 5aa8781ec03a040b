//! Brute-force attention oracle for the state extractor.
//!
//! The oracle recomputes the whole multi-head attention stack in f64 with
//! plain loops, independent of the graph implementation. It would also catch
//! a double-applied sqrt(d) scaling, since that changes every weight.

use sidiff_core::extractor::{patchify, ExtractorNet};
use sidiff_core::numerics::gradcheck::GradCheck;
use sidiff_core::numerics::{Graph, ParamStore, Rng, Tensor};

fn matmul_f64(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn as_f64(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&v| v as f64).collect()
}

/// Full-precision reference for extract().
fn brute_force_sg(store: &ParamStore, net: &ExtractorNet, state: &[f32]) -> Vec<f64> {
    let d = net.patch_dim;
    let seq = patchify(state, d);
    let n = seq.n_patches();
    let pos = as_f64(store.value(store.id("se/pos").unwrap()).data());
    let mut p = as_f64(seq.patches.data());
    for i in 0..p.len() {
        p[i] += pos[i];
    }
    let mut concat = vec![0.0f64; n * net.heads * d];
    for j in 0..net.heads {
        let wq = as_f64(store.value(store.id(&format!("se/h{j}/wq")).unwrap()).data());
        let wk = as_f64(store.value(store.id(&format!("se/h{j}/wk")).unwrap()).data());
        let wv = as_f64(store.value(store.id(&format!("se/h{j}/wv")).unwrap()).data());
        let q = matmul_f64(&p, &wq, n, d, d);
        let k = matmul_f64(&p, &wk, n, d, d);
        let v = matmul_f64(&p, &wv, n, d, d);
        // scores = Q·Kᵀ / sqrt(d), softmax per row, then ·V
        let scale = 1.0 / (d as f64).sqrt();
        for row in 0..n {
            let mut scores = vec![0.0f64; n];
            for col in 0..n {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += q[row * d + t] * k[col * d + t];
                }
                scores[col] = acc * scale;
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
            for t in 0..d {
                let mut acc = 0.0;
                for col in 0..n {
                    acc += weights[col] * v[col * d + t];
                }
                concat[row * net.heads * d + j * d + t] = acc;
            }
        }
    }
    // mean over patches, then output affine
    let hd = net.heads * d;
    let mut pooled = vec![0.0f64; hd];
    for row in 0..n {
        for t in 0..hd {
            pooled[t] += concat[row * hd + t] / n as f64;
        }
    }
    let w = as_f64(store.value(store.id("se/out/w").unwrap()).data());
    let b = as_f64(store.value(store.id("se/out/b").unwrap()).data());
    (0..net.sg_dim)
        .map(|i| (0..hd).map(|t| w[i * hd + t] * pooled[t]).sum::<f64>() + b[i])
        .collect()
}

#[test]
fn matches_brute_force_small_case() {
    let mut rng = Rng::new(31);
    let mut store = ParamStore::new();
    let net = ExtractorNet::new(&mut store, "se", 6, 2, 2, 4, &mut rng);
    let state: Vec<f32> = rng.uniform_vec(6, -1.0, 1.0);
    let got = net.extract(&store, &state);
    let want = brute_force_sg(&store, &net, &state);
    for (g, w) in got.iter().zip(&want) {
        assert!((*g as f64 - w).abs() < 1e-5, "{g} vs {w}");
    }
}

#[test]
fn matches_brute_force_50_random_instances() {
    let mut rng = Rng::new(32);
    for case in 0..50 {
        let state_dim = 1 + rng.below(30); // N = ceil(dim/5) ≤ 6
        let mut store = ParamStore::new();
        let mut init = rng.fork(case as u64);
        let net = ExtractorNet::new(&mut store, "se", state_dim, 5, 4, 8, &mut init);
        let state: Vec<f32> = rng.uniform_vec(state_dim, 0.0, 1.0);
        let got = net.extract(&store, &state);
        let want = brute_force_sg(&store, &net, &state);
        for (g, w) in got.iter().zip(&want) {
            assert!(
                (*g as f64 - w).abs() < 1e-5,
                "case {case} dim {state_dim}: {g} vs {w}"
            );
        }
    }
}

#[test]
fn extract_gradient_checks_on_two_patch_instance() {
    let mut rng = Rng::new(33);
    let mut store = ParamStore::new();
    let net = ExtractorNet::new(&mut store, "se", 10, 5, 4, 6, &mut rng);
    let state: Vec<f32> = rng.uniform_vec(10, 0.0, 1.0);
    let direction: Vec<f32> = rng.uniform_vec(6, -1.0, 1.0);

    let forward = |s: &ParamStore| -> f32 {
        let mut g = Graph::new();
        let vars = net.bind(&mut g, s);
        let patches = g.input(patchify(&state, 5).patches);
        let sg = vars.forward(&mut g, patches);
        let u = g.input(Tensor::vector(&direction));
        let loss = g.dot(sg, u);
        g.value(loss).item()
    };

    store.zero_grads();
    let mut g = Graph::new();
    let vars = net.bind(&mut g, &store);
    let patches = g.input(patchify(&state, 5).patches);
    let sg = vars.forward(&mut g, patches);
    let u = g.input(Tensor::vector(&direction));
    let loss = g.dot(sg, u);
    g.backward(loss, &mut store);

    let err = GradCheck::default().max_rel_err(&mut store, &mut rng, forward);
    assert!(err <= 1e-3, "extract gradcheck rel err {err}");
}
