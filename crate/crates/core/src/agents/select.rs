//! Action selection.

use crate::numerics::Rng;

/// Argmax with probability 1−ε (ties → lowest index), otherwise uniform.
pub fn select_eps_greedy(q: &[f32], epsilon: f32, rng: &mut Rng) -> usize {
    assert!(!q.is_empty(), "empty action-value vector");
    assert!((0.0..=1.0).contains(&epsilon), "epsilon out of [0, 1]");
    if rng.uniform() < epsilon {
        rng.below(q.len())
    } else {
        greedy(q)
    }
}

/// Deterministic argmax, ties to the lowest index.
pub fn greedy(q: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Samples from a categorical distribution given probabilities.
pub fn sample_categorical(probs: &[f32], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0f32;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_picks_argmax() {
        let mut rng = Rng::new(1);
        assert_eq!(select_eps_greedy(&[1.0, 5.0, 3.0, 0.0, 0.0, 0.0], 0.0, &mut rng), 1);
    }

    #[test]
    fn greedy_ties_to_lowest_index() {
        let mut rng = Rng::new(1);
        assert_eq!(select_eps_greedy(&[2.0, 2.0, 0.0, 0.0, 0.0, 0.0], 0.0, &mut rng), 0);
    }

    #[test]
    fn greedy_invariant_to_positive_rescaling() {
        let q = [0.3f32, -0.7, 1.9, 1.2, 0.0, -2.0];
        let scaled: Vec<f32> = q.iter().map(|v| v * 7.5).collect();
        assert_eq!(greedy(&q), greedy(&scaled));
    }

    #[test]
    fn full_exploration_is_empirically_uniform() {
        let mut rng = Rng::new(9);
        let n = 10_000usize;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            counts[select_eps_greedy(&[9.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        // 3σ band around n/6 for a multinomial cell
        let expected = n as f64 / 6.0;
        let sigma = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sigma,
                "action {i} count {c} outside 3σ of uniform"
            );
        }
    }

    #[test]
    fn categorical_sampling_matches_probabilities() {
        let mut rng = Rng::new(4);
        let probs = [0.7f32, 0.2, 0.1];
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sample_categorical(&probs, &mut rng)] += 1;
        }
        assert!((counts[0] as f64 / 10_000.0 - 0.7).abs() < 0.02);
        assert!((counts[2] as f64 / 10_000.0 - 0.1).abs() < 0.015);
    }
}
