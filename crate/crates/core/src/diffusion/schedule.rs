//! Variance schedule and the closed-form forward / reverse step math.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("beta range must satisfy 0 < start <= end < 1, got ({0}, {1})")]
    BadBetaRange(f32, f32),
    #[error("iteration count K must be positive")]
    ZeroIterations,
    #[error(
        "schedule too weak: alpha_bar[K] = {0} >= 0.01, reconstruction from N(0,I) \
         requires the terminal signal to be nearly destroyed"
    )]
    TooWeak(f32),
}

/// β/α/ᾱ/σ² tables for iterations k ∈ {1..K}.
///
/// `alpha_bar[0]` (the virtual ᾱ₀) is 1 by definition, which forces
/// `sigma2(1) = 0`: the final reverse step is deterministic.
#[derive(Clone, Debug)]
pub struct DiffusionSchedule {
    beta: Vec<f32>,
    alpha: Vec<f32>,
    alpha_bar: Vec<f32>,
    sigma2: Vec<f32>,
    beta_start: f32,
    beta_end: f32,
}

impl DiffusionSchedule {
    /// Builds a linear β schedule from `beta_start` to `beta_end` inclusive
    /// (a single iteration uses `beta_start`).
    ///
    /// Structural invariants are enforced here; use [`Self::ensure_strong`]
    /// where sampling from pure noise requires ᾱ_K < 0.01.
    pub fn make(k_steps: usize, beta_start: f32, beta_end: f32) -> Result<Self, ScheduleError> {
        if k_steps == 0 {
            return Err(ScheduleError::ZeroIterations);
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(ScheduleError::BadBetaRange(beta_start, beta_end));
        }
        let beta: Vec<f32> = if k_steps == 1 {
            vec![beta_start]
        } else {
            (0..k_steps)
                .map(|i| {
                    beta_start + (beta_end - beta_start) * i as f32 / (k_steps - 1) as f32
                })
                .collect()
        };
        let alpha: Vec<f32> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(k_steps);
        let mut prod = 1.0f64;
        for &a in &alpha {
            prod *= a as f64;
            alpha_bar.push(prod as f32);
        }
        let mut sigma2 = Vec::with_capacity(k_steps);
        for k in 1..=k_steps {
            let ab_prev = if k == 1 { 1.0 } else { alpha_bar[k - 2] };
            sigma2.push(beta[k - 1] * (1.0 - ab_prev) / (1.0 - alpha_bar[k - 1]));
        }
        Ok(DiffusionSchedule { beta, alpha, alpha_bar, sigma2, beta_start, beta_end })
    }

    /// The strong-schedule gate: errors unless ᾱ_K < 0.01.
    pub fn ensure_strong(self) -> Result<Self, ScheduleError> {
        let ab_k = self.alpha_bar[self.k_steps() - 1];
        if ab_k >= 0.01 {
            return Err(ScheduleError::TooWeak(ab_k));
        }
        Ok(self)
    }

    pub fn is_strong(&self) -> bool {
        self.alpha_bar[self.k_steps() - 1] < 0.01
    }

    pub fn k_steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_range(&self) -> (f32, f32) {
        (self.beta_start, self.beta_end)
    }

    pub fn beta(&self, k: usize) -> f32 {
        self.check_k(k);
        self.beta[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f32 {
        self.check_k(k);
        self.alpha[k - 1]
    }

    pub fn alpha_bar(&self, k: usize) -> f32 {
        self.check_k(k);
        self.alpha_bar[k - 1]
    }

    pub fn sigma2(&self, k: usize) -> f32 {
        self.check_k(k);
        self.sigma2[k - 1]
    }

    fn check_k(&self, k: usize) {
        assert!(
            k >= 1 && k <= self.k_steps(),
            "iteration k = {k} out of range 1..={}",
            self.k_steps()
        );
    }
}

/// Closed-form noising: `sqrt(ᾱ_k)·x0 + sqrt(1 − ᾱ_k)·eps`.
pub fn forward_diffuse(x0: &[f32], k: usize, eps: &[f32], sched: &DiffusionSchedule) -> Vec<f32> {
    assert_eq!(x0.len(), eps.len(), "noise vector length mismatch");
    let ab = sched.alpha_bar(k);
    let signal = ab.sqrt();
    let noise = (1.0 - ab).sqrt();
    x0.iter().zip(eps).map(|(&x, &e)| signal * x + noise * e).collect()
}

/// One reverse step given a noise estimate:
/// `(1/sqrt(α_k))·(s_k − ((1−α_k)/sqrt(1−ᾱ_k))·ε̂) + sqrt(σ²_k)·z`.
///
/// `z` must be zero at k = 1 (σ²₁ = 0 already makes the term vanish; the
/// requirement is enforced for clarity).
pub fn denoise_step_from(
    s_hat_k: &[f32],
    eps_hat: &[f32],
    k: usize,
    sched: &DiffusionSchedule,
    z: &[f32],
) -> Vec<f32> {
    assert_eq!(s_hat_k.len(), eps_hat.len(), "noise estimate length mismatch");
    assert_eq!(s_hat_k.len(), z.len(), "z length mismatch");
    if k == 1 {
        assert!(z.iter().all(|&v| v == 0.0), "z must be zero at k = 1");
    }
    let alpha = sched.alpha(k);
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let eps_coef = (1.0 - alpha) / (1.0 - sched.alpha_bar(k)).sqrt();
    let sigma = sched.sigma2(k).sqrt();
    s_hat_k
        .iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((&s, &e), &zv)| inv_sqrt_alpha * (s - eps_coef * e) + sigma * zv)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn single_step_schedule_tables() {
        let s = DiffusionSchedule::make(1, 0.5, 0.5).unwrap();
        assert_eq!(s.beta(1), 0.5);
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.sigma2(1), 0.0);
    }

    #[test]
    fn two_step_tables_by_hand() {
        let s = DiffusionSchedule::make(2, 0.1, 0.2).unwrap();
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-6);
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-6);
        // σ²₂ = β₂(1−ᾱ₁)/(1−ᾱ₂) = 0.2·0.1/0.28
        assert!((s.sigma2(2) - 0.2 * 0.1 / 0.28).abs() < 1e-6);
        assert_eq!(s.sigma2(1), 0.0);
    }

    #[test]
    fn default_schedule_destroys_signal() {
        let s = DiffusionSchedule::make(20, 0.05, 0.5).unwrap();
        // direct-product oracle
        let mut prod = 1.0f64;
        for i in 0..20 {
            prod *= 1.0 - (0.05 + (0.5 - 0.05) * i as f64 / 19.0);
        }
        assert!((s.alpha_bar(20) as f64 - prod).abs() < 1e-6);
        assert!(prod < 0.01);
        assert!(s.is_strong());
        // monotonicity invariants
        for k in 2..=20 {
            assert!(s.beta(k) >= s.beta(k - 1));
            assert!(s.alpha_bar(k) < s.alpha_bar(k - 1));
        }
    }

    #[test]
    fn weak_schedule_gate() {
        let s = DiffusionSchedule::make(2, 0.1, 0.2).unwrap();
        assert!(!s.is_strong());
        assert!(matches!(s.ensure_strong(), Err(ScheduleError::TooWeak(_))));
        assert!(DiffusionSchedule::make(20, 0.05, 0.5).unwrap().ensure_strong().is_ok());
    }

    #[test]
    fn bad_ranges_rejected() {
        assert!(matches!(
            DiffusionSchedule::make(5, 0.0, 0.5),
            Err(ScheduleError::BadBetaRange(..))
        ));
        assert!(matches!(
            DiffusionSchedule::make(5, 0.6, 0.5),
            Err(ScheduleError::BadBetaRange(..))
        ));
        assert!(matches!(
            DiffusionSchedule::make(5, 0.1, 1.0),
            Err(ScheduleError::BadBetaRange(..))
        ));
        assert!(matches!(DiffusionSchedule::make(0, 0.1, 0.5), Err(ScheduleError::ZeroIterations)));
    }

    #[test]
    fn forward_diffuse_degenerate_cases() {
        let s = DiffusionSchedule::make(20, 0.05, 0.5).unwrap();
        let x0 = [0.4, -0.8, 0.1];
        let zeros = [0.0; 3];
        let got = forward_diffuse(&x0, 7, &zeros, &s);
        let scale = s.alpha_bar(7).sqrt();
        for (g, x) in got.iter().zip(&x0) {
            assert!((g - scale * x).abs() < 1e-7);
        }
        let eps = [1.0, -2.0, 0.5];
        let got = forward_diffuse(&zeros, 7, &eps, &s);
        let scale = (1.0 - s.alpha_bar(7)).sqrt();
        for (g, e) in got.iter().zip(&eps) {
            assert!((g - scale * e).abs() < 1e-7);
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn forward_diffuse_k_out_of_range() {
        let s = DiffusionSchedule::make(5, 0.1, 0.5).unwrap();
        forward_diffuse(&[0.0], 6, &[0.0], &s);
    }

    #[test]
    fn k1_reverse_recovers_x0_with_true_noise() {
        // algebraic identity: at k = 1 with ε̂ = ε the step returns x0
        let s = DiffusionSchedule::make(1, 0.3, 0.3).unwrap();
        let mut rng = Rng::new(77);
        for _ in 0..20 {
            let x0 = rng.normal_vec(6);
            let eps = rng.normal_vec(6);
            let x1 = forward_diffuse(&x0, 1, &eps, &s);
            let back = denoise_step_from(&x1, &eps, 1, &s, &[0.0; 6]);
            for (b, x) in back.iter().zip(&x0) {
                assert!((b - x).abs() <= 1e-5, "{b} vs {x}");
            }
        }
    }

    #[test]
    fn stub_zero_noise_degenerates_to_rescale() {
        let s = DiffusionSchedule::make(4, 0.1, 0.4).unwrap();
        let sk = [0.5, -0.2];
        let out = denoise_step_from(&sk, &[0.0, 0.0], 3, &s, &[0.0, 0.0]);
        let scale = 1.0 / s.alpha(3).sqrt();
        for (o, v) in out.iter().zip(&sk) {
            assert!((o - scale * v).abs() < 1e-7);
        }
    }

    #[test]
    #[should_panic(expected = "z must be zero")]
    fn nonzero_z_at_k1_rejected() {
        let s = DiffusionSchedule::make(2, 0.1, 0.2).unwrap();
        denoise_step_from(&[0.1], &[0.0], 1, &s, &[0.5]);
    }
}
