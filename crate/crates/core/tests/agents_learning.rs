//! Learning-dynamics oracles: tabular DP fixed point for the TD update,
//! finite differences for the TD loss, and bandit convergence for PPO.

use sidiff_core::agents::ppo::{ppo_update, ActorCritic, ActorCriticConfig};
use sidiff_core::agents::td::{td_loss_and_backward, td_loss_value};
use sidiff_core::agents::{sample_categorical, MixerKind, PolicyDims, PolicySet, SgSource};
use sidiff_core::env::Outcome;
use sidiff_core::harness::episode::{EpisodeRecord, ReplayBuffer};
use sidiff_core::numerics::gradcheck::GradCheck;
use sidiff_core::numerics::{AdamState, ParamStore, Rng};

fn dims(state_dim: usize, obs_dim: usize, n_agents: usize) -> PolicyDims {
    PolicyDims {
        state_dim,
        obs_dim,
        n_agents,
        sg_dim: 8,
        patch_dim: 5,
        attention_heads: 4,
        rnn_hidden: 32,
    }
}

/// Two-step deterministic chain: s0 → s1 → terminal, rewards 0 then 1,
/// every action equivalent. DP fixed point: Q(s1,·) = 1, Q(s0,·) = γ.
fn chain_episode(rng: &mut Rng) -> EpisodeRecord {
    let s0 = vec![1.0, 0.0];
    let s1 = vec![0.0, 1.0];
    let st = vec![0.0, 0.0];
    EpisodeRecord {
        seed: 0,
        states: vec![s0.clone(), s1.clone(), st.clone()],
        observations: vec![vec![s0], vec![s1], vec![st]],
        alive: vec![vec![true]; 3],
        actions: vec![vec![rng.below(6)], vec![rng.below(6)]],
        rewards: vec![0.0, 1.0],
        terminated: vec![false, true],
        outcome: Outcome::Win,
        log_probs: None,
    }
}

#[test]
fn td_converges_to_dp_fixed_point_on_chain() {
    let gamma = 0.9f32;
    let mut policy = PolicySet::new(&dims(2, 2, 1), SgSource::None, MixerKind::Vdn, 77);
    let mut target = policy.target_copy();
    let mut adam = AdamState::new(&policy.store, 0.005);
    let mut buffer = ReplayBuffer::new(64);
    let mut rng = Rng::new(3);
    for _ in 0..40 {
        buffer.push(chain_episode(&mut rng));
    }
    for step in 0..400 {
        let batch = buffer.sample(8, &mut rng);
        policy.store.zero_grads();
        td_loss_and_backward(&policy.nets, &mut policy.store, &policy.nets, &target, &batch, gamma);
        adam.step(&mut policy.store);
        if step % 25 == 0 {
            target = policy.target_copy();
        }
    }

    let sg = vec![0.0; 8];
    let (q0, h1) = policy.q_step(&[1.0, 0.0], 0, &policy.nets.agent.zero_hidden(), &sg);
    let (q1, _) = policy.q_step(&[0.0, 1.0], 0, &h1, &sg);
    let mean0 = q0.iter().sum::<f32>() / 6.0;
    let mean1 = q1.iter().sum::<f32>() / 6.0;
    assert!((mean1 - 1.0).abs() < 0.08, "Q(s1) = {mean1}, DP oracle 1.0");
    assert!((mean0 - gamma).abs() < 0.08, "Q(s0) = {mean0}, DP oracle {gamma}");
}

#[test]
fn gamma_zero_targets_are_immediate_rewards() {
    let policy = PolicySet::new(&dims(2, 2, 1), SgSource::None, MixerKind::Vdn, 5);
    let target = policy.target_copy();
    let mut rng = Rng::new(9);
    let ep = chain_episode(&mut rng);
    let targets = sidiff_core::agents::td::td_targets(&policy.nets, &target, &[&ep], 0.0);
    assert_eq!(targets, vec![vec![0.0, 1.0]]);
}

#[test]
fn terminal_step_loss_is_squared_reward_gap() {
    // terminal transition with r = 1 and Q_tot prediction 0 → loss 1
    let mut policy = PolicySet::new(&dims(2, 2, 1), SgSource::None, MixerKind::Vdn, 5);
    for id in policy.store.ids().collect::<Vec<_>>() {
        policy.store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let target = policy.target_copy();
    let ep = EpisodeRecord {
        seed: 0,
        states: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
        observations: vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 0.0]]],
        alive: vec![vec![true]; 2],
        actions: vec![vec![0]],
        rewards: vec![1.0],
        terminated: vec![true],
        outcome: Outcome::Win,
        log_probs: None,
    };
    let loss = td_loss_value(&policy.nets, &policy.store, &policy.nets, &target, &[&ep], 0.99);
    assert!((loss - 1.0).abs() < 1e-6, "loss {loss}");
}

fn synthetic_two_agent_batch(rng: &mut Rng, state_dim: usize, obs_dim: usize) -> Vec<EpisodeRecord> {
    (0..2)
        .map(|_| {
            let steps = 3usize;
            EpisodeRecord {
                seed: 0,
                states: (0..=steps).map(|_| rng.uniform_vec(state_dim, 0.0, 1.0)).collect(),
                observations: (0..=steps)
                    .map(|_| (0..2).map(|_| rng.uniform_vec(obs_dim, 0.0, 1.0)).collect())
                    .collect(),
                alive: vec![vec![true, true]; steps + 1],
                actions: (0..steps).map(|_| vec![rng.below(6), rng.below(6)]).collect(),
                rewards: (0..steps).map(|_| rng.range(-1.0, 1.0)).collect(),
                terminated: (0..steps).map(|t| t == steps - 1).collect(),
                outcome: Outcome::Timeout,
                log_probs: None,
            }
        })
        .collect()
}

#[test]
fn td_loss_gradient_matches_finite_differences() {
    let mut rng = Rng::new(11);
    let mut policy = PolicySet::new(&dims(11, 6, 2), SgSource::State, MixerKind::Vdn, 13);
    let target = policy.target_copy();
    let episodes = synthetic_two_agent_batch(&mut rng, 11, 6);
    let batch: Vec<&EpisodeRecord> = episodes.iter().collect();

    policy.store.zero_grads();
    td_loss_and_backward(&policy.nets, &mut policy.store, &policy.nets, &target, &batch, 0.9);

    let nets = &policy.nets;
    let target_ref = &target;
    let batch_ref = &batch;
    let err = GradCheck { h: 1e-3, max_coords_per_param: 6 }.max_rel_err(
        &mut policy.store,
        &mut Rng::new(2),
        |store: &ParamStore| td_loss_value(nets, store, nets, target_ref, batch_ref, 0.9),
    );
    assert!(err <= 1e-3, "td gradcheck rel err {err}");
}

#[test]
fn monotonic_mixer_td_loss_decreases() {
    let mut rng = Rng::new(21);
    let mut policy = PolicySet::new(&dims(11, 6, 2), SgSource::State, MixerKind::Monotonic, 31);
    let target = policy.target_copy();
    let episodes = synthetic_two_agent_batch(&mut rng, 11, 6);
    let batch: Vec<&EpisodeRecord> = episodes.iter().collect();
    let mut adam = AdamState::new(&policy.store, 0.003);
    let before = td_loss_value(&policy.nets, &policy.store, &policy.nets, &target, &batch, 0.9);
    for _ in 0..60 {
        policy.store.zero_grads();
        td_loss_and_backward(&policy.nets, &mut policy.store, &policy.nets, &target, &batch, 0.9);
        adam.step(&mut policy.store);
    }
    let after = td_loss_value(&policy.nets, &policy.store, &policy.nets, &target, &batch, 0.9);
    assert!(after < before * 0.5, "monotonic TD: {before} -> {after}");
}

// ── PPO ────────────────────────────────────────────────────────────────

/// Two-armed bandit: one step, arm 0 pays 1, arm 1 pays 0.
fn bandit_episode(ac: &ActorCritic, rng: &mut Rng) -> EpisodeRecord {
    let obs = vec![1.0, 0.0];
    let sg = vec![0.0; ac.nets.sg_dim];
    let (probs, _) = ac.policy_step(&obs, 0, &ac.nets.actor.zero_hidden(), &sg);
    let action = sample_categorical(&probs, rng);
    let reward = if action == 0 { 1.0 } else { 0.0 };
    EpisodeRecord {
        seed: 0,
        states: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
        observations: vec![vec![obs], vec![vec![0.0, 0.0]]],
        alive: vec![vec![true]; 2],
        actions: vec![vec![action]],
        rewards: vec![reward],
        terminated: vec![true],
        outcome: Outcome::Win,
        log_probs: Some(vec![vec![probs[action].max(1e-20).ln()]]),
    }
}

#[test]
fn ppo_bandit_learns_the_better_arm() {
    let mut ac = ActorCritic::new(&dims(2, 2, 1), SgSource::None, 2, 17);
    let cfg = ActorCriticConfig { clip: 0.2, gamma: 0.99, value_coef: 0.5, polyak: 0.995 };
    let mut adam = AdamState::new(&ac.store, 0.01);
    let mut rng = Rng::new(6);
    let mut updates = 0;
    let mut prob_best = 0.0;
    while updates < 500 {
        let episodes: Vec<EpisodeRecord> = (0..16).map(|_| bandit_episode(&ac, &mut rng)).collect();
        let batch: Vec<&EpisodeRecord> = episodes.iter().collect();
        ppo_update(&mut ac, &batch, &cfg, &mut adam);
        updates += 1;
        let (probs, _) = ac.policy_step(
            &[1.0, 0.0],
            0,
            &ac.nets.actor.zero_hidden(),
            &vec![0.0; ac.nets.sg_dim],
        );
        prob_best = probs[0];
        if prob_best > 0.9 {
            break;
        }
    }
    assert!(
        prob_best > 0.9,
        "policy probability of the better arm after {updates} updates: {prob_best}"
    );
}

#[test]
fn fresh_policy_ratio_is_one_so_clip_is_inactive() {
    let ac0 = ActorCritic::new(&dims(2, 2, 1), SgSource::None, 2, 23);
    let mut ac = ActorCritic::new(&dims(2, 2, 1), SgSource::None, 2, 23);
    let cfg = ActorCriticConfig::default();
    let mut rng = Rng::new(8);
    let episodes: Vec<EpisodeRecord> = (0..8).map(|_| bandit_episode(&ac0, &mut rng)).collect();
    let batch: Vec<&EpisodeRecord> = episodes.iter().collect();
    // expected policy loss with ratio == 1: −mean(advantage)
    let mean_adv: f32 = episodes
        .iter()
        .map(|e| e.rewards[0] - ac0.value_of(&e.states[0], true))
        .sum::<f32>()
        / episodes.len() as f32;
    let mut adam = AdamState::new(&ac.store, 1e-8);
    let (policy_loss, _) = ppo_update(&mut ac, &batch, &cfg, &mut adam);
    assert!(
        (policy_loss - (-mean_adv)).abs() < 1e-3,
        "policy loss {policy_loss} vs unclipped {}",
        -mean_adv
    );
}

#[test]
fn zero_advantage_means_zero_policy_gradient() {
    let mut ac = ActorCritic::new(&dims(2, 2, 1), SgSource::None, 2, 29);
    // zero every parameter: uniform policy, zero critics, zero rewards below
    for id in ac.store.ids().collect::<Vec<_>>() {
        ac.store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    ac.target_store = ac.store.clone();
    let mut rng = Rng::new(10);
    let mut episodes: Vec<EpisodeRecord> = (0..4).map(|_| bandit_episode(&ac, &mut rng)).collect();
    for e in &mut episodes {
        e.rewards = vec![0.0];
    }
    let batch: Vec<&EpisodeRecord> = episodes.iter().collect();
    let before: Vec<f32> = ac
        .store
        .ids()
        .flat_map(|id| ac.store.value(id).data().to_vec())
        .collect();
    let mut adam = AdamState::new(&ac.store, 0.05);
    ppo_update(&mut ac, &batch, &ActorCriticConfig::default(), &mut adam);
    let after: Vec<f32> = ac
        .store
        .ids()
        .flat_map(|id| ac.store.value(id).data().to_vec())
        .collect();
    assert_eq!(before, after, "zero advantage and zero value error must not move parameters");
}

#[test]
#[should_panic(expected = "log-probabilities")]
fn ppo_requires_stored_log_probs() {
    let mut ac = ActorCritic::new(&dims(2, 2, 1), SgSource::None, 2, 31);
    let mut rng = Rng::new(12);
    let mut ep = bandit_episode(&ac, &mut rng);
    ep.log_probs = None;
    let mut adam = AdamState::new(&ac.store, 0.01);
    ppo_update(&mut ac, &[&ep], &ActorCriticConfig::default(), &mut adam);
}
