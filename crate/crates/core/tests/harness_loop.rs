//! End-to-end harness behavior: smoke learning, CTDE separation probes,
//! artifact layout, reproducibility, and worker-count invariance.

use sidiff_core::agents::{MixerKind, PolicySet, SgSource};
use sidiff_core::env::Scenario;
use sidiff_core::harness::{
    collect_pg_episode, collect_training_episode, load_run, run_evaluation, run_training,
    run_training_pg, Algo, EvalActor, LoadedPolicy, Probes, SgSetting, TrainConfig,
};
use sidiff_core::numerics::Rng;
use std::path::PathBuf;

fn tmp_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("sidiff_run_{tag}_{}", std::process::id()))
}

/// Small-but-real config for the 5x5 smoke scenario.
fn smoke_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        total_env_steps: 400,
        eval_interval_episodes: 20,
        eval_episodes: 4,
        batch_episodes: 4,
        target_period: 10,
        learning_rate: 0.002,
        gen_epochs: 2,
        gen_last_episodes: 4,
        diffusion_k: 3,
        gen_widths: [8, 12, 16],
        gen_embed_dim: 16,
        sg_dim: 8,
        rnn_hidden: 32,
        epsilon_anneal_frac: 0.5,
        workers: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn vdn_run_produces_artifacts_and_clean_probes() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    let out = tmp_dir("vdn_smoke");
    let artifacts = run_training(Algo::Vdn, &smoke_config(3), &scenario, &out, true).unwrap();

    assert!(artifacts.env_steps >= 400);
    assert!(artifacts.episodes > 0);
    // CTDE separation contract
    assert!(artifacts.probes.ctde_clean(), "probes: {:?}", artifacts.probes);
    assert!(artifacts.probes.truth_sg_train_rollout > 0);
    assert!(artifacts.probes.reconstruct_eval > 0);

    // run directory layout
    assert!(out.join("config.toml").is_file());
    assert!(out.join("scenario.toml").is_file());
    assert!(out.join("metrics.csv").is_file());
    assert!(out.join("checkpoints/policy.sidf").is_file());
    assert!(out.join("checkpoints/generator.sidf").is_file());

    // one metrics row per episode, fixed columns
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len() as u64, artifacts.episodes + 1);
    for line in &lines {
        assert_eq!(line.split(',').count(), 9, "bad row: {line}");
    }
    // every eval point wrote a replay and a state-pair file
    for point in &artifacts.eval_history {
        assert!(out.join(format!("replays/eval_{}.jsonl", point.episode)).is_file());
        assert!(out.join(format!("state_pairs/eval_{}.jsonl", point.episode)).is_file());
    }
    assert!(!artifacts.eval_history.is_empty(), "final episode must evaluate");
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn eval_interval_zero_never_trains_generator() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    let out = tmp_dir("noeval");
    let config = TrainConfig {
        eval_interval_episodes: 0,
        total_env_steps: 120,
        ..smoke_config(5)
    };
    let artifacts = run_training(Algo::Vdn, &config, &scenario, &out, true).unwrap();
    assert!(artifacts.eval_history.is_empty());
    assert_eq!(artifacts.probes.reconstruct_eval, 0);
    // generator parameters still at their init values
    let trained = artifacts.generator.unwrap();
    let fresh = sidiff_core::diffusion::StateGenerator::new(
        scenario.state_dim(),
        scenario.obs_dim(),
        1,
        &sidiff_core::diffusion::GeneratorConfig {
            k_steps: config.diffusion_k,
            beta_start: config.beta_start,
            beta_end: config.beta_end,
            p_uncond: config.p_uncond,
            learning_rate: config.gen_learning_rate,
            widths: config.gen_widths,
            embed_dim: config.gen_embed_dim,
            k_code_dim: 32,
        },
        Rng::new(config.seed).fork(2).seed(),
    )
    .unwrap();
    for id in trained.store.ids().collect::<Vec<_>>() {
        let name = trained.store.name(id).to_string();
        let fresh_id = fresh.store.id(&name).unwrap();
        assert_eq!(
            trained.store.value(id).data(),
            fresh.store.value(fresh_id).data(),
            "generator parameter {name} changed without any evaluation"
        );
    }
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn metrics_reproducible_for_same_seed() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    let out1 = tmp_dir("repro1");
    let out2 = tmp_dir("repro2");
    run_training(Algo::Vdn, &smoke_config(11), &scenario, &out1, true).unwrap();
    run_training(Algo::Vdn, &smoke_config(11), &scenario, &out2, true).unwrap();
    let a = std::fs::read_to_string(out1.join("metrics.csv")).unwrap();
    let b = std::fs::read_to_string(out2.join("metrics.csv")).unwrap();
    use sidiff_core::harness::metrics::strip_wall_clock;
    assert_eq!(strip_wall_clock(&a), strip_wall_clock(&b));
    std::fs::remove_dir_all(&out1).ok();
    std::fs::remove_dir_all(&out2).ok();
}

#[test]
fn refusing_to_overwrite_without_force() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    let out = tmp_dir("collide");
    std::fs::create_dir_all(&out).unwrap();
    let err = run_training(Algo::Vdn, &smoke_config(1), &scenario, &out, false);
    assert!(matches!(err, Err(sidiff_core::harness::HarnessError::OutDirExists(_))));
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn evaluation_is_worker_count_invariant() {
    let scenario = Scenario::builtin("2_vs_8").unwrap();
    let dims = sidiff_core::agents::PolicyDims {
        state_dim: scenario.state_dim(),
        obs_dim: scenario.obs_dim(),
        n_agents: 2,
        sg_dim: 8,
        patch_dim: 5,
        attention_heads: 4,
        rnn_hidden: 32,
    };
    let policy = PolicySet::new(&dims, SgSource::Obs, MixerKind::Vdn, 9);
    let probes = Probes::new();
    let actor = EvalActor::Value { policy: &policy, generator: None };
    let runs: Vec<Vec<Vec<f32>>> = [1usize, 4, 1, 4, 1]
        .iter()
        .map(|&workers| {
            let summary = run_evaluation(&scenario, &actor, 6, 77, workers, &probes);
            summary
                .episodes
                .iter()
                .map(|e| e.record.states.concat())
                .collect()
        })
        .collect();
    for other in &runs[1..] {
        assert_eq!(&runs[0], other, "trajectories must not depend on worker count");
    }
}

#[test]
fn zero_eval_episodes_returns_zeroes() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    let dims = sidiff_core::agents::PolicyDims {
        state_dim: scenario.state_dim(),
        obs_dim: scenario.obs_dim(),
        n_agents: 1,
        sg_dim: 8,
        patch_dim: 5,
        attention_heads: 4,
        rnn_hidden: 32,
    };
    let policy = PolicySet::new(&dims, SgSource::None, MixerKind::Vdn, 4);
    let probes = Probes::new();
    let actor = EvalActor::Value { policy: &policy, generator: None };
    let summary = run_evaluation(&scenario, &actor, 0, 5, 1, &probes);
    assert_eq!(summary.win_rate, 0.0);
    assert_eq!(summary.mean_return, 0.0);
    assert!(summary.episodes.is_empty());
}

#[test]
fn smoke_training_beats_random_baseline() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    let out = tmp_dir("learn");
    let config = TrainConfig {
        total_env_steps: 2500,
        eval_interval_episodes: 0,
        sg_source: SgSetting::Obs,
        ..smoke_config(21)
    };
    let artifacts = run_training(Algo::Vdn, &config, &scenario, &out, true).unwrap();

    // random baseline: mean return of 100 fully random episodes
    let probes = Probes::new();
    let mut rng = Rng::new(1234);
    let baseline: f32 = (0..100)
        .map(|i| {
            collect_training_episode(&scenario, 50_000 + i, &artifacts.policy, 1.0, &probes, &mut rng)
                .total_reward()
        })
        .sum::<f32>()
        / 100.0;

    let actor = EvalActor::Value { policy: &artifacts.policy, generator: None };
    let summary = run_evaluation(&scenario, &actor, 16, 999, 1, &probes);
    assert!(
        summary.mean_return > baseline,
        "trained return {} should beat random baseline {}",
        summary.mean_return,
        baseline
    );
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn load_run_reproduces_the_trained_policy() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    let out = tmp_dir("loadrun");
    let artifacts = run_training(Algo::Vdn, &smoke_config(31), &scenario, &out, true).unwrap();
    let (snapshot, loaded_scenario, loaded) = load_run(&out).unwrap();
    assert_eq!(snapshot.algo, Algo::Vdn);
    assert_eq!(loaded_scenario.name, scenario.name);
    let LoadedPolicy::Value(policy, generator) = loaded else {
        panic!("expected value policy");
    };
    assert!(generator.is_some());
    let probes = Probes::new();
    let live = EvalActor::Value {
        policy: &artifacts.policy,
        generator: artifacts.generator.as_ref(),
    };
    let from_disk = EvalActor::Value { policy: &policy, generator: generator.as_ref() };
    let a = run_evaluation(&scenario, &live, 4, 42, 1, &probes);
    let b = run_evaluation(&scenario, &from_disk, 4, 42, 1, &probes);
    assert_eq!(a.win_rate, b.win_rate);
    assert_eq!(a.mean_return, b.mean_return);
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn pg_rollouts_store_log_probs_and_loop_runs() {
    let scenario = Scenario::builtin("1_vs_1_5x5").unwrap();
    // schema check on a single collected episode
    let dims = sidiff_core::agents::PolicyDims {
        state_dim: scenario.state_dim(),
        obs_dim: scenario.obs_dim(),
        n_agents: 1,
        sg_dim: 8,
        patch_dim: 5,
        attention_heads: 4,
        rnn_hidden: 32,
    };
    let ac = sidiff_core::agents::ppo::ActorCritic::new(&dims, SgSource::None, 6, 7);
    let probes = Probes::new();
    let mut rng = Rng::new(2);
    let ep = collect_pg_episode(&scenario, 11, &ac, &probes, &mut rng);
    let lps = ep.log_probs.as_ref().expect("log-probs stored");
    assert_eq!(lps.len(), ep.len());
    assert!(lps.iter().all(|row| row.len() == 1 && row.iter().all(|v| *v <= 0.0)));

    // short full loop with the same probes contract
    let out = tmp_dir("pg_smoke");
    let config = TrainConfig {
        total_env_steps: 240,
        eval_interval_episodes: 8,
        eval_episodes: 2,
        ppo_batch_episodes: 4,
        ppo_epochs: 2,
        ppo_learning_rate: 0.002,
        ..smoke_config(41)
    };
    let artifacts = run_training_pg(&config, &scenario, &out, true).unwrap();
    assert!(artifacts.probes.ctde_clean(), "probes: {:?}", artifacts.probes);
    assert!(!artifacts.eval_history.is_empty());
    let (snapshot, _, loaded) = load_run(&out).unwrap();
    assert_eq!(snapshot.algo, Algo::Mappo);
    assert!(matches!(loaded, LoadedPolicy::Pg(..)));
    std::fs::remove_dir_all(&out).ok();
}
