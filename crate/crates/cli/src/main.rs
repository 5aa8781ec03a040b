//! `sidiff` — train, evaluate, sweep, replay, and export state pairs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 checkpoint error,
//! 4 data error. Logging level comes from SIDIFF_LOG (error|info|debug).

mod config_file;

use clap::{Parser, Subcommand};
use config_file::RunConfigFile;
use sidiff_core::env::{parse_replay, render_frame, Scenario};
use sidiff_core::harness::{
    self, load_run, run_evaluation, run_training, run_training_pg, Algo, EvalActor, LoadedPolicy,
    Probes, TrainConfig,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECKPOINT: u8 = 3;
const EXIT_DATA: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sidiff",
    version,
    about = "Global-state reconstruction for cooperative multi-agent RL on Battle City"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a run from a config file.
    Train {
        /// Path to a run config (TOML with [env]/[diffusion]/[extractor]/[rl]/[run]).
        config: PathBuf,
        /// Training algorithm.
        #[arg(long, default_value = "vdn")]
        algo: String,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Run output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a finished run's checkpoints decentralized.
    Eval {
        checkpoint_dir: PathBuf,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long, default_value_t = 1000)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Ablation sweep over diffusion iterations K or patch dimension d.
    Sweep {
        config: PathBuf,
        /// Swept parameter: K or d.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value = "vdn")]
        algo: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Render an episode replay.
    Replay {
        replay_file: PathBuf,
        /// Draw every tick as an ASCII frame (otherwise a summary only).
        #[arg(long)]
        ascii: bool,
    },
    /// Export (true state, per-agent reconstructions) rows for an episode.
    ExportStates {
        checkpoint_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value_t = 2000)]
        seed: u64,
        /// Output file (defaults into the run's state_pairs/).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("SIDIFF_LOG", "error"),
    )
    .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, algo, seed, out, force } => cmd_train(&config, &algo, seed, &out, force),
        Command::Eval { checkpoint_dir, episodes, seed, workers } => {
            cmd_eval(&checkpoint_dir, episodes, seed, workers)
        }
        Command::Sweep { config, param, values, algo, out, force } => {
            cmd_sweep(&config, &param, &values, &algo, &out, force)
        }
        Command::Replay { replay_file, ascii } => cmd_replay(&replay_file, ascii),
        Command::ExportStates { checkpoint_dir, episodes, seed, out } => {
            cmd_export_states(&checkpoint_dir, episodes, seed, out.as_deref())
        }
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load_config(path: &Path) -> Result<(TrainConfig, Scenario), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file = RunConfigFile::parse(&text)?;
    let scenario = file.scenario(path.parent().unwrap_or(Path::new(".")))?;
    let config = file.to_train_config();
    config.validate()?;
    Ok((config, scenario))
}

fn harness_exit(err: &harness::HarnessError) -> u8 {
    match err {
        harness::HarnessError::Checkpoint(_) => EXIT_CHECKPOINT,
        harness::HarnessError::Io(_) => EXIT_DATA,
        _ => EXIT_CONFIG,
    }
}

fn cmd_train(config_path: &Path, algo: &str, seed: Option<u64>, out: &Path, force: bool) -> ExitCode {
    let Some(algo) = Algo::parse(algo) else {
        return fail(EXIT_CONFIG, format!("unknown algo '{algo}' (vdn|qmix|mappo)"));
    };
    let (mut config, scenario) = match load_config(config_path) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let result = match algo {
        Algo::Mappo => run_training_pg(&config, &scenario, out, force).map(|a| {
            (a.episodes, a.env_steps, a.final_eval().map(|e| (e.win_rate, e.mean_return)))
        }),
        _ => run_training(algo, &config, &scenario, out, force).map(|a| {
            (a.episodes, a.env_steps, a.final_eval().map(|e| (e.win_rate, e.mean_return)))
        }),
    };
    match result {
        Ok((episodes, steps, final_eval)) => {
            println!("run complete: {episodes} episodes, {steps} env steps -> {}", out.display());
            if let Some((w, r)) = final_eval {
                println!("final eval: win_rate={w:.3} return={r:.3}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(harness_exit(&e), e),
    }
}

fn cmd_eval(dir: &Path, episodes: usize, seed: u64, workers: usize) -> ExitCode {
    if episodes == 0 {
        println!("win_rate=0.000 return=0.000");
        return ExitCode::SUCCESS;
    }
    let (_, scenario, loaded) = match load_run(dir) {
        Ok(v) => v,
        Err(e @ harness::HarnessError::Checkpoint(_)) => return fail(EXIT_CHECKPOINT, e),
        Err(harness::HarnessError::Io(e)) => {
            return fail(EXIT_CHECKPOINT, format!("checkpoint dir {}: {e}", dir.display()))
        }
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let probes = Probes::new();
    let summary = match &loaded {
        LoadedPolicy::Value(policy, generator) => {
            let actor = EvalActor::Value { policy, generator: generator.as_ref() };
            run_evaluation(&scenario, &actor, episodes, seed, workers, &probes)
        }
        LoadedPolicy::Pg(ac, generator) => {
            let actor = EvalActor::Sampling { ac, generator: generator.as_ref() };
            run_evaluation(&scenario, &actor, episodes, seed, workers, &probes)
        }
    };
    debug_assert!(probes.snapshot().ctde_clean());
    println!("win_rate={:.3} return={:.3}", summary.win_rate, summary.mean_return);
    ExitCode::SUCCESS
}

fn cmd_sweep(
    config_path: &Path,
    param: &str,
    values: &[String],
    algo: &str,
    out: &Path,
    force: bool,
) -> ExitCode {
    let Some(algo) = Algo::parse(algo) else {
        return fail(EXIT_CONFIG, format!("unknown algo '{algo}'"));
    };
    if !matches!(param, "K" | "k" | "d") {
        return fail(EXIT_CONFIG, format!("sweep param must be K or d, got '{param}'"));
    }
    if values.is_empty() {
        return fail(EXIT_CONFIG, "sweep needs at least one value");
    }
    let (base_config, scenario) = match load_config(config_path) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let parsed: Result<Vec<usize>, _> = values.iter().map(|v| v.trim().parse::<usize>()).collect();
    let parsed = match parsed {
        Ok(v) if v.iter().all(|&x| x > 0) => v,
        _ => return fail(EXIT_CONFIG, format!("invalid sweep values {values:?}")),
    };
    if out.exists() && !force {
        return fail(EXIT_CONFIG, format!("sweep directory {} already exists", out.display()));
    }
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(EXIT_DATA, e);
    }
    let mut rows = Vec::new();
    for value in &parsed {
        let mut config = base_config.clone();
        match param {
            "d" => config.patch_dim = *value,
            _ => config.diffusion_k = *value,
        }
        let run_dir = out.join(format!("run_{}_{}", if param == "d" { "d" } else { "K" }, value));
        let summary = match algo {
            Algo::Mappo => run_training_pg(&config, &scenario, &run_dir, force)
                .map(|a| a.final_eval().map(|e| (e.win_rate, e.sg_loss))),
            _ => run_training(algo, &config, &scenario, &run_dir, force)
                .map(|a| a.final_eval().map(|e| (e.win_rate, e.sg_loss))),
        };
        match summary {
            Ok(final_eval) => {
                let (win, sg) = final_eval.unwrap_or((0.0, None));
                rows.push((*value, win, sg));
            }
            Err(e) => return fail(harness_exit(&e), e),
        }
    }
    let mut csv = String::from("value,final_win_rate,final_sg_loss\n");
    for (value, win, sg) in &rows {
        let sg = sg.map(|v| format!("{v:.6}")).unwrap_or_default();
        csv.push_str(&format!("{value},{win:.3},{sg}\n"));
    }
    if let Err(e) = std::fs::write(out.join("sweep.csv"), csv) {
        return fail(EXIT_DATA, e);
    }
    println!("sweep complete: {} runs -> {}", rows.len(), out.display());
    ExitCode::SUCCESS
}

fn cmd_replay(path: &Path, ascii: bool) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_DATA, format!("{}: {e}", path.display())),
    };
    let (header, ticks) = match parse_replay(&text) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_DATA, e),
    };
    let mut razed_so_far = Vec::new();
    if ascii {
        for tick in &ticks {
            razed_so_far.extend(tick.razed.iter().copied());
            print!("{}", render_frame(&header, tick, &razed_so_far));
            println!();
        }
    }
    let outcome = ticks.last().map(|t| t.outcome.clone()).unwrap_or_else(|| "ongoing".into());
    let total: f32 = ticks.iter().map(|t| t.reward).sum();
    println!(
        "scenario {} ({}x{}), {} ticks, total reward {total:.1}, outcome {outcome}",
        header.scenario, header.width, header.height,
        ticks.len()
    );
    ExitCode::SUCCESS
}

fn cmd_export_states(dir: &Path, episodes: usize, seed: u64, out: Option<&Path>) -> ExitCode {
    let (_, scenario, loaded) = match load_run(dir) {
        Ok(v) => v,
        Err(e @ harness::HarnessError::Checkpoint(_)) => return fail(EXIT_CHECKPOINT, e),
        Err(harness::HarnessError::Io(e)) => {
            return fail(EXIT_CHECKPOINT, format!("checkpoint dir {}: {e}", dir.display()))
        }
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let probes = Probes::new();
    let summary = match &loaded {
        LoadedPolicy::Value(policy, generator) => {
            if generator.is_none() {
                return fail(EXIT_CHECKPOINT, "run has no generator checkpoint to reconstruct with");
            }
            let actor = EvalActor::Value { policy, generator: generator.as_ref() };
            run_evaluation(&scenario, &actor, episodes, seed, 1, &probes)
        }
        LoadedPolicy::Pg(ac, generator) => {
            if generator.is_none() {
                return fail(EXIT_CHECKPOINT, "run has no generator checkpoint to reconstruct with");
            }
            let actor = EvalActor::Sampling { ac, generator: generator.as_ref() };
            run_evaluation(&scenario, &actor, episodes, seed, 1, &probes)
        }
    };
    for (i, episode) in summary.episodes.iter().enumerate() {
        let path = match out {
            Some(p) if episodes == 1 => p.to_path_buf(),
            Some(p) => p.with_extension(format!("{i}.jsonl")),
            None => dir.join(format!("state_pairs/export_{seed}_{i}.jsonl")),
        };
        match harness::write_state_pairs(&path, episode) {
            Ok(rows) => println!("wrote {rows} rows -> {}", path.display()),
            Err(e) => return fail(EXIT_DATA, e),
        }
    }
    ExitCode::SUCCESS
}
