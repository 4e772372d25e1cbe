use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use interfere_core::harness::plot::{emit_plot, PlotKind};
use interfere_core::harness::run::CONFIG_FILE;
use interfere_core::harness::stats::correlate_file;
use interfere_core::harness::sweep::{run_sweep, GridSpec, Preset};
use interfere_core::harness::tworoom::{run_tworoom, TwoRoomAgent, TwoRoomConfig};
use interfere_core::harness::{run_experiment, verify_run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "interfere", version, about = "Interference and degradation experiments for value-based agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one instrumented experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of experiments and write summary.csv.
    Sweep {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        grid: Option<PathBuf>,
        /// Named grid: correlation or oa-acrobot.
        #[arg(long)]
        preset: Option<String>,
        /// Use the full-size grid for the preset.
        #[arg(long, requires = "preset")]
        full_scale: bool,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-Room forgetting diagnostic.
    Tworoom {
        /// dqi-target or tilecode-linear.
        #[arg(long)]
        agent: String,
        #[arg(long, default_value_t = 60_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        eval_every: usize,
        /// Empty the replay buffer at the teleport.
        #[arg(long)]
        clear_replay: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pearson and Spearman correlation of two summary columns.
    Correlate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "interference_across_iters")]
        x: String,
        #[arg(long, default_value = "degradation")]
        y: String,
        #[arg(long)]
        include_diverged: bool,
    },
    /// Render an SVG figure: scatter, curves, per_run or tworoom.
    Plot {
        #[arg(long)]
        kind: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute summary scalars from per-iteration logs. Accepts a run
    /// directory or a sweep directory.
    Verify {
        #[arg(long)]
        run: PathBuf,
    },
}

fn fmt_coef(c: Option<f64>) -> String {
    c.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

fn verify_dir(dir: &Path) -> Result<usize> {
    if dir.join(CONFIG_FILE).is_file() {
        verify_run(dir).with_context(|| format!("verifying {}", dir.display()))?;
        println!("ok {}", dir.display());
        return Ok(1);
    }
    let mut runs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CONFIG_FILE).is_file())
        .collect();
    runs.sort();
    if runs.is_empty() {
        bail!("{} holds no runs", dir.display());
    }
    for run in &runs {
        verify_run(run).with_context(|| format!("verifying {}", run.display()))?;
        println!("ok {}", run.display());
    }
    Ok(runs.len())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = run_experiment(&cfg, Some(&out))?;
            let s = &result.summary;
            println!(
                "{} status={} interference_across_iters={} degradation={} mean_return_last={}",
                result.run_id, s.status, s.interference_across_iters, s.degradation, s.mean_return_last
            );
            if let Some(dir) = result.dir {
                println!("wrote {}", dir.display());
            }
        }
        Command::Sweep {
            grid,
            preset,
            full_scale,
            seeds,
            first_seed,
            jobs,
            out,
        } => {
            let spec = match (grid, preset) {
                (Some(path), _) => GridSpec::load(&path).with_context(|| format!("loading {}", path.display()))?,
                (None, Some(name)) => name.parse::<Preset>()?.grid(full_scale),
                (None, None) => bail!("one of --grid or --preset is required"),
            };
            let configs = spec.expand(seeds, first_seed)?;
            eprintln!("running {} configs on {} workers", configs.len(), jobs.max(1));
            let result = run_sweep(&configs, jobs, &out)?;
            for (id, err) in &result.failures {
                eprintln!("run {id} failed: {err}");
            }
            println!(
                "{} runs ok, {} failed; summary in {}",
                result.summaries.len(),
                result.failures.len(),
                out.join("summary.csv").display()
            );
            if result.summaries.is_empty() {
                bail!("every run failed");
            }
        }
        Command::Tworoom {
            agent,
            steps,
            seed,
            eval_every,
            clear_replay,
            out,
        } => {
            let mut cfg = TwoRoomConfig::new(agent.parse::<TwoRoomAgent>()?, steps, seed);
            cfg.eval_every = eval_every;
            cfg.clear_replay = clear_replay;
            let outcome = run_tworoom(&cfg, Some(&out))?;
            let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
            println!(
                "{} seed {}: pre-switch room-1 return {}, max drop {}, max deviation {}",
                cfg.agent,
                seed,
                fmt(outcome.pre_switch_return()),
                fmt(outcome.max_relative_drop(cfg.switch_step())),
                fmt(outcome.max_relative_deviation())
            );
            if let Some(p) = outcome.path {
                println!("wrote {}", p.display());
            }
        }
        Command::Correlate {
            input,
            x,
            y,
            include_diverged,
        } => {
            let c = correlate_file(&input, &x, &y, include_diverged)?;
            println!("n={} pearson={} spearman={}", c.n, fmt_coef(c.pearson), fmt_coef(c.spearman));
        }
        Command::Plot { kind, input, out } => {
            emit_plot(kind.parse::<PlotKind>()?, &input, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Verify { run } => {
            let n = verify_dir(&run)?;
            println!("verified {n} run(s)");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
