use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mmlab::envs::read_trace;
use mmlab::hindsight::{best_fixed_pair, brute_force_best};
use mmlab::runner::{run_experiment, Artifacts};
use mmlab::verify::verify_all;
use mmlab::{ExecMode, RunConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mmlab", version, about = "Online market making experiments and audits")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,

    /// Override a config value, e.g. `--set environment.k=2` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory (overrides `output_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration at a single horizon.
    Simulate {
        #[command(flatten)]
        args: ConfigArgs,

        /// Horizon (overrides `horizons`).
        #[arg(short = 'T', long)]
        horizon: Option<u64>,
    },
    /// Run a configuration over a grid of horizons and fit the regret exponent.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,

        /// Comma-separated horizons (overrides `horizons`).
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<u64>>,
    },
    /// Best fixed quote in hindsight for a recorded trace (CSV columns m, v).
    BestFixed {
        trace: PathBuf,

        /// Also report the best point of an n x n grid.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Audit the hard-instance construction; exits nonzero if any check fails.
    Verify {
        /// Strip counts to audit.
        #[arg(short = 'K', long = "ks", value_delimiter = ',', default_value = "4,8,16")]
        ks: Vec<usize>,

        /// Sampled points per region and strip.
        #[arg(long, default_value_t = 1000)]
        samples: usize,

        /// Uniform points for the partition check.
        #[arg(long, default_value_t = 100_000)]
        partition_samples: usize,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Write the JSON report here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &ConfigArgs, mut extra: Vec<String>) -> Result<RunConfig> {
    let mut overrides = args.overrides.clone();
    overrides.append(&mut extra);
    let mut config = RunConfig::load(&args.config, &overrides)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate().context("invalid configuration")?;
    Ok(config)
}

fn report(artifacts: &Artifacts) {
    let s = &artifacts.summary;
    println!("{} x {}", s.environment, s.learner);
    println!("{:>10} {:>14} {:>12} {:>16} {:>6}", "horizon", "mean_regret", "std_regret", "expected_regret", "seeds");
    for h in &s.horizons {
        let expected = h.mean_expected_regret.map_or("-".to_string(), |e| format!("{e:.3}"));
        println!("{:>10} {:>14.3} {:>12.3} {:>16} {:>6}", h.horizon, h.mean_regret, h.std_regret, expected, h.n_seeds);
    }
    if let Some(e) = s.exponent_fit {
        println!("exponent fit (realized): {e:.4}");
    }
    if let Some(e) = s.exponent_fit_expected {
        println!("exponent fit (expected): {e:.4}");
    }
    println!("summary: {}", artifacts.summary_path.display());
    println!("manifest: {}", artifacts.manifest_path.display());
}

fn write_or_print(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    match cli.command {
        Command::Simulate { args, horizon } => {
            let extra = horizon.map(|t| vec![format!("horizons=[{t}]")]).unwrap_or_default();
            let config = load(&args, extra)?;
            if config.horizons.len() != 1 {
                bail!("simulate runs one horizon, got {:?}; use `sweep` or pass -T", config.horizons);
            }
            report(&run_experiment(&config, mode)?);
            Ok(true)
        }
        Command::Sweep { args, horizons } => {
            let extra = horizons
                .map(|hs| {
                    let list: Vec<String> = hs.iter().map(u64::to_string).collect();
                    vec![format!("horizons=[{}]", list.join(","))]
                })
                .unwrap_or_default();
            let config = load(&args, extra)?;
            report(&run_experiment(&config, mode)?);
            Ok(true)
        }
        Command::BestFixed { trace, grid } => {
            let rounds = read_trace(&trace).with_context(|| format!("reading trace {}", trace.display()))?;
            let (value, witness) = best_fixed_pair(&rounds);
            let mut out = json!({
                "rounds": rounds.len(),
                "value": value,
                "bid": witness.pair.bid(),
                "ask": witness.pair.ask(),
                "ask_left_limit": witness.ask_left_limit,
            });
            if let Some(n) = grid {
                if n < 2 {
                    bail!("grid resolution must be at least 2");
                }
                out["grid_value"] = json!(brute_force_best(&rounds, n));
            }
            write_or_print(None, &out)?;
            Ok(true)
        }
        Command::Verify { ks, samples, partition_samples, seed, out } => {
            if let Some(&k) = ks.iter().find(|&&k| k < 2) {
                bail!("K must be at least 2, got {k}");
            }
            let report = verify_all(&ks, samples, partition_samples, seed, mode)?;
            for kl in &report.kl {
                eprintln!(
                    "K={:<3} KL violations {:<4} exploit max/bound {:.3}  explore max/bound {:.3}",
                    kl.big_k,
                    kl.violations,
                    kl.max_exploit_kl / kl.exploit_bound,
                    kl.max_explore_kl / kl.explore_bound
                );
            }
            for p in &report.partition {
                eprintln!("K={:<3} partition {}/{}", p.big_k, p.passed, p.samples);
            }
            let failed: Vec<_> = report
                .construction
                .iter()
                .flat_map(|c| c.checks.iter().filter(|x| !x.passed).map(move |x| (c.big_k, c.k, x)))
                .collect();
            for (big_k, k, check) in &failed {
                eprintln!("K={big_k} k={k} FAILED {}: {} vs {}", check.name, check.value, check.threshold);
            }
            eprintln!("{}", if report.passed { "all checks passed" } else { "verification FAILED" });
            write_or_print(out.as_deref(), &serde_json::to_value(&report)?)?;
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
