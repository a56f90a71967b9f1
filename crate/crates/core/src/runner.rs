//! Experiment orchestration: the round-by-round protocol for every
//! `(horizon, seed)` pair, per-run CSV trajectories and aggregate JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{LearnerSpec, RunConfig};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::hindsight::{cumulative_regret_at, fit_scaling_exponent, RegretReport};
use crate::learners::{default_arm_count, FixedPair, M3Config, MarketMaker, UniformRandomPair, M3};
use crate::market::{make_feedback, BidAskPair, MarketRound};
use crate::par::{self, ExecMode};
use crate::seeds::{self, Component};

/// Everything a single run needs besides `(horizon, seed)`.
#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub environment: &'a crate::envs::EnvironmentSpec,
    pub learner: &'a LearnerSpec,
    pub bandit: crate::bandit::BanditAlgorithm,
    pub schedule: crate::bandit::RateSchedule,
    pub master_seed: u64,
    pub trajectory_points: usize,
}

impl<'a> RunSpec<'a> {
    pub fn from_config(c: &'a RunConfig) -> Self {
        RunSpec {
            environment: &c.environment,
            learner: &c.learner,
            bandit: c.bandit,
            schedule: c.schedule,
            master_seed: c.master_seed,
            trajectory_points: c.trajectory_points,
        }
    }
}

/// One protocol round as written to the per-run CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    pub bid: f64,
    pub ask: f64,
    pub m: f64,
    pub v: f64,
    pub utility: f64,
    pub cum_utility: f64,
    pub prefix_benchmark: Option<f64>,
    pub regret: Option<f64>,
}

/// Result of one run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub horizon: u64,
    pub seed: u64,
    pub rows: Vec<RunRow>,
    pub report: RegretReport,
}

fn build_maker(spec: &RunSpec, horizon: u64, seed: u64) -> Result<Box<dyn MarketMaker>> {
    let stream = |c| seeds::stream(spec.master_seed, horizon, seed, c);
    Ok(match *spec.learner {
        LearnerSpec::M3 { arms } => {
            let config = M3Config {
                arms: arms.unwrap_or_else(|| default_arm_count(horizon)),
                horizon,
                algorithm: spec.bandit,
                schedule: spec.schedule,
            };
            Box::new(M3::new(config, stream(Component::FpaBandit), stream(Component::DpBandit))?)
        }
        LearnerSpec::FixedPair { bid, ask } => Box::new(FixedPair(BidAskPair::new(bid, ask)?)),
        LearnerSpec::RandomPair => Box::new(UniformRandomPair::new(stream(Component::Baseline))),
    })
}

/// Runs the protocol for `horizon` rounds. Expected-utility figures are
/// attached when the environment has closed forms.
pub fn simulate(spec: &RunSpec, horizon: u64, seed: u64) -> Result<RunRecord> {
    let env = Environment::resolve(spec.environment, horizon)?;
    let mut maker = build_maker(spec, horizon, seed)?;
    let mut env_rng = seeds::stream(spec.master_seed, horizon, seed, Component::Environment);
    let n = horizon as usize;
    let mut rounds: Vec<MarketRound> = Vec::with_capacity(n);
    let mut utils = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    let optimum = env.expected_optimum();
    let mut expected = optimum.map(|_| 0.0);
    for t in 0..n {
        let round = env.next_round(t, &mut env_rng);
        let pair = maker.act();
        let u = pair.utility(&round);
        maker.observe(&make_feedback(&pair, &round))?;
        if let Some(acc) = expected.as_mut() {
            *acc += env.expected_utility(&pair)?;
        }
        rounds.push(round);
        utils.push(u);
        pairs.push(pair);
    }
    let mut report = cumulative_regret_at(&rounds, &utils, spec.trajectory_points)?;
    if let (Some(opt), Some(learner)) = (optimum, expected) {
        report = report.with_expected(horizon as f64 * opt.value, learner);
    }
    let rows = report
        .trajectory
        .iter()
        .zip(rounds.iter().zip(&pairs).zip(&utils))
        .map(|(p, ((r, q), &u))| RunRow {
            t: p.t,
            bid: q.bid(),
            ask: q.ask(),
            m: r.market_price(),
            v: r.taker_valuation(),
            utility: u,
            cum_utility: p.cum_utility,
            prefix_benchmark: p.prefix_benchmark,
            regret: p.regret,
        })
        .collect();
    report.trajectory = Vec::new();
    Ok(RunRecord { horizon, seed, rows, report })
}

/// Scalar outcome of one run, kept after its rows are written out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub horizon: u64,
    pub seed: u64,
    pub file: Option<String>,
    pub total_utility: f64,
    pub benchmark_value: f64,
    pub regret: f64,
    pub expected_benchmark: Option<f64>,
    pub expected_utility: Option<f64>,
    pub expected_regret: Option<f64>,
}

impl RunSummary {
    fn from_record(rec: &RunRecord, file: Option<String>) -> Self {
        RunSummary {
            horizon: rec.horizon,
            seed: rec.seed,
            file,
            total_utility: rec.report.total_learner_utility,
            benchmark_value: rec.report.benchmark_value,
            regret: rec.report.regret,
            expected_benchmark: rec.report.expected_benchmark,
            expected_utility: rec.report.expected_learner_utility,
            expected_regret: rec.report.expected_regret,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonAggregate {
    pub horizon: u64,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub n_seeds: usize,
    pub mean_expected_regret: Option<f64>,
    pub std_expected_regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub environment: String,
    pub learner: String,
    pub horizons: Vec<HorizonAggregate>,
    /// Log-log slope of mean realized regret; absent when unfittable.
    pub exponent_fit: Option<f64>,
    /// Log-log slope of mean expected regret; absent when unfittable.
    pub exponent_fit_expected: Option<f64>,
    pub runs: Vec<RunSummary>,
}

/// Sample mean and standard deviation (`n - 1` denominator, 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(config: &RunConfig, runs: Vec<RunSummary>) -> Summary {
    let horizons: Vec<HorizonAggregate> = config
        .horizons
        .iter()
        .map(|&h| {
            let of_h: Vec<&RunSummary> = runs.iter().filter(|r| r.horizon == h).collect();
            let realized: Vec<f64> = of_h.iter().map(|r| r.regret).collect();
            let expected: Option<Vec<f64>> = of_h.iter().map(|r| r.expected_regret).collect();
            let (mean_regret, std_regret) = mean_std(&realized);
            let exp_stats = expected.map(|e| mean_std(&e));
            HorizonAggregate {
                horizon: h,
                mean_regret,
                std_regret,
                n_seeds: of_h.len(),
                mean_expected_regret: exp_stats.map(|s| s.0),
                std_expected_regret: exp_stats.map(|s| s.1),
            }
        })
        .collect();
    let hs: Vec<u64> = horizons.iter().map(|a| a.horizon).collect();
    let realized: Vec<f64> = horizons.iter().map(|a| a.mean_regret).collect();
    let expected: Option<Vec<f64>> = horizons.iter().map(|a| a.mean_expected_regret).collect();
    Summary {
        environment: config.environment.kind().to_string(),
        learner: config.learner.id().to_string(),
        exponent_fit: fit_scaling_exponent(&hs, &realized).ok(),
        exponent_fit_expected: expected.and_then(|e| fit_scaling_exponent(&hs, &e).ok()),
        horizons,
        runs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub horizon: u64,
    pub seed: u64,
    pub run_key: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub runs: Vec<ManifestRun>,
}

pub fn run_file_name(horizon: u64, seed: u64) -> String {
    format!("runs/T{horizon}_seed{seed}.csv")
}

pub fn write_rows(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidConfig(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Artifacts written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub summary_path: PathBuf,
    pub manifest_path: PathBuf,
    pub summary: Summary,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every `(horizon, seed)` pair, writing `runs/*.csv`, `summary.json`
/// and `manifest.json` under the output directory. The config is validated
/// before anything runs.
pub fn run_experiment(config: &RunConfig, mode: ExecMode) -> Result<Artifacts> {
    config.validate()?;
    let out = &config.output_dir;
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let spec = RunSpec::from_config(config);
    let jobs: Vec<(u64, u64)> =
        config.horizons.iter().flat_map(|&h| config.seeds.iter().map(move |&s| (h, s))).collect();
    let results = par::map(mode, &jobs, |&(h, s)| -> Result<RunSummary> {
        let rec = simulate(&spec, h, s)?;
        let name = run_file_name(h, s);
        write_rows(&out.join(&name), &rec.rows)?;
        Ok(RunSummary::from_record(&rec, Some(name)))
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        runs: jobs
            .iter()
            .map(|&(h, s)| ManifestRun {
                horizon: h,
                seed: s,
                run_key: seeds::run_key(config.master_seed, h, s),
                file: run_file_name(h, s),
            })
            .collect(),
    };
    let summary = aggregate(config, runs);
    let summary_path = out.join("summary.json");
    let manifest_path = out.join("manifest.json");
    write_json(&summary_path, &summary)?;
    write_json(&manifest_path, &manifest)?;
    Ok(Artifacts { summary_path, manifest_path, summary })
}

/// Runs without touching the filesystem and returns per-run summaries.
pub fn run_in_memory(config: &RunConfig, mode: ExecMode) -> Result<Summary> {
    config.validate()?;
    let spec = RunSpec::from_config(config);
    let jobs: Vec<(u64, u64)> =
        config.horizons.iter().flat_map(|&h| config.seeds.iter().map(move |&s| (h, s))).collect();
    let results = par::map(mode, &jobs, |&(h, s)| simulate(&spec, h, s).map(|r| RunSummary::from_record(&r, None)));
    Ok(aggregate(config, results.into_iter().collect::<Result<Vec<_>>>()?))
}
