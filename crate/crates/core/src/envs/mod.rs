//! Round-generating processes.
//!
//! [`EnvironmentSpec`] is the serializable description used in run
//! configurations. [`Environment`] is the resolved sampler for one horizon.

pub mod hard;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{BidAskPair, MarketRound};
use crate::par::{self, ExecMode};

pub use hard::{
    base_cdf, base_inverse_cdf, base_pdf, ceil_cbrt, hard_instance_params, perturbed_cdf, perturbed_pdf,
    sample_hard_valuation, tent, HardInstanceParams, Perturbation,
};

/// Built-in valuation distributions for smooth i.i.d. environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationModel {
    /// The hard-instance base density (CDF is 32/9-Lipschitz).
    Base,
    Uniform,
}

impl ValuationModel {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ValuationModel::Base => hard::cdf_unchecked(x),
            ValuationModel::Uniform => x.clamp(0.0, 1.0),
        }
    }

    fn sample(&self, u: f64) -> f64 {
        match self {
            ValuationModel::Base => hard::base_inverse_cdf(u),
            ValuationModel::Uniform => u,
        }
    }
}

/// Built-in market-price distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketModel {
    /// Uniform on `[7/8, 1]`.
    UniformHigh,
    /// Uniform on `[0, 1]`.
    Uniform,
}

impl MarketModel {
    pub fn mean(&self) -> f64 {
        match self {
            MarketModel::UniformHigh => hard::MARKET_MEAN,
            MarketModel::Uniform => 0.5,
        }
    }

    fn sample(&self, u: f64) -> f64 {
        match self {
            MarketModel::UniformHigh => 0.875 + u / 8.0,
            MarketModel::Uniform => u,
        }
    }
}

/// Parametric description of a round-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    SmoothIid {
        valuation: ValuationModel,
        market: MarketModel,
    },
    /// Spike `k` out of `K` strips; `K` defaults to `ceil(T^{1/3})` for horizon `T`.
    HardInstance {
        #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
        big_k: Option<u64>,
        k: u64,
    },
    /// Rounds `(0, d)` and `(1, c)` with probability 1/2 each.
    Unlearnable { c: f64, d: f64 },
    /// Replays a recorded `(m, v)` trace file.
    Custom { trace: PathBuf },
}

impl EnvironmentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvironmentSpec::SmoothIid { .. } => "smooth_iid",
            EnvironmentSpec::HardInstance { .. } => "hard_instance",
            EnvironmentSpec::Unlearnable { .. } => "unlearnable",
            EnvironmentSpec::Custom { .. } => "custom",
        }
    }

    /// Checks parameters that do not depend on the horizon.
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvironmentSpec::HardInstance { big_k: Some(big_k), k } => {
                HardInstanceParams::new(big_k, k).map(|_| ())
            }
            EnvironmentSpec::HardInstance { big_k: None, k } if k == 0 => {
                Err(Error::SpikeIndexOutOfRange { k: 0, big_k: 0 })
            }
            EnvironmentSpec::Unlearnable { c, d } => {
                if 0.0 < c && c < d && d < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidEnvironment(format!("unlearnable needs 0 < c < d < 1, got c={c}, d={d}")))
                }
            }
            _ => Ok(()),
        }
    }
}

/// The expected-utility maximizer of an analytic environment. The supremum
/// may be approached but not attained; `ask_left_limit` marks that case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOptimum {
    pub value: f64,
    pub pair: BidAskPair,
    pub ask_left_limit: bool,
}

/// A resolved environment ready to draw rounds.
#[derive(Debug, Clone)]
pub enum Environment {
    SmoothIid { valuation: ValuationModel, market: MarketModel },
    Hard(HardInstanceParams),
    Unlearnable { c: f64, d: f64 },
    Replay(Arc<[MarketRound]>),
}

impl Environment {
    /// Resolves a spec for a run of `horizon` rounds. Trace files are loaded here.
    pub fn resolve(spec: &EnvironmentSpec, horizon: u64) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            &EnvironmentSpec::SmoothIid { valuation, market } => Environment::SmoothIid { valuation, market },
            &EnvironmentSpec::HardInstance { big_k: Some(big_k), k } => Environment::Hard(HardInstanceParams::new(big_k, k)?),
            &EnvironmentSpec::HardInstance { big_k: None, k } => Environment::Hard(HardInstanceParams::from_horizon(horizon, k)?),
            &EnvironmentSpec::Unlearnable { c, d } => Environment::Unlearnable { c, d },
            EnvironmentSpec::Custom { trace } => {
                let rounds = read_trace(trace)?;
                if (rounds.len() as u64) < horizon {
                    return Err(Error::InvalidEnvironment(format!(
                        "trace {} has {} rounds, horizon is {horizon}",
                        trace.display(),
                        rounds.len()
                    )));
                }
                Environment::Replay(rounds.into())
            }
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Environment::SmoothIid { .. } => "smooth_iid",
            Environment::Hard(_) => "hard_instance",
            Environment::Unlearnable { .. } => "unlearnable",
            Environment::Replay(_) => "custom",
        }
    }

    /// Draws round `t` (0-based). i.i.d. kinds ignore `t`; replays index the trace.
    pub fn next_round<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> MarketRound {
        match self {
            Environment::SmoothIid { valuation, market } => {
                let m = market.sample(rng.sample(Open01));
                let v = valuation.sample(rng.sample(Open01));
                MarketRound { market_price: m, taker_valuation: v }
            }
            Environment::Hard(params) => {
                let m = MarketModel::UniformHigh.sample(rng.sample(Open01));
                let v = sample_hard_valuation(params, rng.sample(Open01));
                MarketRound { market_price: m, taker_valuation: v }
            }
            Environment::Unlearnable { c, d } => {
                if rng.random::<bool>() {
                    MarketRound { market_price: 0.0, taker_valuation: *d }
                } else {
                    MarketRound { market_price: 1.0, taker_valuation: *c }
                }
            }
            Environment::Replay(trace) => trace[t % trace.len()],
        }
    }

    /// Closed-form expected utility of a fixed quote.
    pub fn expected_utility(&self, pair: &BidAskPair) -> Result<f64> {
        match self {
            Environment::Hard(params) => Ok(params.expected_utility(pair)),
            Environment::Unlearnable { c, d } => {
                let sell_round = MarketRound { market_price: 0.0, taker_valuation: *d };
                let buy_round = MarketRound { market_price: 1.0, taker_valuation: *c };
                Ok(0.5 * pair.utility(&sell_round) + 0.5 * pair.utility(&buy_round))
            }
            Environment::SmoothIid { valuation, market } => {
                let mu = market.mean();
                let (b, a) = (pair.bid(), pair.ask());
                Ok((mu - b) * valuation.cdf(b) + (a - mu) * (1.0 - valuation.cdf(a)))
            }
            Environment::Replay(_) => Err(Error::NoClosedForm("custom")),
        }
    }

    /// The supremum of the expected utility over all quotes, when known.
    pub fn expected_optimum(&self) -> Option<ExpectedOptimum> {
        match self {
            Environment::Hard(params) => Some(ExpectedOptimum {
                value: params.spike_value(),
                pair: BidAskPair { bid: params.r, ask: 1.0 }.checked(),
                ask_left_limit: false,
            }),
            Environment::Unlearnable { c, d } => Some(ExpectedOptimum {
                value: 0.5 * (1.0 + d - c),
                pair: BidAskPair { bid: *c, ask: *d }.checked(),
                ask_left_limit: true,
            }),
            Environment::SmoothIid { valuation, market } => Some(smooth_optimum(*valuation, *market)),
            Environment::Replay(_) => None,
        }
    }
}

/// Grid search for the smooth built-ins. Both sides are continuous, so a
/// 2^16 grid is accurate to well below 1e-4 per round.
fn smooth_optimum(valuation: ValuationModel, market: MarketModel) -> ExpectedOptimum {
    const N: usize = 1 << 16;
    let mu = market.mean();
    let grid: Vec<f64> = (0..=N).map(|i| i as f64 / N as f64).collect();
    let sell: Vec<f64> = grid.iter().map(|&a| (a - mu) * (1.0 - valuation.cdf(a))).collect();
    // best ask at or above each index
    let mut best_sell = vec![(f64::NEG_INFINITY, N); N + 1];
    let mut running = (f64::NEG_INFINITY, N);
    for j in (0..=N).rev() {
        if sell[j] > running.0 {
            running = (sell[j], j);
        }
        best_sell[j] = running;
    }
    let mut best = (f64::NEG_INFINITY, 0, N);
    for (i, &b) in grid.iter().enumerate() {
        let v = (mu - b) * valuation.cdf(b) + best_sell[i].0;
        if v > best.0 {
            best = (v, i, best_sell[i].1);
        }
    }
    ExpectedOptimum {
        value: best.0,
        pair: BidAskPair { bid: grid[best.1], ask: grid[best.2] }.checked(),
        ask_left_limit: false,
    }
}

impl BidAskPair {
    fn checked(self) -> Self {
        debug_assert!(0.0 <= self.bid() && self.bid() <= self.ask() && self.ask() <= 1.0);
        self
    }
}

/// Monte Carlo estimate of a quote's expected utility: `(mean, standard error)`.
/// Draws are split into fixed chunks with their own streams, so the estimate
/// does not depend on the execution mode.
pub fn monte_carlo_utility(env: &Environment, pair: &BidAskPair, draws: usize, seed: u64, mode: ExecMode) -> (f64, f64) {
    const CHUNK: usize = 1 << 14;
    let chunks: Vec<usize> = (0..draws.div_ceil(CHUNK)).collect();
    let partial = par::map(mode, &chunks, |&c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = CHUNK.min(draws - c * CHUNK);
        let (mut s, mut s2) = (0.0, 0.0);
        for t in 0..n {
            let u = pair.utility(&env.next_round(t, &mut rng));
            s += u;
            s2 += u * u;
        }
        (s, s2)
    });
    let (s, s2) = partial.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let n = draws as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    m: f64,
    v: f64,
}

/// Reads a CSV trace with columns `m, v`.
pub fn read_trace(path: &Path) -> Result<Vec<MarketRound>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    reader
        .deserialize::<TraceRow>()
        .map(|row| {
            let row = row?;
            MarketRound::new(row.m, row.v)
        })
        .collect()
}

pub fn write_trace(path: &Path, rounds: &[MarketRound]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for r in rounds {
        writer.serialize(TraceRow { m: r.market_price, v: r.taker_valuation })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
