//! Adversarial K-armed bandit cores used by the grid learners.
//!
//! Rewards are in `[0, 1]`. Two algorithms are available:
//!
//! * **Exp3**: exponential weights on importance-weighted cumulative reward
//!   estimates, mixed with `gamma`-uniform exploration. With the horizon
//!   schedule, `gamma = min(1, sqrt(K ln K / ((e - 1) T)))` and `eta = gamma / K`.
//! * **Tsallis-INF**: follow-the-regularized-leader with the 1/2-Tsallis
//!   entropy on importance-weighted loss estimates. The arm distribution is
//!   `p_i = 4 / (eta (L_i - x))^2` where the normalizer `x < min_i L_i` is found
//!   by a safeguarded Newton iteration. `eta = 2 / sqrt(T)` (or `2 / sqrt(t)`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BanditAlgorithm {
    #[default]
    Exp3,
    TsallisInf,
}

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSchedule {
    /// Rates fixed from the arm count and the horizon.
    #[default]
    Horizon,
    /// Rates recomputed from the current round index.
    Anytime,
}

/// Maps a raw utility in `[-1, 1]` to a bandit reward in `[0, 1]`.
#[inline]
pub fn rescale_reward(raw: f64) -> f64 {
    (raw + 1.0) / 2.0
}

/// Samples an index from `probs` using a uniform draw `u` in `[0, 1)`.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass
    last_positive
}

#[derive(Debug, Clone)]
pub struct BanditState {
    algorithm: BanditAlgorithm,
    schedule: RateSchedule,
    horizon: u64,
    rounds: u64,
    /// Exp3: reward estimates. Tsallis-INF: loss estimates.
    stats: Vec<f64>,
    probs: Vec<f64>,
}

impl BanditState {
    pub fn new(algorithm: BanditAlgorithm, arms: usize, horizon: u64) -> Result<Self> {
        Self::with_schedule(algorithm, RateSchedule::Horizon, arms, horizon)
    }

    pub fn with_schedule(algorithm: BanditAlgorithm, schedule: RateSchedule, arms: usize, horizon: u64) -> Result<Self> {
        if arms < 2 {
            return Err(Error::TooFewArms(arms));
        }
        Ok(BanditState {
            algorithm,
            schedule,
            horizon: horizon.max(1),
            rounds: 0,
            stats: vec![0.0; arms],
            probs: vec![1.0 / arms as f64; arms],
        })
    }

    pub fn algorithm(&self) -> BanditAlgorithm {
        self.algorithm
    }

    pub fn arms(&self) -> usize {
        self.stats.len()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn statistics(&self) -> &[f64] {
        &self.stats
    }

    pub fn arm_probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn select_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng.random::<f64>())
    }

    /// Feeds back the reward of the arm played this round.
    pub fn update(&mut self, arm: usize, reward01: f64) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::ArmOutOfRange { arm, arms: self.arms() });
        }
        if !(0.0..=1.0).contains(&reward01) {
            return Err(Error::RewardOutOfRange(reward01));
        }
        let p = self.probs[arm];
        match self.algorithm {
            BanditAlgorithm::Exp3 => self.stats[arm] += reward01 / p,
            BanditAlgorithm::TsallisInf => self.stats[arm] += (1.0 - reward01) / p,
        }
        self.rounds += 1;
        self.refresh();
        Ok(())
    }

    /// Horizon used for rate tuning at the next round.
    fn tuning_horizon(&self) -> f64 {
        match self.schedule {
            RateSchedule::Horizon => self.horizon as f64,
            RateSchedule::Anytime => (self.rounds + 1) as f64,
        }
    }

    fn refresh(&mut self) {
        match self.algorithm {
            BanditAlgorithm::Exp3 => self.refresh_exp3(),
            BanditAlgorithm::TsallisInf => self.refresh_tsallis(),
        }
    }

    fn refresh_exp3(&mut self) {
        let k = self.arms() as f64;
        let gamma = exp3_gamma(self.arms(), self.tuning_horizon());
        let eta = gamma / k;
        let top = self.stats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (p, &s) in self.probs.iter_mut().zip(&self.stats) {
            *p = (eta * (s - top)).exp();
            total += *p;
        }
        for p in &mut self.probs {
            *p = (1.0 - gamma) * *p / total + gamma / k;
        }
    }

    fn refresh_tsallis(&mut self) {
        let eta = 2.0 / self.tuning_horizon().sqrt();
        let x = tsallis_normalizer(&self.stats, eta);
        let mut total = 0.0;
        for (p, &l) in self.probs.iter_mut().zip(&self.stats) {
            let d = eta * (l - x);
            *p = 4.0 / (d * d);
            total += *p;
        }
        for p in &mut self.probs {
            *p /= total;
        }
    }
}

fn exp3_gamma(arms: usize, horizon: f64) -> f64 {
    let k = arms as f64;
    (k * k.ln() / ((std::f64::consts::E - 1.0) * horizon)).sqrt().min(1.0)
}

/// Solves `sum_i 4 / (eta (L_i - x))^2 = 1` for `x < min_i L_i`.
///
/// The sum is convex and increasing in `x`. At `min L - 2/eta` it is at least 1
/// and at `min L - 2 sqrt(K)/eta` at most 1, so Newton started from the upper
/// end decreases monotonically onto the root; bisection takes over if a step
/// ever leaves the bracket.
pub fn tsallis_normalizer(losses: &[f64], eta: f64) -> f64 {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let k = losses.len() as f64;
    let mut lo = min - 2.0 * k.sqrt() / eta;
    let mut hi = min - 2.0 / eta;
    let eval = |x: f64| {
        let (mut g, mut dg) = (-1.0, 0.0);
        for &l in losses {
            let inv = 1.0 / (eta * (l - x));
            g += 4.0 * inv * inv;
            dg += 8.0 * eta * inv * inv * inv;
        }
        (g, dg)
    };
    let mut x = hi;
    for _ in 0..200 {
        let (g, dg) = eval(x);
        if g == 0.0 {
            return x;
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= NORMALIZER_TOL * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}
