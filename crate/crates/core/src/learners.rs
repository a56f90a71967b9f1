//! Market-making strategies.
//!
//! [`M3`] runs a first-price-auction learner (which proposes bids) next to a
//! dynamic-pricing learner (which proposes asks). When the two proposals cross
//! it posts them swapped, then rebuilds from the feedback what each learner
//! would have seen had its own price been posted.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bandit::{rescale_reward, BanditAlgorithm, BanditState, RateSchedule};
use crate::envs::ceil_cbrt;
use crate::error::{Error, Result};
use crate::market::{BidAskPair, FeedbackRecord};

/// Anything that posts one quote per round and learns from feedback.
pub trait MarketMaker {
    fn act(&mut self) -> BidAskPair;
    fn observe(&mut self, feedback: &FeedbackRecord) -> Result<()>;
}

/// Default arm count `ceil(T^{1/3}) + 1` for horizon `T`.
pub fn default_arm_count(horizon: u64) -> usize {
    ceil_cbrt(horizon.max(1)) as usize + 1
}

/// `K` evenly spaced prices `q_j = j / (K - 1)` from 0 to 1.
pub fn uniform_grid(arms: usize) -> Vec<f64> {
    let step = (arms - 1) as f64;
    (0..arms).map(|j| j as f64 / step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Repeated first-price auction: posts bids, utility `(z - x) [x >= h]`.
    Fpa,
    /// Dynamic pricing with unknown cost: posts prices, utility `(p - c) [p < w]`.
    Dp,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Fpa => "fpa",
            Role::Dp => "dp",
        }
    }
}

/// A bandit over the uniform price grid.
#[derive(Debug, Clone)]
pub struct GridLearner {
    role: Role,
    grid: Vec<f64>,
    bandit: BanditState,
    last_arm: Option<usize>,
}

impl GridLearner {
    pub fn new(role: Role, arms: usize, algorithm: BanditAlgorithm, horizon: u64) -> Result<Self> {
        Self::with_bandit(role, BanditState::new(algorithm, arms, horizon)?)
    }

    pub fn with_bandit(role: Role, bandit: BanditState) -> Result<Self> {
        Ok(GridLearner { role, grid: uniform_grid(bandit.arms()), bandit, last_arm: None })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn bandit(&self) -> &BanditState {
        &self.bandit
    }

    pub fn last_arm(&self) -> Option<usize> {
        self.last_arm
    }

    fn expect_role(&self, role: Role) -> Result<()> {
        if self.role == role {
            Ok(())
        } else {
            Err(Error::WrongRole { expected: role.name() })
        }
    }

    fn post<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let arm = self.bandit.select_arm(rng);
        self.last_arm = Some(arm);
        self.grid[arm]
    }

    fn learn(&mut self, raw: f64) -> Result<()> {
        let arm = self.last_arm.take().ok_or(Error::NoPendingAction)?;
        self.bandit.update(arm, rescale_reward(raw))
    }

    pub fn fpa_bid<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        self.expect_role(Role::Fpa)?;
        Ok(self.post(rng))
    }

    /// `won` is `[x >= h]`; `z` is the revealed valuation of the good.
    pub fn fpa_update(&mut self, won: bool, z: f64) -> Result<()> {
        self.expect_role(Role::Fpa)?;
        let arm = self.last_arm.ok_or(Error::NoPendingAction)?;
        let z = unit("z", z)?;
        let raw = if won { z - self.grid[arm] } else { 0.0 };
        self.learn(raw)
    }

    pub fn dp_price<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        self.expect_role(Role::Dp)?;
        Ok(self.post(rng))
    }

    /// `sold` is `[p < w]`; `c` is the revealed cost.
    pub fn dp_update(&mut self, sold: bool, c: f64) -> Result<()> {
        self.expect_role(Role::Dp)?;
        let arm = self.last_arm.ok_or(Error::NoPendingAction)?;
        let c = unit("c", c)?;
        let raw = if sold { self.grid[arm] - c } else { 0.0 };
        self.learn(raw)
    }
}

fn unit(name: &'static str, x: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(Error::PriceOutOfRange { name, value: x })
    }
}

/// Posts `(min, max)` of the two proposals. Ties take the unswapped branch.
pub fn combine(x: f64, p: f64) -> Result<(BidAskPair, bool)> {
    if x <= p {
        Ok((BidAskPair::new(x, p)?, false))
    } else {
        Ok((BidAskPair::new(p, x)?, true))
    }
}

/// Counterfactual indicators `([X >= V], [P < V])` recovered from the feedback
/// on the posted pair.
#[inline]
pub fn relay(swapped: bool, feedback: &FeedbackRecord) -> (bool, bool) {
    if swapped {
        // posted (P, X): X >= V iff the ask did not sell, P < V iff the bid did not buy
        (!feedback.sold, !feedback.bought)
    } else {
        (feedback.bought, feedback.sold)
    }
}

/// Configuration for [`M3`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M3Config {
    pub arms: usize,
    pub horizon: u64,
    pub algorithm: BanditAlgorithm,
    pub schedule: RateSchedule,
}

impl M3Config {
    /// `K = ceil(T^{1/3}) + 1` arms, Exp3, horizon-tuned.
    pub fn for_horizon(horizon: u64) -> Self {
        M3Config {
            arms: default_arm_count(horizon),
            horizon,
            algorithm: BanditAlgorithm::default(),
            schedule: RateSchedule::default(),
        }
    }
}

/// The meta market maker.
#[derive(Debug, Clone)]
pub struct M3 {
    fpa: GridLearner,
    dp: GridLearner,
    fpa_rng: ChaCha8Rng,
    dp_rng: ChaCha8Rng,
    pending: Option<(BidAskPair, bool)>,
    swapped_last: bool,
}

impl M3 {
    pub fn new(config: M3Config, fpa_rng: ChaCha8Rng, dp_rng: ChaCha8Rng) -> Result<Self> {
        let make = |role| {
            let bandit = BanditState::with_schedule(config.algorithm, config.schedule, config.arms, config.horizon)?;
            GridLearner::with_bandit(role, bandit)
        };
        Ok(M3 { fpa: make(Role::Fpa)?, dp: make(Role::Dp)?, fpa_rng, dp_rng, pending: None, swapped_last: false })
    }

    pub fn fpa(&self) -> &GridLearner {
        &self.fpa
    }

    pub fn dp(&self) -> &GridLearner {
        &self.dp
    }

    pub fn swapped_last(&self) -> bool {
        self.swapped_last
    }

    pub fn last_pair(&self) -> Option<BidAskPair> {
        self.pending.map(|(pair, _)| pair)
    }

    pub fn m3_act(&mut self) -> Result<BidAskPair> {
        let x = self.fpa.fpa_bid(&mut self.fpa_rng)?;
        let p = self.dp.dp_price(&mut self.dp_rng)?;
        let (pair, swapped) = combine(x, p)?;
        self.pending = Some((pair, swapped));
        self.swapped_last = swapped;
        Ok(pair)
    }

    pub fn m3_update(&mut self, feedback: &FeedbackRecord) -> Result<()> {
        let (_, swapped) = self.pending.take().ok_or(Error::NoPendingAction)?;
        let (won, sold) = relay(swapped, feedback);
        self.fpa.fpa_update(won, feedback.market_price)?;
        self.dp.dp_update(sold, feedback.market_price)
    }
}

impl MarketMaker for M3 {
    fn act(&mut self) -> BidAskPair {
        self.m3_act().expect("grid prices are valid quotes")
    }

    fn observe(&mut self, feedback: &FeedbackRecord) -> Result<()> {
        self.m3_update(feedback)
    }
}

/// Posts the same quote every round.
#[derive(Debug, Clone, Copy)]
pub struct FixedPair(pub BidAskPair);

impl MarketMaker for FixedPair {
    fn act(&mut self) -> BidAskPair {
        self.0
    }

    fn observe(&mut self, _: &FeedbackRecord) -> Result<()> {
        Ok(())
    }
}

/// Posts a uniformly random quote: two uniforms, sorted.
#[derive(Debug, Clone)]
pub struct UniformRandomPair<R> {
    rng: R,
}

impl<R: Rng> UniformRandomPair<R> {
    pub fn new(rng: R) -> Self {
        UniformRandomPair { rng }
    }
}

impl<R: Rng> MarketMaker for UniformRandomPair<R> {
    fn act(&mut self) -> BidAskPair {
        let (x, y) = (self.rng.random::<f64>(), self.rng.random::<f64>());
        BidAskPair::from_unordered(x, y).expect("uniform draws are in [0, 1)")
    }

    fn observe(&mut self, _: &FeedbackRecord) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{make_feedback, MarketRound};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn grid_is_uniform_from_zero_to_one() {
        assert_eq!(uniform_grid(5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        for k in 2..200 {
            let g = uniform_grid(k);
            assert_eq!((g[0], g[k - 1]), (0.0, 1.0));
            assert!(g.windows(2).all(|w| (w[1] - w[0] - 1.0 / (k - 1) as f64).abs() < 1e-15));
        }
    }

    #[test]
    fn default_arms_follow_cube_root() {
        assert_eq!(default_arm_count(1000), 11);
        assert_eq!(default_arm_count(1001), 12);
        assert_eq!(default_arm_count(10_000), 23);
        assert_eq!(M3Config::for_horizon(42).arms, 5);
    }

    #[test]
    fn fresh_fpa_bid_is_equiprobable() {
        let l = GridLearner::new(Role::Fpa, 5, BanditAlgorithm::Exp3, 100).unwrap();
        assert!(l.bandit().arm_probabilities().iter().all(|&p| p == 0.2));
    }

    #[test]
    fn bid_is_the_selected_grid_point() {
        let mut l = GridLearner::new(Role::Fpa, 5, BanditAlgorithm::Exp3, 100).unwrap();
        let mut r = rng(1);
        for _ in 0..20 {
            let x = l.fpa_bid(&mut r).unwrap();
            let arm = l.last_arm().unwrap();
            assert_eq!(x, l.grid()[arm]);
            l.fpa_update(false, 0.5).unwrap();
        }
    }

    /// Plays `arm` by forcing a degenerate bandit, then returns the reward fed back.
    fn reward_fed(role: Role, arm: usize, flag: bool, price: f64) -> f64 {
        let mut l = GridLearner::new(role, 5, BanditAlgorithm::Exp3, 100).unwrap();
        l.last_arm = Some(arm);
        let p = l.bandit().arm_probabilities()[arm];
        match role {
            Role::Fpa => l.fpa_update(flag, price).unwrap(),
            Role::Dp => l.dp_update(flag, price).unwrap(),
        }
        // Exp3 stores reward / p for the played arm
        l.bandit().statistics()[arm] * p
    }

    #[test]
    fn fpa_rewards_are_rescaled() {
        assert_eq!(reward_fed(Role::Fpa, 2, false, 0.9), 0.5);
        assert!((reward_fed(Role::Fpa, 2, true, 0.9) - 0.7).abs() < 1e-15);
        assert_eq!(reward_fed(Role::Fpa, 4, true, 0.0), 0.0);
    }

    #[test]
    fn dp_rewards_are_rescaled() {
        assert_eq!(reward_fed(Role::Dp, 3, false, 0.9), 0.5);
        assert!((reward_fed(Role::Dp, 3, true, 0.9) - 0.425).abs() < 1e-15);
        assert_eq!(reward_fed(Role::Dp, 4, true, 0.0), 1.0);
    }

    #[test]
    fn role_and_pending_errors() {
        let mut fpa = GridLearner::new(Role::Fpa, 3, BanditAlgorithm::Exp3, 10).unwrap();
        let mut r = rng(0);
        assert!(matches!(fpa.dp_price(&mut r), Err(Error::WrongRole { .. })));
        assert!(matches!(fpa.dp_update(true, 0.5), Err(Error::WrongRole { .. })));
        assert!(matches!(fpa.fpa_update(true, 0.5), Err(Error::NoPendingAction)));
        fpa.fpa_bid(&mut r).unwrap();
        fpa.fpa_update(true, 0.5).unwrap();
        assert!(matches!(fpa.fpa_update(true, 0.5), Err(Error::NoPendingAction)));

        let mut dp = GridLearner::new(Role::Dp, 3, BanditAlgorithm::Exp3, 10).unwrap();
        assert!(matches!(dp.fpa_bid(&mut r), Err(Error::WrongRole { .. })));
        assert!(matches!(dp.dp_update(false, 0.5), Err(Error::NoPendingAction)));
    }

    #[test]
    fn combine_branches() {
        let (p, s) = combine(0.3, 0.7).unwrap();
        assert_eq!((p.bid(), p.ask(), s), (0.3, 0.7, false));
        let (p, s) = combine(0.7, 0.3).unwrap();
        assert_eq!((p.bid(), p.ask(), s), (0.3, 0.7, true));
        let (p, s) = combine(0.5, 0.5).unwrap();
        assert_eq!((p.bid(), p.ask(), s), (0.5, 0.5, false));
    }

    #[test]
    fn relay_logic_table() {
        // swapped: X = 0.7, P = 0.3, V = 0.4 -> no trade on (0.3, 0.7)
        let pair = BidAskPair::new(0.3, 0.7).unwrap();
        let fb = make_feedback(&pair, &MarketRound::new(0.5, 0.4).unwrap());
        assert!(!fb.bought && !fb.sold);
        assert_eq!(relay(true, &fb), (true, true));
        let fb = FeedbackRecord { bought: true, sold: false, market_price: 0.5 };
        assert_eq!(relay(false, &fb).0, true);
    }

    #[test]
    fn m3_update_requires_act() {
        let mut m = M3::new(M3Config::for_horizon(100), rng(1), rng(2)).unwrap();
        let fb = FeedbackRecord { bought: false, sold: false, market_price: 0.5 };
        assert!(matches!(m.m3_update(&fb), Err(Error::NoPendingAction)));
        let pair = m.m3_act().unwrap();
        assert_eq!(m.last_pair(), Some(pair));
        m.m3_update(&fb).unwrap();
        assert!(m.fpa().bandit().rounds() == 1 && m.dp().bandit().rounds() == 1);
    }

    #[test]
    fn m3_posted_pair_is_ordered_min_max() {
        let mut m = M3::new(M3Config { arms: 7, ..M3Config::for_horizon(500) }, rng(3), rng(4)).unwrap();
        let mut r = rng(5);
        for _ in 0..500 {
            let pair = m.m3_act().unwrap();
            let x = m.fpa().grid()[m.fpa().last_arm().unwrap()];
            let p = m.dp().grid()[m.dp().last_arm().unwrap()];
            assert_eq!(pair.bid(), x.min(p));
            assert_eq!(pair.ask(), x.max(p));
            assert_eq!(m.swapped_last(), x > p);
            let round = MarketRound::new(r.random(), r.random()).unwrap();
            m.m3_update(&make_feedback(&pair, &round)).unwrap();
        }
    }

    #[test]
    fn baselines() {
        let q = BidAskPair::new(0.5, 0.5).unwrap();
        let mut fixed = FixedPair(q);
        let fb = FeedbackRecord { bought: true, sold: false, market_price: 1.0 };
        for _ in 0..10 {
            assert_eq!(fixed.act(), q);
            fixed.observe(&fb).unwrap();
        }
        let mut random = UniformRandomPair::new(rng(8));
        for _ in 0..10_000 {
            let p = random.act();
            assert!(p.bid() <= p.ask());
        }
    }
}
