//! Best fixed quote in hindsight and regret bookkeeping.
//!
//! The hindsight objective splits as `f(b) + g(a)` with
//! `f(b) = sum (m - b) [b >= v]` and `g(a) = sum (a - m) [a < v]`.
//! Between consecutive valuations `f` decreases and `g` increases, so the
//! supremum is found among `b in {0} U {v_t}` and `a in {1}` or `a` tending
//! to some `v_t` from below. The latter is not attained and is reported with
//! a left-limit flag instead of a perturbed float.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{BidAskPair, MarketRound};

/// A maximizing quote. With `ask_left_limit` the value is the limit as the
/// ask increases to `pair.ask()`, i.e. a taker with `v = ask` still buys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub pair: BidAskPair,
    pub ask_left_limit: bool,
}

impl Witness {
    fn attained(bid: f64, ask: f64) -> Self {
        Witness { pair: BidAskPair { bid, ask }, ask_left_limit: false }
    }

    /// Hindsight utility of one round under the witness semantics.
    pub fn round_value(&self, round: &MarketRound) -> f64 {
        let (b, a) = (self.pair.bid, self.pair.ask);
        let (m, v) = (round.market_price, round.taker_valuation);
        let sells = if self.ask_left_limit { a <= v } else { a < v };
        if b >= v {
            m - b
        } else if sells {
            a - m
        } else {
            0.0
        }
    }

    /// Direct summation of [`Witness::round_value`].
    pub fn value(&self, rounds: &[MarketRound]) -> f64 {
        rounds.iter().map(|r| self.round_value(r)).sum()
    }
}

/// `sup` over all quotes of the summed utility on `rounds`, with a witness.
/// An empty slice gives `0` at `(0, 1)`.
pub fn best_fixed_pair(rounds: &[MarketRound]) -> (f64, Witness) {
    let mut sorted = rounds.to_vec();
    sort_by_valuation(&mut sorted);
    let witness = sweep(&sorted);
    (witness.value(rounds), witness)
}

fn sort_by_valuation(rounds: &mut [MarketRound]) {
    rounds.sort_unstable_by(|x, y| x.taker_valuation.total_cmp(&y.taker_valuation));
}

/// Candidate sweep over rounds already sorted by valuation. `O(T)`.
fn sweep(sorted: &[MarketRound]) -> Witness {
    // distinct valuations with their counts and market-price sums
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for r in sorted {
        match groups.last_mut() {
            Some(g) if g.0 == r.taker_valuation => {
                g.1 += 1.0;
                g.2 += r.market_price;
            }
            _ => groups.push((r.taker_valuation, 1.0, r.market_price)),
        }
    }
    let d = groups.len();

    // best ask among candidates strictly above group j: suffix[j] covers groups j..
    let mut suffix = vec![(0.0, 1.0, false); d + 1];
    let (mut cnt, mut msum) = (0.0, 0.0);
    for j in (0..d).rev() {
        let (v, c, m) = groups[j];
        cnt += c;
        msum += m;
        let left_limit = v * cnt - msum;
        suffix[j] = if left_limit > suffix[j + 1].0 { (left_limit, v, true) } else { suffix[j + 1] };
    }

    let zero_is_group = d > 0 && groups[0].0 == 0.0;
    let mut best = if zero_is_group {
        (f64::NEG_INFINITY, Witness::attained(0.0, 1.0))
    } else {
        let (g, a, ll) = suffix[0];
        (g, Witness { pair: BidAskPair { bid: 0.0, ask: a }, ask_left_limit: ll })
    };
    let (mut cnt, mut msum) = (0.0, 0.0);
    for j in 0..d {
        let (v, c, m) = groups[j];
        cnt += c;
        msum += m;
        let (g, a, ll) = suffix[j + 1];
        let total = (msum - v * cnt) + g;
        if total > best.0 {
            best = (total, Witness { pair: BidAskPair { bid: v, ask: a }, ask_left_limit: ll });
        }
    }
    best.1
}

/// Max of the hindsight sum over the grid `{(i/n, j/n) : i <= j}`.
pub fn brute_force_best(rounds: &[MarketRound], n: usize) -> f64 {
    assert!(n >= 2, "grid resolution must be at least 2");
    let grid = |i: usize| i as f64 / n as f64;
    let buy: Vec<f64> = (0..=n)
        .map(|i| {
            let b = grid(i);
            rounds.iter().filter(|r| b >= r.taker_valuation).map(|r| r.market_price - b).sum()
        })
        .collect();
    let sell: Vec<f64> = (0..=n)
        .map(|j| {
            let a = grid(j);
            rounds.iter().filter(|r| a < r.taker_valuation).map(|r| a - r.market_price).sum()
        })
        .collect();
    let mut best_sell = f64::NEG_INFINITY;
    let mut best = f64::NEG_INFINITY;
    for i in (0..=n).rev() {
        best_sell = best_sell.max(sell[i]);
        best = best.max(buy[i] + best_sell);
    }
    best
}

/// Hindsight benchmark over a growing prefix of rounds.
#[derive(Debug, Clone, Default)]
pub struct PrefixBenchmark {
    sorted: Vec<MarketRound>,
    scratch: Vec<MarketRound>,
}

impl PrefixBenchmark {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Adds rounds: sort the batch, then merge in linear time.
    pub fn extend(&mut self, rounds: &[MarketRound]) {
        let mut batch = rounds.to_vec();
        sort_by_valuation(&mut batch);
        self.scratch.clear();
        self.scratch.reserve(self.sorted.len() + batch.len());
        let (mut i, mut j) = (0, 0);
        while i < self.sorted.len() && j < batch.len() {
            if self.sorted[i].taker_valuation <= batch[j].taker_valuation {
                self.scratch.push(self.sorted[i]);
                i += 1;
            } else {
                self.scratch.push(batch[j]);
                j += 1;
            }
        }
        self.scratch.extend_from_slice(&self.sorted[i..]);
        self.scratch.extend_from_slice(&batch[j..]);
        std::mem::swap(&mut self.sorted, &mut self.scratch);
    }

    /// Benchmark value and witness over everything added so far.
    pub fn best(&self) -> (f64, Witness) {
        let w = sweep(&self.sorted);
        (w.value(&self.sorted), w)
    }
}

/// One row of a regret trajectory. The benchmark columns are present only at
/// checkpoint rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub cum_utility: f64,
    pub prefix_benchmark: Option<f64>,
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub total_learner_utility: f64,
    pub benchmark_value: f64,
    pub witness: Witness,
    pub regret: f64,
    /// `T` times the supremum of the expected per-round utility, when known.
    pub expected_benchmark: Option<f64>,
    /// Sum over rounds of the expected utility of the posted quote, when known.
    pub expected_learner_utility: Option<f64>,
    pub expected_regret: Option<f64>,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl RegretReport {
    /// Attaches expected-utility figures.
    pub fn with_expected(mut self, benchmark: f64, learner: f64) -> Self {
        self.expected_benchmark = Some(benchmark);
        self.expected_learner_utility = Some(learner);
        self.expected_regret = Some(benchmark - learner);
        self
    }
}

/// `n` checkpoint rounds (1-based, increasing, ending at `t`) spread evenly.
pub fn checkpoints(t: usize, n: usize) -> Vec<usize> {
    let n = n.clamp(1, t.max(1));
    let mut out: Vec<usize> = (1..=n).map(|i| (i * t).div_ceil(n)).filter(|&c| c > 0).collect();
    out.dedup();
    out
}

/// Regret with the prefix benchmark evaluated after every round.
pub fn cumulative_regret(rounds: &[MarketRound], utilities: &[f64]) -> Result<RegretReport> {
    cumulative_regret_at(rounds, utilities, rounds.len())
}

/// Regret with the prefix benchmark evaluated at `points` evenly spaced rounds
/// (always including the last). Other trajectory rows carry only the
/// cumulative utility.
pub fn cumulative_regret_at(rounds: &[MarketRound], utilities: &[f64], points: usize) -> Result<RegretReport> {
    if rounds.len() != utilities.len() {
        return Err(Error::LengthMismatch { rounds: rounds.len(), utilities: utilities.len() });
    }
    let marks = checkpoints(rounds.len(), points);
    let mut prefix = PrefixBenchmark::new();
    let mut trajectory = Vec::with_capacity(rounds.len());
    let mut cum = 0.0;
    let mut next = marks.iter().copied().peekable();
    let mut last = (0.0, Witness::attained(0.0, 1.0));
    for (i, &u) in utilities.iter().enumerate() {
        cum += u;
        let t = i + 1;
        let mut point = TrajectoryPoint { t, cum_utility: cum, prefix_benchmark: None, regret: None };
        if next.peek() == Some(&t) {
            next.next();
            prefix.extend(&rounds[prefix.len()..t]);
            last = prefix.best();
            point.prefix_benchmark = Some(last.0);
            point.regret = Some(last.0 - cum);
        }
        trajectory.push(point);
    }
    let (benchmark_value, witness) = last;
    Ok(RegretReport {
        total_learner_utility: cum,
        benchmark_value,
        witness,
        regret: benchmark_value - cum,
        expected_benchmark: None,
        expected_learner_utility: None,
        expected_regret: None,
        trajectory,
    })
}

/// Least-squares slope of `ln regret` against `ln T`.
pub fn fit_scaling_exponent(horizons: &[u64], regrets: &[f64]) -> Result<f64> {
    if horizons.len() != regrets.len() {
        return Err(Error::Unfittable(format!("{} horizons but {} regrets", horizons.len(), regrets.len())));
    }
    if horizons.len() < 3 {
        return Err(Error::Unfittable(format!("need at least 3 points, got {}", horizons.len())));
    }
    if let Some(r) = regrets.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::Unfittable(format!("regret {r} is not positive")));
    }
    if horizons.contains(&0) {
        return Err(Error::Unfittable("horizon 0".into()));
    }
    let xs: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = regrets.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Unfittable("all horizons equal".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn round(m: f64, v: f64) -> MarketRound {
        MarketRound::new(m, v).unwrap()
    }

    fn random_rounds(rng: &mut ChaCha8Rng, t: usize) -> Vec<MarketRound> {
        (0..t).map(|_| round(rng.random(), rng.random())).collect()
    }

    #[test]
    fn empty_rounds() {
        let (v, w) = best_fixed_pair(&[]);
        assert_eq!(v, 0.0);
        assert!(w.pair.bid() <= w.pair.ask());
    }

    #[test]
    fn single_buy_round() {
        let (v, w) = best_fixed_pair(&[round(1.0, 0.5)]);
        assert_eq!(v, 0.5);
        assert_eq!((w.pair.bid(), w.pair.ask(), w.ask_left_limit), (0.5, 1.0, false));
        assert!((brute_force_best(&[round(1.0, 0.5)], 10_000) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_sell_round_is_a_left_limit() {
        let rounds = [round(0.0, 0.5)];
        let (v, w) = best_fixed_pair(&rounds);
        assert_eq!(v, 0.5);
        assert_eq!(w.pair.ask(), 0.5);
        assert!(w.ask_left_limit);
        // the attained value at the witness itself is 0, just below it 0.5 - 1/n
        assert_eq!(w.pair.utility(&rounds[0]), 0.0);
        let n = 10_000;
        assert!((brute_force_best(&rounds, n) - (0.5 - 1.0 / n as f64)).abs() < 1e-12);
    }

    /// Enumerates every candidate pair with its own semantics: bids at 0 and
    /// each valuation, asks at 1, at each valuation, and just below each valuation.
    fn enumerate(rounds: &[MarketRound]) -> f64 {
        let mut bids = vec![0.0];
        let mut asks = vec![(1.0, false)];
        for r in rounds {
            bids.push(r.taker_valuation());
            asks.push((r.taker_valuation(), false));
            asks.push((r.taker_valuation(), true));
        }
        let mut best = f64::NEG_INFINITY;
        for &b in &bids {
            for &(a, below) in &asks {
                if b > a || (below && b >= a) {
                    continue;
                }
                let s: f64 = rounds
                    .iter()
                    .map(|r| {
                        let (m, v) = (r.market_price(), r.taker_valuation());
                        let sells = if below { a <= v } else { a < v };
                        if b >= v {
                            m - b
                        } else if sells {
                            a - m
                        } else {
                            0.0
                        }
                    })
                    .sum();
                best = best.max(s);
            }
        }
        best
    }

    #[test]
    fn matches_enumeration_on_small_lattice_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in 1..=5 {
            for _ in 0..400 {
                let rounds: Vec<_> = (0..t)
                    .map(|_| round(rng.random_range(0..10) as f64 / 9.0, rng.random_range(0..10) as f64 / 9.0))
                    .collect();
                let (v, w) = best_fixed_pair(&rounds);
                assert!((v - enumerate(&rounds)).abs() < 1e-12, "{rounds:?}");
                assert!((v - w.value(&rounds)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dominates_grid_and_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let rounds = random_rounds(&mut rng, 50);
            let (v, _) = best_fixed_pair(&rounds);
            let mut prev = f64::NEG_INFINITY;
            for n in [16, 32, 64, 128, 256] {
                let g = brute_force_best(&rounds, n);
                assert!(v >= g - 1e-12);
                assert!(g >= prev - 1e-12, "grid max must not decrease under refinement");
                prev = g;
            }
            for _ in 0..1000 {
                let pair = BidAskPair::from_unordered(rng.random(), rng.random()).unwrap();
                let s: f64 = rounds.iter().map(|r| pair.utility(r)).sum();
                assert!(v >= s - 1e-12);
            }
        }
    }

    /// With valuations more than `2/n` apart no grid step crosses a jump, so
    /// only the slopes (at most `T` in total) cost anything.
    #[test]
    fn grid_gap_on_separated_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 4000;
        let mut checked = 0;
        while checked < 200 {
            let rounds = random_rounds(&mut rng, 6);
            let mut vs: Vec<f64> = rounds.iter().map(|r| r.taker_valuation()).collect();
            vs.sort_by(f64::total_cmp);
            if vs.windows(2).any(|w| w[1] - w[0] <= 2.0 / n as f64) {
                continue;
            }
            checked += 1;
            let (v, _) = best_fixed_pair(&rounds);
            let g = brute_force_best(&rounds, n);
            assert!(v - g <= 6.0 / n as f64 + 1e-12, "gap {}", v - g);
        }
    }

    #[test]
    fn grid_gap_is_unbounded_for_near_ties() {
        // two takers 6.5e-6 apart: the optimal ask sells to one but not the other
        let rounds = [
            round(0.171, 0.5801134),
            round(0.159, 0.5563628),
            round(0.308, 0.5410299),
            round(0.035, 0.0560724),
            round(0.889, 0.4791905),
            round(0.908, 0.5563564),
        ];
        let (v, w) = best_fixed_pair(&rounds);
        assert!(w.ask_left_limit && w.pair.ask() == 0.5563628);
        assert!(v - brute_force_best(&rounds, 4000) > 0.1);
    }

    #[test]
    fn prefix_benchmark_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rounds = random_rounds(&mut rng, 300);
        let mut p = PrefixBenchmark::new();
        for chunk in rounds.chunks(37) {
            p.extend(chunk);
            let (v, _) = best_fixed_pair(&rounds[..p.len()]);
            assert!((p.best().0 - v).abs() < 1e-9);
        }
    }

    #[test]
    fn regret_report_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let rounds = random_rounds(&mut rng, 100);
        let zero = vec![0.0; 100];
        let r = cumulative_regret(&rounds, &zero).unwrap();
        assert_eq!(r.regret, r.benchmark_value);
        assert_eq!(r.trajectory.len(), 100);
        assert!(r.trajectory.iter().all(|p| p.regret.is_some()));

        // replaying the witness (attained) gives zero regret
        let (_, w) = best_fixed_pair(&rounds);
        let utils: Vec<f64> = rounds.iter().map(|x| w.round_value(x)).collect();
        let r = cumulative_regret(&rounds, &utils).unwrap();
        assert!(r.regret.abs() < 1e-9);

        let sparse = cumulative_regret_at(&rounds, &zero, 7).unwrap();
        assert_eq!(sparse.benchmark_value, cumulative_regret(&rounds, &zero).unwrap().benchmark_value);
        assert_eq!(sparse.trajectory.iter().filter(|p| p.regret.is_some()).count(), 7);
        assert!(sparse.trajectory.last().unwrap().regret.is_some());

        assert!(matches!(cumulative_regret(&rounds, &zero[..3]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn checkpoints_end_at_t() {
        assert_eq!(checkpoints(10, 3), vec![4, 7, 10]);
        assert_eq!(checkpoints(3, 10), vec![1, 2, 3]);
        assert_eq!(checkpoints(0, 10), Vec::<usize>::new());
        for t in 1..200 {
            let c = checkpoints(t, 16);
            assert_eq!(*c.last().unwrap(), t);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exponent_fit() {
        let hs: Vec<u64> = (10..=17).map(|e| 1u64 << e).collect();
        let lin: Vec<f64> = hs.iter().map(|&t| t as f64).collect();
        assert!((fit_scaling_exponent(&hs, &lin).unwrap() - 1.0).abs() < 1e-9);
        let two_thirds: Vec<f64> = hs.iter().map(|&t| (t as f64).powf(2.0 / 3.0)).collect();
        assert!((fit_scaling_exponent(&hs, &two_thirds).unwrap() - 2.0 / 3.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..100 {
            let noisy: Vec<f64> = two_thirds.iter().map(|r| 3.0 * r * (1.0 + rng.random_range(-0.05..0.05))).collect();
            let s = fit_scaling_exponent(&hs, &noisy).unwrap();
            assert!((0.6..=0.73).contains(&s), "{s}");
        }
        assert!(fit_scaling_exponent(&hs, &vec![0.0; hs.len()]).is_err());
        assert!(fit_scaling_exponent(&hs[..2], &lin[..2]).is_err());
        assert!(fit_scaling_exponent(&hs, &lin[..3]).is_err());
    }

    proptest! {
        #[test]
        fn witness_is_feasible_and_attains_value(
            raw in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..40)
        ) {
            let rounds: Vec<_> = raw.iter().map(|&(m, v)| round(m, v)).collect();
            let (v, w) = best_fixed_pair(&rounds);
            prop_assert!(w.pair.bid() <= w.pair.ask());
            if w.ask_left_limit {
                prop_assert!(w.pair.bid() < w.pair.ask());
            }
            prop_assert!(v >= brute_force_best(&rounds, 64) - 1e-12);
            prop_assert!(v >= -1e-12);
        }
    }
}
