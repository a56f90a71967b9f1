//! Numerical audit of the hard-instance construction: the region partition
//! of the quote triangle, the feedback-channel KL divergence between the base
//! and a perturbed valuation law, and the inequalities the lower bound uses.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::hard::{
    cdf_unchecked, HardInstanceParams, Perturbation, CDF_LIPSCHITZ, C_PLAT, C_SPIKE, P_EXPLOIT, P_LEFT, P_RIGHT,
};
use crate::error::{Error, Result};
use crate::market::BidAskPair;
use crate::par::{self, ExecMode};

/// Exploit-region KL constant: `KL <= C1 * eps^2`.
pub const C1: f64 = 2.0 / 81.0;
/// Explore-region KL constant: `KL <= C2 * eps`.
pub const C2: f64 = 65.0 / 9.0;
/// Roundoff slack allowed on every inequality.
pub const SLACK: f64 = 1e-12;

/// Region tags, 1-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Left(usize),
    Top(usize),
    Square(usize, usize),
    Triangle(usize),
    Exploit(usize),
    White,
}

impl Region {
    pub fn is_explore(&self) -> bool {
        matches!(self, Region::Left(_) | Region::Top(_) | Region::Square(..) | Region::Triangle(_))
    }

    /// Rank used to settle boundary points claimed by several definitions.
    pub fn priority(&self) -> u8 {
        match self {
            Region::Left(_) => 0,
            Region::Top(_) => 1,
            Region::Square(..) => 2,
            Region::Triangle(_) => 3,
            Region::Exploit(_) => 4,
            Region::White => 5,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Left(i) => write!(f, "left_{i}"),
            Region::Top(i) => write!(f, "top_{i}"),
            Region::Square(i, j) => write!(f, "square_{i}_{j}"),
            Region::Triangle(k) => write!(f, "triangle_{k}"),
            Region::Exploit(i) => write!(f, "exploit_{i}"),
            Region::White => write!(f, "white"),
        }
    }
}

/// Strip edges `p_left + j eps` for `j = 0..=K`, with the last edge pinned to
/// `p_right` so rounding in `K * eps` cannot open a gap.
#[derive(Debug, Clone)]
struct Strips {
    big_k: usize,
    eps: f64,
    edges: Vec<f64>,
}

impl Strips {
    fn new(big_k: usize) -> Self {
        let eps = 1.0 / (16.0 * big_k as f64);
        let mut edges: Vec<f64> = (0..=big_k).map(|j| P_LEFT + j as f64 * eps).collect();
        edges[big_k] = P_RIGHT;
        Strips { big_k, eps, edges }
    }

    fn edge(&self, j: usize) -> f64 {
        self.edges[j]
    }

    /// `i` with `x` in `(edge(i-1), edge(i)]`, counted from `p_left`.
    fn upper_closed(&self, x: f64) -> Option<usize> {
        if x <= self.edges[0] || x > self.edges[self.big_k] {
            return None;
        }
        let guess = (((x - P_LEFT) / self.eps).ceil() as usize).clamp(1, self.big_k);
        let mut i = guess;
        while i > 1 && x <= self.edge(i - 1) {
            i -= 1;
        }
        while x > self.edge(i) {
            i += 1;
        }
        Some(i)
    }

    /// `i` with `x` in `[edge(i-1), edge(i))`, counted from `p_left`.
    fn lower_closed(&self, x: f64) -> Option<usize> {
        if x < self.edges[0] || x >= self.edges[self.big_k] {
            return None;
        }
        let guess = (((x - P_LEFT) / self.eps).floor() as usize + 1).clamp(1, self.big_k);
        let mut i = guess;
        while i > 1 && x < self.edge(i - 1) {
            i -= 1;
        }
        while x >= self.edge(i) {
            i += 1;
        }
        Some(i)
    }

    /// Bid strip index; the first strip is closed at `p_left`.
    fn bid_strip(&self, b: f64) -> Option<usize> {
        if b == P_LEFT {
            Some(1)
        } else {
            self.upper_closed(b)
        }
    }
}

fn check_pair(b: f64, a: f64) -> Result<()> {
    BidAskPair::new(b, a).map(|_| ())
}

/// Region containing `(b, a)` for `K` strips. Boundary points shared by two
/// printed definitions go to the earlier of Left, Top, Square, Triangle, Exploit.
pub fn classify_region(b: f64, a: f64, big_k: usize) -> Result<Region> {
    check_pair(b, a)?;
    if big_k == 0 {
        return Err(Error::SpikeIndexOutOfRange { k: 0, big_k });
    }
    Ok(classify(&Strips::new(big_k), b, a))
}

fn classify(s: &Strips, b: f64, a: f64) -> Region {
    let k = s.big_k;
    if b <= P_LEFT && (P_LEFT..=P_RIGHT).contains(&a) {
        // a-strips counted downward from p_right; the first one closed on both ends
        let i = if a >= s.edge(k - 1) { 1 } else { k + 1 - s.lower_closed(a).expect("a inside the band") };
        return Region::Left(i);
    }
    let Some(i) = s.bid_strip(b) else {
        return Region::White;
    };
    if (P_RIGHT..=P_EXPLOIT).contains(&a) {
        return Region::Top(i);
    }
    if a > P_EXPLOIT {
        return Region::Exploit(i);
    }
    // here a < p_right and a >= b > p_left
    let ja = s.upper_closed(a).expect("a inside the band");
    if ja == i {
        Region::Triangle(i)
    } else {
        Region::Square(i, k + 1 - ja)
    }
}

/// Every region whose printed interval conditions contain `(b, a)`, in
/// priority order. Empty or multiple matches happen only on boundaries.
pub fn matching_regions(b: f64, a: f64, big_k: usize) -> Vec<Region> {
    let s = Strips::new(big_k);
    let k = big_k;
    let e = |j: usize| s.edge(j);
    let mut out = Vec::new();
    if b <= a {
        for i in 1..=k {
            let hit = if i == 1 {
                b <= P_LEFT && e(k - 1) <= a && a <= e(k)
            } else {
                b <= P_LEFT && e(k - i) <= a && a < e(k - i + 1)
            };
            if hit {
                out.push(Region::Left(i));
            }
        }
        let in_bid_strip = |i: usize| {
            if i == 1 {
                e(0) <= b && b <= e(1)
            } else {
                e(i - 1) < b && b <= e(i)
            }
        };
        for i in 1..=k {
            if in_bid_strip(i) && P_RIGHT <= a && a <= P_EXPLOIT {
                out.push(Region::Top(i));
            }
        }
        for i in 1..=k {
            for j in 1..=k {
                if i + j <= k && e(i - 1) < b && b <= e(i) && e(k - j) < a && a <= e(k - j + 1) {
                    out.push(Region::Square(i, j));
                }
            }
        }
        for t in 1..=k {
            if e(t - 1) < b && b <= e(t) && e(t - 1) < a && a <= e(t) {
                out.push(Region::Triangle(t));
            }
        }
        for i in 1..=k {
            if in_bid_strip(i) && P_EXPLOIT < a {
                out.push(Region::Exploit(i));
            }
        }
    }
    out
}

/// Categorical KL between feedback laws (buy, sell, none) under the base and
/// the perturbed valuation distribution, `KL(base || perturbed)`.
pub fn feedback_kl(b: f64, a: f64, params: &HardInstanceParams) -> Result<f64> {
    check_pair(b, a)?;
    Ok(kl_unchecked(b, a, &params.perturbation()))
}

fn kl_unchecked(b: f64, a: f64, pert: &Perturbation) -> f64 {
    let (fb, fa) = (cdf_unchecked(b), cdf_unchecked(a));
    let h = pert.width() / 18.0;
    let (lb, la) = (pert.tent(b), pert.tent(a));
    // (base probability, perturbed minus base)
    let cells = [(fb, h * lb), (1.0 - fa, -h * la), (fa - fb, h * (la - lb))];
    // sum p (x - ln(1 + x)) with x = delta / p; each term is nonnegative
    cells
        .iter()
        .map(|&(p, d)| {
            if p <= 0.0 {
                0.0
            } else {
                let x = d / p;
                if x <= -1.0 {
                    f64::INFINITY
                } else {
                    p * (x - x.ln_1p())
                }
            }
        })
        .sum()
}

/// One sampled region family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionKl {
    pub region: String,
    pub k: usize,
    pub samples: usize,
    pub max_kl: f64,
    pub bound: f64,
    pub violations: usize,
    /// `max_kl / bound`.
    pub max_ratio: f64,
    /// Sampled points that classify outside the intended region.
    pub misclassified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    #[serde(rename = "K")]
    pub big_k: usize,
    pub eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub exploit_bound: f64,
    pub explore_bound: f64,
    pub regions: Vec<RegionKl>,
    /// Largest KL over uniform points of the whole triangle and every tent.
    pub global_max_kl: f64,
    pub global_samples: usize,
    pub violations: usize,
    pub max_exploit_kl: f64,
    pub max_explore_kl: f64,
}

impl KlReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.regions.iter().all(|r| r.misclassified == 0)
    }
}

#[derive(Clone, Copy)]
enum Family {
    Exploit,
    Left,
    Top,
    Triangle,
    SquareRow,
    SquareCol,
}

impl Family {
    const ALL: [Family; 6] =
        [Family::Exploit, Family::Left, Family::Top, Family::Triangle, Family::SquareRow, Family::SquareCol];

    fn name(self) -> &'static str {
        match self {
            Family::Exploit => "exploit",
            Family::Left => "left",
            Family::Top => "top",
            Family::Triangle => "triangle",
            Family::SquareRow => "square_k_j",
            Family::SquareCol => "square_i_k",
        }
    }
}

/// Uniform point of the interior of a region rectangle intersected with the
/// triangle, and the region it is meant to land in.
fn sample_region<R: Rng>(rng: &mut R, s: &Strips, family: Family, k: usize) -> Option<((f64, f64), Region)> {
    let big_k = s.big_k;
    let strip = |rng: &mut R, i: usize| rng.random_range(s.edge(i - 1)..s.edge(i));
    let point = match family {
        Family::Exploit => ((strip(rng, k)), rng.random_range(P_EXPLOIT..1.0)),
        Family::Left => (rng.random_range(0.0..P_LEFT), strip(rng, big_k + 1 - k)),
        Family::Top => (strip(rng, k), rng.random_range(P_RIGHT..P_EXPLOIT)),
        Family::Triangle => {
            let (x, y) = (strip(rng, k), strip(rng, k));
            (x.min(y), x.max(y))
        }
        Family::SquareRow => {
            if k >= big_k {
                return None;
            }
            let j = rng.random_range(1..=big_k - k);
            let p = (strip(rng, k), strip(rng, big_k + 1 - j));
            return (p.0 > s.edge(k - 1)).then_some((p, Region::Square(k, j)));
        }
        Family::SquareCol => {
            if k >= big_k {
                return None;
            }
            let i = rng.random_range(1..=big_k - k);
            let p = (strip(rng, i), strip(rng, big_k + 1 - k));
            return (p.0 > s.edge(i - 1)).then_some((p, Region::Square(i, k)));
        }
    };
    let region = match family {
        Family::Exploit => Region::Exploit(k),
        Family::Left => Region::Left(k),
        Family::Top => Region::Top(k),
        Family::Triangle => Region::Triangle(k),
        Family::SquareRow | Family::SquareCol => unreachable!(),
    };
    Some((point, region))
}

/// Samples each region family for every `k` and checks the exploit and explore KL bounds
/// under perturbation `k`. Violations are counted, not raised.
pub fn check_kl_bounds(big_k: usize, samples_per_region: usize, seed: u64, mode: ExecMode) -> Result<KlReport> {
    if big_k < 2 {
        return Err(Error::SpikeIndexOutOfRange { k: 0, big_k });
    }
    let s = Strips::new(big_k);
    let eps = s.eps;
    let (exploit_bound, explore_bound) = (C1 * eps * eps, C2 * eps);
    let ks: Vec<usize> = (1..=big_k).collect();
    let per_k = par::map(mode, &ks, |&k| {
        let params = HardInstanceParams::new(big_k as u64, k as u64).expect("k in range");
        let pert = params.perturbation();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut rows = Vec::new();
        for family in Family::ALL {
            let bound = if matches!(family, Family::Exploit) { exploit_bound } else { explore_bound };
            let mut row = RegionKl {
                region: family.name().to_string(),
                k,
                samples: 0,
                max_kl: 0.0,
                bound,
                violations: 0,
                max_ratio: 0.0,
                misclassified: 0,
            };
            for _ in 0..samples_per_region {
                let Some(((b, a), intended)) = sample_region(&mut rng, &s, family, k) else {
                    continue;
                };
                row.samples += 1;
                if classify(&s, b, a) != intended {
                    row.misclassified += 1;
                }
                let kl = kl_unchecked(b, a, &pert);
                row.max_kl = row.max_kl.max(kl);
                if kl > bound + SLACK || kl.is_nan() {
                    row.violations += 1;
                }
            }
            row.max_ratio = row.max_kl / bound;
            rows.push(row);
        }
        // uniform over the whole triangle: the explore bound holds everywhere
        let mut global = 0.0f64;
        for _ in 0..samples_per_region {
            let (x, y): (f64, f64) = (rng.random(), rng.random());
            global = global.max(kl_unchecked(x.min(y), x.max(y), &pert));
        }
        (rows, global)
    });
    let mut regions = Vec::new();
    let mut global_max_kl = 0.0f64;
    for (rows, g) in per_k {
        regions.extend(rows);
        global_max_kl = global_max_kl.max(g);
    }
    let global_violation = usize::from(global_max_kl > explore_bound + SLACK);
    let max_of = |exploit: bool| {
        regions.iter().filter(|r| (r.region == "exploit") == exploit).map(|r| r.max_kl).fold(0.0, f64::max)
    };
    Ok(KlReport {
        big_k,
        eps,
        c1: C1,
        c2: C2,
        exploit_bound,
        explore_bound,
        max_exploit_kl: max_of(true),
        max_explore_kl: max_of(false),
        violations: regions.iter().map(|r| r.violations).sum::<usize>() + global_violation,
        global_samples: samples_per_region * big_k,
        global_max_kl,
        regions,
    })
}

/// Partition audit: uniform points of the triangle each match exactly one
/// printed region definition, and that region is the one `classify_region` returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    #[serde(rename = "K")]
    pub big_k: usize,
    pub samples: usize,
    pub passed: usize,
    pub no_match: usize,
    pub multi_match: usize,
    pub disagree: usize,
}

pub fn check_partition(big_k: usize, samples: usize, seed: u64) -> PartitionReport {
    let s = Strips::new(big_k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PartitionReport { big_k, samples, passed: 0, no_match: 0, multi_match: 0, disagree: 0 };
    for _ in 0..samples {
        // half the points land in the band where the regions are narrow
        let (x, y): (f64, f64) = if rng.random::<bool>() {
            (rng.random(), rng.random())
        } else {
            (rng.random_range(0.0..P_RIGHT + 0.01), rng.random_range(P_LEFT - 0.01..P_RIGHT + 0.01))
        };
        let (b, a) = (x.min(y), x.max(y));
        let matches = matching_regions(b, a, big_k);
        let got = classify(&s, b, a);
        let expected = match matches.as_slice() {
            [] => Region::White,
            [only] => *only,
            _ => {
                report.multi_match += 1;
                continue;
            }
        };
        if got != expected {
            report.disagree += 1;
        } else {
            report.passed += 1;
        }
        if matches.is_empty() && got != Region::White {
            report.no_match += 1;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value <= threshold, value, threshold }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), passed: value >= threshold, value, threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    #[serde(rename = "K")]
    pub big_k: usize,
    pub k: usize,
    pub eps: f64,
    pub r: f64,
    pub spike_value: f64,
    pub argmax: (f64, f64),
    pub checks: Vec<Check>,
}

impl ConstructionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Audits the expected-utility landscape of instance `(K, k)` and the
/// regularity properties the lower bound relies on.
pub fn check_construction(big_k: usize, k: usize) -> Result<ConstructionReport> {
    let params = HardInstanceParams::new(big_k as u64, k as u64)?;
    let pert = params.perturbation();
    let s = Strips::new(big_k);
    let (eps, r) = (params.eps, params.r);
    let (lo, hi) = pert.support();
    let mut checks = Vec::new();

    let spike = params.spike_value();
    checks.push(Check::at_least("spike >= 1/8 + c_spike eps", spike, 0.125 + C_SPIKE * eps));

    // plateau: a = 1, bids in (3/16, 3/4] off the tent
    let n_plateau = 4096;
    let mut worst = 0.0f64;
    for i in 1..=n_plateau {
        let b = P_LEFT + (P_EXPLOIT - P_LEFT) * i as f64 / n_plateau as f64;
        if (lo..=hi).contains(&b) {
            continue;
        }
        worst = worst.max((pert.expected_utility(&BidAskPair { bid: b, ask: 1.0 }) - 0.125).abs());
    }
    checks.push(Check::at_most("plateau |u(b, 1) - 1/8| off the tent", worst, 0.0));

    // dense grid: b step eps/8, a step 1/4096 (plus a = 1)
    let nb = (16 * big_k) * 8;
    let na = 4096;
    let bs: Vec<f64> = (0..=nb).map(|i| i as f64 / nb as f64).collect();
    let as_: Vec<f64> = (0..=na).map(|j| j as f64 / na as f64).collect();
    let buy: Vec<f64> = bs.iter().map(|&b| pert.buy_value(b)).collect();
    let sell: Vec<f64> = as_.iter().map(|&a| pert.sell_value(a)).collect();

    let mut explore_max = f64::NEG_INFINITY;
    for (i, &b) in bs.iter().enumerate() {
        if b > P_RIGHT {
            break;
        }
        for (j, &a) in as_.iter().enumerate().filter(|(_, a)| **a >= b && **a <= P_EXPLOIT) {
            if classify(&s, b, a).is_explore() {
                explore_max = explore_max.max(buy[i] + sell[j]);
            }
        }
    }
    checks.push(Check::at_most("explore grid max <= 1/8 - c_plat", explore_max, 0.125 - C_PLAT));

    // argmax over the triangle: suffix max of the ask side, ties toward a = 1
    let mut best_sell = vec![(f64::NEG_INFINITY, na); na + 1];
    let mut run = (f64::NEG_INFINITY, na);
    for j in (0..=na).rev() {
        if sell[j] > run.0 {
            run = (sell[j], j);
        }
        best_sell[j] = run;
    }
    let mut best = (f64::NEG_INFINITY, 0.0, 1.0);
    for (i, &b) in bs.iter().enumerate() {
        let j0 = ((b * na as f64).ceil() as usize).min(na);
        let (sv, j) = best_sell[j0];
        if buy[i] + sv > best.0 {
            best = (buy[i] + sv, b, as_[j]);
        }
    }
    let in_strip = s.bid_strip(best.1) == Some(k);
    checks.push(Check {
        name: "grid argmax in tent strip with a = 1".into(),
        passed: in_strip && best.2 == 1.0,
        value: best.1,
        threshold: r,
    });

    let mut rng = ChaCha8Rng::seed_from_u64(((big_k as u64) << 32) | k as u64);
    let mut lip_f = 0.0f64;
    let mut lip_tent = 0.0f64;
    for _ in 0..100_000 {
        let x: f64 = rng.random();
        let h = rng.random_range(1e-9..1e-3);
        let y = (x + h).min(1.0);
        if y > x {
            lip_f = lip_f.max((pert.cdf(y) - pert.cdf(x)).abs() / (y - x));
        }
        // tent slopes are only visible near its support
        let tx = rng.random_range(lo - eps..hi + eps);
        let ty = tx + rng.random_range(1e-9..eps / 4.0);
        lip_tent = lip_tent.max((pert.tent(ty) - pert.tent(tx)).abs() / (ty - tx));
    }
    checks.push(Check::at_most("perturbed cdf Lipschitz <= 4", lip_f, CDF_LIPSCHITZ + 1e-9));
    checks.push(Check::at_most("tent Lipschitz <= 2/eps", lip_tent, 2.0 / eps + 1e-9));

    let mut growth = f64::INFINITY;
    let mut tested = 0;
    while tested < 100_000 {
        let (x, y): (f64, f64) = (rng.random(), rng.random());
        let (b, a) = (x.min(y), x.max(y));
        if b >= P_EXPLOIT || a <= b {
            continue;
        }
        tested += 1;
        growth = growth.min((cdf_unchecked(a) - cdf_unchecked(b)) / (a - b));
    }
    checks.push(Check::at_least("F(a) - F(b) >= (a - b)/6 off [3/4, 1]^2", growth, 1.0 / 6.0 - 1e-12));

    Ok(ConstructionReport { big_k, k, eps, r, spike_value: spike, argmax: (best.1, best.2), checks })
}

/// Combined audit over a list of `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub c1: f64,
    pub c2: f64,
    pub kl: Vec<KlReport>,
    pub partition: Vec<PartitionReport>,
    pub construction: Vec<ConstructionReport>,
    pub passed: bool,
}

pub fn verify_all(ks: &[usize], samples_per_region: usize, partition_samples: usize, seed: u64, mode: ExecMode) -> Result<VerifyReport> {
    let mut kl = Vec::new();
    let mut partition = Vec::new();
    let mut construction = Vec::new();
    for &big_k in ks {
        kl.push(check_kl_bounds(big_k, samples_per_region, seed, mode)?);
        partition.push(check_partition(big_k, partition_samples, seed ^ big_k as u64));
        let idx: Vec<usize> = (1..=big_k).collect();
        for rep in par::map(mode, &idx, |&k| check_construction(big_k, k)) {
            construction.push(rep?);
        }
    }
    let passed = kl.iter().all(KlReport::passed)
        && partition.iter().all(|p| p.passed == p.samples)
        && construction.iter().all(ConstructionReport::passed);
    Ok(VerifyReport { c1: C1, c2: C2, kl, partition, construction, passed })
}
