//! The smooth hard-instance family: a base valuation density whose expected
//! buy-side utility is flat at 1/8 over a wide band of bids, and tent-shaped
//! perturbations of its CDF that lift one narrow strip of that band.

use crate::error::{Error, Result};
use crate::market::BidAskPair;

pub const P_LEFT: f64 = 3.0 / 16.0;
pub const P_RIGHT: f64 = 1.0 / 4.0;
pub const P_EXPLOIT: f64 = 3.0 / 4.0;
pub const C_PLAT: f64 = 1.0 / 32.0;
pub const C_SPIKE: f64 = 1.0 / 72.0;
/// Upper edge of the admissible perturbation window.
pub const XI_RIGHT: f64 = 11.0 / 16.0;
/// Top of the valuation support.
pub const SUPPORT_TOP: f64 = 7.0 / 8.0;
/// Mean of the Uniform[7/8, 1] market price.
pub const MARKET_MEAN: f64 = 15.0 / 16.0;
/// Lipschitz constant of every perturbed CDF.
pub const CDF_LIPSCHITZ: f64 = 4.0;
/// Lipschitz constant of the base CDF (its steepest piece, at x = 3/4).
pub const BASE_CDF_LIPSCHITZ: f64 = 32.0 / 9.0;

#[cfg(test)]
const BISECTION_TOL: f64 = 1e-12;
const XI_SLACK: f64 = 1e-12;

fn check_domain(x: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(Error::PriceOutOfRange { name: "x", value: x })
    }
}

#[inline]
pub(crate) fn pdf_unchecked(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x <= P_LEFT {
        8.0 / 9.0
    } else if x <= P_EXPLOIT {
        let gap = MARKET_MEAN - x;
        0.125 / (gap * gap)
    } else if x <= SUPPORT_TOP {
        8.0 / 3.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn cdf_unchecked(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= P_LEFT {
        8.0 / 9.0 * x
    } else if x <= P_EXPLOIT {
        0.125 / (MARKET_MEAN - x)
    } else if x <= SUPPORT_TOP {
        8.0 / 3.0 * (x - 0.5)
    } else {
        1.0
    }
}

/// Base valuation density `f` on `[0, 1]`.
pub fn base_pdf(x: f64) -> Result<f64> {
    Ok(pdf_unchecked(check_domain(x)?))
}

/// Base valuation CDF `F` on `[0, 1]`.
pub fn base_cdf(x: f64) -> Result<f64> {
    Ok(cdf_unchecked(check_domain(x)?))
}

/// A tent perturbation of height 1 and width `eps` centred on `r`, with its
/// support inside `[3/16, 11/16]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    r: f64,
    eps: f64,
}

impl Perturbation {
    pub fn new(r: f64, eps: f64) -> Result<Self> {
        let ok = eps > 0.0
            && eps <= 1.0
            && r - eps / 2.0 >= P_LEFT - XI_SLACK
            && r + eps / 2.0 <= XI_RIGHT + XI_SLACK;
        if ok {
            Ok(Perturbation { r, eps })
        } else {
            Err(Error::InadmissiblePerturbation { r, eps })
        }
    }

    pub fn center(&self) -> f64 {
        self.r
    }

    pub fn width(&self) -> f64 {
        self.eps
    }

    /// Support `[r - eps/2, r + eps/2]` of the tent.
    pub fn support(&self) -> (f64, f64) {
        (self.r - self.eps / 2.0, self.r + self.eps / 2.0)
    }

    #[inline]
    pub fn tent(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x >= lo && x <= self.r {
            1.0 - 2.0 / self.eps * (self.r - x)
        } else if x > self.r && x <= hi {
            1.0 - 2.0 / self.eps * (x - self.r)
        } else {
            0.0
        }
    }

    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        cdf_unchecked(x) + self.eps / 18.0 * self.tent(x)
    }

    #[inline]
    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        let bump = if x >= lo && x <= self.r {
            1.0 / 9.0
        } else if x > self.r && x <= hi {
            -1.0 / 9.0
        } else {
            0.0
        };
        pdf_unchecked(x) + bump
    }

    /// Expected buy-side utility `(15/16 - b) F_{r,eps}(b)` against a
    /// Uniform[7/8, 1] market price, expanded piecewise so the flat band
    /// evaluates to exactly 1/8.
    #[inline]
    pub fn buy_value(&self, b: f64) -> f64 {
        let margin = MARKET_MEAN - b;
        let base = if b <= P_LEFT {
            8.0 / 9.0 * b * margin
        } else if b <= P_EXPLOIT {
            0.125
        } else if b <= SUPPORT_TOP {
            8.0 / 3.0 * (b - 0.5) * margin
        } else {
            margin
        };
        base + self.eps / 18.0 * margin * self.tent(b)
    }

    /// Expected sell-side utility `(a - 15/16)(1 - F_{r,eps}(a))`.
    #[inline]
    pub fn sell_value(&self, a: f64) -> f64 {
        (a - MARKET_MEAN) * (1.0 - self.cdf(a))
    }

    pub fn expected_utility(&self, pair: &BidAskPair) -> f64 {
        self.buy_value(pair.bid()) + self.sell_value(pair.ask())
    }

    /// Inverse CDF in closed form. On the tent the CDF is
    /// `1/(8y) + linear(y)` in `y = 15/16 - x`, so each half is a quadratic.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if u <= cdf_unchecked(lo) || u > cdf_unchecked(hi) {
            return base_inverse_cdf(u);
        }
        if u <= self.cdf(self.r) {
            // y^2 + (9u - M + lo) y - 9/8 = 0, positive root
            let bq = 9.0 * u - (MARKET_MEAN - lo);
            MARKET_MEAN - 2.25 / (bq + (bq * bq + 4.5).sqrt())
        } else {
            // y^2 + (hi - M - 9u) y + 9/8 = 0, smaller root
            let bq = hi - MARKET_MEAN - 9.0 * u;
            MARKET_MEAN - 2.25 / (-bq + (bq * bq - 4.5).max(0.0).sqrt())
        }
    }
}

/// Inverse of the base CDF.
pub fn base_inverse_cdf(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u <= 1.0 / 6.0 {
        9.0 / 8.0 * u
    } else if u <= 2.0 / 3.0 {
        MARKET_MEAN - 0.125 / u
    } else if u < 1.0 {
        0.5 + 3.0 / 8.0 * u
    } else {
        SUPPORT_TOP
    }
}

#[cfg(test)]
pub(crate) fn bisect_cdf(cdf: impl Fn(f64) -> f64, u: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn tent(r: f64, eps: f64, x: f64) -> Result<f64> {
    Ok(Perturbation::new(r, eps)?.tent(x))
}

/// `F(x) + (eps/18) * tent(x)`.
pub fn perturbed_cdf(r: f64, eps: f64, x: f64) -> Result<f64> {
    let p = Perturbation::new(r, eps)?;
    Ok(p.cdf(check_domain(x)?))
}

/// `f(x) + g(x)` where `g` is `+1/9` on the left half of the tent and `-1/9` on the right.
pub fn perturbed_pdf(r: f64, eps: f64, x: f64) -> Result<f64> {
    let p = Perturbation::new(r, eps)?;
    Ok(p.pdf(check_domain(x)?))
}

/// Smallest `K` with `K^3 >= n`.
pub fn ceil_cbrt(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut k = (n as f64).cbrt().round() as u64;
    while k > 0 && (k - 1).checked_pow(3).is_some_and(|c| c >= n) {
        k -= 1;
    }
    while k.checked_pow(3).is_some_and(|c| c < n) {
        k += 1;
    }
    k
}

/// Parameters of hard instance `k` among `K` strips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInstanceParams {
    pub big_k: u64,
    pub k: u64,
    pub eps: f64,
    pub r: f64,
}

impl HardInstanceParams {
    pub const P_LEFT: f64 = P_LEFT;
    pub const P_RIGHT: f64 = P_RIGHT;
    pub const P_EXPLOIT: f64 = P_EXPLOIT;
    pub const C_PLAT: f64 = C_PLAT;
    pub const C_SPIKE: f64 = C_SPIKE;

    pub fn new(big_k: u64, k: u64) -> Result<Self> {
        if big_k == 0 || k == 0 || k > big_k {
            return Err(Error::SpikeIndexOutOfRange { k: k as usize, big_k: big_k as usize });
        }
        let eps = 1.0 / (16.0 * big_k as f64);
        let r = P_LEFT + (k as f64 - 0.5) * eps;
        Ok(HardInstanceParams { big_k, k, eps, r })
    }

    /// `K = ceil(T^{1/3})`.
    pub fn from_horizon(horizon: u64, k: u64) -> Result<Self> {
        Self::new(ceil_cbrt(horizon.max(1)), k)
    }

    pub fn perturbation(&self) -> Perturbation {
        Perturbation { r: self.r, eps: self.eps }
    }

    /// Left edge of strip `i` (1-based): `p_left + (i - 1) eps`.
    pub fn strip_start(&self, i: u64) -> f64 {
        P_LEFT + (i as f64 - 1.0) * self.eps
    }

    pub fn expected_utility(&self, pair: &BidAskPair) -> f64 {
        self.perturbation().expected_utility(pair)
    }

    /// Value of the best quote `(r, 1)`.
    pub fn spike_value(&self) -> f64 {
        self.perturbation().buy_value(self.r)
    }
}

pub fn hard_instance_params(horizon: u64, k: u64) -> Result<HardInstanceParams> {
    HardInstanceParams::from_horizon(horizon, k)
}

pub fn sample_hard_valuation(params: &HardInstanceParams, u: f64) -> f64 {
    params.perturbation().inverse_cdf(u)
}
