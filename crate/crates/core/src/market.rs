//! Prices, rounds, trades and the maker's per-round utility.
//!
//! A taker with valuation `v` sells to the maker when `bid >= v` and buys from
//! the maker when `ask < v`. Whatever the maker traded is unwound at the market
//! price `m` at the end of the round, so the utility is
//! `(m - bid) * [bid >= v] + (ask - m) * [ask < v]`.
//!
//! Comparisons are exact; there is no tolerance on the indicators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::PriceOutOfRange { name, value })
    }
}

/// A quote in the upper triangle `0 <= bid <= ask <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidAskPair {
    pub(crate) bid: f64,
    pub(crate) ask: f64,
}

impl BidAskPair {
    pub fn new(bid: f64, ask: f64) -> Result<Self> {
        check_unit("bid", bid)?;
        check_unit("ask", ask)?;
        if bid > ask {
            return Err(Error::CrossedQuote { bid, ask });
        }
        Ok(BidAskPair { bid, ask })
    }

    /// Orders two prices into a valid quote.
    pub fn from_unordered(x: f64, y: f64) -> Result<Self> {
        if x <= y {
            Self::new(x, y)
        } else {
            Self::new(y, x)
        }
    }

    #[inline]
    pub fn bid(&self) -> f64 {
        self.bid
    }

    #[inline]
    pub fn ask(&self) -> f64 {
        self.ask
    }

    #[inline]
    pub fn outcome(&self, valuation: f64) -> TradeOutcome {
        if self.bid >= valuation {
            TradeOutcome::Buy
        } else if self.ask < valuation {
            TradeOutcome::Sell
        } else {
            TradeOutcome::NoTrade
        }
    }

    /// Utility against an already validated round.
    #[inline]
    pub fn utility(&self, round: &MarketRound) -> f64 {
        let m = round.market_price;
        match self.outcome(round.taker_valuation) {
            TradeOutcome::Buy => m - self.bid,
            TradeOutcome::Sell => self.ask - m,
            TradeOutcome::NoTrade => 0.0,
        }
    }
}

/// One draw of the environment: market price and taker valuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketRound {
    pub(crate) market_price: f64,
    pub(crate) taker_valuation: f64,
}

impl MarketRound {
    pub fn new(market_price: f64, taker_valuation: f64) -> Result<Self> {
        Ok(MarketRound {
            market_price: check_unit("market_price", market_price)?,
            taker_valuation: check_unit("taker_valuation", taker_valuation)?,
        })
    }

    #[inline]
    pub fn market_price(&self) -> f64 {
        self.market_price
    }

    #[inline]
    pub fn taker_valuation(&self) -> f64 {
        self.taker_valuation
    }
}

/// What happened between the maker and the taker in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TradeOutcome {
    /// The taker sold to the maker at the bid.
    Buy,
    /// The taker bought from the maker at the ask.
    Sell,
    NoTrade,
}

/// The maker's end-of-round observation. The taker valuation is never revealed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub bought: bool,
    pub sold: bool,
    pub market_price: f64,
}

impl FeedbackRecord {
    /// Recovers the round's utility from the feedback and the posted quote.
    pub fn utility(&self, pair: &BidAskPair) -> f64 {
        if self.bought {
            self.market_price - pair.bid()
        } else if self.sold {
            pair.ask() - self.market_price
        } else {
            0.0
        }
    }
}

/// `(m - bid) * [bid >= v] + (ask - m) * [ask < v]`, with range checks on `m` and `v`.
pub fn utility(pair: &BidAskPair, m: f64, v: f64) -> Result<f64> {
    Ok(pair.utility(&MarketRound::new(m, v)?))
}

pub fn trade_outcome(pair: &BidAskPair, v: f64) -> Result<TradeOutcome> {
    Ok(pair.outcome(check_unit("taker_valuation", v)?))
}

pub fn make_feedback(pair: &BidAskPair, round: &MarketRound) -> FeedbackRecord {
    let outcome = pair.outcome(round.taker_valuation);
    FeedbackRecord {
        bought: outcome == TradeOutcome::Buy,
        sold: outcome == TradeOutcome::Sell,
        market_price: round.market_price,
    }
}
