//! Online market making as an online learning problem.
//!
//! A market maker posts a bid and an ask each round, a taker with private
//! valuation trades against at most one side, and the maker later observes
//! only the trade indicators and the realised market price.

pub mod bandit;
pub mod config;
pub mod envs;
pub mod error;
pub mod hindsight;
pub mod learners;
pub mod market;
pub mod par;
pub mod runner;
pub mod seeds;
pub mod verify;

pub use config::{LearnerSpec, RunConfig};
pub use envs::{Environment, EnvironmentSpec};
pub use error::{Error, Result};
pub use hindsight::{best_fixed_pair, brute_force_best, cumulative_regret, fit_scaling_exponent, RegretReport, Witness};
pub use learners::{combine, relay, MarketMaker, M3};
pub use market::{make_feedback, trade_outcome, utility, BidAskPair, FeedbackRecord, MarketRound, TradeOutcome};
pub use par::ExecMode;
pub use runner::run_experiment;
