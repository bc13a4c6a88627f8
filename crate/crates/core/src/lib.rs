//! Regime-switching prediction with Gaussian-emission hidden Markov models.
//!
//! The pipeline: simple daily returns → exponentially weighted mean and
//! volatility features (z-scored on the training window) → MAP Baum-Welch fit
//! → per-state expected Sharpe ratios → h-step predicted expected Sharpe →
//! capped holdings → cost-aware backtest.

pub mod backtest;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod hmm;
pub mod matrix;
pub mod model_selection;
pub mod par;
pub mod pipeline;
pub mod regime_metrics;
pub mod training;

pub use error::{Error, Result};
pub use hmm::{HmmModel, ObservationMatrix, PosteriorResult};
pub use matrix::RowMatrix;
pub use par::Execution;
