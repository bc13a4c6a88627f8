//! One instrument, one span: features → fit → ESR-ordered model bundle.

use std::ops::Range;

use crate::backtest::{run_backtest, BacktestResult, DataSplit, StrategyConfig};
use crate::data_io::{InstrumentSeries, ModelBundle};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureMatrix};
use crate::hmm::viterbi;
use crate::regime_metrics::{esr_vector, order_by_esr, EsrVector};
use crate::training::{fit, FitReport, PriorConfig, TrainConfig};

#[derive(Debug, Clone)]
pub struct TrainedInstrument {
    pub bundle: ModelBundle,
    pub features: FeatureMatrix,
    /// The report's model has the same state order as the bundle.
    pub report: FitReport,
    pub esr: EsrVector,
}

/// Builds features with normalization fitted on `split.train`, fits on the
/// post-warm-up training rows, orders states by descending ESR and scores the
/// validation window.
pub fn train_instrument(
    series: &InstrumentSeries,
    split: &DataSplit,
    span: usize,
    num_states: usize,
    prior: &PriorConfig,
    config: &TrainConfig,
) -> Result<TrainedInstrument> {
    let feature_config = FeatureConfig::new(span)?;
    if split.train.end <= span {
        return Err(Error::InsufficientData {
            needed: span + 1,
            got: split.train.end,
        });
    }
    let features = FeatureMatrix::build(&series.returns, feature_config, split.train.clone())?;
    let train_obs = features.training_observations(split.train.clone())?;
    let mut report = fit(&train_obs, num_states, prior, config)?;
    let order = order_by_esr(&report.model, &features.norm)?;
    report.model = report.model.permuted(&order)?;
    if !split.validation.is_empty() {
        report.evaluate_validation(&features.observations(split.validation.clone())?)?;
    }
    let esr = esr_vector(&report.model, &features.norm, span)?;
    let bundle = ModelBundle::new(series.id.clone(), report.model.clone(), features.norm.clone(), feature_config);
    Ok(TrainedInstrument {
        bundle,
        features,
        report,
        esr,
    })
}

/// Features for a series under a stored bundle's span and normalization.
pub fn features_for_bundle(series: &InstrumentSeries, bundle: &ModelBundle) -> Result<FeatureMatrix> {
    let raw = crate::features::extract_features(&series.returns, bundle.feature_config)?;
    Ok(FeatureMatrix::with_norm(raw, bundle.normalization.clone(), bundle.feature_config))
}

/// Backtest of a stored bundle over `test_range`.
pub fn backtest_bundle(
    series: &InstrumentSeries,
    bundle: &ModelBundle,
    config: &StrategyConfig,
    test_range: Range<usize>,
) -> Result<BacktestResult> {
    let features = features_for_bundle(series, bundle)?;
    run_backtest(series, &bundle.model, &features, config, test_range)
}

/// Viterbi path over `range` under a stored bundle.
pub fn decode_bundle(series: &InstrumentSeries, bundle: &ModelBundle, range: Range<usize>) -> Result<Vec<usize>> {
    let features = features_for_bundle(series, bundle)?;
    viterbi(&bundle.model, &features.observations(range)?)
}
