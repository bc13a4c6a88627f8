//! PESR-driven holdings, transaction costs and realized performance metrics.
//!
//! Timing: the position decided at the close of day `t` earns the return of
//! day `t + 1`. Costs are charged on the day the position changes, per unit
//! of notional traded.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data_io::InstrumentSeries;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::hmm::{filter, forward_backward, HmmModel};
use crate::matrix::RowMatrix;
use crate::regime_metrics::{esr, pesr};

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyMode {
    LongOnly,
    LongShort,
}

impl FromStr for StrategyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "long-only" | "long" => Ok(StrategyMode::LongOnly),
            "long-short" | "longshort" => Ok(StrategyMode::LongShort),
            other => Err(Error::invalid(format!("unknown strategy mode `{other}`"))),
        }
    }
}

impl fmt::Display for StrategyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyMode::LongOnly => "long-only",
            StrategyMode::LongShort => "long-short",
        })
    }
}

/// Which state probabilities feed PESR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilitySource {
    /// `P(z_t | x_1..x_t)`, causal.
    #[default]
    Filtered,
    /// `P(z_t | whole test window)`. Uses future data; for replication only.
    SmoothedWholeWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub mode: StrategyMode,
    /// `|PESR| <= neutral_band` means flat.
    pub neutral_band: f64,
    /// Cost per unit traded, in basis points.
    pub cost_bps: f64,
    pub horizon: usize,
    pub source: ProbabilitySource,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            mode: StrategyMode::LongOnly,
            neutral_band: 0.0,
            cost_bps: 5.0,
            horizon: 1,
            source: ProbabilitySource::Filtered,
        }
    }
}

impl StrategyConfig {
    pub fn cost_fraction(&self) -> f64 {
        self.cost_bps * 1e-4
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.neutral_band >= 0.0) || !(self.cost_bps >= 0.0) || !self.cost_bps.is_finite() {
            return Err(Error::invalid(format!(
                "neutral_band and cost_bps must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Long-only: 1 when PESR exceeds the band, else 0. Long/short: the sign of
/// PESR outside the band, else 0.
pub fn positions_from_pesr(pesr_series: &[f64], config: &StrategyConfig) -> Vec<f64> {
    let band = config.neutral_band;
    pesr_series
        .iter()
        .map(|&p| match config.mode {
            StrategyMode::LongOnly => {
                if p > band {
                    1.0
                } else {
                    0.0
                }
            }
            StrategyMode::LongShort => {
                if p.abs() > band {
                    p.signum()
                } else {
                    0.0
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnStreams {
    pub gross: Vec<f64>,
    pub net: Vec<f64>,
}

/// `gross_t = pos_{t-1} r_t`, `net_t = gross_t - c |pos_t - pos_{t-1}|` with
/// `pos_{-1} = 0` and `c = cost_bps · 1e-4`.
pub fn apply_costs(positions: &[f64], asset_returns: &[f64], cost_bps: f64) -> Result<ReturnStreams> {
    if positions.len() != asset_returns.len() {
        return Err(Error::DimensionMismatch {
            expected: positions.len(),
            actual: asset_returns.len(),
        });
    }
    let c = cost_bps * 1e-4;
    let mut prev = 0.0;
    let mut gross = Vec::with_capacity(positions.len());
    let mut net = Vec::with_capacity(positions.len());
    for (&pos, &r) in positions.iter().zip(asset_returns) {
        let g = prev * r;
        gross.push(g);
        net.push(g - c * (pos - prev).abs());
        prev = pos;
    }
    Ok(ReturnStreams { gross, net })
}

/// The same accounting indexed by exposure: `held[t]` is the position that
/// earns `r_t`, so `held[t] = pos_{t-1}`. Trading into `held[t+1]` is charged
/// on day `t`, when the decision is made; the last holding is assumed kept.
pub fn apply_costs_to_holdings(held: &[f64], asset_returns: &[f64], cost_bps: f64) -> Result<ReturnStreams> {
    if held.is_empty() || held[0] != 0.0 {
        return Err(Error::invalid("holdings must start flat: the first day has no prior decision"));
    }
    let mut decisions = held[1..].to_vec();
    decisions.push(*held.last().expect("nonempty"));
    apply_costs(&decisions, asset_returns, cost_bps)
}

/// Compounded equity starting from 1.
pub fn equity_curve(returns: &[f64]) -> Vec<f64> {
    let mut eq = 1.0;
    returns
        .iter()
        .map(|r| {
            eq *= 1.0 + r;
            eq
        })
        .collect()
}

/// Largest `1 - C_t / max_{u<=t} C_u`, with the running peak starting at 1.
///
/// Tracks the compounded return since the last peak, `d <- d + r + d r`,
/// instead of equity levels, which avoids cancellation in `1 - C_t / peak`.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut since_peak = 0.0f64;
    let mut worst = 0.0f64;
    for &r in returns {
        since_peak = (since_peak + r + since_peak * r).min(0.0);
        worst = worst.max(-since_peak);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    pub ann_return: f64,
    pub ann_vol: f64,
    /// `None` when volatility is zero.
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
    pub daily_turnover: f64,
}

impl PerformanceMetrics {
    pub fn sharpe_ratio(&self) -> Result<f64> {
        self.sharpe.ok_or(Error::SharpeUndefined)
    }
}

pub fn performance_metrics(net_returns: &[f64], positions: &[f64]) -> Result<PerformanceMetrics> {
    let t = net_returns.len();
    if t < 2 {
        return Err(Error::InsufficientData { needed: 1, got: t });
    }
    if positions.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            actual: positions.len(),
        });
    }
    let n = t as f64;
    let growth: f64 = net_returns.iter().map(|r| 1.0 + r).product();
    let ann_return = growth.powf(TRADING_DAYS / n) - 1.0;
    let mean = net_returns.iter().sum::<f64>() / n;
    let var = net_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let ann_vol = var.sqrt() * TRADING_DAYS.sqrt();
    let sharpe = (ann_vol > 0.0).then(|| mean * TRADING_DAYS / ann_vol);
    let mut prev = 0.0;
    let traded: f64 = positions
        .iter()
        .map(|&p| {
            let d = (p - prev).abs();
            prev = p;
            d
        })
        .sum();
    Ok(PerformanceMetrics {
        ann_return,
        ann_vol,
        sharpe,
        max_drawdown: max_drawdown(net_returns),
        daily_turnover: traded / n,
    })
}

/// Contiguous train / validation / test index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

/// Splits at the first dates on or after `val_start` and `test_start`.
pub fn split_train_val_test(dates: &[NaiveDate], val_start: NaiveDate, test_start: NaiveDate) -> Result<DataSplit> {
    if val_start >= test_start {
        return Err(Error::invalid(format!(
            "validation start {val_start} must precede test start {test_start}"
        )));
    }
    let v = dates.partition_point(|d| *d < val_start);
    let t = dates.partition_point(|d| *d < test_start);
    let n = dates.len();
    if v == 0 {
        return Err(Error::invalid(format!("no training data before {val_start}")));
    }
    if t == v {
        return Err(Error::invalid(format!("empty validation window [{val_start}, {test_start})")));
    }
    if t == n {
        return Err(Error::invalid(format!("no test data on or after {test_start}")));
    }
    Ok(DataSplit {
        train: 0..v,
        validation: v..t,
        test: t..n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub dates: Vec<NaiveDate>,
    /// State probabilities used at each test date.
    pub probabilities: RowMatrix,
    pub pesr: Vec<f64>,
    pub positions: Vec<f64>,
    pub gross_returns: Vec<f64>,
    pub net_returns: Vec<f64>,
    pub metrics: PerformanceMetrics,
}

impl BacktestResult {
    pub fn equity(&self) -> Vec<f64> {
        equity_curve(&self.net_returns)
    }
}

/// State probabilities for every row of `range`.
///
/// Filtered probabilities come from one forward pass started at the end of
/// the feature warm-up, so every row only uses data up to its own date.
pub fn state_probabilities(
    model: &HmmModel,
    features: &FeatureMatrix,
    range: Range<usize>,
    source: ProbabilitySource,
) -> Result<RowMatrix> {
    if range.start < features.warmup() || range.end > features.len() || range.is_empty() {
        return Err(Error::invalid(format!(
            "range {range:?} must lie within features after the {}-row warm-up",
            features.warmup()
        )));
    }
    match source {
        ProbabilitySource::Filtered => {
            let from = features.warmup();
            let (_, filtered) = filter(model, &features.observations(from..range.end)?)?;
            Ok(filtered.slice_rows(range.start - from..range.end - from))
        }
        ProbabilitySource::SmoothedWholeWindow => {
            Ok(forward_backward(model, &features.observations(range)?)?.smoothed)
        }
    }
}

/// PESR(h) at every row of `range`.
pub fn pesr_series(
    model: &HmmModel,
    features: &FeatureMatrix,
    range: Range<usize>,
    horizon: usize,
    source: ProbabilitySource,
) -> Result<(RowMatrix, Vec<f64>)> {
    let esr_values = esr(model, &features.norm)?;
    let probs = state_probabilities(model, features, range, source)?;
    let series = probs
        .iter_rows()
        .map(|alpha| pesr(&esr_values, alpha, model.transition_matrix(), horizon))
        .collect::<Result<Vec<_>>>()?;
    Ok((probs, series))
}

pub fn run_backtest(
    instrument: &InstrumentSeries,
    model: &HmmModel,
    features: &FeatureMatrix,
    config: &StrategyConfig,
    test_range: Range<usize>,
) -> Result<BacktestResult> {
    config.validate()?;
    if features.len() != instrument.len() {
        return Err(Error::DimensionMismatch {
            expected: instrument.len(),
            actual: features.len(),
        });
    }
    let (probabilities, pesr) = pesr_series(model, features, test_range.clone(), config.horizon, config.source)?;
    let positions = positions_from_pesr(&pesr, config);
    let streams = apply_costs(&positions, &instrument.returns[test_range.clone()], config.cost_bps)?;
    let metrics = performance_metrics(&streams.net, &positions)?;
    Ok(BacktestResult {
        dates: instrument.dates[test_range].to_vec(),
        probabilities,
        pesr,
        positions,
        gross_returns: streams.gross,
        net_returns: streams.net,
        metrics,
    })
}

/// `date,position,gross,net,equity`.
pub fn write_daily_csv<W: Write>(result: &BacktestResult, mut w: W) -> Result<()> {
    writeln!(w, "date,position,gross,net,equity")?;
    for (i, eq) in result.equity().into_iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            result.dates[i].format("%Y-%m-%d"),
            result.positions[i],
            result.gross_returns[i],
            result.net_returns[i],
            eq
        )?;
    }
    Ok(())
}

/// Minimal SVG line chart of one or more equity curves.
pub fn equity_svg(title: &str, curves: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let len = curves.iter().map(|c| c.1.len()).max().unwrap_or(0).max(2);
    let (lo, hi) = curves
        .iter()
        .flat_map(|c| c.1.iter().copied())
        .fold((1.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / span;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n",
        escape(title),
        y(1.0),
        W - PAD,
        y(1.0)
    );
    for (k, (name, values)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            points.join(" "),
            W - PAD - 120.0,
            PAD + 16.0 * k as f64,
            escape(name)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"4\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\">{lo:.3}</text>\n\
         <text x=\"4\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\">{hi:.3}</text>\n</svg>\n",
        y(lo),
        y(hi) + 10.0
    ));
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
