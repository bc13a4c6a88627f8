//! Expected Sharpe ratio per hidden state (ESR), its h-step prediction (PESR)
//! and bull / bear / high-volatility labelling.
//!
//! ESR is computed on de-normalized state means: `ESR_j = μ_j(f¹) / μ_j(f²)`
//! where both coordinates have been mapped back to return units. Values are
//! per period (daily), never annualized.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NormalizationStats;
use crate::hmm::{forecast_state_probs, HmmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeLabel {
    Bull,
    Bear,
    HighVol,
    /// 1-based rank by descending ESR, used when `S != 3`.
    Rank(usize),
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeLabel::Bull => f.write_str("bull"),
            RegimeLabel::Bear => f.write_str("bear"),
            RegimeLabel::HighVol => f.write_str("high-vol"),
            RegimeLabel::Rank(k) => write!(f, "rank-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsrVector {
    pub values: Vec<f64>,
    pub labels: Vec<RegimeLabel>,
    /// De-normalized `μ_j(f²)`, the per-state volatility.
    pub state_vols: Vec<f64>,
    pub span: usize,
    /// Set when the labelling rules disagreed or hit a tie.
    pub label_flagged: bool,
}

/// State means mapped back to raw feature units.
pub fn denormalized_means(model: &HmmModel, norm: &NormalizationStats) -> Result<Vec<[f64; 2]>> {
    if model.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: model.dim(),
        });
    }
    Ok(model
        .state_means()
        .iter()
        .map(|m| norm.invert([m[0], m[1]]))
        .collect())
}

/// `ESR_j = μ_raw_j(f¹) / μ_raw_j(f²)` for every state.
pub fn esr(model: &HmmModel, norm: &NormalizationStats) -> Result<Vec<f64>> {
    denormalized_means(model, norm)?
        .into_iter()
        .enumerate()
        .map(|(j, [ret, vol])| {
            if vol > 0.0 {
                Ok(ret / vol)
            } else {
                Err(Error::DegenerateRegime {
                    state: j,
                    volatility: vol,
                })
            }
        })
        .collect()
}

/// ESR values together with regime labels.
pub fn esr_vector(model: &HmmModel, norm: &NormalizationStats, span: usize) -> Result<EsrVector> {
    let values = esr(model, norm)?;
    let state_vols: Vec<f64> = denormalized_means(model, norm)?.iter().map(|m| m[1]).collect();
    let (labels, label_flagged) = if values.len() == 3 {
        let l = label_regimes(&values, &state_vols)?;
        (l.labels, l.flagged)
    } else {
        (ranked_labels(&values), false)
    };
    Ok(EsrVector {
        values,
        labels,
        state_vols,
        span,
        label_flagged,
    })
}

/// State order by descending ESR (ties by index), used to canonicalize fits.
pub fn order_by_esr(model: &HmmModel, norm: &NormalizationStats) -> Result<Vec<usize>> {
    let values = esr(model, norm)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    Ok(order)
}

pub fn ranked_labels(esr_values: &[f64]) -> Vec<RegimeLabel> {
    let mut order: Vec<usize> = (0..esr_values.len()).collect();
    order.sort_by(|&a, &b| esr_values[b].total_cmp(&esr_values[a]).then(a.cmp(&b)));
    let mut labels = vec![RegimeLabel::Rank(0); esr_values.len()];
    for (rank, &j) in order.iter().enumerate() {
        labels[j] = RegimeLabel::Rank(rank + 1);
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeLabeling {
    pub labels: Vec<RegimeLabel>,
    /// The highest-volatility state is not the one with ESR closest to zero,
    /// or a tie had to be broken by index.
    pub flagged: bool,
}

/// Labels three states: the highest-volatility state is `HighVol`; of the
/// other two the higher ESR is `Bull`, the lower `Bear`. Ties go to the lowest
/// state index and set the flag.
pub fn label_regimes(esr_values: &[f64], state_vols: &[f64]) -> Result<RegimeLabeling> {
    if esr_values.len() != 3 || state_vols.len() != 3 {
        return Err(Error::invalid("regime labelling needs exactly three states"));
    }
    if state_vols.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("state volatilities must be positive"));
    }
    let mut flagged = false;
    let mut high = 0;
    for j in 1..3 {
        if state_vols[j] > state_vols[high] {
            high = j;
        }
    }
    flagged |= (0..3).any(|j| j != high && state_vols[j] == state_vols[high]);

    let rest: Vec<usize> = (0..3).filter(|&j| j != high).collect();
    let (a, b) = (rest[0], rest[1]);
    flagged |= esr_values[a] == esr_values[b];
    let (bull, bear) = if esr_values[b] > esr_values[a] { (b, a) } else { (a, b) };

    let closest = (0..3)
        .min_by(|&x, &y| esr_values[x].abs().total_cmp(&esr_values[y].abs()).then(x.cmp(&y)))
        .expect("three states");
    flagged |= closest != high;

    let mut labels = vec![RegimeLabel::HighVol; 3];
    labels[bull] = RegimeLabel::Bull;
    labels[bear] = RegimeLabel::Bear;
    Ok(RegimeLabeling { labels, flagged })
}

/// `PESR(h) = ESRᵀ · α A^h`.
pub fn pesr(esr_values: &[f64], filtered_last: &[f64], transition: &DMatrix<f64>, horizon: usize) -> Result<f64> {
    if esr_values.len() != transition.nrows() {
        return Err(Error::DimensionMismatch {
            expected: transition.nrows(),
            actual: esr_values.len(),
        });
    }
    let alpha = forecast_state_probs(transition, filtered_last, horizon)?;
    Ok(esr_values.iter().zip(&alpha).map(|(e, a)| e * a).sum())
}
