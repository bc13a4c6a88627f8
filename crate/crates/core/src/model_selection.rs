//! Information criteria and hidden-state-count selection.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ObservationMatrix;
use crate::par;
use crate::training::{fit, PriorConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Hqic,
    Bcaic,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "hqic" => Ok(Criterion::Hqic),
            "bcaic" => Ok(Criterion::Bcaic),
            other => Err(Error::invalid(format!("unknown criterion `{other}`"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Hqic => "HQIC",
            Criterion::Bcaic => "BCAIC",
        })
    }
}

/// Free parameters of an HMM with `num_mixtures` full-covariance Gaussians of
/// dimension `dim` per state: `S (S + c m)` with `c = d + d (d + 1) / 2`.
pub fn num_free_params(num_states: usize, num_mixtures: usize, dim: usize) -> Result<usize> {
    if num_states == 0 || num_mixtures == 0 || dim == 0 {
        return Err(Error::invalid("num_states, num_mixtures and dim must all be >= 1"));
    }
    let c = dim + dim * (dim + 1) / 2;
    Ok(num_states * (num_states + c * num_mixtures))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
    pub bcaic: f64,
}

/// AIC, BIC, HQIC and BCAIC with natural logarithms.
pub fn information_criteria(log_likelihood: f64, num_params: usize, num_obs: usize) -> Result<Criteria> {
    if num_obs < 2 {
        return Err(Error::invalid(format!("need at least 2 observations, got {num_obs}")));
    }
    if num_params == 0 {
        return Err(Error::invalid("num_params must be >= 1"));
    }
    let base = -2.0 * log_likelihood;
    let p = num_params as f64;
    let ln_n = (num_obs as f64).ln();
    Ok(Criteria {
        aic: base + 2.0 * p,
        bic: base + p * ln_n,
        hqic: base + p * ln_n.ln(),
        bcaic: base + p * (ln_n + 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub num_states: usize,
    pub num_params: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
    pub bcaic: f64,
}

impl CriteriaReport {
    pub fn new(num_states: usize, dim: usize, log_likelihood: f64, num_obs: usize) -> Result<Self> {
        let num_params = num_free_params(num_states, 1, dim)?;
        let c = information_criteria(log_likelihood, num_params, num_obs)?;
        Ok(Self {
            num_states,
            num_params,
            log_likelihood,
            aic: c.aic,
            bic: c.bic,
            hqic: c.hqic,
            bcaic: c.bcaic,
        })
    }

    pub fn value(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
            Criterion::Hqic => self.hqic,
            Criterion::Bcaic => self.bcaic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub num_states: usize,
    /// The criteria, or the reason the fit failed.
    pub result: std::result::Result<CriteriaReport, String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub candidates: Vec<CandidateOutcome>,
    pub criterion: Criterion,
    /// `None` only if every candidate failed.
    pub chosen: Option<usize>,
}

impl Selection {
    pub fn reports(&self) -> impl Iterator<Item = &CriteriaReport> {
        self.candidates.iter().filter_map(|c| c.result.as_ref().ok())
    }
}

/// State count minimizing `criterion`; ties go to the smaller count.
pub fn choose<'a>(reports: impl IntoIterator<Item = &'a CriteriaReport>, criterion: Criterion) -> Option<usize> {
    reports
        .into_iter()
        .min_by(|a, b| {
            a.value(criterion)
                .total_cmp(&b.value(criterion))
                .then(a.num_states.cmp(&b.num_states))
        })
        .map(|r| r.num_states)
}

/// Fits every candidate state count and picks the best under `criterion`.
/// A failed candidate is recorded and skipped rather than aborting the sweep.
pub fn select_states(
    obs: &ObservationMatrix,
    candidates: &[usize],
    criterion: Criterion,
    prior: &PriorConfig,
    config: &TrainConfig,
) -> Result<Selection> {
    if candidates.is_empty() || candidates.contains(&0) {
        return Err(Error::invalid("candidate state counts must be nonempty and >= 1"));
    }
    let outcomes = par::map_indexed(config.execution, candidates, |_, &s| CandidateOutcome {
        num_states: s,
        result: fit(obs, s, prior, config)
            .and_then(|r| CriteriaReport::new(s, obs.dim(), r.log_likelihood, obs.len()))
            .map_err(|e| e.to_string()),
    });
    let chosen = choose(outcomes.iter().filter_map(|c| c.result.as_ref().ok()), criterion);
    Ok(Selection {
        candidates: outcomes,
        criterion,
        chosen,
    })
}

/// `S,p,logL,AIC,BIC,HQIC,BCAIC`, one row per successful candidate.
pub fn write_criteria_csv<'a, W: Write>(reports: impl IntoIterator<Item = &'a CriteriaReport>, mut w: W) -> Result<()> {
    writeln!(w, "S,p,logL,AIC,BIC,HQIC,BCAIC")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.num_states, r.num_params, r.log_likelihood, r.aic, r.bic, r.hqic, r.bcaic
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parameter_counts() {
        assert_eq!(num_free_params(3, 1, 2).unwrap(), 24);
        assert_eq!(num_free_params(1, 1, 1).unwrap(), 3);
        assert_eq!(num_free_params(4, 2, 3).unwrap(), 88);
        assert!(num_free_params(0, 1, 1).is_err());
        assert!(num_free_params(1, 0, 1).is_err());
        assert!(num_free_params(1, 1, 0).is_err());
    }

    #[test]
    fn criteria_values() {
        let c = information_criteria(0.0, 2, 100).unwrap();
        assert_eq!(c.aic, 4.0);
        assert_abs_diff_eq!(c.bic, 9.210_340_371_976_184, epsilon = 1e-12);
        assert_abs_diff_eq!(c.hqic, 3.054_359_251_615_802_2, epsilon = 1e-12);
        assert_abs_diff_eq!(c.bcaic, 11.210_340_371_976_184, epsilon = 1e-12);
        assert_eq!(information_criteria(-50.0, 1, 10).unwrap().aic, 102.0);
        assert!(information_criteria(-50.0, 0, 10).is_err());
        assert!(information_criteria(-50.0, 1, 1).is_err());
    }

    #[test]
    fn doubling_parameters_doubles_penalties() {
        let one = information_criteria(0.0, 3, 250).unwrap();
        let two = information_criteria(0.0, 6, 250).unwrap();
        assert_eq!(two.aic, 2.0 * one.aic);
        assert_eq!(two.bic, 2.0 * one.bic);
        assert_eq!(two.hqic, 2.0 * one.hqic);
        assert_eq!(two.bcaic, 2.0 * one.bcaic);
    }

    #[test]
    fn ties_prefer_fewer_states() {
        let a = CriteriaReport::new(2, 2, -100.0, 500).unwrap();
        let b = CriteriaReport::new(3, 2, -100.0, 500).unwrap();
        assert_eq!(choose([&b, &a], Criterion::Bic), Some(2));
        let mut c = b.clone();
        c.aic = a.aic;
        assert_eq!(choose([&c, &a], Criterion::Aic), Some(2));
        assert_eq!(choose([], Criterion::Aic), None);
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("BIC".parse::<Criterion>().unwrap(), Criterion::Bic);
        assert!("xic".parse::<Criterion>().is_err());
    }
}
