//! Run manifest: a JSON file whose fields command-line flags override.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::Deserialize;

use regime_hmm::backtest::{ProbabilitySource, StrategyConfig, StrategyMode};
use regime_hmm::training::{PriorConfig, TrainConfig};
use regime_hmm::Execution;

pub const OUT_ENV: &str = "REGIME_HMM_OUT";
const DEFAULT_OUT: &str = "regime-hmm-out";

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub instruments: Vec<PathBuf>,
    pub spans: Vec<usize>,
    pub num_states: usize,
    pub modes: Vec<StrategyMode>,
    pub val_start: NaiveDate,
    pub test_start: NaiveDate,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub cost_bps: f64,
    pub horizon: i64,
    pub neutral_band: f64,
    pub probabilities: ProbabilitySource,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub prior: PriorConfig,
    pub svg: bool,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            instruments: Vec::new(),
            spans: vec![15, 30, 60],
            num_states: 3,
            modes: vec![StrategyMode::LongOnly, StrategyMode::LongShort],
            val_start: NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date"),
            test_start: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
            seed: 0,
            out: None,
            cost_bps: 5.0,
            horizon: 1,
            neutral_band: 0.0,
            probabilities: ProbabilitySource::Filtered,
            restarts: 20,
            max_iterations: 500,
            tolerance: 1e-6,
            prior: PriorConfig::default(),
            svg: true,
        }
    }
}

/// Flag values that take precedence over the manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub instruments: Vec<PathBuf>,
    pub spans: Vec<usize>,
    pub states: Option<usize>,
    pub modes: Option<Vec<StrategyMode>>,
    pub cost_bps: Option<f64>,
    pub horizon: Option<i64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sequential: bool,
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub instruments: Vec<PathBuf>,
    pub spans: Vec<usize>,
    pub num_states: usize,
    pub modes: Vec<StrategyMode>,
    pub val_start: NaiveDate,
    pub test_start: NaiveDate,
    pub out: PathBuf,
    pub strategy: StrategyConfig,
    pub train: TrainConfig,
    pub prior: PriorConfig,
    pub svg: bool,
}

impl Settings {
    pub fn strategy(&self, mode: StrategyMode) -> StrategyConfig {
        StrategyConfig { mode, ..self.strategy }
    }
}

fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let mut m: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in &mut m.instruments {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(out) = &mut m.out {
        if out.is_relative() {
            *out = base.join(&*out);
        }
    }
    Ok(m)
}

/// Precedence: flag, then manifest, then the environment (output directory
/// only), then built-in defaults. Every error here is a manifest error.
pub fn resolve(manifest: Option<&Path>, o: Overrides, needs_instruments: bool) -> Result<Settings> {
    let m = match manifest {
        Some(p) => read_manifest(p)?,
        None => RunManifest::default(),
    };
    let instruments = if o.instruments.is_empty() { m.instruments } else { o.instruments };
    let spans = if o.spans.is_empty() { m.spans } else { o.spans };
    let num_states = o.states.unwrap_or(m.num_states);
    let modes = o.modes.unwrap_or(m.modes);
    let horizon = o.horizon.unwrap_or(m.horizon);
    let cost_bps = o.cost_bps.unwrap_or(m.cost_bps);
    let out = o
        .out
        .or(m.out)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    if needs_instruments && instruments.is_empty() {
        bail!("no instruments given (manifest `instruments` or --instrument)");
    }
    let mut ids = BTreeSet::new();
    for p in &instruments {
        if !ids.insert(instrument_id(p)) {
            bail!("duplicate instrument id `{}`", instrument_id(p));
        }
    }
    if spans.is_empty() || spans.contains(&0) {
        bail!("spans must be a nonempty list of positive integers, got {spans:?}");
    }
    if num_states == 0 {
        bail!("num_states must be at least 1");
    }
    if modes.is_empty() {
        bail!("at least one strategy mode is required");
    }
    if m.val_start >= m.test_start {
        bail!("val_start {} must precede test_start {}", m.val_start, m.test_start);
    }
    if horizon < 0 {
        bail!("horizon must be non-negative, got {horizon}");
    }
    let strategy = StrategyConfig {
        mode: modes[0],
        neutral_band: m.neutral_band,
        cost_bps,
        horizon: horizon as usize,
        source: m.probabilities,
    };
    strategy.validate()?;
    let train = TrainConfig {
        max_iterations: m.max_iterations,
        tolerance: m.tolerance,
        num_restarts: m.restarts,
        seed: o.seed.unwrap_or(m.seed),
        execution: if o.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    train.validate()?;
    m.prior.validate()?;

    let mut spans = spans;
    spans.sort_unstable();
    spans.dedup();
    Ok(Settings {
        instruments,
        spans,
        num_states,
        modes,
        val_start: m.val_start,
        test_start: m.test_start,
        out,
        strategy,
        train,
        prior: m.prior,
        svg: m.svg,
    })
}

/// File stem, used to name every per-instrument output.
pub fn instrument_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
