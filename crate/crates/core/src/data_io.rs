//! Return-series ingestion, synthetic regime data, rolling descriptive
//! statistics and model-bundle persistence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, NormalizationStats};
use crate::hmm::{HmmModel, ObservationMatrix, FORMAT_VERSION};
use crate::matrix::RowMatrix;

/// Simple daily returns of one instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSeries {
    pub id: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl InstrumentSeries {
    pub fn new(id: impl Into<String>, dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                actual: returns.len(),
            });
        }
        if dates.is_empty() {
            return Err(Error::invalid("series has no observations"));
        }
        for (i, w) in dates.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonIncreasingDate {
                    row: i + 1,
                    date: w[1].to_string(),
                });
            }
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite() || *r <= -1.0) {
            return Err(Error::BadValue {
                row: i,
                reason: format!("return {} must be finite and > -1", returns[i]),
            });
        }
        Ok(Self {
            id: id.into(),
            dates,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

const DATE_FORMAT: &str = "%Y-%m-%d";

fn parse_date(s: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|_| Error::BadDate {
        row,
        value: s.to_string(),
    })
}

fn parse_number(s: &str, row: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::BadNumber {
            row,
            value: s.to_string(),
        })
}

/// Reads a `date,return` or `date,close` CSV. Row numbers in errors are file
/// line numbers (the header is line 1).
pub fn load_csv(path: impl AsRef<Path>) -> Result<InstrumentSeries> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    read_csv(id, file)
}

pub fn read_csv<R: std::io::Read>(id: impl Into<String>, reader: R) -> Result<InstrumentSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("date").ok_or_else(|| Error::MissingColumn("date".into()))?;
    let (value_col, is_close) = match (find("return"), find("close")) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        (None, None) => return Err(Error::MissingColumn("return or close".into())),
    };

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let date_str = record.get(date_col).ok_or_else(|| Error::MissingColumn("date".into()))?;
        let date = parse_date(date_str, row)?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::NonIncreasingDate {
                    row,
                    date: date.to_string(),
                });
            }
        }
        let raw = record
            .get(value_col)
            .ok_or_else(|| Error::MissingColumn(headers[value_col].to_string()))?;
        let v = parse_number(raw, row)?;
        if is_close && v <= 0.0 {
            return Err(Error::BadValue {
                row,
                reason: format!("close price {v} must be positive"),
            });
        }
        if !is_close && v <= -1.0 {
            return Err(Error::BadValue {
                row,
                reason: format!("return {v} must be > -1"),
            });
        }
        dates.push(date);
        values.push(v);
    }

    if is_close {
        if values.len() < 2 {
            return Err(Error::invalid("need at least two closes to form a return"));
        }
        let returns = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        InstrumentSeries::new(id, dates[1..].to_vec(), returns)
    } else {
        InstrumentSeries::new(id, dates, values)
    }
}

/// Writes `date,return` with shortest round-trip float formatting.
pub fn save_csv(series: &InstrumentSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "date,return")?;
    for (d, r) in series.dates.iter().zip(&series.returns) {
        writeln!(w, "{},{}", d.format(DATE_FORMAT), r)?;
    }
    w.flush()?;
    Ok(())
}

/// Ground-truth description of a synthetic regime-switching return series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub num_states: usize,
    pub transition_matrix: Vec<Vec<f64>>,
    pub state_means: Vec<f64>,
    pub state_vols: Vec<f64>,
    pub length: usize,
    pub seed: u64,
}

/// Names accepted by [`RegimeSpec::preset`].
pub const PRESETS: &[&str] = &["planted", "co2-like", "fi4-like", "single"];

fn sticky_matrix(diag: &[f64]) -> Vec<Vec<f64>> {
    let s = diag.len();
    (0..s)
        .map(|i| {
            (0..s)
                .map(|j| {
                    if i == j {
                        diag[i]
                    } else {
                        (1.0 - diag[i]) / (s - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

impl RegimeSpec {
    /// Named calibrations.
    ///
    /// * `planted`: well separated bull / bear / high-volatility regimes with
    ///   mean durations of several hundred days.
    /// * `co2-like`: roughly 50% annualized volatility.
    /// * `fi4-like`: roughly 3% annualized volatility.
    /// * `single`: one state.
    pub fn preset(name: &str, length: usize, seed: u64) -> Result<Self> {
        let (means, vols, diag): (Vec<f64>, Vec<f64>, Vec<f64>) = match name {
            "planted" => (
                vec![0.003, -0.003, 0.0],
                vec![0.008, 0.010, 0.030],
                vec![0.997, 0.997, 0.995],
            ),
            "co2-like" => (
                vec![0.002, -0.002, 0.0],
                vec![0.022, 0.028, 0.045],
                vec![0.99, 0.99, 0.98],
            ),
            "fi4-like" => (
                vec![0.0002, -0.0002, 0.0],
                vec![0.0015, 0.0018, 0.0028],
                vec![0.99, 0.99, 0.98],
            ),
            "single" => (vec![0.0003], vec![0.01], vec![1.0]),
            other => {
                return Err(Error::invalid(format!(
                    "unknown preset `{other}`, expected one of {PRESETS:?}"
                )))
            }
        };
        let spec = Self {
            num_states: means.len(),
            transition_matrix: if means.len() == 1 {
                vec![vec![1.0]]
            } else {
                sticky_matrix(&diag)
            },
            state_means: means,
            state_vols: vols,
            length,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.num_states;
        if s == 0 || self.length == 0 {
            return Err(Error::invalid("regime spec needs at least one state and one observation"));
        }
        if self.state_means.len() != s || self.state_vols.len() != s || self.transition_matrix.len() != s {
            return Err(Error::invalid("regime spec arrays must have num_states entries"));
        }
        for (i, row) in self.transition_matrix.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != s || row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("transition row {i} is not a distribution")));
            }
        }
        if self.state_vols.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || self.state_means.iter().any(|m| !m.is_finite())
        {
            return Err(Error::invalid("state vols must be positive and means finite"));
        }
        Ok(())
    }
}

/// Consecutive weekdays starting at `start` (itself moved to a weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// First date of every synthetic series.
pub fn synthetic_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// Index drawn from the discrete distribution `probs` with uniform `u`.
fn draw_index(probs: impl IntoIterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last_positive = j;
        }
        acc += p;
        if u < acc && p > 0.0 {
            return j;
        }
    }
    // rounding left `u` above the cumulative sum
    last_positive
}

/// Samples a hidden path (uniform initial state) and Gaussian returns.
pub fn generate_synthetic(spec: &RegimeSpec) -> Result<(InstrumentSeries, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.num_states;
    let mut path = Vec::with_capacity(spec.length);
    let mut state = rng.gen_range(0..s);
    for t in 0..spec.length {
        if t > 0 {
            state = draw_index(spec.transition_matrix[state].iter().copied(), rng.gen());
        }
        path.push(state);
    }
    let dists: Vec<Normal<f64>> = spec
        .state_means
        .iter()
        .zip(&spec.state_vols)
        .map(|(&m, &v)| Normal::new(m, v).map_err(|e| Error::invalid(e.to_string())))
        .collect::<Result<_>>()?;
    let returns: Vec<f64> = path.iter().map(|&z| dists[z].sample(&mut rng)).collect();
    let series = InstrumentSeries::new(
        format!("synthetic-{}", spec.seed),
        business_days(synthetic_start(), spec.length),
        returns,
    )?;
    Ok((series, path))
}

/// Draws `n` observations and their hidden path from a Gaussian HMM.
pub fn sample_model(model: &HmmModel, n: usize, seed: u64) -> Result<(ObservationMatrix, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("sample length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    let factors: Vec<DMatrix<f64>> = model
        .state_covariances()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            c.clone()
                .cholesky()
                .map(|ch| ch.l())
                .ok_or(Error::SingularCovariance { state: j })
        })
        .collect::<Result<_>>()?;
    let a = model.transition_matrix();
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal parameters");
    let mut path = Vec::with_capacity(n);
    let mut flat = Vec::with_capacity(n * d);
    let mut state = draw_index(model.initial_probs().iter().copied(), rng.gen());
    for t in 0..n {
        if t > 0 {
            state = draw_index(a.row(state).iter().copied(), rng.gen());
        }
        path.push(state);
        let z = DVector::from_iterator(d, (0..d).map(|_| std_normal.sample(&mut rng)));
        let x = &model.state_means()[state] + &factors[state] * z;
        flat.extend(x.iter());
    }
    Ok((ObservationMatrix::new(RowMatrix::from_flat(n, d, flat)?)?, path))
}

/// Trailing-window moments at one date; `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingRow {
    pub date: NaiveDate,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub skew: Option<f64>,
    pub kurt: Option<f64>,
}

/// `(min, max)` of each rolling statistic over all full windows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RollingRanges {
    pub mean: Option<(f64, f64)>,
    pub std: Option<(f64, f64)>,
    pub skew: Option<(f64, f64)>,
    pub kurt: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingStats {
    pub window: usize,
    pub rows: Vec<RollingRow>,
    pub ranges: RollingRanges,
}

pub const DEFAULT_ROLLING_WINDOW: usize = 252;

/// Standard deviations below this are treated as exactly zero.
const ZERO_STD: f64 = 1e-14;

/// Moments of one window: mean, sample std (divisor `n - 1`), skewness
/// `m3 / m2^1.5` and excess kurtosis `m4 / m2² - 3` from central moments.
pub fn window_moments(xs: &[f64]) -> (f64, f64, Option<f64>, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = (m2 / (n - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if std <= ZERO_STD * mean.abs().max(1.0) {
        return (mean, 0.0, None, None);
    }
    (mean, std, Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
}

fn widen(range: &mut Option<(f64, f64)>, v: Option<f64>) {
    if let Some(v) = v {
        *range = Some(match *range {
            None => (v, v),
            Some((lo, hi)) => (lo.min(v), hi.max(v)),
        });
    }
}

pub fn rolling_stats(series: &InstrumentSeries, window: usize) -> Result<RollingStats> {
    if window < 4 || window > series.len() {
        return Err(Error::invalid(format!(
            "rolling window {window} must be in [4, {}]",
            series.len()
        )));
    }
    let mut rows = Vec::with_capacity(series.len());
    let mut ranges = RollingRanges::default();
    for (t, &date) in series.dates.iter().enumerate() {
        if t + 1 < window {
            rows.push(RollingRow {
                date,
                mean: None,
                std: None,
                skew: None,
                kurt: None,
            });
            continue;
        }
        let (mean, std, skew, kurt) = window_moments(&series.returns[t + 1 - window..=t]);
        widen(&mut ranges.mean, Some(mean));
        widen(&mut ranges.std, Some(std));
        widen(&mut ranges.skew, skew);
        widen(&mut ranges.kurt, kurt);
        rows.push(RollingRow {
            date,
            mean: Some(mean),
            std: Some(std),
            skew,
            kurt,
        });
    }
    Ok(RollingStats { window, rows, ranges })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `date,mean,std,skew,kurt` with empty cells for undefined values.
pub fn write_rolling_csv<W: Write>(stats: &RollingStats, mut w: W) -> Result<()> {
    writeln!(w, "date,mean,std,skew,kurt")?;
    for r in &stats.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.date.format(DATE_FORMAT),
            cell(r.mean),
            cell(r.std),
            cell(r.skew),
            cell(r.kurt)
        )?;
    }
    Ok(())
}

/// Everything needed to predict on new data with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format_version: String,
    pub instrument: String,
    pub feature_config: FeatureConfig,
    pub normalization: NormalizationStats,
    pub model: HmmModel,
}

impl ModelBundle {
    pub fn new(
        instrument: impl Into<String>,
        model: HmmModel,
        normalization: NormalizationStats,
        feature_config: FeatureConfig,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            instrument: instrument.into(),
            feature_config,
            normalization,
            model,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version `{}`, expected `{FORMAT_VERSION}`",
                self.format_version
            )));
        }
        if self.feature_config.span == 0 {
            return Err(Error::Format("feature span must be at least 1".into()));
        }
        if self.normalization.stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Format("normalization stds must be positive".into()));
        }
        if self.model.dim() != 2 {
            return Err(Error::Format(format!("model dim must be 2, got {}", self.model.dim())));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let mut text = bundle.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    ModelBundle::from_json(&std::fs::read_to_string(path)?)
}
