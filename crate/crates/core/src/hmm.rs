//! Gaussian-emission hidden Markov models: parameters, emission densities,
//! log-space forward-backward smoothing, Viterbi decoding and h-step
//! state-probability forecasts.
//!
//! States are indexed from 0 everywhere in the API. Reports that face users
//! add one when printing.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// Format tag written into every serialized model.
pub const FORMAT_VERSION: &str = "regime-hmm/1";

/// Tolerance on probability sums and entry ranges.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// Smallest eigenvalue a state covariance may have.
pub const COVARIANCE_FLOOR: f64 = 1e-8;

/// Ridge added to a covariance that falls below the floor, as a fraction of
/// its mean diagonal.
pub const RIDGE_FRACTION: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Full parameter set of a Gaussian-emission HMM with `S` states over
/// `d`-dimensional observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct HmmModel {
    initial_probs: DVector<f64>,
    transition: DMatrix<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl HmmModel {
    /// Builds a model, checking every invariant. Covariances are used as given
    /// and must already be symmetric and above [`COVARIANCE_FLOOR`]; see
    /// [`floor_covariance`] to repair estimates.
    pub fn new(
        initial_probs: DVector<f64>,
        transition: DMatrix<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let model = Self {
            initial_probs,
            transition,
            means,
            covariances,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let s = self.initial_probs.len();
        if s == 0 {
            return Err(Error::InvalidModel("num_states must be at least 1".into()));
        }
        if self.means.len() != s || self.covariances.len() != s {
            return Err(Error::InvalidModel(format!(
                "expected {s} means and covariances, got {} and {}",
                self.means.len(),
                self.covariances.len()
            )));
        }
        let d = self.means[0].len();
        if d == 0 {
            return Err(Error::InvalidModel("dim must be at least 1".into()));
        }
        check_distribution(self.initial_probs.as_slice(), "initial_probs")?;
        if self.transition.nrows() != s || self.transition.ncols() != s {
            return Err(Error::InvalidModel(format!(
                "transition matrix must be {s}x{s}, got {}x{}",
                self.transition.nrows(),
                self.transition.ncols()
            )));
        }
        for i in 0..s {
            let row: Vec<f64> = self.transition.row(i).iter().copied().collect();
            check_distribution(&row, &format!("transition row {i}"))?;
        }
        for (j, (mu, cov)) in self.means.iter().zip(&self.covariances).enumerate() {
            if mu.len() != d || cov.nrows() != d || cov.ncols() != d {
                return Err(Error::InvalidModel(format!(
                    "state {j}: parameters do not match dim {d}"
                )));
            }
            if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("state {j}: non-finite parameter")));
            }
            let scale = cov.amax().max(1.0);
            for a in 0..d {
                for b in 0..a {
                    if (cov[(a, b)] - cov[(b, a)]).abs() > PROB_TOLERANCE * scale {
                        return Err(Error::InvalidModel(format!(
                            "state {j}: covariance is not symmetric"
                        )));
                    }
                }
            }
            let min_eig = min_eigenvalue(cov);
            if min_eig < COVARIANCE_FLOOR * (1.0 - 1e-6) {
                return Err(Error::InvalidModel(format!(
                    "state {j}: covariance minimum eigenvalue {min_eig:e} below floor {COVARIANCE_FLOOR:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.initial_probs.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn initial_probs(&self) -> &DVector<f64> {
        &self.initial_probs
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn state_means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn state_covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Returns the model with states relabelled so that new state `k` is old
    /// state `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let s = self.num_states();
        let mut seen = vec![false; s];
        if order.len() != s || order.iter().any(|&o| o >= s || std::mem::replace(&mut seen[o], true)) {
            return Err(Error::invalid(format!("{order:?} is not a permutation of 0..{s}")));
        }
        let initial = DVector::from_iterator(s, order.iter().map(|&o| self.initial_probs[o]));
        let transition = DMatrix::from_fn(s, s, |i, j| self.transition[(order[i], order[j])]);
        Ok(Self {
            initial_probs: initial,
            transition,
            means: order.iter().map(|&o| self.means[o].clone()).collect(),
            covariances: order.iter().map(|&o| self.covariances[o].clone()).collect(),
        })
    }

    /// `α · A^h` for this model's transition matrix.
    pub fn forecast_state_probs(&self, filtered_last: &[f64], horizon: usize) -> Result<Vec<f64>> {
        forecast_state_probs(&self.transition, filtered_last, horizon)
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidModel(format!("{what}: entries must lie in [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidModel(format!("{what}: sums to {sum}, not 1")));
    }
    Ok(())
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetrizes `cov` and, if its smallest eigenvalue is below
/// [`COVARIANCE_FLOOR`], adds a ridge of [`RIDGE_FRACTION`] times the mean
/// diagonal (raised further if that alone does not clear the floor).
pub fn floor_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sym = (cov + cov.transpose()) * 0.5;
    let min_eig = min_eigenvalue(&sym);
    if min_eig < COVARIANCE_FLOOR || !min_eig.is_finite() {
        let d = sym.nrows();
        let mean_diag = sym.diagonal().sum() / d as f64;
        let ridge = (RIDGE_FRACTION * mean_diag.abs()).max(2.0 * COVARIANCE_FLOOR - min_eig);
        for k in 0..d {
            sym[(k, k)] += ridge;
        }
    }
    sym
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: String,
    num_states: usize,
    dim: usize,
    initial_probs: Vec<f64>,
    transition_matrix: Vec<Vec<f64>>,
    state_means: Vec<Vec<f64>>,
    state_covariances: Vec<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Format(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl From<HmmModel> for ModelDocument {
    fn from(m: HmmModel) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            num_states: m.num_states(),
            dim: m.dim(),
            initial_probs: m.initial_probs.iter().copied().collect(),
            transition_matrix: rows_of(&m.transition),
            state_means: m.means.iter().map(|v| v.iter().copied().collect()).collect(),
            state_covariances: m.covariances.iter().map(rows_of).collect(),
        }
    }
}

impl TryFrom<ModelDocument> for HmmModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version `{}`, expected `{FORMAT_VERSION}`",
                doc.format_version
            )));
        }
        let (s, d) = (doc.num_states, doc.dim);
        if doc.initial_probs.len() != s {
            return Err(Error::Format(format!("initial_probs must have {s} entries")));
        }
        if doc.state_means.len() != s || doc.state_means.iter().any(|m| m.len() != d) {
            return Err(Error::Format(format!("state_means must be {s} vectors of length {d}")));
        }
        if doc.state_covariances.len() != s {
            return Err(Error::Format(format!("state_covariances must have {s} entries")));
        }
        let transition = matrix_from_rows(&doc.transition_matrix, s, "transition_matrix")?;
        let covariances = doc
            .state_covariances
            .iter()
            .map(|c| matrix_from_rows(c, d, "state covariance"))
            .collect::<Result<Vec<_>>>()?;
        HmmModel::new(
            DVector::from_vec(doc.initial_probs),
            transition,
            doc.state_means.into_iter().map(DVector::from_vec).collect(),
            covariances,
        )
    }
}

/// `n × d` matrix of finite observations, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix(RowMatrix);

impl ObservationMatrix {
    pub fn new(values: RowMatrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::invalid("observation matrix must have at least one row and column"));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite observation at row {}",
                pos / values.cols()
            )));
        }
        Ok(Self(values))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(RowMatrix::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    pub fn values(&self) -> &RowMatrix {
        &self.0
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "row range {range:?} is empty or exceeds {} rows",
                self.len()
            )));
        }
        Ok(Self(self.0.slice_rows(range)))
    }
}

/// Cholesky factor and normalizing constant of one state's Gaussian.
struct GaussianTerms {
    mean: Vec<f64>,
    lower: Vec<f64>,
    log_norm: f64,
}

impl GaussianTerms {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, state: usize) -> Result<Self> {
        let d = mean.len();
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::SingularCovariance { state })?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance { state });
        }
        let mut lower = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                lower[i * d + j] = l[(i, j)];
            }
        }
        Ok(Self {
            mean: mean.iter().copied().collect(),
            lower,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    /// Log density at `x`; `scratch` must have length `d`.
    fn log_density(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut quad = 0.0;
        for i in 0..d {
            let mut v = x[i] - self.mean[i];
            for k in 0..i {
                v -= self.lower[i * d + k] * scratch[k];
            }
            v /= self.lower[i * d + i];
            scratch[i] = v;
            quad += v * v;
        }
        self.log_norm - 0.5 * quad
    }
}

pub(crate) fn log_emission_table(model: &HmmModel, obs: &ObservationMatrix) -> Result<RowMatrix> {
    if model.dim() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: obs.dim(),
        });
    }
    let terms = model
        .means
        .iter()
        .zip(&model.covariances)
        .enumerate()
        .map(|(j, (m, c))| GaussianTerms::new(m, c, j))
        .collect::<Result<Vec<_>>>()?;
    let s = model.num_states();
    let mut out = RowMatrix::zeros(obs.len(), s);
    let mut scratch = vec![0.0; obs.dim()];
    for t in 0..obs.len() {
        let x = obs.row(t);
        let row = out.row_mut(t);
        for (j, g) in terms.iter().enumerate() {
            row[j] = g.log_density(x, &mut scratch);
        }
    }
    Ok(out)
}

/// `n × S` table whose entry `(t, j)` is `log N(x_t; μ_j, Σ_j)`.
pub fn log_emission_densities(model: &HmmModel, obs: &ObservationMatrix) -> Result<RowMatrix> {
    log_emission_table(model, obs)
}

/// `log Σ exp(v)`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn ln_matrix(m: &DMatrix<f64>) -> Vec<f64> {
    let s = m.nrows();
    let mut out = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            out[i * s + j] = m[(i, j)].ln();
        }
    }
    out
}

/// Posterior quantities produced by the forward-backward pass.
#[derive(Debug, Clone)]
pub struct PosteriorResult {
    pub log_likelihood: f64,
    /// Row `t` is `P(z_t | x_1..x_t)`.
    pub filtered: RowMatrix,
    /// Row `t` is `P(z_t | x_1..x_n)`.
    pub smoothed: RowMatrix,
    num_states: usize,
    pairwise: Vec<f64>,
}

impl PosteriorResult {
    /// Assembles posterior statistics computed elsewhere. `pairwise` holds
    /// `n - 1` row-major `S × S` slices back to back.
    pub fn from_parts(
        log_likelihood: f64,
        filtered: RowMatrix,
        smoothed: RowMatrix,
        pairwise: Vec<f64>,
    ) -> Result<Self> {
        let (n, s) = (smoothed.rows(), smoothed.cols());
        if filtered.rows() != n || filtered.cols() != s {
            return Err(Error::DimensionMismatch {
                expected: n * s,
                actual: filtered.rows() * filtered.cols(),
            });
        }
        if pairwise.len() != n.saturating_sub(1) * s * s {
            return Err(Error::DimensionMismatch {
                expected: n.saturating_sub(1) * s * s,
                actual: pairwise.len(),
            });
        }
        Ok(Self {
            log_likelihood,
            filtered,
            smoothed,
            num_states: s,
            pairwise,
        })
    }

    pub fn len(&self) -> usize {
        self.smoothed.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothed.rows() == 0
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// `P(z_t = i, z_{t+1} = j | x)` as a row-major `S × S` slice, for `t < n - 1`.
    pub fn pairwise(&self, t: usize) -> &[f64] {
        let ss = self.num_states * self.num_states;
        &self.pairwise[t * ss..(t + 1) * ss]
    }

    /// Expected transition counts `Σ_t ξ_t(i, j)`, row-major.
    pub fn expected_transitions(&self) -> Vec<f64> {
        let ss = self.num_states * self.num_states;
        let mut out = vec![0.0; ss];
        for slice in self.pairwise.chunks_exact(ss) {
            for (o, v) in out.iter_mut().zip(slice) {
                *o += v;
            }
        }
        out
    }

    /// The filtered probabilities at the last time step, `α_{n|n}`.
    pub fn filtered_last(&self) -> &[f64] {
        self.filtered.row(self.filtered.rows() - 1)
    }
}

/// Forward pass in log space. Returns the log-alpha table.
fn forward_log(model: &HmmModel, log_b: &RowMatrix, log_a: &[f64]) -> Result<RowMatrix> {
    let n = log_b.rows();
    let s = model.num_states();
    let mut log_alpha = RowMatrix::zeros(n, s);
    let mut terms = vec![0.0; s];
    for j in 0..s {
        log_alpha.row_mut(0)[j] = model.initial_probs[j].ln() + log_b.get(0, j);
    }
    check_row(log_alpha.row(0), 0)?;
    for t in 1..n {
        for j in 0..s {
            for i in 0..s {
                terms[i] = log_alpha.get(t - 1, i) + log_a[i * s + j];
            }
            let v = log_sum_exp(&terms) + log_b.get(t, j);
            log_alpha.row_mut(t)[j] = v;
        }
        check_row(log_alpha.row(t), t)?;
    }
    Ok(log_alpha)
}

fn check_row(row: &[f64], t: usize) -> Result<()> {
    if row.iter().all(|v| *v == f64::NEG_INFINITY || v.is_nan()) {
        return Err(Error::NumericalUnderflow { t });
    }
    Ok(())
}

fn normalize_exp(log_row: &[f64], out: &mut [f64]) {
    let norm = log_sum_exp(log_row);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(log_row) {
        *o = (v - norm).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Filtered probabilities only (forward pass), cheaper than a full smoothing pass.
pub fn filter(model: &HmmModel, obs: &ObservationMatrix) -> Result<(f64, RowMatrix)> {
    let log_b = log_emission_table(model, obs)?;
    let log_a = ln_matrix(&model.transition);
    let log_alpha = forward_log(model, &log_b, &log_a)?;
    let n = obs.len();
    let mut filtered = RowMatrix::zeros(n, model.num_states());
    for t in 0..n {
        normalize_exp(log_alpha.row(t), filtered.row_mut(t));
    }
    Ok((log_sum_exp(log_alpha.row(n - 1)), filtered))
}

/// Log-space forward-backward smoothing.
pub fn forward_backward(model: &HmmModel, obs: &ObservationMatrix) -> Result<PosteriorResult> {
    let log_b = log_emission_table(model, obs)?;
    let log_a = ln_matrix(&model.transition);
    let s = model.num_states();
    let n = obs.len();
    let log_alpha = forward_log(model, &log_b, &log_a)?;
    let log_likelihood = log_sum_exp(log_alpha.row(n - 1));

    let mut log_beta = RowMatrix::zeros(n, s);
    let mut terms = vec![0.0; s];
    for t in (0..n - 1).rev() {
        for i in 0..s {
            for j in 0..s {
                terms[j] = log_a[i * s + j] + log_b.get(t + 1, j) + log_beta.get(t + 1, j);
            }
            log_beta.row_mut(t)[i] = log_sum_exp(&terms);
        }
    }

    let mut filtered = RowMatrix::zeros(n, s);
    let mut smoothed = RowMatrix::zeros(n, s);
    for t in 0..n {
        normalize_exp(log_alpha.row(t), filtered.row_mut(t));
        for i in 0..s {
            terms[i] = log_alpha.get(t, i) + log_beta.get(t, i);
        }
        normalize_exp(&terms, smoothed.row_mut(t));
    }

    let ss = s * s;
    let mut pairwise = vec![0.0; n.saturating_sub(1) * ss];
    let mut log_xi = vec![0.0; ss];
    for t in 0..n.saturating_sub(1) {
        for i in 0..s {
            let a = log_alpha.get(t, i);
            for j in 0..s {
                log_xi[i * s + j] = a + log_a[i * s + j] + log_b.get(t + 1, j) + log_beta.get(t + 1, j);
            }
        }
        normalize_exp(&log_xi, &mut pairwise[t * ss..(t + 1) * ss]);
    }

    Ok(PosteriorResult {
        log_likelihood,
        filtered,
        smoothed,
        num_states: s,
        pairwise,
    })
}

/// Most probable state path and its joint log probability `log P(x, z | Λ)`.
/// Ties go to the lowest state index.
pub fn viterbi_with_score(model: &HmmModel, obs: &ObservationMatrix) -> Result<(Vec<usize>, f64)> {
    let log_b = log_emission_table(model, obs)?;
    let log_a = ln_matrix(&model.transition);
    let s = model.num_states();
    let n = obs.len();
    let mut delta: Vec<f64> = (0..s)
        .map(|j| model.initial_probs[j].ln() + log_b.get(0, j))
        .collect();
    check_row(&delta, 0)?;
    let mut next = vec![0.0; s];
    let mut back = vec![0usize; n * s];
    for t in 1..n {
        for j in 0..s {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, d) in delta.iter().enumerate() {
                let v = d + log_a[i * s + j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + log_b.get(t, j);
            back[t * s + j] = arg;
        }
        check_row(&next, t)?;
        std::mem::swap(&mut delta, &mut next);
    }
    let (mut state, mut score) = (0, f64::NEG_INFINITY);
    for (j, &d) in delta.iter().enumerate() {
        if d > score {
            score = d;
            state = j;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = state;
    for t in (1..n).rev() {
        state = back[t * s + state];
        path[t - 1] = state;
    }
    Ok((path, score))
}

pub fn viterbi(model: &HmmModel, obs: &ObservationMatrix) -> Result<Vec<usize>> {
    viterbi_with_score(model, obs).map(|(p, _)| p)
}

/// `log P(x, z | Λ)` of a given state path.
pub fn path_log_prob(model: &HmmModel, obs: &ObservationMatrix, path: &[usize]) -> Result<f64> {
    if path.len() != obs.len() {
        return Err(Error::DimensionMismatch {
            expected: obs.len(),
            actual: path.len(),
        });
    }
    if let Some(&bad) = path.iter().find(|&&z| z >= model.num_states()) {
        return Err(Error::invalid(format!("state {bad} out of range")));
    }
    let log_b = log_emission_table(model, obs)?;
    let mut score = model.initial_probs[path[0]].ln() + log_b.get(0, path[0]);
    for t in 1..path.len() {
        score += model.transition[(path[t - 1], path[t])].ln() + log_b.get(t, path[t]);
    }
    Ok(score)
}

/// `α · A^h`. `h = 0` returns `α` unchanged.
pub fn forecast_state_probs(
    transition: &DMatrix<f64>,
    filtered_last: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    let s = transition.nrows();
    if transition.ncols() != s {
        return Err(Error::invalid("transition matrix must be square"));
    }
    if filtered_last.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            actual: filtered_last.len(),
        });
    }
    let sum: f64 = filtered_last.iter().sum();
    if (sum - 1.0).abs() > 1e-10 || filtered_last.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid(format!(
            "state probabilities must be a distribution (sum = {sum})"
        )));
    }
    let mut alpha = filtered_last.to_vec();
    let mut next = vec![0.0; s];
    for _ in 0..horizon {
        for (j, n) in next.iter_mut().enumerate() {
            *n = (0..s).map(|i| alpha[i] * transition[(i, j)]).sum();
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    Ok(alpha)
}
