//! Baum-Welch EM with conjugate MAP priors and seeded multi-restart fitting.
//!
//! The prior `G(Λ)` is a symmetric Dirichlet on `π`, a Dirichlet on every row
//! of `A` (optionally with extra diagonal mass), and a shrinkage prior on each
//! state's mean and covariance toward the global sample moments:
//!
//! ```text
//! log G = (a0 - 1) Σ log π_i + Σ_ij (a - 1 + b·[i = j]) log A_ij
//!       - Σ_j [ κ/2 (μ_j - m)ᵀ Σ_j⁻¹ (μ_j - m) + ν/2 (log|Σ_j| + tr(Σ_j⁻¹ Ψ)) ]
//! ```
//!
//! The M-step maximizes `Q + log G` in closed form, so the MAP objective is
//! nondecreasing across iterations.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{floor_covariance, forward_backward, HmmModel, ObservationMatrix, PosteriorResult};
use crate::par::{self, Execution};

/// Minimum total responsibility for a state to be estimable without prior mass.
pub const MIN_RESPONSIBILITY: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Symmetric Dirichlet concentration on the initial distribution (≥ 1).
    pub dirichlet_initial: f64,
    /// Symmetric Dirichlet concentration on each transition row (≥ 1).
    pub dirichlet_transition: f64,
    /// Extra concentration on the diagonal of the transition prior (≥ 0).
    pub sticky_bonus: f64,
    /// Pseudo-count pulling state means toward the global mean (≥ 0).
    pub mean_prior_strength: f64,
    /// Pseudo-count pulling state covariances toward the global covariance (≥ 0).
    pub cov_prior_strength: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            dirichlet_initial: 1.0,
            dirichlet_transition: 1.0,
            sticky_bonus: 0.0,
            mean_prior_strength: 0.0,
            cov_prior_strength: 0.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dirichlet_initial >= 1.0
            && self.dirichlet_transition >= 1.0
            && self.sticky_bonus >= 0.0
            && self.mean_prior_strength >= 0.0
            && self.cov_prior_strength >= 0.0
            && [
                self.dirichlet_initial,
                self.dirichlet_transition,
                self.sticky_bonus,
                self.mean_prior_strength,
                self.cov_prior_strength,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("prior configuration out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Convergence threshold on `|obj_k - obj_{k-1}| / (1 + |obj_k|)`.
    pub tolerance: f64,
    pub num_restarts: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-6,
            num_restarts: 20,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.num_restarts == 0 || !(self.tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "max_iterations and num_restarts must be >= 1 and tolerance > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: HmmModel,
    /// `log P(x|Λ) + log G(Λ)` for every model evaluated by the winning run.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub restart_index: usize,
    /// Log-likelihood of the returned model on the training data.
    pub log_likelihood: f64,
    /// Log-likelihood on held-out data, if the caller evaluated it.
    pub validation_log_likelihood: Option<f64>,
    /// One line per restart that failed.
    pub failed_restarts: Vec<String>,
}

impl FitReport {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    /// Records the log-likelihood of the fitted model on held-out observations.
    pub fn evaluate_validation(&mut self, obs: &ObservationMatrix) -> Result<f64> {
        let ll = forward_backward(&self.model, obs)?.log_likelihood;
        self.validation_log_likelihood = Some(ll);
        Ok(ll)
    }
}

/// Global sample moments the mean/covariance priors shrink toward.
#[derive(Debug, Clone)]
pub struct PriorTargets {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl PriorTargets {
    pub fn from_observations(obs: &ObservationMatrix) -> Self {
        let d = obs.dim();
        let n = obs.len() as f64;
        let mut mean = DVector::zeros(d);
        for t in 0..obs.len() {
            for (k, x) in obs.row(t).iter().enumerate() {
                mean[k] += x;
            }
        }
        mean /= n;
        let mut cov = DMatrix::zeros(d, d);
        for t in 0..obs.len() {
            let x = obs.row(t);
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += (x[a] - mean[a]) * (x[b] - mean[b]);
                }
            }
        }
        cov /= n;
        Self {
            mean,
            covariance: floor_covariance(&cov),
        }
    }
}

/// E-step: the posterior sufficient statistics under `model`.
pub fn e_step(model: &HmmModel, obs: &ObservationMatrix) -> Result<PosteriorResult> {
    forward_backward(model, obs)
}

/// M-step under the MAP prior, with shrinkage targets taken from `obs`.
pub fn m_step_map(stats: &PosteriorResult, obs: &ObservationMatrix, prior: &PriorConfig) -> Result<HmmModel> {
    prior.validate()?;
    m_step_with_targets(stats, obs, prior, &PriorTargets::from_observations(obs))
}

pub fn m_step_with_targets(
    stats: &PosteriorResult,
    obs: &ObservationMatrix,
    prior: &PriorConfig,
    targets: &PriorTargets,
) -> Result<HmmModel> {
    let s = stats.num_states();
    let n = obs.len();
    let d = obs.dim();
    if stats.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: stats.len(),
        });
    }

    let a0 = prior.dirichlet_initial - 1.0;
    let pi_den = 1.0 + s as f64 * a0;
    let initial = DVector::from_iterator(s, stats.smoothed.row(0).iter().map(|g| (g + a0) / pi_den));

    let counts = stats.expected_transitions();
    let a_extra = prior.dirichlet_transition - 1.0;
    let mut transition = DMatrix::zeros(s, s);
    for i in 0..s {
        let row: Vec<f64> = (0..s)
            .map(|j| counts[i * s + j] + a_extra + if i == j { prior.sticky_bonus } else { 0.0 })
            .collect();
        let total: f64 = row.iter().sum();
        for j in 0..s {
            transition[(i, j)] = if total > 0.0 { row[j] / total } else { 1.0 / s as f64 };
        }
    }

    let kappa = prior.mean_prior_strength;
    let nu = prior.cov_prior_strength;
    let mut weights = vec![0.0; s];
    let mut sums = vec![DVector::<f64>::zeros(d); s];
    for t in 0..n {
        let g = stats.smoothed.row(t);
        let x = obs.row(t);
        for j in 0..s {
            weights[j] += g[j];
            for k in 0..d {
                sums[j][k] += g[j] * x[k];
            }
        }
    }

    let mut means = Vec::with_capacity(s);
    for j in 0..s {
        if weights[j] < MIN_RESPONSIBILITY && (kappa == 0.0 || nu == 0.0) {
            return Err(Error::DegenerateState {
                state: j,
                responsibility: weights[j],
            });
        }
        means.push((&sums[j] + &targets.mean * kappa) / (weights[j] + kappa));
    }

    let mut scatters = vec![DMatrix::<f64>::zeros(d, d); s];
    let mut dev = vec![0.0; d];
    for t in 0..n {
        let g = stats.smoothed.row(t);
        let x = obs.row(t);
        for j in 0..s {
            for k in 0..d {
                dev[k] = x[k] - means[j][k];
            }
            let sc = &mut scatters[j];
            for a in 0..d {
                let ga = g[j] * dev[a];
                for b in 0..=a {
                    sc[(a, b)] += ga * dev[b];
                }
            }
        }
    }
    let mut covariances = Vec::with_capacity(s);
    for j in 0..s {
        let mut sc = scatters[j].clone();
        for a in 0..d {
            for b in 0..a {
                sc[(b, a)] = sc[(a, b)];
            }
        }
        if kappa > 0.0 {
            let shift = &means[j] - &targets.mean;
            sc += &shift * shift.transpose() * kappa;
        }
        if nu > 0.0 {
            sc += &targets.covariance * nu;
        }
        covariances.push(floor_covariance(&(sc / (weights[j] + nu))));
    }

    HmmModel::new(initial, transition, means, covariances)
}

fn x_log_y(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `log G(Λ)` up to an additive constant.
pub fn log_prior(model: &HmmModel, prior: &PriorConfig, targets: &PriorTargets) -> f64 {
    let s = model.num_states();
    let mut total = 0.0;
    let a0 = prior.dirichlet_initial - 1.0;
    for p in model.initial_probs().iter() {
        total += x_log_y(a0, *p);
    }
    let a = prior.dirichlet_transition - 1.0;
    let tm = model.transition_matrix();
    for i in 0..s {
        for j in 0..s {
            let c = a + if i == j { prior.sticky_bonus } else { 0.0 };
            total += x_log_y(c, tm[(i, j)]);
        }
    }
    let (kappa, nu) = (prior.mean_prior_strength, prior.cov_prior_strength);
    if kappa > 0.0 || nu > 0.0 {
        for (mu, cov) in model.state_means().iter().zip(model.state_covariances()) {
            let chol = match cov.clone().cholesky() {
                Some(c) => c,
                None => return f64::NEG_INFINITY,
            };
            if kappa > 0.0 {
                let shift = mu - &targets.mean;
                let solved = chol.solve(&shift);
                total -= 0.5 * kappa * shift.dot(&solved);
            }
            if nu > 0.0 {
                let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let trace = chol.solve(&targets.covariance).trace();
                total -= 0.5 * nu * (log_det + trace);
            }
        }
    }
    total
}

/// Outcome of one EM run from one initialization.
#[derive(Debug, Clone)]
struct RunOutcome {
    model: HmmModel,
    trace: Vec<f64>,
    converged: bool,
    log_likelihood: f64,
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / (1.0 + cur.abs())
}

/// Runs EM from `initial` until convergence or the iteration cap.
pub fn run_em(
    initial: HmmModel,
    obs: &ObservationMatrix,
    prior: &PriorConfig,
    targets: &PriorTargets,
    config: &TrainConfig,
) -> Result<(HmmModel, Vec<f64>, bool, f64)> {
    let r = em_loop(initial, obs, prior, targets, config)?;
    Ok((r.model, r.trace, r.converged, r.log_likelihood))
}

fn em_loop(
    initial: HmmModel,
    obs: &ObservationMatrix,
    prior: &PriorConfig,
    targets: &PriorTargets,
    config: &TrainConfig,
) -> Result<RunOutcome> {
    let mut model = initial;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut log_likelihood;
    let mut it = 0;
    loop {
        let post = e_step(&model, obs)?;
        log_likelihood = post.log_likelihood;
        let objective = post.log_likelihood + log_prior(&model, prior, targets);
        if !objective.is_finite() {
            return Err(Error::invalid(format!("objective became non-finite at iteration {it}")));
        }
        if let Some(&prev) = trace.last() {
            if relative_change(prev, objective) < config.tolerance {
                trace.push(objective);
                converged = true;
                break;
            }
        }
        trace.push(objective);
        it += 1;
        if it >= config.max_iterations {
            break;
        }
        model = m_step_with_targets(&post, obs, prior, targets)?;
    }
    Ok(RunOutcome {
        model,
        trace,
        converged,
        log_likelihood,
    })
}

fn mixed_distribution(rng: &mut ChaCha8Rng, s: usize) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
    let noise: Vec<f64> = (0..s).map(|_| gamma.sample(rng)).collect();
    let total: f64 = noise.iter().sum();
    let mut p: Vec<f64> = noise
        .iter()
        .map(|v| 0.8 / s as f64 + 0.2 * v / total)
        .collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

/// Random initialization for restart `restart` under base `seed`.
///
/// Means are distinct observation rows plus small jitter, covariances equal
/// the global covariance, and `π`/`A` rows are uniform mixed with Dirichlet noise.
pub fn random_initial_model(
    obs: &ObservationMatrix,
    num_states: usize,
    targets: &PriorTargets,
    seed: u64,
    restart: usize,
) -> Result<HmmModel> {
    if obs.len() < num_states {
        return Err(Error::InsufficientData {
            needed: num_states,
            got: obs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let d = obs.dim();
    let rows = sample(&mut rng, obs.len(), num_states);
    let scales: Vec<f64> = (0..d).map(|k| 0.01 * targets.covariance[(k, k)].sqrt()).collect();
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal parameters");
    let means = rows
        .iter()
        .map(|r| {
            let x = obs.row(r);
            DVector::from_iterator(d, (0..d).map(|k| x[k] + scales[k] * std_normal.sample(&mut rng)))
        })
        .collect();
    let initial = DVector::from_vec(mixed_distribution(&mut rng, num_states));
    let mut transition = DMatrix::zeros(num_states, num_states);
    for i in 0..num_states {
        for (j, p) in mixed_distribution(&mut rng, num_states).into_iter().enumerate() {
            transition[(i, j)] = p;
        }
    }
    HmmModel::new(
        initial,
        transition,
        means,
        vec![targets.covariance.clone(); num_states],
    )
}

/// Order putting states by descending first mean coordinate (ties by index).
pub fn order_by_first_mean(model: &HmmModel) -> Vec<usize> {
    let mut order: Vec<usize> = (0..model.num_states()).collect();
    let means = model.state_means();
    order.sort_by(|&a, &b| means[b][0].total_cmp(&means[a][0]).then(a.cmp(&b)));
    order
}

/// Fits an `num_states`-state model with `num_restarts` seeded EM runs and
/// keeps the run with the highest final MAP objective (ties: lowest restart
/// index). States of the winner are ordered by descending first mean
/// coordinate.
pub fn fit(
    obs: &ObservationMatrix,
    num_states: usize,
    prior: &PriorConfig,
    config: &TrainConfig,
) -> Result<FitReport> {
    prior.validate()?;
    config.validate()?;
    if num_states == 0 {
        return Err(Error::invalid("num_states must be at least 1"));
    }
    if obs.len() <= num_states {
        return Err(Error::InsufficientData {
            needed: num_states,
            got: obs.len(),
        });
    }
    let targets = PriorTargets::from_observations(obs);
    let runs = par::map_range(config.execution, config.num_restarts, |r| {
        random_initial_model(obs, num_states, &targets, config.seed, r)
            .and_then(|init| em_loop(init, obs, prior, &targets, config))
    });

    let mut best: Option<(usize, RunOutcome)> = None;
    let mut failed = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(out) => {
                let obj = *out.trace.last().expect("trace is never empty");
                let better = match &best {
                    None => true,
                    Some((_, b)) => obj > *b.trace.last().expect("trace is never empty"),
                };
                if better {
                    best = Some((r, out));
                }
            }
            Err(e) => failed.push(format!("restart {r}: {e}")),
        }
    }
    let (restart_index, run) = best.ok_or_else(|| Error::TrainingFailed {
        diagnostics: failed.clone(),
    })?;
    let model = run.model.permuted(&order_by_first_mean(&run.model))?;
    Ok(FitReport {
        model,
        objective_trace: run.trace,
        converged: run.converged,
        restart_index,
        log_likelihood: run.log_likelihood,
        validation_log_likelihood: None,
        failed_restarts: failed,
    })
}
