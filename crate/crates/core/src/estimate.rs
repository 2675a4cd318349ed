//! Outcome sampling, maximum-likelihood estimation on the chart, the two-step
//! adaptive protocol and Monte-Carlo MSE experiments.

use std::f64::consts::FRAC_PI_2;

use argmin::core::{CostFunction, Executor, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Beta;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{self, DEFAULT_DENSE_CAP};
use crate::designs::{mub_prime, sample_approx_design, sic_povm, VectorSet};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, rng_stream, CMatrix, CVector, RMatrix};
use crate::measurement::{
    self, locc_protocol, optimal_povm, random_measurement_pair, DensePovm, OutcomeStatistics, Povm,
};
use crate::qfi::optimal_cn;
use crate::states::{from_approx_design, from_design, product_baseline, StructuredState};
use crate::sud::Chart;

/// Stream indices reserved for objects shared by all trials of an experiment.
const APPROX_DESIGN_STREAM: u64 = u64::MAX;
const PHASE_ONE_BASIS_STREAM: u64 = u64::MAX - 1;

/// Penalty returned by the MLE cost outside the feasible region.
const INFEASIBLE: f64 = 1e100;

/// `N` i.i.d. outcome labels drawn from `p(θ)`.
pub fn sample_outcomes<R: Rng + ?Sized>(
    povm: &Povm,
    state: &StructuredState,
    chart: &Chart,
    theta: &[f64],
    repetitions: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if repetitions == 0 {
        return Err(Error::Validation("need at least one repetition".into()));
    }
    let dist = measurement::outcome_probabilities(povm, state, chart, theta)?;
    let sampler = WeightedIndex::new(&dist.probabilities)
        .map_err(|e| Error::Validation(format!("outcome distribution is not sampleable: {e}")))?;
    Ok((0..repetitions).map(|_| sampler.sample(rng)).collect())
}

/// Outcomes of measuring `ψ(θ)` in a fresh Haar-random basis each time.
///
/// Only the observed basis vector enters the likelihood, and its law has
/// density `D|⟨e|ψ⟩|²` with respect to the uniform measure, so `|⟨e|ψ⟩|²` is
/// drawn from Beta(2, D-1) and the orthogonal part uniformly.
pub fn sample_random_basis_outcomes<R: Rng + ?Sized>(
    state: &StructuredState,
    chart: &Chart,
    theta: &[f64],
    repetitions: usize,
    cap: usize,
    rng: &mut R,
) -> Result<CMatrix> {
    let psi = dense::model_at(state, chart, theta, cap)?.psi;
    let dim = psi.len();
    if dim < 2 {
        return Err(Error::Validation("random basis needs dimension >= 2".into()));
    }
    let beta = Beta::new(2.0, (dim - 1) as f64).map_err(|e| Error::Validation(e.to_string()))?;
    let mut out = CMatrix::zeros(dim, repetitions);
    for k in 0..repetitions {
        let t: f64 = beta.sample(rng);
        let phase = c64(0.0, rng.random_range(0.0..std::f64::consts::TAU)).exp();
        let mut w = linalg::random_unit_vector(dim, rng);
        w -= &psi * psi.dotc(&w);
        let w = w.normalize();
        let e = &psi * (phase * t.sqrt()) + w * c64((1.0 - t).sqrt(), 0.0);
        out.set_column(k, &e);
    }
    Ok(out)
}

/// Data collected with one measurement on one input state.
#[derive(Debug, Clone)]
pub enum DataBlock {
    Counts {
        state: StructuredState,
        povm: Povm,
        counts: Vec<u64>,
    },
    /// Observed vectors (columns) from random-basis measurements.
    RankOne {
        state: StructuredState,
        vectors: CMatrix,
        cap: usize,
    },
}

impl DataBlock {
    pub fn from_outcomes(state: StructuredState, povm: Povm, outcomes: &[usize]) -> Self {
        let mut counts = vec![0u64; povm.n_outcomes()];
        for &o in outcomes {
            counts[o] += 1;
        }
        DataBlock::Counts { state, povm, counts }
    }

    pub fn repetitions(&self) -> u64 {
        match self {
            DataBlock::Counts { counts, .. } => counts.iter().sum(),
            DataBlock::RankOne { vectors, .. } => vectors.ncols() as u64,
        }
    }

    fn probabilities(&self, chart: &Chart, theta: &[f64]) -> Result<Vec<f64>> {
        match self {
            DataBlock::Counts { state, povm, .. } => povm.probabilities(state, chart, theta),
            DataBlock::RankOne { state, vectors, cap } => {
                let psi = dense::model_at(state, chart, theta, *cap)?.psi;
                Ok((vectors.adjoint() * psi).iter().map(|a| a.norm_sqr()).collect())
            }
        }
    }

    fn statistics(&self, chart: &Chart, theta: &[f64]) -> Result<OutcomeStatistics> {
        match self {
            DataBlock::Counts { state, povm, .. } => povm.statistics(state, chart, theta),
            DataBlock::RankOne { state, vectors, cap } => {
                let (probs, dprobs) = dense::model_at(state, chart, theta, *cap)?.rank_one_statistics(vectors);
                Ok(OutcomeStatistics { probs, dprobs })
            }
        }
    }

    fn weights(&self) -> Vec<f64> {
        match self {
            DataBlock::Counts { counts, .. } => counts.iter().map(|&c| c as f64).collect(),
            DataBlock::RankOne { vectors, .. } => vec![1.0; vectors.ncols()],
        }
    }
}

/// `Σ count · log p(θ)` up to θ-independent constants; `None` when an
/// observed outcome has zero probability.
pub fn log_likelihood(blocks: &[DataBlock], chart: &Chart, theta: &[f64]) -> Result<Option<f64>> {
    let mut total = 0.0;
    for block in blocks {
        let probs = block.probabilities(chart, theta)?;
        for (p, w) in probs.iter().zip(block.weights()) {
            if w == 0.0 {
                continue;
            }
            if !(*p > 0.0) {
                return Ok(None);
            }
            total += w * p.ln();
        }
    }
    Ok(Some(total))
}

/// Score vector and the outer-product (BHHH) information estimate.
pub fn score(blocks: &[DataBlock], chart: &Chart, theta: &[f64]) -> Result<(Vec<f64>, RMatrix)> {
    let p = chart.n_params();
    let mut grad = vec![0.0; p];
    let mut info = RMatrix::zeros(p, p);
    for block in blocks {
        let stats = block.statistics(chart, theta)?;
        for ((prob, dp), w) in stats.probs.iter().zip(&stats.dprobs).zip(block.weights()) {
            if w == 0.0 || !(*prob > 0.0) {
                continue;
            }
            for a in 0..p {
                let ga = dp[a] / prob;
                grad[a] += w * ga;
                for b in 0..p {
                    info[(a, b)] += w * ga * dp[b] / prob;
                }
            }
        }
    }
    Ok((grad, info))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub max_iters: u64,
    /// Simplex termination threshold on the spread of log-likelihood values.
    pub tolerance: f64,
    pub radius: f64,
    /// Edge length of the initial simplex; `None` scales it as `3/√N`.
    pub initial_step: Option<f64>,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iters: 500,
            tolerance: 1e-8,
            radius: FRAC_PI_2,
            initial_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: u64,
}

struct NegLogLikelihood<'a> {
    blocks: &'a [DataBlock],
    chart: &'a Chart,
    radius: f64,
}

impl CostFunction for NegLogLikelihood<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        if norm(theta) > self.radius {
            return Ok(INFEASIBLE);
        }
        Ok(match log_likelihood(self.blocks, self.chart, theta)? {
            Some(ll) => -ll,
            None => INFEASIBLE,
        })
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Local maximiser of the log-likelihood: Nelder–Mead from `init`, then
/// scoring steps with the BHHH information and backtracking.
pub fn mle(blocks: &[DataBlock], chart: &Chart, init: &[f64], options: &MleOptions) -> Result<MleResult> {
    let p = chart.n_params();
    if init.len() != p {
        return Err(Error::DimensionMismatch(format!("init has {} entries, chart {p}", init.len())));
    }
    let start_ll = log_likelihood(blocks, chart, init)?;
    if start_ll.is_none() || norm(init) > options.radius {
        return Err(Error::Validation("log-likelihood is not finite at the initial point".into()));
    }
    let total: u64 = blocks.iter().map(DataBlock::repetitions).sum();
    let step = options
        .initial_step
        .unwrap_or_else(|| (3.0 / (total.max(1) as f64).sqrt()).clamp(1e-4, 0.3));
    let mut simplex = vec![init.to_vec()];
    for a in 0..p {
        let mut v = init.to_vec();
        v[a] += step;
        simplex.push(v);
    }
    let problem = NegLogLikelihood {
        blocks,
        chart,
        radius: options.radius,
    };
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(options.tolerance)
        .map_err(|e| Error::Validation(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(options.max_iters))
        .run()
        .map_err(|e| Error::NoConvergence(e.to_string()))?;
    let state = res.state();
    let simplex_converged = matches!(
        state.termination_status,
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let iterations = state.iter;
    let mut theta = state
        .best_param
        .clone()
        .ok_or_else(|| Error::NoConvergence("optimizer returned no parameter".into()))?;
    let mut ll = -state.best_cost;

    let (theta_polished, ll_polished, polish_converged) = polish(blocks, chart, theta.clone(), ll, options)?;
    if ll_polished >= ll {
        theta = theta_polished;
        ll = ll_polished;
    }
    let converged =
        (simplex_converged || polish_converged) && ll.is_finite() && ll > -INFEASIBLE && norm(&theta) <= options.radius;
    Ok(MleResult {
        theta,
        log_likelihood: ll,
        converged,
        iterations,
    })
}

fn polish(
    blocks: &[DataBlock],
    chart: &Chart,
    mut theta: Vec<f64>,
    mut ll: f64,
    options: &MleOptions,
) -> Result<(Vec<f64>, f64, bool)> {
    for _ in 0..25 {
        let (grad, info) = score(blocks, chart, &theta)?;
        let Ok(inv) = linalg::inverse_spd(&info) else {
            return Ok((theta, ll, false));
        };
        let g = nalgebra::DVector::from_vec(grad);
        let step = &inv * &g;
        let mut scale = 1.0;
        let mut improved = None;
        for _ in 0..30 {
            let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            if norm(&candidate) <= options.radius {
                if let Some(c_ll) = log_likelihood(blocks, chart, &candidate)? {
                    if c_ll >= ll {
                        improved = Some((candidate, c_ll));
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        match improved {
            Some((candidate, c_ll)) => {
                let gain = c_ll - ll;
                theta = candidate;
                ll = c_ll;
                if gain < options.tolerance {
                    return Ok((theta, ll, true));
                }
            }
            None => {
                // No ascent along the scoring direction: a stationary point up to rounding.
                return Ok((theta, ll, g.dot(&step) < options.tolerance.sqrt()));
            }
        }
    }
    Ok((theta, ll, false))
}

/// Phase-one measurement: an equal mixture of a fixed full-space basis `B`
/// and its partner `YB` built at the chart origin.
pub fn phase_one_measurement(state: &StructuredState, chart: &Chart, basis: &CMatrix, cap: usize) -> Result<Povm> {
    let origin = vec![0.0; chart.n_params()];
    let pair = random_measurement_pair(basis, state, chart, &origin, cap)?;
    Ok(Povm::Dense {
        povm: DensePovm::mixture(&[(0.5, &pair.first), (0.5, &pair.second)])?,
        cap,
    })
}

#[derive(Debug, Clone)]
pub struct TwoStepResult {
    pub phase_one_repetitions: usize,
    pub rough: Vec<f64>,
    pub estimate: MleResult,
    pub phase_one_outcomes: Vec<usize>,
    pub phase_two_outcomes: Vec<usize>,
    pub warnings: Vec<String>,
}

/// `⌈√N⌉`.
pub fn phase_one_budget(repetitions: usize) -> usize {
    let mut k = (repetitions as f64).sqrt().ceil() as usize;
    while k > 0 && (k - 1) * (k - 1) >= repetitions {
        k -= 1;
    }
    while k * k < repetitions {
        k += 1;
    }
    k
}

/// `⌈√N⌉` repetitions with `phase_one` give a rough estimate θ̂₁ (multi-start
/// MLE); the attaining POVM built at θ̂₁ is used for the rest, and the final
/// estimate maximises the joint likelihood.
#[allow(clippy::too_many_arguments)]
pub fn two_step_adaptive<R: Rng + ?Sized>(
    state: &StructuredState,
    chart: &Chart,
    theta_true: &[f64],
    repetitions: usize,
    phase_one: &Povm,
    options: &MleOptions,
    rng: &mut R,
) -> Result<TwoStepResult> {
    let n1 = phase_one_budget(repetitions);
    if n1 >= repetitions {
        return Err(Error::Validation(format!(
            "N = {repetitions} leaves no repetitions for the second phase"
        )));
    }
    let p = chart.n_params();
    let mut warnings = Vec::new();
    let out1 = sample_outcomes(phase_one, state, chart, theta_true, n1, rng)?;
    let block1 = DataBlock::from_outcomes(state.clone(), phase_one.clone(), &out1);

    let rough_options = MleOptions {
        initial_step: Some(0.25),
        ..*options
    };
    let mut starts = vec![vec![0.0; p]];
    for _ in 0..8 {
        let dir = linalg::random_unit_vector(p, rng);
        let r = options.radius * 0.5 * rng.random::<f64>().sqrt();
        starts.push(dir.iter().map(|z| z.re * r * std::f64::consts::SQRT_2).collect());
    }
    let mut local: Vec<MleResult> = starts
        .iter()
        .filter_map(|s| mle(std::slice::from_ref(&block1), chart, s, &rough_options).ok())
        .filter(|r| r.converged && r.theta.iter().all(|x| x.is_finite()))
        .collect();
    local.sort_by(|a, b| b.log_likelihood.total_cmp(&a.log_likelihood));
    let rough = match local.first() {
        Some(res) => res.theta.clone(),
        None => {
            warnings.push("phase-one estimate degenerate; falling back to the chart origin".into());
            vec![0.0; p]
        }
    };

    let povm2 = Povm::Optimal(optimal_povm(state, chart, &rough)?);
    let out2 = sample_outcomes(&povm2, state, chart, theta_true, repetitions - n1, rng)?;
    let block2 = DataBlock::from_outcomes(state.clone(), povm2, &out2);
    let blocks = [block1, block2];

    // The phase-one likelihood can be multimodal, so the joint fit is started
    // from each of its distinct local maxima as well as from θ̂₁.
    let mut candidates = vec![rough.clone()];
    for r in &local {
        if candidates.iter().all(|c| norm(&sub(c, &r.theta)) > 1e-3) {
            candidates.push(r.theta.clone());
        }
    }
    let mut estimate: Option<MleResult> = None;
    for c in candidates.iter().take(6) {
        let init = if log_likelihood(&blocks, chart, c)?.is_some() {
            c.clone()
        } else {
            match best_feasible_start(&blocks, chart, c, options) {
                Ok(t) => t,
                Err(_) => continue,
            }
        };
        let Ok(res) = mle(&blocks, chart, &init, options) else {
            continue;
        };
        let better = estimate.as_ref().is_none_or(|e| {
            (res.converged, res.log_likelihood) > (e.converged, e.log_likelihood)
        });
        if better {
            estimate = Some(res);
        }
    }
    let estimate = estimate.ok_or_else(|| Error::NoConvergence("joint likelihood fit failed from every start".into()))?;
    Ok(TwoStepResult {
        phase_one_repetitions: n1,
        rough,
        estimate,
        phase_one_outcomes: out1,
        phase_two_outcomes: out2,
        warnings,
    })
}

/// Nudges `start` until every observed outcome has positive probability.
fn best_feasible_start(blocks: &[DataBlock], chart: &Chart, start: &[f64], options: &MleOptions) -> Result<Vec<f64>> {
    let p = start.len();
    for k in 1..=20 {
        let h = 1e-3 * k as f64;
        for a in 0..p {
            for sign in [1.0, -1.0] {
                let mut t = start.to_vec();
                t[a] += sign * h;
                if norm(&t) <= options.radius && log_likelihood(blocks, chart, &t)?.is_some() {
                    return Ok(t);
                }
            }
        }
    }
    Err(Error::NoConvergence("no feasible starting point near the rough estimate".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFamily {
    Mub,
    Sic,
    /// Haar-sampled approximate design with `m` unitaries.
    Approx { m: usize },
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Attaining POVM built at the true parameter.
    Optimal,
    Locc,
    /// Fresh Haar-random basis of the full space each repetition.
    Random,
    TwoStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n: usize,
    pub repetitions: usize,
    pub trials: usize,
    pub family: StateFamily,
    pub strategy: Strategy,
    pub seed: u64,
    /// Defaults to the chart origin.
    pub true_theta: Option<Vec<f64>>,
    pub dense_cap: usize,
    pub mle: MleOptions,
}

impl ExperimentConfig {
    pub fn new(d: usize, n: usize, repetitions: usize, trials: usize) -> Self {
        ExperimentConfig {
            d,
            n,
            repetitions,
            trials,
            family: StateFamily::Mub,
            strategy: Strategy::Optimal,
            seed: 1,
            true_theta: None,
            dense_cap: DEFAULT_DENSE_CAP,
            mle: MleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Master seed; the trial draws from stream `stream` of it.
    pub seed: u64,
    pub stream: u64,
    pub true_theta: Vec<f64>,
    /// Outcome labels in sampling order. For the random strategy each label
    /// indexes the recorded basis vector of that repetition.
    pub outcomes: Vec<usize>,
    pub estimate: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "repetitions")]
    pub big_n: usize,
    pub trials: usize,
    pub excluded: usize,
    pub mse_matrix: Vec<Vec<f64>>,
    pub trace_mse: f64,
    /// `N · Tr MSE`.
    pub n_times_trace: f64,
    pub bound: f64,
    pub ratio: f64,
}

impl MseReport {
    /// `N · Tr MSE · n(n+d)`, constant in `n` under the `1/(N n²)` law.
    pub fn scaled(&self) -> f64 {
        self.n_times_trace * (self.n * (self.n + self.d)) as f64
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub report: MseReport,
    pub trials: Vec<Trial>,
}

/// The input state of a configuration. Approximate designs are drawn from a
/// stream reserved for shared objects, so all trials see the same state.
pub fn build_state(d: usize, n: usize, family: StateFamily, seed: u64) -> Result<StructuredState> {
    match family {
        StateFamily::Mub => from_design(&VectorSet::from_bases(&mub_prime(d)?)?, n),
        StateFamily::Sic => from_design(&sic_povm(d)?, n),
        StateFamily::Approx { m } => {
            from_approx_design(&sample_approx_design(d, m, &mut rng_stream(seed, APPROX_DESIGN_STREAM))?, n)
        }
        StateFamily::Product => {
            let tau = CVector::from_fn(d, |_, _| c64(1.0 / (d as f64).sqrt(), 0.0));
            product_baseline(&tau, n)
        }
    }
}

fn locc_groups(config: &ExperimentConfig) -> Result<Vec<Vec<CVector>>> {
    match config.family {
        StateFamily::Mub => mub_prime(config.d),
        StateFamily::Approx { m } => Ok(sample_approx_design(config.d, m, &mut rng_stream(config.seed, APPROX_DESIGN_STREAM))?
            .iter()
            .map(|u| (0..u.ncols()).map(|k| u.column(k).into_owned()).collect())
            .collect()),
        other => Err(Error::Unsupported(format!(
            "the LOCC strategy needs a basis-structured input, not {other:?}"
        ))),
    }
}

/// Everything a trial needs that does not depend on its random stream.
enum Plan {
    Optimal { state: StructuredState, povm: Povm },
    Locc {
        branches: Vec<(StructuredState, Povm)>,
        alice: WeightedIndex<f64>,
    },
    Random { state: StructuredState },
    TwoStep { state: StructuredState, phase_one: Povm },
}

fn plan(config: &ExperimentConfig, chart: &Chart, theta: &[f64]) -> Result<Plan> {
    let state = || build_state(config.d, config.n, config.family, config.seed);
    Ok(match config.strategy {
        Strategy::Optimal => {
            let s = state()?;
            let povm = Povm::Optimal(optimal_povm(&s, chart, theta)?);
            Plan::Optimal { state: s, povm }
        }
        Strategy::Locc => {
            let lp = locc_protocol(&locc_groups(config)?, config.n, chart, theta)?;
            let probs: Vec<f64> = lp.branches.iter().map(|b| b.probability).collect();
            let alice = WeightedIndex::new(&probs).map_err(|e| Error::Validation(e.to_string()))?;
            Plan::Locc {
                branches: lp
                    .branches
                    .into_iter()
                    .map(|b| (b.state, Povm::Optimal(b.povm)))
                    .collect(),
                alice,
            }
        }
        Strategy::Random => Plan::Random { state: state()? },
        Strategy::TwoStep => {
            let s = state()?;
            let dim = dense::check_cap(&s, config.dense_cap)?;
            let basis = linalg::haar_unitary(dim, &mut rng_stream(config.seed, PHASE_ONE_BASIS_STREAM));
            let phase_one = phase_one_measurement(&s, chart, &basis, config.dense_cap)?;
            Plan::TwoStep { state: s, phase_one }
        }
    })
}

fn run_trial(config: &ExperimentConfig, chart: &Chart, theta: &[f64], plan: &Plan, index: u64) -> Result<Trial> {
    let mut rng = rng_stream(config.seed, index);
    let big_n = config.repetitions;
    let mut warnings = Vec::new();
    let (outcomes, result) = match plan {
        Plan::Optimal { state, povm } => {
            let out = sample_outcomes(povm, state, chart, theta, big_n, &mut rng)?;
            let block = DataBlock::from_outcomes(state.clone(), povm.clone(), &out);
            (out, mle(&[block], chart, theta, &config.mle))
        }
        Plan::Locc { branches, alice } => {
            let mut labels = Vec::with_capacity(big_n);
            let mut per_branch = vec![Vec::new(); branches.len()];
            let mut offsets = Vec::with_capacity(branches.len());
            let mut acc = 0;
            for (_, povm) in branches {
                offsets.push(acc);
                acc += povm.n_outcomes();
            }
            let draws: Vec<usize> = (0..big_n).map(|_| alice.sample(&mut rng)).collect();
            let mut dists = Vec::with_capacity(branches.len());
            for (s, povm) in branches {
                let dist = measurement::outcome_probabilities(povm, s, chart, theta)?;
                dists.push(WeightedIndex::new(&dist.probabilities).map_err(|e| Error::Validation(e.to_string()))?);
            }
            for b in draws {
                let xi = dists[b].sample(&mut rng);
                per_branch[b].push(xi);
                labels.push(offsets[b] + xi);
            }
            let blocks: Vec<DataBlock> = branches
                .iter()
                .zip(&per_branch)
                .map(|((s, povm), out)| DataBlock::from_outcomes(s.clone(), povm.clone(), out))
                .collect();
            (labels, mle(&blocks, chart, theta, &config.mle))
        }
        Plan::Random { state } => {
            let vectors = sample_random_basis_outcomes(state, chart, theta, big_n, config.dense_cap, &mut rng)?;
            let block = DataBlock::RankOne {
                state: state.clone(),
                vectors,
                cap: config.dense_cap,
            };
            ((0..big_n).collect(), mle(&[block], chart, theta, &config.mle))
        }
        Plan::TwoStep { state, phase_one } => {
            match two_step_adaptive(state, chart, theta, big_n, phase_one, &config.mle, &mut rng) {
                Ok(r) => {
                    warnings = r.warnings;
                    let n1 = phase_one.n_outcomes();
                    let mut labels = r.phase_one_outcomes;
                    labels.extend(r.phase_two_outcomes.iter().map(|x| n1 + x));
                    (labels, Ok(r.estimate))
                }
                Err(e) => (Vec::new(), Err(e)),
            }
        }
    };
    let (estimate, converged) = match result {
        Ok(r) => (r.theta, r.converged),
        Err(e) => {
            warnings.push(format!("estimation failed: {e}"));
            (vec![f64::NAN; chart.n_params()], false)
        }
    };
    Ok(Trial {
        seed: config.seed,
        stream: index,
        true_theta: theta.to_vec(),
        outcomes,
        estimate,
        converged,
        warnings,
    })
}

/// MSE matrix about the truth over converged trials.
pub fn aggregate(config: &ExperimentConfig, trials: &[Trial]) -> Result<MseReport> {
    let p = config.d * config.d - 1;
    let mut mse = RMatrix::zeros(p, p);
    let mut used = 0usize;
    for t in trials.iter().filter(|t| t.converged) {
        let err = nalgebra::DVector::from_iterator(p, t.estimate.iter().zip(&t.true_theta).map(|(a, b)| a - b));
        mse += &err * err.transpose();
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllTrialsFailed(trials.len()));
    }
    mse /= used as f64;
    let trace_mse = mse.trace();
    let n_times_trace = config.repetitions as f64 * trace_mse;
    let bound = optimal_cn(config.d, config.n);
    Ok(MseReport {
        d: config.d,
        n: config.n,
        big_n: config.repetitions,
        trials: used,
        excluded: trials.len() - used,
        mse_matrix: (0..p).map(|i| (0..p).map(|j| mse[(i, j)]).collect()).collect(),
        trace_mse,
        n_times_trace,
        bound,
        ratio: n_times_trace / bound,
    })
}

/// Runs `config.trials` independent trials in parallel; trial `k` draws from
/// stream `k` of the master seed and results are reduced in trial order.
pub fn mse_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if config.repetitions == 0 || config.trials == 0 {
        return Err(Error::Validation("repetitions and trials must be positive".into()));
    }
    let chart = Chart::gell_mann(config.d)?;
    let p = chart.n_params();
    let theta = config.true_theta.clone().unwrap_or_else(|| vec![0.0; p]);
    if theta.len() != p {
        return Err(Error::DimensionMismatch(format!("true_theta needs {p} entries")));
    }
    if norm(&theta) > config.mle.radius {
        return Err(Error::Validation("true_theta lies outside the chart radius".into()));
    }
    let plan = plan(config, &chart, &theta)?;
    let trials = (0..config.trials as u64)
        .into_par_iter()
        .map(|k| run_trial(config, &chart, &theta, &plan, k))
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(config, &trials)?;
    Ok(ExperimentOutcome {
        config: config.clone(),
        report,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mub_setup(n: usize) -> (StructuredState, Chart) {
        (build_state(2, n, StateFamily::Mub, 0).unwrap(), Chart::gell_mann(2).unwrap())
    }

    #[test]
    fn phase_one_budget_is_ceil_sqrt() {
        for (n, k) in [(1, 1), (2, 2), (4, 2), (5, 3), (5000, 71), (10000, 100), (10001, 101)] {
            assert_eq!(phase_one_budget(n), k);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_matches_probabilities() {
        let (s, chart) = mub_setup(2);
        let theta = [0.1, -0.2, 0.05];
        let povm = Povm::Optimal(optimal_povm(&s, &chart, &[0.0; 3]).unwrap());
        let a = sample_outcomes(&povm, &s, &chart, &theta, 20000, &mut rng_stream(3, 0)).unwrap();
        let b = sample_outcomes(&povm, &s, &chart, &theta, 20000, &mut rng_stream(3, 0)).unwrap();
        assert_eq!(a, b);
        let probs = povm.probabilities(&s, &chart, &theta).unwrap();
        for (xi, p) in probs.iter().enumerate() {
            let f = a.iter().filter(|&&o| o == xi).count() as f64 / 20000.0;
            let se = (p * (1.0 - p) / 20000.0).sqrt().max(1e-3);
            assert!((f - p).abs() < 5.0 * se, "outcome {xi}: {f} vs {p}");
        }
    }

    #[test]
    fn residual_outcome_is_never_drawn_at_truth() {
        let (s, chart) = mub_setup(1);
        let povm = Povm::Optimal(optimal_povm(&s, &chart, &[0.0; 3]).unwrap());
        let out = sample_outcomes(&povm, &s, &chart, &[0.0; 3], 5000, &mut rng_stream(1, 0)).unwrap();
        assert!(out.iter().all(|&o| o < 4));
    }

    #[test]
    fn concentrated_data_gives_origin() {
        let (s, chart) = mub_setup(1);
        let povm = Povm::Optimal(optimal_povm(&s, &chart, &[0.0; 3]).unwrap());
        let block = DataBlock::Counts {
            state: s,
            povm,
            counts: vec![250, 250, 250, 250, 0],
        };
        let res = mle(&[block], &chart, &[0.0; 3], &MleOptions::default()).unwrap();
        assert!(res.converged);
        assert!(norm(&res.theta) < 1e-6, "{:?}", res.theta);
    }

    #[test]
    fn random_basis_outcomes_have_tilted_overlap() {
        let (s, chart) = mub_setup(1);
        let v = sample_random_basis_outcomes(&s, &chart, &[0.0; 3], 20000, DEFAULT_DENSE_CAP, &mut rng_stream(2, 0))
            .unwrap();
        let psi = dense::model_at(&s, &chart, &[0.0; 3], DEFAULT_DENSE_CAP).unwrap().psi;
        let dim = psi.len() as f64;
        let mean: f64 = (0..v.ncols()).map(|k| v.column(k).dotc(&psi).norm_sqr()).sum::<f64>() / v.ncols() as f64;
        // E|⟨e|ψ⟩|² under Beta(2, D-1) is 2/(D+1)
        assert!((mean - 2.0 / (dim + 1.0)).abs() < 0.01);
        for k in 0..10 {
            assert!((v.column(k).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_vanishes_at_mle() {
        let (s, chart) = mub_setup(2);
        let theta = [0.05, 0.02, -0.03];
        let povm = Povm::Optimal(optimal_povm(&s, &chart, &theta).unwrap());
        let out = sample_outcomes(&povm, &s, &chart, &theta, 3000, &mut rng_stream(8, 0)).unwrap();
        let blocks = [DataBlock::from_outcomes(s, povm, &out)];
        let res = mle(&blocks, &chart, &theta, &MleOptions::default()).unwrap();
        assert!(res.converged);
        let (g, info) = score(&blocks, &chart, &res.theta).unwrap();
        let scaled = norm(&g) / info.trace().sqrt();
        assert!(scaled < 1e-4, "{scaled}");
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let mut cfg = ExperimentConfig::new(2, 1, 400, 8);
        cfg.seed = 77;
        let a = mse_experiment(&cfg).unwrap();
        let b = mse_experiment(&cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.report.trials + a.report.excluded, 8);
    }

    #[test]
    fn product_input_is_rejected_for_the_attaining_povm() {
        let mut cfg = ExperimentConfig::new(2, 2, 100, 2);
        cfg.family = StateFamily::Product;
        assert!(matches!(mse_experiment(&cfg), Err(Error::NotAttainable(_))));
        cfg.strategy = Strategy::Locc;
        assert!(matches!(mse_experiment(&cfg), Err(Error::Unsupported(_))));
    }
}
