//! Measurements on channel outputs: the QFI-attaining POVM, rank-one dense
//! measurements, classical Fisher information, the random measurement and the
//! LOCC protocol built on Alice's Fourier measurement.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{self, DenseModel};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, rng_stream, CMatrix, CVector, RMatrix, I};
use crate::qfi::{self, FisherMatrix};
use crate::states::{Factor, StructuredState};
use crate::sud::Chart;

/// Outcomes with probability at or below this are dropped from FI sums.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub probabilities: Vec<f64>,
    /// Magnitude of negative mass removed by clipping at zero.
    pub clipped: f64,
}

/// Probabilities with their chart derivatives, `dprobs[ξ][γ] = ∂_γ p_ξ`.
#[derive(Debug, Clone)]
pub struct OutcomeStatistics {
    pub probs: Vec<f64>,
    pub dprobs: Vec<Vec<f64>>,
}

/// `Σ_{ξ: p_ξ > threshold} ∂p_ξ ∂p_ξᵀ / p_ξ`.
pub fn classical_fisher(stats: &OutcomeStatistics) -> FisherMatrix {
    let p = stats.dprobs.first().map_or(0, |r| r.len());
    let mut fi = RMatrix::zeros(p, p);
    for (prob, grad) in stats.probs.iter().zip(&stats.dprobs) {
        if *prob <= SUPPORT_THRESHOLD {
            continue;
        }
        for a in 0..p {
            for b in 0..p {
                fi[(a, b)] += grad[a] * grad[b] / prob;
            }
        }
    }
    FisherMatrix::new(fi)
}

/// Householder reflection sending the last axis to the normalised all-ones
/// vector, so every entry of the last column equals `1/√k`.
pub fn householder_mixer(k: usize) -> RMatrix {
    let u = 1.0 / (k as f64).sqrt();
    let mut v = nalgebra::DVector::from_element(k, -u);
    v[k - 1] += 1.0;
    let vv = v.dot(&v);
    if vv < 1e-300 {
        return RMatrix::identity(k, k);
    }
    RMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / vv)
}

/// The measurement `m_ξ = |m_ξ⟩⟨m_ξ|`, `m_{d²+1} = 1 - Σ_ξ m_ξ`, with
/// `|m_ξ⟩ = Σ_χ o_ξχ |b_χ⟩`, `|b_α⟩ = Σ_β H^{-1/2}_αβ λ_β|ψ(θ)⟩` and
/// `|b_{d²}⟩ = |ψ(θ)⟩`, held in functional form.
#[derive(Debug, Clone)]
pub struct OptimalPovm {
    theta: Vec<f64>,
    unitary: CMatrix,
    tangents: Vec<CMatrix>,
    /// `⟨T_β⟩` on the input state.
    means: Vec<f64>,
    whitening: RMatrix,
    mixer: RMatrix,
    qfi: FisherMatrix,
}

/// Largest `|tr(ρ̄₁[t_α, t_β])|` tolerated by [`optimal_povm`].
pub const ATTAINABILITY_TOL: f64 = 1e-10;

/// Builds the QFI-attaining POVM for `state` at chart point `theta`.
pub fn optimal_povm(state: &StructuredState, chart: &Chart, theta: &[f64]) -> Result<OptimalPovm> {
    check_dims(state, chart)?;
    let tangents = chart.tangent_at(theta)?;
    let rho1 = state.reduced_moments().rho1;
    let defect = qfi::attainability_defect(&rho1, &tangents);
    if defect > ATTAINABILITY_TOL {
        return Err(Error::NotAttainable(defect));
    }
    let qfi = qfi::qfi_pure_state(state, &tangents)?;
    let whitening = whitening_matrix(qfi.matrix())?;
    let means = tangents
        .iter()
        .map(|t| Ok(state.overlap(&[Factor::Sum(t)])?.re))
        .collect::<Result<Vec<_>>>()?;
    let k = whitening.nrows() + 1;
    Ok(OptimalPovm {
        theta: theta.to_vec(),
        unitary: chart.unitary_at(theta)?,
        tangents,
        means,
        whitening,
        mixer: householder_mixer(k),
        qfi,
    })
}

/// `H^{-1/2}` when `H` is nonsingular. Otherwise the rows
/// `v_j / √h_j` over the eigenpairs with `h_j > 1e-10·h_max`, which whiten the
/// nonzero part of `span{λ_β|ψ⟩}`.
pub fn whitening_matrix(h: &RMatrix) -> Result<RMatrix> {
    let (vals, vecs) = linalg::symmetric_eig(h);
    let top = vals.iter().copied().fold(0.0f64, f64::max);
    if !(top > 0.0) {
        return Err(Error::NearSingular(f64::INFINITY));
    }
    let kept: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > 1e-10 * top).collect();
    if kept.len() == vals.len() {
        return linalg::inv_sqrt_spd(h);
    }
    Ok(RMatrix::from_fn(kept.len(), h.ncols(), |a, beta| {
        vecs[(beta, kept[a])] / vals[kept[a]].sqrt()
    }))
}

fn check_dims(state: &StructuredState, chart: &Chart) -> Result<()> {
    if state.dim() != chart.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has d={}, chart d={}",
            state.dim(),
            chart.dim()
        )));
    }
    Ok(())
}

impl OptimalPovm {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn qfi(&self) -> &FisherMatrix {
        &self.qfi
    }

    pub fn mixer(&self) -> &RMatrix {
        &self.mixer
    }

    /// `d² + 1` when the QFI is nonsingular.
    pub fn n_outcomes(&self) -> usize {
        self.whitening.nrows() + 2
    }

    /// `c_χ = ⟨b_χ|ψ(θ')⟩` and, if requested, `∂_γ c_χ`.
    fn amplitudes(
        &self,
        state: &StructuredState,
        chart: &Chart,
        theta: &[f64],
        with_derivatives: bool,
    ) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
        let w = self.unitary.adjoint() * chart.unitary_at(theta)?;
        let p = self.tangents.len();
        let c_last = state.overlap(&[Factor::Power(&w)])?;
        let g: Vec<Complex64> = self
            .tangents
            .iter()
            .map(|t| state.overlap(&[Factor::Sum(t), Factor::Power(&w)]))
            .collect::<Result<_>>()?;
        // ⟨λ_β ψ(θ)|ψ(θ')⟩ = 2i(⟨T_β W⟩ - τ_β ⟨W⟩)
        let lam: Vec<Complex64> = (0..p).map(|b| (g[b] - c_last * self.means[b]) * I * 2.0).collect();
        let r = self.whitening.nrows();
        let mut c: Vec<Complex64> = (0..r)
            .map(|a| (0..p).map(|b| lam[b] * self.whitening[(a, b)]).sum())
            .collect();
        c.push(c_last);

        let mut dc = Vec::new();
        if with_derivatives {
            let minus_i = c64(0.0, -1.0);
            let primes = chart.tangent_at(theta)?;
            dc = vec![vec![c64(0.0, 0.0); primes.len()]; r + 1];
            for (gamma, tp) in primes.iter().enumerate() {
                let d_last = state.overlap(&[Factor::Power(&w), Factor::Sum(tp)])? * minus_i;
                let d_lam: Vec<Complex64> = self
                    .tangents
                    .iter()
                    .enumerate()
                    .map(|(b, t)| {
                        let dg = state.overlap(&[Factor::Sum(t), Factor::Power(&w), Factor::Sum(tp)])? * minus_i;
                        Ok((dg - d_last * self.means[b]) * I * 2.0)
                    })
                    .collect::<Result<_>>()?;
                for a in 0..r {
                    dc[a][gamma] = (0..p).map(|b| d_lam[b] * self.whitening[(a, b)]).sum();
                }
                dc[r][gamma] = d_last;
            }
        }
        Ok((c, dc))
    }

    pub fn statistics(&self, state: &StructuredState, chart: &Chart, theta: &[f64]) -> Result<OutcomeStatistics> {
        self.evaluate(state, chart, theta, true)
    }

    fn evaluate(
        &self,
        state: &StructuredState,
        chart: &Chart,
        theta: &[f64],
        with_derivatives: bool,
    ) -> Result<OutcomeStatistics> {
        let (c, dc) = self.amplitudes(state, chart, theta, with_derivatives)?;
        let k = c.len();
        let p = chart.n_params();
        let mut probs = Vec::with_capacity(k + 1);
        let mut dprobs = Vec::with_capacity(k + 1);
        let mut residual_grad = vec![0.0; p];
        for xi in 0..k {
            let a: Complex64 = (0..k).map(|chi| c[chi] * self.mixer[(xi, chi)]).sum();
            probs.push(a.norm_sqr());
            if with_derivatives {
                let grad: Vec<f64> = (0..p)
                    .map(|gamma| {
                        let da: Complex64 = (0..k).map(|chi| dc[chi][gamma] * self.mixer[(xi, chi)]).sum();
                        2.0 * (a.conj() * da).re
                    })
                    .collect();
                for (r, g) in residual_grad.iter_mut().zip(&grad) {
                    *r -= g;
                }
                dprobs.push(grad);
            }
        }
        probs.push(1.0 - probs.iter().sum::<f64>());
        if with_derivatives {
            dprobs.push(residual_grad);
        }
        Ok(OutcomeStatistics { probs, dprobs })
    }

    /// Gram matrix of `{|b_χ⟩}` evaluated through the overlap engine.
    pub fn gram(&self, state: &StructuredState) -> Result<CMatrix> {
        let p = self.tangents.len();
        let r = self.whitening.nrows();
        let l = qfi::l_matrix(state, &self.tangents)?;
        let k = self.whitening.map(|x| c64(x, 0.0));
        let block = &k * l * k.transpose();
        let mut g = CMatrix::zeros(r + 1, r + 1);
        g.view_mut((0, 0), (r, r)).copy_from(&block);
        // ⟨ψ|λ_β ψ⟩ = -2i(⟨T_β⟩ - τ_β)
        let psi_lam: Vec<Complex64> = self
            .tangents
            .iter()
            .zip(&self.means)
            .map(|(t, m)| Ok((state.overlap(&[Factor::Sum(t)])? - m) * c64(0.0, -2.0)))
            .collect::<Result<_>>()?;
        for a in 0..r {
            let entry: Complex64 = (0..p).map(|b| psi_lam[b] * self.whitening[(a, b)]).sum();
            g[(r, a)] = entry;
            g[(a, r)] = entry.conj();
        }
        g[(r, r)] = c64(state.norm_sqr(), 0.0);
        Ok(g)
    }

    /// Full-space effect vectors `|m_ξ⟩` (columns), for audit and oracle use.
    pub fn dense_vectors(&self, state: &StructuredState, chart: &Chart, cap: usize) -> Result<CMatrix> {
        let model = dense::model_at(state, chart, &self.theta, cap)?;
        let slds = model.sld_vectors();
        let r = self.whitening.nrows();
        let dim = model.psi.len();
        let mut b = CMatrix::zeros(dim, r + 1);
        for a in 0..r {
            let mut col = CVector::zeros(dim);
            for (beta, l) in slds.iter().enumerate() {
                col += l * c64(self.whitening[(a, beta)], 0.0);
            }
            b.set_column(a, &col);
        }
        b.set_column(r, &model.psi);
        Ok(b * self.mixer.transpose().map(|x| c64(x, 0.0)))
    }
}

/// Rank-one measurement on the full space: effects `w_k |e_k⟩⟨e_k|`.
#[derive(Debug, Clone)]
pub struct DensePovm {
    vectors: CMatrix,
    weights: Vec<f64>,
}

impl DensePovm {
    /// Projective measurement in the orthonormal columns of `basis`.
    pub fn basis(basis: CMatrix) -> Self {
        let k = basis.ncols();
        DensePovm {
            vectors: basis,
            weights: vec![1.0; k],
        }
    }

    /// Runs each component measurement with the given probability.
    pub fn mixture(parts: &[(f64, &DensePovm)]) -> Result<Self> {
        let dim = parts
            .first()
            .map(|(_, p)| p.vectors.nrows())
            .ok_or_else(|| Error::Validation("empty mixture".into()))?;
        let total: usize = parts.iter().map(|(_, p)| p.vectors.ncols()).sum();
        let mut vectors = CMatrix::zeros(dim, total);
        let mut weights = Vec::with_capacity(total);
        let mut col = 0;
        for (w, p) in parts {
            if p.vectors.nrows() != dim {
                return Err(Error::DimensionMismatch("mixture components differ in dimension".into()));
            }
            for k in 0..p.vectors.ncols() {
                vectors.set_column(col, &p.vectors.column(k));
                weights.push(w * p.weights[k]);
                col += 1;
            }
        }
        Ok(DensePovm { vectors, weights })
    }

    pub fn n_outcomes(&self) -> usize {
        self.weights.len()
    }

    pub fn effects(&self) -> Vec<CMatrix> {
        (0..self.n_outcomes())
            .map(|k| {
                let v = self.vectors.column(k).into_owned();
                linalg::outer(&v, &v) * c64(self.weights[k], 0.0)
            })
            .collect()
    }

    /// Operator norm of `Σ effects - 1`.
    pub fn completeness_deficit(&self) -> f64 {
        let dim = self.vectors.nrows();
        let sum = self.effects().into_iter().fold(CMatrix::zeros(dim, dim), |a, e| a + e);
        let diff = sum - linalg::identity(dim);
        linalg::hermitian_eig(&diff)
            .map(|e| e.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(f64::INFINITY)
    }

    pub fn statistics_on(&self, model: &DenseModel) -> OutcomeStatistics {
        let (probs, dprobs) = model.rank_one_statistics(&self.vectors);
        OutcomeStatistics {
            probs: probs.iter().zip(&self.weights).map(|(p, w)| p * w).collect(),
            dprobs: dprobs
                .into_iter()
                .zip(&self.weights)
                .map(|(g, w)| g.into_iter().map(|x| x * w).collect())
                .collect(),
        }
    }

    /// Effects as nested `[re, im]` rows.
    pub fn to_json(&self) -> Vec<Vec<Vec<[f64; 2]>>> {
        self.effects()
            .iter()
            .map(|e| {
                (0..e.nrows())
                    .map(|i| (0..e.ncols()).map(|j| [e[(i, j)].re, e[(i, j)].im]).collect())
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum Povm {
    Optimal(OptimalPovm),
    Dense { povm: DensePovm, cap: usize },
}

impl Povm {
    pub fn n_outcomes(&self) -> usize {
        match self {
            Povm::Optimal(p) => p.n_outcomes(),
            Povm::Dense { povm, .. } => povm.n_outcomes(),
        }
    }

    pub fn statistics(&self, state: &StructuredState, chart: &Chart, theta: &[f64]) -> Result<OutcomeStatistics> {
        match self {
            Povm::Optimal(p) => p.statistics(state, chart, theta),
            Povm::Dense { povm, cap } => Ok(povm.statistics_on(&dense::model_at(state, chart, theta, *cap)?)),
        }
    }

    pub fn probabilities(&self, state: &StructuredState, chart: &Chart, theta: &[f64]) -> Result<Vec<f64>> {
        match self {
            Povm::Optimal(p) => Ok(p.evaluate(state, chart, theta, false)?.probs),
            Povm::Dense { povm, cap } => {
                let omega = dense::to_dense(state, *cap)?;
                let u = dense::lift(
                    &dense::tensor_power(&chart.unitary_at(theta)?, state.copies()),
                    state.ancilla_dim(),
                );
                let psi = u * omega;
                let amps = povm.vectors.adjoint() * psi;
                Ok(amps.iter().zip(&povm.weights).map(|(a, w)| a.norm_sqr() * w).collect())
            }
        }
    }
}

/// `p_ξ(θ')`, with any negative mass clipped and reported.
pub fn outcome_probabilities(
    povm: &Povm,
    state: &StructuredState,
    chart: &Chart,
    theta: &[f64],
) -> Result<OutcomeDistribution> {
    let raw = povm.probabilities(state, chart, theta)?;
    let clipped = raw.iter().filter(|p| **p < 0.0).map(|p| -p).sum();
    Ok(OutcomeDistribution {
        probabilities: raw.into_iter().map(|p| p.max(0.0)).collect(),
        clipped,
    })
}

pub fn fisher_information(povm: &Povm, state: &StructuredState, chart: &Chart, theta: &[f64]) -> Result<FisherMatrix> {
    Ok(classical_fisher(&povm.statistics(state, chart, theta)?))
}

/// Central-difference FI, kept as a cross-check of the analytic derivatives.
pub fn fisher_information_fd(
    povm: &Povm,
    state: &StructuredState,
    chart: &Chart,
    theta: &[f64],
    h: f64,
) -> Result<FisherMatrix> {
    let probs = povm.probabilities(state, chart, theta)?;
    let p = theta.len();
    let mut dprobs = vec![vec![0.0; p]; probs.len()];
    for gamma in 0..p {
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[gamma] += h;
        minus[gamma] -= h;
        let pp = povm.probabilities(state, chart, &plus)?;
        let pm = povm.probabilities(state, chart, &minus)?;
        for xi in 0..probs.len() {
            dprobs[xi][gamma] = (pp[xi] - pm[xi]) / (2.0 * h);
        }
    }
    Ok(classical_fisher(&OutcomeStatistics { probs, dprobs }))
}

/// A basis measurement and its partner conjugated by `Y = 1_R + i 1_L`.
#[derive(Debug, Clone)]
pub struct RandomPair {
    pub first: DensePovm,
    pub second: DensePovm,
    pub y: CMatrix,
}

/// `Y = 1_R + i 1_L` with `L = span{λ_α|ψ⟩}` at `theta`.
pub fn y_operator(model: &DenseModel) -> Result<CMatrix> {
    let slds = model.sld_vectors();
    let dim = model.psi.len();
    let lam = CMatrix::from_columns(&slds);
    let gram = lam.adjoint() * &lam;
    let eig = linalg::hermitian_eig(&((&gram + gram.adjoint()).scale(0.5)))?;
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let mut proj = CMatrix::zeros(dim, dim);
    for (j, &e) in eig.eigenvalues.iter().enumerate() {
        if e > 1e-12 * top.max(1e-300) {
            let q = &lam * eig.eigenvectors.column(j) / c64(e.sqrt(), 0.0);
            proj += linalg::outer(&q, &q);
        }
    }
    let identity = linalg::identity(dim);
    Ok(&identity - &proj + proj * I)
}

pub fn random_measurement_pair(
    basis_choice: &CMatrix,
    state: &StructuredState,
    chart: &Chart,
    theta: &[f64],
    cap: usize,
) -> Result<RandomPair> {
    let model = dense::model_at(state, chart, theta, cap)?;
    if basis_choice.shape() != (model.psi.len(), model.psi.len()) {
        return Err(Error::DimensionMismatch(format!(
            "basis choice is {:?}, full space has dimension {}",
            basis_choice.shape(),
            model.psi.len()
        )));
    }
    let y = y_operator(&model)?;
    Ok(RandomPair {
        first: DensePovm::basis(basis_choice.clone()),
        second: DensePovm::basis(&y * basis_choice),
        y,
    })
}

/// Monte-Carlo FI of measuring in a Haar-random basis of the full space.
#[derive(Debug, Clone)]
pub struct RandomMeasurementFi {
    pub mean: FisherMatrix,
    /// Element-wise standard error of the mean.
    pub standard_error: RMatrix,
    pub draws: usize,
}

pub fn random_measurement_fi(
    state: &StructuredState,
    chart: &Chart,
    theta: &[f64],
    draws: usize,
    seed: u64,
    cap: usize,
) -> Result<RandomMeasurementFi> {
    if draws < 2 {
        return Err(Error::Validation("need at least two draws".into()));
    }
    let model = dense::model_at(state, chart, theta, cap)?;
    let dim = model.psi.len();
    let p = chart.n_params();
    let samples: Vec<RMatrix> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let u = linalg::haar_unitary(dim, &mut rng_stream(seed, i as u64));
            classical_fisher(&DensePovm::basis(u).statistics_on(&model)).into_matrix()
        })
        .collect();
    let k = draws as f64;
    let mean = samples.iter().fold(RMatrix::zeros(p, p), |a, s| a + s) / k;
    let var = samples
        .iter()
        .fold(RMatrix::zeros(p, p), |a, s| {
            let d = s - &mean;
            a + d.component_mul(&d)
        })
        / (k - 1.0);
    Ok(RandomMeasurementFi {
        mean: FisherMatrix::new(mean),
        standard_error: var.map(|v| (v / k).sqrt()),
        draws,
    })
}

/// One branch of the LOCC protocol: Alice's outcome and Bob's measurement.
#[derive(Debug, Clone)]
pub struct LoccBranch {
    pub group: usize,
    pub fourier: usize,
    pub probability: f64,
    pub state: StructuredState,
    pub povm: OptimalPovm,
    pub fi: FisherMatrix,
}

#[derive(Debug, Clone)]
pub struct LoccPlan {
    pub branches: Vec<LoccBranch>,
    pub averaged_fi: FisherMatrix,
}

/// Input state `(1/√(Gd)) Σ_{b,l} |b l⟩ ⊗ |φ^b_l⟩^{⊗n}` for groups of orthonormal bases.
pub fn grouped_input(groups: &[Vec<CVector>], n: usize) -> Result<StructuredState> {
    let d = groups
        .first()
        .map(|g| g.len())
        .ok_or_else(|| Error::Validation("no bases supplied".into()))?;
    let amp = c64(((groups.len() * d) as f64).sqrt().recip(), 0.0);
    let mut branches = Vec::new();
    for (b, basis) in groups.iter().enumerate() {
        if basis.len() != d {
            return Err(Error::DimensionMismatch(format!("basis {b} has {} vectors", basis.len())));
        }
        for (l, v) in basis.iter().enumerate() {
            branches.push(crate::states::Branch {
                label: (b * d + l) as u64,
                coeff: amp,
                vec: v.clone(),
            });
        }
    }
    StructuredState::new(d, n, branches)
}

/// Alice measures `|b⟩⟨b| ⊗ |f_k⟩⟨f_k|` on the ancilla (Fourier basis in the
/// second register) and Bob applies [`optimal_povm`] to his conditional state.
///
/// `groups` are orthonormal bases of `C^d`: `d + 1` MUBs, or the columns of
/// Haar unitaries for an approximate design.
pub fn locc_protocol(groups: &[Vec<CVector>], n: usize, chart: &Chart, theta: &[f64]) -> Result<LoccPlan> {
    let input = grouped_input(groups, n)?;
    let d = input.dim();
    let p = chart.n_params();
    let mut branches = Vec::with_capacity(groups.len() * d);
    let mut avg = RMatrix::zeros(p, p);
    for b in 0..groups.len() {
        for k in 0..d {
            let amplitude = |label: u64| {
                let (group, l) = (label as usize / d, label as usize % d);
                if group == b {
                    Complex64::from_polar((d as f64).sqrt().recip(), 2.0 * PI * ((k * l) % d) as f64 / d as f64)
                } else {
                    c64(0.0, 0.0)
                }
            };
            let (probability, state) = input.project_ancilla(amplitude)?;
            let povm = optimal_povm(&state, chart, theta)?;
            let fi = fisher_information(&Povm::Optimal(povm.clone()), &state, chart, theta)?;
            avg += fi.matrix() * probability;
            branches.push(LoccBranch {
                group: b,
                fourier: k,
                probability,
                state,
                povm,
                fi,
            });
        }
    }
    Ok(LoccPlan {
        branches,
        averaged_fi: FisherMatrix::new(avg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DEFAULT_DENSE_CAP;
    use crate::designs::{basis_vector, mub_prime, sample_approx_design, sic_povm, VectorSet};
    use crate::qfi::optimal_qfi;
    use crate::states::{from_approx_design, from_design, product_baseline};

    fn mub_state(n: usize) -> StructuredState {
        from_design(&VectorSet::from_bases(&mub_prime(2).unwrap()).unwrap(), n).unwrap()
    }

    #[test]
    fn mixer_is_orthogonal_with_flat_last_column() {
        for k in [4usize, 9] {
            let o = householder_mixer(k);
            assert!((&o * o.transpose() - RMatrix::identity(k, k)).norm() < 1e-14);
            for xi in 0..k {
                assert!((o[(xi, k - 1)] - 1.0 / (k as f64).sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gram_is_identity_for_designs() {
        let chart = Chart::gell_mann(2).unwrap();
        for n in 1..=3 {
            let s = mub_state(n);
            let povm = optimal_povm(&s, &chart, &[0.0; 3]).unwrap();
            let g = povm.gram(&s).unwrap();
            assert!((g - linalg::identity(4)).norm() < 1e-8);
            let dense = povm.dense_vectors(&s, &chart, DEFAULT_DENSE_CAP).unwrap();
            let dg = dense.adjoint() * &dense;
            assert!((dg - linalg::identity(4)).norm() < 1e-8);
        }
    }

    #[test]
    fn probabilities_at_truth() {
        let chart = Chart::gell_mann(2).unwrap();
        let s = mub_state(2);
        let povm = Povm::Optimal(optimal_povm(&s, &chart, &[0.0; 3]).unwrap());
        let dist = outcome_probabilities(&povm, &s, &chart, &[0.0; 3]).unwrap();
        for p in &dist.probabilities[..4] {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!(dist.probabilities[4].abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let chart = Chart::gell_mann(2).unwrap();
        let s = mub_state(3);
        let povm = Povm::Optimal(optimal_povm(&s, &chart, &[0.1, 0.0, -0.2]).unwrap());
        let mut rng = rng_stream(4, 0);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let dist = outcome_probabilities(&povm, &s, &chart, &theta).unwrap();
            let total: f64 = dist.probabilities.iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            assert!(dist.clipped < 1e-12);
        }
    }

    #[test]
    fn fi_attains_qfi() {
        for (d, n) in [(2usize, 1usize), (2, 2), (2, 3), (3, 2)] {
            let chart = Chart::gell_mann(d).unwrap();
            let p = chart.n_params();
            let s = from_design(&sic_povm(d).unwrap(), n).unwrap();
            let povm = Povm::Optimal(optimal_povm(&s, &chart, &vec![0.0; p]).unwrap());
            let fi = fisher_information(&povm, &s, &chart, &vec![0.0; p]).unwrap();
            assert!(fi.frobenius_distance(&optimal_qfi(d, n)) < 1e-8, "d={d} n={n}");
        }
    }

    #[test]
    fn fi_attains_qfi_off_origin() {
        let mut rng = rng_stream(10, 0);
        let reference = linalg::haar_unitary(2, &mut rng);
        let chart = Chart::with_reference(crate::sud::gell_mann_basis(2).unwrap(), reference).unwrap();
        let s = mub_state(2);
        let theta = [0.2, -0.1, 0.3];
        let povm = optimal_povm(&s, &chart, &theta).unwrap();
        let qfi = povm.qfi().clone();
        let fi = fisher_information(&Povm::Optimal(povm), &s, &chart, &theta).unwrap();
        assert!(fi.frobenius_distance(&qfi) < 1e-8);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let chart = Chart::gell_mann(2).unwrap();
        let s = mub_state(2);
        let povm = Povm::Optimal(optimal_povm(&s, &chart, &[0.0; 3]).unwrap());
        let theta = [0.05, 0.1, -0.07];
        let a = fisher_information(&povm, &s, &chart, &theta).unwrap();
        let f = fisher_information_fd(&povm, &s, &chart, &theta, 1e-5).unwrap();
        assert!(a.frobenius_distance(&f) < 1e-5);
    }

    #[test]
    fn product_state_is_rejected_and_basis_measurement_is_strictly_worse() {
        let chart = Chart::gell_mann(2).unwrap();
        let tau = (basis_vector(2, 0) + basis_vector(2, 1) * c64(0.3, 0.4)).normalize();
        let s = product_baseline(&tau, 2).unwrap();
        assert!(matches!(optimal_povm(&s, &chart, &[0.0; 3]), Err(Error::NotAttainable(_))));
        let comp = Povm::Dense {
            povm: DensePovm::basis(linalg::identity(4)),
            cap: DEFAULT_DENSE_CAP,
        };
        let fi = fisher_information(&comp, &s, &chart, &[0.0; 3]).unwrap();
        let qfi = qfi::qfi_pure_state(&s, chart.basis().generators()).unwrap();
        assert!(fi.max_excess_over(&qfi) <= 1e-8);
        assert!(qfi.trace() - fi.trace() > 0.1);
    }

    #[test]
    fn y_operator_properties_and_pairing() {
        let chart = Chart::gell_mann(2).unwrap();
        let mut rng = rng_stream(21, 0);
        for n in 1..=2 {
            let s = mub_state(n);
            let model = dense::model_at(&s, &chart, &[0.0; 3], DEFAULT_DENSE_CAP).unwrap();
            let y = y_operator(&model).unwrap();
            assert!((&y * &model.psi - &model.psi).norm() < 1e-10);
            for l in model.sld_vectors() {
                assert!((&y * &l - &l * I).norm() < 1e-10);
            }
            let qfi = optimal_qfi(2, n);
            let dim = model.psi.len();
            for _ in 0..5 {
                let u = linalg::haar_unitary(dim, &mut rng);
                let pair = random_measurement_pair(&u, &s, &chart, &[0.0; 3], DEFAULT_DENSE_CAP).unwrap();
                let f1 = classical_fisher(&pair.first.statistics_on(&model));
                let f2 = classical_fisher(&pair.second.statistics_on(&model));
                let sum = FisherMatrix::new(f1.matrix() + f2.matrix());
                assert!(sum.frobenius_distance(&qfi) < 1e-8);
                let mix = DensePovm::mixture(&[(0.5, &pair.first), (0.5, &pair.second)]).unwrap();
                assert!(mix.completeness_deficit() < 1e-8);
                let half = classical_fisher(&mix.statistics_on(&model));
                assert!(half.frobenius_distance(&FisherMatrix::new(qfi.matrix() * 0.5)) < 1e-8);
            }
        }
    }

    #[test]
    fn locc_plan_on_mubs() {
        let chart = Chart::gell_mann(2).unwrap();
        let bases = mub_prime(2).unwrap();
        let plan = locc_protocol(&bases, 2, &chart, &[0.0; 3]).unwrap();
        assert_eq!(plan.branches.len(), 6);
        for br in &plan.branches {
            assert!((br.probability - 1.0 / 6.0).abs() < 1e-12);
            let own = qfi::qfi_pure_state(&br.state, chart.basis().generators()).unwrap();
            assert!(br.fi.frobenius_distance(&own) < 1e-8);
        }
        assert!(plan.averaged_fi.frobenius_distance(&optimal_qfi(2, 2)) < 1e-8);
    }

    #[test]
    fn locc_plan_on_approximate_design() {
        let chart = Chart::gell_mann(2).unwrap();
        let us = sample_approx_design(2, 3, &mut rng_stream(5, 0)).unwrap();
        let groups: Vec<Vec<CVector>> = us
            .iter()
            .map(|u| (0..2).map(|k| u.column(k).into_owned()).collect())
            .collect();
        let n = 3;
        let plan = locc_protocol(&groups, n, &chart, &[0.0; 3]).unwrap();
        let own = qfi::qfi_pure_state(&from_approx_design(&us, n).unwrap(), chart.basis().generators()).unwrap();
        assert!(plan.averaged_fi.frobenius_distance(&own) < 1e-8);
    }
}
