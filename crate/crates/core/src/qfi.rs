//! Quantum Fisher information of `1_A ⊗ U^{⊗n}` channel outputs and the
//! closed-form optima for 2-design inputs.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs;
use crate::error::{Error, Result};
use crate::linalg::{self, kron, rng_stream, trace_product, CMatrix, CVector, RMatrix};
use crate::states::{bob_conditional, Factor, ReducedMoments, StructuredState};

/// Real symmetric `(d²-1) × (d²-1)` information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix(RMatrix);

impl FisherMatrix {
    /// Symmetrises `(M + Mᵀ)/2`.
    pub fn new(m: RMatrix) -> Self {
        let sym = (&m + m.transpose()) * 0.5;
        FisherMatrix(sym)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        FisherMatrix(RMatrix::identity(dim, dim) * value)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> RMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        linalg::symmetric_eigenvalues(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-10
    }

    pub fn inverse(&self) -> Result<RMatrix> {
        linalg::inverse_spd(&self.0)
    }

    /// `Tr H⁻¹`.
    pub fn trace_inverse(&self) -> Result<f64> {
        Ok(self.inverse()?.trace())
    }

    /// Largest eigenvalue of `self - other`.
    pub fn max_excess_over(&self, other: &FisherMatrix) -> f64 {
        linalg::symmetric_eigenvalues(&(&self.0 - &other.0))
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn frobenius_distance(&self, other: &FisherMatrix) -> f64 {
        (&self.0 - &other.0).norm()
    }

    /// Eigenvalues of `H₀^{-1/2} (H - H₀) H₀^{-1/2}`; all lie in `[-ε, ε]`
    /// iff `(1-ε)H₀ ≤ H ≤ (1+ε)H₀`.
    pub fn relative_deviation(&self, reference: &FisherMatrix) -> Result<DVector<f64>> {
        let r = linalg::inv_sqrt_spd(&reference.0)?;
        Ok(linalg::symmetric_eigenvalues(&(&r * (&self.0 - &reference.0) * &r)))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Validation("copy count n must be >= 1".into()));
    }
    Ok(())
}

/// `H_αβ = 4n( Re tr[ρ̄₁ t_α t_β] + (n-1) tr[ρ̄₂ (t_α⊗t_β)] - n tr[ρ̄₁ t_α] tr[ρ̄₁ t_β] )`.
pub fn qfi_from_moments(moments: &ReducedMoments, n: usize, generators: &[CMatrix]) -> Result<FisherMatrix> {
    check_n(n)?;
    let rho2 = if n >= 2 { Some(moments.rho2()?) } else { None };
    let p = generators.len();
    let nf = n as f64;
    let first: Vec<f64> = generators
        .iter()
        .map(|t| trace_product(&moments.rho1, t).re)
        .collect();
    let mut h = RMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let ta = &generators[a];
            let tb = &generators[b];
            let mut v = trace_product(&moments.rho1, &(ta * tb)).re - nf * first[a] * first[b];
            if let Some(r2) = rho2 {
                v += (nf - 1.0) * trace_product(r2, &kron(ta, tb)).re;
            }
            h[(a, b)] = 4.0 * nf * v;
            h[(b, a)] = h[(a, b)];
        }
    }
    Ok(FisherMatrix::new(h))
}

/// Complex `L_αβ = 4(⟨T_α T_β⟩ - ⟨T_α⟩⟨T_β⟩)` via the overlap engine.
pub fn l_matrix(state: &StructuredState, generators: &[CMatrix]) -> Result<CMatrix> {
    let p = generators.len();
    let first = generators
        .iter()
        .map(|t| state.overlap(&[Factor::Sum(t)]))
        .collect::<Result<Vec<_>>>()?;
    let mut l = CMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            let second = state.overlap(&[Factor::Sum(&generators[a]), Factor::Sum(&generators[b])])?;
            l[(a, b)] = (second - first[a] * first[b]) * 4.0;
        }
    }
    Ok(l)
}

/// QFI of the pure output model, `Re L`.
pub fn qfi_pure_state(state: &StructuredState, generators: &[CMatrix]) -> Result<FisherMatrix> {
    Ok(FisherMatrix::new(l_matrix(state, generators)?.map(|z| z.re)))
}

/// `max_{α,β} |tr(ρ̄₁ [t_α, t_β])|`; zero iff the QFI is attainable.
pub fn attainability_defect(rho1: &CMatrix, generators: &[CMatrix]) -> f64 {
    let mut worst = 0.0f64;
    for (a, ta) in generators.iter().enumerate() {
        for tb in &generators[a + 1..] {
            let comm = ta * tb - tb * ta;
            worst = worst.max(trace_product(rho1, &comm).norm());
        }
    }
    worst
}

/// `4n(n+d)/(d(d+1)) · 1`.
pub fn optimal_qfi(d: usize, n: usize) -> FisherMatrix {
    let (df, nf) = (d as f64, n as f64);
    FisherMatrix::scaled_identity(d * d - 1, 4.0 * nf * (nf + df) / (df * (df + 1.0)))
}

/// `d(d+1)²(d-1) / (4n(n+d))`.
pub fn optimal_cn(d: usize, n: usize) -> f64 {
    let (df, nf) = (d as f64, n as f64);
    df * (df + 1.0).powi(2) * (df - 1.0) / (4.0 * nf * (nf + df))
}

/// Diagonal bracket coordinates `⟨φ_l|t_α|φ_l⟩` for each basis vector.
fn diagonal_profile(basis: &[CVector], generators: &[CMatrix]) -> Vec<Vec<f64>> {
    basis
        .iter()
        .map(|v| generators.iter().map(|t| linalg::bracket(v, t, v).re).collect())
        .collect()
}

fn basis_qfi(profile: &[Vec<f64>], d: usize, n: usize) -> FisherMatrix {
    let p = profile.first().map_or(0, |r| r.len());
    let (df, nf) = (d as f64, n as f64);
    let mut h = RMatrix::identity(p, p);
    for row in profile {
        for a in 0..p {
            for b in 0..p {
                h[(a, b)] += (nf - 1.0) * row[a] * row[b];
            }
        }
    }
    FisherMatrix::new(h * (4.0 * nf / df))
}

/// `h_n(U)_αβ = (4n/d)[δ_αβ + (n-1) Σ_k ⟨k|U†t_αU|k⟩⟨k|U†t_βU|k⟩]`.
pub fn h_n_single(u: &CMatrix, n: usize, generators: &[CMatrix]) -> FisherMatrix {
    let d = u.nrows();
    let columns: Vec<CVector> = (0..d).map(|k| u.column(k).into_owned()).collect();
    basis_qfi(&diagonal_profile(&columns, generators), d, n)
}

/// QFI of Bob's conditional state for Alice's outcome `(b, k)`:
/// `(4n/d)[δ_αβ + (n-1) Σ_l ⟨φ^b_l|t_α|φ^b_l⟩⟨φ^b_l|t_β|φ^b_l⟩]`.
///
/// This is the exact conditional QFI for `n >= 3`. For `n <= 2` the actual
/// conditional state carries `k`-dependent interference terms between
/// different `l`. At `n = 2` they cancel in the average over Alice's
/// outcomes; at `n = 1` they do not, and the true average falls short of the
/// optimum. Use [`qfi_of_conditional_state`] for the exact per-outcome value.
pub fn qfi_locc_conditional(
    bases: &[Vec<CVector>],
    b: usize,
    k: usize,
    n: usize,
    generators: &[CMatrix],
) -> Result<FisherMatrix> {
    check_n(n)?;
    let basis = bases
        .get(b)
        .ok_or_else(|| Error::IndexOutOfRange(format!("basis {b} of {}", bases.len())))?;
    if k >= basis.len() {
        return Err(Error::IndexOutOfRange(format!("Fourier index {k} of {}", basis.len())));
    }
    Ok(basis_qfi(&diagonal_profile(basis, generators), basis.len(), n))
}

/// Cross-check helper: the QFI of the actual conditional state.
pub fn qfi_of_conditional_state(
    bases: &[Vec<CVector>],
    b: usize,
    k: usize,
    n: usize,
    generators: &[CMatrix],
) -> Result<FisherMatrix> {
    qfi_pure_state(&bob_conditional(bases, b, k, n)?, generators)
}

/// Outcome of one concentration repetition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationDraw {
    pub repeat: usize,
    /// Eigenvalues of `H₀^{-1/2} H H₀^{-1/2}`, ascending.
    pub eigenvalue_ratios: Vec<f64>,
    pub max_deviation: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub q: f64,
    pub m: usize,
    pub repeats: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub draws: Vec<ConcentrationDraw>,
}

impl ConcentrationReport {
    pub fn passes(&self) -> bool {
        self.violation_fraction <= 1.0 - self.q
    }
}

/// Draws `m` Haar unitaries per repetition, forms the approximate-design QFI
/// `(1/m) Σ_b h_n(U_b)` and records whether `(1-ε)H₀ ≤ H ≤ (1+ε)H₀` fails.
///
/// Repetition `r` uses RNG stream `r` under `seed`, so the result does not
/// depend on thread scheduling.
pub fn concentration_experiment(
    d: usize,
    n: usize,
    epsilon: f64,
    q: f64,
    repeats: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    let m = designs::chernoff_sample_size(d, epsilon, q)?;
    let basis = crate::sud::gell_mann_basis(d)?;
    let h0 = optimal_qfi(d, n);
    let draws = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_stream(seed, r as u64);
            let us = designs::sample_approx_design(d, m, &mut rng)?;
            let h = approx_design_qfi(&us, n, basis.generators());
            let dev = h.relative_deviation(&h0)?;
            let max_deviation = dev.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            Ok(ConcentrationDraw {
                repeat: r,
                eigenvalue_ratios: dev.iter().map(|v| 1.0 + v).collect(),
                max_deviation,
                violated: max_deviation > epsilon,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = draws.iter().filter(|d| d.violated).count();
    Ok(ConcentrationReport {
        d,
        n,
        epsilon,
        q,
        m,
        repeats,
        violations,
        violation_fraction: violations as f64 / repeats.max(1) as f64,
        draws,
    })
}

/// `(1/m) Σ_b h_n(U_b)`.
pub fn approx_design_qfi(unitaries: &[CMatrix], n: usize, generators: &[CMatrix]) -> FisherMatrix {
    let p = generators.len();
    let sum = unitaries
        .iter()
        .fold(RMatrix::zeros(p, p), |acc, u| acc + h_n_single(u, n, generators).into_matrix());
    FisherMatrix::new(sum / unitaries.len() as f64)
}

/// Element-wise mean and standard error of `h_n(U)` over Haar draws.
pub fn haar_mean_h_n(d: usize, n: usize, draws: usize, seed: u64) -> Result<(RMatrix, RMatrix)> {
    let basis = crate::sud::gell_mann_basis(d)?;
    let p = basis.len();
    let mut rng = rng_stream(seed, 0);
    let mut sum = RMatrix::zeros(p, p);
    let mut sum_sq = RMatrix::zeros(p, p);
    for _ in 0..draws {
        let h = h_n_single(&linalg::haar_unitary(d, &mut rng), n, basis.generators()).into_matrix();
        sum_sq += h.component_mul(&h);
        sum += h;
    }
    let k = draws as f64;
    let mean = &sum / k;
    let var = (&sum_sq / k - mean.component_mul(&mean)).map(|v| v.max(0.0)) * (k / (k - 1.0));
    let se = var.map(|v| (v / k).sqrt());
    Ok((mean, se))
}

/// QFI of `n` independent uses, each fed its own copy of `single_use` (an
/// `n = 1` state, possibly entangled with a per-use ancilla). The input is a
/// product over uses, so the QFI is additive.
pub fn qfi_independent_uses(single_use: &StructuredState, n: usize, generators: &[CMatrix]) -> Result<FisherMatrix> {
    if single_use.copies() != 1 {
        return Err(Error::Validation(format!(
            "single-use state must have n = 1, got n = {}",
            single_use.copies()
        )));
    }
    Ok(FisherMatrix::new(qfi_pure_state(single_use, generators)?.into_matrix() * n as f64))
}

/// Wrapper used by callers holding ρ̄₁ only.
pub fn moments_from_rho1(rho1: CMatrix) -> ReducedMoments {
    ReducedMoments::from_parts(rho1, None)
}
