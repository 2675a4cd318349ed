//! Full-space materialisation of structured states.
//!
//! Everything here is exponential in `n` and gated by [`DEFAULT_DENSE_CAP`].
//! It serves as the independent oracle for the overlap engine and as the
//! substrate for measurements that have no factored form (random bases).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c64, identity, kron, kron_vec, CMatrix, CVector};
use crate::states::StructuredState;
use crate::sud::Chart;

/// Largest total dimension `d_A · d^n` handled densely unless overridden.
pub const DEFAULT_DENSE_CAP: usize = 4096;

pub fn total_dim(state: &StructuredState) -> usize {
    state.ancilla_dim() * state.dim().pow(state.copies() as u32)
}

pub fn check_cap(state: &StructuredState, cap: usize) -> Result<usize> {
    let dim = total_dim(state);
    if dim > cap {
        return Err(Error::Unsupported(format!(
            "dense representation needs dimension {dim}, above the cap {cap}"
        )));
    }
    Ok(dim)
}

/// `v^{⊗n}`.
pub fn tensor_power_vec(v: &CVector, n: usize) -> CVector {
    (1..n).fold(v.clone(), |acc, _| kron_vec(&acc, v))
}

/// `U^{⊗n}`.
pub fn tensor_power(u: &CMatrix, n: usize) -> CMatrix {
    (1..n).fold(u.clone(), |acc, _| kron(&acc, u))
}

/// `Σ_s 1^{⊗(s-1)} ⊗ X ⊗ 1^{⊗(n-s)}`.
pub fn collective(x: &CMatrix, n: usize) -> CMatrix {
    let d = x.nrows();
    let mut total = CMatrix::zeros(d.pow(n as u32), d.pow(n as u32));
    for s in 0..n {
        let left = identity(d.pow(s as u32));
        let right = identity(d.pow((n - s - 1) as u32));
        total += kron(&kron(&left, x), &right);
    }
    total
}

/// `1_A ⊗ X`.
pub fn lift(x: &CMatrix, ancilla_dim: usize) -> CMatrix {
    kron(&identity(ancilla_dim), x)
}

/// The full vector `Σ_i c_i |a_i⟩ ⊗ |v_i⟩^{⊗n}` on `C^{d_A} ⊗ (C^d)^{⊗n}`.
pub fn to_dense(state: &StructuredState, cap: usize) -> Result<CVector> {
    let dim = check_cap(state, cap)?;
    let labels = state.ancilla_labels();
    let copies_dim = state.dim().pow(state.copies() as u32);
    let mut out = CVector::zeros(dim);
    for b in state.branches() {
        let a = labels.binary_search(&b.label).expect("label present");
        let block = tensor_power_vec(&b.vec, state.copies()) * b.coeff;
        let mut view = out.rows_mut(a * copies_dim, copies_dim);
        view += block;
    }
    Ok(out)
}

/// Output state and its chart derivatives at `theta`.
#[derive(Debug, Clone)]
pub struct DenseModel {
    pub psi: CVector,
    pub dpsi: Vec<CVector>,
}

/// `ψ(θ) = (1_A ⊗ U(θ)^{⊗n})|Ω⟩` and `∂_α ψ = (1_A ⊗ U^{⊗n})(-i T_α)|Ω⟩`.
pub fn model_at(state: &StructuredState, chart: &Chart, theta: &[f64], cap: usize) -> Result<DenseModel> {
    let omega = to_dense(state, cap)?;
    let n = state.copies();
    let da = state.ancilla_dim();
    let u = lift(&tensor_power(&chart.unitary_at(theta)?, n), da);
    let psi = &u * &omega;
    let minus_i = c64(0.0, -1.0);
    let dpsi = chart
        .tangent_at(theta)?
        .iter()
        .map(|t| &u * (lift(&collective(t, n), da) * &omega) * minus_i)
        .collect();
    Ok(DenseModel { psi, dpsi })
}

impl DenseModel {
    /// `L_αβ = 4(⟨∂_α ψ|∂_β ψ⟩ - ⟨∂_α ψ|ψ⟩⟨ψ|∂_β ψ⟩)`; the QFI is its real part.
    pub fn l_matrix(&self) -> CMatrix {
        let p = self.dpsi.len();
        CMatrix::from_fn(p, p, |a, b| {
            let da = &self.dpsi[a];
            let db = &self.dpsi[b];
            (da.dotc(db) - da.dotc(&self.psi) * self.psi.dotc(db)) * 4.0
        })
    }

    /// `λ_α|ψ⟩ = 2(∂_α ψ - ⟨ψ|∂_α ψ⟩ ψ)` for the pure-state SLD.
    pub fn sld_vectors(&self) -> Vec<CVector> {
        self.dpsi
            .iter()
            .map(|d| (d - &self.psi * self.psi.dotc(d)) * c64(2.0, 0.0))
            .collect()
    }

    /// Outcome probabilities and derivatives for rank-one effects `|e_k⟩⟨e_k|`
    /// given as columns of `effects`.
    pub fn rank_one_statistics(&self, effects: &CMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
        let amps = effects.adjoint() * &self.psi;
        let probs = amps.iter().map(|a| a.norm_sqr()).collect();
        let dprobs = (0..effects.ncols())
            .map(|k| {
                self.dpsi
                    .iter()
                    .map(|d| {
                        let da: Complex64 = effects.column(k).dotc(d);
                        2.0 * (amps[k].conj() * da).re
                    })
                    .collect()
            })
            .collect();
        (probs, dprobs)
    }
}
