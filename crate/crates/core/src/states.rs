//! Branch-structured pure states on `C^{d_A} ⊗ (C^d)^{⊗n}`.
//!
//! A state is `|Ω⟩ = Σ_i c_i |a_i⟩ ⊗ |v_i⟩^{⊗n}` with orthonormal ancilla
//! states `|a⟩` indexed by integer labels. Labels may repeat, in which case the
//! corresponding branches interfere. Every quantity the estimation theory
//! needs is a sum over equal-label branch pairs of products of single-copy
//! brackets, so nothing here is exponential in `n`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::designs::{pairs_to_vector, vector_to_pairs, VectorSet};
use crate::error::{Error, Result};
use crate::linalg::{self, c64, kron, outer, CMatrix, CVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: u64,
    pub coeff: Complex64,
    pub vec: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredState {
    d: usize,
    n: usize,
    branches: Vec<Branch>,
    /// Equal-label branch pairs `(i, j)`, the only ones that contribute.
    pairs: Vec<(usize, usize)>,
}

/// One factor of a product operator on `(C^d)^{⊗n}`.
#[derive(Debug, Clone, Copy)]
pub enum Factor<'a> {
    /// `W^{⊗n}`.
    Power(&'a CMatrix),
    /// `Σ_s 1^{⊗(s-1)} ⊗ X ⊗ 1^{⊗(n-s)}`.
    Sum(&'a CMatrix),
}

fn equal_label_pairs(branches: &[Branch]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, bi) in branches.iter().enumerate() {
        for (j, bj) in branches.iter().enumerate() {
            if bi.label == bj.label {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn raw_norm_sqr(n: usize, branches: &[Branch], pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(i, j)| {
            let (bi, bj) = (&branches[i], &branches[j]);
            (bi.coeff.conj() * bj.coeff * bi.vec.dotc(&bj.vec).powi(n as i32)).re
        })
        .sum()
}

impl StructuredState {
    /// Validates dimensions, unit branch vectors and unit norm.
    pub fn new(d: usize, n: usize, branches: Vec<Branch>) -> Result<Self> {
        let state = Self::unchecked_norm(d, n, branches)?;
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("state has squared norm {norm}, expected 1")));
        }
        Ok(state)
    }

    /// Like [`StructuredState::new`], rescaling the coefficients to unit norm.
    pub fn normalized(d: usize, n: usize, mut branches: Vec<Branch>) -> Result<Self> {
        let probe = Self::unchecked_norm(d, n, branches.clone())?;
        let norm = probe.norm_sqr();
        if !(norm > 1e-300) {
            return Err(Error::Validation("state has zero norm".into()));
        }
        let scale = c64(norm.sqrt().recip(), 0.0);
        for b in &mut branches {
            b.coeff *= scale;
        }
        Self::new(d, n, branches)
    }

    fn unchecked_norm(d: usize, n: usize, branches: Vec<Branch>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("copy count n must be >= 1".into()));
        }
        if branches.is_empty() {
            return Err(Error::Validation("state needs at least one branch".into()));
        }
        for (i, b) in branches.iter().enumerate() {
            if b.vec.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "branch {i} vector has length {}, expected {d}",
                    b.vec.len()
                )));
            }
            let norm = b.vec.norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("branch {i} vector has norm {norm}")));
            }
            if !(b.coeff.re.is_finite() && b.coeff.im.is_finite()) {
                return Err(Error::Validation(format!("branch {i} has non-finite coefficient")));
            }
        }
        let pairs = equal_label_pairs(&branches);
        Ok(StructuredState { d, n, branches, pairs })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn copies(&self) -> usize {
        self.n
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Distinct ancilla labels in increasing order.
    pub fn ancilla_labels(&self) -> Vec<u64> {
        self.branches
            .iter()
            .map(|b| b.label)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_labels().len()
    }

    pub fn norm_sqr(&self) -> f64 {
        raw_norm_sqr(self.n, &self.branches, &self.pairs)
    }

    /// Same branches with `n` replaced.
    pub fn with_copies(&self, n: usize) -> Result<Self> {
        Self::normalized(self.d, n, self.branches.clone())
    }

    /// Applies `V` to every branch vector (`1_A ⊗ V^{⊗n}`).
    pub fn rotated(&self, v: &CMatrix) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .map(|b| Branch {
                label: b.label,
                coeff: b.coeff,
                vec: v * &b.vec,
            })
            .collect();
        Self::new(self.d, self.n, branches)
    }

    /// `⟨Ω| 1_A ⊗ F_1 F_2 ⋯ F_r |Ω⟩` for at most two [`Factor::Sum`] factors.
    pub fn overlap(&self, factors: &[Factor<'_>]) -> Result<Complex64> {
        let sums: Vec<usize> = factors
            .iter()
            .enumerate()
            .filter_map(|(p, f)| matches!(f, Factor::Sum(_)).then_some(p))
            .collect();
        if sums.len() > 2 {
            return Err(Error::Unsupported(format!(
                "overlap supports at most two derivative insertions, got {}",
                sums.len()
            )));
        }
        for f in factors {
            let m = match f {
                Factor::Power(m) | Factor::Sum(m) => m,
            };
            if m.shape() != (self.d, self.d) {
                return Err(Error::DimensionMismatch(format!(
                    "factor is {:?}, expected {}x{}",
                    m.shape(),
                    self.d,
                    self.d
                )));
            }
        }
        let n = self.n;
        let nf = n as f64;
        let mut total = c64(0.0, 0.0);
        for &(i, j) in &self.pairs {
            let (bi, bj) = (&self.branches[i], &self.branches[j]);
            // Single-slot bracket with the Sum factors in `active` switched on.
            let slot = |active: &[usize]| -> Complex64 {
                let mut w = bj.vec.clone();
                for (p, f) in factors.iter().enumerate().rev() {
                    match f {
                        Factor::Power(m) => w = *m * w,
                        Factor::Sum(m) if active.contains(&p) => w = *m * w,
                        Factor::Sum(_) => {}
                    }
                }
                bi.vec.dotc(&w)
            };
            let base = slot(&[]);
            let value = match sums.as_slice() {
                [] => base.powi(n as i32),
                [a] => slot(&[*a]) * base.powi(n as i32 - 1) * nf,
                [a, b] => {
                    let same = slot(&[*a, *b]) * base.powi(n as i32 - 1) * nf;
                    let split = if n >= 2 {
                        slot(&[*a]) * slot(&[*b]) * base.powi(n as i32 - 2) * (nf * (nf - 1.0))
                    } else {
                        c64(0.0, 0.0)
                    };
                    same + split
                }
                _ => unreachable!(),
            };
            total += bi.coeff.conj() * bj.coeff * value;
        }
        Ok(total)
    }

    /// `⟨Ω| 1_A ⊗ U^{⊗n} |Ω⟩`.
    pub fn transition(&self, u: &CMatrix) -> Result<Complex64> {
        self.overlap(&[Factor::Power(u)])
    }

    /// Average one-copy and symmetrised two-copy reductions.
    pub fn reduced_moments(&self) -> ReducedMoments {
        let d = self.d;
        let n = self.n as i32;
        let mut rho1 = CMatrix::zeros(d, d);
        let mut rho2 = (self.n >= 2).then(|| CMatrix::zeros(d * d, d * d));
        for &(i, j) in &self.pairs {
            let (bi, bj) = (&self.branches[i], &self.branches[j]);
            // |χ⟩⟨χ| contributes c_j c̄_i |v_j⟩⟨v_i| ⟨v_i|v_j⟩^{n-k} to the k-copy reduction.
            let amp = bj.coeff * bi.coeff.conj();
            let inner = bi.vec.dotc(&bj.vec);
            let single = outer(&bj.vec, &bi.vec);
            rho1 += &single * (amp * inner.powi(n - 1));
            if let Some(r2) = rho2.as_mut() {
                *r2 += kron(&single, &single) * (amp * inner.powi(n - 2));
            }
        }
        ReducedMoments {
            rho1: (&rho1 + rho1.adjoint()).scale(0.5),
            rho2: rho2.map(|r| (&r + r.adjoint()).scale(0.5)),
        }
    }

    /// Projects the ancilla onto `Σ_a f(a)|a⟩`, returning the outcome
    /// probability and the normalised conditional state of the copies.
    pub fn project_ancilla<F: Fn(u64) -> Complex64>(&self, amplitude: F) -> Result<(f64, StructuredState)> {
        let branches: Vec<Branch> = self
            .branches
            .iter()
            .map(|b| Branch {
                label: 0,
                coeff: amplitude(b.label).conj() * b.coeff,
                vec: b.vec.clone(),
            })
            .collect();
        let pairs = equal_label_pairs(&branches);
        let prob = raw_norm_sqr(self.n, &branches, &pairs);
        let state = StructuredState::normalized(self.d, self.n, branches)?;
        Ok((prob, state))
    }

    /// `1 - |⟨Ω|1_A ⊗ U^{⊗n}|Ω⟩|`; zero iff `U` leaves the state invariant up to phase.
    pub fn injectivity_margin(&self, u: &CMatrix) -> Result<f64> {
        Ok((1.0 - self.transition(u)?.norm()).max(0.0))
    }

    pub fn to_json(&self) -> StateJson {
        StateJson {
            d: self.d,
            n: self.n,
            branches: self
                .branches
                .iter()
                .map(|b| BranchJson {
                    label: b.label,
                    coeff: [b.coeff.re, b.coeff.im],
                    vec: vector_to_pairs(&b.vec),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &StateJson) -> Result<Self> {
        let branches = json
            .branches
            .iter()
            .map(|b| Branch {
                label: b.label,
                coeff: c64(b.coeff[0], b.coeff[1]),
                vec: pairs_to_vector(&b.vec),
            })
            .collect();
        Self::new(json.d, json.n, branches)
    }
}

/// Wire form: `{d, n, branches: [{label, coeff: [re, im], vec: [[re, im], …]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub d: usize,
    pub n: usize,
    pub branches: Vec<BranchJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchJson {
    pub label: u64,
    pub coeff: [f64; 2],
    pub vec: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct ReducedMoments {
    pub rho1: CMatrix,
    rho2: Option<CMatrix>,
}

impl ReducedMoments {
    /// Moments from explicit matrices; `rho2` may be omitted when `n = 1`.
    pub fn from_parts(rho1: CMatrix, rho2: Option<CMatrix>) -> Self {
        ReducedMoments { rho1, rho2 }
    }

    /// The two-copy moment; undefined for a single copy.
    pub fn rho2(&self) -> Result<&CMatrix> {
        self.rho2
            .as_ref()
            .ok_or_else(|| Error::Unsupported("two-copy reduction needs n >= 2".into()))
    }

    pub fn has_rho2(&self) -> bool {
        self.rho2.is_some()
    }
}

/// `(1/√m) Σ_i |i⟩ ⊗ |τ_i⟩^{⊗n}`.
pub fn from_design(set: &VectorSet, n: usize) -> Result<StructuredState> {
    let coeff = c64((set.len() as f64).sqrt().recip(), 0.0);
    let branches = set
        .vectors()
        .iter()
        .enumerate()
        .map(|(i, v)| Branch {
            label: i as u64,
            coeff,
            vec: v.clone(),
        })
        .collect();
    StructuredState::new(set.dim(), n, branches)
}

/// `(1/√(md)) Σ_{b,k} |b k⟩ ⊗ [U_b|k⟩]^{⊗n}`, labels `b d + k`.
pub fn from_approx_design(unitaries: &[CMatrix], n: usize) -> Result<StructuredState> {
    let first = unitaries
        .first()
        .ok_or_else(|| Error::Validation("approximate design needs m >= 1".into()))?;
    let d = first.nrows();
    let m = unitaries.len();
    let coeff = c64(((m * d) as f64).sqrt().recip(), 0.0);
    let mut branches = Vec::with_capacity(m * d);
    for (b, u) in unitaries.iter().enumerate() {
        if u.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("unitary {b} is {:?}", u.shape())));
        }
        for k in 0..d {
            let v = u.column(k).into_owned();
            let norm = v.norm();
            branches.push(Branch {
                label: (b * d + k) as u64,
                coeff,
                vec: v / c64(norm, 0.0),
            });
        }
    }
    StructuredState::new(d, n, branches)
}

/// Bob's conditional state after Alice reports `(b, k)`:
/// `d^{-1/2} Σ_l e^{-2πi k l/d} |φ^b_l⟩^{⊗n}` (0-based indices, no ancilla).
pub fn bob_conditional(bases: &[Vec<CVector>], b: usize, k: usize, n: usize) -> Result<StructuredState> {
    let basis = bases
        .get(b)
        .ok_or_else(|| Error::IndexOutOfRange(format!("basis {b} of {}", bases.len())))?;
    let d = basis.len();
    if k >= d {
        return Err(Error::IndexOutOfRange(format!("Fourier index {k} of {d}")));
    }
    let amp = (d as f64).sqrt().recip();
    let branches = basis
        .iter()
        .enumerate()
        .map(|(l, v)| Branch {
            label: 0,
            coeff: Complex64::from_polar(amp, -2.0 * PI * ((k * l) % d) as f64 / d as f64),
            vec: v.clone(),
        })
        .collect();
    StructuredState::new(d, n, branches)
}

/// `|τ⟩^{⊗n}` with a trivial ancilla.
pub fn product_baseline(tau: &CVector, n: usize) -> Result<StructuredState> {
    StructuredState::new(
        tau.len(),
        n,
        vec![Branch {
            label: 0,
            coeff: c64(1.0, 0.0),
            vec: tau.clone(),
        }],
    )
}

/// Random branch-structured state: `branches` Haar-random vectors with complex
/// Gaussian coefficients and labels drawn from `0..labels` (collisions allowed).
pub fn random_state<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    branches: usize,
    labels: u64,
    rng: &mut R,
) -> Result<StructuredState> {
    let list = (0..branches)
        .map(|_| Branch {
            label: rng.random_range(0..labels.max(1)),
            coeff: c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
            vec: linalg::random_unit_vector(d, rng),
        })
        .collect();
    StructuredState::normalized(d, n, list)
}
