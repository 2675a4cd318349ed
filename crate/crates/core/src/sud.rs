//! Generator bases of su(d) and the exponential chart `U(θ) = U₀ exp(-i θ·t)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, hermitian_eig, identity, tol, CMatrix};

/// Trace-orthonormal Hermitian traceless basis `{t_α}` of su(d):
/// `tr(t_α t_β) = δ_αβ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorBasis {
    d: usize,
    t: Vec<CMatrix>,
}

impl GeneratorBasis {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of generators, `d² - 1`.
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn generators(&self) -> &[CMatrix] {
        &self.t
    }

    /// `Σ_α θ_α t_α`.
    pub fn combine(&self, theta: &[f64]) -> Result<CMatrix> {
        self.check_coords(theta)?;
        let mut a = CMatrix::zeros(self.d, self.d);
        for (x, t) in theta.iter().zip(&self.t) {
            a += t * c64(*x, 0.0);
        }
        Ok(a)
    }

    /// Coordinates of a Hermitian matrix in the basis, `x_α = tr(t_α A)`.
    pub fn coordinates(&self, a: &CMatrix) -> Vec<f64> {
        self.t
            .iter()
            .map(|t| linalg::trace_product(t, a).re)
            .collect()
    }

    fn check_coords(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.t.len() {
            return Err(Error::Validation(format!(
                "expected {} chart coordinates, got {}",
                self.t.len(),
                theta.len()
            )));
        }
        if let Some(x) = theta.iter().find(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("non-finite chart coordinate {x}")));
        }
        Ok(())
    }
}

/// Generalised Gell-Mann matrices scaled to unit Hilbert-Schmidt norm.
///
/// Ordering: for each column `k = 1..d-1`, the symmetric and antisymmetric
/// off-diagonal pairs `(j, k)` for `j < k`, followed by the `k`-th diagonal
/// generator. For `d = 2` this is `(σx, σy, σz)/√2`.
pub fn gell_mann_basis(d: usize) -> Result<GeneratorBasis> {
    if d < 2 {
        return Err(Error::Validation(format!("su(d) needs d >= 2, got {d}")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = Vec::with_capacity(d * d - 1);
    for k in 1..d {
        for j in 0..k {
            let mut sym = CMatrix::zeros(d, d);
            sym[(j, k)] = c64(s, 0.0);
            sym[(k, j)] = c64(s, 0.0);
            t.push(sym);
            let mut anti = CMatrix::zeros(d, d);
            anti[(j, k)] = c64(0.0, -s);
            anti[(k, j)] = c64(0.0, s);
            t.push(anti);
        }
        let norm = 1.0 / ((k * (k + 1)) as f64).sqrt();
        let mut diag = CMatrix::zeros(d, d);
        for i in 0..k {
            diag[(i, i)] = c64(norm, 0.0);
        }
        diag[(k, k)] = c64(-(k as f64) * norm, 0.0);
        t.push(diag);
    }
    Ok(GeneratorBasis { d, t })
}

/// Local exponential chart around a reference unitary.
#[derive(Debug, Clone)]
pub struct Chart {
    basis: GeneratorBasis,
    reference: CMatrix,
}

impl Chart {
    pub fn new(basis: GeneratorBasis) -> Self {
        let reference = identity(basis.dim());
        Chart { basis, reference }
    }

    pub fn with_reference(basis: GeneratorBasis, reference: CMatrix) -> Result<Self> {
        if reference.shape() != (basis.dim(), basis.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "reference is {:?}, basis dimension {}",
                reference.shape(),
                basis.dim()
            )));
        }
        let defect = linalg::unitarity_defect(&reference);
        if defect > tol::UNITARY {
            return Err(Error::Validation(format!(
                "reference unitary has unitarity defect {defect:.3e}"
            )));
        }
        Ok(Chart { basis, reference })
    }

    pub fn gell_mann(d: usize) -> Result<Self> {
        Ok(Chart::new(gell_mann_basis(d)?))
    }

    pub fn basis(&self) -> &GeneratorBasis {
        &self.basis
    }

    pub fn reference(&self) -> &CMatrix {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Number of real coordinates.
    pub fn n_params(&self) -> usize {
        self.basis.len()
    }

    /// The same basis centred at `U(θ)`.
    pub fn recentered(&self, theta: &[f64]) -> Result<Chart> {
        Ok(Chart {
            basis: self.basis.clone(),
            reference: self.unitary_at(theta)?,
        })
    }

    /// `U₀ exp(-i Σ θ_α t_α)`.
    pub fn unitary_at(&self, theta: &[f64]) -> Result<CMatrix> {
        let a = self.basis.combine(theta)?;
        Ok(&self.reference * linalg::unitary_exp(&a)?)
    }

    /// `t_α(θ) = i U(θ)† ∂_α U(θ)`, via the divided-difference formula for
    /// the derivative of the matrix exponential.
    pub fn tangent_at(&self, theta: &[f64]) -> Result<Vec<CMatrix>> {
        let a = self.basis.combine(theta)?;
        if theta.iter().all(|&x| x == 0.0) {
            return Ok(self.basis.t.clone());
        }
        let eig = hermitian_eig(&a)?;
        let v = &eig.eigenvectors;
        let lam = &eig.eigenvalues;
        let d = self.dim();
        // i e^{iλ_j} (e^{-iλ_j} - e^{-iλ_k})/(λ_j - λ_k)
        //   = e^{i(λ_j-λ_k)/2} sinc((λ_j-λ_k)/2)
        let kernel = CMatrix::from_fn(d, d, |j, k| {
            let half = 0.5 * (lam[j] - lam[k]);
            let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
            Complex64::from_polar(sinc, half)
        });
        let out = self
            .basis
            .t
            .iter()
            .map(|t| {
                let x = v.adjoint() * t * v;
                let g = v * x.component_mul(&kernel) * v.adjoint();
                (&g + g.adjoint()).scale(0.5)
            })
            .collect();
        Ok(out)
    }
}

/// Serializable handle for a chart: the reference unitary as rows of `[re, im]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartSpec {
    pub d: usize,
    pub reference: Vec<Vec<[f64; 2]>>,
}

impl From<&Chart> for ChartSpec {
    fn from(chart: &Chart) -> Self {
        let r = chart.reference();
        ChartSpec {
            d: chart.dim(),
            reference: (0..r.nrows())
                .map(|i| (0..r.ncols()).map(|j| [r[(i, j)].re, r[(i, j)].im]).collect())
                .collect(),
        }
    }
}
