//! Dense complex-matrix kernels shared by every other module.
//!
//! Operators are plain `nalgebra` matrices over [`Complex64`]. All routines are
//! pure; randomness enters only through caller-owned RNG streams.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;

/// Tolerances reused across the crate.
pub mod tol {
    /// Algebraic identities involving inverses or square roots.
    pub const ALGEBRAIC: f64 = 1e-8;
    /// Unitarity, reconstruction and Hermiticity checks.
    pub const UNITARY: f64 = 1e-10;
    /// Scalar identities (traces, normalisation).
    pub const SCALAR: f64 = 1e-12;
}

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Deterministic ChaCha stream `index` under `master`.
///
/// Streams with distinct indices are independent, which makes per-trial and
/// per-draw randomness independent of scheduling order.
pub fn rng_stream(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

fn check_square(a: &CMatrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Relative Frobenius distance of `a` from its adjoint.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint()).norm() / a.norm().max(1.0)
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    (u * u.adjoint() - identity(u.nrows())).norm()
}

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Columns are the eigenvectors.
    pub eigenvectors: CMatrix,
}

impl HermitianEigen {
    /// `V f(Λ) V†`.
    pub fn map<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &e) in self.eigenvalues.iter().enumerate() {
            let fe = f(e);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= fe;
            }
        }
        scaled * v.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|e| c64(e, 0.0))
    }
}

pub fn hermitian_eig(a: &CMatrix) -> Result<HermitianEigen> {
    check_square(a, "hermitian_eig input")?;
    let defect = hermiticity_defect(a);
    if defect > tol::UNITARY {
        return Err(Error::NotHermitian(defect));
    }
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = CMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// `exp(-iA)` for Hermitian `A`.
pub fn unitary_exp(a: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eig(a)?;
    Ok(eig.map(|e| Complex64::from_polar(1.0, -e)))
}

/// Ascending eigen-decomposition of a real symmetric matrix.
pub fn symmetric_eig(m: &RMatrix) -> (DVector<f64>, RMatrix) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = RMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub fn symmetric_eigenvalues(m: &RMatrix) -> DVector<f64> {
    symmetric_eig(m).0
}

fn spd_power(m: &RMatrix, power: f64) -> Result<RMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (vals, vecs) = symmetric_eig(m);
    let largest = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let smallest = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-12 * largest) {
        let cond = if smallest > 0.0 { largest / smallest } else { f64::INFINITY };
        return Err(Error::NearSingular(cond));
    }
    let diag = RMatrix::from_diagonal(&vals.map(|v| v.powf(power)));
    let r = &vecs * diag * vecs.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// `M^{-1/2}` for a symmetric positive-definite `M`.
pub fn inv_sqrt_spd(m: &RMatrix) -> Result<RMatrix> {
    spd_power(m, -0.5)
}

pub fn inverse_spd(m: &RMatrix) -> Result<RMatrix> {
    spd_power(m, -1.0)
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
/// `R`'s diagonal pushed into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re * scale, im * scale)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { c64(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Uniformly random unit vector in `C^d`.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(d, |_, _| {
        c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm = v.norm();
    v / c64(norm, 0.0)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

pub fn hs_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "hs_distance of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok((a - b).norm())
}

/// Trace over every subsystem not listed in `keep`.
///
/// `dims` are the subsystem dimensions in tensor order; the kept subsystems
/// appear in the output in increasing index order.
pub fn partial_trace(a: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    check_square(a, "partial_trace input")?;
    let total: usize = dims.iter().product();
    if total != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dims {dims:?} multiply to {total}, matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::IndexOutOfRange(format!(
            "kept subsystem {bad} of {}",
            dims.len()
        )));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let out_dim: usize = kept.iter().map(|&k| dims[k]).product();

    let digits = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; dims.len()];
        for (pos, &dim) in dims.iter().enumerate().rev() {
            out[pos] = idx % dim;
            idx /= dim;
        }
        out
    };
    let compose = |dig: &[usize]| -> usize { kept.iter().fold(0, |acc, &k| acc * dims[k] + dig[k]) };

    let all_digits: Vec<Vec<usize>> = (0..total).map(digits).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let mut out = CMatrix::zeros(out_dim, out_dim);
    for i in 0..total {
        let di = &all_digits[i];
        let oi = compose(di);
        for j in 0..total {
            let dj = &all_digits[j];
            if traced.iter().all(|&t| di[t] == dj[t]) {
                out[(oi, compose(dj))] += a[(i, j)];
            }
        }
    }
    Ok(out)
}

/// `W = Σ_kl |kl⟩⟨lk|` on `C^d ⊗ C^d`.
pub fn swap_operator(d: usize) -> CMatrix {
    let mut w = CMatrix::zeros(d * d, d * d);
    for k in 0..d {
        for l in 0..d {
            w[(k * d + l, l * d + k)] = c64(1.0, 0.0);
        }
    }
    w
}

/// Projector onto the symmetric subspace, `(1⊗1 + W)/2`.
pub fn symmetric_projector(d: usize) -> CMatrix {
    (identity(d * d) + swap_operator(d)).scale(0.5)
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

/// `⟨a|M|b⟩`.
pub fn bracket(a: &CVector, m: &CMatrix, b: &CVector) -> Complex64 {
    a.dotc(&(m * b))
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.trace()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = c64(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
    }

    fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let g = CMatrix::from_fn(d, d, |_, _| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        (&g + g.adjoint()).scale(0.5)
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = hermitian_eig(&identity(3)).unwrap();
        assert!(e.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!((e.reconstruct() - identity(3)).norm() < 1e-12);

        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c64(2., 0.), c64(-1., 0.)]));
        let e = hermitian_eig(&d).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eig_pauli_x() {
        let e = hermitian_eig(&pauli_x()).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_bad_input() {
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(hermitian_eig(&rect), Err(Error::DimensionMismatch(_))));
        let mut nh = pauli_x();
        nh[(0, 1)] = c64(2.0, 0.0);
        match hermitian_eig(&nh) {
            Err(Error::NotHermitian(mag)) => assert!(mag > 0.1),
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn eig_reconstruction_random() {
        let mut rng = rng_stream(7, 0);
        for d in [2, 3, 5, 8] {
            let a = random_hermitian(d, &mut rng);
            let e = hermitian_eig(&a).unwrap();
            let v = &e.eigenvectors;
            assert!((e.reconstruct() - &a).norm() <= 1e-10 * a.norm().max(1.0));
            assert!((v.adjoint() * v - identity(d)).norm() <= 1e-10);
            assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn exp_special_cases() {
        assert!((unitary_exp(&CMatrix::zeros(3, 3)).unwrap() - identity(3)).norm() < 1e-14);
        let a = pauli_x().scale(std::f64::consts::FRAC_PI_2);
        let expected = pauli_x() * c64(0.0, -1.0);
        assert!((unitary_exp(&a).unwrap() - expected).norm() < 1e-12);
    }

    #[test]
    fn exp_is_unitary_and_inverts() {
        let mut rng = rng_stream(11, 0);
        for d in [2, 3, 4] {
            let a = random_hermitian(d, &mut rng);
            let u = unitary_exp(&a).unwrap();
            let v = unitary_exp(&(-&a)).unwrap();
            assert!(unitarity_defect(&u) <= 1e-10);
            assert!((u * v - identity(d)).norm() <= 1e-10);
        }
    }

    #[test]
    fn inv_sqrt_cases() {
        let r = inv_sqrt_spd(&RMatrix::identity(3, 3)).unwrap();
        assert!((r - RMatrix::identity(3, 3)).norm() < 1e-14);
        let r = inv_sqrt_spd(&(RMatrix::identity(2, 2) * 4.0)).unwrap();
        assert!((r - RMatrix::identity(2, 2) * 0.5).norm() < 1e-14);
        let r = inv_sqrt_spd(&RMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-14 && (r[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn inv_sqrt_random_spd() {
        let mut rng = rng_stream(5, 0);
        let g = RMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = &g * g.transpose() + RMatrix::identity(4, 4) * 0.1;
        let r = inv_sqrt_spd(&m).unwrap();
        assert!((&r * &m * &r - RMatrix::identity(4, 4)).norm() < 1e-8);
        assert!((&r - r.transpose()).norm() < 1e-12);
        assert!((&r * &m - &m * &r).norm() < 1e-8);
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let m = RMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(inv_sqrt_spd(&m), Err(Error::NearSingular(_))));
    }

    #[test]
    fn haar_basic_contract() {
        let mut rng = rng_stream(1, 0);
        let u1 = haar_unitary(1, &mut rng);
        assert!((u1[(0, 0)].norm() - 1.0).abs() < 1e-12);
        let a = haar_unitary(2, &mut rng_stream(42, 3));
        let b = haar_unitary(2, &mut rng_stream(42, 3));
        assert_eq!(a, b);
        for d in [2, 3, 6] {
            assert!(unitarity_defect(&haar_unitary(d, &mut rng)) <= 1e-10);
        }
    }

    #[test]
    fn haar_first_moment() {
        // E|U_00|^2 = 1/d; Var = (d-1)/(d^2 (d+1)), i.e. 1/12 for d = 2.
        let mut rng = rng_stream(2024, 0);
        let samples = 100_000;
        let mean = (0..samples)
            .map(|_| haar_unitary(2, &mut rng)[(0, 0)].norm_sqr())
            .sum::<f64>()
            / samples as f64;
        let se = (1.0f64 / 12.0 / samples as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn haar_left_invariance_statistical() {
        // Compare Re tr(V U) with Re tr(U) through their first two moments.
        let v = unitary_exp(&pauli_x().scale(0.7)).unwrap();
        let samples = 40_000;
        let mut rng = rng_stream(99, 0);
        let mut a = Vec::with_capacity(samples);
        let mut b = Vec::with_capacity(samples);
        for _ in 0..samples {
            a.push(haar_unitary(2, &mut rng).trace().re);
            b.push((&v * haar_unitary(2, &mut rng)).trace().re);
        }
        let moments = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            let s = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            (m, s)
        };
        let (ma, sa) = moments(&a);
        let (mb, sb) = moments(&b);
        // Re tr U has mean 0 and second moment 1/2 under Haar.
        let se_mean = (0.5f64 / samples as f64).sqrt();
        assert!((ma - mb).abs() < 4.0 * se_mean * 2f64.sqrt());
        assert!((sa - sb).abs() < 0.03);
        assert!((sa - 0.5).abs() < 0.03);
    }

    #[test]
    fn swap_and_symmetric_projector() {
        let w = swap_operator(2);
        let mut ket01 = CVector::zeros(4);
        ket01[1] = c64(1.0, 0.0);
        let out = &w * ket01;
        assert_eq!(out[2], c64(1.0, 0.0));
        for d in 2..5 {
            let p = symmetric_projector(d);
            assert!((p.trace().re - (d * (d + 1)) as f64 / 2.0).abs() < 1e-12);
            assert!((&p * &p - &p).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = rng_stream(3, 0);
        let a = random_unit_vector(2, &mut rng);
        let b = random_unit_vector(3, &mut rng);
        let rho = outer(&kron_vec(&a, &b), &kron_vec(&a, &b));
        let ra = partial_trace(&rho, &[2, 3], &[0]).unwrap();
        let rb = partial_trace(&rho, &[2, 3], &[1]).unwrap();
        assert!((ra - outer(&a, &a)).norm() < 1e-12);
        assert!((rb - outer(&b, &b)).norm() < 1e-12);
        let all = partial_trace(&rho, &[2, 3], &[]).unwrap();
        assert!((all[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-12);
        assert!(partial_trace(&rho, &[2, 2], &[0]).is_err());
    }

    #[test]
    fn hs_distance_contract() {
        let a = pauli_x();
        assert_eq!(hs_distance(&a, &a).unwrap(), 0.0);
        assert!(hs_distance(&a, &identity(3)).is_err());
    }
}
