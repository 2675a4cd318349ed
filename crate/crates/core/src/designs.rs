//! Exact and approximate complex projective 2-designs.
//!
//! Exact constructions cover mutually unbiased bases in prime dimension and
//! SIC-POVMs for `d ∈ {2, 3}`. Approximate designs are orbits of the
//! computational basis under Haar-random unitaries.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, kron, outer, symmetric_projector, tol, CMatrix, CVector};

/// A finite list of unit vectors in `C^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    d: usize,
    vectors: Vec<CVector>,
}

impl VectorSet {
    pub fn new(vectors: Vec<CVector>) -> Result<Self> {
        let d = vectors
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::Validation("empty vector set".into()))?;
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "vector {i} has length {}, expected {d}",
                    v.len()
                )));
            }
            let norm = v.norm();
            if (norm - 1.0).abs() > tol::SCALAR.max(1e-12) {
                return Err(Error::Validation(format!("vector {i} has norm {norm}")));
            }
        }
        Ok(VectorSet { d, vectors })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }

    pub fn from_bases(bases: &[Vec<CVector>]) -> Result<Self> {
        VectorSet::new(bases.iter().flatten().cloned().collect())
    }

    /// JSON form: one array of `[re, im]` pairs per vector.
    pub fn to_rows(&self) -> Vec<Vec<[f64; 2]>> {
        self.vectors.iter().map(vector_to_pairs).collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        VectorSet::new(rows.iter().map(|r| pairs_to_vector(r)).collect())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.to_rows()).expect("vector rows serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(text)?;
        VectorSet::from_rows(&rows)
    }
}

pub fn vector_to_pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn pairs_to_vector(pairs: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(pairs.len(), pairs.iter().map(|p| c64(p[0], p[1])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub hs_distance: f64,
    pub tolerance: f64,
    pub is_design: bool,
}

pub fn is_prime(d: usize) -> bool {
    d >= 2 && (2..).take_while(|p| p * p <= d).all(|p| !d.is_multiple_of(p))
}

/// `d + 1` mutually unbiased bases for prime `d`.
///
/// The first basis is computational; the others are
/// `|φ^b_l⟩ = d^{-1/2} Σ_j ω^{b j² + l j} |j⟩` (with `ω = i` driving the
/// quadratic phase when `d = 2`).
pub fn mub_prime(d: usize) -> Result<Vec<Vec<CVector>>> {
    if !is_prime(d) {
        return Err(Error::UnsupportedDimension {
            d,
            hint: "exact MUBs are built for prime d only; use an approximate design".into(),
        });
    }
    let amp = 1.0 / (d as f64).sqrt();
    let mut bases = Vec::with_capacity(d + 1);
    bases.push((0..d).map(|k| basis_vector(d, k)).collect());
    for b in 0..d {
        let basis = (0..d)
            .map(|l| {
                CVector::from_fn(d, |j, _| {
                    let phase = if d == 2 {
                        // i^{b j²} (-1)^{l j}
                        PI / 2.0 * (b * j * j) as f64 + PI * (l * j) as f64
                    } else {
                        2.0 * PI * ((b * j * j + l * j) % d) as f64 / d as f64
                    };
                    Complex64::from_polar(amp, phase)
                })
            })
            .collect();
        bases.push(basis);
    }
    Ok(bases)
}

pub fn basis_vector(d: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[k] = c64(1.0, 0.0);
    v
}

/// Weyl-Heisenberg displacement `X^p Z^q`.
fn displacement(d: usize, p: usize, q: usize) -> CMatrix {
    let omega = 2.0 * PI / d as f64;
    CMatrix::from_fn(d, d, |r, c| {
        if r == (c + p) % d {
            Complex64::from_polar(1.0, omega * (q * c) as f64)
        } else {
            c64(0.0, 0.0)
        }
    })
}

/// SIC fiducials in closed form.
///
/// - `d = 2`: Bloch vector `(1,1,1)/√3`, i.e. `cos(a)|0⟩ + e^{iπ/4} sin(a)|1⟩`
///   with `cos 2a = 1/√3`.
/// - `d = 3`: the Hesse fiducial `(0, 1, -1)/√2`.
///
/// The full SIC is the Weyl-Heisenberg orbit of the fiducial; regenerate by
/// applying [`displacement`] for all `(p, q) ∈ Z_d²`.
fn sic_fiducial(d: usize) -> Option<CVector> {
    match d {
        2 => {
            let a = 0.5 * (1.0 / 3f64.sqrt()).acos();
            Some(CVector::from_vec(vec![
                c64(a.cos(), 0.0),
                Complex64::from_polar(a.sin(), PI / 4.0),
            ]))
        }
        3 => Some(CVector::from_vec(vec![
            c64(0.0, 0.0),
            c64(FRAC_1_SQRT_2, 0.0),
            c64(-FRAC_1_SQRT_2, 0.0),
        ])),
        _ => None,
    }
}

/// `d²` equiangular unit vectors with `|⟨χ_i|χ_j⟩|² = 1/(d+1)`.
pub fn sic_povm(d: usize) -> Result<VectorSet> {
    let fiducial = sic_fiducial(d).ok_or_else(|| Error::UnsupportedDimension {
        d,
        hint: "SIC-POVMs are tabulated for d in {2, 3}; use `approx` (Haar-sampled approximate designs)".into(),
    })?;
    let mut vectors = Vec::with_capacity(d * d);
    for p in 0..d {
        for q in 0..d {
            vectors.push(displacement(d, p, q) * &fiducial);
        }
    }
    VectorSet::new(vectors)
}

/// Averaged two-fold frame operator `(1/m) Σ_i [|τ_i⟩⟨τ_i|]^{⊗2}`.
pub fn frame_operator(set: &VectorSet) -> CMatrix {
    let d = set.dim();
    let mut acc = CMatrix::zeros(d * d, d * d);
    for v in set.vectors() {
        let p = outer(v, v);
        acc += kron(&p, &p);
    }
    acc / c64(set.len() as f64, 0.0)
}

/// Haar two-fold average `2Π₊/(d(d+1))`.
pub fn design_target(d: usize) -> CMatrix {
    symmetric_projector(d) * c64(2.0 / (d * (d + 1)) as f64, 0.0)
}

pub const DEFAULT_DESIGN_TOL: f64 = 1e-10;

pub fn verify_2design(set: &VectorSet) -> DesignReport {
    verify_2design_with_tol(set, DEFAULT_DESIGN_TOL)
}

pub fn verify_2design_with_tol(set: &VectorSet, tolerance: f64) -> DesignReport {
    let dist = linalg::hs_distance(&frame_operator(set), &design_target(set.dim()))
        .expect("frame operator and target share a shape");
    DesignReport {
        hs_distance: dist,
        tolerance,
        is_design: dist <= tolerance,
    }
}

/// Smallest integer `m` with
/// `m ≥ 4(d+1) ln2 / ε² · ln[2(d²-1)/(1-q)]`.
pub fn chernoff_sample_size(d: usize, epsilon: f64, q: f64) -> Result<usize> {
    if d < 2 {
        return Err(Error::Validation(format!("d must be >= 2, got {d}")));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::Validation(format!("epsilon must lie in (0, 1/2], got {epsilon}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Validation(format!("q must lie in (0, 1), got {q}")));
    }
    let bound = 4.0 * (d as f64 + 1.0) * std::f64::consts::LN_2 / (epsilon * epsilon)
        * (2.0 * ((d * d - 1) as f64) / (1.0 - q)).ln();
    Ok(bound.ceil().max(1.0) as usize)
}

/// `m` i.i.d. Haar unitaries drawn from `rng`.
pub fn sample_approx_design<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Result<Vec<CMatrix>> {
    if m == 0 {
        return Err(Error::Validation("approximate design needs m >= 1".into()));
    }
    Ok((0..m).map(|_| linalg::haar_unitary(d, rng)).collect())
}

/// The `m d` vectors `U_b|k⟩`, ordered `b`-major.
pub fn approx_design_vectors(unitaries: &[CMatrix]) -> Result<VectorSet> {
    let vectors = unitaries
        .iter()
        .flat_map(|u| (0..u.ncols()).map(move |k| u.column(k).into_owned()))
        .collect();
    VectorSet::new(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng_stream;

    fn check_mubs(d: usize) {
        let bases = mub_prime(d).unwrap();
        assert_eq!(bases.len(), d + 1);
        let target = 1.0 / (d as f64).sqrt();
        for (a, ba) in bases.iter().enumerate() {
            for (i, u) in ba.iter().enumerate() {
                for (j, v) in ba.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((u.dotc(v).norm() - want).abs() < 1e-10);
                }
            }
            for bb in bases.iter().skip(a + 1) {
                for u in ba {
                    for v in bb {
                        assert!((u.dotc(v).norm() - target).abs() < 1e-10, "d={d}");
                    }
                }
            }
        }
        let set = VectorSet::from_bases(&bases).unwrap();
        assert!(verify_2design(&set).is_design);
    }

    #[test]
    fn mubs_prime_dimensions() {
        for d in [2, 3, 5, 7] {
            check_mubs(d);
        }
    }

    #[test]
    fn mubs_qubit_are_pauli_eigenbases() {
        let bases = mub_prime(2).unwrap();
        let s = FRAC_1_SQRT_2;
        // second basis: |±⟩, third: |±i⟩
        assert!((bases[1][1][1] - c64(-s, 0.0)).norm() < 1e-15);
        assert!((bases[2][0][1] - c64(0.0, s)).norm() < 1e-15);
    }

    #[test]
    fn mubs_reject_composite() {
        assert!(matches!(mub_prime(4), Err(Error::UnsupportedDimension { d: 4, .. })));
        assert!(mub_prime(1).is_err());
    }

    #[test]
    fn sic_overlaps_and_completeness() {
        for d in [2usize, 3] {
            let sic = sic_povm(d).unwrap();
            assert_eq!(sic.len(), d * d);
            let v = sic.vectors();
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if i != j {
                        let o = v[i].dotc(&v[j]).norm_sqr();
                        assert!((o - 1.0 / (d as f64 + 1.0)).abs() < 1e-10, "d={d} ({i},{j}) {o}");
                    }
                }
            }
            let sum = v.iter().fold(CMatrix::zeros(d, d), |acc, x| acc + outer(x, x)) / c64(d as f64, 0.0);
            assert!((sum - linalg::identity(d)).norm() < 1e-10);
            assert!(verify_2design(&sic).is_design);
        }
    }

    #[test]
    fn sic_unsupported_suggests_approx() {
        let err = sic_povm(5).unwrap_err().to_string();
        assert!(err.contains("approx"), "{err}");
    }

    #[test]
    fn single_basis_is_not_a_design() {
        let set = VectorSet::new(vec![basis_vector(2, 0), basis_vector(2, 1)]).unwrap();
        let report = verify_2design(&set);
        assert!(!report.is_design);
        // Frame operator diag(1/2,0,0,1/2) against Π₊/3: entries
        // (1/2-1/3)² twice, (1/6)² for the four symmetric-block entries.
        let expected = (2.0 * (1.0f64 / 6.0).powi(2) + 4.0 * (1.0f64 / 6.0).powi(2)).sqrt();
        assert!((report.hs_distance - expected).abs() < 1e-12);
    }

    #[test]
    fn chernoff_values() {
        let by_hand = (4.0 * 3.0 * 2f64.ln() / 0.25 * (6.0f64 / 0.05).ln()).ceil() as usize;
        assert_eq!(chernoff_sample_size(2, 0.5, 0.95).unwrap(), by_hand);
        assert_eq!(by_hand, 160);
        let m1 = chernoff_sample_size(3, 0.2, 0.9).unwrap() as f64;
        let m2 = chernoff_sample_size(3, 0.1, 0.9).unwrap() as f64;
        assert!((m2 / m1 - 4.0).abs() < 0.01);
        let qs = [0.5, 0.9, 0.99, 0.999];
        let ms: Vec<usize> = qs.iter().map(|&q| chernoff_sample_size(2, 0.3, q).unwrap()).collect();
        assert!(ms.windows(2).all(|w| w[0] < w[1]));
        assert!(chernoff_sample_size(2, 0.6, 0.9).is_err());
        assert!(chernoff_sample_size(2, 0.0, 0.9).is_err());
        assert!(chernoff_sample_size(2, 0.3, 1.0).is_err());
    }

    #[test]
    fn approx_designs_improve_with_m() {
        let us = sample_approx_design(2, 1, &mut rng_stream(1, 0)).unwrap();
        assert!(verify_2design(&approx_design_vectors(&us).unwrap()).hs_distance > 1e-3);
        let again = sample_approx_design(2, 1, &mut rng_stream(1, 0)).unwrap();
        assert_eq!(us, again);

        let mean_dist = |m: usize| {
            (0..20)
                .map(|i| {
                    let us = sample_approx_design(2, m, &mut rng_stream(2, i)).unwrap();
                    verify_2design(&approx_design_vectors(&us).unwrap()).hs_distance
                })
                .sum::<f64>()
                / 20.0
        };
        let small = mean_dist(4);
        let large = mean_dist(256);
        assert!(large < small / 4.0, "{small} -> {large}");
    }

    #[test]
    fn vector_set_json_roundtrip() {
        let sic = sic_povm(2).unwrap();
        let text = serde_json::to_string(&sic.to_json()).unwrap();
        assert_eq!(VectorSet::from_json(&text).unwrap(), sic);
    }
}
