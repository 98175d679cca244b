//! Dense complex Hermitian linear algebra: eigendecomposition, basis
//! transforms, phase evolution, and eigenbasis state bookkeeping.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on dense matrix dimension.
pub const MAX_DENSE_DIM: usize = 4096;

const HERMITICITY_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-10;

/// Complex state vector in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    entries: Array1<Complex64>,
}

impl ComplexVector {
    pub fn new(entries: Array1<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("empty state vector".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument(
                "state vector has non-finite entries".into(),
            ));
        }
        Ok(Self { entries })
    }

    /// Unit basis vector e_index of the given dimension.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        let mut entries = Array1::zeros(dim);
        entries[index] = Complex64::new(1.0, 0.0);
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &Array1<Complex64> {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// |⟨self|other⟩|².
    pub fn overlap_sq(&self, other: &Self) -> f64 {
        let ip: Complex64 = self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        ip.norm_sqr()
    }
}

/// Dense d×d complex Hermitian matrix (energy units, ħ = 1).
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    entries: Array2<Complex64>,
}

impl HermitianOperator {
    pub fn new(entries: Array2<Complex64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                context: "HermitianOperator",
                expected: r,
                found: c,
            });
        }
        if r == 0 {
            return Err(Error::InvalidArgument("empty operator".into()));
        }
        if r > MAX_DENSE_DIM {
            return Err(Error::SizeLimit {
                context: "dense operator",
                requested: r,
                max: MAX_DENSE_DIM,
            });
        }
        let mut worst = (0usize, 0usize, 0.0f64);
        for i in 0..r {
            for j in i..r {
                let diff = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if diff > worst.2 {
                    worst = (i, j, diff);
                }
            }
        }
        if worst.2 > HERMITICITY_TOL {
            return Err(Error::NotHermitian {
                row: worst.0,
                col: worst.1,
                diff: worst.2,
                tol: HERMITICITY_TOL,
            });
        }
        Ok(Self { entries })
    }

    pub fn from_real(entries: Array2<f64>) -> Result<Self> {
        Self::new(entries.mapv(|x| Complex64::new(x, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    /// True when every imaginary part is exactly zero (enables the real
    /// symmetric eigensolver path).
    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Ascending eigenvalues with orthonormal eigenvectors (matrix columns).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    energies: Vec<f64>,
    vectors: Array2<Complex64>,
    source_dim: usize,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.source_dim
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Eigenvector j as a column view.
    pub fn vector(&self, j: usize) -> ArrayView1<'_, Complex64> {
        self.vectors.column(j)
    }

    pub fn vectors(&self) -> &Array2<Complex64> {
        &self.vectors
    }

    /// Index of the lowest level carrying weight above `min_weight` for the
    /// given amplitudes.
    pub fn lowest_occupied(&self, amplitudes: &Array1<Complex64>, min_weight: f64) -> Option<usize> {
        (0..self.source_dim).find(|&j| amplitudes[j].norm_sqr() > min_weight)
    }

    /// Indices of the degenerate level containing eigenvalue j
    /// (relative tolerance 1e-9).
    pub fn level_indices(&self, j: usize) -> Vec<usize> {
        let e = self.energies[j];
        let tol = 1e-9 * e.abs().max(1.0);
        (0..self.source_dim)
            .filter(|&k| (self.energies[k] - e).abs() <= tol)
            .collect()
    }
}

fn phase_fix_column(mut col: ArrayViewMut1<'_, Complex64>) {
    let mut best = 0usize;
    let mut best_mag = 0.0f64;
    for (i, z) in col.iter().enumerate() {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = col[best] / best_mag;
        let corr = phase.conj();
        col.mapv_inplace(|z| z * corr);
    }
}

/// Eigendecompose a Hermitian operator. Deterministic up to the documented
/// phase fix: each eigenvector's largest-magnitude entry is made real
/// positive.
pub fn eigendecompose(h: &HermitianOperator) -> Result<EigenDecomposition> {
    let d = h.dim();
    let (energies, mut vectors) = if h.is_real() {
        let real = h.entries.mapv(|z| z.re);
        let (vals, vecs) = real
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Format(format!("eigensolver failure: {e}")))?;
        (vals, vecs.mapv(|x| Complex64::new(x, 0.0)))
    } else {
        // The complex eigensolver is only reliable on column-major input:
        // row-major buffers reach LAPACK untransposed, which diagonalizes
        // the conjugate matrix and returns conjugated eigenvectors.
        let f_order = h.entries.t().as_standard_layout().to_owned().reversed_axes();
        f_order
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Format(format!("eigensolver failure: {e}")))?
    };
    for j in 0..d {
        phase_fix_column(vectors.column_mut(j));
    }
    Ok(EigenDecomposition {
        energies: energies.to_vec(),
        vectors,
        source_dim: d,
    })
}

/// State over an eigenbasis with the joint probability of the successes that
/// produced it.
#[derive(Debug, Clone)]
pub struct SpectralState {
    amplitudes: Array1<Complex64>,
    survival_probability: f64,
}

impl SpectralState {
    pub fn new(amplitudes: Array1<Complex64>, survival_probability: f64) -> Result<Self> {
        let norm_sq: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::Unnormalized {
                norm: norm_sq.sqrt(),
                tol: NORM_TOL,
            });
        }
        if !(0.0..=1.0).contains(&survival_probability) {
            return Err(Error::InvalidArgument(format!(
                "survival probability {survival_probability} outside [0,1]"
            )));
        }
        Ok(Self {
            amplitudes,
            survival_probability,
        })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amplitudes
    }

    pub fn survival_probability(&self) -> f64 {
        self.survival_probability
    }

    /// Weight carried by the listed amplitude indices.
    pub fn weight_of(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&j| self.amplitudes[j].norm_sqr()).sum()
    }
}

/// Express psi in the eigenbasis: a_j = ⟨v_j|psi⟩.
pub fn project_to_eigenbasis(psi: &ComplexVector, eig: &EigenDecomposition) -> Result<SpectralState> {
    if psi.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            context: "project_to_eigenbasis",
            expected: eig.dim(),
            found: psi.dim(),
        });
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::Unnormalized { norm, tol: NORM_TOL });
    }
    let d = eig.dim();
    let mut amplitudes = Array1::zeros(d);
    for j in 0..d {
        let mut a = Complex64::new(0.0, 0.0);
        for (v, p) in eig.vector(j).iter().zip(psi.entries().iter()) {
            a += v.conj() * p;
        }
        amplitudes[j] = a;
    }
    SpectralState::new(amplitudes, 1.0)
}

/// Reassemble the computational-basis vector from eigenbasis amplitudes.
pub fn reconstruct(state: &SpectralState, eig: &EigenDecomposition) -> Result<ComplexVector> {
    if state.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            context: "reconstruct",
            expected: eig.dim(),
            found: state.dim(),
        });
    }
    let psi = eig.vectors().dot(state.amplitudes());
    ComplexVector::new(psi)
}

/// a_j ← e^{−i E_j t} a_j.
pub fn evolve_phase(state: &SpectralState, eig: &EigenDecomposition, t: f64) -> Result<SpectralState> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite time {t}")));
    }
    if state.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            context: "evolve_phase",
            expected: eig.dim(),
            found: state.dim(),
        });
    }
    let mut amplitudes = state.amplitudes().clone();
    for (a, &e) in amplitudes.iter_mut().zip(eig.energies()) {
        *a *= Complex64::from_polar(1.0, -e * t);
    }
    Ok(SpectralState {
        amplitudes,
        survival_probability: state.survival_probability,
    })
}

/// Spectral weights w_j = |a_j|² at energies E_j.
#[derive(Debug, Clone)]
pub struct SpectralWeights {
    energies: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralWeights {
    pub fn new(energies: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if energies.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "SpectralWeights",
                expected: energies.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("negative or NaN weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Unnormalized {
                norm: total.sqrt(),
                tol: NORM_TOL,
            });
        }
        Ok(Self { energies, weights })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Merge exactly degenerate levels (relative tolerance 1e-9), summing
    /// their weights. Merged energies are the group means.
    pub fn merged(&self) -> SpectralWeights {
        let mut order: Vec<usize> = (0..self.energies.len()).collect();
        order.sort_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
        let mut energies = Vec::new();
        let mut weights = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let e0 = self.energies[order[i]];
            let tol = 1e-9 * e0.abs().max(1.0);
            let mut e_sum = 0.0;
            let mut w_sum = 0.0;
            let mut count = 0.0;
            let mut k = i;
            while k < order.len() && (self.energies[order[k]] - e0).abs() <= tol {
                e_sum += self.energies[order[k]];
                w_sum += self.weights[order[k]];
                count += 1.0;
                k += 1;
            }
            energies.push(e_sum / count);
            weights.push(w_sum);
            i = k;
        }
        SpectralWeights { energies, weights }
    }

    /// Levels with weight at least `min_weight`, as (energy, weight) pairs.
    pub fn occupied(&self, min_weight: f64) -> Vec<(f64, f64)> {
        self.energies
            .iter()
            .zip(self.weights.iter())
            .filter(|(_, &w)| w >= min_weight)
            .map(|(&e, &w)| (e, w))
            .collect()
    }
}

/// Raw (unmerged) weights of a state; use [`SpectralWeights::merged`] for the
/// level-summed view.
pub fn weights_of(state: &SpectralState, eig: &EigenDecomposition) -> Result<SpectralWeights> {
    if state.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            context: "weights_of",
            expected: eig.dim(),
            found: state.dim(),
        });
    }
    let weights: Vec<f64> = state.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    SpectralWeights::new(eig.energies().to_vec(), weights)
}
