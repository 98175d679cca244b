//! Model Hamiltonians: closed Heisenberg spin chain in a uniform field,
//! one-dimensional Anderson lattice with diagonal disorder, the staggered-field
//! initial Hamiltonian, product initial states, and JSON file ingest.
//!
//! Spin convention: site 1 is the most significant bit of the basis index,
//! σ^z|0⟩ = +|0⟩, σ^z|1⟩ = −|1⟩. Spin sites are 1-based, lattice sites 0-based.

use ndarray::prelude::*;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seeding;
use crate::spectral::{ComplexVector, HermitianOperator};

/// Largest spin chain the dense engines accept (2^12 = 4096 states).
pub const MAX_SITES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergParams {
    pub sites: usize,
    pub j: f64,
    pub h: f64,
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Disorder {
    /// Explicit on-site energies c_0..c_{L−1}.
    Explicit(Vec<f64>),
    /// I.i.d. Gaussian, mean 0, standard deviation `rms`, drawn from `seed`.
    Gaussian { rms: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AndersonParams {
    pub sites: usize,
    pub disorder: Disorder,
}

/// σ^z eigenvalue of site `site` (1-based) in basis state `b`.
#[inline]
fn sz(b: usize, site: usize, sites: usize) -> f64 {
    1.0 - 2.0 * (((b >> (sites - site)) & 1) as f64)
}

#[inline]
fn flip(b: usize, site: usize, sites: usize) -> usize {
    b ^ (1 << (sites - site))
}

fn check_sites(sites: usize) -> Result<()> {
    if sites < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 sites, got {sites}"
        )));
    }
    if sites > MAX_SITES {
        return Err(Error::SizeLimit {
            context: "spin chain",
            requested: sites,
            max: MAX_SITES,
        });
    }
    Ok(())
}

/// Deduplicated nearest-neighbor bonds of the closed chain, as 1-based
/// unordered pairs (so L = 2 has exactly one bond).
fn chain_bonds(sites: usize, periodic: bool) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for j in 1..sites {
        set.insert((j, j + 1));
    }
    if periodic {
        let pair = if sites == 2 { (1, 2) } else { (1, sites) };
        set.insert(pair);
    }
    set.into_iter().collect()
}

/// H = J Σ_{⟨j,k⟩} σ⃗_j·σ⃗_k + h Σ_j σ^z_j on the closed chain.
pub fn build_heisenberg(p: &HeisenbergParams) -> Result<HermitianOperator> {
    check_sites(p.sites)?;
    let dim = 1usize << p.sites;
    let bonds = chain_bonds(p.sites, p.periodic);
    let mut m = Array2::<f64>::zeros((dim, dim));
    for b in 0..dim {
        let mut diag = 0.0;
        for site in 1..=p.sites {
            diag += p.h * sz(b, site, p.sites);
        }
        for &(j, k) in &bonds {
            let zz = sz(b, j, p.sites) * sz(b, k, p.sites);
            diag += p.j * zz;
            if zz < 0.0 {
                // σ^x σ^x + σ^y σ^y flips an antiparallel pair with element 2J.
                let b2 = flip(flip(b, j, p.sites), k, p.sites);
                m[(b2, b)] += 2.0 * p.j;
            }
        }
        m[(b, b)] = diag;
    }
    HermitianOperator::from_real(m)
}

/// H_I = Σ_{j=1}^{L} (−1)^j σ^z_j; diagonal, ground state |0101...⟩ at −L.
pub fn build_staggered_field(sites: usize) -> Result<HermitianOperator> {
    check_sites(sites)?;
    let dim = 1usize << sites;
    let mut m = Array2::<f64>::zeros((dim, dim));
    for b in 0..dim {
        let mut diag = 0.0;
        for site in 1..=sites {
            let sign = if site % 2 == 1 { -1.0 } else { 1.0 };
            diag += sign * sz(b, site, sites);
        }
        m[(b, b)] = diag;
    }
    HermitianOperator::from_real(m)
}

/// Realize the disorder sequence of an Anderson instance.
pub fn realize_disorder(p: &AndersonParams) -> Result<Vec<f64>> {
    if p.sites < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 lattice sites, got {}",
            p.sites
        )));
    }
    match &p.disorder {
        Disorder::Explicit(c) => {
            if c.len() != p.sites {
                return Err(Error::DimensionMismatch {
                    context: "disorder sequence",
                    expected: p.sites,
                    found: c.len(),
                });
            }
            Ok(c.clone())
        }
        Disorder::Gaussian { rms, seed } => {
            if !(*rms > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "disorder rms must be positive, got {rms}"
                )));
            }
            let mut rng = seeding::rng_from(*seed);
            Ok((0..p.sites)
                .map(|_| rms * rng.sample::<f64, _>(StandardNormal))
                .collect())
        }
    }
}

/// Build the periodic tight-binding matrix for a realized disorder sequence.
pub fn build_anderson_from(c: &[f64]) -> Result<HermitianOperator> {
    let l = c.len();
    if l < 2 || l > crate::spectral::MAX_DENSE_DIM {
        return Err(Error::SizeLimit {
            context: "lattice",
            requested: l,
            max: crate::spectral::MAX_DENSE_DIM,
        });
    }
    let mut m = Array2::<f64>::zeros((l, l));
    for k in 0..l {
        m[(k, k)] = c[k];
        let next = (k + 1) % l;
        m[(k, next)] = -1.0;
        m[(next, k)] = -1.0;
    }
    HermitianOperator::from_real(m)
}

/// [H]_{k′,k} = −δ_{k′,k±1 (mod L)} + c_k δ_{k′,k}.
pub fn build_anderson(p: &AndersonParams) -> Result<HermitianOperator> {
    build_anderson_from(&realize_disorder(p)?)
}

/// Site of the lowest diagonal element; ties break to the lowest index.
pub fn find_kmin(p: &AndersonParams) -> Result<usize> {
    let c = realize_disorder(p)?;
    let mut best = 0usize;
    for (k, &v) in c.iter().enumerate() {
        if v < c[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Basis product state from a bit string; site 1 is the leftmost character.
pub fn build_product_state(bits: &str) -> Result<ComplexVector> {
    let sites = bits.len();
    check_sites(sites)?;
    let mut index = 0usize;
    for ch in bits.chars() {
        index <<= 1;
        match ch {
            '0' => {}
            '1' => index |= 1,
            other => {
                return Err(Error::Format(format!(
                    "product state may contain only 0/1, found {other:?}"
                )))
            }
        }
    }
    ComplexVector::basis(1 << sites, index)
}

#[derive(Serialize, Deserialize)]
struct FileHamiltonian {
    dim: usize,
    entries: Vec<(usize, usize, f64, f64)>,
}

const FILE_HERMITICITY_TOL: f64 = 1e-9;

/// Load a Hermitian operator from the JSON COO format
/// `{"dim": d, "entries": [[row, col, re, im], ...]}` (0-based indices;
/// entries may cover only one triangle).
pub fn load_hamiltonian(path: &Path) -> Result<HermitianOperator> {
    let text = std::fs::read_to_string(path)?;
    let file: FileHamiltonian =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let d = file.dim;
    if d == 0 || d > crate::spectral::MAX_DENSE_DIM {
        return Err(Error::SizeLimit {
            context: "file Hamiltonian",
            requested: d,
            max: crate::spectral::MAX_DENSE_DIM,
        });
    }
    let mut m = Array2::<Complex64>::zeros((d, d));
    let mut seen = BTreeSet::new();
    for &(row, col, re, im) in &file.entries {
        if row >= d || col >= d {
            return Err(Error::IndexOutOfRange {
                index: row.max(col),
                dim: d,
            });
        }
        if !seen.insert((row, col)) {
            return Err(Error::DuplicateEntry { row, col });
        }
        m[(row, col)] = Complex64::new(re, im);
    }
    // Fill the missing triangle by conjugate symmetry, then validate what was
    // given explicitly.
    let mut worst = (0usize, 0usize, 0.0f64);
    for i in 0..d {
        for j in 0..d {
            let here = seen.contains(&(i, j));
            let there = seen.contains(&(j, i));
            if here && !there {
                m[(j, i)] = m[(i, j)].conj();
            } else if here && there && j >= i {
                let diff = (m[(i, j)] - m[(j, i)].conj()).norm();
                if diff > worst.2 {
                    worst = (i, j, diff);
                }
            }
        }
    }
    if worst.2 > FILE_HERMITICITY_TOL {
        return Err(Error::NotHermitian {
            row: worst.0,
            col: worst.1,
            diff: worst.2,
            tol: FILE_HERMITICITY_TOL,
        });
    }
    // Symmetrize residual asymmetry below the file tolerance so the strict
    // operator invariant holds.
    for i in 0..d {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..d {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    HermitianOperator::new(m)
}

/// Write an operator in the JSON COO format (upper triangle only).
pub fn save_hamiltonian(h: &HermitianOperator, path: &Path) -> Result<()> {
    let d = h.dim();
    let mut entries = Vec::new();
    for i in 0..d {
        for j in i..d {
            let z = h.entries()[(i, j)];
            if z != Complex64::new(0.0, 0.0) {
                entries.push((i, j, z.re, z.im));
            }
        }
    }
    let file = FileHamiltonian { dim: d, entries };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
