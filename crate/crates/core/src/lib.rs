//! Classical numerical laboratory for rodeo-style spectral filtering.
//!
//! The crate builds model Hamiltonians (Heisenberg chains, disordered rings,
//! dense operators from JSON), eigendecomposes them exactly, and runs the
//! filtering pipeline in the eigenbasis: cycles of random-duration evolution
//! that suppress every eigencomponent away from a chosen filter energy. On
//! top of the cycle engine sit schedule-averaged spectral scans with peak
//! detection, a hierarchical energy search that shrinks its window
//! geometrically while growing the filter time, adiabatic and
//! phase-estimation baselines for method comparisons, and the `rodeo` CLI,
//! which writes CSV data plus a JSON manifest carrying the resolved
//! configuration and content digests.
//!
//! Everything stochastic is seeded. Random times come from per-(seed, index)
//! ChaCha streams derived with [`seeding::derive_seed`], so every result is
//! reproducible bit for bit and independent of thread count.
//!
//! - [`spectral`]: state vectors, Hermitian operators, eigendecomposition,
//!   spectral weights.
//! - [`hamiltonians`]: model builders and initial states.
//! - [`rodeo`]: schedules, cycle engine, success probabilities, residual
//!   estimates, and the full-statevector reference circuit.
//! - [`scan`]: energy scans, peak detection, hierarchical search.
//! - [`baselines`]: adiabatic evolution, phase-estimation filtering, method
//!   comparison sweeps.
//! - [`artifacts`]: CSV/manifest output and verification.
//! - [`cli`]: the command-line interface (also callable in-process).

pub mod artifacts;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod hamiltonians;
pub mod rodeo;
pub mod scan;
pub mod seeding;
pub mod spectral;
