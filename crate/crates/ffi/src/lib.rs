//! C interface to the spectral-filtering engine.
//!
//! Handles are opaque pointers created by `rodeo_*_new`-style constructors
//! and released with the matching `rodeo_*_free`. Every fallible call returns
//! a [`RodeoStatus`]; on failure a description is kept in thread-local
//! storage and can be copied out with [`rodeo_last_error_message`]. Calls
//! never unwind across the boundary.

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rodeo_core::error::Error;
use rodeo_core::hamiltonians::{build_anderson_from, build_heisenberg, HeisenbergParams};
use rodeo_core::rodeo::{
    draw_schedule, estimate_fa, estimate_fg, run_postselected, success_probability, RodeoConfig,
};
use rodeo_core::spectral::{
    eigendecompose, project_to_eigenbasis, weights_of, ComplexVector, EigenDecomposition,
    HermitianOperator, SpectralState,
};

/// Outcome of an interface call. Anything other than `Ok` leaves a message
/// readable through `rodeo_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RodeoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotHermitian = 3,
    DimensionMismatch = 4,
    IndexOutOfRange = 5,
    NumericalFailure = 6,
}

/// Opaque Hermitian operator handle.
pub struct RodeoOperator(HermitianOperator);

/// Opaque eigendecomposition handle.
pub struct RodeoEigensystem(EigenDecomposition);

/// Opaque handle for a state expressed over an eigenbasis, carrying its
/// accumulated post-selection probability.
pub struct RodeoState(SpectralState);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|slot| {
        let mut stored = slot.borrow_mut();
        stored.clear();
        stored.extend_from_slice(msg.as_bytes());
        stored.push(0);
    });
}

fn fail_msg(status: RodeoStatus, msg: &str) -> RodeoStatus {
    set_error(msg);
    status
}

fn fail(err: Error) -> RodeoStatus {
    let status = match err {
        Error::NotHermitian { .. } => RodeoStatus::NotHermitian,
        Error::DimensionMismatch { .. } | Error::SizeLimit { .. } => {
            RodeoStatus::DimensionMismatch
        }
        Error::IndexOutOfRange { .. } => RodeoStatus::IndexOutOfRange,
        Error::InvalidArgument(_) | Error::Unnormalized { .. } => RodeoStatus::InvalidArgument,
        _ => RodeoStatus::NumericalFailure,
    };
    set_error(&err.to_string());
    status
}

fn guarded<F: FnOnce() -> RodeoStatus>(f: F) -> RodeoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail_msg(RodeoStatus::NumericalFailure, "internal panic"),
    }
}

macro_rules! require_ref {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                return fail_msg(
                    RodeoStatus::NullPointer,
                    concat!(stringify!($ptr), " must not be NULL"),
                )
            }
        }
    };
}

macro_rules! require_out {
    ($ptr:expr) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => {
                return fail_msg(
                    RodeoStatus::NullPointer,
                    concat!(stringify!($ptr), " must not be NULL"),
                )
            }
        }
    };
}

/// Read `dim*dim` row-major entries from `re` and optional `im` into a
/// complex matrix, rejecting non-finite input at the boundary.
unsafe fn dense_from_parts(
    dim: usize,
    re: *const f64,
    im: *const f64,
) -> Result<Array2<Complex64>, (RodeoStatus, String)> {
    let n = dim
        .checked_mul(dim)
        .ok_or((RodeoStatus::InvalidArgument, "dimension overflow".into()))?;
    let re = unsafe { std::slice::from_raw_parts(re, n) };
    let im = if im.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(im, n) })
    };
    let mut m = Array2::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            let k = i * dim + j;
            let z = Complex64::new(re[k], im.map_or(0.0, |s| s[k]));
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err((
                    RodeoStatus::InvalidArgument,
                    format!("matrix entry ({i},{j}) is not finite"),
                ));
            }
            m[(i, j)] = z;
        }
    }
    Ok(m)
}

fn emit_operator(op: HermitianOperator, out: &mut *mut RodeoOperator) -> RodeoStatus {
    *out = Box::into_raw(Box::new(RodeoOperator(op)));
    RodeoStatus::Ok
}

/// Copy the message from the most recent failing call on this thread into
/// `buffer` as a NUL-terminated string, truncating to `capacity` bytes.
/// Returns the full length in bytes including the terminator (1 when no
/// call has failed yet); pass a NULL buffer to query the length alone.
#[no_mangle]
pub unsafe extern "C" fn rodeo_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let stored = slot.borrow();
        let msg: &[u8] = if stored.is_empty() { &[0] } else { &stored };
        if !buffer.is_null() && capacity > 0 {
            let n = msg.len().min(capacity);
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr(), buffer.cast::<u8>(), n);
                *buffer.add(n - 1) = 0;
            }
        }
        msg.len()
    })
}

/// Build a Hermitian operator from `dim*dim` row-major entries. `re` holds
/// the real parts; `im` may be NULL for a real matrix. Hermiticity is
/// validated.
#[no_mangle]
pub unsafe extern "C" fn rodeo_operator_dense(
    dim: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut RodeoOperator,
) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        *out = ptr::null_mut();
        if re.is_null() {
            return fail_msg(RodeoStatus::NullPointer, "re must not be NULL");
        }
        if dim == 0 {
            return fail_msg(RodeoStatus::InvalidArgument, "dimension must be positive");
        }
        let m = match unsafe { dense_from_parts(dim, re, im) } {
            Ok(m) => m,
            Err((status, msg)) => return fail_msg(status, &msg),
        };
        match HermitianOperator::new(m) {
            Ok(op) => emit_operator(op, out),
            Err(e) => fail(e),
        }
    })
}

/// Build the spin-chain Hamiltonian: exchange coupling `j` on neighbouring
/// pairs of a periodic chain plus a uniform field `h` along z.
#[no_mangle]
pub unsafe extern "C" fn rodeo_operator_heisenberg(
    sites: usize,
    j: f64,
    h: f64,
    out: *mut *mut RodeoOperator,
) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        *out = ptr::null_mut();
        let params = HeisenbergParams {
            sites,
            j,
            h,
            periodic: true,
        };
        match build_heisenberg(&params) {
            Ok(op) => emit_operator(op, out),
            Err(e) => fail(e),
        }
    })
}

/// Build the disordered-lattice Hamiltonian on a periodic chain of `sites`
/// sites: hopping −1 between neighbours and the given on-site energies on
/// the diagonal.
#[no_mangle]
pub unsafe extern "C" fn rodeo_operator_anderson(
    onsite: *const f64,
    sites: usize,
    out: *mut *mut RodeoOperator,
) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        *out = ptr::null_mut();
        if onsite.is_null() {
            return fail_msg(RodeoStatus::NullPointer, "onsite must not be NULL");
        }
        let c = unsafe { std::slice::from_raw_parts(onsite, sites) };
        if c.iter().any(|x| !x.is_finite()) {
            return fail_msg(
                RodeoStatus::InvalidArgument,
                "on-site energies must be finite",
            );
        }
        match build_anderson_from(c) {
            Ok(op) => emit_operator(op, out),
            Err(e) => fail(e),
        }
    })
}

/// Dimension of the operator, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn rodeo_operator_dim(op: *const RodeoOperator) -> usize {
    unsafe { op.as_ref() }.map_or(0, |op| op.0.dim())
}

/// Release an operator handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rodeo_operator_free(op: *mut RodeoOperator) {
    if !op.is_null() {
        drop(unsafe { Box::from_raw(op) });
    }
}

/// Diagonalize an operator into an eigensystem handle.
#[no_mangle]
pub unsafe extern "C" fn rodeo_eigensystem_new(
    op: *const RodeoOperator,
    out: *mut *mut RodeoEigensystem,
) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        *out = ptr::null_mut();
        let op = require_ref!(op);
        match eigendecompose(&op.0) {
            Ok(eig) => {
                *out = Box::into_raw(Box::new(RodeoEigensystem(eig)));
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Dimension of the eigensystem, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn rodeo_eigensystem_dim(eig: *const RodeoEigensystem) -> usize {
    unsafe { eig.as_ref() }.map_or(0, |eig| eig.0.dim())
}

/// Copy the eigenvalues in ascending order into `out`, which must hold
/// exactly `len == dim` entries.
#[no_mangle]
pub unsafe extern "C" fn rodeo_eigensystem_energies(
    eig: *const RodeoEigensystem,
    out: *mut f64,
    len: usize,
) -> RodeoStatus {
    guarded(|| {
        let eig = require_ref!(eig);
        if out.is_null() {
            return fail_msg(RodeoStatus::NullPointer, "out must not be NULL");
        }
        if len != eig.0.dim() {
            return fail(Error::DimensionMismatch {
                context: "energies buffer",
                expected: eig.0.dim(),
                found: len,
            });
        }
        let slot = unsafe { std::slice::from_raw_parts_mut(out, len) };
        slot.copy_from_slice(eig.0.energies());
        RodeoStatus::Ok
    })
}

/// Release an eigensystem handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rodeo_eigensystem_free(eig: *mut RodeoEigensystem) {
    if !eig.is_null() {
        drop(unsafe { Box::from_raw(eig) });
    }
}

/// Express computational-basis state `index` over the eigenbasis.
#[no_mangle]
pub unsafe extern "C" fn rodeo_state_basis(
    eig: *const RodeoEigensystem,
    index: usize,
    out: *mut *mut RodeoState,
) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        *out = ptr::null_mut();
        let eig = require_ref!(eig);
        let psi = match ComplexVector::basis(eig.0.dim(), index) {
            Ok(v) => v,
            Err(e) => return fail(e),
        };
        match project_to_eigenbasis(&psi, &eig.0) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(RodeoState(state)));
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Express a normalized computational-basis vector over the eigenbasis.
/// `re` holds the real parts of the `len == dim` amplitudes; `im` may be
/// NULL for a real vector.
#[no_mangle]
pub unsafe extern "C" fn rodeo_state_from_vector(
    eig: *const RodeoEigensystem,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut RodeoState,
) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        *out = ptr::null_mut();
        let eig = require_ref!(eig);
        if re.is_null() {
            return fail_msg(RodeoStatus::NullPointer, "re must not be NULL");
        }
        if len != eig.0.dim() {
            return fail(Error::DimensionMismatch {
                context: "state vector",
                expected: eig.0.dim(),
                found: len,
            });
        }
        let re = unsafe { std::slice::from_raw_parts(re, len) };
        let im = if im.is_null() {
            None
        } else {
            Some(unsafe { std::slice::from_raw_parts(im, len) })
        };
        let entries: Array1<Complex64> = (0..len)
            .map(|k| Complex64::new(re[k], im.map_or(0.0, |s| s[k])))
            .collect();
        let psi = match ComplexVector::new(entries) {
            Ok(v) => v,
            Err(e) => return fail(e),
        };
        match project_to_eigenbasis(&psi, &eig.0) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(RodeoState(state)));
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Dimension of the state, or 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn rodeo_state_dim(state: *const RodeoState) -> usize {
    unsafe { state.as_ref() }.map_or(0, |s| s.0.dim())
}

/// Joint probability of every success recorded so far, or NaN for a NULL
/// handle.
#[no_mangle]
pub unsafe extern "C" fn rodeo_state_survival_probability(state: *const RodeoState) -> f64 {
    unsafe { state.as_ref() }.map_or(f64::NAN, |s| s.0.survival_probability())
}

/// Copy the per-eigenvalue weights |a_j|² into `out`, which must hold
/// exactly `len == dim` entries.
#[no_mangle]
pub unsafe extern "C" fn rodeo_state_weights(
    state: *const RodeoState,
    out: *mut f64,
    len: usize,
) -> RodeoStatus {
    guarded(|| {
        let state = require_ref!(state);
        if out.is_null() {
            return fail_msg(RodeoStatus::NullPointer, "out must not be NULL");
        }
        if len != state.0.dim() {
            return fail(Error::DimensionMismatch {
                context: "weights buffer",
                expected: state.0.dim(),
                found: len,
            });
        }
        let slot = unsafe { std::slice::from_raw_parts_mut(out, len) };
        for (s, a) in slot.iter_mut().zip(state.0.amplitudes()) {
            *s = a.norm_sqr();
        }
        RodeoStatus::Ok
    })
}

/// Release a state handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rodeo_state_free(state: *mut RodeoState) {
    if !state.is_null() {
        drop(unsafe { Box::from_raw(state) });
    }
}

/// Draw the Gaussian cycle times t_1..t_cycles (mean 0, standard deviation
/// `t_rms`) deterministically from `seed` into `out`, which must hold
/// exactly `len == cycles` entries.
#[no_mangle]
pub unsafe extern "C" fn rodeo_schedule_times(
    cycles: usize,
    t_rms: f64,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> RodeoStatus {
    guarded(|| {
        if out.is_null() {
            return fail_msg(RodeoStatus::NullPointer, "out must not be NULL");
        }
        if len != cycles {
            return fail(Error::DimensionMismatch {
                context: "schedule buffer",
                expected: cycles,
                found: len,
            });
        }
        match draw_schedule(cycles, t_rms, seed) {
            Ok(schedule) => {
                let slot = unsafe { std::slice::from_raw_parts_mut(out, len) };
                slot.copy_from_slice(schedule.times());
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Probability that all `cycles` ancilla measurements succeed when the
/// filter sits at `filter_energy` and the times come from `seed`, computed
/// in closed form from the spectral weights of `state`.
#[no_mangle]
pub unsafe extern "C" fn rodeo_success_probability(
    state: *const RodeoState,
    eig: *const RodeoEigensystem,
    filter_energy: f64,
    cycles: usize,
    t_rms: f64,
    seed: u64,
    out: *mut f64,
) -> RodeoStatus {
    guarded(|| {
        let state = require_ref!(state);
        let eig = require_ref!(eig);
        let out = require_out!(out);
        let weights = match weights_of(&state.0, &eig.0) {
            Ok(w) => w,
            Err(e) => return fail(e),
        };
        match draw_schedule(cycles, t_rms, seed) {
            Ok(schedule) => {
                *out = success_probability(&weights, filter_energy, &schedule);
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Run `cycles` filter cycles post-selected on all-success, with times drawn
/// from `seed`. Writes the filtered state to `out_state` and, unless NULL,
/// the joint success probability to `out_joint`.
#[no_mangle]
pub unsafe extern "C" fn rodeo_run_postselected(
    state: *const RodeoState,
    eig: *const RodeoEigensystem,
    filter_energy: f64,
    cycles: usize,
    t_rms: f64,
    seed: u64,
    out_state: *mut *mut RodeoState,
    out_joint: *mut f64,
) -> RodeoStatus {
    guarded(|| {
        let out_state = require_out!(out_state);
        *out_state = ptr::null_mut();
        let state = require_ref!(state);
        let eig = require_ref!(eig);
        let config = RodeoConfig {
            cycles,
            t_rms,
            filter_energy,
            seed,
            recenter: false,
        };
        let schedule = match draw_schedule(cycles, t_rms, seed) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match run_postselected(&state.0, &eig.0, &config, &schedule) {
            Ok((filtered, joint)) => {
                if let Some(slot) = unsafe { out_joint.as_mut() } {
                    *slot = joint;
                }
                *out_state = Box::into_raw(Box::new(RodeoState(filtered)));
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Arithmetic-mean fidelity bound √(2⁻ᴺ(1−p)/(p+2⁻ᴺ(1−p))) for initial
/// overlap `p` and `n` cycles.
#[no_mangle]
pub unsafe extern "C" fn rodeo_estimate_fa(p: f64, n: u32, out: *mut f64) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        match estimate_fa(p, n) {
            Ok(f) => {
                *out = f;
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Geometric-mean fidelity bound: as `rodeo_estimate_fa` with 4⁻ᴺ in place
/// of 2⁻ᴺ.
#[no_mangle]
pub unsafe extern "C" fn rodeo_estimate_fg(p: f64, n: u32, out: *mut f64) -> RodeoStatus {
    guarded(|| {
        let out = require_out!(out);
        match estimate_fg(p, n) {
            Ok(f) => {
                *out = f;
                RodeoStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
