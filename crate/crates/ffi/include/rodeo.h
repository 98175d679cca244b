#ifndef RODEO_H
#define RODEO_H

/* Generated from the rodeo-ffi crate; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an interface call. Anything other than `Ok` leaves a message
 * readable through `rodeo_last_error_message`.
 */
typedef enum RodeoStatus {
  RODEO_STATUS_OK = 0,
  RODEO_STATUS_NULL_POINTER = 1,
  RODEO_STATUS_INVALID_ARGUMENT = 2,
  RODEO_STATUS_NOT_HERMITIAN = 3,
  RODEO_STATUS_DIMENSION_MISMATCH = 4,
  RODEO_STATUS_INDEX_OUT_OF_RANGE = 5,
  RODEO_STATUS_NUMERICAL_FAILURE = 6,
} RodeoStatus;

/**
 * Opaque eigendecomposition handle.
 */
typedef struct RodeoEigensystem RodeoEigensystem;

/**
 * Opaque Hermitian operator handle.
 */
typedef struct RodeoOperator RodeoOperator;

/**
 * Opaque handle for a state expressed over an eigenbasis, carrying its
 * accumulated post-selection probability.
 */
typedef struct RodeoState RodeoState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the message from the most recent failing call on this thread into
 * `buffer` as a NUL-terminated string, truncating to `capacity` bytes.
 * Returns the full length in bytes including the terminator (1 when no
 * call has failed yet); pass a NULL buffer to query the length alone.
 */
size_t rodeo_last_error_message(char *buffer, size_t capacity);

/**
 * Build a Hermitian operator from `dim*dim` row-major entries. `re` holds
 * the real parts; `im` may be NULL for a real matrix. Hermiticity is
 * validated.
 */
enum RodeoStatus rodeo_operator_dense(size_t dim,
                                      const double *re,
                                      const double *im,
                                      struct RodeoOperator **out);

/**
 * Build the spin-chain Hamiltonian: exchange coupling `j` on neighbouring
 * pairs of a periodic chain plus a uniform field `h` along z.
 */
enum RodeoStatus rodeo_operator_heisenberg(size_t sites,
                                           double j,
                                           double h,
                                           struct RodeoOperator **out);

/**
 * Build the disordered-lattice Hamiltonian on a periodic chain of `sites`
 * sites: hopping −1 between neighbours and the given on-site energies on
 * the diagonal.
 */
enum RodeoStatus rodeo_operator_anderson(const double *onsite,
                                         size_t sites,
                                         struct RodeoOperator **out);

/**
 * Dimension of the operator, or 0 for a NULL handle.
 */
size_t rodeo_operator_dim(const struct RodeoOperator *op);

/**
 * Release an operator handle. NULL is ignored.
 */
void rodeo_operator_free(struct RodeoOperator *op);

/**
 * Diagonalize an operator into an eigensystem handle.
 */
enum RodeoStatus rodeo_eigensystem_new(const struct RodeoOperator *op,
                                       struct RodeoEigensystem **out);

/**
 * Dimension of the eigensystem, or 0 for a NULL handle.
 */
size_t rodeo_eigensystem_dim(const struct RodeoEigensystem *eig);

/**
 * Copy the eigenvalues in ascending order into `out`, which must hold
 * exactly `len == dim` entries.
 */
enum RodeoStatus rodeo_eigensystem_energies(const struct RodeoEigensystem *eig,
                                            double *out,
                                            size_t len);

/**
 * Release an eigensystem handle. NULL is ignored.
 */
void rodeo_eigensystem_free(struct RodeoEigensystem *eig);

/**
 * Express computational-basis state `index` over the eigenbasis.
 */
enum RodeoStatus rodeo_state_basis(const struct RodeoEigensystem *eig,
                                   size_t index,
                                   struct RodeoState **out);

/**
 * Express a normalized computational-basis vector over the eigenbasis.
 * `re` holds the real parts of the `len == dim` amplitudes; `im` may be
 * NULL for a real vector.
 */
enum RodeoStatus rodeo_state_from_vector(const struct RodeoEigensystem *eig,
                                         const double *re,
                                         const double *im,
                                         size_t len,
                                         struct RodeoState **out);

/**
 * Dimension of the state, or 0 for a NULL handle.
 */
size_t rodeo_state_dim(const struct RodeoState *state);

/**
 * Joint probability of every success recorded so far, or NaN for a NULL
 * handle.
 */
double rodeo_state_survival_probability(const struct RodeoState *state);

/**
 * Copy the per-eigenvalue weights |a_j|² into `out`, which must hold
 * exactly `len == dim` entries.
 */
enum RodeoStatus rodeo_state_weights(const struct RodeoState *state, double *out, size_t len);

/**
 * Release a state handle. NULL is ignored.
 */
void rodeo_state_free(struct RodeoState *state);

/**
 * Draw the Gaussian cycle times t_1..t_cycles (mean 0, standard deviation
 * `t_rms`) deterministically from `seed` into `out`, which must hold
 * exactly `len == cycles` entries.
 */
enum RodeoStatus rodeo_schedule_times(size_t cycles,
                                      double t_rms,
                                      uint64_t seed,
                                      double *out,
                                      size_t len);

/**
 * Probability that all `cycles` ancilla measurements succeed when the
 * filter sits at `filter_energy` and the times come from `seed`, computed
 * in closed form from the spectral weights of `state`.
 */
enum RodeoStatus rodeo_success_probability(const struct RodeoState *state,
                                           const struct RodeoEigensystem *eig,
                                           double filter_energy,
                                           size_t cycles,
                                           double t_rms,
                                           uint64_t seed,
                                           double *out);

/**
 * Run `cycles` filter cycles post-selected on all-success, with times drawn
 * from `seed`. Writes the filtered state to `out_state` and, unless NULL,
 * the joint success probability to `out_joint`.
 */
enum RodeoStatus rodeo_run_postselected(const struct RodeoState *state,
                                        const struct RodeoEigensystem *eig,
                                        double filter_energy,
                                        size_t cycles,
                                        double t_rms,
                                        uint64_t seed,
                                        struct RodeoState **out_state,
                                        double *out_joint);

/**
 * Arithmetic-mean fidelity bound √(2⁻ᴺ(1−p)/(p+2⁻ᴺ(1−p))) for initial
 * overlap `p` and `n` cycles.
 */
enum RodeoStatus rodeo_estimate_fa(double p, uint32_t n, double *out);

/**
 * Geometric-mean fidelity bound: as `rodeo_estimate_fa` with 4⁻ᴺ in place
 * of 2⁻ᴺ.
 */
enum RodeoStatus rodeo_estimate_fg(double p, uint32_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RODEO_H */
