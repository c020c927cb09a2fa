/* C interface to the qnd QND measurement simulator. Generated by cbindgen; do not edit. */

#ifndef QND_H
#define QND_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum QndStatus {
  QND_STATUS_OK = 0,
  QND_STATUS_NULL_POINTER = 1,
  QND_STATUS_OUT_OF_RANGE = 2,
  QND_STATUS_INVALID_ARGUMENT = 3,
  QND_STATUS_INVALID_STATE = 4,
  QND_STATUS_EMPTY_POST_SELECTION = 5,
  QND_STATUS_SINGULAR = 6,
  QND_STATUS_INVARIANT_VIOLATED = 7,
  QND_STATUS_PANIC = 8,
} QndStatus;

// Measured observable of the CNOT device.
typedef enum QndBasis {
  QND_BASIS_Z = 0,
  QND_BASIS_X = 1,
  QND_BASIS_Y = 2,
} QndBasis;

typedef enum QndPost {
  QND_POST_PLUS = 0,
  QND_POST_MINUS = 1,
} QndPost;

// One pass through the optical gate.
typedef struct QndCoincidence QndCoincidence;

// Rows of a strength sweep, in input order.
typedef struct QndSweep QndSweep;

// Fidelities from recorded distributions; a figure is NaN when the data
// needed for it was not given.
typedef struct QndFidelities {
  double f_m;
  double f_qnd;
  double f_qsp;
} QndFidelities;

// One strength of the CNOT device, characterized on the six-state ensemble.
typedef struct QndSweepRow {
  double gamma;
  double f_m;
  double f_qnd;
  double f_qsp;
  double k;
  double k_bar;
  double englert;
  double c2_raw;
  double c2_shortcut;
} QndSweepRow;

typedef struct QndComplex {
  double re;
  double im;
} QndComplex;

typedef struct QndFailureBreakdown {
  double both_in_signal;
  double both_in_meter;
  double dump_occupied;
} QndFailureBreakdown;

// Post-selected means of the `|1⟩` population for both final outcomes.
typedef struct QndPostselected {
  double plus_value;
  double minus_value;
  double p_plus;
  double p_minus;
} QndPostselected;

typedef struct QndWeakEstimate {
  double value;
  double std_error;
  uint64_t shots;
  uint64_t retained;
} QndWeakEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *qnd_last_error_message(void);

// Library version as a static nul-terminated string.
const char *qnd_version(void);

// Fidelities from recorded outcome weights, each normalized before use.
// `p_out`, `p_m` and `conditional` may be null; `conditional` needs `p_m`.
//
// # Safety
// Non-null pointers must be valid for `len` reads; `out` for one write.
enum QndStatus qnd_fidelities(const double *p_in,
                              const double *p_out,
                              const double *p_m,
                              const double *conditional,
                              size_t len,
                              struct QndFidelities *out);

// Characterizes the CNOT device at meter strength `gamma`.
//
// # Safety
// `out` must be valid for one write.
enum QndStatus qnd_cnot_characterize(double gamma, enum QndBasis basis, struct QndSweepRow *out);

// Sweeps the CNOT device over `len` strengths.
//
// # Safety
// `gammas` must be valid for `len` reads and `out` for one write. The
// handle written to `out` must be released with [`qnd_sweep_free`].
enum QndStatus qnd_sweep_new(const double *gammas,
                             size_t len,
                             enum QndBasis basis,
                             struct QndSweep **out);

// Number of rows; 0 for a null handle.
//
// # Safety
// `sweep` must be null or a live handle from [`qnd_sweep_new`].
size_t qnd_sweep_len(const struct QndSweep *sweep);

// # Safety
// `sweep` must be a live handle and `out` valid for one write.
enum QndStatus qnd_sweep_row(const struct QndSweep *sweep, size_t index, struct QndSweepRow *out);

// # Safety
// `sweep` must be null or a handle from [`qnd_sweep_new`] not yet freed.
void qnd_sweep_free(struct QndSweep *sweep);

// Runs the optical gate on signal `alpha|H⟩ + beta|V⟩` with meter
// `meter_h|H⟩ + √(1−meter_h²)|V⟩` at reflectance `eta`.
//
// # Safety
// `out` must be valid for one write; release the handle with
// [`qnd_coincidence_free`].
enum QndStatus qnd_optics_run(struct QndComplex alpha,
                              struct QndComplex beta,
                              double meter_h,
                              double eta,
                              bool signal_loss,
                              struct QndCoincidence **out);

// Heralding probability; NaN for a null handle.
//
// # Safety
// `c` must be null or a live handle from [`qnd_optics_run`].
double qnd_coincidence_success_prob(const struct QndCoincidence *c);

// # Safety
// `c` must be a live handle and `out` valid for one write.
enum QndStatus qnd_coincidence_failures(const struct QndCoincidence *c,
                                        struct QndFailureBreakdown *out);

// Heralded signal ⊗ meter state as four amplitudes `HH, HV, VH, VV`.
// Fails with `EmptyPostSelection` when the gate never succeeds.
//
// # Safety
// `c` must be a live handle and `out` valid for four writes.
enum QndStatus qnd_coincidence_joint(const struct QndCoincidence *c, struct QndComplex *out);

// # Safety
// `c` must be null or a handle from [`qnd_optics_run`] not yet freed.
void qnd_coincidence_free(struct QndCoincidence *c);

// Closed-form post-selected means for `alpha|0⟩ + beta|1⟩` at strength `gamma`.
//
// # Safety
// `out` must be valid for one write.
enum QndStatus qnd_weak_postselected(struct QndComplex alpha,
                                     struct QndComplex beta,
                                     double gamma,
                                     struct QndPostselected *out);

// Monte-Carlo estimate of the post-selected mean; the same arguments
// always give the same bits.
//
// # Safety
// `out` must be valid for one write.
enum QndStatus qnd_weak_sampled(struct QndComplex alpha,
                                struct QndComplex beta,
                                double gamma,
                                uint64_t shots,
                                uint64_t seed,
                                enum QndPost post,
                                struct QndWeakEstimate *out);

// Largest strength at which the `+` mean stays negative for
// `alpha|0⟩ − √(1−alpha²)|1⟩`.
//
// # Safety
// `out` must be valid for one write.
enum QndStatus qnd_weak_negativity_bound(double alpha, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QND_H */
