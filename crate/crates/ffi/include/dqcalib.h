#ifndef DQCALIB_H
#define DQCALIB_H

/* Generated with cbindgen:0.29.4 */

/* Regenerated by build.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

/**
 * Result of every fallible call.
 */
typedef enum DqcStatus {
  DQC_STATUS_OK = 0,
  DQC_STATUS_NULL_POINTER = 1,
  DQC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Input is not a unit dual quaternion.
   */
  DQC_STATUS_NOT_UNIT = 3,
  DQC_STATUS_PARSE = 4,
  DQC_STATUS_IO = 5,
  DQC_STATUS_EMPTY_DATA = 6,
  /**
   * Iteration limit, degenerate start or infeasible subproblem.
   */
  DQC_STATUS_SOLVER_FAILED = 7,
  /**
   * The data does not determine a unique calibration.
   */
  DQC_STATUS_NON_UNIQUE = 8,
  /**
   * The candidate violates the constraints.
   */
  DQC_STATUS_INFEASIBLE = 9,
  DQC_STATUS_PANIC = 10,
} DqcStatus;

typedef enum DqcMode {
  DQC_MODE_FULL3D = 0,
  DQC_MODE_PLANAR = 1,
} DqcMode;

typedef enum DqcProvenance {
  DQC_PROVENANCE_LOCAL = 0,
  DQC_PROVENANCE_GLOBAL = 1,
} DqcProvenance;

/**
 * Accumulated motion pairs of one calibration problem.
 */
typedef struct DqcAccumulator DqcAccumulator;

/**
 * Incremental calibrator fed one motion pair at a time.
 */
typedef struct DqcOnline DqcOnline;

typedef struct DqcSolution {
  /**
   * Calibration from sensor B to sensor A.
   */
  double q[8];
  double cost;
  double gap;
  bool is_global;
  enum DqcProvenance provenance;
  size_t null_dim;
  /**
   * Seconds.
   */
  double solve_time;
} DqcSolution;

typedef struct DqcCertificate {
  double gap;
  double residual;
  double min_eig;
  double cost;
  double dual_bound;
  bool is_global;
  bool unique;
  size_t null_dim;
} DqcCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Error message of the most recent call on this thread; empty when that
 * call succeeded. Valid until the next call into this library on the
 * same thread.
 */
const char *dqc_last_error_message(void);

/**
 * Static description of a status code.
 */
const char *dqc_status_string(enum DqcStatus status);

/**
 * Library version as a static string.
 */
const char *dqc_version(void);

/**
 * Creates an empty accumulator.
 */
enum DqcStatus dqc_accumulator_new(enum DqcMode mode, struct DqcAccumulator **out);

/**
 * Creates an empty planar accumulator whose pairs are expressed in the
 * frames aligned with the given ground planes (`nx, ny, nz, d` each).
 */
enum DqcStatus dqc_accumulator_new_planar(const double *plane_a,
                                          const double *plane_b,
                                          struct DqcAccumulator **out);

void dqc_accumulator_free(struct DqcAccumulator *acc);

/**
 * Adds one motion pair. `weights` (8 doubles) may be null for unit
 * weights; `eta` is the pair's confidence (1 for the default).
 */
enum DqcStatus dqc_accumulator_add(struct DqcAccumulator *acc,
                                   const double *q_a,
                                   const double *q_b,
                                   double timestamp,
                                   const double *weights,
                                   double eta);

/**
 * Adds every pair of a JSON-lines file.
 */
enum DqcStatus dqc_accumulator_load_pairs(struct DqcAccumulator *acc, const char *path);

/**
 * Number of pairs added so far; 0 for a null handle.
 */
size_t dqc_accumulator_len(const struct DqcAccumulator *acc);

/**
 * Certifiably global solve.
 */
enum DqcStatus dqc_solve_global(const struct DqcAccumulator *acc,
                                double gap_threshold,
                                struct DqcSolution *out);

/**
 * Fast local solve from `init` (8 doubles, or null for the default start),
 * certified afterwards.
 */
enum DqcStatus dqc_solve_fast(const struct DqcAccumulator *acc,
                              const double *init,
                              double gap_threshold,
                              struct DqcSolution *out);

/**
 * Certifies a candidate calibration against the accumulated pairs.
 */
enum DqcStatus dqc_certify(const struct DqcAccumulator *acc,
                           const double *candidate,
                           double gap_threshold,
                           struct DqcCertificate *out);

/**
 * Creates an online calibrator. `t_no_fail` is the number of seconds of
 * certified fast solutions after which the global solver is skipped.
 */
enum DqcStatus dqc_online_new(enum DqcMode mode,
                              double t_no_fail,
                              double gap_threshold,
                              struct DqcOnline **out);

/**
 * Planar online calibrator with ground planes `nx, ny, nz, d`.
 */
enum DqcStatus dqc_online_new_planar(const double *plane_a,
                                     const double *plane_b,
                                     double t_no_fail,
                                     double gap_threshold,
                                     struct DqcOnline **out);

void dqc_online_free(struct DqcOnline *cal);

/**
 * Adds a pair and returns the updated calibration.
 */
enum DqcStatus dqc_online_update(struct DqcOnline *cal,
                                 const double *q_a,
                                 const double *q_b,
                                 double timestamp,
                                 struct DqcSolution *out);

/**
 * Rotation error in degrees and translation error between two
 * calibrations.
 */
enum DqcStatus dqc_calib_error(const double *q_hat,
                               const double *q_true,
                               double *eps_r_deg,
                               double *eps_t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DQCALIB_H */
