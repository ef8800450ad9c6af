#ifndef HJLAB_H
#define HJLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

typedef enum HjlabStatus {
  HJLAB_STATUS_OK = 0,
  HJLAB_STATUS_NULL_POINTER = 1,
  /**
   * Arguments inconsistent at the boundary (lengths, cell indices, UTF-8).
   */
  HJLAB_STATUS_INVALID_INPUT = 2,
  /**
   * Rejected by the library: bad exponents, grids, configs.
   */
  HJLAB_STATUS_VALIDATION = 3,
  /**
   * The numerics failed (CFL, non-finite values, quadrature budget, ...).
   */
  HJLAB_STATUS_NUMERICAL = 4,
  HJLAB_STATUS_IO = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  HJLAB_STATUS_PANIC = 6,
  HJLAB_STATUS_BUFFER_TOO_SMALL = 7,
} HjlabStatus;

/**
 * Validated experiment configuration.
 */
typedef struct HjlabConfig HjlabConfig;

/**
 * Cell-centred scalar field.
 */
typedef struct HjlabField HjlabField;

/**
 * Uniform periodic grid.
 */
typedef struct HjlabGrid HjlabGrid;

/**
 * `H(x, p) = h(x)|p|^γ + b(x)·p`.
 */
typedef struct HjlabHamiltonian HjlabHamiltonian;

/**
 * Hypothesis verdicts for a choice of exponents. Infinite exponents are
 * passed and returned as IEEE infinity.
 */
typedef struct HjlabGate {
  double gamma;
  double gamma_prime;
  size_t d;
  double q;
  double p_space;
  double q_time;
  bool forcing_condition;
  bool aronson_serrin;
  bool apriori_condition;
  double apriori_threshold;
  bool maximal_regularity_branch;
  double lipschitz_exponent;
  bool trivial_interpolation;
  double r_prime;
  double embedding_p;
} HjlabGate;

/**
 * Message of the last failed call on this thread, or null. Free with
 * [`hjlab_string_free`].
 */
char *hjlab_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library (or be null) and not be used afterwards.
 */
void hjlab_string_free(char *s);

/**
 * # Safety
 * `out` must point to writable memory for one [`HjlabGate`].
 */
enum HjlabStatus hjlab_exponent_gate(double gamma,
                                     size_t d,
                                     double q,
                                     double p,
                                     double qt,
                                     struct HjlabGate *out);

/**
 * # Safety
 * `out` must be a valid pointer; on success it receives a new handle.
 */
enum HjlabStatus hjlab_grid_new(size_t d, size_t n, struct HjlabGrid **out);

/**
 * # Safety
 * `g` must be a handle from [`hjlab_grid_new`] or null.
 */
void hjlab_grid_free(struct HjlabGrid *g);

/**
 * Number of cells, or 0 for a null handle.
 *
 * # Safety
 * `g` must be a live grid handle or null.
 */
size_t hjlab_grid_len(const struct HjlabGrid *g);

/**
 * Copies `len` values (which must equal the cell count) into a new field.
 *
 * # Safety
 * `values` must point to `len` readable doubles.
 */
enum HjlabStatus hjlab_field_new(const struct HjlabGrid *g,
                                 const double *values,
                                 size_t len,
                                 struct HjlabField **out);

/**
 * # Safety
 * `f` must be a handle from this library or null.
 */
void hjlab_field_free(struct HjlabField *f);

/**
 * Copies the values into `buf`; fails with `BufferTooSmall` if `cap` is
 * less than the cell count.
 *
 * # Safety
 * `buf` must point to `cap` writable doubles.
 */
enum HjlabStatus hjlab_field_values(const struct HjlabField *f, double *buf, size_t cap);

/**
 * Discrete `L^p` norm over the torus (`p` may be infinity).
 *
 * # Safety
 * `f` must be a live field handle and `out` writable.
 */
enum HjlabStatus hjlab_field_lp_norm(const struct HjlabField *f, double p, double *out);

/**
 * Spatially constant Hamiltonian `h|p|^γ + b·p`.
 *
 * # Safety
 * `g` must be a live grid handle and `out` writable.
 */
enum HjlabStatus hjlab_hamiltonian_new(const struct HjlabGrid *g,
                                       double gamma,
                                       double h,
                                       double b0,
                                       double b1,
                                       struct HjlabHamiltonian **out);

/**
 * # Safety
 * `h` must be a handle from this library or null.
 */
void hjlab_hamiltonian_free(struct HjlabHamiltonian *h);

/**
 * `H(x_cell, p)` including the nonnegativity shift.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum HjlabStatus hjlab_hamiltonian_eval(const struct HjlabHamiltonian *h,
                                        size_t cell,
                                        double p0,
                                        double p1,
                                        double *out);

/**
 * Legendre transform `L(x_cell, ν) = sup_p ν·p − H(x_cell, p)`.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum HjlabStatus hjlab_hamiltonian_legendre(const struct HjlabHamiltonian *h,
                                            size_t cell,
                                            double nu0,
                                            double nu1,
                                            double *out);

/**
 * Parses and validates a config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum HjlabStatus hjlab_config_parse(const char *path, struct HjlabConfig **out);

/**
 * # Safety
 * `c` must be a handle from this library or null.
 */
void hjlab_config_free(struct HjlabConfig *c);

/**
 * Hex SHA-256 of the canonical config, or null. Free with
 * [`hjlab_string_free`].
 *
 * # Safety
 * `c` must be a live handle or null.
 */
char *hjlab_config_hash(const struct HjlabConfig *c);

/**
 * The validated config, its gate and warnings as JSON. Free with
 * [`hjlab_string_free`].
 *
 * # Safety
 * `c` must be a live handle and `out` writable.
 */
enum HjlabStatus hjlab_config_to_json(const struct HjlabConfig *c, char **out);

/**
 * Runs the experiment, appending rows to the JSON-lines ledger at
 * `ledger_path`. `failed` receives the number of failed members.
 *
 * # Safety
 * `c` must be a live handle, `ledger_path` NUL-terminated, `failed`
 * writable or null.
 */
enum HjlabStatus hjlab_config_run(const struct HjlabConfig *c,
                                  const char *ledger_path,
                                  bool force,
                                  size_t *failed);

#endif  /* HJLAB_H */
