#ifndef CONCENTRA_H
#define CONCENTRA_H

#include <stddef.h>
#include <stdint.h>

typedef enum ConcentraStatus {
  CONCENTRA_STATUS_OK = 0,
  CONCENTRA_STATUS_INVALID_INPUT = 1,
  CONCENTRA_STATUS_INTERNAL = 2,
  CONCENTRA_STATUS_NULL_POINTER = 3,
  CONCENTRA_STATUS_RESOURCE = 4,
} ConcentraStatus;

/*
 The outcome of an inequality check.
 */
typedef struct ConcentraCertificate ConcentraCertificate;

/*
 A discrete measure (real, Euclidean or labeled) or a Gaussian.
 */
typedef struct ConcentraMeasure ConcentraMeasure;

/*
 Simulated paths of a Markov model.
 */
typedef struct ConcentraPaths ConcentraPaths;

/*
 A finite metric space.
 */
typedef struct ConcentraSpace ConcentraSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failing call on this thread, or NULL. Owned by the library.
 */
const char *concentra_last_error(void);

/*
 Releases a string returned by the library. NULL is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void concentra_string_free(char *s);

/*
 Library version as a static string.
 */
const char *concentra_version(void);

/*
 Parses `{"type":"finite","labels":[...],"dist":[[...]]}`.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ConcentraStatus concentra_space_from_json(const char *json, struct ConcentraSpace **out);

/*
 # Safety
 `space` must come from [`concentra_space_from_json`] or be NULL.
 */
void concentra_space_free(struct ConcentraSpace *space);

/*
 Parses a discrete or Gaussian measure document.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ConcentraStatus concentra_measure_from_json(const char *json, struct ConcentraMeasure **out);

/*
 # Safety
 `measure` must come from [`concentra_measure_from_json`] or be NULL.
 */
void concentra_measure_free(struct ConcentraMeasure *measure);

/*
 `W_s(mu, nu)`. `space` may be NULL unless the measures use labels.

 # Safety
 Handles must be valid or NULL; `out` must be writable.
 */
enum ConcentraStatus concentra_wasserstein(const struct ConcentraSpace *space,
                                           const struct ConcentraMeasure *mu,
                                           const struct ConcentraMeasure *nu,
                                           double s,
                                           double *out);

/*
 `Ent(nu | mu)`; `+inf` when `nu` is not absolutely continuous.

 # Safety
 Handles must be valid or NULL; `out` must be writable.
 */
enum ConcentraStatus concentra_relative_entropy(const struct ConcentraSpace *space,
                                                const struct ConcentraMeasure *nu,
                                                const struct ConcentraMeasure *mu,
                                                double *out);

/*
 Evaluates a closed-form constant. `params_json` holds the formula inputs by
 their CLI names, e.g. `{"kappa1":1,"L":1}`; it may be NULL when none are needed.

 # Safety
 Strings must be NUL-terminated or NULL as documented; `out` must be writable.
 */
enum ConcentraStatus concentra_constant(const char *formula,
                                        const char *params_json,
                                        uint64_t n,
                                        double *out);

/*
 Checks GC(kappa) over the default 1-Lipschitz family.

 # Safety
 Handles must be valid or NULL; `out` must be writable.
 */
enum ConcentraStatus concentra_check_gc(const struct ConcentraSpace *space,
                                        const struct ConcentraMeasure *mu,
                                        double kappa,
                                        size_t family_size,
                                        uint64_t seed,
                                        struct ConcentraCertificate **out);

/*
 Checks T_s(alpha) over tilts of the GC family and `family_size` random reweightings.

 # Safety
 Handles must be valid or NULL; `out` must be writable.
 */
enum ConcentraStatus concentra_check_transport(const struct ConcentraSpace *space,
                                               const struct ConcentraMeasure *mu,
                                               double alpha,
                                               double s,
                                               size_t family_size,
                                               uint64_t seed,
                                               struct ConcentraCertificate **out);

/*
 Verdict (1 pass, 0 fail) and worst slack of a certificate.

 # Safety
 `cert` must be valid; out pointers must be writable.
 */
enum ConcentraStatus concentra_certificate_summary(const struct ConcentraCertificate *cert,
                                                   int32_t *passed,
                                                   double *worst_slack);

/*
 Serializes a certificate; release the string with [`concentra_string_free`].

 # Safety
 `cert` must be valid; `out` must be writable.
 */
enum ConcentraStatus concentra_certificate_to_json(const struct ConcentraCertificate *cert,
                                                   char **out);

/*
 # Safety
 `cert` must come from a check function or be NULL.
 */
void concentra_certificate_free(struct ConcentraCertificate *cert);

/*
 Simulates `n_paths` paths of length `n` of a model given as JSON (`{"kind": ...}`).

 # Safety
 `model_json` must be NUL-terminated; `out` must be writable.
 */
enum ConcentraStatus concentra_simulate(const char *model_json,
                                        size_t n,
                                        size_t n_paths,
                                        uint64_t seed,
                                        struct ConcentraPaths **out);

/*
 Shape of a path set; values are laid out as `[(path * horizon + step) * dim + c]`.

 # Safety
 `paths` must be valid; out pointers must be writable.
 */
enum ConcentraStatus concentra_paths_shape(const struct ConcentraPaths *paths,
                                           size_t *n_paths,
                                           size_t *horizon,
                                           size_t *dim);

/*
 Borrowed view of the path values, valid until the handle is freed.

 # Safety
 `paths` must be valid; out pointers must be writable.
 */
enum ConcentraStatus concentra_paths_data(const struct ConcentraPaths *paths,
                                          const double **data,
                                          size_t *len);

/*
 # Safety
 `paths` must come from [`concentra_simulate`] or be NULL.
 */
void concentra_paths_free(struct ConcentraPaths *paths);

/*
 Upper bound on `W_s(Q^(n), P^(n))` from the recursive coupling. A zero
 `quantiles` or `atom_budget` selects the default.

 # Safety
 Strings must be NUL-terminated; `out` must be writable.
 */
enum ConcentraStatus concentra_coupling_bound(const char *p_json,
                                              const char *q_json,
                                              size_t n,
                                              double s,
                                              size_t quantiles,
                                              size_t atom_budget,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONCENTRA_H */
