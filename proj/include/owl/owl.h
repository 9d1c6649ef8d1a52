/* C interface to the OWL library. All objects are opaque handles released with the matching
 * *_free function. Functions returning owl_status leave a message retrievable with
 * owl_last_error() (per thread) on failure. Strings returned through char** are owned by the
 * caller and released with owl_string_free. */
#ifndef OWL_OWL_H
#define OWL_OWL_H

#include <stddef.h>
#include <stdint.h>

#if defined(OWL_BUILDING_LIBRARY)
#define OWL_API __attribute__((visibility("default")))
#else
#define OWL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum owl_status {
  OWL_OK = 0,
  OWL_E_INVALID_ARGUMENT = 1,
  OWL_E_DIMENSION_MISMATCH = 2,
  OWL_E_INVALID_PARAMS = 3,
  OWL_E_DATA = 4,
  OWL_E_NUMERICAL = 5,
  OWL_E_FIT_FAILED = 6,
  OWL_E_IO = 7,
  OWL_E_INTERNAL = 8
} owl_status;

OWL_API const char* owl_version(void);
OWL_API const char* owl_status_name(owl_status status);
OWL_API const char* owl_last_error(void);
OWL_API void owl_string_free(char* s);

/* ---- datasets ---- */

typedef struct owl_dataset owl_dataset;

/* points is row-major n x d; response may be NULL. */
OWL_API owl_status owl_dataset_create(const double* points, size_t n, size_t d,
                                      const double* response, owl_dataset** out);
/* response_column may be NULL or "" for none. */
OWL_API owl_status owl_dataset_read_csv(const char* path, const char* response_column,
                                        owl_dataset** out);
OWL_API owl_status owl_dataset_write_csv(const owl_dataset* data, const char* path);
OWL_API size_t owl_dataset_rows(const owl_dataset* data);
OWL_API size_t owl_dataset_cols(const owl_dataset* data);
OWL_API int owl_dataset_has_response(const owl_dataset* data);
/* Copies the points row-major into out (capacity cap doubles). */
OWL_API owl_status owl_dataset_points(const owl_dataset* data, double* out, size_t cap);
OWL_API owl_status owl_dataset_response(const owl_dataset* data, double* out, size_t cap);
OWL_API void owl_dataset_free(owl_dataset* data);

/* ---- models and options ---- */

typedef enum owl_family {
  OWL_FAMILY_GAUSSIAN = 0,
  OWL_FAMILY_LINEAR = 1,
  OWL_FAMILY_LOGISTIC = 2,
  OWL_FAMILY_BERNOULLI = 3,
  OWL_FAMILY_GMM = 4
} owl_family;

typedef enum owl_covariance {
  OWL_COV_SPHERICAL = 0,
  OWL_COV_DIAGONAL = 1,
  OWL_COV_FULL = 2
} owl_covariance;

typedef struct owl_model {
  owl_family family;
  owl_covariance covariance;
  int k;
  double ridge;
} owl_model;

OWL_API void owl_model_default(owl_model* model);
/* Names: gaussian, linear, logistic, bernoulli, gmm / spherical, diagonal, full. */
OWL_API owl_status owl_parse_family(const char* name, owl_family* out);
OWL_API owl_status owl_parse_covariance(const char* name, owl_covariance* out);

typedef enum owl_kernel { OWL_KERNEL_INDICATOR = 0, OWL_KERNEL_GAUSSIAN = 1 } owl_kernel;
typedef enum owl_solver { OWL_SOLVER_EXACT = 0, OWL_SOLVER_ADMM = 1 } owl_solver;

typedef struct owl_options {
  double epsilon;
  int max_iters;
  owl_kernel kernel;
  double bandwidth; /* Gaussian kernel; <= 0 searches the k-nearest-neighbour grid */
  int restarts;
  double rel_tol;
  uint64_t seed;
  owl_solver solver;
  int em_rounds;
} owl_options;

OWL_API void owl_options_default(owl_options* options);

/* ---- fitting ---- */

typedef struct owl_fit_result owl_fit_result;

OWL_API owl_status owl_fit(const owl_model* model, const owl_dataset* data,
                           const owl_options* options, owl_fit_result** out);
OWL_API double owl_fit_okl(const owl_fit_result* fit);
OWL_API double owl_fit_bandwidth(const owl_fit_result* fit); /* 0 for the indicator kernel */
OWL_API size_t owl_fit_num_weights(const owl_fit_result* fit);
/* n * w_i, average value 1. */
OWL_API owl_status owl_fit_weights(const owl_fit_result* fit, double* out, size_t cap);
OWL_API size_t owl_fit_num_iterations(const owl_fit_result* fit);
OWL_API owl_status owl_fit_trace(const owl_fit_result* fit, double* out, size_t cap);
OWL_API const char* owl_fit_termination(const owl_fit_result* fit);
OWL_API owl_status owl_fit_params_json(const owl_fit_result* fit, char** out);
/* Norm of the weighted score at the fitted parameters. */
OWL_API owl_status owl_fit_gradient_residual(const owl_fit_result* fit, const owl_dataset* data,
                                             double* out);
OWL_API size_t owl_fit_num_warnings(const owl_fit_result* fit);
OWL_API const char* owl_fit_warning(const owl_fit_result* fit, size_t i);
/* Writes params.json, weights.csv and trace.csv into dir (created if missing). config_json,
 * if not NULL, is embedded in every file. */
OWL_API owl_status owl_fit_write(const owl_fit_result* fit, const char* dir,
                                 const char* config_json);
OWL_API void owl_fit_free(owl_fit_result* fit);

/* ---- epsilon search ---- */

typedef struct owl_tune_result owl_tune_result;

OWL_API owl_status owl_grid_log_spaced(double lo, double hi, int count, double* out);
OWL_API owl_status owl_tune(const owl_model* model, const owl_dataset* data, const double* grid,
                            size_t len, const owl_options* options, owl_tune_result** out);
OWL_API double owl_tune_chosen(const owl_tune_result* t);
OWL_API size_t owl_tune_chosen_index(const owl_tune_result* t);
OWL_API int owl_tune_no_kink(const owl_tune_result* t);
OWL_API size_t owl_tune_size(const owl_tune_result* t);
/* Any output pointer may be NULL; each non-NULL one receives owl_tune_size values. */
OWL_API owl_status owl_tune_curve(const owl_tune_result* t, double* epsilon, double* g_hat,
                                  double* smoothed, double* curvature, size_t cap);
OWL_API size_t owl_tune_num_warnings(const owl_tune_result* t);
OWL_API const char* owl_tune_warning(const owl_tune_result* t, size_t i);
/* epsilon_search.csv columns: epsilon, g_hat, smoothed, curvature. */
OWL_API owl_status owl_tune_write_csv(const owl_tune_result* t, const char* path,
                                      const char* config_json);
OWL_API void owl_tune_free(owl_tune_result* t);

/* ---- simulation ---- */

OWL_API size_t owl_scenario_count(void);
OWL_API const char* owl_scenario_name(size_t i);

/* Clean scenario data corrupted by the scenario's scheme. selector: "random" or
 * "max-likelihood". corrupted (capacity cap) receives the sorted corrupted row indices. */
OWL_API owl_status owl_scenario_data(const char* scenario, uint64_t seed, size_t n,
                                     double fraction, const char* selector, owl_dataset** out,
                                     owl_model* model, size_t* corrupted, size_t cap,
                                     size_t* num_corrupted);

typedef struct owl_sweep owl_sweep;

typedef struct owl_sweep_row {
  const char* scenario;
  double fraction;
  const char* method;
  uint64_t seed;
  double epsilon;
  double metric;
  double okl;
  int ok;
  const char* error;
} owl_sweep_row;

/* methods: comma-separated subset of owl, owl-eps-known, mle. n = 0 uses the scenario
 * default; tune_grid may be NULL. options->epsilon is ignored. */
OWL_API owl_status owl_simulate(const char* scenario, const double* fractions, size_t num_fractions,
                                const char* methods, const uint64_t* seeds, size_t num_seeds,
                                const char* selector, size_t n, const owl_options* options,
                                const double* tune_grid, size_t grid_len, owl_sweep** out);
OWL_API size_t owl_sweep_size(const owl_sweep* s);
/* Pointers in row stay valid until owl_sweep_free. */
OWL_API owl_status owl_sweep_get(const owl_sweep* s, size_t i, owl_sweep_row* row);
OWL_API owl_status owl_sweep_write_csv(const owl_sweep* s, const char* path, const char* config_json);
/* Median metric per (fraction, method) as JSON. */
OWL_API owl_status owl_sweep_summary_json(const owl_sweep* s, char** out);
OWL_API void owl_sweep_free(owl_sweep* s);

/* ---- outlier-stratified bootstrap ---- */

typedef struct owl_bootstrap_result owl_bootstrap_result;

/* Fits OWL on the full data for the strata, then refits every replicate with the same options. */
OWL_API owl_status owl_bootstrap(const owl_model* model, const owl_dataset* data,
                                 const owl_options* options, int m, double level, uint64_t seed,
                                 owl_bootstrap_result** out);
OWL_API size_t owl_bootstrap_num_params(const owl_bootstrap_result* b);
OWL_API owl_status owl_bootstrap_param(const owl_bootstrap_result* b, size_t i, const char** name,
                                       double* estimate, double* lower, double* upper);
OWL_API size_t owl_bootstrap_down_weighted(const owl_bootstrap_result* b);
OWL_API int owl_bootstrap_stratified(const owl_bootstrap_result* b);
OWL_API size_t owl_bootstrap_num_warnings(const owl_bootstrap_result* b);
OWL_API const char* owl_bootstrap_warning(const owl_bootstrap_result* b, size_t i);
OWL_API owl_status owl_bootstrap_write_csv(const owl_bootstrap_result* b, const char* path,
                                           const char* config_json);
OWL_API void owl_bootstrap_free(owl_bootstrap_result* b);

/* ---- verification ---- */

/* w-step on a finite sample: logp and counts per observation; weights (may be NULL) gets n
 * probabilities. */
OWL_API owl_status owl_i_projection(const double* logp, const int* counts, size_t n,
                                    double epsilon, double* value, double* weights);
/* q may be NULL; otherwise receives m values. */
OWL_API owl_status owl_okl_bruteforce(const double* p_hat, const double* p_theta, size_t m,
                                      double epsilon, double resolution, double* value, double* q);

typedef struct owl_mc_estimate {
  double estimate;
  double std_error;
  long long hits;
  long long reps;
  int zero_hits;
  int rare;
} owl_mc_estimate;

/* x holds n atom indices in [0, m). */
OWL_API owl_status owl_coarsened_mc(const double* p_theta, size_t m, const int* x, size_t n,
                                    double epsilon, long long reps, uint64_t seed,
                                    owl_mc_estimate* out);

#ifdef __cplusplus
}
#endif

#endif
