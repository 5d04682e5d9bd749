/* SPDX-License-Identifier: Apache-2.0 */
/*
 * laborflow C interface.
 *
 * Every function returns an lf_status. On failure the message for the
 * calling thread is available through lf_last_error() until the next call
 * on that thread. Objects returned through out-parameters are owned by the
 * caller and released with the matching *_free function.
 */
#ifndef LABORFLOW_H
#define LABORFLOW_H

#include <stddef.h>
#include <stdint.h>

#if defined(LABORFLOW_BUILDING_LIBRARY)
#define LF_API __attribute__((visibility("default")))
#else
#define LF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lf_status {
  LF_OK = 0,
  LF_ERR_INVALID_ARGUMENT = 1, /* bad option, flag or value */
  LF_ERR_PARSE = 2,            /* malformed input file */
  LF_ERR_IO = 3,               /* missing or unreadable file */
  LF_ERR_DEGENERATE = 4,       /* valid input with no defined answer */
  LF_ERR_NUMERIC = 5,          /* numerical failure (non-convergence, non-PD) */
  LF_ERR_INTERNAL = 6
} lf_status;

/* Nonzero for the statuses caused by bad input (argument, parse, io). */
LF_API int lf_status_is_validation(lf_status status);
LF_API const char* lf_status_name(lf_status status);
LF_API const char* lf_last_error(void);
LF_API const char* lf_version(void);

/* ------------------------------------------------------------------------
 * Stage results: a JSON summary plus named text tables (CSV). */

typedef struct lf_result lf_result;

LF_API const char* lf_result_summary(const lf_result* result);
LF_API size_t lf_result_table_count(const lf_result* result);
/* Table file name, e.g. "indices.csv". NULL when out of range. */
LF_API const char* lf_result_table_name(const lf_result* result, size_t index);
LF_API const char* lf_result_table_data(const lf_result* result, size_t index, size_t* length);
LF_API void lf_result_free(lf_result* result);

/* Stage names accepted by lf_run, NULL-terminated. */
LF_API const char* const* lf_stage_names(void);

/* Checks options and the presence of every input file without running. */
LF_API lf_status lf_check(const char* stage, const char* options_json);

/* Runs a pipeline stage. `options_json` is a JSON object; input files are
 * given by path inside it. Nothing is written to disk. */
LF_API lf_status lf_run(const char* stage, const char* options_json, lf_result** out);

/* ------------------------------------------------------------------------
 * Labeled numeric matrices (incidence matrices, indicator tables). */

typedef struct lf_matrix lf_matrix;

enum {
  LF_MATRIX_NONNEGATIVE = 1,
  LF_MATRIX_UNIQUE_ROWS = 2,
  LF_MATRIX_UNIQUE_COLS = 4
};

LF_API lf_status lf_matrix_load(const char* path, unsigned flags, lf_matrix** out);
LF_API lf_status lf_matrix_parse(const char* csv_text, unsigned flags, lf_matrix** out);
/* `values` is row-major; labels may be NULL for generated names. */
LF_API lf_status lf_matrix_create(size_t rows, size_t cols, const double* values, const char* const* row_labels,
                                  const char* const* col_labels, lf_matrix** out);
LF_API size_t lf_matrix_rows(const lf_matrix* m);
LF_API size_t lf_matrix_cols(const lf_matrix* m);
LF_API double lf_matrix_get(const lf_matrix* m, size_t row, size_t col);
LF_API const char* lf_matrix_row_label(const lf_matrix* m, size_t row);
LF_API const char* lf_matrix_col_label(const lf_matrix* m, size_t col);
/* Caller frees the returned string with lf_string_free. */
LF_API lf_status lf_matrix_to_csv(const lf_matrix* m, char** out);
LF_API void lf_matrix_free(lf_matrix* m);
LF_API void lf_string_free(char* s);

/* ------------------------------------------------------------------------
 * Complexity */

typedef enum lf_threshold { LF_AT_LEAST = 0, LF_GREATER_THAN = 1 } lf_threshold;

LF_API lf_status lf_rca(const lf_matrix* x, lf_matrix** out);
/* `degenerate` (optional) is set when no entry passes the threshold. */
LF_API lf_status lf_binarize(const lf_matrix* r, double r_star, lf_threshold rule, lf_matrix** out, int* degenerate);
LF_API lf_status lf_prominence(const lf_matrix* x, lf_matrix** out);
/* `iterations` < 0 selects the stopping rule. Index arrays are sized by the
 * matrix dimensions. `used_iterations` and `degenerate` are optional. */
LF_API lf_status lf_reflections(const lf_matrix* m, int iterations, double* place_index, double* activity_index,
                                int* used_iterations, int* degenerate);
LF_API lf_status lf_eci_eigen(const lf_matrix* m, double* place_index);
LF_API lf_status lf_proximity(const lf_matrix* m, lf_matrix** out);

/* ------------------------------------------------------------------------
 * Nomination graphs and spreading */

typedef struct lf_graph lf_graph;

LF_API lf_status lf_graph_create(double scale_min, double scale_max, lf_graph** out);
LF_API lf_status lf_graph_load(const char* path, double scale_min, double scale_max, lf_graph** out);
LF_API lf_status lf_graph_add_edge(lf_graph* g, const char* src, const char* dst, double score);
LF_API size_t lf_graph_node_count(const lf_graph* g);
LF_API void lf_graph_free(lf_graph* g);

typedef struct lf_reciprocity {
  size_t ties;
  size_t reciprocal_ties;
  size_t nominations;
  double global_fraction;     /* reciprocal ties / ties */
  double nomination_fraction; /* reciprocated nominations / nominations */
} lf_reciprocity;

LF_API lf_status lf_reciprocity_stats(const lf_graph* g, double threshold, lf_reciprocity* out);

/* Seeds are node ids. `coverage` must hold horizon + 1 entries. */
LF_API lf_status lf_bdsi_simulate(const lf_graph* g, double threshold, double p_rec, double p_plus, double p_minus,
                                  int horizon, const char* const* seeds, size_t seed_count, uint64_t rng_seed,
                                  size_t* coverage);

/* ------------------------------------------------------------------------
 * Scalar utilities */

LF_API lf_status lf_compute_reward(const double reference[7], double current, double* dollars);
LF_API lf_status lf_log_activity_ratio(double pre_mean, double post_mean, double* out);
LF_API lf_status lf_auc(const double* scores, const double* labels, size_t n, double* out);
LF_API lf_status lf_rmse(const double* pred, const double* obs, size_t n, double* rmse, double* cv_rmse, double* r2);

#ifdef __cplusplus
}
#endif

#endif /* LABORFLOW_H */
