// SPDX-License-Identifier: Apache-2.0
#include "laborflow/laborflow.h"

#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "capi/pipeline.hpp"
#include "core/complexity.hpp"
#include "core/error.hpp"
#include "core/learn.hpp"
#include "core/model.hpp"
#include "core/netdyn.hpp"

struct lf_result {
  std::string summary;
  std::vector<std::pair<std::string, std::string>> tables;
};

struct lf_matrix {
  laborflow::LabeledMatrix m;
};

struct lf_graph {
  laborflow::NominationGraph g;
};

namespace {

using laborflow::Error;
using laborflow::ErrorKind;

thread_local std::string last_error;

lf_status to_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return LF_ERR_INVALID_ARGUMENT;
    case ErrorKind::parse: return LF_ERR_PARSE;
    case ErrorKind::io: return LF_ERR_IO;
    case ErrorKind::degenerate: return LF_ERR_DEGENERATE;
    case ErrorKind::numeric: return LF_ERR_NUMERIC;
  }
  return LF_ERR_INTERNAL;
}

// Runs `f`, translating exceptions into a status and the thread's message.
template <typename F>
lf_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return LF_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return to_status(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("invalid options JSON: ") + e.what();
    return LF_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return LF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return LF_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return LF_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) laborflow::fail(ErrorKind::invalid_argument, std::string(what) + " must not be NULL");
}

nlohmann::json parse_options(const char* text) {
  need(text, "options_json");
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) laborflow::fail(ErrorKind::invalid_argument, "options are not valid JSON");
  return j;
}

laborflow::LabeledCsvOptions csv_options(unsigned flags) {
  laborflow::LabeledCsvOptions o;
  o.require_nonnegative = (flags & LF_MATRIX_NONNEGATIVE) != 0;
  o.unique_row_labels = (flags & LF_MATRIX_UNIQUE_ROWS) != 0;
  o.unique_col_labels = (flags & LF_MATRIX_UNIQUE_COLS) != 0;
  return o;
}

lf_matrix* wrap(laborflow::LabeledMatrix m) { return new lf_matrix{std::move(m)}; }

}  // namespace

extern "C" {

int lf_status_is_validation(lf_status s) {
  return s == LF_ERR_INVALID_ARGUMENT || s == LF_ERR_PARSE || s == LF_ERR_IO;
}

const char* lf_status_name(lf_status s) {
  switch (s) {
    case LF_OK: return "ok";
    case LF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case LF_ERR_PARSE: return "parse";
    case LF_ERR_IO: return "io";
    case LF_ERR_DEGENERATE: return "degenerate";
    case LF_ERR_NUMERIC: return "numeric";
    case LF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* lf_last_error(void) { return last_error.c_str(); }

const char* lf_version(void) { return "1.0.0"; }

const char* lf_result_summary(const lf_result* r) { return r ? r->summary.c_str() : nullptr; }

size_t lf_result_table_count(const lf_result* r) { return r ? r->tables.size() : 0; }

const char* lf_result_table_name(const lf_result* r, size_t i) {
  return r && i < r->tables.size() ? r->tables[i].first.c_str() : nullptr;
}

const char* lf_result_table_data(const lf_result* r, size_t i, size_t* length) {
  if (!r || i >= r->tables.size()) {
    if (length) *length = 0;
    return nullptr;
  }
  if (length) *length = r->tables[i].second.size();
  return r->tables[i].second.c_str();
}

void lf_result_free(lf_result* r) { delete r; }

const char* const* lf_stage_names(void) {
  static const std::vector<const char*> names = [] {
    std::vector<const char*> v;
    for (const auto& n : laborflow::capi::stage_names()) v.push_back(n.c_str());
    v.push_back(nullptr);
    return v;
  }();
  return names.data();
}

lf_status lf_check(const char* stage, const char* options_json) {
  return guarded([&] {
    need(stage, "stage");
    laborflow::capi::check_stage(stage, parse_options(options_json));
  });
}

lf_status lf_run(const char* stage, const char* options_json, lf_result** out) {
  return guarded([&] {
    need(stage, "stage");
    need(out, "out");
    *out = nullptr;
    auto res = laborflow::capi::run_stage(stage, parse_options(options_json));
    auto r = std::make_unique<lf_result>();
    r->summary = res.summary.dump(2);
    r->tables = std::move(res.tables);
    *out = r.release();
  });
}

lf_status lf_matrix_load(const char* path, unsigned flags, lf_matrix** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = wrap(laborflow::read_labeled_csv(path, csv_options(flags)));
  });
}

lf_status lf_matrix_parse(const char* text, unsigned flags, lf_matrix** out) {
  return guarded([&] {
    need(text, "csv_text");
    need(out, "out");
    *out = wrap(laborflow::parse_labeled_csv(text, csv_options(flags)));
  });
}

lf_status lf_matrix_create(size_t rows, size_t cols, const double* values, const char* const* row_labels,
                           const char* const* col_labels, lf_matrix** out) {
  return guarded([&] {
    need(out, "out");
    if (rows * cols > 0) need(values, "values");
    laborflow::LabeledMatrix m;
    m.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < cols; ++j)
        m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * cols + j];
    for (size_t i = 0; i < rows; ++i) {
      if (row_labels) need(row_labels[i], "row label");
      m.row_labels.push_back(row_labels ? row_labels[i] : "r" + std::to_string(i));
    }
    for (size_t j = 0; j < cols; ++j) {
      if (col_labels) need(col_labels[j], "column label");
      m.col_labels.push_back(col_labels ? col_labels[j] : "c" + std::to_string(j));
    }
    *out = wrap(std::move(m));
  });
}

size_t lf_matrix_rows(const lf_matrix* m) { return m ? static_cast<size_t>(m->m.rows()) : 0; }
size_t lf_matrix_cols(const lf_matrix* m) { return m ? static_cast<size_t>(m->m.cols()) : 0; }

double lf_matrix_get(const lf_matrix* m, size_t row, size_t col) {
  if (!m || row >= lf_matrix_rows(m) || col >= lf_matrix_cols(m)) return std::numeric_limits<double>::quiet_NaN();
  return m->m.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
}

const char* lf_matrix_row_label(const lf_matrix* m, size_t row) {
  return m && row < m->m.row_labels.size() ? m->m.row_labels[row].c_str() : nullptr;
}

const char* lf_matrix_col_label(const lf_matrix* m, size_t col) {
  return m && col < m->m.col_labels.size() ? m->m.col_labels[col].c_str() : nullptr;
}

lf_status lf_matrix_to_csv(const lf_matrix* m, char** out) {
  return guarded([&] {
    need(m, "matrix");
    need(out, "out");
    const auto text = laborflow::to_csv(m->m);
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
  });
}

void lf_matrix_free(lf_matrix* m) { delete m; }
void lf_string_free(char* s) { std::free(s); }

lf_status lf_rca(const lf_matrix* x, lf_matrix** out) {
  return guarded([&] {
    need(x, "matrix");
    need(out, "out");
    *out = wrap(laborflow::complexity::rca(x->m).rca);
  });
}

lf_status lf_binarize(const lf_matrix* r, double r_star, lf_threshold rule, lf_matrix** out, int* degenerate) {
  return guarded([&] {
    need(r, "matrix");
    need(out, "out");
    if (rule != LF_AT_LEAST && rule != LF_GREATER_THAN)
      laborflow::fail(ErrorKind::invalid_argument, "unknown threshold rule");
    auto b = laborflow::complexity::binarize(
        r->m, r_star,
        rule == LF_AT_LEAST ? laborflow::complexity::Threshold::at_least : laborflow::complexity::Threshold::greater_than);
    if (degenerate) *degenerate = b.degenerate ? 1 : 0;
    *out = wrap(std::move(b.m));
  });
}

lf_status lf_prominence(const lf_matrix* x, lf_matrix** out) {
  return guarded([&] {
    need(x, "matrix");
    need(out, "out");
    *out = wrap(laborflow::complexity::prominence(x->m).binary.m);
  });
}

lf_status lf_reflections(const lf_matrix* m, int iterations, double* place_index, double* activity_index,
                         int* used_iterations, int* degenerate) {
  return guarded([&] {
    need(m, "matrix");
    need(place_index, "place_index");
    need(activity_index, "activity_index");
    laborflow::complexity::ReflectionsOptions o;
    if (iterations >= 0) o.iterations = iterations;
    const auto r = laborflow::complexity::reflections(m->m, o);
    for (Eigen::Index i = 0; i < r.place_index.size(); ++i) place_index[i] = r.place_index(i);
    for (Eigen::Index j = 0; j < r.activity_index.size(); ++j) activity_index[j] = r.activity_index(j);
    if (used_iterations) *used_iterations = r.iterations;
    if (degenerate) *degenerate = r.degenerate ? 1 : 0;
  });
}

lf_status lf_eci_eigen(const lf_matrix* m, double* place_index) {
  return guarded([&] {
    need(m, "matrix");
    need(place_index, "place_index");
    const auto r = laborflow::complexity::eci_eigen(m->m);
    for (Eigen::Index i = 0; i < r.index.size(); ++i) place_index[i] = r.index(i);
  });
}

lf_status lf_proximity(const lf_matrix* m, lf_matrix** out) {
  return guarded([&] {
    need(m, "matrix");
    need(out, "out");
    *out = wrap(laborflow::complexity::proximity(m->m).phi);
  });
}

lf_status lf_graph_create(double scale_min, double scale_max, lf_graph** out) {
  return guarded([&] {
    need(out, "out");
    if (!(scale_min < scale_max)) laborflow::fail(ErrorKind::invalid_argument, "scale_min must be below scale_max");
    *out = new lf_graph{laborflow::NominationGraph(scale_min, scale_max)};
  });
}

lf_status lf_graph_load(const char* path, double scale_min, double scale_max, lf_graph** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new lf_graph{laborflow::load_graph(path, scale_min, scale_max)};
  });
}

lf_status lf_graph_add_edge(lf_graph* g, const char* src, const char* dst, double score) {
  return guarded([&] {
    need(g, "graph");
    need(src, "src");
    need(dst, "dst");
    g->g.add_edge(src, dst, score);
  });
}

size_t lf_graph_node_count(const lf_graph* g) { return g ? g->g.node_count() : 0; }

void lf_graph_free(lf_graph* g) { delete g; }

lf_status lf_reciprocity_stats(const lf_graph* g, double threshold, lf_reciprocity* out) {
  return guarded([&] {
    need(g, "graph");
    need(out, "out");
    const auto tc = laborflow::netdyn::classify_ties(g->g, threshold);
    const auto s = laborflow::netdyn::reciprocity_stats(tc);
    out->ties = s.ties;
    out->reciprocal_ties = s.reciprocal_ties;
    out->nominations = s.nominations;
    out->global_fraction = s.global_fraction;
    out->nomination_fraction = s.nomination_fraction;
  });
}

lf_status lf_bdsi_simulate(const lf_graph* g, double threshold, double p_rec, double p_plus, double p_minus,
                           int horizon, const char* const* seeds, size_t seed_count, uint64_t rng_seed,
                           size_t* coverage) {
  return guarded([&] {
    need(g, "graph");
    need(coverage, "coverage");
    if (seed_count > 0) need(seeds, "seeds");
    const auto tc = laborflow::netdyn::classify_ties(g->g, threshold);
    laborflow::netdyn::BdsiParams p;
    p.p_rec = p_rec;
    p.p_plus = p_plus;
    p.p_minus = p_minus;
    p.horizon = horizon;
    for (size_t i = 0; i < seed_count; ++i) {
      need(seeds[i], "seed id");
      p.seeds.push_back(tc.index_of(seeds[i]));
    }
    p.validate(tc.node_count());
    const auto tr = laborflow::netdyn::bdsi_simulate(tc, p, rng_seed);
    for (size_t t = 0; t < tr.coverage.size(); ++t) coverage[t] = tr.coverage[t];
  });
}

lf_status lf_compute_reward(const double reference[7], double current, double* dollars) {
  return guarded([&] {
    need(reference, "reference");
    need(dollars, "dollars");
    *dollars = laborflow::netdyn::compute_reward(std::span<const double>(reference, 7), current);
  });
}

lf_status lf_log_activity_ratio(double pre_mean, double post_mean, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = laborflow::netdyn::log_activity_ratio(pre_mean, post_mean);
  });
}

lf_status lf_auc(const double* scores, const double* labels, size_t n, double* out) {
  return guarded([&] {
    need(out, "out");
    if (n > 0) {
      need(scores, "scores");
      need(labels, "labels");
    }
    *out = laborflow::learn::auc(std::span<const double>(scores, n), std::span<const double>(labels, n));
  });
}

lf_status lf_rmse(const double* pred, const double* obs, size_t n, double* rmse, double* cv_rmse, double* r2) {
  return guarded([&] {
    if (n > 0) {
      need(pred, "pred");
      need(obs, "obs");
    }
    const auto m = laborflow::learn::metrics(std::span<const double>(pred, n), std::span<const double>(obs, n));
    if (rmse) *rmse = m.rmse;
    if (cv_rmse) *cv_rmse = m.cv_rmse;
    if (r2) *r2 = m.r2;
  });
}

}  // extern "C"
