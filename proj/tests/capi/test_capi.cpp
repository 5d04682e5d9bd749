// SPDX-License-Identifier: Apache-2.0
// Exercises the library strictly through its C interface.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "laborflow/laborflow.h"

using nlohmann::json;

namespace {

struct Result {
  lf_result* r = nullptr;
  ~Result() { lf_result_free(r); }
  std::string table(const std::string& name) const {
    for (size_t i = 0; i < lf_result_table_count(r); ++i)
      if (name == lf_result_table_name(r, i)) {
        size_t len = 0;
        const char* data = lf_result_table_data(r, i, &len);
        return std::string(data, len);
      }
    return {};
  }
  json summary() const { return json::parse(lf_result_summary(r)); }
};

struct Matrix {
  lf_matrix* m = nullptr;
  ~Matrix() { lf_matrix_free(m); }
};

}  // namespace

TEST_CASE("status helpers and version") {
  CHECK(std::string(lf_version()) == "1.0.0");
  CHECK(lf_status_is_validation(LF_ERR_INVALID_ARGUMENT));
  CHECK(lf_status_is_validation(LF_ERR_PARSE));
  CHECK(lf_status_is_validation(LF_ERR_IO));
  CHECK_FALSE(lf_status_is_validation(LF_ERR_DEGENERATE));
  CHECK_FALSE(lf_status_is_validation(LF_ERR_NUMERIC));
  CHECK_FALSE(lf_status_is_validation(LF_OK));
  CHECK(std::string(lf_status_name(LF_ERR_PARSE)) == "parse");
  std::vector<std::string> stages;
  for (const char* const* s = lf_stage_names(); *s; ++s) stages.emplace_back(*s);
  CHECK(stages.size() == 14);
}

TEST_CASE("matrices round-trip and report errors") {
  const double values[] = {1, 0, 2, 3, 0, 1};
  Matrix m;
  REQUIRE(lf_matrix_create(2, 3, values, nullptr, nullptr, &m.m) == LF_OK);
  CHECK(lf_matrix_rows(m.m) == 2);
  CHECK(lf_matrix_cols(m.m) == 3);
  CHECK(lf_matrix_get(m.m, 1, 0) == 3.0);
  char* text = nullptr;
  REQUIRE(lf_matrix_to_csv(m.m, &text) == LF_OK);
  Matrix back;
  REQUIRE(lf_matrix_parse(text, LF_MATRIX_NONNEGATIVE, &back.m) == LF_OK);
  lf_string_free(text);
  for (size_t i = 0; i < 2; ++i)
    for (size_t j = 0; j < 3; ++j) CHECK(lf_matrix_get(back.m, i, j) == lf_matrix_get(m.m, i, j));
  CHECK(std::string(lf_matrix_row_label(back.m, 0)) == lf_matrix_row_label(m.m, 0));

  Matrix bad;
  CHECK(lf_matrix_parse("p,a\nP1,-1\n", LF_MATRIX_NONNEGATIVE, &bad.m) == LF_ERR_PARSE);
  CHECK(std::strlen(lf_last_error()) > 0);
  CHECK(lf_matrix_load("/nonexistent/file.csv", 0, &bad.m) == LF_ERR_IO);
  CHECK(lf_matrix_create(2, 3, nullptr, nullptr, nullptr, &bad.m) == LF_ERR_INVALID_ARGUMENT);
}

TEST_CASE("complexity through the C interface") {
  const double uniform[] = {2, 2, 2, 2, 2, 2};
  Matrix x, r, b;
  REQUIRE(lf_matrix_create(2, 3, uniform, nullptr, nullptr, &x.m) == LF_OK);
  REQUIRE(lf_rca(x.m, &r.m) == LF_OK);
  for (size_t i = 0; i < 2; ++i)
    for (size_t j = 0; j < 3; ++j) CHECK(lf_matrix_get(r.m, i, j) == 1.0);
  int degenerate = -1;
  REQUIRE(lf_binarize(r.m, 1.0, LF_GREATER_THAN, &b.m, &degenerate) == LF_OK);
  CHECK(degenerate == 1);

  const double nested[] = {1, 1, 1, 1, 1, 1, 1, 0, 1, 1, 0, 0, 1, 0, 0, 0};
  Matrix n;
  REQUIRE(lf_matrix_create(4, 4, nested, nullptr, nullptr, &n.m) == LF_OK);
  double kc[4], kp[4], eci[4];
  int used = 0;
  REQUIRE(lf_reflections(n.m, 2, kc, kp, &used, &degenerate) == LF_OK);
  CHECK(used == 2);
  CHECK(kc[0] > kc[3]);
  REQUIRE(lf_eci_eigen(n.m, eci) == LF_OK);
  CHECK(eci[0] > eci[3]);
  Matrix prox;
  REQUIRE(lf_proximity(n.m, &prox.m) == LF_OK);
  CHECK(lf_matrix_get(prox.m, 0, 3) == doctest::Approx(0.25));

  const double fractional[] = {0.5, 1.0};
  Matrix f;
  REQUIRE(lf_matrix_create(1, 2, fractional, nullptr, nullptr, &f.m) == LF_OK);
  CHECK(lf_reflections(f.m, 2, kc, kp, nullptr, nullptr) == LF_ERR_INVALID_ARGUMENT);
}

TEST_CASE("graphs, reciprocity and spreading") {
  lf_graph* g = nullptr;
  REQUIRE(lf_graph_create(0.0, 7.0, &g) == LF_OK);
  REQUIRE(lf_graph_add_edge(g, "a", "b", 5) == LF_OK);
  REQUIRE(lf_graph_add_edge(g, "b", "a", 5) == LF_OK);
  REQUIRE(lf_graph_add_edge(g, "b", "c", 5) == LF_OK);
  CHECK(lf_graph_add_edge(g, "c", "c", 5) == LF_ERR_INVALID_ARGUMENT);
  CHECK(lf_graph_node_count(g) == 3);
  lf_reciprocity rec{};
  REQUIRE(lf_reciprocity_stats(g, 2.0, &rec) == LF_OK);
  CHECK(rec.ties == 2);
  CHECK(rec.reciprocal_ties == 1);
  CHECK(rec.global_fraction == 0.5);
  const char* seeds[] = {"a"};
  size_t coverage[4];
  REQUIRE(lf_bdsi_simulate(g, 2.0, 1.0, 1.0, 1.0, 3, seeds, 1, 9, coverage) == LF_OK);
  CHECK(coverage[0] == 1);
  CHECK(coverage[1] == 2);
  CHECK(coverage[2] == 3);
  const char* missing[] = {"zz"};
  CHECK(lf_bdsi_simulate(g, 2.0, 1.0, 1.0, 1.0, 3, missing, 1, 9, coverage) == LF_ERR_INVALID_ARGUMENT);
  lf_graph_free(g);
}

TEST_CASE("scalar utilities") {
  const double ref[7] = {1, 2, 3, 4, 5, 6, 7};
  double dollars = 0.0;
  REQUIRE(lf_compute_reward(ref, 6.0, &dollars) == LF_OK);
  CHECK(dollars == 5.0);
  double ratio = 0.0;
  REQUIRE(lf_log_activity_ratio(1.5, 2.4, &ratio) == LF_OK);
  CHECK(ratio == doctest::Approx(std::log(1.6)));
  CHECK(lf_log_activity_ratio(-1.0, 2.4, &ratio) == LF_ERR_INVALID_ARGUMENT);
  const double scores[] = {0.1, 0.9, 0.5, 0.5};
  const double labels[] = {0, 1, 0, 1};
  double a = 0.0;
  REQUIRE(lf_auc(scores, labels, 4, &a) == LF_OK);
  CHECK(a == 0.875);
  const double zeros[] = {0, 0, 0, 0};
  CHECK(lf_auc(scores, zeros, 4, &a) == LF_ERR_DEGENERATE);
  const double obs[] = {1, 2, 3, 4};
  double rmse = -1, cv = -1, r2 = -1;
  REQUIRE(lf_rmse(obs, obs, 4, &rmse, &cv, &r2) == LF_OK);
  CHECK(rmse == 0.0);
  CHECK(r2 == 1.0);
}

TEST_CASE("pipeline stages run from JSON options") {
  Result inc;
  REQUIRE(lf_run("synth", R"({"kind":"incidence","n_places":12,"n_activities":30,"seed":4})", &inc.r) == LF_OK);
  const std::string csv = inc.table("incidence.csv");
  REQUIRE_FALSE(csv.empty());
  CHECK(inc.summary()["places"] == 12);

  Result again;
  REQUIRE(lf_run("synth", R"({"kind":"incidence","n_places":12,"n_activities":30,"seed":4})", &again.r) == LF_OK);
  CHECK(again.table("incidence.csv") == csv);

  CHECK(lf_check("synth", R"({"kind":"incidence","bogus":1})") == LF_ERR_INVALID_ARGUMENT);
  CHECK(std::string(lf_last_error()).find("bogus") != std::string::npos);
  CHECK(lf_check("complexity", R"({"input":"/nonexistent/m.csv"})") == LF_ERR_IO);
  CHECK(lf_check("nope", "{}") == LF_ERR_INVALID_ARGUMENT);
  CHECK(lf_check("synth", "{not json") == LF_ERR_INVALID_ARGUMENT);
  lf_result* none = nullptr;
  CHECK(lf_run("synth", R"({"kind":"incidence","nestedness":2})", &none) == LF_ERR_INVALID_ARGUMENT);
  CHECK(none == nullptr);
}

TEST_CASE("last error is per thread") {
  Matrix bad;
  REQUIRE(lf_matrix_parse("p,a\nP1,-1\n", LF_MATRIX_NONNEGATIVE, &bad.m) == LF_ERR_PARSE);
  const std::string mine = lf_last_error();
  std::string theirs = "unset";
  std::thread t([&] {
    double out = 0.0;
    lf_log_activity_ratio(1.0, 2.0, &out);
    theirs = lf_last_error();
  });
  t.join();
  CHECK(theirs.empty());
  CHECK(std::string(lf_last_error()) == mine);
}
