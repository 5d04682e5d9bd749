// SPDX-License-Identifier: Apache-2.0
//
// laborflow command-line tool. Each subcommand gathers its options into a
// JSON object (config file first, flags on top), validates it through the
// C API, runs the stage in memory and only then writes the output files.
// A run manifest is printed to stdout.
#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "laborflow/laborflow.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { path, str, integer, number, boolean, time, str_list, num_list, json_text };

struct Flag {
  const char* key;
  Kind kind;
  const char* help;
};

struct Stage {
  const char* name;
  const char* help;
  std::vector<Flag> flags;
};

const std::vector<Flag> bdsi_flags = {
    {"graph", Kind::path, "nomination edge list (src,dst,score)"},
    {"threshold", Kind::number, "nomination threshold; a tie needs score above it (default 2)"},
    {"scale_min", Kind::number, "lowest admissible score (default 0)"},
    {"scale_max", Kind::number, "highest admissible score (default 7)"},
    {"p_rec", Kind::number, "transmission probability over reciprocal ties (default 0.5)"},
    {"p_plus", Kind::number, "probability along a unilateral nomination (default 0.3)"},
    {"p_minus", Kind::number, "probability against a unilateral nomination (default 0.1)"},
    {"horizon", Kind::integer, "number of steps (default 20)"},
    {"seeds", Kind::str_list, "comma-separated seed node ids"},
    {"n_seeds", Kind::integer, "draw this many seed nodes at random (default 1)"},
};

const std::vector<Flag> regression_flags = {
    {"input", Kind::path, "CSV table, first column holds row labels"},
    {"outcome", Kind::str, "outcome column"},
    {"covariates", Kind::str_list, "covariate columns (default: all others)"},
    {"model", Kind::str, "ols or logit"},
    {"intercept", Kind::boolean, "include an intercept (default on)"},
    {"standardize", Kind::boolean, "z-score covariates before fitting"},
};

const std::vector<Flag> gp_model_flags = {
    {"theta", Kind::num_list, "correlation parameters, one per feature or a single shared value"},
    {"basis", Kind::str, "regression basis: constant or linear"},
    {"nugget", Kind::number, "initial diagonal nugget (default 1e-10)"},
};

std::vector<Flag> concat(std::vector<Flag> a, const std::vector<Flag>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const std::vector<Stage>& stages() {
  static const std::vector<Stage> table = {
      {"indicators",
       "Per-user behavioral indicators from an event log, optionally aggregated to districts",
       {{"events", Kind::path, "events CSV"},
        {"towers", Kind::path, "towers CSV (required for district aggregation)"},
        {"zones", Kind::path, "zones GeoJSON with district polygons"},
        {"window_start", Kind::time, "window start, epoch seconds or ISO-8601 UTC"},
        {"window_end", Kind::time, "window end (exclusive)"},
        {"utc_offset_s", Kind::integer, "local time offset in seconds"},
        {"night_start_hour", Kind::integer, "local hour the night window opens (default 19)"},
        {"night_end_hour", Kind::integer, "local hour the night window closes (default 7)"},
        {"convention", Kind::str, "initiated-share convention: outgoing or incoming"}}},
      {"geo",
       "Voronoi cells of towers, district populations and penetration rates",
       {{"towers", Kind::path, "towers CSV"},
        {"zones", Kind::path, "zones GeoJSON (district, taz and region features)"},
        {"tower_users", Kind::path, "CSV of tower_id,users home counts"},
        {"events", Kind::path, "events CSV used to derive home counts"},
        {"clip", Kind::str, "zone id of the clipping polygon"},
        {"utc_offset_s", Kind::integer, "local time offset for home detection"},
        {"window_start", Kind::time, "window start for the events"},
        {"window_end", Kind::time, "window end for the events"}}},
      {"som",
       "Train a self-organizing map",
       {{"input", Kind::path, "CSV table"},
        {"columns", Kind::str_list, "feature columns (default: all)"},
        {"width", Kind::integer, "grid width (default 4)"},
        {"height", Kind::integer, "grid height (default 4)"},
        {"epochs", Kind::integer, "passes over the data (default 100)"},
        {"alpha_start", Kind::number, "initial learning rate"},
        {"alpha_end", Kind::number, "final learning rate"},
        {"radius_start", Kind::number, "initial neighborhood radius"},
        {"radius_end", Kind::number, "final neighborhood radius"},
        {"standardize", Kind::boolean, "z-score columns first"}}},
      {"gp",
       "Gaussian process regression",
       concat({{"train", Kind::path, "training CSV"},
               {"test", Kind::path, "prediction CSV (default: the training rows)"},
               {"target", Kind::str, "target column"},
               {"features", Kind::str_list, "feature columns (default: all others)"}},
              gp_model_flags)},
      {"regress", "OLS or logit regression", concat(regression_flags, {{"weights", Kind::str, "weight column (ols)"}})},
      {"simulate",
       "Simulated expected values or first differences from a fitted model",
       concat(regression_flags,
              {{"scenario", Kind::json_text, "JSON object of covariate values (others at medians)"},
               {"lo", Kind::json_text, "JSON scenario for the first-difference baseline"},
               {"hi", Kind::json_text, "JSON scenario for the first-difference alternative"},
               {"sweep_covariate", Kind::str, "covariate to vary"},
               {"sweep_values", Kind::num_list, "values of the swept covariate"},
               {"n_sims", Kind::integer, "number of simulations"},
               {"ci_level", Kind::number, "interval level (default 0.95)"}})},
      {"cv",
       "K-fold cross-validation",
       concat(concat(regression_flags,
                     {{"k", Kind::integer, "number of folds (default 5)"},
                      {"metric", Kind::str, "r2, rmse, cv_rmse, auc or pearson"},
                      {"bootstrap", Kind::integer, "bootstrap resamples for the interval"},
                      {"ci_level", Kind::number, "interval level (default 0.95)"}}),
              gp_model_flags)},
      {"ties",
       "Classify ties and report reciprocity",
       {bdsi_flags[0], bdsi_flags[1], bdsi_flags[2], bdsi_flags[3],
        {"features", Kind::boolean, "write per-dyad features"}}},
      {"diffuse", "Simulate spreading over classified ties",
       concat(bdsi_flags, {{"trials", Kind::integer, "independent runs (default 1)"}})},
      {"percolate",
       "Coverage under random removal of one tie class",
       concat(bdsi_flags,
              {{"fractions", Kind::num_list, "removal fractions"},
               {"edge_class", Kind::str, "class to remove: reciprocal or unilateral"},
               {"match_count_to", Kind::str, "size removals by the count of this class"},
               {"trials", Kind::integer, "trials per fraction (default 100)"},
               {"speed_fraction", Kind::number, "coverage share that defines the spreading time"},
               {"ci_level", Kind::number, "band level (default 0.95)"},
               {"keep_traces", Kind::boolean, "write every trial trace"}})},
      {"complexity",
       "Complexity indices of places and activities",
       {{"input", Kind::path, "places x activities CSV"},
        {"mode", Kind::str, "rca, prominence or binary"},
        {"r_star", Kind::number, "RCA threshold (default 1)"},
        {"method", Kind::str, "reflections, eigen or both"},
        {"iterations", Kind::integer, "fixed number of reflections"},
        {"max_iterations", Kind::integer, "cap for the stopping rule"}}},
      {"proximity",
       "Activity proximity matrix",
       {{"input", Kind::path, "places x activities CSV"},
        {"mode", Kind::str, "rca, prominence or binary"},
        {"r_star", Kind::number, "RCA threshold (default 1)"},
        {"threshold", Kind::number, "also list edges with proximity at or above this value"}}},
      {"match",
       "Coarsened exact matching and treatment effects",
       {{"input", Kind::path, "panel CSV"},
        {"coarsening", Kind::json_text, "JSON list of {name, cutpoints, closed}"},
        {"treatment_column", Kind::str, "column defining treatment levels (default eci)"},
        {"treatment_cutpoints", Kind::num_list, "cutpoints for the treatment column"},
        {"treatment_levels", Kind::str_list, "names of the treatment levels"},
        {"baseline", Kind::str, "baseline level name"},
        {"fsatt", Kind::boolean, "estimate treatment effects (default on)"},
        {"weighted", Kind::boolean, "use matching weights in the effect regression (default on)"},
        {"robust_se", Kind::boolean, "sandwich standard errors for the weighted regression (default on)"},
        {"fsatt_covariates", Kind::str_list, "covariates added to the effect regression"},
        {"ci_level", Kind::number, "interval level (default 0.95)"},
        {"l1_weighted", Kind::boolean, "weight the post-match imbalance"}}},
      {"synth",
       "Generate synthetic inputs",
       {{"kind", Kind::str, "incidence, cdr, panel or graph"},
        {"n_places", Kind::integer, "incidence: places"},
        {"n_activities", Kind::integer, "incidence: activities"},
        {"nestedness", Kind::number, "incidence: weight of the nested pattern"},
        {"noise", Kind::number, "incidence: flip probability; panel: outcome noise sd"},
        {"n_users", Kind::integer, "cdr: users"},
        {"n_towers", Kind::integer, "cdr: towers"},
        {"days", Kind::integer, "cdr: days of activity"},
        {"start_epoch", Kind::integer, "cdr: first second of the log"},
        {"utc_offset_s", Kind::integer, "cdr: local time offset"},
        {"unemployed_fraction", Kind::number, "cdr: share of unemployed users"},
        {"contacts_per_user", Kind::integer, "cdr: contacts per user"},
        {"area_m", Kind::number, "cdr: side of the study square in meters"},
        {"district_grid", Kind::integer, "cdr: districts per side"},
        {"night_bias_employed", Kind::number, "cdr: night activity bias, employed"},
        {"night_bias_unemployed", Kind::number, "cdr: night activity bias, unemployed"},
        {"n_units", Kind::integer, "panel: units"},
        {"n_periods", Kind::integer, "panel: periods per unit"},
        {"intercept", Kind::number, "panel: outcome intercept"},
        {"coefficients", Kind::num_list, "panel: covariate coefficients"},
        {"level_effects", Kind::num_list, "panel: treatment level effects"},
        {"confounding", Kind::number, "panel: dependence of treatment on income"},
        {"n_nodes", Kind::integer, "graph: nodes"},
        {"communities", Kind::integer, "graph: communities"},
        {"p_in", Kind::number, "graph: within-community tie probability"},
        {"p_out", Kind::number, "graph: between-community tie probability"},
        {"reciprocity", Kind::number, "graph: probability a tie is reciprocal"},
        {"scale_max", Kind::number, "graph: top of the score scale"},
        {"threshold", Kind::number, "graph: nomination threshold"}}},
  };
  return table;
}

struct Invalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (auto& c : s)
    if (c == '_') c = '-';
  return s;
}

json convert(const Flag& f, const std::vector<std::string>& raw) {
  const std::string name = "--" + flag_name(f.key);
  auto as_number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Invalid(name + ": '" + s + "' is not a number");
    }
  };
  auto as_integer = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Invalid(name + ": '" + s + "' is not an integer");
    }
  };
  const std::string& s = raw.front();
  switch (f.kind) {
    case Kind::path:
    case Kind::str: return s;
    case Kind::integer: return as_integer(s);
    case Kind::number: return as_number(s);
    case Kind::boolean: return s == "true";
    case Kind::time: {
      const bool digits = !s.empty() && s.find_first_not_of("-0123456789") == std::string::npos;
      return digits ? json(as_integer(s)) : json(s);
    }
    case Kind::str_list: return raw;
    case Kind::num_list: {
      json a = json::array();
      for (const auto& x : raw) a.push_back(as_number(x));
      return a;
    }
    case Kind::json_text: {
      auto j = json::parse(s, nullptr, false);
      if (j.is_discarded()) throw Invalid(name + ": not valid JSON");
      return j;
    }
  }
  return nullptr;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Invalid("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// Writes next to the target and renames, so a failed run leaves no
// truncated file behind.
void write_atomic(const fs::path& target, const char* data, std::size_t size) {
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + target.string());
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw std::runtime_error("cannot write " + target.string());
  }
  fs::rename(tmp, target);
}

struct Parsed {
  std::map<std::string, std::vector<std::string>> values;
  std::map<std::string, bool> bools;
  std::map<std::string, CLI::Option*> options;
};

int fail_with(int code, const std::string& message) {
  std::cerr << "laborflow: " << message << "\n";
  return code;
}

int run_stage(const Stage& stage, const Parsed& parsed, const std::string& config, std::optional<long long> seed,
              std::optional<long long> threads, const fs::path& out_dir, const std::string& manifest_path) {
  json options = json::object();
  if (!config.empty()) {
    auto j = json::parse(read_file(config), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Invalid("config " + config + " must hold a JSON object");
    options = j;
  }
  for (const auto& f : stage.flags) {
    auto* opt = parsed.options.at(f.key);
    if (opt->count() == 0) continue;
    if (f.kind == Kind::boolean) options[f.key] = parsed.bools.at(f.key);
    else options[f.key] = convert(f, parsed.values.at(f.key));
  }
  if (seed) options["seed"] = *seed;
  if (threads) options["threads"] = *threads;
  if (!options.contains("seed")) options["seed"] = 0;

  const std::string text = options.dump();
  lf_status st = lf_check(stage.name, text.c_str());
  if (st != LF_OK) return fail_with(lf_status_is_validation(st) ? 1 : 2, lf_last_error());

  lf_result* result = nullptr;
  st = lf_run(stage.name, text.c_str(), &result);
  if (st != LF_OK) return fail_with(lf_status_is_validation(st) ? 1 : 2, lf_last_error());
  std::unique_ptr<lf_result, decltype(&lf_result_free)> guard(result, lf_result_free);

  json manifest;
  manifest["manifest_version"] = 1;
  manifest["tool_version"] = lf_version();
  manifest["stage"] = stage.name;
  json params = options;
  params.erase("threads");
  manifest["parameters"] = params;
  json inputs = json::array();
  for (const auto& f : stage.flags) {
    if (f.kind != Kind::path || !options.contains(f.key)) continue;
    const auto path = options[f.key].get<std::string>();
    inputs.push_back({{"name", f.key}, {"path", path}, {"sha256", sha256_hex(read_file(path))}});
  }
  manifest["inputs"] = inputs;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) return fail_with(2, "cannot create output directory " + out_dir.string() + ": " + ec.message());
  json outputs = json::array();
  for (std::size_t i = 0; i < lf_result_table_count(result); ++i) {
    std::size_t len = 0;
    const char* data = lf_result_table_data(result, i, &len);
    const std::string name = lf_result_table_name(result, i);
    write_atomic(out_dir / name, data, len);
    outputs.push_back({{"path", name}, {"bytes", len}, {"sha256", sha256_hex(std::string(data, len))}});
  }
  manifest["outputs"] = outputs;
  manifest["summary"] = json::parse(lf_result_summary(result));
  const std::string doc = manifest.dump(2) + "\n";
  if (!manifest_path.empty()) write_atomic(manifest_path, doc.data(), doc.size());
  std::cout << doc;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"laborflow: labor-market analytics from telecom, network and economic data"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config;
  std::optional<long long> seed, threads;
  std::string out_dir = ".";
  std::string manifest_path;
  app.add_option("--config", config, "JSON file of stage options; flags override it");
  app.add_option("--seed", seed, "base random seed (default 0)");
  app.add_option("--threads", threads, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory (default .)");
  app.add_option("--manifest", manifest_path, "also write the run manifest to this file");
  app.set_version_flag("--version", std::string(lf_version()));

  std::map<std::string, Parsed> parsed;
  std::map<std::string, CLI::App*> subs;
  for (const auto& stage : stages()) {
    auto* sub = app.add_subcommand(stage.name, stage.help);
    auto& p = parsed[stage.name];
    for (const auto& f : stage.flags) {
      const std::string name = "--" + flag_name(f.key);
      CLI::Option* opt = nullptr;
      if (f.kind == Kind::boolean) {
        opt = sub->add_flag(name + ",!--no-" + flag_name(f.key), p.bools[f.key], f.help);
      } else {
        opt = sub->add_option(name, p.values[f.key], f.help);
        if (f.kind == Kind::str_list || f.kind == Kind::num_list) opt->delimiter(',')->expected(1, -1);
        else opt->expected(1);
      }
      p.options[f.key] = opt;
    }
    subs[stage.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  for (const auto& stage : stages()) {
    if (!subs[stage.name]->parsed()) continue;
    try {
      return run_stage(stage, parsed[stage.name], config, seed, threads, out_dir, manifest_path);
    } catch (const Invalid& e) {
      return fail_with(1, e.what());
    } catch (const std::exception& e) {
      return fail_with(2, e.what());
    }
  }
  return 1;
}
