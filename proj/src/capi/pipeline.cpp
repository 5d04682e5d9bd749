// SPDX-License-Identifier: Apache-2.0
#include "capi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "core/complexity.hpp"
#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/geo.hpp"
#include "core/indicators.hpp"
#include "core/learn.hpp"
#include "core/matching.hpp"
#include "core/model.hpp"
#include "core/netdyn.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace laborflow::capi {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct StageSpec {
  std::vector<std::string> required_inputs;
  std::vector<std::string> optional_inputs;
  std::vector<std::string> required;
  std::vector<std::string> keys;
};

const std::map<std::string, StageSpec>& specs() {
  static const std::map<std::string, StageSpec> table = {
      {"indicators",
       {{"events"}, {"towers", "zones"}, {},
        {"window_start", "window_end", "utc_offset_s", "night_start_hour", "night_end_hour", "convention"}}},
      {"geo", {{"towers", "zones"}, {"tower_users", "events"}, {}, {"clip", "utc_offset_s", "window_start", "window_end"}}},
      {"som",
       {{"input"}, {}, {},
        {"columns", "width", "height", "epochs", "alpha_start", "alpha_end", "radius_start", "radius_end",
         "standardize"}}},
      {"gp", {{"train"}, {"test"}, {"target"}, {"features", "theta", "basis", "nugget"}}},
      {"regress", {{"input"}, {}, {"outcome"}, {"covariates", "model", "intercept", "standardize", "weights"}}},
      {"simulate",
       {{"input"}, {}, {"outcome"},
        {"covariates", "model", "intercept", "standardize", "scenario", "lo", "hi", "sweep_covariate", "sweep_values",
         "n_sims", "ci_level"}}},
      {"cv",
       {{"input"}, {}, {"outcome"},
        {"covariates", "model", "k", "metric", "bootstrap", "ci_level", "intercept", "standardize", "theta", "basis",
         "nugget"}}},
      {"ties", {{"graph"}, {}, {}, {"threshold", "scale_min", "scale_max", "features"}}},
      {"diffuse",
       {{"graph"}, {}, {},
        {"threshold", "scale_min", "scale_max", "p_rec", "p_plus", "p_minus", "horizon", "seeds", "n_seeds",
         "trials"}}},
      {"percolate",
       {{"graph"}, {}, {},
        {"threshold", "scale_min", "scale_max", "p_rec", "p_plus", "p_minus", "horizon", "seeds", "n_seeds",
         "fractions", "edge_class", "match_count_to", "trials", "speed_fraction", "ci_level", "keep_traces"}}},
      {"complexity", {{"input"}, {}, {}, {"mode", "r_star", "method", "iterations", "max_iterations"}}},
      {"proximity", {{"input"}, {}, {}, {"mode", "r_star", "threshold"}}},
      {"match",
       {{"input"}, {}, {},
        {"coarsening", "treatment_column", "treatment_cutpoints", "treatment_levels", "baseline", "fsatt", "weighted",
         "robust_se", "fsatt_covariates", "ci_level", "l1_weighted"}}},
      {"synth",
       {{}, {}, {"kind"},
        {"n_places", "n_activities", "nestedness", "noise", "n_users", "n_towers", "days", "start_epoch",
         "utc_offset_s", "unemployed_fraction", "contacts_per_user", "area_m", "district_grid",
         "night_bias_employed", "night_bias_unemployed", "n_units", "n_periods", "intercept", "coefficients",
         "level_effects", "confounding", "n_nodes", "communities", "p_in", "p_out", "reciprocity", "scale_max",
         "threshold"}}},
  };
  return table;
}

const StageSpec& spec_for(const std::string& stage) {
  auto it = specs().find(stage);
  if (it == specs().end()) fail(ErrorKind::invalid_argument, "unknown stage '" + stage + "'");
  return it->second;
}

// Typed access to the options object with readable errors.
class Options {
 public:
  Options(const json& j, const std::string& stage) : j_(j), stage_(stage) {
    if (!j.is_object()) fail(ErrorKind::invalid_argument, "options must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? convert<T>(key) : fallback;
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return convert<T>(key);
  }

  template <typename T>
  T req(const std::string& key) const {
    if (!has(key)) fail(ErrorKind::invalid_argument, stage_ + ": missing required option '" + key + "'");
    return convert<T>(key);
  }

  fs::path input(const std::string& key) const { return fs::path(req<std::string>(key)); }
  std::optional<fs::path> opt_input(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return fs::path(req<std::string>(key));
  }

  std::uint64_t seed() const { return get<std::uint64_t>("seed", 0); }
  unsigned threads() const {
    const auto t = get<long long>("threads", 1);
    if (t < 1) fail(ErrorKind::invalid_argument, "threads must be at least 1");
    return static_cast<unsigned>(t);
  }
  const json& raw(const std::string& key) const { return j_.at(key); }

 private:
  template <typename T>
  T convert(const std::string& key) const {
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
            throw std::invalid_argument("non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("string");
      }
      return v.get<T>();
    } catch (const std::invalid_argument& e) {
      fail(ErrorKind::invalid_argument, stage_ + ": option '" + key + "' must be a " + e.what());
    } catch (const json::exception&) {
      fail(ErrorKind::invalid_argument, stage_ + ": option '" + key + "' has the wrong type");
    }
  }

  const json& j_;
  std::string stage_;
};

std::vector<double> number_list(const Options& o, const std::string& key, std::vector<double> fallback) {
  if (!o.has(key)) return fallback;
  const json& v = o.raw(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) fail(ErrorKind::invalid_argument, "option '" + key + "' must be a number or a list of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) fail(ErrorKind::invalid_argument, "option '" + key + "' must contain only numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<std::string> string_list(const Options& o, const std::string& key) {
  if (!o.has(key)) return {};
  const json& v = o.raw(key);
  if (v.is_string()) {
    // Comma-separated shorthand.
    std::vector<std::string> out;
    std::string cur;
    for (char c : v.get<std::string>()) {
      if (c == ',') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }
  if (!v.is_array()) fail(ErrorKind::invalid_argument, "option '" + key + "' must be a list of names");
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) fail(ErrorKind::invalid_argument, "option '" + key + "' must contain only strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

TimeWindow window_from(const Options& o) {
  TimeWindow w;
  auto read = [&](const std::string& key) -> std::optional<std::int64_t> {
    if (!o.has(key)) return std::nullopt;
    const json& v = o.raw(key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_string()) return parse_timestamp(v.get<std::string>());
    fail(ErrorKind::invalid_argument, "option '" + key + "' must be an epoch second or an ISO-8601 UTC time");
  };
  if (auto s = read("window_start")) w.start = *s;
  if (auto e = read("window_end")) w.end = *e;
  require(w.start < w.end, "window_start must precede window_end");
  return w;
}

indicators::NightWindow night_from(const Options& o) {
  indicators::NightWindow n;
  n.utc_offset_s = static_cast<std::int32_t>(o.get<long long>("utc_offset_s", 0));
  require(std::abs(n.utc_offset_s) <= 18 * 3600, "utc_offset_s must lie within +-18 hours");
  n.start_hour = static_cast<int>(o.get<long long>("night_start_hour", 19));
  n.end_hour = static_cast<int>(o.get<long long>("night_end_hour", 7));
  require(n.start_hour >= 0 && n.start_hour < 24 && n.end_hour >= 0 && n.end_hour < 24,
          "night window hours must lie in [0,24)");
  return n;
}

// ---------------------------------------------------------------------------
// Labeled tables

struct Columns {
  Eigen::MatrixXd x;
  std::vector<std::string> names;
};

Eigen::VectorXd column_of(const LabeledMatrix& m, const std::string& name) {
  const auto idx = m.col_index(name);
  if (!idx) fail(ErrorKind::invalid_argument, "column '" + name + "' not found in the input table");
  Eigen::VectorXd v = m.values.col(*idx);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i)))
      fail(ErrorKind::invalid_argument, "column '" + name + "' has a missing or non-finite value for row '" +
                                            m.row_labels[static_cast<std::size_t>(i)] + "'");
  return v;
}

Columns columns_of(const LabeledMatrix& m, std::vector<std::string> names, const std::set<std::string>& exclude) {
  if (names.empty())
    for (const auto& c : m.col_labels)
      if (!exclude.count(c)) names.push_back(c);
  Columns out;
  out.names = names;
  out.x.resize(m.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) out.x.col(static_cast<Eigen::Index>(j)) = column_of(m, names[j]);
  return out;
}

LabeledMatrix read_table(const fs::path& path) {
  LabeledCsvOptions o;
  o.unique_col_labels = true;
  return read_labeled_csv(path, o);
}

std::string coef_table(const learn::FitSummary& fit) {
  csv::Writer w;
  w.row("term", "estimate", "se", fit.kind == learn::FitKind::ols ? "t" : "z", "p_value");
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    w.row(fit.names[i], fit.coef(k), fit.se(k), fit.stat(k), fit.p_value(k));
  }
  return w.str();
}

json fit_json(const learn::FitSummary& fit) {
  json j;
  j["model"] = fit.kind == learn::FitKind::ols ? "ols" : "logit";
  j["n"] = fit.n;
  j["parameters"] = fit.params();
  j["intercept"] = fit.intercept;
  j["standardized"] = fit.standardized;
  j["weighted"] = fit.weighted;
  json coefs = json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    coefs[fit.names[i]] = {{"estimate", num(fit.coef(k))},
                           {"se", num(fit.se(k))},
                           {"stat", num(fit.stat(k))},
                           {"p_value", num(fit.p_value(k))}};
  }
  j["coefficients"] = coefs;
  if (fit.kind == learn::FitKind::ols) {
    j["r2"] = num(fit.r2);
    j["adj_r2"] = num(fit.adj_r2);
    j["rss"] = num(fit.rss);
  } else {
    j["pseudo_r2"] = num(fit.r2);
    j["deviance"] = num(fit.deviance);
    j["iterations"] = fit.iterations;
  }
  j["bic"] = num(fit.bic);
  j["log_likelihood"] = num(fit.log_likelihood);
  return j;
}

struct RegressionInput {
  LabeledMatrix table;
  Columns cov;
  Eigen::VectorXd y;
  std::string model;
  bool intercept = true;
  bool standardize = false;
  std::optional<Eigen::VectorXd> weights;
};

RegressionInput regression_input(const Options& o, const std::string& default_model) {
  RegressionInput r;
  r.table = read_table(o.input("input"));
  const auto outcome = o.req<std::string>("outcome");
  std::set<std::string> exclude{outcome};
  const auto weights = o.opt<std::string>("weights");
  if (weights) exclude.insert(*weights);
  r.cov = columns_of(r.table, string_list(o, "covariates"), exclude);
  r.y = column_of(r.table, outcome);
  r.model = o.get<std::string>("model", default_model);
  require(r.model == "ols" || r.model == "logit", "model must be ols or logit");
  r.intercept = o.get<bool>("intercept", true);
  r.standardize = o.get<bool>("standardize", false);
  if (weights) r.weights = column_of(r.table, *weights);
  return r;
}

learn::FitSummary fit_regression(const RegressionInput& r) {
  if (r.model == "ols") {
    learn::OlsOptions oo;
    oo.intercept = r.intercept;
    oo.standardize = r.standardize;
    oo.weights = r.weights;
    return learn::ols_fit(r.cov.x, r.cov.names, r.y, oo);
  }
  require(!r.weights, "weights are only supported for ols");
  learn::LogitOptions lo;
  lo.intercept = r.intercept;
  lo.standardize = r.standardize;
  return learn::logit_fit(r.cov.x, r.cov.names, r.y, lo);
}

// ---------------------------------------------------------------------------
// Stages

StageResult run_indicators(const Options& o) {
  StageResult out;
  std::optional<TowerRegistry> towers;
  if (auto p = o.opt_input("towers")) towers = load_towers(*p);
  const auto window = window_from(o);
  const auto loaded = load_events(o.input("events"), window, towers ? &*towers : nullptr);
  indicators::Options io;
  io.night = night_from(o);
  io.threads = o.threads();
  const auto conv = o.get<std::string>("convention", "outgoing");
  if (conv == "outgoing") io.convention = indicators::InitiatedConvention::outgoing_share;
  else if (conv == "incoming") io.convention = indicators::InitiatedConvention::incoming_share;
  else fail(ErrorKind::invalid_argument, "convention must be outgoing or incoming");
  require(!loaded.records.empty(), "no event lies inside the observation window");

  const auto users = indicators::user_indicators(loaded.records, io);
  out.tables.emplace_back("user_indicators.csv", to_csv(users.table.as_matrix(), "unit_id"));
  {
    csv::Writer w;
    w.row("user_id", "home_tower");
    for (const auto& [u, t] : users.homes) w.row(u, t);
    out.tables.emplace_back("homes.csv", w.str());
  }
  out.summary["records"] = loaded.records.size();
  out.summary["dropped"] = loaded.dropped;
  out.summary["users"] = users.table.unit_ids.size();
  out.summary["users_without_home"] = users.no_home.size();
  out.summary["ego_network_available"] = users.ego_available;
  out.summary["convention"] = conv;

  if (auto zp = o.opt_input("zones")) {
    require(towers.has_value(), "district aggregation needs the towers file");
    const auto zones = load_zones(*zp);
    std::vector<Zone> districts;
    for (const auto& z : zones)
      if (z.kind == ZoneKind::district) districts.push_back(z);
    require(!districts.empty(), "zones file has no district polygons");
    std::map<std::string, std::string> user_district;
    std::size_t outside = 0;
    for (const auto& [user, tower] : users.homes) {
      const auto d = geo::locate(districts, towers->at(tower).planar());
      if (d) user_district[user] = districts[*d].zone_id;
      else ++outside;
    }
    std::vector<std::string> ids;
    for (const auto& d : districts) ids.push_back(d.zone_id);
    const auto agg = indicators::aggregate_to_districts(users.table, user_district, ids);
    out.tables.emplace_back("district_indicators.csv", to_csv(agg.table.as_matrix(), "unit_id"));
    out.tables.emplace_back("district_raw.csv", to_csv(agg.raw.as_matrix(), "unit_id"));
    out.tables.emplace_back("scales.csv", indicators::scales_to_csv(agg.table));
    out.summary["districts"] = agg.table.unit_ids.size();
    out.summary["excluded_districts"] = agg.excluded;
    out.summary["degenerate_columns"] = agg.table.degenerate_columns;
    out.summary["users_outside_districts"] = outside;
  }
  return out;
}

Zone bounding_zone(const std::vector<Zone>& zones) {
  double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
  for (const auto& z : zones)
    for (const auto& p : z.ring) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
  Zone clip;
  clip.zone_id = "bounding_box";
  clip.kind = ZoneKind::region;
  clip.ring = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  return clip;
}

StageResult run_geo(const Options& o) {
  StageResult out;
  const auto towers = load_towers(o.input("towers"));
  const auto zones = load_zones(o.input("zones"));
  std::vector<Zone> districts, tazs;
  std::optional<Zone> clip;
  const auto clip_id = o.opt<std::string>("clip");
  for (const auto& z : zones) {
    if (z.kind == ZoneKind::district) districts.push_back(z);
    if (z.kind == ZoneKind::taz) tazs.push_back(z);
    if (clip_id ? z.zone_id == *clip_id : (z.kind == ZoneKind::region && !clip)) clip = z;
  }
  require(!districts.empty(), "zones file has no district polygons");
  if (clip_id && !clip) fail(ErrorKind::invalid_argument, "clip zone '" + *clip_id + "' not found");
  const std::string clip_source = clip ? clip->zone_id : "districts bounding box";
  if (!clip) clip = bounding_zone(districts);

  geo::ZoneValues population;
  if (!tazs.empty()) {
    population = geo::areal_interpolate(districts, tazs);
    out.summary["population_source"] = "taz";
  } else {
    for (const auto& d : districts) {
      if (d.population) {
        population.zone_ids.push_back(d.zone_id);
        population.values.push_back(*d.population);
      } else {
        population.skipped.push_back(d.zone_id);
      }
    }
    out.summary["population_source"] = "district";
  }
  out.tables.emplace_back("district_population.csv", geo::to_csv(population));

  auto vor = geo::voronoi_partition(geo::sites_from(towers), *clip);
  std::optional<std::map<std::string, std::int64_t>> counts;
  if (auto p = o.opt_input("tower_users")) {
    const auto t = csv::read_file(*p);
    const auto ct = t.column("tower_id"), cu = t.column("users");
    counts.emplace();
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const std::string where = t.source + ":" + std::to_string(t.line_numbers[i]);
      const auto& id = t.rows[i][ct];
      if (!towers.contains(id)) fail(ErrorKind::parse, where + ": unknown tower_id '" + id + "'");
      const auto users = csv::parse_int(t.rows[i][cu], where);
      if (users < 0) fail(ErrorKind::parse, where + ": negative user count");
      (*counts)[id] += users;
    }
  } else if (auto p = o.opt_input("events")) {
    const auto loaded = load_events(*p, window_from(o), &towers);
    indicators::Options io;
    io.night = night_from(o);
    io.threads = o.threads();
    counts = indicators::home_counts(indicators::user_indicators(loaded.records, io).homes);
  }
  if (counts)
    for (auto& c : vor.cells)
      if (auto it = counts->find(c.tower_id); it != counts->end()) c.user_count = it->second;

  {
    csv::Writer w;
    w.row("tower_id", "x", "y", "area", "users");
    for (const auto& c : vor.cells) w.row(c.tower_id, c.site.x, c.site.y, c.area, static_cast<long long>(c.user_count));
    out.tables.emplace_back("voronoi_cells.csv", w.str());
    csv::Writer p;
    p.row("tower_id", "piece", "vertex", "x", "y");
    for (const auto& c : vor.cells)
      for (std::size_t k = 0; k < c.pieces.size(); ++k)
        for (std::size_t v = 0; v < c.pieces[k].size(); ++v)
          p.row(c.tower_id, k, v, c.pieces[k][v].x, c.pieces[k][v].y);
    out.tables.emplace_back("voronoi_polygons.csv", p.str());
  }
  out.summary["clip"] = clip_source;
  out.summary["towers"] = towers.size();
  out.summary["duplicate_sites"] = vor.duplicate_sites;
  out.summary["districts"] = districts.size();
  out.summary["population_skipped"] = population.skipped;
  if (counts) {
    const auto sigma = geo::penetration_rate(districts, vor.cells, population.as_map());
    out.tables.emplace_back("penetration.csv", geo::to_csv(sigma));
    out.summary["penetration_skipped"] = sigma.skipped;
  }
  return out;
}

StageResult run_som(const Options& o) {
  StageResult out;
  const auto table = read_table(o.input("input"));
  auto cols = columns_of(table, string_list(o, "columns"), {});
  require(cols.x.cols() >= 1, "SOM needs at least one numeric column");
  const bool standardize = o.get<bool>("standardize", false);
  if (standardize) {
    for (Eigen::Index j = 0; j < cols.x.cols(); ++j) {
      Eigen::VectorXd c = cols.x.col(j);
      std::span<double> s(c.data(), static_cast<std::size_t>(c.size()));
      if (!stats::zscore_inplace(s))
        fail(ErrorKind::degenerate, "cannot standardize constant column '" + cols.names[static_cast<std::size_t>(j)] + "'");
      cols.x.col(j) = c;
    }
  }
  learn::SomOptions so;
  so.width = static_cast<int>(o.get<long long>("width", 4));
  so.height = static_cast<int>(o.get<long long>("height", 4));
  so.epochs = static_cast<int>(o.get<long long>("epochs", 100));
  so.alpha_start = o.get<double>("alpha_start", 0.05);
  so.alpha_end = o.get<double>("alpha_end", 0.01);
  so.radius_start = o.opt<double>("radius_start");
  so.radius_end = o.get<double>("radius_end", 1.0);
  const auto grid = learn::som_train(cols.x, so, derive_seed(o.seed(), 3));

  csv::Writer cb;
  cb.field("unit").field("gx").field("gy");
  for (const auto& n : cols.names) cb.field(n);
  cb.end_row();
  for (int u = 0; u < grid.units(); ++u) {
    cb.field(u).field(u % grid.width).field(u / grid.width);
    for (Eigen::Index j = 0; j < grid.codebooks.cols(); ++j) cb.field(grid.codebooks(u, j));
    cb.end_row();
  }
  out.tables.emplace_back("codebooks.csv", cb.str());
  csv::Writer as;
  as.row("label", "unit", "gx", "gy", "distance");
  std::vector<int> hits(static_cast<std::size_t>(grid.units()), 0);
  for (Eigen::Index i = 0; i < cols.x.rows(); ++i) {
    const Eigen::VectorXd x = cols.x.row(i).transpose();
    const int u = learn::som_map(grid, x);
    ++hits[static_cast<std::size_t>(u)];
    as.row(table.row_labels[static_cast<std::size_t>(i)], u, u % grid.width, u / grid.width,
           (grid.codebooks.row(u).transpose() - x).norm());
  }
  out.tables.emplace_back("assignments.csv", as.str());
  csv::Writer qe;
  qe.row("epoch", "quantization_error");
  for (std::size_t e = 0; e < grid.quantization_error.size(); ++e) qe.row(e + 1, grid.quantization_error[e]);
  out.tables.emplace_back("quantization.csv", qe.str());
  out.summary["units"] = grid.units();
  out.summary["width"] = grid.width;
  out.summary["height"] = grid.height;
  out.summary["epochs"] = so.epochs;
  out.summary["standardized"] = standardize;
  out.summary["columns"] = cols.names;
  out.summary["final_quantization_error"] =
      grid.quantization_error.empty() ? json(nullptr) : num(grid.quantization_error.back());
  out.summary["occupied_units"] = std::count_if(hits.begin(), hits.end(), [](int h) { return h > 0; });
  return out;
}

learn::GpOptions gp_options(const Options& o) {
  learn::GpOptions g;
  const auto basis = o.get<std::string>("basis", "constant");
  if (basis == "constant") g.basis = learn::GpBasis::constant;
  else if (basis == "linear") g.basis = learn::GpBasis::linear;
  else fail(ErrorKind::invalid_argument, "basis must be constant or linear");
  if (o.has("theta")) g.theta = number_list(o, "theta", {});
  g.nugget = o.get<double>("nugget", 1e-10);
  require(g.nugget >= 0.0 && g.nugget <= g.max_nugget, "nugget must lie in [0, 1e-4]");
  return g;
}

StageResult run_gp(const Options& o) {
  StageResult out;
  const auto train = read_table(o.input("train"));
  const auto target = o.req<std::string>("target");
  const auto cols = columns_of(train, string_list(o, "features"), {target});
  const auto y = column_of(train, target);
  const auto model = learn::gp_train(cols.x, y, gp_options(o));

  const auto test_path = o.opt_input("test");
  const auto test = test_path ? read_table(*test_path) : train;
  const auto tx = columns_of(test, cols.names, {});
  csv::Writer w;
  const bool has_obs = test.col_index(target).has_value();
  if (has_obs) w.row("label", "observed", "mean", "variance");
  else w.row("label", "mean", "variance");
  std::vector<double> pred, obs;
  const auto ty = has_obs ? column_of(test, target) : Eigen::VectorXd();
  for (Eigen::Index i = 0; i < tx.x.rows(); ++i) {
    const auto p = learn::gp_predict(model, tx.x.row(i).transpose());
    const auto& label = test.row_labels[static_cast<std::size_t>(i)];
    if (has_obs) {
      w.row(label, ty(i), p.mean, p.variance);
      pred.push_back(p.mean);
      obs.push_back(ty(i));
    } else {
      w.row(label, p.mean, p.variance);
    }
  }
  out.tables.emplace_back("predictions.csv", w.str());
  out.summary["features"] = cols.names;
  out.summary["theta"] = vec_json(model.theta);
  out.summary["beta"] = vec_json(model.beta);
  out.summary["sigma2"] = num(model.sigma2);
  out.summary["nugget"] = num(model.nugget);
  out.summary["log_likelihood"] = num(model.log_likelihood);
  out.summary["basis"] = model.basis == learn::GpBasis::constant ? "constant" : "linear";
  out.summary["train_rows"] = cols.x.rows();
  if (has_obs && pred.size() >= 2) {
    const auto m = learn::metrics(pred, obs);
    out.summary["metrics"] = {{"rmse", num(m.rmse)}, {"cv_rmse", num(m.cv_rmse)}, {"r2", num(m.r2)},
                              {"pearson", num(m.pearson)}};
  }
  return out;
}

StageResult run_regress(const Options& o) {
  StageResult out;
  const auto r = regression_input(o, "ols");
  const auto fit = fit_regression(r);
  out.tables.emplace_back("coefficients.csv", coef_table(fit));
  out.summary = fit_json(fit);
  return out;
}

Eigen::VectorXd scenario_from(const Options& o, const std::string& key, const Columns& cov) {
  // Unspecified covariates sit at their sample medians.
  Eigen::VectorXd s(cov.x.cols());
  for (Eigen::Index j = 0; j < cov.x.cols(); ++j) {
    std::vector<double> c(cov.x.col(j).data(), cov.x.col(j).data() + cov.x.rows());
    s(j) = stats::quantile(c, 0.5);
  }
  if (!o.has(key)) return s;
  const json& v = o.raw(key);
  if (!v.is_object()) fail(ErrorKind::invalid_argument, "option '" + key + "' must map covariate names to values");
  for (auto it = v.begin(); it != v.end(); ++it) {
    auto pos = std::find(cov.names.begin(), cov.names.end(), it.key());
    if (pos == cov.names.end()) fail(ErrorKind::invalid_argument, key + ": '" + it.key() + "' is not a model covariate");
    if (!it.value().is_number()) fail(ErrorKind::invalid_argument, key + ": value of '" + it.key() + "' must be a number");
    s(pos - cov.names.begin()) = it.value().get<double>();
  }
  return s;
}

StageResult run_simulate(const Options& o) {
  StageResult out;
  const auto r = regression_input(o, "logit");
  const auto fit = fit_regression(r);
  learn::SimulationOptions so;
  so.n_sims = o.get<std::size_t>("n_sims", r.model == "logit" ? 10000 : 1000);
  so.seed = derive_seed(o.seed(), 4);
  so.ci_level = o.get<double>("ci_level", 0.95);
  so.threads = o.threads();
  out.summary["fit"] = fit_json(fit);
  out.summary["n_sims"] = so.n_sims;
  out.summary["ci_level"] = so.ci_level;
  out.tables.emplace_back("coefficients.csv", coef_table(fit));

  if (o.has("lo") || o.has("hi")) {
    const auto lo = scenario_from(o, "lo", r.cov);
    const auto hi = scenario_from(o, "hi", r.cov);
    const auto fd = learn::first_differences(fit, lo, hi, so);
    out.summary["first_difference"] = {{"estimate", num(fd.estimate)}, {"sd", num(fd.sd)},
                                       {"ci_low", num(fd.ci_low)}, {"ci_high", num(fd.ci_high)}};
    csv::Writer w;
    w.row("estimate", "sd", "ci_low", "ci_high");
    w.row(fd.estimate, fd.sd, fd.ci_low, fd.ci_high);
    out.tables.emplace_back("first_difference.csv", w.str());
    return out;
  }
  require(fit.kind == learn::FitKind::logit, "expected-value simulation needs model=logit; use lo/hi for ols");
  const auto base = scenario_from(o, "scenario", r.cov);
  std::vector<Eigen::VectorXd> scenarios{base};
  std::vector<double> sweep = number_list(o, "sweep_values", {});
  std::optional<Eigen::Index> sweep_col;
  if (o.has("sweep_covariate")) {
    const auto name = o.req<std::string>("sweep_covariate");
    auto pos = std::find(r.cov.names.begin(), r.cov.names.end(), name);
    require(pos != r.cov.names.end(), "sweep_covariate '" + name + "' is not a model covariate");
    require(!sweep.empty(), "sweep_covariate needs sweep_values");
    sweep_col = pos - r.cov.names.begin();
    scenarios.clear();
    for (double v : sweep) {
      Eigen::VectorXd s = base;
      s(*sweep_col) = v;
      scenarios.push_back(s);
    }
  }
  csv::Writer w;
  for (const auto& n : r.cov.names) w.field(n);
  w.field("expected_y").field("mean_pi").field("ci_low").field("ci_high").end_row();
  json rows = json::array();
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    auto sk = so;
    sk.seed = derive_seed(so.seed, 5, k);
    const auto sim = learn::logit_simulate(fit, scenarios[k], sk);
    for (Eigen::Index j = 0; j < scenarios[k].size(); ++j) w.field(scenarios[k](j));
    w.field(sim.expected_y).field(sim.mean_pi).field(sim.ci_low).field(sim.ci_high).end_row();
    rows.push_back({{"expected_y", num(sim.expected_y)}, {"mean_pi", num(sim.mean_pi)},
                    {"ci_low", num(sim.ci_low)}, {"ci_high", num(sim.ci_high)}});
  }
  out.tables.emplace_back("simulation.csv", w.str());
  out.summary["scenarios"] = rows;
  return out;
}

StageResult run_cv(const Options& o) {
  StageResult out;
  const auto table = read_table(o.input("input"));
  const auto outcome = o.req<std::string>("outcome");
  const auto cov = columns_of(table, string_list(o, "covariates"), {outcome});
  const auto y = column_of(table, outcome);
  learn::CvOptions co;
  co.model = learn::parse_cv_model(o.get<std::string>("model", "ols"));
  co.k = static_cast<int>(o.get<long long>("k", 5));
  co.seed = derive_seed(o.seed(), 6);
  if (o.has("metric")) co.metric = learn::parse_metric(o.req<std::string>("metric"));
  co.bootstrap = o.get<std::size_t>("bootstrap", 1000);
  co.ci_level = o.get<double>("ci_level", 0.95);
  co.threads = o.threads();
  co.intercept = o.get<bool>("intercept", true);
  co.standardize = o.get<bool>("standardize", false);
  co.gp = gp_options(o);
  const auto res = learn::kfold_cv(cov.x, cov.names, y, co);
  csv::Writer f;
  f.row("fold", std::string(learn::to_string(res.metric)));
  for (std::size_t k = 0; k < res.fold_metric.size(); ++k) f.row(k + 1, res.fold_metric[k]);
  out.tables.emplace_back("folds.csv", f.str());
  csv::Writer p;
  p.row("label", "fold", "observed", "predicted");
  for (std::size_t i = 0; i < res.prediction.size(); ++i)
    p.row(table.row_labels[i], res.fold_of[i] + 1, y(static_cast<Eigen::Index>(i)), res.prediction[i]);
  out.tables.emplace_back("predictions.csv", p.str());
  out.summary["model"] = std::string(learn::to_string(co.model));
  out.summary["metric"] = std::string(learn::to_string(res.metric));
  out.summary["k"] = co.k;
  out.summary["mean"] = num(res.mean);
  out.summary["ci_low"] = num(res.ci_low);
  out.summary["ci_high"] = num(res.ci_high);
  json folds = json::array();
  for (double v : res.fold_metric) folds.push_back(num(v));
  out.summary["folds"] = folds;
  return out;
}

NominationGraph graph_from(const Options& o) {
  const double lo = o.get<double>("scale_min", 0.0);
  const double hi = o.get<double>("scale_max", 7.0);
  require(lo < hi, "scale_min must be below scale_max");
  return load_graph(o.input("graph"), lo, hi);
}

StageResult run_ties(const Options& o) {
  StageResult out;
  const auto g = graph_from(o);
  const auto tc = netdyn::classify_ties(g, o.get<double>("threshold", 2.0));
  const auto st = netdyn::reciprocity_stats(tc);
  csv::Writer t;
  t.row("u", "v", "class");
  for (const auto& tie : tc.ties()) t.row(tc.node_id(tie.u), tc.node_id(tie.v), std::string(netdyn::to_string(tie.cls)));
  out.tables.emplace_back("ties.csv", t.str());
  csv::Writer pn;
  pn.row("node", "nominations", "reciprocated", "fraction");
  for (const auto& r : st.per_node) pn.row(r.node, r.nominations, r.reciprocated, r.fraction);
  out.tables.emplace_back("reciprocity.csv", pn.str());
  const bool features = o.get<bool>("features", tc.node_count() <= 2000);
  if (features) {
    csv::Writer f;
    f.row("i", "j", "tie", "common_friends", "degree_centrality_diff");
    for (std::size_t i = 0; i < tc.node_count(); ++i)
      for (std::size_t j = i + 1; j < tc.node_count(); ++j)
        f.row(tc.node_id(i), tc.node_id(j), tc.pair_class(i, j) == netdyn::PairClass::none ? 0 : 1,
              static_cast<long long>(netdyn::se_feature(tc, i, j)), netdyn::sc_feature(tc, i, j));
    out.tables.emplace_back("dyad_features.csv", f.str());
  }
  out.summary["nodes"] = tc.node_count();
  out.summary["threshold"] = tc.threshold();
  out.summary["ties"] = st.ties;
  out.summary["reciprocal_ties"] = st.reciprocal_ties;
  out.summary["unilateral_ties"] = st.ties - st.reciprocal_ties;
  out.summary["nominations"] = st.nominations;
  out.summary["global_fraction"] = num(st.global_fraction);
  out.summary["nomination_fraction"] = num(st.nomination_fraction);
  std::vector<double> fr;
  for (const auto& r : st.per_node) fr.push_back(r.fraction);
  if (!fr.empty()) {
    out.summary["per_node_mean"] = num(stats::mean(fr));
    out.summary["per_node_median"] = num(stats::quantile(fr, 0.5));
  }
  return out;
}

netdyn::BdsiParams bdsi_from(const Options& o, const netdyn::TieClassification& tc) {
  netdyn::BdsiParams p;
  p.p_rec = o.get<double>("p_rec", 0.5);
  p.p_plus = o.get<double>("p_plus", 0.3);
  p.p_minus = o.get<double>("p_minus", 0.1);
  p.horizon = static_cast<int>(o.get<long long>("horizon", 20));
  const auto ids = string_list(o, "seeds");
  if (!ids.empty()) {
    require(!o.has("n_seeds"), "give either seeds or n_seeds, not both");
    for (const auto& id : ids) p.seeds.push_back(tc.index_of(id));
  } else {
    const auto k = o.get<std::size_t>("n_seeds", 1);
    require(k >= 1 && k <= tc.node_count(), "n_seeds must lie in [1, node count]");
    Rng rng = make_rng(o.seed(), 7);
    std::vector<std::size_t> pool(tc.node_count());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    for (std::size_t a = 0; a < k; ++a) {
      std::swap(pool[a], pool[a + uniform_index(rng, pool.size() - a)]);
      p.seeds.push_back(pool[a]);
    }
    std::sort(p.seeds.begin(), p.seeds.end());
  }
  p.validate(tc.node_count());
  return p;
}

json seeds_json(const netdyn::BdsiParams& p, const netdyn::TieClassification& tc) {
  json a = json::array();
  for (auto s : p.seeds) a.push_back(tc.node_id(s));
  return a;
}

StageResult run_diffuse(const Options& o) {
  StageResult out;
  const auto g = graph_from(o);
  const auto tc = netdyn::classify_ties(g, o.get<double>("threshold", 2.0));
  const auto params = bdsi_from(o, tc);
  const auto trials = o.get<std::size_t>("trials", 1);
  require(trials >= 1, "trials must be at least 1");
  const auto base = derive_seed(o.seed(), 8);
  std::vector<netdyn::TraceRow> rows;
  std::vector<double> final_z;
  netdyn::SpreadTrace first;
  for (std::size_t k = 0; k < trials; ++k) {
    auto tr = netdyn::bdsi_simulate(tc, params, netdyn::trial_seed(base, k));
    for (std::size_t t = 0; t < tr.coverage.size(); ++t) rows.push_back({k, 0.0, static_cast<int>(t), tr.coverage[t]});
    final_z.push_back(static_cast<double>(tr.coverage.back()));
    if (k == 0) first = std::move(tr);
  }
  out.tables.emplace_back("traces.csv", netdyn::to_csv(rows));
  csv::Writer inf;
  inf.row("node", "infection_time");
  for (std::size_t i = 0; i < tc.node_count(); ++i) {
    inf.field(tc.node_id(i));
    if (first.infection_time[i] >= 0) inf.field(first.infection_time[i]);
    else inf.field(std::string_view(""));
    inf.end_row();
  }
  out.tables.emplace_back("infection_times.csv", inf.str());
  out.summary["nodes"] = tc.node_count();
  out.summary["seeds"] = seeds_json(params, tc);
  out.summary["trials"] = trials;
  out.summary["horizon"] = params.horizon;
  out.summary["mean_final_coverage"] = num(stats::mean(final_z));
  return out;
}

StageResult run_percolate(const Options& o) {
  StageResult out;
  const auto g = graph_from(o);
  const auto tc = netdyn::classify_ties(g, o.get<double>("threshold", 2.0));
  const auto params = bdsi_from(o, tc);
  netdyn::PercolationOptions po;
  po.fractions = number_list(o, "fractions", {0.0, 0.25, 0.5, 0.75, 1.0});
  po.removed_class = netdyn::parse_tie_class(o.get<std::string>("edge_class", "reciprocal"));
  if (o.has("match_count_to")) po.count_reference = netdyn::parse_tie_class(o.req<std::string>("match_count_to"));
  po.trials = o.get<std::size_t>("trials", 100);
  po.seed = derive_seed(o.seed(), 9);
  po.speed_fraction = o.get<double>("speed_fraction", 0.5);
  po.ci_level = o.get<double>("ci_level", 0.95);
  po.threads = o.threads();
  po.keep_traces = o.get<bool>("keep_traces", false);
  const auto res = netdyn::percolation_experiment(tc, params, po);
  csv::Writer c;
  c.row("F", "removed", "t", "mean_z", "ci_low", "ci_high");
  for (const auto& r : res.rows) c.row(r.fraction, r.removed, r.t, r.mean_z, r.ci_low, r.ci_high);
  out.tables.emplace_back("coverage.csv", c.str());
  csv::Writer s;
  s.row("F", "removed", "reached_share", "mean_time");
  for (const auto& r : res.speed) s.row(r.fraction, r.removed, r.reached_share, r.mean_time);
  out.tables.emplace_back("speed.csv", s.str());
  if (po.keep_traces) out.tables.emplace_back("traces.csv", netdyn::to_csv(res.traces));
  out.summary["nodes"] = tc.node_count();
  out.summary["reciprocal_ties"] = tc.count(netdyn::TieClass::reciprocal);
  out.summary["unilateral_ties"] = tc.count(netdyn::TieClass::unilateral);
  out.summary["edge_class"] = std::string(netdyn::to_string(po.removed_class));
  out.summary["match_count_to"] =
      po.count_reference ? json(std::string(netdyn::to_string(*po.count_reference))) : json(nullptr);
  out.summary["seeds"] = seeds_json(params, tc);
  out.summary["trials"] = po.trials;
  json finals = json::array();
  for (const auto& r : res.rows)
    if (r.t == params.horizon) finals.push_back({{"F", r.fraction}, {"removed", r.removed}, {"mean_z", num(r.mean_z)}});
  out.summary["final_coverage"] = finals;
  return out;
}

struct BinaryInput {
  IncidenceMatrix m;
  PruneReport pruned;
  std::string mode;
  bool degenerate = false;
};

BinaryInput binary_input(const Options& o) {
  BinaryInput b;
  const auto x = load_incidence(o.input("input"));
  b.mode = o.get<std::string>("mode", "rca");
  if (b.mode == "rca") {
    const double r_star = o.get<double>("r_star", 1.0);
    auto r = complexity::rca(x);
    auto bin = complexity::binarize(r.rca, r_star, complexity::Threshold::at_least);
    b.m = bin.m;
    b.pruned = r.pruned;
    b.degenerate = bin.degenerate;
  } else if (b.mode == "prominence") {
    require(!o.has("r_star"), "r_star does not apply to mode=prominence");
    auto p = complexity::prominence(x);
    b.m = p.binary.m;
    b.pruned = p.pruned;
    b.degenerate = p.binary.degenerate;
  } else if (b.mode == "binary") {
    require(is_binary(x.values), "mode=binary needs a 0/1 matrix");
    b.m = x;
  } else {
    fail(ErrorKind::invalid_argument, "mode must be rca, prominence or binary");
  }
  if (b.degenerate) fail(ErrorKind::degenerate, "binarized matrix is all zero");
  PruneReport second;
  b.m = prune_zero(b.m, &second);
  b.pruned.rows.insert(b.pruned.rows.end(), second.rows.begin(), second.rows.end());
  b.pruned.cols.insert(b.pruned.cols.end(), second.cols.begin(), second.cols.end());
  if (b.m.rows() == 0 || b.m.cols() == 0) fail(ErrorKind::degenerate, "binarized matrix is all zero");
  return b;
}

StageResult run_complexity(const Options& o) {
  StageResult out;
  const auto b = binary_input(o);
  const auto method = o.get<std::string>("method", "reflections");
  require(method == "reflections" || method == "eigen" || method == "both", "method must be reflections, eigen or both");
  out.tables.emplace_back("binary.csv", to_csv(b.m, "place"));
  out.summary["mode"] = b.mode;
  out.summary["method"] = method;
  out.summary["places"] = b.m.rows();
  out.summary["activities"] = b.m.cols();
  out.summary["pruned_places"] = b.pruned.rows;
  out.summary["pruned_activities"] = b.pruned.cols;

  std::optional<complexity::ReflectionsResult> refl;
  std::optional<complexity::EciResult> eig;
  if (method != "eigen") {
    complexity::ReflectionsOptions ro;
    if (o.has("iterations")) ro.iterations = static_cast<int>(o.req<long long>("iterations"));
    ro.max_iterations = static_cast<int>(o.get<long long>("max_iterations", 200));
    refl = complexity::reflections(b.m, ro);
    out.tables.emplace_back("place_index.csv", complexity::index_csv(refl->place_labels, refl->place_index));
    out.tables.emplace_back("activity_index.csv", complexity::index_csv(refl->activity_labels, refl->activity_index));
    csv::Writer w;
    w.row("n", "side", "label", "k");
    for (std::size_t n = 0; n < refl->kc.size(); ++n) {
      for (Eigen::Index i = 0; i < refl->kc[n].size(); ++i)
        w.row(n, "place", refl->place_labels[static_cast<std::size_t>(i)], refl->kc[n](i));
      for (Eigen::Index j = 0; j < refl->kp[n].size(); ++j)
        w.row(n, "activity", refl->activity_labels[static_cast<std::size_t>(j)], refl->kp[n](j));
    }
    out.tables.emplace_back("reflection_iterates.csv", w.str());
    out.summary["iterations"] = refl->iterations;
    out.summary["converged"] = refl->converged;
    out.summary["degenerate"] = refl->degenerate;
  }
  if (method != "reflections") {
    eig = complexity::eci_eigen(b.m);
    out.tables.emplace_back("eigen_index.csv", complexity::index_csv(eig->place_labels, eig->index));
    out.summary["eigenvalues"] = {num(eig->diagnostics.lambda1), num(eig->diagnostics.lambda2),
                                  num(eig->diagnostics.lambda3)};
  }
  if (refl && eig) {
    std::vector<double> a(refl->place_index.data(), refl->place_index.data() + refl->place_index.size());
    std::vector<double> e(eig->index.data(), eig->index.data() + eig->index.size());
    out.summary["spearman"] = refl->degenerate ? json(nullptr) : num(stats::spearman(a, e));
  }
  return out;
}

StageResult run_proximity(const Options& o) {
  StageResult out;
  const auto b = binary_input(o);
  const auto prox = complexity::proximity(b.m);
  out.tables.emplace_back("proximity.csv", to_csv(prox.phi, "activity"));
  out.summary["mode"] = b.mode;
  out.summary["activities"] = prox.phi.rows();
  out.summary["pruned_places"] = b.pruned.rows;
  out.summary["pruned_activities"] = b.pruned.cols;
  if (o.has("threshold")) {
    const double th = o.req<double>("threshold");
    const auto edges = complexity::proximity_edges(prox.phi, th);
    out.tables.emplace_back("edges.csv", complexity::to_csv(edges));
    out.summary["threshold"] = th;
    out.summary["edges"] = edges.size();
  }
  return out;
}

matching::CoarseningSpec coarsening_from(const Options& o) {
  if (!o.has("coarsening")) return matching::default_growth_coarsening();
  const json& v = o.raw("coarsening");
  if (!v.is_array()) fail(ErrorKind::invalid_argument, "coarsening must be a list of {name, cutpoints, closed}");
  matching::CoarseningSpec spec;
  for (const auto& item : v) {
    if (!item.is_object() || !item.contains("name") || !item.contains("cutpoints"))
      fail(ErrorKind::invalid_argument, "each coarsening entry needs name and cutpoints");
    matching::VariableBins b;
    try {
      b.name = item.at("name").get<std::string>();
      b.cutpoints = item.at("cutpoints").get<std::vector<double>>();
      const auto closed = item.value("closed", std::string("left"));
      if (closed == "left") b.closed = matching::ClosedSide::left;
      else if (closed == "right") b.closed = matching::ClosedSide::right;
      else fail(ErrorKind::invalid_argument, "coarsening 'closed' must be left or right");
    } catch (const json::exception&) {
      fail(ErrorKind::invalid_argument, "coarsening entry has the wrong types");
    }
    spec.variables.push_back(b);
  }
  spec.validate();
  return spec;
}

StageResult run_match(const Options& o) {
  StageResult out;
  const auto panel = load_panel(o.input("input"));
  const auto spec = coarsening_from(o);
  matching::TreatmentSpec ts;
  ts.column = o.get<std::string>("treatment_column", "eci");
  if (o.has("treatment_levels")) ts.level_names = string_list(o, "treatment_levels");
  if (o.has("treatment_cutpoints")) {
    const auto cuts = number_list(o, "treatment_cutpoints", {});
    ts.bins = matching::VariableBins{ts.column, cuts, matching::ClosedSide::left};
    if (!o.has("treatment_levels")) {
      ts.level_names.clear();
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) ts.level_names.push_back("L" + std::to_string(i));
    }
  } else if (ts.column == "eci") {
    ts.bins = matching::default_eci_levels();
  } else {
    ts.bins.reset();
  }
  if (ts.bins) ts.bins->name = ts.column;
  const auto data = matching::match_data_from_panel(panel, spec, ts);
  std::optional<int> baseline;
  if (o.has("baseline")) {
    const auto name = o.req<std::string>("baseline");
    auto it = std::find(data.level_names.begin(), data.level_names.end(), name);
    require(it != data.level_names.end(), "baseline '" + name + "' is not a treatment level");
    baseline = static_cast<int>(it - data.level_names.begin());
  }
  const auto strata = matching::coarsen(data.covariates, data.unit_ids, spec);
  const auto res = matching::cem_match(strata, data.level, data.levels(), baseline);
  out.tables.emplace_back("match.csv", matching::match_report_csv(data, res));
  {
    csv::Writer w;
    w.field("stratum").field("retained");
    for (const auto& l : data.level_names) w.field(l);
    w.end_row();
    for (const auto& s : res.strata) {
      w.field(s.key).field(s.retained ? 1 : 0);
      for (auto c : s.per_level) w.field(c);
      w.end_row();
    }
    out.tables.emplace_back("strata.csv", w.str());
  }
  auto level_json = [&](const std::vector<std::size_t>& counts) {
    json j = json::object();
    for (std::size_t l = 0; l < counts.size(); ++l) j[data.level_names[l]] = counts[l];
    return j;
  };
  auto imbalance_json = [&](const matching::Imbalance& im) {
    json pairs = json::array();
    for (const auto& p : im.pairs)
      pairs.push_back({{"a", data.level_names[static_cast<std::size_t>(p.a)]},
                       {"b", data.level_names[static_cast<std::size_t>(p.b)]},
                       {"l1", num(p.l1)}});
    return json{{"l1", num(im.l1)}, {"pairs", pairs}};
  };
  out.summary["rows"] = data.size();
  out.summary["levels"] = data.level_names;
  out.summary["baseline"] = data.level_names[static_cast<std::size_t>(res.baseline)];
  out.summary["level_counts"] = level_json(res.level_total);
  out.summary["matched_counts"] = level_json(res.level_matched);
  out.summary["matched"] = res.matched_count;
  out.summary["unmatched"] = data.size() - res.matched_count;
  out.summary["imbalance_before"] = imbalance_json(matching::l1_imbalance(strata, data.level, data.levels()));
  if (res.empty()) {
    out.summary["imbalance_after"] = nullptr;
    out.summary["fsatt"] = nullptr;
    return out;
  }
  const bool l1_weighted = o.get<bool>("l1_weighted", false);
  out.summary["imbalance_after"] = imbalance_json(
      matching::l1_imbalance(strata, data.level, data.levels(), &res.matched, l1_weighted ? &res.weight : nullptr));
  out.summary["imbalance_after_weighted"] = l1_weighted;
  if (o.get<bool>("fsatt", true)) {
    matching::FsattOptions fo;
    fo.weighted = o.get<bool>("weighted", true);
    fo.robust_se = o.get<bool>("robust_se", true);
    fo.ci_level = o.get<double>("ci_level", 0.95);
    fo.covariates = string_list(o, "fsatt_covariates");
    const auto f = matching::fsatt(data, spec, res, fo);
    csv::Writer w;
    w.row("from", "to", "estimate", "se", "ci_low", "ci_high", "p_value");
    json cs = json::array();
    for (const auto& c : f.contrasts) {
      const auto& a = data.level_names[static_cast<std::size_t>(c.from)];
      const auto& b = data.level_names[static_cast<std::size_t>(c.to)];
      w.row(a, b, c.estimate, c.se, c.ci_low, c.ci_high, c.p_value);
      cs.push_back({{"from", a}, {"to", b}, {"estimate", num(c.estimate)}, {"se", num(c.se)},
                    {"ci_low", num(c.ci_low)}, {"ci_high", num(c.ci_high)}});
    }
    out.tables.emplace_back("contrasts.csv", w.str());
    out.summary["fsatt"] = {
        {"weighted", fo.weighted}, {"robust_se", fo.weighted && fo.robust_se}, {"n", f.n}, {"contrasts", cs}};
  } else {
    out.summary["fsatt"] = nullptr;
  }
  return out;
}

StageResult run_synth(const Options& o) {
  StageResult out;
  const auto kind = o.req<std::string>("kind");
  out.summary["kind"] = kind;
  const auto seed = derive_seed(o.seed(), 2);
  if (kind == "incidence") {
    complexity::SynthIncidenceSpec s;
    s.n_places = static_cast<int>(o.get<long long>("n_places", s.n_places));
    s.n_activities = static_cast<int>(o.get<long long>("n_activities", s.n_activities));
    s.nestedness = o.get<double>("nestedness", s.nestedness);
    s.noise = o.get<double>("noise", s.noise);
    const auto m = complexity::synth_incidence(s, seed);
    out.tables.emplace_back("incidence.csv", to_csv(m, "place"));
    out.summary["places"] = s.n_places;
    out.summary["activities"] = s.n_activities;
    out.summary["nestedness"] = s.nestedness;
    out.summary["noise"] = s.noise;
    out.summary["density"] = num(m.values.mean());
  } else if (kind == "cdr") {
    indicators::SynthConfig c;
    c.n_users = o.get<std::size_t>("n_users", c.n_users);
    c.n_towers = o.get<std::size_t>("n_towers", c.n_towers);
    c.days = static_cast<int>(o.get<long long>("days", c.days));
    c.start_epoch = o.get<std::int64_t>("start_epoch", c.start_epoch);
    c.utc_offset_s = static_cast<std::int32_t>(o.get<long long>("utc_offset_s", c.utc_offset_s));
    c.unemployed_fraction = o.get<double>("unemployed_fraction", c.unemployed_fraction);
    c.contacts_per_user = o.get<std::size_t>("contacts_per_user", c.contacts_per_user);
    c.area_m = o.get<double>("area_m", c.area_m);
    c.employed.night_bias = o.get<double>("night_bias_employed", c.employed.night_bias);
    c.unemployed.night_bias = o.get<double>("night_bias_unemployed", c.unemployed.night_bias);
    const auto grid = o.get<long long>("district_grid", 3);
    require(grid >= 1 && grid <= 50, "district_grid must lie in [1, 50]");
    const auto cdr = indicators::synth_cdr(c, seed);
    out.tables.emplace_back("events.csv", to_csv(cdr.events));
    out.tables.emplace_back("towers.csv", to_csv(cdr.towers));
    csv::Writer l;
    l.row("user_id", "unemployed");
    for (const auto& [u, v] : cdr.labels) l.row(u, v);
    out.tables.emplace_back("labels.csv", l.str());
    // A grid of districts over the study square plus the enclosing region.
    std::vector<Zone> zones;
    Rng rng = make_rng(seed, 11);
    const double step = c.area_m / static_cast<double>(grid);
    for (long long gy = 0; gy < grid; ++gy)
      for (long long gx = 0; gx < grid; ++gx) {
        Zone z;
        z.zone_id = csv::padded_id('D', static_cast<std::size_t>(gy * grid + gx), static_cast<std::size_t>(grid * grid), 2);
        z.kind = ZoneKind::district;
        const double x0 = gx * step, y0 = gy * step;
        z.ring = {{x0, y0}, {x0 + step, y0}, {x0 + step, y0 + step}, {x0, y0 + step}};
        z.population = std::round(static_cast<double>(c.n_users) / static_cast<double>(grid * grid) *
                                  (2.0 + 2.0 * uniform01(rng)));
        zones.push_back(z);
      }
    Zone region;
    region.zone_id = "region";
    region.kind = ZoneKind::region;
    region.ring = {{0.0, 0.0}, {c.area_m, 0.0}, {c.area_m, c.area_m}, {0.0, c.area_m}};
    zones.push_back(region);
    out.tables.emplace_back("zones.geojson", to_geojson(zones));
    const auto w = c.window();
    out.summary["events"] = cdr.events.size();
    out.summary["users"] = c.n_users;
    out.summary["towers"] = c.n_towers;
    out.summary["window_start"] = w.start;
    out.summary["window_end"] = w.end;
    out.summary["utc_offset_s"] = c.utc_offset_s;
  } else if (kind == "panel") {
    matching::SynthPanelSpec s;
    s.n_units = static_cast<int>(o.get<long long>("n_units", s.n_units));
    s.n_periods = static_cast<int>(o.get<long long>("n_periods", s.n_periods));
    s.intercept = o.get<double>("intercept", s.intercept);
    s.coefficients = number_list(o, "coefficients", s.coefficients);
    s.level_effects = number_list(o, "level_effects", s.level_effects);
    s.noise = o.get<double>("noise", s.noise);
    s.confounding = o.get<double>("confounding", s.confounding);
    const auto p = matching::synth_panel(s, seed);
    out.tables.emplace_back("panel.csv", to_csv(p.panel));
    out.summary["rows"] = p.panel.size();
    out.summary["truth"] = {{"intercept", s.intercept},
                            {"covariates", p.panel.covariate_names},
                            {"coefficients", s.coefficients},
                            {"level_effects", s.level_effects},
                            {"noise", s.noise},
                            {"confounding", s.confounding},
                            {"eci_cutpoints", p.eci_levels.cutpoints}};
  } else if (kind == "graph") {
    netdyn::SynthGraphSpec s;
    s.n_nodes = o.get<std::size_t>("n_nodes", s.n_nodes);
    s.communities = o.get<std::size_t>("communities", s.communities);
    s.p_in = o.get<double>("p_in", s.p_in);
    s.p_out = o.get<double>("p_out", s.p_out);
    s.reciprocity = o.get<double>("reciprocity", s.reciprocity);
    s.scale_max = o.get<double>("scale_max", s.scale_max);
    s.threshold = o.get<double>("threshold", s.threshold);
    const auto g = netdyn::synth_graph(s, seed);
    out.tables.emplace_back("graph.csv", to_csv(g));
    out.summary["nodes"] = g.node_count();
    out.summary["edges"] = g.edges().size();
  } else {
    fail(ErrorKind::invalid_argument, "kind must be incidence, cdr, panel or graph");
  }
  return out;
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : specs()) n.push_back(k);
    return n;
  }();
  return names;
}

void check_stage(const std::string& stage, const json& options) {
  const auto& spec = spec_for(stage);
  if (!options.is_object()) fail(ErrorKind::invalid_argument, "options must be a JSON object");
  std::set<std::string> known{"seed", "threads"};
  for (const auto* list : {&spec.required_inputs, &spec.optional_inputs, &spec.required, &spec.keys})
    known.insert(list->begin(), list->end());
  for (auto it = options.begin(); it != options.end(); ++it)
    if (!known.count(it.key())) fail(ErrorKind::invalid_argument, stage + ": unknown option '" + it.key() + "'");
  Options o(options, stage);
  for (const auto& key : spec.required) o.req<json>(key);
  auto check_file = [&](const std::string& key, bool required) {
    if (!o.has(key)) {
      if (required) fail(ErrorKind::invalid_argument, stage + ": missing required input '" + key + "'");
      return;
    }
    const auto path = o.req<std::string>(key);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) fail(ErrorKind::io, stage + ": input file not found: " + path);
  };
  for (const auto& key : spec.required_inputs) check_file(key, true);
  for (const auto& key : spec.optional_inputs) check_file(key, false);
  o.seed();
  o.threads();
}

StageResult run_stage(const std::string& stage, const json& options) {
  check_stage(stage, options);
  const Options o(options, stage);
  if (stage == "indicators") return run_indicators(o);
  if (stage == "geo") return run_geo(o);
  if (stage == "som") return run_som(o);
  if (stage == "gp") return run_gp(o);
  if (stage == "regress") return run_regress(o);
  if (stage == "simulate") return run_simulate(o);
  if (stage == "cv") return run_cv(o);
  if (stage == "ties") return run_ties(o);
  if (stage == "diffuse") return run_diffuse(o);
  if (stage == "percolate") return run_percolate(o);
  if (stage == "complexity") return run_complexity(o);
  if (stage == "proximity") return run_proximity(o);
  if (stage == "match") return run_match(o);
  if (stage == "synth") return run_synth(o);
  fail(ErrorKind::invalid_argument, "unknown stage '" + stage + "'");
}

}  // namespace laborflow::capi
