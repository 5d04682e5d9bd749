// SPDX-License-Identifier: Apache-2.0
#include "core/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/learn.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace laborflow::matching {

void VariableBins::validate() const {
  require(!name.empty(), "coarsening variable needs a name");
  require(cutpoints.size() >= 2, "variable '" + name + "' needs at least two cutpoints");
  for (std::size_t i = 0; i < cutpoints.size(); ++i) {
    require(std::isfinite(cutpoints[i]), "cutpoints of '" + name + "' must be finite");
    if (i > 0) require(cutpoints[i] > cutpoints[i - 1], "cutpoints of '" + name + "' must be strictly increasing");
  }
}

std::optional<int> VariableBins::bin(double value) const {
  if (!std::isfinite(value) || value < cutpoints.front() || value > cutpoints.back()) return std::nullopt;
  const int last = static_cast<int>(bin_count()) - 1;
  if (closed == ClosedSide::left) {
    // First interior cutpoint strictly greater than the value.
    auto it = std::upper_bound(cutpoints.begin() + 1, cutpoints.end() - 1, value);
    return std::min(static_cast<int>(it - cutpoints.begin()) - 1, last);
  }
  // First interior cutpoint greater than or equal to the value.
  auto it = std::lower_bound(cutpoints.begin() + 1, cutpoints.end() - 1, value);
  return std::min(static_cast<int>(it - cutpoints.begin()) - 1, last);
}

void CoarseningSpec::validate() const {
  require(!variables.empty(), "coarsening needs at least one variable");
  for (std::size_t i = 0; i < variables.size(); ++i) {
    variables[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      require(variables[j].name != variables[i].name, "duplicate coarsening variable '" + variables[i].name + "'");
  }
}

std::vector<std::string> CoarseningSpec::names() const {
  std::vector<std::string> out;
  for (const auto& v : variables) out.push_back(v.name);
  return out;
}

CoarseningSpec default_growth_coarsening() {
  return {{
      {"gdp_log", {5.18, 7.58, 8.73, 10.92}, ClosedSide::left},
      {"population_log", {12.8, 15.6, 16.8, 21.0}, ClosedSide::left},
      {"life_expectancy", {40.8, 64.3, 73.4, 81.1}, ClosedSide::left},
      {"years_education", {9.0, 11.0, 13.0}, ClosedSide::right},
  }};
}

VariableBins default_eci_levels() { return {"eci", {-2.8, -0.6, 0.4, 2.4}, ClosedSide::left}; }

std::vector<std::vector<int>> coarsen(const Eigen::MatrixXd& x, const std::vector<std::string>& unit_ids,
                                      const CoarseningSpec& spec) {
  spec.validate();
  require(x.cols() == static_cast<Eigen::Index>(spec.variables.size()), "data columns do not match the coarsening");
  require(unit_ids.size() == static_cast<std::size_t>(x.rows()), "unit ids do not match the data rows");
  std::vector<std::vector<int>> out(unit_ids.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto& row = out[static_cast<std::size_t>(i)];
    for (std::size_t v = 0; v < spec.variables.size(); ++v) {
      const auto& var = spec.variables[v];
      const double value = x(i, static_cast<Eigen::Index>(v));
      const auto b = var.bin(value);
      if (!b) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        fail(ErrorKind::invalid_argument, "unit '" + unit_ids[static_cast<std::size_t>(i)] + "': " + var.name + "=" +
                                              buf + " lies outside the coarsening range");
      }
      row.push_back(*b);
    }
  }
  return out;
}

std::string stratum_key(const std::vector<int>& bins) {
  std::string key;
  for (std::size_t i = 0; i < bins.size(); ++i) key += (i ? "-" : "") + std::to_string(bins[i]);
  return key;
}

MatchData match_data_from_panel(const Panel& panel, const CoarseningSpec& spec, const TreatmentSpec& treatment) {
  spec.validate();
  require(panel.size() > 0, "panel has no rows");
  const int levels = static_cast<int>(treatment.level_names.size());
  require(levels >= 2, "treatment needs at least two levels");
  if (treatment.bins) {
    treatment.bins->validate();
    require(treatment.bins->bin_count() == static_cast<std::size_t>(levels),
            "treatment bins do not match the number of level names");
  }
  for (const auto& v : spec.variables)
    require(v.name != treatment.column, "the treatment variable cannot also be a matching covariate");
  std::vector<std::string> needed = spec.names();
  needed.push_back(treatment.column);
  panel.require_covariates(needed);

  MatchData d;
  d.level_names = treatment.level_names;
  d.covariates.resize(static_cast<Eigen::Index>(panel.size()), static_cast<Eigen::Index>(spec.variables.size()));
  for (std::size_t v = 0; v < spec.variables.size(); ++v)
    d.covariates.col(static_cast<Eigen::Index>(v)) = panel.column(spec.variables[v].name);
  d.outcome = panel.column("outcome");
  const Eigen::VectorXd t = panel.column(treatment.column);
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const auto& row = panel.rows[i];
    d.unit_ids.push_back(row.unit_id + "@" + csv::format_double(row.period_start));
    const double value = t(static_cast<Eigen::Index>(i));
    int level = -1;
    if (treatment.bins) {
      if (auto b = treatment.bins->bin(value)) level = *b;
    } else if (value == std::floor(value) && value >= 0 && value < levels) {
      level = static_cast<int>(value);
    }
    if (level < 0) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", value);
      fail(ErrorKind::invalid_argument, "unit '" + row.unit_id + "': treatment " + treatment.column + "=" + buf +
                                            " does not map to a level");
    }
    d.level.push_back(level);
  }
  return d;
}

MatchResult cem_match(const std::vector<std::vector<int>>& strata, const std::vector<int>& level, int levels,
                      std::optional<int> baseline) {
  require(levels >= 2, "matching needs at least two treatment levels");
  require(strata.size() == level.size(), "strata and treatment lengths differ");
  const int base = baseline.value_or(levels - 1);
  require(base >= 0 && base < levels, "baseline level out of range");
  const auto L = static_cast<std::size_t>(levels);
  const std::size_t n = level.size();

  MatchResult r;
  r.baseline = base;
  r.level_total.assign(L, 0);
  r.level_matched.assign(L, 0);
  r.matched.assign(n, 0);
  r.weight.assign(n, 0.0);
  std::map<std::string, StratumCount> by_key;
  for (std::size_t i = 0; i < n; ++i) {
    require(level[i] >= 0 && level[i] < levels, "treatment level out of range");
    r.stratum.push_back(stratum_key(strata[i]));
    auto& s = by_key[r.stratum.back()];
    if (s.per_level.empty()) {
      s.key = r.stratum.back();
      s.per_level.assign(L, 0);
    }
    ++s.per_level[static_cast<std::size_t>(level[i])];
    ++r.level_total[static_cast<std::size_t>(level[i])];
  }
  for (auto& [key, s] : by_key) {
    s.retained = std::all_of(s.per_level.begin(), s.per_level.end(), [](std::size_t c) { return c > 0; });
    if (s.retained)
      for (std::size_t l = 0; l < L; ++l) r.level_matched[l] += s.per_level[l];
    r.strata.push_back(s);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = by_key[r.stratum[i]];
    if (!s.retained) continue;
    r.matched[i] = 1;
    ++r.matched_count;
    const auto l = static_cast<std::size_t>(level[i]);
    const auto b = static_cast<std::size_t>(base);
    if (l == b) {
      r.weight[i] = 1.0;
    } else {
      r.weight[i] = (static_cast<double>(s.per_level[b]) / static_cast<double>(s.per_level[l])) *
                    (static_cast<double>(r.level_matched[l]) / static_cast<double>(r.level_matched[b]));
    }
  }
  return r;
}

MatchResult cem_match(const MatchData& data, const CoarseningSpec& spec, std::optional<int> baseline) {
  return cem_match(coarsen(data.covariates, data.unit_ids, spec), data.level, data.levels(), baseline);
}

std::string match_report_csv(const MatchData& data, const MatchResult& result) {
  csv::Writer w;
  w.row("unit_id", "stratum", "matched", "weight");
  for (std::size_t i = 0; i < data.size(); ++i)
    w.row(data.unit_ids[i], result.stratum[i], static_cast<int>(result.matched[i]), result.weight[i]);
  return w.str();
}

Imbalance l1_imbalance(const std::vector<std::vector<int>>& strata, const std::vector<int>& level, int levels,
                       const std::vector<char>* include, const std::vector<double>* weights) {
  require(levels >= 2, "imbalance needs at least two groups");
  require(strata.size() == level.size(), "strata and treatment lengths differ");
  require(!include || include->size() == level.size(), "inclusion mask length differs");
  require(!weights || weights->size() == level.size(), "weight vector length differs");
  const auto L = static_cast<std::size_t>(levels);
  std::map<std::vector<int>, std::vector<double>> cells;
  std::vector<double> totals(L, 0.0);
  for (std::size_t i = 0; i < level.size(); ++i) {
    if (include && !(*include)[i]) continue;
    require(level[i] >= 0 && level[i] < levels, "treatment level out of range");
    const double w = weights ? (*weights)[i] : 1.0;
    require(w >= 0.0 && std::isfinite(w), "imbalance weights must be non-negative");
    auto& c = cells[strata[i]];
    if (c.empty()) c.assign(L, 0.0);
    c[static_cast<std::size_t>(level[i])] += w;
    totals[static_cast<std::size_t>(level[i])] += w;
  }
  Imbalance out;
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b < L; ++b) {
      if (!(totals[a] > 0.0) || !(totals[b] > 0.0))
        fail(ErrorKind::degenerate, "imbalance needs both groups nonempty (levels " + std::to_string(a) + " and " +
                                        std::to_string(b) + ")");
      double sum = 0.0;
      for (const auto& [key, c] : cells) sum += std::abs(c[a] / totals[a] - c[b] / totals[b]);
      const double l1 = std::min(1.0, 0.5 * sum);
      out.pairs.push_back({static_cast<int>(a), static_cast<int>(b), l1});
      out.l1 = std::max(out.l1, l1);
    }
  return out;
}

FsattResult fsatt(const MatchData& data, const CoarseningSpec& spec, const MatchResult& match,
                  const FsattOptions& options) {
  require(options.ci_level > 0.0 && options.ci_level < 1.0, "ci_level must be in (0,1)");
  require(match.matched.size() == data.size(), "match result does not belong to this data");
  if (match.empty()) fail(ErrorKind::degenerate, "no stratum retained every treatment level; FSATT is undefined");
  const int levels = data.levels();
  std::vector<Eigen::Index> cols;
  std::vector<std::string> names;
  const auto spec_names = spec.names();
  if (options.covariates.empty()) {
    for (std::size_t v = 0; v < spec_names.size(); ++v) cols.push_back(static_cast<Eigen::Index>(v));
    names = spec_names;
  } else {
    for (const auto& c : options.covariates) {
      auto it = std::find(spec_names.begin(), spec_names.end(), c);
      require(it != spec_names.end(), "FSATT covariate '" + c + "' is not a matching variable");
      cols.push_back(it - spec_names.begin());
      names.push_back(c);
    }
  }
  std::vector<std::string> all_names;
  for (int l = 1; l < levels; ++l) all_names.push_back("level_" + data.level_names[static_cast<std::size_t>(l)]);
  all_names.insert(all_names.end(), names.begin(), names.end());

  const auto m = static_cast<Eigen::Index>(match.matched_count);
  const auto k = static_cast<Eigen::Index>(all_names.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, k);
  Eigen::VectorXd y(m), w(m);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!match.matched[i]) continue;
    if (data.level[i] > 0) x(r, data.level[i] - 1) = 1.0;
    for (std::size_t c = 0; c < cols.size(); ++c)
      x(r, levels - 1 + static_cast<Eigen::Index>(c)) = data.covariates(static_cast<Eigen::Index>(i), cols[c]);
    y(r) = data.outcome(static_cast<Eigen::Index>(i));
    w(r) = match.weight[i];
    ++r;
  }
  learn::OlsOptions o;
  if (options.weighted) o.weights = w;
  auto fit = learn::ols_fit(x, all_names, y, o);
  if (options.weighted && options.robust_se) {
    // CEM weights are sampling weights rather than inverse variances, so the
    // classical WLS covariance understates the spread. HC3 sandwich instead.
    Eigen::MatrixXd d(m, k + 1);
    d << Eigen::VectorXd::Ones(m), x;
    const Eigen::VectorXd e = y - d * fit.coef;
    const Eigen::MatrixXd bread = (d.transpose() * w.asDiagonal() * d).inverse();
    Eigen::VectorXd u(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double h = w(i) * d.row(i).dot(bread * d.row(i).transpose());
      u(i) = w(i) * e(i) / std::max(1.0 - h, 1e-12);
    }
    const Eigen::MatrixXd meat = d.transpose() * u.cwiseAbs2().asDiagonal() * d;
    fit.covariance = bread * meat * bread;
  }

  FsattResult out;
  out.coef_names = fit.names;
  out.coef = fit.coef;
  out.n = fit.n;
  const double tq = stats::student_t_quantile(1.0 - (1.0 - options.ci_level) / 2.0, static_cast<double>(fit.dof));
  // Coefficient index of level l (intercept first); level 0 is the reference.
  auto idx = [](int l) { return static_cast<Eigen::Index>(l); };
  for (int a = 0; a < levels; ++a)
    for (int b = a + 1; b < levels; ++b) {
      const double beta_a = a == 0 ? 0.0 : fit.coef(idx(a));
      const double beta_b = fit.coef(idx(b));
      double var = fit.covariance(idx(b), idx(b));
      if (a > 0) var += fit.covariance(idx(a), idx(a)) - 2.0 * fit.covariance(idx(a), idx(b));
      Contrast c;
      c.from = a;
      c.to = b;
      c.estimate = beta_b - beta_a;
      c.se = std::sqrt(std::max(0.0, var));
      c.ci_low = c.estimate - tq * c.se;
      c.ci_high = c.estimate + tq * c.se;
      c.p_value = c.se > 0.0 ? stats::t_two_sided_p(c.estimate / c.se, static_cast<double>(fit.dof))
                             : std::nan("");
      out.contrasts.push_back(c);
    }
  return out;
}

void SynthPanelSpec::validate() const {
  require(n_units >= 1 && n_periods >= 1, "synthetic panel needs at least one unit and one period");
  require(period_years > 0.0, "period length must be positive");
  require(coefficients.size() == 5, "synthetic panel needs 5 coefficients (gdp_log, population_log, "
                                    "life_expectancy, years_education, eci)");
  require(level_effects.size() == 3, "synthetic panel needs 3 level effects (low, medium, high)");
  require(noise >= 0.0 && std::isfinite(noise), "noise must be non-negative");
  require(confounding >= 0.0 && confounding < 1.0, "confounding must lie in [0,1)");
}

SynthPanel synth_panel(const SynthPanelSpec& spec, std::uint64_t seed) {
  spec.validate();
  SynthPanel out;
  out.truth = spec;
  out.eci_levels = default_eci_levels();
  const auto bins = default_growth_coarsening();
  struct Range {
    double lo, hi;
  };
  const Range ranges[5] = {{bins.variables[0].cutpoints.front(), bins.variables[0].cutpoints.back()},
                           {bins.variables[1].cutpoints.front(), bins.variables[1].cutpoints.back()},
                           {bins.variables[2].cutpoints.front(), bins.variables[2].cutpoints.back()},
                           {bins.variables[3].cutpoints.front(), bins.variables[3].cutpoints.back()},
                           {-2.78, 2.4}};
  out.panel.covariate_names = {"gdp_log", "population_log", "life_expectancy", "years_education", "eci"};
  Rng rng = make_rng(seed, 50);
  std::normal_distribution<double> normal;
  for (int u = 0; u < spec.n_units; ++u) {
    const std::string id = csv::padded_id('C', static_cast<std::size_t>(u), static_cast<std::size_t>(spec.n_units));
    for (int t = 0; t < spec.n_periods; ++t) {
      double unit[5];
      for (double& v : unit) v = uniform01(rng);
      // ECI shares part of its rank with GDP so matching has something to fix.
      unit[4] = spec.confounding * unit[0] + (1.0 - spec.confounding) * unit[4];
      PanelRow row;
      row.unit_id = id;
      row.period_start = spec.start_year + t * spec.period_years;
      row.period_end = row.period_start + spec.period_years;
      double y = spec.intercept;
      for (int k = 0; k < 5; ++k) {
        const double v = ranges[k].lo + (ranges[k].hi - ranges[k].lo) * unit[k];
        row.covariates.push_back(v);
        y += spec.coefficients[static_cast<std::size_t>(k)] * v;
      }
      const auto level = out.eci_levels.bin(row.covariates[4]);
      y += spec.level_effects[static_cast<std::size_t>(*level)];
      const double eps = normal(rng);
      row.outcome = y + spec.noise * eps;
      out.panel.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace laborflow::matching
