// SPDX-License-Identifier: Apache-2.0
//
// Coarsened exact matching, multidimensional L1 imbalance, FSATT
// estimation on the matched sample and a synthetic growth-panel generator.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core/model.hpp"

namespace laborflow::matching {

/// left: bins [a, b); right: bins (a, b]. The outermost edges are inclusive
/// on both sides, so every value in [first, last] lands in exactly one bin.
enum class ClosedSide { left, right };

struct VariableBins {
  std::string name;
  std::vector<double> cutpoints;  // strictly increasing, >= 2 entries
  ClosedSide closed = ClosedSide::left;

  void validate() const;
  std::size_t bin_count() const { return cutpoints.size() - 1; }
  /// Bin index, or nullopt outside [first, last].
  std::optional<int> bin(double value) const;
};

struct CoarseningSpec {
  std::vector<VariableBins> variables;

  void validate() const;
  std::vector<std::string> names() const;
};

/// Growth-panel covariate bins: gdp_log, population_log, life_expectancy,
/// years_education (right-closed (9,11], (11,13]).
CoarseningSpec default_growth_coarsening();
/// ECI levels low [-2.8,-0.6), medium [-0.6,0.4), high [0.4,2.4].
VariableBins default_eci_levels();

/// Per-row bin tuples; throws naming the unit and variable for any value
/// outside the bins.
std::vector<std::vector<int>> coarsen(const Eigen::MatrixXd& x, const std::vector<std::string>& unit_ids,
                                      const CoarseningSpec& spec);
std::string stratum_key(const std::vector<int>& bins);

struct MatchData {
  std::vector<std::string> unit_ids;
  Eigen::MatrixXd covariates;  // columns follow spec.variables
  std::vector<int> level;      // treatment level 0..L-1
  std::vector<std::string> level_names;
  Eigen::VectorXd outcome;

  std::size_t size() const { return unit_ids.size(); }
  int levels() const { return static_cast<int>(level_names.size()); }
};

struct TreatmentSpec {
  std::string column = "eci";
  /// When set the column is binned into levels; otherwise it must hold the
  /// integer levels 0..L-1 directly.
  std::optional<VariableBins> bins = default_eci_levels();
  std::vector<std::string> level_names{"low", "medium", "high"};
};

MatchData match_data_from_panel(const Panel& panel, const CoarseningSpec& spec, const TreatmentSpec& treatment);

struct StratumCount {
  std::string key;
  std::vector<std::size_t> per_level;
  bool retained = false;
};

struct MatchResult {
  std::vector<std::string> stratum;  // key per row
  std::vector<char> matched;
  std::vector<double> weight;        // 0 when unmatched
  std::vector<StratumCount> strata;  // sorted by key
  std::vector<std::size_t> level_total;
  std::vector<std::size_t> level_matched;
  std::size_t matched_count = 0;
  int baseline = 0;

  bool empty() const { return matched_count == 0; }
};

/// Retains strata holding every level. Baseline-level units weigh 1; a unit
/// of level l in stratum s weighs (m_b^s / m_l^s) * (M_l / M_b) with M the
/// matched totals. No retained stratum yields an empty result.
MatchResult cem_match(const std::vector<std::vector<int>>& strata, const std::vector<int>& level, int levels,
                      std::optional<int> baseline = std::nullopt);
MatchResult cem_match(const MatchData& data, const CoarseningSpec& spec, std::optional<int> baseline = std::nullopt);

std::string match_report_csv(const MatchData& data, const MatchResult& result);

struct PairImbalance {
  int a = 0;
  int b = 0;
  double l1 = 0.0;
};

struct Imbalance {
  std::vector<PairImbalance> pairs;
  double l1 = 0.0;  // maximum over pairs
};

/// L1 = 1/2 sum |f - g| over the joint bin cells of two levels. Rows with
/// `include[i] == 0` are ignored; `weights` (optional) scale each row.
Imbalance l1_imbalance(const std::vector<std::vector<int>>& strata, const std::vector<int>& level, int levels,
                       const std::vector<char>* include = nullptr, const std::vector<double>* weights = nullptr);

struct Contrast {
  int from = 0;
  int to = 0;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 0.0;
};

struct FsattOptions {
  bool weighted = true;
  /// Heteroskedasticity-robust (HC3) covariance for the weighted fit.
  bool robust_se = true;
  double ci_level = 0.95;
  std::vector<std::string> covariates;  // columns of MatchData.covariates by spec name; empty = all
};

struct FsattResult {
  std::vector<Contrast> contrasts;  // every pair from < to
  std::vector<std::string> coef_names;
  Eigen::VectorXd coef;
  std::size_t n = 0;
};

/// Least squares of the outcome on level dummies (level 0 as reference)
/// and covariates over the matched units, CEM-weighted by default.
FsattResult fsatt(const MatchData& data, const CoarseningSpec& spec, const MatchResult& match,
                  const FsattOptions& options = {});

struct SynthPanelSpec {
  int n_units = 120;
  int n_periods = 4;
  double start_year = 1985.0;
  double period_years = 5.0;
  double intercept = 0.05;
  /// Coefficients on gdp_log, population_log, life_expectancy,
  /// years_education, eci. A nonzero eci slope is not separable from the
  /// level effects, so it defaults to 0.
  std::vector<double> coefficients{-0.02, 0.005, 0.008, -0.017, 0.0};
  /// Added per ECI level (low, medium, high).
  std::vector<double> level_effects{0.0, 0.104, 0.144};
  double noise = 0.05;
  /// Share of ECI driven by gdp_log, in [0,1).
  double confounding = 0.5;

  void validate() const;
};

struct SynthPanel {
  Panel panel;
  SynthPanelSpec truth;
  VariableBins eci_levels;
};

/// Covariates are uniform within the default coarsening's coverage (ECI in
/// [-2.78, 2.4]); deterministic per seed.
SynthPanel synth_panel(const SynthPanelSpec& spec, std::uint64_t seed);

}  // namespace laborflow::matching
