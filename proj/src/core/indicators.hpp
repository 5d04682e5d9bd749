// SPDX-License-Identifier: Apache-2.0
//
// Per-user behavioral indicators from event logs and their district-level
// aggregation. Every per-user function is invariant to record order.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "core/model.hpp"

namespace laborflow::indicators {

/// Local-time night window, half-open: [start_hour, end_hour) wrapping midnight.
struct NightWindow {
  std::int32_t utc_offset_s = 0;
  int start_hour = 19;
  int end_hour = 7;

  bool contains(std::int64_t utc_timestamp) const;
};

/// Tower with the most night-window events; ties go to the smallest id.
/// Throws when the user has no night events ("no home inferable").
std::string home_location(std::span<const EventRecord> events, const NightWindow& night);

struct ActivityIndicators {
  std::size_t n_records = 0;
  std::optional<double> mean_call_duration_s;
  std::optional<double> pct_night_calls;
};

ActivityIndicators activity_indicators(std::span<const EventRecord> events, const NightWindow& night);

struct ContactVolume {
  std::int64_t out = 0;  // w_ij, initiated by the ego
  std::int64_t in = 0;   // w_ji, received by the ego
};

struct EgoNetwork {
  std::string ego;
  std::map<std::string, ContactVolume> contacts;

  std::size_t k() const { return contacts.size(); }
  /// Swaps the direction of every interaction.
  EgoNetwork reversed() const;
};

/// Tallies call and sms interactions per counterpart. Data sessions carry
/// no counterpart and are ignored. Throws "ego network unavailable" when an
/// interaction lacks a counterpart id.
EgoNetwork build_ego_network(std::span<const EventRecord> events);

/// |O| / (|I| + |O|) by default, where O are contacts the ego initiated to
/// and I contacts the ego received from. `incoming_share` selects the
/// |I| / (|I| + |O|) variant.
enum class InitiatedConvention { outgoing_share, incoming_share };

std::optional<double> pct_initiated(const EgoNetwork& ego,
                                    InitiatedConvention convention = InitiatedConvention::outgoing_share);
std::optional<double> balance_of_contacts(const EgoNetwork& ego);
/// Normalized Shannon entropy of per-contact volume shares (natural log);
/// 0 for a single contact.
std::optional<double> social_entropy(const EgoNetwork& ego);
std::optional<double> interactions_per_contact(const EgoNetwork& ego);

struct SpatialMarkers {
  std::size_t visited_locations = 0;
  double pct_time_home = 0.0;
};

SpatialMarkers spatial_markers(std::span<const EventRecord> events, std::string_view home_tower);

inline constexpr std::array<std::string_view, 9> kColumns = {
    "n_records",    "mean_call_duration_s", "pct_night_calls",          "pct_initiated",     "balance_of_contacts",
    "social_entropy", "interactions_per_contact", "visited_locations", "pct_time_home"};

struct ColumnScale {
  std::string column;
  double mean = 0.0;
  double sd = 0.0;
};

/// Units x named indicator columns; NaN marks a missing value.
struct IndicatorTable {
  std::vector<std::string> unit_ids;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
  std::vector<ColumnScale> scales;  // filled once standardized
  std::vector<std::string> degenerate_columns;

  LabeledMatrix as_matrix() const { return {unit_ids, columns, values}; }
};

struct Options {
  NightWindow night;
  InitiatedConvention convention = InitiatedConvention::outgoing_share;
  unsigned threads = 1;
};

struct UserIndicators {
  IndicatorTable table;
  std::map<std::string, std::string> homes;  // user -> home tower
  std::vector<std::string> no_home;           // users without night activity
  bool ego_available = true;                  // false when records lack counterpart ids
};

/// Groups events by user (sorted by id) and computes all nine indicators.
UserIndicators user_indicators(std::span<const EventRecord> events, const Options& options);

/// Number of users whose home is each tower.
std::map<std::string, std::int64_t> home_counts(const std::map<std::string, std::string>& homes);

struct DistrictAggregate {
  IndicatorTable table;  // standardized district means
  IndicatorTable raw;    // district means before standardization
  std::vector<std::string> excluded;  // districts with no users
};

/// District mean of member users (missing values excluded), then each
/// column z-scored across districts with the population sd.
DistrictAggregate aggregate_to_districts(const IndicatorTable& users,
                                         const std::map<std::string, std::string>& user_district,
                                         std::span<const std::string> all_districts = {});

std::string scales_to_csv(const IndicatorTable& table);

// ---------------------------------------------------------------------------
// Synthetic event logs

struct ClassProfile {
  double night_bias = 0.3;       // probability an event falls in the night window
  double events_per_day = 6.0;
  double p_initiated = 0.5;
  double home_stay = 0.8;        // probability a night event is at the home tower
  double day_anchor = 0.6;       // probability a day event is at the anchor tower (work, or home)
};

struct SynthConfig {
  std::size_t n_users = 100;
  std::size_t n_towers = 20;
  std::int64_t start_epoch = 1'420'070'400;  // 2015-01-01T00:00:00Z
  int days = 14;
  std::int32_t utc_offset_s = 0;
  double unemployed_fraction = 0.3;
  ClassProfile employed{0.25, 6.0, 0.55, 0.85, 0.7};
  ClassProfile unemployed{0.45, 5.0, 0.45, 0.85, 0.6};
  double p_call = 0.5;
  double p_sms = 0.3;  // remainder is data
  double mean_call_duration_s = 120.0;
  std::size_t contacts_per_user = 8;
  double area_m = 20'000.0;

  void validate() const;
  TimeWindow window() const;
};

struct SynthCdr {
  std::vector<EventRecord> events;  // sorted by (user, timestamp)
  TowerRegistry towers;
  std::vector<std::pair<std::string, int>> labels;  // user -> 0 employed, 1 unemployed
};

SynthCdr synth_cdr(const SynthConfig& config, std::uint64_t seed);

}  // namespace laborflow::indicators
