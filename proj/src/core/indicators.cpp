// SPDX-License-Identifier: Apache-2.0
#include "core/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace laborflow::indicators {

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  const std::int64_t r = a % b;
  return r < 0 ? r + b : r;
}

bool is_interaction(const EventRecord& e) { return e.kind == EventKind::call || e.kind == EventKind::sms; }

}  // namespace

bool NightWindow::contains(std::int64_t utc_timestamp) const {
  const std::int64_t second_of_day = floor_mod(utc_timestamp + utc_offset_s, 86400);
  const std::int64_t start = static_cast<std::int64_t>(start_hour) * 3600;
  const std::int64_t end = static_cast<std::int64_t>(end_hour) * 3600;
  if (start <= end) return second_of_day >= start && second_of_day < end;
  return second_of_day >= start || second_of_day < end;
}

std::string home_location(std::span<const EventRecord> events, const NightWindow& night) {
  std::map<std::string, std::size_t> counts;  // ordered: first max wins ties by smallest id
  for (const auto& e : events)
    if (night.contains(e.timestamp)) ++counts[e.tower_id];
  if (counts.empty()) fail(ErrorKind::degenerate, "no home inferable: user has no night-window events");
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

ActivityIndicators activity_indicators(std::span<const EventRecord> events, const NightWindow& night) {
  ActivityIndicators out;
  out.n_records = events.size();
  std::size_t calls = 0, night_calls = 0;
  double duration = 0.0;
  for (const auto& e : events) {
    if (e.kind != EventKind::call) continue;
    ++calls;
    duration += e.duration_s;
    if (night.contains(e.timestamp)) ++night_calls;
  }
  if (calls > 0) {
    out.mean_call_duration_s = duration / static_cast<double>(calls);
    out.pct_night_calls = static_cast<double>(night_calls) / static_cast<double>(calls);
  }
  return out;
}

EgoNetwork EgoNetwork::reversed() const {
  EgoNetwork r{ego, {}};
  for (const auto& [id, v] : contacts) r.contacts[id] = {v.in, v.out};
  return r;
}

EgoNetwork build_ego_network(std::span<const EventRecord> events) {
  EgoNetwork ego;
  if (!events.empty()) ego.ego = events.front().user_id;
  for (const auto& e : events) {
    if (!is_interaction(e)) continue;
    if (e.counterpart_id.empty())
      fail(ErrorKind::invalid_argument, "ego network unavailable: interaction records carry no counterpart ids");
    auto& v = ego.contacts[e.counterpart_id];
    if (e.direction == Direction::initiated) ++v.out;
    else ++v.in;
  }
  return ego;
}

std::optional<double> pct_initiated(const EgoNetwork& ego, InitiatedConvention convention) {
  std::size_t in = 0, out = 0;
  for (const auto& [id, v] : ego.contacts) {
    if (v.in > 0) ++in;
    if (v.out > 0) ++out;
  }
  if (in + out == 0) return std::nullopt;
  const double num = convention == InitiatedConvention::outgoing_share ? static_cast<double>(out) : static_cast<double>(in);
  return num / static_cast<double>(in + out);
}

std::optional<double> balance_of_contacts(const EgoNetwork& ego) {
  if (ego.k() == 0) return std::nullopt;
  double sum = 0.0;
  for (const auto& [id, v] : ego.contacts)
    sum += static_cast<double>(v.out) / static_cast<double>(v.out + v.in);
  return sum / static_cast<double>(ego.k());
}

std::optional<double> social_entropy(const EgoNetwork& ego) {
  const std::size_t k = ego.k();
  if (k == 0) return std::nullopt;
  if (k == 1) return 0.0;
  double total = 0.0;
  for (const auto& [id, v] : ego.contacts) total += static_cast<double>(v.out + v.in);
  double h = 0.0;
  for (const auto& [id, v] : ego.contacts) {
    const double p = static_cast<double>(v.out + v.in) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(k)), 0.0, 1.0);
}

std::optional<double> interactions_per_contact(const EgoNetwork& ego) {
  if (ego.k() == 0) return std::nullopt;
  double total = 0.0;
  for (const auto& [id, v] : ego.contacts) total += static_cast<double>(v.out + v.in);
  return total / static_cast<double>(ego.k());
}

SpatialMarkers spatial_markers(std::span<const EventRecord> events, std::string_view home_tower) {
  require(!events.empty(), "spatial markers need at least one record");
  std::set<std::string_view> towers;
  std::size_t at_home = 0;
  for (const auto& e : events) {
    towers.insert(e.tower_id);
    if (e.tower_id == home_tower) ++at_home;
  }
  return {towers.size(), static_cast<double>(at_home) / static_cast<double>(events.size())};
}

UserIndicators user_indicators(std::span<const EventRecord> events, const Options& options) {
  std::map<std::string, std::vector<const EventRecord*>> by_user;
  for (const auto& e : events) by_user[e.user_id].push_back(&e);

  UserIndicators out;
  out.ego_available = std::none_of(events.begin(), events.end(), [](const EventRecord& e) {
    return is_interaction(e) && e.counterpart_id.empty();
  });

  const std::size_t n = by_user.size();
  auto& table = out.table;
  table.columns.assign(kColumns.begin(), kColumns.end());
  table.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kColumns.size()), std::nan(""));
  std::vector<std::vector<EventRecord>> grouped;
  grouped.reserve(n);
  for (auto& [user, recs] : by_user) {
    table.unit_ids.push_back(user);
    std::vector<EventRecord> copy;
    copy.reserve(recs.size());
    for (const auto* r : recs) copy.push_back(*r);
    grouped.push_back(std::move(copy));
  }
  std::vector<std::optional<std::string>> homes(n);

  parallel_for(n, options.threads, [&](std::size_t u) {
    const auto& recs = grouped[u];
    const auto row = static_cast<Eigen::Index>(u);
    auto put = [&](int col, std::optional<double> v) {
      if (v) table.values(row, col) = *v;
    };
    const auto act = activity_indicators(recs, options.night);
    put(0, static_cast<double>(act.n_records));
    put(1, act.mean_call_duration_s);
    put(2, act.pct_night_calls);
    if (out.ego_available) {
      const auto ego = build_ego_network(recs);
      put(3, pct_initiated(ego, options.convention));
      put(4, balance_of_contacts(ego));
      put(5, social_entropy(ego));
      put(6, interactions_per_contact(ego));
    }
    std::optional<std::string> home;
    if (std::any_of(recs.begin(), recs.end(), [&](const EventRecord& e) { return options.night.contains(e.timestamp); }))
      home = home_location(recs, options.night);
    const auto spatial = spatial_markers(recs, home.value_or(std::string()));
    put(7, static_cast<double>(spatial.visited_locations));
    if (home) put(8, spatial.pct_time_home);
    homes[u] = std::move(home);
  });

  for (std::size_t u = 0; u < n; ++u) {
    if (homes[u]) out.homes[table.unit_ids[u]] = *homes[u];
    else out.no_home.push_back(table.unit_ids[u]);
  }
  return out;
}

std::map<std::string, std::int64_t> home_counts(const std::map<std::string, std::string>& homes) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& [user, tower] : homes) ++counts[tower];
  return counts;
}

DistrictAggregate aggregate_to_districts(const IndicatorTable& users,
                                         const std::map<std::string, std::string>& user_district,
                                         std::span<const std::string> all_districts) {
  std::map<std::string, std::vector<Eigen::Index>> members;
  for (const auto& d : all_districts) members[d];
  for (std::size_t u = 0; u < users.unit_ids.size(); ++u) {
    auto it = user_district.find(users.unit_ids[u]);
    if (it == user_district.end())
      fail(ErrorKind::invalid_argument, "user " + users.unit_ids[u] + " has no district assignment");
    members[it->second].push_back(static_cast<Eigen::Index>(u));
  }

  DistrictAggregate out;
  std::vector<std::pair<std::string, std::vector<Eigen::Index>>> kept;
  for (auto& [d, rows] : members) {
    if (rows.empty()) out.excluded.push_back(d);
    else kept.emplace_back(d, std::move(rows));
  }
  require(kept.size() >= 2, "standardization needs at least two districts with users");

  const auto nc = static_cast<Eigen::Index>(users.columns.size());
  IndicatorTable raw;
  raw.columns = users.columns;
  raw.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(kept.size()), nc, std::nan(""));
  for (std::size_t d = 0; d < kept.size(); ++d) {
    raw.unit_ids.push_back(kept[d].first);
    for (Eigen::Index c = 0; c < nc; ++c) {
      double sum = 0.0;
      std::size_t count = 0;
      for (auto r : kept[d].second) {
        const double v = users.values(r, c);
        if (std::isnan(v)) continue;
        sum += v;
        ++count;
      }
      if (count > 0) raw.values(static_cast<Eigen::Index>(d), c) = sum / static_cast<double>(count);
    }
  }

  IndicatorTable z = raw;
  for (Eigen::Index c = 0; c < nc; ++c) {
    std::vector<Eigen::Index> present;
    std::vector<double> col;
    for (Eigen::Index d = 0; d < z.values.rows(); ++d)
      if (!std::isnan(z.values(d, c))) {
        present.push_back(d);
        col.push_back(z.values(d, c));
      }
    ColumnScale scale{users.columns[static_cast<std::size_t>(c)], std::nan(""), std::nan("")};
    if (col.empty()) {
      z.degenerate_columns.push_back(scale.column);
      z.scales.push_back(scale);
      continue;
    }
    const bool ok = stats::zscore_inplace(col, &scale.mean, &scale.sd);
    if (!ok) {
      z.degenerate_columns.push_back(scale.column);
      std::fill(col.begin(), col.end(), 0.0);
    }
    for (std::size_t i = 0; i < present.size(); ++i) z.values(present[i], c) = col[i];
    z.scales.push_back(scale);
  }
  out.table = std::move(z);
  out.raw = std::move(raw);
  return out;
}

std::string scales_to_csv(const IndicatorTable& table) {
  csv::Writer w;
  w.row("column", "mean", "sd");
  for (const auto& s : table.scales) w.row(s.column, s.mean, s.sd);
  return w.str();
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  require(n_users >= 2, "synthetic CDR needs at least 2 users");
  require(n_towers >= 1, "synthetic CDR needs at least 1 tower");
  require(days >= 1, "synthetic CDR needs at least 1 day");
  require(unemployed_fraction >= 0.0 && unemployed_fraction <= 1.0, "unemployed_fraction must be in [0,1]");
  require(p_call >= 0.0 && p_sms >= 0.0 && p_call + p_sms <= 1.0, "p_call + p_sms must be within [0,1]");
  require(mean_call_duration_s > 0.0, "mean_call_duration_s must be positive");
  require(contacts_per_user >= 1 && contacts_per_user < n_users, "contacts_per_user must be in [1, n_users)");
  require(area_m > 0.0, "area_m must be positive");
  require(std::abs(utc_offset_s) <= 14 * 3600, "utc_offset_s out of range");
  for (const auto* p : {&employed, &unemployed}) {
    require(p->night_bias >= 0.0 && p->night_bias <= 1.0, "night_bias must be in [0,1]");
    require(p->events_per_day > 0.0, "events_per_day must be positive");
    require(p->p_initiated >= 0.0 && p->p_initiated <= 1.0, "p_initiated must be in [0,1]");
    require(p->home_stay >= 0.0 && p->home_stay <= 1.0, "home_stay must be in [0,1]");
    require(p->day_anchor >= 0.0 && p->day_anchor <= 1.0, "day_anchor must be in [0,1]");
  }
}

TimeWindow SynthConfig::window() const {
  const std::int64_t local_midnight = start_epoch - utc_offset_s;
  return {local_midnight, local_midnight + static_cast<std::int64_t>(days + 1) * 86400};
}


SynthCdr synth_cdr(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed, 0x11);
  SynthCdr out;

  std::vector<TowerSite> sites;
  for (std::size_t t = 0; t < config.n_towers; ++t) {
    const double x = uniform01(rng) * config.area_m;
    const double y = uniform01(rng) * config.area_m;
    TowerSite s;
    s.tower_id = csv::padded_id('T', t, config.n_towers);
    s.lat = 24.6 + y / 111'320.0;
    s.lon = 46.6 + x / (111'320.0 * std::cos(24.6 * 3.14159265358979323846 / 180.0));
    s.projected = Point{x, y};
    sites.push_back(std::move(s));
  }
  out.towers = TowerRegistry(sites);

  const std::size_t n = config.n_users;
  std::vector<std::string> ids(n);
  std::vector<int> label(n);
  std::vector<std::size_t> home(n), anchor(n);
  std::vector<std::vector<std::size_t>> contacts(n);
  for (std::size_t u = 0; u < n; ++u) {
    ids[u] = csv::padded_id('U', u, n);
    label[u] = bernoulli(rng, config.unemployed_fraction) ? 1 : 0;
    home[u] = uniform_index(rng, config.n_towers);
    anchor[u] = label[u] == 1 ? home[u] : uniform_index(rng, config.n_towers);
    std::set<std::size_t> chosen;
    while (chosen.size() < config.contacts_per_user) {
      const auto c = uniform_index(rng, n);
      if (c != u) chosen.insert(c);
    }
    contacts[u].assign(chosen.begin(), chosen.end());
    out.labels.emplace_back(ids[u], label[u]);
  }

  const std::int64_t local_midnight = config.start_epoch - config.utc_offset_s;
  for (std::size_t u = 0; u < n; ++u) {
    const auto& profile = label[u] == 1 ? config.unemployed : config.employed;
    std::poisson_distribution<int> count_dist(profile.events_per_day * config.days);
    const int count = std::max(1, count_dist(rng));
    std::exponential_distribution<double> duration_dist(1.0 / config.mean_call_duration_s);
    std::vector<EventRecord> mine;
    mine.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
      EventRecord e;
      e.user_id = ids[u];
      const double r = uniform01(rng);
      e.kind = r < config.p_call ? EventKind::call : (r < config.p_call + config.p_sms ? EventKind::sms : EventKind::data);
      const auto day = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(config.days)));
      const bool at_night = bernoulli(rng, profile.night_bias);
      // Night spans local 19:00 to 07:00 of the next day; day spans 07:00 to 19:00.
      const auto offset_in_block = static_cast<std::int64_t>(uniform_index(rng, 12 * 3600));
      const std::int64_t local_second = (at_night ? 19 * 3600 : 7 * 3600) + offset_in_block;
      e.timestamp = local_midnight + day * 86400 + local_second;
      std::size_t tower;
      if (at_night) tower = bernoulli(rng, profile.home_stay) ? home[u] : uniform_index(rng, config.n_towers);
      else tower = bernoulli(rng, profile.day_anchor) ? anchor[u] : uniform_index(rng, config.n_towers);
      e.tower_id = sites[tower].tower_id;
      if (e.kind == EventKind::data) {
        e.direction = Direction::initiated;
      } else {
        e.direction = bernoulli(rng, profile.p_initiated) ? Direction::initiated : Direction::received;
        e.counterpart_id = ids[contacts[u][uniform_index(rng, contacts[u].size())]];
      }
      if (e.kind == EventKind::call) e.duration_s = std::max(1.0, std::round(duration_dist(rng)));
      mine.push_back(std::move(e));
    }
    std::sort(mine.begin(), mine.end(), [](const EventRecord& a, const EventRecord& b) { return a.timestamp < b.timestamp; });
    for (auto& e : mine) out.events.push_back(std::move(e));
  }
  return out;
}

}  // namespace laborflow::indicators
