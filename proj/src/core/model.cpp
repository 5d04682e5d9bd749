// SPDX-License-Identifier: Apache-2.0
#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/geometry_adapt.hpp"

namespace laborflow {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::call: return "call";
    case EventKind::data: return "data";
    case EventKind::sms: return "sms";
  }
  return "?";
}

std::string_view to_string(Direction direction) {
  return direction == Direction::initiated ? "initiated" : "received";
}

std::string_view to_string(ZoneKind kind) {
  switch (kind) {
    case ZoneKind::taz: return "TAZ";
    case ZoneKind::district: return "district";
    case ZoneKind::region: return "region";
  }
  return "?";
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int digits(std::string_view s, std::size_t pos, std::size_t len) {
  auto part = s.substr(pos, len);
  if (part.size() != len || !all_digits(part)) throw std::invalid_argument("digits");
  return std::stoi(std::string(part));
}

}  // namespace

std::int64_t parse_timestamp(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  std::string_view body = text;
  if (!body.empty() && body.front() == '-') body.remove_prefix(1);
  if (all_digits(body)) return csv::parse_int(text, "timestamp");
  try {
    if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
        text[13] != ':' || text[16] != ':')
      throw std::invalid_argument("layout");
    const int year = digits(text, 0, 4), month = digits(text, 5, 2), day = digits(text, 8, 2);
    const int hour = digits(text, 11, 2), minute = digits(text, 14, 2), second = digits(text, 17, 2);
    std::string_view rest = text.substr(19);
    if (!rest.empty() && rest.front() == '.') {  // fractional seconds are truncated
      rest.remove_prefix(1);
      while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9') rest.remove_prefix(1);
    }
    if (!(rest.empty() || rest == "Z" || rest == "+00:00" || rest == "+0000"))
      throw std::invalid_argument("offset");
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
      throw std::invalid_argument("range");
    return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400 +
           hour * 3600 + minute * 60 + second;
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::parse, "not an epoch or ISO-8601 UTC timestamp: '" + std::string(text) + "'");
  }
}

double signed_area(const Ring& ring) {
  double twice = 0.0;
  for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
    const auto& a = ring[i];
    const auto& b = ring[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

double Zone::area() const { return std::abs(signed_area(ring)); }

void validate_ring(const Ring& ring, const std::string& what) {
  if (ring.size() < 3) fail(ErrorKind::invalid_argument, what + ": ring needs at least 3 vertices");
  for (const auto& p : ring)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      fail(ErrorKind::invalid_argument, what + ": non-finite coordinate");
  if (!(std::abs(signed_area(ring)) > 0.0)) fail(ErrorKind::invalid_argument, what + ": ring has zero area");
  const auto poly = detail::to_polygon(ring);
  std::string reason;
  if (!detail::bg::is_valid(poly, reason))
    fail(ErrorKind::invalid_argument, what + ": ring is not simple (" + reason + ")");
}

// ---------------------------------------------------------------------------

TowerRegistry::TowerRegistry(std::vector<TowerSite> sites) : sites_(std::move(sites)) {
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const auto& s = sites_[i];
    if (s.tower_id.empty()) fail(ErrorKind::invalid_argument, "tower with empty id");
    if (!(std::abs(s.lat) <= 90.0) || !(std::abs(s.lon) <= 180.0))
      fail(ErrorKind::invalid_argument, "tower " + s.tower_id + ": latitude/longitude out of range");
    if (!index_.emplace(s.tower_id, i).second)
      fail(ErrorKind::invalid_argument, "duplicate tower_id '" + s.tower_id + "'");
  }
}

const TowerSite& TowerRegistry::at(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) fail(ErrorKind::invalid_argument, "unknown tower_id '" + std::string(id) + "'");
  return sites_[it->second];
}

// ---------------------------------------------------------------------------

NominationGraph::NominationGraph(double scale_min, double scale_max)
    : scale_min_(scale_min), scale_max_(scale_max) {
  require(scale_min < scale_max, "nomination scale must satisfy min < max");
}

std::size_t NominationGraph::add_node(std::string_view id) {
  require(!id.empty(), "empty node id");
  auto [it, inserted] = index_.emplace(std::string(id), ids_.size());
  if (inserted) ids_.emplace_back(id);
  return it->second;
}

void NominationGraph::add_edge(std::string_view src, std::string_view dst, double score) {
  if (src == dst) fail(ErrorKind::invalid_argument, "self-loop on node '" + std::string(src) + "'");
  if (!(score >= scale_min_ && score <= scale_max_))
    fail(ErrorKind::invalid_argument, "score " + csv::format_double(score) + " outside scale [" +
                                          csv::format_double(scale_min_) + ", " +
                                          csv::format_double(scale_max_) + "]");
  const auto a = add_node(src);
  const auto b = add_node(dst);
  if (!edge_index_.emplace(key(a, b), edges_.size()).second)
    fail(ErrorKind::invalid_argument,
         "duplicate edge " + std::string(src) + " -> " + std::string(dst));
  edges_.push_back({a, b, score});
}

std::optional<std::size_t> NominationGraph::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t NominationGraph::index_of(std::string_view id) const {
  auto i = find(id);
  if (!i) fail(ErrorKind::invalid_argument, "unknown node '" + std::string(id) + "'");
  return *i;
}

std::optional<double> NominationGraph::score(std::size_t src, std::size_t dst) const {
  auto it = edge_index_.find(key(src, dst));
  if (it == edge_index_.end()) return std::nullopt;
  return edges_[it->second].score;
}

// ---------------------------------------------------------------------------

std::optional<Eigen::Index> LabeledMatrix::col_index(std::string_view label) const {
  for (std::size_t j = 0; j < col_labels.size(); ++j)
    if (col_labels[j] == label) return static_cast<Eigen::Index>(j);
  return std::nullopt;
}

IncidenceMatrix prune_zero(const IncidenceMatrix& m, PruneReport* report) {
  const Eigen::VectorXd rs = m.values.cwiseAbs().rowwise().sum();
  const Eigen::VectorXd cs = m.values.cwiseAbs().colwise().sum().transpose();
  std::vector<Eigen::Index> keep_r, keep_c;
  PruneReport local;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (rs[i] > 0.0) keep_r.push_back(i);
    else local.rows.push_back(m.row_labels[static_cast<std::size_t>(i)]);
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (cs[j] > 0.0) keep_c.push_back(j);
    else local.cols.push_back(m.col_labels[static_cast<std::size_t>(j)]);
  }
  IncidenceMatrix out;
  out.values.resize(static_cast<Eigen::Index>(keep_r.size()), static_cast<Eigen::Index>(keep_c.size()));
  for (std::size_t a = 0; a < keep_r.size(); ++a) {
    out.row_labels.push_back(m.row_labels[static_cast<std::size_t>(keep_r[a])]);
    for (std::size_t b = 0; b < keep_c.size(); ++b)
      out.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = m.values(keep_r[a], keep_c[b]);
  }
  for (auto j : keep_c) out.col_labels.push_back(m.col_labels[static_cast<std::size_t>(j)]);
  if (report) *report = std::move(local);
  return out;
}

bool is_binary(const Eigen::MatrixXd& values) {
  return (values.array() == 0.0 || values.array() == 1.0).all();
}

LabeledMatrix parse_labeled_csv(std::string_view text, const LabeledCsvOptions& options,
                                const std::string& source) {
  const auto table = csv::read_string(text, source);
  if (table.header.size() < 2) fail(ErrorKind::parse, source + ": need a label column and at least one value column");
  LabeledMatrix m;
  m.col_labels.assign(table.header.begin() + 1, table.header.end());
  if (options.unique_col_labels) {
    std::set<std::string> seen;
    for (const auto& c : m.col_labels)
      if (!seen.insert(c).second) fail(ErrorKind::parse, source + ": duplicate column label '" + c + "'");
  }
  const auto nr = static_cast<Eigen::Index>(table.rows.size());
  const auto nc = static_cast<Eigen::Index>(m.col_labels.size());
  m.values.resize(nr, nc);
  std::set<std::string> seen_rows;
  for (Eigen::Index i = 0; i < nr; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const std::string where = source + ":" + std::to_string(table.line_numbers[static_cast<std::size_t>(i)]);
    if (options.unique_row_labels && !seen_rows.insert(row[0]).second)
      fail(ErrorKind::parse, where + ": duplicate row label '" + row[0] + "'");
    m.row_labels.push_back(row[0]);
    for (Eigen::Index j = 0; j < nc; ++j) {
      const auto& cell = row[static_cast<std::size_t>(j + 1)];
      const double v = cell.empty() ? std::nan("") : csv::parse_double(cell, where);
      if (options.require_nonnegative && !(v >= 0.0))
        fail(ErrorKind::parse, where + ": negative or missing value in column '" +
                                   m.col_labels[static_cast<std::size_t>(j)] + "'");
      m.values(i, j) = v;
    }
  }
  return m;
}

LabeledMatrix read_labeled_csv(const std::filesystem::path& path, const LabeledCsvOptions& options) {
  return parse_labeled_csv(read_text_file(path), options, path.string());
}

std::string to_csv(const LabeledMatrix& m, std::string_view corner) {
  csv::Writer w;
  w.field(corner);
  for (const auto& c : m.col_labels) w.field(c);
  w.end_row();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    w.field(m.row_labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.field(m.values(i, j));
    w.end_row();
  }
  return w.str();
}

IncidenceMatrix load_incidence(const std::filesystem::path& path) {
  return read_labeled_csv(path, {.require_nonnegative = true, .unique_row_labels = true, .unique_col_labels = true});
}

// ---------------------------------------------------------------------------

std::size_t Panel::covariate_index(std::string_view name) const {
  for (std::size_t i = 0; i < covariate_names.size(); ++i)
    if (covariate_names[i] == name) return i;
  fail(ErrorKind::invalid_argument, "panel has no covariate '" + std::string(name) + "'");
}

Eigen::VectorXd Panel::column(std::string_view name) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  std::optional<std::size_t> cov;
  if (name != "outcome" && name != "period_start" && name != "period_end") cov = covariate_index(name);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    double v = 0.0;
    if (cov) v = r.covariates[*cov];
    else if (name == "outcome") v = r.outcome;
    else if (name == "period_start") v = r.period_start;
    else v = r.period_end;
    out[static_cast<Eigen::Index>(i)] = v;
  }
  return out;
}

void Panel::require_covariates(std::span<const std::string> names) const {
  for (const auto& name : names) {
    const auto col = column(name);
    for (Eigen::Index i = 0; i < col.size(); ++i)
      if (!std::isfinite(col[i]))
        fail(ErrorKind::invalid_argument, "covariate '" + name + "' is missing or non-finite in row " +
                                              std::to_string(i + 1) + " (unit " +
                                              rows[static_cast<std::size_t>(i)].unit_id + ")");
  }
}

Panel parse_panel(std::string_view text, const std::string& source) {
  const auto table = csv::read_string(text, source);
  static const std::vector<std::string> fixed = {"unit_id", "period_start", "period_end", "outcome"};
  if (table.header.size() < fixed.size() ||
      !std::equal(fixed.begin(), fixed.end(), table.header.begin()))
    fail(ErrorKind::parse, source + ": panel header must start with unit_id,period_start,period_end,outcome");
  Panel panel;
  panel.covariate_names.assign(table.header.begin() + 4, table.header.end());
  std::set<std::string> seen;
  for (const auto& c : panel.covariate_names)
    if (!seen.insert(c).second) fail(ErrorKind::parse, source + ": duplicate covariate '" + c + "'");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = source + ":" + std::to_string(table.line_numbers[i]);
    PanelRow r;
    r.unit_id = row[0];
    r.period_start = csv::parse_double(row[1], where);
    r.period_end = csv::parse_double(row[2], where);
    if (!(r.period_end > r.period_start)) fail(ErrorKind::parse, where + ": period_end must exceed period_start");
    r.outcome = row[3].empty() ? std::nan("") : csv::parse_double(row[3], where);
    for (std::size_t j = 4; j < row.size(); ++j)
      r.covariates.push_back(row[j].empty() ? std::nan("") : csv::parse_double(row[j], where));
    panel.rows.push_back(std::move(r));
  }
  return panel;
}

Panel load_panel(const std::filesystem::path& path) { return parse_panel(read_text_file(path), path.string()); }

std::string to_csv(const Panel& panel) {
  csv::Writer w;
  w.field("unit_id").field("period_start").field("period_end").field("outcome");
  for (const auto& c : panel.covariate_names) w.field(c);
  w.end_row();
  for (const auto& r : panel.rows) {
    w.field(r.unit_id).field(r.period_start).field(r.period_end).field(r.outcome);
    for (double v : r.covariates) w.field(v);
    w.end_row();
  }
  return w.str();
}

// ---------------------------------------------------------------------------

EventLoadResult parse_events(std::string_view text, const TimeWindow& window, const TowerRegistry* towers,
                             const std::string& source) {
  const auto table = csv::read_string(text, source);
  static const std::vector<std::string> fixed = {"user_id", "kind", "direction", "tower_id", "duration_s", "timestamp"};
  if (table.header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), table.header.begin()))
    fail(ErrorKind::parse, source + ": events header must be user_id,kind,direction,tower_id,duration_s,timestamp");
  std::optional<std::size_t> counterpart_col;
  if (table.has_column("counterpart_id")) counterpart_col = table.column("counterpart_id");
  if (table.rows.empty()) fail(ErrorKind::parse, source + ": no event rows");

  EventLoadResult result;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = source + ":" + std::to_string(table.line_numbers[i]);
    EventRecord e;
    e.user_id = row[0];
    if (e.user_id.empty()) fail(ErrorKind::parse, where + ": empty user_id");
    if (row[1] == "call") e.kind = EventKind::call;
    else if (row[1] == "data") e.kind = EventKind::data;
    else if (row[1] == "sms") e.kind = EventKind::sms;
    else fail(ErrorKind::parse, where + ": kind must be call, data or sms, got '" + row[1] + "'");
    if (row[2] == "initiated") e.direction = Direction::initiated;
    else if (row[2] == "received") e.direction = Direction::received;
    else fail(ErrorKind::parse, where + ": direction must be initiated or received, got '" + row[2] + "'");
    e.tower_id = row[3];
    if (e.tower_id.empty()) fail(ErrorKind::parse, where + ": empty tower_id");
    if (towers && !towers->contains(e.tower_id))
      fail(ErrorKind::parse, where + ": unknown tower_id '" + e.tower_id + "'");
    e.duration_s = row[4].empty() ? 0.0 : csv::parse_double(row[4], where);
    if (!(e.duration_s >= 0.0) || !std::isfinite(e.duration_s))
      fail(ErrorKind::parse, where + ": duration_s must be a non-negative number, got '" + row[4] + "'");
    if (e.kind != EventKind::call) e.duration_s = 0.0;
    try {
      e.timestamp = parse_timestamp(row[5]);
    } catch (const Error& err) {
      fail(ErrorKind::parse, where + ": " + err.what());
    }
    if (counterpart_col) e.counterpart_id = row[*counterpart_col];
    if (!window.contains(e.timestamp)) {
      ++result.dropped;
      continue;
    }
    result.records.push_back(std::move(e));
  }
  return result;
}

EventLoadResult load_events(const std::filesystem::path& path, const TimeWindow& window, const TowerRegistry* towers) {
  return parse_events(read_text_file(path), window, towers, path.string());
}

std::string to_csv(std::span<const EventRecord> events) {
  const bool counterpart = std::any_of(events.begin(), events.end(),
                                       [](const EventRecord& e) { return !e.counterpart_id.empty(); });
  csv::Writer w;
  w.field("user_id").field("kind").field("direction").field("tower_id").field("duration_s").field("timestamp");
  if (counterpart) w.field("counterpart_id");
  w.end_row();
  for (const auto& e : events) {
    w.field(e.user_id).field(to_string(e.kind)).field(to_string(e.direction)).field(e.tower_id);
    w.field(e.duration_s).field(static_cast<long long>(e.timestamp));
    if (counterpart) w.field(e.counterpart_id);
    w.end_row();
  }
  return w.str();
}

TowerRegistry parse_towers(std::string_view text, const std::string& source) {
  const auto table = csv::read_string(text, source);
  const auto c_id = table.column("tower_id"), c_lat = table.column("lat"), c_lon = table.column("lon");
  const bool projected = table.has_column("x") && table.has_column("y");
  std::size_t c_x = 0, c_y = 0;
  if (projected) {
    c_x = table.column("x");
    c_y = table.column("y");
  }
  std::vector<TowerSite> sites;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = source + ":" + std::to_string(table.line_numbers[i]);
    TowerSite s;
    s.tower_id = row[c_id];
    s.lat = csv::parse_double(row[c_lat], where);
    s.lon = csv::parse_double(row[c_lon], where);
    if (projected) s.projected = Point{csv::parse_double(row[c_x], where), csv::parse_double(row[c_y], where)};
    sites.push_back(std::move(s));
  }
  try {
    return TowerRegistry(std::move(sites));
  } catch (const Error& e) {
    fail(ErrorKind::parse, source + ": " + e.what());
  }
}

TowerRegistry load_towers(const std::filesystem::path& path) { return parse_towers(read_text_file(path), path.string()); }

std::string to_csv(const TowerRegistry& towers) {
  const bool projected = std::any_of(towers.sites().begin(), towers.sites().end(),
                                     [](const TowerSite& s) { return s.projected.has_value(); });
  csv::Writer w;
  w.field("tower_id").field("lat").field("lon");
  if (projected) w.field("x").field("y");
  w.end_row();
  for (const auto& s : towers.sites()) {
    w.field(s.tower_id).field(s.lat).field(s.lon);
    if (projected) w.field(s.planar().x).field(s.planar().y);
    w.end_row();
  }
  return w.str();
}

std::vector<Zone> parse_zones(std::string_view geojson, const std::string& source) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(geojson);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, source + ": invalid JSON: " + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features") || !doc["features"].is_array())
    fail(ErrorKind::parse, source + ": expected a GeoJSON FeatureCollection");
  std::vector<Zone> zones;
  std::set<std::string> ids;
  std::size_t index = 0;
  for (const auto& feature : doc["features"]) {
    const std::string where = source + ": feature " + std::to_string(index++);
    try {
      const auto& props = feature.at("properties");
      Zone z;
      const auto& id = props.at("zone_id");
      z.zone_id = id.is_string() ? id.get<std::string>() : id.dump();
      std::string kind = props.value("kind", "district");
      std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::tolower(c); });
      if (kind == "taz") z.kind = ZoneKind::taz;
      else if (kind == "district") z.kind = ZoneKind::district;
      else if (kind == "region") z.kind = ZoneKind::region;
      else fail(ErrorKind::parse, where + ": unknown zone kind '" + kind + "'");
      if (props.contains("population") && !props["population"].is_null()) {
        const double pop = props["population"].get<double>();
        if (!(pop >= 0.0)) fail(ErrorKind::parse, where + ": negative population");
        z.population = pop;
      }
      const auto& geom = feature.at("geometry");
      if (geom.at("type").get<std::string>() != "Polygon")
        fail(ErrorKind::parse, where + ": only Polygon geometries are supported");
      const auto& rings = geom.at("coordinates");
      if (rings.size() != 1) fail(ErrorKind::parse, where + ": polygons with holes are not supported");
      for (const auto& c : rings[0]) z.ring.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      if (z.ring.size() >= 2 && z.ring.front() == z.ring.back()) z.ring.pop_back();
      validate_ring(z.ring, where + " (zone " + z.zone_id + ")");
      if (!ids.insert(z.zone_id).second) fail(ErrorKind::parse, where + ": duplicate zone_id '" + z.zone_id + "'");
      zones.push_back(std::move(z));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, where + ": " + e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::parse) throw;
      fail(ErrorKind::parse, e.what());
    }
  }
  return zones;
}

std::vector<Zone> load_zones(const std::filesystem::path& path) { return parse_zones(read_text_file(path), path.string()); }

std::string to_geojson(std::span<const Zone> zones) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& z : zones) {
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& p : z.ring) ring.push_back({p.x, p.y});
    if (!z.ring.empty()) ring.push_back({z.ring.front().x, z.ring.front().y});
    nlohmann::json props = {{"zone_id", z.zone_id}, {"kind", std::string(to_string(z.kind))}};
    if (z.population) props["population"] = *z.population;
    features.push_back({{"type", "Feature"},
                        {"properties", props},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", nlohmann::json::array({ring})}}}});
  }
  nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", features}};
  return doc.dump(1) + "\n";
}

NominationGraph parse_graph(std::string_view text, double scale_min, double scale_max, const std::string& source) {
  const auto table = csv::read_string(text, source);
  const auto c_src = table.column("src"), c_dst = table.column("dst"), c_score = table.column("score");
  NominationGraph g(scale_min, scale_max);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = source + ":" + std::to_string(table.line_numbers[i]);
    try {
      g.add_edge(row[c_src], row[c_dst], csv::parse_double(row[c_score], where));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::parse) throw;
      fail(ErrorKind::parse, where + ": " + e.what());
    }
  }
  return g;
}

NominationGraph load_graph(const std::filesystem::path& path, double scale_min, double scale_max) {
  return parse_graph(read_text_file(path), scale_min, scale_max, path.string());
}

std::string to_csv(const NominationGraph& graph) {
  csv::Writer w;
  w.row("src", "dst", "score");
  for (const auto& e : graph.edges()) w.row(graph.node_id(e.src), graph.node_id(e.dst), e.score);
  return w.str();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace laborflow
