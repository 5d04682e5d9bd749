// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by every analysis stage and their file loaders.
// Everything here is immutable once built and may be shared across threads.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace laborflow {

// ---------------------------------------------------------------------------
// Telecom events

enum class EventKind : std::uint8_t { call, data, sms };
enum class Direction : std::uint8_t { initiated, received };

std::string_view to_string(EventKind kind);
std::string_view to_string(Direction direction);

struct EventRecord {
  std::string user_id;
  EventKind kind = EventKind::call;
  Direction direction = Direction::initiated;
  std::string tower_id;
  double duration_s = 0.0;  // calls only
  std::int64_t timestamp = 0;  // UTC epoch seconds
  std::string counterpart_id;  // empty when the source has no counterpart column
};

/// Half-open interval [start, end) of UTC epoch seconds.
struct TimeWindow {
  std::int64_t start = INT64_MIN;
  std::int64_t end = INT64_MAX;
  bool contains(std::int64_t t) const { return t >= start && t < end; }
};

/// Accepts integer epoch seconds or ISO-8601 UTC
/// (`YYYY-MM-DDTHH:MM:SS[Z|+00:00]`, `T` or space separator).
std::int64_t parse_timestamp(std::string_view text);

// ---------------------------------------------------------------------------
// Geometry primitives (projected planar coordinates)

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Open ring: the closing vertex is implied, never repeated.
using Ring = std::vector<Point>;

/// Signed shoelace area; positive for counter-clockwise rings.
double signed_area(const Ring& ring);

struct TowerSite {
  std::string tower_id;
  double lat = 0.0;
  double lon = 0.0;
  std::optional<Point> projected;

  /// Planar position used by the tessellation: the projected coordinates
  /// when the source provides them, otherwise (lon, lat) taken as planar.
  Point planar() const { return projected ? *projected : Point{lon, lat}; }
};

class TowerRegistry {
 public:
  TowerRegistry() = default;
  explicit TowerRegistry(std::vector<TowerSite> sites);

  const std::vector<TowerSite>& sites() const { return sites_; }
  std::size_t size() const { return sites_.size(); }
  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }
  const TowerSite& at(std::string_view id) const;

 private:
  std::vector<TowerSite> sites_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class ZoneKind : std::uint8_t { taz, district, region };

std::string_view to_string(ZoneKind kind);

struct Zone {
  std::string zone_id;
  ZoneKind kind = ZoneKind::district;
  Ring ring;
  std::optional<double> population;

  double area() const;
};

/// Throws unless the ring has >= 3 vertices, positive area and no
/// self-intersections.
void validate_ring(const Ring& ring, const std::string& what);

// ---------------------------------------------------------------------------
// Directed nomination network

struct Nomination {
  std::size_t src = 0;
  std::size_t dst = 0;
  double score = 0.0;
};

class NominationGraph {
 public:
  explicit NominationGraph(double scale_min = 0.0, double scale_max = 7.0);

  std::size_t add_node(std::string_view id);
  /// Adds src -> dst. Rejects self-loops, duplicate ordered pairs and
  /// scores outside the declared scale.
  void add_edge(std::string_view src, std::string_view dst, double score);

  std::size_t node_count() const { return ids_.size(); }
  const std::string& node_id(std::size_t i) const { return ids_.at(i); }
  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;

  const std::vector<Nomination>& edges() const { return edges_; }
  std::optional<double> score(std::size_t src, std::size_t dst) const;

  double scale_min() const { return scale_min_; }
  double scale_max() const { return scale_max_; }

 private:
  static std::uint64_t key(std::size_t a, std::size_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  }

  double scale_min_;
  double scale_max_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Nomination> edges_;
  std::unordered_map<std::uint64_t, std::size_t> edge_index_;
};

// ---------------------------------------------------------------------------
// Labeled numeric matrices (incidence matrices, indicator and data tables)

struct LabeledMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Eigen::MatrixXd values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::VectorXd row_sums() const { return values.rowwise().sum(); }
  Eigen::VectorXd col_sums() const { return values.colwise().sum().transpose(); }
  std::optional<Eigen::Index> col_index(std::string_view label) const;
};

/// Places x activities, X_cp >= 0 (or a 0/1 companion after binarization).
using IncidenceMatrix = LabeledMatrix;

struct PruneReport {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  bool empty() const { return rows.empty() && cols.empty(); }
};

/// Drops all-zero rows and columns (label order preserved).
IncidenceMatrix prune_zero(const IncidenceMatrix& m, PruneReport* report = nullptr);

bool is_binary(const Eigen::MatrixXd& values);

struct LabeledCsvOptions {
  bool require_nonnegative = false;
  bool unique_row_labels = false;
  bool unique_col_labels = true;
};

LabeledMatrix read_labeled_csv(const std::filesystem::path& path, const LabeledCsvOptions& options);
LabeledMatrix parse_labeled_csv(std::string_view text, const LabeledCsvOptions& options,
                                const std::string& source = "<memory>");
std::string to_csv(const LabeledMatrix& m, std::string_view corner = "label");

IncidenceMatrix load_incidence(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Panels

struct PanelRow {
  std::string unit_id;
  double period_start = 0.0;
  double period_end = 0.0;
  double outcome = 0.0;
  std::vector<double> covariates;
};

struct Panel {
  std::vector<std::string> covariate_names;
  std::vector<PanelRow> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t covariate_index(std::string_view name) const;
  /// Column by name; also resolves "outcome", "period_start", "period_end".
  Eigen::VectorXd column(std::string_view name) const;
  /// Throws unless every named covariate exists and is finite in every row.
  void require_covariates(std::span<const std::string> names) const;
};

Panel parse_panel(std::string_view text, const std::string& source = "<memory>");
Panel load_panel(const std::filesystem::path& path);
std::string to_csv(const Panel& panel);

// ---------------------------------------------------------------------------
// Loaders

struct EventLoadResult {
  std::vector<EventRecord> records;
  std::size_t dropped = 0;  // outside the observation window
};

/// Parses an events CSV. Rows outside `window` are dropped and counted.
/// When `towers` is given every tower_id must be registered.
EventLoadResult parse_events(std::string_view text, const TimeWindow& window,
                             const TowerRegistry* towers, const std::string& source = "<memory>");
EventLoadResult load_events(const std::filesystem::path& path, const TimeWindow& window,
                            const TowerRegistry* towers = nullptr);
std::string to_csv(std::span<const EventRecord> events);

TowerRegistry parse_towers(std::string_view text, const std::string& source = "<memory>");
TowerRegistry load_towers(const std::filesystem::path& path);
std::string to_csv(const TowerRegistry& towers);

std::vector<Zone> parse_zones(std::string_view geojson, const std::string& source = "<memory>");
std::vector<Zone> load_zones(const std::filesystem::path& path);
std::string to_geojson(std::span<const Zone> zones);

NominationGraph parse_graph(std::string_view text, double scale_min, double scale_max,
                            const std::string& source = "<memory>");
NominationGraph load_graph(const std::filesystem::path& path, double scale_min, double scale_max);
std::string to_csv(const NominationGraph& graph);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace laborflow
