// SPDX-License-Identifier: Apache-2.0
//
// Spatial apportionment: area-weighted interpolation of census counts onto
// districts, and nearest-tower (Voronoi) coverage used to estimate mobile
// penetration per district. All geometry is planar.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace laborflow::geo {

struct Site {
  std::string tower_id;
  Point location;
};

struct VoronoiCell {
  std::string tower_id;
  Point site;
  std::vector<Ring> pieces;  // the clipped cell; empty when the site's cell misses the clip region
  double area = 0.0;
  std::int64_t user_count = 0;  // T_c, users whose home is this tower
};

struct VoronoiResult {
  std::vector<VoronoiCell> cells;
  std::vector<std::string> duplicate_sites;  // dropped because they coincide with an earlier site
};

/// Nearest-site tessellation of `clip`. Every point of the clip region
/// belongs to the cell of its nearest site; coincident sites keep the first.
VoronoiResult voronoi_partition(std::span<const Site> sites, const Zone& clip);

std::vector<Site> sites_from(const TowerRegistry& towers);

double intersection_area(const Ring& a, const Ring& b);
double intersection_area(const VoronoiCell& cell, const Ring& ring);

struct ZoneValues {
  std::vector<std::string> zone_ids;
  std::vector<double> values;
  std::vector<std::string> skipped;  // zones for which the value is undefined

  std::map<std::string, double> as_map() const;
};

/// P_d = sum_j A(d ∩ τ_j) P_τj / A_τj. Every source needs a population.
ZoneValues areal_interpolate(std::span<const Zone> targets, std::span<const Zone> sources);

/// σ_d = (1 / P_d) sum_j A(d ∩ v_j) T_j / A_vj. Districts without a
/// positive population are skipped and reported.
ZoneValues penetration_rate(std::span<const Zone> districts, std::span<const VoronoiCell> cells,
                            const std::map<std::string, double>& populations);

/// Writes `zone_id,value` rows.
std::string to_csv(const ZoneValues& values);

/// Index of the first zone whose polygon covers the point (boundary
/// included), if any.
std::optional<std::size_t> locate(std::span<const Zone> zones, const Point& p);

}  // namespace laborflow::geo
