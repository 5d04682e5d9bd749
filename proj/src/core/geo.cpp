// SPDX-License-Identifier: Apache-2.0
#include "core/geo.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/geometry_adapt.hpp"

namespace laborflow::geo {

namespace bg = detail::bg;
using detail::BBox;
using detail::BMultiPolygon;
using detail::BPoint;
using detail::BPolygon;

namespace {

// Keeps the part of a convex polygon where normal·p <= offset.
Ring clip_half_plane(const Ring& poly, Point normal, double offset) {
  Ring out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    const double da = normal.x * a.x + normal.y * a.y - offset;
    const double db = normal.x * b.x + normal.y * b.y - offset;
    if (da <= 0.0) out.push_back(a);
    if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
      const double t = da / (da - db);
      out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
  }
  return out;
}

}  // namespace

std::vector<Site> sites_from(const TowerRegistry& towers) {
  std::vector<Site> sites;
  sites.reserve(towers.size());
  for (const auto& t : towers.sites()) sites.push_back({t.tower_id, t.planar()});
  return sites;
}

VoronoiResult voronoi_partition(std::span<const Site> sites, const Zone& clip) {
  require(!sites.empty(), "voronoi_partition needs at least one site");
  require(clip.area() > 0.0, "clip region must have positive area");

  VoronoiResult result;
  std::vector<Site> unique;
  for (const auto& s : sites) {
    require(std::isfinite(s.location.x) && std::isfinite(s.location.y), "site " + s.tower_id + " has non-finite coordinates");
    const bool dup = std::any_of(unique.begin(), unique.end(), [&](const Site& u) { return u.location == s.location; });
    if (dup) result.duplicate_sites.push_back(s.tower_id);
    else unique.push_back(s);
  }

  // A box containing the clip region and every site; cells are bounded by it
  // before being intersected with the clip polygon.
  double min_x = clip.ring[0].x, max_x = min_x, min_y = clip.ring[0].y, max_y = min_y;
  auto extend = [&](Point p) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  };
  for (const auto& p : clip.ring) extend(p);
  for (const auto& s : unique) extend(s.location);
  const double pad = 1.0 + std::max(max_x - min_x, max_y - min_y);
  const Ring box = {{min_x - pad, min_y - pad}, {max_x + pad, min_y - pad}, {max_x + pad, max_y + pad}, {min_x - pad, max_y + pad}};

  const BPolygon clip_poly = detail::to_polygon(clip.ring);
  for (std::size_t i = 0; i < unique.size(); ++i) {
    const Point si = unique[i].location;
    Ring cell = box;
    for (std::size_t j = 0; j < unique.size() && !cell.empty(); ++j) {
      if (j == i) continue;
      const Point sj = unique[j].location;
      // |p - si|^2 <= |p - sj|^2  <=>  2 (sj - si)·p <= |sj|^2 - |si|^2
      const Point normal{2.0 * (sj.x - si.x), 2.0 * (sj.y - si.y)};
      const double offset = (sj.x * sj.x + sj.y * sj.y) - (si.x * si.x + si.y * si.y);
      cell = clip_half_plane(cell, normal, offset);
    }
    VoronoiCell out;
    out.tower_id = unique[i].tower_id;
    out.site = si;
    if (cell.size() >= 3) {
      BMultiPolygon clipped;
      bg::intersection(detail::to_polygon(cell), clip_poly, clipped);
      for (const auto& poly : clipped) {
        const double a = bg::area(poly);
        if (a > 0.0) {
          out.pieces.push_back(detail::to_ring(poly));
          out.area += a;
        }
      }
    }
    result.cells.push_back(std::move(out));
  }
  return result;
}

double intersection_area(const Ring& a, const Ring& b) {
  const BPolygon pa = detail::to_polygon(a);
  const BPolygon pb = detail::to_polygon(b);
  BBox ba, bb;
  bg::envelope(pa, ba);
  bg::envelope(pb, bb);
  if (!bg::intersects(ba, bb)) return 0.0;
  BMultiPolygon out;
  bg::intersection(pa, pb, out);
  return std::max(0.0, bg::area(out));
}

double intersection_area(const VoronoiCell& cell, const Ring& ring) {
  double total = 0.0;
  for (const auto& piece : cell.pieces) total += intersection_area(piece, ring);
  return total;
}

std::map<std::string, double> ZoneValues::as_map() const {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < zone_ids.size(); ++i) m[zone_ids[i]] = values[i];
  return m;
}

ZoneValues areal_interpolate(std::span<const Zone> targets, std::span<const Zone> sources) {
  for (const auto& s : sources) {
    require(s.population.has_value(), "source zone " + s.zone_id + " has no population");
    require(s.area() > 0.0, "source zone " + s.zone_id + " has zero area");
  }
  ZoneValues out;
  for (const auto& d : targets) {
    require(d.area() > 0.0, "target zone " + d.zone_id + " has zero area");
    double p = 0.0;
    for (const auto& tau : sources) p += intersection_area(d.ring, tau.ring) * (*tau.population) / tau.area();
    out.zone_ids.push_back(d.zone_id);
    out.values.push_back(p);
  }
  return out;
}

ZoneValues penetration_rate(std::span<const Zone> districts, std::span<const VoronoiCell> cells,
                            const std::map<std::string, double>& populations) {
  ZoneValues out;
  for (const auto& d : districts) {
    auto it = populations.find(d.zone_id);
    if (it == populations.end() || !(it->second > 0.0)) {
      out.skipped.push_back(d.zone_id);
      continue;
    }
    double users = 0.0;
    for (const auto& cell : cells) {
      if (!(cell.area > 0.0) || cell.user_count == 0) continue;
      users += intersection_area(cell, d.ring) * static_cast<double>(cell.user_count) / cell.area;
    }
    out.zone_ids.push_back(d.zone_id);
    out.values.push_back(users / it->second);
  }
  return out;
}

std::string to_csv(const ZoneValues& values) {
  csv::Writer w;
  w.row("zone_id", "value");
  for (std::size_t i = 0; i < values.zone_ids.size(); ++i) w.row(values.zone_ids[i], values.values[i]);
  return w.str();
}

std::optional<std::size_t> locate(std::span<const Zone> zones, const Point& p) {
  const detail::BPoint q(p.x, p.y);
  for (std::size_t i = 0; i < zones.size(); ++i)
    if (boost::geometry::covered_by(q, detail::to_polygon(zones[i].ring))) return i;
  return std::nullopt;
}

}  // namespace laborflow::geo
