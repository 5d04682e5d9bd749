// SPDX-License-Identifier: Apache-2.0
// Internal bridge between model::Ring and Boost.Geometry types.
#pragma once

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "core/model.hpp"

namespace laborflow::detail {

namespace bg = boost::geometry;

using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint, /*clockwise=*/false, /*closed=*/true>;
using BMultiPolygon = bg::model::multi_polygon<BPolygon>;
using BBox = bg::model::box<BPoint>;

inline BPolygon to_polygon(const Ring& ring) {
  BPolygon poly;
  for (const auto& p : ring) bg::append(poly.outer(), BPoint(p.x, p.y));
  if (!ring.empty()) bg::append(poly.outer(), BPoint(ring.front().x, ring.front().y));
  bg::correct(poly);
  return poly;
}

inline Ring to_ring(const BPolygon& poly) {
  Ring ring;
  const auto& outer = poly.outer();
  for (std::size_t i = 0; i + 1 < outer.size(); ++i) ring.push_back({outer[i].x(), outer[i].y()});
  return ring;
}

}  // namespace laborflow::detail
