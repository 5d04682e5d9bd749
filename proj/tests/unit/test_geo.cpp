// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "core/geo.hpp"
#include "core/random.hpp"

using namespace laborflow;

namespace {

struct Rect {
  double x0, y0, x1, y1;
  Ring ring() const { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

// Axis-aligned overlap, computed without any polygon clipping.
double overlap(const Rect& a, const Rect& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return w > 0 && h > 0 ? w * h : 0.0;
}

Zone zone(const std::string& id, ZoneKind kind, const Rect& r, std::optional<double> pop = std::nullopt) {
  Zone z;
  z.zone_id = id;
  z.kind = kind;
  z.ring = r.ring();
  z.population = pop;
  return z;
}

// Even-odd ray casting.
bool inside(const Ring& ring, const Point& p) {
  bool in = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const auto& a = ring[i];
    const auto& b = ring[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

}  // namespace

TEST_SUITE("geo") {

TEST_CASE("intersection area matches the rectangle oracle") {
  Rng rng = make_rng(11);
  for (int k = 0; k < 200; ++k) {
    auto rect = [&] {
      const double x = uniform01(rng) * 10, y = uniform01(rng) * 10;
      return Rect{x, y, x + 0.1 + uniform01(rng) * 5, y + 0.1 + uniform01(rng) * 5};
    };
    const Rect a = rect(), b = rect();
    CHECK(geo::intersection_area(a.ring(), b.ring()) == doctest::Approx(overlap(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("voronoi cells tile the clip and hold their nearest points") {
  const Rect clip{0, 0, 100, 60};
  Rng rng = make_rng(5);
  std::vector<geo::Site> sites;
  for (int i = 0; i < 5; ++i)
    sites.push_back({"S" + std::to_string(i), {uniform01(rng) * 100, uniform01(rng) * 60}});
  const auto vor = geo::voronoi_partition(sites, zone("clip", ZoneKind::region, clip));
  REQUIRE(vor.cells.size() == 5);
  double total = 0.0;
  for (const auto& c : vor.cells) total += c.area;
  CHECK(total == doctest::Approx(clip.area()).epsilon(1e-9));

  const int samples = 10000;
  std::vector<int> hits(5, 0);
  int misplaced = 0;
  for (int s = 0; s < samples; ++s) {
    const Point p{uniform01(rng) * 100, uniform01(rng) * 60};
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const double d = std::hypot(p.x - sites[i].location.x, p.y - sites[i].location.y);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    ++hits[best];
    bool found = false;
    for (const auto& piece : vor.cells[best].pieces) found = found || inside(piece, p);
    if (!found) ++misplaced;
  }
  CHECK(misplaced == 0);
  for (std::size_t i = 0; i < 5; ++i) {
    const double share = vor.cells[i].area / clip.area();
    const double se = std::sqrt(share * (1 - share) / samples);
    CHECK(std::abs(hits[i] / double(samples) - share) < 4 * se + 1e-12);
  }
}

TEST_CASE("coincident sites keep the first and a single site covers the clip") {
  const Rect clip{0, 0, 4, 4};
  std::vector<geo::Site> sites{{"A", {1, 1}}, {"B", {1, 1}}, {"C", {3, 3}}};
  const auto vor = geo::voronoi_partition(sites, zone("clip", ZoneKind::region, clip));
  CHECK(vor.duplicate_sites == std::vector<std::string>{"B"});
  const auto one = geo::voronoi_partition(std::vector<geo::Site>{{"A", {1, 1}}}, zone("c", ZoneKind::region, clip));
  CHECK(one.cells[0].area == doctest::Approx(16.0));
}

TEST_CASE("areal interpolation matches hand-computed intersections") {
  const Rect s1{0, 0, 2, 2}, s2{2, 0, 4, 2}, s3{0, 2, 4, 3};
  const Rect t1{0, 0, 3, 3}, t2{3, 0, 4, 3};
  const std::vector<Zone> sources{zone("s1", ZoneKind::taz, s1, 400.0), zone("s2", ZoneKind::taz, s2, 100.0),
                                  zone("s3", ZoneKind::taz, s3, 80.0)};
  const std::vector<Zone> targets{zone("t1", ZoneKind::district, t1), zone("t2", ZoneKind::district, t2)};
  const auto out = geo::areal_interpolate(targets, sources);
  REQUIRE(out.values.size() == 2);
  const std::vector<std::pair<Rect, double>> src{{s1, 400.0}, {s2, 100.0}, {s3, 80.0}};
  for (std::size_t t = 0; t < 2; ++t) {
    const Rect tr = t == 0 ? t1 : t2;
    double expect = 0.0;
    for (const auto& [r, p] : src) expect += overlap(tr, r) * p / r.area();
    CHECK(out.values[t] == doctest::Approx(expect).epsilon(1e-12));
  }
  // Sources fully inside the targets conserve the total.
  CHECK(out.values[0] + out.values[1] == doctest::Approx(580.0));

  std::vector<Zone> unknown = sources;
  unknown[1].population.reset();
  CHECK_THROWS_AS(geo::areal_interpolate(targets, unknown), Error);
}

TEST_CASE("penetration rate apportions cell users by area") {
  const Rect clip{0, 0, 10, 4};
  std::vector<geo::Site> sites{{"A", {2, 2}}, {"B", {8, 2}}};
  auto vor = geo::voronoi_partition(sites, zone("clip", ZoneKind::region, clip));
  vor.cells[0].user_count = 500;
  vor.cells[1].user_count = 300;
  // Cells split at x = 5. D1 is exactly cell A; D2 straddles both.
  const Rect d1{0, 0, 5, 4}, d2{5, 0, 10, 4}, d3{3, 0, 7, 4};
  const std::vector<Zone> districts{zone("D1", ZoneKind::district, d1), zone("D2", ZoneKind::district, d2),
                                    zone("D3", ZoneKind::district, d3), zone("D4", ZoneKind::district, d1)};
  const std::map<std::string, double> pop{{"D1", 1000.0}, {"D2", 600.0}, {"D3", 400.0}, {"D4", 0.0}};
  const auto sigma = geo::penetration_rate(districts, vor.cells, pop);
  const auto m = sigma.as_map();
  CHECK(m.at("D1") == doctest::Approx(0.5));
  CHECK(m.at("D2") == doctest::Approx(0.5));
  const Rect a{0, 0, 5, 4}, b{5, 0, 10, 4};
  const double expect = (overlap(d3, a) * 500 / a.area() + overlap(d3, b) * 300 / b.area()) / 400.0;
  CHECK(m.at("D3") == doctest::Approx(expect).epsilon(1e-12));
  CHECK(sigma.skipped == std::vector<std::string>{"D4"});
}

TEST_CASE("locate returns the first covering zone, boundary included") {
  const std::vector<Zone> zones{zone("A", ZoneKind::district, {0, 0, 1, 1}), zone("B", ZoneKind::district, {1, 0, 2, 1})};
  CHECK(geo::locate(zones, {0.5, 0.5}) == 0u);
  CHECK(geo::locate(zones, {1.5, 0.5}) == 1u);
  CHECK(geo::locate(zones, {1.0, 0.5}) == 0u);
  CHECK_FALSE(geo::locate(zones, {3.0, 0.5}).has_value());
}

}  // TEST_SUITE
