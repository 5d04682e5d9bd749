// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "core/error.hpp"
#include "core/learn.hpp"
#include "core/matching.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

using namespace laborflow;
using namespace laborflow::matching;

namespace {

const Contrast& contrast(const FsattResult& r, int from, int to) {
  for (const auto& c : r.contrasts)
    if (c.from == from && c.to == to) return c;
  FAIL("missing contrast");
  return r.contrasts.front();
}

MatchData panel_data(const SynthPanel& sp) {
  return match_data_from_panel(sp.panel, default_growth_coarsening(), TreatmentSpec{});
}

}  // namespace

TEST_SUITE("matching") {

TEST_CASE("bins are half-open with inclusive outer edges") {
  const VariableBins b{"v", {0.0, 1.0, 2.0}, ClosedSide::left};
  CHECK(b.bin(0.5) == 0);
  CHECK(b.bin(1.0) == 1);
  CHECK(b.bin(0.0) == 0);
  CHECK(b.bin(2.0) == 1);
  CHECK_FALSE(b.bin(2.0000001).has_value());
  CHECK_FALSE(b.bin(-0.1).has_value());
  const VariableBins r{"e", {9.0, 11.0, 13.0}, ClosedSide::right};
  CHECK(r.bin(11.0) == 0);
  CHECK(r.bin(11.5) == 1);
  CHECK(r.bin(9.0) == 0);
  CHECK_THROWS_AS((VariableBins{"bad", {1.0, 1.0}, ClosedSide::left}.validate()), Error);
}

TEST_CASE("growth rows bin by hand against the default cutpoints") {
  const auto spec = default_growth_coarsening();
  Eigen::MatrixXd x(4, 4);
  // gdp [5.18,7.58,8.73,10.92]; pop [12.8,15.6,16.8,21.0];
  // life [40.8,64.3,73.4,81.1]; education (9,11],(11,13].
  x << 6.0, 16.0, 70.0, 10.0,
       8.73, 12.8, 81.1, 11.0,
       10.92, 15.6, 64.3, 12.0,
       7.58, 20.0, 40.8, 13.0;
  const auto s = coarsen(x, {"a", "b", "c", "d"}, spec);
  CHECK(s[0] == std::vector<int>{0, 1, 1, 0});
  CHECK(s[1] == std::vector<int>{2, 0, 2, 0});
  CHECK(s[2] == std::vector<int>{2, 1, 1, 1});
  CHECK(s[3] == std::vector<int>{1, 2, 0, 1});
  CHECK(stratum_key(s[0]) == "0-1-1-0");

  const auto eci = default_eci_levels();
  CHECK(eci.bin(-0.6) == 1);
  CHECK(eci.bin(-0.59) == 1);
  CHECK(eci.bin(0.4) == 2);
  CHECK(eci.bin(2.4) == 2);

  x(1, 2) = 90.0;
  try {
    coarsen(x, {"a", "b", "c", "d"}, spec);
    FAIL("expected a range error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    CHECK(std::string(e.what()).find("life_expectancy") != std::string::npos);
  }
}

TEST_CASE("cem matches a brute-force stratum enumeration") {
  Rng rng = make_rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<int>> strata;
    std::vector<int> level;
    for (int i = 0; i < 30; ++i) {
      strata.push_back({static_cast<int>(uniform_index(rng, 2)), static_cast<int>(uniform_index(rng, 3))});
      level.push_back(static_cast<int>(uniform_index(rng, 3)));
    }
    const auto r = cem_match(strata, level, 3);
    std::size_t matched = 0;
    std::vector<std::size_t> per_level(3, 0);
    for (int i = 0; i < 30; ++i) {
      std::set<int> seen;
      for (int j = 0; j < 30; ++j)
        if (strata[j] == strata[i]) seen.insert(level[j]);
      const bool keep = seen.size() == 3;
      CHECK(static_cast<bool>(r.matched[i]) == keep);
      if (keep) {
        ++matched;
        ++per_level[static_cast<std::size_t>(level[i])];
      }
    }
    CHECK(r.matched_count == matched);
    CHECK(r.level_matched == per_level);

    // Weighted level totals equal the baseline's matched count scaled back
    // to each level's matched total.
    for (int l = 0; l < 3; ++l) {
      double wsum = 0.0;
      for (int i = 0; i < 30; ++i)
        if (level[i] == l) wsum += r.weight[i];
      CHECK(wsum == doctest::Approx(static_cast<double>(per_level[static_cast<std::size_t>(l)])));
    }

    // Row order does not matter.
    std::vector<std::size_t> perm(30);
    for (std::size_t i = 0; i < 30; ++i) perm[i] = 29 - i;
    std::vector<std::vector<int>> s2;
    std::vector<int> l2;
    for (auto p : perm) {
      s2.push_back(strata[p]);
      l2.push_back(level[p]);
    }
    const auto r2 = cem_match(s2, l2, 3);
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(r2.matched[i] == r.matched[perm[i]]);
      CHECK(r2.weight[i] == doctest::Approx(r.weight[perm[i]]).epsilon(1e-15));
    }
  }
}

TEST_CASE("cem trivial cases") {
  const std::vector<std::vector<int>> same(6, std::vector<int>{0, 0});
  const std::vector<int> lv{0, 1, 0, 1, 0, 1};
  const auto all = cem_match(same, lv, 2);
  CHECK(all.matched_count == 6);
  CHECK(std::all_of(all.weight.begin(), all.weight.end(), [](double w) { return w == 1.0; }));

  const std::vector<std::vector<int>> apart{{0}, {0}, {1}, {1}};
  const auto none = cem_match(apart, {0, 0, 1, 1}, 2);
  CHECK(none.empty());
  CHECK(std::all_of(none.weight.begin(), none.weight.end(), [](double w) { return w == 0.0; }));
}

TEST_CASE("l1 imbalance") {
  const std::vector<std::vector<int>> cells{{0, 0}, {0, 0}, {1, 0}, {0, 1}, {0, 0}, {1, 0}, {1, 1}, {1, 1}};
  const std::vector<int> grp{0, 0, 0, 0, 1, 1, 1, 1};
  // Group 0: (0,0) 2/4, (1,0) 1/4, (0,1) 1/4. Group 1: (0,0) 1/4, (1,0) 1/4, (1,1) 2/4.
  const double hand = 0.5 * (0.25 + 0.0 + 0.25 + 0.5);
  CHECK(l1_imbalance(cells, grp, 2).l1 == doctest::Approx(hand).epsilon(1e-15));
  CHECK(l1_imbalance({{0}, {1}, {0}, {1}}, {0, 0, 1, 1}, 2).l1 == 0.0);
  CHECK(l1_imbalance({{0}, {0}, {1}, {1}}, {0, 0, 1, 1}, 2).l1 == 1.0);
  const std::vector<char> include{1, 1, 1, 0, 1, 1, 1, 0};
  // Without rows 3 and 7: group 0 is (0,0) 2/3, (1,0) 1/3; group 1 is (0,0) 1/3, (1,0) 1/3, (1,1) 1/3.
  CHECK(l1_imbalance(cells, grp, 2, &include).l1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(l1_imbalance({{0}, {0}}, {0, 0}, 2), Error);

  Rng rng = make_rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<int>> s;
    std::vector<int> l;
    for (int i = 0; i < 20; ++i) {
      s.push_back({static_cast<int>(uniform_index(rng, 3))});
      l.push_back(i % 3);
    }
    const auto imb = l1_imbalance(s, l, 3);
    CHECK(imb.pairs.size() == 3);
    for (const auto& p : imb.pairs) {
      CHECK(p.l1 >= 0.0);
      CHECK(p.l1 <= 1.0);
      CHECK(p.l1 <= imb.l1);
    }
  }
}

TEST_CASE("fsatt recovers a level step on balanced data") {
  MatchData d;
  d.level_names = {"low", "medium", "high"};
  d.covariates.resize(18, 1);
  d.outcome.resize(18);
  std::vector<std::vector<int>> strata;
  for (int i = 0; i < 18; ++i) {
    d.unit_ids.push_back("u" + std::to_string(i));
    d.level.push_back(i % 3);
    d.covariates(i, 0) = (i / 3) % 2 == 0 ? 1.0 : 3.0;
    d.outcome(i) = 0.1 * (i % 3) + 0.5 * d.covariates(i, 0);
  }
  const CoarseningSpec spec{{{"x", {0.0, 2.0, 4.0}, ClosedSide::left}}};
  const auto match = cem_match(d, spec);
  CHECK(match.matched_count == 18);
  const auto f = fsatt(d, spec, match);
  CHECK(contrast(f, 0, 1).estimate == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(contrast(f, 1, 2).estimate == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(contrast(f, 0, 2).estimate == doctest::Approx(0.2).epsilon(1e-12));

  MatchResult empty = cem_match(std::vector<std::vector<int>>(18, std::vector<int>{0}), std::vector<int>(18, 0), 3);
  CHECK(empty.empty());
  CHECK_THROWS_AS(fsatt(d, spec, empty), Error);
}

TEST_CASE("synthetic panels stay within the covariate ranges and recover the truth without noise") {
  SynthPanelSpec spec;
  const auto a = synth_panel(spec, 3), b = synth_panel(spec, 3);
  CHECK(to_csv(a.panel) == to_csv(b.panel));
  CHECK(a.panel.size() == 480);

  const double lo[5] = {5.18, 12.8, 40.8, 9.0, -2.78};
  const double hi[5] = {10.92, 21.0, 81.1, 13.0, 2.41};
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> col;
    for (const auto& row : a.panel.rows) col.push_back(row.covariates[k]);
    CHECK(*std::min_element(col.begin(), col.end()) >= lo[k]);
    CHECK(*std::max_element(col.begin(), col.end()) <= hi[k]);
    const double med = stats::quantile(col, 0.5);
    CHECK(med > lo[k]);
    CHECK(med < hi[k]);
  }

  spec.noise = 0.0;
  spec.coefficients = {-0.02, 0.005, 0.008, -0.017, 0.03};
  spec.level_effects = {0.0, 0.0, 0.0};
  const auto clean = synth_panel(spec, 4);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(clean.panel.size()), 5);
  for (std::size_t i = 0; i < clean.panel.size(); ++i)
    for (std::size_t k = 0; k < 5; ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = clean.panel.rows[i].covariates[k];
  const auto fit = learn::ols_fit(x, clean.panel.covariate_names, clean.panel.column("outcome"));
  CHECK(std::abs(fit.coef(0) - spec.intercept) < 1e-10);
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(fit.coef(static_cast<Eigen::Index>(k) + 1) - spec.coefficients[k]) < 1e-10);
}

TEST_CASE("fsatt on synthetic panels") {
  SynthPanelSpec spec;
  spec.noise = 0.0;
  const auto clean = panel_data(synth_panel(spec, 5));
  const auto f = fsatt(clean, default_growth_coarsening(), cem_match(clean, default_growth_coarsening()));
  CHECK(std::abs(contrast(f, 0, 1).estimate - 0.104) < 1e-10);
  CHECK(std::abs(contrast(f, 1, 2).estimate - 0.040) < 1e-10);
  CHECK(std::abs(contrast(f, 0, 2).estimate - 0.144) < 1e-10);

  spec = SynthPanelSpec{};
  const auto noisy = panel_data(synth_panel(spec, 6));
  const auto g = fsatt(noisy, default_growth_coarsening(), cem_match(noisy, default_growth_coarsening()));
  CHECK(contrast(g, 0, 2).estimate ==
        doctest::Approx(contrast(g, 0, 1).estimate + contrast(g, 1, 2).estimate).epsilon(1e-12));
  CHECK(contrast(g, 0, 1).estimate > 0.0);
  CHECK(contrast(g, 0, 2).estimate > contrast(g, 0, 1).estimate);

  // Outcome unrelated to the treatment: the interval should usually cover 0.
  spec.level_effects = {0.0, 0.0, 0.0};
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto null = panel_data(synth_panel(spec, 100 + seed));
    const auto r = fsatt(null, default_growth_coarsening(), cem_match(null, default_growth_coarsening()));
    const auto& c = contrast(r, 0, 2);
    covered += c.ci_low < 0.0 && c.ci_high > 0.0;
  }
  CHECK(covered >= 43);
}

}  // TEST_SUITE
