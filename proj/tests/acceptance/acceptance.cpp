// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core/complexity.hpp"
#include "core/error.hpp"
#include "core/indicators.hpp"
#include "core/learn.hpp"
#include "core/matching.hpp"
#include "core/netdyn.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace fs = std::filesystem;
using namespace laborflow;
using Clock = std::chrono::steady_clock;

namespace {

// Collects failed expectations; the first few are echoed on the FAIL line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++evaluated_;
    if (ok) return;
    if (failures_++ < 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  void budget(double seconds, double limit, const std::string& what) {
    std::ostringstream s;
    s << what << " took " << seconds << " s (limit " << limit << " s)";
    expect(seconds < limit, s.str());
  }
  bool ok() const { return failures_ == 0; }
  long evaluated() const { return evaluated_; }
  std::string summary() const {
    return failures_ <= 3 ? notes_ : notes_ + " (+" + std::to_string(failures_ - 3) + " more)";
  }

 private:
  int failures_ = 0;
  long evaluated_ = 0;
  std::string notes_;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

IncidenceMatrix labeled(const Eigen::MatrixXd& v) {
  IncidenceMatrix m;
  m.values = v;
  for (Eigen::Index i = 0; i < v.rows(); ++i) m.row_labels.push_back("c" + std::to_string(i));
  for (Eigen::Index j = 0; j < v.cols(); ++j) m.col_labels.push_back("p" + std::to_string(j));
  return m;
}

std::vector<double> as_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// 1. Reflections ground case and recurrence

void reflections_identity(const IncidenceMatrix& m, Checks& c, const std::string& tag) {
  const auto res = complexity::reflections(m, {.iterations = 20});
  const Eigen::MatrixXd& M = m.values;
  const Eigen::VectorXd rows = M.rowwise().sum();
  const Eigen::VectorXd cols = M.colwise().sum().transpose();
  c.expect(res.kc.size() == 21 && res.kp.size() == 21, tag + ": expected 21 iterates");
  if (res.kc.size() != 21) return;
  c.expect(res.kc[0] == rows, tag + ": k_c0 differs from row sums");
  c.expect(res.kp[0] == cols, tag + ": k_p0 differs from column sums");
  for (std::size_t n = 1; n <= 20; ++n) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      double rhs = 0.0;
      for (Eigen::Index j = 0; j < M.cols(); ++j) rhs += M(i, j) * res.kp[n - 1](j);
      const double lhs = res.kc[n](i) * rows(i);
      c.expect(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)),
               tag + ": place recurrence off at n=" + std::to_string(n));
    }
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      double rhs = 0.0;
      for (Eigen::Index i = 0; i < M.rows(); ++i) rhs += M(i, j) * res.kc[n - 1](i);
      const double lhs = res.kp[n](j) * cols(j);
      c.expect(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)),
               tag + ": activity recurrence off at n=" + std::to_string(n));
    }
  }
}

void criterion_reflections(Checks& c) {
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    reflections_identity(prune_zero(complexity::synth_incidence({12, 30, 0.7, 0.1}, seed)), c,
                         "12x30 seed " + std::to_string(seed));
  const auto big = prune_zero(complexity::synth_incidence({50, 100, 0.85, 0.05}, 11));
  c.expect(big.rows() == 50 && big.cols() == 100, "50x100 fixture lost rows or columns to pruning");
  const auto t0 = Clock::now();
  (void)complexity::reflections(big, {.iterations = 20});
  (void)complexity::reflections(big);
  c.budget(seconds_since(t0), 1.0, "50x100 reflections");
  reflections_identity(big, c, "50x100");
}

// ---------------------------------------------------------------------------
// 2. Eigenvector index against the reflections index

void criterion_cross_method(Checks& c) {
  const auto t0 = Clock::now();
  double worst = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = prune_zero(complexity::synth_incidence({20, 50, 0.9, 0.0}, seed));
    const auto eig = complexity::eci_eigen(m);
    const auto ref = complexity::reflections(m);
    const double rho = stats::spearman(as_vec(eig.index), as_vec(ref.place_index));
    worst = std::min(worst, rho);
    c.expect(rho >= 0.99, "seed " + std::to_string(seed) + " spearman " + num(rho));
  }
  c.budget(seconds_since(t0), 10.0, "20 matrices");
  c.expect(worst >= 0.99, "worst spearman " + num(worst));
}

// ---------------------------------------------------------------------------
// 3. Proximity against brute force on every 3x4 binary matrix

void criterion_proximity(Checks& c) {
  for (unsigned bits = 0; bits < (1u << 12); ++bits) {
    Eigen::MatrixXd x(3, 4);
    for (int r = 0; r < 3; ++r)
      for (int p = 0; p < 4; ++p) x(r, p) = (bits >> (r * 4 + p)) & 1u;
    std::vector<int> kept;
    for (int p = 0; p < 4; ++p)
      if (x.col(p).sum() > 0) kept.push_back(p);
    if (kept.empty()) {
      bool threw = false;
      try {
        (void)complexity::proximity(labeled(x));
      } catch (const Error&) {
        threw = true;
      }
      c.expect(threw, "all-zero matrix accepted");
      continue;
    }
    const auto res = complexity::proximity(labeled(x));
    if (res.phi.rows() != static_cast<Eigen::Index>(kept.size())) {
      c.expect(false, "pattern " + std::to_string(bits) + " kept the wrong activities");
      continue;
    }
    for (std::size_t a = 0; a < kept.size(); ++a)
      for (std::size_t b = 0; b < kept.size(); ++b) {
        int both = 0, ua = 0, ub = 0;
        for (int r = 0; r < 3; ++r) {
          ua += x(r, kept[a]) == 1.0;
          ub += x(r, kept[b]) == 1.0;
          both += x(r, kept[a]) == 1.0 && x(r, kept[b]) == 1.0;
        }
        const double expect = std::min(double(both) / ua, double(both) / ub);
        c.expect(res.phi.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) == expect,
                 "pattern " + std::to_string(bits) + " phi mismatch");
      }
  }
}

// ---------------------------------------------------------------------------
// 4. RCA on uniform matrices and the boundary RCA = 1

void criterion_rca(Checks& c) {
  for (double v : {1.0, 3.0, 0.1, 7.3, 1e6})
    for (auto [r, k] : {std::pair{2, 3}, {5, 4}, {7, 11}}) {
      const auto res = complexity::rca(labeled(Eigen::MatrixXd::Constant(r, k, v)));
      c.expect((res.rca.values.array() == 1.0).all(), "uniform " + num(v) + " not all 1");
      c.expect(complexity::binarize(res.rca, 1.0).m.values.sum() == double(r * k), "uniform >= 1 not all set");
      c.expect(complexity::binarize(res.rca, 1.0, complexity::Threshold::greater_than).degenerate,
               "uniform > 1 not degenerate");
    }
  // Row 0 is proportional to the column totals, so its RCA is exactly 1.
  Eigen::MatrixXd x(3, 2);
  x << 1, 1, 2, 0, 0, 2;
  const auto r = complexity::rca(labeled(x));
  c.expect(r.rca.values(0, 0) == 1.0 && r.rca.values(0, 1) == 1.0, "boundary row is not exactly 1");
  const auto trade = complexity::binarize(r.rca, 1.0, complexity::Threshold::at_least);
  const auto strict = complexity::binarize(r.rca, 1.0, complexity::Threshold::greater_than);
  c.expect(trade.m.values(0, 0) == 1.0 && trade.m.values(0, 1) == 1.0, ">= rule dropped RCA = 1");
  c.expect(strict.m.values(0, 0) == 0.0 && strict.m.values(0, 1) == 0.0, "> rule kept RCA = 1");
  c.expect(strict.m.values(1, 0) == 1.0 && strict.m.values(2, 1) == 1.0, "> rule dropped RCA = 2");
  const auto prom = complexity::prominence(labeled(x));
  c.expect(prom.binary.m.values(0, 0) == 0.0 && prom.binary.m.values(0, 1) == 0.0,
           "prominence kept a share equal to the national share");
  c.expect(prom.binary.m.values == strict.m.values, "prominence differs from the > rule");
}

// ---------------------------------------------------------------------------
// 5. Spreading degenerates and exact enumeration

std::string nid(std::size_t i) { return "n" + std::to_string(100 + i); }

NominationGraph mixed_graph() {
  NominationGraph g(0.0, 7.0);
  for (std::size_t i = 0; i < 8; ++i) g.add_node(nid(i));
  const std::vector<std::tuple<int, int, bool>> ties{{0, 1, true},  {1, 2, false}, {2, 3, true},  {3, 4, false},
                                                     {4, 5, true},  {5, 6, false}, {6, 7, true},  {0, 3, false},
                                                     {2, 6, false}, {7, 1, false}};
  for (const auto& [a, b, mutual] : ties) {
    g.add_edge(nid(a), nid(b), 6.0);
    if (mutual) g.add_edge(nid(b), nid(a), 4.0);
  }
  return g;
}

std::vector<int> bfs(const netdyn::TieClassification& tc, std::size_t from) {
  std::vector<int> dist(tc.node_count(), -1);
  dist[from] = 0;
  std::vector<std::size_t> frontier{from};
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    for (auto u : frontier)
      for (const auto& inc : tc.incident(u))
        if (dist[inc.neighbor] < 0) {
          dist[inc.neighbor] = dist[u] + 1;
          next.push_back(inc.neighbor);
        }
    frontier = std::move(next);
  }
  return dist;
}

// E[Z(t)] by propagating the distribution over infected sets.
std::vector<double> exact_coverage(const netdyn::TieClassification& tc, const netdyn::BdsiParams& p) {
  using netdyn::PairClass;
  const std::size_t n = tc.node_count();
  const std::size_t states = std::size_t{1} << n;
  std::vector<double> prob(states, 0.0);
  std::size_t start = 0;
  for (auto s : p.seeds) start |= std::size_t{1} << s;
  prob[start] = 1.0;
  auto rate = [&](std::size_t u, std::size_t v) {
    switch (tc.pair_class(u, v)) {
      case PairClass::reciprocal: return p.p_rec;
      case PairClass::unilateral_out: return p.p_plus;
      case PairClass::unilateral_in: return p.p_minus;
      default: return 0.0;
    }
  };
  std::vector<double> out;
  for (int t = 0;; ++t) {
    double ez = 0.0;
    for (std::size_t s = 0; s < states; ++s) ez += prob[s] * std::popcount(s);
    out.push_back(ez);
    if (t == p.horizon) break;
    std::vector<double> next(states, 0.0);
    for (std::size_t s = 0; s < states; ++s) {
      if (prob[s] == 0.0) continue;
      std::vector<double> join;
      std::vector<std::size_t> open;
      for (std::size_t v = 0; v < n; ++v) {
        if (s >> v & 1) continue;
        double miss = 1.0;
        for (std::size_t u = 0; u < n; ++u)
          if (s >> u & 1) miss *= 1.0 - rate(u, v);
        join.push_back(1.0 - miss);
        open.push_back(v);
      }
      for (std::size_t sub = 0; sub < (std::size_t{1} << open.size()); ++sub) {
        double q = prob[s];
        std::size_t to = s;
        for (std::size_t k = 0; k < open.size(); ++k) {
          if (sub >> k & 1) {
            q *= join[k];
            to |= std::size_t{1} << open[k];
          } else {
            q *= 1.0 - join[k];
          }
        }
        next[to] += q;
      }
    }
    prob = std::move(next);
  }
  return out;
}

void criterion_bdsi(Checks& c) {
  const auto t0 = Clock::now();
  netdyn::SynthGraphSpec spec;
  spec.n_nodes = 40;
  spec.communities = 1;
  spec.p_in = 0.3;
  const auto synth = netdyn::classify_ties(netdyn::synth_graph(spec, 5), 2.0);
  const auto mixed = netdyn::classify_ties(mixed_graph(), 2.0);

  for (const auto* tc : {&mixed, &synth}) {
    const std::size_t n = tc->node_count();
    netdyn::BdsiParams p;
    p.horizon = 12;
    for (std::vector<std::size_t> seeds : {std::vector<std::size_t>{0}, {1, 3}, {0, 2, 5}}) {
      p.seeds = seeds;
      const auto tr = netdyn::bdsi_simulate(*tc, p, 17);
      c.expect(std::all_of(tr.coverage.begin(), tr.coverage.end(), [&](auto z) { return z == seeds.size(); }),
               "p=0 coverage moved");
    }
    int diameter = 0;
    bool connected = true;
    for (std::size_t s = 0; s < n; ++s)
      for (int d : bfs(*tc, s)) {
        connected = connected && d >= 0;
        diameter = std::max(diameter, d);
      }
    c.expect(connected, "fixture graph is not connected");
    p.p_rec = p.p_plus = p.p_minus = 1.0;
    p.horizon = diameter;
    for (std::size_t s = 0; s < n; ++s) {
      p.seeds = {s};
      const auto tr = netdyn::bdsi_simulate(*tc, p, s);
      c.expect(tr.coverage.back() == n, "p=1 missed full coverage by the diameter step");
      c.expect(tr.infection_time == bfs(*tc, s), "p=1 infection times differ from graph distance");
    }
  }

  for (double prob : {0.3, 0.6})
    for (std::vector<std::size_t> seeds : {std::vector<std::size_t>{0}, {2, 5}}) {
      netdyn::BdsiParams p;
      p.p_rec = p.p_plus = p.p_minus = prob;
      p.horizon = 5;
      p.seeds = seeds;
      const auto exact = exact_coverage(mixed, p);
      const int trials = 10000;
      std::vector<double> sum(6, 0.0), sum2(6, 0.0);
      for (int k = 0; k < trials; ++k) {
        const auto tr = netdyn::bdsi_simulate(mixed, p, netdyn::trial_seed(91, static_cast<std::size_t>(k)));
        for (std::size_t t = 0; t <= 5; ++t) {
          const double z = static_cast<double>(tr.coverage[t]);
          sum[t] += z;
          sum2[t] += z * z;
        }
      }
      for (std::size_t t = 1; t <= 5; ++t) {
        const double mean = sum[t] / trials;
        const double se = std::sqrt((sum2[t] / trials - mean * mean) / trials);
        c.expect(std::abs(mean - exact[t]) < 3.0 * se,
                 "p=" + num(prob) + " t=" + std::to_string(t) + " mean " + num(mean) + " vs exact " + num(exact[t]));
      }
    }
  c.budget(seconds_since(t0), 30.0, "spreading checks");
}

// ---------------------------------------------------------------------------
// 6. Percolation: reciprocal bridges versus matched unilateral removals

void criterion_percolation(Checks& c) {
  // Two 6-cliques of one-way ties (edge connectivity 5) joined by two
  // reciprocal bridges, which are the only reciprocal ties.
  NominationGraph g(0.0, 7.0);
  for (std::size_t i = 0; i < 12; ++i) g.add_node(nid(i));
  for (std::size_t base : {0u, 6u})
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j) g.add_edge(nid(base + i), nid(base + j), 5.0);
  for (auto [a, b] : {std::pair<std::size_t, std::size_t>{0, 6}, {1, 7}}) {
    g.add_edge(nid(a), nid(b), 6.0);
    g.add_edge(nid(b), nid(a), 6.0);
  }
  const auto tc = netdyn::classify_ties(g, 2.0);
  c.expect(tc.count(netdyn::TieClass::reciprocal) == 2, "fixture should hold 2 reciprocal ties");
  c.expect(tc.count(netdyn::TieClass::unilateral) == 30, "fixture should hold 30 unilateral ties");

  netdyn::BdsiParams p;
  p.p_rec = p.p_plus = p.p_minus = 1.0;
  p.horizon = 12;
  p.seeds = {tc.index_of(nid(3))};
  netdyn::PercolationOptions opt;
  opt.fractions = {1.0};
  opt.trials = 200;
  opt.seed = 8;
  opt.keep_traces = true;

  opt.removed_class = netdyn::TieClass::reciprocal;
  const auto rec = netdyn::percolation_experiment(tc, p, opt);
  opt.removed_class = netdyn::TieClass::unilateral;
  opt.count_reference = netdyn::TieClass::reciprocal;
  const auto uni = netdyn::percolation_experiment(tc, p, opt);

  c.expect(!rec.rows.empty() && rec.rows.back().removed == 2, "reciprocal run did not remove 2 ties");
  c.expect(!uni.rows.empty() && uni.rows.back().removed == 2, "unilateral run did not remove 2 ties");
  for (const auto& row : rec.traces)
    if (row.t == p.horizon) c.expect(row.z < 12, "a trial crossed the cut after removing all reciprocal ties");
  for (const auto& row : uni.traces)
    if (row.t == p.horizon) c.expect(row.z == 12, "a matched unilateral removal blocked full coverage");
  c.expect(rec.rows.back().mean_z == 6.0, "reciprocal removal mean coverage " + num(rec.rows.back().mean_z));
  c.expect(uni.rows.back().mean_z == 12.0, "unilateral removal mean coverage " + num(uni.rows.back().mean_z));
}

// ---------------------------------------------------------------------------
// 7. Indicator bounds, identities and district standardization

void criterion_indicators(Checks& c) {
  using namespace indicators;
  const auto t0 = Clock::now();
  Rng rng = make_rng(44);
  for (int trial = 0; trial < 1000; ++trial) {
    EgoNetwork e;
    const int k = 1 + static_cast<int>(uniform_index(rng, 10));
    for (int j = 0; j < k; ++j) {
      auto out = static_cast<std::int64_t>(uniform_index(rng, 6));
      auto in = static_cast<std::int64_t>(uniform_index(rng, 6));
      if (out + in == 0) in = 1;
      e.contacts["c" + std::to_string(j)] = {out, in};
    }
    for (auto v : {pct_initiated(e), pct_initiated(e, InitiatedConvention::incoming_share), balance_of_contacts(e),
                   social_entropy(e)})
      c.expect(v.has_value() && *v >= 0.0 && *v <= 1.0, "ratio indicator outside [0,1]");
    c.expect(std::abs(*balance_of_contacts(e.reversed()) - (1.0 - *balance_of_contacts(e))) < 1e-12,
             "reversed balance is not the complement");
  }
  for (int k = 2; k <= 12; ++k) {
    EgoNetwork e;
    for (int j = 0; j < k; ++j) e.contacts["c" + std::to_string(j)] = {2, 1};
    c.expect(std::abs(*social_entropy(e) - 1.0) < 1e-15, "uniform entropy not 1 at k=" + std::to_string(k));
  }

  SynthConfig cfg;
  cfg.n_users = 1000;
  cfg.n_towers = 40;
  cfg.days = 7;
  const auto cdr = synth_cdr(cfg, 12);
  const auto users = user_indicators(cdr.events, {});
  std::vector<std::string> towers;
  for (const auto& [u, t] : users.homes) towers.push_back(t);
  std::sort(towers.begin(), towers.end());
  towers.erase(std::unique(towers.begin(), towers.end()), towers.end());
  std::map<std::string, std::string> district;
  for (const auto& [u, t] : users.homes) {
    const auto idx = std::lower_bound(towers.begin(), towers.end(), t) - towers.begin();
    district[u] = "D" + std::to_string(idx % 10);
  }
  const auto agg = aggregate_to_districts(users.table, district);
  c.expect(agg.table.unit_ids.size() == 10, "expected 10 populated districts, got " +
                                                std::to_string(agg.table.unit_ids.size()));
  c.expect(users.table.unit_ids.size() == 1000, "expected 1000 users");
  for (Eigen::Index j = 0; j < agg.table.values.cols(); ++j) {
    const auto& name = agg.table.columns[static_cast<std::size_t>(j)];
    const bool degenerate = std::find(agg.table.degenerate_columns.begin(), agg.table.degenerate_columns.end(),
                                      name) != agg.table.degenerate_columns.end();
    c.expect(!degenerate, name + " is constant across districts");
    if (degenerate) continue;
    const std::vector<double> col = as_vec(agg.table.values.col(j));
    c.expect(std::abs(stats::mean(col)) < 1e-9, name + " district mean " + num(stats::mean(col)));
    c.expect(std::abs(stats::variance(col) - 1.0) < 1e-9, name + " district variance " + num(stats::variance(col)));
  }
  c.budget(seconds_since(t0), 5.0, "indicator checks");
}

// ---------------------------------------------------------------------------
// 8. Gaussian process against a dense-inverse oracle and in cross-validation

struct DirectGp {
  Eigen::MatrixXd x;
  Eigen::VectorXd theta;
  Eigen::MatrixXd rinv;
  double beta = 0.0;
  double sigma2 = 0.0;
  Eigen::VectorXd resid;

  double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return std::exp(-(theta.array() * (a - b).array().square()).sum());
  }

  DirectGp(const Eigen::MatrixXd& xs, const Eigen::VectorXd& y, const Eigen::VectorXd& th) : x(xs), theta(th) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd r(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) r(i, j) = corr(x.row(i), x.row(j));
    rinv = r.fullPivLu().inverse();
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
    beta = one.dot(rinv * y) / one.dot(rinv * one);
    resid = y - beta * one;
    sigma2 = resid.dot(rinv * resid) / static_cast<double>(n);
  }

  std::pair<double, double> predict(const Eigen::VectorXd& p) const {
    const Eigen::Index n = x.rows();
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = corr(x.row(i), p);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
    const double u = one.dot(rinv * r) - 1.0;
    return {beta + r.dot(rinv * resid), sigma2 * (1.0 - r.dot(rinv * r) + u * u / one.dot(rinv * one))};
  }
};

void criterion_gp(Checks& c) {
  Eigen::MatrixXd x1(5, 1);
  x1 << 0.0, 0.25, 0.5, 0.75, 1.0;
  Eigen::VectorXd y1(5);
  for (int i = 0; i < 5; ++i) y1(i) = std::sin(6.0 * x1(i, 0)) + x1(i, 0);
  Rng rng = make_rng(3);
  Eigen::MatrixXd x3(10, 3);
  Eigen::VectorXd y3(10);
  for (int i = 0; i < 10; ++i) {
    for (int k = 0; k < 3; ++k) x3(i, k) = uniform01(rng);
    y3(i) = x3(i, 0) * x3(i, 1) + std::cos(3.0 * x3(i, 2));
  }
  const std::vector<std::tuple<Eigen::MatrixXd, Eigen::VectorXd, Eigen::VectorXd>> fixtures{
      {x1, y1, Eigen::VectorXd::Constant(1, 8.0)}, {x3, y3, Eigen::Vector3d(2.0, 3.0, 1.5)}};
  for (const auto& [x, y, theta] : fixtures) {
    const std::string tag = std::to_string(x.cols()) + "-D";
    learn::GpOptions opt;
    opt.nugget = 0.0;
    const auto model = learn::gp_fit(x, y, theta, opt);
    const DirectGp oracle(x, y, theta);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto p = learn::gp_predict(model, x.row(i).transpose());
      c.expect(std::abs(p.mean - y(i)) < 1e-8, tag + " does not interpolate row " + std::to_string(i));
    }
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd q(x.cols());
      for (Eigen::Index k = 0; k < q.size(); ++k) q(k) = uniform01(rng) * 1.2 - 0.1;
      const auto p = learn::gp_predict(model, q);
      const auto [mean, var] = oracle.predict(q);
      c.expect(std::abs(p.mean - mean) < 1e-8, tag + " held-out mean " + num(p.mean) + " vs " + num(mean));
      c.expect(std::abs(p.variance - var) < 1e-8, tag + " held-out variance " + num(p.variance) + " vs " + num(var));
    }
  }

  Eigen::MatrixXd x(60, 2);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    x(i, 0) = uniform01(rng);
    x(i, 1) = uniform01(rng);
    y(i) = std::sin(3.0 * x(i, 0)) + x(i, 1) * x(i, 1);
  }
  learn::CvOptions cv;
  cv.model = learn::CvModel::gp;
  cv.k = 5;
  cv.seed = 4;
  const auto res = learn::kfold_cv(x, {"a", "b"}, y, cv);
  c.expect(res.mean >= 0.9, "5-fold mean R2 " + num(res.mean));
}

// ---------------------------------------------------------------------------
// 9. Coarsened exact matching against brute force

double brute_l1(const std::vector<std::string>& cell, const std::vector<int>& level, int levels,
                const std::vector<char>& include) {
  double worst = 0.0;
  for (int a = 0; a < levels; ++a)
    for (int b = a + 1; b < levels; ++b) {
      std::map<std::string, std::pair<double, double>> hist;
      double na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < cell.size(); ++i) {
        if (!include[i]) continue;
        if (level[i] == a) {
          hist[cell[i]].first += 1.0;
          na += 1.0;
        } else if (level[i] == b) {
          hist[cell[i]].second += 1.0;
          nb += 1.0;
        }
      }
      double l1 = 0.0;
      for (const auto& [k, v] : hist) l1 += std::abs(v.first / na - v.second / nb);
      worst = std::max(worst, l1 / 2.0);
    }
  return worst;
}

void criterion_cem(Checks& c) {
  using namespace matching;
  const CoarseningSpec spec{{{"u", {0.0, 1.0, 2.0, 3.0}, ClosedSide::left}, {"v", {0.0, 1.0, 2.0}, ClosedSide::left}}};
  Rng rng = make_rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    MatchData d;
    d.level_names = {"a", "b", "c"};
    d.covariates.resize(30, 2);
    d.outcome = Eigen::VectorXd::Zero(30);
    std::vector<std::string> cell;
    for (int i = 0; i < 30; ++i) {
      d.unit_ids.push_back("r" + std::to_string(i));
      d.covariates(i, 0) = 3.0 * uniform01(rng);
      d.covariates(i, 1) = 2.0 * uniform01(rng);
      d.level.push_back(static_cast<int>(uniform_index(rng, 3)));
      cell.push_back(std::to_string(int(d.covariates(i, 0))) + "-" + std::to_string(int(d.covariates(i, 1))));
    }
    const auto r = cem_match(d, spec);
    std::vector<char> keep(30, 0);
    std::vector<std::size_t> per_level(3, 0);
    std::size_t matched = 0;
    for (int i = 0; i < 30; ++i) {
      std::set<int> seen;
      for (int j = 0; j < 30; ++j)
        if (cell[j] == cell[i]) seen.insert(d.level[j]);
      keep[i] = seen.size() == 3;
      if (keep[i]) {
        ++matched;
        ++per_level[static_cast<std::size_t>(d.level[i])];
      }
      c.expect(r.stratum[i] == cell[i], "row stratum " + r.stratum[i] + " vs " + cell[i]);
      c.expect(r.matched[i] == keep[i], "matched flag differs on trial " + std::to_string(trial));
    }
    c.expect(r.matched_count == matched, "matched count differs");
    c.expect(r.level_matched == per_level, "per-level matched counts differ");

    const auto bins = coarsen(d.covariates, d.unit_ids, spec);
    const std::vector<char> all(30, 1);
    const double before = brute_l1(cell, d.level, 3, all);
    c.expect(std::abs(l1_imbalance(bins, d.level, 3).l1 - before) < 1e-14, "raw L1 differs");
    if (matched > 0) {
      const double after = brute_l1(cell, d.level, 3, keep);
      c.expect(std::abs(l1_imbalance(bins, d.level, 3, &r.matched).l1 - after) < 1e-14, "matched L1 differs");
      c.expect(after == 0.0 || l1_imbalance(bins, d.level, 3, &r.matched).l1 > 0.0, "matched L1 sign differs");
    }
  }

  // Identical distributions give 0 and disjoint ones give 1.
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<int>> s;
    std::vector<int> lv;
    for (int i = 0; i < 10; ++i) {
      const std::vector<int> b{static_cast<int>(uniform_index(rng, 4)), static_cast<int>(uniform_index(rng, 3))};
      s.push_back(b);
      lv.push_back(0);
      s.push_back(b);
      lv.push_back(1);
    }
    c.expect(l1_imbalance(s, lv, 2).l1 == 0.0, "identical histograms give nonzero L1");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (lv[i] == 1) s[i][0] += 10;
    c.expect(l1_imbalance(s, lv, 2).l1 == 1.0, "disjoint histograms give L1 below 1");
  }
}

// ---------------------------------------------------------------------------
// 10. FSATT recovery

const matching::Contrast* contrast(const matching::FsattResult& r, int from, int to) {
  for (const auto& c : r.contrasts)
    if (c.from == from && c.to == to) return &c;
  return nullptr;
}

void criterion_fsatt(Checks& c) {
  using namespace matching;
  const auto spec = default_growth_coarsening();
  const std::map<std::pair<int, int>, double> truth{{{0, 1}, 0.104}, {{1, 2}, 0.040}, {{0, 2}, 0.144}};
  auto run = [&](const SynthPanelSpec& s, std::uint64_t seed) {
    const auto data = match_data_from_panel(synth_panel(s, seed).panel, spec, TreatmentSpec{});
    return fsatt(data, spec, cem_match(data, spec));
  };

  SynthPanelSpec clean;
  clean.noise = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto f = run(clean, seed);
    for (const auto& [pair, tau] : truth) {
      const auto* k = contrast(f, pair.first, pair.second);
      c.expect(k && std::abs(k->estimate - tau) < 1e-10, "noise-free contrast off on seed " + std::to_string(seed));
    }
  }

  std::map<std::pair<int, int>, int> covered;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto f = run(SynthPanelSpec{}, 1000 + seed);
    for (const auto& [pair, tau] : truth) {
      const auto* k = contrast(f, pair.first, pair.second);
      covered[pair] += k && k->ci_low <= tau && tau <= k->ci_high;
    }
  }
  for (const auto& [pair, n] : covered)
    c.expect(n >= 90, "contrast " + std::to_string(pair.first) + "->" + std::to_string(pair.second) + " covered " +
                          std::to_string(n) + "/100");
}

// ---------------------------------------------------------------------------
// 11. AUC and CV(RMSE)

void criterion_metrics(Checks& c) {
  Rng rng = make_rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + uniform_index(rng, 40);
    std::vector<double> scores(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(uniform_index(rng, 6)) / 4.0;  // coarse grid forces ties
      labels[i] = static_cast<double>(uniform_index(rng, 2));
    }
    labels[0] = 0.0;
    labels[1] = 1.0;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (labels[i] == 1.0 && labels[j] == 0.0) {
          pairs += 1.0;
          wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    const double a = learn::auc(scores, labels);
    c.expect(a == wins / pairs, "auc " + num(a) + " vs pair count " + num(wins / pairs));
  }

  // Squared errors 1, 0, 1, 0 over observations with mean 5.
  const std::vector<double> obs{2, 4, 6, 8}, pred{3, 4, 5, 8};
  c.expect(learn::rmse(pred, obs) == std::sqrt(0.5), "hand rmse");
  c.expect(std::abs(learn::cv_rmse(pred, obs) - std::sqrt(0.5) / 5.0) < 1e-15, "hand cv(rmse)");
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> o(20), p(20);
    for (std::size_t i = 0; i < 20; ++i) {
      o[i] = 1.0 + 9.0 * uniform01(rng);
      p[i] = o[i] + uniform01(rng) - 0.5;
    }
    const double expect = learn::rmse(p, o) / stats::mean(o);
    c.expect(std::abs(learn::cv_rmse(p, o) - expect) <= 1e-15 * expect, "cv(rmse) is not rmse over the mean");
  }
}

// ---------------------------------------------------------------------------
// 12. CLI determinism

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

void criterion_cli(Checks& c) {
  const std::string cli = LABORFLOW_CLI;
  const fs::path root = fs::temp_directory_path() / "laborflow_acceptance";
  fs::remove_all(root);
  const fs::path inputs = root / "inputs";
  fs::create_directories(inputs);
  const std::string in = "'" + inputs.string() + "'";

  // Shared inputs come from seeded synth runs, which are themselves checked below.
  const std::vector<std::string> synth{
      "synth --kind incidence --n-places 20 --n-activities 50",
      "synth --kind cdr --n-users 80 --n-towers 12 --days 7",
      "synth --kind graph --n-nodes 50",
      "synth --kind panel --n-units 80",
  };
  for (const auto& s : synth)
    if (shell("'" + cli + "' --seed 3 --out " + in + " " + s + " > /dev/null 2>&1") != 0)
      c.expect(false, "input generation failed: " + s);

  // Binary outcome table for the logit simulation stage.
  {
    std::ofstream t(inputs / "binary.csv");
    t << "id,y,x1,x2\n";
    Rng rng = make_rng(6);
    for (int i = 0; i < 120; ++i) {
      const double x1 = uniform01(rng) * 4.0 - 2.0, x2 = uniform01(rng);
      const double pi = 1.0 / (1.0 + std::exp(-(0.3 + 1.2 * x1 - 0.8 * x2)));
      t << "r" << i << ',' << (uniform01(rng) < pi ? 1 : 0) << ',' << num(x1) << ',' << num(x2) << '\n';
    }
  }

  std::vector<std::string> stages = synth;
  const std::vector<std::string> more{
      "complexity --input " + in + "/incidence.csv --method both",
      "proximity --input " + in + "/incidence.csv",
      "indicators --events " + in + "/events.csv --towers " + in + "/towers.csv --zones " + in + "/zones.geojson",
      "geo --towers " + in + "/towers.csv --zones " + in + "/zones.geojson --events " + in + "/events.csv",
      "ties --graph " + in + "/graph.csv",
      "diffuse --graph " + in + "/graph.csv --n-seeds 2 --trials 20",
      "percolate --graph " + in + "/graph.csv --fractions 0,0.5,1 --trials 40 --keep-traces",
      "percolate --graph " + in + "/graph.csv --fractions 0.5 --edge-class unilateral --match-count-to reciprocal"
      " --trials 40",
      "match --input " + in + "/panel.csv",
      "regress --input " + in + "/panel.csv --outcome outcome --covariates gdp_log,life_expectancy,eci",
      "simulate --input " + in + "/binary.csv --outcome y --covariates x1,x2 --n-sims 2000"
      " --lo '{\"x1\":-1}' --hi '{\"x1\":1}'",
      "simulate --input " + in + "/binary.csv --outcome y --covariates x1,x2 --n-sims 2000"
      " --sweep-covariate x1 --sweep-values -1,0,1",
      "cv --input " + in + "/binary.csv --outcome y --covariates x1,x2 --model logit --bootstrap 200",
      "cv --input " + in + "/panel.csv --outcome outcome --covariates gdp_log,eci",
      "cv --input " + in + "/panel.csv --outcome outcome --covariates gdp_log,eci --model gp --bootstrap 200",
      "som --input " + in + "/panel.csv --columns gdp_log,life_expectancy,eci --epochs 20",
      "gp --train " + in + "/panel.csv --target outcome --features gdp_log,eci",
  };
  stages.insert(stages.end(), more.begin(), more.end());

  int idx = 0;
  for (const auto& stage : stages) {
    const std::string tag = stage.substr(0, stage.find(" --"));
    std::vector<std::map<std::string, std::string>> runs;
    for (const auto& [run, threads] : {std::pair{"a", 1}, {"b", 1}, {"c", 8}}) {
      const fs::path dir = root / (std::to_string(idx) + run);
      fs::create_directories(dir);
      const std::string cmd = "'" + cli + "' --seed 21 --threads " + std::to_string(threads) + " --out '" +
                              dir.string() + "' " + stage + " > '" + dir.string() + "/stdout.json' 2> /dev/null";
      const int code = shell(cmd);
      c.expect(code == 0, tag + " exited " + std::to_string(code));
      runs.push_back(snapshot(dir));
    }
    c.expect(runs[0].size() > 1, tag + " wrote no outputs");
    c.expect(runs[0] == runs[1], tag + " differs between identical runs");
    c.expect(runs[0] == runs[2], tag + " differs between --threads 1 and 8");
    ++idx;
  }
  fs::remove_all(root);
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Checks&)> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "reflections ground case and recurrence", criterion_reflections},
      {2, "eigenvector and reflections indices agree", criterion_cross_method},
      {3, "proximity equals brute force on all 3x4 matrices", criterion_proximity},
      {4, "uniform RCA and threshold boundary", criterion_rca},
      {5, "spreading degenerates and exact enumeration", criterion_bdsi},
      {6, "percolation contrast on reciprocal bridges", criterion_percolation},
      {7, "indicator bounds, identities and district scaling", criterion_indicators},
      {8, "gaussian process oracle and cross-validation", criterion_gp},
      {9, "coarsened exact matching against brute force", criterion_cem},
      {10, "treatment effect recovery and coverage", criterion_fsatt},
      {11, "AUC pair counting and CV(RMSE)", criterion_metrics},
      {12, "CLI runs are byte-identical across runs and threads", criterion_cli},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Checks checks;
    const auto t0 = Clock::now();
    try {
      cr.body(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    std::printf("%s %2d  %-52s %8.3f s %8ld checks%s%s\n", checks.ok() ? "PASS" : "FAIL", cr.id, cr.name, secs,
                checks.evaluated(), checks.ok() ? "" : "  ", checks.summary().c_str());
    std::fflush(stdout);
    failed += !checks.ok();
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
