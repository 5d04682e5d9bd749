// SPDX-License-Identifier: Apache-2.0
#include "core/netdyn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace laborflow::netdyn {

std::string_view to_string(TieClass c) { return c == TieClass::reciprocal ? "reciprocal" : "unilateral"; }

TieClass parse_tie_class(std::string_view text) {
  if (text == "reciprocal") return TieClass::reciprocal;
  if (text == "unilateral") return TieClass::unilateral;
  fail(ErrorKind::invalid_argument, "edge class must be reciprocal or unilateral, got '" + std::string(text) + "'");
}

TieClassification::TieClassification(const NominationGraph& graph, double threshold) : threshold_(threshold) {
  require(threshold >= graph.scale_min() && threshold <= graph.scale_max(), "nomination threshold outside the score scale");
  const std::size_t n = graph.node_count();
  ids_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids_.push_back(graph.node_id(i));
  adjacency_.resize(n);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& e : graph.edges()) {
    if (!(e.score > threshold)) continue;
    const auto back = graph.score(e.dst, e.src);
    const bool mutual = back && *back > threshold;
    if (mutual && e.src > e.dst) continue;  // counted once from the smaller endpoint
    pairs.emplace_back(e.src, e.dst);
  }
  std::sort(pairs.begin(), pairs.end(), [](auto a, auto b) {
    return std::minmax(a.first, a.second) < std::minmax(b.first, b.second);
  });
  for (const auto& [a, b] : pairs) {
    const auto back = graph.score(b, a);
    Tie t{a, b, back && *back > threshold ? TieClass::reciprocal : TieClass::unilateral};
    if (t.cls == TieClass::reciprocal) ++reciprocal_;
    adjacency_[a].push_back({b, ties_.size()});
    adjacency_[b].push_back({a, ties_.size()});
    ties_.push_back(t);
  }
  for (auto& list : adjacency_)
    std::sort(list.begin(), list.end(), [](const Incident& x, const Incident& y) { return x.neighbor < y.neighbor; });
}

std::size_t TieClassification::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == id) return i;
  fail(ErrorKind::invalid_argument, "unknown node '" + std::string(id) + "'");
}

PairClass TieClassification::pair_class(std::size_t i, std::size_t j) const {
  const auto& list = adjacency_.at(i);
  auto it = std::lower_bound(list.begin(), list.end(), j, [](const Incident& x, std::size_t v) { return x.neighbor < v; });
  if (it == list.end() || it->neighbor != j) return PairClass::none;
  const Tie& t = ties_[it->tie];
  if (t.cls == TieClass::reciprocal) return PairClass::reciprocal;
  return t.u == i ? PairClass::unilateral_out : PairClass::unilateral_in;
}

bool TieClassification::nominated(std::size_t i, std::size_t j) const {
  const auto c = pair_class(i, j);
  return c == PairClass::reciprocal || c == PairClass::unilateral_out;
}

TieClassification classify_ties(const NominationGraph& graph, double threshold) {
  return TieClassification(graph, threshold);
}

ReciprocityStats reciprocity_stats(const TieClassification& tc) {
  ReciprocityStats s;
  s.ties = tc.ties().size();
  require(s.ties > 0, "reciprocity statistics need at least one nomination");
  s.reciprocal_ties = tc.count(TieClass::reciprocal);
  s.nominations = tc.nomination_count();
  s.reciprocated_nominations = 2 * s.reciprocal_ties;
  s.global_fraction = static_cast<double>(s.reciprocal_ties) / static_cast<double>(s.ties);
  s.nomination_fraction = static_cast<double>(s.reciprocated_nominations) / static_cast<double>(s.nominations);
  for (std::size_t i = 0; i < tc.node_count(); ++i) {
    NodeReciprocity r{tc.node_id(i)};
    for (const auto& inc : tc.incident(i)) {
      const auto c = tc.pair_class(i, inc.neighbor);
      if (c == PairClass::reciprocal) {
        ++r.nominations;
        ++r.reciprocated;
      } else if (c == PairClass::unilateral_out) {
        ++r.nominations;
      }
    }
    if (r.nominations == 0) continue;
    r.fraction = static_cast<double>(r.reciprocated) / static_cast<double>(r.nominations);
    s.per_node.push_back(r);
  }
  return s;
}

std::int64_t se_feature(const TieClassification& tc, std::size_t i, std::size_t j) {
  require(i != j, "dyad features need two distinct nodes");
  const auto& a = tc.incident(i);
  const auto& b = tc.incident(j);
  std::int64_t common = 0;
  auto x = a.begin();
  auto y = b.begin();
  while (x != a.end() && y != b.end()) {
    if (x->neighbor < y->neighbor) ++x;
    else if (y->neighbor < x->neighbor) ++y;
    else {
      ++common;
      ++x;
      ++y;
    }
  }
  return common;
}

double sc_feature(const TieClassification& tc, std::size_t i, std::size_t j) {
  require(i != j, "dyad features need two distinct nodes");
  const std::size_t n = tc.node_count();
  require(n >= 2, "degree centrality needs at least two nodes");
  const double denom = static_cast<double>(n - 1);
  return static_cast<double>(tc.degree(i)) / denom - static_cast<double>(tc.degree(j)) / denom;
}

// ---------------------------------------------------------------------------

void BdsiParams::validate(std::size_t node_count) const {
  for (double p : {p_rec, p_plus, p_minus}) require(p >= 0.0 && p <= 1.0, "transmission probabilities must lie in [0,1]");
  require(p_rec >= p_plus && p_plus >= p_minus, "transmission probabilities must satisfy p_rec >= p_plus >= p_minus");
  require(horizon >= 0, "horizon must be non-negative");
  require(!seeds.empty(), "spreading needs at least one seed node");
  for (auto s : seeds) require(s < node_count, "seed node index out of range");
}

std::optional<int> SpreadTrace::time_to_fraction(double fraction, std::size_t n) const {
  const double target = std::ceil(fraction * static_cast<double>(n));
  for (std::size_t t = 0; t < coverage.size(); ++t)
    if (static_cast<double>(coverage[t]) >= target) return static_cast<int>(t);
  return std::nullopt;
}

SpreadTrace bdsi_simulate(const TieClassification& tc, const BdsiParams& params, std::uint64_t seed,
                          std::span<const char> removed) {
  const std::size_t n = tc.node_count();
  params.validate(n);
  require(removed.empty() || removed.size() == tc.ties().size(), "removal mask does not match the tie list");
  Rng rng(seed);
  SpreadTrace trace;
  trace.seed = seed;
  trace.infection_time.assign(n, -1);
  std::vector<std::size_t> infected;
  for (auto s : params.seeds) {
    if (trace.infection_time[s] == 0) continue;
    trace.infection_time[s] = 0;
    infected.push_back(s);
  }
  std::sort(infected.begin(), infected.end());
  trace.coverage.push_back(infected.size());

  for (int t = 1; t <= params.horizon; ++t) {
    std::vector<std::size_t> fresh;
    for (auto u : infected) {
      for (const auto& inc : tc.incident(u)) {
        if (!removed.empty() && removed[inc.tie]) continue;
        const auto v = inc.neighbor;
        const Tie& tie = tc.ties()[inc.tie];
        double p;
        if (tie.cls == TieClass::reciprocal) p = params.p_rec;
        else p = tie.u == u ? params.p_plus : params.p_minus;
        // Every attempt consumes one draw so the stream layout does not
        // depend on which neighbors are already infected.
        const bool hit = uniform01(rng) < p;
        if (hit && trace.infection_time[v] < 0) {
          trace.infection_time[v] = t;
          fresh.push_back(v);
        }
      }
    }
    infected.insert(infected.end(), fresh.begin(), fresh.end());
    std::sort(infected.begin(), infected.end());
    trace.coverage.push_back(infected.size());
  }
  return trace;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) { return derive_seed(seed, 1, trial); }

PercolationResult percolation_experiment(const TieClassification& tc, const BdsiParams& params,
                                         const PercolationOptions& options) {
  params.validate(tc.node_count());
  require(options.trials >= 1, "percolation needs at least one trial");
  require(!options.fractions.empty(), "percolation needs at least one perturbation value");
  require(options.ci_level > 0.0 && options.ci_level < 1.0, "ci_level must be in (0,1)");
  require(options.speed_fraction > 0.0 && options.speed_fraction <= 1.0, "speed_fraction must be in (0,1]");

  std::vector<std::size_t> class_ties;
  for (std::size_t k = 0; k < tc.ties().size(); ++k)
    if (tc.ties()[k].cls == options.removed_class) class_ties.push_back(k);
  const std::size_t reference_count = tc.count(options.count_reference.value_or(options.removed_class));

  PercolationResult result;
  const std::size_t n = tc.node_count();
  const auto horizon = static_cast<std::size_t>(params.horizon);
  for (double f : options.fractions) {
    require(f >= 0.0 && f <= 1.0, "perturbation F must lie in [0,1]");
    const auto removed = static_cast<std::size_t>(std::floor(f * static_cast<double>(reference_count) + 1e-9));
    if (removed > class_ties.size())
      fail(ErrorKind::invalid_argument, "cannot remove " + std::to_string(removed) + " " +
                                            std::string(to_string(options.removed_class)) + " ties; only " +
                                            std::to_string(class_ties.size()) + " exist");
    std::vector<SpreadTrace> traces(options.trials);
    parallel_for(options.trials, options.threads, [&](std::size_t k) {
      std::vector<char> mask(tc.ties().size(), 0);
      if (removed > 0) {
        Rng pick = make_rng(options.seed, 2, k);
        std::vector<std::size_t> pool = class_ties;
        // Partial Fisher-Yates: the first `removed` entries are a uniform
        // sample without replacement.
        for (std::size_t a = 0; a < removed; ++a) {
          const auto b = a + uniform_index(pick, pool.size() - a);
          std::swap(pool[a], pool[b]);
          mask[pool[a]] = 1;
        }
      }
      traces[k] = bdsi_simulate(tc, params, trial_seed(options.seed, k), mask);
    });

    const double alpha = 1.0 - options.ci_level;
    for (std::size_t t = 0; t <= horizon; ++t) {
      std::vector<double> z(options.trials);
      for (std::size_t k = 0; k < options.trials; ++k) z[k] = static_cast<double>(traces[k].coverage[t]);
      result.rows.push_back({f, removed, static_cast<int>(t), stats::mean(z), stats::quantile(z, alpha / 2.0),
                             stats::quantile(z, 1.0 - alpha / 2.0)});
    }
    SpeedRow speed{f, removed, 0.0, std::nan("")};
    double sum_t = 0.0;
    std::size_t reached = 0;
    for (const auto& tr : traces) {
      if (auto t = tr.time_to_fraction(options.speed_fraction, n)) {
        sum_t += *t;
        ++reached;
      }
    }
    speed.reached_share = static_cast<double>(reached) / static_cast<double>(options.trials);
    if (reached > 0) speed.mean_time = sum_t / static_cast<double>(reached);
    result.speed.push_back(speed);
    if (options.keep_traces)
      for (std::size_t k = 0; k < options.trials; ++k)
        for (std::size_t t = 0; t <= horizon; ++t) result.traces.push_back({k, f, static_cast<int>(t), traces[k].coverage[t]});
  }
  return result;
}

std::string to_csv(std::span<const TraceRow> traces) {
  csv::Writer w;
  w.row("trial", "F", "t", "Z");
  for (const auto& r : traces) w.row(r.trial, r.fraction, r.t, r.z);
  return w.str();
}

// ---------------------------------------------------------------------------

double compute_reward(std::span<const double> reference, double current) {
  require(reference.size() == 7, "reward reference window must hold 7 daily values");
  require(std::isfinite(current), "current activity must be finite");
  for (double v : reference) require(std::isfinite(v), "reference activity must be finite");
  const double mu = stats::mean(reference);
  const double sigma = stats::sd(reference);
  // Position on the 9 steps between the $0.50 and $5.00 tiers.
  double steps = 4.5;
  if (sigma > 0.0) steps = ((current - mu) / sigma + 1.0) * 4.5;
  const double tier = std::clamp(std::floor(steps + 0.5), 0.0, 9.0);
  return 0.5 + 0.5 * tier;
}

double log_activity_ratio(double pre_mean, double post_mean) {
  require(pre_mean > 0.0 && post_mean > 0.0, "activity means must be positive");
  return std::log(post_mean / pre_mean);
}

BuddyCovariates buddy_covariates(const NominationGraph& graph, const TieClassification& tc, std::size_t ego,
                                 std::span<const std::size_t> buddies) {
  BuddyCovariates out;
  for (auto b : buddies) {
    require(b != ego, "a buddy cannot be the ego");
    switch (tc.pair_class(ego, b)) {
      case PairClass::reciprocal: ++out.reciprocal; break;
      case PairClass::unilateral_out: ++out.alter_perceived; break;
      case PairClass::unilateral_in: ++out.ego_perceived; break;
      case PairClass::none: break;
    }
    out.tie_strength += graph.score(ego, b).value_or(0.0) + graph.score(b, ego).value_or(0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------

void SynthGraphSpec::validate() const {
  require(n_nodes >= 2, "synthetic graph needs at least two nodes");
  require(communities >= 1 && communities <= n_nodes, "community count must lie in [1, n_nodes]");
  for (double p : {p_in, p_out, reciprocity}) require(p >= 0.0 && p <= 1.0, "graph probabilities must lie in [0,1]");
  require(threshold >= 0.0 && std::floor(threshold) + 1.0 <= scale_max, "threshold leaves no nominated score");
}

NominationGraph synth_graph(const SynthGraphSpec& spec, std::uint64_t seed) {
  spec.validate();
  NominationGraph g(0.0, spec.scale_max);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < spec.n_nodes; ++i) {
    ids.push_back(csv::padded_id('N', i, spec.n_nodes));
    g.add_node(ids.back());
  }
  Rng rng = make_rng(seed, 60);
  const auto low = static_cast<std::uint64_t>(std::floor(spec.threshold)) + 1;
  const auto span = static_cast<std::uint64_t>(spec.scale_max) - low + 1;
  auto score = [&] { return static_cast<double>(low + uniform_index(rng, span)); };
  for (std::size_t i = 0; i < spec.n_nodes; ++i)
    for (std::size_t j = i + 1; j < spec.n_nodes; ++j) {
      const bool same = i % spec.communities == j % spec.communities;
      if (!(uniform01(rng) < (same ? spec.p_in : spec.p_out))) continue;
      if (uniform01(rng) < spec.reciprocity) {
        g.add_edge(ids[i], ids[j], score());
        g.add_edge(ids[j], ids[i], score());
      } else if (uniform01(rng) < 0.5) {
        g.add_edge(ids[i], ids[j], score());
      } else {
        g.add_edge(ids[j], ids[i], score());
      }
    }
  return g;
}

}  // namespace laborflow::netdyn
