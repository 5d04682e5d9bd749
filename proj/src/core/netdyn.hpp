// SPDX-License-Identifier: Apache-2.0
//
// Directed nomination networks: tie reciprocity, dyad features, the
// bi-directional SI spreading process with edge percolation, and the
// incentive-game reward and outcome helpers.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace laborflow::netdyn {

enum class TieClass : std::uint8_t { reciprocal, unilateral };
enum class PairClass : std::uint8_t { none, reciprocal, unilateral_out, unilateral_in };

std::string_view to_string(TieClass c);
TieClass parse_tie_class(std::string_view text);

/// Undirected tie. For a unilateral tie `u` nominated `v`.
struct Tie {
  std::size_t u = 0;
  std::size_t v = 0;
  TieClass cls = TieClass::unilateral;
};

struct Incident {
  std::size_t neighbor = 0;
  std::size_t tie = 0;
};

class TieClassification {
 public:
  TieClassification(const NominationGraph& graph, double threshold);

  std::size_t node_count() const { return ids_.size(); }
  const std::string& node_id(std::size_t i) const { return ids_.at(i); }
  std::size_t index_of(std::string_view id) const;
  double threshold() const { return threshold_; }

  const std::vector<Tie>& ties() const { return ties_; }
  const std::vector<Incident>& incident(std::size_t node) const { return adjacency_.at(node); }
  std::size_t degree(std::size_t node) const { return adjacency_.at(node).size(); }

  /// Class of the ordered pair from i's point of view.
  PairClass pair_class(std::size_t i, std::size_t j) const;
  bool nominated(std::size_t i, std::size_t j) const;

  std::size_t count(TieClass c) const { return c == TieClass::reciprocal ? reciprocal_ : ties_.size() - reciprocal_; }
  std::size_t nomination_count() const { return 2 * reciprocal_ + (ties_.size() - reciprocal_); }

 private:
  std::vector<std::string> ids_;
  double threshold_;
  std::vector<Tie> ties_;
  std::vector<std::vector<Incident>> adjacency_;  // sorted by neighbor
  std::size_t reciprocal_ = 0;
};

/// An edge i -> j is a nomination iff its score exceeds `threshold`; a tie
/// is reciprocal iff both directions are nominations.
TieClassification classify_ties(const NominationGraph& graph, double threshold);

struct NodeReciprocity {
  std::string node;
  std::size_t nominations = 0;
  std::size_t reciprocated = 0;
  double fraction = 0.0;
};

struct ReciprocityStats {
  std::size_t ties = 0;
  std::size_t reciprocal_ties = 0;
  std::size_t nominations = 0;
  std::size_t reciprocated_nominations = 0;
  double global_fraction = 0.0;      // reciprocal ties / ties
  double nomination_fraction = 0.0;  // reciprocated nominations / nominations
  std::vector<NodeReciprocity> per_node;  // nodes with >= 1 outgoing nomination
};

ReciprocityStats reciprocity_stats(const TieClassification& tc);

/// Common neighbors on the undirected nomination graph.
std::int64_t se_feature(const TieClassification& tc, std::size_t i, std::size_t j);
/// deg(i)/(n-1) - deg(j)/(n-1) on the undirected nomination graph.
double sc_feature(const TieClassification& tc, std::size_t i, std::size_t j);

// ---------------------------------------------------------------------------
// Spreading

struct BdsiParams {
  double p_rec = 0.0;
  double p_plus = 0.0;   // unilateral tie, along the nomination
  double p_minus = 0.0;  // unilateral tie, against the nomination
  int horizon = 20;
  std::vector<std::size_t> seeds;

  void validate(std::size_t node_count) const;
};

struct SpreadTrace {
  std::vector<int> infection_time;  // -1 when never infected
  std::vector<std::size_t> coverage;  // Z(t), t = 0..horizon
  std::uint64_t seed = 0;

  /// First step with Z(t) >= fraction * n, if reached.
  std::optional<int> time_to_fraction(double fraction, std::size_t n) const;
};

/// Synchronous discrete-time process: at every step each node infected
/// before the step attempts each incident tie once. Ties flagged in
/// `removed` (indexed like tc.ties()) are skipped.
SpreadTrace bdsi_simulate(const TieClassification& tc, const BdsiParams& params, std::uint64_t seed,
                          std::span<const char> removed = {});

struct PercolationOptions {
  std::vector<double> fractions{0.0};
  TieClass removed_class = TieClass::reciprocal;
  /// When set, the number removed is floor(F * count(reference)) so that the
  /// two classes can be contrasted at matched absolute counts.
  std::optional<TieClass> count_reference;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double speed_fraction = 0.5;
  double ci_level = 0.95;
  unsigned threads = 1;
  bool keep_traces = false;
};

struct PercolationRow {
  double fraction = 0.0;
  std::size_t removed = 0;
  int t = 0;
  double mean_z = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct SpeedRow {
  double fraction = 0.0;
  std::size_t removed = 0;
  double reached_share = 0.0;  // trials that reached speed_fraction * n
  double mean_time = 0.0;      // over trials that reached it; NaN if none did
};

struct TraceRow {
  std::size_t trial = 0;
  double fraction = 0.0;
  int t = 0;
  std::size_t z = 0;
};

struct PercolationResult {
  std::vector<PercolationRow> rows;
  std::vector<SpeedRow> speed;
  std::vector<TraceRow> traces;
};

/// Seed stream: trial k simulates with derive_seed(seed, 1, k) for every F,
/// and removes edges with an independent stream, so F = 0 reproduces the
/// unperturbed run.
PercolationResult percolation_experiment(const TieClassification& tc, const BdsiParams& params,
                                         const PercolationOptions& options);

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial);

std::string to_csv(std::span<const TraceRow> traces);

// ---------------------------------------------------------------------------
// Incentive game

/// Maps the current 3-day mean onto [$0.50, $5.00] linearly between one
/// population sd below and above the 7-day reference mean, in $0.50 tiers
/// (half-up rounding), clamped at both ends.
double compute_reward(std::span<const double> reference, double current);

/// ln(post / pre); both must be positive.
double log_activity_ratio(double pre_mean, double post_mean);

struct BuddyCovariates {
  int reciprocal = 0;        // buddies with a reciprocal tie
  int alter_perceived = 0;   // ego nominates the buddy only
  int ego_perceived = 0;     // buddy nominates the ego only
  double tie_strength = 0.0; // sum of nomination scores in both directions
};

BuddyCovariates buddy_covariates(const NominationGraph& graph, const TieClassification& tc, std::size_t ego,
                                 std::span<const std::size_t> buddies);

// ---------------------------------------------------------------------------
// Synthetic nomination graphs

struct SynthGraphSpec {
  std::size_t n_nodes = 84;
  std::size_t communities = 2;
  double p_in = 0.2;       // tie probability within a community
  double p_out = 0.01;     // tie probability across communities
  double reciprocity = 0.5;  // share of ties nominated in both directions
  double scale_max = 7.0;
  double threshold = 2.0;  // nominated scores are integers in (threshold, scale_max]

  void validate() const;
};

/// Node ids "N000".. with community = index % communities.
NominationGraph synth_graph(const SynthGraphSpec& spec, std::uint64_t seed);

}  // namespace laborflow::netdyn
