// SPDX-License-Identifier: Apache-2.0
//
// Revealed comparative advantage, binarization, the Method of Reflections,
// the eigenvector complexity index and activity proximity.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core/model.hpp"

namespace laborflow::complexity {

struct RcaResult {
  IncidenceMatrix rca;  // pruned labels
  PruneReport pruned;
};

/// RCA_cp = (x_cp / sum_p x_cp) / (sum_c x_cp / sum x). All-zero rows and
/// columns are pruned first.
RcaResult rca(const IncidenceMatrix& x);

enum class Threshold { at_least, greater_than };

struct BinaryResult {
  IncidenceMatrix m;
  bool degenerate = false;  // no entry passed the threshold
};

/// M_cp = 1 iff R_cp >= r_star (or > r_star).
BinaryResult binarize(const IncidenceMatrix& r, double r_star, Threshold rule = Threshold::at_least);

struct ProminenceResult {
  BinaryResult binary;
  PruneReport pruned;
};

/// M_cj = 1 iff the city's share of job j strictly exceeds the national
/// share, compared by cross-multiplication.
ProminenceResult prominence(const IncidenceMatrix& x);

struct ReflectionsOptions {
  std::optional<int> iterations;  // fixed N; otherwise the stopping rule
  int max_iterations = 200;
  double tolerance = 1e-9;
};

struct ReflectionsResult {
  std::vector<std::string> place_labels;
  std::vector<std::string> activity_labels;
  std::vector<Eigen::VectorXd> kc;  // k_{c,0..N}
  std::vector<Eigen::VectorXd> kp;  // k_{p,0..N}
  Eigen::VectorXd place_index;
  Eigen::VectorXd activity_index;
  int iterations = 0;
  bool converged = true;    // stopping rule met (always true for fixed N)
  bool degenerate = false;  // final iterates constant; indices set to 0
};

/// Requires a pruned binary M. Without a fixed N, stops at the first even
/// n >= 2 where the Spearman correlation between k_n and k_{n-2} exceeds
/// 1 - tolerance for both places and activities.
ReflectionsResult reflections(const IncidenceMatrix& m, const ReflectionsOptions& options = {});

struct EigenDiagnostics {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
};

struct EciResult {
  std::vector<std::string> place_labels;
  Eigen::VectorXd index;
  EigenDiagnostics diagnostics;
};

/// Second eigenvector of D_c^-1 M D_p^-1 M^T, z-scored and signed to
/// correlate positively with diversity.
EciResult eci_eigen(const IncidenceMatrix& m);

struct ProximityResult {
  LabeledMatrix phi;
  std::vector<std::string> pruned;  // zero-ubiquity activities
};

/// phi_ij = min(P(i|j), P(j|i)) over places.
ProximityResult proximity(const IncidenceMatrix& m);

struct ProximityEdge {
  std::string i;
  std::string j;
  double phi = 0.0;
};

/// Upper-triangle pairs with phi >= threshold.
std::vector<ProximityEdge> proximity_edges(const LabeledMatrix& phi, double threshold);
std::string to_csv(const std::vector<ProximityEdge>& edges);

/// Two-column `label,index` table.
std::string index_csv(const std::vector<std::string>& labels, const Eigen::VectorXd& index);

struct SynthIncidenceSpec {
  int n_places = 20;
  int n_activities = 50;
  double nestedness = 0.9;
  double noise = 0.0;

  void validate() const;
};

/// Binary matrix. Place i holds activity j in the nested pattern iff
/// j/n_activities < 1 - i/n_places; each cell keeps the pattern with
/// probability `nestedness` (else a density-matched coin) and is flipped with
/// probability `noise`.
IncidenceMatrix synth_incidence(const SynthIncidenceSpec& spec, std::uint64_t seed);

}  // namespace laborflow::complexity
