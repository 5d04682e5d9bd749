// SPDX-License-Identifier: Apache-2.0
#include "core/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace laborflow::complexity {
namespace {

struct ExactSums {
  std::vector<long double> rows;
  std::vector<long double> cols;
  long double total = 0.0L;
};

// Extended-precision sums keep equal-valued cells exactly proportional, so
// uniform inputs give RCA == 1 exactly.
ExactSums sums_of(const Eigen::MatrixXd& x) {
  ExactSums s;
  s.rows.assign(static_cast<std::size_t>(x.rows()), 0.0L);
  s.cols.assign(static_cast<std::size_t>(x.cols()), 0.0L);
  for (Eigen::Index c = 0; c < x.rows(); ++c)
    for (Eigen::Index p = 0; p < x.cols(); ++p) {
      s.rows[c] += x(c, p);
      s.cols[p] += x(c, p);
    }
  for (auto r : s.rows) s.total += r;
  return s;
}

IncidenceMatrix pruned_input(const IncidenceMatrix& x, PruneReport* report) {
  require(x.rows() > 0 && x.cols() > 0, "incidence matrix is empty");
  for (Eigen::Index i = 0; i < x.values.size(); ++i) {
    const double v = x.values.data()[i];
    require(std::isfinite(v) && v >= 0.0, "incidence values must be finite and non-negative");
  }
  auto pruned = prune_zero(x, report);
  if (pruned.rows() == 0 || pruned.cols() == 0) fail(ErrorKind::degenerate, "incidence matrix is all zero");
  return pruned;
}

void require_pruned_binary(const IncidenceMatrix& m) {
  require(m.rows() > 0 && m.cols() > 0, "binary matrix is empty");
  require(is_binary(m.values), "matrix must be binary (0/1)");
  require((m.values.rowwise().sum().array() > 0).all(), "binary matrix has an all-zero row; prune it first");
  require((m.values.colwise().sum().array() > 0).all(), "binary matrix has an all-zero column; prune it first");
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

bool zscore(Eigen::VectorXd& v) {
  std::span<double> s(v.data(), static_cast<std::size_t>(v.size()));
  if (stats::zscore_inplace(s)) return true;
  v.setZero();
  return false;
}


}  // namespace

RcaResult rca(const IncidenceMatrix& x) {
  RcaResult out;
  auto m = pruned_input(x, &out.pruned);
  const auto s = sums_of(m.values);
  out.rca = m;
  for (Eigen::Index c = 0; c < m.rows(); ++c)
    for (Eigen::Index p = 0; p < m.cols(); ++p)
      out.rca.values(c, p) = static_cast<double>((static_cast<long double>(m.values(c, p)) * s.total) /
                                                 (s.rows[c] * s.cols[p]));
  return out;
}

BinaryResult binarize(const IncidenceMatrix& r, double r_star, Threshold rule) {
  require(r_star > 0.0 && std::isfinite(r_star), "binarization threshold must be positive");
  BinaryResult out{r, false};
  for (Eigen::Index i = 0; i < r.values.size(); ++i) {
    const double v = r.values.data()[i];
    const bool on = rule == Threshold::at_least ? v >= r_star : v > r_star;
    out.m.values.data()[i] = on ? 1.0 : 0.0;
  }
  out.degenerate = (out.m.values.array() == 0.0).all();
  return out;
}

ProminenceResult prominence(const IncidenceMatrix& x) {
  ProminenceResult out;
  auto m = pruned_input(x, &out.pruned);
  const auto s = sums_of(m.values);
  out.binary.m = m;
  for (Eigen::Index c = 0; c < m.rows(); ++c)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const long double lhs = static_cast<long double>(m.values(c, j)) * s.total;
      const long double rhs = s.rows[c] * s.cols[j];
      out.binary.m.values(c, j) = lhs > rhs ? 1.0 : 0.0;
    }
  out.binary.degenerate = (out.binary.m.values.array() == 0.0).all();
  return out;
}

ReflectionsResult reflections(const IncidenceMatrix& m, const ReflectionsOptions& options) {
  require_pruned_binary(m);
  if (options.iterations) require(*options.iterations >= 0, "reflection iterations must be non-negative");
  require(options.max_iterations >= 2, "max_iterations must be at least 2");
  require(options.tolerance > 0.0 && options.tolerance < 1.0, "reflection tolerance must be in (0,1)");

  ReflectionsResult out;
  out.place_labels = m.row_labels;
  out.activity_labels = m.col_labels;
  const Eigen::MatrixXd& M = m.values;
  const Eigen::VectorXd kc0 = M.rowwise().sum();
  const Eigen::VectorXd kp0 = M.colwise().sum().transpose();
  out.kc.push_back(kc0);
  out.kp.push_back(kp0);

  auto step = [&] {
    const auto& kc = out.kc.back();
    const auto& kp = out.kp.back();
    Eigen::VectorXd nc = (M * kp).cwiseQuotient(kc0);
    Eigen::VectorXd np = (M.transpose() * kc).cwiseQuotient(kp0);
    out.kc.push_back(std::move(nc));
    out.kp.push_back(std::move(np));
  };
  auto stable = [&](std::size_t n) {
    const double rc = stats::spearman(to_std(out.kc[n]), to_std(out.kc[n - 2]));
    const double rp = stats::spearman(to_std(out.kp[n]), to_std(out.kp[n - 2]));
    return rc > 1.0 - options.tolerance && rp > 1.0 - options.tolerance;
  };

  if (options.iterations) {
    for (int n = 0; n < *options.iterations; ++n) step();
    out.iterations = *options.iterations;
  } else {
    const int limit = options.max_iterations - options.max_iterations % 2;
    out.converged = false;
    for (int n = 1; n <= limit; ++n) {
      step();
      if (n % 2 == 0 && stable(static_cast<std::size_t>(n))) {
        out.converged = true;
        break;
      }
    }
    out.iterations = static_cast<int>(out.kc.size()) - 1;
  }
  for (const auto& v : out.kc) if (!v.allFinite()) fail(ErrorKind::numeric, "reflection iterate is not finite");
  for (const auto& v : out.kp) if (!v.allFinite()) fail(ErrorKind::numeric, "reflection iterate is not finite");

  out.place_index = out.kc.back();
  out.activity_index = out.kp.back();
  const bool ok_c = zscore(out.place_index);
  const bool ok_p = zscore(out.activity_index);
  out.degenerate = !(ok_c && ok_p);
  if (out.degenerate) {
    out.place_index.setZero();
    out.activity_index.setZero();
  }
  return out;
}

EciResult eci_eigen(const IncidenceMatrix& m) {
  require_pruned_binary(m);
  const Eigen::Index nc = m.rows();
  if (nc < 2) fail(ErrorKind::degenerate, "eigenvector index needs at least two places");
  const Eigen::MatrixXd& M = m.values;
  const Eigen::VectorXd kc = M.rowwise().sum();
  const Eigen::VectorXd kp = M.colwise().sum().transpose();
  const Eigen::VectorXd dc = kc.cwiseSqrt().cwiseInverse();

  // Symmetric form of the place projection; its eigenvectors w map back to
  // the projection's right eigenvectors through D_c^{-1/2} w.
  Eigen::MatrixXd half = dc.asDiagonal() * M * kp.cwiseSqrt().cwiseInverse().asDiagonal();
  Eigen::MatrixXd s = half * half.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
  if (solver.info() != Eigen::Success) fail(ErrorKind::numeric, "eigen decomposition failed");
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vectors = solver.eigenvectors();

  EciResult out;
  out.place_labels = m.row_labels;
  out.diagnostics.lambda1 = values(nc - 1);
  out.diagnostics.lambda2 = values(nc - 2);
  out.diagnostics.lambda3 = nc >= 3 ? values(nc - 3) : 0.0;
  const double scale = std::max(1.0, std::abs(out.diagnostics.lambda1));
  if (nc >= 3 && std::abs(out.diagnostics.lambda2 - out.diagnostics.lambda3) <= 1e-10 * scale) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "second eigenvalue is not separated (lambda1=%.12g lambda2=%.12g lambda3=%.12g)",
                  out.diagnostics.lambda1, out.diagnostics.lambda2, out.diagnostics.lambda3);
    fail(ErrorKind::numeric, buf);
  }

  // The leading eigenvector is sqrt(k_c) (eigenvalue 1). Project it out of
  // the top-two span so a repeated unit eigenvalue (disconnected blocks)
  // still yields a well-defined second direction.
  Eigen::VectorXd u1 = kc.cwiseSqrt();
  u1.normalize();
  Eigen::VectorXd w = vectors.col(nc - 2) - vectors.col(nc - 2).dot(u1) * u1;
  Eigen::VectorXd alt = vectors.col(nc - 1) - vectors.col(nc - 1).dot(u1) * u1;
  if (alt.norm() > w.norm()) w = alt;
  if (w.norm() < 1e-8) fail(ErrorKind::numeric, "second eigenvector collapsed onto the leading one");

  Eigen::VectorXd index = dc.cwiseProduct(w);
  if (!zscore(index)) fail(ErrorKind::degenerate, "eigenvector index is constant across places");
  const double r = stats::pearson(to_std(index), to_std(kc));
  bool flip = false;
  if (std::isfinite(r) && std::abs(r) > 1e-12) {
    flip = r < 0.0;
  } else {
    for (Eigen::Index i = 0; i < nc; ++i)
      if (std::abs(index(i)) > 1e-12) {
        flip = index(i) < 0.0;
        break;
      }
  }
  if (flip) index = -index;
  out.index = index;
  return out;
}

ProximityResult proximity(const IncidenceMatrix& m) {
  require(m.rows() > 0 && m.cols() > 0, "binary matrix is empty");
  require(is_binary(m.values), "matrix must be binary (0/1)");
  ProximityResult out;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (m.values.col(j).sum() > 0) keep.push_back(j);
    else out.pruned.push_back(m.col_labels[j]);
  }
  if (keep.empty()) fail(ErrorKind::degenerate, "no activity is present in any place");
  const auto k = static_cast<Eigen::Index>(keep.size());
  std::vector<long long> ubiquity(keep.size(), 0);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index c = 0; c < m.rows(); ++c) ubiquity[a] += m.values(c, keep[a]) > 0.5;

  out.phi.values = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    out.phi.row_labels.push_back(m.col_labels[keep[a]]);
    for (Eigen::Index b = a; b < k; ++b) {
      long long both = 0;
      for (Eigen::Index c = 0; c < m.rows(); ++c)
        both += (m.values(c, keep[a]) > 0.5 && m.values(c, keep[b]) > 0.5);
      const double pa = static_cast<double>(both) / static_cast<double>(ubiquity[a]);
      const double pb = static_cast<double>(both) / static_cast<double>(ubiquity[b]);
      out.phi.values(a, b) = out.phi.values(b, a) = std::min(pa, pb);
    }
  }
  out.phi.col_labels = out.phi.row_labels;
  return out;
}

std::vector<ProximityEdge> proximity_edges(const LabeledMatrix& phi, double threshold) {
  require(phi.rows() == phi.cols(), "proximity matrix must be square");
  require(threshold >= 0.0 && threshold <= 1.0, "proximity threshold must lie in [0,1]");
  std::vector<ProximityEdge> edges;
  for (Eigen::Index a = 0; a < phi.rows(); ++a)
    for (Eigen::Index b = a + 1; b < phi.cols(); ++b)
      if (phi.values(a, b) >= threshold) edges.push_back({phi.row_labels[a], phi.col_labels[b], phi.values(a, b)});
  return edges;
}

std::string to_csv(const std::vector<ProximityEdge>& edges) {
  csv::Writer w;
  w.row("i", "j", "phi");
  for (const auto& e : edges) w.row(e.i, e.j, e.phi);
  return w.str();
}

std::string index_csv(const std::vector<std::string>& labels, const Eigen::VectorXd& index) {
  require(labels.size() == static_cast<std::size_t>(index.size()), "label count does not match index length");
  csv::Writer w;
  w.row("label", "index");
  for (std::size_t i = 0; i < labels.size(); ++i) w.row(labels[i], index(static_cast<Eigen::Index>(i)));
  return w.str();
}

void SynthIncidenceSpec::validate() const {
  require(n_places >= 2 && n_activities >= 2, "synthetic matrix needs at least 2 places and 2 activities");
  require(nestedness >= 0.0 && nestedness <= 1.0, "nestedness must lie in [0,1]");
  require(noise >= 0.0 && noise <= 0.5, "noise must lie in [0,0.5]");
}

IncidenceMatrix synth_incidence(const SynthIncidenceSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int np = spec.n_places;
  const int na = spec.n_activities;
  Eigen::MatrixXd nested(np, na);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < na; ++j)
      nested(i, j) = static_cast<double>(j) / na < 1.0 - static_cast<double>(i) / np ? 1.0 : 0.0;
  const double density = nested.mean();

  IncidenceMatrix out;
  out.values.resize(np, na);
  Rng rng = make_rng(seed, 10);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < na; ++j) {
      const double p = spec.nestedness * nested(i, j) + (1.0 - spec.nestedness) * density;
      bool on = uniform01(rng) < p;
      if (uniform01(rng) < spec.noise) on = !on;
      out.values(i, j) = on ? 1.0 : 0.0;
    }
  for (int i = 0; i < np; ++i) out.row_labels.push_back(csv::padded_id('P', static_cast<std::size_t>(i), static_cast<std::size_t>(np), 2));
  for (int j = 0; j < na; ++j) out.col_labels.push_back(csv::padded_id('A', static_cast<std::size_t>(j), static_cast<std::size_t>(na), 2));
  return out;
}

}  // namespace laborflow::complexity
