// SPDX-License-Identifier: Apache-2.0
#include "core/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <random>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/random.hpp"
#include "core/stats.hpp"

namespace laborflow::learn {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) fail(ErrorKind::invalid_argument, std::string(what) + " contains non-finite values");
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

struct Design {
  Eigen::MatrixXd d;
  std::vector<std::string> names;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

Design build_design(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                    bool intercept, bool standardize) {
  require(names.size() == static_cast<std::size_t>(x.cols()), "covariate names do not match the column count");
  require(x.rows() == y.size(), "covariate rows do not match the outcome length");
  require_finite(x, "covariate matrix");
  require_finite(y, "outcome");
  Design out;
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const Eigen::Index k = p + (intercept ? 1 : 0);
  out.d.resize(n, k);
  out.mean = Eigen::VectorXd::Zero(p);
  out.sd = Eigen::VectorXd::Ones(p);
  if (intercept) {
    out.d.col(0).setOnes();
    out.names.push_back("(Intercept)");
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd col = x.col(j);
    if (standardize) {
      const double m = col.mean();
      const double s = std::sqrt((col.array() - m).square().mean());
      if (!(s > 0.0)) fail(ErrorKind::degenerate, "cannot standardize constant covariate '" + names[j] + "'");
      out.mean(j) = m;
      out.sd(j) = s;
      col = (col.array() - m) / s;
    }
    out.d.col(j + (intercept ? 1 : 0)) = col;
    out.names.push_back(names[j]);
  }
  return out;
}

// Column-pivoted QR of a (weighted) design with a named rank check.
Eigen::ColPivHouseholderQR<Eigen::MatrixXd> checked_qr(const Eigen::MatrixXd& d, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
  qr.setThreshold(1e-10);
  if (qr.rank() < d.cols()) {
    // Each trailing pivoted column is a combination of the leading ones;
    // name it together with the columns that carry weight in that combination.
    const Eigen::Index r = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    const Eigen::MatrixXd rr = qr.matrixR().topLeftCorner(r, d.cols()).triangularView<Eigen::Upper>();
    std::vector<std::string> dropped;
    for (Eigen::Index i = r; i < d.cols(); ++i) {
      dropped.push_back(names[static_cast<std::size_t>(perm(i))]);
      if (r == 0) continue;
      const Eigen::VectorXd z = rr.topLeftCorner(r, r).triangularView<Eigen::Upper>().solve(rr.col(i));
      for (Eigen::Index j = 0; j < r; ++j)
        if (std::abs(z(j)) > 1e-8) dropped.push_back(names[static_cast<std::size_t>(perm(j))]);
    }
    std::sort(dropped.begin(), dropped.end());
    dropped.erase(std::unique(dropped.begin(), dropped.end()), dropped.end());
    fail(ErrorKind::degenerate, "design matrix is rank deficient; collinear columns: " + join(dropped));
  }
  return qr;
}

Eigen::MatrixXd gram_inverse(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
  const Eigen::Index k = qr.cols();
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd inner = rinv * rinv.transpose();
  const auto& p = qr.colsPermutation();
  return p * inner * p.transpose();
}

void fill_inference(FitSummary& fit, bool use_t) {
  const Eigen::Index k = fit.coef.size();
  fit.se.resize(k);
  fit.stat.resize(k);
  fit.p_value.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    fit.se(i) = std::sqrt(std::max(0.0, fit.covariance(i, i)));
    fit.stat(i) = fit.se(i) > 0.0 ? fit.coef(i) / fit.se(i) : kNaN;
    if (!std::isfinite(fit.stat(i))) fit.p_value(i) = kNaN;
    else fit.p_value(i) = use_t ? stats::t_two_sided_p(fit.stat(i), static_cast<double>(fit.dof))
                                : stats::normal_two_sided_p(fit.stat(i));
  }
}

double corr(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::VectorXd& z) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double d = x(i, k) - z(k);
    s += theta(k) * d * d;
  }
  return std::exp(-s);
}

}  // namespace

// ---------------------------------------------------------------------------

void SomOptions::validate() const {
  require(width >= 1 && height >= 1, "SOM grid dimensions must be positive");
  require(epochs >= 0, "SOM epochs must be non-negative");
  require(alpha_start > 0.0 && alpha_end > 0.0 && alpha_start <= 1.0 && alpha_end <= 1.0,
          "SOM learning rates must lie in (0,1]");
  require(!radius_start || *radius_start > 0.0, "SOM radius must be positive");
  require(radius_end > 0.0, "SOM radius must be positive");
}

SomGrid som_train(const Eigen::MatrixXd& data, const SomOptions& options, std::uint64_t seed) {
  options.validate();
  require(data.rows() >= 1 && data.cols() >= 1, "SOM training needs at least one sample");
  require_finite(data, "SOM training data");
  const auto n = static_cast<std::size_t>(data.rows());
  SomGrid grid;
  grid.width = options.width;
  grid.height = options.height;
  const int units = grid.units();
  grid.codebooks.resize(units, data.cols());

  Rng init = make_rng(seed, 20);
  if (n >= static_cast<std::size_t>(units)) {
    auto order = shuffled(n, init);
    for (int u = 0; u < units; ++u) grid.codebooks.row(u) = data.row(static_cast<Eigen::Index>(order[u]));
  } else {
    for (int u = 0; u < units; ++u) grid.codebooks.row(u) = data.row(static_cast<Eigen::Index>(uniform_index(init, n)));
  }

  const double r0 = options.radius_start.value_or(std::max(options.width, options.height) / 2.0);
  const double total = static_cast<double>(options.epochs) * static_cast<double>(n);
  double t = 0.0;
  for (int e = 0; e < options.epochs; ++e) {
    Rng rng = make_rng(seed, 21, static_cast<std::uint64_t>(e));
    for (auto idx : shuffled(n, rng)) {
      const double frac = total > 1.0 ? t / (total - 1.0) : 0.0;
      const double alpha = options.alpha_start + (options.alpha_end - options.alpha_start) * frac;
      const double radius = r0 + (options.radius_end - r0) * frac;
      const Eigen::VectorXd x = data.row(static_cast<Eigen::Index>(idx)).transpose();
      const int bmu = som_map(grid, x);
      const int bx = bmu % grid.width, by = bmu / grid.width;
      for (int u = 0; u < units; ++u) {
        const double dx = u % grid.width - bx, dy = u / grid.width - by;
        const double h = alpha * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
        grid.codebooks.row(u) += h * (x.transpose() - grid.codebooks.row(u));
      }
      t += 1.0;
    }
    grid.quantization_error.push_back(som_quantization_error(grid, data));
  }
  if (!grid.codebooks.allFinite()) fail(ErrorKind::numeric, "SOM codebooks became non-finite");
  grid.trained = true;
  return grid;
}

int som_map(const SomGrid& grid, const Eigen::VectorXd& x) {
  require(x.size() == grid.codebooks.cols(), "input dimension does not match the SOM codebooks");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int u = 0; u < grid.codebooks.rows(); ++u) {
    const double d = (grid.codebooks.row(u).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = u;
    }
  }
  return best;
}

double som_quantization_error(const SomGrid& grid, const Eigen::MatrixXd& data) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Eigen::VectorXd x = data.row(i).transpose();
    sum += (grid.codebooks.row(som_map(grid, x)).transpose() - x).norm();
  }
  return sum / static_cast<double>(data.rows());
}

// ---------------------------------------------------------------------------

Eigen::VectorXd gp_basis_row(GpBasis basis, const Eigen::VectorXd& x) {
  if (basis == GpBasis::constant) return Eigen::VectorXd::Ones(1);
  Eigen::VectorXd f(x.size() + 1);
  f(0) = 1.0;
  f.tail(x.size()) = x;
  return f;
}

GpModel gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
               const GpOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  require(n >= 2 && d >= 1, "GP fit needs at least two training rows");
  require(y.size() == n, "GP targets do not match the training rows");
  require(theta.size() == d, "GP theta must have one value per input dimension");
  require_finite(x, "GP inputs");
  require_finite(y, "GP targets");
  for (Eigen::Index k = 0; k < d; ++k) require(theta(k) > 0.0 && std::isfinite(theta(k)), "GP theta must be positive");
  require(options.nugget >= 0.0 && options.max_nugget >= options.nugget, "invalid GP nugget range");
  bool distinct = false;
  for (Eigen::Index i = 1; i < n && !distinct; ++i) distinct = (x.row(i) - x.row(0)).cwiseAbs().maxCoeff() > 0.0;
  require(distinct, "GP fit needs at least two distinct training rows");

  GpModel m;
  m.x = x;
  m.y = y;
  m.basis = options.basis;
  m.theta = theta;
  Eigen::MatrixXd base(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    base(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) base(i, j) = base(j, i) = corr(theta, x, i, x.row(j).transpose());
  }
  const Eigen::Index q = gp_basis_row(options.basis, x.row(0).transpose()).size();
  require(n > q || options.basis == GpBasis::constant, "linear GP basis needs more rows than inputs + 1");
  Eigen::MatrixXd f(n, q);
  for (Eigen::Index i = 0; i < n; ++i) f.row(i) = gp_basis_row(options.basis, x.row(i).transpose()).transpose();

  double nugget = options.nugget;
  bool ok = false;
  while (true) {
    m.chol.compute(base + nugget * Eigen::MatrixXd::Identity(n, n));
    if (m.chol.info() == Eigen::Success) {
      const Eigen::VectorXd diag = m.chol.matrixL().toDenseMatrix().diagonal();
      ok = diag.allFinite() && diag.minCoeff() > 0.0;
    }
    if (ok) break;
    if (nugget >= options.max_nugget) break;
    nugget = nugget == 0.0 ? 1e-10 : std::min(nugget * 10.0, options.max_nugget);
  }
  if (!ok) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(base, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues()(0), hi = eig.eigenvalues()(n - 1);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "GP correlation matrix is not positive definite even with nugget %g (eigenvalue range %.3g..%.3g)",
                  options.max_nugget, lo, hi);
    fail(ErrorKind::numeric, buf);
  }
  m.nugget = nugget;
  m.rinv_f = m.chol.solve(f);
  Eigen::MatrixXd ftf = f.transpose() * m.rinv_f;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ftf);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
    fail(ErrorKind::numeric, "GP regression basis is degenerate on the training inputs");
  m.ft_rinv_f_inv = ldlt.solve(Eigen::MatrixXd::Identity(q, q));
  m.beta = m.ft_rinv_f_inv * (m.rinv_f.transpose() * y);
  const Eigen::VectorXd resid = y - f * m.beta;
  m.gamma = m.chol.solve(resid);
  m.sigma2 = std::max(0.0, resid.dot(m.gamma) / static_cast<double>(n));
  const Eigen::MatrixXd l = m.chol.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  m.log_likelihood = -0.5 * (static_cast<double>(n) * std::log(std::max(m.sigma2, 1e-300)) + logdet);
  return m;
}

GpPrediction gp_predict(const GpModel& model, const Eigen::VectorXd& x) {
  require(x.size() == model.dim(), "GP prediction input has the wrong dimension");
  require(x.allFinite(), "GP prediction input must be finite");
  const Eigen::Index n = model.x.rows();
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = corr(model.theta, model.x, i, x);
  const Eigen::VectorXd f = gp_basis_row(model.basis, x);
  GpPrediction p;
  p.mean = f.dot(model.beta) + r.dot(model.gamma);
  const Eigen::VectorXd rinv_r = model.chol.solve(r);
  const Eigen::VectorXd u = model.rinv_f.transpose() * r - f;
  const double v = model.sigma2 * (1.0 - r.dot(rinv_r) + u.dot(model.ft_rinv_f_inv * u));
  p.variance = std::max(0.0, v);
  return p;
}

Eigen::VectorXd gp_select_theta(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpOptions& options) {
  const Eigen::Index d = x.cols();
  require(d >= 1 && x.rows() >= 2, "GP fit needs at least two training rows");
  Eigen::VectorXd scale(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double range = x.col(k).maxCoeff() - x.col(k).minCoeff();
    scale(k) = range > 0.0 ? 1.0 / (range * range) : 1.0;
  }
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(std::pow(10.0, -2.0 + 0.5 * i));

  double best_ll = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best;
  std::exception_ptr last_error;
  auto consider = [&](const Eigen::VectorXd& theta) {
    try {
      const auto m = gp_fit(x, y, theta, options);
      if (m.log_likelihood > best_ll) {
        best_ll = m.log_likelihood;
        best = theta;
      }
    } catch (const Error& e) {
      if (e.is_validation()) throw;
      last_error = std::current_exception();
    }
  };
  for (double g : grid) consider(scale * g);
  if (best.size() == 0) std::rethrow_exception(last_error);
  if (d > 1) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::VectorXd start = best;
      for (double g : grid) {
        Eigen::VectorXd theta = start;
        theta(k) = scale(k) * g;
        consider(theta);
      }
    }
  }
  return best;
}

GpModel gp_train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpOptions& options) {
  if (options.theta) {
    const auto& t = *options.theta;
    Eigen::VectorXd theta(static_cast<Eigen::Index>(t.size()));
    for (std::size_t k = 0; k < t.size(); ++k) theta(static_cast<Eigen::Index>(k)) = t[k];
    if (theta.size() == 1 && x.cols() > 1) theta = Eigen::VectorXd::Constant(x.cols(), t[0]);
    return gp_fit(x, y, theta, options);
  }
  return gp_fit(x, y, gp_select_theta(x, y, options), options);
}

// ---------------------------------------------------------------------------

Eigen::VectorXd FitSummary::design_row(const Eigen::VectorXd& raw) const {
  require(raw.size() == x_mean.size(), "scenario must give a value for every covariate (" +
                                           std::to_string(x_mean.size()) + " expected, " +
                                           std::to_string(raw.size()) + " given)");
  require(raw.allFinite(), "scenario values must be finite");
  Eigen::VectorXd row(coef.size());
  Eigen::Index at = 0;
  if (intercept) row(at++) = 1.0;
  for (Eigen::Index j = 0; j < raw.size(); ++j) row(at++) = (raw(j) - x_mean(j)) / x_sd(j);
  return row;
}

double FitSummary::predict_linear(const Eigen::VectorXd& raw) const { return design_row(raw).dot(coef); }

double FitSummary::predict_probability(const Eigen::VectorXd& raw) const { return logistic(predict_linear(raw)); }

FitSummary ols_fit(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                   const OlsOptions& options) {
  auto design = build_design(x, names, y, options.intercept, options.standardize);
  const auto n = static_cast<std::size_t>(y.size());
  const auto k = static_cast<std::size_t>(design.d.cols());
  require(k >= 1, "regression needs at least one parameter");
  require(n > k, "regression needs more rows than parameters");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(y.size());
  if (options.weights) {
    require(options.weights->size() == y.size(), "weights do not match the row count");
    require(options.weights->allFinite() && (options.weights->array() > 0.0).all(), "weights must be positive");
    w = *options.weights;
  }
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd dw = sw.asDiagonal() * design.d;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);
  auto qr = checked_qr(dw, design.names);

  FitSummary fit;
  fit.kind = FitKind::ols;
  fit.names = design.names;
  fit.coef = qr.solve(yw);
  fit.n = n;
  fit.dof = n - k;
  fit.intercept = options.intercept;
  fit.standardized = options.standardize;
  fit.weighted = options.weights.has_value();
  fit.x_mean = design.mean;
  fit.x_sd = design.sd;
  const Eigen::VectorXd resid = yw - dw * fit.coef;
  fit.rss = resid.squaredNorm();
  fit.sigma2 = fit.rss / static_cast<double>(fit.dof);
  fit.covariance = fit.sigma2 * gram_inverse(qr);
  fill_inference(fit, true);

  const double ybar = w.dot(y) / w.sum();
  const double tss = (w.array() * (y.array() - ybar).square()).sum();
  const double nd = static_cast<double>(n);
  fit.r2 = tss > 0.0 ? 1.0 - fit.rss / tss : kNaN;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * (nd - 1.0) / static_cast<double>(fit.dof);
  fit.bic = nd * std::log(fit.rss / nd) + static_cast<double>(k) * std::log(nd);
  fit.log_likelihood = -0.5 * nd * (std::log(2.0 * M_PI) + std::log(fit.rss / nd) + 1.0);
  fit.deviance = fit.rss;
  return fit;
}

FitSummary logit_fit(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                     const LogitOptions& options) {
  auto design = build_design(x, names, y, options.intercept, options.standardize);
  const Eigen::Index n = y.size();
  const Eigen::Index k = design.d.cols();
  require(k >= 1, "logit needs at least one parameter");
  require(n > k, "logit needs more rows than parameters");
  double ones = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    require(y(i) == 0.0 || y(i) == 1.0, "logit outcome must be 0 or 1");
    ones += y(i);
  }
  require(ones > 0.0 && ones < static_cast<double>(n), "logit outcome needs both classes present");
  require(options.tolerance > 0.0 && options.max_iterations >= 1, "invalid logit convergence settings");
  checked_qr(design.d, design.names);

  const Eigen::MatrixXd& d = design.d;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd pi(n), w(n);
  bool converged = false;
  int it = 0;
  while (it < options.max_iterations) {
    ++it;
    const Eigen::VectorXd eta = d * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      pi(i) = logistic(eta(i));
      w(i) = std::max(pi(i) * (1.0 - pi(i)), 1e-300);
    }
    const Eigen::VectorXd z = eta.array() + (y - pi).array() / w.array();
    const Eigen::VectorXd sw = w.cwiseSqrt();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * d);
    const Eigen::VectorXd next = qr.solve(sw.cwiseProduct(z));
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e6)
      fail(ErrorKind::numeric, "logit fit diverged; the outcome is separated by the covariates");
    const double step = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    if (step <= options.tolerance * (1.0 + beta.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
  }
  if (!converged)
    fail(ErrorKind::numeric, "logit fit did not converge in " + std::to_string(options.max_iterations) +
                                 " iterations (possible separation)");

  FitSummary fit;
  fit.kind = FitKind::logit;
  fit.names = design.names;
  fit.coef = beta;
  fit.n = static_cast<std::size_t>(n);
  fit.dof = static_cast<std::size_t>(n - k);
  fit.iterations = it;
  fit.intercept = options.intercept;
  fit.standardized = options.standardize;
  fit.x_mean = design.mean;
  fit.x_sd = design.sd;
  const Eigen::VectorXd eta = d * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    pi(i) = logistic(eta(i));
    w(i) = pi(i) * (1.0 - pi(i));
    ll += y(i) * eta(i) - softplus(eta(i));
  }
  fit.log_likelihood = ll;
  fit.deviance = -2.0 * ll;
  if (fit.deviance < 1e-6) fail(ErrorKind::numeric, "logit fit is perfect; the outcome is separated by the covariates");
  const Eigen::MatrixXd info = d.transpose() * w.asDiagonal() * d;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
    fail(ErrorKind::numeric, "logit information matrix is singular");
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  fill_inference(fit, false);
  const double nd = static_cast<double>(n);
  const double pbar = ones / nd;
  const double ll0 = nd * (pbar * std::log(pbar) + (1.0 - pbar) * std::log(1.0 - pbar));
  fit.r2 = 1.0 - ll / ll0;
  fit.adj_r2 = 1.0 - (ll - static_cast<double>(k)) / ll0;
  fit.bic = -2.0 * ll + static_cast<double>(k) * std::log(nd);
  fit.rss = (y - pi).squaredNorm();
  fit.sigma2 = 1.0;
  return fit;
}

Eigen::MatrixXd covariance_sqrt(const Eigen::MatrixXd& cov) {
  require(cov.rows() == cov.cols(), "covariance must be square");
  require(cov.allFinite(), "covariance must be finite");
  if (cov.size() == 0) return cov;
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale, "covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()));
  if (eig.info() != Eigen::Success) fail(ErrorKind::numeric, "covariance eigen decomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  if (lambda.minCoeff() < -1e-10 * scale)
    fail(ErrorKind::numeric, "coefficient covariance is not positive semi-definite");
  lambda = lambda.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

void check_simulation(const SimulationOptions& o) {
  require(o.n_sims >= 1, "simulation count must be positive");
  require(o.ci_level > 0.0 && o.ci_level < 1.0, "ci_level must be in (0,1)");
}

Eigen::VectorXd draw_coef(const FitSummary& fit, const Eigen::MatrixXd& root, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(fit.coef.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return fit.coef + root * z;
}

}  // namespace

LogitSimulation logit_simulate(const FitSummary& fit, const Eigen::VectorXd& scenario, const SimulationOptions& options) {
  require(fit.kind == FitKind::logit, "simulation of outcomes needs a logit fit");
  check_simulation(options);
  const Eigen::VectorXd row = fit.design_row(scenario);
  const Eigen::MatrixXd root = covariance_sqrt(fit.covariance);
  std::vector<double> pis(options.n_sims), ys(options.n_sims);
  parallel_for(options.n_sims, options.threads, [&](std::size_t s) {
    Rng rng = make_rng(options.seed, 30, s);
    const double p = logistic(row.dot(draw_coef(fit, root, rng)));
    pis[s] = p;
    ys[s] = uniform01(rng) < p ? 1.0 : 0.0;
  });
  const double alpha = 1.0 - options.ci_level;
  return {stats::mean(ys), stats::mean(pis), stats::quantile(pis, alpha / 2.0), stats::quantile(pis, 1.0 - alpha / 2.0)};
}

FirstDifference first_differences(const FitSummary& fit, const Eigen::VectorXd& scenario_lo,
                                  const Eigen::VectorXd& scenario_hi, const SimulationOptions& options) {
  check_simulation(options);
  const Eigen::VectorXd lo = fit.design_row(scenario_lo);
  const Eigen::VectorXd hi = fit.design_row(scenario_hi);
  const Eigen::MatrixXd root = covariance_sqrt(fit.covariance);
  std::vector<double> diffs(options.n_sims);
  parallel_for(options.n_sims, options.threads, [&](std::size_t s) {
    Rng rng = make_rng(options.seed, 31, s);
    const Eigen::VectorXd b = draw_coef(fit, root, rng);
    if (fit.kind == FitKind::logit) diffs[s] = logistic(hi.dot(b)) - logistic(lo.dot(b));
    else diffs[s] = (hi - lo).dot(b);
  });
  const double alpha = 1.0 - options.ci_level;
  FirstDifference out;
  out.estimate = stats::mean(diffs);
  out.sd = diffs.size() > 1 ? std::sqrt(stats::sample_variance(diffs)) : 0.0;
  out.ci_low = stats::quantile(diffs, alpha / 2.0);
  out.ci_high = stats::quantile(diffs, 1.0 - alpha / 2.0);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_pair(std::span<const double> pred, std::span<const double> obs) {
  require(pred.size() == obs.size(), "predictions and observations differ in length");
  require(pred.size() >= 2, "metrics need at least two observations");
  for (std::size_t i = 0; i < pred.size(); ++i)
    require(std::isfinite(pred[i]) && std::isfinite(obs[i]), "metrics need finite values");
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> obs) {
  check_pair(pred, obs);
  double sse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sse += (pred[i] - obs[i]) * (pred[i] - obs[i]);
  return std::sqrt(sse / static_cast<double>(pred.size()));
}

double cv_rmse(std::span<const double> pred, std::span<const double> obs) {
  const double r = rmse(pred, obs);
  const double m = stats::mean(obs);
  if (m == 0.0) fail(ErrorKind::degenerate, "CV(RMSE) is undefined when the mean outcome is 0");
  return r / m;
}

double r2_score(std::span<const double> pred, std::span<const double> obs) {
  check_pair(pred, obs);
  const double m = stats::mean(obs);
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sse += (pred[i] - obs[i]) * (pred[i] - obs[i]);
    sst += (obs[i] - m) * (obs[i] - m);
  }
  return sst > 0.0 ? 1.0 - sse / sst : kNaN;
}

Metrics metrics(std::span<const double> pred, std::span<const double> obs) {
  Metrics out;
  out.rmse = rmse(pred, obs);
  const double m = stats::mean(obs);
  out.cv_rmse = m != 0.0 ? out.rmse / m : kNaN;
  out.r2 = r2_score(pred, obs);
  out.pearson = stats::pearson(pred, obs);
  return out;
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  double n1 = 0.0, n0 = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0.0 || labels[i] == 1.0, "AUC labels must be 0 or 1");
    require(std::isfinite(scores[i]), "AUC scores must be finite");
    (labels[i] == 1.0 ? n1 : n0) += 1.0;
  }
  if (n1 == 0.0 || n0 == 0.0) fail(ErrorKind::degenerate, "AUC needs both classes present");
  const auto ranks = stats::midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1.0) rank_sum += ranks[i];
  return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

// ---------------------------------------------------------------------------

CvModel parse_cv_model(std::string_view text) {
  if (text == "gp") return CvModel::gp;
  if (text == "ols") return CvModel::ols;
  if (text == "logit") return CvModel::logit;
  fail(ErrorKind::invalid_argument, "model must be gp, ols or logit, got '" + std::string(text) + "'");
}

Metric parse_metric(std::string_view text) {
  if (text == "r2") return Metric::r2;
  if (text == "rmse") return Metric::rmse;
  if (text == "cv_rmse") return Metric::cv_rmse;
  if (text == "auc") return Metric::auc;
  if (text == "pearson") return Metric::pearson;
  fail(ErrorKind::invalid_argument, "metric must be r2, rmse, cv_rmse, auc or pearson, got '" + std::string(text) + "'");
}

std::string_view to_string(CvModel m) {
  switch (m) {
    case CvModel::gp: return "gp";
    case CvModel::ols: return "ols";
    case CvModel::logit: return "logit";
  }
  return "";
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::r2: return "r2";
    case Metric::rmse: return "rmse";
    case Metric::cv_rmse: return "cv_rmse";
    case Metric::auc: return "auc";
    case Metric::pearson: return "pearson";
  }
  return "";
}

std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed) {
  require(k >= 2, "K must be at least 2");
  require(n >= static_cast<std::size_t>(k), "K-fold CV needs at least K rows");
  Rng rng = make_rng(seed, 40);
  const auto order = shuffled(n, rng);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

namespace {

double score_metric(Metric metric, std::span<const double> pred, std::span<const double> obs) {
  switch (metric) {
    case Metric::r2: return r2_score(pred, obs);
    case Metric::rmse: return rmse(pred, obs);
    case Metric::cv_rmse: return cv_rmse(pred, obs);
    case Metric::auc: return auc(pred, obs);
    case Metric::pearson: return stats::pearson(pred, obs);
  }
  return kNaN;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace

CvResult kfold_cv(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                  const CvOptions& options) {
  require(x.rows() == y.size(), "covariate rows do not match the outcome length");
  require(names.size() == static_cast<std::size_t>(x.cols()), "covariate names do not match the column count");
  require(options.ci_level > 0.0 && options.ci_level < 1.0, "ci_level must be in (0,1)");
  const auto n = static_cast<std::size_t>(y.size());
  CvResult out;
  out.metric = options.metric.value_or(options.model == CvModel::logit ? Metric::auc : Metric::r2);
  out.fold_of = assign_folds(n, options.k, options.seed);
  out.prediction.assign(n, kNaN);
  const auto k = static_cast<std::size_t>(options.k);
  out.fold_metric.assign(k, kNaN);
  std::vector<std::exception_ptr> errors(k);

  parallel_for(k, options.threads, [&](std::size_t f) {
    try {
      std::vector<Eigen::Index> train, test;
      for (std::size_t i = 0; i < n; ++i)
        (out.fold_of[i] == static_cast<int>(f) ? test : train).push_back(static_cast<Eigen::Index>(i));
      const Eigen::MatrixXd xtr = take_rows(x, train);
      Eigen::VectorXd ytr(static_cast<Eigen::Index>(train.size()));
      for (std::size_t i = 0; i < train.size(); ++i) ytr(static_cast<Eigen::Index>(i)) = y(train[i]);
      std::vector<double> pred, obs;
      auto emit = [&](auto&& predict) {
        for (auto i : test) {
          const Eigen::VectorXd row = x.row(i).transpose();
          const double p = predict(row);
          out.prediction[static_cast<std::size_t>(i)] = p;
          pred.push_back(p);
          obs.push_back(y(i));
        }
      };
      switch (options.model) {
        case CvModel::ols: {
          OlsOptions o;
          o.intercept = options.intercept;
          o.standardize = options.standardize;
          const auto fit = ols_fit(xtr, names, ytr, o);
          emit([&](const Eigen::VectorXd& r) { return fit.predict_linear(r); });
          break;
        }
        case CvModel::logit: {
          LogitOptions o;
          o.intercept = options.intercept;
          o.standardize = options.standardize;
          const auto fit = logit_fit(xtr, names, ytr, o);
          emit([&](const Eigen::VectorXd& r) { return fit.predict_probability(r); });
          break;
        }
        case CvModel::gp: {
          const auto model = gp_train(xtr, ytr, options.gp);
          emit([&](const Eigen::VectorXd& r) { return gp_predict(model, r).mean; });
          break;
        }
      }
      out.fold_metric[f] = score_metric(out.metric, pred, obs);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  });
  for (std::size_t f = 0; f < k; ++f) {
    if (!errors[f]) continue;
    try {
      std::rethrow_exception(errors[f]);
    } catch (const Error& e) {
      fail(e.kind(), "fold " + std::to_string(f + 1) + ": " + e.what());
    }
  }

  out.mean = stats::mean(out.fold_metric);
  out.ci_low = out.ci_high = out.mean;
  if (options.bootstrap > 0) {
    Rng rng = make_rng(options.seed, 41);
    std::vector<double> means(options.bootstrap);
    for (auto& m : means) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += out.fold_metric[uniform_index(rng, k)];
      m = s / static_cast<double>(k);
    }
    const double alpha = 1.0 - options.ci_level;
    out.ci_low = stats::quantile(means, alpha / 2.0);
    out.ci_high = stats::quantile(means, 1.0 - alpha / 2.0);
  }
  return out;
}

}  // namespace laborflow::learn
