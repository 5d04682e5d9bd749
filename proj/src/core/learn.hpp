// SPDX-License-Identifier: Apache-2.0
//
// Self-organizing maps, Gaussian-process (kriging) regression, OLS and logit
// fits with simulation-based quantities of interest, k-fold
// cross-validation and prediction metrics.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace laborflow::learn {

// ---------------------------------------------------------------------------
// Self-organizing map

struct SomOptions {
  int width = 4;
  int height = 4;
  int epochs = 100;
  double alpha_start = 0.05;
  double alpha_end = 0.01;
  std::optional<double> radius_start;  // default max(width, height) / 2
  double radius_end = 1.0;

  void validate() const;
};

struct SomGrid {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd codebooks;  // units x dim; unit u sits at (u % width, u / width)
  std::vector<double> quantization_error;  // mean BMU distance after each epoch
  bool trained = false;

  int units() const { return width * height; }
};

/// Codebooks start at seeded random samples; every epoch visits the data in
/// a seeded shuffled order. Learning rate and radius fall linearly over all
/// updates.
SomGrid som_train(const Eigen::MatrixXd& data, const SomOptions& options, std::uint64_t seed);

/// Best-matching unit; ties go to the lowest index.
int som_map(const SomGrid& grid, const Eigen::VectorXd& x);
double som_quantization_error(const SomGrid& grid, const Eigen::MatrixXd& data);

// ---------------------------------------------------------------------------
// Gaussian process

enum class GpBasis { constant, linear };

struct GpOptions {
  GpBasis basis = GpBasis::constant;
  std::optional<std::vector<double>> theta;  // fixed length-scale weights
  double nugget = 1e-10;
  double max_nugget = 1e-4;
};

struct GpModel {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  GpBasis basis = GpBasis::constant;
  Eigen::VectorXd theta;
  double nugget = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;           // R^-1 (y - F beta)
  Eigen::MatrixXd rinv_f;          // R^-1 F
  Eigen::MatrixXd ft_rinv_f_inv;   // (F^T R^-1 F)^-1
  double sigma2 = 0.0;
  double log_likelihood = 0.0;     // concentrated

  Eigen::Index dim() const { return x.cols(); }
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

Eigen::VectorXd gp_basis_row(GpBasis basis, const Eigen::VectorXd& x);

/// R_ij = exp(-sum_k theta_k (x_ik - x_jk)^2). On factorization failure the
/// nugget escalates x10 (from 1e-10 when it starts at 0) up to max_nugget.
GpModel gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
               const GpOptions& options = {});
GpPrediction gp_predict(const GpModel& model, const Eigen::VectorXd& x);

/// Concentrated-likelihood search over a coarse log grid scaled by each
/// input's spread: an isotropic pass, then one coordinate sweep.
Eigen::VectorXd gp_select_theta(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpOptions& options = {});

/// Uses options.theta when set, otherwise gp_select_theta.
GpModel gp_train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpOptions& options = {});

// ---------------------------------------------------------------------------
// Linear and logistic regression

struct OlsOptions {
  bool intercept = true;
  bool standardize = false;
  std::optional<Eigen::VectorXd> weights;
};

enum class FitKind { ols, logit };

struct FitSummary {
  FitKind kind = FitKind::ols;
  std::vector<std::string> names;  // includes "(Intercept)" when fitted
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::VectorXd stat;     // t (ols) or z (logit)
  Eigen::VectorXd p_value;
  Eigen::MatrixXd covariance;
  double r2 = 0.0;          // McFadden pseudo-R2 for logit
  double adj_r2 = 0.0;
  double bic = 0.0;
  double rss = 0.0;
  double sigma2 = 0.0;
  double log_likelihood = 0.0;
  double deviance = 0.0;
  std::size_t n = 0;
  std::size_t dof = 0;
  int iterations = 0;
  bool intercept = true;
  bool standardized = false;
  bool weighted = false;
  Eigen::VectorXd x_mean;  // standardization applied to the covariates
  Eigen::VectorXd x_sd;

  std::size_t params() const { return static_cast<std::size_t>(coef.size()); }
  /// Design row for raw covariate values (adds the intercept and applies
  /// the stored standardization).
  Eigen::VectorXd design_row(const Eigen::VectorXd& raw) const;
  double predict_linear(const Eigen::VectorXd& raw) const;
  double predict_probability(const Eigen::VectorXd& raw) const;
};

FitSummary ols_fit(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                   const OlsOptions& options = {});

struct LogitOptions {
  bool intercept = true;
  bool standardize = false;
  double tolerance = 1e-8;
  int max_iterations = 100;
};

FitSummary logit_fit(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                     const LogitOptions& options = {});

struct SimulationOptions {
  std::size_t n_sims = 10000;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  unsigned threads = 1;
};

struct LogitSimulation {
  double expected_y = 0.0;  // mean of the simulated outcomes
  double mean_pi = 0.0;
  double ci_low = 0.0;      // percentile interval of the simulated pi
  double ci_high = 0.0;
};

/// beta~ ~ N(beta, V); pi~ = logistic(x beta~); y~ ~ Bernoulli(pi~).
LogitSimulation logit_simulate(const FitSummary& fit, const Eigen::VectorXd& scenario,
                               const SimulationOptions& options = {});

struct FirstDifference {
  double estimate = 0.0;  // mean simulated difference
  double sd = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Distribution of E[y | hi] - E[y | lo] under coefficient draws.
FirstDifference first_differences(const FitSummary& fit, const Eigen::VectorXd& scenario_lo,
                                  const Eigen::VectorXd& scenario_hi, const SimulationOptions& options = {});

/// Symmetric square root of a covariance matrix via its eigen
/// decomposition; tolerates exact zeros, rejects negative eigenvalues.
Eigen::MatrixXd covariance_sqrt(const Eigen::MatrixXd& cov);

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  double rmse = 0.0;
  double cv_rmse = 0.0;  // NaN when mean(obs) == 0
  double r2 = 0.0;       // 1 - SSE/SST, SST centered on mean(obs)
  double pearson = 0.0;
};

Metrics metrics(std::span<const double> pred, std::span<const double> obs);
double rmse(std::span<const double> pred, std::span<const double> obs);
double cv_rmse(std::span<const double> pred, std::span<const double> obs);
double r2_score(std::span<const double> pred, std::span<const double> obs);
/// Mann-Whitney statistic with midranks; labels must be 0/1.
double auc(std::span<const double> scores, std::span<const double> labels);

// ---------------------------------------------------------------------------
// Cross-validation

enum class CvModel { gp, ols, logit };
enum class Metric { r2, rmse, cv_rmse, auc, pearson };

CvModel parse_cv_model(std::string_view text);
Metric parse_metric(std::string_view text);
std::string_view to_string(CvModel m);
std::string_view to_string(Metric m);

struct CvOptions {
  CvModel model = CvModel::ols;
  int k = 5;
  std::uint64_t seed = 0;
  std::optional<Metric> metric;  // default: auc for logit, r2 otherwise
  std::size_t bootstrap = 1000;
  double ci_level = 0.95;
  unsigned threads = 1;
  GpOptions gp;
  bool intercept = true;
  bool standardize = false;
};

struct CvResult {
  Metric metric = Metric::r2;
  std::vector<double> fold_metric;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<int> fold_of;        // per row
  std::vector<double> prediction;  // out-of-fold
};

/// Seeded permutation dealt round-robin into K folds.
std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed);

CvResult kfold_cv(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const Eigen::VectorXd& y,
                  const CvOptions& options);

}  // namespace laborflow::learn
