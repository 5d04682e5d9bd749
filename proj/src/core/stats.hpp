// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace laborflow::stats {

double mean(std::span<const double> x);
/// Population variance (divides by n).
double variance(std::span<const double> x);
double sd(std::span<const double> x);
/// Sample variance (divides by n - 1).
double sample_variance(std::span<const double> x);

/// 1-based ranks; ties receive the average of the ranks they span.
std::vector<double> midranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

/// Linear-interpolation quantile (R type 7) of an unsorted sample.
double quantile(std::vector<double> x, double q);

/// Standard score with the population sd. Returns false (and leaves x
/// untouched) when the sd is zero relative to the values' scale.
bool zscore_inplace(std::span<double> x, double* mean_out = nullptr, double* sd_out = nullptr);

double normal_cdf(double z);
double normal_quantile(double p);
double student_t_cdf(double t, double dof);
double student_t_quantile(double p, double dof);

/// Two-sided p-values.
double normal_two_sided_p(double z);
double t_two_sided_p(double t, double dof);

}  // namespace laborflow::stats
