#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rwre::stats {

struct MeanSe {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Sample mean and standard error of the mean (n-1 variance).
MeanSe mean_se(std::span<const double> xs);

/// Batch-means estimate: the sample is cut into `batches` contiguous batches
/// (in index order) and the standard error is taken across batch means.
MeanSe batch_means(std::span<const double> xs, std::size_t batches);

double variance(std::span<const double> xs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_std_error = 0.0;
};

/// Ordinary least squares y ~ a + b x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Lag-1 sample autocorrelation.
double lag1_autocorrelation(std::span<const double> xs);

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

double normal_quantile(double p);
double normal_cdf(double x);

/// Two-sided Student-t critical value t_{1-(1-level)/2, dof}.
double t_critical(double level, std::size_t dof);

}  // namespace rwre::stats
