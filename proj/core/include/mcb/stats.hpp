#pragma once

#include <span>
#include <vector>

namespace mcb {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile (Wichura's AS 241, double precision).
double normal_quantile(double p);

/// Kolmogorov-Smirnov distance between the sample and the standard normal.
double ks_distance_to_normal(std::vector<double> sample);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares of y on x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> xs);
double sample_variance(std::span<const double> xs);
double median(std::vector<double> xs);

}  // namespace mcb
