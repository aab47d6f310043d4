#pragma once

#include <cmath>
#include <limits>
#include <span>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace fairscope::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Sample variance with the n-1 denominator.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

inline double normalCdf(double z) {
  return boost::math::cdf(boost::math::normal_distribution<>(), z);
}

inline double normalQuantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<>(), p);
}

inline double normalTwoSidedP(double z) {
  if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(z)) return 0.0;
  boost::math::normal_distribution<> n;
  return 2.0 * boost::math::cdf(boost::math::complement(n, std::fabs(z)));
}

inline double tTwoSidedP(double t, double df) {
  if (std::isnan(t) || !(df > 0)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  boost::math::students_t_distribution<> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

}  // namespace fairscope::stats
