#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairscope/fairscope.hpp"

namespace fstest {

using fairscope::Column;
using fairscope::NumericData;
using fairscope::Table;

// Box-Muller on the library's portable uniform source so generated data is
// the same on every platform.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return rng_.uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * rng_.uniform(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_.below(n)); }

  double normal() {
    if (spare_) {
      spare_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = rng_.uniform();
    const double u2 = rng_.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * std::numbers::pi * u2);
    spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::vector<double> normals(std::size_t n, double mean = 0.0, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = mean + sd * normal();
    return v;
  }

 private:
  fairscope::Rng rng_;
  bool spare_ = false;
  double cached_ = 0.0;
};

inline Column num(std::string name, std::vector<double> v) { return Column(std::move(name), NumericData(std::move(v))); }

inline Column fac(std::string name, const std::vector<std::string>& labels) {
  return Column::factor(std::move(name), labels);
}

inline Table table(std::vector<Column> cols) { return Table("t", std::move(cols)); }

inline std::vector<double> toVec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline double maxAbsDiff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace fstest
