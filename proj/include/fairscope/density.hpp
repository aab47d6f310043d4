#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/table.hpp"

namespace fairscope {

inline constexpr double kDefaultBandwidth = 1.0;

// Gaussian KDE at x over sorted data: (1/(n h)) sum phi((x - x_i)/h).
// Points beyond 10 bandwidths contribute below 1e-22 and are skipped.
inline double kdeAt(std::span<const double> sorted, double h, double x) {
  const double lo = x - 10.0 * h;
  const double hi = x + 10.0 * h;
  auto first = std::lower_bound(sorted.begin(), sorted.end(), lo);
  auto last = std::upper_bound(first, sorted.end(), hi);
  double s = 0.0;
  for (auto it = first; it != last; ++it) {
    const double z = (x - *it) / h;
    s += std::exp(-0.5 * z * z);
  }
  return s / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

struct DensityCurve {
  std::string group;
  std::size_t n = 0;
  std::vector<double> x;
  std::vector<double> density;
};

struct DensityByGroup {
  std::string variable;
  std::string groupVariable;
  double bandwidth = kDefaultBandwidth;
  std::vector<DensityCurve> curves;
};

// Shared grid over the pooled range padded by 3 bandwidths, with spacing of
// at most h/4 so trapezoid integration is accurate.
inline std::vector<double> densityGrid(double lo, double hi, double h) {
  const double a = lo - 3.0 * h;
  const double b = hi + 3.0 * h;
  auto pts = static_cast<std::size_t>(std::ceil((b - a) / (h / 4.0))) + 1;
  pts = std::clamp<std::size_t>(pts, 512, 20000);
  std::vector<double> g(pts);
  for (std::size_t i = 0; i < pts; ++i)
    g[i] = i + 1 == pts ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(pts - 1);
  return g;
}

inline DensityByGroup densityByGroupData(const Table& t, const std::string& cName,
                                         const std::string& sName, double bandwidth = kDefaultBandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw DataError("bandwidth must be positive");
  const auto& values = t.column(cName).numeric();
  const auto& s = t.column(sName).factor();
  DensityByGroup out;
  out.variable = cName;
  out.groupVariable = sName;
  out.bandwidth = bandwidth;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const auto grid = densityGrid(*mn, *mx, bandwidth);
  for (const auto& level : detail::observedLevels(t, sName)) {
    std::vector<double> xs;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (s.label(i) == level) xs.push_back(values[i]);
    if (xs.size() < 2)
      throw DataError("level '" + level + "' of " + sName + " has fewer than two rows");
    std::sort(xs.begin(), xs.end());
    DensityCurve c;
    c.group = level;
    c.n = xs.size();
    c.x = grid;
    c.density.reserve(grid.size());
    for (double g : grid) c.density.push_back(kdeAt(xs, bandwidth, g));
    out.curves.push_back(std::move(c));
  }
  return out;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

}  // namespace fairscope
