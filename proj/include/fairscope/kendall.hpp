#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fairscope/error.hpp"

namespace fairscope {

// Tau-b, or NaN with a reason when undefined (a constant argument).
struct TauResult {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
  std::string reason;
};

namespace detail {

// Counts inversions of v while merge-sorting it in place.
inline std::int64_t mergeCountInversions(std::vector<double>& v, std::vector<double>& buf,
                                         std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = mergeCountInversions(v, buf, lo, mid) + mergeCountInversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

inline std::int64_t tiedPairs(const std::vector<double>& sorted) {
  std::int64_t ties = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      ties += static_cast<std::int64_t>(run) * static_cast<std::int64_t>(run - 1) / 2;
      run = 1;
    }
  }
  return ties;
}

}  // namespace detail

// Kendall tau-b by Knight's O(n log n) algorithm:
// sort by (u, v), count joint ties, then count discordant pairs as the
// inversions of v under a merge sort.
inline TauResult kendallTauB(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DataError("kendall tau needs equal-length vectors");
  const std::size_t n = u.size();
  if (n < 2) throw DataError("kendall tau needs at least two observations");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return u[a] < u[b] || (u[a] == u[b] && v[a] < v[b]);
  });

  std::vector<double> us(n), vs(n);
  for (std::size_t i = 0; i < n; ++i) {
    us[i] = u[order[i]];
    vs[i] = v[order[i]];
  }

  const std::int64_t n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t n1 = detail::tiedPairs(us);

  // pairs tied in both u and v
  std::int64_t n3 = 0;
  {
    std::size_t run = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      if (i < n && us[i] == us[i - 1] && vs[i] == vs[i - 1]) {
        ++run;
      } else {
        n3 += static_cast<std::int64_t>(run) * static_cast<std::int64_t>(run - 1) / 2;
        run = 1;
      }
    }
  }

  std::vector<double> buf(n);
  const std::int64_t swaps = detail::mergeCountInversions(vs, buf, 0, n);
  const std::int64_t n2 = detail::tiedPairs(vs);  // vs is now sorted

  TauResult r;
  if (n0 == n1 || n0 == n2) {
    r.reason = n0 == n1 ? "first argument is constant" : "second argument is constant";
    return r;
  }
  const std::int64_t s = n0 - n1 - n2 + n3 - 2 * swaps;
  r.value = static_cast<double>(s) /
            std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  r.value = std::clamp(r.value, -1.0, 1.0);
  r.defined = true;
  return r;
}

}  // namespace fairscope
