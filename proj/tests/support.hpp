#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

// Test-side oracles, independent of the library implementation paths
// they check.
namespace ebml::testing {

// Kolmogorov-Smirnov statistic of observed lifetimes (in rounds)
// against Geometric(p) on {1, 2, ...}.
inline double ks_vs_geometric(std::span<const std::uint64_t> rounds, double p) {
  std::vector<std::uint64_t> sorted(rounds.begin(), rounds.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double k = static_cast<double>(sorted[i]);
    const double cdf_at_k = 1.0 - std::pow(1.0 - p, k);        // P(X <= k)
    const double cdf_below = 1.0 - std::pow(1.0 - p, k - 1.0);  // P(X <= k-1)
    const double emp_lo = static_cast<double>(i) / n;
    const double emp_hi = static_cast<double>(j) / n;
    d = std::max(d, std::abs(emp_hi - cdf_at_k));
    d = std::max(d, std::abs(emp_lo - cdf_below));
    i = j;
  }
  return d;
}

// Critical value at the 1% level (asymptotic, conservative for
// discrete distributions).
inline double ks_critical_1pct(std::size_t n) {
  return 1.628 / std::sqrt(static_cast<double>(n));
}

// Dense augmented least squares: minimizes sum ||W z + b - t||^2 and
// returns [W | b] row-major, solved by Gaussian elimination.
inline std::vector<double> least_squares_affine(
    const std::vector<std::vector<double>>& z, const std::vector<std::vector<double>>& t) {
  const std::size_t n = z.size();
  const std::size_t m = z.front().size();
  const std::size_t d = t.front().size();
  const std::size_t cols = m + 1;
  // Normal equations A x = rhs per output row.
  std::vector<std::vector<double>> a(cols, std::vector<double>(cols, 0.0));
  std::vector<std::vector<double>> rhs(d, std::vector<double>(cols, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> zi(z[i]);
    zi.push_back(1.0);
    for (std::size_t r = 0; r < cols; ++r) {
      for (std::size_t c = 0; c < cols; ++c) a[r][c] += zi[r] * zi[c];
      for (std::size_t o = 0; o < d; ++o) rhs[o][r] += t[i][o] * zi[r];
    }
  }
  std::vector<double> out(d * cols);
  for (std::size_t o = 0; o < d; ++o) {
    auto m2 = a;
    auto b = rhs[o];
    for (std::size_t k = 0; k < cols; ++k) {
      std::size_t piv = k;
      for (std::size_t r = k + 1; r < cols; ++r)
        if (std::abs(m2[r][k]) > std::abs(m2[piv][k])) piv = r;
      std::swap(m2[k], m2[piv]);
      std::swap(b[k], b[piv]);
      for (std::size_t r = k + 1; r < cols; ++r) {
        const double f = m2[r][k] / m2[k][k];
        for (std::size_t c = k; c < cols; ++c) m2[r][c] -= f * m2[k][c];
        b[r] -= f * b[k];
      }
    }
    for (std::size_t k = cols; k-- > 0;) {
      double v = b[k];
      for (std::size_t c = k + 1; c < cols; ++c) v -= m2[k][c] * out[o * cols + c];
      out[o * cols + k] = v / m2[k][k];
    }
  }
  return out;
}

}  // namespace ebml::testing
