#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ebml/energy.hpp"
#include "ebml/errors.hpp"
#include "ebml/langevin.hpp"
#include "ebml/linalg.hpp"

namespace ebml {

// Regular grid over one or two dimensions, at most 512 bins per axis.
struct GridSpec {
  struct Axis {
    double min;
    double max;
    std::size_t bins;
  };
  std::vector<Axis> axes;

  void validate() const {
    if (axes.empty() || axes.size() > 2)
      throw std::invalid_argument("grid supports 1 or 2 dimensions");
    for (const Axis& a : axes) {
      if (!(a.max > a.min)) throw std::invalid_argument("grid axis must have max > min");
      if (a.bins == 0 || a.bins > 512)
        throw std::invalid_argument("grid axis bins must be in [1, 512]");
    }
  }

  std::size_t dim() const { return axes.size(); }

  std::size_t total_cells() const {
    std::size_t n = 1;
    for (const Axis& a : axes) n *= a.bins;
    return n;
  }

  std::vector<double> center(std::size_t cell) const {
    std::vector<double> x(axes.size());
    for (std::size_t d = axes.size(); d-- > 0;) {
      const Axis& a = axes[d];
      const std::size_t idx = cell % a.bins;
      cell /= a.bins;
      const double width = (a.max - a.min) / static_cast<double>(a.bins);
      x[d] = a.min + (static_cast<double>(idx) + 0.5) * width;
    }
    return x;
  }

  // Cell index of a point, or nullopt when outside the grid.
  std::optional<std::size_t> locate(std::span<const double> x) const {
    std::size_t cell = 0;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      const Axis& a = axes[d];
      if (x[d] < a.min || x[d] >= a.max) return std::nullopt;
      const double width = (a.max - a.min) / static_cast<double>(a.bins);
      std::size_t idx = static_cast<std::size_t>((x[d] - a.min) / width);
      if (idx >= a.bins) idx = a.bins - 1;
      cell = cell * a.bins + idx;
    }
    return cell;
  }

  bool operator==(const GridSpec& other) const {
    if (axes.size() != other.axes.size()) return false;
    for (std::size_t d = 0; d < axes.size(); ++d) {
      if (axes[d].min != other.axes[d].min || axes[d].max != other.axes[d].max ||
          axes[d].bins != other.axes[d].bins)
        return false;
    }
    return true;
  }
};

struct GridPmf {
  GridSpec grid;
  std::vector<double> p;  // non-negative, sums to 1
};

// Brute-force steady-state oracle: cell masses proportional to
// exp(-T * U(center)), normalized with log-sum-exp stabilization.
inline GridPmf grid_boltzmann(const EnergyModel& model, const GridSpec& grid,
                              Temperature temp = Temperature{1.0}) {
  grid.validate();
  if (model.dim() != grid.dim()) throw ShapeError("grid dimension mismatch");
  const std::size_t n = grid.total_cells();
  std::vector<double> log_p(n);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    log_p[i] = -temp.value * model.energy(grid.center(i));
    if (log_p[i] > best) best = log_p[i];
  }
  double z = 0.0;
  for (double lp : log_p) z += std::exp(lp - best);
  const double log_z = best + std::log(z);
  GridPmf out{grid, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) out.p[i] = std::exp(log_p[i] - log_z);
  return out;
}

struct EmpiricalPmf {
  GridPmf pmf;                    // normalized over in-grid samples
  double overflow_fraction = 0.0; // fraction of samples outside the grid
  std::size_t total_samples = 0;
};

inline EmpiricalPmf empirical_pmf(const Batch& samples, const GridSpec& grid) {
  grid.validate();
  EmpiricalPmf out{GridPmf{grid, std::vector<double>(grid.total_cells(), 0.0)}, 0.0,
                   samples.size()};
  std::size_t inside = 0;
  for (const auto& x : samples) {
    if (x.size() != grid.dim()) throw ShapeError("sample dimension mismatch");
    if (auto cell = grid.locate(x)) {
      out.pmf.p[*cell] += 1.0;
      ++inside;
    }
  }
  out.overflow_fraction =
      samples.empty() ? 0.0
                      : static_cast<double>(samples.size() - inside) /
                            static_cast<double>(samples.size());
  if (inside > 0) {
    for (double& v : out.pmf.p) v /= static_cast<double>(inside);
  }
  return out;
}

// KL(p || q) with q smoothed by +1e-12 and renormalized. Requires a
// shared grid.
inline double kl_divergence(const GridPmf& p, const GridPmf& q) {
  if (!(p.grid == q.grid)) throw ShapeError("kl_divergence grids differ");
  double qz = 0.0;
  for (double v : q.p) qz += v + 1e-12;
  double kl = 0.0;
  for (std::size_t i = 0; i < p.p.size(); ++i) {
    if (p.p[i] > 0.0) kl += p.p[i] * std::log(p.p[i] * qz / (q.p[i] + 1e-12));
  }
  return kl;
}

// KL over the grid cells plus one synthetic "outside" cell holding
// the overflow mass, against a reference with known outside mass.
// Penalizes chains that park probability off the grid.
inline double kl_with_outside(const EmpiricalPmf& emp, const GridPmf& q,
                              double q_outside_mass) {
  if (!(emp.pmf.grid == q.grid)) throw ShapeError("kl_with_outside grids differ");
  const double p_out = emp.overflow_fraction;
  const double p_in = 1.0 - p_out;
  double qz = q_outside_mass + 1e-12;
  for (double v : q.p) qz += v + 1e-12;
  double kl = 0.0;
  for (std::size_t i = 0; i < emp.pmf.p.size(); ++i) {
    const double pi = emp.pmf.p[i] * p_in;
    if (pi > 0.0) kl += pi * std::log(pi * qz / (q.p[i] + 1e-12));
  }
  if (p_out > 0.0) kl += p_out * std::log(p_out * qz / (q_outside_mass + 1e-12));
  return kl;
}

namespace detail {

// Cyclic Jacobi eigendecomposition for small symmetric matrices.
inline void jacobi_eigen_sym(Matrix a, std::vector<double>& eigvals, Matrix& eigvecs) {
  const std::size_t n = a.rows;
  eigvecs = Matrix::identity(n);
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = eigvecs(k, p), vkq = eigvecs(k, q);
          eigvecs(k, p) = c * vkp - s * vkq;
          eigvecs(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eigvals.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigvals[i] = a(i, i);
}

// Symmetric PSD square root via eigendecomposition; negative
// eigenvalues from roundoff clamp to zero.
inline Matrix sym_sqrt(const Matrix& a) {
  std::vector<double> vals;
  Matrix vecs;
  jacobi_eigen_sym(a, vals, vecs);
  const std::size_t n = a.rows;
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double ev = vals[k] > 0.0 ? std::sqrt(vals[k]) : 0.0;
        acc += vecs(i, k) * ev * vecs(j, k);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double v = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += v * b(k, j);
    }
  return out;
}

struct MomentFit {
  std::vector<double> mean;
  Matrix cov;
};

inline MomentFit fit_moments(const Batch& samples) {
  const std::size_t n = samples.size();
  const std::size_t d = samples.front().size();
  MomentFit fit{std::vector<double>(d, 0.0), Matrix(d, d)};
  for (const auto& x : samples)
    for (std::size_t j = 0; j < d; ++j) fit.mean[j] += x[j];
  for (double& m : fit.mean) m /= static_cast<double>(n);
  for (const auto& x : samples) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = x[i] - fit.mean[i];
      for (std::size_t j = 0; j < d; ++j) fit.cov(i, j) += di * (x[j] - fit.mean[j]);
    }
  }
  for (double& v : fit.cov.data) v /= static_cast<double>(n - 1);
  return fit;
}

}  // namespace detail

// Frechet distance between Gaussian fits of two sample sets:
// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)), computed as
// tr sqrt(sqrt(Sa) Sb sqrt(Sa)) so the root is taken of a symmetric
// matrix. Near-singular covariances are regularized by +1e-6 I and
// the event reported through *regularized.
inline double gaussian_frechet(const Batch& a, const Batch& b, bool* regularized = nullptr) {
  if (a.empty() || b.empty()) throw ShapeError("gaussian_frechet requires samples");
  const std::size_t d = a.front().size();
  if (b.front().size() != d) throw ShapeError("gaussian_frechet dimension mismatch");
  if (a.size() < d + 1 || b.size() < d + 1)
    throw ShapeError("gaussian_frechet requires at least d+1 samples per set");

  detail::MomentFit fa = detail::fit_moments(a);
  detail::MomentFit fb = detail::fit_moments(b);

  bool did_regularize = false;
  auto min_eig = [&](const Matrix& m) {
    std::vector<double> vals;
    Matrix vecs;
    detail::jacobi_eigen_sym(m, vals, vecs);
    return *std::min_element(vals.begin(), vals.end());
  };
  if (min_eig(fa.cov) < 1e-9 || min_eig(fb.cov) < 1e-9) {
    did_regularize = true;
    for (std::size_t i = 0; i < d; ++i) {
      fa.cov(i, i) += 1e-6;
      fb.cov(i, i) += 1e-6;
    }
  }
  if (regularized) *regularized = did_regularize;

  double mean_term = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = fa.mean[j] - fb.mean[j];
    mean_term += diff * diff;
  }
  const Matrix ra = detail::sym_sqrt(fa.cov);
  const Matrix inner = detail::matmul(detail::matmul(ra, fb.cov), ra);
  std::vector<double> vals;
  Matrix vecs;
  detail::jacobi_eigen_sym(inner, vals, vecs);
  double trace_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    trace_term += fa.cov(i, i) + fb.cov(i, i);
    trace_term -= 2.0 * (vals[i] > 0.0 ? std::sqrt(vals[i]) : 0.0);
  }
  const double result = mean_term + trace_term;
  return result > 0.0 ? result : 0.0;
}

// Mean pairwise Euclidean distance; requires at least two samples.
inline double batch_diversity(const Batch& batch) {
  if (batch.size() < 2) throw ShapeError("batch_diversity requires at least 2 samples");
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = i + 1; j < batch.size(); ++j) {
      acc += std::sqrt(squared_distance(batch[i], batch[j]));
      ++pairs;
    }
  }
  return acc / static_cast<double>(pairs);
}

struct SaturationStat {
  double mean_norm = 0.0;
  double out_of_bounds_fraction = 0.0;
};

inline SaturationStat saturation_stat(const Batch& samples,
                                      std::optional<std::pair<double, double>> bounds = {}) {
  SaturationStat out;
  if (samples.empty()) return out;
  std::size_t coords = 0, outside = 0;
  for (const auto& x : samples) {
    out.mean_norm += l2_norm(x);
    for (double v : x) {
      ++coords;
      if (bounds && (v < bounds->first || v > bounds->second)) ++outside;
    }
  }
  out.mean_norm /= static_cast<double>(samples.size());
  if (bounds && coords > 0)
    out.out_of_bounds_fraction = static_cast<double>(outside) / static_cast<double>(coords);
  return out;
}

struct LifetimeStats {
  std::size_t events = 0;
  double mean = 0.0;
  std::map<std::uint64_t, std::size_t> histogram;  // lifetime -> count
};

// Statistics of recorded lifetimes at rejuvenation. Zero events is
// flagged by events == 0.
inline LifetimeStats lifetime_stats(std::span<const std::uint64_t> lifetimes) {
  LifetimeStats out;
  out.events = lifetimes.size();
  for (std::uint64_t v : lifetimes) {
    out.mean += static_cast<double>(v);
    ++out.histogram[v];
  }
  if (out.events > 0) out.mean /= static_cast<double>(out.events);
  return out;
}

}  // namespace ebml
