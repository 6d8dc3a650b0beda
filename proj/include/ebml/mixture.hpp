#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "ebml/errors.hpp"
#include "ebml/linalg.hpp"
#include "ebml/rng.hpp"

namespace ebml {

// Gaussian mixture with diagonal covariances. Weights are positive
// and sum to one; used both as a toy data density and, negated in
// log, as an analytic energy.
class GaussianMixture {
 public:
  struct Component {
    std::vector<double> mean;
    std::vector<double> var;  // per-coordinate variance, > 0
  };

  GaussianMixture(std::vector<double> weights, std::vector<Component> components)
      : weights_(std::move(weights)), components_(std::move(components)) {
    if (weights_.empty() || weights_.size() != components_.size())
      throw ShapeError("mixture weights/components mismatch");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0)) throw std::invalid_argument("mixture weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("mixture weights must sum to 1");
    const std::size_t d = components_.front().mean.size();
    for (const Component& c : components_) {
      if (c.mean.size() != d || c.var.size() != d)
        throw ShapeError("mixture component dimension mismatch");
      for (double v : c.var) {
        if (!(v > 0.0)) throw std::invalid_argument("mixture variances must be positive");
      }
    }
    log_weights_.reserve(weights_.size());
    for (double w : weights_) log_weights_.push_back(std::log(w));
  }

  // Equal-weight isotropic helper.
  static GaussianMixture isotropic(const std::vector<std::vector<double>>& means,
                                   double sigma) {
    std::vector<double> w(means.size(), 1.0 / static_cast<double>(means.size()));
    std::vector<Component> comps;
    for (const auto& m : means)
      comps.push_back({m, std::vector<double>(m.size(), sigma * sigma)});
    return GaussianMixture(std::move(w), std::move(comps));
  }

  std::size_t dim() const { return components_.front().mean.size(); }
  std::size_t num_components() const { return components_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Component>& components() const { return components_; }

  double log_component_density(std::size_t k, std::span<const double> x) const {
    const Component& c = components_[k];
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - c.mean[j];
      acc += d * d / c.var[j] + std::log(2.0 * std::numbers::pi * c.var[j]);
    }
    return -0.5 * acc;
  }

  double log_density(std::span<const double> x) const {
    double best = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> terms;
    terms.resize(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) {
      terms[k] = log_weights_[k] + log_component_density(k, x);
      if (terms[k] > best) best = terms[k];
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
  }

  // d/dx log q(x) = sum_k r_k(x) * (mu_k - x) / var_k with softmax
  // responsibilities r_k.
  void log_density_grad(std::span<const double> x, std::span<double> out) const {
    thread_local std::vector<double> terms;
    terms.resize(components_.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < components_.size(); ++k) {
      terms[k] = log_weights_[k] + log_component_density(k, x);
      if (terms[k] > best) best = terms[k];
    }
    double z = 0.0;
    for (double& t : terms) {
      t = std::exp(t - best);
      z += t;
    }
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const double r = terms[k] / z;
      const Component& c = components_[k];
      for (std::size_t j = 0; j < out.size(); ++j)
        out[j] += r * (c.mean[j] - x[j]) / c.var[j];
    }
  }

  void sample(CounterRng& rng, std::span<double> out) const {
    const double u = rng.uniform();
    std::size_t k = 0;
    double cum = 0.0;
    for (; k + 1 < weights_.size(); ++k) {
      cum += weights_[k];
      if (u < cum) break;
    }
    const Component& c = components_[k];
    for (std::size_t j = 0; j < out.size(); ++j)
      out[j] = c.mean[j] + std::sqrt(c.var[j]) * rng.gaussian();
  }

  std::size_t nearest_component(std::span<const double> x) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const double d = squared_distance(x, components_[k].mean);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  }

  // Exact probability mass inside an axis-aligned box.
  double box_mass(std::span<const double> lo, std::span<const double> hi) const {
    auto ncdf = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
    double total = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const Component& c = components_[k];
      double m = 1.0;
      for (std::size_t j = 0; j < lo.size(); ++j) {
        const double sd = std::sqrt(c.var[j]);
        m *= ncdf((hi[j] - c.mean[j]) / sd) - ncdf((lo[j] - c.mean[j]) / sd);
      }
      total += weights_[k] * m;
    }
    return total;
  }

 private:
  std::vector<double> weights_;
  std::vector<Component> components_;
  std::vector<double> log_weights_;
};

}  // namespace ebml
