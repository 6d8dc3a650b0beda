#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ebml/errors.hpp"
#include "ebml/langevin.hpp"
#include "ebml/linalg.hpp"
#include "ebml/rng.hpp"

namespace ebml {

// Bias-corrected Adam over a flattened parameter tree.
class AdamState {
 public:
  AdamState() = default;

  static AdamState like(const FlatConstView& params, double beta1 = 0.9,
                        double beta2 = 0.999, double eps = 1e-8) {
    AdamState s;
    s.beta1_ = beta1;
    s.beta2_ = beta2;
    s.eps_ = eps;
    for (const auto& t : params) {
      s.m_.emplace_back(t.size(), 0.0);
      s.v_.emplace_back(t.size(), 0.0);
    }
    return s;
  }

  void step(const FlatView& params, const FlatConstView& grads, double lr) {
    if (params.size() != grads.size() || params.size() != m_.size())
      throw ShapeError("adam tensor count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k].size() != grads[k].size() || params[k].size() != m_[k].size())
        throw ShapeError("adam tensor shape mismatch");
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        const double g = grads[k][i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        params[k][i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

  std::uint64_t step_count() const { return t_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_step_count(std::uint64_t t) { t_ = t; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

inline void adam_step(AdamState& opt, const FlatView& params, const FlatConstView& grads,
                      double lr) {
  opt.step(params, grads, lr);
}

// Piecewise-constant learning rate: pairs of (rate, first step it
// applies from), steps strictly increasing from 0.
struct AnnealSchedule {
  std::vector<std::pair<double, std::uint64_t>> points;

  static AnnealSchedule constant(double lr) { return AnnealSchedule{{{lr, 0}}}; }

  static AnnealSchedule default_anneal() {
    return AnnealSchedule{
        {{1e-4, 0}, {1e-5, 50000}, {1e-6, 75000}, {1e-7, 100000}, {1e-8, 125000}}};
  }

  void validate() const {
    if (points.empty()) throw std::invalid_argument("empty annealing schedule");
    if (points.front().second != 0)
      throw std::invalid_argument("annealing schedule must start at step 0");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!(points[i].first > 0.0))
        throw std::invalid_argument("annealing rates must be positive");
      if (i > 0 && points[i].second <= points[i - 1].second)
        throw std::invalid_argument("annealing steps must be strictly increasing");
    }
  }
};

inline double lr_at(const AnnealSchedule& schedule, std::uint64_t step) {
  double lr = schedule.points.front().first;
  for (const auto& [rate, from] : schedule.points) {
    if (from <= step) lr = rate;
  }
  return lr;
}

// Global-norm clipping; max_norm of 0 disables.
inline void clip_gradients(const FlatView& grads, double max_norm) {
  if (max_norm < 0.0) throw std::invalid_argument("clip norm must be non-negative");
  if (max_norm == 0.0) return;
  const double norm = flat_norm(const_view(grads));
  if (norm > max_norm) flat_scale(grads, max_norm / norm);
}

// Adds iid N(0, data_epsilon^2) per coordinate.
inline void add_data_noise(Batch& batch, double data_epsilon, CounterRng& rng) {
  if (data_epsilon < 0.0) throw std::invalid_argument("data epsilon must be non-negative");
  if (data_epsilon == 0.0) return;
  for (auto& x : batch)
    for (double& v : x) v += data_epsilon * rng.gaussian();
}

}  // namespace ebml
