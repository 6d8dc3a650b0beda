#pragma once

#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ebml/energy.hpp"
#include "ebml/errors.hpp"
#include "ebml/rng.hpp"

namespace ebml {

using Batch = std::vector<std::vector<double>>;

struct LangevinConfig {
  double step_size = 1e-2;          // eta > 0
  std::size_t num_steps = 100;      // K >= 0
  Temperature temperature{1.0};
  std::size_t record_every = 0;     // 0 = keep endpoints only
  RngKey noise_key;                 // per-run stream root
  bool drift_only = false;          // test hook: suppress the noise term

  void validate() const {
    if (!(step_size > 0.0)) throw std::invalid_argument("langevin step size must be positive");
  }
};

struct Trajectory {
  std::vector<double> final_state;
  std::vector<std::vector<double>> recorded_states;
  std::vector<double> recorded_energies;
  std::size_t steps_taken = 0;
};

// One transition: x - (eta^2 / 2) * T * grad U(x) + eta * z with
// z ~ N(0, I) drawn from rng. No clamping; boundedness, when wanted,
// is the energy's job (Gaussian prior term).
inline void langevin_step(const EnergyModel& model, std::span<double> x, double eta,
                          Temperature temp, CounterRng& rng, bool drift_only = false) {
  thread_local std::vector<double> grad;
  grad.resize(x.size());
  model.energy_grad_x(x, grad);
  const double drift = 0.5 * eta * eta * temp.value;
  if (drift_only) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= drift * grad[i];
  } else {
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] += -drift * grad[i] + eta * rng.gaussian();
  }
  if (!all_finite(x)) throw NumericError("langevin step produced a non-finite state");
}

namespace detail {

// Noise for (chain, step) comes from its own derived stream, so a
// trajectory depends only on (noise_key, chain_id) and chains can be
// advanced in any order or in parallel.
inline Trajectory run_chain(const EnergyModel& model, std::vector<double> x,
                            const LangevinConfig& cfg, std::uint64_t chain_id) {
  Trajectory traj;
  const RngKey chain_key = cfg.noise_key.child(chain_id);
  if (cfg.record_every > 0) {
    traj.recorded_states.push_back(x);
    traj.recorded_energies.push_back(model.energy(x));
  }
  for (std::size_t k = 0; k < cfg.num_steps; ++k) {
    CounterRng rng(chain_key.child(k));
    langevin_step(model, x, cfg.step_size, cfg.temperature, rng, cfg.drift_only);
    if (cfg.record_every > 0 && (k + 1) % cfg.record_every == 0) {
      traj.recorded_states.push_back(x);
      traj.recorded_energies.push_back(model.energy(x));
    }
  }
  traj.steps_taken = cfg.num_steps;
  traj.final_state = std::move(x);
  return traj;
}

}  // namespace detail

// Runs an independent chain from every row of x0. chain_ids, when
// given, name the noise stream of each slot (defaults to the batch
// position); permuting inputs together with their ids permutes the
// outputs identically.
inline std::vector<Trajectory> langevin_run(const EnergyModel& model, const Batch& x0,
                                            const LangevinConfig& cfg,
                                            std::span<const std::uint64_t> chain_ids = {}) {
  cfg.validate();
  if (x0.empty()) throw ShapeError("langevin_run requires a non-empty batch");
  if (!chain_ids.empty() && chain_ids.size() != x0.size())
    throw ShapeError("chain id count must match batch size");

  const std::size_t n = x0.size();
  std::vector<Trajectory> out(n);

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint64_t id = chain_ids.empty() ? i : chain_ids[i];
      try {
        out[i] = detail::run_chain(model, x0[i], cfg, id);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (chain " + std::to_string(i) + ")");
      }
    }
  };

  const std::size_t work = n * cfg.num_steps * (model.dim() + 1);
  const unsigned hw = std::thread::hardware_concurrency();
  if (work < 1u << 22 || hw < 2 || n < 2) {
    run_range(0, n);
    return out;
  }

  const std::size_t num_threads = std::min<std::size_t>(hw, n);
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (std::size_t t = 0; t < num_threads; ++t) {
    const std::size_t lo = n * t / num_threads;
    const std::size_t hi = n * (t + 1) / num_threads;
    pool.emplace_back([&, lo, hi] {
      try {
        run_range(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline Batch final_states(const std::vector<Trajectory>& trajs) {
  Batch out;
  out.reserve(trajs.size());
  for (const Trajectory& t : trajs) out.push_back(t.final_state);
  return out;
}

}  // namespace ebml
