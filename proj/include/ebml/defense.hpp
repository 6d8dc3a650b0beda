#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "ebml/energy.hpp"
#include "ebml/errors.hpp"
#include "ebml/langevin.hpp"
#include "ebml/net.hpp"
#include "ebml/rng.hpp"
#include "ebml/toydata.hpp"

namespace ebml {

struct Classifier {
  DenseNet net;  // d -> C logits, C >= 2

  std::size_t num_classes() const { return net.output_dim(); }
  std::vector<double> logits(std::span<const double> x) const { return net.forward(x); }
};

// Deterministic argmax; ties break to the lowest class index.
inline int argmax_class(std::span<const double> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  return best;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double best = logits[0];
  for (double v : logits) best = std::max(best, v);
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - best);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

inline double cross_entropy(std::span<const double> logits, int label) {
  double best = logits[0];
  for (double v : logits) best = std::max(best, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - best);
  return std::log(z) + best - logits[static_cast<std::size_t>(label)];
}

// d(cross entropy)/d(logits) = softmax(logits) - onehot(label).
inline std::vector<double> cross_entropy_grad(std::span<const double> logits, int label) {
  std::vector<double> g = softmax(logits);
  g[static_cast<std::size_t>(label)] -= 1.0;
  return g;
}

// Small dense classifier fit on clean draws by plain full-batch
// gradient descent.
inline Classifier fit_classifier(const ToyDataset& ds,
                                 const std::vector<std::size_t>& hidden,
                                 std::size_t train_samples, std::size_t gd_steps, double lr,
                                 RngKey key) {
  const int classes = ds.num_classes();
  const Batch x = ds.sample(train_samples, key.child(0));
  std::vector<int> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = ds.label(x[i]);

  DenseNet net = DenseNet::random(ds.dim(), hidden, static_cast<std::size_t>(classes),
                                  Activation::kTanh, 1.0, key.child(1));
  NetWorkspace ws;
  const double scale = 1.0 / static_cast<double>(x.size());
  for (std::size_t it = 0; it < gd_steps; ++it) {
    NetGrad grad = net.zero_grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto logits = net.forward(x[i], ws);
      std::vector<double> seed = cross_entropy_grad(logits, y[i]);
      for (double& s : seed) s *= scale;
      net.backward(ws, seed, &grad, {});
    }
    FlatView params = flat_view(net);
    const FlatConstView grads = flat_view(static_cast<const NetGrad&>(grad));
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].size(); ++i)
        params[t][i] -= lr * grads[t][i];
  }
  return Classifier{std::move(net)};
}

struct AttackConfig {
  double epsilon = 8.0 / 255.0;  // l-inf radius
  double alpha = 2.0 / 255.0;    // step size
  std::size_t steps = 50;        // attack rounds N
  std::size_t attack_reps = 8;   // EOT replicates
  bool random_start = true;

  void validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("attack epsilon must be non-negative");
    if (alpha < 0.0 || alpha > epsilon)
      throw std::invalid_argument("attack alpha must lie in [0, epsilon]");
    if (steps == 0) throw std::invalid_argument("attack needs at least one step");
    if (attack_reps == 0) throw std::invalid_argument("attack needs at least one replicate");
  }
};

struct DefenseConfig {
  std::size_t langevin_steps = 1500;  // purification chain length
  std::size_t defense_reps = 128;     // ensemble replicates
  double langevin_epsilon = 1e-2;
  double temperature = 1e-4;

  void validate() const {
    if (defense_reps == 0) throw std::invalid_argument("defense needs at least one replicate");
    if (!(langevin_epsilon > 0.0))
      throw std::invalid_argument("purification step size must be positive");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  }
};

struct DefenseRecord {
  std::vector<std::uint8_t> robust_bits;      // D_i, initialized to one
  std::vector<std::uint8_t> natural_correct;
  std::vector<int> natural_pred;
  std::vector<int> first_break_step;          // attack round of first confirmed break, -1 if none
  double natural_accuracy = 0.0;
  double robust_accuracy = 0.0;
};

// One stochastic realization of the K-step purification chain per
// input; K = 0 is the identity.
inline Batch purify(const EnergyModel& ebm, const Batch& x, std::size_t k,
                    const DefenseConfig& cfg, RngKey key) {
  if (k == 0) return x;
  LangevinConfig lcfg;
  lcfg.step_size = cfg.langevin_epsilon;
  lcfg.num_steps = k;
  lcfg.temperature = Temperature{cfg.temperature};
  lcfg.noise_key = key;
  return final_states(langevin_run(ebm, x, lcfg));
}

// Mean logits over H iid purifications.
inline std::vector<double> ensemble_predict(const Classifier& f, const EnergyModel& ebm,
                                            std::span<const double> x, std::size_t h,
                                            const DefenseConfig& cfg, RngKey key) {
  if (h == 0) throw std::invalid_argument("ensemble needs at least one replicate");
  // Zero-step purification makes every replicate the input itself;
  // skip the average so the degeneration is exact.
  if (cfg.langevin_steps == 0) return f.logits(x);
  Batch replicas(h, std::vector<double>(x.begin(), x.end()));
  const Batch purified = purify(ebm, replicas, cfg.langevin_steps, cfg, key);
  std::vector<double> mean(f.num_classes(), 0.0);
  for (const auto& xp : purified) {
    const auto logits = f.logits(xp);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += logits[c];
  }
  for (double& v : mean) v /= static_cast<double>(h);
  return mean;
}

// Attack gradient: cross-entropy of the replicate-averaged logits,
// differentiated at each purified point and averaged, with the
// purification treated as identity in the backward pass. No gradient
// flows through the Langevin transformation.
inline std::vector<double> bpda_eot_gradient(const Classifier& f, const EnergyModel& ebm,
                                             std::span<const double> x, int label,
                                             std::size_t h_adv, const AttackConfig& attack,
                                             const DefenseConfig& defense, RngKey key) {
  (void)attack;
  if (h_adv == 0) throw std::invalid_argument("attack needs at least one replicate");
  if (defense.langevin_steps == 0) {
    NetWorkspace ws;
    const auto logits = f.net.forward(x, ws);
    std::vector<double> grad(x.size());
    f.net.backward(ws, cross_entropy_grad(logits, label), nullptr, grad);
    return grad;
  }
  Batch replicas(h_adv, std::vector<double>(x.begin(), x.end()));
  const Batch purified = purify(ebm, replicas, defense.langevin_steps, defense, key);

  std::vector<double> mean(f.num_classes(), 0.0);
  std::vector<NetWorkspace> ws(h_adv);
  for (std::size_t i = 0; i < h_adv; ++i) {
    const auto logits = f.net.forward(purified[i], ws[i]);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += logits[c];
  }
  for (double& v : mean) v /= static_cast<double>(h_adv);

  const std::vector<double> seed = cross_entropy_grad(mean, label);
  std::vector<double> grad(x.size(), 0.0);
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < h_adv; ++i) {
    f.net.backward(ws[i], seed, nullptr, g);
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += g[j];
  }
  for (double& v : grad) v /= static_cast<double>(h_adv);
  return grad;
}

// Signed step projected back into the l-inf ball around the original
// point, then into the data hypercube when the dataset declares one.
inline std::vector<double> pgd_step(std::span<const double> x_adv,
                                    std::span<const double> grad,
                                    std::span<const double> x_orig, double epsilon,
                                    double alpha,
                                    std::optional<std::pair<double, double>> bounds = {}) {
  if (x_adv.size() != grad.size() || x_adv.size() != x_orig.size())
    throw ShapeError("pgd_step dimension mismatch");
  std::vector<double> out(x_adv.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double sign = grad[j] > 0.0 ? 1.0 : (grad[j] < 0.0 ? -1.0 : 0.0);
    double v = x_adv[j] + alpha * sign;
    v = std::clamp(v, x_orig[j] - epsilon, x_orig[j] + epsilon);
    if (bounds) v = std::clamp(v, bounds->first, bounds->second);
    out[j] = v;
  }
  return out;
}

// Full evaluation loop. Per example: random start inside the l-inf
// ball, then N rounds of (attack-replicate prediction and gradient;
// on a miss, confirmation with the defense-replicate ensemble; PGD
// step). The attack prediction and its gradient share one replicate
// set; the confirmation draws a fresh, larger one. Examples own
// disjoint RNG subtrees keyed by their index, so results are
// order-independent and safe to compute concurrently.
inline DefenseRecord evaluate_defense(const Batch& examples, const std::vector<int>& labels,
                                      const Classifier& f, const EnergyModel& ebm,
                                      const AttackConfig& attack, const DefenseConfig& defense,
                                      RngKey key,
                                      std::optional<std::pair<double, double>> bounds = {},
                                      bool parallel = true) {
  attack.validate();
  defense.validate();
  if (examples.size() != labels.size()) throw ShapeError("examples/labels size mismatch");
  const std::size_t m = examples.size();

  DefenseRecord rec;
  rec.robust_bits.assign(m, 1);
  rec.natural_correct.assign(m, 0);
  rec.natural_pred.assign(m, -1);
  rec.first_break_step.assign(m, -1);

  auto evaluate_one = [&](std::size_t i) {
    const RngKey ekey = key.child(streams::kDefense).child(i);
    const auto& x = examples[i];
    const int y = labels[i];

    const auto natural_logits =
        ensemble_predict(f, ebm, x, defense.defense_reps, defense, ekey.child(0));
    rec.natural_pred[i] = argmax_class(natural_logits);
    rec.natural_correct[i] = rec.natural_pred[i] == y ? 1 : 0;

    std::vector<double> x_adv(x.begin(), x.end());
    if (attack.random_start && attack.epsilon > 0.0) {
      CounterRng rng(ekey.child(1));
      for (double& v : x_adv)
        v += attack.epsilon * (2.0 * rng.uniform() - 1.0);
      if (bounds)
        for (double& v : x_adv) v = std::clamp(v, bounds->first, bounds->second);
    }

    for (std::size_t j = 1; j <= attack.steps; ++j) {
      const RngKey round_key = ekey.child(2).child(j);
      // One replicate set serves both the attack prediction and its
      // gradient; purification is deterministic in the key, so this
      // equals separate ensemble_predict / bpda_eot_gradient calls.
      int c_j;
      std::vector<double> grad(x.size(), 0.0);
      if (defense.langevin_steps == 0) {
        NetWorkspace ws;
        const auto logits = f.net.forward(x_adv, ws);
        c_j = argmax_class(logits);
        f.net.backward(ws, cross_entropy_grad(logits, y), nullptr, grad);
      } else {
        Batch replicas(attack.attack_reps, x_adv);
        const Batch purified =
            purify(ebm, replicas, defense.langevin_steps, defense, round_key.child(0));
        std::vector<double> mean(f.num_classes(), 0.0);
        std::vector<NetWorkspace> ws(attack.attack_reps);
        for (std::size_t h = 0; h < attack.attack_reps; ++h) {
          const auto logits = f.net.forward(purified[h], ws[h]);
          for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += logits[c];
        }
        for (double& v : mean) v /= static_cast<double>(attack.attack_reps);
        c_j = argmax_class(mean);
        const std::vector<double> seed = cross_entropy_grad(mean, y);
        std::vector<double> g(x.size());
        for (std::size_t h = 0; h < attack.attack_reps; ++h) {
          f.net.backward(ws[h], seed, nullptr, g);
          for (std::size_t q = 0; q < grad.size(); ++q) grad[q] += g[q];
        }
        for (double& v : grad) v /= static_cast<double>(attack.attack_reps);
      }
      if (c_j != y) {
        const auto confirm_logits = ensemble_predict(f, ebm, x_adv, defense.defense_reps,
                                                     defense, round_key.child(1));
        if (argmax_class(confirm_logits) != y && rec.robust_bits[i] == 1) {
          rec.robust_bits[i] = 0;
          rec.first_break_step[i] = static_cast<int>(j);
        }
      }
      x_adv = pgd_step(x_adv, grad, x, attack.epsilon, attack.alpha, bounds);
    }
  };

  const unsigned hw = std::thread::hardware_concurrency();
  if (!parallel || hw < 2 || m < 4) {
    for (std::size_t i = 0; i < m; ++i) evaluate_one(i);
  } else {
    const std::size_t num_threads = std::min<std::size_t>(hw, m);
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex mu;
    for (std::size_t t = 0; t < num_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < m; i += num_threads) evaluate_one(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  double nat = 0.0, rob = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    nat += rec.natural_correct[i];
    rob += rec.robust_bits[i];
  }
  rec.natural_accuracy = nat / static_cast<double>(m);
  rec.robust_accuracy = rob / static_cast<double>(m);
  return rec;
}

}  // namespace ebml
