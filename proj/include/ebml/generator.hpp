#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ebml/errors.hpp"
#include "ebml/langevin.hpp"
#include "ebml/linalg.hpp"
#include "ebml/net.hpp"
#include "ebml/rng.hpp"

namespace ebml {

struct RecenterParams {
  std::vector<double> gamma;
  std::vector<double> beta;
};

struct RecenterGrad {
  std::vector<double> gamma;
  std::vector<double> beta;
};

// Gradients for every generator parameter.
struct GenGrad {
  NetGrad net;
  std::vector<RecenterGrad> recenter;
};

// Latent-to-sample map g(z) with a standard normal latent prior.
// Optionally recenters each hidden activation by its batch mean and
// applies a learned per-feature affine map; the recentered output of
// a sample then depends on the batch it was evaluated in. Latents are
// never sampled or refined here: reconstruction targets are treated
// as constants (straight-through), so no gradient flows into targets
// or latents.
class Generator {
 public:
  Generator() = default;

  explicit Generator(DenseNet net, bool recenter = false)
      : net_(std::move(net)), recenter_(recenter) {
    if (recenter_) {
      const auto& layers = net_.layers();
      recenter_params_.resize(layers.size() > 0 ? layers.size() - 1 : 0);
      for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        recenter_params_[l].gamma.assign(layers[l].w.rows, 1.0);
        recenter_params_[l].beta.assign(layers[l].w.rows, 0.0);
      }
    }
  }

  static Generator random(std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                          std::size_t output_dim, double init_scale, RngKey key,
                          bool recenter = false) {
    return Generator(DenseNet::random(latent_dim, hidden, output_dim, Activation::kTanh,
                                      init_scale, key),
                     recenter);
  }

  std::size_t latent_dim() const { return net_.input_dim(); }
  std::size_t output_dim() const { return net_.output_dim(); }
  bool recenter() const { return recenter_; }
  const DenseNet& net() const { return net_; }
  DenseNet& net() { return net_; }
  std::vector<RecenterParams>& recenter_params() { return recenter_params_; }
  const std::vector<RecenterParams>& recenter_params() const { return recenter_params_; }

  Batch sample_latents(std::size_t n, RngKey key) const {
    Batch z(n, std::vector<double>(latent_dim()));
    for (std::size_t i = 0; i < n; ++i) {
      CounterRng rng(key.child(i));
      rng.fill_gaussian(z[i]);
    }
    return z;
  }

  Batch generate(const Batch& z) const {
    Cache cache;
    return forward_cached(z, cache);
  }

  // Mean squared reconstruction error over an aligned batch.
  double cooperative_loss(const Batch& z, const Batch& targets) const {
    const Batch out = generate(z);
    check_targets(out, targets);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      acc += squared_distance(out[i], targets[i]);
    return acc / static_cast<double>(out.size());
  }

  // Gradient of cooperative_loss with respect to the generator
  // parameters only.
  GenGrad cooperative_grad(const Batch& z, const Batch& targets) const {
    Cache cache;
    const Batch out = forward_cached(z, cache);
    check_targets(out, targets);
    const double scale = 2.0 / static_cast<double>(out.size());
    Batch seeds(out.size(), std::vector<double>(output_dim()));
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = 0; j < output_dim(); ++j)
        seeds[i][j] = scale * (out[i][j] - targets[i][j]);
    GenGrad grads = zero_grad();
    backward_cached(cache, seeds, grads);
    return grads;
  }

  GenGrad zero_grad() const {
    GenGrad g;
    g.net = net_.zero_grad();
    g.recenter.resize(recenter_params_.size());
    for (std::size_t l = 0; l < recenter_params_.size(); ++l) {
      g.recenter[l].gamma.assign(recenter_params_[l].gamma.size(), 0.0);
      g.recenter[l].beta.assign(recenter_params_[l].beta.size(), 0.0);
    }
    return g;
  }

  FlatView flat_params() {
    FlatView v = flat_view(net_);
    for (auto& r : recenter_params_) {
      v.emplace_back(r.gamma);
      v.emplace_back(r.beta);
    }
    return v;
  }

 private:
  struct Cache {
    // Per layer: input batch, activation output batch (before any
    // recentering), and the batch mean used for recentering.
    std::vector<Batch> inputs;
    std::vector<Batch> activated;
    std::vector<std::vector<double>> means;
    std::size_t batch = 0;
  };

  void check_targets(const Batch& out, const Batch& targets) const {
    if (targets.size() != out.size())
      throw ShapeError("cooperative batch size mismatch");
    for (const auto& t : targets) {
      if (t.size() != output_dim()) throw ShapeError("cooperative target dimension mismatch");
    }
  }

  Batch forward_cached(const Batch& z, Cache& cache) const {
    if (z.empty()) throw ShapeError("generator requires a non-empty batch");
    for (const auto& zi : z) {
      if (zi.size() != latent_dim()) throw ShapeError("latent dimension mismatch");
      if (!all_finite(zi)) throw NumericError("non-finite latent");
    }
    const auto& layers = net_.layers();
    cache.batch = z.size();
    cache.inputs.assign(layers.size(), {});
    cache.activated.assign(layers.size(), {});
    cache.means.assign(layers.size(), {});

    Batch h = z;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& layer = layers[l];
      cache.inputs[l] = h;
      Batch out(h.size(), std::vector<double>(layer.w.rows));
      for (std::size_t i = 0; i < h.size(); ++i) {
        matvec(layer.w, h[i], out[i]);
        for (std::size_t j = 0; j < out[i].size(); ++j) {
          out[i][j] += layer.b[j];
          switch (layer.act) {
            case Activation::kIdentity: break;
            case Activation::kLeakyRelu:
              if (out[i][j] < 0.0) out[i][j] *= layer.leak;
              break;
            case Activation::kTanh: out[i][j] = std::tanh(out[i][j]); break;
          }
        }
      }
      cache.activated[l] = out;
      const bool hidden = l + 1 < layers.size();
      if (recenter_ && hidden) {
        std::vector<double> mean(layer.w.rows, 0.0);
        for (const auto& row : out)
          for (std::size_t j = 0; j < row.size(); ++j) mean[j] += row[j];
        for (double& m : mean) m /= static_cast<double>(out.size());
        cache.means[l] = mean;
        const RecenterParams& rp = recenter_params_[l];
        for (auto& row : out)
          for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = rp.gamma[j] * (row[j] - mean[j]) + rp.beta[j];
      }
      h = std::move(out);
    }
    return h;
  }

  void backward_cached(const Cache& cache, Batch seeds, GenGrad& grads) const {
    const auto& layers = net_.layers();
    for (std::size_t li = layers.size(); li-- > 0;) {
      const Layer& layer = layers[li];
      const bool hidden = li + 1 < layers.size();
      if (recenter_ && hidden) {
        const RecenterParams& rp = recenter_params_[li];
        RecenterGrad& rg = grads.recenter[li];
        std::vector<double> seed_mean(layer.w.rows, 0.0);
        for (const auto& s : seeds)
          for (std::size_t j = 0; j < s.size(); ++j) seed_mean[j] += s[j];
        for (double& m : seed_mean) m /= static_cast<double>(seeds.size());
        for (std::size_t i = 0; i < seeds.size(); ++i) {
          for (std::size_t j = 0; j < seeds[i].size(); ++j) {
            rg.gamma[j] += seeds[i][j] * (cache.activated[li][i][j] - cache.means[li][j]);
            rg.beta[j] += seeds[i][j];
            seeds[i][j] = rp.gamma[j] * (seeds[i][j] - seed_mean[j]);
          }
        }
      }
      // Through the activation, then the affine map.
      Batch next(seeds.size(), std::vector<double>(layer.w.cols, 0.0));
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto& act = cache.activated[li][i];
        for (std::size_t j = 0; j < seeds[i].size(); ++j) {
          switch (layer.act) {
            case Activation::kIdentity: break;
            case Activation::kLeakyRelu:
              if (act[j] < 0.0) seeds[i][j] *= layer.leak;
              break;
            case Activation::kTanh: seeds[i][j] *= 1.0 - act[j] * act[j]; break;
          }
        }
        LayerGrad& lg = grads.net[li];
        const auto& in = cache.inputs[li][i];
        for (std::size_t r = 0; r < layer.w.rows; ++r) {
          const double d = seeds[i][r];
          double* grow = lg.w.data.data() + r * layer.w.cols;
          for (std::size_t c = 0; c < layer.w.cols; ++c) grow[c] += d * in[c];
          lg.b[r] += d;
        }
        if (li > 0) matvec_transpose_add(layer.w, seeds[i], next[i]);
      }
      if (li > 0) seeds = std::move(next);
    }
  }

  DenseNet net_;
  bool recenter_ = false;
  std::vector<RecenterParams> recenter_params_;
};

inline FlatView flat_view(GenGrad& g) {
  FlatView v = flat_view(g.net);
  for (auto& r : g.recenter) {
    v.emplace_back(r.gamma);
    v.emplace_back(r.beta);
  }
  return v;
}

}  // namespace ebml
