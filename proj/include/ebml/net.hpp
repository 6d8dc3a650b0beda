#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ebml/errors.hpp"
#include "ebml/linalg.hpp"
#include "ebml/rng.hpp"

namespace ebml {

enum class Activation { kIdentity, kLeakyRelu, kTanh };

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kLeakyRelu: return "leaky-relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

struct Layer {
  Matrix w;
  std::vector<double> b;
  Activation act = Activation::kIdentity;
  double leak = 0.01;  // negative-side slope for kLeakyRelu
};

// Gradient (or moment) tree with the same shapes as a network's
// weights and biases.
struct LayerGrad {
  Matrix w;
  std::vector<double> b;
};
using NetGrad = std::vector<LayerGrad>;

// Per-evaluation scratch. Holding pre/post activations here keeps
// forward results available for the reverse pass without allocating
// in inner loops; buffers grow on first use and are then reused.
struct NetWorkspace {
  std::vector<std::vector<double>> post;  // post[0] = input copy, post[l+1] = layer l output
};

// Fully-connected feed-forward network. Immutable by convention
// during sampling: trainers mutate a private copy and swap snapshots
// between rounds, so concurrent read-only evaluation is safe.
class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      if (layer.b.size() != layer.w.rows) throw ShapeError("bias/weight row mismatch");
      if (l > 0 && layer.w.cols != layers_[l - 1].w.rows)
        throw ShapeError("consecutive layer dimensions are incompatible");
      if (!all_finite(layer.w.data) || !all_finite(layer.b))
        throw NumericError("non-finite network parameter");
    }
  }

  // Gaussian init scaled by init_scale / sqrt(fan_in); biases zero.
  static DenseNet random(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t output_dim, Activation hidden_act, double init_scale,
                         RngKey key, double leak = 0.01) {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      CounterRng rng(key.child(l));
      Layer layer;
      layer.w = Matrix(dims[l + 1], dims[l]);
      const double scale = init_scale / std::sqrt(static_cast<double>(dims[l]));
      for (double& v : layer.w.data) v = scale * rng.gaussian();
      layer.b.assign(dims[l + 1], 0.0);
      const bool last = (l + 2 == dims.size());
      layer.act = last ? Activation::kIdentity : hidden_act;
      layer.leak = leak;
      layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers));
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().w.cols; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().w.rows; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.w.data.size() + l.b.size();
    return n;
  }

  // Forward pass; the returned span points into the workspace and
  // stays valid until the next forward on the same workspace.
  std::span<const double> forward(std::span<const double> x, NetWorkspace& ws) const {
    if (x.size() != input_dim()) throw ShapeError("input dimension mismatch");
    ws.post.resize(layers_.size() + 1);
    ws.post[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      auto& out = ws.post[l + 1];
      out.resize(layer.w.rows);
      matvec(layer.w, ws.post[l], out);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += layer.b[i];
        switch (layer.act) {
          case Activation::kIdentity: break;
          case Activation::kLeakyRelu:
            if (out[i] < 0.0) out[i] *= layer.leak;
            break;
          case Activation::kTanh: out[i] = std::tanh(out[i]); break;
        }
      }
    }
    return ws.post.back();
  }

  std::vector<double> forward(std::span<const double> x) const {
    NetWorkspace ws;
    auto out = forward(x, ws);
    return {out.begin(), out.end()};
  }

  // Reverse pass for the scalar out_seed . f(x), run on a workspace
  // that holds the matching forward. Parameter gradients accumulate
  // into *param_grads when non-null (shapes must match); the input
  // gradient is written to input_grad when non-empty.
  void backward(const NetWorkspace& ws, std::span<const double> out_seed,
                NetGrad* param_grads, std::span<double> input_grad) const {
    if (out_seed.size() != output_dim()) throw ShapeError("seed dimension mismatch");
    if (!input_grad.empty() && input_grad.size() != input_dim())
      throw ShapeError("input gradient dimension mismatch");
    if (param_grads && param_grads->size() != layers_.size())
      throw ShapeError("gradient tree layer count mismatch");

    thread_local std::vector<double> delta, delta_next;
    delta.assign(out_seed.begin(), out_seed.end());
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& layer = layers_[li];
      const auto& post = ws.post[li + 1];
      // Activation derivative, evaluated from the stored output.
      for (std::size_t i = 0; i < delta.size(); ++i) {
        switch (layer.act) {
          case Activation::kIdentity: break;
          case Activation::kLeakyRelu:
            // Output sign matches pre-activation sign; slope at 0 is
            // the positive-side slope.
            if (post[i] < 0.0) delta[i] *= layer.leak;
            break;
          case Activation::kTanh: delta[i] *= 1.0 - post[i] * post[i]; break;
        }
      }
      const auto& in = ws.post[li];
      if (param_grads) {
        LayerGrad& g = (*param_grads)[li];
        if (g.w.rows != layer.w.rows || g.w.cols != layer.w.cols ||
            g.b.size() != layer.b.size())
          throw ShapeError("gradient tree shape mismatch");
        for (std::size_t i = 0; i < layer.w.rows; ++i) {
          double* grow = g.w.data.data() + i * layer.w.cols;
          const double di = delta[i];
          for (std::size_t j = 0; j < layer.w.cols; ++j) grow[j] += di * in[j];
          g.b[i] += di;
        }
      }
      if (li > 0 || !input_grad.empty()) {
        delta_next.assign(in.size(), 0.0);
        matvec_transpose_add(layer.w, delta, delta_next);
        if (li == 0) {
          for (std::size_t j = 0; j < input_grad.size(); ++j) input_grad[j] = delta_next[j];
        }
        delta.swap(delta_next);
      }
    }
    if (!input_grad.empty() && !all_finite(input_grad))
      throw NumericError("non-finite gradient in reverse pass");
  }

  NetGrad zero_grad() const {
    NetGrad g;
    g.reserve(layers_.size());
    for (const Layer& l : layers_)
      g.push_back({Matrix(l.w.rows, l.w.cols), std::vector<double>(l.b.size(), 0.0)});
    return g;
  }

 private:
  std::vector<Layer> layers_;
};

struct GradientBundle {
  NetGrad param_grads;
  std::vector<double> input_grad;
};

inline GradientBundle backward(const DenseNet& net, std::span<const double> x,
                               std::span<const double> out_seed) {
  GradientBundle out;
  out.param_grads = net.zero_grad();
  out.input_grad.assign(net.input_dim(), 0.0);
  NetWorkspace ws;
  net.forward(x, ws);
  net.backward(ws, out_seed, &out.param_grads, out.input_grad);
  for (const LayerGrad& g : out.param_grads) {
    if (!all_finite(g.w.data) || !all_finite(g.b))
      throw NumericError("non-finite parameter gradient");
  }
  return out;
}

inline FlatView flat_view(DenseNet& net) {
  FlatView v;
  for (Layer& l : net.layers()) {
    v.emplace_back(l.w.data);
    v.emplace_back(l.b);
  }
  return v;
}

inline FlatView flat_view(NetGrad& grad) {
  FlatView v;
  for (LayerGrad& l : grad) {
    v.emplace_back(l.w.data);
    v.emplace_back(l.b);
  }
  return v;
}

inline FlatConstView flat_view(const NetGrad& grad) {
  FlatConstView v;
  for (const LayerGrad& l : grad) {
    v.emplace_back(l.w.data.data(), l.w.data.size());
    v.emplace_back(l.b.data(), l.b.size());
  }
  return v;
}

// Max relative disagreement between reverse-mode gradients and central
// finite differences of sum(f), over every parameter and input
// coordinate. h must be positive.
inline double finite_diff_check(const DenseNet& net, std::span<const double> x, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_check requires h > 0");
  const std::vector<double> seed(net.output_dim(), 1.0);
  const GradientBundle analytic = backward(net, x, seed);

  auto sum_forward = [&](const DenseNet& n, std::span<const double> in) {
    const auto out = n.forward(in);
    double s = 0.0;
    for (double v : out) s += v;
    return s;
  };

  double max_rel = 0.0;
  auto update = [&](double exact, double numeric) {
    const double rel = std::abs(exact - numeric) / (std::abs(exact) + 1e-8);
    if (rel > max_rel) max_rel = rel;
  };

  DenseNet perturbed = net;
  FlatView params = flat_view(perturbed);
  FlatConstView grads = flat_view(analytic.param_grads);
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double saved = params[t][i];
      params[t][i] = saved + h;
      const double up = sum_forward(perturbed, x);
      params[t][i] = saved - h;
      const double down = sum_forward(perturbed, x);
      params[t][i] = saved;
      update(grads[t][i], (up - down) / (2.0 * h));
    }
  }

  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const double saved = xp[i];
    xp[i] = saved + h;
    const double up = sum_forward(net, xp);
    xp[i] = saved - h;
    const double down = sum_forward(net, xp);
    xp[i] = saved;
    update(analytic.input_grad[i], (up - down) / (2.0 * h));
  }
  return max_rel;
}

}  // namespace ebml
