#pragma once

#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "ebml/errors.hpp"
#include "ebml/linalg.hpp"
#include "ebml/mixture.hpp"
#include "ebml/net.hpp"

namespace ebml {

// Sampling temperature. The sampled density is proportional to
// exp(-T * U(x)): the Langevin drift is scaled by T while the noise
// term is left unscaled.
struct Temperature {
  double value = 1.0;

  Temperature() = default;
  explicit Temperature(double v) : value(v) {
    if (!(v > 0.0)) throw std::invalid_argument("temperature must be positive");
  }
};

// Scalar potential U(x). Cheap to copy (shared immutable state), so
// trainers can hand read-only snapshots to concurrent chains and swap
// in updated parameters between sampling rounds.
class EnergyModel {
 public:
  enum class Kind { kQuadratic, kDoubleWell, kMixture, kMlp, kComposite };

  // U(x) = ||x||^2 / 2.
  static EnergyModel quadratic(std::size_t dim) {
    return EnergyModel(Impl{dim, Quadratic{}});
  }

  // U(x) = sum_i (x_i^2 - 1)^2 / 4, minima at +-1 per coordinate.
  static EnergyModel double_well(std::size_t dim) {
    return EnergyModel(Impl{dim, DoubleWell{}});
  }

  // U(x) = -log q(x) for a known mixture density q.
  static EnergyModel gaussian_mixture(GaussianMixture q) {
    const std::size_t d = q.dim();
    return EnergyModel(Impl{d, Mixture{std::move(q)}});
  }

  // Network potential; the net maps R^d to a single output.
  static EnergyModel mlp(DenseNet net) {
    if (net.output_dim() != 1) throw ShapeError("energy network must have one output");
    const std::size_t d = net.input_dim();
    return EnergyModel(Impl{d, Mlp{std::move(net)}});
  }

  // active(x) + prior(x) + ||x||^2 / (2 sigma^2). The prior is frozen:
  // parameter gradients reach only the active component.
  static EnergyModel composite(EnergyModel active, EnergyModel prior, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("composite sigma must be positive");
    if (active.dim() != prior.dim()) throw ShapeError("composite dimension mismatch");
    const std::size_t d = active.dim();
    return EnergyModel(
        Impl{d, Composite{std::make_shared<const EnergyModel>(std::move(active)),
                          std::make_shared<const EnergyModel>(std::move(prior)), sigma}});
  }

  std::size_t dim() const { return impl_->dim; }

  Kind kind() const {
    return static_cast<Kind>(impl_->variant.index());
  }

  double energy(std::span<const double> x) const {
    check_input(x);
    return energy_unchecked(x);
  }

  void energy_grad_x(std::span<const double> x, std::span<double> out) const {
    check_input(x);
    if (out.size() != impl_->dim) throw ShapeError("gradient output dimension mismatch");
    grad_unchecked(x, out);
  }

  std::vector<double> energy_grad_x(std::span<const double> x) const {
    std::vector<double> g(dim());
    energy_grad_x(x, g);
    return g;
  }

  bool has_params() const { return active_net() != nullptr; }

  // The trainable network, reaching through a composite to its active
  // component. Null for analytic energies.
  const DenseNet* active_net() const {
    const Impl* impl = impl_.get();
    while (true) {
      if (const auto* mlp = std::get_if<Mlp>(&impl->variant)) return &mlp->net;
      if (const auto* comp = std::get_if<Composite>(&impl->variant)) {
        impl = comp->active->impl_.get();
        continue;
      }
      return nullptr;
    }
  }

  // Accumulates seed * dU/dtheta into grads, where theta are the
  // active network's parameters. No-op for analytic energies.
  void accumulate_param_grad(std::span<const double> x, double seed, NetGrad& grads) const {
    check_input(x);
    const Impl* impl = impl_.get();
    while (const auto* comp = std::get_if<Composite>(&impl->variant))
      impl = comp->active->impl_.get();
    if (const auto* mlp = std::get_if<Mlp>(&impl->variant)) {
      thread_local NetWorkspace ws;
      mlp->net.forward(x, ws);
      const double seed_arr[1] = {seed};
      mlp->net.backward(ws, seed_arr, &grads, {});
    }
  }

  // Same structure with the active network's parameters replaced.
  EnergyModel with_active_params(const DenseNet& updated) const {
    if (const auto* comp = std::get_if<Composite>(&impl_->variant)) {
      return composite(comp->active->with_active_params(updated), *comp->prior,
                       comp->sigma);
    }
    if (std::holds_alternative<Mlp>(impl_->variant)) return mlp(updated);
    throw std::logic_error("energy model has no trainable parameters");
  }

  // Composite introspection (checkpointing, tests).
  const EnergyModel* composite_active() const {
    const auto* c = std::get_if<Composite>(&impl_->variant);
    return c ? c->active.get() : nullptr;
  }
  const EnergyModel* composite_prior() const {
    const auto* c = std::get_if<Composite>(&impl_->variant);
    return c ? c->prior.get() : nullptr;
  }
  double composite_sigma() const {
    const auto* c = std::get_if<Composite>(&impl_->variant);
    return c ? c->sigma : 0.0;
  }
  const GaussianMixture* mixture() const {
    const auto* m = std::get_if<Mixture>(&impl_->variant);
    return m ? &m->q : nullptr;
  }

 private:
  struct Quadratic {};
  struct DoubleWell {};
  struct Mixture {
    GaussianMixture q;
  };
  struct Mlp {
    DenseNet net;
  };
  struct Composite {
    std::shared_ptr<const EnergyModel> active;
    std::shared_ptr<const EnergyModel> prior;
    double sigma;
  };
  struct Impl {
    std::size_t dim;
    std::variant<Quadratic, DoubleWell, Mixture, Mlp, Composite> variant;
  };

  explicit EnergyModel(Impl impl) : impl_(std::make_shared<const Impl>(std::move(impl))) {}

  void check_input(std::span<const double> x) const {
    if (x.size() != impl_->dim) throw ShapeError("energy input dimension mismatch");
    if (!all_finite(x)) throw NumericError("non-finite energy input");
  }

  double energy_unchecked(std::span<const double> x) const {
    return std::visit(
        [&](const auto& v) -> double {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Quadratic>) {
            return 0.5 * dot(x, x);
          } else if constexpr (std::is_same_v<T, DoubleWell>) {
            double acc = 0.0;
            for (double xi : x) {
              const double t = xi * xi - 1.0;
              acc += 0.25 * t * t;
            }
            return acc;
          } else if constexpr (std::is_same_v<T, Mixture>) {
            return -v.q.log_density(x);
          } else if constexpr (std::is_same_v<T, Mlp>) {
            thread_local NetWorkspace ws;
            return v.net.forward(x, ws)[0];
          } else {
            return v.active->energy_unchecked(x) + v.prior->energy_unchecked(x) +
                   0.5 * dot(x, x) / (v.sigma * v.sigma);
          }
        },
        impl_->variant);
  }

  void grad_unchecked(std::span<const double> x, std::span<double> out) const {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Quadratic>) {
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
          } else if constexpr (std::is_same_v<T, DoubleWell>) {
            for (std::size_t i = 0; i < x.size(); ++i)
              out[i] = x[i] * (x[i] * x[i] - 1.0);
          } else if constexpr (std::is_same_v<T, Mixture>) {
            v.q.log_density_grad(x, out);
            for (double& g : out) g = -g;
          } else if constexpr (std::is_same_v<T, Mlp>) {
            thread_local NetWorkspace ws;
            v.net.forward(x, ws);
            static constexpr double kSeed[1] = {1.0};
            v.net.backward(ws, kSeed, nullptr, out);
          } else {
            v.active->grad_unchecked(x, out);
            // Stack buffer so nested composites cannot alias.
            double buf[16];
            std::vector<double> heap;
            std::span<double> tmp;
            if (x.size() <= 16) {
              tmp = std::span<double>(buf, x.size());
            } else {
              heap.resize(x.size());
              tmp = heap;
            }
            v.prior->grad_unchecked(x, tmp);
            const double inv_s2 = 1.0 / (v.sigma * v.sigma);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] += tmp[i] + x[i] * inv_s2;
          }
        },
        impl_->variant);
  }

  std::shared_ptr<const Impl> impl_;
};

inline EnergyModel compose_with_prior(EnergyModel active, EnergyModel prior, double sigma) {
  return EnergyModel::composite(std::move(active), std::move(prior), sigma);
}

}  // namespace ebml
