#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebml/energy.hpp"
#include "ebml/errors.hpp"
#include "ebml/generator.hpp"
#include "ebml/metrics.hpp"
#include "ebml/mixture.hpp"
#include "ebml/rng.hpp"

namespace ebml {

// Synthetic datasets with known structure. Mixture-backed sets carry
// an exact density; the moons set is a noisy manifold without one.
// Class labels come from the nearest mode (mixtures) or the nearest
// generating curve (moons).
class ToyDataset {
 public:
  static ToyDataset by_name(std::string_view name) {
    if (name == "dw1d") {
      return ToyDataset("dw1d", GaussianMixture::isotropic({{-1.0}, {1.0}}, 0.4),
                        {-3.0, 3.0});
    }
    if (name == "ring2d") {
      return ToyDataset(
          "ring2d",
          GaussianMixture::isotropic({{1.5, 0.0}, {0.0, 1.5}, {-1.5, 0.0}, {0.0, -1.5}},
                                     0.25),
          {-3.0, 3.0});
    }
    if (name == "bimodal2d") {
      return ToyDataset("bimodal2d",
                        GaussianMixture::isotropic({{-1.5, 0.0}, {1.5, 0.0}}, 0.3),
                        {-3.5, 3.5});
    }
    if (name == "prod8d") {
      // Product of per-coordinate two-mode mixtures: 2^8 components.
      std::vector<std::vector<double>> means;
      for (std::size_t mask = 0; mask < 256; ++mask) {
        std::vector<double> m(8);
        for (std::size_t j = 0; j < 8; ++j) m[j] = (mask >> j) & 1 ? 1.0 : -1.0;
        means.push_back(std::move(m));
      }
      return ToyDataset("prod8d", GaussianMixture::isotropic(means, 0.5), {-3.0, 3.0});
    }
    if (name == "box2d") {
      ToyDataset ds("box2d",
                    GaussianMixture::isotropic({{0.3, 0.5}, {0.7, 0.5}}, 0.08),
                    {0.0, 1.0});
      ds.bounds_ = {0.0, 1.0};
      return ds;
    }
    if (name == "moons2d") return ToyDataset::moons();
    throw std::invalid_argument("unknown dataset: " + std::string(name));
  }

  static std::vector<std::string> names() {
    return {"dw1d", "ring2d", "bimodal2d", "moons2d", "prod8d", "box2d"};
  }

  // Ad-hoc mixture dataset (fixtures, experiments outside the named set).
  static ToyDataset custom(std::string name, GaussianMixture mixture,
                           std::pair<double, double> extent,
                           std::optional<std::pair<double, double>> bounds = {}) {
    ToyDataset ds(std::move(name), std::move(mixture), extent);
    ds.bounds_ = bounds;
    return ds;
  }

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  bool has_density() const { return mixture_.has_value(); }
  const GaussianMixture* mixture() const { return mixture_ ? &*mixture_ : nullptr; }
  std::optional<std::pair<double, double>> bounds() const { return bounds_; }

  int num_classes() const {
    if (moons_) return 2;
    return static_cast<int>(mixture_->num_components());
  }

  Batch sample(std::size_t n, RngKey key) const {
    if (n == 0) throw std::invalid_argument("sample count must be positive");
    Batch out(n, std::vector<double>(dim_));
    for (std::size_t i = 0; i < n; ++i) {
      CounterRng rng(key.child(i));
      if (moons_) {
        sample_moon(rng, out[i]);
      } else {
        mixture_->sample(rng, out[i]);
      }
    }
    return out;
  }

  double log_density(std::span<const double> x) const {
    if (!mixture_) throw std::logic_error(name_ + " has no density evaluator");
    return mixture_->log_density(x);
  }

  // U(x) = -log q(x) for datasets with a density.
  EnergyModel data_energy() const {
    if (!mixture_) throw std::logic_error(name_ + " has no density evaluator");
    return EnergyModel::gaussian_mixture(*mixture_);
  }

  int label(std::span<const double> x) const {
    if (moons_) return nearest_moon(x);
    return static_cast<int>(mixture_->nearest_component(x));
  }

  Batch modes() const {
    Batch out;
    if (moons_) {
      out.push_back({0.0, 0.5});   // centroid-ish anchors of the two arcs
      out.push_back({1.0, 0.0});
      return out;
    }
    for (const auto& c : mixture_->components()) out.push_back(c.mean);
    return out;
  }

  // Axis-aligned oracle grid covering the support (dim <= 2 only).
  GridSpec oracle_grid(std::size_t bins) const {
    if (dim_ > 2) throw std::invalid_argument("oracle grid limited to 2 dimensions");
    GridSpec g;
    for (std::size_t d = 0; d < dim_; ++d)
      g.axes.push_back({extent_.first, extent_.second, bins});
    return g;
  }

  // Exact data mass outside a grid (mixture-backed sets only).
  double grid_outside_mass(const GridSpec& grid) const {
    if (!mixture_) throw std::logic_error(name_ + " has no density evaluator");
    std::vector<double> lo, hi;
    for (const auto& a : grid.axes) {
      lo.push_back(a.min);
      hi.push_back(a.max);
    }
    return 1.0 - mixture_->box_mass(lo, hi);
  }

 private:
  ToyDataset(std::string name, GaussianMixture mixture, std::pair<double, double> extent)
      : name_(std::move(name)),
        dim_(mixture.dim()),
        mixture_(std::move(mixture)),
        extent_(extent) {}

  static ToyDataset moons() {
    ToyDataset ds;
    ds.name_ = "moons2d";
    ds.dim_ = 2;
    ds.moons_ = true;
    ds.extent_ = {-2.0, 3.0};
    return ds;
  }

  ToyDataset() = default;

  static void moon_point(int moon, double t, std::span<double> out) {
    if (moon == 0) {
      out[0] = std::cos(t);
      out[1] = std::sin(t);
    } else {
      out[0] = 1.0 - std::cos(t);
      out[1] = 0.5 - std::sin(t);
    }
  }

  void sample_moon(CounterRng& rng, std::span<double> out) const {
    const int moon = rng.bernoulli(0.5) ? 1 : 0;
    const double t = std::numbers::pi * rng.uniform();
    moon_point(moon, t, out);
    out[0] += kMoonNoise * rng.gaussian();
    out[1] += kMoonNoise * rng.gaussian();
  }

  int nearest_moon(std::span<const double> x) const {
    double best[2];
    for (int moon = 0; moon < 2; ++moon) {
      best[moon] = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 64; ++k) {
        double p[2];
        moon_point(moon, std::numbers::pi * (k + 0.5) / 64.0, p);
        const double d = (x[0] - p[0]) * (x[0] - p[0]) + (x[1] - p[1]) * (x[1] - p[1]);
        if (d < best[moon]) best[moon] = d;
      }
    }
    return best[0] <= best[1] ? 0 : 1;
  }

  static constexpr double kMoonNoise = 0.08;

  std::string name_;
  std::size_t dim_ = 0;
  bool moons_ = false;
  std::optional<GaussianMixture> mixture_;
  std::optional<std::pair<double, double>> bounds_;
  std::pair<double, double> extent_{-3.0, 3.0};
};

// Builds the frozen rejuvenation generator used by the midrun and
// longrun recipes: an affine map matching the data mean and
// covariance, fit from fit_budget samples. Fails loudly when the fit
// misses the quality bar.
inline Generator frozen_generator_fixture(const ToyDataset& ds, std::size_t fit_budget,
                                          RngKey key) {
  const Batch data = ds.sample(fit_budget, key.child(streams::kFixture).child(0));
  const auto fit = detail::fit_moments(data);
  const Matrix root = detail::sym_sqrt(fit.cov);

  Layer layer;
  layer.w = root;
  layer.b = fit.mean;
  layer.act = Activation::kIdentity;
  Generator gen(DenseNet({layer}));

  const std::size_t check_n = 2048;
  const Batch z = gen.sample_latents(check_n, key.child(streams::kFixture).child(1));
  const Batch generated = gen.generate(z);
  const Batch reference = ds.sample(check_n, key.child(streams::kFixture).child(2));
  const double fd = gaussian_frechet(generated, reference);
  if (!(fd <= 0.5)) {
    throw std::runtime_error("frozen generator fixture for " + ds.name() +
                             " missed the quality bar: frechet " + std::to_string(fd));
  }
  return gen;
}

}  // namespace ebml
