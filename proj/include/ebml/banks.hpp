#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ebml/errors.hpp"
#include "ebml/generator.hpp"
#include "ebml/langevin.hpp"
#include "ebml/metrics.hpp"
#include "ebml/rng.hpp"
#include "ebml/toydata.hpp"

namespace ebml {

// Where fresh states come from when a bank slot is rejuvenated:
// isotropic noise, data draws, or a generator pushforward.
class RejuvenationSource {
 public:
  static RejuvenationSource noise(std::size_t dim, double scale = 1.0) {
    RejuvenationSource s;
    s.dim_ = dim;
    s.draw_ = [dim, scale](CounterRng& rng, std::span<double> out) {
      for (std::size_t j = 0; j < dim; ++j) out[j] = scale * rng.gaussian();
    };
    return s;
  }

  static RejuvenationSource data(const ToyDataset& ds) {
    RejuvenationSource s;
    s.dim_ = ds.dim();
    auto held = std::make_shared<ToyDataset>(ds);
    s.draw_ = [held](CounterRng& rng, std::span<double> out) {
      if (held->mixture()) {
        held->mixture()->sample(rng, out);
      } else {
        // Manifold sets sample through the dataset interface.
        const Batch one = held->sample(1, RngKey{rng.next_u64(), rng.next_u64()});
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = one[0][j];
      }
    };
    return s;
  }

  static RejuvenationSource generator(const Generator& gen) {
    RejuvenationSource s;
    s.dim_ = gen.output_dim();
    auto held = std::make_shared<Generator>(gen);
    s.draw_ = [held](CounterRng& rng, std::span<double> out) {
      Batch z(1, std::vector<double>(held->latent_dim()));
      rng.fill_gaussian(z[0]);
      const Batch x = held->generate(z);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = x[0][j];
    };
    return s;
  }

  std::size_t dim() const { return dim_; }
  void draw(CounterRng& rng, std::span<double> out) const { draw_(rng, out); }

 private:
  std::size_t dim_ = 0;
  std::function<void(CounterRng&, std::span<double>)> draw_;
};

struct DrawResult {
  std::vector<std::size_t> indices;
  Batch states;
};

namespace detail {

// Uniform draw of B distinct slots via partial Fisher-Yates over a
// persistent index permutation.
inline std::vector<std::size_t> draw_distinct(std::vector<std::size_t>& perm, std::size_t b,
                                              CounterRng& rng) {
  const std::size_t n = perm.size();
  if (b > n) throw ShapeError("draw larger than bank capacity");
  for (std::size_t j = 0; j < b; ++j)
    std::swap(perm[j], perm[j + rng.uniform_index(n - j)]);
  return {perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(b)};
}

}  // namespace detail

// Fixed-capacity pool of MCMC states carried across training rounds.
// Lifetimes count Langevin steps since the slot was last rejuvenated;
// every rejuvenation event's final lifetime is recorded for the
// lifetime statistics.
class PersistentBank {
 public:
  PersistentBank(std::size_t capacity, std::size_t dim, const RejuvenationSource& source,
                 RngKey key)
      : dim_(dim), slots_(capacity, std::vector<double>(dim)), lifetimes_(capacity, 0) {
    for (std::size_t i = 0; i < capacity; ++i) {
      CounterRng rng(key.child(streams::kBankInit).child(i));
      source.draw(rng, slots_[i]);
    }
    perm_.resize(capacity);
    for (std::size_t i = 0; i < capacity; ++i) perm_[i] = i;
  }

  std::size_t capacity() const { return slots_.size(); }
  std::size_t dim() const { return dim_; }
  const Batch& slots() const { return slots_; }
  const std::vector<std::uint64_t>& lifetimes() const { return lifetimes_; }
  std::span<const std::uint64_t> rejuvenation_lifetimes() const { return rejuv_log_; }

  DrawResult draw(std::size_t b, CounterRng& rng) {
    DrawResult out;
    out.indices = detail::draw_distinct(perm_, b, rng);
    out.states.reserve(b);
    for (std::size_t idx : out.indices) out.states.push_back(slots_[idx]);
    return out;
  }

  void return_batch(std::span<const std::size_t> indices, const Batch& states,
                    std::uint64_t steps_added) {
    if (indices.size() != states.size()) throw ShapeError("return batch size mismatch");
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const std::size_t idx = indices[k];
      if (idx >= slots_.size()) throw ShapeError("return index out of range");
      if (states[k].size() != dim_) throw ShapeError("returned state dimension mismatch");
      slots_[idx] = states[k];
      lifetimes_[idx] += steps_added;
    }
  }

  std::size_t rejuvenate(std::span<const std::size_t> indices,
                         const RejuvenationSource& source, double p, CounterRng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("rejuvenation probability range");
    std::size_t count = 0;
    for (std::size_t idx : indices) {
      if (idx >= slots_.size()) throw ShapeError("rejuvenation index out of range");
      if (rng.bernoulli(p)) {
        rejuv_log_.push_back(lifetimes_[idx]);
        source.draw(rng, slots_[idx]);
        lifetimes_[idx] = 0;
        ++count;
      }
    }
    return count;
  }

  // Checkpoint restore.
  void restore(Batch slots, std::vector<std::uint64_t> lifetimes,
               std::vector<std::uint64_t> rejuv_log, std::vector<std::size_t> perm) {
    slots_ = std::move(slots);
    lifetimes_ = std::move(lifetimes);
    rejuv_log_ = std::move(rejuv_log);
    perm_ = std::move(perm);
  }
  const std::vector<std::size_t>& perm() const { return perm_; }

 private:
  std::size_t dim_;
  Batch slots_;
  std::vector<std::uint64_t> lifetimes_;
  std::vector<std::uint64_t> rejuv_log_;
  std::vector<std::size_t> perm_;
};

inline LifetimeStats lifetime_stats(const PersistentBank& bank) {
  return lifetime_stats(bank.rejuvenation_lifetimes());
}

// Aligned latent/image pools for hybrid learning. Slot i's image was
// produced from slot i's latent by the generator and then evolved by
// Langevin updates; draws, returns, and rejuvenation always touch a
// pair together.
class PairedBank {
 public:
  PairedBank(std::size_t capacity, const Generator& gen, RngKey key)
      : latent_dim_(gen.latent_dim()), image_dim_(gen.output_dim()) {
    latents_ = gen.sample_latents(capacity, key.child(streams::kBankInit));
    images_ = gen.generate(latents_);
    update_rounds_.assign(capacity, 0);
    lifetimes_.assign(capacity, 0);
    perm_.resize(capacity);
    for (std::size_t i = 0; i < capacity; ++i) perm_[i] = i;
  }

  std::size_t capacity() const { return latents_.size(); }
  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t image_dim() const { return image_dim_; }
  const Batch& latents() const { return latents_; }
  const Batch& images() const { return images_; }
  const std::vector<std::uint64_t>& update_rounds() const { return update_rounds_; }
  const std::vector<std::uint64_t>& lifetimes() const { return lifetimes_; }
  std::span<const std::uint64_t> rejuvenation_lifetimes() const { return rejuv_log_; }

  struct PairedDraw {
    std::vector<std::size_t> indices;
    Batch latents;
    Batch images;
  };

  PairedDraw draw(std::size_t b, CounterRng& rng) {
    PairedDraw out;
    out.indices = detail::draw_distinct(perm_, b, rng);
    for (std::size_t idx : out.indices) {
      out.latents.push_back(latents_[idx]);
      out.images.push_back(images_[idx]);
    }
    return out;
  }

  void return_batch(std::span<const std::size_t> indices, const Batch& latents,
                    const Batch& images, std::uint64_t steps_added) {
    if (indices.size() != latents.size() || indices.size() != images.size())
      throw ShapeError("return batch size mismatch");
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const std::size_t idx = indices[k];
      if (idx >= capacity()) throw ShapeError("return index out of range");
      latents_[idx] = latents[k];
      images_[idx] = images[k];
      update_rounds_[idx] += 1;
      lifetimes_[idx] += steps_added;
    }
  }

  // Slots past max_update_rounds are rejuvenated unconditionally
  // before the Bernoulli draw; each rejuvenated slot gets a fresh
  // latent and the image regenerated from it at the current
  // generator parameters.
  std::size_t rejuvenate(std::span<const std::size_t> indices, const Generator& gen,
                         double p, std::uint64_t max_update_rounds, CounterRng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("rejuvenation probability range");
    std::vector<std::size_t> chosen;
    for (std::size_t idx : indices) {
      if (idx >= capacity()) throw ShapeError("rejuvenation index out of range");
      const bool forced = max_update_rounds > 0 && update_rounds_[idx] >= max_update_rounds;
      if (forced || rng.bernoulli(p)) chosen.push_back(idx);
    }
    if (chosen.empty()) return 0;
    Batch fresh_z(chosen.size(), std::vector<double>(latent_dim_));
    for (auto& z : fresh_z) rng.fill_gaussian(z);
    const Batch fresh_x = gen.generate(fresh_z);
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const std::size_t idx = chosen[k];
      rejuv_log_.push_back(lifetimes_[idx]);
      latents_[idx] = fresh_z[k];
      images_[idx] = fresh_x[k];
      update_rounds_[idx] = 0;
      lifetimes_[idx] = 0;
    }
    return chosen.size();
  }

  void restore(Batch latents, Batch images, std::vector<std::uint64_t> update_rounds,
               std::vector<std::uint64_t> lifetimes, std::vector<std::uint64_t> rejuv_log,
               std::vector<std::size_t> perm) {
    latents_ = std::move(latents);
    images_ = std::move(images);
    update_rounds_ = std::move(update_rounds);
    lifetimes_ = std::move(lifetimes);
    rejuv_log_ = std::move(rejuv_log);
    perm_ = std::move(perm);
  }
  const std::vector<std::size_t>& perm() const { return perm_; }

 private:
  std::size_t latent_dim_ = 0;
  std::size_t image_dim_ = 0;
  Batch latents_;
  Batch images_;
  std::vector<std::uint64_t> update_rounds_;
  std::vector<std::uint64_t> lifetimes_;
  std::vector<std::uint64_t> rejuv_log_;
  std::vector<std::size_t> perm_;
};

// Burn-in plus update pools for longrun learning. Fresh states live
// in the burn-in bank until their round count reaches the threshold,
// then replace a random update-bank slot; only update-bank states
// ever feed learning gradients. States present at initialization are
// exempt from the gate and flagged by provenance.
class DualBank {
 public:
  DualBank(std::size_t burn_in_capacity, std::size_t update_capacity, std::size_t dim,
           std::size_t threshold, const RejuvenationSource& source, RngKey key)
      : dim_(dim), threshold_(threshold) {
    if (threshold == 0) throw std::invalid_argument("burn-in threshold must be positive");
    burn_states_.assign(burn_in_capacity, std::vector<double>(dim));
    update_states_.assign(update_capacity, std::vector<double>(dim));
    for (std::size_t i = 0; i < burn_in_capacity; ++i) {
      CounterRng rng(key.child(streams::kBankInit).child(i));
      source.draw(rng, burn_states_[i]);
    }
    for (std::size_t i = 0; i < update_capacity; ++i) {
      CounterRng rng(key.child(streams::kBankInit).child(burn_in_capacity + i));
      source.draw(rng, update_states_[i]);
    }
    counts_.assign(burn_in_capacity, 0);
    CounterRng crng(key.child(streams::kBankInit).child(1u << 20));
    for (auto& c : counts_) c = crng.uniform_index(threshold + 1);  // Unif{0..D}
    burn_lifetimes_.assign(burn_in_capacity, 0);
    update_lifetimes_.assign(update_capacity, 0);
    burn_from_init_.assign(burn_in_capacity, 1);
    update_from_init_.assign(update_capacity, 1);
    burn_perm_.resize(burn_in_capacity);
    for (std::size_t i = 0; i < burn_in_capacity; ++i) burn_perm_[i] = i;
    update_perm_.resize(update_capacity);
    for (std::size_t i = 0; i < update_capacity; ++i) update_perm_[i] = i;
  }

  std::size_t burn_in_capacity() const { return burn_states_.size(); }
  std::size_t update_capacity() const { return update_states_.size(); }
  std::size_t threshold() const { return threshold_; }
  std::size_t dim() const { return dim_; }
  const Batch& burn_in_states() const { return burn_states_; }
  const Batch& update_states() const { return update_states_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  const std::vector<std::uint64_t>& burn_in_lifetimes() const { return burn_lifetimes_; }
  const std::vector<std::uint64_t>& update_lifetimes() const { return update_lifetimes_; }
  const std::vector<std::uint8_t>& update_from_init() const { return update_from_init_; }
  std::span<const std::uint64_t> promotion_lifetimes() const { return promo_log_; }

  DrawResult draw_update(std::size_t b, CounterRng& rng) {
    DrawResult out;
    out.indices = detail::draw_distinct(update_perm_, b, rng);
    for (std::size_t idx : out.indices) out.states.push_back(update_states_[idx]);
    return out;
  }

  DrawResult draw_burn_in(std::size_t b, CounterRng& rng) {
    DrawResult out;
    out.indices = detail::draw_distinct(burn_perm_, b, rng);
    for (std::size_t idx : out.indices) out.states.push_back(burn_states_[idx]);
    return out;
  }

  void return_update(std::span<const std::size_t> indices, const Batch& states,
                     std::uint64_t steps_added) {
    return_into(update_states_, update_lifetimes_, indices, states, steps_added);
  }

  void return_burn_in(std::span<const std::size_t> indices, const Batch& states,
                      std::uint64_t steps_added) {
    return_into(burn_states_, burn_lifetimes_, indices, states, steps_added);
  }

  void increment_counts(std::span<const std::size_t> burn_indices) {
    for (std::size_t idx : burn_indices) {
      if (idx >= counts_.size()) throw ShapeError("count index out of range");
      counts_[idx] += 1;
    }
  }

  // For every listed burn-in slot at or past the threshold: move the
  // state onto a uniformly chosen update slot, rejuvenate the burn-in
  // slot from the source, and reset its count.
  std::size_t promote(std::span<const std::size_t> burn_indices,
                      const RejuvenationSource& source, CounterRng& rng) {
    std::size_t promotions = 0;
    for (std::size_t idx : burn_indices) {
      if (idx >= counts_.size()) throw ShapeError("promotion index out of range");
      if (counts_[idx] < threshold_) continue;
      const std::size_t target = rng.uniform_index(update_states_.size());
      update_states_[target] = burn_states_[idx];
      update_lifetimes_[target] = burn_lifetimes_[idx];
      update_from_init_[target] = burn_from_init_[idx];
      promo_log_.push_back(burn_lifetimes_[idx]);
      source.draw(rng, burn_states_[idx]);
      burn_lifetimes_[idx] = 0;
      burn_from_init_[idx] = 0;
      counts_[idx] = 0;
      ++promotions;
    }
    return promotions;
  }

  void restore(Batch burn_states, Batch update_states, std::vector<std::uint64_t> counts,
               std::vector<std::uint64_t> burn_lifetimes,
               std::vector<std::uint64_t> update_lifetimes,
               std::vector<std::uint8_t> burn_from_init,
               std::vector<std::uint8_t> update_from_init,
               std::vector<std::uint64_t> promo_log, std::vector<std::size_t> burn_perm,
               std::vector<std::size_t> update_perm) {
    burn_states_ = std::move(burn_states);
    update_states_ = std::move(update_states);
    counts_ = std::move(counts);
    burn_lifetimes_ = std::move(burn_lifetimes);
    update_lifetimes_ = std::move(update_lifetimes);
    burn_from_init_ = std::move(burn_from_init);
    update_from_init_ = std::move(update_from_init);
    promo_log_ = std::move(promo_log);
    burn_perm_ = std::move(burn_perm);
    update_perm_ = std::move(update_perm);
  }
  const std::vector<std::uint8_t>& burn_from_init() const { return burn_from_init_; }
  const std::vector<std::size_t>& burn_perm() const { return burn_perm_; }
  const std::vector<std::size_t>& update_perm() const { return update_perm_; }

 private:
  void return_into(Batch& states, std::vector<std::uint64_t>& lifetimes,
                   std::span<const std::size_t> indices, const Batch& incoming,
                   std::uint64_t steps_added) {
    if (indices.size() != incoming.size()) throw ShapeError("return batch size mismatch");
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const std::size_t idx = indices[k];
      if (idx >= states.size()) throw ShapeError("return index out of range");
      if (incoming[k].size() != dim_) throw ShapeError("returned state dimension mismatch");
      states[idx] = incoming[k];
      lifetimes[idx] += steps_added;
    }
  }

  std::size_t dim_;
  std::size_t threshold_;
  Batch burn_states_;
  Batch update_states_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> burn_lifetimes_;
  std::vector<std::uint64_t> update_lifetimes_;
  std::vector<std::uint8_t> burn_from_init_;
  std::vector<std::uint8_t> update_from_init_;
  std::vector<std::uint64_t> promo_log_;
  std::vector<std::size_t> burn_perm_;
  std::vector<std::size_t> update_perm_;
};

}  // namespace ebml
