#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ebml/banks.hpp"
#include "ebml/energy.hpp"
#include "ebml/errors.hpp"
#include "ebml/generator.hpp"
#include "ebml/langevin.hpp"
#include "ebml/metrics.hpp"
#include "ebml/net.hpp"
#include "ebml/optim.hpp"
#include "ebml/rng.hpp"
#include "ebml/toydata.hpp"

namespace ebml {

enum class Regime { kShortrun, kMidrun, kLongrun };

inline std::string regime_name(Regime r) {
  switch (r) {
    case Regime::kShortrun: return "shortrun";
    case Regime::kMidrun: return "midrun";
    case Regime::kLongrun: return "longrun";
  }
  return "?";
}

struct TrainConfig {
  Regime regime = Regime::kShortrun;
  std::uint64_t seed = 0;

  std::size_t data_size = 10000;  // materialized data samples
  std::size_t batch_size = 32;
  std::size_t mcmc_steps = 100;   // Langevin steps per round
  double langevin_epsilon = 1e-2;
  double temperature = 1.0;
  double data_epsilon = 0.0;

  std::vector<std::size_t> ebm_hidden{16, 16};
  Activation ebm_activation = Activation::kTanh;
  double ebm_leak = 0.05;
  double ebm_init_scale = 1.0;
  AnnealSchedule ebm_lr = AnnealSchedule::constant(1e-4);
  double gradient_clip = 0.0;

  std::size_t bank_size = 10000;
  double rejuvenation_probability = 0.5;
  std::uint64_t max_update_rounds = 2;   // shortrun forced-rejuvenation bound
  std::size_t burn_in_bank_size = 1000;  // longrun
  std::size_t burn_in_threshold = 750;   // longrun promotion gate (rounds)
  double sigma = 0.15;                   // gaussian confinement of the composite

  std::size_t latent_dim = 4;
  std::vector<std::size_t> generator_hidden{32, 32};
  double generator_init_scale = 1.0;
  double generator_lr = 1e-4;
  double generator_clip = 0.0;
  bool generator_recenter = false;

  std::size_t total_steps = 1000;
  std::size_t metrics_every = 50;
  std::size_t checkpoint_every = 0;

  void validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (!(langevin_epsilon > 0.0))
      throw std::invalid_argument("langevin epsilon must be positive");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (rejuvenation_probability < 0.0 || rejuvenation_probability > 1.0)
      throw std::invalid_argument("rejuvenation probability must lie in [0, 1]");
    if (data_epsilon < 0.0) throw std::invalid_argument("data epsilon must be non-negative");
    if (batch_size > bank_size) throw std::invalid_argument("batch exceeds bank size");
    if (regime == Regime::kLongrun && batch_size > burn_in_bank_size)
      throw std::invalid_argument("batch exceeds burn-in bank size");
    if (regime != Regime::kShortrun && gradient_clip != 0.0)
      throw std::invalid_argument("gradient clipping is a shortrun-only option");
    if (regime == Regime::kLongrun && !(sigma > 0.0))
      throw std::invalid_argument("sigma must be positive");
    if (data_size == 0) throw std::invalid_argument("data size must be positive");
    ebm_lr.validate();
  }
};

struct MetricsRow {
  std::uint64_t step = 0;
  double lr = 0.0;
  double mean_pos_energy = 0.0;
  double mean_neg_energy = 0.0;
  double grad_norm = 0.0;
  double diversity = 0.0;
  std::uint64_t rejuvenation_count = 0;  // cumulative
  std::uint64_t promotion_count = 0;     // cumulative
  double wall_ms = 0.0;
};

enum class TrainEvent {
  kSelectData,
  kDrawBank,
  kLangevinNegatives,
  kLangevinBurnIn,
  kEbmGradient,
  kEbmUpdate,
  kGenGradient,
  kGenUpdate,
  kCountIncrement,
  kReturnBank,
  kRejuvenate,
  kPromote,
};

struct TrainHooks {
  std::vector<TrainEvent>* event_log = nullptr;
  std::function<void(const MetricsRow&)> on_metrics;
  std::function<void(std::uint64_t step)> on_checkpoint;
};

// Mean parameter gradient of the contrastive objective
// mean U(pos) - mean U(neg), taken over the model's trainable
// component.
inline NetGrad ml_gradient(const EnergyModel& model, const Batch& pos, const Batch& neg) {
  if (pos.empty() || neg.empty())
    throw ShapeError("ml_gradient requires non-empty batches");
  if (pos.size() != neg.size()) throw ShapeError("ml_gradient batch sizes differ");
  const DenseNet* net = model.active_net();
  if (!net) throw std::logic_error("ml_gradient requires a trainable energy");
  NetGrad g = net->zero_grad();
  const double w_pos = 1.0 / static_cast<double>(pos.size());
  const double w_neg = 1.0 / static_cast<double>(neg.size());
  for (const auto& x : pos) model.accumulate_param_grad(x, w_pos, g);
  for (const auto& x : neg) model.accumulate_param_grad(x, -w_neg, g);
  return g;
}

// One trainer drives one regime:
//   shortrun — paired latent/image bank, tandem generator;
//   midrun   — persistent bank rejuvenated from a frozen generator;
//   longrun  — dual burn-in/update bank over a prior-composed energy,
//              gradients fed exclusively by update-bank negatives.
class LifecycleTrainer {
 public:
  LifecycleTrainer(TrainConfig cfg, ToyDataset dataset,
                   std::optional<Generator> frozen_generator = {},
                   std::optional<EnergyModel> prior = {}, TrainHooks hooks = {})
      : cfg_(std::move(cfg)),
        dataset_(std::move(dataset)),
        hooks_(std::move(hooks)),
        root_(RngKey::root(cfg_.seed)),
        start_(std::chrono::steady_clock::now()) {
    cfg_.validate();
    const std::size_t d = dataset_.dim();
    data_ = dataset_.sample(cfg_.data_size, root_.child(streams::kDataset));
    ebm_net_ = DenseNet::random(d, cfg_.ebm_hidden, 1, cfg_.ebm_activation,
                                cfg_.ebm_init_scale, root_.child(streams::kParamInit).child(0),
                                cfg_.ebm_leak);
    adam_ebm_ = AdamState::like(const_view(flat_view(ebm_net_)));

    switch (cfg_.regime) {
      case Regime::kShortrun: {
        if (frozen_generator)
          throw std::invalid_argument("shortrun trains its generator in tandem");
        gen_ = Generator::random(cfg_.latent_dim, cfg_.generator_hidden, d,
                                 cfg_.generator_init_scale,
                                 root_.child(streams::kParamInit).child(1),
                                 cfg_.generator_recenter);
        adam_gen_ = AdamState::like(const_view(gen_->flat_params()));
        paired_.emplace(cfg_.bank_size, *gen_, root_);
        break;
      }
      case Regime::kMidrun: {
        if (!frozen_generator) throw std::invalid_argument("midrun needs a frozen generator");
        gen_ = std::move(frozen_generator);
        source_ = RejuvenationSource::generator(*gen_);
        persistent_.emplace(cfg_.bank_size, d, *source_, root_);
        break;
      }
      case Regime::kLongrun: {
        if (!frozen_generator)
          throw std::invalid_argument("longrun needs a frozen generator");
        if (!prior) throw std::invalid_argument("longrun needs a frozen prior energy");
        gen_ = std::move(frozen_generator);
        prior_ = std::move(prior);
        source_ = RejuvenationSource::generator(*gen_);
        dual_.emplace(cfg_.burn_in_bank_size, cfg_.bank_size, d, cfg_.burn_in_threshold,
                      *source_, root_);
        break;
      }
    }
  }

  const TrainConfig& config() const { return cfg_; }
  const ToyDataset& dataset() const { return dataset_; }
  std::uint64_t step_count() const { return step_; }
  std::uint64_t rejuvenation_count() const { return rejuvenation_count_; }
  std::uint64_t promotion_count() const { return promotion_count_; }
  const std::vector<MetricsRow>& metrics() const { return rows_; }
  const Generator& generator() const { return *gen_; }
  Generator& generator() { return *gen_; }
  const DenseNet& ebm_net() const { return ebm_net_; }
  DenseNet& ebm_net() { return ebm_net_; }
  AdamState& adam_ebm() { return adam_ebm_; }
  AdamState& adam_gen() { return adam_gen_; }
  PairedBank* paired_bank() { return paired_ ? &*paired_ : nullptr; }
  PersistentBank* persistent_bank() { return persistent_ ? &*persistent_ : nullptr; }
  DualBank* dual_bank() { return dual_ ? &*dual_ : nullptr; }
  const EnergyModel* prior() const { return prior_ ? &*prior_ : nullptr; }

  // Model snapshot used for sampling and evaluation at this instant.
  EnergyModel current_ebm() const {
    EnergyModel active = EnergyModel::mlp(ebm_net_);
    if (cfg_.regime == Regime::kLongrun)
      return compose_with_prior(std::move(active), *prior_, cfg_.sigma);
    return active;
  }

  void run(std::size_t steps) {
    for (std::size_t i = 0; i < steps; ++i) step();
  }

  void run_to_completion() {
    while (step_ < cfg_.total_steps) step();
  }

  void step() {
    switch (cfg_.regime) {
      case Regime::kShortrun: step_shortrun(); break;
      case Regime::kMidrun: step_midrun(); break;
      case Regime::kLongrun: step_longrun(); break;
    }
    ++step_;
    finish_step();
  }

  // Restore support: counters are set directly, everything else is
  // reached through the mutable accessors above.
  void set_counters(std::uint64_t step, std::uint64_t rejuvenation_count,
                    std::uint64_t promotion_count) {
    step_ = step;
    rejuvenation_count_ = rejuvenation_count;
    promotion_count_ = promotion_count;
  }
  void rebuild_rejuvenation_source() {
    if (cfg_.regime != Regime::kShortrun) source_ = RejuvenationSource::generator(*gen_);
  }
  void set_prior(EnergyModel prior) { prior_ = std::move(prior); }

 private:
  void emit(TrainEvent e) {
    if (hooks_.event_log) hooks_.event_log->push_back(e);
  }

  CounterRng step_rng(std::uint64_t stream) const {
    return CounterRng(root_.child(stream).child(step_));
  }

  Batch select_positive_batch() {
    emit(TrainEvent::kSelectData);
    CounterRng rng = step_rng(streams::kDataBatch);
    Batch out;
    out.reserve(cfg_.batch_size);
    for (std::size_t b = 0; b < cfg_.batch_size; ++b)
      out.push_back(data_[rng.uniform_index(data_.size())]);
    CounterRng noise = step_rng(streams::kDataNoise);
    add_data_noise(out, cfg_.data_epsilon, noise);
    return out;
  }

  Batch run_negative_chains(const EnergyModel& model, const Batch& x0,
                            std::span<const std::size_t> slots, std::uint64_t stream) {
    LangevinConfig lcfg;
    lcfg.step_size = cfg_.langevin_epsilon;
    lcfg.num_steps = cfg_.mcmc_steps;
    lcfg.temperature = Temperature{cfg_.temperature};
    lcfg.noise_key = root_.child(stream).child(step_);
    std::vector<std::uint64_t> ids(slots.begin(), slots.end());
    try {
      return final_states(langevin_run(model, x0, lcfg, ids));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at training step " +
                         std::to_string(step_));
    }
  }

  void update_ebm(const EnergyModel& model, const Batch& pos, const Batch& neg) {
    emit(TrainEvent::kEbmGradient);
    NetGrad grad = ml_gradient(model, pos, neg);
    clip_gradients(flat_view(grad), cfg_.gradient_clip);
    last_grad_norm_ = flat_norm(flat_view(static_cast<const NetGrad&>(grad)));
    emit(TrainEvent::kEbmUpdate);
    adam_step(adam_ebm_, flat_view(ebm_net_), flat_view(static_cast<const NetGrad&>(grad)),
              lr_at(cfg_.ebm_lr, step_));
    record_metrics(model, pos, neg);
  }

  void record_metrics(const EnergyModel& model, const Batch& pos, const Batch& neg) {
    if (cfg_.metrics_every == 0 || (step_ + 1) % cfg_.metrics_every != 0) return;
    pending_row_ = MetricsRow{};
    pending_row_->step = step_ + 1;
    pending_row_->lr = lr_at(cfg_.ebm_lr, step_);
    double pe = 0.0, ne = 0.0;
    for (const auto& x : pos) pe += model.energy(x);
    for (const auto& x : neg) ne += model.energy(x);
    pending_row_->mean_pos_energy = pe / static_cast<double>(pos.size());
    pending_row_->mean_neg_energy = ne / static_cast<double>(neg.size());
    pending_row_->grad_norm = last_grad_norm_;
    pending_row_->diversity = neg.size() >= 2 ? batch_diversity(neg) : 0.0;
  }

  void finish_step() {
    if (pending_row_) {
      pending_row_->rejuvenation_count = rejuvenation_count_;
      pending_row_->promotion_count = promotion_count_;
      pending_row_->wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                    start_)
              .count();
      rows_.push_back(*pending_row_);
      if (hooks_.on_metrics) hooks_.on_metrics(*pending_row_);
      pending_row_.reset();
    }
    if (cfg_.checkpoint_every != 0 && step_ % cfg_.checkpoint_every == 0 &&
        hooks_.on_checkpoint)
      hooks_.on_checkpoint(step_);
  }

  void step_shortrun() {
    const EnergyModel model = current_ebm();
    const Batch pos = select_positive_batch();
    emit(TrainEvent::kDrawBank);
    CounterRng draw_rng = step_rng(streams::kBankDraw);
    PairedBank::PairedDraw draw = paired_->draw(cfg_.batch_size, draw_rng);
    emit(TrainEvent::kLangevinNegatives);
    const Batch neg =
        run_negative_chains(model, draw.images, draw.indices, streams::kLangevinNoise);
    update_ebm(model, pos, neg);
    emit(TrainEvent::kGenGradient);
    GenGrad ggrad = gen_->cooperative_grad(draw.latents, neg);
    clip_gradients(flat_view(ggrad), cfg_.generator_clip);
    emit(TrainEvent::kGenUpdate);
    {
      FlatView params = gen_->flat_params();
      adam_step(adam_gen_, params, const_view(flat_view(ggrad)), cfg_.generator_lr);
    }
    emit(TrainEvent::kReturnBank);
    paired_->return_batch(draw.indices, draw.latents, neg, cfg_.mcmc_steps);
    emit(TrainEvent::kRejuvenate);
    CounterRng rejuv_rng = step_rng(streams::kRejuvenation);
    rejuvenation_count_ += paired_->rejuvenate(draw.indices, *gen_,
                                               cfg_.rejuvenation_probability,
                                               cfg_.max_update_rounds, rejuv_rng);
  }

  void step_midrun() {
    const EnergyModel model = current_ebm();
    const Batch pos = select_positive_batch();
    emit(TrainEvent::kDrawBank);
    CounterRng draw_rng = step_rng(streams::kBankDraw);
    DrawResult draw = persistent_->draw(cfg_.batch_size, draw_rng);
    emit(TrainEvent::kLangevinNegatives);
    const Batch neg =
        run_negative_chains(model, draw.states, draw.indices, streams::kLangevinNoise);
    update_ebm(model, pos, neg);
    emit(TrainEvent::kReturnBank);
    persistent_->return_batch(draw.indices, neg, cfg_.mcmc_steps);
    emit(TrainEvent::kRejuvenate);
    CounterRng rejuv_rng = step_rng(streams::kRejuvenation);
    rejuvenation_count_ += persistent_->rejuvenate(draw.indices, *source_,
                                                   cfg_.rejuvenation_probability, rejuv_rng);
  }

  void step_longrun() {
    const EnergyModel model = current_ebm();
    const Batch pos = select_positive_batch();
    emit(TrainEvent::kDrawBank);
    CounterRng draw_rng = step_rng(streams::kBankDraw);
    DrawResult update_draw = dual_->draw_update(cfg_.batch_size, draw_rng);
    DrawResult burn_draw = dual_->draw_burn_in(cfg_.batch_size, draw_rng);
    emit(TrainEvent::kLangevinNegatives);
    const Batch neg = run_negative_chains(model, update_draw.states, update_draw.indices,
                                          streams::kLangevinNoise);
    emit(TrainEvent::kLangevinBurnIn);
    const Batch burn = run_negative_chains(model, burn_draw.states, burn_draw.indices,
                                           streams::kBurnInNoise);
    update_ebm(model, pos, neg);
    emit(TrainEvent::kCountIncrement);
    dual_->increment_counts(burn_draw.indices);
    emit(TrainEvent::kReturnBank);
    dual_->return_update(update_draw.indices, neg, cfg_.mcmc_steps);
    dual_->return_burn_in(burn_draw.indices, burn, cfg_.mcmc_steps);
    emit(TrainEvent::kPromote);
    CounterRng promo_rng = step_rng(streams::kPromotion);
    promotion_count_ += dual_->promote(burn_draw.indices, *source_, promo_rng);
  }

  TrainConfig cfg_;
  ToyDataset dataset_;
  TrainHooks hooks_;
  RngKey root_;
  std::chrono::steady_clock::time_point start_;

  Batch data_;
  DenseNet ebm_net_;
  AdamState adam_ebm_;
  AdamState adam_gen_;
  std::optional<Generator> gen_;
  std::optional<EnergyModel> prior_;
  std::optional<RejuvenationSource> source_;
  std::optional<PairedBank> paired_;
  std::optional<PersistentBank> persistent_;
  std::optional<DualBank> dual_;

  std::uint64_t step_ = 0;
  std::uint64_t rejuvenation_count_ = 0;
  std::uint64_t promotion_count_ = 0;
  double last_grad_norm_ = 0.0;
  std::optional<MetricsRow> pending_row_;
  std::vector<MetricsRow> rows_;
};

struct TrainResult {
  EnergyModel ebm;
  std::optional<Generator> generator;
  std::vector<MetricsRow> metrics;
};

inline TrainResult train_shortrun(const TrainConfig& cfg, const ToyDataset& ds,
                                  TrainHooks hooks = {}) {
  if (cfg.regime != Regime::kShortrun)
    throw std::invalid_argument("train_shortrun requires the shortrun regime");
  LifecycleTrainer trainer(cfg, ds, {}, {}, std::move(hooks));
  trainer.run_to_completion();
  return {trainer.current_ebm(), trainer.generator(), trainer.metrics()};
}

inline TrainResult train_midrun(const TrainConfig& cfg, const ToyDataset& ds,
                                Generator frozen_generator, TrainHooks hooks = {}) {
  if (cfg.regime != Regime::kMidrun)
    throw std::invalid_argument("train_midrun requires the midrun regime");
  LifecycleTrainer trainer(cfg, ds, std::move(frozen_generator), {}, std::move(hooks));
  trainer.run_to_completion();
  return {trainer.current_ebm(), {}, trainer.metrics()};
}

inline TrainResult train_longrun(const TrainConfig& cfg, const ToyDataset& ds,
                                 Generator frozen_generator, EnergyModel prior,
                                 TrainHooks hooks = {}) {
  if (cfg.regime != Regime::kLongrun)
    throw std::invalid_argument("train_longrun requires the longrun regime");
  LifecycleTrainer trainer(cfg, ds, std::move(frozen_generator), std::move(prior),
                           std::move(hooks));
  trainer.run_to_completion();
  return {trainer.current_ebm(), {}, trainer.metrics()};
}

}  // namespace ebml
