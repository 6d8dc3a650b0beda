#pragma once

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebml/checkpoint.hpp"
#include "ebml/config.hpp"
#include "ebml/defense.hpp"
#include "ebml/version.hpp"

namespace ebml {

namespace detail {

inline std::string csv_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) {
    out_.open(path, std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

inline std::string metrics_header() {
  return "step,lr,mean_pos_energy,mean_neg_energy,grad_norm,diversity,"
         "rejuvenation_count,promotion_count,wall_ms";
}

inline std::vector<std::string> metrics_cells(const MetricsRow& m) {
  return {std::to_string(m.step),
          csv_double(m.lr),
          csv_double(m.mean_pos_energy),
          csv_double(m.mean_neg_energy),
          csv_double(m.grad_norm),
          csv_double(m.diversity),
          std::to_string(m.rejuvenation_count),
          std::to_string(m.promotion_count),
          csv_double(m.wall_ms)};
}

}  // namespace detail

class Runner {
 public:
  Runner(ExperimentConfig cfg, std::filesystem::path out_dir,
         std::optional<std::string> resume = {})
      : cfg_(std::move(cfg)),
        out_(std::move(out_dir)),
        resume_(std::move(resume)),
        root_(RngKey::root(cfg_.seed)),
        started_(std::chrono::steady_clock::now()) {
    std::filesystem::create_directories(out_);
  }

  int run(const std::string& subcommand) {
    if (subcommand == "train-shortrun") return train(Regime::kShortrun);
    if (subcommand == "train-midrun") return train(Regime::kMidrun);
    if (subcommand == "train-longrun") return train(Regime::kLongrun);
    if (subcommand == "sample") return sample();
    if (subcommand == "steady-state") return steady_state();
    if (subcommand == "defend") return defend();
    if (subcommand == "bank-stats") return bank_stats();
    throw std::invalid_argument("unknown subcommand: " + subcommand);
  }

 private:
  ToyDataset dataset() const { return ToyDataset::by_name(cfg_.data.name); }

  std::optional<Checkpoint> loaded_checkpoint() const {
    if (!resume_) return std::nullopt;
    return Checkpoint::load(*resume_);
  }

  // Energy for evaluation subcommands: analytic kinds come from the
  // config, network kinds from the checkpoint (longrun checkpoints
  // rebuild the full prior-composed energy).
  EnergyModel model_from(const ToyDataset& ds, const std::optional<Checkpoint>& ckpt) const {
    if (cfg_.energy.kind == "quadratic") return EnergyModel::quadratic(ds.dim());
    if (cfg_.energy.kind == "double-well") return EnergyModel::double_well(ds.dim());
    if (cfg_.energy.kind == "data-mixture") return ds.data_energy();
    if (!ckpt)
      throw std::invalid_argument("energy kind 'mlp' needs a checkpoint (--resume)");
    EnergyModel active = EnergyModel::mlp(ckpt_io::get_net(*ckpt, "ebm"));
    const auto regime = static_cast<Regime>(static_cast<int>(ckpt->scalar("meta/regime")));
    if (regime == Regime::kLongrun) {
      EnergyModel prior = EnergyModel::mlp(ckpt_io::get_net(*ckpt, "prior"));
      return compose_with_prior(std::move(active), std::move(prior), cfg_.energy.tau);
    }
    return active;
  }

  Generator generator_from(const ToyDataset& ds,
                           const std::optional<Checkpoint>& ckpt) const {
    if (ckpt && ckpt->has("gen/recenter")) return ckpt_io::get_generator(*ckpt, "gen");
    return frozen_generator_fixture(ds, cfg_.trainer.fixture_budget,
                                    root_.child(streams::kFixture));
  }

  EnergyModel prior_from(const ToyDataset& ds) const {
    if (cfg_.energy.prior == "none") {
      // Constant-zero potential: the composite reduces to the active
      // term plus the gaussian confinement.
      Layer l;
      l.w = Matrix(1, ds.dim());
      l.b = {0.0};
      return EnergyModel::mlp(DenseNet({l}));
    }
    const Checkpoint prior_ckpt = Checkpoint::load(cfg_.energy.prior);
    return EnergyModel::mlp(ckpt_io::get_net(prior_ckpt, "ebm"));
  }

  Batch initial_states(const ToyDataset& ds, const std::optional<Checkpoint>& ckpt) const {
    const std::size_t n = cfg_.sampler.chains;
    const RngKey key = root_.child(streams::kSample);
    if (cfg_.sampler.init == "data") return ds.sample(n, key.child(1));
    if (cfg_.sampler.init == "noise") {
      Batch out(n, std::vector<double>(ds.dim()));
      for (std::size_t i = 0; i < n; ++i) {
        CounterRng rng(key.child(2).child(i));
        for (double& v : out[i]) v = cfg_.sampler.noise_scale * rng.gaussian();
      }
      return out;
    }
    if (cfg_.sampler.init == "bank") {
      if (!ckpt) throw std::invalid_argument("init 'bank' needs a checkpoint (--resume)");
      const char* name = ckpt->has("bank/states")
                             ? "bank/states"
                             : (ckpt->has("bank/images") ? "bank/images"
                                                         : "bank/update_states");
      const auto& arr = ckpt->require(name);
      const Batch bank = ckpt_io::unflatten(arr.data, arr.shape[0], arr.shape[1]);
      CounterRng rng(key.child(3));
      Batch out;
      out.reserve(n);
      for (std::size_t i = 0; i < n; ++i) out.push_back(bank[rng.uniform_index(bank.size())]);
      return out;
    }
    // generator
    const Generator gen = generator_from(ds, ckpt);
    return gen.generate(gen.sample_latents(n, key.child(4)));
  }

  void write_manifest(const std::string& subcommand,
                      const std::vector<std::string>& outputs) const {
    nlohmann::json manifest;
    manifest["subcommand"] = subcommand;
    manifest["seed"] = cfg_.seed;
    manifest["version"] = kVersion;
    manifest["config"] = cfg_.canonical_text();
    manifest["config_hash"] = config_hash(cfg_);
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    manifest["outputs"] = outputs;
    std::ofstream out(out_ / "manifest.json");
    out << manifest.dump(2) << "\n";
  }

  int train(Regime regime) {
    if (cfg_.regime() != regime)
      throw std::invalid_argument("config [trainer] regime is '" + cfg_.trainer.regime +
                                  "' but the subcommand expects another regime");
    const ToyDataset ds = dataset();
    TrainConfig tc = cfg_.train_config();

    std::optional<Generator> frozen;
    std::optional<EnergyModel> prior;
    if (regime != Regime::kShortrun)
      frozen = frozen_generator_fixture(ds, cfg_.trainer.fixture_budget,
                                        root_.child(streams::kFixture));
    if (regime == Regime::kLongrun) prior = prior_from(ds);

    detail::CsvWriter metrics(out_ / cfg_.output.metrics_filename,
                              detail::metrics_header());
    const std::uint64_t hash = config_hash(cfg_);

    LifecycleTrainer* trainer_ptr = nullptr;
    TrainHooks hooks;
    hooks.on_metrics = [&metrics](const MetricsRow& m) {
      metrics.row(detail::metrics_cells(m));
    };
    hooks.on_checkpoint = [&](std::uint64_t step) {
      Checkpoint ckpt = checkpoint_from_trainer(*trainer_ptr, hash);
      ckpt.save((out_ / ("ckpt_" + std::to_string(step) + ".eblc")).string());
    };

    LifecycleTrainer trainer(tc, ds, std::move(frozen), std::move(prior), hooks);
    trainer_ptr = &trainer;

    if (resume_) {
      const Checkpoint ckpt = Checkpoint::load(*resume_);
      if (ckpt.config_hash != hash)
        throw CheckpointError("checkpoint was produced under a different config");
      restore_trainer(trainer, ckpt);
    }
    trainer.run_to_completion();

    Checkpoint final = checkpoint_from_trainer(trainer, hash);
    const std::string final_path = (out_ / "ckpt_final.eblc").string();
    final.save(final_path);
    write_manifest(regime_name(regime) == "shortrun"
                       ? "train-shortrun"
                       : (regime_name(regime) == "midrun" ? "train-midrun"
                                                          : "train-longrun"),
                   {cfg_.output.metrics_filename, "ckpt_final.eblc"});
    return 0;
  }

  int sample() {
    const ToyDataset ds = dataset();
    const auto ckpt = loaded_checkpoint();
    const EnergyModel model = model_from(ds, ckpt);
    const Batch x0 = initial_states(ds, ckpt);

    LangevinConfig lcfg;
    lcfg.step_size = cfg_.sampler.epsilon;
    lcfg.num_steps = cfg_.sampler.steps;
    lcfg.temperature = Temperature{cfg_.sampler.temperature};
    lcfg.record_every = cfg_.sampler.record_every;
    lcfg.noise_key = root_.child(streams::kSample).child(0);
    const auto trajs = langevin_run(model, x0, lcfg);

    std::string header = "chain";
    for (std::size_t d = 0; d < ds.dim(); ++d) header += ",x" + std::to_string(d);
    header += ",energy";
    detail::CsvWriter samples(out_ / cfg_.output.samples_filename, header);
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      std::vector<std::string> cells{std::to_string(i)};
      for (double v : trajs[i].final_state) cells.push_back(detail::csv_double(v));
      cells.push_back(detail::csv_double(model.energy(trajs[i].final_state)));
      samples.row(cells);
    }
    std::vector<std::string> outputs{cfg_.output.samples_filename};

    if (cfg_.sampler.record_every > 0) {
      std::string thead = "chain,step";
      for (std::size_t d = 0; d < ds.dim(); ++d) thead += ",x" + std::to_string(d);
      thead += ",energy";
      detail::CsvWriter traj_csv(out_ / "trajectory.csv", thead);
      for (std::size_t i = 0; i < trajs.size(); ++i) {
        for (std::size_t r = 0; r < trajs[i].recorded_states.size(); ++r) {
          std::vector<std::string> cells{std::to_string(i),
                                         std::to_string(r * cfg_.sampler.record_every)};
          for (double v : trajs[i].recorded_states[r])
            cells.push_back(detail::csv_double(v));
          cells.push_back(detail::csv_double(trajs[i].recorded_energies[r]));
          traj_csv.row(cells);
        }
      }
      outputs.push_back("trajectory.csv");
    }
    write_manifest("sample", outputs);
    return 0;
  }

  GridSpec report_grid(const ToyDataset& ds) const {
    if (cfg_.sampler.grid_min) {
      GridSpec g;
      for (std::size_t d = 0; d < ds.dim(); ++d)
        g.axes.push_back(
            {*cfg_.sampler.grid_min, *cfg_.sampler.grid_max, cfg_.sampler.grid_bins});
      return g;
    }
    return ds.oracle_grid(cfg_.sampler.grid_bins);
  }

  int steady_state() {
    const ToyDataset ds = dataset();
    const auto ckpt = loaded_checkpoint();
    const EnergyModel model = model_from(ds, ckpt);
    const Batch x0 = initial_states(ds, ckpt);

    LangevinConfig lcfg;
    lcfg.step_size = cfg_.sampler.epsilon;
    lcfg.num_steps = cfg_.sampler.steps;
    lcfg.temperature = Temperature{cfg_.sampler.temperature};
    lcfg.noise_key = root_.child(streams::kSample).child(0);
    const Batch finals = final_states(langevin_run(model, x0, lcfg));

    const GridSpec grid = report_grid(ds);
    const EmpiricalPmf emp = empirical_pmf(finals, grid);
    const GridPmf model_pmf =
        grid_boltzmann(model, grid, Temperature{cfg_.sampler.temperature});

    nlohmann::json report;
    report["chains"] = cfg_.sampler.chains;
    report["steps"] = cfg_.sampler.steps;
    report["overflow_fraction"] = emp.overflow_fraction;
    report["kl_vs_model"] = kl_divergence(emp.pmf, model_pmf);

    std::optional<GridPmf> data_pmf;
    if (ds.has_density()) {
      data_pmf = grid_boltzmann(ds.data_energy(), grid, Temperature{1.0});
      report["kl_vs_data"] = kl_divergence(emp.pmf, *data_pmf);
      report["kl_vs_data_with_outside"] =
          kl_with_outside(emp, *data_pmf, ds.grid_outside_mass(grid));
      report["data_outside_mass"] = ds.grid_outside_mass(grid);
    }

    std::string header = "cell";
    for (std::size_t d = 0; d < grid.dim(); ++d) header += ",c" + std::to_string(d);
    header += ",empirical,model";
    if (data_pmf) header += ",data";
    detail::CsvWriter hist(out_ / "hist.csv", header);
    for (std::size_t cell = 0; cell < grid.total_cells(); ++cell) {
      std::vector<std::string> cells{std::to_string(cell)};
      for (double c : grid.center(cell)) cells.push_back(detail::csv_double(c));
      cells.push_back(detail::csv_double(emp.pmf.p[cell]));
      cells.push_back(detail::csv_double(model_pmf.p[cell]));
      if (data_pmf) cells.push_back(detail::csv_double(data_pmf->p[cell]));
      hist.row(cells);
    }

    std::ofstream rep(out_ / "report.json");
    rep << report.dump(2) << "\n";
    write_manifest("steady-state", {"hist.csv", "report.json"});
    return 0;
  }

  int defend() {
    const ToyDataset ds = dataset();
    const auto ckpt = loaded_checkpoint();
    const EnergyModel model = model_from(ds, ckpt);

    const Classifier f = fit_classifier(
        ds, cfg_.defense.classifier_hidden, cfg_.defense.classifier_train_samples,
        cfg_.defense.classifier_steps, cfg_.defense.classifier_lr,
        root_.child(streams::kFixture).child(1));

    const Batch examples =
        ds.sample(cfg_.defense.examples, root_.child(streams::kSample).child(7));
    std::vector<int> labels;
    labels.reserve(examples.size());
    for (const auto& x : examples) labels.push_back(ds.label(x));

    const DefenseRecord rec = evaluate_defense(examples, labels, f, model,
                                               cfg_.attack_config(), cfg_.defense_config(),
                                               root_, ds.bounds());

    detail::CsvWriter rows(out_ / "defense.csv",
                           "example,label,natural_pred,robust,first_break_step");
    for (std::size_t i = 0; i < examples.size(); ++i) {
      rows.row({std::to_string(i), std::to_string(labels[i]),
                std::to_string(rec.natural_pred[i]), std::to_string(int(rec.robust_bits[i])),
                std::to_string(rec.first_break_step[i])});
    }

    nlohmann::json report;
    report["examples"] = examples.size();
    report["natural_accuracy"] = rec.natural_accuracy;
    report["robust_accuracy"] = rec.robust_accuracy;
    std::ofstream rep(out_ / "report.json");
    rep << report.dump(2) << "\n";
    write_manifest("defend", {"defense.csv", "report.json"});
    return 0;
  }

  int bank_stats() {
    const auto ckpt = loaded_checkpoint();
    if (!ckpt) throw std::invalid_argument("bank-stats needs a checkpoint (--resume)");

    const char* log_name = ckpt->has("bank/rejuv_log") ? "bank/rejuv_log" : "bank/promo_log";
    const auto log = ckpt_io::from_doubles<std::uint64_t>(ckpt->require(log_name).data);
    const LifetimeStats stats = lifetime_stats(std::span<const std::uint64_t>(log));

    detail::CsvWriter hist(out_ / "lifetimes.csv", "lifetime,count");
    for (const auto& [lifetime, count] : stats.histogram)
      hist.row({std::to_string(lifetime), std::to_string(count)});

    nlohmann::json report;
    report["events"] = stats.events;
    report["mean_lifetime"] = stats.mean;
    report["log"] = log_name;
    if (stats.events == 0) report["note"] = "no rejuvenation events recorded";
    std::ofstream rep(out_ / "report.json");
    rep << report.dump(2) << "\n";
    write_manifest("bank-stats", {"lifetimes.csv", "report.json"});
    return 0;
  }

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  std::optional<std::string> resume_;
  RngKey root_;
  std::chrono::steady_clock::time_point started_;
};

inline int run(const std::string& subcommand, const ExperimentConfig& cfg,
               const std::filesystem::path& out_dir,
               std::optional<std::string> resume = {}) {
  Runner runner(cfg, out_dir, std::move(resume));
  return runner.run(subcommand);
}

}  // namespace ebml
