#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ebml/defense.hpp"
#include "ebml/errors.hpp"
#include "ebml/net.hpp"
#include "ebml/optim.hpp"
#include "ebml/trainer.hpp"

namespace ebml {

// Full experiment description. Defaults mirror the reference
// hyperparameter tables per regime; every field is addressable from
// the config file and unknown keys are fatal.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  struct Data {
    std::string name = "dw1d";
    std::size_t size = 10000;
  } data;

  struct Energy {
    std::string kind = "mlp";  // mlp | quadratic | double-well | data-mixture
    std::vector<std::size_t> hidden{16, 16};
    Activation activation = Activation::kTanh;
    double leak = 0.05;
    double init_scale = 1.0;
    double tau = 0.15;          // gaussian prior strength of the composite
    std::string prior = "none"; // checkpoint path for the longrun prior
  } energy;

  struct Sampler {
    double epsilon = 1e-2;
    std::size_t steps = 100;
    double temperature = 1e-4;
    std::size_t record_every = 0;
    std::size_t chains = 512;
    std::string init = "generator";  // generator | data | noise | bank
    double noise_scale = 1.0;
    std::size_t grid_bins = 64;
    std::optional<double> grid_min;
    std::optional<double> grid_max;
  } sampler;

  struct Bank {
    std::size_t size = 10000;
    std::size_t burnin_size = 1000;
    std::size_t burnin_threshold = 750;
  } bank;

  struct Trainer {
    std::string regime = "shortrun";
    std::size_t steps = 100000;
    std::size_t batch = 64;
    std::string lr = "1e-4";  // number or "anneal"
    std::string anneal;       // "rate:step,rate:step,..."; empty = reference schedule
    double rejuvenation_probability = 0.5;
    std::uint64_t max_update_rounds = 2;
    double data_epsilon = 1e-2;
    double gradient_clip = 0.0;
    std::size_t metrics_every = 50;
    std::size_t checkpoint_every = 0;
    double generator_lr = 1e-4;
    double generator_clip = 0.0;
    std::vector<std::size_t> generator_hidden{32, 32};
    double generator_init_scale = 1.0;
    std::size_t latent_dim = 4;
    bool generator_recenter = true;
    std::size_t fixture_budget = 4000;  // frozen-generator fit samples
  } trainer;

  struct Defense {
    double epsilon = 8.0 / 255.0;
    double alpha = 2.0 / 255.0;
    std::size_t steps = 50;
    std::size_t attack_reps = 48;
    std::size_t defense_reps = 128;
    std::size_t langevin_steps = 2000;
    double langevin_epsilon = 1e-2;
    double temperature = 1e-4;
    std::size_t examples = 64;
    bool random_start = true;
    std::vector<std::size_t> classifier_hidden{16};
    std::size_t classifier_train_samples = 512;
    std::size_t classifier_steps = 2000;
    double classifier_lr = 0.5;
  } defense;

  struct Output {
    std::string metrics_filename = "metrics.csv";
    std::string samples_filename = "samples.csv";
  } output;

  AnnealSchedule ebm_schedule() const {
    if (trainer.lr == "anneal") {
      if (trainer.anneal.empty()) return AnnealSchedule::default_anneal();
      AnnealSchedule s;
      std::stringstream ss(trainer.anneal);
      std::string pair;
      while (std::getline(ss, pair, ',')) {
        const auto colon = pair.find(':');
        s.points.push_back({std::stod(pair.substr(0, colon)),
                            std::stoull(pair.substr(colon + 1))});
      }
      return s;
    }
    return AnnealSchedule::constant(std::stod(trainer.lr));
  }

  Regime regime() const {
    if (trainer.regime == "shortrun") return Regime::kShortrun;
    if (trainer.regime == "midrun") return Regime::kMidrun;
    return Regime::kLongrun;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.regime = regime();
    cfg.seed = seed;
    cfg.data_size = data.size;
    cfg.batch_size = trainer.batch;
    cfg.mcmc_steps = sampler.steps;
    cfg.langevin_epsilon = sampler.epsilon;
    cfg.temperature = sampler.temperature;
    cfg.data_epsilon = trainer.data_epsilon;
    cfg.ebm_hidden = energy.hidden;
    cfg.ebm_activation = energy.activation;
    cfg.ebm_leak = energy.leak;
    cfg.ebm_init_scale = energy.init_scale;
    cfg.ebm_lr = ebm_schedule();
    cfg.gradient_clip = trainer.gradient_clip;
    cfg.bank_size = bank.size;
    cfg.rejuvenation_probability = trainer.rejuvenation_probability;
    cfg.max_update_rounds = trainer.max_update_rounds;
    cfg.burn_in_bank_size = bank.burnin_size;
    cfg.burn_in_threshold = bank.burnin_threshold;
    cfg.sigma = energy.tau;
    cfg.latent_dim = trainer.latent_dim;
    cfg.generator_hidden = trainer.generator_hidden;
    cfg.generator_init_scale = trainer.generator_init_scale;
    cfg.generator_lr = trainer.generator_lr;
    cfg.generator_clip = trainer.generator_clip;
    cfg.generator_recenter = trainer.generator_recenter;
    cfg.total_steps = trainer.steps;
    cfg.metrics_every = trainer.metrics_every;
    cfg.checkpoint_every = trainer.checkpoint_every;
    return cfg;
  }

  AttackConfig attack_config() const {
    AttackConfig a;
    a.epsilon = defense.epsilon;
    a.alpha = defense.alpha;
    a.steps = defense.steps;
    a.attack_reps = defense.attack_reps;
    a.random_start = defense.random_start;
    return a;
  }

  DefenseConfig defense_config() const {
    DefenseConfig d;
    d.langevin_steps = defense.langevin_steps;
    d.defense_reps = defense.defense_reps;
    d.langevin_epsilon = defense.langevin_epsilon;
    d.temperature = defense.temperature;
    return d;
  }

  std::string canonical_text() const;
};

namespace detail {

struct IniDocument {
  // section -> key -> value; "" is the top-level section.
  std::map<std::string, std::map<std::string, std::string>> sections;
};

inline std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

inline IniDocument parse_ini(std::string_view text, std::vector<std::string>& errors) {
  IniDocument doc;
  std::string current;
  std::size_t lineno = 0;
  std::stringstream ss{std::string(text)};
  std::string raw;
  while (std::getline(ss, raw)) {
    ++lineno;
    std::string line = raw;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back("line " + std::to_string(lineno) + ": malformed section header");
        continue;
      }
      current = trim(line.substr(1, line.size() - 2));
      doc.sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    auto& section = doc.sections[current];
    if (section.count(key)) {
      errors.push_back("duplicate key '" + key + "' in section [" + current + "]");
      continue;
    }
    section[key] = value;
  }
  return doc;
}

// Typed key consumption; leftovers are reported as unknown keys.
class SectionReader {
 public:
  SectionReader(IniDocument& doc, std::string section, std::vector<std::string>& errors)
      : doc_(doc), section_(std::move(section)), errors_(errors) {}

  std::optional<std::string> raw(const std::string& key) {
    auto sec = doc_.sections.find(section_);
    if (sec == doc_.sections.end()) return std::nullopt;
    auto it = sec->second.find(key);
    if (it == sec->second.end()) return std::nullopt;
    std::string value = it->second;
    sec->second.erase(it);
    return value;
  }

  void get(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }

  void get(const std::string& key, double& out, double lo = -1e300, double hi = 1e300) {
    if (auto v = raw(key)) {
      try {
        const double parsed = std::stod(*v);
        if (parsed < lo || parsed > hi) {
          errors_.push_back(where(key) + ": value " + *v + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
          return;
        }
        out = parsed;
      } catch (...) {
        errors_.push_back(where(key) + ": expected a number, got '" + *v + "'");
      }
    }
  }

  void get(const std::string& key, std::size_t& out) {
    if (auto v = raw(key)) {
      try {
        out = std::stoull(*v);
      } catch (...) {
        errors_.push_back(where(key) + ": expected a non-negative integer, got '" + *v +
                          "'");
      }
    }
  }

  void get(const std::string& key, bool& out) {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        out = false;
      } else {
        errors_.push_back(where(key) + ": expected a boolean, got '" + *v + "'");
      }
    }
  }

  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (auto v = raw(key)) {
      std::vector<std::size_t> dims;
      std::stringstream ss(*v);
      std::string item;
      bool ok = true;
      while (std::getline(ss, item, ',')) {
        try {
          dims.push_back(std::stoull(trim(item)));
        } catch (...) {
          ok = false;
        }
      }
      if (!ok || dims.empty()) {
        errors_.push_back(where(key) + ": expected comma-separated sizes, got '" + *v + "'");
      } else {
        out = dims;
      }
    }
  }

  void get(const std::string& key, Activation& out) {
    if (auto v = raw(key)) {
      if (*v == "tanh") {
        out = Activation::kTanh;
      } else if (*v == "leaky-relu") {
        out = Activation::kLeakyRelu;
      } else if (*v == "identity") {
        out = Activation::kIdentity;
      } else {
        errors_.push_back(where(key) + ": unknown activation '" + *v + "'");
      }
    }
  }

  void choice(const std::string& key, std::string& out,
              const std::vector<std::string>& allowed) {
    if (auto v = raw(key)) {
      if (std::find(allowed.begin(), allowed.end(), *v) == allowed.end()) {
        std::string opts;
        for (const auto& a : allowed) opts += (opts.empty() ? "" : " | ") + a;
        errors_.push_back(where(key) + ": '" + *v + "' is not one of " + opts);
      } else {
        out = *v;
      }
    }
  }

 private:
  std::string where(const std::string& key) const {
    return "[" + section_ + "] " + key;
  }

  IniDocument& doc_;
  std::string section_;
  std::vector<std::string>& errors_;
};

}  // namespace detail

inline ExperimentConfig parse_config_text(std::string_view text) {
  std::vector<std::string> errors;
  detail::IniDocument doc = detail::parse_ini(text, errors);

  ExperimentConfig cfg;

  // Regime first: it selects the table the remaining defaults follow.
  {
    detail::SectionReader tr(doc, "trainer", errors);
    std::string regime = "shortrun";
    tr.choice("regime", regime, {"shortrun", "midrun", "longrun"});
    cfg.trainer.regime = regime;
    // The key was consumed; reinsert so the main pass below sees a
    // uniform schema.
    doc.sections["trainer"]["regime"] = regime;
  }
  if (cfg.trainer.regime == "shortrun") {
    cfg.sampler.epsilon = 5e-3;
    cfg.sampler.temperature = 1e-4;
    cfg.trainer.steps = 100000;
    cfg.trainer.lr = "1e-4";
    cfg.trainer.rejuvenation_probability = 0.5;
    cfg.trainer.data_epsilon = 1e-2;
    cfg.bank.size = 10000;
  } else if (cfg.trainer.regime == "midrun") {
    cfg.sampler.epsilon = 1e-2;
    cfg.sampler.temperature = 1e-4;
    cfg.trainer.steps = 150000;
    cfg.trainer.lr = "anneal";
    cfg.trainer.rejuvenation_probability = 0.025;
    cfg.trainer.data_epsilon = 2e-2;
    cfg.bank.size = 20000;
  } else {
    cfg.sampler.epsilon = 1e-2;
    cfg.sampler.temperature = 1e-4;
    cfg.trainer.steps = 250000;
    cfg.trainer.lr = "anneal";
    cfg.trainer.rejuvenation_probability = 0.0;  // longrun rejuvenates via promotion
    cfg.trainer.data_epsilon = 2e-2;
    cfg.bank.size = 10000;
  }

  {
    detail::SectionReader top(doc, "", errors);
    bool have_seed = false;
    if (auto v = top.raw("seed")) {
      try {
        cfg.seed = std::stoull(*v);
        have_seed = true;
      } catch (...) {
        errors.push_back("seed: expected an unsigned integer, got '" + *v + "'");
        have_seed = true;  // present but malformed; already reported
      }
    }
    if (!have_seed) errors.push_back("missing mandatory top-level key: seed");
  }
  {
    detail::SectionReader r(doc, "data", errors);
    r.choice("name", cfg.data.name, ToyDataset::names());
    r.get("size", cfg.data.size);
    if (cfg.data.size == 0) errors.push_back("[data] size: must be positive");
  }
  {
    detail::SectionReader r(doc, "energy", errors);
    r.choice("kind", cfg.energy.kind, {"mlp", "quadratic", "double-well", "data-mixture"});
    r.get("hidden", cfg.energy.hidden);
    r.get("activation", cfg.energy.activation);
    r.get("leak", cfg.energy.leak, 1e-9, 1.0);
    r.get("init_scale", cfg.energy.init_scale, 1e-9, 1e6);
    r.get("tau", cfg.energy.tau, 1e-12, 1e300);
    r.get("prior", cfg.energy.prior);
  }
  {
    detail::SectionReader r(doc, "sampler", errors);
    r.get("epsilon", cfg.sampler.epsilon, 1e-300, 1e6);
    r.get("steps", cfg.sampler.steps);
    r.get("temperature", cfg.sampler.temperature, 1e-300, 1e300);
    r.get("record_every", cfg.sampler.record_every);
    r.get("chains", cfg.sampler.chains);
    r.choice("init", cfg.sampler.init, {"generator", "data", "noise", "bank"});
    r.get("noise_scale", cfg.sampler.noise_scale, 0.0, 1e300);
    r.get("grid_bins", cfg.sampler.grid_bins);
    double gmin = 0.0, gmax = 0.0;
    bool has_min = false, has_max = false;
    if (auto v = r.raw("grid_min")) {
      gmin = std::stod(*v);
      has_min = true;
    }
    if (auto v = r.raw("grid_max")) {
      gmax = std::stod(*v);
      has_max = true;
    }
    if (has_min != has_max) {
      errors.push_back("[sampler] grid_min/grid_max must be given together");
    } else if (has_min) {
      if (!(gmax > gmin)) {
        errors.push_back("[sampler] grid_max must exceed grid_min");
      } else {
        cfg.sampler.grid_min = gmin;
        cfg.sampler.grid_max = gmax;
      }
    }
    if (cfg.sampler.chains == 0) errors.push_back("[sampler] chains: must be positive");
    if (cfg.sampler.grid_bins == 0 || cfg.sampler.grid_bins > 512)
      errors.push_back("[sampler] grid_bins: must lie in [1, 512]");
  }
  {
    detail::SectionReader r(doc, "bank", errors);
    r.get("size", cfg.bank.size);
    r.get("burnin_size", cfg.bank.burnin_size);
    r.get("burnin_threshold", cfg.bank.burnin_threshold);
    if (cfg.bank.size == 0) errors.push_back("[bank] size: must be positive");
    if (cfg.bank.burnin_threshold == 0)
      errors.push_back("[bank] burnin_threshold: must be positive");
  }
  {
    detail::SectionReader r(doc, "trainer", errors);
    std::string regime_again;
    r.choice("regime", regime_again, {"shortrun", "midrun", "longrun"});
    r.get("steps", cfg.trainer.steps);
    r.get("batch", cfg.trainer.batch);
    r.get("lr", cfg.trainer.lr);
    r.get("anneal", cfg.trainer.anneal);
    r.get("rejuvenation_probability", cfg.trainer.rejuvenation_probability, 0.0, 1.0);
    r.get("max_update_rounds", cfg.trainer.max_update_rounds);
    r.get("data_epsilon", cfg.trainer.data_epsilon, 0.0, 1e6);
    r.get("gradient_clip", cfg.trainer.gradient_clip, 0.0, 1e300);
    r.get("metrics_every", cfg.trainer.metrics_every);
    r.get("checkpoint_every", cfg.trainer.checkpoint_every);
    r.get("generator_lr", cfg.trainer.generator_lr, 0.0, 1e6);
    r.get("generator_clip", cfg.trainer.generator_clip, 0.0, 1e300);
    r.get("generator_hidden", cfg.trainer.generator_hidden);
    r.get("generator_init_scale", cfg.trainer.generator_init_scale, 1e-9, 1e6);
    r.get("latent_dim", cfg.trainer.latent_dim);
    r.get("generator_recenter", cfg.trainer.generator_recenter);
    r.get("fixture_budget", cfg.trainer.fixture_budget);
    if (cfg.trainer.batch == 0) errors.push_back("[trainer] batch: must be positive");
    if (cfg.trainer.lr != "anneal") {
      try {
        if (!(std::stod(cfg.trainer.lr) > 0.0))
          errors.push_back("[trainer] lr: must be positive");
      } catch (...) {
        errors.push_back("[trainer] lr: expected a number or 'anneal', got '" +
                         cfg.trainer.lr + "'");
      }
    }
    if (!cfg.trainer.anneal.empty()) {
      try {
        ExperimentConfig probe = cfg;
        probe.trainer.lr = "anneal";
        probe.ebm_schedule().validate();
      } catch (const std::exception& e) {
        errors.push_back(std::string("[trainer] anneal: ") + e.what());
      }
    }
  }
  {
    detail::SectionReader r(doc, "defense", errors);
    r.get("epsilon", cfg.defense.epsilon, 0.0, 1e6);
    r.get("alpha", cfg.defense.alpha, 0.0, 1e6);
    r.get("steps", cfg.defense.steps);
    r.get("attack_reps", cfg.defense.attack_reps);
    r.get("defense_reps", cfg.defense.defense_reps);
    r.get("langevin_steps", cfg.defense.langevin_steps);
    r.get("langevin_epsilon", cfg.defense.langevin_epsilon, 1e-300, 1e6);
    r.get("temperature", cfg.defense.temperature, 1e-300, 1e300);
    r.get("examples", cfg.defense.examples);
    r.get("random_start", cfg.defense.random_start);
    r.get("classifier_hidden", cfg.defense.classifier_hidden);
    r.get("classifier_train_samples", cfg.defense.classifier_train_samples);
    r.get("classifier_steps", cfg.defense.classifier_steps);
    r.get("classifier_lr", cfg.defense.classifier_lr, 1e-12, 1e6);
    if (cfg.defense.alpha > cfg.defense.epsilon)
      errors.push_back("[defense] alpha: must not exceed epsilon");
    if (cfg.defense.steps == 0) errors.push_back("[defense] steps: must be positive");
    if (cfg.defense.attack_reps == 0 || cfg.defense.defense_reps == 0)
      errors.push_back("[defense] replicate counts must be positive");
    if (cfg.defense.examples == 0) errors.push_back("[defense] examples: must be positive");
  }
  {
    detail::SectionReader r(doc, "output", errors);
    r.get("metrics_filename", cfg.output.metrics_filename);
    r.get("samples_filename", cfg.output.samples_filename);
  }

  // Anything still present is unknown.
  static const std::vector<std::string> kKnownSections{
      "", "data", "energy", "sampler", "bank", "trainer", "defense", "output"};
  for (const auto& [section, keys] : doc.sections) {
    const bool known = std::find(kKnownSections.begin(), kKnownSections.end(), section) !=
                       kKnownSections.end();
    if (!known) {
      errors.push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, value] : keys) {
      if (section == "trainer" && key == "regime") continue;  // consumed up front
      errors.push_back("unknown key '" + key + "' in section [" + section + "]");
    }
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file: " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

inline std::string fmt_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace detail

// Canonical text with every default applied: the manifest copy and
// the checkpoint-compatibility hash are both derived from this.
inline std::string ExperimentConfig::canonical_text() const {
  using detail::fmt_double;
  using detail::fmt_sizes;
  std::string s;
  s += "seed = " + std::to_string(seed) + "\n";
  s += "[bank]\n";
  s += "burnin_size = " + std::to_string(bank.burnin_size) + "\n";
  s += "burnin_threshold = " + std::to_string(bank.burnin_threshold) + "\n";
  s += "size = " + std::to_string(bank.size) + "\n";
  s += "[data]\n";
  s += "name = " + data.name + "\n";
  s += "size = " + std::to_string(data.size) + "\n";
  s += "[defense]\n";
  s += "alpha = " + fmt_double(defense.alpha) + "\n";
  s += "attack_reps = " + std::to_string(defense.attack_reps) + "\n";
  s += "classifier_hidden = " + fmt_sizes(defense.classifier_hidden) + "\n";
  s += "classifier_lr = " + fmt_double(defense.classifier_lr) + "\n";
  s += "classifier_steps = " + std::to_string(defense.classifier_steps) + "\n";
  s += "classifier_train_samples = " + std::to_string(defense.classifier_train_samples) +
       "\n";
  s += "defense_reps = " + std::to_string(defense.defense_reps) + "\n";
  s += "epsilon = " + fmt_double(defense.epsilon) + "\n";
  s += "examples = " + std::to_string(defense.examples) + "\n";
  s += "langevin_epsilon = " + fmt_double(defense.langevin_epsilon) + "\n";
  s += "langevin_steps = " + std::to_string(defense.langevin_steps) + "\n";
  s += "random_start = " + std::string(defense.random_start ? "true" : "false") + "\n";
  s += "steps = " + std::to_string(defense.steps) + "\n";
  s += "temperature = " + fmt_double(defense.temperature) + "\n";
  s += "[energy]\n";
  s += "activation = " + activation_name(energy.activation) + "\n";
  s += "hidden = " + fmt_sizes(energy.hidden) + "\n";
  s += "init_scale = " + fmt_double(energy.init_scale) + "\n";
  s += "kind = " + energy.kind + "\n";
  s += "leak = " + fmt_double(energy.leak) + "\n";
  s += "prior = " + energy.prior + "\n";
  s += "tau = " + fmt_double(energy.tau) + "\n";
  s += "[output]\n";
  s += "metrics_filename = " + output.metrics_filename + "\n";
  s += "samples_filename = " + output.samples_filename + "\n";
  s += "[sampler]\n";
  s += "chains = " + std::to_string(sampler.chains) + "\n";
  s += "epsilon = " + fmt_double(sampler.epsilon) + "\n";
  s += "grid_bins = " + std::to_string(sampler.grid_bins) + "\n";
  if (sampler.grid_min) s += "grid_min = " + fmt_double(*sampler.grid_min) + "\n";
  if (sampler.grid_max) s += "grid_max = " + fmt_double(*sampler.grid_max) + "\n";
  s += "init = " + sampler.init + "\n";
  s += "noise_scale = " + fmt_double(sampler.noise_scale) + "\n";
  s += "record_every = " + std::to_string(sampler.record_every) + "\n";
  s += "steps = " + std::to_string(sampler.steps) + "\n";
  s += "temperature = " + fmt_double(sampler.temperature) + "\n";
  s += "[trainer]\n";
  s += "anneal = " + trainer.anneal + "\n";
  s += "batch = " + std::to_string(trainer.batch) + "\n";
  s += "checkpoint_every = " + std::to_string(trainer.checkpoint_every) + "\n";
  s += "data_epsilon = " + fmt_double(trainer.data_epsilon) + "\n";
  s += "fixture_budget = " + std::to_string(trainer.fixture_budget) + "\n";
  s += "generator_clip = " + fmt_double(trainer.generator_clip) + "\n";
  s += "generator_hidden = " + fmt_sizes(trainer.generator_hidden) + "\n";
  s += "generator_init_scale = " + fmt_double(trainer.generator_init_scale) + "\n";
  s += "generator_lr = " + fmt_double(trainer.generator_lr) + "\n";
  s += "generator_recenter = " + std::string(trainer.generator_recenter ? "true" : "false") +
       "\n";
  s += "gradient_clip = " + fmt_double(trainer.gradient_clip) + "\n";
  s += "latent_dim = " + std::to_string(trainer.latent_dim) + "\n";
  s += "lr = " + trainer.lr + "\n";
  s += "max_update_rounds = " + std::to_string(trainer.max_update_rounds) + "\n";
  s += "metrics_every = " + std::to_string(trainer.metrics_every) + "\n";
  s += "regime = " + trainer.regime + "\n";
  s += "rejuvenation_probability = " + fmt_double(trainer.rejuvenation_probability) + "\n";
  s += "steps = " + std::to_string(trainer.steps) + "\n";
  return s;
}

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a(cfg.canonical_text());
}

}  // namespace ebml
