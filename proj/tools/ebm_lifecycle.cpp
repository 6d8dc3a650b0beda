// ebm-lifecycle: train, sample, and evaluate energy-based models
// across shortrun, midrun, and longrun MCMC regimes on toy densities.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ebml/config.hpp"
#include "ebml/runner.hpp"
#include "ebml/version.hpp"

namespace {

void write_error_record(const std::filesystem::path& out_dir, const std::string& kind,
                        const std::string& message) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) return;
  nlohmann::json record;
  record["error"] = kind;
  record["message"] = message;
  std::ofstream out(out_dir / "error.json");
  out << record.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"energy-based model lifecycle runner"};
  app.set_version_flag("--version", std::string("ebm-lifecycle ") + ebml::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::string> resume;
  std::optional<std::uint64_t> seed;

  const std::vector<std::string> subcommands{
      "train-shortrun", "train-midrun", "train-longrun", "sample",
      "steady-state",   "defend",       "bank-stats"};
  for (const auto& name : subcommands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--resume", resume,
                    "checkpoint to resume from (training) or evaluate (other subcommands)");
    sub->add_option("--seed", seed, "override the config seed");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  try {
    ebml::ExperimentConfig cfg = ebml::parse_config(config_path);
    if (seed) cfg.seed = *seed;
    return ebml::run(subcommand, cfg, out_dir, resume);
  } catch (const ebml::ConfigError& e) {
    std::cerr << e.what() << "\n";
    write_error_record(out_dir, "config", e.what());
    return 1;
  } catch (const ebml::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    write_error_record(out_dir, "checkpoint", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    write_error_record(out_dir, "runtime", e.what());
    return 1;
  }
}
