#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxcal/calibrators.hpp"
#include "auxcal/synth.hpp"

namespace auxcal::cli {

// Fully resolved parameters of one command. Loaded from a JSON config (or a
// manifest written by a previous run) and then overridden by flags.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  int bins = kDefaultBins;
  std::string kind = "ccac";

  // synth
  SynthConfig synth;
  std::string format = "csv";

  // fit / eval / transfer inputs
  std::filesystem::path data;
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path model;
  double train_fraction = 0.75;
  double val_fraction = 0.05;
  double test_fraction = 0.20;

  // calibrator fitting
  std::vector<int> hidden{50, 20};
  int epochs = 1000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  HyperGrid grid;
  std::optional<std::string> rule;
  int sb_bins = 20;
  std::vector<double> rho_grid{0.0, 1e-3, 1e-2, 1e-1, 1.0};
  int dirichlet_epochs = 200;
  double dirichlet_learning_rate = 1e-2;

  // transfer
  int transfer_train_cap = 320;
  int transfer_val_cap = 200;
  int transfer_epochs = 1000;
  double transfer_learning_rate = 1e-2;
};

nlohmann::json to_json(const RunConfig& cfg);
// Applies the keys present in `j` on top of `cfg`. A manifest is accepted
// too: its "config" object is used.
void apply_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

// Result of a command: files written (relative to cfg.out) and warnings.
struct CommandResult {
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
};

CommandResult cmd_synth(const RunConfig& cfg);
CommandResult cmd_fit(const RunConfig& cfg);
CommandResult cmd_eval(const RunConfig& cfg);
CommandResult cmd_transfer(const RunConfig& cfg);

CommandResult run_command(const RunConfig& cfg);

}  // namespace auxcal::cli
