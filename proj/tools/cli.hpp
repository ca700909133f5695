#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mods/trainer.hpp"

namespace mods::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumerical = 4 };

struct Preset {
  std::string name;
  double learning_rate;
  std::size_t batch_size;
  std::size_t hidden;
  std::size_t depth;
  double alpha;
  double weight_decay;
  std::size_t patience;
  std::array<double, 2> label_range;
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);

/// Everything one command needs, after merging preset, config file and flags.
struct RunConfig {
  std::string preset;
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string split = "val";
  SynthConfig synth;
  trainer::ModelConfig model;
  trainer::TrainConfig train;
  // Keys given explicitly in the model section; others may be derived from the dataset.
  nlohmann::ordered_json model_overrides = nlohmann::ordered_json::object();
};

SynthConfig synth_from_json(const nlohmann::ordered_json& j, SynthConfig base = {});
nlohmann::ordered_json synth_to_json(const SynthConfig& c);

struct Flags {
  std::string config;
  std::string preset;
  std::string out;
  std::string ablation;
  std::string data;
  std::string checkpoint;
  std::string split;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

// Defaults < preset < config file < flags. Throws ConfigError.
RunConfig resolve(const Flags& flags);

/// Runs one command line; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mods::cli
