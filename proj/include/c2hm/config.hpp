#pragma once

#include <string>
#include <utility>
#include <vector>

#include "c2hm/experiments.hpp"

namespace c2hm {

/// Every tunable of the lab. Defaults are the frozen experiment settings.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  std::string mnist_images;
  std::string mnist_labels;
  std::size_t train_count = 8000;
  std::size_t test_count = 2000;
  double validation_fraction = 0.1;
  std::string mirror_url;

  ModelConfig model;
  LossWeights weights;
  TrainConfig train;
  ProbeConfig probe;
  std::size_t gf_per_class = 64;

  ModelLoopOptions loop;

  CurseConfig curse;

  DeltaConfig delta;
  std::vector<double> delta_betas{0.0, 0.1, 1.0};
  std::size_t delta_burn_in = 10;

  PlannerConfig planner;
  double map_density = 0.25;
  std::size_t random_maps = 20;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

// All accepted keys in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form. Unknown keys and unparsable values throw
/// ConfigError naming the key.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Flat `key = value` lines; `#` starts a comment, blank lines are skipped.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
void apply_config_text(RunConfig& config, const std::string& text);
void apply_config_file(RunConfig& config, const std::string& path);
// `key = value` for every key, loadable by apply_config_text.
std::string dump_config(const RunConfig& config);

}  // namespace c2hm
