#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "poolnet/model.hpp"
#include "poolnet/trainer.hpp"

namespace poolnet {

/// Everything one CLI invocation needs. Built from a `key = value` file
/// (with `#` comments), then overridden by command-line flags.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path train_manifest;
  std::filesystem::path edge_manifest;
  std::filesystem::path eval_manifest;
  std::filesystem::path output_dir;
};

/// Every key accepted by the config file and by --set.
const std::vector<std::string>& config_keys();

/// Applies one key. Unknown keys and unparsable values throw ConfigError.
void apply_config_key(RunConfig& config, const std::string& key, const std::string& value);

void parse_config(std::istream& in, RunConfig& config, const std::string& source = "<config>");
void load_config_file(const std::filesystem::path& path, RunConfig& config);

/// Config file text that reproduces the model-relevant part of config.
std::string format_model_config(const ModelConfig& config);

}  // namespace poolnet
