#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gapnas/search.hpp"

namespace gapnas {

/// Everything one run needs. Every field has a default.
struct RunConfig {
  SearchConfig search;
  RetrainConfig retrain;
  PoolPreset op_pool = PoolPreset::kMlp;
  std::string out_dir = "run";
  /// Name of the preset applied before the config file (echo only).
  std::string preset;

  /// Copies derived settings (op pool) into the nested configs and validates.
  void finalize();
};

std::string relax_name(const RelaxConfig& r);
/// "softmax" or "gumbel:<tau>".
RelaxConfig parse_relax(std::string_view text);

std::vector<std::string> preset_names();
/// Applies a named preset on top of `cfg`. Unknown names raise ConfigError.
void apply_preset(RunConfig& cfg, std::string_view name);

/// Sets one dotted key ("search.rounds", "task.name", ...). Unknown keys and
/// unparsable values raise ConfigError naming the key.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies a flat `key = value` file with `[section]` prefixes.
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin = "<config>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every key with its current value, in the same format the parser reads.
std::string config_to_text(const RunConfig& cfg);

}  // namespace gapnas
