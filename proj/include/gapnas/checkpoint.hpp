#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gapnas/config.hpp"

namespace gapnas {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Library version baked in at build time.
std::string_view code_version();

/// {"shape": [...], "data": [...]}; doubles round-trip exactly.
nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

/// Object keyed by parameter name.
nlohmann::json params_to_json(const ParamList& params);
/// Copies values into `params` by name. Missing, extra or misshaped entries
/// raise Error naming the parameter.
void params_from_json(const nlohmann::json& j, const ParamList& params);

nlohmann::json optimizer_to_json(const ParamGroup& group);
/// Restores moments and step count; parameter names must match in order.
void optimizer_from_json(const nlohmann::json& j, ParamGroup& group);

nlohmann::json rng_to_json(const RngStreams& rng);
RngStreams rng_from_json(const nlohmann::json& j);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Retrain state: config echo, genotype, named weights, batch-norm running
/// statistics, optimizer states, metric history and every rng substream.
void save_retrain_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const Genotype& genotype,
                             const RetrainResult& state, const RngStreams& rng);

struct LoadedRetrain {
  RunConfig config;
  Genotype genotype;
  RetrainResult state;
  RngStreams rng;
};

LoadedRetrain load_retrain_checkpoint(const std::filesystem::path& path);

/// Search state (written on abort and at the end of a run): weights and α of
/// both players, the current genotype if any, optimizer states and rng.
void save_search_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const SearchProblem& problem,
                            const std::vector<ParamGroup>& optimizers, const RngStreams& rng, int round);

/// Schema version, kind ("retrain" / "search") and shape check of a checkpoint file.
nlohmann::json read_checkpoint(const std::filesystem::path& path);

struct ManifestFile {
  std::string path;  // relative to the run directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string config_text;
  std::string version{code_version()};
  std::uint64_t seed = 0;
  std::string started;  // ISO 8601, UTC
  std::string finished;
  std::vector<ManifestFile> files;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::string utc_timestamp();

/// Hashes `files` (relative to `dir`), stamps the finish time and writes
/// dir/manifest.json atomically.
void write_manifest(const std::filesystem::path& dir, RunManifest& manifest, const std::vector<std::string>& files);
RunManifest read_manifest(const std::filesystem::path& dir);
/// Paths whose content no longer matches the recorded hash (empty when the
/// run directory is intact).
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

}  // namespace gapnas
