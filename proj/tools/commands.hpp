#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gapnas/config.hpp"

namespace gapnas::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumerical = 2, kAcceptance = 3 };

/// Flags shared by every command. Precedence: preset, config file, flags,
/// then `--set key=value` in order.
struct CommonOptions {
  std::string config;
  std::string preset;
  std::string out;
  std::string op_pool;
  std::string relax;
  std::string gbar;
  std::optional<std::uint64_t> seed;
  std::optional<double> single_level;
  std::optional<double> warmup;
  bool search_d = false;
  std::vector<std::string> sets;
};

RunConfig resolve_config(const CommonOptions& opt);

struct SearchOutcome {
  int exit_code = kOk;
  SearchResult result;
};

/// Writes config.ini, search_log.csv, genotypes/round_NNNN.txt, genotype.txt,
/// genotype.json, search_checkpoint.json and manifest.json under cfg.out_dir.
/// On a numerical abort the checkpoint and the partial log are still written.
SearchOutcome cmd_search(const RunConfig& cfg, std::ostream& log);

/// Retrains the genotype in `genotype_path` (or continues `resume` if set) and
/// writes metrics.csv, checkpoint.json and manifest.json.
int cmd_retrain(const RunConfig& cfg, const std::filesystem::path& genotype_path,
                const std::optional<std::filesystem::path>& resume, std::ostream& log);

/// Metrics of a retrain checkpoint against the dataset named by its config
/// echo; `sets` override that config (e.g. a larger eval sample).
int cmd_eval(const std::filesystem::path& checkpoint, const std::vector<std::string>& sets,
             const std::filesystem::path& out_csv, std::ostream& log);

int cmd_gradcheck(int points, double tol, std::ostream& log);

/// Counts the conventional space (macro and micro), and the space of
/// `cfg` when given.
int cmd_count_space(const std::optional<RunConfig>& cfg, std::ostream& log);

/// Appends rows to a CSV file, flushing after each one.
class CsvAppender {
 public:
  CsvAppender(const std::filesystem::path& path, const std::string& header);
  void append(const std::string& row);

 private:
  std::filesystem::path path_;
};

}  // namespace gapnas::cli
