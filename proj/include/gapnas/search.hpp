#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gapnas/duality_gap.hpp"
#include "gapnas/metrics.hpp"

namespace gapnas {

/// Which data (or analytic game) a run uses, and the network shapes.
struct TaskConfig {
  /// ring8 | linear | shapes | quadratic | bilinear
  std::string task = "ring8";
  std::int64_t samples = 10000;
  /// Fraction of the samples used for the train split.
  double split_ratio = 0.5;
  AdvLoss loss = AdvLoss::kHinge;
  std::int64_t batch_size = 64;
  /// Generator / discriminator shapes. `net.width` is the search-time width.
  NetConfig net;
  bool search_discriminator = false;
  /// Analytic games: dimension, initial coordinate value, bilinear regularization.
  int game_dim = 1;
  double game_init = 1.0;
  double game_lambda = 1.0;

  bool analytic() const { return task == "quadratic" || task == "bilinear"; }
  void validate() const;
};

struct SearchConfig {
  TaskConfig task;
  int rounds = 100;       // K
  int weight_steps = 20;  // T
  int arch_steps = 20;    // S
  int inner_steps = 20;   // R
  AdamConfig weight_adam = default_weight_adam();
  AdamConfig arch_adam = default_arch_adam();
  AdamConfig inner_adam = default_weight_adam();
  AdamConfig inner_arch_adam = default_arch_adam();
  GbarMode gbar = GbarMode::kWeightsOnly;
  /// α stays fixed for the first ceil(warmup_fraction * K) rounds.
  double warmup_fraction = 0.0;
  /// Set to run the single-level Lagrangian variant with this multiplier.
  std::optional<double> single_level_lambda;
  /// Re-solve the best responses before every arch step instead of once per round.
  bool refresh_best_response_every_arch_step = false;
  bool parallel_gap = false;
  std::uint64_t seed = 0;

  int warmup_rounds() const;
  GapConfig gap_config() const;
  void validate() const;
};

/// Dataset, game and the two players for one run.
struct SearchProblem {
  std::shared_ptr<const Dataset> data;  // null for analytic games
  std::unique_ptr<Game> game;
  std::unique_ptr<Player> g;
  std::unique_ptr<Player> d;
};

/// Dataset for a generator task, drawn from the "data" substreams (null for
/// analytic games).
std::shared_ptr<const Dataset> build_dataset(const TaskConfig& task, RngStreams& rng);

/// Builds the problem from the "data" and "init" substreams.
SearchProblem build_problem(const TaskConfig& task, RngStreams& rng);

struct RoundRecord {
  int round = 0;  // 1-based
  double v_estimate = 0.0;
  double term_max = 0.0;
  double term_min = 0.0;
  /// Means over the round's weight steps.
  double d_loss = 0.0;
  double g_loss = 0.0;
  std::string genotype_hash = "-";
  std::string genotype_text;
  /// α values at the end of the round, one vector per logit slot.
  std::vector<std::vector<double>> alpha;
  int weight_steps = 0;
  int gap_solves = 0;
  int arch_steps = 0;
  std::string rng_checksum;
};

struct SearchLog {
  std::vector<RoundRecord> rounds;

  static std::string csv_header();
  static std::string csv_row(const RoundRecord& r);
  std::vector<double> v_estimates() const;
  /// Digest over every row and α snapshot (bit-exact).
  std::string checksum() const;
};

struct SearchResult {
  /// Absent for analytic games.
  std::optional<Genotype> genotype;
  SearchLog log;
  /// omega_D, omega_G and alpha optimizer state at the end of the run.
  std::vector<ParamGroup> optimizers;
};

/// Raised when a loss or gradient becomes non-finite; carries the rounds
/// completed so far.
class SearchAborted : public NumericalError {
 public:
  SearchAborted(const std::string& what, int round, std::string phase, SearchLog partial,
                std::vector<ParamGroup> optimizers = {});
  int round() const { return round_; }
  const std::string& phase() const { return phase_; }
  const SearchLog& partial_log() const { return partial_; }
  const std::vector<ParamGroup>& optimizers() const { return optimizers_; }

 private:
  int round_;
  std::string phase_;
  SearchLog partial_;
  std::vector<ParamGroup> optimizers_;
};

enum class Phase { kWeight, kTestWeight, kArch };
std::string_view phase_name(Phase p);

struct SearchHooks {
  std::function<void(Phase, int round)> before_phase;
  std::function<void(Phase, int round)> after_phase;
  std::function<void(const RoundRecord&)> on_round;
};

/// Bi-level search (or the single-level variant when cfg.single_level_lambda
/// is set) on an already built problem.
SearchResult run_search(const SearchConfig& cfg, SearchProblem& problem, RngStreams& rng,
                        const SearchHooks& hooks = {});

/// Builds the problem from cfg.seed and runs the search.
SearchResult search(const SearchConfig& cfg, const SearchHooks& hooks = {});

// --- retraining ------------------------------------------------------------

struct RetrainConfig {
  int iterations = 5000;
  int eval_interval = 500;
  std::int64_t g_batch = 128;
  std::int64_t d_batch = 64;
  AdamConfig adam{2e-4, 0.0, 0.9, 1e-8, 0.0};
  /// Generator width; 0 keeps the genotype's search-time width.
  int width = 0;
  std::int64_t eval_samples = 50000;
  /// Mode-coverage radius in units of the mixture std (absolute if the data
  /// has no std).
  double mode_radius = 3.0;

  void validate() const;
};

struct MetricRecord {
  int iteration = 0;
  double fd = 0.0;
  int modes_hit = 0;
  double high_quality_fraction = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
};

struct RetrainResult {
  GeneratorNet g;
  DiscriminatorNet d;
  std::vector<MetricRecord> history;
  ParamGroup omega_g;
  ParamGroup omega_d;
  /// Iterations completed.
  int iteration = 0;
};

/// Fresh discrete generator for `genotype` and the fixed discriminator,
/// initialized from the "retrain-init" substream; nothing trained yet.
RetrainResult init_retrain(const Genotype& genotype, const TaskConfig& task, const RetrainConfig& cfg,
                           RngStreams& rng);

/// Trains `state` on the train split until cfg.iterations. Metrics every
/// eval_interval iterations and after the last one. A state saved on an
/// eval_interval boundary continues exactly like the uninterrupted run.
void continue_retrain(RetrainResult& state, const TaskConfig& task, const RetrainConfig& cfg, const Dataset& data,
                      RngStreams& rng, const std::function<void(const MetricRecord&)>& on_metric = {});

/// init_retrain followed by continue_retrain.
RetrainResult retrain(const Genotype& genotype, const TaskConfig& task, const RetrainConfig& cfg,
                      const Dataset& data, RngStreams& rng,
                      const std::function<void(const MetricRecord&)>& on_metric = {});

/// Retrain network shapes for `genotype` (width override, cells, sharing).
NetConfig retrain_net_config(const Genotype& genotype, const TaskConfig& task, const RetrainConfig& cfg);

/// Fréchet distance (on projection features for images) and mode coverage of
/// `n` generated samples against the whole dataset.
MetricRecord evaluate_generator(GeneratorNet& g, const Dataset& data, std::int64_t n, double mode_radius, Rng& rng);

/// Uniformly drawn generator genotype for the task's space.
Genotype random_genotype(const TaskConfig& task, Rng& rng);

}  // namespace gapnas
