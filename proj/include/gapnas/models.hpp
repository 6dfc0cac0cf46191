#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gapnas/adam.hpp"
#include "gapnas/ops.hpp"
#include "gapnas/search_space.hpp"

namespace gapnas {

/// Shape and search settings shared by both networks.
struct NetConfig {
  ModelMode mode = ModelMode::kMlp;
  int latent_dim = 8;
  /// Hidden width (MLP) or channel count (image) of the generator cells.
  int width = 32;
  int cells = 1;
  /// MLP sample dimension.
  int data_dim = 2;
  /// Image sample shape [image_channels, image_size, image_size].
  int image_channels = 1;
  int image_size = 32;
  std::string topology = "mlp-chain";
  OpPools pools = make_pools(PoolPreset::kMlp);
  Sharing sharing = Sharing::kMacro;
  RelaxConfig relax;
  /// Discriminator hidden width / channels.
  int disc_width = 64;

  /// Throws ConfigError naming the infeasible setting.
  void validate() const;
  /// Shape of one batch of samples.
  Shape sample_shape(std::int64_t batch) const;
};

/// One side of the game: weights ω and (possibly empty) architecture α.
class Player {
 public:
  enum class ArchCloning { kShare, kCopy };

  virtual ~Player() = default;
  virtual ParamList weights() const = 0;
  virtual ParamList arch() const = 0;
  /// Copy with freshly allocated weights. kShare keeps the same α objects,
  /// kCopy gives the copy its own α.
  virtual std::unique_ptr<Player> clone(ArchCloning arch) const = 0;
};

/// Evaluates a searchable topology: each node is the sum of its incoming
/// edges. Relaxed graphs hold every pool candidate per edge; discrete graphs
/// hold the single chosen op.
class CellGraph {
 public:
  CellGraph() = default;
  CellGraph(const Topology& topology, const OpPools& pools, int width, Rng& init, const std::string& prefix);
  CellGraph(const Topology& topology, const GenotypeSection& genotype, int width, Rng& init,
            const std::string& prefix);

  bool relaxed() const { return relaxed_; }
  const Topology& topology() const { return topology_; }
  const std::vector<CandidateOp>& candidates(std::size_t edge) const { return edge_ops_.at(edge); }

  /// `arch` is required for relaxed graphs and ignored otherwise.
  Var forward(Tape& tape, Var x, const ArchParams* arch, const RelaxConfig& relax, Rng* gumbel) const;
  ParamList weights() const;
  CellGraph deep_copy() const;
  /// Discrete graph keeping copies of the chosen candidates' weights.
  CellGraph select(const GenotypeSection& genotype) const;

 private:
  Topology topology_;
  std::vector<std::vector<CandidateOp>> edge_ops_;
  bool relaxed_ = false;
};

class GeneratorNet : public Player {
 public:
  static GeneratorNet relaxed(const NetConfig& config, Rng& init);
  static GeneratorNet discrete(const NetConfig& config, const GenotypeSection& genotype, Rng& init);

  /// z [B, latent_dim] -> samples of config().sample_shape(B).
  Var forward(Tape& tape, Var z, Rng* gumbel = nullptr,
              ops::BatchNormMode bn = ops::BatchNormMode::kTrainFrozen);

  ParamList weights() const override;
  ParamList arch() const override;
  std::unique_ptr<Player> clone(ArchCloning arch) const override;
  GeneratorNet clone_net(ArchCloning arch) const;

  bool is_relaxed() const { return arch_ != nullptr; }
  const std::shared_ptr<ArchParams>& arch_params() const { return arch_; }
  void set_arch_params(std::shared_ptr<ArchParams> arch) { arch_ = std::move(arch); }
  const NetConfig& config() const { return config_; }
  const CellGraph& cells() const { return graph_; }
  GenotypeSection genotype() const;
  /// Output batch-norm running statistics (image mode).
  const ops::BatchNormStats& bn_stats() const { return bn_stats_; }
  ops::BatchNormStats& bn_stats() { return bn_stats_; }
  /// Discrete net for `genotype` reusing (copies of) this net's weights.
  GeneratorNet discretized(const GenotypeSection& genotype) const;

 private:
  GeneratorNet() = default;
  void build_io(Rng& init);

  NetConfig config_;
  std::shared_ptr<ArchParams> arch_;
  CellGraph graph_;
  ParamPtr stem_w_, stem_b_;
  // image output head
  ParamPtr bn_gamma_, bn_beta_, out_w_, out_b_;
  ops::BatchNormStats bn_stats_;
  std::optional<GenotypeSection> genotype_;
};

class DiscriminatorNet : public Player {
 public:
  /// Fixed stack: MLP data_dim -> disc_width -> disc_width -> 1 or four
  /// stride-2 3x3 convs and a linear head, leaky_relu(0.2) throughout.
  static DiscriminatorNet fixed(const NetConfig& config, Rng& init);
  /// Searchable body (one cell of "mlp-chain" or "normal-chain") between a
  /// fixed stem and head.
  static DiscriminatorNet relaxed(const NetConfig& config, Rng& init);
  static DiscriminatorNet discrete(const NetConfig& config, const GenotypeSection& genotype, Rng& init);

  /// x of config().sample_shape(B) -> [B, 1] scores.
  Var forward(Tape& tape, Var x, Rng* gumbel = nullptr) const;

  ParamList weights() const override;
  ParamList arch() const override;
  std::unique_ptr<Player> clone(ArchCloning arch) const override;
  DiscriminatorNet clone_net(ArchCloning arch) const;

  bool searchable() const { return searchable_; }
  bool is_relaxed() const { return arch_ != nullptr; }
  const std::shared_ptr<ArchParams>& arch_params() const { return arch_; }
  const NetConfig& config() const { return config_; }
  std::optional<GenotypeSection> genotype() const;

  static std::string body_topology(ModelMode mode) { return mode == ModelMode::kMlp ? "mlp-chain" : "normal-chain"; }

 private:
  DiscriminatorNet() = default;
  void build_fixed_layers(Rng& init);

  NetConfig config_;
  bool searchable_ = false;
  std::shared_ptr<ArchParams> arch_;
  CellGraph graph_;
  std::vector<ParamPtr> layer_w_, layer_b_;
  std::optional<GenotypeSection> genotype_;
};

/// Genotype record of a generator (and a searchable discriminator if given).
Genotype make_genotype(const GeneratorNet& g, const DiscriminatorNet* d = nullptr);

/// Adam groups over ω and, when the player has any, α. Names are
/// "omega_<tag>" and "alpha_<tag>".
std::vector<ParamGroup> parameter_groups(const Player& p, const std::string& tag, const AdamConfig& weight_cfg,
                                         const AdamConfig& arch_cfg);

/// Number of weight scalars (α excluded).
std::size_t parameter_count(const Player& p);

}  // namespace gapnas
