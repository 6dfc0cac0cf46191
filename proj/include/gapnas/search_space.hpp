#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "gapnas/parameter.hpp"
#include "gapnas/rng.hpp"
#include "gapnas/tape.hpp"

namespace gapnas {

enum class OpKind {
  // image normal pool
  kConv1x1,
  kConv3x3,
  kConv5x5,
  kSepConv3x3,
  kSepConv5x5,
  kSepConv7x7,
  // image upsampling pool
  kDeconv,
  kNearest,
  kBilinear,
  kNearestConv,
  kBilinearConv,
  // vector (MLP) pool
  kLinear,
  kLinearRelu,
  kLinearTanh,
  kIdentity,
};

enum class PoolKind { kNormal, kUp, kNormalMlp };

std::string_view op_name(OpKind op);
std::optional<OpKind> parse_op(std::string_view name);
PoolKind pool_kind_of(OpKind op);
std::string_view pool_kind_name(PoolKind kind);

enum class PoolPreset { kDefault, kNoDeconv, kLearnableInterp, kMlp };
std::string_view pool_preset_name(PoolPreset p);
PoolPreset parse_pool_preset(std::string_view name);

/// Candidate operations for each kind of edge.
struct OpPools {
  std::vector<OpKind> normal;
  std::vector<OpKind> up;
  std::vector<OpKind> mlp;

  const std::vector<OpKind>& for_kind(PoolKind kind) const;
};

/// Pools for a preset. kMlp only fills the vector pool; the image presets
/// differ in their upsampling pool: default {deconv, nearest, bilinear},
/// no-deconv {nearest, bilinear}, learnable-interp {deconv, nearest_conv,
/// bilinear_conv}.
OpPools make_pools(PoolPreset preset);

enum class ModelMode { kImage, kMlp };
std::string_view mode_name(ModelMode m);
ModelMode parse_mode(std::string_view name);

enum class Sharing { kMacro, kMicro };
std::string_view sharing_name(Sharing s);
Sharing parse_sharing(std::string_view name);

/// One searchable edge. The destination node sums the outputs of all its
/// incoming edges. `role` names the edge's position inside its cell; under
/// micro sharing every edge with the same role reads the same logits.
struct EdgeSpec {
  std::string id;
  std::string role;
  int cell = 0;
  int src = 0;
  int dst = 0;
  PoolKind kind = PoolKind::kNormal;
};

/// Searchable DAG. Node 0 is the input; the last node is the output.
/// `upsample_level[i]` counts the x2 upsamplings between node 0 and node i.
struct Topology {
  std::string name;
  int cells = 1;
  int num_nodes = 1;
  std::vector<EdgeSpec> edges;
  std::vector<int> upsample_level;

  int output_node() const { return num_nodes - 1; }
};

/// Known topologies:
///  - "conventional": per cell an upsampling edge into node a, normal edges
///    a->b, b->c and a->c, an upsampling skip from the cell input into c,
///    plus one cross-cell upsampling edge per cell from the previous cell's
///    node a (the input node for the first cell) into c. Per cell 6^3 * 3^2
///    choices, times 3 per cross edge.
///  - "compact": per cell an upsampling edge and the three normal edges.
///  - "mlp-chain": per cell three vector edges in a chain.
///  - "normal-chain": per cell three image normal edges in a chain, no
///    upsampling (searchable discriminator body).
Topology make_topology(std::string_view name, int cells);

struct SearchSpace {
  Topology topology;
  OpPools pools;
  Sharing sharing = Sharing::kMacro;
};

/// Conventional-GAN space: conventional topology, 3 cells, default pools.
SearchSpace conventional_space(Sharing sharing = Sharing::kMacro);

using BigCount = boost::multiprecision::cpp_int;

/// Exact number of discrete architectures: the product of pool sizes over
/// independent logit slots (edges under macro sharing, roles under micro).
BigCount count_configurations(const SearchSpace& space);

/// Continuous architecture logits, one vector per edge. Under micro sharing,
/// edges with the same role hold the same Parameter object.
class ArchParams {
 public:
  ArchParams() = default;
  /// Logits start at init_scale * N(0, 1) (zero when init_scale == 0).
  ArchParams(const Topology& topology, const OpPools& pools, Sharing sharing, const std::string& prefix, Rng& rng,
             double init_scale = 1e-3);

  std::size_t num_edges() const { return edge_logits_.size(); }
  const ParamPtr& logits(std::size_t edge) const { return edge_logits_.at(edge); }
  const std::vector<OpKind>& pool(std::size_t edge) const { return edge_pools_.at(edge); }
  const Topology& topology() const { return topology_; }
  Sharing sharing() const { return sharing_; }

  /// Distinct logit parameters in first-use edge order.
  ParamList unique() const;
  /// Independent copy with the same sharing structure.
  ArchParams deep_copy() const;

 private:
  Topology topology_;
  Sharing sharing_ = Sharing::kMacro;
  std::vector<ParamPtr> edge_logits_;
  std::vector<std::vector<OpKind>> edge_pools_;
};

enum class Relaxation { kSoftmax, kGumbel };

struct RelaxConfig {
  Relaxation mode = Relaxation::kSoftmax;
  double tau = 1.0;
};

/// softmax((logits + g) / tau) with g i.i.d. Gumbel(0, 1).
Tensor gumbel_weights(const Tensor& logits, double tau, Rng& rng);

/// Mixing weights of an edge on the tape; gradients reach the logits.
/// Gumbel mode draws its noise from `rng`, which must then be non-null.
Var edge_weights(Var logits, const RelaxConfig& relax, Rng* rng);

/// A concrete candidate operation with its own weights.
class CandidateOp {
 public:
  CandidateOp(OpKind kind, int width, Rng& init, const std::string& prefix);

  OpKind kind() const { return kind_; }
  const ParamList& params() const { return params_; }
  Var apply(Tape& tape, Var x) const;
  /// Copy with freshly allocated parameter objects holding equal values.
  CandidateOp deep_copy() const;

 private:
  CandidateOp() = default;
  OpKind kind_ = OpKind::kIdentity;
  ParamList params_;
};

/// sum_o w_o * o(x) over the candidates, w = edge_weights(logits).
Var mixed_op_forward(Tape& tape, Var x, std::span<const CandidateOp> ops, Var logits, const RelaxConfig& relax,
                     Rng* rng);
/// Same mixture for already evaluated candidate outputs.
Var mix_outputs(std::span<const Var> outputs, Var weights);

/// Discrete architecture: one op per edge, in topology edge order.
struct GenotypeSection {
  std::string topology;
  std::vector<std::string> edge_ids;
  std::vector<OpKind> ops;

  bool operator==(const GenotypeSection&) const = default;
};

struct Genotype {
  static constexpr int kSchemaVersion = 1;

  ModelMode mode = ModelMode::kMlp;
  Sharing sharing = Sharing::kMacro;
  int cells = 1;
  int channels = 32;
  GenotypeSection generator;
  std::optional<GenotypeSection> discriminator;

  bool operator==(const Genotype&) const = default;
};

/// Per-edge argmax of the logits; ties go to the lowest pool index.
GenotypeSection discretize(const ArchParams& arch);

/// Versioned line-oriented text: a header line, `key = value` settings, then
/// one `[generator]` / `[discriminator]` section of `edge_id = op_name`
/// lines. Comments start with '#'.
std::string serialize_genotype(const Genotype& g);
/// Inverse of serialize_genotype. Errors cite the line number and token.
Genotype parse_genotype(std::string_view text);
/// Same content as a JSON document.
std::string genotype_to_json(const Genotype& g);
/// Short content hash of the canonical text.
std::string genotype_hash(const Genotype& g);

/// Uniform draw over the discrete choices of a space (one draw per role
/// under micro sharing).
GenotypeSection random_section(const SearchSpace& space, Rng& rng);

}  // namespace gapnas
