#include "gapnas/search_space.hpp"

#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gapnas/error.hpp"
#include "gapnas/hash.hpp"
#include "gapnas/ops.hpp"

namespace gapnas {

namespace {

struct OpInfo {
  OpKind kind;
  std::string_view name;
  PoolKind pool;
};

constexpr std::array<OpInfo, 15> kOps{{
    {OpKind::kConv1x1, "conv_1x1", PoolKind::kNormal},
    {OpKind::kConv3x3, "conv_3x3", PoolKind::kNormal},
    {OpKind::kConv5x5, "conv_5x5", PoolKind::kNormal},
    {OpKind::kSepConv3x3, "sep_conv_3x3", PoolKind::kNormal},
    {OpKind::kSepConv5x5, "sep_conv_5x5", PoolKind::kNormal},
    {OpKind::kSepConv7x7, "sep_conv_7x7", PoolKind::kNormal},
    {OpKind::kDeconv, "deconv", PoolKind::kUp},
    {OpKind::kNearest, "nearest", PoolKind::kUp},
    {OpKind::kBilinear, "bilinear", PoolKind::kUp},
    {OpKind::kNearestConv, "nearest_conv", PoolKind::kUp},
    {OpKind::kBilinearConv, "bilinear_conv", PoolKind::kUp},
    {OpKind::kLinear, "linear", PoolKind::kNormalMlp},
    {OpKind::kLinearRelu, "linear_relu", PoolKind::kNormalMlp},
    {OpKind::kLinearTanh, "linear_tanh", PoolKind::kNormalMlp},
    {OpKind::kIdentity, "identity", PoolKind::kNormalMlp},
}};

const OpInfo& info(OpKind op) {
  for (const auto& i : kOps) {
    if (i.kind == op) return i;
  }
  throw Error("unknown op kind");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

int kernel_of(OpKind op) {
  switch (op) {
    case OpKind::kConv1x1:
      return 1;
    case OpKind::kConv3x3:
    case OpKind::kSepConv3x3:
      return 3;
    case OpKind::kConv5x5:
    case OpKind::kSepConv5x5:
      return 5;
    case OpKind::kSepConv7x7:
      return 7;
    default:
      return 0;
  }
}

Tensor he(const Shape& shape, double fan_in, Rng& rng) { return randn(shape, rng, std::sqrt(2.0 / fan_in)); }

Tensor xavier(const Shape& shape, double fan_in, double fan_out, Rng& rng) {
  return randn(shape, rng, std::sqrt(2.0 / (fan_in + fan_out)));
}

}  // namespace

std::string_view op_name(OpKind op) { return info(op).name; }

std::optional<OpKind> parse_op(std::string_view name) {
  for (const auto& i : kOps) {
    if (i.name == name) return i.kind;
  }
  return std::nullopt;
}

PoolKind pool_kind_of(OpKind op) { return info(op).pool; }

std::string_view pool_kind_name(PoolKind kind) {
  switch (kind) {
    case PoolKind::kNormal:
      return "normal";
    case PoolKind::kUp:
      return "up";
    case PoolKind::kNormalMlp:
      return "mlp";
  }
  return "?";
}

std::string_view pool_preset_name(PoolPreset p) {
  switch (p) {
    case PoolPreset::kDefault:
      return "default";
    case PoolPreset::kNoDeconv:
      return "no-deconv";
    case PoolPreset::kLearnableInterp:
      return "learnable-interp";
    case PoolPreset::kMlp:
      return "mlp";
  }
  return "?";
}

PoolPreset parse_pool_preset(std::string_view name) {
  for (auto p : {PoolPreset::kDefault, PoolPreset::kNoDeconv, PoolPreset::kLearnableInterp, PoolPreset::kMlp}) {
    if (pool_preset_name(p) == name) return p;
  }
  throw ConfigError("unknown op pool '" + std::string(name) + "'");
}

const std::vector<OpKind>& OpPools::for_kind(PoolKind kind) const {
  switch (kind) {
    case PoolKind::kNormal:
      return normal;
    case PoolKind::kUp:
      return up;
    case PoolKind::kNormalMlp:
      return mlp;
  }
  return mlp;
}

OpPools make_pools(PoolPreset preset) {
  OpPools pools;
  if (preset == PoolPreset::kMlp) {
    pools.mlp = {OpKind::kLinear, OpKind::kLinearRelu, OpKind::kLinearTanh, OpKind::kIdentity};
    return pools;
  }
  pools.normal = {OpKind::kConv1x1,    OpKind::kConv3x3,    OpKind::kConv5x5,
                  OpKind::kSepConv3x3, OpKind::kSepConv5x5, OpKind::kSepConv7x7};
  switch (preset) {
    case PoolPreset::kNoDeconv:
      pools.up = {OpKind::kNearest, OpKind::kBilinear};
      break;
    case PoolPreset::kLearnableInterp:
      pools.up = {OpKind::kDeconv, OpKind::kNearestConv, OpKind::kBilinearConv};
      break;
    default:
      pools.up = {OpKind::kDeconv, OpKind::kNearest, OpKind::kBilinear};
  }
  return pools;
}

std::string_view mode_name(ModelMode m) { return m == ModelMode::kImage ? "image" : "mlp"; }

ModelMode parse_mode(std::string_view name) {
  if (name == "image") return ModelMode::kImage;
  if (name == "mlp") return ModelMode::kMlp;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

std::string_view sharing_name(Sharing s) { return s == Sharing::kMacro ? "macro" : "micro"; }

Sharing parse_sharing(std::string_view name) {
  if (name == "macro") return Sharing::kMacro;
  if (name == "micro") return Sharing::kMicro;
  throw ConfigError("unknown sharing '" + std::string(name) + "'");
}

Topology make_topology(std::string_view name, int cells) {
  if (cells < 1) throw ConfigError("topology needs at least one cell");
  Topology t;
  t.name = std::string(name);
  t.cells = cells;
  t.num_nodes = 1 + 3 * cells;
  t.upsample_level.assign(static_cast<std::size_t>(t.num_nodes), 0);
  auto add = [&](int cell, const char* role, int src, int dst, PoolKind kind) {
    t.edges.push_back({"cell" + std::to_string(cell) + "." + role, role, cell, src, dst, kind});
  };

  if (name == "conventional" || name == "compact") {
    for (int k = 0; k < cells; ++k) {
      const int in = 3 * k, a = in + 1, b = in + 2, c = in + 3;
      for (int n : {a, b, c}) t.upsample_level[static_cast<std::size_t>(n)] = k + 1;
      add(k, "up_main", in, a, PoolKind::kUp);
      add(k, "norm_a", a, b, PoolKind::kNormal);
      add(k, "norm_b", b, c, PoolKind::kNormal);
      add(k, "norm_c", a, c, PoolKind::kNormal);
      if (name == "conventional") {
        add(k, "up_skip", in, c, PoolKind::kUp);
        add(k, "cross", k == 0 ? 0 : a - 3, c, PoolKind::kUp);
      }
    }
  } else if (name == "mlp-chain" || name == "normal-chain") {
    const PoolKind kind = name == "mlp-chain" ? PoolKind::kNormalMlp : PoolKind::kNormal;
    for (int k = 0; k < cells; ++k) {
      const int in = 3 * k;
      add(k, "e0", in, in + 1, kind);
      add(k, "e1", in + 1, in + 2, kind);
      add(k, "e2", in + 2, in + 3, kind);
    }
  } else {
    throw ConfigError("unknown topology '" + std::string(name) + "'");
  }
  return t;
}

SearchSpace conventional_space(Sharing sharing) {
  return {make_topology("conventional", 3), make_pools(PoolPreset::kDefault), sharing};
}

BigCount count_configurations(const SearchSpace& space) {
  BigCount total = 1;
  std::map<std::string, bool> seen_roles;
  for (const auto& e : space.topology.edges) {
    if (space.sharing == Sharing::kMicro && !seen_roles.emplace(e.role, true).second) continue;
    total *= static_cast<unsigned>(space.pools.for_kind(e.kind).size());
  }
  return total;
}

ArchParams::ArchParams(const Topology& topology, const OpPools& pools, Sharing sharing, const std::string& prefix,
                       Rng& rng, double init_scale)
    : topology_(topology), sharing_(sharing) {
  std::map<std::string, ParamPtr> by_role;
  for (const auto& e : topology.edges) {
    const auto& pool = pools.for_kind(e.kind);
    if (pool.empty()) {
      throw ConfigError("edge " + e.id + " needs a " + std::string(pool_kind_name(e.kind)) + " op pool");
    }
    edge_pools_.push_back(pool);
    if (sharing == Sharing::kMicro) {
      auto it = by_role.find(e.role);
      if (it != by_role.end()) {
        edge_logits_.push_back(it->second);
        continue;
      }
    }
    const Shape shape{static_cast<std::int64_t>(pool.size())};
    Tensor init = init_scale > 0.0 ? randn(shape, rng, init_scale) : Tensor(shape, 0.0);
    auto p = make_param(prefix + ".alpha." + (sharing == Sharing::kMicro ? e.role : e.id), std::move(init));
    by_role.emplace(e.role, p);
    edge_logits_.push_back(std::move(p));
  }
}

ParamList ArchParams::unique() const {
  ParamList out;
  for (const auto& p : edge_logits_) {
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  return out;
}

ArchParams ArchParams::deep_copy() const {
  ArchParams copy = *this;
  std::map<const Parameter*, ParamPtr> fresh;
  for (auto& p : copy.edge_logits_) {
    auto it = fresh.find(p.get());
    if (it == fresh.end()) it = fresh.emplace(p.get(), make_param(p->name, p->value)).first;
    p = it->second;
  }
  return copy;
}

Tensor gumbel_weights(const Tensor& logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ConfigError("gumbel temperature must be > 0");
  Tensor out(logits.shape());
  double hi = -INFINITY;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = (logits[i] + gumbel(rng)) / tau;
    hi = std::max(hi, out[i]);
  }
  double z = 0.0;
  for (auto& v : out.data()) z += (v = std::exp(v - hi));
  for (auto& v : out.data()) v /= z;
  return out;
}

Var edge_weights(Var logits, const RelaxConfig& relax, Rng* rng) {
  if (relax.mode == Relaxation::kSoftmax) return ops::softmax(logits);
  if (rng == nullptr) throw Error("edge_weights: gumbel relaxation needs a random stream");
  if (!(relax.tau > 0.0)) throw ConfigError("gumbel temperature must be > 0");
  Tensor g(logits.shape());
  for (auto& v : g.data()) v = gumbel(*rng);
  Var noisy = ops::add(logits, logits.tape()->constant(std::move(g)));
  return ops::softmax(ops::scale(noisy, 1.0 / relax.tau));
}

CandidateOp::CandidateOp(OpKind kind, int width, Rng& init, const std::string& prefix) : kind_(kind) {
  const std::int64_t c = width;
  const double cw = static_cast<double>(width);
  auto add = [&](const char* name, Tensor t) { params_.push_back(make_param(prefix + "." + name, std::move(t))); };
  const int k = kernel_of(kind);
  switch (kind) {
    case OpKind::kConv1x1:
    case OpKind::kConv3x3:
    case OpKind::kConv5x5:
      add("w", he({c, c, k, k}, cw * k * k, init));
      add("b", Tensor({c}, 0.0));
      break;
    case OpKind::kSepConv3x3:
    case OpKind::kSepConv5x5:
    case OpKind::kSepConv7x7:
      add("w_depth", he({c, 1, k, k}, static_cast<double>(k * k), init));
      add("w_point", xavier({c, c, 1, 1}, cw, cw, init));
      add("b", Tensor({c}, 0.0));
      break;
    case OpKind::kDeconv:
      add("w", he({c, c, 2, 2}, cw, init));
      add("b", Tensor({c}, 0.0));
      break;
    case OpKind::kNearestConv:
    case OpKind::kBilinearConv:
      add("w", he({c, c, 1, 1}, cw, init));
      add("b", Tensor({c}, 0.0));
      break;
    case OpKind::kLinear:
    case OpKind::kLinearTanh:
      add("w", xavier({c, c}, cw, cw, init));
      add("b", Tensor({c}, 0.0));
      break;
    case OpKind::kLinearRelu:
      add("w", he({c, c}, cw, init));
      add("b", Tensor({c}, 0.0));
      break;
    case OpKind::kNearest:
    case OpKind::kBilinear:
    case OpKind::kIdentity:
      break;
  }
}

Var CandidateOp::apply(Tape& tape, Var x) const {
  auto p = [&](std::size_t i) { return tape.param(params_[i]); };
  switch (kind_) {
    case OpKind::kConv1x1:
    case OpKind::kConv3x3:
    case OpKind::kConv5x5: {
      const int k = kernel_of(kind_);
      return ops::bias_add(ops::conv2d(ops::relu(x), p(0), {1, (k - 1) / 2, 1}), p(1));
    }
    case OpKind::kSepConv3x3:
    case OpKind::kSepConv5x5:
    case OpKind::kSepConv7x7:
      return ops::bias_add(ops::conv2d_separable(ops::relu(x), p(0), p(1)), p(2));
    case OpKind::kDeconv:
      return ops::bias_add(ops::conv2d_transpose(ops::relu(x), p(0), 2, 0), p(1));
    case OpKind::kNearest:
      return ops::upsample_nearest(x);
    case OpKind::kBilinear:
      return ops::upsample_bilinear(x);
    case OpKind::kNearestConv:
      return ops::upsample_nearest(ops::bias_add(ops::conv2d(ops::relu(x), p(0)), p(1)));
    case OpKind::kBilinearConv:
      return ops::upsample_bilinear(ops::bias_add(ops::conv2d(ops::relu(x), p(0)), p(1)));
    case OpKind::kLinear:
      return ops::linear(x, p(0), p(1));
    case OpKind::kLinearRelu:
      return ops::relu(ops::linear(x, p(0), p(1)));
    case OpKind::kLinearTanh:
      return ops::tanh(ops::linear(x, p(0), p(1)));
    case OpKind::kIdentity:
      return x;
  }
  return x;
}

CandidateOp CandidateOp::deep_copy() const {
  CandidateOp copy;
  copy.kind_ = kind_;
  for (const auto& p : params_) copy.params_.push_back(make_param(p->name, p->value));
  return copy;
}

Var mix_outputs(std::span<const Var> outputs, Var weights) {
  if (outputs.empty()) throw ShapeError("mixed_op: no candidate outputs");
  if (weights.value().size() != outputs.size()) {
    throw ShapeError("mixed_op: " + std::to_string(outputs.size()) + " candidates but weights of shape " +
                     shape_str(weights.shape()));
  }
  Var acc = ops::scale(outputs[0], ops::pick(weights, 0));
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    acc = ops::add(acc, ops::scale(outputs[i], ops::pick(weights, i)));
  }
  return acc;
}

Var mixed_op_forward(Tape& tape, Var x, std::span<const CandidateOp> candidates, Var logits, const RelaxConfig& relax,
                     Rng* rng) {
  std::vector<Var> outs;
  outs.reserve(candidates.size());
  for (const auto& op : candidates) outs.push_back(op.apply(tape, x));
  return mix_outputs(outs, edge_weights(logits, relax, rng));
}

GenotypeSection discretize(const ArchParams& arch) {
  GenotypeSection s;
  s.topology = arch.topology().name;
  for (std::size_t e = 0; e < arch.num_edges(); ++e) {
    const Tensor& a = arch.logits(e)->value;
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
      if (a[i] > a[best]) best = i;
    }
    s.edge_ids.push_back(arch.topology().edges[e].id);
    s.ops.push_back(arch.pool(e)[best]);
  }
  return s;
}

GenotypeSection random_section(const SearchSpace& space, Rng& rng) {
  GenotypeSection s;
  s.topology = space.topology.name;
  std::map<std::string, OpKind> by_role;
  for (const auto& e : space.topology.edges) {
    s.edge_ids.push_back(e.id);
    if (space.sharing == Sharing::kMicro) {
      if (auto it = by_role.find(e.role); it != by_role.end()) {
        s.ops.push_back(it->second);
        continue;
      }
    }
    const auto& pool = space.pools.for_kind(e.kind);
    const OpKind op = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    by_role.emplace(e.role, op);
    s.ops.push_back(op);
  }
  return s;
}

namespace {

void write_section(std::ostringstream& os, const char* header, const GenotypeSection& s) {
  os << '[' << header << "]\n";
  os << "topology = " << s.topology << '\n';
  for (std::size_t i = 0; i < s.ops.size(); ++i) os << s.edge_ids[i] << " = " << op_name(s.ops[i]) << '\n';
}

struct RawSection {
  int line = 0;
  std::string topology;
  std::vector<std::pair<std::string, std::pair<OpKind, int>>> edges;  // id -> (op, line)
};

[[noreturn]] void fail(int line, const std::string& what) {
  throw ConfigError("genotype line " + std::to_string(line) + ": " + what);
}

GenotypeSection finish_section(const RawSection& raw, const char* name, int cells, Sharing sharing) {
  if (raw.topology.empty()) fail(raw.line, std::string("section [") + name + "] has no topology");
  Topology topo;
  try {
    topo = make_topology(raw.topology, cells);
  } catch (const ConfigError& e) {
    fail(raw.line, e.what());
  }
  GenotypeSection s;
  s.topology = raw.topology;
  std::map<std::string, std::pair<OpKind, int>> given(raw.edges.begin(), raw.edges.end());
  std::map<std::string, OpKind> role_op;
  for (const auto& e : topo.edges) {
    auto it = given.find(e.id);
    if (it == given.end()) fail(raw.line, std::string("section [") + name + "] is missing edge " + e.id);
    const auto [op, line] = it->second;
    if (pool_kind_of(op) != e.kind) {
      fail(line, "op " + std::string(op_name(op)) + " cannot be placed on " +
                     std::string(pool_kind_name(e.kind)) + " edge " + e.id);
    }
    if (sharing == Sharing::kMicro) {
      auto [r, inserted] = role_op.emplace(e.role, op);
      if (!inserted && r->second != op) {
        fail(line, "micro sharing requires every '" + e.role + "' edge to use " + std::string(op_name(r->second)));
      }
    }
    s.edge_ids.push_back(e.id);
    s.ops.push_back(op);
    given.erase(it);
  }
  if (!given.empty()) {
    const auto& [id, rest] = *given.begin();
    fail(rest.second, "edge " + id + " does not exist in topology " + raw.topology);
  }
  return s;
}

}  // namespace

std::string serialize_genotype(const Genotype& g) {
  std::ostringstream os;
  os << "gapnas-genotype " << Genotype::kSchemaVersion << '\n';
  os << "mode = " << mode_name(g.mode) << '\n';
  os << "sharing = " << sharing_name(g.sharing) << '\n';
  os << "cells = " << g.cells << '\n';
  os << "channels = " << g.channels << '\n';
  write_section(os, "generator", g.generator);
  if (g.discriminator) write_section(os, "discriminator", *g.discriminator);
  return os.str();
}

Genotype parse_genotype(std::string_view text) {
  Genotype g;
  std::optional<RawSection> gen, dis;
  RawSection* current = nullptr;
  bool header_seen = false;
  std::istringstream in{std::string(text)};
  std::string raw_line;
  int lineno = 0;
  while (std::getline(in, raw_line)) {
    ++lineno;
    std::string line = trim(raw_line.substr(0, raw_line.find('#')));
    if (line.empty()) continue;
    if (!header_seen) {
      std::istringstream hs(line);
      std::string magic;
      int version = 0;
      if (!(hs >> magic >> version) || magic != "gapnas-genotype") fail(lineno, "expected 'gapnas-genotype <version>'");
      if (version != Genotype::kSchemaVersion) {
        fail(lineno, "unsupported schema version " + std::to_string(version) + " (expected " +
                         std::to_string(Genotype::kSchemaVersion) + ")");
      }
      header_seen = true;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') fail(lineno, "malformed section header '" + line + "'");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      auto& slot = name == "generator" ? gen : name == "discriminator" ? dis : gen;
      if (name != "generator" && name != "discriminator") fail(lineno, "unknown section '" + name + "'");
      if (slot) fail(lineno, "duplicate section '" + name + "'");
      slot.emplace();
      slot->line = lineno;
      current = &*slot;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(lineno, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty() || value.empty()) fail(lineno, "empty key or value");
    if (current == nullptr) {
      try {
        if (key == "mode") {
          g.mode = parse_mode(value);
        } else if (key == "sharing") {
          g.sharing = parse_sharing(value);
        } else if (key == "cells" || key == "channels") {
          std::size_t used = 0;
          const int v = std::stoi(value, &used);
          if (used != value.size() || v < 1) fail(lineno, key + " must be a positive integer, got '" + value + "'");
          (key == "cells" ? g.cells : g.channels) = v;
        } else {
          fail(lineno, "unknown setting '" + key + "'");
        }
      } catch (const std::logic_error&) {
        fail(lineno, key + " must be a positive integer, got '" + value + "'");
      } catch (const ConfigError& e) {
        if (std::string_view(e.what()).starts_with("genotype line")) throw;
        fail(lineno, e.what());
      }
      continue;
    }
    if (key == "topology") {
      current->topology = value;
      continue;
    }
    const auto op = parse_op(value);
    if (!op) fail(lineno, "unknown op '" + value + "' for edge " + key);
    for (const auto& [id, _] : current->edges) {
      if (id == key) fail(lineno, "edge " + key + " listed twice");
    }
    current->edges.push_back({key, {*op, lineno}});
  }
  if (!header_seen) fail(lineno, "empty genotype");
  if (!gen) fail(lineno, "missing [generator] section");
  g.generator = finish_section(*gen, "generator", g.cells, g.sharing);
  if (dis) g.discriminator = finish_section(*dis, "discriminator", 1, g.sharing);
  return g;
}

std::string genotype_to_json(const Genotype& g) {
  auto section = [](const GenotypeSection& s) {
    nlohmann::ordered_json j;
    j["topology"] = s.topology;
    nlohmann::ordered_json edges = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < s.ops.size(); ++i) edges[s.edge_ids[i]] = op_name(s.ops[i]);
    j["edges"] = edges;
    return j;
  };
  nlohmann::ordered_json j;
  j["schema_version"] = Genotype::kSchemaVersion;
  j["mode"] = mode_name(g.mode);
  j["sharing"] = sharing_name(g.sharing);
  j["cells"] = g.cells;
  j["channels"] = g.channels;
  j["generator"] = section(g.generator);
  if (g.discriminator) j["discriminator"] = section(*g.discriminator);
  return j.dump(2);
}

std::string genotype_hash(const Genotype& g) { return sha256_hex(serialize_genotype(g)).substr(0, 12); }

}  // namespace gapnas
