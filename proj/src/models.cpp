#include "gapnas/models.hpp"

#include <cmath>

#include "gapnas/error.hpp"

namespace gapnas {

namespace {

ParamPtr dup(const ParamPtr& p) { return p ? make_param(p->name, p->value) : nullptr; }

ParamPtr he_param(const std::string& name, const Shape& shape, double fan_in, Rng& rng) {
  return make_param(name, randn(shape, rng, std::sqrt(2.0 / fan_in)));
}

ParamPtr xavier_param(const std::string& name, const Shape& shape, double fan_in, double fan_out, Rng& rng) {
  return make_param(name, randn(shape, rng, std::sqrt(2.0 / (fan_in + fan_out))));
}

ParamPtr zeros_param(const std::string& name, std::int64_t n) { return make_param(name, Tensor({n}, 0.0)); }

void check_genotype_matches(const Topology& topology, const GenotypeSection& genotype) {
  if (genotype.topology != topology.name) {
    throw ConfigError("genotype topology '" + genotype.topology + "' does not match network topology '" +
                      topology.name + "'");
  }
  if (genotype.ops.size() != topology.edges.size() || genotype.edge_ids.size() != topology.edges.size()) {
    throw ConfigError("genotype lists " + std::to_string(genotype.ops.size()) + " edges, topology " + topology.name +
                      " has " + std::to_string(topology.edges.size()));
  }
  for (std::size_t e = 0; e < topology.edges.size(); ++e) {
    const auto& spec = topology.edges[e];
    if (genotype.edge_ids[e] != spec.id) {
      throw ConfigError("genotype edge " + genotype.edge_ids[e] + " where " + spec.id + " was expected");
    }
    if (pool_kind_of(genotype.ops[e]) != spec.kind) {
      throw ConfigError("op " + std::string(op_name(genotype.ops[e])) + " cannot be placed on " +
                        std::string(pool_kind_name(spec.kind)) + " edge " + spec.id);
    }
  }
}

}  // namespace

void NetConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("generator: latent_dim must be >= 1");
  if (width < 1 || disc_width < 1) throw ConfigError("network widths must be >= 1");
  if (cells < 1) throw ConfigError("generator: cell count must be >= 1");
  if (!(relax.tau > 0.0)) throw ConfigError("relaxation temperature must be > 0");
  if (mode == ModelMode::kMlp) {
    if (topology != "mlp-chain") throw ConfigError("mlp mode needs the mlp-chain topology, got " + topology);
    if (data_dim < 1 || data_dim > width) {
      throw ConfigError("generator output layer: data_dim " + std::to_string(data_dim) + " must lie in [1, width " +
                        std::to_string(width) + "]");
    }
  } else {
    if (topology != "conventional" && topology != "compact") {
      throw ConfigError("image mode needs the conventional or compact topology, got " + topology);
    }
    if (cells > 8 || image_size != (4 << cells)) {
      throw ConfigError("generator cells: " + std::to_string(cells) + " x2 upsamplings from 4x4 cannot produce " +
                        std::to_string(image_size) + "x" + std::to_string(image_size) + " samples");
    }
    if (image_channels < 1) throw ConfigError("image_channels must be >= 1");
  }
}

Shape NetConfig::sample_shape(std::int64_t batch) const {
  if (mode == ModelMode::kMlp) return {batch, data_dim};
  return {batch, image_channels, image_size, image_size};
}

// ---------------------------------------------------------------------------

CellGraph::CellGraph(const Topology& topology, const OpPools& pools, int width, Rng& init, const std::string& prefix)
    : topology_(topology), relaxed_(true) {
  for (const auto& e : topology.edges) {
    std::vector<CandidateOp> cands;
    for (OpKind op : pools.for_kind(e.kind)) {
      cands.emplace_back(op, width, init, prefix + "." + e.id + "." + std::string(op_name(op)));
    }
    if (cands.empty()) throw ConfigError("edge " + e.id + " has an empty op pool");
    edge_ops_.push_back(std::move(cands));
  }
}

CellGraph::CellGraph(const Topology& topology, const GenotypeSection& genotype, int width, Rng& init,
                     const std::string& prefix)
    : topology_(topology), relaxed_(false) {
  check_genotype_matches(topology, genotype);
  for (std::size_t e = 0; e < topology.edges.size(); ++e) {
    const OpKind op = genotype.ops[e];
    edge_ops_.push_back(
        {CandidateOp(op, width, init, prefix + "." + topology.edges[e].id + "." + std::string(op_name(op)))});
  }
}

Var CellGraph::forward(Tape& tape, Var x, const ArchParams* arch, const RelaxConfig& relax, Rng* gumbel) const {
  if (relaxed_ && arch == nullptr) throw Error("relaxed cell graph evaluated without architecture parameters");
  if (relaxed_ && arch->num_edges() != topology_.edges.size()) {
    throw ShapeError("architecture has " + std::to_string(arch->num_edges()) + " edges, graph has " +
                     std::to_string(topology_.edges.size()));
  }
  std::vector<Var> nodes(static_cast<std::size_t>(topology_.num_nodes));
  nodes[0] = x;
  for (int n = 1; n < topology_.num_nodes; ++n) {
    Var acc;
    for (std::size_t e = 0; e < topology_.edges.size(); ++e) {
      const auto& spec = topology_.edges[e];
      if (spec.dst != n) continue;
      const Var in = nodes[static_cast<std::size_t>(spec.src)];
      Var out = relaxed_ ? mixed_op_forward(tape, in, edge_ops_[e], tape.param(arch->logits(e)), relax, gumbel)
                         : edge_ops_[e][0].apply(tape, in);
      acc = acc.valid() ? ops::add(acc, out) : out;
    }
    if (!acc.valid()) throw ConfigError("node " + std::to_string(n) + " of " + topology_.name + " has no inputs");
    nodes[static_cast<std::size_t>(n)] = acc;
  }
  return nodes.back();
}

ParamList CellGraph::weights() const {
  ParamList out;
  for (const auto& cands : edge_ops_) {
    for (const auto& op : cands) out.insert(out.end(), op.params().begin(), op.params().end());
  }
  return out;
}

CellGraph CellGraph::deep_copy() const {
  CellGraph g = *this;
  for (auto& cands : g.edge_ops_) {
    for (auto& op : cands) op = op.deep_copy();
  }
  return g;
}

CellGraph CellGraph::select(const GenotypeSection& genotype) const {
  check_genotype_matches(topology_, genotype);
  CellGraph g;
  g.topology_ = topology_;
  g.relaxed_ = false;
  for (std::size_t e = 0; e < edge_ops_.size(); ++e) {
    const CandidateOp* chosen = nullptr;
    for (const auto& op : edge_ops_[e]) {
      if (op.kind() == genotype.ops[e]) chosen = &op;
    }
    if (chosen == nullptr) {
      throw ConfigError("op " + std::string(op_name(genotype.ops[e])) + " is not a candidate on edge " +
                        topology_.edges[e].id);
    }
    g.edge_ops_.push_back({chosen->deep_copy()});
  }
  return g;
}

// ---------------------------------------------------------------------------

GeneratorNet GeneratorNet::relaxed(const NetConfig& config, Rng& init) {
  config.validate();
  GeneratorNet g;
  g.config_ = config;
  const Topology topo = make_topology(config.topology, config.cells);
  g.arch_ = std::make_shared<ArchParams>(topo, config.pools, config.sharing, "G", init);
  g.graph_ = CellGraph(topo, config.pools, config.width, init, "G");
  g.build_io(init);
  return g;
}

GeneratorNet GeneratorNet::discrete(const NetConfig& config, const GenotypeSection& genotype, Rng& init) {
  config.validate();
  GeneratorNet g;
  g.config_ = config;
  g.graph_ = CellGraph(make_topology(config.topology, config.cells), genotype, config.width, init, "G");
  g.genotype_ = genotype;
  g.build_io(init);
  return g;
}

void GeneratorNet::build_io(Rng& init) {
  const std::int64_t w = config_.width;
  const double latent = config_.latent_dim;
  if (config_.mode == ModelMode::kMlp) {
    stem_w_ = xavier_param("G.stem.w", {config_.latent_dim, w}, latent, static_cast<double>(w), init);
    stem_b_ = zeros_param("G.stem.b", w);
    return;
  }
  stem_w_ = xavier_param("G.stem.w", {config_.latent_dim, w * 16}, latent, static_cast<double>(w * 16), init);
  stem_b_ = zeros_param("G.stem.b", w * 16);
  bn_gamma_ = make_param("G.out.bn.gamma", Tensor({w}, 1.0));
  bn_beta_ = zeros_param("G.out.bn.beta", w);
  const std::int64_t ch = config_.image_channels;
  out_w_ = xavier_param("G.out.conv.w", {ch, w, 3, 3}, 9.0 * static_cast<double>(w), 9.0 * static_cast<double>(ch),
                        init);
  out_b_ = zeros_param("G.out.conv.b", ch);
  bn_stats_ = ops::BatchNormStats(w);
}

Var GeneratorNet::forward(Tape& tape, Var z, Rng* gumbel, ops::BatchNormMode bn) {
  if (z.shape().size() != 2 || z.shape()[1] != config_.latent_dim) {
    throw ShapeError("generator input: expected z of shape [B, " + std::to_string(config_.latent_dim) + "], got " +
                     shape_str(z.shape()));
  }
  const std::int64_t batch = z.shape()[0];
  Var h = ops::linear(z, tape.param(stem_w_), tape.param(stem_b_));
  if (config_.mode == ModelMode::kImage) h = ops::reshape(h, {batch, config_.width, 4, 4});
  h = graph_.forward(tape, h, arch_.get(), config_.relax, gumbel);
  if (config_.mode == ModelMode::kMlp) {
    // Fixed readout of the leading data_dim coordinates.
    Tensor select({config_.width, config_.data_dim}, 0.0);
    for (int i = 0; i < config_.data_dim; ++i) select[static_cast<std::size_t>(i * config_.data_dim + i)] = 1.0;
    return ops::matmul(h, tape.constant(std::move(select)));
  }
  h = ops::batch_norm(h, tape.param(bn_gamma_), tape.param(bn_beta_), bn_stats_, bn);
  h = ops::conv2d(ops::relu(h), tape.param(out_w_), {1, 1, 1});
  return ops::tanh(ops::bias_add(h, tape.param(out_b_)));
}

ParamList GeneratorNet::weights() const {
  ParamList out{stem_w_, stem_b_};
  const ParamList cells = graph_.weights();
  out.insert(out.end(), cells.begin(), cells.end());
  if (config_.mode == ModelMode::kImage) out.insert(out.end(), {bn_gamma_, bn_beta_, out_w_, out_b_});
  return out;
}

ParamList GeneratorNet::arch() const { return arch_ ? arch_->unique() : ParamList{}; }

GeneratorNet GeneratorNet::clone_net(ArchCloning arch) const {
  GeneratorNet g = *this;
  g.graph_ = graph_.deep_copy();
  for (ParamPtr* p : {&g.stem_w_, &g.stem_b_, &g.bn_gamma_, &g.bn_beta_, &g.out_w_, &g.out_b_}) *p = dup(*p);
  if (arch_ && arch == ArchCloning::kCopy) g.arch_ = std::make_shared<ArchParams>(arch_->deep_copy());
  return g;
}

std::unique_ptr<Player> GeneratorNet::clone(ArchCloning arch) const {
  return std::make_unique<GeneratorNet>(clone_net(arch));
}

GenotypeSection GeneratorNet::genotype() const { return arch_ ? discretize(*arch_) : *genotype_; }

GeneratorNet GeneratorNet::discretized(const GenotypeSection& genotype) const {
  GeneratorNet g = clone_net(ArchCloning::kShare);
  g.graph_ = graph_.select(genotype);
  g.arch_ = nullptr;
  g.genotype_ = genotype;
  return g;
}

// ---------------------------------------------------------------------------

DiscriminatorNet DiscriminatorNet::fixed(const NetConfig& config, Rng& init) {
  config.validate();
  DiscriminatorNet d;
  d.config_ = config;
  d.build_fixed_layers(init);
  return d;
}

DiscriminatorNet DiscriminatorNet::relaxed(const NetConfig& config, Rng& init) {
  config.validate();
  DiscriminatorNet d;
  d.config_ = config;
  d.searchable_ = true;
  const Topology topo = make_topology(body_topology(config.mode), 1);
  d.arch_ = std::make_shared<ArchParams>(topo, config.pools, config.sharing, "D", init);
  d.graph_ = CellGraph(topo, config.pools, config.disc_width, init, "D");
  d.build_fixed_layers(init);
  return d;
}

DiscriminatorNet DiscriminatorNet::discrete(const NetConfig& config, const GenotypeSection& genotype, Rng& init) {
  config.validate();
  DiscriminatorNet d;
  d.config_ = config;
  d.searchable_ = true;
  d.graph_ = CellGraph(make_topology(body_topology(config.mode), 1), genotype, config.disc_width, init, "D");
  d.genotype_ = genotype;
  d.build_fixed_layers(init);
  return d;
}

// Layer i maps layer_w_[i]; the last layer is the linear head.
void DiscriminatorNet::build_fixed_layers(Rng& init) {
  const std::int64_t w = config_.disc_width;
  const double wd = static_cast<double>(w);
  auto add = [&](ParamPtr weight, std::int64_t bias) {
    layer_b_.push_back(zeros_param("D.l" + std::to_string(layer_w_.size()) + ".b", bias));
    layer_w_.push_back(std::move(weight));
  };
  auto name = [&] { return "D.l" + std::to_string(layer_w_.size()) + ".w"; };
  if (config_.mode == ModelMode::kMlp) {
    add(he_param(name(), {config_.data_dim, w}, config_.data_dim, init), w);
    if (!searchable_) add(he_param(name(), {w, w}, wd, init), w);
    add(xavier_param(name(), {w, 1}, wd, 1.0, init), 1);
    return;
  }
  // Searchable bodies replace the second conv with the cell at 16x16.
  const int convs = searchable_ ? 3 : 4;
  std::int64_t in_ch = config_.image_channels;
  for (int i = 0; i < convs; ++i) {
    add(he_param(name(), {w, in_ch, 3, 3}, 9.0 * static_cast<double>(in_ch), init), w);
    in_ch = w;
  }
  const std::int64_t side = config_.image_size >> convs;
  add(xavier_param(name(), {w * side * side, 1}, wd * static_cast<double>(side * side), 1.0, init), 1);
}

Var DiscriminatorNet::forward(Tape& tape, Var x, Rng* gumbel) const {
  const Shape expect = config_.sample_shape(x.shape().empty() ? 0 : x.shape()[0]);
  if (x.shape() != expect) {
    throw ShapeError("discriminator input: expected " + shape_str(expect) + ", got " + shape_str(x.shape()));
  }
  const std::int64_t batch = x.shape()[0];
  auto w = [&](std::size_t i) { return tape.param(layer_w_[i]); };
  auto b = [&](std::size_t i) { return tape.param(layer_b_[i]); };
  const std::size_t head = layer_w_.size() - 1;
  Var h = x;
  for (std::size_t i = 0; i < head; ++i) {
    if (config_.mode == ModelMode::kMlp) {
      h = ops::leaky_relu(ops::linear(h, w(i), b(i)), 0.2);
    } else {
      h = ops::leaky_relu(ops::bias_add(ops::conv2d(h, w(i), {2, 1, 1}), b(i)), 0.2);
    }
    if (searchable_ && i == 0) h = graph_.forward(tape, h, arch_.get(), config_.relax, gumbel);
  }
  if (config_.mode == ModelMode::kImage) h = ops::reshape(h, {batch, layer_w_[head]->value.dim(0)});
  return ops::linear(h, w(head), b(head));
}

ParamList DiscriminatorNet::weights() const {
  ParamList out;
  for (std::size_t i = 0; i < layer_w_.size(); ++i) {
    out.push_back(layer_w_[i]);
    out.push_back(layer_b_[i]);
    if (searchable_ && i == 0) {
      const ParamList cells = graph_.weights();
      out.insert(out.end(), cells.begin(), cells.end());
    }
  }
  return out;
}

ParamList DiscriminatorNet::arch() const { return arch_ ? arch_->unique() : ParamList{}; }

DiscriminatorNet DiscriminatorNet::clone_net(ArchCloning arch) const {
  DiscriminatorNet d = *this;
  d.graph_ = graph_.deep_copy();
  for (auto& p : d.layer_w_) p = dup(p);
  for (auto& p : d.layer_b_) p = dup(p);
  if (arch_ && arch == ArchCloning::kCopy) d.arch_ = std::make_shared<ArchParams>(arch_->deep_copy());
  return d;
}

std::unique_ptr<Player> DiscriminatorNet::clone(ArchCloning arch) const {
  return std::make_unique<DiscriminatorNet>(clone_net(arch));
}

std::optional<GenotypeSection> DiscriminatorNet::genotype() const {
  if (!searchable_) return std::nullopt;
  return arch_ ? discretize(*arch_) : *genotype_;
}

// ---------------------------------------------------------------------------

Genotype make_genotype(const GeneratorNet& g, const DiscriminatorNet* d) {
  Genotype out;
  out.mode = g.config().mode;
  out.sharing = g.config().sharing;
  out.cells = g.config().cells;
  out.channels = g.config().width;
  out.generator = g.genotype();
  if (d != nullptr) out.discriminator = d->genotype();
  return out;
}

std::vector<ParamGroup> parameter_groups(const Player& p, const std::string& tag, const AdamConfig& weight_cfg,
                                         const AdamConfig& arch_cfg) {
  std::vector<ParamGroup> groups;
  groups.emplace_back("omega_" + tag, p.weights(), weight_cfg);
  if (auto a = p.arch(); !a.empty()) groups.emplace_back("alpha_" + tag, std::move(a), arch_cfg);
  return groups;
}

std::size_t parameter_count(const Player& p) { return count_elements(p.weights()); }

}  // namespace gapnas
