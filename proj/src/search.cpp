#include "gapnas/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gapnas/hash.hpp"
#include "gapnas/ops.hpp"

namespace gapnas {

void TaskConfig::validate() const {
  static const char* kTasks[] = {"ring8", "linear", "shapes", "quadratic", "bilinear"};
  if (std::find(std::begin(kTasks), std::end(kTasks), task) == std::end(kTasks)) {
    throw ConfigError("unknown task '" + task + "' (ring8, linear, shapes, quadratic or bilinear)");
  }
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (analytic()) {
    if (game_dim < 1) throw ConfigError("game dimension must be >= 1");
    if (search_discriminator) throw ConfigError("analytic games have no discriminator architecture to search");
    return;
  }
  if (samples < 4) throw ConfigError("task needs at least 4 samples");
  const bool image = task == "shapes";
  if (image != (net.mode == ModelMode::kImage)) {
    throw ConfigError("task '" + task + "' needs mode " + (image ? "image" : "mlp"));
  }
  if (task == "ring8" && net.data_dim != 2) throw ConfigError("ring8 samples are 2-D (data_dim = 2)");
  net.validate();
}

int SearchConfig::warmup_rounds() const {
  return static_cast<int>(std::ceil(warmup_fraction * static_cast<double>(rounds)));
}

GapConfig SearchConfig::gap_config() const {
  GapConfig g;
  g.steps = inner_steps;
  g.inner = inner_adam;
  g.inner_arch = inner_arch_adam;
  g.gbar = gbar;
  g.parallel = parallel_gap;
  return g;
}

void SearchConfig::validate() const {
  task.validate();
  if (rounds < 1 || weight_steps < 1 || arch_steps < 1 || inner_steps < 1) {
    throw ConfigError("K, T, S and R must all be >= 1");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup fraction must be in [0, 1)");
  if (single_level_lambda && !(*single_level_lambda > 0.0)) throw ConfigError("single-level lambda must be > 0");
  weight_adam.validate();
  arch_adam.validate();
  gap_config().validate();
}

std::shared_ptr<const Dataset> build_dataset(const TaskConfig& task, RngStreams& rng) {
  task.validate();
  if (task.analytic()) return nullptr;
  Rng& data = rng.stream("data");
  Dataset ds;
  if (task.task == "ring8") {
    ds = make_ring8(task.samples, data);
  } else if (task.task == "linear") {
    ds = make_linear_pushforward(task.samples, task.net.latent_dim, task.net.data_dim, rng.stream("data-matrix"), data);
  } else {
    ds = make_shapes(task.samples, task.net.image_size, data);
  }
  return std::make_shared<const Dataset>(ds.resplit(task.split_ratio, data));
}

SearchProblem build_problem(const TaskConfig& task, RngStreams& rng) {
  task.validate();
  SearchProblem p;
  Rng& init = rng.stream("init");
  if (task.analytic()) {
    const Tensor start({task.game_dim}, task.game_init);
    if (task.task == "quadratic") {
      p.game = std::make_unique<QuadraticGame>(task.game_dim);
    } else {
      p.game = std::make_unique<BilinearRegularizedGame>(randn({task.game_dim, task.game_dim}, rng.stream("data")),
                                                         task.game_lambda);
    }
    p.g = std::make_unique<VectorPlayer>("x", start);
    p.d = std::make_unique<VectorPlayer>("y", start);
    return p;
  }
  p.data = build_dataset(task, rng);
  p.game = std::make_unique<GanGame>(p.data, task.loss, task.batch_size, task.net.latent_dim);
  p.g = std::make_unique<GeneratorNet>(GeneratorNet::relaxed(task.net, init));
  p.d = std::make_unique<DiscriminatorNet>(task.search_discriminator ? DiscriminatorNet::relaxed(task.net, init)
                                                                     : DiscriminatorNet::fixed(task.net, init));
  return p;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

std::string SearchLog::csv_header() {
  return "round,v_estimate,term_max,term_min,d_loss,g_loss,genotype_hash,weight_steps,gap_solves,arch_steps,"
         "rng_checksum";
}

std::string SearchLog::csv_row(const RoundRecord& r) {
  return std::to_string(r.round) + ',' + fmt_double(r.v_estimate) + ',' + fmt_double(r.term_max) + ',' +
         fmt_double(r.term_min) + ',' + fmt_double(r.d_loss) + ',' + fmt_double(r.g_loss) + ',' + r.genotype_hash +
         ',' + std::to_string(r.weight_steps) + ',' + std::to_string(r.gap_solves) + ',' +
         std::to_string(r.arch_steps) + ',' + r.rng_checksum;
}

std::vector<double> SearchLog::v_estimates() const {
  std::vector<double> v;
  v.reserve(rounds.size());
  for (const auto& r : rounds) v.push_back(r.v_estimate);
  return v;
}

std::string SearchLog::checksum() const {
  std::string all;
  for (const auto& r : rounds) {
    all += csv_row(r) + '\n' + hex_double(r.v_estimate) + hex_double(r.d_loss) + hex_double(r.g_loss) + '\n';
    for (const auto& slot : r.alpha) {
      for (double a : slot) all += hex_double(a) + ' ';
      all += '\n';
    }
  }
  return sha256_hex(all).substr(0, 16);
}

SearchAborted::SearchAborted(const std::string& what, int round, std::string phase, SearchLog partial,
                             std::vector<ParamGroup> optimizers)
    : NumericalError(what),
      round_(round),
      phase_(std::move(phase)),
      partial_(std::move(partial)),
      optimizers_(std::move(optimizers)) {}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kWeight:
      return "weight_part";
    case Phase::kTestWeight:
      return "test_weight_part";
    case Phase::kArch:
      return "arch_part";
  }
  return "?";
}

namespace {

class Driver {
 public:
  Driver(const SearchConfig& cfg, SearchProblem& p, RngStreams& rng, const SearchHooks& hooks)
      : cfg_(cfg),
        p_(p),
        rng_(rng),
        hooks_(hooks),
        gap_(cfg.gap_config()),
        batches_(rng.stream("search-batches")),
        gumbel_(rng.stream("gumbel")),
        streams_{&rng.stream("gap-inner-D"), &rng.stream("gap-inner-G"), &rng.stream("gap-eval")},
        omega_d_("omega_D", p.d->weights(), cfg.weight_adam),
        omega_g_("omega_G", p.g->weights(), cfg.weight_adam),
        alpha_("alpha", arch_params(p), cfg.arch_adam) {}

  SearchResult run() {
    SearchResult out;
    for (int k = 1; k <= cfg_.rounds; ++k) {
      round_ = k;
      RoundRecord rec = cfg_.single_level_lambda ? single_level_round() : bilevel_round();
      rec.round = k;
      snapshot_arch(rec);
      rec.rng_checksum = rng_.checksum();
      log_.rounds.push_back(rec);
      if (hooks_.on_round) hooks_.on_round(log_.rounds.back());
    }
    out.log = std::move(log_);
    out.optimizers = {omega_d_, omega_g_, alpha_};
    if (auto* g = dynamic_cast<GeneratorNet*>(p_.g.get()); g != nullptr && g->is_relaxed()) {
      out.genotype = genotype();
    }
    return out;
  }

 private:
  static ParamList arch_params(const SearchProblem& p) {
    ParamList a = p.g->arch();
    const ParamList d = p.d->arch();
    a.insert(a.end(), d.begin(), d.end());
    return a;
  }

  bool arch_frozen() const { return round_ <= cfg_.warmup_rounds() || alpha_.empty(); }

  [[noreturn]] void abort(const std::string& what) {
    throw SearchAborted("search aborted in round " + std::to_string(round_) + " (" + std::string(phase_name(phase_)) +
                            "): " + what,
                        round_, std::string(phase_name(phase_)), log_, {omega_d_, omega_g_, alpha_});
  }

  void begin(Phase ph) {
    phase_ = ph;
    if (hooks_.before_phase) hooks_.before_phase(ph, round_);
  }

  void end(Phase ph) {
    if (hooks_.after_phase) hooks_.after_phase(ph, round_);
  }

  void step(ParamGroup& group, const GradStore& grads) {
    if (group.step(grads) != StepStatus::kApplied) abort("non-finite gradient for " + group.name());
  }

  void step(ParamGroup& group, const std::vector<Tensor>& grads) {
    if (group.step(grads) != StepStatus::kApplied) abort("non-finite gradient for " + group.name());
  }

  double finite(double v, const char* what) {
    if (!std::isfinite(v)) abort(std::string("non-finite ") + what);
    return v;
  }

  EvalOptions train_opts() { return {&gumbel_, true}; }

  // One D step (descending scale * d_loss) on a train batch.
  double d_step(const GameBatch& batch, double scale = 1.0) {
    Tape tape;
    tape.watch(omega_d_.params());
    const Var loss = p_.game->d_loss(tape, *p_.g, *p_.d, batch, train_opts());
    const double v = finite(loss.value().item(), "d_loss");
    step(omega_d_, tape.backward(scale == 1.0 ? loss : ops::scale(loss, scale)));
    return v;
  }

  BestResponses solve() {
    try {
      return approx_best_responses(*p_.game, *p_.g, *p_.d, gap_, streams_);
    } catch (const InnerSolverError& e) {
      abort(e.what());
    }
  }

  GapTerms evaluate(BestResponses& br, const ParamList& wrt, Rng& batch_rng) {
    const GameBatch batch = p_.game->sample(Split::kValidation, batch_rng);
    GapTerms t = evaluate_gap_terms(*p_.game, *p_.g, *p_.d, *br.gbar, *br.dbar, batch, wrt, &gumbel_);
    finite(t.v, "duality gap");
    return t;
  }

  static void record_terms(RoundRecord& rec, const GapTerms& t) {
    rec.term_max = t.term_max;
    rec.term_min = t.term_min;
    rec.v_estimate = t.term_max - t.term_min;
  }

  RoundRecord bilevel_round() {
    RoundRecord rec;
    const double n = cfg_.weight_steps;
    begin(Phase::kWeight);
    for (int t = 0; t < cfg_.weight_steps; ++t) {
      const GameBatch batch = p_.game->sample(Split::kTrain, batches_);
      rec.d_loss += d_step(batch) / n;
      Tape tape;
      tape.watch(omega_g_.params());
      const Var gl = p_.game->g_loss(tape, *p_.g, *p_.d, batch, train_opts());
      rec.g_loss += finite(gl.value().item(), "g_loss") / n;
      step(omega_g_, tape.backward(gl));
      ++rec.weight_steps;
    }
    end(Phase::kWeight);

    begin(Phase::kTestWeight);
    BestResponses br = solve();
    ++rec.gap_solves;
    record_terms(rec, evaluate(br, {}, *streams_.eval));
    end(Phase::kTestWeight);

    if (arch_frozen()) return rec;
    begin(Phase::kArch);
    for (int s = 0; s < cfg_.arch_steps; ++s) {
      if (cfg_.refresh_best_response_every_arch_step && s > 0) {
        br = solve();
        ++rec.gap_solves;
      }
      const GapTerms t = evaluate(br, alpha_.params(), batches_);
      step(alpha_, t.grads);
      ++rec.arch_steps;
    }
    end(Phase::kArch);
    return rec;
  }

  // G (with α) descends V + lambda * g_loss, D descends lambda * d_loss.
  // Best responses refresh once per round, i.e. every T steps.
  RoundRecord single_level_round() {
    RoundRecord rec;
    const double lambda = *cfg_.single_level_lambda;
    const double n = cfg_.weight_steps;
    begin(Phase::kTestWeight);
    BestResponses br = solve();
    ++rec.gap_solves;
    record_terms(rec, evaluate(br, {}, *streams_.eval));
    end(Phase::kTestWeight);

    const bool update_alpha = !arch_frozen();
    ParamList joint = omega_g_.params();
    if (update_alpha) joint.insert(joint.end(), alpha_.params().begin(), alpha_.params().end());
    begin(Phase::kWeight);
    for (int t = 0; t < cfg_.weight_steps; ++t) {
      const GameBatch batch = p_.game->sample(Split::kTrain, batches_);
      rec.d_loss += d_step(batch, lambda) / n;
      const GameBatch val = p_.game->sample(Split::kValidation, batches_);
      Tape tape;
      tape.watch(joint);
      const Var v = ops::sub(p_.game->payoff(tape, *p_.g, *br.dbar, val, {&gumbel_, false}),
                             p_.game->payoff(tape, *br.gbar, *p_.d, val, {&gumbel_, false}));
      const Var gl = p_.game->g_loss(tape, *p_.g, *p_.d, batch, train_opts());
      rec.g_loss += finite(gl.value().item(), "g_loss") / n;
      const GradStore grads = tape.backward(ops::add(v, ops::scale(gl, lambda)));
      step(omega_g_, grads);
      ++rec.weight_steps;
      if (update_alpha) {
        step(alpha_, grads);
        ++rec.arch_steps;
      }
    }
    end(Phase::kWeight);
    return rec;
  }

  Genotype genotype() const {
    const auto& g = dynamic_cast<const GeneratorNet&>(*p_.g);
    const auto* d = dynamic_cast<const DiscriminatorNet*>(p_.d.get());
    return make_genotype(g, d != nullptr && d->searchable() ? d : nullptr);
  }

  void snapshot_arch(RoundRecord& rec) const {
    for (const auto& a : alpha_.params()) rec.alpha.push_back(a->value.vec());
    if (!alpha_.empty()) {
      const Genotype gt = genotype();
      rec.genotype_hash = genotype_hash(gt);
      rec.genotype_text = serialize_genotype(gt);
    }
  }

  const SearchConfig& cfg_;
  SearchProblem& p_;
  RngStreams& rng_;
  const SearchHooks& hooks_;
  GapConfig gap_;
  Rng& batches_;
  Rng& gumbel_;
  GapStreams streams_;
  ParamGroup omega_d_, omega_g_, alpha_;
  SearchLog log_;
  int round_ = 0;
  Phase phase_ = Phase::kWeight;
};

}  // namespace

SearchResult run_search(const SearchConfig& cfg, SearchProblem& problem, RngStreams& rng, const SearchHooks& hooks) {
  cfg.validate();
  if (!problem.game || !problem.g || !problem.d) throw ConfigError("search problem is incomplete");
  return Driver(cfg, problem, rng, hooks).run();
}

SearchResult search(const SearchConfig& cfg, const SearchHooks& hooks) {
  cfg.validate();
  RngStreams rng(cfg.seed);
  SearchProblem problem = build_problem(cfg.task, rng);
  return run_search(cfg, problem, rng, hooks);
}

// ---------------------------------------------------------------------------

void RetrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("retrain iterations must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval interval must be >= 1");
  if (g_batch < 1 || d_batch < 1) throw ConfigError("retrain batch sizes must be >= 1");
  if (width < 0) throw ConfigError("retrain width must be >= 0");
  if (eval_samples < 2) throw ConfigError("eval samples must be >= 2");
  if (!(mode_radius > 0.0)) throw ConfigError("mode radius must be > 0");
  adam.validate();
}

std::string MetricRecord::csv_header() { return "iteration,fd,modes_hit,high_quality_fraction"; }

std::string MetricRecord::csv_row() const {
  return std::to_string(iteration) + ',' + fmt_double(fd) + ',' + std::to_string(modes_hit) + ',' +
         fmt_double(high_quality_fraction);
}

namespace {

Tensor flatten_features(const Tensor& x, ModelMode mode) {
  return mode == ModelMode::kImage ? projection_features(x) : x;
}

Tensor centers_of(const Dataset& data) {
  Tensor c({static_cast<std::int64_t>(data.modes.size()), 2});
  for (std::size_t k = 0; k < data.modes.size(); ++k) {
    c[2 * k] = data.modes[k][0];
    c[2 * k + 1] = data.modes[k][1];
  }
  return c;
}

}  // namespace

MetricRecord evaluate_generator(GeneratorNet& g, const Dataset& data, std::int64_t n, double mode_radius, Rng& rng) {
  const ModelMode mode = g.config().mode;
  constexpr std::int64_t kChunk = 2000;
  std::vector<double> feats;
  std::int64_t feat_dim = 0;
  std::vector<double> points;  // raw 2-D samples for mode coverage
  for (std::int64_t done = 0; done < n; done += kChunk) {
    const std::int64_t b = std::min(kChunk, n - done);
    Tape tape;
    const Tensor x = g.forward(tape, tape.constant(randn({b, g.config().latent_dim}, rng)), nullptr,
                               ops::BatchNormMode::kEval)
                         .value();
    const Tensor f = flatten_features(x, mode);
    feat_dim = static_cast<std::int64_t>(f.size()) / b;
    feats.insert(feats.end(), f.vec().begin(), f.vec().end());
    if (!data.modes.empty()) points.insert(points.end(), x.vec().begin(), x.vec().end());
  }
  for (double v : feats) {
    if (!std::isfinite(v)) throw NumericalError("generator produced non-finite samples");
  }
  MetricRecord m;
  const SampleStats gen = fit_stats(Tensor({n, feat_dim}, std::move(feats)));
  const SampleStats ref = fit_stats(flatten_features(data.all(), mode));
  m.fd = frechet_distance(gen, ref);
  if (!data.modes.empty()) {
    const double radius = data.mode_std > 0.0 ? mode_radius * data.mode_std : mode_radius;
    const ModeReport r = mode_coverage(Tensor({n, 2}, std::move(points)), centers_of(data), radius);
    m.modes_hit = r.modes_hit;
    m.high_quality_fraction = r.high_quality_fraction;
  }
  return m;
}

NetConfig retrain_net_config(const Genotype& genotype, const TaskConfig& task, const RetrainConfig& cfg) {
  if (task.analytic()) throw ConfigError("retrain needs a generator task, not an analytic game");
  if (genotype.mode != task.net.mode) throw ConfigError("genotype mode does not match the task");
  NetConfig net = task.net;
  net.width = cfg.width > 0 ? cfg.width : genotype.channels;
  net.cells = genotype.cells;
  net.sharing = genotype.sharing;
  net.topology = genotype.generator.topology;
  net.validate();
  return net;
}

RetrainResult init_retrain(const Genotype& genotype, const TaskConfig& task, const RetrainConfig& cfg,
                           RngStreams& rng) {
  cfg.validate();
  const NetConfig net = retrain_net_config(genotype, task, cfg);
  Rng& init = rng.stream("retrain-init");
  RetrainResult out{GeneratorNet::discrete(net, genotype.generator, init), DiscriminatorNet::fixed(net, init), {}, {},
                    {}, 0};
  out.omega_g = ParamGroup("omega_G", out.g.weights(), cfg.adam);
  out.omega_d = ParamGroup("omega_D", out.d.weights(), cfg.adam);
  return out;
}

void continue_retrain(RetrainResult& out, const TaskConfig& task, const RetrainConfig& cfg, const Dataset& data,
                      RngStreams& rng, const std::function<void(const MetricRecord&)>& on_metric) {
  cfg.validate();
  const std::int64_t latent = out.g.config().latent_dim;
  auto shared = std::shared_ptr<const Dataset>(&data, [](const Dataset*) {});
  const GanGame d_game(shared, task.loss, cfg.d_batch, latent);
  const GanGame g_game(shared, task.loss, cfg.g_batch, latent);
  ParamGroup& omega_d = out.omega_d;
  ParamGroup& omega_g = out.omega_g;
  Rng& batches = rng.stream("retrain-batches");
  Rng& eval_rng = rng.stream("retrain-eval");
  const EvalOptions opts{nullptr, true};
  for (int it = out.iteration + 1; it <= cfg.iterations; ++it) {
    {
      Tape tape;
      tape.watch(omega_d.params());
      const Var loss = d_game.d_loss(tape, out.g, out.d, d_game.sample(Split::kTrain, batches), opts);
      if (!std::isfinite(loss.value().item())) {
        throw NumericalError("retrain: non-finite d_loss at iteration " + std::to_string(it));
      }
      if (omega_d.step(tape.backward(loss)) != StepStatus::kApplied) {
        throw NumericalError("retrain: non-finite D gradient at iteration " + std::to_string(it));
      }
    }
    {
      Tape tape;
      tape.watch(omega_g.params());
      const Var loss = g_game.g_loss(tape, out.g, out.d, g_game.sample(Split::kTrain, batches), opts);
      if (!std::isfinite(loss.value().item())) {
        throw NumericalError("retrain: non-finite g_loss at iteration " + std::to_string(it));
      }
      if (omega_g.step(tape.backward(loss)) != StepStatus::kApplied) {
        throw NumericalError("retrain: non-finite G gradient at iteration " + std::to_string(it));
      }
    }
    out.iteration = it;
    if (it % cfg.eval_interval == 0 || it == cfg.iterations) {
      MetricRecord m = evaluate_generator(out.g, data, cfg.eval_samples, cfg.mode_radius, eval_rng);
      m.iteration = it;
      out.history.push_back(m);
      if (on_metric) on_metric(m);
    }
  }
}

RetrainResult retrain(const Genotype& genotype, const TaskConfig& task, const RetrainConfig& cfg, const Dataset& data,
                      RngStreams& rng, const std::function<void(const MetricRecord&)>& on_metric) {
  RetrainResult out = init_retrain(genotype, task, cfg, rng);
  continue_retrain(out, task, cfg, data, rng, on_metric);
  return out;
}

Genotype random_genotype(const TaskConfig& task, Rng& rng) {
  task.validate();
  if (task.analytic()) throw ConfigError("analytic games have no architecture");
  Genotype g;
  g.mode = task.net.mode;
  g.sharing = task.net.sharing;
  g.cells = task.net.cells;
  g.channels = task.net.width;
  g.generator = random_section({make_topology(task.net.topology, task.net.cells), task.net.pools, task.net.sharing}, rng);
  return g;
}

}  // namespace gapnas
