#include "commands.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "gapnas/checkpoint.hpp"
#include "gapnas/error.hpp"
#include "gapnas/grad_suite.hpp"

namespace gapnas::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string round_file(int round) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "genotypes/round_%04d.txt", round);
  return buf;
}

void apply_set(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunManifest start_manifest(const std::string& command, const RunConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.seed = cfg.search.seed;
  m.config_text = config_to_text(cfg);
  m.started = utc_timestamp();
  return m;
}

std::string metric_line(const MetricRecord& m, const Dataset& data) {
  std::string s = "iteration=" + std::to_string(m.iteration) + " fd=" + fmt("%.6g", m.fd);
  if (!data.modes.empty()) {
    s += " modes_hit=" + std::to_string(m.modes_hit) + "/" + std::to_string(data.modes.size()) +
         " high_quality_fraction=" + fmt("%.4f", m.high_quality_fraction);
  }
  return s;
}

}  // namespace

CsvAppender::CsvAppender(const fs::path& path, const std::string& header) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << header << '\n';
}

void CsvAppender::append(const std::string& row) {
  std::ofstream out(path_, std::ios::app);
  out << row << '\n';
  out.flush();
  if (!out) throw Error("cannot append to " + path_.string());
}

RunConfig resolve_config(const CommonOptions& opt) {
  RunConfig cfg;
  if (!opt.preset.empty()) apply_preset(cfg, opt.preset);
  if (!opt.config.empty()) apply_config_file(cfg, opt.config);
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (opt.seed) cfg.search.seed = *opt.seed;
  if (!opt.op_pool.empty()) set_config_value(cfg, "net.op_pool", opt.op_pool);
  if (!opt.relax.empty()) set_config_value(cfg, "net.relax", opt.relax);
  if (!opt.gbar.empty()) set_config_value(cfg, "search.gbar", opt.gbar);
  if (opt.single_level) cfg.search.single_level_lambda = *opt.single_level;
  if (opt.warmup) cfg.search.warmup_fraction = *opt.warmup;
  if (opt.search_d) cfg.search.task.search_discriminator = true;
  for (const auto& s : opt.sets) apply_set(cfg, s);
  cfg.finalize();
  return cfg;
}

SearchOutcome cmd_search(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  RunManifest manifest = start_manifest("search", cfg);
  std::vector<std::string> files{"config.ini", "search_log.csv"};
  write_file_atomic(dir / "config.ini", manifest.config_text);
  CsvAppender csv(dir / "search_log.csv", SearchLog::csv_header());

  RngStreams rng(cfg.search.seed);
  SearchProblem problem = build_problem(cfg.search.task, rng);
  SearchHooks hooks;
  hooks.on_round = [&](const RoundRecord& r) {
    csv.append(SearchLog::csv_row(r));
    if (!r.genotype_text.empty()) {
      write_file_atomic(dir / round_file(r.round), r.genotype_text);
      files.push_back(round_file(r.round));
    }
    log << "round " << r.round << "/" << cfg.search.rounds << " v=" << fmt("%.6g", r.v_estimate)
        << " d_loss=" << fmt("%.4f", r.d_loss) << " g_loss=" << fmt("%.4f", r.g_loss) << " genotype=" << r.genotype_hash
        << '\n'
        << std::flush;
  };

  SearchOutcome out;
  try {
    out.result = run_search(cfg.search, problem, rng, hooks);
  } catch (const SearchAborted& e) {
    save_search_checkpoint(dir / "abort_checkpoint.json", cfg, problem, e.optimizers(), rng, e.round());
    files.push_back("abort_checkpoint.json");
    write_manifest(dir, manifest, files);
    log << "error: " << e.what() << "\ncheckpoint and partial log written to " << dir.string() << '\n';
    out.result.log = e.partial_log();
    out.exit_code = kNumerical;
    return out;
  }
  save_search_checkpoint(dir / "search_checkpoint.json", cfg, problem, out.result.optimizers, rng,
                         cfg.search.rounds);
  files.push_back("search_checkpoint.json");
  if (out.result.genotype) {
    write_file_atomic(dir / "genotype.txt", serialize_genotype(*out.result.genotype));
    write_file_atomic(dir / "genotype.json", genotype_to_json(*out.result.genotype) + "\n");
    files.insert(files.end(), {"genotype.txt", "genotype.json"});
    log << "genotype " << genotype_hash(*out.result.genotype) << '\n' << serialize_genotype(*out.result.genotype);
  }
  log << "log checksum " << out.result.log.checksum() << '\n';
  write_manifest(dir, manifest, files);
  return out;
}

int cmd_retrain(const RunConfig& cfg_in, const fs::path& genotype_path, const std::optional<fs::path>& resume,
                std::ostream& log) {
  RunConfig cfg = cfg_in;
  Genotype genotype;
  std::optional<RetrainResult> state;
  std::optional<RngStreams> rng;
  if (resume) {
    LoadedRetrain loaded = load_retrain_checkpoint(*resume);
    // The checkpoint's config wins except for the retrain budget and output.
    const RetrainConfig budget = cfg.retrain;
    const std::string out_dir = cfg.out_dir;
    cfg = std::move(loaded.config);
    cfg.retrain.iterations = budget.iterations;
    cfg.out_dir = out_dir;
    cfg.finalize();
    genotype = std::move(loaded.genotype);
    state.emplace(std::move(loaded.state));
    rng.emplace(std::move(loaded.rng));
    if (state->iteration > cfg.retrain.iterations) {
      throw ConfigError("checkpoint is at iteration " + std::to_string(state->iteration) +
                        ", past retrain.iterations = " + std::to_string(cfg.retrain.iterations));
    }
  } else {
    genotype = parse_genotype(read_file(genotype_path));
  }
  RngStreams data_rng(cfg.search.seed);
  const auto data = build_dataset(cfg.search.task, data_rng);
  if (!data) throw ConfigError("retrain needs a generator task, not an analytic game");
  if (!resume) {
    rng.emplace(std::move(data_rng));
    state.emplace(init_retrain(genotype, cfg.search.task, cfg.retrain, *rng));
  }

  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  RunManifest manifest = start_manifest("retrain", cfg);
  std::vector<std::string> files{"config.ini", "genotype.txt", "metrics.csv", "checkpoint.json"};
  write_file_atomic(dir / "config.ini", manifest.config_text);
  write_file_atomic(dir / "genotype.txt", serialize_genotype(genotype));
  CsvAppender csv(dir / "metrics.csv", MetricRecord::csv_header());
  for (const auto& m : state->history) csv.append(m.csv_row());

  try {
    continue_retrain(*state, cfg.search.task, cfg.retrain, *data, *rng, [&](const MetricRecord& m) {
      csv.append(m.csv_row());
      log << metric_line(m, *data) << '\n' << std::flush;
    });
  } catch (const NumericalError& e) {
    save_retrain_checkpoint(dir / "checkpoint.json", cfg, genotype, *state, *rng);
    write_manifest(dir, manifest, files);
    log << "error: " << e.what() << '\n';
    return kNumerical;
  }
  save_retrain_checkpoint(dir / "checkpoint.json", cfg, genotype, *state, *rng);
  write_manifest(dir, manifest, files);
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const std::vector<std::string>& sets, const fs::path& out_csv,
             std::ostream& log) {
  LoadedRetrain loaded = load_retrain_checkpoint(checkpoint);
  for (const auto& s : sets) apply_set(loaded.config, s);
  loaded.config.finalize();
  const RunConfig& cfg = loaded.config;
  RngStreams rng(cfg.search.seed);
  const auto data = build_dataset(cfg.search.task, rng);
  MetricRecord m =
      evaluate_generator(loaded.state.g, *data, cfg.retrain.eval_samples, cfg.retrain.mode_radius, rng.stream("eval"));
  m.iteration = loaded.state.iteration;
  log << metric_line(m, *data) << '\n';
  if (!out_csv.empty()) {
    CsvAppender csv(out_csv, MetricRecord::csv_header());
    csv.append(m.csv_row());
  }
  return kOk;
}

int cmd_gradcheck(int points, double tol, std::ostream& log) {
  bool ok = true;
  run_grad_suite(points, tol, [&](const SuiteCheck& c) {
    ok = ok && c.passed;
    log << (c.passed ? "PASS " : "FAIL ") << c.name << " points=" << c.points
        << " max_rel_error=" << fmt("%.3g", c.max_rel_error);
    if (c.redrawn > 0) log << " redrawn=" << c.redrawn;
    log << '\n' << std::flush;
  });
  log << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << fmt("%g", tol) << ")\n";
  return ok ? kOk : kNumerical;
}

int cmd_count_space(const std::optional<RunConfig>& cfg, std::ostream& log) {
  log << "conventional macro " << count_configurations(conventional_space(Sharing::kMacro)) << '\n';
  log << "conventional micro " << count_configurations(conventional_space(Sharing::kMicro)) << '\n';
  if (cfg && !cfg->search.task.analytic()) {
    const NetConfig& net = cfg->search.task.net;
    const Topology topo = make_topology(net.topology, net.cells);
    log << "configured " << net.topology << " cells=" << net.cells << " pool=" << pool_preset_name(cfg->op_pool)
        << " macro " << count_configurations({topo, net.pools, Sharing::kMacro}) << " micro "
        << count_configurations({topo, net.pools, Sharing::kMicro}) << '\n';
  }
  return kOk;
}

}  // namespace gapnas::cli
