#include "gapnas/checkpoint.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

#include "gapnas/error.hpp"
#include "gapnas/hash.hpp"

#ifndef GAPNAS_VERSION
#define GAPNAS_VERSION "unknown"
#endif

namespace gapnas {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view code_version() { return GAPNAS_VERSION; }

namespace {

// JSON has no NaN/inf; null stands for NaN so aborted states still load.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error(where + ": missing field '" + key + "'");
  return j.at(key);
}

json adam_config_json(const AdamConfig& c) {
  return {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

json bn_to_json(const ops::BatchNormStats& s) {
  return {{"running_mean", tensor_to_json(s.running_mean)},
          {"running_var", tensor_to_json(s.running_var)},
          {"momentum", s.momentum},
          {"eps", s.eps}};
}

void bn_from_json(const json& j, ops::BatchNormStats& s) {
  Tensor mean = tensor_from_json(field(j, "running_mean", "batch_norm"));
  Tensor var = tensor_from_json(field(j, "running_var", "batch_norm"));
  if (mean.shape() != s.running_mean.shape() || var.shape() != s.running_var.shape()) {
    throw Error("batch_norm: running statistics shape mismatch");
  }
  s.running_mean = std::move(mean);
  s.running_var = std::move(var);
  s.momentum = field(j, "momentum", "batch_norm").get<double>();
  s.eps = field(j, "eps", "batch_norm").get<double>();
}

json metric_to_json(const MetricRecord& m) {
  return {{"iteration", m.iteration},
          {"fd", number(m.fd)},
          {"modes_hit", m.modes_hit},
          {"high_quality_fraction", m.high_quality_fraction}};
}

MetricRecord metric_from_json(const json& j) {
  MetricRecord m;
  m.iteration = field(j, "iteration", "history").get<int>();
  m.fd = read_number(field(j, "fd", "history"));
  m.modes_hit = field(j, "modes_hit", "history").get<int>();
  m.high_quality_fraction = field(j, "high_quality_fraction", "history").get<double>();
  return m;
}

json header(std::string_view kind, const RunConfig& cfg) {
  return {{"schema_version", kCheckpointSchemaVersion},
          {"kind", kind},
          {"version", code_version()},
          {"seed", cfg.search.seed},
          {"config", config_to_text(cfg)}};
}

}  // namespace

json tensor_to_json(const Tensor& t) {
  json data = json::array();
  for (double v : t.data()) data.push_back(number(v));
  return {{"shape", t.shape()}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const json& j) {
  const Shape shape = field(j, "shape", "tensor").get<Shape>();
  const json& data = field(j, "data", "tensor");
  if (!data.is_array()) throw Error("tensor: 'data' must be an array");
  std::vector<double> values;
  values.reserve(data.size());
  for (const auto& v : data) values.push_back(read_number(v));
  return Tensor(shape, std::move(values));
}

json params_to_json(const ParamList& params) {
  json out = json::object();
  for (const auto& p : params) {
    if (out.contains(p->name)) throw Error("duplicate parameter name '" + p->name + "'");
    out[p->name] = tensor_to_json(p->value);
  }
  return out;
}

void params_from_json(const json& j, const ParamList& params) {
  if (!j.is_object()) throw Error("parameters: expected an object keyed by name");
  if (j.size() != params.size()) {
    throw Error("parameters: checkpoint has " + std::to_string(j.size()) + " arrays, network has " +
                std::to_string(params.size()));
  }
  // Validate everything before mutating anything.
  std::vector<Tensor> loaded;
  loaded.reserve(params.size());
  for (const auto& p : params) {
    if (!j.contains(p->name)) throw Error("parameters: '" + p->name + "' missing from checkpoint");
    Tensor t = tensor_from_json(j.at(p->name));
    if (t.shape() != p->value.shape()) {
      throw Error("parameters: '" + p->name + "' has shape " + shape_str(t.shape()) + ", network expects " +
                  shape_str(p->value.shape()));
    }
    loaded.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(loaded[i]);
}

json optimizer_to_json(const ParamGroup& group) {
  json names = json::array();
  json m = json::array();
  json v = json::array();
  for (std::size_t i = 0; i < group.params().size(); ++i) {
    names.push_back(group.params()[i]->name);
    m.push_back(tensor_to_json(group.slots()[i].m));
    v.push_back(tensor_to_json(group.slots()[i].v));
  }
  return {{"name", group.name()},
          {"config", adam_config_json(group.config())},
          {"step_count", group.step_count()},
          {"params", std::move(names)},
          {"m", std::move(m)},
          {"v", std::move(v)}};
}

void optimizer_from_json(const json& j, ParamGroup& group) {
  const std::string where = "optimizer " + group.name();
  const auto names = field(j, "params", where).get<std::vector<std::string>>();
  const json& m = field(j, "m", where);
  const json& v = field(j, "v", where);
  if (names.size() != group.params().size() || m.size() != names.size() || v.size() != names.size()) {
    throw Error(where + ": parameter count mismatch");
  }
  std::vector<AdamSlot> slots;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& p = group.params()[i];
    if (names[i] != p->name) throw Error(where + ": expected '" + p->name + "', found '" + names[i] + "'");
    AdamSlot s{tensor_from_json(m[i]), tensor_from_json(v[i])};
    if (s.m.shape() != p->value.shape() || s.v.shape() != p->value.shape()) {
      throw Error(where + ": moment shape mismatch for '" + p->name + "'");
    }
    slots.push_back(std::move(s));
  }
  group.set_state(std::move(slots), field(j, "step_count", where).get<std::int64_t>());
}

json rng_to_json(const RngStreams& rng) {
  json streams = json::object();
  for (const auto& [label, r] : rng.streams()) streams[label] = rng_state(r);
  return {{"seed", rng.seed()}, {"streams", std::move(streams)}};
}

RngStreams rng_from_json(const json& j) {
  RngStreams out(field(j, "seed", "rng").get<std::uint64_t>());
  for (const auto& [label, state] : field(j, "streams", "rng").items()) out.restore(label, state.get<std::string>());
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_checkpoint(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": not a checkpoint (" + e.what() + ")");
  }
  const std::string where = path.string();
  const int version = field(j, "schema_version", where).get<int>();
  if (version != kCheckpointSchemaVersion) {
    throw Error(where + ": unsupported checkpoint schema version " + std::to_string(version));
  }
  const auto kind = field(j, "kind", where).get<std::string>();
  if (kind != "retrain" && kind != "search") throw Error(where + ": unknown checkpoint kind '" + kind + "'");
  return j;
}

void save_retrain_checkpoint(const fs::path& path, const RunConfig& cfg, const Genotype& genotype,
                             const RetrainResult& state, const RngStreams& rng) {
  json j = header("retrain", cfg);
  j["iteration"] = state.iteration;
  j["genotype"] = serialize_genotype(genotype);
  j["weights"] = {{"G", params_to_json(state.g.weights())}, {"D", params_to_json(state.d.weights())}};
  j["batch_norm"] = {{"G", bn_to_json(state.g.bn_stats())}};
  j["optimizers"] = json::array({optimizer_to_json(state.omega_g), optimizer_to_json(state.omega_d)});
  json history = json::array();
  for (const auto& m : state.history) history.push_back(metric_to_json(m));
  j["history"] = std::move(history);
  j["rng"] = rng_to_json(rng);
  write_file_atomic(path, j.dump(1));
}

LoadedRetrain load_retrain_checkpoint(const fs::path& path) {
  const json j = read_checkpoint(path);
  const std::string where = path.string();
  if (j.at("kind") != "retrain") throw Error(where + ": expected a retrain checkpoint");
  RunConfig cfg;
  apply_config_text(cfg, field(j, "config", where).get<std::string>(), where + " (config echo)");
  cfg.finalize();
  Genotype genotype = parse_genotype(field(j, "genotype", where).get<std::string>());
  // Initialization is overwritten below; a throwaway stream keeps the saved ones intact.
  RngStreams scratch(cfg.search.seed);
  RetrainResult state = init_retrain(genotype, cfg.search.task, cfg.retrain, scratch);
  const json& weights = field(j, "weights", where);
  params_from_json(field(weights, "G", where), state.g.weights());
  params_from_json(field(weights, "D", where), state.d.weights());
  bn_from_json(field(field(j, "batch_norm", where), "G", where), state.g.bn_stats());
  const json& opt = field(j, "optimizers", where);
  if (!opt.is_array() || opt.size() != 2) throw Error(where + ": expected two optimizer states");
  optimizer_from_json(opt[0], state.omega_g);
  optimizer_from_json(opt[1], state.omega_d);
  for (const auto& m : field(j, "history", where)) state.history.push_back(metric_from_json(m));
  state.iteration = field(j, "iteration", where).get<int>();
  return LoadedRetrain{std::move(cfg), std::move(genotype), std::move(state), rng_from_json(field(j, "rng", where))};
}

void save_search_checkpoint(const fs::path& path, const RunConfig& cfg, const SearchProblem& problem,
                            const std::vector<ParamGroup>& optimizers, const RngStreams& rng, int round) {
  json j = header("search", cfg);
  j["iteration"] = round;
  j["weights"] = {{"G", params_to_json(problem.g->weights())}, {"D", params_to_json(problem.d->weights())}};
  j["alpha"] = {{"G", params_to_json(problem.g->arch())}, {"D", params_to_json(problem.d->arch())}};
  j["genotype"] = nullptr;
  if (const auto* g = dynamic_cast<const GeneratorNet*>(problem.g.get()); g != nullptr && g->is_relaxed()) {
    Genotype geno;
    geno.mode = g->config().mode;
    geno.sharing = g->config().sharing;
    geno.cells = g->config().cells;
    geno.channels = g->config().width;
    geno.generator = g->genotype();
    if (const auto* d = dynamic_cast<const DiscriminatorNet*>(problem.d.get()); d != nullptr && d->is_relaxed()) {
      geno.discriminator = d->genotype();
    }
    j["genotype"] = serialize_genotype(geno);
    j["batch_norm"] = {{"G", bn_to_json(g->bn_stats())}};
  }
  json opt = json::array();
  for (const auto& group : optimizers) opt.push_back(optimizer_to_json(group));
  j["optimizers"] = std::move(opt);
  j["rng"] = rng_to_json(rng);
  write_file_atomic(path, j.dump(1));
}

// --- manifest ---------------------------------------------------------------

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json RunManifest::to_json() const {
  json files_json = json::array();
  for (const auto& f : files) files_json.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"command", command}, {"version", version},   {"seed", seed},       {"started", started},
          {"finished", finished}, {"config", config_text}, {"files", files_json}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.command = field(j, "command", "manifest").get<std::string>();
  m.version = field(j, "version", "manifest").get<std::string>();
  m.seed = field(j, "seed", "manifest").get<std::uint64_t>();
  m.started = field(j, "started", "manifest").get<std::string>();
  m.finished = field(j, "finished", "manifest").get<std::string>();
  m.config_text = field(j, "config", "manifest").get<std::string>();
  for (const auto& f : field(j, "files", "manifest")) {
    m.files.push_back({field(f, "path", "manifest file").get<std::string>(),
                       field(f, "sha256", "manifest file").get<std::string>(),
                       field(f, "bytes", "manifest file").get<std::uintmax_t>()});
  }
  return m;
}

void write_manifest(const fs::path& dir, RunManifest& manifest, const std::vector<std::string>& files) {
  manifest.files.clear();
  for (const auto& f : files) {
    const fs::path p = dir / f;
    if (!fs::is_regular_file(p)) throw Error("manifest: produced file " + p.string() + " does not exist");
    manifest.files.push_back({f, sha256_file(p), fs::file_size(p)});
  }
  manifest.finished = utc_timestamp();
  write_file_atomic(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& dir) {
  try {
    return RunManifest::from_json(json::parse(read_file(dir / "manifest.json")));
  } catch (const json::exception& e) {
    throw Error((dir / "manifest.json").string() + ": " + e.what());
  }
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  std::vector<std::string> bad;
  for (const auto& f : read_manifest(dir).files) {
    const fs::path p = dir / f.path;
    if (!fs::is_regular_file(p) || fs::file_size(p) != f.bytes || sha256_file(p) != f.sha256) bad.push_back(f.path);
  }
  return bad;
}

}  // namespace gapnas
