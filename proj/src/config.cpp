#include "gapnas/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gapnas/error.hpp"

namespace gapnas {

void RunConfig::finalize() {
  search.task.net.pools = make_pools(op_pool);
  search.validate();
  if (!search.task.analytic()) retrain.validate();
}

std::string relax_name(const RelaxConfig& r) {
  if (r.mode == Relaxation::kSoftmax) return "softmax";
  std::ostringstream os;
  os.precision(17);
  os << "gumbel:" << r.tau;
  return os.str();
}

namespace {

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::int64_t to_int(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

int to_int32(std::string_view key, std::string_view v) {
  const std::int64_t x = to_int(key, v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(std::string(key) + ": value out of range");
  return static_cast<int>(x);
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

using FieldTable = std::vector<std::pair<std::string, Field>>;

// Builders over accessor lambdas keep the table below short.
template <typename Ref>
Field int_ref(Ref ref) {
  return {[ref](RunConfig& c, std::string_view k, std::string_view v) { ref(c) = to_int32(k, v); },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field int64_ref(Ref ref) {
  return {[ref](RunConfig& c, std::string_view k, std::string_view v) { ref(c) = to_int(k, v); },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field double_ref(Ref ref) {
  return {[ref](RunConfig& c, std::string_view k, std::string_view v) { ref(c) = to_double(k, v); },
          [ref](const RunConfig& c) { return num(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field bool_ref(Ref ref) {
  return {[ref](RunConfig& c, std::string_view k, std::string_view v) { ref(c) = to_bool(k, v); },
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Ref>
Field string_ref(Ref ref) {
  return {[ref](RunConfig& c, std::string_view, std::string_view v) { ref(c) = std::string(v); },
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
}

void add_adam(FieldTable& t, const std::string& prefix, AdamConfig& (*ref)(RunConfig&)) {
  t.emplace_back(prefix + "_lr", double_ref([ref](RunConfig& c) -> double& { return ref(c).lr; }));
  t.emplace_back(prefix + "_beta1", double_ref([ref](RunConfig& c) -> double& { return ref(c).beta1; }));
  t.emplace_back(prefix + "_beta2", double_ref([ref](RunConfig& c) -> double& { return ref(c).beta2; }));
  t.emplace_back(prefix + "_eps", double_ref([ref](RunConfig& c) -> double& { return ref(c).eps; }));
  t.emplace_back(prefix + "_weight_decay",
                 double_ref([ref](RunConfig& c) -> double& { return ref(c).weight_decay; }));
}

const FieldTable& fields() {
  static const FieldTable table = [] {
    FieldTable t;
    // [run]
    t.emplace_back("run.seed", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                       c.search.seed = static_cast<std::uint64_t>(to_int(k, v));
                                     },
                                     [](const RunConfig& c) { return std::to_string(c.search.seed); }});
    t.emplace_back("run.out_dir", string_ref([](RunConfig& c) -> std::string& { return c.out_dir; }));
    // [task]
    t.emplace_back("task.name", string_ref([](RunConfig& c) -> std::string& { return c.search.task.task; }));
    t.emplace_back("task.samples", int64_ref([](RunConfig& c) -> std::int64_t& { return c.search.task.samples; }));
    t.emplace_back("task.split_ratio", double_ref([](RunConfig& c) -> double& { return c.search.task.split_ratio; }));
    t.emplace_back("task.loss", Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                        c.search.task.loss = parse_loss(v);
                                      },
                                      [](const RunConfig& c) { return std::string(loss_name(c.search.task.loss)); }});
    t.emplace_back("task.batch_size",
                   int64_ref([](RunConfig& c) -> std::int64_t& { return c.search.task.batch_size; }));
    t.emplace_back("task.search_d", bool_ref([](RunConfig& c) -> bool& { return c.search.task.search_discriminator; }));
    t.emplace_back("task.game_dim", int_ref([](RunConfig& c) -> int& { return c.search.task.game_dim; }));
    t.emplace_back("task.game_init", double_ref([](RunConfig& c) -> double& { return c.search.task.game_init; }));
    t.emplace_back("task.game_lambda", double_ref([](RunConfig& c) -> double& { return c.search.task.game_lambda; }));
    // [net]
    t.emplace_back("net.mode", Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                       c.search.task.net.mode = parse_mode(v);
                                     },
                                     [](const RunConfig& c) { return std::string(mode_name(c.search.task.net.mode)); }});
    t.emplace_back("net.latent_dim", int_ref([](RunConfig& c) -> int& { return c.search.task.net.latent_dim; }));
    t.emplace_back("net.width", int_ref([](RunConfig& c) -> int& { return c.search.task.net.width; }));
    t.emplace_back("net.cells", int_ref([](RunConfig& c) -> int& { return c.search.task.net.cells; }));
    t.emplace_back("net.data_dim", int_ref([](RunConfig& c) -> int& { return c.search.task.net.data_dim; }));
    t.emplace_back("net.image_channels",
                   int_ref([](RunConfig& c) -> int& { return c.search.task.net.image_channels; }));
    t.emplace_back("net.image_size", int_ref([](RunConfig& c) -> int& { return c.search.task.net.image_size; }));
    t.emplace_back("net.topology", string_ref([](RunConfig& c) -> std::string& { return c.search.task.net.topology; }));
    t.emplace_back("net.op_pool", Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                          c.op_pool = parse_pool_preset(v);
                                        },
                                        [](const RunConfig& c) { return std::string(pool_preset_name(c.op_pool)); }});
    t.emplace_back("net.sharing", Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                          c.search.task.net.sharing = parse_sharing(v);
                                        },
                                        [](const RunConfig& c) {
                                          return std::string(sharing_name(c.search.task.net.sharing));
                                        }});
    t.emplace_back("net.relax", Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                        c.search.task.net.relax = parse_relax(v);
                                      },
                                      [](const RunConfig& c) { return relax_name(c.search.task.net.relax); }});
    t.emplace_back("net.disc_width", int_ref([](RunConfig& c) -> int& { return c.search.task.net.disc_width; }));
    // [search]
    t.emplace_back("search.rounds", int_ref([](RunConfig& c) -> int& { return c.search.rounds; }));
    t.emplace_back("search.weight_steps", int_ref([](RunConfig& c) -> int& { return c.search.weight_steps; }));
    t.emplace_back("search.arch_steps", int_ref([](RunConfig& c) -> int& { return c.search.arch_steps; }));
    t.emplace_back("search.inner_steps", int_ref([](RunConfig& c) -> int& { return c.search.inner_steps; }));
    t.emplace_back("search.gbar", Field{[](RunConfig& c, std::string_view, std::string_view v) {
                                          c.search.gbar = parse_gbar(v);
                                        },
                                        [](const RunConfig& c) { return std::string(gbar_name(c.search.gbar)); }});
    t.emplace_back("search.warmup", double_ref([](RunConfig& c) -> double& { return c.search.warmup_fraction; }));
    t.emplace_back("search.single_level", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                                  if (v == "off") {
                                                    c.search.single_level_lambda.reset();
                                                  } else {
                                                    c.search.single_level_lambda = to_double(k, v);
                                                  }
                                                },
                                                [](const RunConfig& c) {
                                                  return c.search.single_level_lambda
                                                             ? num(*c.search.single_level_lambda)
                                                             : std::string("off");
                                                }});
    t.emplace_back("search.refresh_best_response_every_arch_step",
                   bool_ref([](RunConfig& c) -> bool& { return c.search.refresh_best_response_every_arch_step; }));
    t.emplace_back("search.parallel_gap", bool_ref([](RunConfig& c) -> bool& { return c.search.parallel_gap; }));
    // [optim]
    add_adam(t, "optim.weight", [](RunConfig& c) -> AdamConfig& { return c.search.weight_adam; });
    add_adam(t, "optim.arch", [](RunConfig& c) -> AdamConfig& { return c.search.arch_adam; });
    add_adam(t, "optim.inner", [](RunConfig& c) -> AdamConfig& { return c.search.inner_adam; });
    add_adam(t, "optim.inner_arch", [](RunConfig& c) -> AdamConfig& { return c.search.inner_arch_adam; });
    add_adam(t, "optim.retrain", [](RunConfig& c) -> AdamConfig& { return c.retrain.adam; });
    // [retrain]
    t.emplace_back("retrain.iterations", int_ref([](RunConfig& c) -> int& { return c.retrain.iterations; }));
    t.emplace_back("retrain.eval_interval", int_ref([](RunConfig& c) -> int& { return c.retrain.eval_interval; }));
    t.emplace_back("retrain.g_batch", int64_ref([](RunConfig& c) -> std::int64_t& { return c.retrain.g_batch; }));
    t.emplace_back("retrain.d_batch", int64_ref([](RunConfig& c) -> std::int64_t& { return c.retrain.d_batch; }));
    t.emplace_back("retrain.width", int_ref([](RunConfig& c) -> int& { return c.retrain.width; }));
    t.emplace_back("retrain.eval_samples",
                   int64_ref([](RunConfig& c) -> std::int64_t& { return c.retrain.eval_samples; }));
    t.emplace_back("retrain.mode_radius", double_ref([](RunConfig& c) -> double& { return c.retrain.mode_radius; }));
    return t;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return &f;
  }
  return nullptr;
}

}  // namespace

RelaxConfig parse_relax(std::string_view text) {
  RelaxConfig r;
  if (text == "softmax") return r;
  if (text.starts_with("gumbel:")) {
    r.mode = Relaxation::kGumbel;
    r.tau = to_double("relax", text.substr(7));
    if (!(r.tau > 0.0)) throw ConfigError("relax: gumbel temperature must be > 0");
    return r;
  }
  throw ConfigError("relax: expected 'softmax' or 'gumbel:<tau>', got '" + std::string(text) + "'");
}

std::vector<std::string> preset_names() { return {"alphagan-s", "alphagan-l", "quad-game", "mlp-8gauss", "image-shapes"}; }

void apply_preset(RunConfig& cfg, std::string_view name) {
  auto& s = cfg.search;
  if (name == "alphagan-s") {
    s.weight_steps = 20;
    s.arch_steps = 20;
    s.inner_steps = 20;
  } else if (name == "alphagan-l") {
    s.weight_steps = 390;
    s.arch_steps = 20;
    s.inner_steps = 390;
  } else if (name == "quad-game") {
    s.task.task = "quadratic";
    s.rounds = 30;
    s.weight_steps = 5;
    s.arch_steps = 1;
    s.inner_steps = 20;
    s.weight_adam = AdamConfig{0.05, 0.0, 0.999, 1e-8, 0.0};
    s.inner_adam = s.weight_adam;
  } else if (name == "mlp-8gauss") {
    s.task.task = "ring8";
    s.task.samples = 10000;
    s.task.net = NetConfig{};
    cfg.op_pool = PoolPreset::kMlp;
    s.rounds = 100;
    s.weight_steps = 20;
    s.arch_steps = 20;
    s.inner_steps = 20;
    cfg.retrain.iterations = 5000;
    cfg.retrain.eval_interval = 1000;
    cfg.retrain.adam.lr = 1e-3;
  } else if (name == "image-shapes") {
    s.task.task = "shapes";
    s.task.samples = 1024;
    s.task.batch_size = 16;
    s.task.net = NetConfig{};
    s.task.net.mode = ModelMode::kImage;
    s.task.net.topology = "compact";
    s.task.net.cells = 2;
    s.task.net.image_size = 16;
    s.task.net.width = 8;
    s.task.net.latent_dim = 16;
    s.task.net.disc_width = 8;
    cfg.op_pool = PoolPreset::kDefault;
    s.rounds = 10;
    s.weight_steps = 5;
    s.arch_steps = 5;
    s.inner_steps = 5;
    cfg.retrain.iterations = 500;
    cfg.retrain.eval_interval = 100;
    cfg.retrain.g_batch = 32;
    cfg.retrain.d_batch = 16;
    cfg.retrain.eval_samples = 512;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + std::string(name) + "' (" + known + ")");
  }
  cfg.preset = std::string(name);
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ConfigError("unknown config key '" + std::string(key) + "'");
  try {
    f->set(cfg, key, value);
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.starts_with(std::string(key))) throw;
    throw ConfigError(std::string(key) + ": " + msg);
  }
}

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      throw ConfigError(origin + ": key '" + section + "' must sit inside a [section]");
    }
    for (const auto& [key, value] : body) {
      try {
        set_config_value(cfg, section + "." + key, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
      }
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(cfg, text.str(), path.string());
}

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [name, f] : fields()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace gapnas
