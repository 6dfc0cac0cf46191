#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "gapnas/checkpoint.hpp"
#include "gapnas/error.hpp"

namespace gapnas {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gapnas_ckpt_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double x = a.data()[i];
    const double y = b.data()[i];
    if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
  }
  return true;
}

void expect_same_params(const ParamList& a, const ParamList& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_TRUE(same_bits(a[i]->value, b[i]->value)) << a[i]->name;
  }
}

TEST(CheckpointJson, TensorRoundTripIsBitExact) {
  Rng rng(5);
  Tensor t = randn({3, 4}, rng, 1e-3);
  t.data()[0] = std::numeric_limits<double>::denorm_min();
  t.data()[1] = -0.0;
  t.data()[2] = 0.1 + 0.2;
  t.data()[3] = std::numeric_limits<double>::quiet_NaN();
  const auto j = nlohmann::json::parse(tensor_to_json(t).dump());
  const Tensor back = tensor_from_json(j);
  EXPECT_TRUE(same_bits(t, back));
  EXPECT_TRUE(std::signbit(back.data()[1]));
  EXPECT_TRUE(same_bits(Tensor::scalar(2.5), tensor_from_json(tensor_to_json(Tensor::scalar(2.5)))));
}

TEST(CheckpointJson, ParamsLoadByNameWithShapeCheck) {
  const ParamList src{make_param("a", Tensor({2}, std::vector<double>{1, 2})),
                      make_param("b", Tensor({1, 3}, std::vector<double>{3, 4, 5}))};
  const auto j = params_to_json(src);
  // Reverse order on the receiving side: lookup is by name.
  const ParamList dst{make_param("b", Tensor({1, 3})), make_param("a", Tensor({2}))};
  params_from_json(j, dst);
  EXPECT_TRUE(same_bits(dst[0]->value, src[1]->value));
  EXPECT_TRUE(same_bits(dst[1]->value, src[0]->value));

  const ParamList wrong_shape{make_param("a", Tensor({3})), make_param("b", Tensor({1, 3}))};
  EXPECT_THROW(params_from_json(j, wrong_shape), Error);
  EXPECT_EQ(wrong_shape[1]->value.data()[0], 0.0);  // nothing copied on failure
  EXPECT_THROW(params_from_json(j, ParamList{make_param("a", Tensor({2}))}), Error);
  EXPECT_THROW(params_from_json(j, ParamList{make_param("a", Tensor({2})), make_param("c", Tensor({1, 3}))}),
               Error);
  EXPECT_THROW(params_to_json(ParamList{make_param("a", Tensor({1})), make_param("a", Tensor({1}))}), Error);
}

TEST(CheckpointJson, OptimizerStateRoundTrip) {
  const ParamList p{make_param("w", Tensor({2}, std::vector<double>{1, -1}))};
  ParamGroup g("omega", p, AdamConfig{0.1, 0.5, 0.9, 1e-8, 0.0});
  ASSERT_EQ(g.step(std::vector<Tensor>{Tensor({2}, std::vector<double>{0.3, -0.7})}), StepStatus::kApplied);
  ASSERT_EQ(g.step(std::vector<Tensor>{Tensor({2}, std::vector<double>{0.1, 0.2})}), StepStatus::kApplied);
  const auto j = nlohmann::json::parse(optimizer_to_json(g).dump());

  const ParamList q{make_param("w", p[0]->value)};
  ParamGroup h("omega", q, g.config());
  optimizer_from_json(j, h);
  EXPECT_EQ(h.step_count(), 2);
  const std::vector<Tensor> grad{Tensor({2}, std::vector<double>{-0.4, 0.05})};
  ASSERT_EQ(g.step(grad), StepStatus::kApplied);
  ASSERT_EQ(h.step(grad), StepStatus::kApplied);
  EXPECT_TRUE(same_bits(p[0]->value, q[0]->value));

  ParamGroup renamed("omega", ParamList{make_param("u", Tensor({2}))}, g.config());
  EXPECT_THROW(optimizer_from_json(j, renamed), Error);
}

TEST(CheckpointJson, RngStreamsContinueIdentically) {
  RngStreams a(11);
  standard_normal(a.stream("data"));
  uniform01(a.stream("gumbel"));
  RngStreams b = rng_from_json(nlohmann::json::parse(rng_to_json(a).dump()));
  EXPECT_EQ(b.seed(), 11u);
  EXPECT_EQ(a.checksum(), b.checksum());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(standard_normal(a.stream("data")), standard_normal(b.stream("data")));
}

TEST(AtomicWrite, ReplacesContentAndLeavesNoTemporaries) {
  const fs::path dir = scratch_dir("atomic");
  const fs::path f = dir / "sub" / "x.txt";
  write_file_atomic(f, "first");
  write_file_atomic(f, "second");
  EXPECT_EQ(read_file(f), "second");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "sub")) ++entries;
  EXPECT_EQ(entries, 1);
  EXPECT_THROW(read_file(dir / "missing"), Error);
  fs::remove_all(dir);
}

TEST(Manifest, HashesMatchAndTamperingIsDetected) {
  const fs::path dir = scratch_dir("manifest");
  write_file_atomic(dir / "a.csv", "x,y\n1,2\n");
  write_file_atomic(dir / "g.txt", "genotype");
  RunManifest m;
  m.command = "search";
  m.seed = 9;
  m.config_text = config_to_text(RunConfig{});
  m.started = utc_timestamp();
  write_manifest(dir, m, {"a.csv", "g.txt"});
  EXPECT_TRUE(verify_manifest(dir).empty());

  const RunManifest back = read_manifest(dir);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.version, std::string(code_version()));
  EXPECT_EQ(back.config_text, m.config_text);
  ASSERT_EQ(back.files.size(), 2u);
  EXPECT_EQ(back.files[0].sha256.size(), 64u);
  EXPECT_EQ(back.started.size(), 20u);  // YYYY-MM-DDTHH:MM:SSZ

  std::ofstream(dir / "g.txt", std::ios::app) << "!";
  EXPECT_EQ(verify_manifest(dir), std::vector<std::string>{"g.txt"});
  EXPECT_THROW(write_manifest(dir, m, {"nope.txt"}), Error);
  fs::remove_all(dir);
}

RunConfig linear_run() {
  RunConfig cfg;
  cfg.search.task.task = "linear";
  cfg.search.task.samples = 512;
  cfg.search.seed = 3;
  cfg.retrain.iterations = 30;
  cfg.retrain.eval_interval = 10;
  cfg.retrain.eval_samples = 256;
  cfg.retrain.g_batch = 32;
  cfg.retrain.d_batch = 16;
  cfg.finalize();
  return cfg;
}

RunConfig shapes_run() {
  RunConfig cfg;
  apply_preset(cfg, "image-shapes");
  cfg.search.task.samples = 64;
  cfg.search.seed = 4;
  cfg.retrain.iterations = 6;
  cfg.retrain.eval_interval = 2;
  cfg.retrain.eval_samples = 32;
  cfg.retrain.g_batch = 8;
  cfg.retrain.d_batch = 8;
  cfg.finalize();
  return cfg;
}

// Stops at `stop` (an eval boundary), saves, reloads and finishes; the
// result must equal the uninterrupted run bit for bit.
void check_resume(RunConfig cfg, int stop, const std::string& name) {
  const fs::path dir = scratch_dir(name);
  const int total = cfg.retrain.iterations;
  RngStreams pick(99);
  const Genotype geno = random_genotype(cfg.search.task, pick.stream("pick"));

  RngStreams full_rng(cfg.search.seed);
  const auto data = build_dataset(cfg.search.task, full_rng);
  const RetrainResult full = retrain(geno, cfg.search.task, cfg.retrain, *data, full_rng);

  RunConfig half = cfg;
  half.retrain.iterations = stop;
  RngStreams half_rng(cfg.search.seed);
  const auto data2 = build_dataset(half.search.task, half_rng);
  const RetrainResult first = retrain(geno, half.search.task, half.retrain, *data2, half_rng);
  save_retrain_checkpoint(dir / "ckpt.json", half, geno, first, half_rng);

  LoadedRetrain loaded = load_retrain_checkpoint(dir / "ckpt.json");
  EXPECT_EQ(loaded.genotype, geno);
  EXPECT_EQ(loaded.state.iteration, stop);
  EXPECT_EQ(config_to_text(loaded.config), config_to_text(half));
  EXPECT_EQ(loaded.rng.checksum(), half_rng.checksum());
  expect_same_params(loaded.state.g.weights(), first.g.weights());
  EXPECT_TRUE(same_bits(loaded.state.g.bn_stats().running_mean, first.g.bn_stats().running_mean));
  EXPECT_TRUE(same_bits(loaded.state.g.bn_stats().running_var, first.g.bn_stats().running_var));

  loaded.config.retrain.iterations = total;
  RngStreams data_rng(loaded.config.search.seed);
  const auto data3 = build_dataset(loaded.config.search.task, data_rng);
  continue_retrain(loaded.state, loaded.config.search.task, loaded.config.retrain, *data3, loaded.rng);

  expect_same_params(loaded.state.g.weights(), full.g.weights());
  expect_same_params(loaded.state.d.weights(), full.d.weights());
  EXPECT_TRUE(same_bits(loaded.state.g.bn_stats().running_var, full.g.bn_stats().running_var));
  EXPECT_EQ(loaded.state.omega_g.step_count(), full.omega_g.step_count());
  ASSERT_EQ(loaded.state.history.size(), full.history.size());
  for (std::size_t i = 0; i < full.history.size(); ++i) {
    EXPECT_EQ(loaded.state.history[i].iteration, full.history[i].iteration);
    EXPECT_EQ(loaded.state.history[i].fd, full.history[i].fd);
  }
  fs::remove_all(dir);
}

TEST(RetrainCheckpoint, ResumeMatchesUninterruptedRunMlp) { check_resume(linear_run(), 20, "resume_mlp"); }

TEST(RetrainCheckpoint, ResumeMatchesUninterruptedRunImage) { check_resume(shapes_run(), 4, "resume_img"); }

TEST(Checkpoint, RejectsForeignFilesAndVersions) {
  const fs::path dir = scratch_dir("reject");
  write_file_atomic(dir / "junk.json", "not json");
  EXPECT_THROW(read_checkpoint(dir / "junk.json"), Error);
  write_file_atomic(dir / "v9.json", R"({"schema_version": 9, "kind": "retrain"})");
  EXPECT_THROW(read_checkpoint(dir / "v9.json"), Error);
  write_file_atomic(dir / "kind.json", R"({"schema_version": 1, "kind": "other"})");
  EXPECT_THROW(read_checkpoint(dir / "kind.json"), Error);
  fs::remove_all(dir);
}

TEST(SearchCheckpoint, HoldsWeightsAlphaAndOptimizers) {
  const fs::path dir = scratch_dir("search");
  RunConfig cfg = linear_run();
  cfg.search.rounds = 1;
  cfg.search.weight_steps = 1;
  cfg.search.arch_steps = 1;
  cfg.search.inner_steps = 1;
  RngStreams rng(cfg.search.seed);
  SearchProblem p = build_problem(cfg.search.task, rng);
  const SearchResult r = run_search(cfg.search, p, rng);
  save_search_checkpoint(dir / "search.json", cfg, p, r.optimizers, rng, 1);
  const auto j = read_checkpoint(dir / "search.json");
  EXPECT_EQ(j.at("kind"), "search");
  EXPECT_EQ(j.at("iteration"), 1);
  EXPECT_EQ(j.at("optimizers").size(), 3u);
  EXPECT_EQ(j.at("alpha").at("G").size(), p.g->arch().size());
  ASSERT_TRUE(r.genotype.has_value());
  EXPECT_EQ(parse_genotype(j.at("genotype").get<std::string>()), *r.genotype);

  const auto copy = p.g->clone(Player::ArchCloning::kCopy);
  const ParamList fresh = copy->arch();
  for (const auto& a : fresh) a->value = Tensor(a->value.shape());
  params_from_json(j.at("alpha").at("G"), fresh);
  expect_same_params(fresh, p.g->arch());
  EXPECT_THROW(load_retrain_checkpoint(dir / "search.json"), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace gapnas
