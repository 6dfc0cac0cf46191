#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "gapnas/checkpoint.hpp"
#include "gapnas/error.hpp"

namespace gapnas::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gapnas_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

CommonOptions tiny(const fs::path& out) {
  CommonOptions o;
  o.out = out.string();
  o.seed = 5;
  o.sets = {"task.name=linear",        "task.samples=256",          "task.batch_size=16", "net.width=8",
            "net.disc_width=8",        "search.rounds=3",           "search.weight_steps=2",
            "search.arch_steps=2",     "search.inner_steps=2",      "retrain.iterations=40",
            "retrain.eval_interval=20", "retrain.eval_samples=200", "retrain.g_batch=16",
            "retrain.d_batch=16"};
  return o;
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

TEST(ResolveConfig, Precedence) {
  const fs::path dir = scratch("precedence");
  fs::create_directories(dir);
  std::ofstream(dir / "c.ini") << "[search]\nrounds = 7\ninner_steps = 3\n";
  CommonOptions o;
  o.preset = "alphagan-l";
  o.config = (dir / "c.ini").string();
  o.gbar = "arch";
  o.warmup = 0.25;
  o.single_level = 0.5;
  o.search_d = true;
  o.relax = "gumbel:0.3";
  o.sets = {"search.rounds=9"};
  const RunConfig c = resolve_config(o);
  EXPECT_EQ(c.search.weight_steps, 390);  // preset
  EXPECT_EQ(c.search.inner_steps, 3);     // file beats preset
  EXPECT_EQ(c.search.rounds, 9);          // --set beats file
  EXPECT_EQ(c.search.gbar, GbarMode::kArchOnly);
  EXPECT_EQ(c.search.warmup_fraction, 0.25);
  EXPECT_EQ(*c.search.single_level_lambda, 0.5);
  EXPECT_TRUE(c.search.task.search_discriminator);
  EXPECT_EQ(c.search.task.net.relax.mode, Relaxation::kGumbel);

  CommonOptions bad;
  bad.sets = {"search.rounds"};
  EXPECT_THROW(resolve_config(bad), ConfigError);
  bad.sets = {"search.nope=1"};
  EXPECT_THROW(resolve_config(bad), ConfigError);
  fs::remove_all(dir);
}

TEST(CmdSearch, WritesArtifactsAndIsDeterministic) {
  const fs::path a = scratch("search_a");
  const fs::path b = scratch("search_b");
  std::ostringstream log;
  const auto ra = cmd_search(resolve_config(tiny(a)), log);
  const auto rb = cmd_search(resolve_config(tiny(b)), log);
  ASSERT_EQ(ra.exit_code, kOk);
  ASSERT_EQ(rb.exit_code, kOk);
  for (const char* f : {"config.ini", "search_log.csv", "genotype.txt", "genotype.json", "search_checkpoint.json",
                        "manifest.json", "genotypes/round_0003.txt"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  EXPECT_EQ(count_lines(a / "search_log.csv"), 4);  // header + 3 rounds
  EXPECT_EQ(read_file(a / "genotype.txt"), read_file(b / "genotype.txt"));
  EXPECT_EQ(read_file(a / "search_log.csv"), read_file(b / "search_log.csv"));
  EXPECT_EQ(ra.result.log.checksum(), rb.result.log.checksum());
  EXPECT_TRUE(verify_manifest(a).empty());
  const RunManifest m = read_manifest(a);
  EXPECT_EQ(m.seed, 5u);
  EXPECT_EQ(m.command, "search");

  // Re-executing from the recorded config reproduces the run.
  const fs::path c = scratch("search_c");
  RunConfig again;
  apply_config_text(again, m.config_text);
  again.out_dir = c.string();
  again.finalize();
  ASSERT_EQ(cmd_search(again, log).exit_code, kOk);
  EXPECT_EQ(read_file(a / "search_log.csv"), read_file(c / "search_log.csv"));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(CmdSearch, NumericalAbortKeepsCheckpointAndPartialLog) {
  const fs::path dir = scratch("abort");
  CommonOptions o = tiny(dir);
  o.sets.push_back("optim.weight_lr=1e300");
  std::ostringstream log;
  const auto r = cmd_search(resolve_config(o), log);
  EXPECT_EQ(r.exit_code, kNumerical);
  EXPECT_TRUE(fs::exists(dir / "abort_checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir / "search_log.csv"));
  EXPECT_EQ(read_checkpoint(dir / "abort_checkpoint.json").at("kind"), "search");
  EXPECT_EQ(count_lines(dir / "search_log.csv"), 1 + static_cast<int>(r.result.log.rounds.size()));
  EXPECT_TRUE(verify_manifest(dir).empty());
  fs::remove_all(dir);
}

TEST(CmdRetrain, RetrainResumeAndEval) {
  const fs::path s = scratch("rt_search");
  const fs::path r1 = scratch("rt_1");
  const fs::path r2 = scratch("rt_2");
  std::ostringstream log;
  ASSERT_EQ(cmd_search(resolve_config(tiny(s)), log).exit_code, kOk);

  CommonOptions half = tiny(r1);
  half.sets.push_back("retrain.iterations=20");
  ASSERT_EQ(cmd_retrain(resolve_config(half), s / "genotype.txt", std::nullopt, log), kOk);
  EXPECT_EQ(count_lines(r1 / "metrics.csv"), 2);
  ASSERT_EQ(cmd_retrain(resolve_config(tiny(r2)), {}, r1 / "checkpoint.json", log), kOk);
  EXPECT_EQ(count_lines(r2 / "metrics.csv"), 3);

  // Straight 40-iteration run for comparison.
  const fs::path r3 = scratch("rt_3");
  ASSERT_EQ(cmd_retrain(resolve_config(tiny(r3)), s / "genotype.txt", std::nullopt, log), kOk);
  EXPECT_EQ(read_file(r2 / "metrics.csv"), read_file(r3 / "metrics.csv"));

  std::ostringstream eval_log;
  ASSERT_EQ(cmd_eval(r3 / "checkpoint.json", {"retrain.eval_samples=100"}, r3 / "eval.csv", eval_log), kOk);
  EXPECT_NE(eval_log.str().find("fd="), std::string::npos);
  EXPECT_EQ(count_lines(r3 / "eval.csv"), 2);
  EXPECT_TRUE(verify_manifest(r3).empty());

  EXPECT_THROW(cmd_retrain(resolve_config(half), {}, r3 / "checkpoint.json", log), ConfigError);
  for (const auto& d : {s, r1, r2, r3}) fs::remove_all(d);
}

TEST(CmdCountSpace, PrintsConventionalCounts) {
  std::ostringstream log;
  EXPECT_EQ(cmd_count_space(std::nullopt, log), kOk);
  EXPECT_NE(log.str().find("conventional macro 198359290368\n"), std::string::npos);
  EXPECT_NE(log.str().find("conventional micro 5832\n"), std::string::npos);
  std::ostringstream cfg_log;
  cmd_count_space(RunConfig{}, cfg_log);
  EXPECT_NE(cfg_log.str().find("configured mlp-chain cells=1 pool=mlp macro 64 micro 64"), std::string::npos);
}

TEST(CmdGradcheck, PassesOnReferenceBuild) {
  std::ostringstream log;
  EXPECT_EQ(cmd_gradcheck(20, 1e-4, log), kOk);
  EXPECT_NE(log.str().find("PASS dV/dalpha"), std::string::npos);
  EXPECT_EQ(log.str().find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace gapnas::cli
