#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gapnas/config.hpp"
#include "gapnas/error.hpp"

namespace gapnas {
namespace {

TEST(Config, DefaultsRoundTrip) {
  RunConfig a;
  RunConfig b;
  apply_config_text(b, config_to_text(a));
  EXPECT_EQ(config_to_text(a), config_to_text(b));
}

TEST(Config, ModifiedValuesRoundTripExactly) {
  RunConfig a;
  set_config_value(a, "run.seed", "17");
  set_config_value(a, "task.name", "linear");
  set_config_value(a, "optim.arch_lr", "0.00031415926535897931");
  set_config_value(a, "search.single_level", "0.25");
  set_config_value(a, "search.gbar", "both");
  set_config_value(a, "net.relax", "gumbel:0.5");
  set_config_value(a, "search.parallel_gap", "yes");
  const std::string text = config_to_text(a);

  RunConfig b;
  apply_config_text(b, text);
  EXPECT_EQ(text, config_to_text(b));
  EXPECT_EQ(b.search.seed, 17u);
  EXPECT_EQ(b.search.task.task, "linear");
  EXPECT_EQ(b.search.arch_adam.lr, 0.00031415926535897931);
  ASSERT_TRUE(b.search.single_level_lambda.has_value());
  EXPECT_EQ(*b.search.single_level_lambda, 0.25);
  EXPECT_EQ(b.search.gbar, GbarMode::kWeightsAndArch);
  EXPECT_TRUE(b.search.parallel_gap);

  set_config_value(b, "search.single_level", "off");
  EXPECT_FALSE(b.search.single_level_lambda.has_value());
}

TEST(Config, Defaults) {
  RunConfig c;
  EXPECT_EQ(c.search.weight_adam.lr, 2e-4);
  EXPECT_EQ(c.search.weight_adam.beta1, 0.0);
  EXPECT_EQ(c.search.weight_adam.beta2, 0.999);
  EXPECT_EQ(c.search.arch_adam.lr, 3e-4);
  EXPECT_EQ(c.search.arch_adam.beta1, 0.5);
  EXPECT_EQ(c.search.arch_adam.beta2, 0.999);
  EXPECT_EQ(c.search.arch_adam.weight_decay, 1e-3);
  EXPECT_EQ(c.retrain.adam.beta1, 0.0);
  EXPECT_EQ(c.retrain.adam.beta2, 0.9);
}

TEST(Config, UnknownKeyRejected) {
  RunConfig c;
  EXPECT_THROW(set_config_value(c, "search.roundz", "3"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "[search]\nroundz = 3\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "[nosuch]\nrounds = 3\n"), ConfigError);
}

TEST(Config, BadValueNamesKey) {
  RunConfig c;
  try {
    set_config_value(c, "search.rounds", "ten");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("search.rounds"), std::string::npos);
  }
  EXPECT_THROW(set_config_value(c, "search.rounds", "3.5"), ConfigError);
  EXPECT_THROW(set_config_value(c, "search.rounds", "99999999999"), ConfigError);
  EXPECT_THROW(set_config_value(c, "search.parallel_gap", "maybe"), ConfigError);
  EXPECT_THROW(set_config_value(c, "task.loss", "wasserstein"), ConfigError);
  EXPECT_THROW(set_config_value(c, "search.gbar", "none"), ConfigError);
  EXPECT_THROW(set_config_value(c, "optim.weight_lr", "1e-3x"), ConfigError);
}

TEST(Config, CommentsAndKeyOutsideSection) {
  RunConfig c;
  apply_config_text(c, "# comment\n; another\n[search]\n# inside\nrounds = 7\n");
  EXPECT_EQ(c.search.rounds, 7);
  EXPECT_THROW(apply_config_text(c, "rounds = 7\n[search]\narch_steps = 2\n"), ConfigError);
}

TEST(Config, FileErrorsCarryOrigin) {
  const auto path = std::filesystem::temp_directory_path() / "gapnas_test_config.ini";
  {
    std::ofstream out(path);
    out << "[search]\nrounds = x\n";
  }
  RunConfig c;
  try {
    apply_config_file(c, path);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(apply_config_file(c, path), ConfigError);
}

TEST(Config, Presets) {
  RunConfig s;
  apply_preset(s, "alphagan-s");
  EXPECT_EQ(s.search.weight_steps, 20);
  EXPECT_EQ(s.search.arch_steps, 20);
  EXPECT_EQ(s.search.inner_steps, 20);

  RunConfig l;
  apply_preset(l, "alphagan-l");
  EXPECT_EQ(l.search.weight_steps, 390);
  EXPECT_EQ(l.search.arch_steps, 20);
  EXPECT_EQ(l.search.inner_steps, 390);
  EXPECT_EQ(l.preset, "alphagan-l");

  for (const auto& name : preset_names()) {
    RunConfig c;
    apply_preset(c, name);
    EXPECT_NO_THROW(c.finalize()) << name;
  }
  RunConfig bad;
  EXPECT_THROW(apply_preset(bad, "alphagan-xl"), ConfigError);
}

TEST(Config, RelaxParsing) {
  EXPECT_EQ(parse_relax("softmax").mode, Relaxation::kSoftmax);
  const auto g = parse_relax("gumbel:0.7");
  EXPECT_EQ(g.mode, Relaxation::kGumbel);
  EXPECT_EQ(g.tau, 0.7);
  EXPECT_EQ(parse_relax(relax_name(g)).tau, 0.7);
  EXPECT_THROW(parse_relax("gumbel:0"), ConfigError);
  EXPECT_THROW(parse_relax("gumbel:"), ConfigError);
  EXPECT_THROW(parse_relax("sparsemax"), ConfigError);
}

TEST(Config, FinalizeValidates) {
  RunConfig c;
  set_config_value(c, "search.rounds", "0");
  EXPECT_THROW(c.finalize(), ConfigError);
  RunConfig d;
  set_config_value(d, "net.op_pool", "default");

  EXPECT_EQ(d.op_pool, PoolPreset::kDefault);
}

}  // namespace
}  // namespace gapnas
