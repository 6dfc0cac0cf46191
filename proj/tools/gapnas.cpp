// gapnas: search, retrain, eval, gradcheck and count-space.
#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "gapnas/error.hpp"
#include "gapnas/kernels.hpp"

using namespace gapnas;
using namespace gapnas::cli;

namespace {

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--preset", o.preset, "alphagan-s | alphagan-l | quad-game | mlp-8gauss | image-shapes");
  app->add_option("--seed", o.seed, "run seed");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--op-pool", o.op_pool, "default | no-deconv | learnable-interp | mlp");
  app->add_option("--relax", o.relax, "softmax | gumbel:TAU");
  app->add_option("--gbar", o.gbar, "weights | arch | both");
  app->add_option("--single-level", o.single_level, "run the single-level variant with this multiplier");
  app->add_flag("--search-d", o.search_d, "search the discriminator too");
  app->add_option("--warmup", o.warmup, "fraction of rounds with frozen architecture");
  app->add_option("--set", o.sets, "override one key: section.key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable GAN architecture search by duality-gap minimization"};
  app.require_subcommand(1);
  std::string backend = "omp";
  app.add_option("--kernels", backend, "kernel backend: omp | serial")->check(CLI::IsMember({"omp", "serial"}));

  CommonOptions search_opt;
  auto* search = app.add_subcommand("search", "architecture search; writes genotype, log and manifest");
  add_common(search, search_opt);

  CommonOptions retrain_opt;
  std::string genotype_path;
  std::string resume;
  auto* retrain = app.add_subcommand("retrain", "train a discrete genotype from scratch");
  add_common(retrain, retrain_opt);
  retrain->add_option("--genotype", genotype_path, "genotype file from search")->check(CLI::ExistingFile);
  retrain->add_option("--resume", resume, "continue from a retrain checkpoint")->check(CLI::ExistingFile);

  std::string checkpoint;
  std::vector<std::string> eval_sets;
  std::string eval_csv;
  auto* eval = app.add_subcommand("eval", "metrics of a retrain checkpoint");
  eval->add_option("checkpoint", checkpoint, "checkpoint.json")->required()->check(CLI::ExistingFile);
  eval->add_option("--set", eval_sets, "override the checkpoint's config: section.key=value");
  eval->add_option("--csv", eval_csv, "also write the metrics to this CSV");

  int points = 20;
  double tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every primitive and dV/dalpha");
  gradcheck->add_option("--points", points, "random points per check")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tol", tol, "relative error tolerance")->check(CLI::PositiveNumber);

  CommonOptions count_opt;
  auto* count = app.add_subcommand("count-space", "exact number of discrete architectures");
  add_common(count, count_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  kernels::set_backend(backend == "serial" ? kernels::Backend::kSerial : kernels::Backend::kOpenMP);

  try {
    if (*search) return cmd_search(resolve_config(search_opt), std::cout).exit_code;
    if (*retrain) {
      if (genotype_path.empty() == resume.empty()) {
        std::cerr << "retrain: give exactly one of --genotype or --resume\n";
        return kUsage;
      }
      std::optional<std::filesystem::path> from;
      if (!resume.empty()) from = resume;
      return cmd_retrain(resolve_config(retrain_opt), genotype_path, from, std::cout);
    }
    if (*eval) return cmd_eval(checkpoint, eval_sets, eval_csv, std::cout);
    if (*gradcheck) return cmd_gradcheck(points, tol, std::cout);
    if (*count) {
      const bool configured = !count_opt.config.empty() || !count_opt.preset.empty() || !count_opt.op_pool.empty() ||
                              !count_opt.sets.empty();
      std::optional<RunConfig> cfg;
      if (configured) cfg = resolve_config(count_opt);
      return cmd_count_space(cfg, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
