#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cli/commands.hpp"

namespace {

struct Options {
  std::string config;
  std::int64_t seed = -1;
  std::string out;
  std::string system = "factor";
  int bma = 0;
  std::string resume;
  bool per_example = false;
  std::vector<std::string> cells;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "override the configured seed")->check(CLI::NonNegativeNumber);
  sub->add_option("--out", o.out, "output directory (overrides paths.output)");
}

void add_eval_flags(CLI::App* sub, Options& o) {
  sub->add_option("--system", o.system, "factor, ns, ls or jm");
  sub->add_option("--bma", o.bma, "average over this many posterior samples")->check(CLI::PositiveNumber);
  sub->add_option("--cell", o.cells, "restrict to task:lang (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parameter-space factorization for zero-shot token classification"};
  app.require_subcommand(1);
  Options o;
  auto* synth = app.add_subcommand("synth", "generate a synthetic grid with known ground truth");
  add_common(synth, o);
  auto* train = app.add_subcommand("train", "fit the factorized model on the seen cells");
  add_common(train, o);
  train->add_option("--resume", o.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  auto* eval = app.add_subcommand("eval", "per-cell scores and entropies");
  add_common(eval, o);
  add_eval_flags(eval, o);
  auto* predict = app.add_subcommand("predict", "per-token prediction reports");
  add_common(predict, o);
  add_eval_flags(predict, o);
  predict->add_flag("--per-example", o.per_example, "one row per example");
  auto* entropy = app.add_subcommand("entropy", "predictive entropies and their correlation with accuracy");
  add_common(entropy, o);
  add_eval_flags(entropy, o);
  entropy->add_flag("--per-example", o.per_example, "one row per example");
  auto* baseline = app.add_subcommand("baseline", "nearest-source, largest-source or joint multilingual");
  add_common(baseline, o);
  add_eval_flags(baseline, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    psf::cli::RunConfig rc = psf::cli::load_run_config(o.config);
    if (o.seed >= 0) rc.apply_seed(static_cast<std::uint64_t>(o.seed));
    if (!o.out.empty()) rc.paths.output = o.out;
    psf::cli::Flags flags;
    flags.system = psf::cli::parse_system(o.system);
    flags.bma = o.bma;
    flags.resume = o.resume;
    flags.per_example = o.per_example;
    flags.cells = o.cells;
    psf::cli::echo_config(rc);
    if (synth->parsed()) return psf::cli::run_synth(rc, std::cout);
    if (train->parsed()) return psf::cli::run_train(rc, flags, std::cout);
    if (eval->parsed()) return psf::cli::run_eval(rc, flags, std::cout);
    if (predict->parsed()) return psf::cli::run_predict(rc, flags, std::cout);
    if (entropy->parsed()) return psf::cli::run_entropy(rc, flags, std::cout);
    if (baseline->parsed()) return psf::cli::run_baseline(rc, flags, std::cout);
  } catch (const psf::ConfigError& e) {
    std::cerr << "psf: " << e.what() << '\n';
    return 2;
  } catch (const psf::CheckpointError& e) {
    std::cerr << "psf: checkpoint error";
    if (!e.entry().empty()) std::cerr << " in entry '" << e.entry() << "'";
    std::cerr << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "psf: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
