#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "hjstab/commands.hpp"

namespace {

void add_common(CLI::App* sub, hjstab::CommandArgs& args, bool with_config, bool with_data,
                bool with_model) {
  if (with_config) sub->add_option("--config", args.config_path, "configuration file");
  if (with_data) sub->add_option("--data", args.data_dir, "dataset directory")->required();
  if (with_model) sub->add_option("--model", args.model_path, "model checkpoint")->required();
  sub->add_option("--out", args.out_dir, "output directory")->required();
  sub->add_option("--seed", args.seed, "seed override (defaults to run.seed in the config)");
  sub->add_option("--threads", args.threads, "worker cap; 1 guarantees bitwise determinism")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hjstab: input-output stable dynamics - data generation, training, evaluation"};
  app.require_subcommand(1);

  hjstab::CommandArgs args;
  for (int i = 0; i < argc; ++i) args.argv.emplace_back(argv[i]);

  CLI::App* gen = app.add_subcommand("generate", "generate a benchmark dataset");
  add_common(gen, args, true, false, false);
  CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
  add_common(train, args, true, true, false);
  train->get_option("--config")->required();
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, args, false, true, true);
  CLI::App* probe = app.add_subcommand("probe", "step-response boundedness probe");
  add_common(probe, args, true, false, true);
  CLI::App* audit = app.add_subcommand("hj-audit", "sample the stability certificate residual");
  add_common(audit, args, true, false, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      hjstab::cmd_generate(args);
    } else if (train->parsed()) {
      hjstab::cmd_train(args);
    } else if (eval->parsed()) {
      hjstab::EvalReport rep = hjstab::cmd_eval(args);
      std::cout << "rmse=" << rep.rmse << " gain_io_error=" << rep.gain_io_error << "\n";
    } else if (probe->parsed()) {
      auto verdicts = hjstab::cmd_probe(args);
      int bounded = 0;
      for (const auto& v : verdicts) bounded += v.bounded ? 1 : 0;
      std::cout << "bounded " << bounded << "/" << verdicts.size() << " magnitudes\n";
    } else if (audit->parsed()) {
      hjstab::HjAuditResult res = hjstab::cmd_hj_audit(args);
      std::cout << "max_hj_modified=" << res.max_hj_modified
                << " max_hj_nominal=" << res.max_hj_nominal << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hjstab::exit_code_for(e);
  }
  return 0;
}
