#include <iostream>

#include <CLI11.hpp>

#include "mlcl/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace mlcl::cli;
  CLI::App app{"Multi-label contrastive learning lab for Raven-style matrices"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOptions opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key = value config file");
    sub->add_option("--override", opt.overrides, "key=value applied after the config file (repeatable)");
    sub->add_option("--seed", opt.seed, "seed (dataset seed for generate, training seed otherwise)");
  };

  auto* gen = app.add_subcommand("generate", "generate a dataset file");
  add_common(gen);
  gen->add_option("--out", opt.out, "dataset path")->required();

  auto* train = app.add_subcommand("train", "train one protocol and write a run directory");
  add_common(train);
  train->add_option("--dataset", opt.dataset_path, "training dataset")->required();
  train->add_option("--test", opt.test_path, "held-out test dataset");
  train->add_option("--out", opt.out, "directory receiving the run directory")->required();
  train->add_option("--mode", opt.mode, "mlcl, mlcl-noaug, ce, ce-aux-dense or ce-aux-sparse");

  auto* abl = app.add_subcommand("ablate", "run an ablation grid");
  add_common(abl);
  abl->add_option("--dataset", opt.dataset_path, "training dataset")->required();
  abl->add_option("--test", opt.test_path, "held-out test dataset");
  abl->add_option("--out", opt.out, "directory receiving the sweep directory")->required();
  abl->add_option("--grid", opt.grid, "sweep (60 cells) or directional (4 variants)");

  auto* ver = app.add_subcommand("verify", "check that every instance has a unique answer");
  ver->add_option("--dataset", opt.dataset_path, "dataset to check")->required();

  auto* rep = app.add_subcommand("report", "print the scalars of a run directory");
  rep->add_option("--out", opt.out, "run directory written by train")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  return guarded(
      [&]() {
        if (*gen) return cmd_generate(opt, std::cout);
        if (*train) return cmd_train(opt, std::cout);
        if (*abl) return cmd_ablate(opt, std::cout);
        if (*ver) return cmd_verify(opt, std::cout);
        return cmd_report(opt, std::cout);
      },
      std::cerr);
}
