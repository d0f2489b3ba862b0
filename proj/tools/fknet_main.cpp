#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "fknet/cli/commands.hpp"

namespace cli = fknet::cli;

int main(int argc, char** argv) {
  CLI::App app{"fknet: photometric-stereo finger knuckle recognition"};
  app.require_subcommand(1);

  std::string config_path;
  cli::Overrides ov;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", ov.seed, "global seed for every stochastic component");
  app.add_option("--out", ov.out, "output directory");
  app.add_option("--metric", ov.metric, "mse or cosine");
  app.add_option("--feature-dim", ov.feature_dim, "template feature dimension D");
  app.add_option("--alignment", ov.alignment, "grid, center or shifted");
  app.add_option("--protocol", ov.protocol, "knuckle3d, knuckle3d-open, knuckle2d or palmprint");
  app.add_option("--manifest", ov.manifest, "sample manifest");
  app.add_option("--model", ov.model, "directory holding model.fkw and model.cfg");
  app.add_option("--gallery", ov.gallery, "gallery directory");
  app.add_option("--lights", ov.lights, "light direction file");

  auto* synth = app.add_subcommand("synth", "write a synthetic knuckle dataset");
  auto* preprocess = app.add_subcommand("preprocess", "photometric stacks to normal-encoded images");
  bool passthrough = false;
  preprocess->add_flag("--passthrough", passthrough, "copy already rendered images unchanged");
  auto* train = app.add_subcommand("train", "train a model on the protocol's training samples");
  auto* extract = app.add_subcommand("extract", "extract gallery and probe templates");
  auto* enroll = app.add_subcommand("enroll", "build a gallery from the protocol's gallery samples");
  std::string probe, claim;
  std::optional<double> threshold;
  auto* identify = app.add_subcommand("identify", "rank gallery subjects for one probe template");
  identify->add_option("--probe", probe, "probe template (.fkt)")->required()->check(CLI::ExistingFile);
  auto* verify = app.add_subcommand("verify", "accept or reject a claimed identity");
  verify->add_option("--probe", probe, "probe template (.fkt)")->required()->check(CLI::ExistingFile);
  verify->add_option("--claim", claim, "claimed subject id")->required();
  verify->add_option("--threshold", threshold, "decision threshold (default match.threshold)");
  std::optional<std::string> scores;
  auto* evaluate = app.add_subcommand("evaluate", "score the protocol and write ROC, CMC and summary");
  evaluate->add_option("--scores", scores, "evaluate an existing scores CSV instead")->check(CLI::ExistingFile);
  std::string axis;
  auto* ablate = app.add_subcommand("ablate", "sweep one axis and tabulate EER and rank-1");
  ablate->add_option("--axis", axis, "feature_dim, metric or alignment")
      ->required()
      ->check(CLI::IsMember({"feature_dim", "metric", "alignment"}));

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = config_path.empty() ? cli::RunConfig{} : cli::load_run_config(config_path);
    if (config_path.empty()) cfg.propagate_seed();
    cli::apply_overrides(cfg, ov);
    if (synth->parsed()) return cli::cmd_synth(cfg, std::cerr);
    if (preprocess->parsed()) return cli::cmd_preprocess(cfg, passthrough, std::cerr);
    if (train->parsed()) return cli::cmd_train(cfg, std::cerr);
    if (extract->parsed()) return cli::cmd_extract(cfg, std::cerr);
    if (enroll->parsed()) return cli::cmd_enroll(cfg, std::cerr);
    if (identify->parsed()) return cli::cmd_identify(cfg, probe, std::cout);
    if (verify->parsed()) return cli::cmd_verify(cfg, probe, claim, threshold, std::cout);
    if (evaluate->parsed()) return cli::cmd_evaluate(cfg, scores, std::cout);
    if (ablate->parsed()) return cli::cmd_ablate(cfg, axis, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
