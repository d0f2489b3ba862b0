#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "fknet/cli/run_config.hpp"

namespace fknet::cli {

/// Every command returns the process exit code: 0 iff all requested outputs were written.
/// Progress goes to `log`; results that a user asked for go to `out`.

/// Synthetic knuckle dataset: out/manifest.txt plus per-sample photometric stacks and
/// out/lights.txt, or normal-encoded images when synth.stacks is false.
int cmd_synth(const RunConfig& cfg, std::ostream& log);

/// Photometric stacks to normal-encoded images in out/images with out/manifest.txt. In
/// pass-through mode each listed image is copied unchanged.
int cmd_preprocess(const RunConfig& cfg, bool passthrough, std::ostream& log);

/// Writes out/model.fkw, out/model.cfg and out/loss.csv.
int cmd_train(const RunConfig& cfg, std::ostream& log);

/// Gallery-role templates of every gallery sample and probe-role templates of every probe
/// sample into out/templates/gallery and out/templates/probe.
int cmd_extract(const RunConfig& cfg, std::ostream& log);

/// Gallery directory at paths.gallery (default out/gallery).
int cmd_enroll(const RunConfig& cfg, std::ostream& log);

/// Ranks the gallery for one probe template; writes out/identify.csv.
int cmd_identify(const RunConfig& cfg, const std::string& probe_path, std::ostream& out);

/// Accept/reject for a claimed identity; writes out/verify.txt.
int cmd_verify(const RunConfig& cfg, const std::string& probe_path, const std::string& claimed,
               std::optional<double> threshold, std::ostream& out);

/// Protocol mode scores every protocol pair with the trained model; scores mode reads a
/// scores CSV. Both write out/scores.csv (protocol mode only) and the evalkit report.
int cmd_evaluate(const RunConfig& cfg, const std::optional<std::string>& scores_csv, std::ostream& out);

/// axis is feature_dim, metric or alignment; writes out/ablation.csv.
int cmd_ablate(const RunConfig& cfg, const std::string& axis, std::ostream& out);

}  // namespace fknet::cli
