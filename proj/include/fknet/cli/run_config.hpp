#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fknet/data/synthetic.hpp"
#include "fknet/eval/protocol.hpp"
#include "fknet/match/matching.hpp"
#include "fknet/net/config.hpp"

namespace fknet::cli {

struct Paths {
  std::string manifest;
  std::string lights;
  std::string model;  // directory holding model.fkw and model.cfg
  std::string gallery;
  std::string out = "out";
};

struct MatchSettings {
  match::Metric metric = match::Metric::cosine;
  match::Alignment alignment = match::Alignment::grid;
  double threshold = 0.5;
};

/// Synthetic dataset written by the synth command.
struct SynthSettings {
  synth::SynthConfig data;
  std::size_t lights = 6;
  /// true: one photometric stack per sample; false: normal-encoded images directly.
  bool stacks = true;
  double albedo = 0.8;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Paths paths;
  net::NetConfig net = net::NetConfig::knuckle3d();
  net::TrainConfig train;
  MatchSettings match;
  eval::ProtocolSpec protocol = eval::ProtocolSpec::knuckle3d();
  SynthSettings synth;
  std::vector<std::size_t> ablate_feature_dims{200, 400, 600, 800, 1000};

  /// Copies `seed` into every stochastic component.
  void propagate_seed();
};

/// JSON document; unknown keys are errors. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);

/// Net section alone, as stored in model.cfg.
std::string net_config_to_json(const net::NetConfig& cfg, const std::vector<std::string>& classes);
net::NetConfig net_config_from_json(const std::string& json_text, std::vector<std::string>* classes = nullptr);

/// Command-line overrides applied after the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> metric;
  std::optional<std::size_t> feature_dim;
  std::optional<std::string> alignment;
  std::optional<std::string> protocol;
  std::optional<std::string> manifest;
  std::optional<std::string> model;
  std::optional<std::string> gallery;
  std::optional<std::string> lights;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

}  // namespace fknet::cli
