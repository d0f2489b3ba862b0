#include "fknet/cli/run_config.hpp"

#include <filesystem>
#include <json.hpp>
#include <set>

#include "fknet/io/binary_io.hpp"

namespace fknet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw FormatError("config section " + section + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw FormatError("unknown config key " + section + "." + k);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_hw(const json& obj, const char* key, net::HW& out) {
  if (!obj.contains(key)) return;
  const auto v = obj.at(key).get<std::vector<std::size_t>>();
  if (v.size() != 2) throw FormatError(std::string("config key ") + key + " must be [height, width]");
  out = {v[0], v[1]};
}

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

fknet::PaddingMode parse_padding(const std::string& s) {
  if (s == "zero") return fknet::PaddingMode::zero;
  if (s == "valid") return fknet::PaddingMode::valid;
  throw FormatError("unknown padding \"" + s + "\" (expected zero or valid)");
}

net::NetConfig net_preset(const std::string& name) {
  if (name == "knuckle3d") return net::NetConfig::knuckle3d();
  if (name == "knuckle2d") return net::NetConfig::knuckle2d();
  if (name == "palmprint") return net::NetConfig::palmprint();
  throw FormatError("unknown net preset \"" + name + "\" (expected knuckle3d, knuckle2d or palmprint)");
}

net::NetConfig parse_net(const json& j) {
  check_keys(j, "net",
             {"preset", "in_channels", "input_hw", "test_hw", "num_classes", "feature_dim", "stem_channels",
              "stage2_blocks", "stage2_width", "stage3_blocks", "stage3_width", "bottleneck_expansion", "head_kernel",
              "padding", "bn_eps", "bn_momentum", "seed"});
  auto cfg = net_preset(j.value("preset", std::string("knuckle3d")));
  read(j, "in_channels", cfg.in_channels);
  read_hw(j, "input_hw", cfg.input_hw);
  read_hw(j, "test_hw", cfg.test_hw);
  read(j, "num_classes", cfg.num_classes);
  read(j, "feature_dim", cfg.feature_dim);
  read(j, "stem_channels", cfg.stem_channels);
  read(j, "stage2_blocks", cfg.stage2_blocks);
  read(j, "stage2_width", cfg.stage2_width);
  read(j, "stage3_blocks", cfg.stage3_blocks);
  read(j, "stage3_width", cfg.stage3_width);
  read(j, "bottleneck_expansion", cfg.bottleneck_expansion);
  read_hw(j, "head_kernel", cfg.head_kernel);
  if (j.contains("padding")) cfg.padding_mode = parse_padding(j.at("padding").get<std::string>());
  read(j, "bn_eps", cfg.bn_eps);
  read(j, "bn_momentum", cfg.bn_momentum);
  read(j, "seed", cfg.seed);
  return cfg;
}

json net_to_json(const net::NetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"input_hw", {c.input_hw.h, c.input_hw.w}},
          {"test_hw", {c.test_hw.h, c.test_hw.w}},
          {"num_classes", c.num_classes},
          {"feature_dim", c.feature_dim},
          {"stem_channels", c.stem_channels},
          {"stage2_blocks", c.stage2_blocks},
          {"stage2_width", c.stage2_width},
          {"stage3_blocks", c.stage3_blocks},
          {"stage3_width", c.stage3_width},
          {"bottleneck_expansion", c.bottleneck_expansion},
          {"head_kernel", {c.head_kernel.h, c.head_kernel.w}},
          {"padding", c.padding_mode == fknet::PaddingMode::valid ? "valid" : "zero"},
          {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum},
          {"seed", c.seed}};
}

net::TrainConfig parse_train(const json& j) {
  check_keys(j, "train",
             {"regime", "epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_decay", "lr_step", "margin",
              "rotations", "open_split"});
  net::TrainConfig t;
  if (j.contains("regime")) {
    const auto r = j.at("regime").get<std::string>();
    if (r == "closed_set") {
      t.regime = net::Regime::closed_set;
    } else if (r == "open_set") {
      t.regime = net::Regime::open_set;
    } else {
      throw FormatError("unknown regime \"" + r + "\" (expected closed_set or open_set)");
    }
  }
  read(j, "epochs", t.epochs);
  read(j, "batch_size", t.batch_size);
  read(j, "lr", t.lr);
  read(j, "momentum", t.momentum);
  read(j, "weight_decay", t.weight_decay);
  read(j, "lr_decay", t.lr_decay);
  read(j, "lr_step", t.lr_step);
  read(j, "margin", t.margin);
  read(j, "rotations", t.rotations);
  read(j, "open_split", t.open_split);
  return t;
}

eval::ProtocolSpec parse_protocol(const json& j) {
  if (j.is_string()) return eval::ProtocolSpec::preset(j.get<std::string>());
  check_keys(j, "protocol",
             {"preset", "name", "subjects", "probes_per_subject", "gallery_per_subject", "gallery_session",
              "probe_session", "mode", "open_split"});
  auto p = j.contains("preset") ? eval::ProtocolSpec::preset(j.at("preset").get<std::string>())
                                : eval::ProtocolSpec{"custom", 0, 0, 1, 1, 2, eval::ProtocolMode::closed_set, 0.8};
  read(j, "name", p.name);
  read(j, "subjects", p.subjects);
  read(j, "probes_per_subject", p.probes_per_subject);
  read(j, "gallery_per_subject", p.gallery_per_subject);
  read(j, "gallery_session", p.gallery_session);
  read(j, "probe_session", p.probe_session);
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "closed_set") {
      p.mode = eval::ProtocolMode::closed_set;
    } else if (m == "open_set") {
      p.mode = eval::ProtocolMode::open_set;
    } else {
      throw FormatError("unknown protocol mode \"" + m + "\"");
    }
  }
  read(j, "open_split", p.open_split);
  return p;
}

SynthSettings parse_synth(const json& j) {
  check_keys(j, "synth",
             {"subjects", "session1", "session2", "image", "session1_jitter", "session2_jitter", "noise", "lights",
              "stacks", "albedo"});
  SynthSettings s;
  read(j, "subjects", s.data.subjects);
  read(j, "session1", s.data.session1);
  read(j, "session2", s.data.session2);
  read_hw(j, "image", s.data.image);
  read(j, "session1_jitter", s.data.session1_jitter);
  read(j, "session2_jitter", s.data.session2_jitter);
  read(j, "noise", s.data.noise);
  read(j, "lights", s.lights);
  read(j, "stacks", s.stacks);
  read(j, "albedo", s.albedo);
  return s;
}

}  // namespace

void RunConfig::propagate_seed() {
  net.seed = seed;
  train.seed = seed;
  synth.data.seed = seed;
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"seed", "paths", "net", "train", "match", "protocol", "synth", "ablate"});
  RunConfig cfg;
  try {
    read(j, "seed", cfg.seed);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      check_keys(p, "paths", {"manifest", "lights", "model", "gallery", "out"});
      read(p, "manifest", cfg.paths.manifest);
      read(p, "lights", cfg.paths.lights);
      read(p, "model", cfg.paths.model);
      read(p, "gallery", cfg.paths.gallery);
      read(p, "out", cfg.paths.out);
      for (auto* s : {&cfg.paths.manifest, &cfg.paths.lights, &cfg.paths.model, &cfg.paths.gallery, &cfg.paths.out}) {
        *s = resolve(*s, base_dir);
      }
    }
    if (j.contains("net")) {
      if (j.at("net").contains("seed")) throw FormatError("net.seed is not configurable here; set the top-level seed");
      cfg.net = parse_net(j.at("net"));
    }
    if (j.contains("train")) cfg.train = parse_train(j.at("train"));
    if (j.contains("match")) {
      const auto& m = j.at("match");
      check_keys(m, "match", {"metric", "alignment", "threshold"});
      if (m.contains("metric")) cfg.match.metric = match::parse_metric(m.at("metric").get<std::string>());
      if (m.contains("alignment")) cfg.match.alignment = match::parse_alignment(m.at("alignment").get<std::string>());
      read(m, "threshold", cfg.match.threshold);
    }
    if (j.contains("protocol")) cfg.protocol = parse_protocol(j.at("protocol"));
    if (j.contains("synth")) cfg.synth = parse_synth(j.at("synth"));
    if (j.contains("ablate")) {
      check_keys(j.at("ablate"), "ablate", {"feature_dims"});
      read(j.at("ablate"), "feature_dims", cfg.ablate_feature_dims);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config value has the wrong type: ") + e.what());
  }
  cfg.propagate_seed();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_run_config(std::string(bytes.begin(), bytes.end()), fs::path(path).parent_path().string());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string net_config_to_json(const net::NetConfig& cfg, const std::vector<std::string>& classes) {
  json j = {{"net", net_to_json(cfg)}, {"classes", classes}};
  return j.dump(2) + "\n";
}

net::NetConfig net_config_from_json(const std::string& json_text, std::vector<std::string>* classes) {
  try {
    const auto j = json::parse(json_text);
    check_keys(j, "model", {"net", "classes"});
    auto cfg = parse_net(j.at("net"));
    if (classes) *classes = j.value("classes", std::vector<std::string>{});
    return cfg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config is malformed: ") + e.what());
  }
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.propagate_seed();
  }
  if (o.out) cfg.paths.out = *o.out;
  if (o.metric) cfg.match.metric = match::parse_metric(*o.metric);
  if (o.feature_dim) cfg.net.feature_dim = *o.feature_dim;
  if (o.alignment) cfg.match.alignment = match::parse_alignment(*o.alignment);
  if (o.protocol) cfg.protocol = eval::ProtocolSpec::preset(*o.protocol);
  if (o.manifest) cfg.paths.manifest = *o.manifest;
  if (o.model) cfg.paths.model = *o.model;
  if (o.gallery) cfg.paths.gallery = *o.gallery;
  if (o.lights) cfg.paths.lights = *o.lights;
}

}  // namespace fknet::cli
