#include "fknet/cli/commands.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>

#include "fknet/eval/metrics.hpp"
#include "fknet/eval/report.hpp"
#include "fknet/io/binary_io.hpp"
#include "fknet/io/image.hpp"
#include "fknet/io/sha256.hpp"
#include "fknet/ndtensor/checkpoint.hpp"
#include "fknet/net/train.hpp"
#include "fknet/photostereo/photostereo.hpp"

namespace fknet::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFile = "model.fkw";
constexpr const char* kModelConfigFile = "model.cfg";

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto b = read_file_bytes(path.string());
  return {b.begin(), b.end()};
}

const std::string& require_path(const std::string& p, const char* key) {
  if (p.empty()) throw ContractViolation(std::string(key) + " is not set; give it in the config or on the command line");
  if (!fs::exists(p)) throw ContractViolation(std::string(key) + " " + p + " does not exist");
  return p;
}

struct LoadedModel {
  std::unique_ptr<net::FKNetPlus<float>> net;
  match::Fingerprint fingerprint{};
  std::vector<std::string> classes;
};

LoadedModel load_model(const std::string& dir) {
  require_path(dir, "paths.model");
  const auto cfg_path = fs::path(dir) / kModelConfigFile;
  const auto ckpt_path = fs::path(dir) / kCheckpointFile;
  if (!fs::exists(cfg_path) || !fs::exists(ckpt_path)) {
    throw ContractViolation("model directory " + dir + " lacks " + kModelConfigFile + " or " + kCheckpointFile +
                            "; run train first");
  }
  LoadedModel m;
  const auto cfg = net_config_from_json(read_text(cfg_path), &m.classes);
  m.net = std::make_unique<net::FKNetPlus<float>>(cfg);
  m.net->load_state_dict(load_checkpoint(ckpt_path.string()));
  m.fingerprint = net::model_fingerprint(*m.net);
  return m;
}

Tensor<float> load_sample(const std::string& path, std::size_t channels) {
  return image_to_chw(read_image(path), channels);
}

match::MatchPolicy policy_of(const RunConfig& cfg) { return {cfg.match.metric}; }

eval::Polarity polarity_of(const match::MatchPolicy& p) {
  return p.higher_is_better() ? eval::Polarity::higher_better : eval::Polarity::lower_better;
}

std::string gallery_dir(const RunConfig& cfg) {
  return cfg.paths.gallery.empty() ? (fs::path(cfg.paths.out) / "gallery").string() : cfg.paths.gallery;
}

photostereo::LightSet ring_lights(std::size_t k) {
  constexpr double slant = 35.0 * std::numbers::pi / 180.0;
  std::vector<photostereo::Vec3> dirs;
  for (std::size_t i = 0; i < k; ++i) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    dirs.push_back({std::sin(slant) * std::cos(phi), std::sin(slant) * std::sin(phi), std::cos(slant)});
  }
  return photostereo::LightSet::from_unnormalized(std::move(dirs));
}

std::vector<net::Sample> closed_set_samples(const eval::ProtocolBinding& b, const std::vector<eval::ManifestEntry>& m,
                                            std::size_t channels) {
  std::vector<net::Sample> out;
  for (std::size_t k = 0; k < b.subjects.size(); ++k) {
    for (auto i : b.gallery[k]) out.push_back({load_sample(m[i].path, channels), static_cast<int>(k), b.subjects[k], m[i].session});
  }
  return out;
}

std::vector<net::Sample> open_set_samples(const eval::ProtocolBinding& b, const std::vector<eval::ManifestEntry>& m,
                                          std::size_t channels) {
  std::vector<std::string> subjects = b.train_subjects;
  subjects.insert(subjects.end(), b.subjects.begin(), b.subjects.end());
  std::vector<net::Sample> out;
  for (std::size_t k = 0; k < subjects.size(); ++k) {
    for (const auto& e : m) {
      if (e.subject_id != subjects[k] || (e.session != 1 && e.session != 2)) continue;
      out.push_back({load_sample(e.path, channels), static_cast<int>(k), e.subject_id, e.session});
    }
  }
  return out;
}

// Trains per the config and writes the model files into `dir`.
int train_into(const RunConfig& cfg, const fs::path& dir, std::ostream& log) {
  const auto manifest = eval::read_manifest(require_path(cfg.paths.manifest, "paths.manifest"));
  const auto binding = eval::bind_protocol(cfg.protocol, manifest);
  auto netcfg = cfg.net;
  auto tc = cfg.train;
  net::TrainResult result;
  std::vector<std::string> classes;
  if (tc.regime == net::Regime::closed_set) {
    if (cfg.protocol.mode != eval::ProtocolMode::closed_set) {
      throw ContractViolation("closed-set training needs a closed-set protocol");
    }
    netcfg.num_classes = binding.subjects.size();
    const auto data = closed_set_samples(binding, manifest, netcfg.in_channels);
    fmt::print(log, "training closed-set: {} samples, {} classes, {} epochs\n", data.size(), netcfg.num_classes,
               tc.epochs);
    net::FKNetPlus<float> model(netcfg);
    result = net::train_closed_set(model, data, tc);
    classes = binding.subjects;
    fs::create_directories(dir);
    save_checkpoint((dir / kCheckpointFile).string(), model.state_dict());
  } else {
    if (cfg.protocol.mode != eval::ProtocolMode::open_set || cfg.protocol.gallery_session != 1 ||
        cfg.protocol.probe_session != 2) {
      throw ContractViolation("open-set training needs an open-set protocol over sessions 1 and 2");
    }
    tc.open_split = cfg.protocol.open_split;
    netcfg.num_classes = binding.train_subjects.size();
    const auto data = open_set_samples(binding, manifest, netcfg.in_channels);
    fmt::print(log, "training open-set: {} samples, {} training subjects, {} epochs\n", data.size(),
               binding.train_subjects.size(), tc.epochs);
    net::FKNetPlus<float> model(netcfg);
    result = net::train_open_set(model, data, tc, [&](const std::string& w) { fmt::print(log, "warning: {}\n", w); });
    if (result.train_subjects != binding.train_subjects) {
      throw ContractViolation("open-set training split disagrees with the protocol split");
    }
    classes = result.train_subjects;
    fs::create_directories(dir);
    save_checkpoint((dir / kCheckpointFile).string(), model.state_dict());
  }
  write_text(dir / kModelConfigFile, net_config_to_json(netcfg, classes));
  net::write_loss_trace((dir / "loss.csv").string(), result.trace);
  const auto model = load_model(dir.string());
  fmt::print(log, "final loss {:.6g}; model {} written to {}\n", result.trace.empty() ? 0.0 : result.trace.back().loss,
             to_hex(model.fingerprint).substr(0, 12), dir.string());
  return 0;
}

struct ProtocolTemplates {
  std::vector<std::vector<match::Template>> gallery;  // per test subject
  std::vector<std::vector<match::Template>> probes;
};

ProtocolTemplates extract_protocol(const RunConfig& cfg, LoadedModel& model, const eval::ProtocolBinding& b,
                                   const std::vector<eval::ManifestEntry>& m) {
  ProtocolTemplates t;
  const auto channels = model.net->config().in_channels;
  for (std::size_t k = 0; k < b.subjects.size(); ++k) {
    auto& g = t.gallery.emplace_back();
    for (auto i : b.gallery[k]) {
      g.push_back(match::extract_template(*model.net, model.fingerprint, load_sample(m[i].path, channels),
                                          match::Role::gallery, b.subjects[k], m[i].session));
    }
    auto& p = t.probes.emplace_back();
    for (auto i : b.probes[k]) {
      p.push_back(match::extract_template(*model.net, model.fingerprint, load_sample(m[i].path, channels),
                                          match::Role::probe, b.subjects[k], m[i].session, cfg.match.alignment));
    }
  }
  return t;
}

// Scores every protocol pair and writes scores.csv plus the report into `dir`.
eval::Summary evaluate_into(const RunConfig& cfg, LoadedModel& model, const fs::path& dir, std::ostream& out) {
  const auto manifest = eval::read_manifest(require_path(cfg.paths.manifest, "paths.manifest"));
  const auto binding = eval::bind_protocol(cfg.protocol, manifest);
  const auto templates = extract_protocol(cfg, model, binding, manifest);
  const auto policy = policy_of(cfg);
  const auto pairs = eval::build_protocol_pairs(cfg.protocol);
  std::vector<eval::ScoreRecord> records;
  records.reserve(pairs.size());
  for (const auto& pr : pairs) {
    const auto& probe = templates.probes[pr.probe_subject][pr.probe_index];
    bool first = true;
    double best = 0.0;
    for (const auto& g : templates.gallery[pr.gallery_subject]) {
      const double s = match::compare(probe, g, policy);
      if (first || policy.better(s, best)) best = s;
      first = false;
    }
    records.push_back({binding.subjects[pr.probe_subject] + "#" + std::to_string(pr.probe_index),
                       binding.subjects[pr.gallery_subject], best, pr.genuine});
  }
  fs::create_directories(dir);
  eval::write_scores_csv((dir / "scores.csv").string(), records);
  const auto scores = eval::to_score_set(records, polarity_of(policy));
  if (scores.genuine.size() != cfg.protocol.genuine_count() || scores.impostor.size() != cfg.protocol.impostor_count()) {
    throw std::runtime_error("protocol produced an unexpected number of scores");
  }
  const auto roc = eval::roc_curve(scores);
  const auto c = eval::cmc(eval::to_rankings(records, polarity_of(policy)));
  eval::emit_report(dir.string(), roc, c);
  const eval::Summary summary{eval::eer(roc), c.rank1()};
  fmt::print(out, "genuine={} impostor={} {}\n", scores.genuine.size(), scores.impostor.size(),
             eval::format_summary(summary));
  return summary;
}

}  // namespace

int cmd_synth(const RunConfig& cfg, std::ostream& log) {
  const auto& s = cfg.synth;
  const fs::path out(cfg.paths.out);
  fs::create_directories(out / "samples");
  const auto plan = synth::plan_dataset(s.data);
  std::mt19937_64 noise_rng(s.data.seed ^ 0x5DEECE66DULL);
  std::normal_distribution<double> noise(0.0, s.data.noise);
  const auto lights = ring_lights(s.lights);
  std::vector<eval::ManifestEntry> manifest;
  std::vector<std::size_t> counter(s.data.subjects * 3, 0);
  for (const auto& v : plan.views) {
    const auto subject = synth::subject_name(v.subject);
    const auto name = fmt::format("{}_{}_{}", subject, v.session, counter[v.subject * 3 + v.session]++);
    const auto normals = synth::view_normals(plan.patterns[v.subject], s.data.image, v.shift_y, v.shift_x);
    if (s.stacks) {
      photostereo::AlbedoMap albedo{normals.height, normals.width,
                                    std::vector<double>(normals.height * normals.width, s.albedo)};
      const auto stack = photostereo::render_lambertian(normals, albedo, lights);
      const auto dir = out / "samples" / name;
      fs::create_directories(dir);
      for (std::size_t k = 0; k < stack.images.size(); ++k) {
        Image img(stack.height, stack.width, 1);
        for (std::size_t p = 0; p < img.values.size(); ++p) {
          const double n = s.data.noise > 0.0 ? noise(noise_rng) : 0.0;
          img.values[p] = static_cast<float>(std::clamp(stack.images[k][p] + n, 0.0, 1.0));
        }
        write_png((dir / fmt::format("{}.png", k)).string(), img, 16);
      }
      manifest.push_back({"samples/" + name, subject, v.session, "synthetic"});
    } else {
      std::mt19937_64& rng = noise_rng;
      const auto chw = synth::render_view(plan.patterns[v.subject], s.data.image, v.shift_y, v.shift_x, s.data.noise, rng);
      write_png((out / "samples" / (name + ".png")).string(), chw_to_image(chw), 16);
      manifest.push_back({"samples/" + name + ".png", subject, v.session, "synthetic"});
    }
  }
  std::string lights_txt = "# light directions, one per stack image\n";
  for (const auto& d : lights.directions()) lights_txt += fmt::format("{:.17g} {:.17g} {:.17g}\n", d[0], d[1], d[2]);
  write_text(out / "lights.txt", lights_txt);
  write_text(out / "manifest.txt", eval::format_manifest(manifest));
  fmt::print(log, "wrote {} synthetic samples of {} subjects to {}\n", manifest.size(), s.data.subjects, out.string());
  return 0;
}

int cmd_preprocess(const RunConfig& cfg, bool passthrough, std::ostream& log) {
  const auto manifest = eval::read_manifest(require_path(cfg.paths.manifest, "paths.manifest"));
  if (manifest.empty()) throw ContractViolation("manifest " + cfg.paths.manifest + " lists no samples");
  std::optional<photostereo::LightSet> lights;
  if (!passthrough) {
    lights = photostereo::LightSet::load(require_path(cfg.paths.lights, "paths.lights"));
    if (lights->rank() < 3) throw photostereo::RankDeficientLights("light directions in " + cfg.paths.lights + " are rank deficient");
  }
  const fs::path out(cfg.paths.out);
  fs::create_directories(out / "images");
  std::vector<eval::ManifestEntry> rendered;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& e = manifest[i];
    try {
      std::string name;
      if (passthrough) {
        name = fmt::format("{:05}_{}", i, fs::path(e.path).filename().string());
        if (!fs::is_regular_file(e.path)) throw std::runtime_error("image file not found");
        fs::copy_file(e.path, out / "images" / name, fs::copy_options::overwrite_existing);
      } else {
        std::vector<Image> images;
        for (std::size_t k = 0; k < lights->size(); ++k) {
          const auto p = fs::path(e.path) / fmt::format("{}.png", k);
          if (!fs::exists(p)) throw std::runtime_error("stack image " + p.string() + " not found");
          images.push_back(read_image(p.string()));
        }
        const auto stack = photostereo::ImageStack::from_images(images);
        const auto rec = photostereo::recover_normals(stack, *lights);
        name = fmt::format("{:05}_{}.png", i, fs::path(e.path).filename().string());
        write_png((out / "images" / name).string(), chw_to_image(photostereo::render_invariant(rec.normals)), 16);
      }
      rendered.push_back({"images/" + name, e.subject_id, e.session, e.lens_tag});
    } catch (const std::exception& ex) {
      errors.push_back(fmt::format("sample {} ({}): {}", i, e.path, ex.what()));
    }
  }
  if (!errors.empty()) {
    for (const auto& m : errors) fmt::print(log, "error: {}\n", m);
    fmt::print(log, "{} of {} samples failed; no manifest written\n", errors.size(), manifest.size());
    return 1;
  }
  write_text(out / "manifest.txt", eval::format_manifest(rendered));
  fmt::print(log, "{} {} samples into {}\n", passthrough ? "copied" : "rendered", rendered.size(),
             (out / "images").string());
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) { return train_into(cfg, cfg.paths.out, log); }

int cmd_extract(const RunConfig& cfg, std::ostream& log) {
  auto model = load_model(cfg.paths.model);
  const auto manifest = eval::read_manifest(require_path(cfg.paths.manifest, "paths.manifest"));
  const auto binding = eval::bind_protocol(cfg.protocol, manifest);
  const auto t = extract_protocol(cfg, model, binding, manifest);
  match::Gallery gallery(false), probes(false);
  for (const auto& list : t.gallery)
    for (const auto& x : list) gallery.enroll(x);
  for (const auto& list : t.probes)
    for (const auto& x : list) probes.enroll(x);
  const fs::path out(cfg.paths.out);
  gallery.save((out / "templates" / "gallery").string());
  probes.save((out / "templates" / "probe").string());
  fmt::print(log, "extracted {} gallery and {} probe templates into {}\n", gallery.entries().size(),
             probes.entries().size(), (out / "templates").string());
  return 0;
}

int cmd_enroll(const RunConfig& cfg, std::ostream& log) {
  auto model = load_model(cfg.paths.model);
  const auto manifest = eval::read_manifest(require_path(cfg.paths.manifest, "paths.manifest"));
  const auto binding = eval::bind_protocol(cfg.protocol, manifest);
  match::Gallery gallery(cfg.protocol.gallery_per_subject == 1);
  const auto channels = model.net->config().in_channels;
  for (std::size_t k = 0; k < binding.subjects.size(); ++k) {
    for (auto i : binding.gallery[k]) {
      gallery.enroll(match::extract_template(*model.net, model.fingerprint, load_sample(manifest[i].path, channels),
                                             match::Role::gallery, binding.subjects[k], manifest[i].session));
    }
  }
  const auto dir = gallery_dir(cfg);
  gallery.save(dir);
  fmt::print(log, "enrolled {} templates of {} subjects into {}\n", gallery.entries().size(), binding.subjects.size(),
             dir);
  return 0;
}

int cmd_identify(const RunConfig& cfg, const std::string& probe_path, std::ostream& out) {
  const auto gallery = match::Gallery::load(gallery_dir(cfg));
  const auto probe = match::load_template(probe_path);
  const auto ranked = match::identify(probe, gallery, policy_of(cfg));
  std::string csv = "rank,subject_id,score\n";
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    csv += fmt::format("{},{},{:.9g}\n", k + 1, ranked[k].subject_id, ranked[k].score);
  }
  fs::create_directories(cfg.paths.out);
  write_text(fs::path(cfg.paths.out) / "identify.csv", csv);
  out << csv;
  return 0;
}

int cmd_verify(const RunConfig& cfg, const std::string& probe_path, const std::string& claimed,
               std::optional<double> threshold, std::ostream& out) {
  const auto gallery = match::Gallery::load(gallery_dir(cfg));
  const auto probe = match::load_template(probe_path);
  const double t = threshold.value_or(cfg.match.threshold);
  const auto v = match::verify(probe, claimed, gallery, policy_of(cfg), t);
  const auto line = fmt::format("decision={} score={:.9g} threshold={:.9g} metric={}\n", v.accept ? "accept" : "reject",
                                v.score, t, match::to_string(cfg.match.metric));
  fs::create_directories(cfg.paths.out);
  write_text(fs::path(cfg.paths.out) / "verify.txt", line);
  out << line;
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::optional<std::string>& scores_csv, std::ostream& out) {
  if (scores_csv) {
    const auto records = eval::read_scores_csv(*scores_csv);
    const auto polarity = polarity_of(policy_of(cfg));
    const auto scores = eval::to_score_set(records, polarity);
    const auto roc = eval::roc_curve(scores);
    const auto c = eval::cmc(eval::to_rankings(records, polarity));
    eval::emit_report(cfg.paths.out, roc, c);
    fmt::print(out, "genuine={} impostor={} {}\n", scores.genuine.size(), scores.impostor.size(),
               eval::format_summary({eval::eer(roc), c.rank1()}));
    return 0;
  }
  auto model = load_model(cfg.paths.model);
  evaluate_into(cfg, model, cfg.paths.out, out);
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& axis, std::ostream& out) {
  const fs::path root(cfg.paths.out);
  std::string csv = "axis,setting,eer,rank1\n";
  auto row = [&](const std::string& setting, const eval::Summary& s) {
    csv += fmt::format("{},{},{:.6f},{:.6f}\n", axis, setting, s.eer, s.rank1);
    fmt::print(out, "{:<14} {:<10} EER={:.6f} Rank1={:.6f}\n", axis, setting, s.eer, s.rank1);
  };
  if (axis == "feature_dim") {
    for (auto d : cfg.ablate_feature_dims) {
      auto c = cfg;
      c.net.feature_dim = d;
      const auto dir = root / fmt::format("feature_dim_{}", d);
      train_into(c, dir, out);
      auto model = load_model(dir.string());
      row(std::to_string(d), evaluate_into(c, model, dir, out));
    }
  } else if (axis == "metric" || axis == "alignment") {
    const auto model_dir = root / "model";
    train_into(cfg, model_dir, out);
    auto model = load_model(model_dir.string());
    if (axis == "metric") {
      for (auto m : {match::Metric::mse, match::Metric::cosine}) {
        auto c = cfg;
        c.match.metric = m;
        row(match::to_string(m), evaluate_into(c, model, root / ("metric_" + match::to_string(m)), out));
      }
    } else {
      for (auto a : {match::Alignment::grid, match::Alignment::center}) {
        auto c = cfg;
        c.match.alignment = a;
        row(match::to_string(a), evaluate_into(c, model, root / ("alignment_" + match::to_string(a)), out));
      }
    }
  } else {
    throw ContractViolation("unknown ablation axis \"" + axis + "\" (expected feature_dim, metric or alignment)");
  }
  fs::create_directories(root);
  write_text(root / "ablation.csv", csv);
  return 0;
}

}  // namespace fknet::cli
