#include <fmt/format.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "fknet/cli/commands.hpp"
#include "fknet/eval/report.hpp"
#include "fknet/io/binary_io.hpp"
#include "fknet/io/image.hpp"
#include "fknet/match/template.hpp"
#include "fknet/photostereo/photostereo.hpp"

namespace {

using namespace fknet;
using namespace fknet::cli;
namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fknet_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file_bytes(p.string());
  return {b.begin(), b.end()};
}

void spit(const fs::path& p, const std::string& text) {
  write_file_bytes(p.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// 16x16 training crop, 24x24 test crop, D = 6.
constexpr const char* kTinyConfig = R"({
  "seed": 3,
  "net": {"input_hw": [16, 16], "test_hw": [24, 24], "feature_dim": 6, "stem_channels": 4,
          "stage2_blocks": 1, "stage2_width": 8, "stage3_blocks": 1, "stage3_width": 8, "head_kernel": [2, 2]},
  "train": {"epochs": 1, "batch_size": 16, "rotations": [0]},
  "synth": {"subjects": 6, "session1": 2, "session2": 2, "image": [24, 24], "stacks": false},
  "protocol": {"name": "tiny", "subjects": 6, "gallery_per_subject": 1, "probes_per_subject": 2, "mode": "closed_set"}
})";

RunConfig tiny_config(const fs::path& out) {
  auto cfg = parse_run_config(kTinyConfig);
  cfg.paths.out = out.string();
  return cfg;
}

// Synthesises a tiny dataset and trains on it; returns the config pointing at both.
RunConfig tiny_pipeline(const fs::path& root) {
  std::ostringstream log;
  auto cfg = tiny_config(root / "data");
  EXPECT_EQ(cmd_synth(cfg, log), 0);
  cfg.paths.manifest = (root / "data" / "manifest.txt").string();
  cfg.paths.out = (root / "model").string();
  EXPECT_EQ(cmd_train(cfg, log), 0);
  cfg.paths.model = cfg.paths.out;
  cfg.paths.out = (root / "run").string();
  return cfg;
}

TEST(RunConfigParse, DefaultsAndSeedPropagation) {
  const auto cfg = parse_run_config(R"({"seed": 42})");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.net.seed, 42u);
  EXPECT_EQ(cfg.train.seed, 42u);
  EXPECT_EQ(cfg.synth.data.seed, 42u);
  EXPECT_EQ(cfg.net.feature_dim, 600u);
  EXPECT_EQ(cfg.protocol.name, "knuckle3d");
  EXPECT_EQ(cfg.match.metric, match::Metric::cosine);
}

TEST(RunConfigParse, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_run_config(R"({"sede": 1})"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"net": {"feature_dims": 8}})"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"net": {"seed": 8}})"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"net": {"padding": "reflect"}})"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"train": {"regime": "semi"}})"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"seed": "one"})"), FormatError);
  EXPECT_THROW(parse_run_config("{"), FormatError);
  EXPECT_THROW(parse_run_config(R"({"protocol": "knuckle4d"})"), std::exception);
}

TEST(RunConfigParse, RelativePathsResolveAgainstConfigDir) {
  const auto cfg = parse_run_config(R"({"paths": {"manifest": "data/m.txt", "out": "/abs/out"}})", "/cfg/dir");
  EXPECT_EQ(cfg.paths.manifest, "/cfg/dir/data/m.txt");
  EXPECT_EQ(cfg.paths.out, "/abs/out");
}

TEST(RunConfigParse, OverridesReplaceFileValues) {
  auto cfg = parse_run_config(R"({"seed": 1, "match": {"metric": "cosine"}})");
  Overrides o;
  o.seed = 9;
  o.metric = "mse";
  o.feature_dim = 800;
  o.alignment = "center";
  o.protocol = "palmprint";
  o.out = "elsewhere";
  apply_overrides(cfg, o);
  EXPECT_EQ(cfg.net.seed, 9u);
  EXPECT_EQ(cfg.train.seed, 9u);
  EXPECT_EQ(cfg.match.metric, match::Metric::mse);
  EXPECT_EQ(cfg.net.feature_dim, 800u);
  EXPECT_EQ(cfg.match.alignment, match::Alignment::center);
  EXPECT_EQ(cfg.protocol.name, "palmprint");
  EXPECT_EQ(cfg.paths.out, "elsewhere");
  o = {};
  o.metric = "hamming";
  EXPECT_THROW(apply_overrides(cfg, o), std::exception);
}

TEST(RunConfigParse, ModelConfigRoundTrip) {
  auto net = tiny_config("x").net;
  net.num_classes = 3;
  net.padding_mode = PaddingMode::valid;
  std::vector<std::string> classes;
  const auto back = net_config_from_json(net_config_to_json(net, {"a", "b", "c"}), &classes);
  EXPECT_EQ(back.input_hw.h, 16u);
  EXPECT_EQ(back.test_hw.w, 24u);
  EXPECT_EQ(back.num_classes, 3u);
  EXPECT_EQ(back.feature_dim, 6u);
  EXPECT_EQ(back.padding_mode, PaddingMode::valid);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(classes, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Preprocess, SphereStackMatchesNormalEncoding) {
  const auto root = scratch_dir("sphere");
  constexpr std::size_t n = 41;
  photostereo::NormalMap normals{n, n, std::vector<photostereo::Vec3>(n * n, {0, 0, 1}), std::vector<std::uint8_t>(n * n, 1)};
  const double r = 0.45 * n, c = 0.5 * (n - 1);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = (x - c) / r, dy = (y - c) / r, rr = dx * dx + dy * dy;
      if (rr < 1.0) normals.normals[y * n + x] = {dx, -dy, std::sqrt(1.0 - rr)};
    }
  std::vector<photostereo::Vec3> dirs;
  for (int k = 0; k < 6; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / 6.0, s = std::sin(0.6);
    dirs.push_back({s * std::cos(phi), s * std::sin(phi), std::cos(0.6)});
  }
  const auto lights = photostereo::LightSet::from_unnormalized(dirs);
  const photostereo::AlbedoMap albedo{n, n, std::vector<double>(n * n, 0.7)};
  const auto stack = photostereo::render_lambertian(normals, albedo, lights);
  fs::create_directories(root / "in" / "ball");
  for (std::size_t k = 0; k < stack.images.size(); ++k) {
    Image img(n, n, 1);
    for (std::size_t p = 0; p < n * n; ++p) img.values[p] = static_cast<float>(stack.images[k][p]);
    write_png((root / "in" / "ball" / (std::to_string(k) + ".png")).string(), img, 16);
  }
  std::string lights_txt;
  for (const auto& d : lights.directions()) lights_txt += fmt::format("{:.17g} {:.17g} {:.17g}\n", d[0], d[1], d[2]);
  spit(root / "in" / "lights.txt", lights_txt);
  spit(root / "in" / "manifest.txt", "ball,s0,1,synthetic\n");

  RunConfig cfg;
  cfg.paths.manifest = (root / "in" / "manifest.txt").string();
  cfg.paths.lights = (root / "in" / "lights.txt").string();
  cfg.paths.out = (root / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cmd_preprocess(cfg, false, log), 0) << log.str();
  EXPECT_EQ(slurp(root / "out" / "manifest.txt"), "images/00000_ball.png,s0,1,synthetic\n");
  const auto out = read_image((root / "out" / "images" / "00000_ball.png").string());
  ASSERT_EQ(out.channels, 3u);
  std::size_t checked = 0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const auto& nv = normals.normals[y * n + x];
      bool lit = true;
      for (const auto& l : lights.directions()) lit = lit && nv[0] * l[0] + nv[1] * l[1] + nv[2] * l[2] > 0.05;
      if (!lit) continue;
      ++checked;
      for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_NEAR(out.at(y, x, ch), (nv[ch] + 1.0) / 2.0, 2e-3);
    }
  EXPECT_GT(checked, n * n / 3);
}

TEST(Preprocess, PassthroughCopiesBytes) {
  const auto root = scratch_dir("pass");
  fs::create_directories(root / "in");
  Image img(5, 7, 3, 0.25f);
  img.at(2, 3, 1) = 0.9f;
  write_png((root / "in" / "a.png").string(), img, 8);
  spit(root / "in" / "manifest.txt", "a.png,s1,2,rgb\n");
  RunConfig cfg;
  cfg.paths.manifest = (root / "in" / "manifest.txt").string();
  cfg.paths.out = (root / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cmd_preprocess(cfg, true, log), 0);
  EXPECT_EQ(slurp(root / "out" / "images" / "00000_a.png"), slurp(root / "in" / "a.png"));
  EXPECT_EQ(slurp(root / "out" / "manifest.txt"), "images/00000_a.png,s1,2,rgb\n");
}

TEST(Preprocess, EmptyManifestWritesNothing) {
  const auto root = scratch_dir("empty");
  fs::create_directories(root);
  spit(root / "manifest.txt", "# nothing here\n");
  RunConfig cfg;
  cfg.paths.manifest = (root / "manifest.txt").string();
  cfg.paths.out = (root / "out").string();
  std::ostringstream log;
  EXPECT_THROW(cmd_preprocess(cfg, true, log), ContractViolation);
  EXPECT_FALSE(fs::exists(root / "out"));
}

TEST(Preprocess, MissingFilesAreReportedPerSample) {
  const auto root = scratch_dir("missing");
  fs::create_directories(root / "in" / "ok");
  for (int k = 0; k < 3; ++k) write_png((root / "in" / "ok" / (std::to_string(k) + ".png")).string(), Image(4, 4, 1, 0.5f), 16);
  fs::create_directories(root / "in" / "partial");
  write_png((root / "in" / "partial" / "0.png").string(), Image(4, 4, 1, 0.5f), 16);
  spit(root / "in" / "lights.txt", "0 0 1\n1 0 1\n0 1 1\n");
  spit(root / "in" / "manifest.txt", "ok,s0,1,x\npartial,s1,1,x\nnowhere,s2,1,x\n");
  RunConfig cfg;
  cfg.paths.manifest = (root / "in" / "manifest.txt").string();
  cfg.paths.lights = (root / "in" / "lights.txt").string();
  cfg.paths.out = (root / "out").string();
  std::ostringstream log;
  EXPECT_EQ(cmd_preprocess(cfg, false, log), 1);
  EXPECT_NE(log.str().find("sample 1"), std::string::npos);
  EXPECT_NE(log.str().find("sample 2"), std::string::npos);
  EXPECT_EQ(log.str().find("sample 0"), std::string::npos);
  EXPECT_FALSE(fs::exists(root / "out" / "manifest.txt"));
}

TEST(Preprocess, RankDeficientLightsFail) {
  const auto root = scratch_dir("rank");
  fs::create_directories(root);
  spit(root / "lights.txt", "1 0 0\n0 1 0\n0.6 0.8 0\n");
  spit(root / "manifest.txt", "a,s0,1,x\n");
  RunConfig cfg;
  cfg.paths.manifest = (root / "manifest.txt").string();
  cfg.paths.lights = (root / "lights.txt").string();
  cfg.paths.out = (root / "out").string();
  std::ostringstream log;
  EXPECT_THROW(cmd_preprocess(cfg, false, log), photostereo::RankDeficientLights);
  EXPECT_FALSE(fs::exists(root / "out" / "manifest.txt"));
}

TEST(Synth, StackModeWritesLightsAndStacks) {
  const auto root = scratch_dir("stacks");
  auto cfg = tiny_config(root);
  cfg.synth.stacks = true;
  cfg.synth.data.subjects = 2;
  cfg.synth.data.session1 = 1;
  cfg.synth.data.session2 = 1;
  std::ostringstream log;
  ASSERT_EQ(cmd_synth(cfg, log), 0);
  EXPECT_EQ(slurp(root / "manifest.txt"),
            "samples/s000_1_0,s000,1,synthetic\nsamples/s001_1_0,s001,1,synthetic\n"
            "samples/s000_2_0,s000,2,synthetic\nsamples/s001_2_0,s001,2,synthetic\n");
  const auto lights = photostereo::LightSet::load((root / "lights.txt").string());
  EXPECT_EQ(lights.size(), 6u);
  EXPECT_EQ(lights.rank(), 3);
  for (int k = 0; k < 6; ++k) {
    const auto img = read_image((root / "samples" / "s001_2_0" / (std::to_string(k) + ".png")).string());
    EXPECT_EQ(img.height, 24u);
    EXPECT_EQ(img.width, 24u);
    EXPECT_EQ(img.channels, 1u);
  }
}

TEST(Synth, SameSeedSameBytesDifferentSeedDifferentBytes) {
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b"), c = scratch_dir("det_c");
  std::ostringstream log;
  ASSERT_EQ(cmd_synth(tiny_config(a), log), 0);
  ASSERT_EQ(cmd_synth(tiny_config(b), log), 0);
  auto other = tiny_config(c);
  other.seed = 4;
  other.propagate_seed();
  ASSERT_EQ(cmd_synth(other, log), 0);
  const auto f = fs::path("samples") / "s003_2_1.png";
  EXPECT_EQ(slurp(a / f), slurp(b / f));
  EXPECT_NE(slurp(a / f), slurp(c / f));
}

TEST(Pipeline, RerunGivesIdenticalArtifacts) {
  const auto a = scratch_dir("rerun_a"), b = scratch_dir("rerun_b");
  auto ca = tiny_pipeline(a), cb = tiny_pipeline(b);
  std::ostringstream out;
  ASSERT_EQ(cmd_evaluate(ca, std::nullopt, out), 0);
  ASSERT_EQ(cmd_evaluate(cb, std::nullopt, out), 0);
  for (const auto* f : {"model.fkw", "model.cfg", "loss.csv"}) EXPECT_EQ(slurp(a / "model" / f), slurp(b / "model" / f)) << f;
  for (const auto* f : {"scores.csv", "roc.csv", "cmc.csv", "summary.txt", "roc.svg", "cmc.svg"}) {
    EXPECT_EQ(slurp(a / "run" / f), slurp(b / "run" / f)) << f;
  }
  ASSERT_EQ(cmd_evaluate(ca, std::nullopt, out), 0);
  EXPECT_EQ(slurp(a / "run" / "scores.csv"), slurp(b / "run" / "scores.csv"));
}

TEST(Pipeline, EnrollIdentifyVerify) {
  const auto root = scratch_dir("idv");
  auto cfg = tiny_pipeline(root);
  std::ostringstream log, out;
  ASSERT_EQ(cmd_enroll(cfg, log), 0);
  ASSERT_EQ(cmd_extract(cfg, log), 0);
  const auto gallery = match::Gallery::load((root / "run" / "gallery").string());
  EXPECT_EQ(gallery.entries().size(), 6u);
  EXPECT_TRUE(gallery.closed_set());
  const auto probe = (root / "run" / "templates" / "probe" / "0.fkt").string();
  ASSERT_EQ(cmd_identify(cfg, probe, out), 0);
  const auto csv = slurp(root / "run" / "identify.csv");
  EXPECT_EQ(csv.rfind("rank,subject_id,score\n1,", 0), 0u);
  EXPECT_EQ(count_lines(csv), 7u);
  ASSERT_EQ(cmd_verify(cfg, probe, "s000", -1.0, out), 0);
  EXPECT_EQ(slurp(root / "run" / "verify.txt").rfind("decision=accept", 0), 0u);
  ASSERT_EQ(cmd_verify(cfg, probe, "s000", 1.01, out), 0);
  EXPECT_EQ(slurp(root / "run" / "verify.txt").rfind("decision=reject", 0), 0u);
}

TEST(Pipeline, ForeignModelTemplateIsRejectedWithHint) {
  const auto a = scratch_dir("foreign_a");
  auto cfg = tiny_pipeline(a);
  std::ostringstream log, out;
  ASSERT_EQ(cmd_enroll(cfg, log), 0);
  auto other = tiny_config(a / "other");
  other.seed = 11;
  other.propagate_seed();
  other.paths.manifest = cfg.paths.manifest;
  other.paths.out = (a / "other_model").string();
  ASSERT_EQ(cmd_train(other, log), 0);
  other.paths.model = other.paths.out;
  other.paths.out = (a / "other_run").string();
  ASSERT_EQ(cmd_extract(other, log), 0);
  try {
    cmd_identify(cfg, (a / "other_run" / "templates" / "probe" / "0.fkt").string(), out);
    FAIL() << "expected a fingerprint mismatch";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("same checkpoint"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, MissingModelNamesTheRemedy) {
  auto cfg = tiny_config(scratch_dir("nomodel"));
  cfg.paths.model = scratch_dir("nomodel_model").string();
  fs::create_directories(cfg.paths.model);
  std::ostringstream log;
  try {
    cmd_enroll(cfg, log);
    FAIL() << "expected an error";
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("run train first"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, KnuckleProtocolEmitsExactCounts) {
  const auto root = scratch_dir("knuckle3d");
  auto cfg = tiny_config(root / "data");
  cfg.synth.data.subjects = 190;
  cfg.synth.data.session1 = 1;
  cfg.synth.data.session2 = 6;
  cfg.protocol = eval::ProtocolSpec::knuckle3d();
  std::ostringstream log, out;
  ASSERT_EQ(cmd_synth(cfg, log), 0);
  cfg.paths.manifest = (root / "data" / "manifest.txt").string();
  cfg.paths.out = (root / "model").string();
  ASSERT_EQ(cmd_train(cfg, log), 0);
  cfg.paths.model = cfg.paths.out;
  cfg.paths.out = (root / "run").string();
  ASSERT_EQ(cmd_evaluate(cfg, std::nullopt, out), 0);
  EXPECT_EQ(out.str().rfind("genuine=1140 impostor=215460 EER=", 0), 0u) << out.str();
  const auto records = eval::read_scores_csv((root / "run" / "scores.csv").string());
  EXPECT_EQ(records.size(), 1140u + 215460u);
  EXPECT_EQ(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.genuine; }), 1140);
}

TEST(Evaluate, ScoresModeMatchesProtocolMode) {
  const auto root = scratch_dir("scores_mode");
  auto cfg = tiny_pipeline(root);
  std::ostringstream out;
  ASSERT_EQ(cmd_evaluate(cfg, std::nullopt, out), 0);
  const auto summary = slurp(root / "run" / "summary.txt");
  cfg.paths.out = (root / "again").string();
  ASSERT_EQ(cmd_evaluate(cfg, (root / "run" / "scores.csv").string(), out), 0);
  EXPECT_EQ(slurp(root / "again" / "summary.txt"), summary);
  EXPECT_EQ(slurp(root / "again" / "roc.csv"), slurp(root / "run" / "roc.csv"));
}

TEST(Ablate, OneRowPerSetting) {
  const auto root = scratch_dir("ablate");
  auto cfg = tiny_pipeline(root);
  cfg.paths.out = (root / "abl").string();
  cfg.ablate_feature_dims = {4, 6};
  std::ostringstream out;
  ASSERT_EQ(cmd_ablate(cfg, "metric", out), 0);
  auto csv = slurp(root / "abl" / "ablation.csv");
  EXPECT_EQ(count_lines(csv), 3u);
  EXPECT_NE(csv.find("\nmetric,mse,"), std::string::npos);
  EXPECT_NE(csv.find("\nmetric,cosine,"), std::string::npos);
  ASSERT_EQ(cmd_ablate(cfg, "feature_dim", out), 0);
  csv = slurp(root / "abl" / "ablation.csv");
  EXPECT_EQ(count_lines(csv), 3u);
  EXPECT_NE(csv.find("\nfeature_dim,4,"), std::string::npos);
  EXPECT_NE(csv.find("\nfeature_dim,6,"), std::string::npos);
  ASSERT_EQ(cmd_ablate(cfg, "alignment", out), 0);
  csv = slurp(root / "abl" / "ablation.csv");
  EXPECT_NE(csv.find("\nalignment,grid,"), std::string::npos);
  EXPECT_NE(csv.find("\nalignment,center,"), std::string::npos);
  EXPECT_THROW(cmd_ablate(cfg, "depth", out), ContractViolation);
}

TEST(Ablate, DefaultFeatureDimSweep) {
  const auto cfg = parse_run_config("{}");
  EXPECT_EQ(cfg.ablate_feature_dims, (std::vector<std::size_t>{200, 400, 600, 800, 1000}));
}

}  // namespace
