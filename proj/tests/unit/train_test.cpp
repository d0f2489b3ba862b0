#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fknet/data/synthetic.hpp"
#include "fknet/net/train.hpp"
#include "support/small_nets.hpp"

using namespace fknet;
using namespace fknet::net;

namespace {

synth::SynthConfig tiny_synth(std::size_t subjects, std::uint64_t seed) {
  synth::SynthConfig sc;
  sc.subjects = subjects;
  sc.session1 = 2;
  sc.session2 = 2;
  sc.image = {24, 24};
  sc.seed = seed;
  return sc;
}

TrainConfig quick_train(std::size_t epochs, double lr) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 4;
  tc.lr = lr;
  tc.lr_step = 100;
  tc.rotations = {0.0};
  tc.seed = 11;
  return tc;
}

std::vector<Sample> session(const std::vector<Sample>& data, int s) {
  std::vector<Sample> out;
  for (const auto& d : data)
    if (d.session == s) out.push_back(d);
  return out;
}

double epoch_mean(const std::vector<LossPoint>& trace, std::size_t epoch) {
  double acc = 0;
  std::size_t n = 0;
  for (const auto& p : trace)
    if (p.epoch == epoch) acc += p.loss, ++n;
  return acc / static_cast<double>(n);
}

std::vector<float> values(const Tensor<float>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Synthetic, DatasetLayout) {
  const auto data = synth::make_dataset(tiny_synth(3, 1));
  ASSERT_EQ(data.size(), 12u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(data[i].session, 1);
    EXPECT_EQ(data[i].label, static_cast<int>(i / 2));
    EXPECT_EQ(data[i].subject, synth::subject_name(i / 2));
  }
  for (std::size_t i = 6; i < 12; ++i) EXPECT_EQ(data[i].session, 2);
  EXPECT_EQ(data[0].image.shape(), (Shape{3, 24, 24}));
  for (const auto& s : data)
    for (float v : s.image.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  EXPECT_EQ(synth::subject_name(7), "s007");
}

TEST(Synthetic, SeedDeterminesDataset) {
  const auto a = synth::make_dataset(tiny_synth(2, 5));
  const auto b = synth::make_dataset(tiny_synth(2, 5));
  const auto c = synth::make_dataset(tiny_synth(2, 6));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(values(a[i].image), values(b[i].image));
  EXPECT_NE(values(a[0].image), values(c[0].image));
}

TEST(Synthetic, SurfaceGradientMatchesHeightDifferences) {
  const auto p = synth::make_pattern(3);
  const double h = 1e-5;
  for (double y : {-20.0, -3.5, 0.0, 11.0})
    for (double x : {-40.0, -7.25, 5.0, 33.0}) {
      const auto s = synth::evaluate(p, y, x);
      const double dy = (synth::evaluate(p, y + h, x).height - synth::evaluate(p, y - h, x).height) / (2 * h);
      const double dx = (synth::evaluate(p, y, x + h).height - synth::evaluate(p, y, x - h).height) / (2 * h);
      EXPECT_NEAR(s.dy, dy, 1e-5 * (1 + std::abs(dy)));
      EXPECT_NEAR(s.dx, dx, 1e-5 * (1 + std::abs(dx)));
    }
}

TEST(Synthetic, ShiftedViewIsTranslatedWindow) {
  const auto p = synth::make_pattern(4);
  const auto big = synth::view_normals(p, {21, 31}, 0.0, 0.0);
  // a 5x5 view centred on pixel (12, 18) of the big view
  const auto small = synth::view_normals(p, {5, 5}, 2.0, 3.0);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const auto& a = small.normals[r * 5 + c];
      const auto& b = big.normals[(r + 10) * 31 + (c + 16)];
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
      EXPECT_NEAR(std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]), 1.0, 1e-12);
      EXPECT_GT(a[2], 0.0);
    }
}

TEST(ClosedSet, ZeroLearningRateKeepsParameters) {
  FKNetPlus<float> model(fknet::testing::gradcheck_config(1));
  const auto before = model.parameters();
  std::vector<std::vector<float>> snapshot;
  for (const auto& p : before) snapshot.push_back(values(p.value()));
  auto data = session(synth::make_dataset(tiny_synth(4, 2)), 1);
  const auto result = train_closed_set(model, data, quick_train(2, 0.0));
  EXPECT_FALSE(result.trace.empty());
  const auto after = model.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(values(after[i].value()), snapshot[i]);
}

TEST(ClosedSet, SameSeedSameRun) {
  auto data = session(synth::make_dataset(tiny_synth(4, 2)), 1);
  FKNetPlus<float> a(fknet::testing::gradcheck_config(1)), b(fknet::testing::gradcheck_config(1));
  const auto ta = train_closed_set(a, data, quick_train(3, 0.05));
  const auto tb = train_closed_set(b, data, quick_train(3, 0.05));
  ASSERT_EQ(ta.trace.size(), tb.trace.size());
  for (std::size_t i = 0; i < ta.trace.size(); ++i) EXPECT_EQ(ta.trace[i].loss, tb.trace[i].loss);
  EXPECT_EQ(model_fingerprint(a), model_fingerprint(b));
}

TEST(ClosedSet, LossDecreases) {
  auto data = session(synth::make_dataset(tiny_synth(4, 3)), 1);
  FKNetPlus<float> model(fknet::testing::gradcheck_config(2));
  auto tc = quick_train(12, 0.05);
  const auto r = train_closed_set(model, data, tc);
  EXPECT_LT(epoch_mean(r.trace, 11), epoch_mean(r.trace, 0));
  for (const auto& p : r.trace) EXPECT_TRUE(std::isfinite(p.loss));
}

TEST(ClosedSet, RejectsBadInputs) {
  FKNetPlus<float> model(fknet::testing::gradcheck_config(1));
  auto data = session(synth::make_dataset(tiny_synth(3, 4)), 1);
  // 4 classes but only labels 0..2 present
  try {
    train_closed_set(model, data, quick_train(1, 0.01));
    FAIL() << "expected an empty-class error";
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("class 3"), std::string::npos);
  }
  auto bad_label = data;
  bad_label[0].label = 9;
  EXPECT_THROW(train_closed_set(model, bad_label, quick_train(1, 0.01)), ContractViolation);
  auto small = synth::make_dataset(tiny_synth(4, 4));
  small[0].image = Tensor<float>({3, 10, 10});
  EXPECT_THROW(train_closed_set(model, small, quick_train(1, 0.01)), ContractViolation);
}

TEST(OpenSet, SplitAndWarnings) {
  auto data = synth::make_dataset(tiny_synth(6, 5));
  // drop subject s002's session-2 samples
  std::vector<Sample> partial;
  for (const auto& s : data)
    if (!(s.subject == "s002" && s.session == 2)) partial.push_back(s);
  FKNetPlus<float> model(fknet::testing::gradcheck_config(3));
  auto tc = quick_train(2, 0.01);
  tc.regime = Regime::open_set;
  tc.margin = 0.0;
  std::vector<std::string> warnings;
  const auto r = train_open_set(model, partial, tc, [&](const std::string& w) { warnings.push_back(w); });
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("s002"), std::string::npos);
  EXPECT_EQ(r.train_subjects, (std::vector<std::string>{"s000", "s001", "s003", "s004"}));
  EXPECT_EQ(r.held_out_subjects, (std::vector<std::string>{"s005"}));
  EXPECT_FALSE(r.trace.empty());
}

TEST(OpenSet, LossStaysInRange) {
  auto data = synth::make_dataset(tiny_synth(5, 6));
  FKNetPlus<float> model(fknet::testing::gradcheck_config(4));
  auto tc = quick_train(3, 0.02);
  tc.regime = Regime::open_set;
  tc.margin = 1.0;
  const auto r = train_open_set(model, data, tc);
  // genuine terms are 1 - cos in [0, 2]; impostor terms max(0, cos - 1) vanish
  for (const auto& p : r.trace) {
    EXPECT_GE(p.loss, 0.0);
    EXPECT_LE(p.loss, 2.0 + 1e-6);
  }
}

TEST(Split, RoundsAndPreservesOrder) {
  const std::vector<std::string> s{"a", "b", "c", "d", "e"};
  const auto [train, held] = split_subjects(s, 0.8);
  EXPECT_EQ(train, (std::vector<std::string>{"a", "b", "c", "d"}));
  EXPECT_EQ(held, (std::vector<std::string>{"e"}));
  EXPECT_THROW(split_subjects(s, 0.0), ContractViolation);
  EXPECT_THROW(split_subjects(s, 1.5), ContractViolation);
}

TEST(LossTrace, CsvFormat) {
  const auto path = (std::filesystem::temp_directory_path() / "fknet_trace.csv").string();
  write_loss_trace(path, {{0, 0, 1.5}, {0, 1, 0.25}});
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "epoch,step,loss\n0,0,1.5\n0,1,0.25\n");
  std::filesystem::remove(path);
}
