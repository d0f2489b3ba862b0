#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fknet/net/fknetplus.hpp"

namespace fknet::net {

/// One labelled image, C x H x W with H, W at least the training crop.
struct Sample {
  Tensor<float> image;
  int label = 0;
  std::string subject;
  int session = 1;
};

struct LossPoint {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> trace;
  std::vector<std::string> train_subjects;
  std::vector<std::string> held_out_subjects;
};

using WarningSink = std::function<void(const std::string&)>;

/// Cross-entropy training of the classification head. Every class in [0, num_classes) needs
/// at least one sample. Each sample contributes one rotated copy per configured angle.
TrainResult train_closed_set(FKNetPlus<float>& net, const std::vector<Sample>& data, const TrainConfig& cfg);

/// Twin-branch cosine-embedding training on session-1 vs session-2 pairs. Subjects are taken
/// in order of first appearance; the first open_split fraction of subjects with both sessions
/// trains, the rest are reported as held out. Subjects missing a session are skipped with a warning.
TrainResult train_open_set(FKNetPlus<float>& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                           const WarningSink& warn = {});

/// Order-preserving subject split: the first round(ratio * n) subjects train.
std::pair<std::vector<std::string>, std::vector<std::string>> split_subjects(const std::vector<std::string>& subjects,
                                                                             double ratio);

/// CSV with header "epoch,step,loss".
void write_loss_trace(const std::string& path, const std::vector<LossPoint>& trace);

/// Stacks centre crops of the given images into an N x C x h x w batch.
Tensor<float> stack_crops(const std::vector<const Tensor<float>*>& images, HW crop);

}  // namespace fknet::net
