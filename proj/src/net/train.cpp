#include "fknet/net/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <tuple>

#include "fknet/ndtensor/optim.hpp"
#include "fknet/net/augment.hpp"

namespace fknet::net {

namespace {

void check_image(const Sample& s, const NetConfig& cfg, std::size_t index) {
  const auto& sh = s.image.shape();
  if (sh.size() != 3 || sh[0] != cfg.in_channels || sh[1] < cfg.input_hw.h || sh[2] < cfg.input_hw.w) {
    throw ContractViolation("sample " + std::to_string(index) + " (" + s.subject + ") has shape " + shape_str(sh) +
                            "; expected " + std::to_string(cfg.in_channels) + " x H x W with H >= " +
                            std::to_string(cfg.input_hw.h) + ", W >= " + std::to_string(cfg.input_hw.w));
  }
}

// Batches of at least two (train-mode BatchNorm over a 1x1 head grid needs two values);
// a trailing singleton joins the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  if (n < 2) throw ContractViolation("training needs at least two examples per epoch");
  batch = std::max<std::size_t>(batch, 2);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

// Rotated training-crop copies, one per angle.
std::vector<Tensor<float>> augmented_crops(const Tensor<float>& image, const std::vector<double>& angles, HW crop) {
  std::vector<Tensor<float>> out;
  for (double a : angles) out.push_back(center_crop(rotate_image(image, a), crop.h, crop.w));
  return out;
}

std::vector<double> angle_set(const TrainConfig& cfg) {
  if (cfg.rotations.empty()) return {0.0};
  return cfg.rotations;
}

Tensor<float> stack(const std::vector<const Tensor<float>*>& parts) {
  const auto& s = parts.front()->shape();
  Tensor<float> out({parts.size(), s[0], s[1], s[2]});
  const auto n = parts.front()->numel();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i]->shape() != s) throw ContractViolation("cannot batch images of different shapes");
    std::copy_n(parts[i]->raw(), n, out.raw() + i * n);
  }
  return out;
}

}  // namespace

Tensor<float> stack_crops(const std::vector<const Tensor<float>*>& images, HW crop) {
  std::vector<Tensor<float>> crops;
  crops.reserve(images.size());
  for (const auto* img : images) crops.push_back(center_crop(*img, crop.h, crop.w));
  std::vector<const Tensor<float>*> ptrs;
  for (const auto& c : crops) ptrs.push_back(&c);
  return stack(ptrs);
}

TrainResult train_closed_set(FKNetPlus<float>& net, const std::vector<Sample>& data, const TrainConfig& cfg) {
  const auto& nc = net.config();
  std::vector<std::size_t> per_class(nc.num_classes, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_image(data[i], nc, i);
    if (data[i].label < 0 || static_cast<std::size_t>(data[i].label) >= nc.num_classes) {
      throw ContractViolation("sample " + std::to_string(i) + " has label " + std::to_string(data[i].label) +
                              " outside [0, " + std::to_string(nc.num_classes) + ")");
    }
    ++per_class[static_cast<std::size_t>(data[i].label)];
  }
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] == 0) throw ContractViolation("class " + std::to_string(c) + " has no training samples");
  }

  std::vector<Tensor<float>> items;
  std::vector<int> labels;
  const auto angles = angle_set(cfg);
  for (const auto& s : data) {
    for (auto& crop : augmented_crops(s.image, angles, nc.input_hw)) {
      items.push_back(std::move(crop));
      labels.push_back(s.label);
    }
  }
  const auto ranges = batch_ranges(items.size(), cfg.batch_size);

  Sgd<float> opt(net.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);
  const StepDecay schedule{cfg.lr, cfg.lr_decay, cfg.lr_step};
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(items.size());
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(schedule.lr(epoch));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto& [b, e] : ranges) {
      std::vector<const Tensor<float>*> parts;
      std::vector<int> targets;
      for (std::size_t k = b; k < e; ++k) {
        parts.push_back(&items[order[k]]);
        targets.push_back(labels[order[k]]);
      }
      opt.zero_grad();
      auto loss = cross_entropy_loss(net.forward_logits(Var<float>(stack(parts)), Mode::train), targets);
      backward(loss);
      opt.step();
      const double v = loss.value()[0];
      if (!std::isfinite(v)) throw std::runtime_error("training diverged: non-finite loss at step " + std::to_string(step));
      result.trace.push_back({epoch, step++, v});
    }
  }
  return result;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_subjects(const std::vector<std::string>& subjects,
                                                                             double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ContractViolation("open-set split ratio must lie in (0, 1]");
  const auto n_train = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(subjects.size())));
  std::vector<std::string> train(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::string> held(subjects.begin() + static_cast<std::ptrdiff_t>(n_train), subjects.end());
  return {train, held};
}

TrainResult train_open_set(FKNetPlus<float>& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                           const WarningSink& warn) {
  const auto& nc = net.config();
  std::vector<std::string> order_seen;
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_subject;
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_image(data[i], nc, i);
    auto [it, fresh] = by_subject.try_emplace(data[i].subject);
    if (fresh) order_seen.push_back(data[i].subject);
    if (data[i].session == 1) {
      it->second.first.push_back(i);
    } else if (data[i].session == 2) {
      it->second.second.push_back(i);
    }
  }
  std::vector<std::string> eligible;
  for (const auto& s : order_seen) {
    const auto& [s1, s2] = by_subject[s];
    if (s1.empty() || s2.empty()) {
      if (warn) warn("subject " + s + " lacks " + (s1.empty() ? "session 1" : "session 2") + " samples; excluded");
      continue;
    }
    eligible.push_back(s);
  }
  TrainResult result;
  std::tie(result.train_subjects, result.held_out_subjects) = split_subjects(eligible, cfg.open_split);
  if (result.train_subjects.size() < 2) {
    throw ContractViolation("open-set training needs at least two subjects with both sessions");
  }

  const auto angles = angle_set(cfg);
  std::map<std::size_t, std::vector<Tensor<float>>> crops;  // sample -> one crop per angle
  for (const auto& s : result.train_subjects) {
    for (auto i : by_subject[s].first) crops[i] = augmented_crops(data[i].image, angles, nc.input_hw);
    for (auto i : by_subject[s].second) crops[i] = augmented_crops(data[i].image, angles, nc.input_hw);
  }

  Sgd<float> opt(net.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);
  const StepDecay schedule{cfg.lr, cfg.lr_decay, cfg.lr_step};
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&](const std::vector<std::size_t>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  auto angle = [&] { return std::uniform_int_distribution<std::size_t>(0, angles.size() - 1)(rng); };

  struct Pair {
    const Tensor<float>* a;
    const Tensor<float>* b;
    PairLabel label;
  };
  std::size_t step = 0;
  const auto n_subjects = result.train_subjects.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(schedule.lr(epoch));
    std::vector<Pair> pairs;
    for (std::size_t si = 0; si < n_subjects; ++si) {
      const auto& [s1, s2] = by_subject[result.train_subjects[si]];
      for (auto a : s1) {
        pairs.push_back({&crops[a][angle()], &crops[pick(s2)][angle()], PairLabel::same});
        auto other = std::uniform_int_distribution<std::size_t>(0, n_subjects - 2)(rng);
        if (other >= si) ++other;
        const auto& neg = by_subject[result.train_subjects[other]].second;
        pairs.push_back({&crops[a][angle()], &crops[pick(neg)][angle()], PairLabel::different});
      }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (const auto& [b, e] : batch_ranges(pairs.size(), cfg.batch_size)) {
      std::vector<const Tensor<float>*> left, right;
      std::vector<PairLabel> labels;
      for (std::size_t k = b; k < e; ++k) {
        left.push_back(pairs[k].a);
        right.push_back(pairs[k].b);
        labels.push_back(pairs[k].label);
      }
      opt.zero_grad();
      auto fa = net.features(net.collab(Var<float>(stack(left)), Mode::train), Mode::train);
      auto fb = net.features(net.collab(Var<float>(stack(right)), Mode::train), Mode::train);
      auto loss = cosine_embedding_loss(fa, fb, labels, cfg.margin);
      backward(loss);
      opt.step();
      const double v = loss.value()[0];
      if (!std::isfinite(v)) throw std::runtime_error("training diverged: non-finite loss at step " + std::to_string(step));
      result.trace.push_back({epoch, step++, v});
    }
  }
  return result;
}

void write_loss_trace(const std::string& path, const std::vector<LossPoint>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss trace to " + path);
  out << "epoch,step,loss\n";
  char buf[64];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%.9g", p.loss);
    out << p.epoch << ',' << p.step << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("failed while writing " + path);
}

}  // namespace fknet::net
