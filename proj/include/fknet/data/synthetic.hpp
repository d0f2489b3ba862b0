#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fknet/net/train.hpp"
#include "fknet/photostereo/photostereo.hpp"

namespace fknet::synth {

/// Analytic knuckle-like height field: oriented gratings plus Gaussian crease ridges.
struct Pattern {
  struct Grating {
    double amplitude, fy, fx, phase;
  };
  struct Crease {
    double depth, cy, cx, angle, width;
  };
  std::vector<Grating> gratings;
  std::vector<Crease> creases;
};

Pattern make_pattern(std::uint64_t seed);

/// Height and gradient at pattern coordinates (y, x).
struct Surface {
  double height, dy, dx;
};
Surface evaluate(const Pattern& p, double y, double x);

/// Normals of an H x W view whose centre sits at pattern coordinates (shift_y, shift_x).
photostereo::NormalMap view_normals(const Pattern& p, net::HW size, double shift_y, double shift_x);

/// Normal-encoded 3 x H x W image with additive Gaussian noise, clamped to [0, 1].
Tensor<float> render_view(const Pattern& p, net::HW size, double shift_y, double shift_x, double noise,
                          std::mt19937_64& rng);

struct SynthConfig {
  std::size_t subjects = 12;
  std::size_t session1 = 4;  // samples per subject
  std::size_t session2 = 4;
  net::HW image{64, 96};
  double session1_jitter = 2.0;  // max |shift| in pixels
  double session2_jitter = 8.0;
  double noise = 0.02;
  std::uint64_t seed = 0;
};

/// Where one sample's view sits on its subject's pattern.
struct ViewSpec {
  std::size_t subject = 0;
  int session = 1;
  double shift_y = 0.0;
  double shift_x = 0.0;
};

/// Patterns per subject and the ordered view list (session-1 views first), drawn from cfg.seed.
struct DatasetPlan {
  std::vector<Pattern> patterns;
  std::vector<ViewSpec> views;
};
DatasetPlan plan_dataset(const SynthConfig& cfg);

/// Subjects are named s000, s001, ... with label equal to their index; session-1 samples come first.
std::vector<net::Sample> make_dataset(const SynthConfig& cfg);

std::string subject_name(std::size_t index);

}  // namespace fknet::synth
