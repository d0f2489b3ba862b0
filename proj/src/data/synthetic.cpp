#include "fknet/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace fknet::synth {

Pattern make_pattern(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Pattern p;
  for (int k = 0; k < 4; ++k) {
    const double period = 8.0 + 16.0 * u(rng);
    const double dir = std::numbers::pi * u(rng);
    p.gratings.push_back({1.0 + 1.5 * u(rng), std::sin(dir) / period, std::cos(dir) / period, two_pi * u(rng)});
  }
  for (int k = 0; k < 5; ++k) {
    p.creases.push_back({3.0 + 3.0 * u(rng), -30.0 + 60.0 * u(rng), -45.0 + 90.0 * u(rng),
                         std::numbers::pi * (u(rng) - 0.5), 2.0 + 3.0 * u(rng)});
  }
  return p;
}

Surface evaluate(const Pattern& p, double y, double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Surface s{0.0, 0.0, 0.0};
  for (const auto& g : p.gratings) {
    const double arg = two_pi * (g.fy * y + g.fx * x) + g.phase;
    s.height += g.amplitude * std::sin(arg);
    const double c = g.amplitude * two_pi * std::cos(arg);
    s.dy += c * g.fy;
    s.dx += c * g.fx;
  }
  for (const auto& c : p.creases) {
    // signed distance to the crease line through (cy, cx) with direction angle
    const double ny = std::cos(c.angle), nx = -std::sin(c.angle);
    const double d = (y - c.cy) * ny + (x - c.cx) * nx;
    const double w2 = c.width * c.width;
    const double e = -c.depth * std::exp(-d * d / (2.0 * w2));
    s.height += e;
    const double de = -e * d / w2;
    s.dy += de * ny;
    s.dx += de * nx;
  }
  return s;
}

photostereo::NormalMap view_normals(const Pattern& p, net::HW size, double shift_y, double shift_x) {
  photostereo::NormalMap m;
  m.height = size.h;
  m.width = size.w;
  m.normals.resize(size.h * size.w);
  m.valid.assign(size.h * size.w, 1);
  const double oy = 0.5 * static_cast<double>(size.h - 1), ox = 0.5 * static_cast<double>(size.w - 1);
  for (std::size_t r = 0; r < size.h; ++r) {
    for (std::size_t c = 0; c < size.w; ++c) {
      const auto s = evaluate(p, static_cast<double>(r) - oy + shift_y, static_cast<double>(c) - ox + shift_x);
      const double norm = std::sqrt(s.dx * s.dx + s.dy * s.dy + 1.0);
      m.normals[r * size.w + c] = {-s.dx / norm, -s.dy / norm, 1.0 / norm};
    }
  }
  return m;
}

Tensor<float> render_view(const Pattern& p, net::HW size, double shift_y, double shift_x, double noise,
                          std::mt19937_64& rng) {
  auto img = photostereo::render_invariant(view_normals(p, size, shift_y, shift_x));
  if (noise > 0.0) {
    std::normal_distribution<double> n(0.0, noise);
    for (auto& v : img.data()) v = static_cast<float>(std::clamp(v + n(rng), 0.0, 1.0));
  }
  return img;
}

std::string subject_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03zu", index);
  return buf;
}

DatasetPlan plan_dataset(const SynthConfig& cfg) {
  DatasetPlan plan;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t s = 0; s < cfg.subjects; ++s) plan.patterns.push_back(make_pattern(rng()));
  auto add = [&](std::size_t s, int session, double jitter) {
    std::uniform_real_distribution<double> shift(-jitter, jitter);
    const double dy = shift(rng), dx = shift(rng);
    plan.views.push_back({s, session, dy, dx});
  };
  for (std::size_t s = 0; s < cfg.subjects; ++s)
    for (std::size_t k = 0; k < cfg.session1; ++k) add(s, 1, cfg.session1_jitter);
  for (std::size_t s = 0; s < cfg.subjects; ++s)
    for (std::size_t k = 0; k < cfg.session2; ++k) add(s, 2, cfg.session2_jitter);
  return plan;
}

std::vector<net::Sample> make_dataset(const SynthConfig& cfg) {
  const auto plan = plan_dataset(cfg);
  std::mt19937_64 noise_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<net::Sample> out;
  for (const auto& v : plan.views) {
    out.push_back({render_view(plan.patterns[v.subject], cfg.image, v.shift_y, v.shift_x, cfg.noise, noise_rng),
                   static_cast<int>(v.subject), subject_name(v.subject), v.session});
  }
  return out;
}

}  // namespace fknet::synth
