#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fknet/eval/metrics.hpp"
#include "fknet/photostereo/photostereo.hpp"

namespace fknet::testing {

inline photostereo::Vec3 unit(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  return {x / n, y / n, z / n};
}

inline photostereo::LightSet six_lights() {
  return photostereo::LightSet({unit(0.3, 0.1, 1), unit(-0.35, 0.2, 1), unit(0.05, -0.4, 1), unit(0.4, 0.4, 1),
                                unit(-0.3, -0.3, 1), unit(0.0, 0.45, 1)});
}

/// Clamped Lambertian shading, written independently of the library renderer.
inline photostereo::ImageStack shade(const std::vector<photostereo::Vec3>& normals, const std::vector<double>& albedo,
                                     std::size_t h, std::size_t w, const photostereo::LightSet& lights) {
  photostereo::ImageStack s{h, w, {}};
  for (const auto& l : lights.directions()) {
    std::vector<double> img(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
      const double d = normals[p][0] * l[0] + normals[p][1] * l[1] + normals[p][2] * l[2];
      img[p] = std::max(0.0, albedo[p] * d);
    }
    s.images.push_back(std::move(img));
  }
  return s;
}

struct Hemisphere {
  std::size_t size = 81;
  std::vector<photostereo::Vec3> normals;
  std::vector<double> albedo;
  std::vector<bool> inside;
};

/// Unit hemisphere of radius 0.45 * size centred in a size x size image, albedo ramping in x.
inline Hemisphere hemisphere(std::size_t size) {
  Hemisphere hs{size, std::vector<photostereo::Vec3>(size * size, photostereo::Vec3{0, 0, 1}),
                std::vector<double>(size * size, 0.0), std::vector<bool>(size * size, false)};
  const double r = 0.45 * static_cast<double>(size), c = 0.5 * static_cast<double>(size - 1);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = (x - c) / r, dy = (y - c) / r, rr = dx * dx + dy * dy;
      if (rr >= 1.0) continue;
      const auto p = y * size + x;
      hs.normals[p] = {dx, -dy, std::sqrt(1.0 - rr)};
      hs.albedo[p] = 0.3 + 0.5 * static_cast<double>(x) / static_cast<double>(size);
      hs.inside[p] = true;
    }
  return hs;
}

inline bool lit_by_all(const photostereo::Vec3& n, const photostereo::LightSet& lights) {
  for (const auto& l : lights.directions())
    if (n[0] * l[0] + n[1] * l[1] + n[2] * l[2] <= 0) return false;
  return true;
}

inline double angle_deg(const photostereo::Vec3& a, const photostereo::Vec3& b) {
  const double d = std::clamp(a[0] * b[0] + a[1] * b[1] + a[2] * b[2], -1.0, 1.0);
  return std::acos(d) * 180.0 / std::numbers::pi;
}

/// Genuine ~ N(+sep/2, 1), impostor ~ N(-sep/2, 1).
inline eval::ScoreSet gaussian_scores(std::size_t ng, std::size_t ni, double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(separation / 2, 1.0), im(-separation / 2, 1.0);
  eval::ScoreSet s;
  for (std::size_t k = 0; k < ng; ++k) s.genuine.push_back(g(rng));
  for (std::size_t k = 0; k < ni; ++k) s.impostor.push_back(im(rng));
  return s;
}

inline bool accepted(double s, double t, eval::Polarity p) {
  return p == eval::Polarity::higher_better ? s >= t : s <= t;
}

inline double rate(const std::vector<double>& v, double t, eval::Polarity p) {
  return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double s) { return accepted(s, t, p); })) /
         static_cast<double>(v.size());
}

/// Dense uniform threshold sweep of a higher-is-better score set; EER taken where |FAR - FRR| is smallest.
inline double dense_eer(const eval::ScoreSet& s, std::size_t steps) {
  auto g = s.genuine, im = s.impostor;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  const double lo = std::min(g.front(), im.front()), hi = std::max(g.back(), im.back());
  double best_gap = 2.0, best = 0.0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps);
    const double frr = static_cast<double>(std::lower_bound(g.begin(), g.end(), t) - g.begin()) / g.size();
    const double far = static_cast<double>(im.end() - std::lower_bound(im.begin(), im.end(), t)) / im.size();
    if (std::abs(far - frr) < best_gap) {
      best_gap = std::abs(far - frr);
      best = 0.5 * (far + frr);
    }
  }
  return best;
}

/// Dense uniform threshold sweep of a higher-is-better score set from strictest to loosest,
/// starting at a threshold above every score. Returns FAR at the first threshold where
/// FAR - FRR >= 0 when they tie there, otherwise the FAR = FRR crossing linearly interpolated
/// from the preceding sweep threshold.
inline double dense_crossing_eer(const eval::ScoreSet& s, std::size_t steps) {
  auto g = s.genuine, im = s.impostor;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  const double lo = std::min(g.front(), im.front()), hi = std::max(g.back(), im.back());
  double far0 = 0.0, frr0 = 1.0;
  for (std::size_t k = steps + 1; k-- > 0;) {
    const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps);
    const double frr = static_cast<double>(std::lower_bound(g.begin(), g.end(), t) - g.begin()) / g.size();
    const double far = static_cast<double>(im.end() - std::lower_bound(im.begin(), im.end(), t)) / im.size();
    if (far - frr >= 0.0) {
      if (far == frr) return far;
      const double d0 = far0 - frr0, d1 = far - frr;
      return far0 + (far - far0) * (-d0 / (d1 - d0));
    }
    far0 = far;
    frr0 = frr;
  }
  return far0;
}

/// Rank-k identification rates by direct counting: a probe hits at rank k when fewer than k
/// subjects sit ahead of its true subject.
inline std::vector<double> counted_cmc(const std::vector<eval::ProbeRanking>& probes) {
  const std::size_t n = probes.front().ranked.size();
  std::vector<double> rates(n, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    std::size_t hits = 0;
    for (const auto& p : probes) {
      const auto pos = std::find(p.ranked.begin(), p.ranked.end(), p.truth) - p.ranked.begin();
      if (static_cast<std::size_t>(pos) < k) ++hits;
    }
    rates[k - 1] = static_cast<double>(hits) / static_cast<double>(probes.size());
  }
  return rates;
}

}  // namespace fknet::testing
