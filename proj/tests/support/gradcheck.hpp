#pragma once

// Central finite-difference oracle for reverse-mode gradients. Test-only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fknet/ndtensor/autograd.hpp"

namespace fknet::testing {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t probes = 0;
  // Stencils whose +h or -h evaluation took a different ReLU/max-pool/hinge branch than the
  // unperturbed point. Central differences are not an oracle across a kink, so these are skipped.
  std::size_t straddled = 0;
};

/// Per-leaf numeric gradient; only the probed coordinates are meaningful.
struct NumericGradient {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::size_t>> probed;
  std::size_t straddled = 0;
};

/// (f(x+h) - f(x-h)) / 2h per coordinate. When max_probes > 0, at most that many randomly
/// chosen coordinates per leaf are kept. Coordinates whose stencil crosses a branch switch are
/// skipped and counted.
template <typename T>
NumericGradient numeric_gradients(const std::function<Var<T>()>& loss_fn, std::vector<Var<T>> leaves, double h,
                                  std::size_t max_probes = 0, unsigned probe_seed = 1) {
  NumericGradient out;
  NoGradGuard no_grad;
  BranchRecorder branches;
  auto evaluate = [&](std::uint64_t& digest) {
    branches.reset();
    const double v = loss_fn().value()[0];
    digest = branches.digest();
    return v;
  };
  std::uint64_t base = 0;
  evaluate(base);
  std::mt19937 rng(probe_seed);
  for (auto& leaf : leaves) {
    auto data = leaf.value().data();
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (max_probes > 0) std::shuffle(order.begin(), order.end(), rng);
    const std::size_t budget = max_probes > 0 ? max_probes : order.size();
    std::vector<double> values(data.size(), 0.0);
    std::vector<std::size_t> probed;
    for (auto i : order) {
      if (probed.size() == budget) break;
      const T saved = data[i];
      std::uint64_t dp = 0, dm = 0;
      data[i] = static_cast<T>(saved + h);
      const double fp = evaluate(dp);
      data[i] = static_cast<T>(saved - h);
      const double fm = evaluate(dm);
      data[i] = saved;
      if (dp != base || dm != base) {
        ++out.straddled;
        continue;
      }
      values[i] = (fp - fm) / (2.0 * h);
      probed.push_back(i);
    }
    out.values.push_back(std::move(values));
    out.probed.push_back(std::move(probed));
  }
  return out;
}

/// Analytic leaf gradients after one backward pass.
template <typename T>
std::vector<std::vector<double>> analytic_gradients(const std::function<Var<T>()>& loss_fn,
                                                    std::vector<Var<T>> leaves) {
  for (auto& leaf : leaves) leaf.value().zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> out;
  for (auto& leaf : leaves) out.emplace_back(leaf.grad().begin(), leaf.grad().end());
  return out;
}

/// Error per leaf is ||analytic - numeric|| / max(||analytic||, ||numeric||, floor) over the probed coordinates.
inline GradCheckReport compare_gradients(const std::vector<std::vector<double>>& analytic, const NumericGradient& numeric,
                                         const std::vector<std::string>& names, double floor) {
  GradCheckReport report;
  report.straddled = numeric.straddled;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto i : numeric.probed[k]) {
      const double a = analytic[k][i], n = numeric.values[k][i];
      diff2 += (a - n) * (a - n);
      a2 += a * a;
      n2 += n * n;
    }
    report.probes += numeric.probed[k].size();
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (report.worst.empty() || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = k < names.size() ? names[k] : std::to_string(k);
    }
  }
  return report;
}

/// Same-precision check: analytic and numeric gradients both evaluated in T.
template <typename T>
GradCheckReport check_gradients(const std::function<Var<T>()>& loss_fn, std::vector<Var<T>> leaves,
                                std::vector<std::string> names, double h, double floor = 1e-7,
                                std::size_t max_probes = 0, unsigned probe_seed = 1) {
  const auto analytic = analytic_gradients<T>(loss_fn, leaves);
  const auto numeric = numeric_gradients<T>(loss_fn, leaves, h, max_probes, probe_seed);
  return compare_gradients(analytic, numeric, names, floor);
}

/// Single-precision analytic gradients against a double-precision finite-difference oracle.
/// `oracle_loss` must compute the same function on `oracle_leaves`, which hold the same values
/// widened to double (exact), so the oracle is free of single-precision rounding noise.
inline GradCheckReport check_single_precision(const std::function<Var<float>()>& loss,
                                              std::vector<Var<float>> leaves,
                                              const std::function<Var<double>()>& oracle_loss,
                                              std::vector<Var<double>> oracle_leaves,
                                              std::vector<std::string> names, double h, double floor = 1e-7,
                                              std::size_t max_probes = 0, unsigned probe_seed = 1) {
  const auto analytic = analytic_gradients<float>(loss, leaves);
  const auto numeric = numeric_gradients<double>(oracle_loss, oracle_leaves, h, max_probes, probe_seed);
  return compare_gradients(analytic, numeric, names, floor);
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace fknet::testing
