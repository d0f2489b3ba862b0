#include "fknet/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fknet/ndtensor/tensor.hpp"

namespace fknet::eval {

namespace {

// Larger key means more similar, whatever the polarity.
double key(double s, Polarity p) { return p == Polarity::higher_better ? s : -s; }

std::vector<double> sorted_keys(const std::vector<double>& scores, Polarity p) {
  std::vector<double> k;
  k.reserve(scores.size());
  for (double s : scores) k.push_back(key(s, p));
  std::sort(k.begin(), k.end(), std::greater<>());
  return k;
}

}  // namespace

void ScoreSet::validate() const {
  if (genuine.empty() || impostor.empty()) {
    throw ContractViolation("score set needs at least one genuine and one impostor score");
  }
  for (const auto* list : {&genuine, &impostor}) {
    for (double s : *list) {
      if (!std::isfinite(s)) throw ContractViolation("score set contains a non-finite score");
    }
  }
}

std::vector<RocPoint> roc_curve(const ScoreSet& scores) {
  scores.validate();
  const auto g = sorted_keys(scores.genuine, scores.polarity);
  const auto im = sorted_keys(scores.impostor, scores.polarity);
  const double ng = static_cast<double>(g.size()), ni = static_cast<double>(im.size());
  const double sentinel = scores.polarity == Polarity::higher_better ? std::numeric_limits<double>::infinity()
                                                                     : -std::numeric_limits<double>::infinity();
  std::vector<RocPoint> out{{sentinel, 0.0, 0.0}};
  std::size_t i = 0, j = 0;
  while (i < g.size() || j < im.size()) {
    double k = -std::numeric_limits<double>::infinity();
    if (i < g.size()) k = g[i];
    if (j < im.size()) k = std::max(k, im[j]);
    while (i < g.size() && g[i] >= k) ++i;
    while (j < im.size() && im[j] >= k) ++j;
    const double threshold = scores.polarity == Polarity::higher_better ? k : -k;
    out.push_back({threshold, static_cast<double>(j) / ni, static_cast<double>(i) / ng});
  }
  return out;
}

double eer(const std::vector<RocPoint>& roc) {
  if (roc.empty()) throw ContractViolation("empty ROC curve");
  auto diff = [](const RocPoint& p) { return p.far - (1.0 - p.gar); };
  for (std::size_t k = 0; k < roc.size(); ++k) {
    const double d = diff(roc[k]);
    if (d == 0.0) return roc[k].far;
    if (d > 0.0) {
      if (k == 0) return roc[0].far;
      const double d0 = diff(roc[k - 1]);
      const double t = -d0 / (d - d0);
      return roc[k - 1].far + t * (roc[k].far - roc[k - 1].far);
    }
  }
  return roc.back().far;
}

double eer(const ScoreSet& scores) { return eer(roc_curve(scores)); }

CmcCurve cmc(const std::vector<ProbeRanking>& probes) {
  if (probes.empty()) throw ContractViolation("CMC needs at least one probe");
  const auto n = probes.front().ranked.size();
  if (n == 0) throw ContractViolation("CMC needs a non-empty gallery ranking");
  std::vector<std::size_t> hits(n, 0);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const auto& pr = probes[p];
    if (pr.truth.empty()) throw ContractViolation("probe " + std::to_string(p) + " has no identity label");
    if (pr.ranked.size() != n) {
      throw ContractViolation("probe " + std::to_string(p) + " ranks " + std::to_string(pr.ranked.size()) +
                              " gallery subjects, expected " + std::to_string(n));
    }
    const auto it = std::find(pr.ranked.begin(), pr.ranked.end(), pr.truth);
    if (it == pr.ranked.end()) {
      throw ContractViolation("probe " + std::to_string(p) + " identity " + pr.truth + " is not in the gallery");
    }
    ++hits[static_cast<std::size_t>(it - pr.ranked.begin())];
  }
  CmcCurve c;
  std::size_t acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += hits[k];
    c.rates.push_back(static_cast<double>(acc) / static_cast<double>(probes.size()));
  }
  return c;
}

Polarity parse_polarity(const std::string& s) {
  if (s == "higher_better") return Polarity::higher_better;
  if (s == "lower_better") return Polarity::lower_better;
  throw ContractViolation("unknown polarity \"" + s + "\" (expected higher_better or lower_better)");
}

std::string to_string(Polarity p) { return p == Polarity::higher_better ? "higher_better" : "lower_better"; }

}  // namespace fknet::eval
