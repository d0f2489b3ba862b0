#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fknet::eval {

enum class Polarity { higher_better, lower_better };

/// Genuine and impostor comparison scores with the side that means "more similar".
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
  Polarity polarity = Polarity::higher_better;

  /// Throws ContractViolation on an empty list or a non-finite score.
  void validate() const;
};

/// Accepting a score s at threshold t means s >= t (higher_better) or s <= t (lower_better).
struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double gar = 0.0;
};

/// Starts at a sentinel threshold that accepts nothing, then one point per distinct score
/// from strictest to loosest. The last point accepts everything: (1, 1).
std::vector<RocPoint> roc_curve(const ScoreSet& scores);

/// FAR = FRR crossing, interpolated linearly between the two ROC points that bracket the
/// sign change of FAR - FRR. An exact tie at a point returns that point.
double eer(const ScoreSet& scores);
double eer(const std::vector<RocPoint>& roc);

/// One probe's gallery ranking, best first, and its true identity.
struct ProbeRanking {
  std::string truth;
  std::vector<std::string> ranked;
};

/// rates[k - 1] = fraction of probes whose true identity is within the top k.
struct CmcCurve {
  std::vector<double> rates;
  double rank1() const { return rates.empty() ? 0.0 : rates.front(); }
};

/// Every probe needs a non-empty label that appears in its ranking; rankings share one length.
CmcCurve cmc(const std::vector<ProbeRanking>& probes);

Polarity parse_polarity(const std::string& s);
std::string to_string(Polarity p);

}  // namespace fknet::eval
