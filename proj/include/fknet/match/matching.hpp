#pragma once

#include <map>
#include <string>
#include <vector>

#include "fknet/match/template.hpp"

namespace fknet::match {

enum class Metric { mse, cosine };

/// mse: lower is better. cosine: higher is better. Aggregation is best over all cell pairs.
struct MatchPolicy {
  Metric metric = Metric::cosine;
  bool higher_is_better() const { return metric == Metric::cosine; }
  /// True when score a ranks strictly ahead of b.
  bool better(double a, double b) const { return higher_is_better() ? a > b : a < b; }
  /// Accept side of a threshold: cosine score >= t, mse score <= t.
  bool accepts(double score, double threshold) const {
    return higher_is_better() ? score >= threshold : score <= threshold;
  }
};

/// Mean squared difference of two equal-length vectors.
double mean_squared_error(std::span<const float> a, std::span<const float> b);

/// Best score over every (probe cell, gallery cell) pair. Rejects differing D or fingerprints.
double compare(const Template& probe, const Template& gallery_entry, const MatchPolicy& policy);

class Gallery {
 public:
  /// closed_set galleries reject a second template for the same subject.
  explicit Gallery(bool closed_set = true) : closed_set_(closed_set) {}

  void enroll(Template t);
  const std::vector<Template>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  bool closed_set() const { return closed_set_; }
  bool contains(const std::string& subject) const;

  /// One .fkt file per template plus index.txt listing them in enrollment order.
  void save(const std::string& dir) const;
  static Gallery load(const std::string& dir);

 private:
  bool closed_set_;
  std::vector<Template> entries_;
};

struct RankedMatch {
  std::string subject_id;
  double score = 0.0;
};

/// Every enrolled subject with its best score, best first; ties break by subject_id.
std::vector<RankedMatch> identify(const Template& probe, const Gallery& gallery, const MatchPolicy& policy);

struct Verification {
  bool accept = false;
  double score = 0.0;
};

Verification verify(const Template& probe, const std::string& claimed, const Gallery& gallery,
                    const MatchPolicy& policy, double threshold);

Metric parse_metric(const std::string& s);
std::string to_string(Metric m);
Alignment parse_alignment(const std::string& s);
std::string to_string(Alignment a);

}  // namespace fknet::match
