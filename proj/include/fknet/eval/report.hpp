#pragma once

#include <string>
#include <vector>

#include "fknet/eval/metrics.hpp"

namespace fknet::eval {

/// One row of a scores CSV: probe_id,gallery_subject,score,label.
struct ScoreRecord {
  std::string probe_id;
  std::string gallery_subject;
  double score = 0.0;
  bool genuine = false;
};

/// Header line required; label is "genuine" or "impostor". Non-finite scores are rejected.
std::vector<ScoreRecord> parse_scores_csv(const std::string& text);
std::vector<ScoreRecord> read_scores_csv(const std::string& path);
void write_scores_csv(const std::string& path, const std::vector<ScoreRecord>& records);

ScoreSet to_score_set(const std::vector<ScoreRecord>& records, Polarity polarity);

/// Groups rows by probe_id in order of first appearance and ranks gallery subjects best first,
/// ties by subject id. A probe without exactly one genuine row is rejected.
std::vector<ProbeRanking> to_rankings(const std::vector<ScoreRecord>& records, Polarity polarity);

struct Summary {
  double eer = 0.0;
  double rank1 = 0.0;
};

std::string format_summary(const Summary& s);
/// Parses "EER=<v> Rank1=<v>".
Summary parse_summary(const std::string& line);

/// Writes roc.csv, cmc.csv, summary.txt, roc.svg and cmc.svg into `dir`.
void emit_report(const std::string& dir, const std::vector<RocPoint>& roc, const CmcCurve& cmc);

}  // namespace fknet::eval
