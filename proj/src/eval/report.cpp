#include "fknet/eval/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "fknet/io/binary_io.hpp"
#include "fknet/ndtensor/tensor.hpp"

namespace fknet::eval {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kScoresHeader = "probe_id,gallery_subject,score,label";

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Standalone line chart on the unit square.
std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                     const std::vector<std::pair<double, double>>& pts, double xmax, bool step) {
  constexpr double W = 480, H = 400, L = 60, R = 20, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  auto sx = [&](double x) { return L + pw * (xmax > 0 ? x / xmax : 0.0); };
  auto sy = [&](double y) { return T + ph * (1.0 - y); };
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n"
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
      W, H, W, H, W / 2, title, L, T, pw, ph);
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    s += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.4g}</text>\n",
        sx(f * xmax), H - B + 16, f * xmax);
    s += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.2f}</text>\n",
        L - 6, sy(f) + 4, f);
  }
  s += fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n", L + pw / 2,
      H - 12, xlabel);
  s += fmt::format(
      "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 16 {})\">{}</text>\n",
      T + ph / 2, T + ph / 2, ylabel);
  s += "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (step && i > 0) s += fmt::format("{:.2f},{:.2f} ", sx(pts[i].first), sy(pts[i - 1].second));
    s += fmt::format("{:.2f},{:.2f} ", sx(pts[i].first), sy(pts[i].second));
  }
  s += "\"/>\n</svg>\n";
  return s;
}

}  // namespace

std::vector<ScoreRecord> parse_scores_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kScoresHeader) {
    throw FormatError("scores CSV must start with the header \"" + std::string(kScoresHeader) + "\"");
  }
  std::vector<ScoreRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
    const auto where = "scores CSV line " + std::to_string(line_no) + ": ";
    if (f.size() != 4) throw FormatError(where + "expected 4 columns");
    ScoreRecord r;
    r.probe_id = f[0];
    r.gallery_subject = f[1];
    try {
      std::size_t used = 0;
      r.score = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw FormatError(where + "score \"" + f[2] + "\" is not a number");
    }
    if (!std::isfinite(r.score)) throw FormatError(where + "score is not finite");
    if (f[3] == "genuine") {
      r.genuine = true;
    } else if (f[3] != "impostor") {
      throw FormatError(where + "label must be genuine or impostor, got \"" + f[3] + "\"");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ScoreRecord> read_scores_csv(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_scores_csv(std::string(bytes.begin(), bytes.end()));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_scores_csv(const std::string& path, const std::vector<ScoreRecord>& records) {
  std::string s(kScoresHeader);
  s += "\n";
  for (const auto& r : records) {
    s += fmt::format("{},{},{:.9g},{}\n", r.probe_id, r.gallery_subject, r.score, r.genuine ? "genuine" : "impostor");
  }
  write_text(path, s);
}

ScoreSet to_score_set(const std::vector<ScoreRecord>& records, Polarity polarity) {
  ScoreSet s;
  s.polarity = polarity;
  for (const auto& r : records) (r.genuine ? s.genuine : s.impostor).push_back(r.score);
  s.validate();
  return s;
}

std::vector<ProbeRanking> to_rankings(const std::vector<ScoreRecord>& records, Polarity polarity) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ScoreRecord*>> groups;
  for (const auto& r : records) {
    auto [it, fresh] = groups.try_emplace(r.probe_id);
    if (fresh) order.push_back(r.probe_id);
    it->second.push_back(&r);
  }
  std::vector<ProbeRanking> out;
  for (const auto& id : order) {
    auto rows = groups[id];
    ProbeRanking pr;
    for (const auto* r : rows) {
      if (!r->genuine) continue;
      if (!pr.truth.empty()) throw ContractViolation("probe " + id + " has more than one genuine row");
      pr.truth = r->gallery_subject;
    }
    if (pr.truth.empty()) throw ContractViolation("probe " + id + " has no genuine row, so its identity is unknown");
    std::stable_sort(rows.begin(), rows.end(), [&](const ScoreRecord* a, const ScoreRecord* b) {
      if (a->score != b->score) return polarity == Polarity::higher_better ? a->score > b->score : a->score < b->score;
      return a->gallery_subject < b->gallery_subject;
    });
    for (const auto* r : rows) pr.ranked.push_back(r->gallery_subject);
    out.push_back(std::move(pr));
  }
  return out;
}

std::string format_summary(const Summary& s) { return fmt::format("EER={:.6f} Rank1={:.6f}", s.eer, s.rank1); }

Summary parse_summary(const std::string& line) {
  Summary s;
  char tail = 0;
  if (std::sscanf(line.c_str(), "EER=%lf Rank1=%lf%c", &s.eer, &s.rank1, &tail) < 2 ||
      (tail != 0 && tail != '\n')) {
    throw FormatError("summary line \"" + line + "\" is not of the form EER=<value> Rank1=<value>");
  }
  return s;
}

void emit_report(const std::string& dir, const std::vector<RocPoint>& roc, const CmcCurve& cmc) {
  if (roc.empty() || cmc.rates.empty()) throw ContractViolation("cannot report empty curves");
  fs::create_directories(dir);
  std::string roc_csv = "threshold,far,gar\n";
  std::vector<std::pair<double, double>> roc_pts;
  for (const auto& p : roc) {
    roc_csv += fmt::format("{:.9g},{:.9g},{:.9g}\n", p.threshold, p.far, p.gar);
    roc_pts.emplace_back(p.far, p.gar);
  }
  std::string cmc_csv = "rank,rate\n";
  std::vector<std::pair<double, double>> cmc_pts;
  for (std::size_t k = 0; k < cmc.rates.size(); ++k) {
    cmc_csv += fmt::format("{},{:.9g}\n", k + 1, cmc.rates[k]);
    cmc_pts.emplace_back(static_cast<double>(k + 1), cmc.rates[k]);
  }
  const auto base = fs::path(dir);
  write_text(base / "roc.csv", roc_csv);
  write_text(base / "cmc.csv", cmc_csv);
  write_text(base / "summary.txt", format_summary({eer(roc), cmc.rank1()}) + "\n");
  write_text(base / "roc.svg", svg_plot("ROC", "False accept rate", "Genuine accept rate", roc_pts, 1.0, false));
  write_text(base / "cmc.svg", svg_plot("CMC", "Rank", "Identification rate", cmc_pts,
                                        static_cast<double>(cmc.rates.size()), true));
}

}  // namespace fknet::eval
