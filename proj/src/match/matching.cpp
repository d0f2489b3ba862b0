#include "fknet/match/matching.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "fknet/io/binary_io.hpp"
#include "fknet/io/sha256.hpp"

namespace fknet::match {

namespace fs = std::filesystem;

double mean_squared_error(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) throw ContractViolation("mse needs two non-empty vectors of equal length");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double compare(const Template& probe, const Template& gallery_entry, const MatchPolicy& policy) {
  if (probe.dim != gallery_entry.dim) {
    throw ContractViolation("feature dimension mismatch: probe has D=" + std::to_string(probe.dim) + ", gallery entry " +
                            gallery_entry.subject_id + " has D=" + std::to_string(gallery_entry.dim));
  }
  if (probe.fingerprint != gallery_entry.fingerprint) {
    throw ContractViolation("model fingerprint mismatch: probe " + to_hex(probe.fingerprint).substr(0, 12) +
                            " vs gallery entry " + gallery_entry.subject_id + " " +
                            to_hex(gallery_entry.fingerprint).substr(0, 12) +
                            "; re-extract both templates with the same checkpoint");
  }
  double best = policy.higher_is_better() ? -std::numeric_limits<double>::infinity()
                                          : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probe.cells(); ++i) {
    for (std::size_t j = 0; j < gallery_entry.cells(); ++j) {
      const double s = policy.metric == Metric::mse ? mean_squared_error(probe.cell(i), gallery_entry.cell(j))
                                                    : cosine_similarity<float>(probe.cell(i), gallery_entry.cell(j));
      if (policy.better(s, best)) best = s;
    }
  }
  return best;
}

bool Gallery::contains(const std::string& subject) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Template& t) { return t.subject_id == subject; });
}

void Gallery::enroll(Template t) {
  t.validate();
  if (!entries_.empty()) {
    const auto& first = entries_.front();
    if (t.dim != first.dim || t.fingerprint != first.fingerprint) {
      throw ContractViolation("template for " + t.subject_id +
                              " was extracted by a different model or feature dimension than this gallery");
    }
  }
  if (closed_set_ && contains(t.subject_id)) {
    throw ContractViolation("subject " + t.subject_id + " is already enrolled in this closed-set gallery");
  }
  entries_.push_back(std::move(t));
}

void Gallery::save(const std::string& dir) const {
  fs::create_directories(dir);
  std::string index = closed_set_ ? "# closed-set\n" : "# open-set\n";
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto name = std::to_string(i) + ".fkt";
    save_template((fs::path(dir) / name).string(), entries_[i]);
    index += name + "\n";
  }
  const auto path = (fs::path(dir) / "index.txt").string();
  write_file_bytes(path, std::vector<std::uint8_t>(index.begin(), index.end()));
}

Gallery Gallery::load(const std::string& dir) {
  const auto index_path = fs::path(dir) / "index.txt";
  std::ifstream in(index_path);
  if (!in) throw std::runtime_error("gallery index " + index_path.string() + " not found; run enroll first");
  std::string line;
  bool closed = true;
  std::vector<std::string> files;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("open-set") != std::string::npos) closed = false;
      continue;
    }
    files.push_back(line);
  }
  Gallery g(closed);
  for (const auto& f : files) g.enroll(load_template((fs::path(dir) / f).string()));
  return g;
}

std::vector<RankedMatch> identify(const Template& probe, const Gallery& gallery, const MatchPolicy& policy) {
  if (gallery.empty()) throw ContractViolation("cannot identify against an empty gallery");
  std::vector<RankedMatch> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& entry : gallery.entries()) {
    const double s = compare(probe, entry, policy);
    auto [it, fresh] = slot.try_emplace(entry.subject_id, out.size());
    if (fresh) {
      out.push_back({entry.subject_id, s});
    } else if (policy.better(s, out[it->second].score)) {
      out[it->second].score = s;
    }
  }
  std::sort(out.begin(), out.end(), [&](const RankedMatch& a, const RankedMatch& b) {
    if (policy.better(a.score, b.score)) return true;
    if (policy.better(b.score, a.score)) return false;
    return a.subject_id < b.subject_id;
  });
  return out;
}

Verification verify(const Template& probe, const std::string& claimed, const Gallery& gallery,
                    const MatchPolicy& policy, double threshold) {
  bool found = false;
  double best = 0.0;
  for (const auto& entry : gallery.entries()) {
    if (entry.subject_id != claimed) continue;
    const double s = compare(probe, entry, policy);
    if (!found || policy.better(s, best)) best = s;
    found = true;
  }
  if (!found) throw ContractViolation("claimed subject " + claimed + " is not enrolled");
  return {policy.accepts(best, threshold), best};
}

Metric parse_metric(const std::string& s) {
  if (s == "mse") return Metric::mse;
  if (s == "cosine") return Metric::cosine;
  throw ContractViolation("unknown metric \"" + s + "\" (expected mse or cosine)");
}

std::string to_string(Metric m) { return m == Metric::mse ? "mse" : "cosine"; }

Alignment parse_alignment(const std::string& s) {
  if (s == "grid") return Alignment::grid;
  if (s == "center") return Alignment::center;
  if (s == "shifted") return Alignment::shifted;
  throw ContractViolation("unknown alignment \"" + s + "\" (expected grid, center or shifted)");
}

std::string to_string(Alignment a) {
  switch (a) {
    case Alignment::grid:
      return "grid";
    case Alignment::center:
      return "center";
    case Alignment::shifted:
      return "shifted";
  }
  return "grid";
}

}  // namespace fknet::match
