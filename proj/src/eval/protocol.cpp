#include "fknet/eval/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "fknet/io/binary_io.hpp"
#include "fknet/ndtensor/tensor.hpp"

namespace fknet::eval {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ProtocolSpec::validate() const {
  if (subjects < 2 || probes_per_subject == 0 || gallery_per_subject == 0) {
    throw ContractViolation("protocol " + name + " needs at least two subjects and positive sample counts");
  }
  if (gallery_session == probe_session) throw ContractViolation("protocol " + name + " uses one session twice");
  if (mode == ProtocolMode::open_set) {
    if (!(open_split > 0.0 && open_split < 1.0)) {
      throw ContractViolation("open-set split ratio must lie strictly between 0 and 1");
    }
    if (test_subjects() < 2) throw ContractViolation("open-set split leaves fewer than two test subjects");
  }
}

std::size_t ProtocolSpec::train_subjects() const {
  if (mode == ProtocolMode::closed_set) return 0;
  return static_cast<std::size_t>(std::llround(open_split * static_cast<double>(subjects)));
}

ProtocolSpec ProtocolSpec::knuckle3d() { return {"knuckle3d", 190, 6, 1, 1, 2, ProtocolMode::closed_set, 0.8}; }
ProtocolSpec ProtocolSpec::knuckle3d_open() { return {"knuckle3d-open", 190, 6, 1, 1, 2, ProtocolMode::open_set, 0.8}; }
ProtocolSpec ProtocolSpec::knuckle2d() { return {"knuckle2d", 503, 4, 1, 1, 2, ProtocolMode::closed_set, 0.8}; }
ProtocolSpec ProtocolSpec::palmprint() { return {"palmprint", 177, 5, 5, 1, 2, ProtocolMode::closed_set, 0.8}; }

ProtocolSpec ProtocolSpec::preset(const std::string& name) {
  if (name == "knuckle3d") return knuckle3d();
  if (name == "knuckle3d-open") return knuckle3d_open();
  if (name == "knuckle2d") return knuckle2d();
  if (name == "palmprint") return palmprint();
  throw ContractViolation("unknown protocol \"" + name + "\" (expected knuckle3d, knuckle3d-open, knuckle2d or palmprint)");
}

std::vector<ProtocolPair> build_protocol_pairs(const ProtocolSpec& spec) {
  spec.validate();
  const auto t = static_cast<std::uint32_t>(spec.test_subjects());
  std::vector<ProtocolPair> out;
  out.reserve(spec.genuine_count() + spec.impostor_count());
  for (std::uint32_t p = 0; p < t; ++p)
    for (std::uint32_t k = 0; k < spec.probes_per_subject; ++k)
      for (std::uint32_t g = 0; g < t; ++g) out.push_back({p, k, g, p == g});
  return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& base_dir) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(t);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 4 || fields[0].empty() || fields[1].empty()) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected path,subject_id,session,lens_tag");
    }
    ManifestEntry e;
    e.path = fields[0];
    if (!base_dir.empty() && fs::path(e.path).is_relative()) e.path = (fs::path(base_dir) / e.path).string();
    e.subject_id = fields[1];
    try {
      std::size_t used = 0;
      e.session = std::stoi(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": session \"" + fields[2] + "\" is not an integer");
    }
    e.lens_tag = fields[3];
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()), fs::path(path).parent_path().string());
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.path + "," + e.subject_id + "," + std::to_string(e.session) + "," + e.lens_tag + "\n";
  }
  return out;
}

ProtocolBinding bind_protocol(const ProtocolSpec& spec, const std::vector<ManifestEntry>& manifest) {
  spec.validate();
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_subject;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& e = manifest[i];
    auto [it, fresh] = by_subject.try_emplace(e.subject_id);
    if (fresh) order.push_back(e.subject_id);
    if (e.session == spec.gallery_session) it->second.first.push_back(i);
    if (e.session == spec.probe_session) it->second.second.push_back(i);
  }
  std::vector<std::string> qualified, absentees;
  for (const auto& s : order) {
    const auto& [gal, prb] = by_subject[s];
    if (gal.size() >= spec.gallery_per_subject && prb.size() >= spec.probes_per_subject) {
      qualified.push_back(s);
    } else {
      absentees.push_back(s + " (session " + std::to_string(spec.gallery_session) + ": " + std::to_string(gal.size()) +
                          "/" + std::to_string(spec.gallery_per_subject) + ", session " +
                          std::to_string(spec.probe_session) + ": " + std::to_string(prb.size()) + "/" +
                          std::to_string(spec.probes_per_subject) + ")");
    }
  }
  if (qualified.size() < spec.subjects) {
    std::string msg = "protocol " + spec.name + " needs " + std::to_string(spec.subjects) + " subjects with " +
                      std::to_string(spec.gallery_per_subject) + " gallery and " +
                      std::to_string(spec.probes_per_subject) + " probe samples; the manifest provides " +
                      std::to_string(qualified.size());
    if (!absentees.empty()) {
      msg += "; incomplete subjects:";
      for (const auto& a : absentees) msg += " " + a;
    }
    throw ContractViolation(msg);
  }
  qualified.resize(spec.subjects);
  ProtocolBinding b;
  const auto n_train = spec.train_subjects();
  for (std::size_t k = 0; k < qualified.size(); ++k) {
    const auto& s = qualified[k];
    if (k < n_train) {
      b.train_subjects.push_back(s);
      continue;
    }
    const auto& [gal, prb] = by_subject[s];
    b.subjects.push_back(s);
    b.gallery.emplace_back(gal.begin(), gal.begin() + static_cast<std::ptrdiff_t>(spec.gallery_per_subject));
    b.probes.emplace_back(prb.begin(), prb.begin() + static_cast<std::ptrdiff_t>(spec.probes_per_subject));
  }
  return b;
}

}  // namespace fknet::eval
