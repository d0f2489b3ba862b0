#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fknet::eval {

enum class ProtocolMode { closed_set, open_set };

/// Session-1 samples form the gallery, session-2 samples are the probes. In open-set mode
/// only the subjects left after the training split are evaluated.
struct ProtocolSpec {
  std::string name;
  std::size_t subjects = 0;
  std::size_t probes_per_subject = 0;
  std::size_t gallery_per_subject = 1;
  int gallery_session = 1;
  int probe_session = 2;
  ProtocolMode mode = ProtocolMode::closed_set;
  double open_split = 0.8;

  void validate() const;
  /// Subjects that train the open-set network; zero in closed-set mode.
  std::size_t train_subjects() const;
  std::size_t test_subjects() const { return subjects - train_subjects(); }
  std::size_t genuine_count() const { return test_subjects() * probes_per_subject; }
  std::size_t impostor_count() const { return test_subjects() * (test_subjects() - 1) * probes_per_subject; }

  static ProtocolSpec knuckle3d();
  static ProtocolSpec knuckle3d_open();
  static ProtocolSpec knuckle2d();
  static ProtocolSpec palmprint();
  /// knuckle3d, knuckle3d-open, knuckle2d or palmprint.
  static ProtocolSpec preset(const std::string& name);
};

/// Probe sample `probe_index` of test subject `probe_subject` against the best-scoring
/// gallery sample of test subject `gallery_subject`.
struct ProtocolPair {
  std::uint32_t probe_subject = 0;
  std::uint32_t probe_index = 0;
  std::uint32_t gallery_subject = 0;
  bool genuine = false;
};

/// Probe-major: for each subject, each probe sample, every gallery subject in order.
std::vector<ProtocolPair> build_protocol_pairs(const ProtocolSpec& spec);

/// One line of a dataset manifest: "path,subject_id,session,lens_tag".
struct ManifestEntry {
  std::string path;
  std::string subject_id;
  int session = 0;
  std::string lens_tag;
};

/// Blank lines and lines starting with '#' are skipped. Relative paths resolve against the
/// manifest's directory.
std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& base_dir = "");
std::vector<ManifestEntry> read_manifest(const std::string& path);
std::string format_manifest(const std::vector<ManifestEntry>& entries);

/// Manifest indices selected for each evaluated subject.
struct ProtocolBinding {
  std::vector<std::string> subjects;
  std::vector<std::string> train_subjects;
  std::vector<std::vector<std::size_t>> gallery;
  std::vector<std::vector<std::size_t>> probes;
};

/// Subjects are taken in order of first appearance. A subject qualifies when it has enough
/// samples in both sessions; too few qualifying subjects throws a ContractViolation that lists
/// every absentee.
ProtocolBinding bind_protocol(const ProtocolSpec& spec, const std::vector<ManifestEntry>& manifest);

}  // namespace fknet::eval
