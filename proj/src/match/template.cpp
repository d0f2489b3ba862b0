#include "fknet/match/template.hpp"

#include <algorithm>
#include <cmath>

#include "fknet/io/binary_io.hpp"
#include "fknet/net/augment.hpp"

namespace fknet::match {

namespace {

constexpr std::string_view kMagic = "FKT1";
constexpr std::uint16_t kVersion = 1;

Tensor<float> require_crop(const Tensor<float>& image, net::HW crop, const char* role) {
  const auto& s = image.shape();
  if (s.size() != 3 || s[1] < crop.h || s[2] < crop.w) {
    throw ContractViolation(std::string(role) + " image " + shape_str(s) + " is smaller than the required " +
                            std::to_string(crop.h) + "x" + std::to_string(crop.w) + " crop");
  }
  return net::center_crop(image, crop.h, crop.w);
}

// N x D x Gh x Gw features of one batch; sample n's grid or each sample as one cell.
void append_cells(const Tensor<float>& f, std::vector<float>& out) {
  const auto N = f.size(0), D = f.size(1), GH = f.size(2), GW = f.size(3);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t y = 0; y < GH; ++y)
      for (std::size_t x = 0; x < GW; ++x)
        for (std::size_t d = 0; d < D; ++d) out.push_back(f.at(n, d, y, x));
}

}  // namespace

void Template::validate() const {
  if (dim == 0 || grid_h == 0 || grid_w == 0) throw ContractViolation("template has an empty grid or zero dimension");
  if (values.size() != grid_h * grid_w * dim) {
    throw ContractViolation("template holds " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(grid_h * grid_w * dim));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ContractViolation("template for " + subject_id + " contains a non-finite value");
  }
}

Template extract_template(net::FKNetPlus<float>& net, const Fingerprint& fingerprint, const Tensor<float>& image,
                          Role role, const std::string& subject_id, int session, Alignment alignment) {
  if (session < 0 || session > 255) throw ContractViolation("session must fit in one byte");
  const auto& cfg = net.config();
  NoGradGuard no_grad;
  Template t;
  t.subject_id = subject_id;
  t.session = static_cast<std::uint8_t>(session);
  t.fingerprint = fingerprint;
  t.dim = cfg.feature_dim;
  auto run = [&](Tensor<float> batch) { return net.features(net.collab(Var<float>(std::move(batch)), Mode::infer), Mode::infer); };

  if (role == Role::gallery || alignment == Alignment::center) {
    const auto crop = require_crop(image, cfg.input_hw, role == Role::gallery ? "gallery" : "probe");
    const auto f = run(crop.reshaped({1, crop.size(0), crop.size(1), crop.size(2)}));
    t.grid_h = f.shape()[2];
    t.grid_w = f.shape()[3];
    append_cells(f.value(), t.values);
  } else if (alignment == Alignment::grid) {
    const auto crop = require_crop(image, cfg.test_hw, "probe");
    const auto f = run(crop.reshaped({1, crop.size(0), crop.size(1), crop.size(2)}));
    t.grid_h = f.shape()[2];
    t.grid_w = f.shape()[3];
    append_cells(f.value(), t.values);
  } else {
    const auto crop = require_crop(image, cfg.test_hw, "probe");
    t.grid_h = (cfg.test_hw.h - cfg.input_hw.h) / kFeatureStride + 1;
    t.grid_w = (cfg.test_hw.w - cfg.input_hw.w) / kFeatureStride + 1;
    const auto C = crop.size(0), H = cfg.input_hw.h, W = cfg.input_hw.w;
    Tensor<float> batch({t.grid_h * t.grid_w, C, H, W});
    std::size_t n = 0;
    for (std::size_t y = 0; y < t.grid_h; ++y) {
      for (std::size_t x = 0; x < t.grid_w; ++x, ++n) {
        const auto part = net::crop_image(crop, y * kFeatureStride, x * kFeatureStride, H, W);
        std::copy(part.data().begin(), part.data().end(), batch.raw() + n * C * H * W);
      }
    }
    append_cells(run(std::move(batch)).value(), t.values);
  }
  return t;
}

std::size_t template_header_size(const Template& t) {
  return kMagic.size() + 2 + 4 + 2 + 2 + 2 + t.subject_id.size() + 1 + t.fingerprint.size();
}

std::vector<std::uint8_t> serialize_template(const Template& t) {
  t.validate();
  if (t.grid_h > 0xFFFF || t.grid_w > 0xFFFF || t.dim > 0xFFFFFFFFu) throw FormatError("template grid too large");
  ByteWriter w;
  w.put_tag(kMagic);
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(t.dim));
  w.put(static_cast<std::uint16_t>(t.grid_h));
  w.put(static_cast<std::uint16_t>(t.grid_w));
  w.put_string16(t.subject_id);
  w.put(t.session);
  w.put_bytes(t.fingerprint);
  for (float v : t.values) w.put_f32(v);
  return w.take();
}

Template parse_template(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_tag(kMagic, "template magic");
  const auto version = r.get<std::uint16_t>("template version");
  if (version != kVersion) {
    throw FormatError("unsupported template version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kVersion) + "); re-extract the template with this build");
  }
  Template t;
  t.dim = r.get<std::uint32_t>("feature dimension");
  t.grid_h = r.get<std::uint16_t>("grid height");
  t.grid_w = r.get<std::uint16_t>("grid width");
  t.subject_id = r.get_string16("subject id");
  t.session = r.get<std::uint8_t>("session");
  const auto fp = r.take(t.fingerprint.size(), "model fingerprint");
  std::copy(fp.begin(), fp.end(), t.fingerprint.begin());
  if (t.dim == 0 || t.grid_h == 0 || t.grid_w == 0) throw FormatError("template declares an empty grid");
  const std::size_t n = t.grid_h * t.grid_w * t.dim;
  if (r.remaining() != n * 4) {
    throw FormatError("template payload holds " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(n * 4));
  }
  t.values.resize(n);
  for (auto& v : t.values) v = r.get_f32("feature values");
  return t;
}

void save_template(const std::string& path, const Template& t) { write_file_bytes(path, serialize_template(t)); }

Template load_template(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_template(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace fknet::match
