#include "fknet/photostereo/photostereo.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fknet/io/binary_io.hpp"

namespace fknet::photostereo {

namespace {

Eigen::MatrixX3d light_matrix(const LightSet& lights) {
  Eigen::MatrixX3d L(static_cast<Eigen::Index>(lights.size()), 3);
  for (std::size_t i = 0; i < lights.size(); ++i) {
    for (int j = 0; j < 3; ++j) L(static_cast<Eigen::Index>(i), j) = lights.directions()[i][j];
  }
  return L;
}

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

}  // namespace

LightSet::LightSet(std::vector<Vec3> directions) : directions_(std::move(directions)) {
  if (directions_.size() < 3) {
    throw ContractViolation("a light set needs at least 3 directions, got " + std::to_string(directions_.size()));
  }
  for (std::size_t i = 0; i < directions_.size(); ++i) {
    if (std::abs(norm(directions_[i]) - 1.0) > 1e-9) {
      throw ContractViolation("light direction " + std::to_string(i) + " is not unit length");
    }
  }
}

LightSet LightSet::from_unnormalized(std::vector<Vec3> directions) {
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const double n = norm(directions[i]);
    if (n == 0.0 || !std::isfinite(n)) throw ContractViolation("light direction " + std::to_string(i) + " is zero");
    for (auto& c : directions[i]) c /= n;
  }
  return LightSet(std::move(directions));
}

LightSet LightSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open light file " + path);
  std::vector<Vec3> dirs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Vec3 v;
    if (!(ls >> v[0])) continue;
    if (!(ls >> v[1] >> v[2])) throw FormatError(path + ":" + std::to_string(lineno) + ": expected \"lx ly lz\"");
    std::string extra;
    if (ls >> extra) throw FormatError(path + ":" + std::to_string(lineno) + ": trailing data");
    dirs.push_back(v);
  }
  return from_unnormalized(std::move(dirs));
}

int LightSet::rank() const {
  Eigen::JacobiSVD<Eigen::MatrixX3d> svd(light_matrix(*this));
  const auto& s = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > 1e-9 * s(0)) ++r;
  }
  return r;
}

ImageStack ImageStack::from_images(const std::vector<Image>& images) {
  ImageStack stack;
  if (images.empty()) return stack;
  stack.height = images.front().height;
  stack.width = images.front().width;
  for (const auto& img : images) {
    if (img.height != stack.height || img.width != stack.width) {
      throw ContractViolation("stack images differ in size");
    }
    std::vector<double> gray(img.height * img.width);
    for (std::size_t i = 0; i < gray.size(); ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < img.channels; ++c) acc += img.values[i * img.channels + c];
      gray[i] = acc / static_cast<double>(img.channels);
    }
    stack.images.push_back(std::move(gray));
  }
  return stack;
}

void ImageStack::validate(std::size_t expected_count) const {
  if (images.size() != expected_count) {
    throw ContractViolation("stack has " + std::to_string(images.size()) + " images but " +
                            std::to_string(expected_count) + " lights");
  }
  for (const auto& img : images) {
    if (img.size() != height * width) throw ContractViolation("stack image has the wrong pixel count");
  }
}

Reconstruction recover_normals(const ImageStack& stack, const LightSet& lights, double threshold) {
  if (lights.rank() < 3) throw RankDeficientLights("light directions are rank deficient (rank < 3)");
  stack.validate(lights.size());
  const Eigen::MatrixX3d L = light_matrix(lights);
  // (L^T L)^-1 L^T via a rank-revealing solve.
  const Eigen::Matrix<double, 3, Eigen::Dynamic> pinv =
      L.completeOrthogonalDecomposition().pseudoInverse();

  Reconstruction out;
  const std::size_t P = stack.height * stack.width;
  out.normals = {stack.height, stack.width, std::vector<Vec3>(P, Vec3{0, 0, 1}), std::vector<std::uint8_t>(P, 0)};
  out.albedo = {stack.height, stack.width, std::vector<double>(P, 0.0)};
  const std::size_t k = lights.size();
  for (std::size_t p = 0; p < P; ++p) {
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < k; ++i) g += pinv.col(static_cast<Eigen::Index>(i)) * stack.images[i][p];
    const double rho = g.norm();
    if (!(rho > threshold) || g.z() < 0.0) continue;
    const Eigen::Vector3d n = g / rho;
    out.normals.normals[p] = {n.x(), n.y(), n.z()};
    out.normals.valid[p] = 1;
    out.albedo.albedo[p] = rho;
  }
  return out;
}

Tensor<float> render_invariant(const NormalMap& normals) {
  const auto H = normals.height, W = normals.width;
  Tensor<float> out({3, H, W});
  for (std::size_t p = 0; p < H * W; ++p) {
    const Vec3 n = normals.valid[p] ? normals.normals[p] : Vec3{0, 0, 1};
    for (std::size_t c = 0; c < 3; ++c) out[c * H * W + p] = static_cast<float>((n[c] + 1.0) * 0.5);
  }
  return out;
}

Vec3 decode_invariant(double r, double g, double b) {
  Vec3 n{2.0 * r - 1.0, 2.0 * g - 1.0, 2.0 * b - 1.0};
  const double len = norm(n);
  if (len == 0.0) return {0, 0, 1};
  for (auto& c : n) c /= len;
  return n;
}

ImageStack render_lambertian(const NormalMap& normals, const AlbedoMap& albedo, const LightSet& lights) {
  ImageStack stack;
  stack.height = normals.height;
  stack.width = normals.width;
  const std::size_t P = normals.height * normals.width;
  for (const auto& l : lights.directions()) {
    std::vector<double> img(P, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
      const auto& n = normals.normals[p];
      img[p] = std::max(0.0, albedo.albedo[p] * (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]));
    }
    stack.images.push_back(std::move(img));
  }
  return stack;
}

}  // namespace fknet::photostereo
