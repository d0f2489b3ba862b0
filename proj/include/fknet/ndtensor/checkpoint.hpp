#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fknet/ndtensor/tensor.hpp"

namespace fknet {

/// Weight file layout (all little-endian):
///   "FKW1" | version u16 | entry count u32
///   per entry: name (u16 length + bytes) | rank u8 | dims u32 x rank | data offset u64
///   raw f32 payload; offsets are bytes from the start of the payload.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

using StateDict = std::vector<NamedTensor>;

std::vector<std::uint8_t> serialize_checkpoint(const StateDict& state);
StateDict parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const StateDict& state);
StateDict load_checkpoint(const std::string& path);

}  // namespace fknet
