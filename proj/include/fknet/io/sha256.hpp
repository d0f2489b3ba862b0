#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace fknet {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& digest);

}  // namespace fknet
