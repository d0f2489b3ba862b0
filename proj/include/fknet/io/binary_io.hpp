#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fknet {

/// Malformed or truncated binary/text input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian byte buffer writer.
class ByteWriter {
 public:
  void put_bytes(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  void put_tag(std::string_view tag) { buf_.insert(buf_.end(), tag.begin(), tag.end()); }

  template <typename U>
  void put(U value) {
    static_assert(std::is_integral_v<U>);
    using Unsigned = std::make_unsigned_t<U>;
    auto v = static_cast<Unsigned>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
  }

  void put_f32(float value) { put(std::bit_cast<std::uint32_t>(value)); }

  void put_string16(std::string_view s) {
    if (s.size() > 0xFFFF) throw FormatError("string too long for a u16 length prefix");
    put(static_cast<std::uint16_t>(s.size()));
    put_tag(s);
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked little-endian reader; every overrun is a FormatError naming the field.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string("truncated input while reading ") + what + " at byte " + std::to_string(pos_));
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename U>
  U get(const char* what) {
    static_assert(std::is_integral_v<U>);
    auto raw = take(sizeof(U), what);
    std::make_unsigned_t<U> v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::make_unsigned_t<U>>(raw[i]) << (8 * i);
    return static_cast<U>(v);
  }

  float get_f32(const char* what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }

  std::string get_string16(const char* what) {
    const auto n = get<std::uint16_t>(what);
    auto raw = take(n, what);
    return std::string(raw.begin(), raw.end());
  }

  void expect_tag(std::string_view tag, const char* what) {
    auto raw = take(tag.size(), what);
    if (!std::equal(raw.begin(), raw.end(), tag.begin())) {
      throw FormatError(std::string("bad magic for ") + what + ": expected \"" + std::string(tag) + "\"");
    }
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace fknet
