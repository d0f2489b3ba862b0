#include "fknet/ndtensor/checkpoint.hpp"

#include <limits>
#include <set>

#include "fknet/io/binary_io.hpp"

namespace fknet {

std::vector<std::uint8_t> serialize_checkpoint(const StateDict& state) {
  ByteWriter w;
  w.put_tag("FKW1");
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(state.size()));
  std::uint64_t offset = 0;
  for (const auto& entry : state) {
    w.put_string16(entry.name);
    const auto& shape = entry.tensor.shape();
    if (shape.size() > std::numeric_limits<std::uint8_t>::max()) throw FormatError("tensor rank too large");
    w.put(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.put(static_cast<std::uint32_t>(d));
    w.put(offset);
    offset += entry.tensor.numel() * sizeof(float);
  }
  for (const auto& entry : state) {
    for (float v : entry.tensor.data()) w.put_f32(v);
  }
  return w.take();
}

StateDict parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_tag("FKW1", "checkpoint");
  const auto version = r.get<std::uint16_t>("checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("checkpoint entry count");
  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.get_string16("checkpoint entry name");
    if (!names.insert(e.name).second) throw FormatError("duplicate checkpoint entry " + e.name);
    const auto rank = r.get<std::uint8_t>("checkpoint entry rank");
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint32_t>("checkpoint entry shape");
      if (d == 0) throw FormatError("checkpoint entry " + e.name + " has a zero dimension");
      e.shape.push_back(d);
    }
    e.offset = r.get<std::uint64_t>("checkpoint entry offset");
    entries.push_back(std::move(e));
  }
  const std::size_t payload_start = r.position();
  const std::size_t payload_size = r.remaining();
  StateDict state;
  for (const auto& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    if (e.offset > payload_size || n * sizeof(float) > payload_size - e.offset) {
      throw FormatError("checkpoint entry " + e.name + " runs past the end of the file (truncated?)");
    }
    ByteReader data(bytes.subspan(payload_start + e.offset, n * sizeof(float)));
    std::vector<float> values(n);
    for (auto& v : values) v = data.get_f32("checkpoint payload");
    state.push_back({e.name, Tensor<float>(e.shape, std::move(values))});
  }
  return state;
}

void save_checkpoint(const std::string& path, const StateDict& state) {
  write_file_bytes(path, serialize_checkpoint(state));
}

StateDict load_checkpoint(const std::string& path) { return parse_checkpoint(read_file_bytes(path)); }

}  // namespace fknet
