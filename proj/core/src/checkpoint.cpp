#include "georeg/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "georeg/binio.hpp"

namespace georeg {

namespace binio {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace binio

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& entries) {
  binio::Writer w;
  w.bytes("GRCK", 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(std::uint32_t(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw DataError("checkpoint entry name too long: " + e.name.substr(0, 32) + "...");
    }
    if (e.shape.size() > 255) throw DataError("checkpoint entry rank exceeds 255: " + e.name);
    if (ad::shape_numel(e.shape) != e.data.size()) {
      throw DataError("checkpoint entry '" + e.name + "' has inconsistent payload size");
    }
    w.le<std::uint16_t>(std::uint16_t(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint8_t>(std::uint8_t(e.shape.size()));
    for (auto ext : e.shape) w.le<std::uint32_t>(std::uint32_t(ext));
    for (float f : e.data) w.f32(f);
  }
  return w.data();
}

std::vector<NamedArray> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes);
  if (r.str(4, "truncated header") != "GRCK") throw ParseError("bad checkpoint magic", 0);
  const auto version = r.le<std::uint32_t>("truncated header");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const auto count = r.le<std::uint32_t>("truncated header");
  std::vector<NamedArray> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray e;
    const auto len = r.le<std::uint16_t>("truncated entry header");
    e.name = r.str(len, "truncated entry name");
    const auto rank = r.le<std::uint8_t>("truncated entry header");
    for (std::uint8_t d = 0; d < rank; ++d) e.shape.push_back(r.le<std::uint32_t>("truncated extents"));
    const std::size_t n = ad::shape_numel(e.shape);
    r.need(n * 4, "truncated payload");
    e.data.resize(n);
    for (auto& f : e.data) f = r.f32("truncated payload");
    out.push_back(std::move(e));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after checkpoint", r.pos());
  return out;
}

void write_checkpoint(const std::string& path, const std::vector<NamedArray>& entries) {
  binio::write_file(path, encode_checkpoint(entries));
}

std::vector<NamedArray> read_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path));
}

}  // namespace georeg
