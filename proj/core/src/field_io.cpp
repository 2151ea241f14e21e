#include "georeg/field_io.hpp"

#include "georeg/binio.hpp"

namespace georeg {

std::vector<std::uint8_t> encode_field(const DeformationField& field) {
  if (field.data.size() != field.height * field.width * 2) {
    throw DataError("field payload does not match its extents");
  }
  binio::Writer w;
  w.bytes("GRDF", 4);
  w.le<std::uint32_t>(kFieldVersion);
  w.le<std::uint32_t>(std::uint32_t(field.height));
  w.le<std::uint32_t>(std::uint32_t(field.width));
  for (float f : field.data) w.f32(f);
  return w.data();
}

DeformationField decode_field(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes);
  if (r.str(4, "truncated header") != "GRDF") throw ParseError("bad field magic", 0);
  const auto version = r.le<std::uint32_t>("truncated header");
  if (version != kFieldVersion) throw ParseError("unsupported field version " + std::to_string(version), 4);
  DeformationField f;
  f.height = r.le<std::uint32_t>("truncated header");
  f.width = r.le<std::uint32_t>("truncated header");
  if (f.height == 0 || f.width == 0) throw ParseError("field shape has zero extent", 8);
  const std::size_t n = f.height * f.width * 2;
  r.need(n * 4, "truncated payload");
  f.data.resize(n);
  for (auto& v : f.data) v = r.f32("truncated payload");
  if (!r.at_end()) throw ParseError("field shape mismatch: trailing bytes", r.pos());
  return f;
}

void write_field(const std::string& path, const DeformationField& field) {
  binio::write_file(path, encode_field(field));
}

DeformationField read_field(const std::string& path) { return decode_field(binio::read_file(path)); }

}  // namespace georeg
