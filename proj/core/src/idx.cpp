#include "georeg/idx.hpp"

#include "georeg/binio.hpp"
#include "georeg/errors.hpp"

namespace georeg {
namespace {

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at, const char* what) {
  if (at + 4 > b.size()) throw ParseError(what, at);
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

}  // namespace

IdxHeader parse_idx_header(const std::vector<std::uint8_t>& bytes) {
  IdxHeader h;
  h.magic = be32(bytes, 0, "truncated header");
  if ((h.magic >> 16) != 0 || ((h.magic >> 8) & 0xff) != 0x08) {
    throw ParseError("bad IDX magic", 0);
  }
  const std::size_t rank = h.magic & 0xff;
  if (rank == 0) throw ParseError("bad IDX magic", 0);
  for (std::size_t d = 0; d < rank; ++d) h.dims.push_back(be32(bytes, 4 + 4 * d, "truncated header"));
  h.payload_offset = 4 + 4 * rank;
  return h;
}

std::vector<ImageGrid> decode_idx_images(const std::vector<std::uint8_t>& bytes) {
  const IdxHeader h = parse_idx_header(bytes);
  if (h.magic != kIdxImageMagic) throw ParseError("bad IDX magic for image file", 0);
  const std::size_t count = h.dims[0], rows = h.dims[1], cols = h.dims[2];
  const std::size_t need = h.payload_offset + count * rows * cols;
  if (bytes.size() < need) throw ParseError("truncated payload", bytes.size());
  std::vector<ImageGrid> out;
  out.reserve(count);
  std::size_t at = h.payload_offset;
  for (std::size_t n = 0; n < count; ++n) {
    ImageGrid g = ImageGrid::zeros(rows, cols);
    for (auto& v : g.pixels) v = float(bytes[at++]) / 255.0f;
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::uint8_t> decode_idx_labels(const std::vector<std::uint8_t>& bytes) {
  const IdxHeader h = parse_idx_header(bytes);
  if (h.magic != kIdxLabelMagic) throw ParseError("bad IDX magic for label file", 0);
  const std::size_t count = h.dims[0];
  if (bytes.size() < h.payload_offset + count) throw ParseError("truncated payload", bytes.size());
  return {bytes.begin() + std::ptrdiff_t(h.payload_offset),
          bytes.begin() + std::ptrdiff_t(h.payload_offset + count)};
}

LabeledImages load_idx(const std::string& images_path, const std::string& labels_path) {
  LabeledImages out;
  out.images = decode_idx_images(binio::read_file(images_path));
  if (!labels_path.empty()) {
    out.labels = decode_idx_labels(binio::read_file(labels_path));
    if (out.labels.size() != out.images.size()) {
      throw DataError("label count " + std::to_string(out.labels.size()) +
                      " does not match image count " + std::to_string(out.images.size()));
    }
  }
  return out;
}

}  // namespace georeg
