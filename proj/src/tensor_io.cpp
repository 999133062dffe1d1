#include "cdgc/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace cdgc {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "tensor files assume a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "tensor files assume 32-bit IEEE-754 floats");

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw DataError("truncated tensor file: " + path.string());
  return v;
}

}  // namespace

void save_tensor(const std::filesystem::path& path, const TensorF& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());

  out.write(kMagic, sizeof(kMagic));
  const Shape& shape = tensor.shape();
  if (shape.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError("tensor rank too large for file format");
  }
  write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t dim : shape) {
    if (dim > std::numeric_limits<std::uint32_t>::max()) {
      throw DataError("tensor dimension too large for file format");
    }
    write_u32(out, static_cast<std::uint32_t>(dim));
  }
  out.write(reinterpret_cast<const char*>(tensor.values().data()),
            static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());
}

TensorF load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor file: " + path.string());

  char magic[4] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a tensor file: " + path.string());
  }

  const std::uint32_t rank = read_u32(in, path);
  Shape shape(rank);
  std::size_t numel = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    shape[d] = read_u32(in, path);
    numel *= shape[d];
  }

  std::vector<float> values(numel);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(numel * sizeof(float)));
  if (!in) throw DataError("truncated tensor file: " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes in tensor file: " + path.string());
  }
  return TensorF::from(std::move(shape), std::move(values));
}

}  // namespace cdgc
