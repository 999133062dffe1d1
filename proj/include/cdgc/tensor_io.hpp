#pragma once

#include <filesystem>

#include "cdgc/tensor.hpp"

namespace cdgc {

/// Write a float tensor to a CDT1 file: the magic bytes "CDT1", the rank as a
/// little-endian u32, each dimension as a little-endian u32, then the
/// row-major float32 payload in little-endian IEEE-754.  Round-trips are
/// bit-exact.
void save_tensor(const std::filesystem::path& path, const TensorF& tensor);

/// Read a CDT1 file written by save_tensor.  Throws DataError on a missing
/// file, bad magic, or a truncated or oversized payload.
TensorF load_tensor(const std::filesystem::path& path);

}  // namespace cdgc
