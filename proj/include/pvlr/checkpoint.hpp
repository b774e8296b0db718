#pragma once

// Binary tensor container used for checkpoints and dataset dumps.
//
//   "PVLR"  u32 version  u32 json_len  json  u32 count
//   count × { u16 name_len  name  u8 rank  rank × u64 dim  numel × f64 }
//
// All integers and doubles are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pvlr/tensor.hpp"

namespace pvlr {

inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedBlob {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct TensorFile {
  std::string header_json;
  std::vector<NamedBlob> tensors;

  /// Throws FormatError when no tensor has this name.
  const NamedBlob& find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file);
/// Validates magic, version and lengths; FormatError carries the byte offset.
TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace pvlr
