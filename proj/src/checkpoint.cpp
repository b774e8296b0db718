#include "pvlr/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

#include "pvlr/errors.hpp"

namespace pvlr {

const NamedBlob& TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw FormatError("tensor file has no entry '" + name + "'", 0);
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated tensor file while reading ") + what, pos_);
    }
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file) {
  std::vector<std::uint8_t> out{'P', 'V', 'L', 'R'};
  put_le<std::uint32_t>(out, kTensorFileVersion);
  if (file.header_json.size() > std::numeric_limits<std::uint32_t>::max()) throw IoError("header too large");
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.header_json.size()));
  out.insert(out.end(), file.header_json.begin(), file.header_json.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) throw IoError("tensor name too long: " + t.name);
    if (t.shape.size() > std::numeric_limits<std::uint8_t>::max()) throw IoError("tensor rank too large: " + t.name);
    if (shape_numel(t.shape) != t.values.size()) throw DimensionError("tensor '" + t.name + "' shape/value mismatch");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto dim : t.shape) put_le<std::uint64_t>(out, dim);
    for (double v : t.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.text(4, "magic") != "PVLR") throw FormatError("bad magic, not a PVLR tensor file", 0);
  const std::size_t version_at = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorFileVersion) {
    throw FormatError("unsupported tensor file version " + std::to_string(version), version_at);
  }
  TensorFile file;
  const auto json_len = r.get<std::uint32_t>("header length");
  file.header_json = r.text(json_len, "header");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedBlob blob;
    const auto name_len = r.get<std::uint16_t>("name length");
    blob.name = r.text(name_len, "name");
    const auto rank = r.get<std::uint8_t>("rank");
    std::size_t numel = 1;
    for (std::uint8_t a = 0; a < rank; ++a) {
      const std::size_t dim_at = r.pos();
      const auto dim = r.get<std::uint64_t>("dims");
      if (dim != 0 && numel > r.remaining() / 8 / dim + 1) throw FormatError("implausible tensor size", dim_at);
      blob.shape.push_back(static_cast<std::size_t>(dim));
      numel *= static_cast<std::size_t>(dim);
    }
    r.need(numel * 8, "values");
    blob.values.resize(numel);
    for (auto& v : blob.values) v = std::bit_cast<double>(r.get<std::uint64_t>("values"));
    file.tensors.push_back(std::move(blob));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last tensor", r.pos());
  return file;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  const auto bytes = encode_tensor_file(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor_file(bytes);
}

}  // namespace pvlr
