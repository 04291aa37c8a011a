#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace avatarforge {

enum class DType : uint8_t { kF32 = 0, kU32 = 1, kF64 = 2 };

// A named, shaped array as stored in the binary containers (AVBM assets,
// AVCK checkpoints). Data is row-major.
struct Tensor {
  std::string name;
  std::vector<uint64_t> shape;
  std::variant<std::vector<float>, std::vector<uint32_t>, std::vector<double>> data;

  DType dtype() const { return static_cast<DType>(data.index()); }
  uint64_t element_count() const;
  // Converting accessors; throw InputError on a dtype that cannot convert.
  std::vector<double> as_f64() const;
  std::vector<uint32_t> as_u32() const;
};

// Little-endian container:
//   magic[4] | version u32 | metadata (u32 length + UTF-8 bytes) |
//   tensor count u32 | per tensor: name (u32 length + bytes), dtype u8,
//   ndim u32, dims u64[ndim], payload.
struct TensorFile {
  std::string magic;
  uint32_t version = 1;
  std::string metadata;
  std::vector<Tensor> tensors;

  const Tensor& get(const std::string& name) const;
  const Tensor* find(const std::string& name) const;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
std::vector<uint8_t> serialize_tensor_file(const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path, const std::string& expected_magic);
TensorFile parse_tensor_file(const std::vector<uint8_t>& bytes, const std::string& expected_magic);

}  // namespace avatarforge
