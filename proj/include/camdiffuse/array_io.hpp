#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace camdiffuse {

// float32 and uint8 cover all tensors and masks; uint32 exists solely for the
// compressed-sparse-row index arrays of the refined-attention layout. Any
// other on-disk dtype is rejected, never converted.
enum class Dtype { Float32, Uint8, Uint32 };

std::size_t dtype_itemsize(Dtype dtype);
const char* dtype_descr(Dtype dtype);

// An n-dimensional C-order little-endian array as stored on disk (NPY v1.0).
struct ArrayFile {
  Dtype dtype = Dtype::Float32;
  std::vector<std::size_t> shape;
  std::vector<std::byte> data;  // raw payload, element_count() * itemsize bytes

  std::size_t element_count() const;

  std::span<const float> f32() const;
  std::span<const std::uint8_t> u8() const;
  std::span<const std::uint32_t> u32() const;

  static ArrayFile from_f32(std::vector<std::size_t> shape,
                            std::span<const float> values);
  static ArrayFile from_u8(std::vector<std::size_t> shape,
                           std::span<const std::uint8_t> values);
  static ArrayFile from_u32(std::vector<std::size_t> shape,
                            std::span<const std::uint32_t> values);
};

ArrayFile read_array(const std::filesystem::path& path);
void write_array(const std::filesystem::path& path, const ArrayFile& arr);

}  // namespace camdiffuse
