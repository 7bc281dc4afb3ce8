#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pseudoseg {

// BTSR tensor file, all integers little-endian:
//   "BTSR" | version:u8 (=1) | dtype:u8 | ndim:u8 | dims:u64[ndim] | payload
// dtype 1 = f32, 2 = f64. Payload is row-major, last dimension fastest.
enum class DType : std::uint8_t { kF32 = 1, kF64 = 2 };

inline constexpr std::uint8_t kTensorVersion = 1;

struct Tensor {
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> payload;  // little-endian element bytes

  std::size_t element_count() const noexcept;

  static Tensor from_f32(std::vector<std::uint64_t> dims, std::span<const float> values);
  static Tensor from_f64(std::vector<std::uint64_t> dims, std::span<const double> values);
  std::vector<float> to_f32() const;
  std::vector<double> to_f64() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t tensor_header_size(std::size_t ndim);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
// Throws TensorFormatError naming the path on any header or length problem.
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace pseudoseg
