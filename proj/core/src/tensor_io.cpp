#include "pseudoseg/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

namespace {

constexpr char kMagic[4] = {'B', 'T', 'S', 'R'};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32:
      return 4;
    case DType::kF64:
      return 8;
  }
  return 0;
}

template <class UInt>
void put_le(std::vector<std::uint8_t>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

template <class UInt>
UInt get_le(const std::uint8_t* p) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& why) {
  throw TensorFormatError("backend", path.string() + ": " + why);
}

}  // namespace

std::size_t Tensor::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor Tensor::from_f32(std::vector<std::uint64_t> dims, std::span<const float> values) {
  Tensor t{DType::kF32, std::move(dims), {}};
  if (t.element_count() != values.size()) {
    throw DimensionMismatchError("backend", "tensor dims do not match value count");
  }
  t.payload.reserve(values.size() * 4);
  for (float v : values) put_le(t.payload, std::bit_cast<std::uint32_t>(v));
  return t;
}

Tensor Tensor::from_f64(std::vector<std::uint64_t> dims, std::span<const double> values) {
  Tensor t{DType::kF64, std::move(dims), {}};
  if (t.element_count() != values.size()) {
    throw DimensionMismatchError("backend", "tensor dims do not match value count");
  }
  t.payload.reserve(values.size() * 8);
  for (double v : values) put_le(t.payload, std::bit_cast<std::uint64_t>(v));
  return t;
}

std::vector<float> Tensor::to_f32() const {
  if (dtype != DType::kF32) throw TensorFormatError("backend", "tensor is not f32");
  std::vector<float> out(element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<float>(get_le<std::uint32_t>(&payload[4 * i]));
  }
  return out;
}

std::vector<double> Tensor::to_f64() const {
  if (dtype != DType::kF64) throw TensorFormatError("backend", "tensor is not f64");
  std::vector<double> out(element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(&payload[8 * i]));
  }
  return out;
}

std::size_t tensor_header_size(std::size_t ndim) { return 4 + 1 + 1 + 1 + 8 * ndim; }

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  if (tensor.dims.size() > 255) throw TensorFormatError("backend", "too many dimensions");
  if (tensor.payload.size() != tensor.element_count() * dtype_size(tensor.dtype)) {
    throw DimensionMismatchError("backend", path.string() + ": payload does not match dims");
  }
  std::vector<std::uint8_t> header(std::begin(kMagic), std::end(kMagic));
  header.push_back(kTensorVersion);
  header.push_back(static_cast<std::uint8_t>(tensor.dtype));
  header.push_back(static_cast<std::uint8_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_le<std::uint64_t>(header, d);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BackendError("backend", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(header.data()),
            static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(tensor.payload.data()),
            static_cast<std::streamsize>(tensor.payload.size()));
  if (!out) throw BackendError("backend", "short write to " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad(path, "cannot open tensor file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < tensor_header_size(0)) bad(path, "truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) bad(path, "bad magic, expected BTSR");
  if (bytes[4] != kTensorVersion) bad(path, "unsupported version " + std::to_string(bytes[4]));
  const auto dtype = static_cast<DType>(bytes[5]);
  if (dtype_size(dtype) == 0) bad(path, "unknown dtype code " + std::to_string(bytes[5]));
  const std::size_t ndim = bytes[6];
  const std::size_t header = tensor_header_size(ndim);
  if (bytes.size() < header) bad(path, "truncated dims");
  Tensor t{dtype, {}, {}};
  for (std::size_t i = 0; i < ndim; ++i) t.dims.push_back(get_le<std::uint64_t>(&bytes[7 + 8 * i]));
  const std::size_t expected = t.element_count() * dtype_size(dtype);
  if (bytes.size() - header != expected) {
    bad(path, "payload is " + std::to_string(bytes.size() - header) + " bytes, dims require " +
                  std::to_string(expected));
  }
  t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

}  // namespace pseudoseg
