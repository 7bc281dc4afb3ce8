#include "pseudoseg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("raster", "cannot open " + path.string());
  return f;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (rgb)
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint8_t> bytes;
};

enum class Want { kRgb8, kGray8OrRgb8, kGray16 };

Decoded decode(const std::filesystem::path& path, Want want) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("raster", path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("raster", "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("raster", "png_create_info_struct failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("raster", path.string() + ": corrupt PNG data");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);

  const bool is_gray = (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA);
  if (want == Want::kGray16) {
    if (!is_gray) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw DataError("raster", path.string() + ": expected a grayscale label image");
    }
  } else {
    png_set_strip_16(png);
    if (want == Want::kRgb8 && is_gray) png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.bytes.resize(rowbytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, int width, int height, int channels,
            int bit_depth, const std::vector<std::uint8_t>& bytes) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("raster", "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("raster", "png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("raster", path.string() + ": PNG write failed");
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes =
      static_cast<std::size_t>(width) * channels * (bit_depth == 16 ? 2 : 1);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(bytes.data() + rowbytes * y);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Raster read_rgb(const std::filesystem::path& path) {
  Decoded d = decode(path, Want::kRgb8);
  Raster out(d.width, d.height, 3);
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = d.bytes[i] / 255.0f;
  return out;
}

void write_rgb(const std::filesystem::path& path, const Raster& image) {
  if (image.channels() != 3) throw DataError("raster", "write_rgb needs a 3-channel raster");
  std::vector<std::uint8_t> bytes(image.data().size());
  std::transform(image.data().begin(), image.data().end(), bytes.begin(), to_byte);
  encode(path, image.width(), image.height(), 3, 8, bytes);
}

BinaryMask read_mask(const std::filesystem::path& path) {
  Decoded d = decode(path, Want::kGray8OrRgb8);
  BinaryMask out(d.width, d.height);
  auto bits = out.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    bool fg = false;
    for (int c = 0; c < d.channels; ++c) fg = fg || d.bytes[i * d.channels + c] != 0;
    bits[i] = fg ? 1 : 0;
  }
  return out;
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> bytes(mask.bits().size());
  std::transform(mask.bits().begin(), mask.bits().end(), bytes.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
  encode(path, mask.width(), mask.height(), 1, 8, bytes);
}

void write_gray(const std::filesystem::path& path, const Raster& plane) {
  if (plane.channels() != 1) throw DataError("raster", "write_gray needs a 1-channel raster");
  std::vector<std::uint8_t> bytes(plane.data().size());
  std::transform(plane.data().begin(), plane.data().end(), bytes.begin(), to_byte);
  encode(path, plane.width(), plane.height(), 1, 8, bytes);
}

void write_label_image(const std::filesystem::path& path, const LabelImage& labels) {
  if (labels.values.size() !=
      static_cast<std::size_t>(labels.width) * static_cast<std::size_t>(labels.height)) {
    throw DataError("raster", "label image size mismatch");
  }
  std::vector<std::uint8_t> bytes(labels.values.size() * 2);
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(labels.values[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(labels.values[i] & 0xFF);
  }
  encode(path, labels.width, labels.height, 1, 16, bytes);
}

LabelImage read_label_image(const std::filesystem::path& path) {
  Decoded d = decode(path, Want::kGray16);
  LabelImage out{d.width, d.height, {}};
  out.values.resize(static_cast<std::size_t>(d.width) * static_cast<std::size_t>(d.height));
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (d.bit_depth == 16) {
      out.values[i] = static_cast<std::uint16_t>((d.bytes[2 * i] << 8) | d.bytes[2 * i + 1]);
    } else {
      out.values[i] = d.bytes[i];
    }
  }
  return out;
}

}  // namespace pseudoseg
