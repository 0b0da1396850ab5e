#pragma once

// Image files.
//
//   .vimg  16-byte header "VIMG" u32 height, u32 width, u32 channels (all
//          little-endian), then height*width*channels little-endian float32
//          samples in planar order. Round trips are bit-exact for values
//          representable as float32.
//   .png   8-bit grayscale or RGB; saving clamps to [0,1] and quantizes with
//          round(v * 255).

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "vista/error.hpp"
#include "vista/image.hpp"

namespace vista {

namespace detail {

inline void put_u32_le(std::uint8_t* out, std::uint32_t v) noexcept {
  out[0] = static_cast<std::uint8_t>(v);
  out[1] = static_cast<std::uint8_t>(v >> 8);
  out[2] = static_cast<std::uint8_t>(v >> 16);
  out[3] = static_cast<std::uint8_t>(v >> 24);
}

inline std::uint32_t get_u32_le(const std::uint8_t* in) noexcept {
  return static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
         (static_cast<std::uint32_t>(in[2]) << 16) |
         (static_cast<std::uint32_t>(in[3]) << 24);
}

inline void put_f32_le(std::uint8_t* out, double v) noexcept {
  put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline double get_f32_le(const std::uint8_t* in) noexcept {
  return static_cast<double>(std::bit_cast<float>(get_u32_le(in)));
}

// Upper bound on samples accepted from a header (1 GiB of float32).
inline constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 28;

inline Dims checked_dims(std::uint64_t h, std::uint64_t w, std::uint64_t c,
                         const std::string& what) {
  if (h == 0 || w == 0 || (c != 1 && c != 3))
    throw IoError(what + ": invalid dims " + std::to_string(h) + "x" +
                  std::to_string(w) + "x" + std::to_string(c));
  if (h > kMaxSamples || w > kMaxSamples || h * w > kMaxSamples / c)
    throw IoError(what + ": dimension overflow");
  return Dims{static_cast<std::size_t>(h), static_cast<std::size_t>(w),
              static_cast<std::size_t>(c)};
}

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_vimg(const Image& x) {
  std::vector<std::uint8_t> bytes(16 + 4 * x.size());
  std::memcpy(bytes.data(), "VIMG", 4);
  detail::put_u32_le(bytes.data() + 4, static_cast<std::uint32_t>(x.height()));
  detail::put_u32_le(bytes.data() + 8, static_cast<std::uint32_t>(x.width()));
  detail::put_u32_le(bytes.data() + 12, static_cast<std::uint32_t>(x.channels()));
  for (std::size_t i = 0; i < x.size(); ++i) detail::put_f32_le(bytes.data() + 16 + 4 * i, x[i]);
  return bytes;
}

inline Image decode_vimg(std::span<const std::uint8_t> bytes, const std::string& what = "vimg") {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "VIMG", 4) != 0)
    throw IoError(what + ": missing VIMG header");
  const Dims dims = detail::checked_dims(detail::get_u32_le(bytes.data() + 4),
                                         detail::get_u32_le(bytes.data() + 8),
                                         detail::get_u32_le(bytes.data() + 12), what);
  if (bytes.size() != 16 + 4 * dims.size())
    throw IoError(what + ": payload size " + std::to_string(bytes.size() - 16) +
                  " does not match header dims " + dims.str());
  Image out(dims);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_f32_le(bytes.data() + 16 + 4 * i);
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline Image load_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  Dims dims;
  try {
    dims = detail::checked_dims(img.height, img.width, channels, path.string());
  } catch (...) {
    png_image_free(&img);
    throw;
  }
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  Image out(dims);
  for (std::size_t y = 0; y < dims.height; ++y)
    for (std::size_t x = 0; x < dims.width; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        out.at(c, y, x) = buf[(y * dims.width + x) * channels + c] / 255.0;
  return out;
}

inline void save_png(const std::filesystem::path& path, const Image& x) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(x.width());
  img.height = static_cast<png_uint_32>(x.height());
  img.format = x.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t ch = x.channels();
  std::vector<png_byte> buf(x.size());
  for (std::size_t y = 0; y < x.height(); ++y)
    for (std::size_t col = 0; col < x.width(); ++col)
      for (std::size_t c = 0; c < ch; ++c) {
        double v = x.at(c, y, col);
        v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        buf[(y * x.width() + col) * ch + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
}

inline Image load_image(const std::filesystem::path& path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".vimg") return decode_vimg(read_file_bytes(path), path.string());
  if (ext == ".png") return load_png(path);
  throw IoError("unsupported image format '" + ext + "': " + path.string());
}

inline void save_image(const std::filesystem::path& path, const Image& x) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".vimg") {
    write_file_bytes(path, encode_vimg(x));
  } else if (ext == ".png") {
    save_png(path, x);
  } else {
    throw IoError("unsupported image format '" + ext + "': " + path.string());
  }
}

}  // namespace vista
