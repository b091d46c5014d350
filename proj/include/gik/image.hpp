#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "gik/error.hpp"
#include "gik/text.hpp"

namespace gik {

// Interleaved 8-bit raster, row-major, `channels` values per pixel.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return pixels.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image&) const = default;
};

// One rendered video frame: the raster plus the instant it represents.
struct Frame {
  Image image;
  double t_center = 0.0;

  bool operator==(const Frame&) const = default;
};

inline Image gray_to_rgb(const Image& gray) {
  if (gray.channels == 3) return gray;
  Image out(gray.height, gray.width, 3);
  for (std::size_t i = 0; i < gray.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = gray.pixels[i];
  return out;
}

// ---- PGM (binary P5, maxval 255) ------------------------------------------

inline std::string encode_pgm(const Image& img) {
  if (img.channels != 1) throw InvariantError("PGM output needs a single-channel image");
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline Image decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      return;
    }
  };
  auto read_int = [&]() -> int {
    skip_ws();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    auto v = text::to_int<int>(std::string_view(bytes).substr(start, pos - start));
    if (!v) throw ParseError("bad PGM header");
    return *v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("not a binary PGM");
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw ParseError("unsupported PGM geometry or maxval");
  ++pos;  // single whitespace before raster
  Image img(h, w, 1);
  if (bytes.size() - pos < img.pixels.size()) throw ParseError("truncated PGM raster");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(),
              img.pixels.begin());
  return img;
}

// ---- PNG via libpng ---------------------------------------------------------

inline void write_png(const std::string& path, const Image& img, int compression = 1) {
  if (img.channels != 1 && img.channels != 3)
    throw InvariantError("PNG output supports 1 or 3 channels");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, compression);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + stride * y));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads 8-bit gray or RGB; palette, 16-bit and alpha inputs are converted.
inline Image read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("invalid PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  Image img(static_cast<int>(png_get_image_height(png, info)),
            static_cast<int>(png_get_image_width(png, info)), channels);
  const std::size_t stride = static_cast<std::size_t>(img.width) * channels;
  for (int y = 0; y < img.height; ++y) png_read_row(png, img.pixels.data() + stride * y, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Base images are single-channel; RGB input is reduced by channel mean.
inline Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.height, img.width, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    unsigned sum = 0;
    for (int c = 0; c < img.channels; ++c) sum += img.pixels[i * img.channels + c];
    out.pixels[i] = static_cast<std::uint8_t>((sum + img.channels / 2) / img.channels);
  }
  return out;
}

// Loads a grayscale base image from .pgm or .png, chosen by extension.
inline Image load_gray_image(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0)
    return decode_pgm(text::read_file(path));
  return to_gray(read_png(path));
}

inline void save_gray_image(const std::string& path, const Image& img) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".pgm") == 0)
    text::write_file(path, encode_pgm(img));
  else
    write_png(path, img);
}

}  // namespace gik
