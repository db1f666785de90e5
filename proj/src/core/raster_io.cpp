#include "facemat/core/raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace facemat {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warn(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; no objects with destructors are created
// between setjmp and the libpng calls below.
void write_png(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& pixels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  std::vector<png_bytep> rows(height);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(pixels.data() + y * stride);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, fp.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw IoError("PNG encode failed: " + path.string());
  if (std::fflush(fp.get()) != 0) throw IoError("write failed: " + path.string());
}

struct PngHeader {
  int width = 0;
  int height = 0;
  int channels = 0;
};

/// Decodes into 8-bit rows; false on any libpng error.
bool decode_png(std::FILE* fp, std::vector<std::uint8_t>& raw, std::vector<png_bytep>& rows, PngHeader& hdr) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  hdr.width = static_cast<int>(png_get_image_width(png, info));
  hdr.height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  hdr.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  raw.resize(stride * hdr.height);
  rows.resize(hdr.height);
  for (int y = 0; y < hdr.height; ++y) rows[y] = raw.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

/// Returns interleaved pixels converted to the requested channel count.
std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int want_channels,
                                   int& width, int& height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  PngHeader hdr;
  if (!decode_png(fp.get(), raw, rows, hdr)) throw IoError("corrupt PNG: " + path.string());

  width = hdr.width;
  height = hdr.height;
  const int have = hdr.channels;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<std::uint8_t> out(n * want_channels);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* px = raw.data() + i * have;
    if (want_channels == have) {
      std::copy(px, px + have, out.data() + i * want_channels);
    } else if (want_channels == 1) {
      // Luma for colour input.
      out[i] = static_cast<std::uint8_t>(std::lround(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]));
    } else {
      out[i * 3] = out[i * 3 + 1] = out[i * 3 + 2] = px[0];
    }
  }
  return out;
}

}  // namespace

std::uint8_t quantize8(double v) noexcept {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Grid<std::uint8_t> quantize(const Field& f) {
  Grid<std::uint8_t> g(f.height(), f.width());
  for (std::size_t i = 0; i < f.size(); ++i) g[i] = quantize8(f[i]);
  return g;
}

Field dequantize(const Grid<std::uint8_t>& g) {
  Field f(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) f[i] = g[i] / 255.0;
  return f;
}

void write_gray8(const std::filesystem::path& path, const Grid<std::uint8_t>& g) {
  write_png(path, g.width(), g.height(), 1, std::vector<std::uint8_t>(g.values().begin(), g.values().end()));
}

Grid<std::uint8_t> read_gray8(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto px = read_png(path, 1, w, h);
  Grid<std::uint8_t> g(h, w);
  std::copy(px.begin(), px.end(), g.data());
  return g;
}

void save_image(const std::filesystem::path& path, const ImageFrame& img) {
  const std::size_t n = static_cast<std::size_t>(img.width()) * img.height();
  std::vector<std::uint8_t> px(n * 3);
  for (int c = 0; c < 3; ++c) {
    const Field& p = img.plane(c);
    for (std::size_t i = 0; i < n; ++i) px[i * 3 + c] = quantize8(p[i]);
  }
  write_png(path, img.width(), img.height(), 3, px);
}

ImageFrame load_image(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto px = read_png(path, 3, w, h);
  ImageFrame img(h, w);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (int c = 0; c < 3; ++c) {
    Field& p = img.plane(c);
    for (std::size_t i = 0; i < n; ++i) p[i] = px[i * 3 + c] / 255.0;
  }
  return img;
}

void save_matte(const std::filesystem::path& path, const Field& alpha) {
  write_gray8(path, quantize(alpha));
}

AlphaMatte load_matte(const std::filesystem::path& path) { return dequantize(read_gray8(path)); }

void save_trimap(const std::filesystem::path& path, const Trimap& t) {
  write_gray8(path, encode_trimap(t));
}

Trimap load_trimap(const std::filesystem::path& path) { return decode_trimap(read_gray8(path)); }

}  // namespace facemat
