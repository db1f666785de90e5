#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "facemat/core/types.hpp"

namespace facemat {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit lossless PNG codecs. Values are quantized with round(v*255).
void write_gray8(const std::filesystem::path& path, const Grid<std::uint8_t>& g);
Grid<std::uint8_t> read_gray8(const std::filesystem::path& path);

void save_image(const std::filesystem::path& path, const ImageFrame& img);
ImageFrame load_image(const std::filesystem::path& path);

void save_matte(const std::filesystem::path& path, const Field& alpha);
AlphaMatte load_matte(const std::filesystem::path& path);

void save_trimap(const std::filesystem::path& path, const Trimap& t);
Trimap load_trimap(const std::filesystem::path& path);

std::uint8_t quantize8(double v) noexcept;
Grid<std::uint8_t> quantize(const Field& f);
Field dequantize(const Grid<std::uint8_t>& g);

}  // namespace facemat
