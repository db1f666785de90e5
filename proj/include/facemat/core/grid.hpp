#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace facemat {

/// Thrown when an operation's precondition on its inputs does not hold
/// (size mismatch, out-of-range values, bad configuration).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major 2-D raster.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
    if (height < 0 || width < 0) throw InvalidInput("Grid: negative dimension");
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int y, int x) noexcept {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_);
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const T& operator()(int y, int x) const noexcept {
    assert(y >= 0 && y < height_ && x >= 0 && x < width_);
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  bool same_shape(const Grid<U>& o) const noexcept {
    return height_ == o.height() && width_ == o.width();
  }

  bool operator==(const Grid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

template <class A, class B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidInput(std::string(what) + ": size mismatch (" + std::to_string(a.height()) + "x" +
                       std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                       std::to_string(b.width()) + ")");
  }
}

/// Real-valued raster used for alpha mattes, uncertainty maps, weights and
/// loss gradients.
using Field = Grid<double>;
using AlphaMatte = Field;
using UncertaintyMap = Field;
/// {0,1} raster.
using Mask = Grid<std::uint8_t>;

}  // namespace facemat
