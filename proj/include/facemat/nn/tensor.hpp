#pragma once

#include <cassert>
#include <new>
#include <span>
#include <vector>

#include "facemat/core/grid.hpp"

namespace facemat::nn {

/// Cache-line aligned storage. Eigen picks its scalar peel for unaligned
/// maps from the address, so unaligned buffers make float sums depend on
/// where the heap put them.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

/// Dense float tensor in channel-major (C, H, W) layout. Convolution weights
/// use (out, in*k*k, 1).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c_(channels), h_(height), w_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0) throw InvalidInput("Tensor: negative dimension");
  }

  int channels() const noexcept { return c_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h_) * w_; }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int c, int y, int x) noexcept {
    assert(c >= 0 && c < c_ && y >= 0 && y < h_ && x >= 0 && x < w_);
    return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
  }
  float at(int c, int y, int x) const noexcept {
    assert(c >= 0 && c < c_ && y >= 0 && y < h_ && x >= 0 && x < w_);
    return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
  }
  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const noexcept { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  bool operator==(const Tensor&) const = default;

 private:
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<float, AlignedAllocator<float>> data_;
};

}  // namespace facemat::nn
