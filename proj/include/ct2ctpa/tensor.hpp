/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "ct2ctpa/error.hpp"

namespace ct2ctpa {

// Cache-line aligned storage. Eigen's vectorized loops peel a prefix that
// depends on the base address, so fixed alignment keeps float sums repeatable.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

// NCHW extent. Every network tensor is 4D; vectors use h = w = 1.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense float tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, FloatBuffer data);
  Tensor(Shape shape, const std::vector<float>& data)
      : Tensor(shape, FloatBuffer(data.begin(), data.end())) {}

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }
  FloatBuffer& vec() { return data_; }
  const FloatBuffer& vec() const { return data_; }
  std::vector<float> to_vector() const { return {data_.begin(), data_.end()}; }

  float& at(int n, int c, int y, int x) {
    return data_[index(n, c, y, x)];
  }
  float at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  // Pointer to the start of plane (n, c).
  float* plane(int n, int c) {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }
  const float* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  void fill(float v);
  Tensor reshaped(Shape s) const;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  FloatBuffer data_;
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace ct2ctpa
