#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mkdm/error.hpp"

namespace mkdm {

using Shape = std::vector<std::int64_t>;

std::string to_string(const Shape& shape);

/// Number of elements described by `shape`; 1 for the rank-0 shape.
std::int64_t numel(const Shape& shape);

/// Dense row-major array. Dimensions are strictly positive and
/// product(shape) == number of stored values at all times.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(checked(std::move(shape))), data_(static_cast<std::size_t>(numel(shape_)), fill) {}

  BasicTensor(Shape shape, std::vector<T> values) : shape_(checked(std::move(shape))), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != numel(shape_)) {
      throw DimensionError("tensor of shape " + to_string(shape_) + " cannot hold " +
                           std::to_string(data_.size()) + " values");
    }
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }

  /// Product of every dimension except the last. Rank-0 and rank-1 tensors are one row.
  std::int64_t rows() const noexcept {
    if (shape_.size() < 2) return 1;
    std::int64_t r = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
  }
  std::int64_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<T> row(std::int64_t r) { return {data_.data() + r * cols(), static_cast<std::size_t>(cols())}; }
  std::span<const T> row(std::int64_t r) const {
    return {data_.data() + r * cols(), static_cast<std::size_t>(cols())};
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  const T& at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

  T item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same values under a new shape with equal element count.
  BasicTensor reshaped(Shape shape) const& { return BasicTensor(std::move(shape), data_); }
  BasicTensor reshaped(Shape shape) && { return BasicTensor(std::move(shape), std::move(data_)); }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  static Shape checked(Shape shape) {
    for (auto d : shape) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    }
    return shape;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace mkdm
