#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msdc {

using Shape = std::vector<std::int64_t>;

/// Boolean per-pixel map stored as bytes (0 = false).
using Mask = std::vector<std::uint8_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Extents are strictly positive; a rank-0 shape holds one value.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    values_.assign(static_cast<std::size_t>(numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (static_cast<std::int64_t>(values_.size()) != numel(shape_)) {
      throw ShapeError("tensor of shape " + shape_str(shape_) + " cannot hold " +
                       std::to_string(values_.size()) + " values");
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, T(0)); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  T& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }

  template <typename... Idx>
  T& at(Idx... idx) {
    return values_[offset({static_cast<std::int64_t>(idx)...})];
  }
  template <typename... Idx>
  const T& at(Idx... idx) const {
    return values_[offset({static_cast<std::int64_t>(idx)...})];
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<U>(values_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  /// Index of the first NaN/Inf value, if any.
  std::optional<std::int64_t> first_non_finite() const {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) return static_cast<std::int64_t>(i);
    }
    return std::nullopt;
  }
  bool all_finite() const { return !first_non_finite().has_value(); }

  /// Shape and bit pattern equality.
  bool identical(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (values_.empty() ||
            std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(T)) == 0);
  }

 private:
  std::size_t offset(std::initializer_list<std::int64_t> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index rank does not match " + shape_str(shape_));
    std::int64_t off = 0;
    std::size_t axis = 0;
    for (std::int64_t i : idx) {
      if (i < 0 || i >= shape_[axis]) throw std::out_of_range("tensor index out of range");
      off = off * shape_[axis] + i;
      ++axis;
    }
    return static_cast<std::size_t>(off);
  }

  Shape shape_;
  std::vector<T> values_;
};

}  // namespace msdc
