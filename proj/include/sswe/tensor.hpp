#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sswe/error.hpp"
#include "sswe/rng.hpp"

namespace sswe {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major N-dimensional array over an Eigen column of scalars.
///
/// A default-constructed tensor is empty (shape [0]). All other extents must
/// be non-negative; the product of the extents always equals size().
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() : shape_{0} {}

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_extents();
    data_.setConstant(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
    check_extents();
    if (static_cast<Index>(values.size()) != shape_size(shape_)) {
      throw ShapeError("Tensor: " + std::to_string(values.size()) + " values for shape " +
                       to_string(shape_));
    }
    data_.resize(shape_size(shape_));
    std::copy(values.begin(), values.end(), data_.data());
  }

  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Index flat) { return data_[flat]; }
  const Scalar& operator[](Index flat) const { return data_[flat]; }

  template <typename... I>
  Scalar& operator()(I... coords) {
    return data_[offset({static_cast<Index>(coords)...})];
  }
  template <typename... I>
  const Scalar& operator()(I... coords) const {
    return data_[offset({static_cast<Index>(coords)...})];
  }

  Shape strides() const {
    Shape s(shape_.size(), 1);
    for (Index i = rank() - 2; i >= 0; --i) s[i] = s[i + 1] * shape_[i + 1];
    return s;
  }

  Index offset(std::initializer_list<Index> coords) const {
    return offset(std::span<const Index>(coords.begin(), coords.size()));
  }

  Index offset(std::span<const Index> coords) const {
    if (static_cast<Index>(coords.size()) != rank()) {
      throw ShapeError("Tensor::offset: rank mismatch");
    }
    Index flat = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (coords[i] < 0 || coords[i] >= shape_[i]) throw ShapeError("Tensor::offset: out of range");
      flat = flat * shape_[i] + coords[i];
    }
    return flat;
  }

  Shape coords(Index flat) const {
    if (flat < 0 || flat >= size()) throw ShapeError("Tensor::coords: out of range");
    Shape c(shape_.size());
    for (Index i = rank() - 1; i >= 0; --i) {
      c[i] = flat % shape_[i];
      flat /= shape_[i];
    }
    return c;
  }

  /// Same data, new extents with equal product.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  /// View of the trailing two axes of slice `i` along the flattened leading axes.
  MatrixMap plane(Index i) {
    const Index h = dim(rank() - 2), w = dim(rank() - 1);
    return MatrixMap(data_.data() + i * h * w, h, w);
  }
  ConstMatrixMap plane(Index i) const {
    const Index h = dim(rank() - 2), w = dim(rank() - 1);
    return ConstMatrixMap(data_.data() + i * h * w, h, w);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  void check_extents() const {
    if (shape_.empty()) throw ShapeError("Tensor: rank must be at least 1");
    for (Index e : shape_) {
      if (e < 0) throw ShapeError("Tensor: negative extent in " + to_string(shape_));
    }
  }

  Shape shape_;
  Storage data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

namespace detail {
template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}
template <typename Scalar>
void require_nonempty(const Tensor<Scalar>& a, const char* op) {
  if (a.empty()) throw ShapeError(std::string(op) + ": empty tensor");
}
}  // namespace detail

// Elementwise arithmetic. Tensor-tensor forms require identical shapes.

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return Tensor<Scalar>(a.shape(), a.array() + b.array());
}
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, Scalar b) {
  return Tensor<Scalar>(a.shape(), a.array() + b);
}
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return Tensor<Scalar>(a.shape(), a.array() - b.array());
}
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, Scalar b) {
  return Tensor<Scalar>(a.shape(), a.array() - b);
}
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return Tensor<Scalar>(a.shape(), a.array() * b.array());
}
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, Scalar b) {
  return Tensor<Scalar>(a.shape(), a.array() * b);
}
template <typename Scalar>
Tensor<Scalar> max(const Tensor<Scalar>& a, Scalar b) {
  return Tensor<Scalar>(a.shape(), a.array().max(b));
}
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return Tensor<Scalar>(a.shape(), a.array().max(lo).min(hi));
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar b) { return mul(a, b); }

// Reductions over all elements. Sums accumulate in double.

template <typename Scalar>
Scalar sum(const Tensor<Scalar>& a) {
  detail::require_nonempty(a, "sum");
  return static_cast<Scalar>(a.array().template cast<double>().sum());
}
template <typename Scalar>
Scalar mean(const Tensor<Scalar>& a) {
  detail::require_nonempty(a, "mean");
  return static_cast<Scalar>(a.array().template cast<double>().sum() / static_cast<double>(a.size()));
}
template <typename Scalar>
Scalar max(const Tensor<Scalar>& a) {
  detail::require_nonempty(a, "max");
  return a.array().maxCoeff();
}

/// Tensor of i.i.d. Uniform[lo, hi) draws in row-major order.
template <typename Scalar>
Tensor<Scalar> uniform(Rng& rng, Shape shape, Scalar lo, Scalar hi) {
  if (!(lo < hi)) throw std::invalid_argument("uniform: requires lo < hi");
  Tensor<Scalar> t(std::move(shape));
  for (Scalar& v : t.values()) v = rng.uniform<Scalar>(lo, hi);
  return t;
}

/// Tensor of i.i.d. standard normal draws.
template <typename Scalar>
Tensor<Scalar> normal(Rng& rng, Shape shape) {
  Tensor<Scalar> t(std::move(shape));
  for (Scalar& v : t.values()) v = static_cast<Scalar>(rng.normal());
  return t;
}

}  // namespace sswe
