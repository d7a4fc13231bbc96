#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace bifuser {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense row-major tensor of arbitrary rank, backed by an Eigen array.
/// The last axis is contiguous; value semantics throughout.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Storage = Eigen::Array<S, Eigen::Dynamic, 1>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_)) {
    data_.setZero();
  }
  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw std::invalid_argument("tensor storage does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }
  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }
  static Tensor scalar(S v) { return full({1}, v); }
  static Tensor from(Shape shape, const std::vector<S>& values) {
    Tensor t(std::move(shape));
    if (static_cast<Index>(values.size()) != t.size())
      throw std::invalid_argument("value count does not match shape");
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = values[static_cast<std::size_t>(i)];
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }
  Index dim(int i) const {
    if (i < 0) i += ndim();
    return shape_[static_cast<std::size_t>(i)];
  }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  S& operator[](Index i) { return data_[i]; }
  S operator[](Index i) const { return data_[i]; }

  S& at(std::initializer_list<Index> idx) { return data_[flat_index(idx)]; }
  S at(std::initializer_list<Index> idx) const { return data_[flat_index(idx)]; }

  /// View the whole tensor as a rows x cols row-major matrix.
  MatrixMap matrix(Index rows, Index cols) {
    if (rows * cols != size())
      throw std::invalid_argument("matrix view size mismatch for " + shape_str(shape_));
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    if (rows * cols != size())
      throw std::invalid_argument("matrix view size mismatch for " + shape_str(shape_));
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size())
      throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                                  " changes element count");
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Index i = 0; i < size(); ++i)
      if (!std::isfinite(static_cast<double>(data_[i]))) return false;
    return true;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (Index i = 0; i < size(); ++i) out[i] = static_cast<T>(data_[i]);
    return out;
  }

 private:
  Index flat_index(std::initializer_list<Index> idx) const {
    if (static_cast<int>(idx.size()) != ndim())
      throw std::invalid_argument("index rank mismatch");
    Index flat = 0;
    auto it = idx.begin();
    for (int i = 0; i < ndim(); ++i, ++it) flat = flat * shape_[static_cast<std::size_t>(i)] + *it;
    return flat;
  }

  Shape shape_;
  Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace bifuser
