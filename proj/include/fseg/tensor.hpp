/*
 *  Copyright 2026 The fseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fseg/error.hpp"

namespace fseg {

using Index = Eigen::Index;

/// Batch x channels x rows x cols extent of a dense tensor.
struct Shape {
  Index n = 1;
  Index c = 1;
  Index h = 1;
  Index w = 1;

  constexpr Index size() const { return n * c * h * w; }
  constexpr Index plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w) + ")";
  }
};

/// Dense row-major NCHW tensor. Storage is an Eigen column array, so whole-tensor
/// arithmetic goes through Eigen expressions on data().
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() : Tensor(Shape{}) {}

  explicit Tensor(const Shape& shape) : shape_(checked(shape)), data_(Array::Zero(shape.size())) {}

  Tensor(const Shape& shape, Array data) : shape_(checked(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  static Tensor constant(const Shape& shape, Scalar value) {
    return Tensor(shape, Array::Constant(shape.size(), value));
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }

  Array& data() { return data_; }
  const Array& data() const { return data_; }

  Index offset(Index n, Index c, Index y, Index x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Scalar& operator()(Index n, Index c, Index y, Index x) { return data_[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return data_[offset(n, c, y, x)]; }

  /// One image viewed as a (channels x rows*cols) matrix.
  MatrixMap image(Index n) { return MatrixMap(data_.data() + n * shape_.c * shape_.plane(), shape_.c, shape_.plane()); }
  ConstMatrixMap image(Index n) const {
    return ConstMatrixMap(data_.data() + n * shape_.c * shape_.plane(), shape_.c, shape_.plane());
  }

  /// One channel plane viewed as a (rows x cols) matrix.
  MatrixMap plane(Index n, Index c) { return MatrixMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w); }
  ConstMatrixMap plane(Index n, Index c) const {
    return ConstMatrixMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w);
  }

  /// Copy of image n as a batch-of-one tensor.
  Tensor slice(Index n) const {
    Shape s = shape_;
    s.n = 1;
    const Index len = s.size();
    return Tensor(s, data_.segment(n * len, len));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  static Shape checked(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
      throw ShapeError("tensor dimensions must be >= 1, got " + s.str());
    }
    return s;
  }

  Shape shape_;
  Array data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Per-pixel class ids, rows x cols.
using ClassMap = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Stack batch-of-one tensors with equal shapes into one batch.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<const Tensor<Scalar>*>& items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape s = items.front()->shape();
  const Index len = s.size();
  s.n = static_cast<Index>(items.size());
  Tensor<Scalar> out(s);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != items.front()->shape()) {
      throw ShapeError("stack: shape " + items[i]->shape().str() + " vs " + items.front()->shape().str());
    }
    out.data().segment(static_cast<Index>(i) * len, len) = items[i]->data();
  }
  return out;
}

}  // namespace fseg
