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

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "fseg/tensor.hpp"

namespace fseg {

/// Square-kernel 2-D convolution (cross-correlation) with "same" padding.
/// Weight layout is (out_c, in_c, k, k); the 1x1 logits head is the k = 1 case.
template <typename Scalar>
struct Conv2d {
  using Vector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Index in_c = 1;
  Index out_c = 1;
  Index kernel = 1;
  Index stride = 1;
  Tensor<Scalar> weight;
  Vector bias;

  Conv2d() = default;
  Conv2d(Index in_channels, Index out_channels, Index k, Index s)
      : in_c(in_channels),
        out_c(out_channels),
        kernel(k),
        stride(s),
        weight(Shape{out_channels, in_channels, k, k}),
        bias(Vector::Zero(out_channels)) {
    if (k < 1 || k % 2 == 0) throw ValueError("conv kernel must be odd and >= 1, got " + std::to_string(k));
    if (s < 1) throw ValueError("conv stride must be >= 1, got " + std::to_string(s));
  }

  Index padding() const { return (kernel - 1) / 2; }
  Index out_size(Index in) const { return (in + stride - 1) / stride; }
  Index patch_size() const { return in_c * kernel * kernel; }

  typename Tensor<Scalar>::ConstMatrixMap weight_matrix() const {
    return typename Tensor<Scalar>::ConstMatrixMap(weight.data().data(), out_c, patch_size());
  }

  template <typename Other>
  Conv2d<Other> cast() const {
    Conv2d<Other> out(in_c, out_c, kernel, stride);
    out.weight = weight.template cast<Other>();
    out.bias = bias.template cast<Other>();
    return out;
  }
};

/// Forward input cached for the backward pass of one layer.
template <typename Scalar>
struct LayerTape {
  std::optional<Tensor<Scalar>> input;
};

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  typename Conv2d<Scalar>::Vector bias;
};

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unfold image n into a (in_c*k*k) x (out_h*out_w) patch matrix.
template <typename Scalar>
void im2col(const Tensor<Scalar>& in, Index n, const Conv2d<Scalar>& conv, Index out_h, Index out_w,
            RowMatrix<Scalar>& cols) {
  const Shape& s = in.shape();
  const Index k = conv.kernel;
  const Index pad = conv.padding();
  cols.resize(conv.patch_size(), out_h * out_w);
  for (Index ci = 0; ci < s.c; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = cols.row((ci * k + ky) * k + kx).data();
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * conv.stride + ky - pad;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * conv.stride + kx - pad;
            const bool inside = iy >= 0 && iy < s.h && ix >= 0 && ix < s.w;
            row[oy * out_w + ox] = inside ? in(n, ci, iy, ix) : Scalar(0);
          }
        }
      }
    }
  }
}

/// Scatter-add a patch-matrix gradient back onto image n.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const Conv2d<Scalar>& conv, Index out_h, Index out_w, Index n,
            Tensor<Scalar>& grad_in) {
  const Shape& s = grad_in.shape();
  const Index k = conv.kernel;
  const Index pad = conv.padding();
  for (Index ci = 0; ci < s.c; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.row((ci * k + ky) * k + kx).data();
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * conv.stride + ky - pad;
          if (iy < 0 || iy >= s.h) continue;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * conv.stride + kx - pad;
            if (ix < 0 || ix >= s.w) continue;
            grad_in(n, ci, iy, ix) += row[oy * out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Convolution forward pass. Each image is one GEMM, so a given image produces the
/// same bits whatever batch it travels in.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Conv2d<Scalar>& conv,
                              LayerTape<Scalar>* tape = nullptr) {
  const Shape& s = input.shape();
  if (s.c != conv.in_c) {
    throw ShapeError("conv2d: input shape " + s.str() + " does not match weight shape " +
                     conv.weight.shape().str());
  }
  const Index out_h = conv.out_size(s.h);
  const Index out_w = conv.out_size(s.w);
  Tensor<Scalar> out(Shape{s.n, conv.out_c, out_h, out_w});
  detail::RowMatrix<Scalar> cols;
  const auto weights = conv.weight_matrix();
  for (Index n = 0; n < s.n; ++n) {
    detail::im2col(input, n, conv, out_h, out_w, cols);
    auto image = out.image(n);
    image.noalias() = weights * cols;
    image.colwise() += conv.bias.matrix();
  }
  if (tape != nullptr) tape->input = input;
  return out;
}

/// Gradients of sum(grad_out * forward(input)) with respect to input, weight and bias.
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& grad_out, const LayerTape<Scalar>& tape,
                                  const Conv2d<Scalar>& conv) {
  if (!tape.input) throw StateError("conv2d_backward: no cached forward input");
  const Tensor<Scalar>& input = *tape.input;
  const Shape& s = input.shape();
  const Index out_h = conv.out_size(s.h);
  const Index out_w = conv.out_size(s.w);
  const Shape expected{s.n, conv.out_c, out_h, out_w};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv2d_backward: grad shape " + grad_out.shape().str() + " expected " + expected.str());
  }
  ConvGrads<Scalar> grads{Tensor<Scalar>(s), Tensor<Scalar>(conv.weight.shape()),
                          Conv2d<Scalar>::Vector::Zero(conv.out_c)};
  typename Tensor<Scalar>::MatrixMap grad_w(grads.weight.data().data(), conv.out_c, conv.patch_size());
  const auto weights = conv.weight_matrix();
  detail::RowMatrix<Scalar> cols;
  detail::RowMatrix<Scalar> grad_cols;
  for (Index n = 0; n < s.n; ++n) {
    const auto g = grad_out.image(n);
    detail::im2col(input, n, conv, out_h, out_w, cols);
    grad_w.noalias() += g * cols.transpose();
    grads.bias += g.rowwise().sum().array();
    grad_cols.noalias() = weights.transpose() * g;
    detail::col2im(grad_cols, conv, out_h, out_w, n, grads.input);
  }
  return grads;
}

/// Nearest-neighbour upsampling: every pixel becomes a factor x factor block.
template <typename Scalar>
Tensor<Scalar> upsample_nearest(const Tensor<Scalar>& input, Index factor) {
  if (factor < 1) throw ValueError("upsample factor must be >= 1, got " + std::to_string(factor));
  const Shape& s = input.shape();
  Tensor<Scalar> out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index y = 0; y < s.h * factor; ++y) {
        for (Index x = 0; x < s.w * factor; ++x) out(n, c, y, x) = input(n, c, y / factor, x / factor);
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest_backward(const Tensor<Scalar>& grad_out, Index factor) {
  if (factor < 1) throw ValueError("upsample factor must be >= 1, got " + std::to_string(factor));
  const Shape& g = grad_out.shape();
  if (g.h % factor != 0 || g.w % factor != 0) {
    throw ShapeError("upsample backward: grad shape " + g.str() + " not divisible by factor " +
                     std::to_string(factor));
  }
  Tensor<Scalar> out(Shape{g.n, g.c, g.h / factor, g.w / factor});
  for (Index n = 0; n < g.n; ++n) {
    for (Index c = 0; c < g.c; ++c) {
      for (Index y = 0; y < g.h; ++y) {
        for (Index x = 0; x < g.w; ++x) out(n, c, y / factor, x / factor) += grad_out(n, c, y, x);
      }
    }
  }
  return out;
}

/// Per-pixel softmax over channels, shifted by the per-pixel channel max.
/// A NaN logit makes that pixel's whole distribution NaN.
template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& logits) {
  Tensor<Scalar> out(logits.shape());
  for (Index n = 0; n < logits.shape().n; ++n) {
    const auto in = logits.image(n);
    auto probs = out.image(n);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> peak = in.colwise().maxCoeff();
    probs = (in.rowwise() - peak).array().exp().matrix();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> total = probs.colwise().sum();
    probs.array().rowwise() /= total.array();
  }
  return out;
}

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  Tensor<Scalar> grad_logits;
};

/// Mean per-pixel negative log-likelihood and its gradient (softmax - onehot) / pixels.
template <typename Scalar>
LossResult<Scalar> cross_entropy_loss(const Tensor<Scalar>& logits, std::span<const ClassMap> labels) {
  const Shape& s = logits.shape();
  if (static_cast<Index>(labels.size()) != s.n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " label maps for logits " + s.str());
  }
  LossResult<Scalar> result{0.0, softmax_channels(logits)};
  const double pixels = static_cast<double>(s.n * s.plane());
  const Scalar inv = Scalar(1) / static_cast<Scalar>(pixels);
  for (Index n = 0; n < s.n; ++n) {
    const ClassMap& lab = labels[static_cast<std::size_t>(n)];
    if (lab.rows() != s.h || lab.cols() != s.w) {
      throw ShapeError("cross_entropy: label map " + std::to_string(lab.rows()) + "x" + std::to_string(lab.cols()) +
                       " for logits " + s.str());
    }
    for (Index y = 0; y < s.h; ++y) {
      for (Index x = 0; x < s.w; ++x) {
        const auto cls = lab(y, x);
        if (cls < 0 || cls >= s.c) {
          throw ValueError("cross_entropy: label " + std::to_string(cls) + " out of range at (n=" + std::to_string(n) +
                           ", y=" + std::to_string(y) + ", x=" + std::to_string(x) + ")");
        }
        Scalar peak = logits(n, 0, y, x);
        for (Index c = 1; c < s.c; ++c) peak = std::max(peak, logits(n, c, y, x));
        double total = 0.0;
        for (Index c = 0; c < s.c; ++c) total += std::exp(static_cast<double>(logits(n, c, y, x) - peak));
        result.loss += std::log(total) - static_cast<double>(logits(n, cls, y, x) - peak);
        result.grad_logits(n, cls, y, x) -= Scalar(1);
      }
    }
  }
  result.loss /= pixels;
  result.grad_logits.data() *= inv;
  return result;
}

}  // namespace fseg
