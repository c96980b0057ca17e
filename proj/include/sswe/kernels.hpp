#pragma once

// Forward and adjoint kernels for the image layers, on plain tensors.
// Images are [C,H,W] or batched [N,C,H,W]; rank is preserved by every kernel.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <vector>

#include "sswe/tensor.hpp"

namespace sswe::kernels {

struct ImageDims {
  Index n, c, h, w;
};

template <typename Scalar>
ImageDims image_dims(const Tensor<Scalar>& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  throw ShapeError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + to_string(t.shape()));
}

inline Shape image_shape(Index rank, ImageDims d) {
  if (rank == 3) return {d.c, d.h, d.w};
  return {d.n, d.c, d.h, d.w};
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unfolds one [C,H,W] image into [C*9, H*W] 3x3 patches with zero padding.
template <typename Scalar>
void im2col3x3(const Scalar* image, Index channels, Index h, Index w, RowMatrix<Scalar>& col) {
  col.resize(channels * 9, h * w);
  for (Index c = 0; c < channels; ++c) {
    const Scalar* src = image + c * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        Scalar* row = col.row(c * 9 + ky * 3 + kx).data();
        const Index dy = ky - 1, dx = kx - 1;
        const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          Scalar* out = row + y * w;
          const Index sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(out, out + w, Scalar(0));
            continue;
          }
          std::fill(out, out + x0, Scalar(0));
          std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, out + x0);
          std::fill(out + x1, out + w, Scalar(0));
        }
      }
    }
  }
}

/// Adds the patch adjoints of `col` back onto a [C,H,W] image.
template <typename Scalar>
void col2im3x3(const RowMatrix<Scalar>& col, Index channels, Index h, Index w, Scalar* image) {
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst = image + c * h * w;
    for (Index ky = 0; ky < 3; ++ky) {
      for (Index kx = 0; kx < 3; ++kx) {
        const Scalar* row = col.row(c * 9 + ky * 3 + kx).data();
        const Index dy = ky - 1, dx = kx - 1;
        const Index x0 = std::max<Index>(0, -dx), x1 = std::min<Index>(w, w - dx);
        for (Index y = 0; y < h; ++y) {
          const Index sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const Scalar* in = row + y * w;
          Scalar* out = dst + sy * w + dx;
          for (Index x = x0; x < x1; ++x) out[x] += in[x];
        }
      }
    }
  }
}

template <typename Scalar>
void check_conv_args(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                     const Tensor<Scalar>& bias) {
  const ImageDims d = image_dims(input, "conv2d");
  if (weights.rank() != 4 || weights.dim(2) != 3 || weights.dim(3) != 3) {
    throw ShapeError("conv2d: weights must be [C_out,C_in,3,3], got " + to_string(weights.shape()));
  }
  if (weights.dim(1) != d.c) {
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, weights expect " +
                     std::to_string(weights.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ShapeError("conv2d: bias must be [C_out]");
  }
}

/// 3x3 convolution (cross-correlation), stride 1, zero padding 1.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias) {
  check_conv_args(input, weights, bias);
  const ImageDims d = image_dims(input, "conv2d");
  const Index cout = weights.dim(0), hw = d.h * d.w;
  Tensor<Scalar> out(image_shape(input.rank(), {d.n, cout, d.h, d.w}));
  typename Tensor<Scalar>::ConstMatrixMap wm(weights.data(), cout, d.c * 9);
  RowMatrix<Scalar> col;
  for (Index n = 0; n < d.n; ++n) {
    im2col3x3(input.data() + n * d.c * hw, d.c, d.h, d.w, col);
    typename Tensor<Scalar>::MatrixMap om(out.data() + n * cout * hw, cout, hw);
    om.noalias() = wm * col;
    om.colwise() += bias.array().matrix();
  }
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;  // empty unless requested
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

/// Adjoint of conv2d. Weight and bias adjoints are summed over the batch in
/// image order.
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                  const Tensor<Scalar>& grad_out, bool want_input = true) {
  const ImageDims d = image_dims(input, "conv2d_backward");
  const Index cout = weights.dim(0), hw = d.h * d.w;
  if (grad_out.shape() != image_shape(input.rank(), {d.n, cout, d.h, d.w})) {
    throw ShapeError("conv2d_backward: output adjoint shape " + to_string(grad_out.shape()));
  }
  ConvGrads<Scalar> g;
  g.weights = Tensor<Scalar>(weights.shape());
  g.bias = Tensor<Scalar>({cout});
  if (want_input) g.input = Tensor<Scalar>(input.shape());

  typename Tensor<Scalar>::ConstMatrixMap wm(weights.data(), cout, d.c * 9);
  typename Tensor<Scalar>::MatrixMap dw(g.weights.data(), cout, d.c * 9);
  RowMatrix<Scalar> col, dcol;
  for (Index n = 0; n < d.n; ++n) {
    typename Tensor<Scalar>::ConstMatrixMap gm(grad_out.data() + n * cout * hw, cout, hw);
    im2col3x3(input.data() + n * d.c * hw, d.c, d.h, d.w, col);
    dw.noalias() += gm * col.transpose();
    g.bias.array() += gm.rowwise().sum().array();
    if (want_input) {
      dcol.noalias() = wm.transpose() * gm;
      col2im3x3(dcol, d.c, d.h, d.w, g.input.data() + n * d.c * hw);
    }
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar alpha) {
  return Tensor<Scalar>(x.shape(), (x.array() > Scalar(0)).select(x.array(), alpha * x.array()));
}

template <typename Scalar>
Tensor<Scalar> leaky_relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out,
                                   Scalar alpha) {
  return Tensor<Scalar>(x.shape(),
                        (x.array() > Scalar(0)).select(grad_out.array(), alpha * grad_out.array()));
}

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  std::vector<Index> argmax;  // flat input index per output element
};

/// 2x2 max-pool, stride 2. Ties go to the first window element in row-major order.
template <typename Scalar>
PoolResult<Scalar> maxpool2(const Tensor<Scalar>& input) {
  const ImageDims d = image_dims(input, "maxpool2");
  if (d.h % 2 != 0 || d.w % 2 != 0) {
    throw ShapeError("maxpool2: spatial extent must be even, got " + to_string(input.shape()));
  }
  const Index oh = d.h / 2, ow = d.w / 2;
  PoolResult<Scalar> r{Tensor<Scalar>(image_shape(input.rank(), {d.n, d.c, oh, ow})), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  Index o = 0;
  for (Index p = 0; p < d.n * d.c; ++p) {
    const Index base = p * d.h * d.w;
    for (Index y = 0; y < oh; ++y) {
      for (Index x = 0; x < ow; ++x, ++o) {
        Index best = base + 2 * y * d.w + 2 * x;
        const Index cand[3] = {best + 1, best + d.w, best + d.w + 1};
        for (Index c : cand) {
          if (input[c] > input[best]) best = c;
        }
        r.output[o] = input[best];
        r.argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Tensor<Scalar>& grad_out, const std::vector<Index>& argmax,
                                 const Shape& input_shape) {
  Tensor<Scalar> g(input_shape);
  for (Index o = 0; o < grad_out.size(); ++o) g[argmax[static_cast<std::size_t>(o)]] += grad_out[o];
  return g;
}

template <typename Scalar>
Tensor<Scalar> upsample2_nearest(const Tensor<Scalar>& input) {
  const ImageDims d = image_dims(input, "upsample2_nearest");
  Tensor<Scalar> out(image_shape(input.rank(), {d.n, d.c, 2 * d.h, 2 * d.w}));
  for (Index p = 0; p < d.n * d.c; ++p) {
    auto src = input.plane(p);
    auto dst = out.plane(p);
    for (Index y = 0; y < 2 * d.h; ++y) {
      for (Index x = 0; x < 2 * d.w; ++x) dst(y, x) = src(y / 2, x / 2);
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> upsample2_nearest_backward(const Tensor<Scalar>& grad_out) {
  const ImageDims d = image_dims(grad_out, "upsample2_nearest_backward");
  Tensor<Scalar> g(image_shape(grad_out.rank(), {d.n, d.c, d.h / 2, d.w / 2}));
  for (Index p = 0; p < d.n * d.c; ++p) {
    auto src = grad_out.plane(p);
    auto dst = g.plane(p);
    for (Index y = 0; y < d.h; ++y) {
      for (Index x = 0; x < d.w; ++x) dst(y / 2, x / 2) += src(y, x);
    }
  }
  return g;
}

/// Stacks channels of a then b, per image.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const ImageDims da = image_dims(a, "concat_channels"), db = image_dims(b, "concat_channels");
  if (a.rank() != b.rank() || da.n != db.n || da.h != db.h || da.w != db.w) {
    throw ShapeError("concat_channels: incompatible " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const Index hw = da.h * da.w, sa = da.c * hw, sb = db.c * hw;
  Tensor<Scalar> out(image_shape(a.rank(), {da.n, da.c + db.c, da.h, da.w}));
  for (Index n = 0; n < da.n; ++n) {
    std::copy(a.data() + n * sa, a.data() + (n + 1) * sa, out.data() + n * (sa + sb));
    std::copy(b.data() + n * sb, b.data() + (n + 1) * sb, out.data() + n * (sa + sb) + sa);
  }
  return out;
}

/// Splits a concatenated adjoint back into its two channel groups.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& g, const Shape& a_shape,
                                                         const Shape& b_shape) {
  Tensor<Scalar> ga(a_shape), gb(b_shape);
  const ImageDims da = image_dims(ga, "split_channels"), db = image_dims(gb, "split_channels");
  const Index hw = da.h * da.w, sa = da.c * hw, sb = db.c * hw;
  for (Index n = 0; n < da.n; ++n) {
    const Scalar* src = g.data() + n * (sa + sb);
    std::copy(src, src + sa, ga.data() + n * sa);
    std::copy(src + sa, src + sa + sb, gb.data() + n * sb);
  }
  return {std::move(ga), std::move(gb)};
}

/// Logistic function with outputs kept strictly inside (0, 1) at this precision.
template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  const Scalar lo = std::numeric_limits<Scalar>::min();
  const Scalar hi = std::nextafter(Scalar(1), Scalar(0));
  Tensor<Scalar> out(x.shape());
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar v = x[i];
    Scalar s;
    if (v >= Scalar(0)) {
      s = Scalar(1) / (Scalar(1) + std::exp(-v));
    } else {
      const Scalar e = std::exp(v);
      s = e / (Scalar(1) + e);
    }
    out[i] = std::clamp(s, lo, hi);
  }
  return out;
}

}  // namespace sswe::kernels
