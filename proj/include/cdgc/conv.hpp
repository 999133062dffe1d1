#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cdgc/ops.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

/// Stride / padding / dilation for a square-kernel 2-D convolution.
struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

namespace detail {

inline std::size_t conv_output_extent(const char* op, std::size_t in, std::size_t kernel,
                                      const ConvGeometry& geo) {
  if (geo.stride == 0 || geo.dilation == 0) {
    throw ConfigError(std::string(op) + ": stride and dilation must be positive");
  }
  const std::size_t span = geo.dilation * (kernel - 1) + 1;
  const std::size_t padded = in + 2 * geo.padding;
  if (padded < span) {
    throw ConfigError(std::string(op) + ": kernel span exceeds padded input extent");
  }
  if ((padded - span) % geo.stride != 0) {
    throw ConfigError(std::string(op) + ": stride does not evenly tile the input extent");
  }
  return (padded - span) / geo.stride + 1;
}

// Expand x[C_in x H x W] into columns[(C_in*kh*kw) x (H'*W')].  Out-of-bounds
// taps read as zero, matching zero padding.
template <typename T>
void im2col(const T* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, const ConvGeometry& geo, std::size_t oh, std::size_t ow, T* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(geo.padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
        T* out_row = cols + row * (oh * ow);
        const T* plane = x + c * h * w;
        for (std::size_t oi = 0; oi < oh; ++oi) {
          const std::ptrdiff_t ii =
              static_cast<std::ptrdiff_t>(oi * geo.stride + ki * geo.dilation) - pad;
          for (std::size_t oj = 0; oj < ow; ++oj) {
            const std::ptrdiff_t jj =
                static_cast<std::ptrdiff_t>(oj * geo.stride + kj * geo.dilation) - pad;
            T v = T(0);
            if (ii >= 0 && ii < static_cast<std::ptrdiff_t>(h) && jj >= 0 &&
                jj < static_cast<std::ptrdiff_t>(w)) {
              v = plane[static_cast<std::size_t>(ii) * w + static_cast<std::size_t>(jj)];
            }
            out_row[oi * ow + oj] = v;
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-add columns back into the input layout.
template <typename T>
void col2im_acc(const T* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, const ConvGeometry& geo, std::size_t oh, std::size_t ow, T* x) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(geo.padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
        const T* in_row = cols + row * (oh * ow);
        T* plane = x + c * h * w;
        for (std::size_t oi = 0; oi < oh; ++oi) {
          const std::ptrdiff_t ii =
              static_cast<std::ptrdiff_t>(oi * geo.stride + ki * geo.dilation) - pad;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t oj = 0; oj < ow; ++oj) {
            const std::ptrdiff_t jj =
                static_cast<std::ptrdiff_t>(oj * geo.stride + kj * geo.dilation) - pad;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
            plane[static_cast<std::size_t>(ii) * w + static_cast<std::size_t>(jj)] +=
                in_row[oi * ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution of x[C_in x H x W] with weight[C_out x C_in x kh x kw] and
/// bias[C_out], producing [C_out x H' x W'].  Implemented as im2col followed by
/// a matrix product; 1x1 kernels with unit stride skip the expansion entirely.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvGeometry& geo = {}) {
  if (x.rank() != 3) throw ShapeError("conv2d: expected input [C x H x W], got " + shape_str(x.shape()));
  if (weight.rank() != 4) {
    throw ShapeError("conv2d: expected weight [Co x Ci x kh x kw], got " + shape_str(weight.shape()));
  }
  const std::size_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t cout = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
  if (cout == 0 || kh == 0 || kw == 0) {
    throw ShapeError("conv2d: degenerate weight shape " + shape_str(weight.shape()));
  }
  if (weight.shape()[1] != cin) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.shape()[1]) +
                     " input channels, input has " + std::to_string(cin));
  }
  if (bias.rank() != 1 || bias.shape()[0] != cout) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(cout) + " output channels");
  }
  const std::size_t oh = detail::conv_output_extent("conv2d", h, kh, geo);
  const std::size_t ow = detail::conv_output_extent("conv2d", w, kw, geo);

  const bool pointwise = kh == 1 && kw == 1 && geo.stride == 1 && geo.padding == 0;
  const std::size_t cols_rows = cin * kh * kw;
  const std::size_t pixels = oh * ow;

  std::vector<T> cols;
  const T* cols_ptr;
  if (pointwise) {
    cols_ptr = x.values().data();
  } else {
    cols.resize(cols_rows * pixels);
    detail::im2col(x.values().data(), cin, h, w, kh, kw, geo, oh, ow, cols.data());
    cols_ptr = cols.data();
  }

  std::vector<T> out(cout * pixels);
  for (std::size_t c = 0; c < cout; ++c) {
    const T b = bias.values()[c];
    T* dst = out.data() + c * pixels;
    for (std::size_t i = 0; i < pixels; ++i) dst[i] = b;
  }
  detail::gemm_nn_acc(weight.values().data(), cols_ptr, out.data(), cout, cols_rows, pixels);

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  const bool keep_cols = wn->requires_grad && !pointwise;
  return make_op_result<T>(
      "conv2d", {cout, oh, ow}, std::move(out), {x, weight, bias},
      [xn, wn, bn, geo, cin, h, w, cout, kh, kw, oh, ow, pixels, cols_rows, pointwise,
       cols = keep_cols ? std::move(cols) : std::vector<T>()](TensorNode<T>& self) {
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t c = 0; c < cout; ++c) {
            const T* src = self.grad.data() + c * pixels;
            T acc = T(0);
            for (std::size_t i = 0; i < pixels; ++i) acc += src[i];
            bn->grad[c] += acc;
          }
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          const T* cols_ptr = pointwise ? xn->values.data() : cols.data();
          // dW[Co x rows] += dOut[Co x pixels] * cols[rows x pixels]^T
          detail::gemm_nt_acc(self.grad.data(), cols_ptr, wn->grad.data(), cout, pixels, cols_rows);
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          // dCols[rows x pixels] = W[Co x rows]^T * dOut[Co x pixels]
          std::vector<T> dcols(cols_rows * pixels, T(0));
          detail::gemm_tn_acc(wn->values.data(), self.grad.data(), dcols.data(), cout, cols_rows,
                              pixels);
          if (pointwise) {
            for (std::size_t i = 0; i < dcols.size(); ++i) xn->grad[i] += dcols[i];
          } else {
            detail::col2im_acc(dcols.data(), cin, h, w, kh, kw, geo, oh, ow, xn->grad.data());
          }
        }
      });
}

}  // namespace cdgc
