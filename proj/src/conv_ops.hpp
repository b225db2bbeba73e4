#pragma once

#include <Eigen/Dense>

#include "prgauge/nn.hpp"

namespace prgauge::detail {

inline int conv_out_extent(int in, int kernel, int stride) { return (in - kernel) / stride + 1; }

/// Unfolds one C x H x W sample into a (C*k*k) x (OH*OW) patch matrix.
inline Eigen::MatrixXd im2col(const double* src, const Shape& in, int kernel, int stride) {
  const int c_n = in.channels(), h = in.height(), w = in.width();
  const int oh = conv_out_extent(h, kernel, stride), ow = conv_out_extent(w, kernel, stride);
  Eigen::MatrixXd cols(c_n * kernel * kernel, oh * ow);
  for (int c = 0; c < c_n; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (c * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < oh; ++oy) {
          const double* line = src + (c * h + oy * stride + ky) * w + kx;
          for (int ox = 0; ox < ow; ++ox) cols(row, oy * ow + ox) = line[ox * stride];
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: accumulates patch gradients back into a C x H x W buffer.
inline void col2im(const Eigen::MatrixXd& cols, const Shape& in, int kernel, int stride, double* dst) {
  const int c_n = in.channels(), h = in.height(), w = in.width();
  const int oh = conv_out_extent(h, kernel, stride), ow = conv_out_extent(w, kernel, stride);
  for (int c = 0; c < c_n; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (c * kernel + ky) * kernel + kx;
        for (int oy = 0; oy < oh; ++oy) {
          double* line = dst + (c * h + oy * stride + ky) * w + kx;
          for (int ox = 0; ox < ow; ++ox) line[ox * stride] += cols(row, oy * ow + ox);
        }
      }
    }
  }
}

}  // namespace prgauge::detail
