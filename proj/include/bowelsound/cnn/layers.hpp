#pragma once

// Batched forward/backward kernels. A batch of B sequences of length L with C
// channels is a row-major (B*L) x C matrix; row b*L + t holds position t of
// sample b. Flattened activations are B x (L*C), which is the same memory.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "bowelsound/rng.hpp"

namespace bowelsound::cnn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Weights of a parametric layer. Conv: W is (kernel*in_channels) x filters
/// with row k*in_channels + c. Dense: W is in x out.
struct Params {
  Mat W;
  RowVec b;

  std::size_t size() const { return static_cast<std::size_t>(W.size() + b.size()); }
};

namespace ops {

inline std::size_t same_pad_left(std::size_t kernel) { return (kernel - 1) / 2; }

/// Unrolls every receptive field of a same-padded convolution into a row.
inline Mat im2col(const Mat& x, std::size_t batch, std::size_t length, std::size_t kernel) {
  const auto cin = static_cast<std::size_t>(x.cols());
  const auto pad = static_cast<std::ptrdiff_t>(same_pad_left(kernel));
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(batch * length), static_cast<Eigen::Index>(kernel * cin));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < length; ++t) {
      const auto row = static_cast<Eigen::Index>(b * length + t);
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(t + k) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
        cols.row(row).segment(static_cast<Eigen::Index>(k * cin), static_cast<Eigen::Index>(cin)) =
            x.row(static_cast<Eigen::Index>(b * length) + src);
      }
    }
  return cols;
}

inline Mat col2im(const Mat& dcols, std::size_t batch, std::size_t length, std::size_t kernel,
                  std::size_t cin) {
  const auto pad = static_cast<std::ptrdiff_t>(same_pad_left(kernel));
  Mat dx = Mat::Zero(static_cast<Eigen::Index>(batch * length), static_cast<Eigen::Index>(cin));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < length; ++t) {
      const auto row = static_cast<Eigen::Index>(b * length + t);
      for (std::size_t k = 0; k < kernel; ++k) {
        const auto dst = static_cast<std::ptrdiff_t>(t + k) - pad;
        if (dst < 0 || dst >= static_cast<std::ptrdiff_t>(length)) continue;
        dx.row(static_cast<Eigen::Index>(b * length) + dst) +=
            dcols.row(row).segment(static_cast<Eigen::Index>(k * cin), static_cast<Eigen::Index>(cin));
      }
    }
  return dx;
}

/// Returns the output; `cols` receives the unrolled input for the backward pass.
inline Mat conv_forward(const Mat& x, std::size_t batch, std::size_t length, const Params& p,
                        std::size_t kernel, Mat& cols) {
  cols = im2col(x, batch, length, kernel);
  Mat y = cols * p.W;
  y.rowwise() += p.b;
  return y;
}

inline Mat conv_backward(const Mat& dy, const Mat& cols, std::size_t batch, std::size_t length,
                         const Params& p, std::size_t kernel, Params& grad) {
  grad.W.noalias() += cols.transpose() * dy;
  grad.b += dy.colwise().sum();
  const Mat dcols = dy * p.W.transpose();
  return col2im(dcols, batch, length, kernel, static_cast<std::size_t>(p.W.rows()) / kernel);
}

inline Mat dense_forward(const Mat& x, const Params& p) {
  Mat y = x * p.W;
  y.rowwise() += p.b;
  return y;
}

inline Mat dense_backward(const Mat& dy, const Mat& x, const Params& p, Params& grad) {
  grad.W.noalias() += x.transpose() * dy;
  grad.b += dy.colwise().sum();
  return dy * p.W.transpose();
}

inline Mat relu_forward(const Mat& x) { return x.cwiseMax(0.0); }

inline Mat relu_backward(const Mat& dy, const Mat& x) {
  return (x.array() > 0.0).select(dy, Mat::Zero(dy.rows(), dy.cols()));
}

/// Inverted dropout: kept units are scaled by 1/(1-rate) so inference is the identity.
inline Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return m;
}

/// Non-overlapping max pooling along the length axis; trailing positions that
/// do not fill a window are dropped. `argmax` records the winning input row.
inline Mat maxpool_forward(const Mat& x, std::size_t batch, std::size_t length, std::size_t pool,
                           std::vector<Eigen::Index>& argmax) {
  const std::size_t out_len = length / pool;
  const auto channels = x.cols();
  Mat y(static_cast<Eigen::Index>(batch * out_len), channels);
  argmax.assign(static_cast<std::size_t>(y.size()), 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < out_len; ++t) {
      const auto orow = static_cast<Eigen::Index>(b * out_len + t);
      for (Eigen::Index c = 0; c < channels; ++c) {
        auto best = static_cast<Eigen::Index>(b * length + t * pool);
        for (std::size_t i = 1; i < pool; ++i) {
          const auto r = static_cast<Eigen::Index>(b * length + t * pool + i);
          if (x(r, c) > x(best, c)) best = r;
        }
        y(orow, c) = x(best, c);
        argmax[static_cast<std::size_t>(orow * channels + c)] = best;
      }
    }
  return y;
}

inline Mat maxpool_backward(const Mat& dy, const std::vector<Eigen::Index>& argmax, Eigen::Index in_rows) {
  Mat dx = Mat::Zero(in_rows, dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r)
    for (Eigen::Index c = 0; c < dy.cols(); ++c)
      dx(argmax[static_cast<std::size_t>(r * dy.cols() + c)], c) += dy(r, c);
  return dx;
}

inline Mat softmax_forward(const Mat& logits) {
  Mat y(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const auto e = (logits.row(r).array() - m).exp();
    y.row(r) = e / e.sum();
  }
  return y;
}

/// Vector-Jacobian product of row-wise softmax given its output.
inline Mat softmax_backward(const Mat& dy, const Mat& y) {
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double dot = dy.row(r).dot(y.row(r));
    dx.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
  }
  return dx;
}

}  // namespace ops
}  // namespace bowelsound::cnn
