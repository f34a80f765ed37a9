#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bowelsound/cnn/architecture.hpp"
#include "bowelsound/cnn/layers.hpp"
#include "bowelsound/error.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/rng.hpp"

namespace bowelsound::cnn {

/// Network weights plus the per-feature standardization applied to raw MFCC
/// inputs. params[i] is empty for layers without weights.
struct CnnModel {
  Architecture arch;
  std::vector<Params> params;
  RowVec input_mean;
  RowVec input_scale;
  std::uint64_t seed = 0;
};

enum class Mode { Inference, Train };

/// Glorot-uniform weights, zero biases, identity input standardization.
inline CnnModel init_model(const Architecture& arch, std::uint64_t seed) {
  const auto shapes = shape_chain(arch);
  CnnModel m;
  m.arch = arch;
  m.seed = seed;
  m.input_mean = RowVec::Zero(static_cast<Eigen::Index>(arch.input_length));
  m.input_scale = RowVec::Ones(static_cast<Eigen::Index>(arch.input_length));
  m.params.resize(arch.layers.size());
  Rng rng(seed);
  std::size_t in_channels = 1;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    std::size_t fan_in = 0, fan_out = 0, rows = 0;
    if (l.kind == LayerKind::Conv1D) {
      rows = l.kernel * in_channels;
      fan_in = rows;
      fan_out = l.kernel * l.units;
    } else if (l.kind == LayerKind::Dense) {
      rows = in_channels;
      fan_in = in_channels;
      fan_out = l.units;
    }
    if (l.has_params()) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      auto& p = m.params[i];
      p.W.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l.units));
      for (Eigen::Index k = 0; k < p.W.size(); ++k) p.W.data()[k] = rng.uniform(-limit, limit);
      p.b = RowVec::Zero(static_cast<Eigen::Index>(l.units));
    }
    in_channels = shapes[i].channels;
  }
  return m;
}

inline std::size_t parameter_count(const CnnModel& m) {
  std::size_t n = 0;
  for (const auto& p : m.params) n += p.size();
  return n;
}

/// Intermediate state of one batched forward pass, consumed by backward().
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<Mat> inputs;  // input to layer i
  std::vector<Mat> aux;     // conv: unrolled input; dropout: mask
  std::vector<std::vector<Eigen::Index>> argmax;
  Mat output;
};

/// Raw features (B x input_length) to class probabilities (B x classes).
/// Dropout is active only in Mode::Train, which then requires `rng`.
inline Mat forward_batch(const CnnModel& m, const Mat& features, Mode mode = Mode::Inference,
                         Rng* rng = nullptr, ForwardCache* cache = nullptr) {
  const auto batch = static_cast<std::size_t>(features.rows());
  if (static_cast<std::size_t>(features.cols()) != m.arch.input_length)
    throw Error(ErrorKind::InvalidArgument, "feature width does not match the model input length");
  if (!features.allFinite()) throw Error(ErrorKind::NonFiniteInput, "non-finite feature value");
  if (mode == Mode::Train && rng == nullptr)
    throw Error(ErrorKind::InvalidArgument, "training-mode forward pass needs a random generator");

  Mat normalized = (features.rowwise() - m.input_mean).array().rowwise() / m.input_scale.array();
  // B x L row-major is the same memory as (B*L) x 1
  Mat x = Eigen::Map<const Mat>(normalized.data(), normalized.size(), 1);

  if (cache) {
    cache->batch = batch;
    cache->inputs.assign(m.arch.layers.size(), Mat());
    cache->aux.assign(m.arch.layers.size(), Mat());
    cache->argmax.assign(m.arch.layers.size(), {});
  }

  std::size_t length = m.arch.input_length;
  for (std::size_t i = 0; i < m.arch.layers.size(); ++i) {
    const auto& l = m.arch.layers[i];
    Mat scratch;
    std::vector<Eigen::Index> idx;
    Mat y;
    switch (l.kind) {
      case LayerKind::Conv1D:
        y = ops::conv_forward(x, batch, length, m.params[i], l.kernel, scratch);
        break;
      case LayerKind::ReLU:
        y = ops::relu_forward(x);
        break;
      case LayerKind::Dropout:
        if (mode == Mode::Train && l.rate > 0.0) {
          scratch = ops::dropout_mask(x.rows(), x.cols(), l.rate, *rng);
          y = x.cwiseProduct(scratch);
        } else {
          y = x;
        }
        break;
      case LayerKind::MaxPool:
        y = ops::maxpool_forward(x, batch, length, l.pool, idx);
        length /= l.pool;
        break;
      case LayerKind::Flatten:
        y = Eigen::Map<const Mat>(x.data(), static_cast<Eigen::Index>(batch), x.size() / static_cast<Eigen::Index>(batch));
        length = 1;
        break;
      case LayerKind::Dense:
        y = ops::dense_forward(x, m.params[i]);
        break;
      case LayerKind::Softmax:
        y = ops::softmax_forward(x);
        break;
    }
    if (cache) {
      cache->inputs[i] = std::move(x);
      cache->aux[i] = std::move(scratch);
      cache->argmax[i] = std::move(idx);
    }
    x = std::move(y);
  }
  if (cache) cache->output = x;
  return x;
}

inline std::vector<Params> zero_like(const CnnModel& m) {
  std::vector<Params> g(m.params.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i].W = Mat::Zero(m.params[i].W.rows(), m.params[i].W.cols());
    g[i].b = RowVec::Zero(m.params[i].b.size());
  }
  return g;
}

enum class OutputGrad {
  Probabilities,  // gradient w.r.t. the softmax output
  Logits,         // gradient w.r.t. the softmax input; the softmax layer is skipped
};

/// Backpropagates `grad_out` through the cached pass; returns weight gradients
/// and writes the gradient w.r.t. the (standardized) input into `grad_in` if given.
inline std::vector<Params> backward(const CnnModel& m, const ForwardCache& cache, Mat grad_out,
                                    OutputGrad kind = OutputGrad::Probabilities, Mat* grad_in = nullptr) {
  auto grads = zero_like(m);
  const auto shapes = shape_chain(m.arch);
  Mat g = std::move(grad_out);
  for (std::size_t i = m.arch.layers.size(); i-- > 0;) {
    const auto& l = m.arch.layers[i];
    const Mat& x = cache.inputs[i];
    const std::size_t in_length = i == 0 ? m.arch.input_length : shapes[i - 1].length;
    switch (l.kind) {
      case LayerKind::Conv1D:
        g = ops::conv_backward(g, cache.aux[i], cache.batch, in_length, m.params[i], l.kernel, grads[i]);
        break;
      case LayerKind::ReLU:
        g = ops::relu_backward(g, x);
        break;
      case LayerKind::Dropout:
        if (cache.aux[i].size() > 0) g = g.cwiseProduct(cache.aux[i]);
        break;
      case LayerKind::MaxPool:
        g = ops::maxpool_backward(g, cache.argmax[i], x.rows());
        break;
      case LayerKind::Flatten:
        g = Eigen::Map<const Mat>(g.data(), x.rows(), x.cols()).eval();
        break;
      case LayerKind::Dense:
        g = ops::dense_backward(g, x, m.params[i], grads[i]);
        break;
      case LayerKind::Softmax:
        if (!(kind == OutputGrad::Logits && i + 1 == m.arch.layers.size()))
          g = ops::softmax_backward(g, cache.output);
        break;
    }
  }
  if (grad_in) *grad_in = std::move(g);
  return grads;
}

/// Mean cross-entropy of probability rows against class indices.
inline double cross_entropy(const Mat& probs, std::span<const Label> labels) {
  double loss = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r)
    loss -= std::log(std::max(probs(r, static_cast<Eigen::Index>(index(labels[static_cast<std::size_t>(r)]))), 1e-300));
  return loss / static_cast<double>(probs.rows());
}

/// Gradient of the mean cross-entropy w.r.t. the logits: (p - onehot) / B.
inline Mat cross_entropy_logit_grad(const Mat& probs, std::span<const Label> labels) {
  Mat g = probs;
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    g(r, static_cast<Eigen::Index>(index(labels[static_cast<std::size_t>(r)]))) -= 1.0;
  return g / static_cast<double>(g.rows());
}

struct ClassProbabilities {
  double np = 0.5;
  double p = 0.5;
};

inline ClassProbabilities forward(const CnnModel& m, std::span<const double> features,
                                  Mode mode = Mode::Inference, Rng* rng = nullptr) {
  if (features.size() != m.arch.input_length)
    throw Error(ErrorKind::InvalidArgument, "expected " + std::to_string(m.arch.input_length) + " features");
  Mat x(1, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!std::isfinite(features[i])) throw Error(ErrorKind::NonFiniteInput, "non-finite feature value");
    x(0, static_cast<Eigen::Index>(i)) = features[i];
  }
  const Mat y = forward_batch(m, x, mode, rng);
  return {y(0, 0), y(0, 1)};
}

/// Stacks equally sized feature vectors into a B x width matrix.
template <typename Range, typename Get>
Mat stack_rows(const Range& items, std::size_t width, Get get) {
  Mat x(static_cast<Eigen::Index>(std::size(items)), static_cast<Eigen::Index>(width));
  Eigen::Index r = 0;
  for (const auto& item : items) {
    const auto& v = get(item);
    if (v.size() != width) throw Error(ErrorKind::InvalidArgument, "feature width mismatch");
    for (std::size_t c = 0; c < width; ++c) x(r, static_cast<Eigen::Index>(c)) = v[c];
    ++r;
  }
  return x;
}

}  // namespace bowelsound::cnn
