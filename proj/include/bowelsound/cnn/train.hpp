#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "bowelsound/cnn/model.hpp"
#include "bowelsound/error.hpp"
#include "bowelsound/mfcc.hpp"
#include "bowelsound/rng.hpp"
#include "bowelsound/sequence.hpp"

namespace bowelsound::cnn {

struct TrainConfig {
  double learning_rate = 1e-5;
  double lr_decay = 1e-6;  // lr_t = lr / (1 + decay * t), t = updates so far
  double rho = 0.9;        // RMSProp running-average decay
  double epsilon = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double val_fraction = 0.3;
  bool balance = true;  // downsample the majority class of the training split
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0) || !(c.lr_decay >= 0.0) || !(c.epsilon > 0.0) || c.epochs == 0 ||
      c.batch_size == 0 || !(c.rho > 0.0 && c.rho < 1.0))
    throw Error(ErrorKind::InvalidArgument, "training hyper-parameters must be positive");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument, "validation fraction must be in (0, 1)");
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingCurve {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based epoch whose weights were kept
};

struct TrainResult {
  CnnModel model;
  TrainingCurve curve;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

/// Index split used by train(): stratified validation hold-out, then optional
/// majority downsampling of the remaining training indices.
struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

inline DataSplit stratified_split(std::span<const Label> labels, double val_fraction, bool balance, Rng& rng) {
  std::vector<std::size_t> by_class[kNumLabels];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[index(labels[i])].push_back(i);
  DataSplit split;
  std::vector<std::size_t> train_by_class[kNumLabels];
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    auto& idx = by_class[c];
    rng.shuffle(std::span(idx));
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    n_val = std::min(n_val, idx.size() > 0 ? idx.size() - 1 : 0);  // keep one for training
    split.val.insert(split.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_by_class[c].assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  if (balance) {
    const std::size_t keep = std::min(train_by_class[0].size(), train_by_class[1].size());
    for (auto& t : train_by_class) t.resize(keep);  // already shuffled
  }
  for (const auto& t : train_by_class) split.train.insert(split.train.end(), t.begin(), t.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

/// Per-feature mean and standard deviation over the given rows; a zero
/// deviation is replaced by 1.
inline void fit_standardization(CnnModel& m, const Mat& x) {
  m.input_mean = x.colwise().mean();
  const Mat centered = x.rowwise() - m.input_mean;
  m.input_scale = (centered.array().square().colwise().sum() / static_cast<double>(std::max<Eigen::Index>(x.rows(), 1)))
                      .sqrt()
                      .matrix();
  for (Eigen::Index i = 0; i < m.input_scale.size(); ++i)
    if (!(m.input_scale(i) > 1e-12)) m.input_scale(i) = 1.0;
}

/// RMSProp with time-based learning-rate decay.
class RmsProp {
 public:
  RmsProp(const CnnModel& m, const TrainConfig& cfg) : cfg_(cfg), acc_(zero_like(m)) {}

  void step(CnnModel& m, const std::vector<Params>& grads) {
    const double lr = cfg_.learning_rate / (1.0 + cfg_.lr_decay * static_cast<double>(updates_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (grads[i].W.size() == 0) continue;
      update(m.params[i].W, acc_[i].W, grads[i].W, lr);
      update(m.params[i].b, acc_[i].b, grads[i].b, lr);
    }
    ++updates_;
  }

  std::size_t updates() const { return updates_; }

 private:
  template <typename T>
  void update(T& w, T& acc, const T& g, double lr) {
    acc = cfg_.rho * acc + (1.0 - cfg_.rho) * g.cwiseProduct(g);
    w.array() -= lr * g.array() / (acc.array().sqrt() + cfg_.epsilon);
  }

  TrainConfig cfg_;
  std::vector<Params> acc_;
  std::size_t updates_ = 0;
};

inline double accuracy(const Mat& probs, std::span<const Label> labels) {
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const Label pred = probs(r, 1) >= probs(r, 0) ? Label::P : Label::NP;
    correct += pred == labels[static_cast<std::size_t>(r)];
  }
  return probs.rows() ? static_cast<double>(correct) / static_cast<double>(probs.rows()) : 0.0;
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch training on labeled feature vectors. `initial`, when given,
/// replaces the Glorot initialization (its architecture is used). The
/// returned model holds the weights of the epoch with the lowest validation loss.
inline TrainResult train(std::span<const FeatureRecord> data, const TrainConfig& cfg,
                         const Architecture& arch = reference_architecture(),
                         std::optional<CnnModel> initial = std::nullopt, const EpochCallback& on_epoch = {}) {
  validate(cfg);
  if (data.empty()) throw Error(ErrorKind::EmptyInput, "no training examples");
  LabelSequence labels;
  labels.reserve(data.size());
  for (const auto& r : data) labels.push_back(r.truth);
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::P));
  if (n_pos == 0 || n_pos == labels.size())
    throw Error(ErrorKind::SingleClassData, "training data must contain both P and NP examples");

  CnnModel model = initial ? std::move(*initial) : init_model(arch, cfg.seed);
  const Mat all = stack_rows(data, model.arch.input_length, [](const FeatureRecord& r) -> const MfccVector& { return r.coeffs; });

  Rng rng(Rng::mix(cfg.seed, 1));
  const DataSplit split = stratified_split(labels, cfg.val_fraction, cfg.balance, rng);

  auto gather = [&](const std::vector<std::size_t>& idx, Mat& x, LabelSequence& y) {
    x.resize(static_cast<Eigen::Index>(idx.size()), all.cols());
    y.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(idx[i]));
      y[i] = labels[idx[i]];
    }
  };
  Mat x_train, x_val;
  LabelSequence y_train, y_val;
  gather(split.train, x_train, y_train);
  gather(split.val, x_val, y_val);
  if (!initial) fit_standardization(model, x_train);

  RmsProp opt(model, cfg);
  TrainResult result;
  result.train_size = split.train.size();
  result.val_size = split.val.size();
  double best_val = std::numeric_limits<double>::infinity();
  CnnModel best = model;

  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  ForwardCache cache;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double loss_sum = 0.0, correct = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Mat xb(static_cast<Eigen::Index>(end - start), x_train.cols());
      LabelSequence yb(end - start);
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = x_train.row(static_cast<Eigen::Index>(order[i]));
        yb[i - start] = y_train[order[i]];
      }
      const Mat probs = forward_batch(model, xb, Mode::Train, &rng, &cache);
      const double n = static_cast<double>(end - start);
      loss_sum += cross_entropy(probs, yb) * n;
      correct += accuracy(probs, yb) * n;
      opt.step(model, backward(model, cache, cross_entropy_logit_grad(probs, yb), OutputGrad::Logits));
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_acc = correct / static_cast<double>(order.size());
    if (x_val.rows() > 0) {
      const Mat pv = forward_batch(model, x_val);
      stats.val_loss = cross_entropy(pv, y_val);
      stats.val_acc = accuracy(pv, y_val);
    }
    if (!std::isfinite(stats.train_loss))
      throw Error(ErrorKind::NonFiniteInput, "training diverged at epoch " + std::to_string(epoch));
    // without a validation split the last epoch wins
    const double criterion = x_val.rows() > 0 ? stats.val_loss : -static_cast<double>(epoch);
    if (criterion < best_val) {
      best_val = criterion;
      best = model;
      result.curve.best_epoch = epoch;
    }
    result.curve.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.model = std::move(best);
  return result;
}

/// P-probabilities for time-ordered segments of one subject.
inline ProbSequence predict_sequence(const CnnModel& m, std::span<const FeatureRecord> segments) {
  ProbSequence out;
  if (segments.empty()) return out;
  out.subject_id = segments.front().subject_id;
  const Mat x = stack_rows(segments, m.arch.input_length, [](const FeatureRecord& r) -> const MfccVector& { return r.coeffs; });
  const Mat probs = forward_batch(m, x);
  out.starts.reserve(segments.size());
  out.probs.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    out.starts.push_back(segments[i].start);
    out.probs.push_back(std::clamp(probs(static_cast<Eigen::Index>(i), 1), 0.0, 1.0));
  }
  return out;
}

}  // namespace bowelsound::cnn
