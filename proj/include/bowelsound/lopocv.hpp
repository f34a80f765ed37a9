#pragma once

// Leave-one-subject-out evaluation of the CNN + HSMM pipeline, with the
// refinement ablations built on top of its per-fold outputs.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "bowelsound/cnn/train.hpp"
#include "bowelsound/error.hpp"
#include "bowelsound/hsmm.hpp"
#include "bowelsound/metrics.hpp"
#include "bowelsound/mfcc.hpp"
#include "bowelsound/sequence.hpp"
#include "bowelsound/signal_io.hpp"

namespace bowelsound {

/// One subject's featurized segments in time order.
struct SubjectData {
  std::string subject_id;
  std::vector<FeatureRecord> segments;

  LabelSequence truth() const {
    LabelSequence out;
    out.reserve(segments.size());
    for (const auto& s : segments) out.push_back(s.truth);
    return out;
  }
};

/// Groups feature records by subject, keeping first-appearance order.
inline std::vector<SubjectData> group_by_subject(std::span<const FeatureRecord> records) {
  std::vector<SubjectData> out;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SubjectData& s) { return s.subject_id == r.subject_id; });
    if (it == out.end()) {
      out.push_back({r.subject_id, {}});
      it = std::prev(out.end());
    }
    it->segments.push_back(r);
  }
  for (auto& s : out)
    std::stable_sort(s.segments.begin(), s.segments.end(),
                     [](const FeatureRecord& a, const FeatureRecord& b) { return a.start < b.start; });
  return out;
}

inline std::vector<SubjectData> featurize_manifest(std::span<const ManifestEntry> manifest, const MfccConfig& cfg,
                                                   double window, double hop) {
  std::vector<SubjectData> out;
  for (const auto& e : manifest) {
    const Recording rec = load_recording(e);
    out.push_back({e.subject_id, featurize(rec, cfg, window, hop)});
  }
  return out;
}

struct LopocvConfig {
  cnn::TrainConfig train;
  cnn::Architecture arch = cnn::reference_architecture();
  double sigma = hsmm::kDefaultSigma;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::function<void(const std::string&)> log;  // progress messages, may be empty
};

struct FoldResult {
  std::string subject_id;
  ProbSequence raw;
  LabelSequence truth;
  hsmm::HsmmParams params;  // learned from the training subjects' ground truth
  hsmm::StateSequence refined;
  MetricReport pre;         // thresholded CNN output
  MetricReport post;        // Laplace-HSMM refinement
  // discrete-emission variant, emissions from the training confusion matrix
  std::optional<hsmm::EmissionMatrix> conventional_emission;
  LabelSequence conventional_labels;
  std::size_t best_epoch = 0;
  std::vector<std::string> training_subjects;
};

struct PooledReports {
  MetricReport pre, post;
  std::optional<MetricReport> conventional;
};

struct LopocvResult {
  std::vector<FoldResult> folds;
  PooledReports pooled;
};

namespace detail {

inline hsmm::ConfusionMatrix confusion_matrix(const ConfusionCounts& c) {
  hsmm::ConfusionMatrix m{};
  m[index(Label::NP)][index(Label::NP)] = static_cast<double>(c.tn);
  m[index(Label::NP)][index(Label::P)] = static_cast<double>(c.fp);
  m[index(Label::P)][index(Label::NP)] = static_cast<double>(c.fn);
  m[index(Label::P)][index(Label::P)] = static_cast<double>(c.tp);
  return m;
}

inline void append(LabelSequence& dst, std::span<const Label> src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace detail

/// Trains on every subject except `held_out` and evaluates on it.
inline FoldResult run_fold(std::span<const SubjectData> subjects, std::size_t held_out, const LopocvConfig& cfg) {
  const SubjectData& test = subjects[held_out];
  FoldResult fold;
  fold.subject_id = test.subject_id;

  std::vector<FeatureRecord> train_records;
  std::vector<LabelSequence> train_truth;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    if (s == held_out) continue;
    fold.training_subjects.push_back(subjects[s].subject_id);
    train_records.insert(train_records.end(), subjects[s].segments.begin(), subjects[s].segments.end());
    train_truth.push_back(subjects[s].truth());
  }
  for (const auto& r : train_records)
    if (r.subject_id == test.subject_id)
      throw Error(ErrorKind::LeakageDetected, "segment of held-out subject '" + test.subject_id + "' in training data");

  cnn::TrainConfig tc = cfg.train;
  tc.seed = Rng::mix(cfg.seed, held_out);
  const auto trained = cnn::train(train_records, tc, cfg.arch);
  fold.best_epoch = trained.curve.best_epoch;

  fold.params = hsmm::learn_params(train_truth, cfg.sigma);
  fold.raw = cnn::predict_sequence(trained.model, test.segments);
  fold.truth = test.truth();
  fold.refined = hsmm::viterbi_refine(fold.raw, fold.params);
  fold.pre = compute_metrics(fold.truth, threshold(fold.raw.probs), fold.raw.probs);
  fold.post = compute_metrics(fold.truth, hsmm::expand(fold.refined));

  // training-set confusion of the thresholded CNN
  ConfusionCounts train_conf;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    if (s == held_out) continue;
    const auto p = cnn::predict_sequence(trained.model, subjects[s].segments);
    train_conf += count_confusion(subjects[s].truth(), threshold(p.probs));
  }
  try {
    fold.conventional_emission = hsmm::conventional_emission(detail::confusion_matrix(train_conf));
    fold.conventional_labels =
        hsmm::expand(hsmm::viterbi_refine_discrete(fold.raw.probs, fold.params, *fold.conventional_emission));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateConfusion && e.kind() != ErrorKind::InfeasibleDecoding) throw;
    fold.conventional_emission.reset();
    fold.conventional_labels.clear();
  }
  return fold;
}

/// Metrics over all held-out segments of all folds as one population.
inline PooledReports pool(std::span<const FoldResult> folds) {
  LabelSequence truth, pre, post, conv;
  std::vector<double> scores;
  bool conv_complete = true;
  for (const auto& f : folds) {
    detail::append(truth, f.truth);
    detail::append(pre, threshold(f.raw.probs));
    detail::append(post, hsmm::expand(f.refined));
    scores.insert(scores.end(), f.raw.probs.begin(), f.raw.probs.end());
    if (f.conventional_labels.size() == f.truth.size())
      detail::append(conv, f.conventional_labels);
    else
      conv_complete = false;
  }
  PooledReports r;
  r.pre = compute_metrics(truth, pre, scores);
  r.post = compute_metrics(truth, post);
  if (conv_complete && !folds.empty()) r.conventional = compute_metrics(truth, conv);
  return r;
}

inline LopocvResult run_lopocv(std::span<const SubjectData> subjects, const LopocvConfig& cfg) {
  if (subjects.size() < 2)
    throw Error(ErrorKind::InsufficientSubjects, "leave-one-subject-out needs at least 2 subjects");
  std::set<std::string> ids;
  for (const auto& s : subjects) {
    if (s.segments.empty()) throw Error(ErrorKind::EmptyInput, "subject '" + s.subject_id + "' has no segments");
    if (!ids.insert(s.subject_id).second) throw Error(ErrorKind::InvalidArgument, "duplicate subject '" + s.subject_id + "'");
  }

  LopocvResult result;
  result.folds.resize(subjects.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < subjects.size();) {
      {
        std::lock_guard lock(mu);
        if (failure) return;
        if (cfg.log) cfg.log("fold " + std::to_string(i + 1) + "/" + std::to_string(subjects.size()) +
                             ": holding out " + subjects[i].subject_id);
      }
      try {
        result.folds[i] = run_fold(subjects, i, cfg);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, subjects.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool_threads;
    for (std::size_t j = 0; j < jobs; ++j) pool_threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  result.pooled = pool(result.folds);
  return result;
}

// ---------------------------------------------------------------------------
// Ablations

struct MetricDeltas {
  double acc = 0.0;
  std::optional<double> auc;
  double ma_f1 = 0.0;
  double wt_f1 = 0.0;
};

/// Signed post - pre differences of the pooled metrics.
inline MetricDeltas metric_deltas(const MetricReport& pre, const MetricReport& post) {
  MetricDeltas d;
  d.acc = post.acc - pre.acc;
  if (pre.auc && post.auc) d.auc = *post.auc - *pre.auc;
  d.ma_f1 = post.ma_f1 - pre.ma_f1;
  d.wt_f1 = post.wt_f1 - pre.wt_f1;
  return d;
}

inline MetricDeltas ablation_refinement(std::span<const FoldResult> folds) {
  const auto p = pool(folds);
  return metric_deltas(p.pre, p.post);
}

struct SigmaPoint {
  double sigma = 0.0;
  double acc = 0.0;
  std::optional<double> auc;
};

/// Re-decodes every fold's stored CNN output under each σ, keeping the
/// trained networks and duration tables fixed.
inline std::vector<SigmaPoint> sigma_sweep(std::span<const FoldResult> folds, std::span<const double> sigmas) {
  std::vector<SigmaPoint> out;
  for (double sigma : sigmas) {
    if (!(sigma > 0.0)) throw Error(ErrorKind::NonPositiveSigma, "σ values must be positive");
    LabelSequence truth, pred;
    for (const auto& f : folds) {
      hsmm::HsmmParams p = f.params;
      p.sigma = sigma;
      detail::append(truth, f.truth);
      detail::append(pred, hsmm::expand(hsmm::viterbi_refine(f.raw, p)));
    }
    const auto r = compute_metrics(truth, pred);
    out.push_back({sigma, r.acc, r.auc});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_lopocv_table(const LopocvResult& r) {
  std::string out = format_report_header();
  for (const auto& f : r.folds) {
    out += format_report_row(f.subject_id + " cnn", f.pre);
    out += format_report_row(f.subject_id + " +hsmm", f.post);
  }
  out += format_report_row("pooled cnn", r.pooled.pre);
  if (r.pooled.conventional) out += format_report_row("pooled conv", *r.pooled.conventional);
  out += format_report_row("pooled +hsmm", r.pooled.post);
  return out;
}

inline std::string format_pooled_table(const PooledReports& p) {
  std::string out = format_report_header();
  out += format_report_row("CNN", p.pre);
  if (p.conventional) out += format_report_row("CNN+conv HSMM", *p.conventional);
  out += format_report_row("CNN+HSMM", p.post);
  return out;
}

inline std::string format_lopocv_kv(const LopocvResult& r) {
  std::string out = "# leave-one-subject-out report\n";
  out += "folds = " + std::to_string(r.folds.size()) + "\n";
  out += format_report_kv("pooled.pre", r.pooled.pre);
  out += format_report_kv("pooled.post", r.pooled.post);
  out += "pooled.post.auc_raw = " + (r.pooled.pre.auc ? format_double(*r.pooled.pre.auc) : std::string("absent")) + "\n";
  if (r.pooled.conventional) out += format_report_kv("pooled.conventional", *r.pooled.conventional);
  const auto d = metric_deltas(r.pooled.pre, r.pooled.post);
  out += "delta.acc = " + format_double(d.acc) + "\n";
  out += "delta.auc = " + (d.auc ? format_double(*d.auc) : std::string("absent")) + "\n";
  out += "delta.ma_f1 = " + format_double(d.ma_f1) + "\n";
  out += "delta.wt_f1 = " + format_double(d.wt_f1) + "\n";
  for (const auto& f : r.folds) {
    out += format_report_kv("fold." + f.subject_id + ".pre", f.pre);
    out += format_report_kv("fold." + f.subject_id + ".post", f.post);
    out += "fold." + f.subject_id + ".best_epoch = " + std::to_string(f.best_epoch) + "\n";
  }
  return out;
}

}  // namespace bowelsound
