#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bowelsound/error.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/text.hpp"

namespace bowelsound {

/// Binary confusion counts with P as the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts count_confusion(std::span<const Label> truth, std::span<const Label> pred) {
  if (truth.size() != pred.size())
    throw Error(ErrorKind::LengthMismatch, "truth and prediction lengths differ (" + std::to_string(truth.size()) +
                                               " vs " + std::to_string(pred.size()) + ")");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == Label::P, p = pred[i] == Label::P;
    if (t && p) ++c.tp;
    else if (!t && !p) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

/// Harmonic mean of precision and recall; 0 when both are 0.
inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

struct ClassMetrics {
  double rec = 0.0, pre = 0.0, f1 = 0.0;
};

struct MetricReport {
  double acc = 0.0;
  std::optional<double> auc;  // absent when the truth holds a single class
  double ma_f1 = 0.0;
  double wt_f1 = 0.0;
  ClassMetrics np, p;
  ConfusionCounts counts;

  const ClassMetrics& cls(Label l) const { return l == Label::P ? p : np; }
};

/// Area under the ROC curve traced by sweeping a threshold over `scores`
/// from high to low; tied scores move along a straight segment.
inline std::optional<double> roc_auc(std::span<const Label> truth, std::span<const double> scores) {
  if (truth.size() != scores.size()) throw Error(ErrorKind::LengthMismatch, "truth and score lengths differ");
  const auto pos = static_cast<double>(std::count(truth.begin(), truth.end(), Label::P));
  const double neg = static_cast<double>(truth.size()) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0, tpr = 0.0, fpr = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0.0, dfp = 0.0;
    std::size_t k = i;
    for (; k < order.size() && scores[order[k]] == scores[order[i]]; ++k)
      (truth[order[k]] == Label::P ? dtp : dfp) += 1.0;
    const double next_tpr = tpr + dtp / pos, next_fpr = fpr + dfp / neg;
    area += (next_fpr - fpr) * (tpr + next_tpr) / 2.0;
    tpr = next_tpr;
    fpr = next_fpr;
    i = k;
  }
  return area;
}

inline MetricReport report_from_counts(const ConfusionCounts& c) {
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  MetricReport r;
  r.counts = c;
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn), fp = static_cast<double>(c.fp),
               fn = static_cast<double>(c.fn), n = static_cast<double>(c.total());
  r.acc = ratio(tp + tn, n);
  r.p.rec = ratio(tp, tp + fn);
  r.p.pre = ratio(tp, tp + fp);
  r.p.f1 = f1_score(r.p.pre, r.p.rec);
  r.np.rec = ratio(tn, tn + fp);
  r.np.pre = ratio(tn, tn + fn);
  r.np.f1 = f1_score(r.np.pre, r.np.rec);
  r.ma_f1 = (r.np.f1 + r.p.f1) / 2.0;
  r.wt_f1 = ratio((tp + fn) * r.p.f1 + (tn + fp) * r.np.f1, n);
  return r;
}

inline MetricReport compute_metrics(std::span<const Label> truth, std::span<const Label> pred,
                                    std::span<const double> scores) {
  if (truth.size() != pred.size() || truth.size() != scores.size())
    throw Error(ErrorKind::LengthMismatch, "truth, prediction and score lengths differ");
  MetricReport r = report_from_counts(count_confusion(truth, pred));
  r.auc = roc_auc(truth, scores);
  return r;
}

/// Metrics of hard labels, scored by the labels themselves (P = 1, NP = 0).
inline MetricReport compute_metrics(std::span<const Label> truth, std::span<const Label> pred) {
  std::vector<double> scores;
  scores.reserve(pred.size());
  for (Label l : pred) scores.push_back(l == Label::P ? 1.0 : 0.0);
  return compute_metrics(truth, pred, scores);
}

// ---------------------------------------------------------------------------
// Rendering

/// Column layout: ACC AUC MA_F1 WT_F1 | NP REC PRE F1 | P REC PRE F1.
inline std::string format_report_header() {
  return "                 ACC     AUC   MA_F1   WT_F1 |  NP_REC  NP_PRE   NP_F1 |   P_REC   P_PRE    P_F1\n";
}

inline std::string format_report_row(const std::string& name, const MetricReport& r) {
  auto cell = [](double v) {
    std::string s = format_fixed(v, 4);
    return std::string(s.size() < 8 ? 8 - s.size() : 0, ' ') + s;
  };
  std::string row = name.substr(0, 14);
  row.resize(14, ' ');
  row += cell(r.acc) + (r.auc ? cell(*r.auc) : std::string("     n/a")) + cell(r.ma_f1) + cell(r.wt_f1) + " |" +
         cell(r.np.rec) + cell(r.np.pre) + cell(r.np.f1) + " |" + cell(r.p.rec) + cell(r.p.pre) + cell(r.p.f1) + "\n";
  return row;
}

/// `prefix.key = value` lines.
inline std::string format_report_kv(const std::string& prefix, const MetricReport& r) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += prefix + "." + k + " = " + v + "\n"; };
  kv("acc", format_double(r.acc));
  kv("auc", r.auc ? format_double(*r.auc) : "absent");
  kv("ma_f1", format_double(r.ma_f1));
  kv("wt_f1", format_double(r.wt_f1));
  kv("np_rec", format_double(r.np.rec));
  kv("np_pre", format_double(r.np.pre));
  kv("np_f1", format_double(r.np.f1));
  kv("p_rec", format_double(r.p.rec));
  kv("p_pre", format_double(r.p.pre));
  kv("p_f1", format_double(r.p.f1));
  kv("tp", std::to_string(r.counts.tp));
  kv("tn", std::to_string(r.counts.tn));
  kv("fp", std::to_string(r.counts.fp));
  kv("fn", std::to_string(r.counts.fn));
  return out;
}

}  // namespace bowelsound
