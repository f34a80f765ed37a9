#pragma once

// Exhaustive reference decoder: scores every alternating run-length
// composition of T directly from the model definition. Exponential in T; for
// checking the dynamic program on small instances only.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "bowelsound/hsmm.hpp"

namespace oracle {

using bowelsound::Label;
using bowelsound::hsmm::HsmmParams;
using bowelsound::hsmm::Run;

struct BruteForceResult {
  std::vector<Run> runs;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  std::size_t candidates = 0;
  // best score among sequences other than the winner; lets callers detect near-ties
  double runner_up = -std::numeric_limits<double>::infinity();
};

/// Emission term for one observation; `discrete` switches to the thresholded
/// confusion-matrix emission.
struct EmissionFn {
  virtual ~EmissionFn() = default;
  virtual double log_b(double x, Label j) const = 0;
};

struct LaplaceEmission : EmissionFn {
  double sigma;
  explicit LaplaceEmission(double s) : sigma(s) {}
  double log_b(double x, Label j) const override {
    const double mu = j == Label::P ? 1.0 : 0.0;
    return std::log(1.0 / (2.0 * sigma) * std::exp(-std::fabs(x - mu) / sigma));
  }
};

inline double log_or_neg_inf(double p) { return p > 0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

inline double score(const std::vector<Run>& runs, const std::vector<double>& obs, const HsmmParams& params,
                    const EmissionFn& em) {
  double s = log_or_neg_inf(params.pi[static_cast<int>(runs.front().label)]);
  std::size_t t = 0;
  for (const auto& r : runs) {
    const auto& table = params.durations[static_cast<int>(r.label)];
    if (r.duration > table.size()) return -std::numeric_limits<double>::infinity();
    s += log_or_neg_inf(table[r.duration - 1]);
    for (std::size_t k = 0; k < r.duration; ++k) s += em.log_b(obs[t + k], r.label);
    t += r.duration;
  }
  return s;
}

/// Tie order matching the documented rule: final state NP before P, then
/// shorter durations compared from the last run backwards.
inline bool preferred(const std::vector<Run>& a, const std::vector<Run>& b) {
  if (a.back().label != b.back().label) return a.back().label == Label::NP;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    const auto& ra = a[a.size() - 1 - i];
    const auto& rb = b[b.size() - 1 - i];
    if (ra.duration != rb.duration) return ra.duration < rb.duration;
  }
  return a.size() < b.size();
}

inline BruteForceResult decode(const std::vector<double>& obs, const HsmmParams& params, const EmissionFn& em,
                               double tie_tolerance = 1e-12) {
  const std::size_t T = obs.size();
  BruteForceResult best;
  // each bit of `cuts` marks a run boundary after position i
  for (int first = 0; first < 2; ++first) {
    for (unsigned long cuts = 0; cuts < (1ul << (T - 1)); ++cuts) {
      std::vector<Run> runs;
      Label state = static_cast<Label>(first);
      std::size_t len = 0;
      for (std::size_t i = 0; i < T; ++i) {
        ++len;
        if (i + 1 == T || (cuts >> i) & 1ul) {
          runs.push_back({state, len});
          state = state == Label::P ? Label::NP : Label::P;
          len = 0;
        }
      }
      ++best.candidates;
      const double s = score(runs, obs, params, em);
      if (best.runs.empty()) {
        best.runs = runs;
        best.log_likelihood = s;
        continue;
      }
      const bool tie = std::isfinite(s) && std::fabs(s - best.log_likelihood) <= tie_tolerance;
      if (s > best.log_likelihood + tie_tolerance || (tie && preferred(runs, best.runs)) ||
          (!std::isfinite(best.log_likelihood) && std::isfinite(s))) {
        best.runner_up = std::max(best.runner_up, best.log_likelihood);
        best.runs = runs;
        best.log_likelihood = s;
      } else {
        best.runner_up = std::max(best.runner_up, s);
      }
    }
  }
  return best;
}

}  // namespace oracle
