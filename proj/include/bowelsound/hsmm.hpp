#pragma once

// Two-state (P / NP) hidden semi-Markov model with explicit duration tables
// and Laplace emissions over classifier probabilities. States alternate on
// every transition, so a decode is a run-length sequence of (label, duration).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bowelsound/error.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/sequence.hpp"
#include "bowelsound/text.hpp"

namespace bowelsound::hsmm {

inline constexpr double kDefaultSigma = 5.0;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using StateTable = std::array<double, kNumLabels>;

/// durations[j][d - 1] = p_j(d); a table's length is that state's longest duration.
using DurationTables = std::array<std::vector<double>, kNumLabels>;

struct HsmmParams {
  StateTable pi{0.5, 0.5};
  double sigma = kDefaultSigma;
  StateTable mu{0.0, 1.0};  // Laplace location per state: NP -> 0, P -> 1
  DurationTables durations;

  /// Transitions always switch state.
  static double transition(Label from, Label to) { return from == to ? 0.0 : 1.0; }

  std::size_t max_duration(Label j) const { return durations[index(j)].size(); }
};

struct Run {
  Label label = Label::NP;
  std::size_t duration = 0;  // segments
  friend bool operator==(const Run&, const Run&) = default;
};

struct StateSequence {
  std::vector<Run> runs;
  double log_likelihood = kNegInf;

  std::size_t length() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.duration;
    return n;
  }
};

inline LabelSequence expand(const StateSequence& s) {
  LabelSequence out;
  out.reserve(s.length());
  for (const auto& r : s.runs) out.insert(out.end(), r.duration, r.label);
  return out;
}

inline std::vector<Run> run_lengths(std::span<const Label> labels) {
  std::vector<Run> runs;
  for (Label l : labels) {
    if (!runs.empty() && runs.back().label == l)
      ++runs.back().duration;
    else
      runs.push_back({l, 1});
  }
  return runs;
}

// ---------------------------------------------------------------------------
// Parameter learning from ground-truth label sequences

/// Fraction of sequences whose first label is P (NP gets the complement).
inline StateTable learn_initial(std::span<const LabelSequence> sequences) {
  std::size_t n = 0, starts_p = 0;
  for (const auto& s : sequences) {
    if (s.empty()) continue;
    ++n;
    starts_p += s.front() == Label::P;
  }
  if (n == 0) throw Error(ErrorKind::EmptyInput, "no non-empty training sequences");
  const double p = static_cast<double>(starts_p) / static_cast<double>(n);
  StateTable pi{};
  pi[index(Label::P)] = p;
  pi[index(Label::NP)] = 1.0 - p;
  return pi;
}

/// Raw run-length histogram per state, counting the trailing run of each sequence.
using DurationCounts = std::array<std::map<std::size_t, std::size_t>, kNumLabels>;

inline DurationCounts count_durations(std::span<const LabelSequence> sequences) {
  DurationCounts counts;
  for (const auto& s : sequences)
    for (const auto& r : run_lengths(s)) ++counts[index(r.label)][r.duration];
  return counts;
}

/// Run-length frequencies with add-one smoothing over every duration 1..D_j,
/// D_j the longest run observed for state j, normalized per state. A state
/// never observed gets an empty table.
inline DurationTables learn_durations(std::span<const LabelSequence> sequences) {
  bool any = false;
  for (const auto& s : sequences) any = any || !s.empty();
  if (!any) throw Error(ErrorKind::EmptyInput, "no non-empty training sequences");
  const auto counts = count_durations(sequences);
  DurationTables tables;
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    if (counts[j].empty()) continue;
    const std::size_t d_max = counts[j].rbegin()->first;
    std::vector<double> table(d_max, 1.0);
    for (const auto& [d, c] : counts[j]) table[d - 1] += static_cast<double>(c);
    double total = 0.0;
    for (double v : table) total += v;
    for (double& v : table) v /= total;
    tables[j] = std::move(table);
  }
  return tables;
}

inline HsmmParams learn_params(std::span<const LabelSequence> sequences, double sigma = kDefaultSigma) {
  HsmmParams p;
  p.pi = learn_initial(sequences);
  p.durations = learn_durations(sequences);
  p.sigma = sigma;
  return p;
}

// ---------------------------------------------------------------------------
// Emissions

/// Laplace density (1 / 2σ) exp(-|x - μ_j| / σ).
inline double emission(double x, Label j, double sigma, const StateTable& mu = {0.0, 1.0}) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::NonPositiveSigma, "Laplace scale must be positive");
  return std::exp(-std::abs(x - mu[index(j)]) / sigma) / (2.0 * sigma);
}

inline double log_emission(double x, Label j, double sigma, const StateTable& mu = {0.0, 1.0}) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::NonPositiveSigma, "Laplace scale must be positive");
  return -std::log(2.0 * sigma) - std::abs(x - mu[index(j)]) / sigma;
}

/// Per-observation log emission under each state, T entries.
using LogEmissions = std::vector<StateTable>;

inline LogEmissions laplace_log_emissions(std::span<const double> obs, const HsmmParams& params) {
  LogEmissions out(obs.size());
  for (std::size_t t = 0; t < obs.size(); ++t)
    for (std::size_t j = 0; j < kNumLabels; ++j)
      out[t][j] = log_emission(obs[t], static_cast<Label>(j), params.sigma, params.mu);
  return out;
}

/// Discrete emission matrix in percent: E[o][j] = 100 * P(observed label o | state j).
using EmissionMatrix = std::array<std::array<double, kNumLabels>, kNumLabels>;

/// Confusion counts indexed [truth][predicted].
using ConfusionMatrix = std::array<std::array<double, kNumLabels>, kNumLabels>;

/// E_ij = 100 C_ji / sum_i C_ji: each state's row of the confusion matrix,
/// normalized to percentages, becomes that state's emission column.
inline EmissionMatrix conventional_emission(const ConfusionMatrix& c) {
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    double row = 0.0, col = 0.0;
    for (std::size_t m = 0; m < kNumLabels; ++m) {
      if (c[k][m] < 0.0) throw Error(ErrorKind::DegenerateConfusion, "negative confusion count");
      row += c[k][m];
      col += c[m][k];
    }
    if (!(row > 0.0))
      throw Error(ErrorKind::DegenerateConfusion, "no training examples of class " + std::string(to_string(static_cast<Label>(k))));
    if (!(col > 0.0))
      throw Error(ErrorKind::DegenerateConfusion, "class " + std::string(to_string(static_cast<Label>(k))) + " is never predicted");
  }
  EmissionMatrix e{};
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    const double total = c[j][0] + c[j][1];
    for (std::size_t i = 0; i < kNumLabels; ++i) e[i][j] = c[j][i] * 100.0 / total;
  }
  return e;
}

/// Observations are thresholded at 0.5 and scored by E / 100.
inline LogEmissions discrete_log_emissions(std::span<const double> obs, const EmissionMatrix& e) {
  LogEmissions out(obs.size());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    const std::size_t o = obs[t] >= 0.5 ? index(Label::P) : index(Label::NP);
    for (std::size_t j = 0; j < kNumLabels; ++j) out[t][j] = std::log(e[o][j] / 100.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoding

namespace detail {

/// Range sums of log emissions that stay exact when some entries are -inf.
class RunScorer {
 public:
  explicit RunScorer(const LogEmissions& le) : finite_(le.size() + 1), impossible_(le.size() + 1) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      finite_[0][j] = 0.0;
      impossible_[0][j] = 0;
    }
    for (std::size_t t = 0; t < le.size(); ++t)
      for (std::size_t j = 0; j < kNumLabels; ++j) {
        const bool ok = std::isfinite(le[t][j]);
        finite_[t + 1][j] = finite_[t][j] + (ok ? le[t][j] : 0.0);
        impossible_[t + 1][j] = impossible_[t][j] + (ok ? 0 : 1);
      }
  }

  /// Sum over observations [begin, end) (0-based) under state j.
  double sum(std::size_t j, std::size_t begin, std::size_t end) const {
    if (impossible_[end][j] != impossible_[begin][j]) return kNegInf;
    return finite_[end][j] - finite_[begin][j];
  }

 private:
  std::vector<StateTable> finite_;
  std::vector<std::array<std::size_t, kNumLabels>> impossible_;
};

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace detail

/// Maximum-likelihood run-length decode for precomputed log emissions.
///
/// delta_j(t) = max_d max_{i != j} delta_i(t - d) p_j(d) prod_{tau in run} b_j(o_tau),
/// with the first run starting from pi_j instead of a predecessor. Runs are
/// capped at each state's table length. Ties go to the shorter duration, and
/// at the final step to NP before P.
inline StateSequence decode(const LogEmissions& le, const HsmmParams& params) {
  const std::size_t T = le.size();
  if (T == 0) throw Error(ErrorKind::EmptyObservation, "nothing to decode");
  for (std::size_t j = 0; j < kNumLabels; ++j)
    if (params.durations[j].empty())
      throw Error(ErrorKind::DurationTableMissing,
                  "no duration table for state " + std::string(to_string(static_cast<Label>(j))));

  std::array<std::vector<double>, kNumLabels> log_dur;
  StateTable log_pi{};
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    log_pi[j] = detail::safe_log(params.pi[j]);
    for (double p : params.durations[j]) log_dur[j].push_back(detail::safe_log(p));
  }
  const detail::RunScorer scorer(le);

  // delta[t][j]: best log score of a decode of the first t observations ending
  // with a state-j run; back[t][j]: that run's duration.
  std::vector<StateTable> delta(T + 1, StateTable{kNegInf, kNegInf});
  std::vector<std::array<std::size_t, kNumLabels>> back(T + 1, {0, 0});
  for (std::size_t t = 1; t <= T; ++t) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      const std::size_t prev = 1 - j;
      const std::size_t d_cap = std::min(t, log_dur[j].size());
      double best = kNegInf;
      std::size_t best_d = 0;
      for (std::size_t d = 1; d <= d_cap; ++d) {
        const double head = d == t ? log_pi[j] : delta[t - d][prev];
        if (head == kNegInf) continue;
        const double score = head + log_dur[j][d - 1] + scorer.sum(j, t - d, t);
        if (score > best) {
          best = score;
          best_d = d;
        }
      }
      delta[t][j] = best;
      back[t][j] = best_d;
    }
  }

  std::size_t j = 0;
  for (std::size_t k = 1; k < kNumLabels; ++k)
    if (delta[T][k] > delta[T][j]) j = k;
  if (delta[T][j] == kNegInf) throw Error(ErrorKind::InfeasibleDecoding, "no state sequence has positive probability");

  StateSequence out;
  out.log_likelihood = delta[T][j];
  for (std::size_t t = T; t > 0;) {
    const std::size_t d = back[t][j];
    out.runs.push_back({static_cast<Label>(j), d});
    t -= d;
    j = 1 - j;
  }
  std::reverse(out.runs.begin(), out.runs.end());
  return out;
}

/// Refines a classifier's probability sequence with Laplace emissions.
inline StateSequence viterbi_refine(std::span<const double> obs, const HsmmParams& params) {
  if (obs.empty()) throw Error(ErrorKind::EmptyObservation, "nothing to decode");
  return decode(laplace_log_emissions(obs, params), params);
}

inline StateSequence viterbi_refine(const ProbSequence& obs, const HsmmParams& params) {
  return viterbi_refine(std::span<const double>(obs.probs), params);
}

/// Decoding variant with discrete emissions learned from a training confusion matrix.
inline StateSequence viterbi_refine_discrete(std::span<const double> obs, const HsmmParams& params,
                                             const EmissionMatrix& e) {
  if (obs.empty()) throw Error(ErrorKind::EmptyObservation, "nothing to decode");
  return decode(discrete_log_emissions(obs, e), params);
}

/// Log joint score of a given run-length sequence (same terms the decoder maximizes).
inline double score_runs(std::span<const Run> runs, const LogEmissions& le, const HsmmParams& params) {
  if (runs.empty()) return kNegInf;
  double s = detail::safe_log(params.pi[index(runs.front().label)]);
  std::size_t t = 0;
  for (std::size_t n = 0; n < runs.size(); ++n) {
    const auto& r = runs[n];
    if (n > 0 && runs[n - 1].label == r.label) return kNegInf;
    const auto& table = params.durations[index(r.label)];
    if (r.duration == 0 || r.duration > table.size() || t + r.duration > le.size()) return kNegInf;
    s += detail::safe_log(table[r.duration - 1]);
    for (std::size_t k = t; k < t + r.duration; ++k) s += le[k][index(r.label)];
    t += r.duration;
  }
  return t == le.size() ? s : kNegInf;
}

// ---------------------------------------------------------------------------
// Parameter file
//
//   [pi]          one `<state> <prob>` line per state
//   [sigma]       a single value
//   [durations]   `<state> <d> <p>` triples, d = 1..D_state
//   [emission]    optional discrete matrix, `<observed> <state> <percent>`

inline std::string format_params(const HsmmParams& p, const EmissionMatrix* e = nullptr) {
  std::string out = "# HSMM parameters\n[pi]\n";
  for (std::size_t j = 0; j < kNumLabels; ++j)
    out += std::string(to_string(static_cast<Label>(j))) + " " + format_double(p.pi[j]) + "\n";
  out += "[sigma]\n" + format_double(p.sigma) + "\n[durations]\n";
  for (std::size_t j = 0; j < kNumLabels; ++j)
    for (std::size_t d = 1; d <= p.durations[j].size(); ++d)
      out += std::string(to_string(static_cast<Label>(j))) + " " + std::to_string(d) + " " +
             format_double(p.durations[j][d - 1]) + "\n";
  if (e) {
    out += "[emission]\n";
    for (std::size_t o = 0; o < kNumLabels; ++o)
      for (std::size_t j = 0; j < kNumLabels; ++j)
        out += std::string(to_string(static_cast<Label>(o))) + " " + std::string(to_string(static_cast<Label>(j))) +
               " " + format_double((*e)[o][j]) + "\n";
  }
  return out;
}

struct ParsedParams {
  HsmmParams params;
  bool has_emission = false;
  EmissionMatrix emission{};
};

inline ParsedParams parse_params(std::string_view text) {
  ParsedParams out;
  out.params.durations = {};
  std::string section;
  std::array<bool, kNumLabels> pi_seen{};
  bool sigma_seen = false;
  for_each_record_line(text, [&](std::string_view raw, std::size_t lineno) {
    const auto line = trim(raw);
    const auto where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      section = std::string(line);
      if (section != "[pi]" && section != "[sigma]" && section != "[durations]" && section != "[emission]")
        throw Error(ErrorKind::ParseError, where + "unknown section " + section);
      if (section == "[emission]") out.has_emission = true;
      return;
    }
    std::vector<std::string_view> f;
    for (auto tok : split(line, ' '))
      if (!trim(tok).empty()) f.push_back(trim(tok));
    if (section == "[pi]" && f.size() == 2) {
      const Label l = parse_label(f[0]);
      out.params.pi[index(l)] = parse_double(f[1], lineno);
      pi_seen[index(l)] = true;
    } else if (section == "[sigma]" && f.size() == 1) {
      out.params.sigma = parse_double(f[0], lineno);
      sigma_seen = true;
    } else if (section == "[durations]" && f.size() == 3) {
      auto& table = out.params.durations[index(parse_label(f[0]))];
      const auto d = parse_int(f[1], lineno);
      if (d != static_cast<long long>(table.size()) + 1)
        throw Error(ErrorKind::ParseError, where + "durations must be listed as 1, 2, 3, ... per state");
      table.push_back(parse_double(f[2], lineno));
    } else if (section == "[emission]" && f.size() == 3) {
      out.emission[index(parse_label(f[0]))][index(parse_label(f[1]))] = parse_double(f[2], lineno);
    } else {
      throw Error(ErrorKind::ParseError, where + "unexpected entry '" + std::string(line) + "'");
    }
  });
  if (!pi_seen[0] || !pi_seen[1] || !sigma_seen)
    throw Error(ErrorKind::ParseError, "parameter file needs [pi] for both states and [sigma]");
  if (!(out.params.sigma > 0.0)) throw Error(ErrorKind::NonPositiveSigma, "Laplace scale must be positive");
  return out;
}

}  // namespace bowelsound::hsmm
