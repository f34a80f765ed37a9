#pragma once

// Per-subject probability sequences: the interface between any segment
// classifier and the HSMM refiner.
//
// Probability file: one `subject_id<TAB>start<TAB>p` line per segment, p the
// probability of class P. Lines of one subject must be contiguous and in time
// order. '#' comments are ignored.

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bowelsound/error.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/text.hpp"

namespace bowelsound {

struct ProbSequence {
  std::string subject_id;
  std::vector<double> starts;  // seconds, strictly increasing
  std::vector<double> probs;   // P(class P), in [0, 1]

  std::size_t size() const { return probs.size(); }
  bool empty() const { return probs.empty(); }
};

inline void validate(const ProbSequence& s) {
  if (s.starts.size() != s.probs.size())
    throw Error(ErrorKind::LengthMismatch, "starts and probabilities differ in length");
  for (std::size_t i = 0; i < s.probs.size(); ++i) {
    if (!(s.probs[i] >= 0.0 && s.probs[i] <= 1.0))
      throw Error(ErrorKind::InvalidArgument, "probability outside [0, 1] at index " + std::to_string(i));
    if (i > 0 && !(s.starts[i] > s.starts[i - 1]))
      throw Error(ErrorKind::InvalidArgument, "segment starts must be strictly increasing (subject '" +
                                                  s.subject_id + "', index " + std::to_string(i) + ")");
  }
}

/// Labels obtained by thresholding each probability (p >= threshold is P).
inline LabelSequence threshold(std::span<const double> probs, double thr = 0.5) {
  LabelSequence out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(p >= thr ? Label::P : Label::NP);
  return out;
}

inline std::string format_prob_sequences(std::span<const ProbSequence> seqs) {
  std::string out = "# subject_id\tstart\tp\n";
  for (const auto& s : seqs)
    for (std::size_t i = 0; i < s.size(); ++i)
      out += s.subject_id + "\t" + format_double(s.starts[i]) + "\t" + format_double(s.probs[i]) + "\n";
  return out;
}

inline std::vector<ProbSequence> parse_prob_sequences(std::string_view text) {
  std::vector<ProbSequence> out;
  for_each_record_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto f = split(line, '\t');
    if (f.size() != 3)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected subject, start, p");
    const std::string id(trim(f[0]));
    if (out.empty() || out.back().subject_id != id) {
      for (const auto& s : out)
        if (s.subject_id == id)
          throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": subject '" + id +
                                                 "' is not contiguous");
      out.push_back({id, {}, {}});
    }
    const double p = parse_double(f[2], lineno);
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": probability outside [0, 1]");
    out.back().starts.push_back(parse_double(f[1], lineno));
    out.back().probs.push_back(p);
  });
  for (const auto& s : out) validate(s);
  return out;
}

/// Labeled segments: `subject_id<TAB>start<TAB>label` per line.
struct LabeledSequence {
  std::string subject_id;
  std::vector<double> starts;
  LabelSequence labels;
};

inline std::string format_labeled_sequences(std::span<const LabeledSequence> seqs) {
  std::string out = "# subject_id\tstart\tlabel\n";
  for (const auto& s : seqs)
    for (std::size_t i = 0; i < s.labels.size(); ++i)
      out += s.subject_id + "\t" + format_double(s.starts[i]) + "\t" + std::string(to_string(s.labels[i])) + "\n";
  return out;
}

inline std::vector<LabeledSequence> parse_labeled_sequences(std::string_view text) {
  std::vector<LabeledSequence> out;
  for_each_record_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto f = split(line, '\t');
    if (f.size() != 3)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected subject, start, label");
    const std::string id(trim(f[0]));
    if (out.empty() || out.back().subject_id != id) out.push_back({id, {}, {}});
    out.back().starts.push_back(parse_double(f[1], lineno));
    out.back().labels.push_back(parse_label(trim(f[2])));
  });
  return out;
}

}  // namespace bowelsound
