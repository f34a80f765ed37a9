#pragma once

#include <cstddef>
#include <ostream>
#include <string_view>
#include <vector>

#include "bowelsound/error.hpp"

namespace bowelsound {

/// Binary segment class. Values double as indices into 2-element tables
/// (NP = 0, P = 1), which is also the tie-break order used by the decoder.
enum class Label : int { NP = 0, P = 1 };

inline constexpr std::size_t kNumLabels = 2;

constexpr std::size_t index(Label l) { return static_cast<std::size_t>(l); }
constexpr Label other(Label l) { return l == Label::P ? Label::NP : Label::P; }

constexpr std::string_view to_string(Label l) { return l == Label::P ? "P" : "NP"; }

inline std::ostream& operator<<(std::ostream& os, Label l) { return os << to_string(l); }

inline Label parse_label(std::string_view s) {
  if (s == "P") return Label::P;
  if (s == "NP") return Label::NP;
  throw Error(ErrorKind::ParseError, "unknown segment label '" + std::string(s) + "'");
}

using LabelSequence = std::vector<Label>;

}  // namespace bowelsound
