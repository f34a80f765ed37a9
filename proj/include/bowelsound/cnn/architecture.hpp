#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "bowelsound/error.hpp"

namespace bowelsound::cnn {

enum class LayerKind : int { Conv1D = 1, ReLU = 2, Dropout = 3, MaxPool = 4, Flatten = 5, Dense = 6, Softmax = 7 };

constexpr std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv1D: return "conv1d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t units = 0;   // conv filters or dense width
  std::size_t kernel = 0;  // conv kernel size
  std::size_t pool = 0;    // max-pool size
  double rate = 0.0;       // dropout rate

  static LayerSpec conv(std::size_t filters, std::size_t kernel) { return {LayerKind::Conv1D, filters, kernel, 0, 0.0}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, 0, rate}; }
  static LayerSpec maxpool(std::size_t size) { return {LayerKind::MaxPool, 0, 0, size, 0.0}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, units, 0, 0, 0.0}; }
  static LayerSpec softmax() { return {LayerKind::Softmax}; }

  bool has_params() const { return kind == LayerKind::Conv1D || kind == LayerKind::Dense; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Activation shape between layers: `length` positions x `channels`. After
/// Flatten, length is 1.
struct Shape {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t size() const { return length * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Architecture {
  std::size_t input_length = 24;
  std::vector<LayerSpec> layers;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Conv(256,8)-ReLU-Drop-Pool-Conv(128,8)-ReLU-Drop-Pool-Conv(64,8)-ReLU-
/// Conv(32,8)-ReLU-Flatten-Dense(64)-ReLU-Dense(2)-Softmax on 24 inputs.
inline Architecture reference_architecture(std::size_t input_length = 24) {
  using L = LayerSpec;
  return {input_length,
          {L::conv(256, 8), L::relu(), L::dropout(0.1), L::maxpool(2),
           L::conv(128, 8), L::relu(), L::dropout(0.1), L::maxpool(2),
           L::conv(64, 8), L::relu(),
           L::conv(32, 8), L::relu(),
           L::flatten(), L::dense(64), L::relu(), L::dense(2), L::softmax()}};
}

/// Shape after each layer (entry i is the output of layer i). Throws on an
/// inconsistent chain.
inline std::vector<Shape> shape_chain(const Architecture& arch) {
  if (arch.input_length == 0) throw Error(ErrorKind::InvalidArgument, "input length must be positive");
  std::vector<Shape> out;
  Shape s{arch.input_length, 1};
  bool flat = false;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const auto where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::Conv1D:
        if (flat) throw Error(ErrorKind::InvalidArgument, where + " follows flatten");
        if (l.units == 0 || l.kernel == 0) throw Error(ErrorKind::InvalidArgument, where + " needs filters and kernel");
        s.channels = l.units;
        break;
      case LayerKind::MaxPool:
        if (flat) throw Error(ErrorKind::InvalidArgument, where + " follows flatten");
        if (l.pool == 0 || s.length / l.pool == 0) throw Error(ErrorKind::InvalidArgument, where + " pools away the signal");
        s.length /= l.pool;
        break;
      case LayerKind::Dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) throw Error(ErrorKind::InvalidArgument, where + " rate must be in [0,1)");
        break;
      case LayerKind::Flatten:
        s = {1, s.size()};
        flat = true;
        break;
      case LayerKind::Dense:
        if (!flat) throw Error(ErrorKind::InvalidArgument, where + " requires a flattened input");
        if (l.units == 0) throw Error(ErrorKind::InvalidArgument, where + " needs units");
        s.channels = l.units;
        break;
      case LayerKind::ReLU:
      case LayerKind::Softmax:
        break;
    }
    out.push_back(s);
  }
  if (arch.layers.empty() || arch.layers.back().kind != LayerKind::Softmax || !flat)
    throw Error(ErrorKind::InvalidArgument, "architecture must end in a flattened softmax");
  return out;
}

inline std::size_t num_classes(const Architecture& arch) { return shape_chain(arch).back().channels; }

/// Checks the constraints the classifier is specified under: four kernel-8
/// convolutions (the first with 256 filters), dropout 0.1, pool 2, and a
/// two-way softmax head.
inline bool is_reference_compatible(const Architecture& arch) {
  std::size_t convs = 0;
  bool first_conv_ok = false;
  for (const auto& l : arch.layers) {
    if (l.kind == LayerKind::Conv1D) {
      if (convs == 0) first_conv_ok = l.units == 256;
      ++convs;
      if (l.kernel != 8) return false;
    }
    if (l.kind == LayerKind::Dropout && l.rate != 0.1) return false;
    if (l.kind == LayerKind::MaxPool && l.pool != 2) return false;
  }
  try {
    return convs == 4 && first_conv_ok && num_classes(arch) == 2;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace bowelsound::cnn
