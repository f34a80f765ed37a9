#pragma once

// Model file layout (all integers and doubles little-endian):
//
//   "BSCN"  u32 version  u64 seed  u32 input_length
//   u32 layer_count, then per layer: u32 kind  u32 units  u32 kernel  u32 pool  f64 rate
//   u64 n  f64[n] input_mean      u64 n  f64[n] input_scale
//   per weighted layer, in order: u64 rows  u64 cols  f64[rows*cols] W (row-major)
//                                 u64 n  f64[n] bias

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "bowelsound/cnn/model.hpp"
#include "bowelsound/error.hpp"
#include "bowelsound/text.hpp"

namespace bowelsound::cnn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { out_ += s; }
  template <typename V>
  void f64s(const V& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v.data()[i]);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t count(std::uint64_t limit) {
    const auto n = u64();
    if (n > limit) throw Error(ErrorKind::CorruptHeader, "implausible array length in model file");
    return n;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(ErrorKind::CorruptHeader, "model file is truncated");
  }
  std::uint64_t get(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_model(const CnnModel& m) {
  detail::Writer w;
  w.raw("BSCN");
  w.u32(kModelFormatVersion);
  w.u64(m.seed);
  w.u32(static_cast<std::uint32_t>(m.arch.input_length));
  w.u32(static_cast<std::uint32_t>(m.arch.layers.size()));
  for (const auto& l : m.arch.layers) {
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.units));
    w.u32(static_cast<std::uint32_t>(l.kernel));
    w.u32(static_cast<std::uint32_t>(l.pool));
    w.f64(l.rate);
  }
  w.u64(static_cast<std::uint64_t>(m.input_mean.size()));
  w.f64s(m.input_mean);
  w.u64(static_cast<std::uint64_t>(m.input_scale.size()));
  w.f64s(m.input_scale);
  for (std::size_t i = 0; i < m.arch.layers.size(); ++i) {
    if (!m.arch.layers[i].has_params()) continue;
    const auto& p = m.params[i];
    w.u64(static_cast<std::uint64_t>(p.W.rows()));
    w.u64(static_cast<std::uint64_t>(p.W.cols()));
    w.f64s(p.W);
    w.u64(static_cast<std::uint64_t>(p.b.size()));
    w.f64s(p.b);
  }
  return w.take();
}

inline CnnModel deserialize_model(std::string_view bytes) {
  detail::Reader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != "BSCN") throw Error(ErrorKind::CorruptHeader, "not a BSCN model file");
  const auto version = r.u32();
  if (version != kModelFormatVersion)
    throw Error(ErrorKind::UnsupportedFormat, "model file version " + std::to_string(version) + " is not supported");
  CnnModel m;
  m.seed = r.u64();
  m.arch.input_length = r.u32();
  const auto n_layers = r.u32();
  if (n_layers > 1024) throw Error(ErrorKind::CorruptHeader, "implausible layer count");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const auto kind = r.u32();
    if (kind < 1 || kind > 7) throw Error(ErrorKind::CorruptHeader, "unknown layer kind " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    l.units = r.u32();
    l.kernel = r.u32();
    l.pool = r.u32();
    l.rate = r.f64();
    m.arch.layers.push_back(l);
  }
  const auto shapes = shape_chain(m.arch);

  const std::uint64_t limit = bytes.size() / 8;
  auto read_vec = [&](RowVec& v, std::size_t expected) {
    const auto n = r.count(limit);
    if (n != expected) throw Error(ErrorKind::CorruptHeader, "array length does not match architecture");
    v.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
  };
  read_vec(m.input_mean, m.arch.input_length);
  read_vec(m.input_scale, m.arch.input_length);

  m.params.resize(m.arch.layers.size());
  std::size_t in_channels = 1;
  for (std::size_t i = 0; i < m.arch.layers.size(); ++i) {
    const auto& l = m.arch.layers[i];
    if (l.has_params()) {
      const std::size_t rows = l.kind == LayerKind::Conv1D ? l.kernel * in_channels : in_channels;
      const auto nr = r.count(limit), nc = r.count(limit);
      if (nr != rows || nc != l.units) throw Error(ErrorKind::CorruptHeader, "weight shape does not match architecture");
      auto& p = m.params[i];
      p.W.resize(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
      for (Eigen::Index k = 0; k < p.W.size(); ++k) p.W.data()[k] = r.f64();
      read_vec(p.b, l.units);
      if (!p.W.allFinite() || !p.b.allFinite()) throw Error(ErrorKind::CorruptHeader, "non-finite weight in model file");
    }
    in_channels = shapes[i].channels;
  }
  if (!r.at_end()) throw Error(ErrorKind::CorruptHeader, "trailing bytes after model data");
  return m;
}

inline void save_model(const std::filesystem::path& path, const CnnModel& m) {
  write_text_file(path, serialize_model(m));
}

inline CnnModel load_model(const std::filesystem::path& path) { return deserialize_model(read_text_file(path)); }

}  // namespace bowelsound::cnn
