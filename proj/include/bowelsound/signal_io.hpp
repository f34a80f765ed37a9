#pragma once

// Recording ingestion: WAV decoding, interval annotations, dataset manifests,
// and slicing recordings into overlapping labeled segments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bowelsound/error.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/text.hpp"

namespace bowelsound {

inline constexpr double kDefaultSampleRate = 4000.0;
inline constexpr double kDefaultWindowSeconds = 6.0;
inline constexpr double kDefaultHopSeconds = 0.1;

enum class EventType { BowelSound, HeartSound, Noise, Other };

constexpr std::string_view to_string(EventType t) {
  switch (t) {
    case EventType::BowelSound: return "bowel";
    case EventType::HeartSound: return "heart";
    case EventType::Noise: return "noise";
    case EventType::Other: return "other";
  }
  return "other";
}

struct LabeledInterval {
  double onset = 0.0;   // seconds
  double offset = 0.0;  // seconds
  EventType label = EventType::Other;

  friend bool operator==(const LabeledInterval&, const LabeledInterval&) = default;
};

struct Recording {
  std::string subject_id;
  std::vector<double> samples;  // normalized to [-1, 1]
  double sample_rate = kDefaultSampleRate;
  std::vector<LabeledInterval> annotations;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws if the recording violates its invariants (positive rate, non-empty
/// samples, every annotation inside [0, duration]).
inline void validate(const Recording& rec) {
  if (!(rec.sample_rate > 0.0))
    throw Error(ErrorKind::InvalidArgument, "sample rate must be positive");
  if (rec.samples.empty())
    throw Error(ErrorKind::EmptyInput, "recording '" + rec.subject_id + "' has no samples");
  const double dur = rec.duration_seconds();
  for (const auto& a : rec.annotations) {
    if (!(a.onset < a.offset))
      throw Error(ErrorKind::InvertedInterval, "annotation onset must precede offset");
    // one sample of slack for annotation tools that round to the millisecond
    const double slack = 1.0 / rec.sample_rate;
    if (a.onset < -slack || a.offset > dur + slack)
      throw Error(ErrorKind::InvalidArgument,
                  "annotation [" + format_double(a.onset) + ", " + format_double(a.offset) +
                      "] lies outside recording '" + rec.subject_id + "' of duration " +
                      format_double(dur) + " s");
  }
}

// ---------------------------------------------------------------------------
// WAV

namespace detail {

inline std::uint32_t read_le(const unsigned char* p, int bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

inline void put_le(std::string& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace detail

enum class WavEncoding { Pcm16, Float32 };

/// Decodes a mono RIFF/WAVE buffer (PCM 8/16/24-bit or IEEE float 32-bit).
inline Recording decode_wav(std::string_view bytes, std::string subject_id = {}) {
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0)
    throw Error(ErrorKind::CorruptHeader, "missing RIFF/WAVE signature");

  bool have_fmt = false;
  std::uint32_t format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t chunk_size = detail::read_le(chunk + 4, 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + chunk_size > size)
        throw Error(ErrorKind::CorruptHeader, "truncated fmt chunk");
      format = detail::read_le(data + body, 2);
      channels = detail::read_le(data + body + 2, 2);
      rate = detail::read_le(data + body + 4, 4);
      bits = detail::read_le(data + body + 14, 2);
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: sub-format GUID starts with the codec
        if (chunk_size < 40) throw Error(ErrorKind::CorruptHeader, "truncated extensible fmt chunk");
        format = detail::read_le(data + body + 24, 2);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorKind::CorruptHeader, "data chunk precedes fmt chunk");
      pcm = data + body;
      // tolerate writers that leave the streaming placeholder size in place
      pcm_bytes = std::min<std::size_t>(chunk_size, size - body);
      break;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  if (!have_fmt) throw Error(ErrorKind::CorruptHeader, "missing fmt chunk");
  if (pcm == nullptr) throw Error(ErrorKind::CorruptHeader, "missing data chunk");
  if (rate == 0) throw Error(ErrorKind::CorruptHeader, "zero sample rate");
  if (channels != 1)
    throw Error(ErrorKind::UnsupportedFormat,
                "expected mono audio, got " + std::to_string(channels) + " channels");

  const bool is_pcm = format == 1 && (bits == 8 || bits == 16 || bits == 24);
  const bool is_float = format == 3 && bits == 32;
  if (!is_pcm && !is_float)
    throw Error(ErrorKind::UnsupportedFormat, "unsupported codec " + std::to_string(format) +
                                                  " with " + std::to_string(bits) + " bits");

  const std::size_t width = bits / 8;
  const std::size_t n = pcm_bytes / width;
  Recording rec;
  rec.subject_id = std::move(subject_id);
  rec.sample_rate = static_cast<double>(rate);
  rec.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = pcm + i * width;
    double v = 0.0;
    if (is_float) {
      float f;
      const std::uint32_t raw = detail::read_le(p, 4);
      std::memcpy(&f, &raw, 4);
      v = std::isfinite(f) ? std::clamp(static_cast<double>(f), -1.0, 1.0) : 0.0;
    } else if (bits == 8) {
      v = (static_cast<double>(p[0]) - 128.0) / 128.0;
    } else if (bits == 16) {
      v = static_cast<std::int16_t>(detail::read_le(p, 2)) / 32768.0;
    } else {
      std::int32_t s = static_cast<std::int32_t>(detail::read_le(p, 3) << 8) >> 8;
      v = s / 8388608.0;
    }
    rec.samples[i] = v;
  }
  return rec;
}

inline Recording load_wav(const std::filesystem::path& path, std::string subject_id = {}) {
  if (subject_id.empty()) subject_id = path.stem().string();
  return decode_wav(read_text_file(path), std::move(subject_id));
}

inline std::string encode_wav(std::span<const double> samples, std::uint32_t sample_rate,
                              WavEncoding enc = WavEncoding::Pcm16) {
  const std::uint32_t width = enc == WavEncoding::Pcm16 ? 2 : 4;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size()) * width;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_le(out, 36 + data_bytes, 4);
  out += "WAVEfmt ";
  detail::put_le(out, 16, 4);
  detail::put_le(out, enc == WavEncoding::Pcm16 ? 1 : 3, 2);
  detail::put_le(out, 1, 2);
  detail::put_le(out, sample_rate, 4);
  detail::put_le(out, sample_rate * width, 4);
  detail::put_le(out, width, 2);
  detail::put_le(out, width * 8, 2);
  out += "data";
  detail::put_le(out, data_bytes, 4);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    if (enc == WavEncoding::Pcm16) {
      const auto q = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
      detail::put_le(out, static_cast<std::uint16_t>(q), 2);
    } else {
      const float f = static_cast<float>(c);
      std::uint32_t raw;
      std::memcpy(&raw, &f, 4);
      detail::put_le(out, raw, 4);
    }
  }
  return out;
}

inline void save_wav(const std::filesystem::path& path, const Recording& rec,
                     WavEncoding enc = WavEncoding::Pcm16) {
  write_text_file(path, encode_wav(rec.samples, static_cast<std::uint32_t>(std::lround(rec.sample_rate)), enc));
}

// ---------------------------------------------------------------------------
// Annotation TSV: onset<TAB>offset<TAB>label, '#' comments.

inline EventType parse_event_type(std::string_view s, std::size_t line) {
  if (s == "bowel") return EventType::BowelSound;
  if (s == "heart") return EventType::HeartSound;
  if (s == "noise") return EventType::Noise;
  if (s == "other") return EventType::Other;
  throw Error(ErrorKind::ParseError,
              "line " + std::to_string(line) + ": unknown label '" + std::string(s) + "'");
}

inline std::vector<LabeledInterval> parse_annotations(std::string_view text) {
  std::vector<LabeledInterval> out;
  for_each_record_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto fields = split(line, '\t');
    if (fields.size() != 3)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) +
                                             ": expected 3 tab-separated fields, got " +
                                             std::to_string(fields.size()));
    LabeledInterval iv{parse_double(fields[0], lineno), parse_double(fields[1], lineno),
                       parse_event_type(trim(fields[2]), lineno)};
    if (!(iv.onset < iv.offset))
      throw Error(ErrorKind::InvertedInterval,
                  "line " + std::to_string(lineno) + ": onset must be before offset");
    out.push_back(iv);
  });
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.onset < b.onset; });
  return out;
}

inline std::vector<LabeledInterval> load_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_text_file(path));
}

inline std::string format_annotations(std::span<const LabeledInterval> intervals) {
  std::string out = "# onset\toffset\tlabel\n";
  for (const auto& iv : intervals)
    out += format_double(iv.onset) + "\t" + format_double(iv.offset) + "\t" +
           std::string(to_string(iv.label)) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Manifest: subject_id<TAB>wav_path<TAB>annotation_path. Relative paths resolve
// against the manifest's directory.

struct ManifestEntry {
  std::string subject_id;
  std::filesystem::path wav;
  std::filesystem::path annotations;
};

inline std::vector<ManifestEntry> parse_manifest(std::string_view text,
                                                 const std::filesystem::path& base_dir = {}) {
  std::vector<ManifestEntry> out;
  for_each_record_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto f = split(line, '\t');
    if (f.size() != 3)
      throw Error(ErrorKind::ParseError,
                  "manifest line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    auto resolve = [&](std::string_view p) {
      std::filesystem::path path{std::string(trim(p))};
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    out.push_back({std::string(trim(f[0])), resolve(f[1]), resolve(f[2])});
  });
  return out;
}

inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path());
}

inline std::string format_manifest(std::span<const ManifestEntry> entries) {
  std::string out = "# subject_id\twav_path\tannotation_path\n";
  for (const auto& e : entries)
    out += e.subject_id + "\t" + e.wav.generic_string() + "\t" + e.annotations.generic_string() + "\n";
  return out;
}

/// Loads the WAV and annotation file of a manifest entry and validates the pair.
inline Recording load_recording(const ManifestEntry& entry) {
  Recording rec = load_wav(entry.wav, entry.subject_id);
  rec.annotations = load_annotations(entry.annotations);
  validate(rec);
  return rec;
}

// ---------------------------------------------------------------------------
// Segmentation

/// Non-owning view of one window of a recording; valid while the recording lives.
struct Segment {
  std::string subject_id;
  double start = 0.0;   // seconds
  double length = 0.0;  // seconds
  double sample_rate = kDefaultSampleRate;
  std::span<const double> samples;
  Label truth = Label::NP;

  double end() const { return start + length; }
};

/// P iff the window overlaps some BowelSound interval by a strictly positive
/// amount. Other event types never make a segment positive.
inline Label label_segment(double start, double end, std::span<const LabeledInterval> annotations) {
  for (const auto& a : annotations) {
    if (a.label != EventType::BowelSound) continue;
    if (std::min(end, a.offset) - std::max(start, a.onset) > 0.0) return Label::P;
  }
  return Label::NP;
}

struct SegmentGrid {
  std::size_t window_samples = 0;
  std::size_t hop_samples = 0;
  std::size_t count = 0;
};

/// Window and hop are snapped to whole samples; the count follows
/// floor((N - W) / H) + 1 in sample units.
inline SegmentGrid segment_grid(std::size_t num_samples, double sample_rate, double window,
                                double hop) {
  if (!(hop > 0.0)) throw Error(ErrorKind::InvalidArgument, "hop must be positive");
  if (!(window > 0.0)) throw Error(ErrorKind::InvalidArgument, "window must be positive");
  SegmentGrid g;
  g.window_samples = static_cast<std::size_t>(std::llround(window * sample_rate));
  g.hop_samples = static_cast<std::size_t>(std::llround(hop * sample_rate));
  if (g.hop_samples == 0) throw Error(ErrorKind::InvalidArgument, "hop is shorter than one sample");
  if (g.window_samples == 0 || g.window_samples > num_samples)
    throw Error(ErrorKind::WindowTooLong,
                "window of " + format_double(window) + " s exceeds recording duration " +
                    format_double(static_cast<double>(num_samples) / sample_rate) + " s");
  g.count = (num_samples - g.window_samples) / g.hop_samples + 1;
  return g;
}

inline std::vector<Segment> segment_recording(const Recording& rec,
                                              double window = kDefaultWindowSeconds,
                                              double hop = kDefaultHopSeconds) {
  const SegmentGrid g = segment_grid(rec.samples.size(), rec.sample_rate, window, hop);
  const std::span<const double> all(rec.samples);
  std::vector<Segment> out;
  out.reserve(g.count);
  for (std::size_t k = 0; k < g.count; ++k) {
    Segment s;
    s.subject_id = rec.subject_id;
    s.sample_rate = rec.sample_rate;
    s.start = static_cast<double>(k * g.hop_samples) / rec.sample_rate;
    s.length = static_cast<double>(g.window_samples) / rec.sample_rate;
    s.samples = all.subspan(k * g.hop_samples, g.window_samples);
    s.truth = label_segment(s.start, s.end(), rec.annotations);
    out.push_back(std::move(s));
  }
  return out;
}

inline LabelSequence truth_labels(std::span<const Segment> segments) {
  LabelSequence out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(s.truth);
  return out;
}

/// Segment index file: subject_id, start, length, truth label per line.
inline std::string format_segment_index(std::span<const Segment> segments) {
  std::string out = "# subject_id\tstart\tlength\tlabel\n";
  for (const auto& s : segments)
    out += s.subject_id + "\t" + format_double(s.start) + "\t" + format_double(s.length) + "\t" +
           std::string(to_string(s.truth)) + "\n";
  return out;
}

}  // namespace bowelsound
