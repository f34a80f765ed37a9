#pragma once

// MFCC features: mel filterbank, per-frame cepstra, and the mean summary
// vector that the classifier consumes.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bowelsound/error.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/signal_io.hpp"
#include "bowelsound/text.hpp"

namespace bowelsound {

struct MfccConfig {
  double sfreq = 4000.0;    // Hz
  double winlen = 0.025;    // s
  double winstep = 0.01;    // s
  std::size_t numcep = 24;
  std::size_t nfilt = 26;
  std::size_t nfft = 512;
  double preemph = 0.97;
  double log_floor = 1e-10;

  std::size_t frame_samples() const { return static_cast<std::size_t>(std::llround(winlen * sfreq)); }
  std::size_t step_samples() const { return static_cast<std::size_t>(std::llround(winstep * sfreq)); }
  std::size_t num_bins() const { return nfft / 2 + 1; }
};

inline void validate(const MfccConfig& c) {
  if (!(c.sfreq > 0.0) || !(c.winlen > 0.0) || !(c.winstep > 0.0) || c.numcep == 0 ||
      c.nfilt == 0 || c.nfft == 0 || !(c.log_floor > 0.0))
    throw Error(ErrorKind::InvalidArgument, "MFCC parameters must be positive");
  if (c.numcep > c.nfilt) throw Error(ErrorKind::InvalidArgument, "numcep must not exceed nfilt");
  if (c.frame_samples() == 0 || c.step_samples() == 0)
    throw Error(ErrorKind::InvalidArgument, "analysis window shorter than one sample");
  if (c.nfft < c.frame_samples())
    throw Error(ErrorKind::InvalidArgument, "nfft must cover the analysis window");
  if (!(c.preemph >= 0.0 && c.preemph < 1.0))
    throw Error(ErrorKind::InvalidArgument, "pre-emphasis coefficient must be in [0, 1)");
}

inline double hz_to_mel(double hz) {
  if (hz < 0.0) throw Error(ErrorKind::NegativeFrequency, "frequency must be non-negative");
  return 1125.0 * std::log1p(hz / 700.0);
}

inline double mel_to_hz(double mel) { return 700.0 * std::expm1(mel / 1125.0); }

/// Row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// FFT bin index of each of the nfilt + 2 equally mel-spaced band edges.
inline std::vector<std::size_t> filterbank_edge_bins(const MfccConfig& cfg) {
  const double lo = hz_to_mel(0.0);
  const double hi = hz_to_mel(cfg.sfreq / 2.0);
  std::vector<std::size_t> bins(cfg.nfilt + 2);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double mel = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.nfilt + 1);
    bins[i] = static_cast<std::size_t>(
        std::floor(static_cast<double>(cfg.nfft + 1) * mel_to_hz(mel) / cfg.sfreq));
  }
  return bins;
}

/// Continuous band edges in Hz (before snapping to FFT bins).
inline std::vector<double> filterbank_edge_hz(const MfccConfig& cfg) {
  const double lo = hz_to_mel(0.0);
  const double hi = hz_to_mel(cfg.sfreq / 2.0);
  std::vector<double> hz(cfg.nfilt + 2);
  for (std::size_t i = 0; i < hz.size(); ++i)
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.nfilt + 1));
  return hz;
}

/// nfilt x (nfft/2 + 1) triangular filters; filter j rises from edge j to a
/// peak of exactly 1 at edge j+1 and falls to zero at edge j+2.
inline Matrix mel_filterbank(const MfccConfig& cfg) {
  validate(cfg);
  const auto edge = filterbank_edge_bins(cfg);
  Matrix fb(cfg.nfilt, cfg.num_bins());
  for (std::size_t j = 0; j < cfg.nfilt; ++j) {
    const std::size_t a = edge[j], b = edge[j + 1], c = edge[j + 2];
    for (std::size_t i = a; i < b && i < fb.cols; ++i)
      fb(j, i) = static_cast<double>(i - a) / static_cast<double>(b - a);
    for (std::size_t i = b; i < c && i < fb.cols; ++i)
      fb(j, i) = static_cast<double>(c - i) / static_cast<double>(c - b);
  }
  return fb;
}

/// Orthonormal DCT-II basis, n x n; row k is the k-th cosine.
inline Matrix dct_matrix(std::size_t n) {
  Matrix m(n, n);
  const double dn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
    for (std::size_t i = 0; i < n; ++i)
      m(k, i) = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                 (2.0 * static_cast<double>(i) + 1.0) / (2.0 * dn));
  }
  return m;
}

using MfccVector = std::vector<double>;

/// Precomputed filterbank, DCT basis, and FFT plan for one configuration.
/// Const member functions are safe to call concurrently.
class MfccExtractor {
 public:
  explicit MfccExtractor(MfccConfig cfg)
      : cfg_(cfg), filterbank_(mel_filterbank(cfg_)), dct_(dct_matrix(cfg_.nfilt)) {
    std::vector<double> in(cfg_.nfft);
    std::vector<std::complex<double>> out(cfg_.num_bins());
    std::lock_guard lock(plan_mutex());  // the FFTW planner is not re-entrant
    plan_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(cfg_.nfft), in.data(),
                                     reinterpret_cast<fftw_complex*>(out.data()),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED));
    if (!plan_) throw Error(ErrorKind::InvalidArgument, "FFT plan creation failed");
  }

  const MfccConfig& config() const { return cfg_; }
  const Matrix& filterbank() const { return filterbank_; }

  std::size_t frame_count(std::size_t num_samples) const {
    const std::size_t len = cfg_.frame_samples();
    if (num_samples < len)
      throw Error(ErrorKind::SegmentTooShort, "segment shorter than one analysis window");
    return (num_samples - len) / cfg_.step_samples() + 1;
  }

  /// Filterbank energies (before the log) of one frame; `frame` is used
  /// as-is, without pre-emphasis, and zero-padded to nfft.
  std::vector<double> filterbank_energies(std::span<const double> frame) const {
    std::vector<double> buf(cfg_.nfft, 0.0);
    std::copy_n(frame.begin(), std::min(frame.size(), cfg_.nfft), buf.begin());
    std::vector<std::complex<double>> spec(cfg_.num_bins());
    std::vector<double> power(cfg_.num_bins());
    std::vector<double> energies(cfg_.nfilt);
    energies_into(buf, spec, power, energies);
    return energies;
  }

  /// frames x numcep cepstra of a sample sequence.
  Matrix frames(std::span<const double> samples) const {
    const std::size_t n_frames = frame_count(samples.size());
    const std::size_t len = cfg_.frame_samples();
    const std::size_t step = cfg_.step_samples();

    std::vector<double> emph(samples.size());
    emph[0] = samples[0];
    for (std::size_t i = 1; i < samples.size(); ++i)
      emph[i] = samples[i] - cfg_.preemph * samples[i - 1];

    Matrix out(n_frames, cfg_.numcep);
    std::vector<double> buf(cfg_.nfft, 0.0);
    std::vector<std::complex<double>> spec(cfg_.num_bins());
    std::vector<double> power(cfg_.num_bins());
    std::vector<double> energies(cfg_.nfilt);
    for (std::size_t f = 0; f < n_frames; ++f) {
      std::fill(buf.begin(), buf.end(), 0.0);
      std::copy_n(emph.begin() + static_cast<std::ptrdiff_t>(f * step), len, buf.begin());
      energies_into(buf, spec, power, energies);
      for (double& e : energies) e = std::log(std::max(e, cfg_.log_floor));
      auto dst = out.row(f);
      for (std::size_t k = 0; k < cfg_.numcep; ++k) {
        const auto basis = dct_.row(k);
        double acc = 0.0;
        for (std::size_t i = 0; i < cfg_.nfilt; ++i) acc += basis[i] * energies[i];
        dst[k] = acc;
      }
    }
    return out;
  }

 private:
  struct PlanDeleter {
    void operator()(fftw_plan_s* p) const {
      std::lock_guard lock(plan_mutex());
      fftw_destroy_plan(p);
    }
  };

  static std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
  }

  void energies_into(std::vector<double>& buf, std::vector<std::complex<double>>& spec,
                     std::vector<double>& power, std::vector<double>& energies) const {
    fftw_execute_dft_r2c(plan_.get(), buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
    const double inv_n = 1.0 / static_cast<double>(cfg_.nfft);
    for (std::size_t b = 0; b < power.size(); ++b) power[b] = std::norm(spec[b]) * inv_n;
    for (std::size_t j = 0; j < cfg_.nfilt; ++j) {
      const auto w = filterbank_.row(j);
      double acc = 0.0;
      for (std::size_t b = 0; b < power.size(); ++b) acc += w[b] * power[b];
      energies[j] = acc;
    }
  }

  MfccConfig cfg_;
  Matrix filterbank_;
  Matrix dct_;
  std::unique_ptr<fftw_plan_s, PlanDeleter> plan_;
};

/// Column means of a frames x numcep matrix.
inline MfccVector summarize(const Matrix& frames) {
  if (frames.rows == 0) throw Error(ErrorKind::EmptyInput, "cannot summarize zero frames");
  MfccVector out(frames.cols, 0.0);
  for (std::size_t r = 0; r < frames.rows; ++r) {
    const auto row = frames.row(r);
    for (std::size_t c = 0; c < frames.cols; ++c) out[c] += row[c];
  }
  for (double& v : out) v /= static_cast<double>(frames.rows);
  return out;
}

inline Matrix mfcc_frames(const Segment& seg, const MfccConfig& cfg) {
  MfccConfig c = cfg;
  c.sfreq = seg.sample_rate;
  return MfccExtractor(c).frames(seg.samples);
}

// ---------------------------------------------------------------------------
// Featurized segments and the feature cache format:
// subject_id,start,label,c0,...,c{numcep-1}

struct FeatureRecord {
  std::string subject_id;
  double start = 0.0;
  Label truth = Label::NP;
  MfccVector coeffs;
};

inline std::vector<FeatureRecord> featurize(std::span<const Segment> segments, const MfccExtractor& ex) {
  std::vector<FeatureRecord> out;
  out.reserve(segments.size());
  for (const auto& s : segments)
    out.push_back({s.subject_id, s.start, s.truth, summarize(ex.frames(s.samples))});
  return out;
}

/// Featurizes every segment of a recording, adapting the filterbank to the
/// recording's sample rate.
inline std::vector<FeatureRecord> featurize(const Recording& rec, const MfccConfig& cfg,
                                            double window, double hop) {
  MfccConfig c = cfg;
  c.sfreq = rec.sample_rate;
  const MfccExtractor ex(c);
  const auto segments = segment_recording(rec, window, hop);
  return featurize(segments, ex);
}

inline std::string format_feature_cache(std::span<const FeatureRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += r.subject_id + "," + format_double(r.start) + "," + std::string(to_string(r.truth));
    for (double c : r.coeffs) out += "," + format_double(c);
    out += "\n";
  }
  return out;
}

inline std::vector<FeatureRecord> parse_feature_cache(std::string_view text) {
  std::vector<FeatureRecord> out;
  for_each_record_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto f = split(line, ',');
    if (f.size() < 4)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": too few fields");
    FeatureRecord r;
    r.subject_id = std::string(trim(f[0]));
    r.start = parse_double(f[1], lineno);
    r.truth = parse_label(trim(f[2]));
    for (std::size_t i = 3; i < f.size(); ++i) r.coeffs.push_back(parse_double(f[i], lineno));
    if (!out.empty() && out.front().coeffs.size() != r.coeffs.size())
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": inconsistent coefficient count");
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace bowelsound
