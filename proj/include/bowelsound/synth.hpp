#pragma once

// Seeded synthetic benchmarks: alternating P/NP state sequences drawn from
// duration tables, Laplace-noised probability sequences, and audio with
// band-limited bursts over white noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bowelsound/error.hpp"
#include "bowelsound/hsmm.hpp"
#include "bowelsound/labels.hpp"
#include "bowelsound/rng.hpp"
#include "bowelsound/sequence.hpp"
#include "bowelsound/signal_io.hpp"
#include "bowelsound/text.hpp"

namespace bowelsound::synth {

/// Probability table over durations lo..hi (inclusive) with equal weights.
inline std::vector<double> uniform_durations(std::size_t lo, std::size_t hi) {
  if (lo == 0 || hi < lo) throw Error(ErrorKind::InvalidArgument, "duration range must satisfy 1 <= lo <= hi");
  std::vector<double> t(hi, 0.0);
  for (std::size_t d = lo; d <= hi; ++d) t[d - 1] = 1.0 / static_cast<double>(hi - lo + 1);
  return t;
}

/// Table with all mass on a single duration.
inline std::vector<double> fixed_duration(std::size_t d) { return uniform_durations(d, d); }

struct SynthSpec {
  std::size_t subjects = 8;
  double duration = 60.0;      // seconds of audio per subject
  double sample_rate = 4000.0;
  double time_step = 0.1;      // seconds per duration unit when synthesizing audio
  hsmm::StateTable pi{0.5, 0.5};
  // In time steps. For audio a P run is a burst and an NP run a gap.
  hsmm::DurationTables durations{uniform_durations(20, 120), uniform_durations(5, 20)};
  double burst_low = 100.0;    // Hz
  double burst_high = 500.0;   // Hz
  double burst_rms = 0.2;
  double snr_db = 10.0;        // burst power over noise power; +inf gives silent background
  double obs_sigma = 0.3;
  std::uint64_t seed = 1;

  double noise_rms() const { return std::isinf(snr_db) && snr_db > 0 ? 0.0 : burst_rms / std::pow(10.0, snr_db / 20.0); }
};

inline void validate(const SynthSpec& s) {
  for (const auto& table : s.durations) {
    if (table.empty()) throw Error(ErrorKind::InvalidArgument, "duration tables must be non-empty");
    double total = 0.0;
    for (double p : table) {
      if (!(p >= 0.0)) throw Error(ErrorKind::InvalidArgument, "duration probabilities must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "duration table must sum to 1");
  }
  if (std::abs(s.pi[0] + s.pi[1] - 1.0) > 1e-9 || s.pi[0] < 0.0 || s.pi[1] < 0.0)
    throw Error(ErrorKind::InvalidArgument, "initial distribution must sum to 1");
  if (std::isnan(s.snr_db) || (std::isinf(s.snr_db) && s.snr_db < 0))
    throw Error(ErrorKind::InvalidArgument, "snr_db must be finite or +inf");
  if (!(s.sample_rate > 0.0) || !(s.time_step > 0.0) || !(s.duration > 0.0) || s.subjects == 0)
    throw Error(ErrorKind::InvalidArgument, "subjects, duration, sample rate and time step must be positive");
  if (!(s.burst_low >= 0.0 && s.burst_low < s.burst_high && s.burst_high <= s.sample_rate / 2.0))
    throw Error(ErrorKind::InvalidArgument, "burst band must lie within [0, Nyquist]");
  if (!(s.obs_sigma >= 0.0)) throw Error(ErrorKind::NonPositiveSigma, "observation noise scale must be non-negative");
}

/// Alternating-state run sequence sampled from pi and the duration tables,
/// truncated to T labels.
inline LabelSequence gen_state_sequence(const SynthSpec& spec, std::size_t T, Rng& rng) {
  LabelSequence out;
  out.reserve(T);
  Label state = rng.categorical(spec.pi) == index(Label::P) ? Label::P : Label::NP;
  while (out.size() < T) {
    const std::size_t d = rng.categorical(spec.durations[index(state)]) + 1;
    out.insert(out.end(), std::min(d, T - out.size()), state);
    state = other(state);
  }
  return out;
}

/// Deterministic in (spec.seed, stream): distinct streams give independent sequences.
inline LabelSequence gen_state_sequence(const SynthSpec& spec, std::size_t T, std::uint64_t stream = 0) {
  Rng rng(Rng::mix(spec.seed, stream));
  return gen_state_sequence(spec, T, rng);
}

/// Each observation is the state's mean (P -> 1, NP -> 0) plus Laplace noise,
/// clamped to [0, 1]. Starts are index * time_step.
inline ProbSequence gen_observations(std::span<const Label> truth, double obs_sigma, std::uint64_t seed,
                                     double time_step = 0.1, std::string subject_id = "synthetic") {
  if (!(obs_sigma >= 0.0)) throw Error(ErrorKind::NonPositiveSigma, "observation noise scale must be non-negative");
  Rng rng(seed);
  ProbSequence out;
  out.subject_id = std::move(subject_id);
  out.starts.reserve(truth.size());
  out.probs.reserve(truth.size());
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const double mu = truth[t] == Label::P ? 1.0 : 0.0;
    const double noise = obs_sigma > 0.0 ? rng.laplace(obs_sigma) : 0.0;
    out.starts.push_back(static_cast<double>(t) * time_step);
    out.probs.push_back(std::clamp(mu + noise, 0.0, 1.0));
  }
  return out;
}

inline std::string subject_name(std::size_t i) {
  std::string n = std::to_string(i + 1);
  return "S" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

/// One subject's audio: white background noise plus a band-limited burst
/// (random in-band sinusoids under a tapered envelope) during every P run.
/// Annotations mark exactly the burst supports.
inline Recording gen_audio(const SynthSpec& spec, std::size_t subject = 0) {
  validate(spec);
  Rng rng(Rng::mix(spec.seed, 1000 + subject));
  const auto n_samples = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  const auto n_steps = static_cast<std::size_t>(std::ceil(spec.duration / spec.time_step));
  const LabelSequence states = gen_state_sequence(spec, n_steps, rng);

  Recording rec;
  rec.subject_id = subject_name(subject);
  rec.sample_rate = spec.sample_rate;
  rec.samples.assign(n_samples, 0.0);
  const double noise = spec.noise_rms();
  if (noise > 0.0)
    for (double& s : rec.samples) s = noise * rng.normal();

  constexpr int kPartials = 16;
  for (const auto& run : [&] {
         std::vector<std::pair<std::size_t, std::size_t>> bursts;  // [first step, end step)
         std::size_t t = 0;
         for (const auto& r : hsmm::run_lengths(states)) {
           if (r.label == Label::P) bursts.emplace_back(t, t + r.duration);
           t += r.duration;
         }
         return bursts;
       }()) {
    const auto first = static_cast<std::size_t>(std::llround(static_cast<double>(run.first) * spec.time_step * spec.sample_rate));
    const auto last = std::min(n_samples, static_cast<std::size_t>(std::llround(static_cast<double>(run.second) * spec.time_step * spec.sample_rate)));
    if (last <= first) continue;
    double freq[kPartials], phase[kPartials];
    for (int k = 0; k < kPartials; ++k) {
      freq[k] = rng.uniform(spec.burst_low, spec.burst_high);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const std::size_t len = last - first;
    const std::size_t ramp = std::min<std::size_t>(len / 4, static_cast<std::size_t>(0.02 * spec.sample_rate));
    // sum of kPartials unit sinusoids has RMS sqrt(kPartials / 2)
    const double gain = spec.burst_rms / std::sqrt(kPartials / 2.0);
    for (std::size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(first + i) / spec.sample_rate;
      double env = 1.0;
      if (ramp > 0 && i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(ramp));
      if (ramp > 0 && len - 1 - i < ramp)
        env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - 1 - i) / static_cast<double>(ramp)));
      double v = 0.0;
      for (int k = 0; k < kPartials; ++k) v += std::sin(2.0 * std::numbers::pi * freq[k] * t + phase[k]);
      rec.samples[first + i] += gain * env * v;
    }
    rec.annotations.push_back({static_cast<double>(first) / spec.sample_rate,
                               static_cast<double>(last) / spec.sample_rate, EventType::BowelSound});
  }
  for (double& s : rec.samples) s = std::clamp(s, -1.0, 1.0);
  return rec;
}

/// Writes <dir>/<subject>.wav, <dir>/<subject>.tsv and <dir>/manifest.tsv for
/// every subject; returns the manifest path.
inline std::filesystem::path write_dataset(const SynthSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < spec.subjects; ++i) {
    const Recording rec = gen_audio(spec, i);
    const auto wav = rec.subject_id + ".wav";
    const auto tsv = rec.subject_id + ".tsv";
    save_wav(dir / wav, rec, WavEncoding::Float32);
    write_text_file(dir / tsv, format_annotations(rec.annotations));
    entries.push_back({rec.subject_id, wav, tsv});
  }
  const auto manifest = dir / "manifest.tsv";
  write_text_file(manifest, format_manifest(entries));
  return manifest;
}

// ---------------------------------------------------------------------------
// Spec file: `key = value` lines. Duration tables are either explicit
// probabilities for d = 1, 2, ... or `uniform <lo> <hi>`.

inline std::vector<double> parse_duration_table(std::string_view v) {
  std::vector<std::string_view> tok;
  for (auto t : split(v, ' '))
    if (!trim(t).empty()) tok.push_back(trim(t));
  if (tok.size() == 3 && tok[0] == "uniform")
    return uniform_durations(static_cast<std::size_t>(parse_int(tok[1])), static_cast<std::size_t>(parse_int(tok[2])));
  std::vector<double> out;
  for (auto t : tok) out.push_back(parse_double(t));
  return out;
}

inline std::string format_duration_table(std::span<const double> t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) out += (i ? " " : "") + format_double(t[i]);
  return out;
}

inline SynthSpec parse_spec(std::string_view text) {
  SynthSpec s;
  for (const auto& [k, v] : parse_key_values(text)) {
    if (k == "subjects") s.subjects = static_cast<std::size_t>(parse_int(v));
    else if (k == "duration") s.duration = parse_double(v);
    else if (k == "sample_rate") s.sample_rate = parse_double(v);
    else if (k == "time_step") s.time_step = parse_double(v);
    else if (k == "pi_P") {
      s.pi[index(Label::P)] = parse_double(v);
      s.pi[index(Label::NP)] = 1.0 - s.pi[index(Label::P)];
    } else if (k == "dur_P") s.durations[index(Label::P)] = parse_duration_table(v);
    else if (k == "dur_NP") s.durations[index(Label::NP)] = parse_duration_table(v);
    else if (k == "burst_low") s.burst_low = parse_double(v);
    else if (k == "burst_high") s.burst_high = parse_double(v);
    else if (k == "burst_rms") s.burst_rms = parse_double(v);
    else if (k == "snr_db") s.snr_db = v == "inf" ? std::numeric_limits<double>::infinity() : parse_double(v);
    else if (k == "obs_sigma") s.obs_sigma = parse_double(v);
    else if (k == "seed") s.seed = static_cast<std::uint64_t>(parse_int(v));
    else throw Error(ErrorKind::ParseError, "unknown synth spec key '" + k + "'");
  }
  validate(s);
  return s;
}

inline std::string format_spec(const SynthSpec& s) {
  std::string out;
  auto kv = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  kv("subjects", std::to_string(s.subjects));
  kv("duration", format_double(s.duration));
  kv("sample_rate", format_double(s.sample_rate));
  kv("time_step", format_double(s.time_step));
  kv("pi_P", format_double(s.pi[index(Label::P)]));
  kv("dur_P", format_duration_table(s.durations[index(Label::P)]));
  kv("dur_NP", format_duration_table(s.durations[index(Label::NP)]));
  kv("burst_low", format_double(s.burst_low));
  kv("burst_high", format_double(s.burst_high));
  kv("burst_rms", format_double(s.burst_rms));
  kv("snr_db", std::isinf(s.snr_db) ? std::string("inf") : format_double(s.snr_db));
  kv("obs_sigma", format_double(s.obs_sigma));
  kv("seed", std::to_string(s.seed));
  return out;
}

}  // namespace bowelsound::synth
