#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>

#include "bowelsound/rng.hpp"
#include "bowelsound/signal_io.hpp"

using namespace bowelsound;

namespace {

std::string le(std::uint32_t v, int bytes) {
  std::string s;
  for (int i = 0; i < bytes; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  return s;
}

std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                      const std::string& pcm) {
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  std::string fmt = le(format, 2) + le(channels, 2) + le(rate, 4) + le(rate * block, 4) + le(block, 2) + le(bits, 2);
  return "RIFF" + le(static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + pcm.size()), 4) + "WAVE" + "fmt " +
         le(static_cast<std::uint32_t>(fmt.size()), 4) + fmt + "data" + le(static_cast<std::uint32_t>(pcm.size()), 4) + pcm;
}

Recording silent(double seconds, double rate = 4000.0) {
  Recording r;
  r.subject_id = "s";
  r.sample_rate = rate;
  r.samples.assign(static_cast<std::size_t>(std::llround(seconds * rate)), 0.0);
  return r;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

}  // namespace

TEST(Wav, SilentPcm16) {
  const auto rec = decode_wav(wav_bytes(1, 1, 4000, 16, std::string(8, '\0')));
  ASSERT_EQ(rec.samples.size(), 4u);
  for (double s : rec.samples) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(rec.sample_rate, 4000.0);
  EXPECT_TRUE(rec.annotations.empty());
}

TEST(Wav, Pcm16ScaleEndpoint) {
  const auto rec = decode_wav(wav_bytes(1, 1, 4000, 16, le(0x8000, 2) + le(0x4000, 2)));
  EXPECT_EQ(rec.samples[0], -1.0);
  EXPECT_EQ(rec.samples[1], 0.5);
}

TEST(Wav, OtherEncodings) {
  EXPECT_EQ(decode_wav(wav_bytes(1, 1, 8000, 8, std::string("\x00\x80\xC0", 3))).samples, (std::vector<double>{-1.0, 0.0, 0.5}));
  EXPECT_EQ(decode_wav(wav_bytes(1, 1, 8000, 24, le(0x800000, 3) + le(0x400000, 3))).samples,
            (std::vector<double>{-1.0, 0.5}));
  float f = -0.25f;
  std::uint32_t raw;
  std::memcpy(&raw, &f, 4);
  EXPECT_EQ(decode_wav(wav_bytes(3, 1, 8000, 32, le(raw, 4))).samples, (std::vector<double>{-0.25}));
}

TEST(Wav, RoundTripThroughFileKeepsLengthAndRate) {
  Rng rng(1);
  Recording rec = silent(1.0);
  for (double& s : rec.samples) s = rng.uniform(-0.9, 0.9);
  const auto path = std::filesystem::temp_directory_path() / "bowelsound_roundtrip.wav";
  save_wav(path, rec, WavEncoding::Pcm16);
  const auto back = load_wav(path);
  EXPECT_EQ(back.samples.size(), 4000u);
  EXPECT_EQ(back.sample_rate, 4000.0);
  EXPECT_EQ(back.subject_id, "bowelsound_roundtrip");
  for (std::size_t i = 0; i < rec.samples.size(); ++i) EXPECT_NEAR(back.samples[i], rec.samples[i], 1.0 / 32768.0);
  save_wav(path, rec, WavEncoding::Float32);
  const auto back_f = load_wav(path);
  for (std::size_t i = 0; i < rec.samples.size(); ++i) EXPECT_NEAR(back_f.samples[i], rec.samples[i], 1e-7);
  std::filesystem::remove(path);
}

TEST(Wav, Errors) {
  EXPECT_EQ(kind_of([] { decode_wav(wav_bytes(1, 2, 4000, 16, std::string(8, '\0'))); }), ErrorKind::UnsupportedFormat);
  EXPECT_EQ(kind_of([] { decode_wav(wav_bytes(2, 1, 4000, 16, std::string(8, '\0'))); }), ErrorKind::UnsupportedFormat);
  EXPECT_EQ(kind_of([] { decode_wav(wav_bytes(1, 1, 4000, 12, std::string(8, '\0'))); }), ErrorKind::UnsupportedFormat);
  EXPECT_EQ(kind_of([] { decode_wav("RIFX0000WAVE"); }), ErrorKind::CorruptHeader);
  EXPECT_EQ(kind_of([] { decode_wav(std::string("RIFF") + le(4, 4) + "WAVE"); }), ErrorKind::CorruptHeader);
  EXPECT_EQ(kind_of([] { load_wav("/nonexistent/file.wav"); }), ErrorKind::Io);
}

TEST(Annotations, ParsesSortsAndSkipsComments) {
  const auto ivs = parse_annotations("# onset\toffset\tlabel\n3\t4\theart\n0.5\t2.0\tbowel\n\n1\t1.5\tnoise\r\n");
  ASSERT_EQ(ivs.size(), 3u);
  EXPECT_EQ(ivs[0], (LabeledInterval{0.5, 2.0, EventType::BowelSound}));
  EXPECT_EQ(ivs[1].label, EventType::Noise);
  EXPECT_EQ(ivs[2].label, EventType::HeartSound);
  EXPECT_TRUE(parse_annotations("").empty());
}

TEST(Annotations, Errors) {
  EXPECT_EQ(kind_of([] { parse_annotations("2.0\t1.0\tbowel\n"); }), ErrorKind::InvertedInterval);
  EXPECT_EQ(kind_of([] { parse_annotations("1.0\t1.0\tbowel\n"); }), ErrorKind::InvertedInterval);
  try {
    parse_annotations("0\t1\tbowel\n0\t1\tsquelch\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { parse_annotations("0\tx\tbowel\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { parse_annotations("0\t1\n"); }), ErrorKind::ParseError);
}

TEST(Annotations, FormatRoundTrip) {
  const std::vector<LabeledInterval> ivs{{0.1, 0.7, EventType::BowelSound}, {1.25, 3.0, EventType::Other}};
  EXPECT_EQ(parse_annotations(format_annotations(ivs)), ivs);
}

TEST(Manifest, ResolvesRelativePaths) {
  const auto m = parse_manifest("# header\nS1\ta.wav\ta.tsv\nS2\t/abs/b.wav\tb.tsv\n", "/data");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].wav, std::filesystem::path("/data/a.wav"));
  EXPECT_EQ(m[1].wav, std::filesystem::path("/abs/b.wav"));
  EXPECT_EQ(m[1].annotations, std::filesystem::path("/data/b.tsv"));
  EXPECT_THROW(parse_manifest("S1\ta.wav\n"), Error);
}

TEST(Recording, AnnotationOutsideDurationRejected) {
  Recording r = silent(2.0);
  r.annotations = {{1.0, 2.5, EventType::BowelSound}};
  EXPECT_THROW(validate(r), Error);
  r.annotations = {{1.0, 2.0, EventType::BowelSound}};
  EXPECT_NO_THROW(validate(r));
}

TEST(Segmentation, ExampleCounts) {
  EXPECT_EQ(segment_recording(silent(6.0), 6.0, 0.1).size(), 1u);
  EXPECT_EQ(segment_recording(silent(60.0), 6.0, 0.1).size(), 541u);
  const auto segs = segment_recording(silent(7.0), 6.0, 0.5);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(segs[0].start, 0.0);
  EXPECT_EQ(segs[1].start, 0.5);
  EXPECT_EQ(segs[2].start, 1.0);
  for (const auto& s : segs) {
    EXPECT_EQ(s.samples.size(), 24000u);
    EXPECT_EQ(s.length, 6.0);
  }
  EXPECT_EQ(kind_of([] { segment_recording(silent(5.0), 6.0, 0.1); }), ErrorKind::WindowTooLong);
  EXPECT_THROW(segment_recording(silent(7.0), 6.0, 0.0), Error);
}

TEST(Segmentation, ClosedFormCountAndCoverage) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const double rate = 100.0;
    const std::size_t n = 50 + rng.below(2000);
    const std::size_t w = 1 + rng.below(n);
    const std::size_t h = 1 + rng.below(200);
    Recording rec = silent(static_cast<double>(n) / rate, rate);
    const auto segs = segment_recording(rec, static_cast<double>(w) / rate, static_cast<double>(h) / rate);
    EXPECT_EQ(segs.size(), (n - w) / h + 1);
    std::vector<bool> covered(n, false);
    for (std::size_t k = 0; k < segs.size(); ++k) {
      const auto offset = static_cast<std::size_t>(segs[k].samples.data() - rec.samples.data());
      EXPECT_EQ(offset, k * h);
      EXPECT_EQ(segs[k].samples.size(), w);
      if (k > 0) {
        EXPECT_NEAR(segs[k].start - segs[k - 1].start, static_cast<double>(h) / rate, 1e-12);
      }
      for (std::size_t i = 0; i < w; ++i) covered[offset + i] = true;
    }
    // with hop <= window the windows tile [0, last end) without gaps
    const std::size_t bound = w + h * (segs.size() - 1);
    if (h <= w) {
      for (std::size_t i = 0; i < bound; ++i) ASSERT_TRUE(covered[i]);
    }
    EXPECT_GT(bound + h, n);
  }
}

TEST(Labeling, OverlapRule) {
  const std::vector<LabeledInterval> edge{{5.9, 7.0, EventType::BowelSound}};
  EXPECT_EQ(label_segment(0, 6, edge), Label::P);
  const std::vector<LabeledInterval> touching{{6.0, 7.0, EventType::BowelSound}};
  EXPECT_EQ(label_segment(0, 6, touching), Label::NP);
  const std::vector<LabeledInterval> heart{{1.0, 3.0, EventType::HeartSound}, {2.0, 4.0, EventType::Noise}};
  EXPECT_EQ(label_segment(0, 6, heart), Label::NP);
}

TEST(Labeling, MonotoneUnderIntervalGrowth) {
  Rng rng(23);
  for (int trial = 0; trial < 500; ++trial) {
    const double on = rng.uniform(0, 20), off = on + rng.uniform(0.01, 3);
    const double start = rng.uniform(0, 20), end = start + 6.0;
    const std::vector<LabeledInterval> small{{on, off, EventType::BowelSound}};
    const std::vector<LabeledInterval> big{{on - rng.uniform(0, 2), off + rng.uniform(0, 2), EventType::BowelSound}};
    if (label_segment(start, end, small) == Label::P) {
      EXPECT_EQ(label_segment(start, end, big), Label::P);
    }
  }
}

TEST(Segmentation, SegmentsCarryTruthLabels) {
  Recording rec = silent(10.0);
  rec.annotations = {{7.5, 8.0, EventType::BowelSound}};
  const auto segs = segment_recording(rec, 6.0, 0.5);
  // windows [s, s+6] overlap [7.5, 8] iff s > 1.5
  for (const auto& s : segs) EXPECT_EQ(s.truth, s.start > 1.5 ? Label::P : Label::NP) << s.start;
}
