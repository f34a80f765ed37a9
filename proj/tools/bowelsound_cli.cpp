// bowelsound: command-line front end for the segment -> MFCC -> CNN -> HSMM
// pipeline. Every stage reads and writes plain text (plus WAV and the binary
// model file), so any stage can be swapped for an external tool.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bowelsound/bowelsound.hpp"

namespace fs = std::filesystem;
using namespace bowelsound;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitContract = 3;

fs::path default_out_dir() {
  if (const char* env = std::getenv("BOWELSOUND_OUT"); env && *env) return env;
  return "bowelsound-out";
}

struct Common {
  fs::path out = default_out_dir();
  std::uint64_t seed = 0;
};

struct Segmentation {
  double window = kDefaultWindowSeconds;
  double hop = kDefaultHopSeconds;
};

void add_out(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory (default: $BOWELSOUND_OUT or ./bowelsound-out)");
}

void add_seed(CLI::App* cmd, Common& c) { cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str(); }

void add_segmentation(CLI::App* cmd, Segmentation& s) {
  cmd->add_option("--window", s.window, "Segment length in seconds")->capture_default_str();
  cmd->add_option("--hop", s.hop, "Segment hop in seconds")->capture_default_str();
}

void add_mfcc(CLI::App* cmd, MfccConfig& m) {
  cmd->add_option("--numcep", m.numcep, "Cepstral coefficients kept per frame")->capture_default_str();
  cmd->add_option("--nfilt", m.nfilt, "Mel filters")->capture_default_str();
  cmd->add_option("--nfft", m.nfft, "FFT size")->capture_default_str();
  cmd->add_option("--winlen", m.winlen, "MFCC frame length in seconds")->capture_default_str();
  cmd->add_option("--winstep", m.winstep, "MFCC frame step in seconds")->capture_default_str();
  cmd->add_option("--preemph", m.preemph, "Pre-emphasis coefficient")->capture_default_str();
}

void add_training(CLI::App* cmd, cnn::TrainConfig& t, bool& no_balance) {
  cmd->add_option("--lr", t.learning_rate, "RMSProp learning rate")->capture_default_str();
  cmd->add_option("--lr-decay", t.lr_decay, "Learning-rate decay per update")->capture_default_str();
  cmd->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--val-fraction", t.val_fraction, "Validation hold-out fraction")->capture_default_str();
  cmd->add_flag("--no-balance", no_balance, "Keep the majority class instead of downsampling it");
}

void add_sigma(CLI::App* cmd, double& sigma) {
  cmd->add_option("--sigma", sigma, "Laplace emission scale")->capture_default_str()->check(CLI::PositiveNumber);
}

void say(const std::string& msg) { std::cerr << msg << "\n"; }

std::vector<LabelSequence> truths_of(std::span<const SubjectData> subjects) {
  std::vector<LabelSequence> out;
  for (const auto& s : subjects) out.push_back(s.truth());
  return out;
}

std::vector<LabeledSequence> truth_sequences(std::span<const SubjectData> subjects) {
  std::vector<LabeledSequence> out;
  for (const auto& s : subjects) {
    LabeledSequence l{s.subject_id, {}, s.truth()};
    for (const auto& r : s.segments) l.starts.push_back(r.start);
    out.push_back(std::move(l));
  }
  return out;
}

std::vector<SubjectData> load_subjects(const fs::path& manifest, const fs::path& features, const MfccConfig& mfcc,
                                       const Segmentation& seg) {
  if (!features.empty()) return group_by_subject(parse_feature_cache(read_text_file(features)));
  return featurize_manifest(load_manifest(manifest), mfcc, seg.window, seg.hop);
}

// ---------------------------------------------------------------------------

int cmd_segment(const fs::path& manifest, const Segmentation& seg, const Common& c) {
  std::string index = "# subject_id\tstart\tlength\tlabel\n";
  std::size_t total = 0;
  for (const auto& e : load_manifest(manifest)) {
    const Recording rec = load_recording(e);
    const auto segments = segment_recording(rec, seg.window, seg.hop);
    total += segments.size();
    const auto part = format_segment_index(segments);
    index += part.substr(part.find('\n') + 1);
  }
  write_text_file(c.out / "segments.tsv", index);
  std::cout << total << " segments -> " << (c.out / "segments.tsv").string() << "\n";
  return 0;
}

int cmd_featurize(const fs::path& manifest, const Segmentation& seg, const MfccConfig& mfcc, const Common& c) {
  const auto subjects = featurize_manifest(load_manifest(manifest), mfcc, seg.window, seg.hop);
  std::vector<FeatureRecord> all;
  for (const auto& s : subjects) all.insert(all.end(), s.segments.begin(), s.segments.end());
  write_text_file(c.out / "features.csv", format_feature_cache(all));
  write_text_file(c.out / "truth.tsv", format_labeled_sequences(truth_sequences(subjects)));
  std::cout << all.size() << " feature vectors -> " << (c.out / "features.csv").string() << "\n";
  return 0;
}

int cmd_train(const fs::path& features, cnn::TrainConfig tc, double sigma, const Common& c) {
  const auto records = parse_feature_cache(read_text_file(features));
  if (records.empty()) throw Error(ErrorKind::EmptyInput, "feature file is empty");
  tc.seed = c.seed;
  std::string curve = "# epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n";
  const auto arch = cnn::reference_architecture(records.front().coeffs.size());
  const auto result = cnn::train(records, tc, arch, std::nullopt, [&](const cnn::EpochStats& e) {
    curve += std::to_string(e.epoch) + "\t" + format_double(e.train_loss) + "\t" + format_double(e.train_acc) + "\t" +
             format_double(e.val_loss) + "\t" + format_double(e.val_acc) + "\n";
  });
  cnn::save_model(c.out / "model.bscn", result.model);
  write_text_file(c.out / "training_curve.tsv", curve);

  // duration statistics from the ground truth; emission matrix from the
  // trained network's own confusion on its training data
  const auto subjects = group_by_subject(records);
  const auto params = hsmm::learn_params(truths_of(subjects), sigma);
  ConfusionCounts conf;
  for (const auto& s : subjects)
    conf += count_confusion(s.truth(), threshold(cnn::predict_sequence(result.model, s.segments).probs));
  std::optional<hsmm::EmissionMatrix> emission;
  try {
    emission = hsmm::conventional_emission(detail::confusion_matrix(conf));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateConfusion) throw;
    say("note: training confusion is degenerate; no [emission] section written");
  }
  write_text_file(c.out / "hsmm.txt", hsmm::format_params(params, emission ? &*emission : nullptr));
  std::cout << "best epoch " << result.curve.best_epoch << " of " << tc.epochs << " -> "
            << (c.out / "model.bscn").string() << ", " << (c.out / "hsmm.txt").string() << "\n";
  return 0;
}

int cmd_predict(const fs::path& model_path, const fs::path& features, const Common& c) {
  const auto model = cnn::load_model(model_path);
  std::vector<ProbSequence> out;
  for (const auto& s : group_by_subject(parse_feature_cache(read_text_file(features))))
    out.push_back(cnn::predict_sequence(model, s.segments));
  write_text_file(c.out / "probabilities.tsv", format_prob_sequences(out));
  std::cout << out.size() << " subjects -> " << (c.out / "probabilities.tsv").string() << "\n";
  return 0;
}

int cmd_refine(const fs::path& probs, const fs::path& params_path, const fs::path& truth_path,
               std::optional<double> sigma, bool conventional, const Common& c) {
  if (params_path.empty() == truth_path.empty())
    throw Error(ErrorKind::InvalidArgument, "give exactly one of --params or --truth");
  hsmm::ParsedParams parsed;
  if (!params_path.empty()) {
    parsed = hsmm::parse_params(read_text_file(params_path));
  } else {
    std::vector<LabelSequence> seqs;
    for (const auto& s : parse_labeled_sequences(read_text_file(truth_path))) seqs.push_back(s.labels);
    parsed.params = hsmm::learn_params(seqs);
  }
  if (sigma) parsed.params.sigma = *sigma;
  if (conventional && !parsed.has_emission)
    throw Error(ErrorKind::InvalidArgument, "--conventional needs a parameter file with an [emission] section");

  std::vector<LabeledSequence> out;
  for (const auto& seq : parse_prob_sequences(read_text_file(probs))) {
    const auto states = conventional ? hsmm::viterbi_refine_discrete(seq.probs, parsed.params, parsed.emission)
                                     : hsmm::viterbi_refine(seq, parsed.params);
    out.push_back({seq.subject_id, seq.starts, hsmm::expand(states)});
  }
  write_text_file(c.out / "refined.tsv", format_labeled_sequences(out));
  std::cout << out.size() << " sequences refined -> " << (c.out / "refined.tsv").string() << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& truth_path, const fs::path& pred_path, const fs::path& probs_path, const Common& c) {
  const auto truth = parse_labeled_sequences(read_text_file(truth_path));
  const auto pred = parse_labeled_sequences(read_text_file(pred_path));
  std::vector<ProbSequence> probs;
  if (!probs_path.empty()) probs = parse_prob_sequences(read_text_file(probs_path));
  if (truth.size() != pred.size() || (!probs.empty() && probs.size() != truth.size()))
    throw Error(ErrorKind::LengthMismatch, "truth, prediction and probability files cover different subjects");
  LabelSequence t, p;
  std::vector<double> scores;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].subject_id != pred[i].subject_id || truth[i].starts != pred[i].starts)
      throw Error(ErrorKind::LengthMismatch, "segments of subject '" + truth[i].subject_id + "' do not line up");
    t.insert(t.end(), truth[i].labels.begin(), truth[i].labels.end());
    p.insert(p.end(), pred[i].labels.begin(), pred[i].labels.end());
    if (!probs.empty()) {
      if (probs[i].subject_id != truth[i].subject_id || probs[i].size() != truth[i].labels.size())
        throw Error(ErrorKind::LengthMismatch, "probabilities of subject '" + truth[i].subject_id + "' do not line up");
      scores.insert(scores.end(), probs[i].probs.begin(), probs[i].probs.end());
    }
  }
  const auto report = probs.empty() ? compute_metrics(t, p) : compute_metrics(t, p, scores);
  write_text_file(c.out / "metrics.txt", format_report_kv("pooled", report));
  std::cout << format_report_header() << format_report_row("pooled", report);
  return 0;
}

int cmd_lopocv(const fs::path& manifest, const fs::path& features, const Segmentation& seg, const MfccConfig& mfcc,
               cnn::TrainConfig tc, double sigma, std::size_t jobs, const Common& c) {
  const auto subjects = load_subjects(manifest, features, mfcc, seg);
  if (subjects.empty()) throw Error(ErrorKind::EmptyInput, "no subjects");
  LopocvConfig cfg;
  cfg.train = tc;
  cfg.arch = cnn::reference_architecture(subjects.front().segments.front().coeffs.size());
  cfg.sigma = sigma;
  cfg.seed = c.seed;
  cfg.jobs = jobs;
  cfg.log = say;
  const auto result = run_lopocv(subjects, cfg);

  std::vector<ProbSequence> probs;
  std::vector<LabeledSequence> refined;
  for (const auto& f : result.folds) {
    probs.push_back(f.raw);
    refined.push_back({f.subject_id, f.raw.starts, hsmm::expand(f.refined)});
  }
  write_text_file(c.out / "lopocv_report.txt", format_lopocv_kv(result));
  write_text_file(c.out / "lopocv_table.txt", format_lopocv_table(result));
  write_text_file(c.out / "probabilities.tsv", format_prob_sequences(probs));
  write_text_file(c.out / "refined.tsv", format_labeled_sequences(refined));
  write_text_file(c.out / "truth.tsv", format_labeled_sequences(truth_sequences(subjects)));
  std::cout << format_pooled_table(result.pooled);
  return 0;
}

int cmd_synth(const fs::path& spec_path, const CLI::App& cmd, synth::SynthSpec overrides, std::size_t observations,
              std::size_t length, const Common& c) {
  synth::SynthSpec spec = spec_path.empty() ? synth::SynthSpec{} : synth::parse_spec(read_text_file(spec_path));
  if (cmd.count("--subjects")) spec.subjects = overrides.subjects;
  if (cmd.count("--duration")) spec.duration = overrides.duration;
  if (cmd.count("--snr-db")) spec.snr_db = overrides.snr_db;
  if (cmd.count("--obs-sigma")) spec.obs_sigma = overrides.obs_sigma;
  if (cmd.count("--seed")) spec.seed = c.seed;
  synth::validate(spec);
  write_text_file(c.out / "spec.txt", synth::format_spec(spec));

  if (observations == 0) {
    const auto manifest = synth::write_dataset(spec, c.out);
    std::cout << spec.subjects << " recordings -> " << manifest.string() << "\n";
    return 0;
  }
  // observation-level benchmark: noisy probability sequences with their truth
  std::vector<ProbSequence> probs;
  std::vector<LabeledSequence> truth;
  for (std::size_t i = 0; i < observations; ++i) {
    const auto id = synth::subject_name(i);
    const auto labels = synth::gen_state_sequence(spec, length, i);
    auto obs = synth::gen_observations(labels, spec.obs_sigma, Rng::mix(spec.seed, 100000 + i), spec.time_step, id);
    truth.push_back({id, obs.starts, labels});
    probs.push_back(std::move(obs));
  }
  write_text_file(c.out / "probabilities.tsv", format_prob_sequences(probs));
  write_text_file(c.out / "truth.tsv", format_labeled_sequences(truth));
  std::cout << observations << " sequences -> " << (c.out / "probabilities.tsv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bowel-sound detection: MFCC + 1D CNN segment classifier with HSMM refinement"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  Segmentation seg;
  MfccConfig mfcc;
  cnn::TrainConfig train_cfg;
  bool no_balance = false;
  double sigma = hsmm::kDefaultSigma;
  fs::path manifest, features, model, probs, params, truth, pred, spec;
  std::size_t jobs = 1;
  bool conventional = false;
  synth::SynthSpec synth_overrides;
  std::size_t observations = 0, length = 300;

  auto* segment = app.add_subcommand("segment", "Cut recordings into labeled windows and write an index");
  segment->add_option("--manifest", manifest, "Manifest TSV: subject, wav, annotations")->required();
  add_segmentation(segment, seg);
  add_out(segment, common);

  auto* featurize = app.add_subcommand("featurize", "Compute the MFCC summary vector of every segment");
  featurize->add_option("--manifest", manifest, "Manifest TSV: subject, wav, annotations")->required();
  add_segmentation(featurize, seg);
  add_mfcc(featurize, mfcc);
  add_out(featurize, common);

  auto* train = app.add_subcommand("train", "Train the CNN and learn HSMM parameters from a feature file");
  train->add_option("--features", features, "Feature file written by featurize")->required();
  add_training(train, train_cfg, no_balance);
  add_sigma(train, sigma);
  add_seed(train, common);
  add_out(train, common);

  auto* predict = app.add_subcommand("predict", "Write P-probabilities for every segment of a feature file");
  predict->add_option("--model", model, "Model file written by train")->required();
  predict->add_option("--features", features, "Feature file written by featurize")->required();
  add_out(predict, common);

  std::optional<double> refine_sigma;
  auto* refine = app.add_subcommand("refine", "Refine probability sequences with the HSMM decoder");
  refine->add_option("--probs", probs, "Probability TSV: subject, start, p (from any classifier)")->required();
  refine->add_option("--params", params, "HSMM parameter file written by train");
  refine->add_option("--truth", truth, "Labeled TSV to learn HSMM parameters from instead of --params");
  refine->add_option("--sigma", refine_sigma, "Override the Laplace emission scale")->check(CLI::PositiveNumber);
  refine->add_flag("--conventional", conventional, "Use the discrete confusion-matrix emission from --params");
  add_out(refine, common);

  auto* evaluate = app.add_subcommand("evaluate", "Score predicted labels against the truth");
  evaluate->add_option("--truth", truth, "Labeled TSV with ground truth")->required();
  evaluate->add_option("--pred", pred, "Labeled TSV with predictions")->required();
  evaluate->add_option("--probs", probs, "Probability TSV used as AUC scores (default: the predicted labels)");
  add_out(evaluate, common);

  auto* lopocv = app.add_subcommand("lopocv", "Leave-one-subject-out evaluation of the full pipeline");
  auto* lo_manifest = lopocv->add_option("--manifest", manifest, "Manifest TSV: subject, wav, annotations");
  auto* lo_features = lopocv->add_option("--features", features, "Feature file instead of --manifest");
  lo_manifest->excludes(lo_features);
  add_segmentation(lopocv, seg);
  add_mfcc(lopocv, mfcc);
  add_training(lopocv, train_cfg, no_balance);
  add_sigma(lopocv, sigma);
  lopocv->add_option("--jobs", jobs, "Folds run concurrently")->capture_default_str()->check(CLI::PositiveNumber);
  add_seed(lopocv, common);
  add_out(lopocv, common);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  synth_cmd->add_option("--spec", spec, "key = value spec file");
  synth_cmd->add_option("--subjects", synth_overrides.subjects, "Number of recordings")->capture_default_str();
  synth_cmd->add_option("--duration", synth_overrides.duration, "Seconds per recording")->capture_default_str();
  synth_cmd->add_option("--snr-db", synth_overrides.snr_db, "Burst-to-noise power ratio in dB")->capture_default_str();
  synth_cmd->add_option("--obs-sigma", synth_overrides.obs_sigma, "Laplace scale of synthetic probabilities")
      ->capture_default_str();
  synth_cmd->add_option("--observations", observations,
                        "Write this many probability sequences instead of audio");
  synth_cmd->add_option("--length", length, "Segments per probability sequence")->capture_default_str();
  add_seed(synth_cmd, common);
  add_out(synth_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }
  train_cfg.balance = !no_balance;

  try {
    if (*segment) return cmd_segment(manifest, seg, common);
    if (*featurize) return cmd_featurize(manifest, seg, mfcc, common);
    if (*train) return cmd_train(features, train_cfg, sigma, common);
    if (*predict) return cmd_predict(model, features, common);
    if (*refine) return cmd_refine(probs, params, truth, refine_sigma, conventional, common);
    if (*evaluate) return cmd_evaluate(truth, pred, probs, common);
    if (*lopocv) {
      if (manifest.empty() && features.empty())
        throw Error(ErrorKind::InvalidArgument, "lopocv needs --manifest or --features");
      return cmd_lopocv(manifest, features, seg, mfcc, train_cfg, sigma, jobs, common);
    }
    if (*synth_cmd) return cmd_synth(spec, *synth_cmd, synth_overrides, observations, length, common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_input_error(e.kind()) ? kExitInput : kExitContract;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
