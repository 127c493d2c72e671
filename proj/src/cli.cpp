#include "lpwn/cli.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpwn/checkpoint.hpp"
#include "lpwn/error.hpp"
#include "lpwn/metrics.hpp"
#include "lpwn/synth.hpp"
#include "lpwn/trainer.hpp"

namespace lpwn {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<fs::path> wav_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, dir.string() + " is not a directory");
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::kIo, "no .wav files in " + dir.string());
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f << text;
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : v) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / double(n);
}

std::string csv_field(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

struct FeaturesArgs {
  std::vector<std::string> wavs;
  std::string out_dir;
  std::size_t order = 16;
  double hop_ms = 5.0;
  double win_ms = 25.0;
};

int cmd_features(const FeaturesArgs& a, std::ostream& out) {
  FeatureConfig cfg;
  cfg.order = a.order;
  cfg.hop_ms = a.hop_ms;
  cfg.win_ms = a.win_ms;
  std::vector<FeatureTrack> tracks;
  for (const auto& w : a.wavs) tracks.push_back(extract_features(read_wav(w), cfg));
  const NormStats stats = compute_norm_stats(tracks);
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < a.wavs.size(); ++i) {
    const fs::path manifest =
        fs::path(a.out_dir) / (fs::path(a.wavs[i]).stem().string() + ".json");
    write_feature_file(tracks[i], &stats, manifest);
    out << manifest.string() << " " << tracks[i].num_frames << "\n";
  }
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string data_dir;
  std::string out_dir;
  std::string resume;
};

// train.json: {"model": {"head": ..., "preset": "desk"|"paper", ...},
//              "train": {...}}
int cmd_train(const TrainArgs& a, std::ostream& out) {
  const json j = read_json(a.config);
  if (!j.contains("model")) throw Error(ErrorCode::kConfig, "config has no \"model\" section");
  Model model(model_config_from_json(j["model"]));
  const TrainConfig tc = train_config_from_json(j.value("train", json::object()));

  std::vector<std::pair<std::string, AudioBuffer>> audio;
  for (const auto& p : wav_files(a.data_dir)) {
    audio.emplace_back(p.stem().string(), read_wav(p));
  }
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume, &model.config);
  auto corpus = prepare_corpus(model, std::move(audio));
  if (resume) {
    // Normalization must follow the checkpoint, not a refit.
    model.stats = resume->stats;
    for (auto& u : corpus) u.cond = conditioning_matrix(normalize(u.raw, model.stats));
  }

  fs::create_directories(a.out_dir);
  write_text(fs::path(a.out_dir) / "config.json",
             json{{"model", to_json(model.config)}, {"train", to_json(tc)}}.dump(2) + "\n");
  const TrainSummary s =
      train_loop(model, corpus, tc, a.out_dir, resume ? &*resume : nullptr);
  const json summary = {{"head", head_name(model.config.head)},
                        {"steps", s.steps},
                        {"initial_loss", s.initial_loss},
                        {"final_loss", s.final_loss},
                        {"checkpoint", s.final_checkpoint.string()}};
  write_text(fs::path(a.out_dir) / "summary.json", summary.dump(2) + "\n");
  out << summary.dump() << "\n";
  return 0;
}

struct SynthArgs {
  std::string checkpoint;
  std::string features;
  std::string wav;
  std::uint64_t seed = 0;
  double sharpen = kVoicedSharpen;
  double log_scale_cap = kSampleLogScaleCap;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Model model = model_from_checkpoint(ck);
  FeatureTrack raw;
  if (!a.features.empty()) {
    NormStats file_stats;
    raw = read_feature_file(a.features, &file_stats);
    if (raw.normalized) raw = denormalize(raw, file_stats);
  } else {
    raw = extract_features(read_wav(a.wav), model.config.features);
  }
  GenerateOptions opt;
  opt.seed = a.seed;
  opt.sampling.sharpen = a.sharpen;
  opt.sampling.log_scale_cap = a.log_scale_cap;
  GenerationTrace trace;
  const AudioBuffer audio = generate(model, raw, opt, &trace);
  const WavWriteSummary ws = write_wav(audio, a.out);
  const json info = {{"checkpoint", a.checkpoint},
                     {"head", head_name(model.config.head)},
                     {"seed", a.seed},
                     {"sharpen", a.sharpen},
                     {"log_scale_cap", a.log_scale_cap},
                     {"samples", ws.samples_written},
                     {"clamped", trace.clamped + ws.clamped}};
  write_text(a.out + ".json", info.dump(2) + "\n");
  out << info.dump() << "\n";
  return 0;
}

struct EvalArgs {
  std::string ref;
  std::string test;
  std::string report;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const AudioBuffer ref = read_wav(a.ref);
  const AudioBuffer test = read_wav(a.test);
  const MetricReport r = evaluate(ref, test, FeatureConfig{});
  json j = to_json(r);
  j["ref"] = a.ref;
  j["test"] = a.test;
  if (!a.report.empty()) {
    write_text(a.report, j.dump(2) + "\n");
    fs::path csv = a.report;
    csv.replace_extension(".csv");
    write_text(csv, report_csv_header() + "\n" + report_csv_row(r) + "\n");
  }
  out << j.dump() << "\n";
  return 0;
}

struct CompareArgs {
  std::vector<std::string> checkpoints;
  std::string wav_dir;
  std::string report;
  std::uint64_t seed = 0;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  const auto wavs = wav_files(a.wav_dir);
  std::vector<AudioBuffer> refs;
  for (const auto& p : wavs) refs.push_back(read_wav(p));
  std::ostringstream csv;
  csv << "system,vuv_pct,f0_rmse_hz,lsd_db,flsd_db\n";
  for (const auto& path : a.checkpoints) {
    const Model model = model_from_checkpoint(load_checkpoint(path));
    std::vector<std::optional<double>> vuv, f0, lsd, flsd;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      GenerateOptions opt;
      opt.seed = a.seed + i;
      const CopySynthesis cs = copy_synthesis(model, refs[i], opt);
      vuv.push_back(cs.report.vuv_pct);
      f0.push_back(cs.report.f0_rmse_hz);
      lsd.push_back(cs.report.lsd_db);
      flsd.push_back(cs.report.flsd_db);
    }
    csv << head_name(model.config.head) << "," << csv_field(mean_defined(vuv)) << ","
        << csv_field(mean_defined(f0)) << "," << csv_field(mean_defined(lsd)) << ","
        << csv_field(mean_defined(flsd)) << "\n";
  }
  write_text(a.report, csv.str());
  out << csv.str();
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LP-shifted mixture WaveNet vocoder tools", "lpwn"};
  app.require_subcommand(1);

  FeaturesArgs fa;
  auto* features = app.add_subcommand("features", "Extract feature files from WAVs");
  features->add_option("wavs", fa.wavs, "Input WAV files")->required()->check(CLI::ExistingFile);
  features->add_option("--out-dir", fa.out_dir)->required();
  features->add_option("--order", fa.order)->capture_default_str();
  features->add_option("--hop-ms", fa.hop_ms)->capture_default_str();
  features->add_option("--win-ms", fa.win_ms)->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--config", ta.config)->required()->check(CLI::ExistingFile);
  train->add_option("--data-dir", ta.data_dir)->required();
  train->add_option("--out-dir", ta.out_dir)->required();
  train->add_option("--resume", ta.resume, "Checkpoint to continue from");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a waveform");
  synth->add_option("--checkpoint", sa.checkpoint)->required()->check(CLI::ExistingFile);
  auto* feat_opt = synth->add_option("--features", sa.features, "Feature manifest");
  auto* wav_opt = synth->add_option("--wav", sa.wav, "Analyse this WAV instead");
  feat_opt->excludes(wav_opt);
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--sharpen", sa.sharpen)->capture_default_str();
  synth->add_option("--log-scale-cap", sa.log_scale_cap)->capture_default_str();
  synth->add_option("--out", sa.out)->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a test WAV against a reference");
  eval->add_option("--ref", ea.ref)->required()->check(CLI::ExistingFile);
  eval->add_option("--test", ea.test)->required()->check(CLI::ExistingFile);
  eval->add_option("--report", ea.report);

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "Copy-synthesis table over checkpoints");
  compare->add_option("--checkpoints", ca.checkpoints)->required()->delimiter(',');
  compare->add_option("--wav-dir", ca.wav_dir)->required();
  compare->add_option("--report", ca.report)->required();
  compare->add_option("--seed", ca.seed)->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error:" << error_code_name(ErrorCode::kUsage) << ":" << msg << "\n";
    return 2;
  }

  try {
    if (*features) return cmd_features(fa, out);
    if (*train) return cmd_train(ta, out);
    if (*synth) {
      if (sa.features.empty() == sa.wav.empty()) {
        throw Error(ErrorCode::kUsage, "synth needs exactly one of --features or --wav");
      }
      return cmd_synth(sa, out);
    }
    if (*eval) return cmd_eval(ea, out);
    if (*compare) return cmd_compare(ca, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error:" << error_code_name(e.code()) << ":" << msg << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error:internal:" << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace lpwn
