#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "lpwn/checkpoint.hpp"
#include "lpwn/error.hpp"
#include "lpwn/lpc.hpp"
#include "lpwn/trainer.hpp"
#include "support.hpp"

using namespace lpwn;

namespace {

ModelConfig tiny_config(HeadKind head) {
  ModelConfig c = desk_preset(head);
  c.net.residual_channels = 8;
  c.net.skip_channels = 8;
  c.net.post_channels = 16;
  c.net.dilation_cycle = {1, 2, 4, 8};
  c.net.repeats = 1;
  finalize(c);
  return c;
}

std::vector<std::pair<std::string, AudioBuffer>> one_second_corpus() {
  return {{"a", test::synthetic_speech(1.0, 1)}};
}

void set_tensor(Model& m, const std::string& name, float value) {
  const auto idx = m.net.layout().find(name);
  REQUIRE(idx != nn::ParamLayout::npos);
  const auto& t = m.net.layout()[idx];
  std::fill(m.params.begin() + long(t.offset), m.params.begin() + long(t.offset + t.size), value);
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("one second at 2000-sample windows gives 8 windows") {
  Model m(tiny_config(HeadKind::kWnLp));
  const auto corpus = prepare_corpus(m, one_second_corpus());
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].audio.size() == 16000);
  const BatchStream s(corpus, 2000, 4, 1);
  CHECK(s.num_windows() == 8);
  std::set<std::size_t> begins;
  for (std::uint64_t step : {0u, 1u}) {
    for (const auto& w : s.batch(step)) {
      CHECK(w.length == 2000);
      CHECK(w.begin % 2000 == 0);
      begins.insert(w.begin);
    }
  }
  CHECK(begins.size() == 8);
  CHECK(s.all().size() == 8);
  CHECK(s.all()[3].begin == 6000);

  CHECK_THROWS_AS(BatchStream(corpus, 20000, 4, 1), Error);
}

TEST_CASE("window targets are defined by the LP prediction") {
  Model m(tiny_config(HeadKind::kWnLp));
  const auto corpus = prepare_corpus(m, one_second_corpus());
  const Utterance& u = corpus[0];
  const LpcSchedule sched = lpc_schedule(u.raw);
  for (const auto& w : BatchStream(corpus, 2000, 4, 3).batch(0)) {
    for (std::size_t k = 0; k < w.length; k += 37) {
      const std::size_t n = w.begin + k;
      std::vector<double> past(16);
      for (std::size_t i = 1; i <= 16; ++i) past[i - 1] = n >= i ? u.audio.samples[n - i] : 0.0;
      CHECK(w.x_hat[k] == lp_approximation(past, sched.at(n)));
      CHECK(u.excitation[n] == u.audio.samples[n] - w.x_hat[k]);
      CHECK(w.vuv[k] == (u.raw.vuv(n / 80) > 0.5));
    }
  }
  CHECK(u.classes[100] == mulaw_encode(u.audio.samples[100]).class_index);
}

TEST_CASE("batch order depends only on the seed") {
  Model m(tiny_config(HeadKind::kWnLp));
  const auto corpus = prepare_corpus(m, one_second_corpus());
  const BatchStream a(corpus, 1000, 3, 5), b(corpus, 1000, 3, 5), c(corpus, 1000, 3, 6);
  bool differs = false;
  for (std::uint64_t step = 0; step < 20; ++step) {
    const auto wa = a.batch(step), wb = b.batch(step), wc = c.batch(step);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(wa[i].begin == wb[i].begin);
      differs = differs || wa[i].begin != wc[i].begin;
    }
  }
  CHECK(differs);
  // Random access matches sequential access.
  const BatchStream fresh(corpus, 1000, 3, 5);
  CHECK(fresh.batch(11)[2].begin == a.batch(11)[2].begin);
}

TEST_CASE("zeroed output layer gives log 256 for the categorical head") {
  Model m(tiny_config(HeadKind::kWnS));
  const auto corpus = prepare_corpus(m, one_second_corpus());
  TrainConfig cfg;
  Trainer t(m, corpus, cfg);
  set_tensor(m, "post.conv2.weight", 0.0f);
  set_tensor(m, "post.conv2.bias", 0.0f);
  CHECK(t.corpus_loss() == doctest::Approx(std::log(256.0)).epsilon(1e-12));
}

TEST_CASE("shifted mixture and excitation mixture give the same loss") {
  Model lp(tiny_config(HeadKind::kWnLp));
  ModelConfig ecfg = tiny_config(HeadKind::kWnE);
  ecfg.net.mixture_count = 1;
  ecfg.net.out_channels = 3;
  Model ex(ecfg);
  const auto c1 = prepare_corpus(lp, one_second_corpus());
  const auto c2 = prepare_corpus(ex, one_second_corpus());
  TrainConfig cfg;
  Trainer t1(lp, c1, cfg);
  Trainer t2(ex, c2, cfg);
  // Cut the trunk off from its input so both heads see identical logits.
  set_tensor(lp, "input.weight_g", 0.0f);
  ex.params = lp.params;
  const double l1 = t1.corpus_loss(), l2 = t2.corpus_loss();
  CHECK(std::isfinite(l1));
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
}

TEST_CASE("training lowers the loss") {
  Model m(tiny_config(HeadKind::kWnLp));
  const auto corpus = prepare_corpus(m, one_second_corpus());
  TrainConfig cfg;
  cfg.window_samples = 1000;
  cfg.batch_windows = 2;
  cfg.learning_rate = 1e-3;
  Trainer t(m, corpus, cfg);
  const double before = t.corpus_loss();
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 200; ++i) {
    const StepResult r = t.step();
    CHECK(std::isfinite(r.loss));
    CHECK(r.grad_norm >= 0.0);
    if (i == 0) first = r.loss;
    last = r.loss;
  }
  const double after = t.corpus_loss();
  MESSAGE("loss " << before << " -> " << after << " (batch " << first << " -> " << last << ")");
  CHECK(after < before - 0.5);
  CHECK(t.adam().step == 200);
}

TEST_CASE("resumed training is bit exact and the log is complete") {
  const auto dir = test::tmp_dir("trainer_resume");
  TrainConfig cfg;
  cfg.window_samples = 1000;
  cfg.batch_windows = 2;
  cfg.steps = 10;
  cfg.learning_rate = 1e-3;
  cfg.log_interval = 2;
  cfg.checkpoint_interval = 5;

  Model straight(tiny_config(HeadKind::kWnE));
  const auto c1 = prepare_corpus(straight, one_second_corpus());
  const TrainSummary s1 = train_loop(straight, c1, cfg, dir / "straight");
  CHECK(s1.steps == 10);
  CHECK(std::filesystem::exists(dir / "straight" / "step_5.ckpt"));
  CHECK(count_lines(dir / "straight" / "loss.csv") == 1 + 5);

  // Stop at 5, then resume to 10.
  TrainConfig half = cfg;
  half.steps = 5;
  Model part(tiny_config(HeadKind::kWnE));
  const auto c2 = prepare_corpus(part, one_second_corpus());
  train_loop(part, c2, half, dir / "split");
  const Checkpoint mid = load_checkpoint(dir / "split" / "final.ckpt");
  CHECK(mid.adam.step == 5);
  Model resumed(tiny_config(HeadKind::kWnE));
  const auto c3 = prepare_corpus(resumed, one_second_corpus());
  const TrainSummary s2 = train_loop(resumed, c3, cfg, dir / "split", &mid);
  CHECK(s2.steps == 10);
  CHECK(resumed.params == straight.params);
  CHECK(s2.final_loss == s1.final_loss);
  CHECK(count_lines(dir / "split" / "loss.csv") == 1 + 2 + 3);

  const Checkpoint fin = load_checkpoint(dir / "straight" / "final.ckpt");
  REQUIRE(fin.final_loss.has_value());
  CHECK(*fin.final_loss == s1.final_loss);
  Model reloaded = model_from_checkpoint(fin);
  const auto c4 = prepare_corpus(reloaded, one_second_corpus());
  Trainer t(reloaded, c4, cfg);
  CHECK(t.corpus_loss() == *fin.final_loss);

  Model other(tiny_config(HeadKind::kWnLp));
  const auto c5 = prepare_corpus(other, one_second_corpus());
  try {
    train_loop(other, c5, cfg, dir / "other", &mid);
    FAIL("resume across configs accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfigMismatch);
  }
}

TEST_CASE("misaligned features are rejected") {
  Model m(tiny_config(HeadKind::kWnLp));
  const AudioBuffer audio = test::synthetic_speech(1.0, 2);
  AudioBuffer shorter = audio;
  shorter.samples.resize(8000);
  const FeatureTrack raw = extract_features(shorter, m.config.features);
  const std::vector<FeatureTrack> tracks{raw};
  try {
    prepare_utterance("x", audio, raw, compute_norm_stats(tracks));
    FAIL("misaligned utterance accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAlignment);
  }
}

TEST_CASE("train config json") {
  TrainConfig c;
  c.steps = 12;
  c.learning_rate = 3e-4;
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(back.steps == 12);
  CHECK(back.learning_rate == 3e-4);
  CHECK_THROWS_AS(train_config_from_json({{"window_samples", 0}}), Error);
}

}  // TEST_SUITE
