#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cstnet/corpus.hpp"
#include "cstnet/trainer.hpp"

using namespace cstnet;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

EncoderConfig tiny_audio_cfg() {
  EncoderConfig cfg;
  cfg.input_dim = 8;
  cfg.channels = 6;
  cfg.seed = 3;
  return cfg;
}

EncoderConfig tiny_text_cfg() {
  EncoderConfig cfg = tiny_audio_cfg();
  cfg.input_dim = 5;
  cfg.seed = 4;
  return cfg;
}

std::vector<PairedExample> tiny_dataset(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PairedExample> data;
  for (int i = 0; i < n; ++i) {
    PairedExample p;
    p.utt_id = "u" + std::to_string(i);
    p.audio = FeatureMatrix::zeros(10 + int(rng() % 20), 8);
    p.text = FeatureMatrix::zeros(4 + int(rng() % 6), 5, 0);
    for (auto& v : p.audio.data)
      v = float(double(rng() >> 11) * 0x1.0p-53 * 2 - 1);
    for (auto& v : p.text.data)
      v = float(double(rng() >> 11) * 0x1.0p-53 * 2 - 1);
    data.push_back(std::move(p));
  }
  return data;
}

TrainState<float> fresh_state(uint64_t seed = 11) {
  TrainState<float> st;
  st.model = build_model<float>(tiny_audio_cfg(), tiny_text_cfg());
  st.cfg.epochs = 3;
  st.cfg.batch_size = 4;
  st.cfg.seed = seed;
  st.rng.seed(seed);
  return st;
}

}  // namespace

TEST_CASE("lr schedule exact values") {
  TrainConfig cfg;
  CHECK(lr_at_epoch(cfg, 0) == 0.001);
  CHECK(lr_at_epoch(cfg, 3) == doctest::Approx(0.00095).epsilon(1e-15));
  CHECK(lr_at_epoch(cfg, 99) ==
        doctest::Approx(0.001 * std::pow(0.95, 33)).epsilon(1e-15));
  for (int e = 1; e < 50; ++e) {
    CHECK(lr_at_epoch(cfg, e) <= lr_at_epoch(cfg, e - 1));
    CHECK(lr_at_epoch(cfg, e) > 0.0);
  }
  CHECK_THROWS_AS(lr_at_epoch(cfg, -1), std::invalid_argument);
}

TEST_CASE("adam first step moves by about lr against the gradient") {
  Parameter<double> p("w", Tensor<double>({1}));
  p.grad.at(0) = 1.0;
  std::vector<Parameter<double>*> params{&p};
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adam_step(params, 0.001, 1, cfg);
  // bias-corrected first step: -lr * g/|g| modulo epsilon
  CHECK(p.value.at(0) == doctest::Approx(-0.001).epsilon(1e-4));
}

TEST_CASE("adam zero gradient with zero decay is a fixed point") {
  Parameter<double> p("w", Tensor<double>({3}));
  p.value.at(0) = 1.5;
  p.value.at(1) = -0.25;
  p.value.at(2) = 0.0;
  std::vector<Parameter<double>*> params{&p};
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (int t = 1; t <= 5; ++t) adam_step(params, 0.001, t, cfg);
  CHECK(p.value.at(0) == 1.5);
  CHECK(p.value.at(1) == -0.25);
  CHECK(p.value.at(2) == 0.0);
}

TEST_CASE("adam trajectory matches a scalar transcription of the update") {
  // independent scalar recurrence, written from the Adam update equations
  double w_ref = 2.0, m = 0.0, v = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
  Parameter<double> p("w", Tensor<double>({1}));
  p.value.at(0) = 2.0;
  std::vector<Parameter<double>*> params{&p};
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g_impl = 2.0 * p.value.at(0);  // d/dw of w^2
    p.grad.at(0) = g_impl;
    adam_step(params, lr, t, cfg);

    const double g = 2.0 * w_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    w_ref -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.value.at(0) == doctest::Approx(w_ref).epsilon(1e-12));
  }
}

TEST_CASE("weight decay contributes exactly wd*w to the effective gradient") {
  // differencing: one step with wd vs one step with wd folded into the grad
  for (double w0 : {0.8, -1.3}) {
    Parameter<double> a("w", Tensor<double>({1})), b("w", Tensor<double>({1}));
    a.value.at(0) = b.value.at(0) = w0;
    a.grad.at(0) = 0.37;
    b.grad.at(0) = 0.37 + 5e-3 * w0;
    std::vector<Parameter<double>*> pa{&a}, pb{&b};
    TrainConfig ca, cb;
    ca.weight_decay = 5e-3;
    cb.weight_decay = 0.0;
    adam_step(pa, 0.01, 1, ca);
    adam_step(pb, 0.01, 1, cb);
    CHECK(a.value.at(0) == doctest::Approx(b.value.at(0)).epsilon(1e-15));
  }
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Parameter<double> p("audio.L1.conv.w", Tensor<double>({1}));
  p.grad.at(0) = std::numeric_limits<double>::quiet_NaN();
  std::vector<Parameter<double>*> params{&p};
  TrainConfig cfg;
  CHECK_THROWS_WITH_AS(adam_step(params, 0.001, 1, cfg),
                       doctest::Contains("audio.L1.conv.w"),
                       std::runtime_error);
}

TEST_CASE("zero_grads resets exactly to zero") {
  Parameter<float> p("w", Tensor<float>({4}));
  p.grad.fill(2.5f);
  std::vector<Parameter<float>*> params{&p};
  zero_grads(params);
  for (float g : p.grad.data) CHECK(g == 0.0f);
}

TEST_CASE("train_epoch is deterministic given state") {
  const auto data = tiny_dataset(10, 1);
  auto s1 = fresh_state(77);
  auto s2 = fresh_state(77);
  const auto r1 = train_epoch(s1, data);
  const auto r2 = train_epoch(s2, data);
  CHECK(r1.mean_total == r2.mean_total);
  CHECK(r1.mean_l_s == r2.mean_l_s);
  CHECK(r1.mean_l_h == r2.mean_l_h);
  auto p1 = s1.model.parameters();
  auto p2 = s2.model.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::size_t j = 0; j < p1[i]->value.data.size(); ++j)
      CHECK(p1[i]->value.data[j] == p2[i]->value.data[j]);
}

TEST_CASE("train_epoch drops a trailing batch of one") {
  const auto data = tiny_dataset(9, 2);  // batch 4 -> 4 + 4 + 1 dropped
  auto st = fresh_state(5);
  const auto rep = train_epoch(st, data);
  CHECK(rep.batches == 2);
  CHECK(rep.dropped_examples == 1);
}

TEST_CASE("train_epoch rejects an empty dataset") {
  auto st = fresh_state(5);
  CHECK_THROWS_AS(train_epoch(st, {}), std::invalid_argument);
}

TEST_CASE("mean loss decreases on a learnable toy corpus") {
  // identical per-pair latents rendered into both modalities
  std::mt19937_64 rng(123);
  std::vector<PairedExample> data;
  for (int i = 0; i < 24; ++i) {
    std::vector<float> latent(8);
    for (auto& v : latent)
      v = float(double(rng() >> 11) * 0x1.0p-53 * 4 - 2);
    PairedExample p;
    p.utt_id = "u" + std::to_string(i);
    p.audio = FeatureMatrix::zeros(12, 8);
    for (int t = 0; t < 12; ++t)
      for (int c = 0; c < 8; ++c) p.audio.at(t, c) = latent[std::size_t(c)];
    p.text = FeatureMatrix::zeros(5, 5, 0);
    for (int t = 0; t < 5; ++t)
      for (int c = 0; c < 5; ++c) p.text.at(t, c) = latent[std::size_t(c)];
    data.push_back(std::move(p));
  }
  auto st = fresh_state(9);
  st.cfg.epochs = 12;
  double first = 0, last = 0;
  for (int e = 0; e < 12; ++e) {
    const auto rep = train_epoch(st, data);
    if (e == 0) first = rep.mean_total;
    last = rep.mean_total;
  }
  CHECK(last < first);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  auto st = fresh_state(21);
  const auto data = tiny_dataset(8, 3);
  train_epoch(st, data);
  const std::string p1 = temp_path("ckpt_a.cstn");
  const std::string p2 = temp_path("ckpt_b.cstn");
  save_checkpoint(p1, st.model, st.epoch, st.step, st.rng_state(), "{}");

  auto m2 = build_model<float>(tiny_audio_cfg(), tiny_text_cfg());
  const auto meta = load_checkpoint(p1, m2);
  CHECK(meta.epoch == st.epoch);
  CHECK(meta.step == st.step);
  CHECK(meta.config_json == "{}");
  save_checkpoint(p2, m2, meta.epoch, meta.step, meta.rng_state, "{}");

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream b1, b2;
  b1 << f1.rdbuf();
  b2 << f2.rdbuf();
  CHECK(b1.str() == b2.str());
  CHECK(!b1.str().empty());
}

TEST_CASE("resume from checkpoint matches uninterrupted training") {
  const auto data = tiny_dataset(12, 4);
  auto full = fresh_state(31);
  full.cfg.epochs = 2;
  train_epoch(full, data);
  const auto second_direct = train_epoch(full, data);

  auto part = fresh_state(31);
  part.cfg.epochs = 2;
  train_epoch(part, data);
  const std::string path = temp_path("ckpt_resume.cstn");
  save_checkpoint(path, part.model, part.epoch, part.step, part.rng_state(),
                  "{}");

  auto resumed = fresh_state(31);
  const auto meta = load_checkpoint(path, resumed.model);
  resumed.epoch = meta.epoch;
  resumed.step = meta.step;
  resumed.set_rng_state(meta.rng_state);
  const auto second_resumed = train_epoch(resumed, data);
  CHECK(second_resumed.mean_total == second_direct.mean_total);
  CHECK(second_resumed.mean_l_s == second_direct.mean_l_s);
}

TEST_CASE("checkpoint corruption and mismatch errors") {
  auto model = build_model<float>(tiny_audio_cfg(), tiny_text_cfg());
  const std::string path = temp_path("ckpt_err.cstn");
  save_checkpoint(path, model, 0, 0, "seed", "{}");

  SUBCASE("truncated file reports corrupted tensor length") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(path, model),
                         doctest::Contains("corrupted tensor length"),
                         std::runtime_error);
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(path, model),
                         doctest::Contains("bad magic"), std::runtime_error);
  }
  SUBCASE("differently shaped model rejects the payload") {
    EncoderConfig other = tiny_audio_cfg();
    other.channels = 5;
    auto m2 = build_model<float>(other, tiny_text_cfg());
    CHECK_THROWS_AS(load_checkpoint(path, m2), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(temp_path("nope.cstn"), model),
                    std::runtime_error);
  }
}

TEST_CASE("epoch csv format") {
  EpochReport r;
  r.epoch = 2;
  r.lr = 0.001;
  r.mean_l_s = 1.5;
  r.mean_l_h = 0.5;
  r.mean_total = 2.0;
  CHECK(epoch_csv_header() == "epoch,lr,mean_l_s,mean_l_h,mean_total");
  CHECK(epoch_csv_row(r) == "2,0.001,1.5,0.5,2");
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lr0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
