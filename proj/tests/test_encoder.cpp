#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "simspoof/encoder.hpp"
#include "simspoof/grad_check.hpp"

using namespace simspoof;

namespace {

EncoderConfig tiny() {
  EncoderConfig cfg;
  cfg.segment_length = 96;
  cfg.sinc.num_filters = 8;
  cfg.sinc.kernel_len = 17;
  cfg.num_blocks = 2;
  cfg.filters_per_block = {2, 3};
  cfg.gru_hidden = 3;
  cfg.embed_dim = 4;
  return cfg;
}

}  // namespace

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5));
}

TEST_CASE("sinc filterbank bands") {
  SincConfig cfg;
  const SincFilterbank fb(cfg, nullptr);
  const auto lo = fb.low_hz(), hi = fb.high_hz(), c = fb.center_hz();
  REQUIRE(lo.size() == cfg.num_filters);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    CHECK(lo[i] >= cfg.min_low_hz);
    CHECK(hi[i] <= cfg.sample_rate / 2.0);
    CHECK(hi[i] - lo[i] >= cfg.min_band_hz);
    if (i) CHECK(c[i] > c[i - 1]);
  }
  CHECK(fb.filters().shape() == Shape{70, 129});
}

TEST_CASE("sinc impulse response") {
  SincConfig cfg;
  cfg.num_filters = 6;
  cfg.kernel_len = 33;
  const SincFilterbank fb(cfg, nullptr);
  std::vector<double> wave(100, 0.0);
  const std::size_t p = 50;
  wave[p] = 1.0;
  const Tensor y = sinc_forward(Tensor::from({100}, wave), fb);
  const Tensor h = fb.filters();
  REQUIRE(y.shape() == Shape{1, 6, 68});
  for (std::size_t f = 0; f < 6; ++f) {
    for (std::size_t j = 0; j < 33; ++j) CHECK(y.at(f * 68 + p - j) == doctest::Approx(h.at(f * 33 + j)));
  }
}

TEST_CASE("sinc output length") {
  const SincFilterbank fb(SincConfig{}, nullptr);
  const Tensor y = sinc_forward(Tensor::zeros({64600}), fb);
  CHECK(y.shape() == Shape{1, 70, 64472});
  CHECK_THROWS_AS(sinc_forward(Tensor::zeros({128}), fb), ShapeError);
}

TEST_CASE("default encoder shape follows the pooling arithmetic") {
  const EncoderConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const auto expect = oracle::encoder_shape(64600, 129, 70, cfg.filters_per_block);
  CHECK(cfg.feature_shape() == Shape(expect.begin(), expect.end()));
  CHECK(cfg.feature_shape()[0] == 64);
}

TEST_CASE("encoder forward shape agrees with the arithmetic for each attention kind") {
  for (auto kind : {AttentionKind::none, AttentionKind::simam, AttentionKind::se, AttentionKind::cbam}) {
    EncoderConfig cfg = tiny();
    cfg.attention = kind;
    cfg.se.reduction = 2;
    cfg.cbam.reduction = 1;
    cfg.cbam.kernel_size = 3;
    Rng rng(1);
    ParameterSet ps;
    Encoder enc(cfg, rng, &ps);
    const Tensor wave = normal_tensor({3, 96}, 0.1, rng, false);
    const Tensor f = enc.encode(wave, true);
    const auto expect = oracle::encoder_shape(96, 17, 8, cfg.filters_per_block);
    CHECK(f.shape() == Shape{3, expect[0], expect[1], expect[2]});
    CHECK(enc.embed(f).shape() == Shape{3, 4});
  }
}

TEST_CASE("collapse is reported with the block index") {
  EncoderConfig cfg = tiny();
  cfg.num_blocks = 4;
  cfg.filters_per_block = {2, 2, 2, 2};
  try {
    cfg.validate();
    FAIL("expected a configuration error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("block 3") != std::string::npos);
  }
}

TEST_CASE("zero feature map with zero GRU biases embeds to the projection bias") {
  Rng rng(2);
  ParameterSet ps;
  Encoder enc(tiny(), rng, &ps);
  for (auto& v : enc.gru().bias_ih.mutable_data()) v = 0.0;
  for (auto& v : enc.gru().bias_hh.mutable_data()) v = 0.0;
  auto fb = enc.fc_bias.mutable_data();
  for (std::size_t i = 0; i < fb.size(); ++i) fb[i] = 0.1 * static_cast<double>(i + 1);
  const Tensor e = enc.embed(Tensor::zeros({2, 3, 2, 5}));
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 4; ++i) CHECK(e.at(b * 4 + i) == enc.fc_bias.at(i));
  }
  CHECK_THROWS(enc.embed(Tensor::zeros({2, 3, 2, 0})));
}

TEST_CASE("tiny encoder gradients end to end") {
  Rng rng(3);
  ParameterSet ps;
  Encoder enc(tiny(), rng, &ps);
  const Tensor wave = normal_tensor({2, 96}, 1.0, rng, false);
  const Tensor proj = normal_tensor({2, 4}, 1.0, rng, false);
  GradCheckOptions opts;
  opts.max_probes = 32;
  CHECK(grad_check_detailed([&](const Tensor& w) { return sum(mul(enc.forward(w, true), proj)); }, wave, opts)
            .max_rel_error < 1e-4);
  for (const auto& nt : ps.parameters()) {
    INFO(nt.name);
    Tensor p = nt.tensor;
    CHECK(grad_check_parameter([&] { return sum(mul(enc.forward(wave, true), proj)); }, p, opts).max_rel_error <
          1e-4);
  }
}

TEST_CASE("gru recurrence matches a scalar implementation") {
  Rng rng(4);
  const Gru gru = Gru::create(2, 3, rng, nullptr, "gru");
  const Tensor seq = normal_tensor({1, 4, 2}, 1.0, rng, false);
  std::vector<double> h(3, 0.0);
  auto sg = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<double> gi(9), gh(9);
    for (std::size_t j = 0; j < 9; ++j) {
      gi[j] = gru.bias_ih.at(j);
      gh[j] = gru.bias_hh.at(j);
      for (std::size_t i = 0; i < 2; ++i) gi[j] += seq.at(t * 2 + i) * gru.weight_ih.at(i * 9 + j);
      for (std::size_t i = 0; i < 3; ++i) gh[j] += h[i] * gru.weight_hh.at(i * 9 + j);
    }
    std::vector<double> nh(3);
    for (std::size_t u = 0; u < 3; ++u) {
      const double r = sg(gi[u] + gh[u]), z = sg(gi[3 + u] + gh[3 + u]);
      const double n = std::tanh(gi[6 + u] + r * gh[6 + u]);
      nh[u] = (1.0 - z) * n + z * h[u];
    }
    h = nh;
  }
  const Tensor out = gru.forward(seq);
  for (std::size_t u = 0; u < 3; ++u) CHECK(out.at(u) == doctest::Approx(h[u]).epsilon(1e-12));
}
