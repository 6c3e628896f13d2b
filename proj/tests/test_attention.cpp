#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "simspoof/attention.hpp"
#include "simspoof/grad_check.hpp"
#include "simspoof/ops.hpp"

using namespace simspoof;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void zero(Tensor& t) {
  for (auto& v : t.mutable_data()) v = 0.0;
}

}  // namespace

TEST_CASE("simam energy on a uniform channel is exactly 2") {
  for (double lambda : {1e-8, 1e-4, 0.3, 5.0}) {
    for (double v : {0.0, -3.25, 1e6}) {
      const Tensor e = simam_energy(Tensor::full({2, 3, 5}, v), SimAmConfig{lambda});
      for (double x : e.data()) CHECK(x == 2.0);
    }
  }
  const Tensor y = simam_refine(Tensor::full({1, 2, 2}, 2.0), SimAmConfig{});
  for (double x : y.data()) CHECK(x == doctest::Approx(2.0 * 0.622459).epsilon(1e-6));
}

TEST_CASE("simam energy on [0,0,0,4] matches the scalar oracle") {
  const Tensor x = Tensor::from({1, 2, 2}, {0, 0, 0, 4});
  const Tensor e = simam_energy(x, SimAmConfig{1e-4});
  const std::vector<double> ch{0, 0, 0, 4};
  CHECK(e.at(3) == doctest::Approx(oracle::simam_energy(ch, 4.0, 1e-4)).epsilon(1e-14));
  CHECK(e.at(0) == doctest::Approx(oracle::simam_energy(ch, 0.0, 1e-4)).epsilon(1e-14));
  CHECK(e.at(3) == doctest::Approx(0.8000).epsilon(1e-4));
  CHECK(e.at(0) == doctest::Approx(1.7143).epsilon(1e-4));

  // Larger deviation, lower energy, larger gain.
  const Tensor y = simam_refine(x, SimAmConfig{1e-4});
  CHECK(y.at(3) / 4.0 == doctest::Approx(sigm(1.0 / e.at(3))));
  CHECK(sigm(1.0 / e.at(3)) == doctest::Approx(0.7773).epsilon(1e-4));
  CHECK(sigm(1.0 / e.at(0)) == doctest::Approx(0.6418).epsilon(1e-4));
}

TEST_CASE("simam excluding-target statistics equal the energy minimum found by descent") {
  Rng rng(17);
  std::normal_distribution<double> d(0.0, 1.5);
  for (int c = 0; c < 12; ++c) {
    const std::size_t m = 2 + static_cast<std::size_t>(c);
    const double lambda = c % 2 ? 1e-2 : 1.0;
    std::vector<double> v(m);
    for (auto& x : v) x = d(rng);
    const Tensor e = simam_energy(Tensor::from({1, 1, m}, v), SimAmConfig{lambda}, SimAmStatistics::excluding_target);
    for (std::size_t t = 0; t < m; ++t) {
      std::vector<double> others(v);
      others.erase(others.begin() + static_cast<long>(t));
      CHECK(std::abs(e.at(t) - oracle::energy_minimum_descent(others, v[t], lambda)) < 1e-6);
    }
  }
}

TEST_CASE("simam properties") {
  CHECK(simam_refine(Tensor::zeros({2, 3, 4}), SimAmConfig{}).data()[5] == 0.0);
  CHECK_THROWS_AS(simam_energy(Tensor::zeros({3, 1, 1}), SimAmConfig{}), ShapeError);
  CHECK_THROWS_AS(SimAmConfig{0.0}.validate(), std::invalid_argument);

  Rng rng(4);
  const Tensor x = normal_tensor({2, 3, 4, 5}, 1.0, rng, false);
  CHECK(simam_refine(x, SimAmConfig{}).shape() == x.shape());
  // Gate lies in (sigmoid(0), 1) since e* > 0: |y| between |x|/2 and |x|.
  const Tensor y = simam_refine(x, SimAmConfig{});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(y.at(i)) <= std::abs(x.at(i)));
    CHECK(std::abs(y.at(i)) >= 0.5 * std::abs(x.at(i)));
  }
  // Batched and unbatched agree.
  const Tensor one = simam_refine(slice(x, 0, 1, 1), SimAmConfig{});
  for (std::size_t i = 0; i < one.numel(); ++i) CHECK(one.at(i) == y.at(60 + i));
}

TEST_CASE("simam refinement gradient") {
  Rng rng(6);
  const Tensor x = normal_tensor({2, 3, 4}, 1.0, rng, false);
  CHECK(grad_check([](const Tensor& t) { return sum(simam_refine(t, SimAmConfig{})); }, x) < 1e-4);
}

TEST_CASE("se with zero excitation halves its input") {
  Rng rng(1);
  SeConfig cfg{2};
  SeParams p = SeParams::create(8, cfg, rng);
  zero(p.fc1_weight), zero(p.fc1_bias), zero(p.fc2_weight), zero(p.fc2_bias);
  const Tensor x = normal_tensor({4, 8, 6}, 1.0, rng, false);
  const Tensor y = se_refine(x, p, cfg);
  CHECK(y.shape() == Shape{4, 8, 6});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == 0.5 * x.at(i));
  CHECK_THROWS_AS(SeParams::create(6, SeConfig{4}, rng), std::invalid_argument);
}

TEST_CASE("cbam with zero weights quarters its input") {
  Rng rng(2);
  CbamConfig cfg{2, 3};
  CbamParams p = CbamParams::create(4, cfg, rng);
  zero(p.fc1_weight), zero(p.fc1_bias), zero(p.fc2_weight), zero(p.fc2_bias), zero(p.spatial_kernel);
  const Tensor x = normal_tensor({2, 4, 5, 6}, 1.0, rng, false);
  const Tensor y = cbam_refine(x, p, cfg);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == 0.25 * x.at(i));
  CHECK_THROWS_AS(CbamParams::create(6, CbamConfig{4, 7}, rng), std::invalid_argument);
}

TEST_CASE("se and cbam gradients") {
  Rng rng(8);
  const Tensor x = normal_tensor({2, 4, 4, 3}, 1.0, rng, false);
  const Tensor proj = normal_tensor({2, 4, 4, 3}, 1.0, rng, false);
  SeConfig se_cfg{2};
  const SeParams se = SeParams::create(4, se_cfg, rng);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(se_refine(t, se, se_cfg), proj)); }, x) < 1e-4);
  CbamConfig cb_cfg{2, 3};
  const CbamParams cb = CbamParams::create(4, cb_cfg, rng);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(cbam_refine(t, cb, cb_cfg), proj)); }, x) < 1e-4);
}

TEST_CASE("effective reduction") {
  CHECK(effective_reduction(16, 4) == 4);
  CHECK(effective_reduction(6, 4) == 3);
  CHECK(effective_reduction(7, 4) == 1);
  CHECK(effective_reduction(2, 8) == 2);
}
