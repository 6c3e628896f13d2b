#include <doctest.h>

#include <map>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "simspoof/metrics.hpp"

using namespace simspoof;

namespace {

ScoreSet scored(const std::vector<double>& bona, const std::map<std::string, std::vector<double>>& spoof) {
  ScoreSet s;
  for (std::size_t i = 0; i < bona.size(); ++i) s.push_back({"B" + std::to_string(i), kBonafideLabel, bona[i]});
  for (const auto& [a, v] : spoof) {
    for (std::size_t i = 0; i < v.size(); ++i) s.push_back({a + "_" + std::to_string(i), a, v[i]});
  }
  return s;
}

std::vector<double> quantized(std::size_t n, double shift, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 20);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng) / 8.0 + shift;
  return v;
}

}  // namespace

TEST_CASE("eer examples") {
  CHECK(compute_eer({0.9, 0.8}, {0.1, 0.2}).eer == 0.0);
  CHECK(compute_eer({0.1}, {0.9}).eer == 1.0);

  const auto golden = oracle::eer_sweep({0.2, 0.6, 0.8}, {0.1, 0.3, 0.5});
  const EerResult r = compute_eer({0.2, 0.6, 0.8}, {0.1, 0.3, 0.5});
  CHECK(r.eer == golden.eer);
  CHECK(r.threshold == golden.threshold);
  // Frozen from the sweep oracle.
  CHECK(r.eer == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.threshold == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS(compute_eer(std::vector<double>{}, {0.1}));
  CHECK_THROWS(compute_eer({0.1}, std::vector<double>{}));
}

TEST_CASE("eer equals the sweep oracle on random sets with ties") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 300; ++rep) {
    const auto b = quantized(1 + rng() % 60, 0.4, rng), s = quantized(1 + rng() % 60, 0.0, rng);
    const auto o = oracle::eer_sweep(b, s);
    const EerResult r = compute_eer(b, s);
    CHECK(r.eer == o.eer);
    CHECK(r.threshold == o.threshold);
    CHECK(r.eer >= 0.0);
    CHECK(r.eer <= 1.0);
    // Swapping the classes: still the oracle's answer on the swapped sets.
    CHECK(compute_eer(s, b).eer == oracle::eer_sweep(s, b).eer);
  }
}

TEST_CASE("t-dcf weights and oracle agreement") {
  const TdcfParams p;
  CHECK(p.c1() == doctest::Approx(0.95 * 0.99 * (1 - 0.01) - 0.95 * 0.01 * 10 * 0.01));
  CHECK(p.c2() == doctest::Approx(10 * 0.05 * 0.95));
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const auto b = quantized(1 + rng() % 80, 0.3, rng), s = quantized(1 + rng() % 80, 0.0, rng);
    CHECK(std::abs(compute_min_tdcf(b, s, p).min_tdcf - oracle::min_tdcf_sweep(b, s, {})) < 1e-12);
  }
  CHECK(compute_min_tdcf({0.9, 0.8}, {0.1, 0.2}, p).min_tdcf == 0.0);
}

TEST_CASE("random scores give a min t-dcf just under 1") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> b(4000), s(4000);
  for (auto& x : b) x = d(rng);
  for (auto& x : s) x = d(rng);
  const double c = compute_min_tdcf(b, s, TdcfParams{}).min_tdcf;
  CHECK(c <= 1.0);
  CHECK(c > 0.9);
}

TEST_CASE("t-dcf rejects a degenerate normalisation") {
  TdcfParams p;
  p.p_miss_spoof_asv = 1.0;  // c2 = 0
  CHECK_THROWS_AS(p.validate(), std::domain_error);
  CHECK_THROWS(compute_min_tdcf({0.5}, {0.1}, p));
}

TEST_CASE("breakdown rows") {
  const std::vector<double> bona{0.6, 0.7, 0.8, 0.9};
  const BreakdownReport one = breakdown_report(scored(bona, {{"A07", {0.1, 0.65, 0.3}}}));
  REQUIRE(one.per_attack.size() == 1);
  CHECK(one.per_attack[0].eer == one.pooled_eer);

  const BreakdownReport two = breakdown_report(scored(bona, {{"A07", {0.1, 0.2, 0.3}}, {"A08", {1.0, 1.1, 1.2}}}));
  REQUIRE(two.per_attack.size() == 2);
  CHECK(two.per_attack[0].eer == 0.0);
  CHECK(two.per_attack[1].eer == 1.0);
  CHECK(two.pooled_eer > 0.0);
  CHECK(two.pooled_eer < 1.0);
  CHECK(two.pooled_eer == oracle::eer_sweep(bona, {0.1, 0.2, 0.3, 1.0, 1.1, 1.2}).eer);
}

TEST_CASE("report layout") {
  const ScoreSet s = scored({0.6, 0.7}, {{"A08", {0.1}}, {"A07", {0.2, 0.9}}});
  const BreakdownReport r = breakdown_report(s, {}, {"A07", "A08", "A09"}, "sys");
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("A09") != std::string::npos);
  const std::string table = r.text_table();
  const std::string header = table.substr(0, table.find('\n'));
  CHECK(header.find("A07") < header.find("A08"));
  CHECK(header.find("A08") < header.find("min t-DCF"));
  CHECK(header.find("min t-DCF") < header.find("pooled EER"));
  CHECK(header.find("A09") == std::string::npos);
  const std::string csv = r.csv();
  CHECK(csv.substr(0, csv.find('\n')) == "system,A07,A08,min_tdcf,pooled_eer");
  CHECK(csv.find("sys,") != std::string::npos);
}

TEST_CASE("score files round trip and report bad lines") {
  const ScoreSet s = scored({0.1234567890123, -2.5}, {{"A01", {1e-300, 3.0}}});
  std::stringstream io;
  write_scores(io, s);
  const ScoreSet back = read_scores(io);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back[i].trial_id == s[i].trial_id);
    CHECK(back[i].attack == s[i].attack);
    CHECK(back[i].score == s[i].score);
  }
  std::istringstream bad("T1 bonafide 0.5\nT2 A01\n");
  try {
    read_scores(bad);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream dup("T1 bonafide 0.5\nT1 A01 0.2\n");
  CHECK_THROWS(read_scores(dup));
}
