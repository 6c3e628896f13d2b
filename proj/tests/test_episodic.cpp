#include <doctest.h>

#include <algorithm>
#include <set>

#include "simspoof/episodic.hpp"
#include "simspoof/grad_check.hpp"
#include "simspoof/ops.hpp"

using namespace simspoof;

namespace {

CorpusIndex make_index(std::size_t types, std::size_t per_type, std::size_t bona) {
  CorpusIndex idx;
  for (std::size_t i = 0; i < bona; ++i) idx.bonafide.push_back(i);
  for (std::size_t t = 0; t < types; ++t) {
    const std::string id = "A" + std::string(t + 1 < 10 ? "0" : "") + std::to_string(t + 1);
    for (std::size_t i = 0; i < per_type; ++i) idx.by_attack[id].push_back(1000 + t * 100 + i);
  }
  return idx;
}

}  // namespace

TEST_CASE("episode sizes") {
  Rng rng(1);
  const CorpusIndex idx = make_index(6, 5, 10);
  const Episode ep = sample_episode(idx, 6, 2, rng);
  CHECK(ep.support.size() == 12);
  CHECK(ep.query.size() == 4);
  const Episode small = sample_episode(idx, 2, 1, rng);
  CHECK(small.support.size() == 2);
  CHECK(small.query.size() == 2);
  CHECK(small.support[0].attack != small.held_out_type);
  CHECK(small.support[1].bonafide());
  CHECK(small.query[0].attack == small.held_out_type);
  CHECK(small.query[1].bonafide());
}

TEST_CASE("episode invariants over many draws") {
  Rng rng(2);
  const CorpusIndex idx = make_index(8, 4, 12);
  for (std::size_t n = 2; n <= 6; ++n) {
    for (std::size_t k = 1; k <= 3; ++k) {
      for (int rep = 0; rep < 50; ++rep) {
        const Episode ep = sample_episode(idx, n, k, rng);
        std::set<std::size_t> rec;
        std::set<std::string> kept;
        for (const auto& m : ep.members()) rec.insert(m.record);
        for (const auto& m : ep.support) {
          CHECK(m.attack != ep.held_out_type);
          if (!m.bonafide()) kept.insert(m.attack);
        }
        CHECK(rec.size() == n * k + 2 * k);
        CHECK(kept.size() == n - 1);
        for (const auto& m : ep.members()) {
          if (m.bonafide()) {
            CHECK(m.record < 12);
          } else {
            const auto& pool = idx.by_attack.at(m.attack);
            CHECK(std::find(pool.begin(), pool.end(), m.record) != pool.end());
          }
        }
      }
    }
  }
}

TEST_CASE("insufficient samples name the type") {
  Rng rng(3);
  CorpusIndex idx = make_index(3, 2, 10);
  idx.by_attack["A02"].pop_back();
  try {
    sample_episode(idx, 3, 2, rng);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("A02") != std::string::npos);
  }
  CHECK_THROWS(sample_episode(make_index(3, 2, 3), 3, 2, rng));  // too few bona fide
  CHECK_THROWS(sample_episode(make_index(3, 2, 10), 4, 1, rng)); // too few types
}

TEST_CASE("same seed gives the same episode stream") {
  const CorpusIndex idx = make_index(6, 5, 10);
  Rng a(9), b(9);
  for (int i = 0; i < 20; ++i) {
    const Episode x = sample_episode(idx, 6, 2, a), y = sample_episode(idx, 6, 2, b);
    CHECK(x.held_out_type == y.held_out_type);
    for (std::size_t j = 0; j < x.members().size(); ++j) CHECK(x.members()[j].record == y.members()[j].record);
  }
}

TEST_CASE("pair construction") {
  Rng rng(4);
  const CorpusIndex idx = make_index(6, 5, 10);
  const Episode ep = sample_episode(idx, 6, 2, rng);
  const std::size_t s = ep.support.size(), q = ep.query.size();
  const Tensor emb = normal_tensor({s + q, 3}, 1.0, rng, false);
  const PairBatch pb = build_pairs(ep, emb, MatchGranularity::binary);
  REQUIRE(pb.pairs.shape() == Shape{48, 6});
  CHECK(pb.targets.shape() == Shape{12, 4});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(pb.pairs.at((i * q + j) * 6 + c) == emb.at(i * 3 + c));
        CHECK(pb.pairs.at((i * q + j) * 6 + 3 + c) == emb.at((s + j) * 3 + c));
      }
    }
  }
  const Episode small = sample_episode(idx, 2, 1, rng);
  CHECK(build_pairs(small, Tensor::zeros({4, 3}), MatchGranularity::binary).pairs.size(0) == 4);
  CHECK_THROWS(build_pairs(small, Tensor::zeros({5, 3}), MatchGranularity::binary));
}

TEST_CASE("match targets by exhaustive enumeration") {
  Rng rng(5);
  const CorpusIndex idx = make_index(6, 5, 10);
  for (int rep = 0; rep < 10; ++rep) {
    const Episode ep = sample_episode(idx, 1 + 1 + static_cast<std::size_t>(rep % 5), 1 + rep % 3, rng);
    const Tensor bin = relation_targets(ep, MatchGranularity::binary);
    const Tensor typ = relation_targets(ep, MatchGranularity::per_type);
    double bin_count = 0.0, typ_count = 0.0;
    for (std::size_t i = 0; i < ep.support.size(); ++i) {
      for (std::size_t j = 0; j < ep.query.size(); ++j) {
        const auto& a = ep.support[i];
        const auto& b = ep.query[j];
        const double eb = a.label() == b.label() ? 1.0 : 0.0;
        const double et = a.attack == b.attack ? 1.0 : 0.0;
        CHECK(bin.at(i * ep.query.size() + j) == eb);
        CHECK(typ.at(i * ep.query.size() + j) == et);
        bin_count += eb;
        typ_count += et;
      }
    }
    // Binary: every spoof-spoof and bona-bona pair.
    const double n = static_cast<double>(ep.n_types), k = static_cast<double>(ep.k_shot);
    CHECK(bin_count == (n - 1) * k * k + k * k);
    // Per type: only bona-bona pairs, since the held-out type is absent from support.
    CHECK(typ_count == k * k);
  }
  const Episode two = sample_episode(idx, 2, 1, rng);
  const Tensor two_targets = relation_targets(two, MatchGranularity::binary);
  double matched = 0.0;
  for (double v : two_targets.data()) matched += v;
  CHECK(matched == 2.0);
}

TEST_CASE("relation network") {
  Rng rng(6);
  RelationNet net = RelationNet::create(3, 5, rng);
  for (Tensor* t : {&net.fc1_weight, &net.fc1_bias, &net.fc2_weight, &net.fc2_bias}) {
    for (auto& v : t->mutable_data()) v = 0.0;
  }
  const Tensor s = relation_score(normal_tensor({6, 6}, 1.0, rng, false), net, 3, 2);
  CHECK(s.shape() == Shape{3, 2});
  for (double v : s.data()) CHECK(v == 0.5);
  CHECK_THROWS(relation_score(Tensor::zeros({6, 4}), net, 3, 2));
  CHECK_THROWS(relation_score(Tensor::zeros({6, 6}), net, 2, 2));

  const RelationNet live = RelationNet::create(3, 5, rng);
  const Tensor pairs = normal_tensor({6, 6}, 1.0, rng, false);
  const Tensor proj = normal_tensor({3, 2}, 1.0, rng, false);
  CHECK(grad_check([&](const Tensor& p) { return sum(mul(relation_score(p, live, 3, 2), proj)); }, pairs) < 1e-4);
}

TEST_CASE("match granularity names") {
  CHECK(match_granularity_from_string(to_string(MatchGranularity::per_type)) == MatchGranularity::per_type);
  CHECK_THROWS(match_granularity_from_string("fuzzy"));
}
