#include "simspoof/episodic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "simspoof/losses.hpp"
#include "simspoof/ops.hpp"

namespace simspoof {

namespace {

// Uniform index in [0, n) from the raw engine output, so the episode stream
// does not depend on the standard library's distribution implementation.
std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

// First `count` entries of a partial Fisher-Yates shuffle.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(count);
  return pool;
}

}  // namespace

int EpisodeMember::label() const { return bonafide() ? kBonafide : kSpoof; }

std::vector<EpisodeMember> Episode::members() const {
  std::vector<EpisodeMember> all = support;
  all.insert(all.end(), query.begin(), query.end());
  return all;
}

std::vector<int> Episode::labels() const {
  std::vector<int> out;
  for (const auto& m : members()) out.push_back(m.label());
  return out;
}

Episode sample_episode(const CorpusIndex& index, std::size_t n_types, std::size_t k_shot, Rng& rng) {
  if (n_types < 2) throw std::invalid_argument("an episode needs at least two attack types");
  if (k_shot == 0) throw std::invalid_argument("an episode needs K >= 1");
  if (index.bonafide.size() < 2 * k_shot) {
    throw std::invalid_argument("type 'bonafide' has " + std::to_string(index.bonafide.size()) +
                                " samples, episode needs " + std::to_string(2 * k_shot));
  }
  std::vector<std::string> eligible;
  for (const auto& [type, recs] : index.by_attack) {
    if (recs.size() >= k_shot) eligible.push_back(type);
  }
  if (eligible.size() < n_types) {
    for (const auto& [type, recs] : index.by_attack) {
      if (recs.size() < k_shot) {
        throw std::invalid_argument("attack type '" + type + "' has " + std::to_string(recs.size()) +
                                    " samples, episode needs " + std::to_string(k_shot));
      }
    }
    throw std::invalid_argument("corpus has " + std::to_string(index.by_attack.size()) + " attack types, episode needs " +
                                std::to_string(n_types));
  }
  std::vector<std::size_t> type_ids(eligible.size());
  for (std::size_t i = 0; i < type_ids.size(); ++i) type_ids[i] = i;
  auto chosen = draw(type_ids, n_types, rng);
  std::sort(chosen.begin(), chosen.end());
  const std::size_t held = chosen[uniform_index(rng, chosen.size())];

  Episode ep;
  ep.n_types = n_types;
  ep.k_shot = k_shot;
  ep.held_out_type = eligible[held];
  for (auto t : chosen) {
    const auto& type = eligible[t];
    for (auto r : draw(index.by_attack.at(type), k_shot, rng)) {
      (t == held ? ep.query : ep.support).push_back({r, type});
    }
  }
  const auto genuine = draw(index.bonafide, 2 * k_shot, rng);
  for (std::size_t i = 0; i < k_shot; ++i) ep.support.push_back({genuine[i], ""});
  for (std::size_t i = k_shot; i < 2 * k_shot; ++i) ep.query.push_back({genuine[i], ""});
  return ep;
}

std::string to_string(MatchGranularity g) { return g == MatchGranularity::binary ? "binary" : "per_type"; }

MatchGranularity match_granularity_from_string(const std::string& s) {
  if (s == "binary") return MatchGranularity::binary;
  if (s == "per_type") return MatchGranularity::per_type;
  throw std::invalid_argument("unknown match granularity '" + s + "' (expected binary|per_type)");
}

Tensor relation_targets(const Episode& episode, MatchGranularity granularity) {
  const std::size_t rows = episode.support.size(), cols = episode.query.size();
  std::vector<double> v(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto& s = episode.support[i];
      const auto& q = episode.query[j];
      const bool match = granularity == MatchGranularity::binary ? s.label() == q.label() : s.attack == q.attack;
      v[i * cols + j] = match ? 1.0 : 0.0;
    }
  }
  return Tensor::from({rows, cols}, std::move(v));
}

PairBatch build_pairs(const Episode& episode, const Tensor& embeddings, MatchGranularity granularity) {
  const std::size_t ns = episode.support.size(), nq = episode.query.size();
  if (embeddings.dim() != 2 || embeddings.size(0) != ns + nq) {
    throw ShapeError("build_pairs needs " + std::to_string(ns + nq) + " embedding rows, got " +
                     shape_str(embeddings.shape()));
  }
  std::vector<std::size_t> left, right;
  left.reserve(ns * nq);
  right.reserve(ns * nq);
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = 0; j < nq; ++j) {
      left.push_back(i);
      right.push_back(ns + j);
    }
  }
  Tensor pairs = concat({index_select(embeddings, left), index_select(embeddings, right)}, 1);
  return {pairs, relation_targets(episode, granularity)};
}

RelationNet RelationNet::create(std::size_t embed_dim, std::size_t hidden, Rng& rng, ParameterSet* registry,
                                const std::string& prefix) {
  const double b1 = 1.0 / std::sqrt(static_cast<double>(2 * embed_dim));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  RelationNet net{uniform_tensor({2 * embed_dim, hidden}, b1, rng), uniform_tensor({hidden}, b1, rng),
                  uniform_tensor({hidden, 1}, b2, rng), uniform_tensor({1}, b2, rng)};
  if (registry) {
    registry->add_parameter(prefix + ".fc1.weight", net.fc1_weight);
    registry->add_parameter(prefix + ".fc1.bias", net.fc1_bias);
    registry->add_parameter(prefix + ".fc2.weight", net.fc2_weight);
    registry->add_parameter(prefix + ".fc2.bias", net.fc2_bias);
  }
  return net;
}

Tensor relation_score(const Tensor& pairs, const RelationNet& net, std::size_t support_count,
                      std::size_t query_count) {
  if (pairs.dim() != 2 || pairs.size(1) != net.input_dim()) {
    throw ShapeError("relation pairs " + shape_str(pairs.shape()) + " do not match input width " +
                     std::to_string(net.input_dim()));
  }
  if (pairs.size(0) != support_count * query_count) {
    throw ShapeError("relation pairs " + shape_str(pairs.shape()) + " are not " + std::to_string(support_count) +
                     "x" + std::to_string(query_count));
  }
  Tensor h = selu(linear(pairs, net.fc1_weight, net.fc1_bias));
  Tensor r = sigmoid(linear(h, net.fc2_weight, net.fc2_bias));  // [P, 1]
  return reshape(r, {support_count, query_count});
}

}  // namespace simspoof
