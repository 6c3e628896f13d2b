#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "simspoof/nn.hpp"
#include "simspoof/tensor.hpp"

namespace simspoof {

// Record indices grouped by class: bona fide, and spoof by attack type.
struct CorpusIndex {
  std::vector<std::size_t> bonafide;
  std::map<std::string, std::vector<std::size_t>> by_attack;
};

struct EpisodeMember {
  std::size_t record = 0;
  std::string attack;  // empty for bona fide
  bool bonafide() const { return attack.empty(); }
  int label() const;   // 0 bona fide, 1 spoof
};

// Support: K spoof samples for each of N-1 kept attack types, then K bona
// fide. Query: K spoof samples of the held-out type, then K bona fide.
struct Episode {
  std::vector<EpisodeMember> support;
  std::vector<EpisodeMember> query;
  std::string held_out_type;
  std::size_t n_types = 0;
  std::size_t k_shot = 0;

  // Support followed by query, the row order used for embeddings.
  std::vector<EpisodeMember> members() const;
  std::vector<int> labels() const;
};

// Draws N attack types (all of them when the corpus has exactly N), picks the
// held-out type uniformly among them and samples without replacement.
// Throws naming the first type that has too few samples.
Episode sample_episode(const CorpusIndex& index, std::size_t n_types, std::size_t k_shot, Rng& rng);

enum class MatchGranularity { binary, per_type };

std::string to_string(MatchGranularity g);
MatchGranularity match_granularity_from_string(const std::string& s);

// 1 where the support and query member match, else 0: [|S| x |Q|].
Tensor relation_targets(const Episode& episode, MatchGranularity granularity);

struct PairBatch {
  Tensor pairs;    // [(|S| * |Q|) x 2d], row i*|Q| + j = [support_i, query_j]
  Tensor targets;  // [|S| x |Q|]
};

// `embeddings` holds one row per episode member in members() order.
PairBatch build_pairs(const Episode& episode, const Tensor& embeddings, MatchGranularity granularity);

// Two fully connected layers with SeLU between and a sigmoid on the scalar
// output.
struct RelationNet {
  Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;

  static RelationNet create(std::size_t embed_dim, std::size_t hidden, Rng& rng, ParameterSet* registry = nullptr,
                            const std::string& prefix = "relation");
  std::size_t input_dim() const { return fc1_weight.size(0); }
};

// Scores every pair and reshapes to [support_count x query_count].
Tensor relation_score(const Tensor& pairs, const RelationNet& net, std::size_t support_count,
                      std::size_t query_count);

}  // namespace simspoof
