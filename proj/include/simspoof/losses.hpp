#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "simspoof/nn.hpp"
#include "simspoof/tensor.hpp"

namespace simspoof {

// Class indices used throughout: 0 = bona fide, 1 = spoof.
inline constexpr int kBonafide = 0;
inline constexpr int kSpoof = 1;

struct AamConfig {
  double scale = 32.0;
  double margin_bonafide = 0.2;
  double margin_spoof = 0.9;
  std::array<double, 2> class_weights{0.9, 0.1};
  // false: w_y multiplies the probability inside the log (adds -log w_y per
  // sample). true: w_y multiplies the per-sample log-loss.
  bool conventional_weighting = false;
  double cos_eps = 1e-7;

  void validate() const;
};

// Two class anchors as the columns of a [d x 2] matrix, no bias.
struct AamHead {
  Tensor weight;

  static AamHead create(std::size_t embed_dim, Rng& rng, ParameterSet* registry = nullptr,
                        const std::string& prefix = "aam");
};

// Sum over the batch of w_y * (-log softmax(logits)_y), divided by the sum of
// w_y over the batch.
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels, std::array<double, 2> weights);

// Cosine similarity between each L2-normalized embedding and each normalized
// anchor: [B x 2].
Tensor aam_cosines(const Tensor& embeddings, const AamHead& head);

// Weighted binary additive-angular-margin loss: per sample the target angle
// theta_y (from the clamped cosine) gets margin m_y, the logits are
// s*cos(theta_y + m_y) and s*cos(theta_other), averaged over the batch.
Tensor aam_loss(const Tensor& embeddings, std::span<const int> labels, const AamHead& head, const AamConfig& cfg);

// Mean of (score - target)^2 over a [|S| x |Q|] relation matrix. When
// expected_rows/cols are non-zero the matrix must have exactly that shape.
Tensor relation_mse_loss(const Tensor& scores, const Tensor& targets, std::size_t expected_rows = 0,
                         std::size_t expected_cols = 0);

// L_aam + lambda * L_mse.
Tensor total_loss(const Tensor& l_aam, const Tensor& l_mse, double lambda_balance);

}  // namespace simspoof
