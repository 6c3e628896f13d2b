#include "simspoof/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "simspoof/ops.hpp"

namespace simspoof {

namespace {

void check_labels(std::span<const int> labels, std::size_t batch) {
  if (batch == 0 || labels.empty()) throw std::invalid_argument("loss over an empty batch");
  if (labels.size() != batch) {
    throw std::invalid_argument("label count " + std::to_string(labels.size()) + " does not match batch " +
                                std::to_string(batch));
  }
  for (int y : labels) {
    if (y != kBonafide && y != kSpoof) throw std::invalid_argument("labels must be 0 (bona fide) or 1 (spoof)");
  }
}

Tensor one_hot(std::span<const int> labels) {
  std::vector<double> v(labels.size() * 2, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) v[i * 2 + static_cast<std::size_t>(labels[i])] = 1.0;
  return Tensor::from({labels.size(), 2}, std::move(v));
}

Tensor l2_normalize_rows(const Tensor& x, const char* what) {
  Tensor sq = sum_axes(square(x), {1}, true);  // [B, 1]
  for (std::size_t i = 0; i < sq.numel(); ++i) {
    if (sq.at(i) == 0.0) throw std::invalid_argument(std::string("zero-norm ") + what + " at row " + std::to_string(i));
  }
  return div(x, sqrt(sq));
}

}  // namespace

void AamConfig::validate() const {
  if (!(scale > 0.0)) throw std::invalid_argument("AAM scale must be positive");
  if (margin_bonafide < -1.0 || margin_bonafide > 1.0 || margin_spoof < -1.0 || margin_spoof > 1.0) {
    throw std::invalid_argument("AAM margins must lie in [-1, 1]");
  }
  if (!(class_weights[0] > 0.0) || !(class_weights[1] > 0.0)) {
    throw std::invalid_argument("AAM class weights must be positive");
  }
  if (!(cos_eps > 0.0) || cos_eps >= 1.0) throw std::invalid_argument("AAM cosine clamp epsilon out of range");
}

AamHead AamHead::create(std::size_t embed_dim, Rng& rng, ParameterSet* registry, const std::string& prefix) {
  AamHead head{normal_tensor({embed_dim, 2}, 1.0 / std::sqrt(static_cast<double>(embed_dim)), rng)};
  if (registry) registry->add_parameter(prefix + ".weight", head.weight);
  return head;
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels, std::array<double, 2> weights) {
  if (logits.dim() != 2 || logits.size(1) != 2) {
    throw ShapeError("weighted_cross_entropy expects [B x 2] logits, got " + shape_str(logits.shape()));
  }
  check_labels(labels, logits.size(0));
  std::vector<double> w(labels.size() * 2, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double wi = weights[static_cast<std::size_t>(labels[i])];
    w[i * 2 + static_cast<std::size_t>(labels[i])] = wi;
    total += wi;
  }
  if (!(total > 0.0)) throw std::invalid_argument("class weights sum to zero over the batch");
  Tensor picked = mul(log_softmax(logits), Tensor::from({labels.size(), 2}, std::move(w)));
  return scale(sum(picked), -1.0 / total);
}

Tensor aam_cosines(const Tensor& embeddings, const AamHead& head) {
  if (embeddings.dim() != 2 || head.weight.dim() != 2 || head.weight.size(1) != 2 ||
      embeddings.size(1) != head.weight.size(0)) {
    throw ShapeError("aam: embeddings " + shape_str(embeddings.shape()) + " do not fit head " +
                     shape_str(head.weight.shape()));
  }
  Tensor x = l2_normalize_rows(embeddings, "embedding");
  Tensor wt = l2_normalize_rows(permute(head.weight, {1, 0}), "class anchor");  // [2, d]
  return matmul(x, permute(wt, {1, 0}));
}

Tensor aam_loss(const Tensor& embeddings, std::span<const int> labels, const AamHead& head, const AamConfig& cfg) {
  cfg.validate();
  if (embeddings.dim() != 2) throw ShapeError("aam expects [B x d] embeddings, got " + shape_str(embeddings.shape()));
  check_labels(labels, embeddings.size(0));
  const std::size_t batch = labels.size();

  Tensor cosines = aam_cosines(embeddings, head);
  Tensor theta = acos_clamped(cosines, -1.0 + cfg.cos_eps, 1.0 - cfg.cos_eps);
  std::vector<double> margins(batch * 2, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    margins[i * 2 + y] = y == kBonafide ? cfg.margin_bonafide : cfg.margin_spoof;
  }
  Tensor shifted = cos(clamp(add(theta, Tensor::from({batch, 2}, std::move(margins))), 0.0, std::numbers::pi));
  Tensor target = one_hot(labels);
  // Target column uses cos(theta + m); the other column keeps the raw cosine.
  Tensor logits = scale(add(mul(target, shifted), mul(add(neg(target), 1.0), cosines)), cfg.scale);
  Tensor nll = neg(sum_axes(mul(log_softmax(logits), target), {1}, false));  // [B]

  std::vector<double> w(batch);
  for (std::size_t i = 0; i < batch; ++i) w[i] = cfg.class_weights[static_cast<std::size_t>(labels[i])];
  Tensor per_sample;
  if (cfg.conventional_weighting) {
    per_sample = mul(nll, Tensor::from({batch}, std::move(w)));
  } else {
    for (auto& v : w) v = -std::log(v);
    per_sample = add(nll, Tensor::from({batch}, std::move(w)));
  }
  return mean(per_sample);
}

Tensor relation_mse_loss(const Tensor& scores, const Tensor& targets, std::size_t expected_rows,
                         std::size_t expected_cols) {
  if (scores.dim() != 2 || scores.shape() != targets.shape()) {
    throw ShapeError("relation scores " + shape_str(scores.shape()) + " and targets " + shape_str(targets.shape()) +
                     " must be matching matrices");
  }
  if ((expected_rows && scores.size(0) != expected_rows) || (expected_cols && scores.size(1) != expected_cols)) {
    throw ShapeError("relation score matrix " + shape_str(scores.shape()) + " does not match episode " +
                     std::to_string(expected_rows) + "x" + std::to_string(expected_cols));
  }
  return mean(square(sub(scores, targets)));
}

Tensor total_loss(const Tensor& l_aam, const Tensor& l_mse, double lambda_balance) {
  if (!(lambda_balance >= 0.0)) throw std::invalid_argument("loss balance lambda must be non-negative");
  return add(l_aam, scale(l_mse, lambda_balance));
}

}  // namespace simspoof
