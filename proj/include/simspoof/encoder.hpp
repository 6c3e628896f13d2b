#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "simspoof/attention.hpp"
#include "simspoof/nn.hpp"
#include "simspoof/ops.hpp"
#include "simspoof/tensor.hpp"

namespace simspoof {

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct SincConfig {
  std::size_t num_filters = 70;
  std::size_t kernel_len = 129;
  double sample_rate = 16000.0;
  double min_low_hz = 30.0;
  double min_band_hz = 10.0;
  void validate() const;
};

// Learnable band-pass filterbank. Each filter is the difference of two
// windowed sinc low-passes; cutoffs are reparameterized as
//   low  = min_low_hz + |low_param|
//   high = min(low + min_band_hz + |band_param|, sample_rate / 2)
// and initialized with band edges equally spaced on the mel scale.
class SincFilterbank {
 public:
  SincFilterbank() = default;
  SincFilterbank(const SincConfig& cfg, ParameterSet* registry, const std::string& prefix = "sinc");

  // [num_filters x kernel_len] impulse responses, differentiable in the cutoffs.
  Tensor filters() const;
  std::vector<double> low_hz() const;
  std::vector<double> high_hz() const;
  // Mel-scale midpoint of each band.
  std::vector<double> center_hz() const;
  const SincConfig& config() const { return cfg_; }

  Tensor low_param, band_param;

 private:
  SincConfig cfg_;
};

// wave [L] -> [1 x F x T0], or [B x L] -> [B x 1 x F x T0], with
// T0 = L - kernel_len + 1. The filter outputs become one F x T0 channel.
Tensor sinc_forward(const Tensor& wave, const SincFilterbank& fb);

enum class AttentionKind { none, se, cbam, simam };

std::string to_string(AttentionKind kind);
AttentionKind attention_kind_from_string(const std::string& s);

struct EncoderConfig {
  std::size_t segment_length = 64600;
  SincConfig sinc;
  std::size_t num_blocks = 6;
  std::vector<std::size_t> filters_per_block{32, 32, 64, 64, 64, 64};
  std::size_t gru_hidden = 128;
  std::size_t embed_dim = 128;
  AttentionKind attention = AttentionKind::simam;
  SimAmConfig simam;
  SeConfig se;
  CbamConfig cbam;

  // Throws std::invalid_argument naming the offending block when the feature
  // map collapses before the last pooling stage.
  void validate() const;
  // Shape arithmetic: [C, F, T] after the final block.
  Shape feature_shape() const;
  // [C, F, T] entering each block.
  std::vector<Shape> block_input_shapes() const;
};

struct BatchNorm {
  Tensor weight, bias;
  BatchNormState state;

  static BatchNorm create(std::size_t channels, ParameterSet* registry, const std::string& prefix);
  Tensor forward(const Tensor& x, bool training);
};

// Pre-activation residual block:
//   BN -> SeLU -> conv3x3 -> BN -> SeLU -> conv3x3 -> attention
//   + identity (1x1 projection when channels change) -> max-pool 2x2
struct ResidualBlock {
  BatchNorm bn1, bn2;
  Tensor conv1, conv2, projection;  // projection undefined when in == out
  AttentionKind attention = AttentionKind::none;
  SimAmConfig simam;
  SeConfig se;
  SeParams se_params;
  CbamConfig cbam;
  CbamParams cbam_params;

  static ResidualBlock create(std::size_t in_channels, std::size_t out_channels, std::size_t freq_bins,
                              const EncoderConfig& cfg, Rng& rng, ParameterSet* registry, const std::string& prefix);
  Tensor forward(const Tensor& x, bool training);
};

// Single-layer unidirectional GRU, gate order (reset, update, new):
//   r = sig(x Wir + bir + h Whr + bhr), z = sig(x Wiz + biz + h Whz + bhz)
//   n = tanh(x Win + bin + r * (h Whn + bhn)),  h' = (1 - z) * n + z * h
struct Gru {
  Tensor weight_ih, weight_hh, bias_ih, bias_hh;  // [I x 3H], [H x 3H], [3H], [3H]

  static Gru create(std::size_t input, std::size_t hidden, Rng& rng, ParameterSet* registry,
                    const std::string& prefix);
  std::size_t hidden() const { return weight_hh.size(0); }
  // seq [B x T x I] -> last hidden state [B x H], starting from zeros.
  Tensor forward(const Tensor& seq) const;
};

class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, Rng& rng, ParameterSet* registry);

  // wave [B x L] (or [L]) -> feature map [B x C x F x T].
  Tensor encode(const Tensor& wave, bool training);
  // fmap [B x C x F x T] -> embedding [B x embed_dim]: adaptive average pool
  // over F, GRU over T, fully connected projection of the last state.
  Tensor embed(const Tensor& fmap) const;
  Tensor forward(const Tensor& wave, bool training) { return embed(encode(wave, training)); }

  const EncoderConfig& config() const { return cfg_; }
  SincFilterbank& sinc() { return sinc_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }
  Gru& gru() { return gru_; }
  Tensor fc_weight, fc_bias;

 private:
  EncoderConfig cfg_;
  SincFilterbank sinc_;
  std::vector<ResidualBlock> blocks_;
  Gru gru_;
};

}  // namespace simspoof
