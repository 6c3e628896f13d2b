#include "simspoof/encoder.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace simspoof {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void SincConfig::validate() const {
  if (num_filters == 0) throw std::invalid_argument("sinc filter count must be positive");
  if (kernel_len == 0 || kernel_len % 2 == 0) throw std::invalid_argument("sinc kernel length must be odd");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (!(min_low_hz > 0.0) || !(min_band_hz > 0.0)) {
    throw std::invalid_argument("sinc minimum cutoff and bandwidth must be positive");
  }
  if (2.0 * (min_low_hz + min_band_hz) >= sample_rate / 2.0) throw std::invalid_argument("sinc minimum band exceeds Nyquist");
}

SincFilterbank::SincFilterbank(const SincConfig& cfg, ParameterSet* registry, const std::string& prefix)
    : cfg_(cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_filters;
  // Edges are offsets above min_low_hz; the top band ends min_band_hz below
  // Nyquist so no filter starts on the |.| or Nyquist-clamp kinks.
  const double mel_lo = hz_to_mel(cfg.min_low_hz);
  const double mel_hi = hz_to_mel(cfg.sample_rate / 2.0 - cfg.min_low_hz - 2.0 * cfg.min_band_hz);
  std::vector<double> edges(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n));
  }
  std::vector<double> low(n), band(n);
  for (std::size_t i = 0; i < n; ++i) {
    low[i] = edges[i];
    band[i] = edges[i + 1] - edges[i];
  }
  low_param = Tensor::from({n}, std::move(low), true);
  band_param = Tensor::from({n}, std::move(band), true);
  if (registry) {
    registry->add_parameter(prefix + ".low_hz", low_param);
    registry->add_parameter(prefix + ".band_hz", band_param);
  }
}

std::vector<double> SincFilterbank::low_hz() const {
  std::vector<double> out;
  for (double a : low_param.data()) out.push_back(cfg_.min_low_hz + std::abs(a));
  return out;
}

std::vector<double> SincFilterbank::high_hz() const {
  const auto lo = low_hz();
  const auto band = band_param.data();
  std::vector<double> out(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    out[i] = std::min(lo[i] + cfg_.min_band_hz + std::abs(band[i]), cfg_.sample_rate / 2.0);
  }
  return out;
}

std::vector<double> SincFilterbank::center_hz() const {
  const auto lo = low_hz();
  const auto hi = high_hz();
  std::vector<double> out(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) out[i] = mel_to_hz(0.5 * (hz_to_mel(lo[i]) + hz_to_mel(hi[i])));
  return out;
}

Tensor SincFilterbank::filters() const {
  const std::size_t n = cfg_.num_filters, k = cfg_.kernel_len;
  const double sr = cfg_.sample_rate, nyquist = sr / 2.0;
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  const auto a = low_param.data();
  const auto b = band_param.data();
  std::vector<double> window(k);
  for (std::size_t j = 0; j < k; ++j) {
    window[j] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(k - 1));
  }
  // Normalized cutoffs (cycles per sample) and whether the Nyquist clamp is active.
  std::vector<double> f_lo(n), f_hi(n);
  std::vector<bool> clamped(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = cfg_.min_low_hz + std::abs(a[i]);
    const double hi = lo + cfg_.min_band_hz + std::abs(b[i]);
    clamped[i] = hi >= nyquist;
    f_lo[i] = lo / sr;
    f_hi[i] = std::min(hi, nyquist) / sr;
  }
  // 2 f sinc(2 f m) written as sin(2 pi f m) / (pi m); equals 2 f at m = 0.
  auto lowpass = [](double f, double m) {
    return m == 0.0 ? 2.0 * f : std::sin(2.0 * std::numbers::pi * f * m) / (std::numbers::pi * m);
  };
  std::vector<double> h(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto m = static_cast<double>(static_cast<std::ptrdiff_t>(j) - half);
      h[i * k + j] = (lowpass(f_hi[i], m) - lowpass(f_lo[i], m)) * window[j];
    }
  }
  return Tensor::make_result(
      {n, k}, std::move(h), {low_param, band_param}, "sinc_filters",
      [=, window = std::move(window), clamped = std::move(clamped)](TensorImpl& o) {
        auto ga = o.parent_grad(0);
        auto gb = o.parent_grad(1);
        const auto& av = o.parents[0]->value;
        const auto& bv = o.parents[1]->value;
        for (std::size_t i = 0; i < n; ++i) {
          // d lowpass / d f = 2 cos(2 pi f m)
          double d_lo = 0.0, d_hi = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            const auto m = static_cast<double>(static_cast<std::ptrdiff_t>(j) - half);
            const double g = o.grad[i * k + j] * window[j];
            d_hi += g * 2.0 * std::cos(2.0 * std::numbers::pi * f_hi[i] * m);
            d_lo -= g * 2.0 * std::cos(2.0 * std::numbers::pi * f_lo[i] * m);
          }
          d_lo /= sr;
          d_hi = clamped[i] ? 0.0 : d_hi / sr;
          const double sa = av[i] >= 0.0 ? 1.0 : -1.0;
          const double sb = bv[i] >= 0.0 ? 1.0 : -1.0;
          if (!ga.empty()) ga[i] += (d_lo + d_hi) * sa;
          if (!gb.empty()) gb[i] += d_hi * sb;
        }
      });
}

Tensor sinc_forward(const Tensor& wave, const SincFilterbank& fb) {
  if (wave.dim() != 1 && wave.dim() != 2) {
    throw ShapeError("sinc_forward expects [L] or [B x L], got " + shape_str(wave.shape()));
  }
  const bool batched = wave.dim() == 2;
  const std::size_t batch = batched ? wave.size(0) : 1;
  const std::size_t len = wave.size(wave.dim() - 1);
  const std::size_t k = fb.config().kernel_len, n = fb.config().num_filters;
  if (len < k) {
    throw ShapeError("waveform of " + std::to_string(len) + " samples is shorter than the sinc kernel (" +
                     std::to_string(k) + ")");
  }
  Tensor x = reshape(wave, {batch, 1, 1, len});
  Tensor kernels = reshape(fb.filters(), {n, 1, 1, k});
  Tensor y = conv2d(x, kernels);  // [B, F, 1, T0]
  const std::size_t t0 = len - k + 1;
  return batched ? reshape(y, {batch, 1, n, t0}) : reshape(y, {1, n, t0});
}

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::none: return "none";
    case AttentionKind::se: return "se";
    case AttentionKind::cbam: return "cbam";
    case AttentionKind::simam: return "simam";
  }
  return "none";
}

AttentionKind attention_kind_from_string(const std::string& s) {
  if (s == "none") return AttentionKind::none;
  if (s == "se") return AttentionKind::se;
  if (s == "cbam") return AttentionKind::cbam;
  if (s == "simam") return AttentionKind::simam;
  throw std::invalid_argument("unknown attention kind '" + s + "' (expected none|se|cbam|simam)");
}

std::vector<Shape> EncoderConfig::block_input_shapes() const {
  if (filters_per_block.size() != num_blocks) {
    throw std::invalid_argument("filters_per_block has " + std::to_string(filters_per_block.size()) +
                                " entries but num_blocks is " + std::to_string(num_blocks));
  }
  if (segment_length < sinc.kernel_len) {
    throw std::invalid_argument("segment length " + std::to_string(segment_length) + " shorter than sinc kernel");
  }
  std::vector<Shape> shapes;
  std::size_t c = 1, f = sinc.num_filters, t = segment_length - sinc.kernel_len + 1;
  for (std::size_t i = 0; i < num_blocks; ++i) {
    if (f < 2 || t < 2) {
      throw std::invalid_argument("feature map collapses at residual block " + std::to_string(i) + ": input " +
                                  std::to_string(f) + "x" + std::to_string(t) + " cannot be pooled 2x2");
    }
    shapes.push_back({c, f, t});
    c = filters_per_block[i];
    f /= 2;
    t /= 2;
  }
  return shapes;
}

Shape EncoderConfig::feature_shape() const {
  const auto shapes = block_input_shapes();
  if (shapes.empty()) return {1, sinc.num_filters, segment_length - sinc.kernel_len + 1};
  const auto& last = shapes.back();
  return {filters_per_block.back(), last[1] / 2, last[2] / 2};
}

void EncoderConfig::validate() const {
  sinc.validate();
  if (num_blocks == 0) throw std::invalid_argument("encoder needs at least one residual block");
  if (gru_hidden == 0 || embed_dim == 0) throw std::invalid_argument("GRU hidden size and embed_dim must be positive");
  for (auto f : filters_per_block) {
    if (f == 0) throw std::invalid_argument("block filter counts must be positive");
  }
  if (attention == AttentionKind::simam) simam.validate();
  if (attention == AttentionKind::cbam && cbam.kernel_size % 2 == 0) {
    throw std::invalid_argument("CBAM kernel size must be odd");
  }
  const auto shapes = block_input_shapes();
  if (attention == AttentionKind::simam) {
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (shapes[i][1] * shapes[i][2] < 2) {
        throw std::invalid_argument("SimAM needs F*T >= 2 at block " + std::to_string(i));
      }
    }
  }
}

BatchNorm BatchNorm::create(std::size_t channels, ParameterSet* registry, const std::string& prefix) {
  BatchNorm bn{Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true),
               BatchNormState{Tensor::zeros({channels}), Tensor::full({channels}, 1.0)}};
  if (registry) {
    registry->add_parameter(prefix + ".weight", bn.weight);
    registry->add_parameter(prefix + ".bias", bn.bias);
    registry->add_buffer(prefix + ".running_mean", bn.state.running_mean);
    registry->add_buffer(prefix + ".running_var", bn.state.running_var);
  }
  return bn;
}

Tensor BatchNorm::forward(const Tensor& x, bool training) { return batch_norm(x, weight, bias, state, training); }

namespace {
Tensor conv_weight(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  return uniform_tensor({out, in, k, k}, std::sqrt(3.0 / static_cast<double>(in * k * k)), rng);
}
}  // namespace

ResidualBlock ResidualBlock::create(std::size_t in_channels, std::size_t out_channels, std::size_t freq_bins,
                                    const EncoderConfig& cfg, Rng& rng, ParameterSet* registry,
                                    const std::string& prefix) {
  ResidualBlock blk;
  blk.bn1 = BatchNorm::create(in_channels, registry, prefix + ".bn1");
  blk.conv1 = conv_weight(out_channels, in_channels, 3, rng);
  blk.bn2 = BatchNorm::create(out_channels, registry, prefix + ".bn2");
  blk.conv2 = conv_weight(out_channels, out_channels, 3, rng);
  if (registry) {
    registry->add_parameter(prefix + ".conv1.weight", blk.conv1);
    registry->add_parameter(prefix + ".conv2.weight", blk.conv2);
  }
  if (in_channels != out_channels) {
    blk.projection = conv_weight(out_channels, in_channels, 1, rng);
    if (registry) registry->add_parameter(prefix + ".proj.weight", blk.projection);
  }
  blk.attention = cfg.attention;
  blk.simam = cfg.simam;
  if (cfg.attention == AttentionKind::se) {
    blk.se.reduction = effective_reduction(freq_bins, cfg.se.reduction);
    blk.se_params = SeParams::create(freq_bins, blk.se, rng, registry, prefix + ".se");
  } else if (cfg.attention == AttentionKind::cbam) {
    blk.cbam = cfg.cbam;
    blk.cbam.reduction = effective_reduction(out_channels, cfg.cbam.reduction);
    blk.cbam_params = CbamParams::create(out_channels, blk.cbam, rng, registry, prefix + ".cbam");
  }
  return blk;
}

Tensor ResidualBlock::forward(const Tensor& x, bool training) {
  Tensor h = conv2d(selu(bn1.forward(x, training)), conv1, {1, 1}, {1, 1});
  h = conv2d(selu(bn2.forward(h, training)), conv2, {1, 1}, {1, 1});
  switch (attention) {
    case AttentionKind::simam: h = simam_refine(h, simam); break;
    case AttentionKind::se: h = se_refine(h, se_params, se); break;
    case AttentionKind::cbam: h = cbam_refine(h, cbam_params, cbam); break;
    case AttentionKind::none: break;
  }
  Tensor identity = projection.defined() ? conv2d(x, projection) : x;
  return max_pool2d(add(h, identity), {2, 2}, {2, 2});
}

Gru Gru::create(std::size_t input, std::size_t hidden, Rng& rng, ParameterSet* registry, const std::string& prefix) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  Gru g{uniform_tensor({input, 3 * hidden}, bound, rng), uniform_tensor({hidden, 3 * hidden}, bound, rng),
        uniform_tensor({3 * hidden}, bound, rng), uniform_tensor({3 * hidden}, bound, rng)};
  if (registry) {
    registry->add_parameter(prefix + ".weight_ih", g.weight_ih);
    registry->add_parameter(prefix + ".weight_hh", g.weight_hh);
    registry->add_parameter(prefix + ".bias_ih", g.bias_ih);
    registry->add_parameter(prefix + ".bias_hh", g.bias_hh);
  }
  return g;
}

Tensor Gru::forward(const Tensor& seq) const {
  if (seq.dim() != 3) throw ShapeError("GRU expects [B x T x I], got " + shape_str(seq.shape()));
  const std::size_t batch = seq.size(0), steps = seq.size(1), input = seq.size(2), h = hidden();
  if (steps == 0) throw ShapeError("GRU input has no time steps");
  if (input != weight_ih.size(0)) {
    throw ShapeError("GRU input width " + std::to_string(input) + " does not match weights " +
                     shape_str(weight_ih.shape()));
  }
  // Input projections for all steps at once: [B*T, 3H] -> [B, T, 3H].
  Tensor gates_x = reshape(linear(reshape(seq, {batch * steps, input}), weight_ih, bias_ih), {batch, steps, 3 * h});
  Tensor state = Tensor::zeros({batch, h});
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor gx = reshape(slice(gates_x, 1, t, 1), {batch, 3 * h});
    Tensor gh = linear(state, weight_hh, bias_hh);
    Tensor r = sigmoid(add(slice(gx, 1, 0, h), slice(gh, 1, 0, h)));
    Tensor z = sigmoid(add(slice(gx, 1, h, h), slice(gh, 1, h, h)));
    Tensor n = tanh(add(slice(gx, 1, 2 * h, h), mul(r, slice(gh, 1, 2 * h, h))));
    state = add(n, mul(z, sub(state, n)));
  }
  return state;
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng, ParameterSet* registry) : cfg_(cfg) {
  cfg.validate();
  sinc_ = SincFilterbank(cfg.sinc, registry, "sinc");
  const auto shapes = cfg.block_input_shapes();
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    blocks_.push_back(ResidualBlock::create(shapes[i][0], cfg.filters_per_block[i], shapes[i][1], cfg, rng, registry,
                                            "block" + std::to_string(i)));
  }
  gru_ = Gru::create(cfg.filters_per_block.back(), cfg.gru_hidden, rng, registry, "gru");
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.gru_hidden));
  fc_weight = uniform_tensor({cfg.gru_hidden, cfg.embed_dim}, bound, rng);
  fc_bias = uniform_tensor({cfg.embed_dim}, bound, rng);
  if (registry) {
    registry->add_parameter("fc.weight", fc_weight);
    registry->add_parameter("fc.bias", fc_bias);
  }
}

Tensor Encoder::encode(const Tensor& wave, bool training) {
  Tensor w = wave.dim() == 1 ? reshape(wave, {1, wave.size(0)}) : wave;
  if (w.dim() != 2 || w.size(1) != cfg_.segment_length) {
    throw ShapeError("encoder expects segments of " + std::to_string(cfg_.segment_length) + " samples, got " +
                     shape_str(wave.shape()));
  }
  Tensor h = sinc_forward(w, sinc_);
  for (auto& blk : blocks_) h = blk.forward(h, training);
  return h;
}

Tensor Encoder::embed(const Tensor& fmap) const {
  if (fmap.dim() != 4) throw ShapeError("embed expects [B x C x F x T], got " + shape_str(fmap.shape()));
  const std::size_t batch = fmap.size(0), channels = fmap.size(1), steps = fmap.size(3);
  Tensor pooled = adaptive_avg_pool2d(fmap, 1, steps);                            // [B, C, 1, T]
  Tensor seq = permute(reshape(pooled, {batch, channels, steps}), {0, 2, 1});  // [B, T, C]
  return linear(gru_.forward(seq), fc_weight, fc_bias);
}

}  // namespace simspoof
