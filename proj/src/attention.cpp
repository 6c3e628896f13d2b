#include "simspoof/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "simspoof/kernels.hpp"
#include "simspoof/ops.hpp"

namespace simspoof {

namespace {

void require_feature_map(const Tensor& x, const char* who) {
  if (x.dim() != 3 && x.dim() != 4) {
    throw ShapeError(std::string(who) + " expects [C,F,T] or [B,C,F,T], got " + shape_str(x.shape()));
  }
}

std::size_t plane_size(const Tensor& x) { return x.size(x.dim() - 2) * x.size(x.dim() - 1); }

// Views a single map as a batch of one.
Tensor as_batch(const Tensor& x) {
  if (x.dim() == 4) return x;
  Shape s = x.shape();
  s.insert(s.begin(), 1);
  return reshape(x, s);
}

Tensor restore(const Tensor& y, const Tensor& like) { return like.dim() == 4 ? y : reshape(y, like.shape()); }

}  // namespace

void SimAmConfig::validate() const {
  if (!(lambda_reg > 0.0)) throw std::invalid_argument("SimAM lambda must be positive");
}

Tensor simam_energy(const Tensor& x, const SimAmConfig& cfg, SimAmStatistics stats) {
  cfg.validate();
  require_feature_map(x, "simam_energy");
  const std::size_t m = plane_size(x);
  if (m < 2) throw ShapeError("simam needs at least two neurons per channel (F*T == 1 in " + shape_str(x.shape()) + ")");
  const std::size_t channels = x.numel() / m;
  const auto v = x.data();
  const double lam = cfg.lambda_reg;
  std::vector<double> e(v.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* p = v.data() + c * m;
    if (stats == SimAmStatistics::all_neurons) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += p[i];
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t i = 0; i < m; ++i) ss += (p[i] - mu) * (p[i] - mu);
      const double var = ss / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double d = p[i] - mu;
        e[c * m + i] = 4.0 * (var + lam) / (d * d + 2.0 * var + 2.0 * lam);
      }
    } else {
      const auto others = static_cast<double>(m - 1);
      for (std::size_t t = 0; t < m; ++t) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += i == t ? 0.0 : p[i];
        const double mu = s / others;
        double ss = 0.0;
        for (std::size_t i = 0; i < m; ++i) ss += i == t ? 0.0 : (p[i] - mu) * (p[i] - mu);
        const double var = ss / others;
        const double d = p[t] - mu;
        e[c * m + t] = 4.0 * (var + lam) / (d * d + 2.0 * var + 2.0 * lam);
      }
    }
  }
  return Tensor::from(x.shape(), std::move(e));
}

Tensor simam_refine(const Tensor& x, const SimAmConfig& cfg) {
  cfg.validate();
  require_feature_map(x, "simam_refine");
  const std::size_t m = plane_size(x);
  if (m < 2) throw ShapeError("simam needs at least two neurons per channel (F*T == 1 in " + shape_str(x.shape()) + ")");
  const kernels::SimAmGeometry g{x.numel() / m, m, cfg.lambda_reg};
  std::vector<double> out(x.numel());
  kernels::simam_forward(g, x.data(), out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, "simam", [g](TensorImpl& o) {
    auto gx = o.parent_grad(0);
    if (!gx.empty()) kernels::simam_backward(g, o.parents[0]->value, o.grad, gx);
  });
}

std::size_t effective_reduction(std::size_t dim, std::size_t requested) {
  for (std::size_t r = std::min(requested, dim); r > 1; --r) {
    if (dim % r == 0) return r;
  }
  return 1;
}

SeParams SeParams::create(std::size_t freq_bins, const SeConfig& cfg, Rng& rng, ParameterSet* registry,
                          const std::string& prefix) {
  if (cfg.reduction == 0 || freq_bins % cfg.reduction != 0) {
    throw std::invalid_argument("SE reduction " + std::to_string(cfg.reduction) + " does not divide " +
                                std::to_string(freq_bins) + " frequency bins");
  }
  const std::size_t hidden = freq_bins / cfg.reduction;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(freq_bins));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  SeParams p{uniform_tensor({freq_bins, hidden}, b1, rng), uniform_tensor({hidden}, b1, rng),
             uniform_tensor({hidden, freq_bins}, b2, rng), uniform_tensor({freq_bins}, b2, rng)};
  if (registry) {
    registry->add_parameter(prefix + ".fc1.weight", p.fc1_weight);
    registry->add_parameter(prefix + ".fc1.bias", p.fc1_bias);
    registry->add_parameter(prefix + ".fc2.weight", p.fc2_weight);
    registry->add_parameter(prefix + ".fc2.bias", p.fc2_bias);
  }
  return p;
}

Tensor se_refine(const Tensor& x, const SeParams& params, const SeConfig& cfg) {
  require_feature_map(x, "se_refine");
  const Tensor xb = as_batch(x);
  const std::size_t batch = xb.size(0), freq = xb.size(2);
  if (cfg.reduction == 0 || freq % cfg.reduction != 0) {
    throw ShapeError("SE reduction " + std::to_string(cfg.reduction) + " does not divide F=" + std::to_string(freq));
  }
  if (params.fc1_weight.size(0) != freq || params.fc1_weight.size(1) != freq / cfg.reduction) {
    throw ShapeError("SE parameters " + shape_str(params.fc1_weight.shape()) + " do not fit F=" +
                     std::to_string(freq));
  }
  Tensor squeeze = mean_axes(xb, {1, 3}, false);  // [B, F]
  Tensor hidden = relu(linear(squeeze, params.fc1_weight, params.fc1_bias));
  Tensor gate = sigmoid(linear(hidden, params.fc2_weight, params.fc2_bias));
  return restore(mul(xb, reshape(gate, {batch, 1, freq, 1})), x);
}

CbamParams CbamParams::create(std::size_t channels, const CbamConfig& cfg, Rng& rng, ParameterSet* registry,
                              const std::string& prefix) {
  if (cfg.reduction == 0 || channels % cfg.reduction != 0) {
    throw std::invalid_argument("CBAM reduction " + std::to_string(cfg.reduction) + " does not divide " +
                                std::to_string(channels) + " channels");
  }
  if (cfg.kernel_size % 2 == 0) throw std::invalid_argument("CBAM kernel size must be odd");
  const std::size_t hidden = channels / cfg.reduction;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(channels));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  const double bk = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.kernel_size * cfg.kernel_size));
  CbamParams p{uniform_tensor({channels, hidden}, b1, rng), uniform_tensor({hidden}, b1, rng),
               uniform_tensor({hidden, channels}, b2, rng), uniform_tensor({channels}, b2, rng),
               uniform_tensor({1, 2, cfg.kernel_size, cfg.kernel_size}, bk, rng)};
  if (registry) {
    registry->add_parameter(prefix + ".fc1.weight", p.fc1_weight);
    registry->add_parameter(prefix + ".fc1.bias", p.fc1_bias);
    registry->add_parameter(prefix + ".fc2.weight", p.fc2_weight);
    registry->add_parameter(prefix + ".fc2.bias", p.fc2_bias);
    registry->add_parameter(prefix + ".spatial.weight", p.spatial_kernel);
  }
  return p;
}

Tensor cbam_refine(const Tensor& x, const CbamParams& params, const CbamConfig& cfg) {
  require_feature_map(x, "cbam_refine");
  const Tensor xb = as_batch(x);
  const std::size_t batch = xb.size(0), channels = xb.size(1);
  if (cfg.reduction == 0 || channels % cfg.reduction != 0) {
    throw ShapeError("CBAM reduction " + std::to_string(cfg.reduction) + " does not divide C=" +
                     std::to_string(channels));
  }
  if (params.fc1_weight.size(0) != channels) {
    throw ShapeError("CBAM parameters " + shape_str(params.fc1_weight.shape()) + " do not fit C=" +
                     std::to_string(channels));
  }
  auto mlp = [&](const Tensor& d) {
    return linear(relu(linear(d, params.fc1_weight, params.fc1_bias)), params.fc2_weight, params.fc2_bias);
  };
  Tensor avg = mean_axes(xb, {2, 3}, false);  // [B, C]
  Tensor mx = max_axes(xb, {2, 3}, false);
  Tensor channel_gate = sigmoid(add(mlp(avg), mlp(mx)));
  Tensor refined = mul(xb, reshape(channel_gate, {batch, channels, 1, 1}));

  Tensor desc = concat({mean_axes(refined, {1}, true), max_axes(refined, {1}, true)}, 1);  // [B, 2, F, T]
  const std::size_t pad = cfg.kernel_size / 2;
  Tensor spatial_gate = sigmoid(conv2d(desc, params.spatial_kernel, {1, 1}, {pad, pad}));  // [B, 1, F, T]
  return restore(mul(refined, spatial_gate), x);
}

}  // namespace simspoof
