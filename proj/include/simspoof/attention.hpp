#pragma once

// Feature-map refinement modules: SimAM (parameter-free, energy based), SE
// (frequency gating) and CBAM (channel then frequency-temporal gating). All of
// them take a [C x F x T] map or a [B x C x F x T] batch and preserve shape.

#include <cstddef>
#include <string>

#include "simspoof/nn.hpp"
#include "simspoof/tensor.hpp"

namespace simspoof {

struct SimAmConfig {
  double lambda_reg = 1e-4;
  void validate() const;
};

// Which neurons define the channel mean/variance in the energy formula.
//   all_neurons       mean and variance over all M = F*T neurons (what the
//                     refinement uses).
//   excluding_target  statistics over the M-1 other neurons; this is the exact
//                     minimum of the per-neuron linear-separability energy.
enum class SimAmStatistics { all_neurons, excluding_target };

// Minimal energy e* = 4(var + lambda) / ((t - mean)^2 + 2 var + 2 lambda) for
// every neuron. Not differentiable (returns a detached tensor).
Tensor simam_energy(const Tensor& x, const SimAmConfig& cfg,
                    SimAmStatistics stats = SimAmStatistics::all_neurons);

// x * sigmoid(1 / e*), with e* over all neurons of each channel.
Tensor simam_refine(const Tensor& x, const SimAmConfig& cfg);

struct SeConfig {
  std::size_t reduction = 4;
};

// Two-layer excitation F -> F/r -> F acting on the per-bin mean over C and T.
struct SeParams {
  Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;

  static SeParams create(std::size_t freq_bins, const SeConfig& cfg, Rng& rng, ParameterSet* registry = nullptr,
                         const std::string& prefix = "se");
};

Tensor se_refine(const Tensor& x, const SeParams& params, const SeConfig& cfg);

struct CbamConfig {
  std::size_t reduction = 4;
  std::size_t kernel_size = 7;
};

struct CbamParams {
  Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;  // shared channel bottleneck C -> C/r -> C
  Tensor spatial_kernel;                               // [1 x 2 x k x k]

  static CbamParams create(std::size_t channels, const CbamConfig& cfg, Rng& rng,
                           ParameterSet* registry = nullptr, const std::string& prefix = "cbam");
};

Tensor cbam_refine(const Tensor& x, const CbamParams& params, const CbamConfig& cfg);

// Largest divisor of `dim` that does not exceed `requested`; used when an
// encoder stage's width is not divisible by the configured reduction.
std::size_t effective_reduction(std::size_t dim, std::size_t requested);

}  // namespace simspoof
