#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "simspoof/config.hpp"
#include "simspoof/data.hpp"
#include "simspoof/encoder.hpp"
#include "simspoof/episodic.hpp"
#include "simspoof/losses.hpp"
#include "simspoof/metrics.hpp"
#include "simspoof/nn.hpp"

namespace simspoof {

enum class LossMode { wce, aam, aam_mse };
std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

// How training batches are drawn. `automatic` means episodes for aam+mse and
// shuffled mini-batches otherwise.
enum class SamplerKind { automatic, episodic, shuffled };
std::string to_string(SamplerKind s);
SamplerKind sampler_from_string(const std::string& s);

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or a directory laid out as export_corpus writes
  SynthConfig synth;
};

struct TrainConfig {
  EncoderConfig encoder;
  LossMode loss = LossMode::aam_mse;
  AamConfig aam;
  double lambda_balance = 1.0;
  std::size_t n_types = 6;
  std::size_t k_shot = 2;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  double lr_floor = 0.0;
  std::size_t epochs = 100;
  std::size_t steps_per_epoch = 0;  // 0: one pass over the training records
  SamplerKind sampler = SamplerKind::automatic;
  MatchGranularity match = MatchGranularity::binary;
  std::size_t relation_hidden = 128;
  std::size_t eval_batch = 32;
  std::uint64_t seed = 1;
  bool parallel = false;  // OpenMP kernels; serial keeps runs bitwise reproducible
  DataConfig data;
  TdcfParams tdcf;

  void validate() const;
  bool episodic() const;

  // Reads every known key from `kv` (falling back to the defaults above) and
  // rejects unknown keys.
  static TrainConfig from_key_values(KeyValues kv);
  static TrainConfig load(const std::string& path);
  std::string to_text() const;
};

// Encoder plus every head. All heads are always built so the parameter
// initialization stream does not depend on the loss mode.
class Model {
 public:
  Model(const TrainConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Tensor embed(const Tensor& waves, bool training);
  // Bona fide cosine under the AAM heads, bona fide minus spoof logit under WCE.
  std::vector<double> score(const Tensor& waves);
  Tensor wce_logits(const Tensor& embeddings) const;

  const TrainConfig& config() const { return cfg_; }
  ParameterSet params;
  std::unique_ptr<Encoder> encoder;
  AamHead aam;
  Tensor wce_weight, wce_bias;
  RelationNet relation;

 private:
  TrainConfig cfg_;
};

struct StepLosses {
  double aam = 0.0;  // holds the WCE loss in wce mode
  double mse = 0.0;
  double total = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  StepLosses loss;
  double dev_eer = 0.0;
  double lr = 0.0;
  std::string csv() const;
};

inline constexpr const char* kEpochLogHeader = "epoch,loss_aam,loss_mse,loss_total,dev_eer,lr";

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_eer = 1.0;
  std::vector<StepLosses> steps;  // every optimizer step, in order
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  // Called with each batch's record indices before the forward pass.
  std::function<void(const std::vector<std::size_t>&)> on_batch;
};

Corpus load_data(const DataConfig& cfg);

// Runs the full schedule on `model` and leaves it holding the best dev-EER
// weights.
TrainResult train(Model& model, const Corpus& corpus, const TrainHooks& hooks = {});

// Scores each listed record (cropped or tiled from the start).
ScoreSet score_records(Model& model, const Corpus& corpus, const std::vector<std::size_t>& records);

void save_model(const std::string& path, const Model& model);
std::unique_ptr<Model> load_model(const std::string& path);

}  // namespace simspoof
