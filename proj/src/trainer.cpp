#include "simspoof/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "simspoof/checkpoint.hpp"
#include "simspoof/kernels.hpp"
#include "simspoof/ops.hpp"

namespace simspoof {

namespace {

Rng seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

Tensor stack_waves(const Corpus& corpus, const std::vector<std::size_t>& records, std::size_t length, CropMode mode,
                   Rng* rng) {
  std::vector<double> flat;
  flat.reserve(records.size() * length);
  for (auto r : records) {
    const auto seg = crop_or_tile(corpus.waveforms.at(r), length, mode, rng);
    flat.insert(flat.end(), seg.begin(), seg.end());
  }
  return Tensor::from({records.size(), length}, std::move(flat));
}

}  // namespace

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::wce: return "wce";
    case LossMode::aam: return "aam";
    case LossMode::aam_mse: return "aam+mse";
  }
  return "?";
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "wce") return LossMode::wce;
  if (s == "aam") return LossMode::aam;
  if (s == "aam+mse" || s == "aam_mse") return LossMode::aam_mse;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected wce|aam|aam+mse)");
}

std::string to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::automatic: return "auto";
    case SamplerKind::episodic: return "episodic";
    case SamplerKind::shuffled: return "shuffled";
  }
  return "?";
}

SamplerKind sampler_from_string(const std::string& s) {
  if (s == "auto") return SamplerKind::automatic;
  if (s == "episodic") return SamplerKind::episodic;
  if (s == "shuffled") return SamplerKind::shuffled;
  throw std::invalid_argument("unknown sampler '" + s + "' (expected auto|episodic|shuffled)");
}

bool TrainConfig::episodic() const {
  return sampler == SamplerKind::episodic || (sampler == SamplerKind::automatic && loss == LossMode::aam_mse);
}

void TrainConfig::validate() const {
  encoder.validate();
  aam.validate();
  tdcf.validate();
  if (loss == LossMode::aam_mse && sampler == SamplerKind::shuffled) {
    throw std::invalid_argument("aam+mse needs episodic batches (sampler = auto or episodic)");
  }
  if (!(lambda_balance >= 0.0)) throw std::invalid_argument("lambda_balance must be non-negative");
  if (n_types < 2 || k_shot == 0) throw std::invalid_argument("episodes need n_types >= 2 and k_shot >= 1");
  if (batch_size == 0 || epochs == 0 || relation_hidden == 0 || eval_batch == 0) {
    throw std::invalid_argument("batch_size, epochs, relation.hidden and eval_batch must be positive");
  }
  // An episode holds N*K support and 2K query members.
  if (episodic() && batch_size != (n_types + 2) * k_shot) {
    throw std::invalid_argument("batch_size " + std::to_string(batch_size) + " must equal N*K + 2K = " +
                                std::to_string((n_types + 2) * k_shot) + " with one episode per batch");
  }
  if (!(lr > 0.0) || !(lr_floor >= 0.0) || lr_floor > lr) {
    throw std::invalid_argument("need lr > 0 and 0 <= lr_floor <= lr");
  }
  if (data.source == "synthetic") {
    data.synth.validate();
    if (data.synth.segment_length != encoder.segment_length) {
      throw std::invalid_argument("synthetic segment length differs from the encoder segment length");
    }
  }
}

TrainConfig TrainConfig::from_key_values(KeyValues kv) {
  TrainConfig c;
  auto& e = c.encoder;
  e.segment_length = kv.get("segment_length", e.segment_length);
  e.sinc.num_filters = kv.get("sinc.filters", e.sinc.num_filters);
  e.sinc.kernel_len = kv.get("sinc.kernel", e.sinc.kernel_len);
  e.sinc.min_low_hz = kv.get("sinc.min_low_hz", e.sinc.min_low_hz);
  e.sinc.min_band_hz = kv.get("sinc.min_band_hz", e.sinc.min_band_hz);
  e.num_blocks = kv.get("encoder.blocks", e.num_blocks);
  e.filters_per_block = kv.get("encoder.filters", e.filters_per_block);
  e.gru_hidden = kv.get("encoder.gru_hidden", e.gru_hidden);
  e.embed_dim = kv.get("encoder.embed_dim", e.embed_dim);
  e.attention = attention_kind_from_string(kv.get("attention", to_string(e.attention)));
  e.simam.lambda_reg = kv.get("simam.lambda", e.simam.lambda_reg);
  e.se.reduction = kv.get("se.reduction", e.se.reduction);
  e.cbam.reduction = kv.get("cbam.reduction", e.cbam.reduction);
  e.cbam.kernel_size = kv.get("cbam.kernel", e.cbam.kernel_size);

  c.loss = loss_mode_from_string(kv.get("loss", to_string(c.loss)));
  c.aam.scale = kv.get("aam.scale", c.aam.scale);
  c.aam.margin_bonafide = kv.get("aam.margin_bonafide", c.aam.margin_bonafide);
  c.aam.margin_spoof = kv.get("aam.margin_spoof", c.aam.margin_spoof);
  c.aam.class_weights[0] = kv.get("class_weight.bonafide", c.aam.class_weights[0]);
  c.aam.class_weights[1] = kv.get("class_weight.spoof", c.aam.class_weights[1]);
  c.aam.conventional_weighting = kv.get("aam.conventional_weighting", c.aam.conventional_weighting);
  c.lambda_balance = kv.get("lambda_balance", c.lambda_balance);

  c.n_types = kv.get("episode.n_types", c.n_types);
  c.k_shot = kv.get("episode.k_shot", c.k_shot);
  c.match = match_granularity_from_string(kv.get("episode.match", to_string(c.match)));
  c.relation_hidden = kv.get("relation.hidden", c.relation_hidden);
  c.sampler = sampler_from_string(kv.get("sampler", to_string(c.sampler)));

  c.batch_size = kv.get("batch_size", c.batch_size);
  c.lr = kv.get("lr", c.lr);
  c.lr_floor = kv.get("lr_floor", c.lr_floor);
  c.epochs = kv.get("epochs", c.epochs);
  c.steps_per_epoch = kv.get("steps_per_epoch", c.steps_per_epoch);
  c.eval_batch = kv.get("eval_batch", c.eval_batch);
  c.seed = kv.get_u64("seed", c.seed);
  c.parallel = kv.get("parallel", c.parallel);

  c.data.source = kv.get("data.source", c.data.source);
  auto& s = c.data.synth;
  s.segment_length = e.segment_length;
  s.n_train_attacks = kv.get("synth.train_attacks", s.n_train_attacks);
  s.n_eval_attacks = kv.get("synth.eval_attacks", s.n_eval_attacks);
  s.samples_per_class = kv.get("synth.samples_per_class", s.samples_per_class);
  s.dev_samples_per_class = kv.get("synth.dev_samples_per_class", s.dev_samples_per_class);
  s.min_length_factor = kv.get("synth.min_length_factor", s.min_length_factor);
  s.max_length_factor = kv.get("synth.max_length_factor", s.max_length_factor);
  s.f0_min_hz = kv.get("synth.f0_min_hz", s.f0_min_hz);
  s.f0_max_hz = kv.get("synth.f0_max_hz", s.f0_max_hz);
  s.voice_band_hz = kv.get("synth.voice_band_hz", s.voice_band_hz);
  s.noise_level = kv.get("synth.noise_level", s.noise_level);
  s.train_artifact_min_hz = kv.get("synth.train_artifact_min_hz", s.train_artifact_min_hz);
  s.train_artifact_max_hz = kv.get("synth.train_artifact_max_hz", s.train_artifact_max_hz);
  s.eval_artifact_min_hz = kv.get("synth.eval_artifact_min_hz", s.eval_artifact_min_hz);
  s.eval_artifact_max_hz = kv.get("synth.eval_artifact_max_hz", s.eval_artifact_max_hz);
  s.artifact_level_min = kv.get("synth.artifact_level_min", s.artifact_level_min);
  s.artifact_level_max = kv.get("synth.artifact_level_max", s.artifact_level_max);
  s.seed = kv.get_u64("synth.seed", s.seed);

  auto& t = c.tdcf;
  t.p_spoof = kv.get("tdcf.p_spoof", t.p_spoof);
  t.p_target_given_bonafide = kv.get("tdcf.p_target_given_bonafide", t.p_target_given_bonafide);
  t.c_miss_asv = kv.get("tdcf.c_miss_asv", t.c_miss_asv);
  t.c_fa_asv = kv.get("tdcf.c_fa_asv", t.c_fa_asv);
  t.c_miss_cm = kv.get("tdcf.c_miss_cm", t.c_miss_cm);
  t.c_fa_cm = kv.get("tdcf.c_fa_cm", t.c_fa_cm);
  t.p_miss_asv = kv.get("tdcf.p_miss_asv", t.p_miss_asv);
  t.p_fa_asv = kv.get("tdcf.p_fa_asv", t.p_fa_asv);
  t.p_miss_spoof_asv = kv.get("tdcf.p_miss_spoof_asv", t.p_miss_spoof_asv);

  kv.reject_unused();
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) { return from_key_values(KeyValues::load(path)); }

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  const auto& e = encoder;
  os << "segment_length = " << e.segment_length << '\n'
     << "sinc.filters = " << e.sinc.num_filters << '\n'
     << "sinc.kernel = " << e.sinc.kernel_len << '\n'
     << "sinc.min_low_hz = " << fmt(e.sinc.min_low_hz) << '\n'
     << "sinc.min_band_hz = " << fmt(e.sinc.min_band_hz) << '\n'
     << "encoder.blocks = " << e.num_blocks << '\n'
     << "encoder.filters = " << join(e.filters_per_block) << '\n'
     << "encoder.gru_hidden = " << e.gru_hidden << '\n'
     << "encoder.embed_dim = " << e.embed_dim << '\n'
     << "attention = " << to_string(e.attention) << '\n'
     << "simam.lambda = " << fmt(e.simam.lambda_reg) << '\n'
     << "se.reduction = " << e.se.reduction << '\n'
     << "cbam.reduction = " << e.cbam.reduction << '\n'
     << "cbam.kernel = " << e.cbam.kernel_size << '\n'
     << "loss = " << to_string(loss) << '\n'
     << "aam.scale = " << fmt(aam.scale) << '\n'
     << "aam.margin_bonafide = " << fmt(aam.margin_bonafide) << '\n'
     << "aam.margin_spoof = " << fmt(aam.margin_spoof) << '\n'
     << "class_weight.bonafide = " << fmt(aam.class_weights[0]) << '\n'
     << "class_weight.spoof = " << fmt(aam.class_weights[1]) << '\n'
     << "aam.conventional_weighting = " << (aam.conventional_weighting ? "true" : "false") << '\n'
     << "lambda_balance = " << fmt(lambda_balance) << '\n'
     << "episode.n_types = " << n_types << '\n'
     << "episode.k_shot = " << k_shot << '\n'
     << "episode.match = " << to_string(match) << '\n'
     << "relation.hidden = " << relation_hidden << '\n'
     << "sampler = " << to_string(sampler) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "lr = " << fmt(lr) << '\n'
     << "lr_floor = " << fmt(lr_floor) << '\n'
     << "epochs = " << epochs << '\n'
     << "steps_per_epoch = " << steps_per_epoch << '\n'
     << "eval_batch = " << eval_batch << '\n'
     << "seed = " << seed << '\n'
     << "parallel = " << (parallel ? "true" : "false") << '\n'
     << "data.source = " << data.source << '\n';
  const auto& s = data.synth;
  os << "synth.train_attacks = " << s.n_train_attacks << '\n'
     << "synth.eval_attacks = " << s.n_eval_attacks << '\n'
     << "synth.samples_per_class = " << s.samples_per_class << '\n'
     << "synth.dev_samples_per_class = " << s.dev_samples_per_class << '\n'
     << "synth.min_length_factor = " << fmt(s.min_length_factor) << '\n'
     << "synth.max_length_factor = " << fmt(s.max_length_factor) << '\n'
     << "synth.f0_min_hz = " << fmt(s.f0_min_hz) << '\n'
     << "synth.f0_max_hz = " << fmt(s.f0_max_hz) << '\n'
     << "synth.voice_band_hz = " << fmt(s.voice_band_hz) << '\n'
     << "synth.noise_level = " << fmt(s.noise_level) << '\n'
     << "synth.train_artifact_min_hz = " << fmt(s.train_artifact_min_hz) << '\n'
     << "synth.train_artifact_max_hz = " << fmt(s.train_artifact_max_hz) << '\n'
     << "synth.eval_artifact_min_hz = " << fmt(s.eval_artifact_min_hz) << '\n'
     << "synth.eval_artifact_max_hz = " << fmt(s.eval_artifact_max_hz) << '\n'
     << "synth.artifact_level_min = " << fmt(s.artifact_level_min) << '\n'
     << "synth.artifact_level_max = " << fmt(s.artifact_level_max) << '\n'
     << "synth.seed = " << s.seed << '\n';
  const auto& t = tdcf;
  os << "tdcf.p_spoof = " << fmt(t.p_spoof) << '\n'
     << "tdcf.p_target_given_bonafide = " << fmt(t.p_target_given_bonafide) << '\n'
     << "tdcf.c_miss_asv = " << fmt(t.c_miss_asv) << '\n'
     << "tdcf.c_fa_asv = " << fmt(t.c_fa_asv) << '\n'
     << "tdcf.c_miss_cm = " << fmt(t.c_miss_cm) << '\n'
     << "tdcf.c_fa_cm = " << fmt(t.c_fa_cm) << '\n'
     << "tdcf.p_miss_asv = " << fmt(t.p_miss_asv) << '\n'
     << "tdcf.p_fa_asv = " << fmt(t.p_fa_asv) << '\n'
     << "tdcf.p_miss_spoof_asv = " << fmt(t.p_miss_spoof_asv) << '\n';
  return os.str();
}

Model::Model(const TrainConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.seed = seed;
  Rng rng = seeded(seed, 0);
  const std::size_t d = cfg.encoder.embed_dim;
  encoder = std::make_unique<Encoder>(cfg.encoder, rng, &params);
  aam = AamHead::create(d, rng, &params);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  wce_weight = params.add_parameter("wce.weight", uniform_tensor({d, 2}, bound, rng));
  wce_bias = params.add_parameter("wce.bias", uniform_tensor({2}, bound, rng));
  relation = RelationNet::create(d, cfg.relation_hidden, rng, &params);
}

Tensor Model::embed(const Tensor& waves, bool training) { return encoder->forward(waves, training); }

Tensor Model::wce_logits(const Tensor& embeddings) const { return linear(embeddings, wce_weight, wce_bias); }

std::vector<double> Model::score(const Tensor& waves) {
  NoGradGuard guard;
  const Tensor emb = embed(waves, false);
  std::vector<double> out(emb.size(0));
  if (cfg_.loss == LossMode::wce) {
    const Tensor logits = wce_logits(emb);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits.at(2 * i) - logits.at(2 * i + 1);
  } else {
    const Tensor cosines = aam_cosines(emb, aam);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cosines.at(2 * i + kBonafide);
  }
  return out;
}

std::string EpochLog::csv() const {
  return std::to_string(epoch) + "," + fmt(loss.aam) + "," + fmt(loss.mse) + "," + fmt(loss.total) + "," +
         fmt(dev_eer) + "," + fmt(lr);
}

Corpus load_data(const DataConfig& cfg) {
  if (cfg.source == "synthetic") return generate_synthetic_corpus(cfg.synth);
  return load_corpus(cfg.source);
}

ScoreSet score_records(Model& model, const Corpus& corpus, const std::vector<std::size_t>& records) {
  const auto& cfg = model.config();
  ScoreSet out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += cfg.eval_batch) {
    const std::vector<std::size_t> chunk(records.begin() + static_cast<std::ptrdiff_t>(start),
                                         records.begin() + static_cast<std::ptrdiff_t>(std::min(records.size(), start + cfg.eval_batch)));
    const auto scores = model.score(stack_waves(corpus, chunk, cfg.encoder.segment_length, CropMode::eval, nullptr));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& r = corpus.records[chunk[i]];
      out.push_back({r.trial_id, r.attack_label(), scores[i]});
    }
  }
  return out;
}

TrainResult train(Model& model, const Corpus& corpus, const TrainHooks& hooks) {
  const TrainConfig& cfg = model.config();
  cfg.validate();
  kernels::PolicyGuard policy(cfg.parallel ? kernels::Policy::parallel : kernels::Policy::serial);

  const auto train_ids = corpus.indices(Partition::train);
  const CorpusIndex train_index = corpus.index(Partition::train);
  const auto dev_ids = corpus.indices(Partition::dev);
  const CorpusIndex dev_index = corpus.index(Partition::dev);
  if (train_ids.empty()) throw std::invalid_argument("insufficient data: no training records");
  if (dev_index.bonafide.empty() || dev_index.by_attack.empty()) {
    throw std::invalid_argument("insufficient data: the dev partition needs bona fide and spoof trials");
  }

  Rng rng = seeded(cfg.seed, 1);
  const std::size_t steps =
      cfg.steps_per_epoch ? cfg.steps_per_epoch : (train_ids.size() + cfg.batch_size - 1) / cfg.batch_size;
  Adam adam;
  const auto params = model.params.parameters();
  TrainResult result;
  std::vector<std::vector<double>> best;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_floor);
    std::vector<std::size_t> order;
    if (!cfg.episodic()) {
      order = train_ids;
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    StepLosses sum;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<std::size_t> batch;
      std::vector<int> labels;
      Episode episode;
      if (cfg.episodic()) {
        try {
          episode = sample_episode(train_index, cfg.n_types, cfg.k_shot, rng);
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument(std::string("insufficient data: ") + e.what());
        }
        for (const auto& m : episode.members()) batch.push_back(m.record);
        labels = episode.labels();
      } else {
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
          batch.push_back(order[(step * cfg.batch_size + i) % order.size()]);
          labels.push_back(corpus.records[batch.back()].label());
        }
      }
      if (hooks.on_batch) hooks.on_batch(batch);

      StepLosses sl;
      try {
        const Tensor waves = stack_waves(corpus, batch, cfg.encoder.segment_length, CropMode::train, &rng);
        const Tensor emb = model.embed(waves, true);
        Tensor total;
        if (cfg.loss == LossMode::wce) {
          total = weighted_cross_entropy(model.wce_logits(emb), labels, cfg.aam.class_weights);
          sl.aam = total.item();
        } else {
          const Tensor l_aam = aam_loss(emb, labels, model.aam, cfg.aam);
          sl.aam = l_aam.item();
          total = l_aam;
          if (cfg.loss == LossMode::aam_mse) {
            const PairBatch pb = build_pairs(episode, emb, cfg.match);
            const Tensor scores = relation_score(pb.pairs, model.relation, episode.support.size(), episode.query.size());
            const Tensor l_mse = relation_mse_loss(scores, pb.targets, cfg.n_types * cfg.k_shot, 2 * cfg.k_shot);
            sl.mse = l_mse.item();
            total = total_loss(l_aam, l_mse, cfg.lambda_balance);
          }
        }
        sl.total = total.item();
        if (!std::isfinite(sl.total)) throw NonFiniteError("loss is not finite");
        model.params.zero_grad();
        total.backward();
      } catch (const NonFiniteError& e) {
        throw std::runtime_error("non-finite value at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step) + " (loss_aam " + fmt(sl.aam) + ", loss_mse " + fmt(sl.mse) +
                                 ", lr " + fmt(lr) + "): " + e.what());
      }
      adam.step(params, lr);
      result.steps.push_back(sl);
      sum.aam += sl.aam;
      sum.mse += sl.mse;
      sum.total += sl.total;
    }

    EpochLog log;
    log.epoch = epoch;
    const double n = static_cast<double>(steps);
    log.loss = {sum.aam / n, sum.mse / n, sum.total / n};
    log.lr = lr;
    log.dev_eer = compute_eer(score_records(model, corpus, dev_ids)).eer;
    // Dev EER saturates at 0 quickly on small sets; ties go to the lower
    // training loss.
    const bool tie = !best.empty() && log.dev_eer == result.best_dev_eer &&
                     log.loss.total < result.log[result.best_epoch].loss.total;
    if (best.empty() || log.dev_eer < result.best_dev_eer || tie) {
      result.best_dev_eer = log.dev_eer;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& nt : model.params.all()) best.emplace_back(nt.tensor.data().begin(), nt.tensor.data().end());
    }
    result.log.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(log);
  }

  auto all = model.params.all();
  for (std::size_t i = 0; i < all.size(); ++i) std::copy(best[i].begin(), best[i].end(), all[i].tensor.mutable_data().begin());
  model.params.zero_grad();
  return result;
}

void save_model(const std::string& path, const Model& model) {
  save_checkpoint(path, model.config().to_text(), model.params);
}

std::unique_ptr<Model> load_model(const std::string& path) {
  const CheckpointData data = read_checkpoint(path);
  const TrainConfig cfg = TrainConfig::from_key_values(KeyValues::parse_text(data.config_text, path));
  auto model = std::make_unique<Model>(cfg, cfg.seed);
  restore_parameters(data, model->params);
  return model;
}

}  // namespace simspoof
