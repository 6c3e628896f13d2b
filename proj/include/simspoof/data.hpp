#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simspoof/episodic.hpp"
#include "simspoof/nn.hpp"

namespace simspoof {

enum class Partition { train, dev, eval };

std::string to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct TrialRecord {
  std::string speaker;
  std::string trial_id;
  std::string attack;  // empty for bona fide
  Partition partition = Partition::train;
  std::string source;  // audio path, or "synthetic:<seed>"

  bool bonafide() const { return attack.empty(); }
  int label() const;                  // 0 bona fide, 1 spoof
  std::string attack_label() const;   // attack id or "bonafide"
  bool operator==(const TrialRecord&) const = default;
};

// Lines are `<speaker> <trial_id> - <attack|-> <bonafide|spoof>`. Blank
// lines are skipped. Records take `partition` and no source.
std::vector<TrialRecord> parse_protocol(std::istream& in, Partition partition = Partition::train);
std::vector<TrialRecord> parse_protocol(const std::string& path, Partition partition = Partition::train);
void serialize_protocol(std::ostream& out, const std::vector<TrialRecord>& records);
void serialize_protocol(const std::string& path, const std::vector<TrialRecord>& records);

inline constexpr std::uint32_t kSampleRate = 16000;

// RIFF/WAVE, PCM 16-bit, mono, 16 kHz only. Samples are value / 32768.
std::vector<double> load_waveform(const std::string& path);
// Clips to [-1, 1) and rounds to the nearest 16-bit step.
void write_waveform(const std::string& path, const std::vector<double>& samples);

enum class CropMode { eval, train };

// Longer inputs are cropped (from the start in eval mode, at a seeded random
// offset in train mode); shorter ones are repeated and truncated.
std::vector<double> crop_or_tile(const std::vector<double>& samples, std::size_t target_len, CropMode mode,
                                 Rng* rng = nullptr);

struct SynthConfig {
  std::size_t n_train_attacks = 6;
  std::size_t n_eval_attacks = 2;
  std::size_t samples_per_class = 20;      // train and eval partitions
  std::size_t dev_samples_per_class = 10;
  std::size_t segment_length = 1600;
  std::uint32_t sample_rate = kSampleRate;
  // Utterance lengths are drawn from [min, max] x segment_length.
  double min_length_factor = 0.75;
  double max_length_factor = 1.5;
  // Bona fide speech proxy: harmonics of f0 up to the voice band edge.
  double f0_min_hz = 100.0;
  double f0_max_hz = 250.0;
  double voice_band_hz = 3400.0;
  double noise_level = 0.003;
  // Every attack type places its artifact at a frequency drawn once per type.
  // Training and evaluation types draw from these two ranges, which must not
  // overlap.
  double train_artifact_min_hz = 3800.0;
  double train_artifact_max_hz = 5400.0;
  double eval_artifact_min_hz = 5800.0;
  double eval_artifact_max_hz = 7400.0;
  double artifact_level_min = 0.04;
  double artifact_level_max = 0.12;
  std::uint64_t seed = 1234;

  void validate() const;
};

// Artifact families cycle with the attack index: additive tone, narrowband
// noise, ring modulation, rising chirp.
enum class ArtifactFamily { tone, band_noise, ring_modulation, chirp };
std::string to_string(ArtifactFamily f);

struct AttackSpec {
  std::string id;
  ArtifactFamily family = ArtifactFamily::tone;
  double frequency_hz = 0.0;
  double level = 0.0;
  bool unseen = false;  // evaluation-only type
};

struct Corpus {
  std::vector<TrialRecord> records;
  std::vector<std::vector<double>> waveforms;  // aligned with records
  std::vector<AttackSpec> attacks;

  std::vector<std::size_t> indices(Partition p) const;
  // Bona fide and per-attack record indices within one partition.
  CorpusIndex index(Partition p) const;
  std::vector<std::string> attack_ids(Partition p) const;
};

// Train: A01..A<n_train> plus bona fide. Dev: the same types. Eval: unseen
// types A<n_train+1>.. plus bona fide. Bitwise deterministic in the seed.
Corpus generate_synthetic_corpus(const SynthConfig& cfg);

// Per-utterance artifact applied to `base`; exposed for tests.
void apply_artifact(std::vector<double>& base, const AttackSpec& spec, std::uint32_t sample_rate, Rng& rng);

// Writes <dir>/wav/<trial_id>.wav and <dir>/<partition>.protocol.txt.
void export_corpus(const Corpus& corpus, const std::string& dir);

// Reads protocol files named as export_corpus writes them (any that are
// missing are skipped) and the matching WAV files.
Corpus load_corpus(const std::string& dir);

}  // namespace simspoof
