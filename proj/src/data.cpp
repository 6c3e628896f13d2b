#include "simspoof/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "simspoof/losses.hpp"

namespace simspoof {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Portable draws from the raw engine so corpora do not depend on the
// standard library's distribution code.
double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
double gaussian(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Rng utterance_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
  return Rng(seq);
}

std::string attack_id(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "A%02zu", k + 1);
  return buf;
}

std::string line_error(std::size_t n, const std::string& what) {
  return "protocol line " + std::to_string(n) + ": " + what;
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

std::vector<double> bonafide_waveform(const SynthConfig& cfg, std::size_t length, Rng& rng) {
  const double sr = cfg.sample_rate;
  const double f0 = uniform(rng, cfg.f0_min_hz, cfg.f0_max_hz);
  const double vib_rate = uniform(rng, 3.0, 6.0), vib_depth = uniform(rng, 0.005, 0.02);
  const double env_rate = uniform(rng, 1.0, 4.0), env_phase = uniform(rng, 0.0, kTwoPi);
  const auto harmonics = static_cast<std::size_t>(cfg.voice_band_hz / (f0 * (1.0 + vib_depth)));
  std::vector<double> amp(harmonics), phase(harmonics);
  for (std::size_t h = 0; h < harmonics; ++h) {
    amp[h] = uniform(rng, 0.5, 1.0) / static_cast<double>(h + 1);
    phase[h] = uniform(rng, 0.0, kTwoPi);
  }
  std::vector<double> x(length, 0.0);
  double base_phase = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = f0 * (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * t));
    base_phase += kTwoPi * f / sr;
    double v = 0.0;
    for (std::size_t h = 0; h < harmonics; ++h) v += amp[h] * std::sin(static_cast<double>(h + 1) * base_phase + phase[h]);
    x[i] = v * (0.6 + 0.4 * std::sin(kTwoPi * env_rate * t + env_phase));
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? 0.5 / peak : 0.0;
  for (auto& v : x) v = v * gain + cfg.noise_level * gaussian(rng);
  return x;
}

}  // namespace

std::string to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::dev: return "dev";
    case Partition::eval: return "eval";
  }
  return "?";
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::train;
  if (s == "dev") return Partition::dev;
  if (s == "eval") return Partition::eval;
  throw std::invalid_argument("unknown partition '" + s + "' (expected train|dev|eval)");
}

int TrialRecord::label() const { return bonafide() ? kBonafide : kSpoof; }

std::string TrialRecord::attack_label() const { return bonafide() ? "bonafide" : attack; }

std::vector<TrialRecord> parse_protocol(std::istream& in, Partition partition) {
  std::vector<TrialRecord> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string tok; ls >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (f.size() != 5) throw std::invalid_argument(line_error(n, "expected 5 fields, got " + std::to_string(f.size())));
    TrialRecord r;
    r.speaker = f[0];
    r.trial_id = f[1];
    r.partition = partition;
    if (f[4] == "bonafide") {
      if (f[3] != "-") throw std::invalid_argument(line_error(n, "bona fide trial with attack '" + f[3] + "'"));
    } else if (f[4] == "spoof") {
      if (f[3] == "-") throw std::invalid_argument(line_error(n, "spoof trial without an attack id"));
      r.attack = f[3];
    } else {
      throw std::invalid_argument(line_error(n, "key must be bonafide or spoof, got '" + f[4] + "'"));
    }
    if (!seen.insert(r.trial_id).second) throw std::invalid_argument(line_error(n, "duplicate trial " + r.trial_id));
    out.push_back(std::move(r));
  }
  if (out.empty()) std::cerr << "warning: protocol has no trials\n";
  return out;
}

std::vector<TrialRecord> parse_protocol(const std::string& path, Partition partition) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read protocol " + path);
  return parse_protocol(in, partition);
}

void serialize_protocol(std::ostream& out, const std::vector<TrialRecord>& records) {
  for (const auto& r : records) {
    out << r.speaker << ' ' << r.trial_id << " - " << (r.bonafide() ? "-" : r.attack) << ' '
        << (r.bonafide() ? "bonafide" : "spoof") << '\n';
  }
}

void serialize_protocol(const std::string& path, const std::vector<TrialRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write protocol " + path);
  serialize_protocol(out, records);
}

std::vector<double> load_waveform(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { return std::runtime_error(path + ": " + why); };
  if (buf.size() < 12 || std::string(buf.begin(), buf.begin() + 4) != "RIFF" ||
      std::string(buf.begin() + 8, buf.begin() + 12) != "WAVE") {
    throw fail("not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos) + 4);
    const std::size_t size = get_u32(&buf[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw fail("truncated '" + id + "' chunk");
    if (id == "fmt ") {
      if (size < 16) throw fail("short fmt chunk");
      const auto format = get_u16(&buf[body]);
      const auto channels = get_u16(&buf[body + 2]);
      const auto rate = get_u32(&buf[body + 4]);
      const auto bits = get_u16(&buf[body + 14]);
      if (format != 1) throw fail("audio format " + std::to_string(format) + ", expected PCM (1)");
      if (channels != 1) throw fail(std::to_string(channels) + " channels, expected mono");
      if (rate != kSampleRate) throw fail("sample rate " + std::to_string(rate) + ", expected 16000");
      if (bits != 16) throw fail(std::to_string(bits) + "-bit samples, expected 16-bit");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      std::vector<double> out(size / 2);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::int16_t>(get_u16(&buf[body + 2 * i])) / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw fail("no data chunk");
}

void write_waveform(const std::string& path, const std::vector<double>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const auto bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, bytes);
  for (double s : samples) {
    const double q = std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!out) throw std::runtime_error("error writing " + path);
}

std::vector<double> crop_or_tile(const std::vector<double>& samples, std::size_t target_len, CropMode mode,
                                 Rng* rng) {
  if (samples.empty()) throw std::invalid_argument("crop_or_tile: empty input");
  if (target_len == 0) throw std::invalid_argument("crop_or_tile: target length must be positive");
  std::vector<double> out(target_len);
  if (samples.size() >= target_len) {
    std::size_t offset = 0;
    if (mode == CropMode::train) {
      if (!rng) throw std::invalid_argument("crop_or_tile: train mode needs a random generator");
      offset = static_cast<std::size_t>((*rng)() % (samples.size() - target_len + 1));
    }
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(offset), target_len, out.begin());
  } else {
    for (std::size_t i = 0; i < target_len; ++i) out[i] = samples[i % samples.size()];
  }
  return out;
}

void SynthConfig::validate() const {
  if (n_train_attacks == 0 || n_eval_attacks == 0) throw std::invalid_argument("synthetic corpus needs attack types");
  if (samples_per_class == 0 || dev_samples_per_class == 0) {
    throw std::invalid_argument("synthetic corpus needs samples per class");
  }
  if (segment_length == 0) throw std::invalid_argument("segment length must be positive");
  if (sample_rate != kSampleRate) throw std::invalid_argument("synthetic sample rate must be 16000");
  if (!(min_length_factor > 0.0) || min_length_factor > max_length_factor) {
    throw std::invalid_argument("invalid utterance length factors");
  }
  if (!(f0_min_hz > 0.0) || f0_min_hz > f0_max_hz || f0_max_hz >= voice_band_hz) {
    throw std::invalid_argument("invalid fundamental frequency range");
  }
  if (noise_level < 0.0 || !(artifact_level_min > 0.0) || artifact_level_min > artifact_level_max) {
    throw std::invalid_argument("invalid noise or artifact levels");
  }
  const double nyquist = 0.5 * sample_rate;
  for (auto [lo, hi] : {std::pair{train_artifact_min_hz, train_artifact_max_hz},
                        std::pair{eval_artifact_min_hz, eval_artifact_max_hz}}) {
    if (!(lo > 0.0) || lo > hi || hi + 500.0 > nyquist) {
      throw std::invalid_argument("artifact range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                  "] Hz must be ordered and leave 500 Hz below Nyquist");
    }
  }
  if (train_artifact_min_hz <= eval_artifact_max_hz && eval_artifact_min_hz <= train_artifact_max_hz) {
    throw std::invalid_argument("train and eval artifact frequency ranges overlap");
  }
}

std::string to_string(ArtifactFamily f) {
  switch (f) {
    case ArtifactFamily::tone: return "tone";
    case ArtifactFamily::band_noise: return "band_noise";
    case ArtifactFamily::ring_modulation: return "ring_modulation";
    case ArtifactFamily::chirp: return "chirp";
  }
  return "?";
}

void apply_artifact(std::vector<double>& x, const AttackSpec& spec, std::uint32_t sample_rate, Rng& rng) {
  const double sr = sample_rate;
  const double level = spec.level * uniform(rng, 0.8, 1.2);
  const double f = spec.frequency_hz * uniform(rng, 0.99, 1.01);
  const double phase = uniform(rng, 0.0, kTwoPi);
  const double n = static_cast<double>(x.size());
  switch (spec.family) {
    case ArtifactFamily::tone:
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += level * std::sin(kTwoPi * f * i / sr + phase);
      break;
    case ArtifactFamily::band_noise: {
      constexpr int kPartials = 16;
      double fr[kPartials], ph[kPartials];
      for (int p = 0; p < kPartials; ++p) {
        fr[p] = uniform(rng, f - 150.0, f + 150.0);
        ph[p] = uniform(rng, 0.0, kTwoPi);
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        double v = 0.0;
        for (int p = 0; p < kPartials; ++p) v += std::sin(kTwoPi * fr[p] * i / sr + ph[p]);
        x[i] += 0.25 * level * v;
      }
      break;
    }
    case ArtifactFamily::ring_modulation:
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += 2.0 * level * x[i] * std::cos(kTwoPi * f * i / sr + phase);
      break;
    case ArtifactFamily::chirp: {
      // Instantaneous frequency rises linearly from f to f + 400 Hz.
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double t = i / sr;
        x[i] += level * std::sin(kTwoPi * (f * t + 200.0 * t * t * sr / n) + phase);
      }
      break;
    }
  }
}

std::vector<std::size_t> Corpus::indices(Partition p) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].partition == p) out.push_back(i);
  }
  return out;
}

CorpusIndex Corpus::index(Partition p) const {
  CorpusIndex idx;
  for (auto i : indices(p)) {
    if (records[i].bonafide()) {
      idx.bonafide.push_back(i);
    } else {
      idx.by_attack[records[i].attack].push_back(i);
    }
  }
  return idx;
}

std::vector<std::string> Corpus::attack_ids(Partition p) const {
  std::set<std::string> ids;
  for (auto i : indices(p)) {
    if (!records[i].bonafide()) ids.insert(records[i].attack);
  }
  return {ids.begin(), ids.end()};
}

Corpus generate_synthetic_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  Rng master(cfg.seed);
  const std::size_t total_attacks = cfg.n_train_attacks + cfg.n_eval_attacks;
  for (std::size_t k = 0; k < total_attacks; ++k) {
    AttackSpec a;
    a.id = attack_id(k);
    a.family = static_cast<ArtifactFamily>(k % 4);
    a.unseen = k >= cfg.n_train_attacks;
    a.frequency_hz = a.unseen ? uniform(master, cfg.eval_artifact_min_hz, cfg.eval_artifact_max_hz)
                              : uniform(master, cfg.train_artifact_min_hz, cfg.train_artifact_max_hz);
    a.level = uniform(master, cfg.artifact_level_min, cfg.artifact_level_max);
    corpus.attacks.push_back(a);
  }

  auto add = [&](Partition part, const AttackSpec* attack, std::size_t count) {
    static const char* prefix[] = {"SYN_T_", "SYN_D_", "SYN_E_"};
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t index = corpus.records.size();
      Rng rng = utterance_rng(cfg.seed, index);
      const auto length = static_cast<std::size_t>(
          std::lround(uniform(rng, cfg.min_length_factor, cfg.max_length_factor) * static_cast<double>(cfg.segment_length)));
      auto wave = bonafide_waveform(cfg, std::max<std::size_t>(length, 1), rng);
      if (attack) apply_artifact(wave, *attack, cfg.sample_rate, rng);
      char id[32], speaker[16];
      std::snprintf(id, sizeof id, "%s%07zu", prefix[static_cast<int>(part)], index);
      std::snprintf(speaker, sizeof speaker, "SYN_%04zu", c % 10);
      corpus.records.push_back({speaker, id, attack ? attack->id : "", part,
                                "synthetic:" + std::to_string(cfg.seed) + ":" + std::to_string(index)});
      corpus.waveforms.push_back(std::move(wave));
    }
  };

  for (auto part : {Partition::train, Partition::dev, Partition::eval}) {
    const std::size_t count = part == Partition::dev ? cfg.dev_samples_per_class : cfg.samples_per_class;
    add(part, nullptr, count);
    for (const auto& a : corpus.attacks) {
      if (a.unseen == (part == Partition::eval)) add(part, &a, count);
    }
  }
  return corpus;
}

void export_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "wav");
  for (auto part : {Partition::train, Partition::dev, Partition::eval}) {
    std::vector<TrialRecord> recs;
    for (auto i : corpus.indices(part)) {
      recs.push_back(corpus.records[i]);
      write_waveform((fs::path(dir) / "wav" / (corpus.records[i].trial_id + ".wav")).string(), corpus.waveforms[i]);
    }
    if (!recs.empty()) serialize_protocol((fs::path(dir) / (to_string(part) + ".protocol.txt")).string(), recs);
  }
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus corpus;
  std::set<std::string> seen_train;
  for (auto part : {Partition::train, Partition::dev, Partition::eval}) {
    const fs::path proto = fs::path(dir) / (to_string(part) + ".protocol.txt");
    if (!fs::exists(proto)) continue;
    for (auto r : parse_protocol(proto.string(), part)) {
      r.source = (fs::path(dir) / "wav" / (r.trial_id + ".wav")).string();
      corpus.waveforms.push_back(load_waveform(r.source));
      corpus.records.push_back(std::move(r));
    }
  }
  if (corpus.records.empty()) throw std::runtime_error("no protocol files found in " + dir);
  std::set<std::string> ids;
  for (const auto& r : corpus.records) {
    if (!ids.insert(r.trial_id).second) throw std::invalid_argument("duplicate trial " + r.trial_id + " in " + dir);
  }
  for (auto part : {Partition::train, Partition::dev}) {
    for (const auto& a : corpus.attack_ids(part)) seen_train.insert(a);
  }
  std::set<std::string> all;
  for (const auto& r : corpus.records) {
    if (!r.bonafide()) all.insert(r.attack);
  }
  for (const auto& id : all) corpus.attacks.push_back({id, ArtifactFamily::tone, 0.0, 0.0, !seen_train.count(id)});
  return corpus;
}

}  // namespace simspoof
