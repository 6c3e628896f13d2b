// End-to-end acceptance gate. One PASS/FAIL line per criterion; exit code is
// the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "simspoof/attention.hpp"
#include "simspoof/encoder.hpp"
#include "simspoof/episodic.hpp"
#include "simspoof/grad_check.hpp"
#include "simspoof/losses.hpp"
#include "simspoof/metrics.hpp"
#include "simspoof/trainer.hpp"

using namespace simspoof;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s [%2d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
  failures += o.pass ? 0 : 1;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome simam_closed_form() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double lambdas[] = {1e-4, 1e-2, 1.0};
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t m = 2 + rng() % 15;
    const double lambda = lambdas[c % 3];
    const double spread = std::exp(std::uniform_real_distribution<double>(-1.0, 1.0)(rng));
    std::vector<double> v(m);
    for (auto& x : v) x = spread * nd(rng);
    const Tensor e = simam_energy(Tensor::from({1, 1, m}, v), SimAmConfig{lambda}, SimAmStatistics::excluding_target);
    for (std::size_t t = 0; t < m; ++t) {
      std::vector<double> others(v);
      others.erase(others.begin() + static_cast<long>(t));
      worst = std::max(worst, std::abs(e.at(t) - oracle::energy_minimum_descent(others, v[t], lambda)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 60.0, "max |closed form - descent| = " + fmt("%.2e", worst) + " over 200 channels"};
}

Outcome uniform_channel() {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const double gain = 1.0 / (1.0 + std::exp(-0.5));
  double worst_energy = 0.0, worst_gain = 0.0;
  for (double lambda : {1e-8, 1e-4, 1e-2, 1.0, 7.5}) {
    for (int rep = 0; rep < 20; ++rep) {
      const double v = rep == 0 ? 0.0 : u(rng);
      const Tensor x = Tensor::full({2, 3, 5}, v);
      const Tensor e = simam_energy(x, SimAmConfig{lambda});
      const Tensor y = simam_refine(x, SimAmConfig{lambda});
      for (std::size_t i = 0; i < x.numel(); ++i) {
        worst_energy = std::max(worst_energy, std::abs(e.at(i) - 2.0));
        if (v != 0.0) worst_gain = std::max(worst_gain, std::abs(y.at(i) / v - gain) / gain);
      }
    }
  }
  const bool ok = worst_energy == 0.0 && worst_gain <= 4.0 * std::numeric_limits<double>::epsilon();
  return {ok, "max |e* - 2| = " + fmt("%.1e", worst_energy) + ", max relative gain error = " + fmt("%.1e", worst_gain)};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  Rng rng(103);
  const double tol = 1e-4;
  std::vector<std::pair<std::string, double>> errs;
  const Tensor fmap = normal_tensor({2, 4, 4, 5}, 1.0, rng, false);
  const Tensor proj = normal_tensor({2, 4, 4, 5}, 1.0, rng, false);
  errs.emplace_back("simam", grad_check([&](const Tensor& x) { return sum(mul(simam_refine(x, SimAmConfig{}), proj)); },
                                        fmap));
  SeConfig se_cfg{2};
  const SeParams se = SeParams::create(4, se_cfg, rng);
  errs.emplace_back("se", grad_check([&](const Tensor& x) { return sum(mul(se_refine(x, se, se_cfg), proj)); }, fmap));
  CbamConfig cb_cfg{2, 3};
  const CbamParams cb = CbamParams::create(4, cb_cfg, rng);
  errs.emplace_back("cbam",
                    grad_check([&](const Tensor& x) { return sum(mul(cbam_refine(x, cb, cb_cfg), proj)); }, fmap));

  EncoderConfig ec;
  ec.segment_length = 96;
  ec.sinc.num_filters = 8;
  ec.sinc.kernel_len = 17;
  ec.num_blocks = 2;
  ec.filters_per_block = {2, 3};
  ec.gru_hidden = 3;
  ec.embed_dim = 4;
  ParameterSet ps;
  Encoder enc(ec, rng, &ps);
  const Tensor wave = normal_tensor({2, 96}, 1.0, rng, false);
  const Tensor eproj = normal_tensor({2, 4}, 1.0, rng, false);
  GradCheckOptions opts;
  opts.max_probes = 40;
  double enc_err =
      grad_check_detailed([&](const Tensor& w) { return sum(mul(enc.forward(w, true), eproj)); }, wave, opts)
          .max_rel_error;
  for (const auto& nt : ps.parameters()) {
    Tensor p = nt.tensor;
    enc_err = std::max(
        enc_err, grad_check_parameter([&] { return sum(mul(enc.forward(wave, true), eproj)); }, p, opts).max_rel_error);
  }
  errs.emplace_back("encoder", enc_err);

  // Anchors about 80 degrees apart, embeddings near their bisector, so no
  // sample sits deep in the flat part of the softmax where the gradient falls
  // below finite-difference resolution.
  const AamHead head{Tensor::from({5, 2}, {1.0, 0.1, 0.2, 1.0, -0.1, 0.3, 0.3, -0.2, 0.1, 0.1}, true)};
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<double> ev(30);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) ev[i * 5 + j] = head.weight.at(j * 2) + head.weight.at(j * 2 + 1) + u(rng);
  const Tensor emb = Tensor::from({6, 5}, ev);
  const std::vector<int> labels{0, 1, 1, 0, 1, 0};
  errs.emplace_back("aam", grad_check([&](const Tensor& e) { return aam_loss(e, labels, head, AamConfig{}); }, emb));

  const Tensor targets = Tensor::from({4, 2}, {1, 0, 0, 1, 1, 1, 0, 0});
  errs.emplace_back("relation mse", grad_check([&](const Tensor& s) { return relation_mse_loss(s, targets); },
                                               uniform_tensor({4, 2}, 1.0, rng, false)));

  CorpusIndex idx;
  for (std::size_t i = 0; i < 4; ++i) idx.bonafide.push_back(i);
  for (std::size_t i = 0; i < 6; ++i) idx.by_attack["A0" + std::to_string(i / 2 + 1)].push_back(10 + i);
  const Episode ep = sample_episode(idx, 3, 1, rng);
  const RelationNet net = RelationNet::create(5, 8, rng);
  const Tensor members = slice(emb, 0, 0, ep.support.size() + ep.query.size());
  errs.emplace_back("composite", grad_check(
                                     [&](const Tensor& x) {
                                       const PairBatch pb = build_pairs(ep, x, MatchGranularity::binary);
                                       const Tensor r = relation_score(pb.pairs, net, ep.support.size(), ep.query.size());
                                       return total_loss(aam_loss(x, ep.labels(), head, AamConfig{}),
                                                         relation_mse_loss(r, pb.targets), 1.0);
                                     },
                                     members));
  bool ok = seconds_since(t0) < 120.0;
  std::string detail;
  for (const auto& [name, e] : errs) {
    ok = ok && e < tol;
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt("%.1e", e);
  }
  return {ok, detail};
}

Outcome aam_degeneracy() {
  Rng rng(104);
  AamConfig cfg;
  cfg.margin_bonafide = cfg.margin_spoof = 0.0;
  cfg.class_weights = {1.0, 1.0};
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t d = 2 + rng() % 15, b = 1 + rng() % 32;
    const AamHead head = AamHead::create(d, rng);
    const Tensor emb = normal_tensor({b, d}, 1.0, rng, false);
    std::vector<int> labels(b);
    for (auto& l : labels) l = static_cast<int>(rng() % 2);
    double expect = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> logits(2);
      for (std::size_t c = 0; c < 2; ++c) {
        double dot = 0.0, ne = 0.0, nw = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double e = emb.at(i * d + j), w = head.weight.at(j * 2 + c);
          dot += e * w, ne += e * e, nw += w * w;
        }
        logits[c] = cfg.scale * dot / std::sqrt(ne * nw);
      }
      expect += oracle::nll(logits, static_cast<std::size_t>(labels[i]));
    }
    expect /= static_cast<double>(b);
    worst = std::max(worst, std::abs(aam_loss(emb, labels, head, cfg).item() - expect));
  }
  return {worst <= 1e-10, "max |aam - cross-entropy| = " + fmt("%.2e", worst) + " over 100 batches"};
}

Outcome aam_scale_invariance() {
  Rng rng(105);
  std::uniform_real_distribution<double> logscale(-6.0, 6.0);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t d = 8, b = 6;
    const AamHead head = AamHead::create(d, rng);
    const Tensor emb = normal_tensor({b, d}, 1.0, rng, false);
    std::vector<int> labels(b);
    for (auto& l : labels) l = static_cast<int>(rng() % 2);
    std::vector<double> v(emb.data().begin(), emb.data().end());
    const std::size_t row = rng() % b;
    const double c = std::exp(logscale(rng));
    for (std::size_t j = 0; j < d; ++j) v[row * d + j] *= c;
    const double a = aam_loss(emb, labels, head, AamConfig{}).item();
    const double s = aam_loss(Tensor::from({b, d}, v), labels, head, AamConfig{}).item();
    worst = std::max(worst, std::abs(a - s));
  }
  return {worst < 1e-12, "max loss change = " + fmt("%.2e", worst) + " over 100 rescalings in [e^-6, e^6]"};
}

Outcome episode_combinatorics() {
  Rng rng(106);
  CorpusIndex idx;
  for (std::size_t i = 0; i < 20; ++i) idx.bonafide.push_back(i);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 6; ++i) idx.by_attack["A0" + std::to_string(t + 1)].push_back(100 + t * 10 + i);
  std::size_t bad = 0, total = 0;
  for (std::size_t n = 2; n <= 6; ++n) {
    for (std::size_t k = 1; k <= 3; ++k) {
      for (int rep = 0; rep < 1000; ++rep, ++total) {
        const Episode ep = sample_episode(idx, n, k, rng);
        const PairBatch pb = build_pairs(ep, Tensor::zeros({ep.support.size() + ep.query.size(), 1}),
                                         MatchGranularity::binary);
        std::set<std::size_t> records;
        bool held_in_support = false;
        for (const auto& m : ep.members()) records.insert(m.record);
        for (const auto& m : ep.support) held_in_support = held_in_support || m.attack == ep.held_out_type;
        const bool ok = ep.support.size() == n * k && ep.query.size() == 2 * k && pb.pairs.size(0) == 2 * n * k * k &&
                        pb.targets.numel() == 2 * n * k * k && !held_in_support &&
                        records.size() == ep.support.size() + ep.query.size();
        bad += ok ? 0 : 1;
      }
    }
  }
  return {bad == 0, std::to_string(bad) + " violations in " + std::to_string(total) + " episodes"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(107);
  double eer_diff = 0.0, dcf_diff = 0.0;
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t nb = 1 + rng() % 100, ns = 1 + rng() % 100;
    // Coarse grid so ties are common.
    std::uniform_int_distribution<int> grid(0, 1 + static_cast<int>(rng() % 40));
    const double shift = std::uniform_real_distribution<double>(-0.5, 1.5)(rng);
    std::vector<double> b(nb), s(ns);
    for (auto& v : b) v = grid(rng) / 10.0 + shift;
    for (auto& v : s) v = grid(rng) / 10.0;
    const EerResult r = compute_eer(b, s);
    const auto o = oracle::eer_sweep(b, s);
    eer_diff = std::max({eer_diff, std::abs(r.eer - o.eer), std::abs(r.threshold - o.threshold)});
    dcf_diff = std::max(dcf_diff, std::abs(compute_min_tdcf(b, s, TdcfParams{}).min_tdcf -
                                           oracle::min_tdcf_sweep(b, s, oracle::AsvPoint{})));
  }
  const double perfect_eer = compute_eer({0.9, 0.8, 0.7}, {0.1, 0.2}).eer;
  const double perfect_dcf = compute_min_tdcf({0.9, 0.8, 0.7}, {0.1, 0.2}, TdcfParams{}).min_tdcf;
  const bool ok = eer_diff == 0.0 && dcf_diff <= 1e-12 && perfect_eer == 0.0 && perfect_dcf == 0.0;
  return {ok, "EER diff " + fmt("%.1e", eer_diff) + ", t-DCF diff " + fmt("%.1e", dcf_diff) + ", separated " +
                  fmt("%g", perfect_eer) + "/" + fmt("%g", perfect_dcf)};
}

// Shared with the report-format criterion.
std::vector<BreakdownReport> desk_reports;

bool well_formed(const BreakdownReport& r, const std::vector<std::string>& attacks) {
  if (r.per_attack.size() != attacks.size()) return false;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    if (r.per_attack[i].attack != attacks[i] || r.per_attack[i].trials == 0) return false;
    if (!(r.per_attack[i].eer >= 0.0 && r.per_attack[i].eer <= 1.0)) return false;
  }
  const std::string header = r.text_table().substr(0, r.text_table().find('\n'));
  for (const auto& a : attacks) {
    if (header.find(a) == std::string::npos) return false;
  }
  return r.pooled_eer >= 0.0 && r.pooled_eer <= 1.0 && r.min_tdcf >= 0.0 && std::isfinite(r.min_tdcf) &&
         header.find("min t-DCF") != std::string::npos && header.find("pooled EER") != std::string::npos;
}

Outcome desk_end_to_end() {
  const auto t0 = Clock::now();
  const TrainConfig base = TrainConfig::load(SIMSPOOF_DESK_CONFIG);
  const SynthConfig& sc = base.data.synth;
  if (base.loss != LossMode::aam_mse || base.encoder.num_blocks != 2 || base.n_types != 6 || base.k_shot != 2 ||
      base.epochs > 30 || sc.n_train_attacks != 6 || sc.n_eval_attacks != 2 || sc.samples_per_class != 20 ||
      base.encoder.segment_length != 1600) {
    return {false, "desk config does not match the required setup"};
  }
  const Corpus corpus = load_data(base.data);
  const auto eval = corpus.indices(Partition::eval);
  const auto attacks = corpus.attack_ids(Partition::eval);

  struct Run {
    std::string name;
    TrainResult result;
    BreakdownReport report;
  };
  auto run_one = [&](const TrainConfig& cfg, std::uint64_t seed, const std::string& name) {
    Model model(cfg, seed);
    Run r{name, train(model, corpus), {}};
    r.report = breakdown_report(score_records(model, corpus, eval), cfg.tdcf, attacks, name);
    std::printf("     %-14s best epoch %2zu  dev EER %5.2f%%  eval pooled EER %5.2f%%  min t-DCF %.4f\n", name.c_str(),
                r.result.best_epoch, 100.0 * r.result.best_dev_eer, 100.0 * r.report.pooled_eer, r.report.min_tdcf);
    std::fflush(stdout);
    return r;
  };

  std::vector<Run> joint;
  for (std::uint64_t seed : {1, 2, 3}) joint.push_back(run_one(base, seed, "aam+mse/s" + std::to_string(seed)));
  TrainConfig wce = base, aam = base;
  wce.loss = LossMode::wce;
  aam.loss = LossMode::aam;
  const Run rw = run_one(wce, 1, "wce/s1");
  const Run ra = run_one(aam, 1, "aam/s1");

  double worst_drop = 1.0, best_eer = 1.0;
  for (const auto& r : joint) {
    const double l0 = r.result.log.front().loss.total, lb = r.result.log.at(r.result.best_epoch).loss.total;
    worst_drop = std::min(worst_drop, (l0 - lb) / l0);
    best_eer = std::min(best_eer, r.report.pooled_eer);
  }
  bool formed = true;
  for (const Run* r : std::vector<const Run*>{&joint[0], &joint[1], &joint[2], &rw, &ra}) {
    formed = formed && well_formed(r->report, attacks);
    desk_reports.push_back(r->report);
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_drop >= 0.5 && best_eer <= 0.10 && formed && secs < 600.0;
  return {ok, "(a) smallest loss drop " + fmt("%.1f%%", 100.0 * worst_drop) + ", (b) best pooled EER " +
                  fmt("%.2f%%", 100.0 * best_eer) + ", (c) reports " + (formed ? "well formed" : "MALFORMED") +
                  ", wall " + fmt("%.0f s", secs)};
}

Outcome determinism() {
  TrainConfig cfg = TrainConfig::load(SIMSPOOF_DESK_CONFIG);
  cfg.epochs = 1;
  cfg.parallel = false;
  const Corpus a = load_data(cfg.data), b = load_data(cfg.data);
  bool corpus_same = a.records == b.records && a.waveforms.size() == b.waveforms.size();
  for (std::size_t i = 0; corpus_same && i < a.waveforms.size(); ++i) {
    corpus_same = a.waveforms[i].size() == b.waveforms[i].size() &&
                  std::memcmp(a.waveforms[i].data(), b.waveforms[i].data(), a.waveforms[i].size() * sizeof(double)) == 0;
  }
  std::vector<std::vector<std::size_t>> sa, sb;
  TrainHooks ha, hb;
  ha.on_batch = [&](const std::vector<std::size_t>& r) { sa.push_back(r); };
  hb.on_batch = [&](const std::vector<std::size_t>& r) { sb.push_back(r); };
  Model ma(cfg, 11), mb(cfg, 11);
  const TrainResult ra = train(ma, a, ha), rb = train(mb, b, hb);
  const double la = ra.log[0].loss.total, lb = rb.log[0].loss.total;
  const bool loss_same = std::memcmp(&la, &lb, sizeof la) == 0;
  const bool ok = corpus_same && sa == sb && !sa.empty() && loss_same;
  return {ok, std::string("corpus ") + (corpus_same ? "identical" : "DIFFERS") + ", " + std::to_string(sa.size()) +
                  " episodes " + (sa == sb ? "identical" : "DIFFER") + ", epoch-0 loss " + fmt("%.17g", la) +
                  (loss_same ? " identical" : " DIFFERS")};
}

Outcome report_format() {
  ScoreSet s;
  const char* attacks[] = {"A07", "A08", "A09"};
  std::mt19937_64 rng(110);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < 30; ++i) s.push_back({"B" + std::to_string(i), kBonafideLabel, 1.0 + nd(rng)});
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 10; ++i) s.push_back({std::string(attacks[a]) + "_" + std::to_string(i), attacks[a], nd(rng)});
  const BreakdownReport r = breakdown_report(s, TdcfParams{}, {"A07", "A08", "A09"}, "demo");
  bool ok = well_formed(r, {"A07", "A08", "A09"});
  const std::string table = r.text_table();
  const std::string header = table.substr(0, table.find('\n'));
  // Attack columns, then min t-DCF, then pooled EER.
  ok = ok && header.find("A09") < header.find("min t-DCF") && header.find("min t-DCF") < header.find("pooled EER");
  std::istringstream csv(r.csv());
  std::string csv_header, csv_row;
  std::getline(csv, csv_header);
  std::getline(csv, csv_row);
  ok = ok && csv_header == "system,A07,A08,A09,min_tdcf,pooled_eer" &&
       std::count(csv_row.begin(), csv_row.end(), ',') == 5;
  for (const auto& d : desk_reports) ok = ok && well_formed(d, {"A07", "A08"});
  std::printf("%s", table.c_str());
  return {ok, "3 attack columns plus min t-DCF and pooled EER; " + std::to_string(desk_reports.size()) +
                  " desk reports checked"};
}

}  // namespace

int main() {
  run(1, "SimAM closed form vs descent oracle", simam_closed_form);
  run(2, "uniform channel law", uniform_channel);
  run(3, "gradient correctness", gradients);
  run(4, "AAM degeneracy", aam_degeneracy);
  run(5, "AAM scale invariance", aam_scale_invariance);
  run(6, "episode combinatorics", episode_combinatorics);
  run(7, "metric oracles", metric_oracles);
  run(8, "desk-scale end to end", desk_end_to_end);
  run(9, "determinism", determinism);
  run(10, "report format", report_format);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
