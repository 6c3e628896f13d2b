#include "simspoof/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <set>

#include "simspoof/attention.hpp"
#include "simspoof/encoder.hpp"
#include "simspoof/episodic.hpp"
#include "simspoof/grad_check.hpp"
#include "simspoof/losses.hpp"
#include "simspoof/metrics.hpp"
#include "simspoof/ops.hpp"

namespace simspoof {

namespace {

constexpr double kGradTol = 1e-4;

double unif(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Tensor random_tensor(Shape shape, Rng& rng) { return normal_tensor(std::move(shape), 1.0, rng, false); }

// Gradient descent on the per-neuron energy with targets +1 (neuron t) and
// -1 (the others), started at zero with a step from the Hessian's largest
// eigenvalue.
double energy_by_descent(const std::vector<double>& others, double t, double lambda) {
  const double m = static_cast<double>(others.size());
  double sx = 0.0, sxx = 0.0;
  for (double x : others) {
    sx += x;
    sxx += x * x;
  }
  const double a = 2.0 * (sxx / m + t * t + lambda), b = 2.0 * (sx / m + t), c = 4.0;
  const double lmax = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  const double step = 1.0 / lmax;
  auto energy = [&](double w, double bias) {
    double e = 0.0;
    for (double x : others) e += (-1.0 - (w * x + bias)) * (-1.0 - (w * x + bias));
    return e / m + (1.0 - (w * t + bias)) * (1.0 - (w * t + bias)) + lambda * w * w;
  };
  double w = 0.0, bias = 0.0;
  for (int it = 0; it < 200000; ++it) {
    const double gw = 2.0 * ((sxx / m) * w + (sx / m) * bias + sx / m) - 2.0 * t * (1.0 - w * t - bias) + 2.0 * lambda * w;
    const double gb = 2.0 * ((sx / m) * w + bias + 1.0) - 2.0 * (1.0 - w * t - bias);
    w -= step * gw;
    bias -= step * gb;
    if (std::abs(gw) + std::abs(gb) < 1e-13) break;
  }
  return energy(w, bias);
}

EerResult eer_by_sweep(const std::vector<double>& bona, const std::vector<double>& spoof) {
  std::vector<double> t(bona);
  t.insert(t.end(), spoof.begin(), spoof.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  t.push_back(std::numeric_limits<double>::infinity());
  std::vector<double> frr, far;
  for (double th : t) {
    std::size_t rejected = 0, accepted = 0;
    for (double s : bona) rejected += s < th;
    for (double s : spoof) accepted += s >= th;
    frr.push_back(static_cast<double>(rejected) / static_cast<double>(bona.size()));
    far.push_back(static_cast<double>(accepted) / static_cast<double>(spoof.size()));
  }
  std::size_t k = 1;
  while (frr[k] < far[k]) ++k;
  const double d0 = frr[k - 1] - far[k - 1], d1 = frr[k] - far[k];
  const double alpha = d0 / (d0 - d1);
  return {frr[k - 1] + alpha * (frr[k] - frr[k - 1]),
          std::isinf(t[k]) ? t[k - 1] : t[k - 1] + alpha * (t[k] - t[k - 1])};
}

struct Recorder {
  std::vector<SelfCheckEntry> entries;

  // Runs `measure`; an exception counts as a failure with infinite error.
  void add(const std::string& name, double tolerance, const std::function<double()>& measure) {
    double v = std::numeric_limits<double>::infinity();
    try {
      v = measure();
    } catch (const std::exception&) {
    }
    entries.push_back({name, v, tolerance, v <= tolerance});
  }
};

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.segment_length = 80;
  cfg.sinc.num_filters = 8;
  cfg.sinc.kernel_len = 17;
  cfg.num_blocks = 2;
  cfg.filters_per_block = {2, 3};
  cfg.gru_hidden = 3;
  cfg.embed_dim = 4;
  return cfg;
}

}  // namespace

std::vector<SelfCheckEntry> selfcheck(std::uint64_t seed) {
  Recorder rec;
  Rng rng(seed);
  GradCheckOptions probe;
  probe.max_probes = 24;
  probe.seed = seed;

  const Tensor fmap = random_tensor({2, 4, 4, 5}, rng);
  const Tensor proj = random_tensor({2, 4, 4, 5}, rng);
  rec.add("grad simam", kGradTol, [&] {
    return grad_check([&](const Tensor& x) { return sum(mul(simam_refine(x, SimAmConfig{}), proj)); }, fmap);
  });
  {
    SeConfig se_cfg{2};
    const SeParams se = SeParams::create(4, se_cfg, rng);
    rec.add("grad se", kGradTol, [&] {
      return grad_check([&](const Tensor& x) { return sum(mul(se_refine(x, se, se_cfg), proj)); }, fmap);
    });
  }
  {
    CbamConfig cb_cfg{2, 3};
    const CbamParams cb = CbamParams::create(4, cb_cfg, rng);
    rec.add("grad cbam", kGradTol, [&] {
      return grad_check([&](const Tensor& x) { return sum(mul(cbam_refine(x, cb, cb_cfg), proj)); }, fmap);
    });
  }
  {
    ParameterSet ps;
    Encoder enc(tiny_encoder(), rng, &ps);
    const Tensor wave = random_tensor({2, 80}, rng);
    const Tensor out_proj = random_tensor({2, 4}, rng);
    rec.add("grad encoder (input)", kGradTol, [&] {
      return grad_check_detailed([&](const Tensor& w) { return sum(mul(enc.forward(w, true), out_proj)); }, wave, probe)
          .max_rel_error;
    });
    rec.add("grad encoder (parameters)", kGradTol, [&] {
      double worst = 0.0;
      for (const auto& nt : ps.parameters()) {
        Tensor p = nt.tensor;
        const auto r = grad_check_parameter([&] { return sum(mul(enc.forward(wave, true), out_proj)); }, p, probe);
        worst = std::max(worst, r.max_rel_error);
      }
      return worst;
    });
  }
  const std::vector<int> labels{0, 1, 1, 0, 1, 0};
  // Anchors about 80 degrees apart and embeddings near their bisector keep
  // every sample off the saturated part of the softmax, where gradients sink
  // below finite-difference noise.
  const AamHead head{Tensor::from({5, 2}, {1.0, 0.1, 0.2, 1.0, -0.1, 0.3, 0.3, -0.2, 0.1, 0.1}, true)};
  const Tensor emb = [&] {
    std::vector<double> v(30);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        v[i * 5 + j] = head.weight.at(j * 2) + head.weight.at(j * 2 + 1) + 0.3 * unif(rng, -1.0, 1.0);
      }
    }
    return Tensor::from({6, 5}, std::move(v));
  }();
  rec.add("grad aam loss", kGradTol, [&] {
    return grad_check([&](const Tensor& e) { return aam_loss(e, labels, head, AamConfig{}); }, emb);
  });
  {
    const Tensor scores = Tensor::from({4, 2}, {0.1, 0.7, 0.4, 0.9, 0.2, 0.5, 0.8, 0.3});
    const Tensor targets = Tensor::from({4, 2}, {1, 0, 0, 1, 1, 1, 0, 0});
    rec.add("grad relation mse", kGradTol, [&] {
      return grad_check([&](const Tensor& s) { return relation_mse_loss(s, targets); }, scores);
    });
  }
  {
    CorpusIndex idx;
    for (std::size_t i = 0; i < 4; ++i) idx.bonafide.push_back(i);
    for (std::size_t i = 0; i < 6; ++i) idx.by_attack["A0" + std::to_string(i / 2 + 1)].push_back(10 + i);
    const Episode ep = sample_episode(idx, 3, 1, rng);
    const RelationNet net = RelationNet::create(5, 8, rng);
    const Tensor e = random_tensor({ep.support.size() + ep.query.size(), 5}, rng);
    rec.add("grad joint objective", kGradTol, [&] {
      return grad_check(
          [&](const Tensor& x) {
            const PairBatch pb = build_pairs(ep, x, MatchGranularity::binary);
            const Tensor r = relation_score(pb.pairs, net, ep.support.size(), ep.query.size());
            return total_loss(aam_loss(x, ep.labels(), head, AamConfig{}), relation_mse_loss(r, pb.targets), 0.7);
          },
          e);
    });
  }

  rec.add("simam closed form vs descent", 1e-6, [&] {
    double worst = 0.0;
    for (int c = 0; c < 20; ++c) {
      const std::size_t m = 2 + c % 15;
      const double lambda = c % 3 == 0 ? 1e-4 : (c % 3 == 1 ? 1e-2 : 1.0);
      const Tensor ch = random_tensor({1, 1, m}, rng);
      const Tensor e = simam_energy(ch, SimAmConfig{lambda}, SimAmStatistics::excluding_target);
      for (std::size_t t = 0; t < m; ++t) {
        std::vector<double> others;
        for (std::size_t i = 0; i < m; ++i) {
          if (i != t) others.push_back(ch.at(i));
        }
        worst = std::max(worst, std::abs(e.at(t) - energy_by_descent(others, ch.at(t), lambda)));
      }
    }
    return worst;
  });
  rec.add("simam uniform channel", 0.0, [&] {
    const Tensor x = Tensor::full({1, 3, 4}, 0.37);
    const Tensor e = simam_energy(x, SimAmConfig{});
    const Tensor y = simam_refine(x, SimAmConfig{});
    const double gain = 1.0 / (1.0 + std::exp(-0.5));
    double worst = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      worst = std::max({worst, std::abs(e.at(i) - 2.0), std::abs(y.at(i) - 0.37 * gain)});
    }
    return worst;
  });
  rec.add("aam degenerate = cross-entropy", 1e-10, [&] {
    AamConfig cfg;
    cfg.margin_bonafide = cfg.margin_spoof = 0.0;
    cfg.class_weights = {1.0, 1.0};
    const double a = aam_loss(emb, labels, head, cfg).item();
    const double b = weighted_cross_entropy(scale(aam_cosines(emb, head), cfg.scale), labels, {1.0, 1.0}).item();
    return std::abs(a - b);
  });
  rec.add("aam scale invariance", 1e-12, [&] {
    std::vector<double> v(emb.data().begin(), emb.data().end());
    for (std::size_t i = 0; i < 5; ++i) v[i] *= 37.5;
    const double a = aam_loss(emb, labels, head, AamConfig{}).item();
    const double b = aam_loss(Tensor::from(emb.shape(), v), labels, head, AamConfig{}).item();
    return std::abs(a - b);
  });
  rec.add("episode pair counts", 0.0, [&] {
    CorpusIndex idx;
    for (std::size_t i = 0; i < 8; ++i) idx.bonafide.push_back(i);
    for (std::size_t i = 0; i < 24; ++i) idx.by_attack["A0" + std::to_string(i / 4 + 1)].push_back(100 + i);
    double bad = 0.0;
    for (std::size_t n = 2; n <= 6; ++n) {
      for (std::size_t k = 1; k <= 3; ++k) {
        for (int rep = 0; rep < 20; ++rep) {
          const Episode ep = sample_episode(idx, n, k, rng);
          const Tensor e = Tensor::zeros({ep.support.size() + ep.query.size(), 2});
          const PairBatch pb = build_pairs(ep, e, MatchGranularity::binary);
          std::set<std::size_t> records;
          bool held_in_support = false;
          for (const auto& m : ep.members()) records.insert(m.record);
          for (const auto& m : ep.support) held_in_support = held_in_support || m.attack == ep.held_out_type;
          const bool ok = ep.support.size() == n * k && ep.query.size() == 2 * k && pb.pairs.size(0) == 2 * n * k * k &&
                          !held_in_support && records.size() == ep.support.size() + ep.query.size();
          bad += ok ? 0.0 : 1.0;
        }
      }
    }
    return bad;
  });
  rec.add("eer vs sweep oracle", 0.0, [&] {
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> b(1 + rng() % 40), s(1 + rng() % 40);
      for (auto& v : b) v = std::round(unif(rng, 0.0, 10.0) + 1.0) / 4.0;
      for (auto& v : s) v = std::round(unif(rng, 0.0, 10.0)) / 4.0;
      const EerResult fast = compute_eer(b, s), slow = eer_by_sweep(b, s);
      worst = std::max({worst, std::abs(fast.eer - slow.eer), std::abs(fast.threshold - slow.threshold)});
    }
    return worst;
  });
  return rec.entries;
}

bool print_selfcheck(std::ostream& out, const std::vector<SelfCheckEntry>& entries) {
  bool all = true;
  for (const auto& e : entries) {
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-32s measured %.3e  tolerance %.1e", e.passed ? "PASS" : "FAIL",
                  e.name.c_str(), e.measured, e.tolerance);
    out << line << '\n';
    all = all && e.passed;
  }
  out << (all ? "all checks passed" : "some checks FAILED") << '\n';
  return all;
}

}  // namespace simspoof
