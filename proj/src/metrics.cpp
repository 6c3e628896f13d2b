#include "simspoof/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace simspoof {

namespace {

struct Sweep {
  std::vector<double> thresholds;  // distinct scores ascending, then +inf
  std::vector<double> miss;        // bona fide rejected
  std::vector<double> false_accept;
};

void check_classes(const std::vector<double>& bonafide, const std::vector<double>& spoof) {
  if (bonafide.empty() || spoof.empty()) {
    throw std::invalid_argument("metrics need at least one bona fide and one spoof trial (got " +
                                std::to_string(bonafide.size()) + " and " + std::to_string(spoof.size()) + ")");
  }
  for (const auto* v : {&bonafide, &spoof}) {
    for (double s : *v) {
      if (!std::isfinite(s)) throw std::invalid_argument("non-finite score");
    }
  }
}

Sweep sweep(std::vector<double> bonafide, std::vector<double> spoof) {
  check_classes(bonafide, spoof);
  std::sort(bonafide.begin(), bonafide.end());
  std::sort(spoof.begin(), spoof.end());
  Sweep s;
  std::merge(bonafide.begin(), bonafide.end(), spoof.begin(), spoof.end(), std::back_inserter(s.thresholds));
  s.thresholds.erase(std::unique(s.thresholds.begin(), s.thresholds.end()), s.thresholds.end());
  s.thresholds.push_back(std::numeric_limits<double>::infinity());
  const double nb = static_cast<double>(bonafide.size()), ns = static_cast<double>(spoof.size());
  std::size_t ib = 0, is = 0;
  for (double t : s.thresholds) {
    while (ib < bonafide.size() && bonafide[ib] < t) ++ib;
    while (is < spoof.size() && spoof[is] < t) ++is;
    s.miss.push_back(static_cast<double>(ib) / nb);
    s.false_accept.push_back(static_cast<double>(spoof.size() - is) / ns);
  }
  return s;
}

void split(const ScoreSet& scores, std::vector<double>& bonafide, std::vector<double>& spoof) {
  for (const auto& t : scores) (t.bonafide() ? bonafide : spoof).push_back(t.score);
}

std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

EerResult compute_eer(const std::vector<double>& bonafide, const std::vector<double>& spoof) {
  const Sweep s = sweep(bonafide, spoof);
  // Miss rate starts at 0 and the false-accept rate at 1, and at +inf the
  // order is reversed, so a crossing index k >= 1 always exists.
  std::size_t k = 1;
  while (s.miss[k] < s.false_accept[k]) ++k;
  const double d0 = s.miss[k - 1] - s.false_accept[k - 1];
  const double d1 = s.miss[k] - s.false_accept[k];
  const double alpha = d0 / (d0 - d1);
  EerResult r;
  r.eer = s.miss[k - 1] + alpha * (s.miss[k] - s.miss[k - 1]);
  const double t0 = s.thresholds[k - 1], t1 = s.thresholds[k];
  r.threshold = std::isinf(t1) ? t0 : t0 + alpha * (t1 - t0);
  return r;
}

EerResult compute_eer(const ScoreSet& scores) {
  std::vector<double> b, s;
  split(scores, b, s);
  return compute_eer(b, s);
}

void TdcfParams::validate() const {
  for (double p : {p_spoof, p_target_given_bonafide, p_miss_asv, p_fa_asv, p_miss_spoof_asv}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("t-DCF probabilities must lie in [0, 1]");
  }
  for (double c : {c_miss_asv, c_fa_asv, c_miss_cm, c_fa_cm}) {
    if (!(c > 0.0)) throw std::invalid_argument("t-DCF costs must be positive");
  }
  if (!(c1() > 0.0) || !(c2() > 0.0)) {
    throw std::domain_error("t-DCF normalisation is degenerate (c1 = " + std::to_string(c1()) +
                            ", c2 = " + std::to_string(c2()) + ")");
  }
}

double TdcfParams::c1() const {
  const double p_target = p_target_given_bonafide * (1.0 - p_spoof);
  const double p_nontarget = (1.0 - p_target_given_bonafide) * (1.0 - p_spoof);
  return p_target * (c_miss_cm - c_miss_asv * p_miss_asv) - p_nontarget * c_fa_asv * p_fa_asv;
}

double TdcfParams::c2() const { return c_fa_cm * p_spoof * (1.0 - p_miss_spoof_asv); }

TdcfResult compute_min_tdcf(const std::vector<double>& bonafide, const std::vector<double>& spoof,
                            const TdcfParams& p) {
  p.validate();
  const Sweep s = sweep(bonafide, spoof);
  const double c1 = p.c1(), c2 = p.c2(), norm = std::min(c1, c2);
  TdcfResult r{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    const double cost = (c1 * s.miss[k] + c2 * s.false_accept[k]) / norm;
    if (cost < r.min_tdcf) r = {cost, s.thresholds[k]};
  }
  return r;
}

TdcfResult compute_min_tdcf(const ScoreSet& scores, const TdcfParams& p) {
  std::vector<double> b, s;
  split(scores, b, s);
  return compute_min_tdcf(b, s, p);
}

BreakdownReport breakdown_report(const ScoreSet& scores, const TdcfParams& p,
                                 const std::vector<std::string>& expected_attacks, const std::string& system) {
  BreakdownReport report;
  report.system = system;
  std::vector<double> bonafide, all_spoof;
  std::map<std::string, std::vector<double>> by_attack;
  for (const auto& t : scores) {
    if (t.bonafide()) {
      bonafide.push_back(t.score);
    } else {
      all_spoof.push_back(t.score);
      by_attack[t.attack].push_back(t.score);
    }
  }
  for (const auto& a : expected_attacks) {
    if (a != kBonafideLabel && !by_attack.count(a)) report.warnings.push_back("attack " + a + " has no trials, omitted");
  }
  for (const auto& [attack, s] : by_attack) {
    report.per_attack.push_back({attack, s.size(), compute_eer(bonafide, s).eer});
  }
  report.pooled_eer = compute_eer(bonafide, all_spoof).eer;
  report.min_tdcf = compute_min_tdcf(bonafide, all_spoof, p).min_tdcf;
  return report;
}

std::string BreakdownReport::text_table() const {
  std::vector<std::string> header{"System"}, row{system};
  for (const auto& a : per_attack) {
    header.push_back(a.attack);
    row.push_back(percent(a.eer));
  }
  header.push_back("min t-DCF");
  row.push_back(fixed4(min_tdcf));
  header.push_back("pooled EER");
  row.push_back(percent(pooled_eer));
  std::ostringstream os;
  std::string rule;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::size_t w = std::max(header[i].size(), row[i].size());
    os << (i ? " | " : "") << std::setw(static_cast<int>(w)) << header[i];
    rule += (i ? "-+-" : "") + std::string(w, '-');
  }
  os << '\n' << rule << '\n';
  for (std::size_t i = 0; i < row.size(); ++i) {
    const std::size_t w = std::max(header[i].size(), row[i].size());
    os << (i ? " | " : "") << std::setw(static_cast<int>(w)) << row[i];
  }
  os << "\n(EER in %)\n";
  return os.str();
}

std::string BreakdownReport::csv() const {
  std::ostringstream os;
  os << "system";
  for (const auto& a : per_attack) os << ',' << a.attack;
  os << ",min_tdcf,pooled_eer\n" << system;
  for (const auto& a : per_attack) os << ',' << percent(a.eer);
  os << ',' << fixed4(min_tdcf) << ',' << percent(pooled_eer) << '\n';
  return os.str();
}

void write_scores(std::ostream& out, const ScoreSet& scores) {
  for (const auto& t : scores) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", t.score);
    out << t.trial_id << ' ' << t.attack << ' ' << buf << '\n';
  }
}

void write_scores(const std::string& path, const ScoreSet& scores) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write score file " + path);
  write_scores(out, scores);
  if (!out) throw std::runtime_error("error writing score file " + path);
}

ScoreSet read_scores(std::istream& in) {
  ScoreSet out;
  std::string line;
  std::set<std::string> seen;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    std::istringstream ls(line);
    ScoredTrial t;
    std::string score, extra;
    if (!(ls >> t.trial_id)) continue;
    if (!(ls >> t.attack >> score) || (ls >> extra)) {
      throw std::invalid_argument("score file line " + std::to_string(n) + ": expected <trial_id> <attack> <score>");
    }
    std::size_t used = 0;
    try {
      t.score = std::stod(score, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != score.size() || !std::isfinite(t.score)) {
      throw std::invalid_argument("score file line " + std::to_string(n) + ": bad score '" + score + "'");
    }
    if (!seen.insert(t.trial_id).second) {
      throw std::invalid_argument("score file line " + std::to_string(n) + ": duplicate trial " + t.trial_id);
    }
    out.push_back(std::move(t));
  }
  return out;
}

ScoreSet read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read score file " + path);
  return read_scores(in);
}

}  // namespace simspoof
