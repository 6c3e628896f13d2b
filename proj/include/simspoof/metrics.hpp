#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace simspoof {

// Attack label carried by bona fide trials in score files and reports.
inline const std::string kBonafideLabel = "bonafide";

struct ScoredTrial {
  std::string trial_id;
  std::string attack;  // kBonafideLabel or an attack id
  double score = 0.0;  // higher = more bona fide
  bool bonafide() const { return attack == kBonafideLabel; }
};

using ScoreSet = std::vector<ScoredTrial>;

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Sweeps the sorted distinct scores plus +inf as thresholds (accept iff
// score >= t). At the first threshold where the miss rate reaches the
// false-accept rate, interpolates linearly from the previous threshold.
EerResult compute_eer(const std::vector<double>& bonafide, const std::vector<double>& spoof);
EerResult compute_eer(const ScoreSet& scores);

// Tandem cost with a fixed ASV operating point. Default ASV rates are
// placeholders, set them from the ASV system actually paired with the CM.
struct TdcfParams {
  double p_spoof = 0.05;
  double p_target_given_bonafide = 0.99;
  double c_miss_asv = 1.0;
  double c_fa_asv = 10.0;
  double c_miss_cm = 1.0;
  double c_fa_cm = 10.0;
  double p_miss_asv = 0.01;
  double p_fa_asv = 0.01;
  double p_miss_spoof_asv = 0.05;

  void validate() const;
  // Weights applied to the CM miss and false-accept rates.
  double c1() const;
  double c2() const;
};

struct TdcfResult {
  double min_tdcf = 0.0;
  double threshold = 0.0;
};

// (c1 * P_miss(t) + c2 * P_fa(t)) / min(c1, c2), minimised over thresholds.
// Throws when either weight is not positive.
TdcfResult compute_min_tdcf(const std::vector<double>& bonafide, const std::vector<double>& spoof,
                            const TdcfParams& p);
TdcfResult compute_min_tdcf(const ScoreSet& scores, const TdcfParams& p);

struct AttackEer {
  std::string attack;
  std::size_t trials = 0;
  double eer = 0.0;
};

struct BreakdownReport {
  std::string system = "system";
  std::vector<AttackEer> per_attack;  // sorted by attack id
  double pooled_eer = 0.0;
  double min_tdcf = 0.0;
  std::vector<std::string> warnings;

  // One row per system, one EER (%) column per attack, then min t-DCF and
  // pooled EER (%).
  std::string text_table() const;
  std::string csv() const;
};

// `expected_attacks` lists attacks that should appear; any without trials is
// omitted from the table with a warning.
BreakdownReport breakdown_report(const ScoreSet& scores, const TdcfParams& p = {},
                                 const std::vector<std::string>& expected_attacks = {},
                                 const std::string& system = "system");

void write_scores(std::ostream& out, const ScoreSet& scores);
void write_scores(const std::string& path, const ScoreSet& scores);
ScoreSet read_scores(std::istream& in);
ScoreSet read_scores(const std::string& path);

}  // namespace simspoof
