#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nlual {

/// Per-utterance error counts of systems A and B over the same test set.
/// Counts may be fractional when averaged over repeated runs.
struct PairedErrors {
  std::vector<std::string> ids;
  std::vector<double> errors_a;
  std::vector<double> errors_b;
  std::vector<double> reference_slots;

  void validate() const;
  std::size_t size() const { return errors_a.size(); }
};

struct WilcoxonResult {
  double statistic = 0.0;  // W+, the sum of ranks of positive differences
  double p_value = 1.0;
  std::size_t n = 0;       // nonzero differences
  bool exact = false;
};

/// Two-sided signed-rank test. Zero differences are dropped, ties share the
/// average rank; exact null distribution for n <= 25, normal approximation
/// (tie-corrected, continuity-corrected) above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs);

struct BootstrapResult {
  double p_value = 1.0;
  double observed_delta = 0.0;  // SER_A − SER_B on the full sample
  double mean_delta = 0.0;
  double ci_low = 0.0;   // 2.5th percentile of resampled deltas
  double ci_high = 0.0;  // 97.5th percentile
  std::size_t resamples = 0;
};

/// Paired bootstrap over utterances. p is twice the fraction of resamples
/// whose SER_A − SER_B does not share the full-sample sign, clamped to 1.
BootstrapResult bootstrap_significance(const PairedErrors& pairs, std::size_t resamples,
                                       std::uint64_t seed);

/// 100 · (base − new) / base. Throws when base is not positive.
double relative_reduction(double base_ser, double new_ser);

}  // namespace nlual
