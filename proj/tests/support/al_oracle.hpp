#pragma once
// Expected selection wiring, transcribed independently of the library's
// algorithm table, plus a from-scratch reimplementation of one selection
// round used to check select_batch end to end.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nlual/al.hpp"

namespace oracle {

struct ExpectedRow {
  std::string name;
  bool lg, sq, hg, crf;
  std::string filter;  // "lg>0", "maj", "dis"
  std::string scorer;  // "y_lg", "SA", "AS", "CG"
};

inline const std::vector<ExpectedRow>& expected_table() {
  static const std::vector<ExpectedRow> rows{
      {"AL-Logistic", true, false, false, false, "lg>0", "y_lg"},
      {"QBC-SA", true, true, true, false, "dis", "SA"},
      {"QBC-AS", true, true, true, false, "dis", "AS"},
      {"Majority-SA", true, true, true, false, "maj", "SA"},
      {"Majority-AS", true, true, true, false, "maj", "AS"},
      {"QBC-CRF", true, true, true, true, "dis", "CG"},
      {"Majority-CRF", true, true, true, true, "maj", "CG"},
  };
  return rows;
}

inline int sgn(double x) { return x >= 0 ? 1 : -1; }

inline bool expected_filter(const std::string& f, double lg, double sq, double hg) {
  if (f == "lg>0") return sgn(lg) > 0;
  const int s = sgn(lg) + sgn(sq) + sgn(hg);
  if (f == "maj") return s > 0;
  return s == 1 || s == -1;
}

inline double expected_score(const std::string& k, double lg, double sq, double hg, double p_crf) {
  if (k == "y_lg") return lg;
  if (k == "SA") return std::abs(lg) + std::abs(sq) + std::abs(hg);
  if (k == "AS") return std::abs(lg + sq + hg);
  return p_crf / (1 + std::exp(-lg));
}

/// The m ids select_batch should return, recomputed from raw model scores.
inline std::vector<std::string> expected_selection(const ExpectedRow& row, const nlual::SelectionState& state,
                                                   const nlual::Committee& c, std::size_t m) {
  struct Cand {
    double score;
    std::string id;
  };
  std::vector<Cand> kept;
  for (const auto& e : state.pool()) {
    const double lg = nlual::raw_score(c.lg, e.ngrams);
    const double sq = c.sq ? nlual::raw_score(*c.sq, e.ngrams) : 0.0;
    const double hg = c.hg ? nlual::raw_score(*c.hg, e.ngrams) : 0.0;
    if (!expected_filter(row.filter, lg, sq, hg)) continue;
    const double p = row.crf ? nlual::sequence_confidence(*c.crf, e.token_feats) : 1.0;
    kept.push_back({expected_score(row.scorer, lg, sq, hg, p), e.candidate.id});
  }
  std::sort(kept.begin(), kept.end(), [](const Cand& a, const Cand& b) {
    return a.score != b.score ? a.score < b.score : a.id < b.id;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kept.size() && i < m; ++i) out.push_back(kept[i].id);
  return out;
}

}  // namespace oracle
