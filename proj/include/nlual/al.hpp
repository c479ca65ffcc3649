#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlual/corpus.hpp"
#include "nlual/crf.hpp"
#include "nlual/featurize.hpp"
#include "nlual/linear.hpp"
#include "nlual/nlu.hpp"

namespace nlual {

enum class FilterKind { logistic_sign, majority, disagreement };
enum class ScorerKind { raw, sum_of_absolutes, absolute_sum, crf_gated };

std::string to_string(FilterKind k);
std::string to_string(ScorerKind k);

/// One row of the algorithm table: which selection models are trained and
/// how their scores are filtered and ranked. Random baselines have no models.
struct AlgorithmSpec {
  std::string_view name;
  bool random = false;
  bool uses_logistic = false;
  bool uses_squared_hinge = false;
  bool uses_crf = false;
  FilterKind filter = FilterKind::majority;
  ScorerKind scorer = ScorerKind::raw;
};

std::span<const AlgorithmSpec> algorithm_table();
/// Throws ConfigError for unknown names.
const AlgorithmSpec& algorithm_spec(std::string_view name);

struct AlConfig {
  std::string name = "Majority-CRF";
  int iterations = 6;
  std::size_t batch_size = 100;
  std::uint64_t seed = 0;
  FeatureConfig features{{1, 2, 3}, 18, true};
  FeatureConfig crf_features{{1}, 16, true};
  TrainConfig committee_train{5, 0.05, 1e-6, 0, 10.0};
  TrainConfig crf_train{5, 0.05, 1e-6, 0, std::nullopt};

  void validate() const;
  const AlgorithmSpec& spec() const { return algorithm_spec(name); }
};

struct CommitteeScores {
  double y_lg = 0.0;
  std::optional<double> y_sq;
  std::optional<double> y_hg;
  std::optional<double> p_crf;
  double p_lg = 0.5;

  static CommitteeScores make(double y_lg, std::optional<double> y_sq = std::nullopt,
                              std::optional<double> y_hg = std::nullopt,
                              std::optional<double> p_crf = std::nullopt);
};

/// sgn with sgn(0) = +1.
int vote(double score);

bool apply_filter(FilterKind kind, const CommitteeScores& s);
/// Lower is higher priority. crf_gated without p_crf throws.
double apply_scorer(ScorerKind kind, const CommitteeScores& s);

struct Committee {
  LinearModel lg;
  std::optional<LinearModel> sq;
  std::optional<LinearModel> hg;
  std::optional<CrfModel> crf;

  std::size_t size() const { return 1 + (sq ? 1 : 0) + (hg ? 1 : 0) + (crf ? 1 : 0); }
  /// Binary scores only; p_crf is filled separately by the caller when needed.
  CommitteeScores score(const FeatureVector& fv) const;
};

struct AuditRecord {
  std::string id;
  int iteration = 0;
  std::string target;
  std::optional<double> y_lg;
  std::optional<double> y_sq;
  std::optional<double> y_hg;
  std::optional<double> p_crf;
  bool filter_passed = true;
  std::size_t rank = 0;

  bool operator==(const AuditRecord&) const = default;
};

std::string audit_record_to_json(const AuditRecord& r);
AuditRecord audit_record_from_json(std::string_view line);

struct Batch {
  std::vector<std::string> ids;
  std::vector<AuditRecord> records;  // parallel to ids
  std::vector<std::string> warnings;
};

/// A pool candidate with its features precomputed.
struct PoolEntry {
  PoolCandidate candidate;
  FeatureVector ngrams;
  TokenFeatures token_feats;
};

/// D (annotated data), P (unannotated pool), iteration counter and audit log.
class SelectionState {
 public:
  SelectionState(Corpus annotated, std::span<const PoolCandidate> pool, const AlConfig& config);

  const Corpus& annotated() const { return annotated_; }
  std::span<const FeatureVector> annotated_features() const { return annotated_features_; }
  std::span<const PoolEntry> pool() const { return pool_; }
  bool in_pool(std::string_view id) const { return pool_index_.count(std::string(id)) != 0; }
  int iteration() const { return iteration_; }
  const std::vector<AuditRecord>& audit() const { return audit_; }

  /// D ← D ∪ C, P ← P \ C, iteration += 1. Throws listing ids that are missing
  /// an annotation or no longer in the pool.
  void advance(const Batch& batch, const std::unordered_map<std::string, Utterance>& annotations);

 private:
  void reindex();

  Corpus annotated_;
  std::vector<FeatureVector> annotated_features_;
  std::vector<PoolEntry> pool_;
  std::unordered_map<std::string, std::size_t> pool_index_;
  FeatureConfig features_;
  int iteration_ = 0;
  std::vector<AuditRecord> audit_;
};

/// Positives: D utterances of the target domain. Negatives: everything else,
/// including noise. The CRF, when configured, sees positives only.
Committee train_selection_models(const SelectionState& state, std::string_view target,
                                 const AlConfig& config, std::uint64_t seed);

/// Scores the whole pool, keeps filter-passing candidates and returns the m
/// smallest by (score, id).
Batch select_batch(const SelectionState& state, const Committee& committee, const AlConfig& config,
                   std::string_view target);

/// Seeded sample without replacement, in sampled order.
Batch random_uniform(const SelectionState& state, std::size_t n, std::uint64_t seed,
                     std::string_view target = "");

/// Seeded sample from candidates whose top-1 interpreted domain is target.
Batch random_domain(const SelectionState& state, std::string_view target, std::size_t n,
                    std::uint64_t seed, const NluSystem& nlu);

/// As random_domain, with precomputed top-1 domains keyed by candidate id.
Batch random_domain(const SelectionState& state, std::string_view target, std::size_t n,
                    std::uint64_t seed, const std::unordered_map<std::string, std::string>& top_domain);

/// Union by id in batch order; the first batch containing an id keeps its record.
Batch dedupe_multi_target(std::span<const Batch> batches);

}  // namespace nlual
