#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlual/featurize.hpp"
#include "nlual/linear.hpp"

namespace nlual {

/// Per-position hashed feature indices. Template v1: bias, current token,
/// previous token (or <s>), next token (or </s>), first/last indicators.
struct TokenFeatures {
  std::vector<std::vector<std::uint32_t>> positions;

  std::size_t size() const { return positions.size(); }
};

inline constexpr int kCrfTemplateVersion = 1;

TokenFeatures token_features(std::span<const std::string> tokens, const FeatureConfig& config);

/// Linear-chain CRF over a fixed label set.
///
/// Path score = start[y0] + Σ_t emission(t, y_t) + Σ_{t>0} transition[y_{t-1}, y_t].
/// With bio_constraints, I-X is only reachable from B-X or I-X and never
/// starts a sequence; those moves score -inf.
struct CrfModel {
  std::vector<std::string> labels;  // "O" first
  FeatureConfig features{{1}, 16, true};
  bool bio_constraints = true;
  std::vector<double> emission;    // [feature * Y + y]
  std::vector<double> transition;  // [prev * Y + cur]
  std::vector<double> start;       // [y]

  static CrfModel zeros(std::vector<std::string> labels, const FeatureConfig& features,
                        bool bio_constraints);
  std::size_t num_labels() const { return labels.size(); }
  std::size_t label_index(std::string_view label) const;  // throws when absent
  bool allowed_start(std::size_t y) const;
  bool allowed_transition(std::size_t prev, std::size_t cur) const;
  bool operator==(const CrfModel&) const = default;
};

/// Dense T×Y emission scores.
std::vector<double> emission_scores(const CrfModel& model, const TokenFeatures& feats);

/// Score of a label-index path (−inf when it violates constraints).
double path_score(const CrfModel& model, const TokenFeatures& feats,
                  std::span<const std::size_t> path);

double log_partition(const CrfModel& model, const TokenFeatures& feats);

struct ViterbiResult {
  std::vector<std::size_t> path;
  double score = 0.0;
};

ViterbiResult viterbi(const CrfModel& model, const TokenFeatures& feats);
std::vector<std::string> viterbi_labels(const CrfModel& model, const TokenFeatures& feats);

/// exp(best path score − log Z), in (0, 1].
double sequence_confidence(const CrfModel& model, const TokenFeatures& feats);

struct Marginals {
  double log_z = 0.0;
  std::vector<double> node;  // T×Y
  std::vector<double> edge;  // (T-1)×Y×Y, [t * Y*Y + prev * Y + cur] for edge (t, t+1)
};

Marginals forward_backward(const CrfModel& model, const TokenFeatures& feats);

struct CrfExample {
  TokenFeatures features;
  std::vector<std::string> labels;
};

/// Mean negative log-likelihood + l2/2 · ||θ||² over all weights.
double crf_objective(const CrfModel& model, std::span<const CrfExample> data, double l2);

struct CrfGradient {
  std::vector<double> emission;
  std::vector<double> transition;
  std::vector<double> start;
};

CrfGradient crf_objective_gradient(const CrfModel& model, std::span<const CrfExample> data,
                                   double l2);

/// Label set: "O" followed by the sorted distinct non-O gold labels.
std::vector<std::string> crf_label_set(std::span<const CrfExample> data);

/// SGD on the regularized NLL. Throws when a gold label is outside label_set.
CrfModel crf_train(std::span<const CrfExample> data, std::vector<std::string> label_set,
                   const FeatureConfig& features, const TrainConfig& config,
                   bool bio_constraints = true, TrainStats* stats = nullptr);

CrfModel crf_train(std::span<const CrfExample> data, const FeatureConfig& features,
                   const TrainConfig& config, bool bio_constraints = true,
                   TrainStats* stats = nullptr);

}  // namespace nlual
