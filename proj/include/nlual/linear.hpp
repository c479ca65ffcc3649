#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlual/featurize.hpp"

namespace nlual {

enum class LossKind { logistic, squared, hinge };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(std::string_view s);

struct TrainConfig {
  int epochs = 5;
  double learning_rate = 0.05;
  double l2 = 1e-6;
  std::uint64_t seed = 0;
  std::optional<double> neg_pos_ratio_cap = 10.0;

  void validate() const;
};

/// Per-epoch mean training loss, as observed during the SGD pass.
struct TrainStats {
  std::vector<double> epoch_loss;
};

/// Binary linear classifier: score = w·x + b.
struct LinearModel {
  LossKind loss_kind = LossKind::logistic;
  int hash_bits = 18;
  std::vector<double> weights;
  double bias = 0.0;

  static LinearModel zeros(LossKind kind, int hash_bits);
  bool operator==(const LinearModel&) const = default;
};

double raw_score(const LinearModel& model, const FeatureVector& fv);

double sigmoid_prob(double score);

/// Per-example loss for label in {-1, +1}. Squared loss is (s - y)^2 / 2.
double loss_value(LossKind kind, double score, int label);

/// Scalar g with d loss / d w = g · x (and d loss / d b = g).
double loss_gradient(LossKind kind, double score, int label);

struct LabeledVector {
  const FeatureVector* features;
  int label;  // -1 or +1
};

/// Full-batch objective: mean loss + l2/2 · ||w||² (bias unregularized).
double binary_objective(const LinearModel& model, std::span<const LabeledVector> data, double l2);

/// Gradient of binary_objective; returns (dense weight gradient, bias gradient).
std::pair<std::vector<double>, double> binary_objective_gradient(
    const LinearModel& model, std::span<const LabeledVector> data, double l2);

/// SGD with seeded per-epoch shuffling. Negatives are downsampled first when
/// neg_pos_ratio_cap is set.
LinearModel train_binary(std::span<const FeatureVector* const> positives,
                         std::span<const FeatureVector* const> negatives, LossKind kind,
                         int hash_bits, const TrainConfig& config,
                         TrainStats* stats = nullptr);

/// Seeded downsample of negatives to at most cap · n_positives, preserving order.
std::vector<std::size_t> downsample_indices(std::size_t n_negatives, std::size_t n_positives,
                                            std::optional<double> cap, std::uint64_t seed);

/// Multinomial logistic regression. weights are laid out feature-major:
/// weights[feature * K + k].
struct MaxEntModel {
  std::vector<std::string> class_labels;
  int hash_bits = 18;
  std::vector<double> weights;
  std::vector<double> bias;

  static MaxEntModel zeros(std::vector<std::string> labels, int hash_bits);
  std::size_t num_classes() const { return class_labels.size(); }
  std::optional<std::size_t> class_index(std::string_view label) const;
  bool operator==(const MaxEntModel&) const = default;
};

std::vector<double> maxent_scores(const MaxEntModel& model, const FeatureVector& fv);
std::vector<double> softmax(std::span<const double> scores);
std::vector<double> predict_maxent(const MaxEntModel& model, const FeatureVector& fv);

struct LabeledExample {
  const FeatureVector* features;
  std::string label;
};

/// Mean cross-entropy + l2/2 · ||W||².
double maxent_objective(const MaxEntModel& model, std::span<const LabeledExample> data, double l2);
std::pair<std::vector<double>, std::vector<double>> maxent_objective_gradient(
    const MaxEntModel& model, std::span<const LabeledExample> data, double l2);

/// Class labels are the sorted distinct labels of the examples.
/// neg_pos_ratio_cap is ignored here.
MaxEntModel train_maxent(std::span<const LabeledExample> examples, int hash_bits,
                         const TrainConfig& config, TrainStats* stats = nullptr);

}  // namespace nlual
