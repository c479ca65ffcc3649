#include "nlual/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "nlual/common.hpp"
#include "scaled_weights.hpp"

namespace nlual {

using detail::ScaledWeights;

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::logistic: return "logistic";
    case LossKind::squared: return "squared";
    case LossKind::hinge: return "hinge";
  }
  return "logistic";
}

LossKind loss_kind_from_string(std::string_view s) {
  if (s == "logistic") return LossKind::logistic;
  if (s == "squared") return LossKind::squared;
  if (s == "hinge") return LossKind::hinge;
  throw Error("unknown loss kind '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(l2 >= 0)) throw ConfigError("l2 must be nonnegative");
  if (neg_pos_ratio_cap && !(*neg_pos_ratio_cap > 0)) {
    throw ConfigError("neg_pos_ratio_cap must be positive");
  }
}


LinearModel LinearModel::zeros(LossKind kind, int hash_bits) {
  LinearModel m;
  m.loss_kind = kind;
  m.hash_bits = hash_bits;
  m.weights.assign(std::size_t{1} << hash_bits, 0.0);
  return m;
}

double raw_score(const LinearModel& model, const FeatureVector& fv) {
  double s = model.bias;
  for (const auto& [i, v] : fv.entries()) s += model.weights[i] * v;
  return s;
}

double sigmoid_prob(double score) {
  if (score >= 0) return 1.0 / (1.0 + std::exp(-score));
  const double e = std::exp(score);
  return e / (1.0 + e);
}

double loss_value(LossKind kind, double score, int label) {
  const double y = label;
  switch (kind) {
    case LossKind::logistic: {
      const double m = -y * score;  // log(1 + e^m)
      return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    }
    case LossKind::squared: return 0.5 * (score - y) * (score - y);
    case LossKind::hinge: return std::max(0.0, 1.0 - y * score);
  }
  return 0;
}

double loss_gradient(LossKind kind, double score, int label) {
  switch (kind) {
    case LossKind::logistic: return sigmoid_prob(score) - (label + 1) / 2.0;
    case LossKind::squared: return score - label;
    case LossKind::hinge: return label * score < 1.0 ? -static_cast<double>(label) : 0.0;
  }
  return 0;
}

double binary_objective(const LinearModel& model, std::span<const LabeledVector> data, double l2) {
  double loss = 0;
  for (const auto& ex : data) loss += loss_value(model.loss_kind, raw_score(model, *ex.features), ex.label);
  double norm = 0;
  for (double w : model.weights) norm += w * w;
  return loss / static_cast<double>(data.size()) + 0.5 * l2 * norm;
}

std::pair<std::vector<double>, double> binary_objective_gradient(
    const LinearModel& model, std::span<const LabeledVector> data, double l2) {
  std::vector<double> grad(model.weights.size(), 0.0);
  double gb = 0;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) {
    const double g = loss_gradient(model.loss_kind, raw_score(model, *ex.features), ex.label) * inv_n;
    for (const auto& [i, v] : ex.features->entries()) grad[i] += g * v;
    gb += g;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += l2 * model.weights[i];
  return {std::move(grad), gb};
}

std::vector<std::size_t> downsample_indices(std::size_t n_negatives, std::size_t n_positives,
                                            std::optional<double> cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(n_negatives);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (!cap) return idx;
  const auto keep = static_cast<std::size_t>(std::floor(*cap * static_cast<double>(n_positives)));
  if (keep >= n_negatives) return idx;
  Rng rng(seed);
  // Partial Fisher-Yates, then restore original order.
  for (std::size_t i = 0; i < keep; ++i) {
    std::size_t j = i + rng.below(n_negatives - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

LinearModel train_binary(std::span<const FeatureVector* const> positives,
                         std::span<const FeatureVector* const> negatives, LossKind kind,
                         int hash_bits, const TrainConfig& config, TrainStats* stats) {
  config.validate();
  if (positives.empty() || negatives.empty()) {
    throw Error("train_binary requires at least one positive and one negative example");
  }
  std::vector<LabeledVector> data;
  for (const auto* fv : positives) data.push_back({fv, +1});
  for (std::size_t i : downsample_indices(negatives.size(), positives.size(),
                                          config.neg_pos_ratio_cap,
                                          derive_seed(config.seed, "downsample"))) {
    data.push_back({negatives[i], -1});
  }

  ScaledWeights w(std::size_t{1} << hash_bits);
  double bias = 0;
  Rng rng(derive_seed(config.seed, "shuffle"));
  const double lr = config.learning_rate;
  const double shrink = 1.0 - lr * config.l2;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0;
    for (std::size_t k : order) {
      const auto& ex = data[k];
      const double score = w.dot(*ex.features) + bias;
      epoch_loss += loss_value(kind, score, ex.label);
      const double g = loss_gradient(kind, score, ex.label);
      w.shrink(shrink);
      if (g != 0.0) {
        for (const auto& [i, v] : ex.features->entries()) w.add(i, -lr * g * v);
        bias -= lr * g;
      }
    }
    if (stats) stats->epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
  }

  LinearModel model;
  model.loss_kind = kind;
  model.hash_bits = hash_bits;
  model.weights = w.release();
  model.bias = bias;
  return model;
}

MaxEntModel MaxEntModel::zeros(std::vector<std::string> labels, int hash_bits) {
  MaxEntModel m;
  m.class_labels = std::move(labels);
  m.hash_bits = hash_bits;
  m.weights.assign((std::size_t{1} << hash_bits) * m.class_labels.size(), 0.0);
  m.bias.assign(m.class_labels.size(), 0.0);
  return m;
}

std::optional<std::size_t> MaxEntModel::class_index(std::string_view label) const {
  for (std::size_t k = 0; k < class_labels.size(); ++k) {
    if (class_labels[k] == label) return k;
  }
  return std::nullopt;
}

std::vector<double> maxent_scores(const MaxEntModel& model, const FeatureVector& fv) {
  const std::size_t K = model.num_classes();
  std::vector<double> s(model.bias);
  for (const auto& [i, v] : fv.entries()) {
    const double* row = &model.weights[std::size_t{i} * K];
    for (std::size_t k = 0; k < K; ++k) s[k] += row[k] * v;
  }
  return s;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> p(scores.begin(), scores.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0;
  for (auto& x : p) {
    x = std::exp(x - mx);
    z += x;
  }
  for (auto& x : p) x /= z;
  return p;
}

std::vector<double> predict_maxent(const MaxEntModel& model, const FeatureVector& fv) {
  return softmax(maxent_scores(model, fv));
}

double maxent_objective(const MaxEntModel& model, std::span<const LabeledExample> data, double l2) {
  double loss = 0;
  for (const auto& ex : data) {
    auto s = maxent_scores(model, *ex.features);
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (double x : s) z += std::exp(x - mx);
    const auto k = model.class_index(ex.label);
    if (!k) throw Error("label outside model classes: " + ex.label);
    loss += mx + std::log(z) - s[*k];
  }
  double norm = 0;
  for (double w : model.weights) norm += w * w;
  return loss / static_cast<double>(data.size()) + 0.5 * l2 * norm;
}

std::pair<std::vector<double>, std::vector<double>> maxent_objective_gradient(
    const MaxEntModel& model, std::span<const LabeledExample> data, double l2) {
  const std::size_t K = model.num_classes();
  std::vector<double> gw(model.weights.size(), 0.0);
  std::vector<double> gb(K, 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) {
    auto p = predict_maxent(model, *ex.features);
    p[*model.class_index(ex.label)] -= 1.0;
    for (std::size_t k = 0; k < K; ++k) {
      gb[k] += p[k] * inv_n;
      for (const auto& [i, v] : ex.features->entries()) gw[std::size_t{i} * K + k] += p[k] * v * inv_n;
    }
  }
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += l2 * model.weights[i];
  return {std::move(gw), std::move(gb)};
}

MaxEntModel train_maxent(std::span<const LabeledExample> examples, int hash_bits,
                         const TrainConfig& config, TrainStats* stats) {
  config.validate();
  std::set<std::string> label_set;
  for (const auto& ex : examples) label_set.insert(ex.label);
  if (label_set.size() < 2) throw Error("train_maxent requires at least two classes");

  std::vector<std::string> labels(label_set.begin(), label_set.end());
  const std::size_t K = labels.size();
  std::vector<std::size_t> y;
  y.reserve(examples.size());
  for (const auto& ex : examples) {
    y.push_back(static_cast<std::size_t>(
        std::lower_bound(labels.begin(), labels.end(), ex.label) - labels.begin()));
  }

  ScaledWeights w((std::size_t{1} << hash_bits) * K);
  std::vector<double> bias(K, 0.0);
  Rng rng(derive_seed(config.seed, "maxent"));
  const double lr = config.learning_rate;
  const double shrink = 1.0 - lr * config.l2;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> s(K);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0;
    for (std::size_t n : order) {
      const FeatureVector& fv = *examples[n].features;
      for (std::size_t k = 0; k < K; ++k) s[k] = w.dot(fv, K, k) + bias[k];
      auto p = softmax(s);
      epoch_loss += -std::log(std::max(p[y[n]], 1e-300));
      p[y[n]] -= 1.0;
      w.shrink(shrink);
      for (std::size_t k = 0; k < K; ++k) {
        const double g = p[k];
        for (const auto& [i, v] : fv.entries()) w.add(std::size_t{i} * K + k, -lr * g * v);
        bias[k] -= lr * g;
      }
    }
    if (stats) stats->epoch_loss.push_back(epoch_loss / static_cast<double>(examples.size()));
  }

  MaxEntModel model;
  model.class_labels = std::move(labels);
  model.hash_bits = hash_bits;
  model.weights = w.release();
  model.bias = std::move(bias);
  return model;
}

}  // namespace nlual
