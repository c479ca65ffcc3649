#pragma once

#include <span>
#include <vector>

#include "nlual/featurize.hpp"

namespace nlual::detail {

// Weight vector stored as scale · values so that L2 shrinkage is O(1) per step.
class ScaledWeights {
 public:
  explicit ScaledWeights(std::size_t n) : values_(n, 0.0) {}

  double dot(const FeatureVector& fv, std::size_t stride = 1, std::size_t offset = 0) const {
    double s = 0;
    for (const auto& [i, v] : fv.entries()) s += values_[i * stride + offset] * v;
    return s * scale_;
  }

  double at(std::size_t i) const { return values_[i] * scale_; }

  void shrink(double factor) {
    scale_ *= factor;
    if (scale_ < 1e-9) fold();
  }

  void add(std::size_t i, double delta) { values_[i] += delta / scale_; }

  std::vector<double> release() {
    fold();
    return std::move(values_);
  }

  std::span<double> raw() { return values_; }
  double scale() const { return scale_; }

 private:
  void fold() {
    for (auto& v : values_) v *= scale_;
    scale_ = 1.0;
  }

  std::vector<double> values_;
  double scale_ = 1.0;
};

}  // namespace nlual::detail
