#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nlual {

struct FeatureConfig {
  std::vector<int> ngram_orders{1, 2, 3};
  int hash_bits = 18;
  bool lowercase = true;

  void validate() const;
  std::size_t dimension() const { return std::size_t{1} << hash_bits; }
  bool operator==(const FeatureConfig&) const = default;
};

/// Sparse feature vector: entries sorted by index, no explicit zeros.
class FeatureVector {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  FeatureVector() = default;
  /// Builds from unsorted (index, value) pairs, summing duplicates and
  /// dropping zeros.
  static FeatureVector from_pairs(std::vector<Entry> pairs);

  std::span<const Entry> entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  double total_mass() const;
  FeatureVector scaled(double factor) const;

  bool operator==(const FeatureVector&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// FNV-1a 64 of the UTF-8 bytes, reduced modulo 2^bits.
std::uint32_t hash_token(std::string_view s, int bits);

/// Hashed n-gram counts; an n-gram's key is its tokens joined by "_".
FeatureVector extract_ngrams(std::span<const std::string> tokens, const FeatureConfig& config);

}  // namespace nlual
