#include "nlual/featurize.hpp"

#include <algorithm>
#include <cctype>

#include "nlual/common.hpp"

namespace nlual {

void FeatureConfig::validate() const {
  if (ngram_orders.empty()) throw ConfigError("ngram_orders must be non-empty");
  for (int n : ngram_orders) {
    if (n < 1 || n > 3) throw ConfigError("ngram orders must be in {1,2,3}");
  }
  if (hash_bits < 10 || hash_bits > 30) throw ConfigError("hash_bits must be in [10,30]");
}

FeatureVector FeatureVector::from_pairs(std::vector<Entry> pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const Entry& a, const Entry& b) { return a.first < b.first; });
  FeatureVector fv;
  for (const auto& [index, value] : pairs) {
    if (!fv.entries_.empty() && fv.entries_.back().first == index) {
      fv.entries_.back().second += value;
    } else {
      fv.entries_.emplace_back(index, value);
    }
  }
  std::erase_if(fv.entries_, [](const Entry& e) { return e.second == 0.0; });
  return fv;
}

double FeatureVector::total_mass() const {
  double s = 0;
  for (const auto& e : entries_) s += e.second;
  return s;
}

FeatureVector FeatureVector::scaled(double factor) const {
  std::vector<Entry> pairs(entries_.begin(), entries_.end());
  for (auto& e : pairs) e.second *= factor;
  return from_pairs(std::move(pairs));
}

std::uint32_t hash_token(std::string_view s, int bits) {
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  return static_cast<std::uint32_t>(fnv1a64(s) & mask);
}

FeatureVector extract_ngrams(std::span<const std::string> tokens, const FeatureConfig& config) {
  std::vector<std::string> norm(tokens.begin(), tokens.end());
  if (config.lowercase) {
    for (auto& t : norm) {
      std::transform(t.begin(), t.end(), t.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    }
  }
  std::vector<FeatureVector::Entry> pairs;
  std::string key;
  for (int n : config.ngram_orders) {
    const auto order = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + order <= norm.size(); ++i) {
      key = norm[i];
      for (std::size_t k = 1; k < order; ++k) {
        key += '_';
        key += norm[i + k];
      }
      pairs.emplace_back(hash_token(key, config.hash_bits), 1.0);
    }
  }
  return FeatureVector::from_pairs(std::move(pairs));
}

}  // namespace nlual
