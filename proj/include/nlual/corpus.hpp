#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlual/common.hpp"

namespace nlual {

enum class Source { live, grammar, noise };

std::string to_string(Source s);
Source source_from_string(std::string_view s);

struct Utterance {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::string domain;
  std::string intent;
  std::vector<std::string> bio_tags;
  Source source = Source::live;

  bool operator==(const Utterance&) const = default;
};

/// Returns a description of the first BIO rule violation, or nullopt.
/// Checks tag syntax and that every I-X follows B-X or I-X.
std::optional<std::string> bio_violation(const std::vector<std::string>& tags);

/// Returns a description of the first Utterance invariant violation, or nullopt.
std::optional<std::string> utterance_violation(const Utterance& u);

/// A slot span extracted from BIO tags.
struct Slot {
  std::string type;
  std::string value;

  bool operator==(const Slot&) const = default;
  auto operator<=>(const Slot&) const = default;
};

/// Slots of a BIO-valid tag sequence; value is the span tokens joined by a space.
std::vector<Slot> slots_from_bio(const std::vector<std::string>& tokens,
                                 const std::vector<std::string>& tags);

/// Ordered, id-indexed collection of utterances. Immutable once built.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Utterance> utterances);

  /// Appends; throws on duplicate id.
  void add(Utterance u);

  const Utterance* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Utterance& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const std::vector<Utterance>& utterances() const { return items_; }

  /// Sorted list of distinct domains, excluding OUT_OF_DOMAIN.
  std::vector<std::string> domains() const;

 private:
  std::vector<Utterance> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::string utterance_to_json(const Utterance& u);
/// Parses one JSONL record. Unknown keys are ignored. Does not validate invariants.
Utterance utterance_from_json(std::string_view line);

Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

struct SplitSpec {
  double train_fraction = 0.5;
  double pool_fraction = 0.3;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorpusSplit {
  Corpus train;
  Corpus pool;
  Corpus test;
};

/// Stratified by domain: within each domain, utterances are ordered by a
/// stable hash of (id, seed) and cut at the requested fractions.
CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec);

/// train ∪ noise; every noise utterance must be source=noise and OUT_OF_DOMAIN.
Corpus augment_negatives(const Corpus& train, const Corpus& noise);

struct SynthTemplate {
  std::string pattern;  // e.g. "read [Title] by [Author]"
  double weight = 1.0;
};

struct SynthIntent {
  std::string name;
  std::vector<SynthTemplate> templates;
};

struct SynthDomain {
  std::string name;
  std::vector<SynthIntent> intents;
  std::map<std::string, std::vector<std::string>> lexicons;
  std::size_t count = 0;
};

struct SynthSpec {
  std::vector<SynthDomain> domains;
  std::size_t noise_count = 0;
  std::uint64_t seed = 0;
  Source source = Source::live;
  std::string id_prefix = "s";

  void validate() const;
};

Corpus synth_generate(const SynthSpec& spec);

/// What selection code may see of a pool utterance before annotation.
struct PoolCandidate {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
};

std::vector<PoolCandidate> hide_annotations(const Corpus& pool);

}  // namespace nlual
