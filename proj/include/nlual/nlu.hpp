#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nlual/corpus.hpp"
#include "nlual/crf.hpp"
#include "nlual/featurize.hpp"
#include "nlual/linear.hpp"

namespace nlual {

struct NluConfig {
  FeatureConfig ic_features{{1, 2, 3}, 18, true};
  FeatureConfig ner_features{{1}, 16, true};
  TrainConfig ic_train{5, 0.05, 1e-6, 0, std::nullopt};
  TrainConfig ner_train{5, 0.05, 1e-6, 0, std::nullopt};
  /// Out-of-domain IC negatives per domain, as a multiple of its positives.
  double ood_ratio = 2.0;
  std::uint64_t seed = 0;
  /// When non-empty, the exact domain list; every listed domain must have data.
  std::vector<std::string> domains;
};

struct DomainModels {
  std::string domain;
  MaxEntModel ic;
  CrfModel ner;

  bool operator==(const DomainModels&) const = default;
};

/// One IC + NER model pair per domain, domains sorted by name.
struct NluSystem {
  FeatureConfig ic_features;
  std::vector<DomainModels> domains;

  std::vector<std::string> domain_names() const;
  bool operator==(const NluSystem&) const = default;
};

struct Hypothesis {
  std::string domain;
  std::string intent;
  std::vector<Slot> slots;
  std::vector<std::string> bio_tags;
  double confidence = 0.0;
};

struct SerBreakdown {
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t substitutions = 0;
  std::size_t reference_slots = 0;

  std::size_t errors() const { return insertions + deletions + substitutions; }
  double ser() const;
  SerBreakdown& operator+=(const SerBreakdown& o);
  bool operator==(const SerBreakdown&) const = default;
};

NluSystem train_nlu(const Corpus& train, const NluConfig& config);

/// One hypothesis per domain, sorted by confidence descending, then domain name.
/// confidence = P_ic(best in-domain intent) · p_crf(Viterbi path).
std::vector<Hypothesis> interpret(const NluSystem& system, std::span<const std::string> tokens);

/// Intent counts as one reference slot; an intent mismatch is a substitution.
/// Per slot type: exact value matches are correct, remaining same-type pairs
/// are substitutions, leftovers are deletions (reference) or insertions (hypothesis).
SerBreakdown score_ser(const Utterance& reference, const Hypothesis& hypothesis);
SerBreakdown score_ser(const std::string& ref_intent, const std::vector<Slot>& ref_slots,
                       const std::string& hyp_intent, const std::vector<Slot>& hyp_slots);

struct UtteranceErrors {
  std::string id;
  std::string domain;
  std::size_t errors = 0;
  std::size_t reference_slots = 0;
};

struct SerReport {
  SerBreakdown total;
  std::map<std::string, SerBreakdown> per_domain;  // keyed by reference domain
  std::vector<UtteranceErrors> per_utterance;      // test order

  double ser() const { return total.ser(); }
};

/// Micro-averaged SER of the top-1 hypothesis over the test corpus.
SerReport evaluate_ser(const NluSystem& system, const Corpus& test);

SerReport aggregate_ser(std::vector<UtteranceErrors> per_utterance,
                        const std::vector<SerBreakdown>& breakdowns);

}  // namespace nlual
