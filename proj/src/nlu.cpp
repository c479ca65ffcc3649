#include "nlual/nlu.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "nlual/common.hpp"

namespace nlual {

std::vector<std::string> NluSystem::domain_names() const {
  std::vector<std::string> out;
  for (const auto& d : domains) out.push_back(d.domain);
  return out;
}

double SerBreakdown::ser() const {
  return reference_slots == 0 ? 0.0
                              : static_cast<double>(errors()) / static_cast<double>(reference_slots);
}

SerBreakdown& SerBreakdown::operator+=(const SerBreakdown& o) {
  insertions += o.insertions;
  deletions += o.deletions;
  substitutions += o.substitutions;
  reference_slots += o.reference_slots;
  return *this;
}

NluSystem train_nlu(const Corpus& train, const NluConfig& config) {
  config.ic_features.validate();
  config.ner_features.validate();
  std::vector<std::string> domains = config.domains.empty() ? train.domains() : config.domains;
  std::sort(domains.begin(), domains.end());
  if (domains.empty()) throw Error("train_nlu: corpus has no domains");

  std::vector<FeatureVector> fvs;
  fvs.reserve(train.size());
  for (const auto& u : train) fvs.push_back(extract_ngrams(u.tokens, config.ic_features));

  for (const auto& d : domains) {
    bool any = std::any_of(train.begin(), train.end(), [&](const Utterance& u) { return u.domain == d; });
    if (!any) throw Error("train_nlu: domain " + d + " has zero utterances");
  }

  NluSystem system;
  system.ic_features = config.ic_features;
  system.domains.resize(domains.size());

  parallel_for(domains.size(), [&](std::size_t di) {
    const std::string& d = domains[di];
    std::vector<LabeledExample> ic_data;
    std::vector<std::size_t> others;
    std::vector<CrfExample> ner_data;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const Utterance& u = train[i];
      if (u.domain == d) {
        ic_data.push_back({&fvs[i], u.intent});
        if (!u.tokens.empty()) ner_data.push_back({token_features(u.tokens, config.ner_features), u.bio_tags});
      } else {
        others.push_back(i);
      }
    }
    const std::size_t n_pos = ic_data.size();
    for (std::size_t k : downsample_indices(others.size(), n_pos, config.ood_ratio,
                                            derive_seed(config.seed, "ood:" + d))) {
      ic_data.push_back({&fvs[others[k]], std::string(kOutOfDomain)});
    }
    if (others.empty()) {
      // Single-domain corpus: the IC still needs a second class.
      static const FeatureVector empty;
      ic_data.push_back({&empty, std::string(kOutOfDomain)});
    }

    TrainConfig ic_cfg = config.ic_train;
    ic_cfg.seed = derive_seed(config.seed, "ic:" + d);
    TrainConfig ner_cfg = config.ner_train;
    ner_cfg.seed = derive_seed(config.seed, "ner:" + d);

    DomainModels& dm = system.domains[di];
    dm.domain = d;
    dm.ic = train_maxent(ic_data, config.ic_features.hash_bits, ic_cfg);
    if (ner_data.empty()) {
      dm.ner = CrfModel::zeros({"O"}, config.ner_features, true);
    } else {
      dm.ner = crf_train(ner_data, config.ner_features, ner_cfg, true);
    }
  });
  return system;
}

std::vector<Hypothesis> interpret(const NluSystem& system, std::span<const std::string> tokens) {
  const FeatureVector fv = extract_ngrams(tokens, system.ic_features);
  std::vector<Hypothesis> hyps;
  hyps.reserve(system.domains.size());

  const FeatureConfig* cached_cfg = nullptr;
  TokenFeatures tf;
  for (const auto& dm : system.domains) {
    Hypothesis h;
    h.domain = dm.domain;

    const auto probs = predict_maxent(dm.ic, fv);
    double best = -1;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (dm.ic.class_labels[k] == kOutOfDomain) continue;
      if (probs[k] > best) {
        best = probs[k];
        h.intent = dm.ic.class_labels[k];
      }
    }
    if (best < 0) best = 0;

    double p_crf = 1.0;
    if (!tokens.empty()) {
      if (cached_cfg == nullptr || cached_cfg->hash_bits != dm.ner.features.hash_bits ||
          cached_cfg->lowercase != dm.ner.features.lowercase) {
        tf = token_features(tokens, dm.ner.features);
        cached_cfg = &dm.ner.features;
      }
      h.bio_tags = viterbi_labels(dm.ner, tf);
      p_crf = sequence_confidence(dm.ner, tf);
      h.slots = slots_from_bio({tokens.begin(), tokens.end()}, h.bio_tags);
    }
    h.confidence = std::clamp(best * p_crf, std::numeric_limits<double>::min(), 1.0);
    hyps.push_back(std::move(h));
  }
  std::stable_sort(hyps.begin(), hyps.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.domain < b.domain;
  });
  return hyps;
}

SerBreakdown score_ser(const std::string& ref_intent, const std::vector<Slot>& ref_slots,
                       const std::string& hyp_intent, const std::vector<Slot>& hyp_slots) {
  SerBreakdown b;
  b.reference_slots = 1 + ref_slots.size();
  if (ref_intent != hyp_intent) b.substitutions += 1;

  std::map<std::string, std::multiset<std::string>> ref_by_type, hyp_by_type;
  for (const auto& s : ref_slots) ref_by_type[s.type].insert(s.value);
  for (const auto& s : hyp_slots) hyp_by_type[s.type].insert(s.value);

  for (auto& [type, refs] : ref_by_type) {
    auto it = hyp_by_type.find(type);
    if (it == hyp_by_type.end()) {
      b.deletions += refs.size();
      continue;
    }
    auto& hyps = it->second;
    std::size_t matched = 0;
    for (auto r = refs.begin(); r != refs.end(); ++r) {
      auto h = hyps.find(*r);
      if (h != hyps.end()) {
        hyps.erase(h);
        ++matched;
      }
    }
    const std::size_t rem_ref = refs.size() - matched;
    const std::size_t rem_hyp = hyps.size();
    const std::size_t subs = std::min(rem_ref, rem_hyp);
    b.substitutions += subs;
    b.deletions += rem_ref - subs;
    b.insertions += rem_hyp - subs;
    hyps.clear();
  }
  for (const auto& [type, hyps] : hyp_by_type) b.insertions += hyps.size();
  return b;
}

SerBreakdown score_ser(const Utterance& reference, const Hypothesis& hypothesis) {
  return score_ser(reference.intent, slots_from_bio(reference.tokens, reference.bio_tags),
                   hypothesis.intent, hypothesis.slots);
}

SerReport aggregate_ser(std::vector<UtteranceErrors> per_utterance,
                        const std::vector<SerBreakdown>& breakdowns) {
  SerReport r;
  for (std::size_t i = 0; i < breakdowns.size(); ++i) {
    r.total += breakdowns[i];
    r.per_domain[per_utterance[i].domain] += breakdowns[i];
  }
  r.per_utterance = std::move(per_utterance);
  return r;
}

SerReport evaluate_ser(const NluSystem& system, const Corpus& test) {
  if (test.empty()) throw Error("evaluate_ser: empty test corpus");
  std::vector<SerBreakdown> bd(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto hyps = interpret(system, test[i].tokens);
    bd[i] = hyps.empty() ? score_ser(test[i].intent, slots_from_bio(test[i].tokens, test[i].bio_tags), "", {})
                         : score_ser(test[i], hyps.front());
  });
  std::vector<UtteranceErrors> per;
  per.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    per.push_back({test[i].id, test[i].domain, bd[i].errors(), bd[i].reference_slots});
  }
  return aggregate_ser(std::move(per), bd);
}

}  // namespace nlual
