#include "nlual/al.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "json.hpp"
#include "nlual/common.hpp"

namespace nlual {

std::string to_string(FilterKind k) {
  switch (k) {
    case FilterKind::logistic_sign: return "sgn(y_lg)>0";
    case FilterKind::majority: return "majority";
    case FilterKind::disagreement: return "disagreement";
  }
  return "";
}

std::string to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::raw: return "y_lg";
    case ScorerKind::sum_of_absolutes: return "SA";
    case ScorerKind::absolute_sum: return "AS";
    case ScorerKind::crf_gated: return "p_lg*p_crf";
  }
  return "";
}

namespace {

using FK = FilterKind;
using SK = ScorerKind;

constexpr std::array<AlgorithmSpec, 9> kAlgorithms{{
    {"Rand-Uniform", true, false, false, false, FK::majority, SK::raw},
    {"Rand-Domain", true, false, false, false, FK::majority, SK::raw},
    {"AL-Logistic", false, true, false, false, FK::logistic_sign, SK::raw},
    {"QBC-SA", false, true, true, false, FK::disagreement, SK::sum_of_absolutes},
    {"QBC-AS", false, true, true, false, FK::disagreement, SK::absolute_sum},
    {"Majority-SA", false, true, true, false, FK::majority, SK::sum_of_absolutes},
    {"Majority-AS", false, true, true, false, FK::majority, SK::absolute_sum},
    {"QBC-CRF", false, true, true, true, FK::disagreement, SK::crf_gated},
    {"Majority-CRF", false, true, true, true, FK::majority, SK::crf_gated},
}};

}  // namespace

std::span<const AlgorithmSpec> algorithm_table() { return kAlgorithms; }

const AlgorithmSpec& algorithm_spec(std::string_view name) {
  for (const auto& a : kAlgorithms) {
    if (a.name == name) return a;
  }
  throw ConfigError("unknown AL configuration '" + std::string(name) + "'");
}

void AlConfig::validate() const {
  (void)algorithm_spec(name);
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  features.validate();
  crf_features.validate();
  committee_train.validate();
  crf_train.validate();
}

CommitteeScores CommitteeScores::make(double y_lg, std::optional<double> y_sq,
                                      std::optional<double> y_hg, std::optional<double> p_crf) {
  CommitteeScores s;
  s.y_lg = y_lg;
  s.y_sq = y_sq;
  s.y_hg = y_hg;
  s.p_crf = p_crf;
  s.p_lg = sigmoid_prob(y_lg);
  return s;
}

int vote(double score) { return score >= 0.0 ? 1 : -1; }

namespace {

int sign_sum(const CommitteeScores& s) {
  if (!s.y_sq || !s.y_hg) throw Error("committee filter requires lg, sq and hg scores");
  return vote(s.y_lg) + vote(*s.y_sq) + vote(*s.y_hg);
}

}  // namespace

bool apply_filter(FilterKind kind, const CommitteeScores& s) {
  switch (kind) {
    case FilterKind::logistic_sign: return vote(s.y_lg) > 0;
    case FilterKind::majority: return sign_sum(s) > 0;
    case FilterKind::disagreement: {
      const int sum = sign_sum(s);
      return sum == -1 || sum == 1;
    }
  }
  return false;
}

double apply_scorer(ScorerKind kind, const CommitteeScores& s) {
  switch (kind) {
    case ScorerKind::raw: return s.y_lg;
    case ScorerKind::sum_of_absolutes:
      if (!s.y_sq || !s.y_hg) throw Error("SA scorer requires lg, sq and hg scores");
      return std::abs(s.y_lg) + std::abs(*s.y_sq) + std::abs(*s.y_hg);
    case ScorerKind::absolute_sum:
      if (!s.y_sq || !s.y_hg) throw Error("AS scorer requires lg, sq and hg scores");
      return std::abs(s.y_lg + *s.y_sq + *s.y_hg);
    case ScorerKind::crf_gated:
      if (!s.p_crf) throw Error("CG scorer requires a CRF confidence");
      return *s.p_crf * s.p_lg;
  }
  return 0;
}

CommitteeScores Committee::score(const FeatureVector& fv) const {
  std::optional<double> ysq, yhg;
  if (sq) ysq = raw_score(*sq, fv);
  if (hg) yhg = raw_score(*hg, fv);
  return CommitteeScores::make(raw_score(lg, fv), ysq, yhg);
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

std::string audit_record_to_json(const AuditRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["iteration"] = r.iteration;
  j["target"] = r.target;
  j["y_lg"] = opt_json(r.y_lg);
  j["y_sq"] = opt_json(r.y_sq);
  j["y_hg"] = opt_json(r.y_hg);
  if (r.p_crf) j["p_crf"] = *r.p_crf;
  j["filter_passed"] = r.filter_passed;
  j["rank"] = r.rank;
  return j.dump();
}

AuditRecord audit_record_from_json(std::string_view line) {
  auto j = nlohmann::json::parse(line);
  AuditRecord r;
  r.id = j.at("id").get<std::string>();
  r.iteration = j.at("iteration").get<int>();
  r.target = j.at("target").get<std::string>();
  r.y_lg = opt_from(j, "y_lg");
  r.y_sq = opt_from(j, "y_sq");
  r.y_hg = opt_from(j, "y_hg");
  r.p_crf = opt_from(j, "p_crf");
  r.filter_passed = j.at("filter_passed").get<bool>();
  r.rank = j.at("rank").get<std::size_t>();
  return r;
}

SelectionState::SelectionState(Corpus annotated, std::span<const PoolCandidate> pool,
                               const AlConfig& config)
    : annotated_(std::move(annotated)), features_(config.features) {
  annotated_features_.resize(annotated_.size());
  parallel_for(annotated_.size(), [&](std::size_t i) {
    annotated_features_[i] = extract_ngrams(annotated_[i].tokens, features_);
  });
  pool_.resize(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    if (annotated_.contains(pool[i].id)) return;
    pool_[i] = {pool[i], extract_ngrams(pool[i].tokens, config.features),
                token_features(pool[i].tokens, config.crf_features)};
  });
  for (const auto& c : pool) {
    if (annotated_.contains(c.id)) throw Error("pool candidate " + c.id + " is already annotated");
  }
  reindex();
  if (pool_index_.size() != pool_.size()) throw Error("duplicate id in pool");
}

void SelectionState::reindex() {
  pool_index_.clear();
  for (std::size_t i = 0; i < pool_.size(); ++i) pool_index_.emplace(pool_[i].candidate.id, i);
}

void SelectionState::advance(const Batch& batch,
                             const std::unordered_map<std::string, Utterance>& annotations) {
  std::vector<std::string> missing, absent;
  std::set<std::string> seen;
  for (const auto& id : batch.ids) {
    if (!seen.insert(id).second) absent.push_back(id);
    else if (!in_pool(id)) absent.push_back(id);
    if (!annotations.count(id)) missing.push_back(id);
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  if (!missing.empty()) throw Error("missing annotation for ids: " + join(missing));
  if (!absent.empty()) throw Error("ids not in pool: " + join(absent));

  for (const auto& id : batch.ids) {
    const Utterance& u = annotations.at(id);
    annotated_.add(u);
    annotated_features_.push_back(extract_ngrams(u.tokens, features_));
  }
  std::erase_if(pool_, [&](const PoolEntry& e) { return seen.count(e.candidate.id) != 0; });
  reindex();
  ++iteration_;
  audit_.insert(audit_.end(), batch.records.begin(), batch.records.end());
}

Committee train_selection_models(const SelectionState& state, std::string_view target,
                                 const AlConfig& config, std::uint64_t seed) {
  const AlgorithmSpec& spec = config.spec();
  if (spec.random) throw Error("random baselines have no selection models");

  const Corpus& d = state.annotated();
  auto feats = state.annotated_features();
  std::vector<const FeatureVector*> pos, neg;
  std::vector<CrfExample> crf_data;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].domain == target) {
      pos.push_back(&feats[i]);
      if (spec.uses_crf && !d[i].tokens.empty()) {
        crf_data.push_back({token_features(d[i].tokens, config.crf_features), d[i].bio_tags});
      }
    } else {
      neg.push_back(&feats[i]);
    }
  }
  if (pos.empty() || neg.empty()) {
    throw Error("selection models for " + std::string(target) +
                " need at least one positive and one negative");
  }

  auto cfg_for = [&](const char* tag) {
    TrainConfig c = config.committee_train;
    c.seed = derive_seed(seed, tag);
    return c;
  };
  const int bits = config.features.hash_bits;
  Committee c;
  c.lg = train_binary(pos, neg, LossKind::logistic, bits, cfg_for("lg"));
  if (spec.uses_squared_hinge) {
    c.sq = train_binary(pos, neg, LossKind::squared, bits, cfg_for("sq"));
    c.hg = train_binary(pos, neg, LossKind::hinge, bits, cfg_for("hg"));
  }
  if (spec.uses_crf) {
    TrainConfig cc = config.crf_train;
    cc.seed = derive_seed(seed, "crf");
    c.crf = crf_train(crf_data, config.crf_features, cc, true);
  }
  return c;
}

Batch select_batch(const SelectionState& state, const Committee& committee, const AlConfig& config,
                   std::string_view target) {
  const AlgorithmSpec& spec = config.spec();
  auto pool = state.pool();
  if (pool.empty()) throw Error("select_batch: empty pool");
  if (spec.uses_crf && !committee.crf) throw Error("configuration " + config.name + " needs a CRF");

  std::vector<CommitteeScores> scores(pool.size());
  std::vector<char> passed(pool.size(), 0);
  std::vector<double> prio(pool.size(), 0.0);
  parallel_for(pool.size(), [&](std::size_t i) {
    CommitteeScores s = committee.score(pool[i].ngrams);
    if (apply_filter(spec.filter, s)) {
      passed[i] = 1;
      if (spec.uses_crf) {
        s.p_crf = pool[i].token_feats.size() == 0
                      ? 1.0
                      : sequence_confidence(*committee.crf, pool[i].token_feats);
      }
      prio[i] = apply_scorer(spec.scorer, s);
    }
    scores[i] = s;
  });

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (passed[i]) keep.push_back(i);
  }
  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    if (prio[a] != prio[b]) return prio[a] < prio[b];
    return pool[a].candidate.id < pool[b].candidate.id;
  });
  if (keep.size() > config.batch_size) keep.resize(config.batch_size);

  Batch batch;
  if (keep.empty()) {
    batch.warnings.push_back("no candidate passed the " + to_string(spec.filter) + " filter for " +
                             std::string(target));
  }
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const std::size_t i = keep[r];
    const auto& s = scores[i];
    batch.ids.push_back(pool[i].candidate.id);
    batch.records.push_back({pool[i].candidate.id, state.iteration() + 1, std::string(target),
                             s.y_lg, s.y_sq, s.y_hg, s.p_crf, true, r});
  }
  return batch;
}

namespace {

Batch sample(const SelectionState& state, std::vector<std::size_t> eligible, std::size_t n,
             std::uint64_t seed, std::string_view target) {
  Rng rng(seed);
  const std::size_t take = std::min(n, eligible.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  Batch b;
  for (std::size_t r = 0; r < take; ++r) {
    const auto& id = state.pool()[eligible[r]].candidate.id;
    b.ids.push_back(id);
    b.records.push_back({id, state.iteration() + 1, std::string(target), std::nullopt,
                         std::nullopt, std::nullopt, std::nullopt, true, r});
  }
  return b;
}

}  // namespace

Batch random_uniform(const SelectionState& state, std::size_t n, std::uint64_t seed,
                     std::string_view target) {
  if (n > state.pool().size()) throw Error("random_uniform: n exceeds pool size");
  std::vector<std::size_t> all(state.pool().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return sample(state, std::move(all), n, seed, target);
}

Batch random_domain(const SelectionState& state, std::string_view target, std::size_t n,
                    std::uint64_t seed, const std::unordered_map<std::string, std::string>& top_domain) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < state.pool().size(); ++i) {
    auto it = top_domain.find(state.pool()[i].candidate.id);
    if (it != top_domain.end() && it->second == target) eligible.push_back(i);
  }
  Batch b = sample(state, std::move(eligible), n, seed, target);
  if (b.ids.empty()) b.warnings.push_back("no pool candidate predicted in " + std::string(target));
  return b;
}

Batch random_domain(const SelectionState& state, std::string_view target, std::size_t n,
                    std::uint64_t seed, const NluSystem& nlu) {
  auto pool = state.pool();
  std::vector<std::string> top(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    auto hyps = interpret(nlu, pool[i].candidate.tokens);
    if (!hyps.empty()) top[i] = hyps.front().domain;
  });
  std::unordered_map<std::string, std::string> by_id;
  for (std::size_t i = 0; i < pool.size(); ++i) by_id.emplace(pool[i].candidate.id, std::move(top[i]));
  return random_domain(state, target, n, seed, by_id);
}

Batch dedupe_multi_target(std::span<const Batch> batches) {
  Batch merged;
  std::set<std::string> seen;
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < b.ids.size(); ++i) {
      if (!seen.insert(b.ids[i]).second) continue;
      merged.ids.push_back(b.ids[i]);
      if (i < b.records.size()) merged.records.push_back(b.records[i]);
    }
    merged.warnings.insert(merged.warnings.end(), b.warnings.begin(), b.warnings.end());
  }
  return merged;
}

}  // namespace nlual
