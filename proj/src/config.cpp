#include "nlual/config.hpp"

#include <fstream>
#include <set>

namespace nlual {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw ConfigError("unknown field '" + std::string(where) + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + std::string(where) + "." + key + "': " + e.what());
  }
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

FeatureConfig feature_config_from_json(const json& j, FeatureConfig c) {
  check_keys(j, "features", {"ngram_orders", "hash_bits", "lowercase"});
  read(j, "ngram_orders", c.ngram_orders, "features");
  read(j, "hash_bits", c.hash_bits, "features");
  read(j, "lowercase", c.lowercase, "features");
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  check_keys(j, "train", {"epochs", "learning_rate", "l2", "seed", "neg_pos_ratio_cap"});
  read(j, "epochs", c.epochs, "train");
  read(j, "learning_rate", c.learning_rate, "train");
  read(j, "l2", c.l2, "train");
  read(j, "seed", c.seed, "train");
  if (auto it = j.find("neg_pos_ratio_cap"); it != j.end()) {
    if (it->is_null()) c.neg_pos_ratio_cap.reset();
    else read(j, "neg_pos_ratio_cap", c.neg_pos_ratio_cap.emplace(), "train");
  }
  c.validate();
  return c;
}

SplitSpec split_spec_from_json(const json& j) {
  check_keys(j, "split", {"train_fraction", "pool_fraction", "test_fraction", "seed"});
  SplitSpec s;
  read(j, "train_fraction", s.train_fraction, "split");
  read(j, "pool_fraction", s.pool_fraction, "split");
  read(j, "test_fraction", s.test_fraction, "split");
  read(j, "seed", s.seed, "split");
  s.validate();
  return s;
}

SynthSpec synth_spec_from_json(const json& j) {
  check_keys(j, "synth", {"domains", "noise_count", "seed", "source", "id_prefix"});
  SynthSpec s;
  read(j, "noise_count", s.noise_count, "synth");
  read(j, "seed", s.seed, "synth");
  read(j, "id_prefix", s.id_prefix, "synth");
  if (auto it = j.find("source"); it != j.end()) {
    try {
      s.source = source_from_string(it->get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("field 'synth.source': ") + e.what());
    }
  }
  for (const auto& dj : j.value("domains", json::array())) {
    check_keys(dj, "synth.domains[]", {"name", "intents", "lexicons", "count"});
    SynthDomain d;
    read(dj, "name", d.name, "synth.domains[]");
    read(dj, "count", d.count, "synth.domains[]");
    read(dj, "lexicons", d.lexicons, "synth.domains[]");
    for (const auto& ij : dj.value("intents", json::array())) {
      check_keys(ij, "synth.intents[]", {"name", "templates"});
      SynthIntent intent;
      read(ij, "name", intent.name, "synth.intents[]");
      for (const auto& tj : ij.value("templates", json::array())) {
        SynthTemplate t;
        if (tj.is_string()) {
          t.pattern = tj.get<std::string>();
        } else {
          check_keys(tj, "synth.templates[]", {"pattern", "weight"});
          read(tj, "pattern", t.pattern, "synth.templates[]");
          read(tj, "weight", t.weight, "synth.templates[]");
        }
        intent.templates.push_back(std::move(t));
      }
      d.intents.push_back(std::move(intent));
    }
    s.domains.push_back(std::move(d));
  }
  s.validate();
  return s;
}

AlConfig al_config_from_json(const json& j, AlConfig c) {
  check_keys(j, "al", {"name", "iterations", "batch_size", "seed", "features", "crf_features",
                       "committee_train", "crf_train"});
  read(j, "name", c.name, "al");
  read(j, "iterations", c.iterations, "al");
  read(j, "batch_size", c.batch_size, "al");
  read(j, "seed", c.seed, "al");
  if (j.contains("features")) c.features = feature_config_from_json(j["features"], c.features);
  if (j.contains("crf_features")) c.crf_features = feature_config_from_json(j["crf_features"], c.crf_features);
  if (j.contains("committee_train")) c.committee_train = train_config_from_json(j["committee_train"], c.committee_train);
  if (j.contains("crf_train")) c.crf_train = train_config_from_json(j["crf_train"], c.crf_train);
  c.validate();
  return c;
}

NluConfig nlu_config_from_json(const json& j, NluConfig c) {
  check_keys(j, "nlu", {"ic_features", "ner_features", "ic_train", "ner_train", "ood_ratio", "seed", "domains"});
  if (j.contains("ic_features")) c.ic_features = feature_config_from_json(j["ic_features"], c.ic_features);
  if (j.contains("ner_features")) c.ner_features = feature_config_from_json(j["ner_features"], c.ner_features);
  if (j.contains("ic_train")) c.ic_train = train_config_from_json(j["ic_train"], c.ic_train);
  if (j.contains("ner_train")) c.ner_train = train_config_from_json(j["ner_train"], c.ner_train);
  read(j, "ood_ratio", c.ood_ratio, "nlu");
  read(j, "seed", c.seed, "nlu");
  read(j, "domains", c.domains, "nlu");
  if (!(c.ood_ratio > 0)) throw ConfigError("nlu.ood_ratio must be positive");
  return c;
}

ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "experiment",
             {"corpus_path", "synth", "seed_grammar", "target_train_keep", "split", "targets",
              "algorithms", "budget_per_target", "iterations", "repeats", "seed", "output_dir",
              "bootstrap_resamples", "al", "nlu"});
  ExperimentConfig c;
  if (auto it = j.find("corpus_path"); it != j.end()) {
    std::filesystem::path p = it->get<std::string>();
    c.corpus_path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  if (j.contains("synth")) c.synth = synth_spec_from_json(j["synth"]);
  if (j.contains("seed_grammar")) c.seed_grammar = synth_spec_from_json(j["seed_grammar"]);
  read(j, "target_train_keep", c.target_train_keep, "experiment");
  if (j.contains("split")) c.split = split_spec_from_json(j["split"]);
  read(j, "targets", c.targets, "experiment");
  read(j, "algorithms", c.algorithms, "experiment");
  read(j, "budget_per_target", c.budget_per_target, "experiment");
  read(j, "iterations", c.iterations, "experiment");
  read(j, "repeats", c.repeats, "experiment");
  read(j, "seed", c.seed, "experiment");
  read(j, "bootstrap_resamples", c.bootstrap_resamples, "experiment");
  if (auto it = j.find("output_dir"); it != j.end()) {
    std::filesystem::path p = it->get<std::string>();
    c.output_dir = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  if (j.contains("al")) c.al = al_config_from_json(j["al"], c.al);
  if (j.contains("nlu")) c.nlu = nlu_config_from_json(j["nlu"], c.nlu);
  c.validate();
  return c;
}

json to_json(const FeatureConfig& c) {
  return {{"ngram_orders", c.ngram_orders}, {"hash_bits", c.hash_bits}, {"lowercase", c.lowercase}};
}

json to_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"l2", c.l2}, {"seed", c.seed}};
  j["neg_pos_ratio_cap"] = c.neg_pos_ratio_cap ? json(*c.neg_pos_ratio_cap) : json(nullptr);
  return j;
}

json to_json(const AlConfig& c) {
  return {{"name", c.name},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"features", to_json(c.features)},
          {"crf_features", to_json(c.crf_features)},
          {"committee_train", to_json(c.committee_train)},
          {"crf_train", to_json(c.crf_train)}};
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return experiment_config_from_json(read_json_file(path), path.parent_path());
}

}  // namespace nlual
