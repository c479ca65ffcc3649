#include "nlual/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace nlual {

std::string to_string(Source s) {
  switch (s) {
    case Source::live: return "live";
    case Source::grammar: return "grammar";
    case Source::noise: return "noise";
  }
  return "live";
}

Source source_from_string(std::string_view s) {
  if (s == "live") return Source::live;
  if (s == "grammar") return Source::grammar;
  if (s == "noise") return Source::noise;
  throw Error("unknown source '" + std::string(s) + "'");
}

std::optional<std::string> bio_violation(const std::vector<std::string>& tags) {
  std::string open;  // slot type of the span currently open, "" if none
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& t = tags[i];
    if (t == "O") {
      open.clear();
      continue;
    }
    if (t.size() < 3 || t[1] != '-' || (t[0] != 'B' && t[0] != 'I')) {
      return "malformed tag '" + t + "' at position " + std::to_string(i);
    }
    std::string type = t.substr(2);
    if (t[0] == 'I' && open != type) {
      return "I-" + type + " without preceding B-" + type + " at position " +
             std::to_string(i);
    }
    open = type;
  }
  return std::nullopt;
}

std::optional<std::string> utterance_violation(const Utterance& u) {
  if (u.id.empty()) return "empty id";
  if (u.tokens.size() != u.bio_tags.size()) {
    return "bio_tags length " + std::to_string(u.bio_tags.size()) +
           " != tokens length " + std::to_string(u.tokens.size());
  }
  if (auto v = bio_violation(u.bio_tags)) return v;
  if (u.source == Source::noise &&
      (u.domain != kOutOfDomain || u.intent != kOutOfDomain)) {
    return "noise must be OUT_OF_DOMAIN";
  }
  return std::nullopt;
}

std::vector<Slot> slots_from_bio(const std::vector<std::string>& tokens,
                                 const std::vector<std::string>& tags) {
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < tags.size() && i < tokens.size(); ++i) {
    const std::string& t = tags[i];
    if (t.size() > 2 && t[0] == 'B') {
      slots.push_back({t.substr(2), tokens[i]});
    } else if (t.size() > 2 && t[0] == 'I' && !slots.empty() &&
               slots.back().type == t.substr(2)) {
      slots.back().value += ' ';
      slots.back().value += tokens[i];
    }
  }
  return slots;
}

Corpus::Corpus(std::vector<Utterance> utterances) {
  items_.reserve(utterances.size());
  for (auto& u : utterances) add(std::move(u));
}

void Corpus::add(Utterance u) {
  auto [it, inserted] = index_.emplace(u.id, items_.size());
  if (!inserted) throw Error("duplicate id " + u.id);
  items_.push_back(std::move(u));
}

const Utterance* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

std::vector<std::string> Corpus::domains() const {
  std::set<std::string> seen;
  for (const auto& u : items_) {
    if (u.domain != kOutOfDomain) seen.insert(u.domain);
  }
  return {seen.begin(), seen.end()};
}

std::string utterance_to_json(const Utterance& u) {
  nlohmann::ordered_json j;
  j["id"] = u.id;
  j["text"] = u.text;
  j["tokens"] = u.tokens;
  j["domain"] = u.domain;
  j["intent"] = u.intent;
  j["bio_tags"] = u.bio_tags;
  j["source"] = to_string(u.source);
  return j.dump();
}

Utterance utterance_from_json(std::string_view line) {
  nlohmann::json j = nlohmann::json::parse(line);
  if (!j.is_object()) throw Error("record is not a JSON object");
  Utterance u;
  auto req = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw Error(std::string("missing field '") + key + "'");
    return *it;
  };
  u.id = req("id").get<std::string>();
  u.text = req("text").get<std::string>();
  u.tokens = req("tokens").get<std::vector<std::string>>();
  u.domain = req("domain").get<std::string>();
  u.intent = req("intent").get<std::string>();
  u.bio_tags = req("bio_tags").get<std::vector<std::string>>();
  u.source = source_from_string(req("source").get<std::string>());
  return u;
}

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Utterance u;
    try {
      u = utterance_from_json(line);
    } catch (const std::exception& e) {
      throw Error("parse error at line " + std::to_string(lineno) + ": " + e.what());
    }
    if (auto v = utterance_violation(u)) {
      // Position detail is dropped in favour of the line number.
      std::string msg = *v;
      if (auto p = msg.find(" at position "); p != std::string::npos) msg.erase(p);
      throw Error(msg + " at line " + std::to_string(lineno));
    }
    if (corpus.contains(u.id)) {
      throw Error("duplicate id " + u.id + " at line " + std::to_string(lineno));
    }
    corpus.add(std::move(u));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& u : corpus) out << utterance_to_json(u) << '\n';
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus " + path.string());
  write_corpus(out, corpus);
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0 && pool_fraction > 0 && test_fraction > 0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train_fraction + pool_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

CorpusSplit split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  if (corpus.empty()) throw Error("cannot split an empty corpus");

  struct Keyed {
    std::uint64_t key;
    const std::string* id;
    std::size_t index;
  };
  std::map<std::string, std::vector<Keyed>> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus[i];
    std::uint64_t key = splitmix64(fnv1a64(u.id) ^ splitmix64(spec.seed));
    strata[u.domain].push_back({key, &u.id, i});
  }

  // 0 = train, 1 = pool, 2 = test; indexed by original position so output
  // order follows input order.
  std::vector<int> part(corpus.size(), 0);
  for (auto& [domain, items] : strata) {
    std::sort(items.begin(), items.end(), [](const Keyed& a, const Keyed& b) {
      return a.key != b.key ? a.key < b.key : *a.id < *b.id;
    });
    const double n = static_cast<double>(items.size());
    auto n_train = static_cast<std::size_t>(std::llround(n * spec.train_fraction));
    auto n_pool = static_cast<std::size_t>(
        std::llround(n * (spec.train_fraction + spec.pool_fraction))) - n_train;
    for (std::size_t r = 0; r < items.size(); ++r) {
      part[items[r].index] = r < n_train ? 0 : (r < n_train + n_pool ? 1 : 2);
    }
  }

  CorpusSplit out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Corpus& dst = part[i] == 0 ? out.train : (part[i] == 1 ? out.pool : out.test);
    dst.add(corpus[i]);
  }
  return out;
}

Corpus augment_negatives(const Corpus& train, const Corpus& noise) {
  Corpus out = train;
  for (const auto& u : noise) {
    if (u.source != Source::noise) throw Error("noise utterance " + u.id + " is not source=noise");
    if (u.domain != kOutOfDomain || u.intent != kOutOfDomain) {
      throw Error("noise must be OUT_OF_DOMAIN");
    }
    if (out.contains(u.id)) throw Error("id collision between train and noise: " + u.id);
    out.add(u);
  }
  return out;
}

namespace {

struct TemplatePart {
  bool is_slot;
  std::string text;
};

std::vector<TemplatePart> parse_template(const std::string& pattern) {
  std::vector<TemplatePart> parts;
  std::istringstream in(pattern);
  std::string word;
  while (in >> word) {
    if (word.size() > 2 && word.front() == '[' && word.back() == ']') {
      parts.push_back({true, word.substr(1, word.size() - 2)});
    } else {
      parts.push_back({false, word});
    }
  }
  return parts;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

}  // namespace

void SynthSpec::validate() const {
  for (const auto& d : domains) {
    if (d.name.empty() || d.name == kOutOfDomain) {
      throw ConfigError("invalid synthetic domain name '" + d.name + "'");
    }
    bool any_template = false;
    for (const auto& intent : d.intents) {
      for (const auto& t : intent.templates) {
        any_template = true;
        if (!(t.weight > 0)) throw ConfigError("template weight must be positive in " + d.name);
        for (const auto& part : parse_template(t.pattern)) {
          if (!part.is_slot) continue;
          auto it = d.lexicons.find(part.text);
          if (it == d.lexicons.end() || it->second.empty()) {
            throw ConfigError("slot type " + part.text + " in domain " + d.name +
                              " has no lexicon");
          }
        }
      }
    }
    if (!any_template) throw ConfigError("domain " + d.name + " has no templates");
  }
}

Corpus synth_generate(const SynthSpec& spec) {
  spec.validate();
  Corpus corpus;
  std::vector<std::string> vocabulary;

  for (const auto& domain : spec.domains) {
    struct Choice {
      const SynthIntent* intent;
      std::vector<TemplatePart> parts;
      double cumulative;
    };
    std::vector<Choice> choices;
    double total = 0;
    for (const auto& intent : domain.intents) {
      for (const auto& t : intent.templates) {
        total += t.weight;
        choices.push_back({&intent, parse_template(t.pattern), total});
      }
    }
    for (const auto& [type, entries] : domain.lexicons) {
      for (const auto& e : entries) {
        for (auto& w : split_ws(e)) vocabulary.push_back(std::move(w));
      }
    }

    Rng rng(derive_seed(spec.seed, domain.name));
    for (std::size_t n = 0; n < domain.count; ++n) {
      const double r = rng.uniform() * total;
      auto it = std::upper_bound(choices.begin(), choices.end(), r,
                                 [](double v, const Choice& c) { return v < c.cumulative; });
      if (it == choices.end()) --it;

      Utterance u;
      u.id = spec.id_prefix + "-" + domain.name + "-" + std::to_string(n);
      u.domain = domain.name;
      u.intent = it->intent->name;
      u.source = spec.source;
      for (const auto& part : it->parts) {
        if (!part.is_slot) {
          u.tokens.push_back(part.text);
          u.bio_tags.emplace_back("O");
          continue;
        }
        const auto& lex = domain.lexicons.at(part.text);
        auto filler = split_ws(lex[rng.below(lex.size())]);
        for (std::size_t k = 0; k < filler.size(); ++k) {
          u.tokens.push_back(filler[k]);
          u.bio_tags.push_back((k == 0 ? "B-" : "I-") + part.text);
        }
      }
      u.text = join(u.tokens);
      corpus.add(std::move(u));
    }
  }

  std::sort(vocabulary.begin(), vocabulary.end());
  vocabulary.erase(std::unique(vocabulary.begin(), vocabulary.end()), vocabulary.end());
  if (spec.noise_count > 0 && vocabulary.empty()) {
    throw ConfigError("noise requested but lexicons are empty");
  }
  Rng rng(derive_seed(spec.seed, "noise"));
  for (std::size_t n = 0; n < spec.noise_count; ++n) {
    Utterance u;
    u.id = spec.id_prefix + "-noise-" + std::to_string(n);
    u.domain = std::string(kOutOfDomain);
    u.intent = std::string(kOutOfDomain);
    u.source = Source::noise;
    const std::size_t len = 1 + rng.below(3);
    for (std::size_t k = 0; k < len; ++k) {
      u.tokens.push_back(vocabulary[rng.below(vocabulary.size())]);
      u.bio_tags.emplace_back("O");
    }
    u.text = join(u.tokens);
    corpus.add(std::move(u));
  }
  return corpus;
}

std::vector<PoolCandidate> hide_annotations(const Corpus& pool) {
  std::vector<PoolCandidate> out;
  out.reserve(pool.size());
  for (const auto& u : pool) out.push_back({u.id, u.text, u.tokens});
  return out;
}

}  // namespace nlual
