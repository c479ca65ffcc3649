#include <algorithm>
#include <random>

#include "doctest.h"
#include "nlual/model_io.hpp"
#include "nlual/nlu.hpp"
#include "nlual/stats.hpp"
#include "oracles.hpp"

using namespace nlual;

namespace {

SynthDomain domain(const std::string& name, const std::string& verb, const std::string& slot,
                   std::vector<std::string> lex, std::size_t count) {
  SynthDomain d;
  d.name = name;
  d.count = count;
  d.lexicons[slot] = std::move(lex);
  d.intents.push_back({name + "Intent", {{verb + " [" + slot + "]", 1.0}, {"please " + verb + " [" + slot + "] now", 1.0}}});
  return d;
}

Corpus toy_corpus(std::size_t per_domain = 60) {
  SynthSpec s;
  s.seed = 4;
  s.domains.push_back(domain("Books", "read", "Title", {"dune", "emma", "the hobbit"}, per_domain));
  s.domains.push_back(domain("Music", "play", "Artist", {"madonna", "queen", "pink floyd"}, per_domain));
  s.domains.push_back(domain("Weather", "forecast", "City", {"paris", "boston", "new york"}, per_domain));
  return synth_generate(s);
}

NluConfig fast_config() {
  NluConfig c;
  c.ic_features.hash_bits = 14;
  c.ner_features.hash_bits = 12;
  c.ic_train.epochs = 8;
  c.ner_train.epochs = 8;
  return c;
}

}  // namespace

TEST_SUITE("nlu") {
  TEST_CASE("hand-counted SER cases") {
    for (const auto& c : oracle::ser_cases()) {
      SerBreakdown b = score_ser(c.ref_intent, c.ref_slots, c.hyp_intent, c.hyp_slots);
      CHECK_MESSAGE(b.insertions == c.ins, c.name);
      CHECK_MESSAGE(b.deletions == c.del, c.name);
      CHECK_MESSAGE(b.substitutions == c.sub, c.name);
      CHECK_MESSAGE(b.reference_slots == c.refs, c.name);
    }
  }

  TEST_CASE("SER ratios from the examples") {
    auto b = score_ser("PlayMusicIntent", {{"Artist", "madonna"}}, "PlayVideoIntent", {{"Artist", "madonna"}});
    CHECK(b.ser() == 0.5);
    b = score_ser("ReadBookIntent", {{"Title", "dune"}, {"Author", "herbert"}}, "ReadBookIntent", {{"Title", "dune"}});
    CHECK(b.ser() == doctest::Approx(1.0 / 3));
  }

  TEST_CASE("score_ser on an utterance uses its BIO spans") {
    Utterance u;
    u.tokens = {"read", "the", "hobbit"};
    u.bio_tags = {"O", "B-Title", "I-Title"};
    u.intent = "ReadBookIntent";
    Hypothesis h;
    h.intent = "ReadBookIntent";
    h.slots = {{"Title", "the hobbit"}};
    CHECK(score_ser(u, h).errors() == 0);
    h.slots = {{"Title", "hobbit"}};
    CHECK(score_ser(u, h).substitutions == 1);
  }

  TEST_CASE("SER is symmetric in slot order") {
    std::mt19937_64 rng(1);
    for (const auto& c : oracle::ser_cases()) {
      auto hyp = c.hyp_slots;
      std::shuffle(hyp.begin(), hyp.end(), rng);
      auto ref = c.ref_slots;
      std::shuffle(ref.begin(), ref.end(), rng);
      CHECK(score_ser(c.ref_intent, ref, c.hyp_intent, hyp) == score_ser(c.ref_intent, c.ref_slots, c.hyp_intent, c.hyp_slots));
    }
  }

  TEST_CASE("micro-average and permutation invariance") {
    SerBreakdown a{0, 1, 0, 2}, b{0, 0, 0, 3};
    auto r = aggregate_ser({{"x", "A", 1, 2}, {"y", "B", 0, 3}}, {a, b});
    CHECK(r.ser() == 0.2);
    CHECK(r.per_domain.at("A").ser() == 0.5);
    auto s = aggregate_ser({{"y", "B", 0, 3}, {"x", "A", 1, 2}}, {b, a});
    CHECK(s.ser() == r.ser());
    CHECK(relative_reduction(0.30, 0.27) == doctest::Approx(10.0));
  }

  TEST_CASE("training structure, determinism and ranking") {
    Corpus train = toy_corpus();
    NluSystem sys = train_nlu(train, fast_config());
    CHECK(sys.domain_names() == std::vector<std::string>{"Books", "Music", "Weather"});
    CHECK(sys.domains.size() == 3);
    CHECK(serialize(train_nlu(train, fast_config())) == serialize(sys));
    CHECK(deserialize_nlu(serialize(sys)) == sys);

    std::vector<std::string> q{"read", "emma"};
    auto hyps = interpret(sys, q);
    REQUIRE(hyps.size() == 3);
    CHECK(hyps[0].domain == "Books");
    CHECK(hyps[0].intent == "BooksIntent");
    CHECK(hyps[0].slots == std::vector<Slot>{{"Title", "emma"}});
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      CHECK(hyps[i].confidence > 0.0);
      CHECK(hyps[i].confidence <= 1.0);
      if (i) CHECK(hyps[i - 1].confidence >= hyps[i].confidence);
    }
    CHECK(evaluate_ser(sys, train).ser() == 0.0);
  }

  TEST_CASE("zero models fall back to domain-name order") {
    Corpus train = toy_corpus(10);
    NluSystem sys = train_nlu(train, fast_config());
    for (auto& d : sys.domains) {
      std::fill(d.ic.weights.begin(), d.ic.weights.end(), 0.0);
      std::fill(d.ic.bias.begin(), d.ic.bias.end(), 0.0);
      std::fill(d.ner.emission.begin(), d.ner.emission.end(), 0.0);
      std::fill(d.ner.transition.begin(), d.ner.transition.end(), 0.0);
      std::fill(d.ner.start.begin(), d.ner.start.end(), 0.0);
    }
    std::vector<std::string> q{"anything"};
    auto hyps = interpret(sys, q);
    // Label sets differ in size, so compare only domains whose confidences tie.
    for (std::size_t i = 1; i < hyps.size(); ++i) {
      if (hyps[i - 1].confidence == hyps[i].confidence) CHECK(hyps[i - 1].domain < hyps[i].domain);
    }
  }

  TEST_CASE("more target data does not hurt training-set recall") {
    Corpus all = toy_corpus(120);
    Corpus small;
    std::vector<Utterance> extra;
    int books = 0;
    for (const auto& u : all) {
      if (u.domain == "Books" && books++ >= 10) {
        if (extra.size() < 50) extra.push_back(u);
        continue;
      }
      small.add(u);
    }
    Corpus bigger = small;
    for (auto& u : extra) bigger.add(u);
    auto recall = [&](const NluSystem& s) {
      int hit = 0, n = 0;
      for (const auto& u : bigger) {
        if (u.domain != "Books") continue;
        ++n;
        hit += interpret(s, u.tokens).front().domain == "Books";
      }
      return static_cast<double>(hit) / n;
    };
    CHECK(recall(train_nlu(bigger, fast_config())) >= recall(train_nlu(small, fast_config())));
  }

  TEST_CASE("domain list errors") {
    NluConfig c = fast_config();
    c.domains = {"Books", "Cinema"};
    CHECK_THROWS_AS(train_nlu(toy_corpus(10), c), Error);
    CHECK_THROWS_AS(evaluate_ser(train_nlu(toy_corpus(10), fast_config()), Corpus{}), Error);
  }
}
