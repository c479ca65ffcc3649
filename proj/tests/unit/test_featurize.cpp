#include <string>
#include <vector>

#include "doctest.h"
#include "nlual/common.hpp"
#include "nlual/featurize.hpp"

using namespace nlual;

namespace {

// Textbook FNV-1a, written out separately from the library's constexpr.
std::uint64_t reference_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST_SUITE("featurize") {
  TEST_CASE("fnv1a64 of a single byte") {
    CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
    CHECK(reference_fnv("a") == 0xAF63DC4C8601EC8CULL);
    for (std::string s : {"", "b", "books", "read_me", "ünïcode"}) CHECK(fnv1a64(s) == reference_fnv(s));
  }

  TEST_CASE("hash_token reduces modulo 2^bits") {
    for (int bits : {10, 18, 30}) {
      CHECK(hash_token("a", bits) == (0xAF63DC4C8601EC8CULL & ((1ULL << bits) - 1)));
    }
    CHECK(hash_token("a", 30) == hash_token("a", 30));
    CHECK(hash_token("a", 30) != hash_token("b", 30));
  }

  TEST_CASE("extract_ngrams counts") {
    FeatureConfig cfg{{1, 2}, 18, true};
    CHECK(extract_ngrams(std::vector<std::string>{}, cfg).empty());

    auto fv = extract_ngrams(std::vector<std::string>{"a", "b"}, cfg);
    CHECK(fv.total_mass() == doctest::Approx(3.0));
    CHECK(fv.nnz() == 3);
    bool has_bigram = false;
    for (auto [i, v] : fv.entries()) has_bigram = has_bigram || i == hash_token("a_b", 18);
    CHECK(has_bigram);
  }

  TEST_CASE("repeated token accumulates into one entry") {
    FeatureConfig cfg{{1}, 10, true};
    auto fv = extract_ngrams(std::vector<std::string>{"a", "a"}, cfg);
    REQUIRE(fv.nnz() == 1);
    CHECK(fv.entries()[0].first == hash_token("a", 10));
    CHECK(fv.entries()[0].second == 2.0);
  }

  TEST_CASE("mass equals the number of n-grams under collisions") {
    // 10 bits over many distinct tokens forces collisions.
    FeatureConfig cfg{{1, 2, 3}, 10, true};
    std::vector<std::string> toks;
    for (int i = 0; i < 400; ++i) toks.push_back("w" + std::to_string(i));
    auto fv = extract_ngrams(toks, cfg);
    CHECK(fv.total_mass() == doctest::Approx(400 + 399 + 398));
    CHECK(fv.nnz() < 400 + 399 + 398);
    for (auto [i, v] : fv.entries()) {
      CHECK(i < 1024u);
      CHECK(v != 0.0);
    }
  }

  TEST_CASE("lowercasing") {
    FeatureConfig lower{{1}, 18, true}, keep{{1}, 18, false};
    std::vector<std::string> a{"Dune"}, b{"dune"};
    CHECK(extract_ngrams(a, lower) == extract_ngrams(b, lower));
    CHECK_FALSE(extract_ngrams(a, keep) == extract_ngrams(b, keep));
  }

  TEST_CASE("config validation") {
    CHECK_THROWS_AS((FeatureConfig{{}, 18, true}.validate()), ConfigError);
    CHECK_THROWS_AS((FeatureConfig{{4}, 18, true}.validate()), ConfigError);
    CHECK_THROWS_AS((FeatureConfig{{1}, 9, true}.validate()), ConfigError);
    CHECK_NOTHROW((FeatureConfig{{1, 2, 3}, 30, true}.validate()));
  }

  TEST_CASE("Rng sequences are reproducible") {
    Rng a(42), b(42), c(43);
    std::vector<int> xs(20), ys(20);
    for (int i = 0; i < 20; ++i) xs[i] = i;
    ys = xs;
    a.shuffle(xs);
    b.shuffle(ys);
    CHECK(xs == ys);
    CHECK(a.next() == b.next());
    CHECK(a.next() != c.next());
    for (int i = 0; i < 1000; ++i) {
      CHECK(c.below(7) < 7u);
      double u = c.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
    CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
    CHECK(derive_seed(1, std::uint64_t{2}) != derive_seed(1, std::uint64_t{3}));
  }
}
