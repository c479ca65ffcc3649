#include <cmath>
#include <numeric>
#include <set>
#include <random>

#include "doctest.h"
#include "nlual/linear.hpp"
#include "nlual/model_io.hpp"
#include "oracles.hpp"

using namespace nlual;

namespace {

FeatureVector one_hot(std::uint32_t i, double v = 1.0) { return FeatureVector::from_pairs({{i, v}}); }

std::vector<FeatureVector> random_vectors(std::mt19937_64& rng, std::size_t n, std::uint32_t dim) {
  std::uniform_int_distribution<std::uint32_t> idx(0, dim - 1);
  std::uniform_real_distribution<double> val(-1.5, 1.5);
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<FeatureVector::Entry> pairs;
    for (int k = 0; k < 4; ++k) pairs.push_back({idx(rng), val(rng)});
    out.push_back(FeatureVector::from_pairs(pairs));
  }
  return out;
}

}  // namespace

TEST_SUITE("linear") {
  TEST_CASE("raw_score examples") {
    LinearModel m = LinearModel::zeros(LossKind::logistic, 10);
    CHECK(raw_score(m, one_hot(3, 7.0)) == 0.0);
    m.weights[5] = 2.0;
    m.bias = -1.0;
    CHECK(raw_score(m, one_hot(5, 3.0)) == 5.0);
    auto fv = FeatureVector::from_pairs({{5, 1.5}, {9, 2.0}});
    m.weights[9] = -0.25;
    CHECK(raw_score(m, fv.scaled(2.0)) - m.bias == doctest::Approx(2 * (raw_score(m, fv) - m.bias)));
  }

  TEST_CASE("sigmoid") {
    CHECK(sigmoid_prob(0) == 0.5);
    CHECK(sigmoid_prob(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
    for (double x : {0.1, 1.0, 5.0, 40.0}) CHECK(sigmoid_prob(x) + sigmoid_prob(-x) == doctest::Approx(1.0));
    CHECK(sigmoid_prob(1000) <= 1.0);
    CHECK(sigmoid_prob(-1000) >= 0.0);
    CHECK(sigmoid_prob(1.0) < sigmoid_prob(1.1));
  }

  TEST_CASE("loss_gradient examples") {
    CHECK(loss_gradient(LossKind::logistic, 0, 1) == -0.5);
    CHECK(loss_gradient(LossKind::hinge, 0, 1) == -1.0);
    CHECK(loss_gradient(LossKind::squared, 0, 1) == -1.0);
    CHECK(loss_gradient(LossKind::hinge, 2, 1) == 0.0);
    CHECK(loss_gradient(LossKind::hinge, 0.5, -1) == 1.0);
    CHECK(loss_gradient(LossKind::squared, 0.5, -1) == 1.5);
  }

  TEST_CASE("loss_gradient matches the derivative of loss_value") {
    for (auto kind : {LossKind::logistic, LossKind::squared, LossKind::hinge}) {
      for (int label : {-1, 1}) {
        for (double s : {-2.3, -0.4, 0.3, 1.7}) {
          double x = s;
          double num = oracle::central_difference([&] { return loss_value(kind, x, label); }, x);
          CHECK(oracle::relative_error(loss_gradient(kind, s, label), num) < 1e-6);
        }
      }
    }
  }

  TEST_CASE("binary objective gradients match finite differences") {
    std::mt19937_64 rng(17);
    auto vecs = random_vectors(rng, 30, 1024);
    for (auto kind : {LossKind::logistic, LossKind::squared, LossKind::hinge}) {
      LinearModel m = LinearModel::zeros(kind, 10);
      std::normal_distribution<double> w(0, 0.3);
      for (auto& x : m.weights) x = w(rng);
      m.bias = 0.1;
      std::vector<LabeledVector> data;
      for (std::size_t i = 0; i < vecs.size(); ++i) data.push_back({&vecs[i], i % 3 == 0 ? 1 : -1});
      if (kind == LossKind::hinge) {
        // Stay off the hinge so the objective is differentiable at m.
        for (const auto& d : data) REQUIRE(std::abs(d.label * raw_score(m, *d.features) - 1) > 1e-3);
      }
      const double l2 = 1e-3;
      auto [gw, gb] = binary_objective_gradient(m, data, l2);
      auto f = [&] { return binary_objective(m, data, l2); };

      std::set<std::uint32_t> touched;
      for (const auto& v : vecs) {
        for (auto [i, val] : v.entries()) touched.insert(i);
      }
      int checked = 0;
      for (auto i : touched) {
        if (checked++ == 20) break;
        double num = oracle::central_difference(f, m.weights[i]);
        CHECK_MESSAGE(oracle::relative_error(gw[i], num) < 1e-4, to_string(kind) << " weight " << i);
      }
      CHECK(oracle::relative_error(gb, oracle::central_difference(f, m.bias)) < 1e-4);
      // An untouched weight only sees the regularizer.
      std::uint32_t idle = 0;
      while (touched.count(idle)) ++idle;
      CHECK(gw[idle] == doctest::Approx(l2 * m.weights[idle]));
    }
  }

  TEST_CASE("maxent gradient matches finite differences") {
    std::mt19937_64 rng(23);
    auto vecs = random_vectors(rng, 25, 1024);
    MaxEntModel m = MaxEntModel::zeros({"A", "B", "C", "OUT_OF_DOMAIN"}, 10);
    std::normal_distribution<double> w(0, 0.3);
    for (auto& x : m.weights) x = w(rng);
    for (auto& x : m.bias) x = w(rng);
    std::vector<LabeledExample> data;
    for (std::size_t i = 0; i < vecs.size(); ++i) data.push_back({&vecs[i], m.class_labels[i % 4]});
    const double l2 = 1e-3;
    auto [gw, gb] = maxent_objective_gradient(m, data, l2);
    auto f = [&] { return maxent_objective(m, data, l2); };
    int checked = 0;
    for (const auto& v : vecs) {
      for (auto [i, val] : v.entries()) {
        for (std::size_t k = 0; k < 4 && checked < 40; ++k, ++checked) {
          const std::size_t at = std::size_t{i} * 4 + k;
          CHECK(oracle::relative_error(gw[at], oracle::central_difference(f, m.weights[at])) < 1e-4);
        }
      }
    }
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(oracle::relative_error(gb[k], oracle::central_difference(f, m.bias[k])) < 1e-4);
    }
  }

  TEST_CASE("separable points get opposite signs") {
    auto p = one_hot(1), n = one_hot(2);
    std::vector<const FeatureVector*> pos{&p}, neg{&n};
    for (auto kind : {LossKind::logistic, LossKind::squared, LossKind::hinge}) {
      TrainConfig cfg;
      cfg.epochs = 20;
      LinearModel m = train_binary(pos, neg, kind, 10, cfg);
      CHECK(raw_score(m, p) > 0);
      CHECK(raw_score(m, n) < 0);
    }
  }

  TEST_CASE("training is deterministic and loss trends down") {
    std::mt19937_64 rng(3);
    auto vecs = random_vectors(rng, 200, 1024);
    std::vector<const FeatureVector*> pos, neg;
    for (std::size_t i = 0; i < vecs.size(); ++i) (i % 4 == 0 ? pos : neg).push_back(&vecs[i]);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 5;
    TrainStats s1;
    auto a = train_binary(pos, neg, LossKind::logistic, 10, cfg, &s1);
    auto b = train_binary(pos, neg, LossKind::logistic, 10, cfg);
    CHECK(a == b);
    REQUIRE(s1.epoch_loss.size() == 8);
    CHECK(s1.epoch_loss.back() <= s1.epoch_loss.front());
    cfg.seed = 6;
    CHECK_FALSE(train_binary(pos, neg, LossKind::logistic, 10, cfg) == a);
  }

  TEST_CASE("empty class is an error") {
    auto p = one_hot(1);
    std::vector<const FeatureVector*> pos{&p}, none;
    CHECK_THROWS_AS(train_binary(pos, none, LossKind::logistic, 10, TrainConfig{}), Error);
    CHECK_THROWS_AS(train_binary(none, pos, LossKind::logistic, 10, TrainConfig{}), Error);
  }

  TEST_CASE("downsampling never removes positives") {
    auto idx = downsample_indices(1000, 10, 10.0, 1);
    CHECK(idx.size() == 100);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(downsample_indices(1000, 10, 10.0, 1) == idx);
    CHECK(downsample_indices(50, 10, 10.0, 1).size() == 50);
    CHECK(downsample_indices(1000, 10, std::nullopt, 1).size() == 1000);
  }

  TEST_CASE("maxent examples") {
    MaxEntModel z = MaxEntModel::zeros({"a", "b", "c", "d"}, 10);
    auto p = predict_maxent(z, one_hot(4));
    for (double x : p) CHECK(x == doctest::Approx(0.25));

    std::mt19937_64 rng(2);
    auto vecs = random_vectors(rng, 50, 1024);
    MaxEntModel r = MaxEntModel::zeros({"a", "b", "c"}, 10);
    std::normal_distribution<double> w(0, 2);
    for (auto& x : r.weights) x = w(rng);
    for (const auto& v : vecs) {
      auto q = predict_maxent(r, v);
      CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
      auto s = maxent_scores(r, v);
      std::vector<double> shifted = s;
      for (auto& x : shifted) x += 17.0;
      auto q2 = softmax(shifted);
      CHECK(std::max_element(q.begin(), q.end()) - q.begin() == std::max_element(q2.begin(), q2.end()) - q2.begin());
    }
  }

  TEST_CASE("maxent fits one-hot classes") {
    std::vector<FeatureVector> xs{one_hot(1), one_hot(2), one_hot(3)};
    std::vector<LabeledExample> ex;
    for (int rep = 0; rep < 5; ++rep) {
      ex.push_back({&xs[0], "x"});
      ex.push_back({&xs[1], "y"});
      ex.push_back({&xs[2], "z"});
    }
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.learning_rate = 0.2;
    MaxEntModel m = train_maxent(ex, 10, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      auto p = predict_maxent(m, xs[i]);
      CHECK(m.class_labels[std::max_element(p.begin(), p.end()) - p.begin()] == std::string(1, "xyz"[i]));
    }
  }

  TEST_CASE("serialization round-trips scores bit-exactly") {
    std::mt19937_64 rng(8);
    auto vecs = random_vectors(rng, 60, 1024);
    std::vector<const FeatureVector*> pos, neg;
    for (std::size_t i = 0; i < vecs.size(); ++i) (i % 2 ? pos : neg).push_back(&vecs[i]);
    LinearModel m = train_binary(pos, neg, LossKind::hinge, 10, TrainConfig{});
    LinearModel back = deserialize_linear(serialize(m));
    CHECK(back == m);
    for (const auto& v : vecs) CHECK(raw_score(back, v) == raw_score(m, v));
    CHECK_THROWS_AS(deserialize_linear("{\"format\":\"nope\"}"), Error);

    std::vector<LabeledExample> ex;
    for (std::size_t i = 0; i < vecs.size(); ++i) ex.push_back({&vecs[i], i % 3 ? "p" : "q"});
    MaxEntModel me = train_maxent(ex, 10, TrainConfig{});
    CHECK(deserialize_maxent(serialize(me)) == me);
  }

  TEST_CASE("train config validation") {
    TrainConfig c;
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.neg_pos_ratio_cap = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
