#include "nlual/crf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "nlual/common.hpp"
#include "scaled_weights.hpp"

namespace nlual {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* xs, std::size_t n) {
  double mx = kNegInf;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, xs[i]);
  if (mx == kNegInf) return kNegInf;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(xs[i] - mx);
  return mx + std::log(s);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Dense potentials of one sequence with constraints folded in as -inf.
struct Lattice {
  std::size_t T = 0;
  std::size_t Y = 0;
  std::vector<double> emit;   // T×Y
  std::vector<double> trans;  // Y×Y
  std::vector<double> start;  // Y
};

Lattice make_lattice(const CrfModel& model, const TokenFeatures& feats) {
  Lattice L;
  L.T = feats.size();
  L.Y = model.num_labels();
  L.emit = emission_scores(model, feats);
  L.trans.resize(L.Y * L.Y);
  L.start.resize(L.Y);
  for (std::size_t a = 0; a < L.Y; ++a) {
    L.start[a] = model.allowed_start(a) ? model.start[a] : kNegInf;
    for (std::size_t b = 0; b < L.Y; ++b) {
      L.trans[a * L.Y + b] = model.allowed_transition(a, b) ? model.transition[a * L.Y + b] : kNegInf;
    }
  }
  return L;
}

// alpha[t][y] = log Σ over prefixes ending in y at t.
std::vector<double> forward(const Lattice& L) {
  const std::size_t T = L.T, Y = L.Y;
  std::vector<double> alpha(T * Y);
  std::vector<double> tmp(Y);
  for (std::size_t y = 0; y < Y; ++y) alpha[y] = L.start[y] + L.emit[y];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t p = 0; p < Y; ++p) tmp[p] = alpha[(t - 1) * Y + p] + L.trans[p * Y + y];
      alpha[t * Y + y] = log_sum_exp(tmp.data(), Y) + L.emit[t * Y + y];
    }
  }
  return alpha;
}

std::vector<double> backward(const Lattice& L) {
  const std::size_t T = L.T, Y = L.Y;
  std::vector<double> beta(T * Y, 0.0);
  std::vector<double> tmp(Y);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t n = 0; n < Y; ++n) {
        tmp[n] = L.trans[y * Y + n] + L.emit[(t + 1) * Y + n] + beta[(t + 1) * Y + n];
      }
      beta[t * Y + y] = log_sum_exp(tmp.data(), Y);
    }
  }
  return beta;
}

Marginals marginals_of(const Lattice& L) {
  const std::size_t T = L.T, Y = L.Y;
  Marginals m;
  auto alpha = forward(L);
  auto beta = backward(L);
  m.log_z = log_sum_exp(&alpha[(T - 1) * Y], Y);
  m.node.resize(T * Y);
  for (std::size_t i = 0; i < T * Y; ++i) {
    const double v = alpha[i] + beta[i] - m.log_z;
    m.node[i] = v == kNegInf ? 0.0 : std::exp(v);
  }
  m.edge.assign((T > 0 ? T - 1 : 0) * Y * Y, 0.0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t a = 0; a < Y; ++a) {
      for (std::size_t b = 0; b < Y; ++b) {
        const double v = alpha[t * Y + a] + L.trans[a * Y + b] + L.emit[(t + 1) * Y + b] +
                         beta[(t + 1) * Y + b] - m.log_z;
        m.edge[t * Y * Y + a * Y + b] = v == kNegInf ? 0.0 : std::exp(v);
      }
    }
  }
  return m;
}

ViterbiResult viterbi_of(const Lattice& L) {
  const std::size_t T = L.T, Y = L.Y;
  std::vector<double> delta(T * Y);
  std::vector<std::size_t> back(T * Y, 0);
  for (std::size_t y = 0; y < Y; ++y) delta[y] = L.start[y] + L.emit[y];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < Y; ++y) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t p = 0; p < Y; ++p) {
        const double v = delta[(t - 1) * Y + p] + L.trans[p * Y + y];
        if (v > best) {  // strict: lowest index wins ties
          best = v;
          arg = p;
        }
      }
      delta[t * Y + y] = best + L.emit[t * Y + y];
      back[t * Y + y] = arg;
    }
  }
  ViterbiResult r;
  r.path.assign(T, 0);
  double best = kNegInf;
  std::size_t arg = 0;
  for (std::size_t y = 0; y < Y; ++y) {
    if (delta[(T - 1) * Y + y] > best) {
      best = delta[(T - 1) * Y + y];
      arg = y;
    }
  }
  r.score = best;
  r.path[T - 1] = arg;
  for (std::size_t t = T - 1; t > 0; --t) r.path[t - 1] = back[t * Y + r.path[t]];
  return r;
}

void require_nonempty(const TokenFeatures& feats) {
  if (feats.size() == 0) throw Error("CRF inference requires a sequence of length >= 1");
}

}  // namespace

TokenFeatures token_features(std::span<const std::string> tokens, const FeatureConfig& config) {
  const int bits = config.hash_bits;
  auto norm = [&](const std::string& s) { return config.lowercase ? lower(s) : s; };
  TokenFeatures tf;
  tf.positions.resize(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto& f = tf.positions[t];
    f.push_back(hash_token("b", bits));
    f.push_back(hash_token("w=" + norm(tokens[t]), bits));
    f.push_back(hash_token("p=" + (t == 0 ? std::string("<s>") : norm(tokens[t - 1])), bits));
    f.push_back(hash_token("n=" + (t + 1 == tokens.size() ? std::string("</s>") : norm(tokens[t + 1])),
                           bits));
    if (t == 0) f.push_back(hash_token("first", bits));
    if (t + 1 == tokens.size()) f.push_back(hash_token("last", bits));
  }
  return tf;
}

CrfModel CrfModel::zeros(std::vector<std::string> labels, const FeatureConfig& features,
                         bool bio_constraints) {
  CrfModel m;
  m.labels = std::move(labels);
  m.features = features;
  m.bio_constraints = bio_constraints;
  const std::size_t Y = m.labels.size();
  m.emission.assign(features.dimension() * Y, 0.0);
  m.transition.assign(Y * Y, 0.0);
  m.start.assign(Y, 0.0);
  return m;
}

std::size_t CrfModel::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  throw Error("label '" + std::string(label) + "' not in CRF label set");
}

bool CrfModel::allowed_start(std::size_t y) const {
  return !bio_constraints || labels[y].rfind("I-", 0) != 0;
}

bool CrfModel::allowed_transition(std::size_t prev, std::size_t cur) const {
  if (!bio_constraints) return true;
  const std::string& c = labels[cur];
  if (c.rfind("I-", 0) != 0) return true;
  const std::string& p = labels[prev];
  return p.size() > 2 && (p[0] == 'B' || p[0] == 'I') && p.compare(2, std::string::npos, c, 2) == 0;
}

std::vector<double> emission_scores(const CrfModel& model, const TokenFeatures& feats) {
  const std::size_t Y = model.num_labels();
  std::vector<double> e(feats.size() * Y, 0.0);
  for (std::size_t t = 0; t < feats.size(); ++t) {
    for (std::uint32_t f : feats.positions[t]) {
      const double* row = &model.emission[std::size_t{f} * Y];
      for (std::size_t y = 0; y < Y; ++y) e[t * Y + y] += row[y];
    }
  }
  return e;
}

double path_score(const CrfModel& model, const TokenFeatures& feats,
                  std::span<const std::size_t> path) {
  require_nonempty(feats);
  Lattice L = make_lattice(model, feats);
  double s = L.start[path[0]] + L.emit[path[0]];
  for (std::size_t t = 1; t < L.T; ++t) {
    s += L.trans[path[t - 1] * L.Y + path[t]] + L.emit[t * L.Y + path[t]];
  }
  return s;
}

double log_partition(const CrfModel& model, const TokenFeatures& feats) {
  require_nonempty(feats);
  Lattice L = make_lattice(model, feats);
  auto alpha = forward(L);
  return log_sum_exp(&alpha[(L.T - 1) * L.Y], L.Y);
}

ViterbiResult viterbi(const CrfModel& model, const TokenFeatures& feats) {
  require_nonempty(feats);
  return viterbi_of(make_lattice(model, feats));
}

std::vector<std::string> viterbi_labels(const CrfModel& model, const TokenFeatures& feats) {
  if (feats.size() == 0) return {};
  auto r = viterbi(model, feats);
  std::vector<std::string> out;
  out.reserve(r.path.size());
  for (std::size_t y : r.path) out.push_back(model.labels[y]);
  return out;
}

double sequence_confidence(const CrfModel& model, const TokenFeatures& feats) {
  require_nonempty(feats);
  Lattice L = make_lattice(model, feats);
  const auto best = viterbi_of(L);
  auto alpha = forward(L);
  const double log_z = log_sum_exp(&alpha[(L.T - 1) * L.Y], L.Y);
  return std::min(1.0, std::exp(best.score - log_z));
}

Marginals forward_backward(const CrfModel& model, const TokenFeatures& feats) {
  require_nonempty(feats);
  return marginals_of(make_lattice(model, feats));
}

namespace {

std::vector<std::size_t> gold_indices(const CrfModel& model, const CrfExample& ex) {
  if (ex.labels.size() != ex.features.size()) throw Error("CRF example labels/tokens length mismatch");
  std::vector<std::size_t> y;
  y.reserve(ex.labels.size());
  for (const auto& l : ex.labels) y.push_back(model.label_index(l));
  return y;
}

}  // namespace

double crf_objective(const CrfModel& model, std::span<const CrfExample> data, double l2) {
  double nll = 0;
  for (const auto& ex : data) {
    auto gold = gold_indices(model, ex);
    nll += log_partition(model, ex.features) - path_score(model, ex.features, gold);
  }
  double norm = 0;
  for (double w : model.emission) norm += w * w;
  for (double w : model.transition) norm += w * w;
  for (double w : model.start) norm += w * w;
  return nll / static_cast<double>(data.size()) + 0.5 * l2 * norm;
}

CrfGradient crf_objective_gradient(const CrfModel& model, std::span<const CrfExample> data,
                                   double l2) {
  const std::size_t Y = model.num_labels();
  CrfGradient g{std::vector<double>(model.emission.size(), 0.0),
                std::vector<double>(model.transition.size(), 0.0),
                std::vector<double>(model.start.size(), 0.0)};
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) {
    auto gold = gold_indices(model, ex);
    auto m = forward_backward(model, ex.features);
    const std::size_t T = ex.features.size();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::uint32_t f : ex.features.positions[t]) {
        for (std::size_t y = 0; y < Y; ++y) {
          g.emission[std::size_t{f} * Y + y] += (m.node[t * Y + y] - (gold[t] == y ? 1.0 : 0.0)) * inv_n;
        }
      }
    }
    for (std::size_t y = 0; y < Y; ++y) g.start[y] += (m.node[y] - (gold[0] == y ? 1.0 : 0.0)) * inv_n;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      for (std::size_t k = 0; k < Y * Y; ++k) g.transition[k] += m.edge[t * Y * Y + k] * inv_n;
      g.transition[gold[t] * Y + gold[t + 1]] -= inv_n;
    }
  }
  for (std::size_t i = 0; i < g.emission.size(); ++i) g.emission[i] += l2 * model.emission[i];
  for (std::size_t i = 0; i < g.transition.size(); ++i) g.transition[i] += l2 * model.transition[i];
  for (std::size_t i = 0; i < g.start.size(); ++i) g.start[i] += l2 * model.start[i];
  return g;
}

std::vector<std::string> crf_label_set(std::span<const CrfExample> data) {
  std::set<std::string> seen;
  for (const auto& ex : data) {
    for (const auto& l : ex.labels) {
      if (l != "O") seen.insert(l);
    }
  }
  std::vector<std::string> labels{"O"};
  labels.insert(labels.end(), seen.begin(), seen.end());
  return labels;
}

CrfModel crf_train(std::span<const CrfExample> data, std::vector<std::string> label_set,
                   const FeatureConfig& features, const TrainConfig& config,
                   bool bio_constraints, TrainStats* stats) {
  config.validate();
  features.validate();
  if (data.empty()) throw Error("crf_train requires at least one sequence");
  if (std::find(label_set.begin(), label_set.end(), "O") == label_set.end()) {
    throw Error("CRF label set must contain \"O\"");
  }

  CrfModel model = CrfModel::zeros(std::move(label_set), features, bio_constraints);
  const std::size_t Y = model.num_labels();
  const std::size_t n_emit = model.emission.size();

  std::vector<std::vector<std::size_t>> gold;
  gold.reserve(data.size());
  for (const auto& ex : data) {
    if (ex.features.size() == 0) throw Error("crf_train: empty sequence");
    gold.push_back(gold_indices(model, ex));
  }

  // θ = [emission | transition | start] under one shared scale.
  detail::ScaledWeights theta(n_emit + Y * Y + Y);
  const std::size_t off_trans = n_emit;
  const std::size_t off_start = n_emit + Y * Y;

  Rng rng(derive_seed(config.seed, "crf"));
  const double lr = config.learning_rate;
  const double shrink = 1.0 - lr * config.l2;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Lattice L;
  L.Y = Y;
  L.trans.resize(Y * Y);
  L.start.resize(Y);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0;
    for (std::size_t n : order) {
      const auto& feats = data[n].features;
      const auto& y = gold[n];
      const std::size_t T = feats.size();

      L.T = T;
      L.emit.assign(T * Y, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::uint32_t f : feats.positions[t]) {
          for (std::size_t k = 0; k < Y; ++k) L.emit[t * Y + k] += theta.at(std::size_t{f} * Y + k);
        }
      }
      for (std::size_t a = 0; a < Y; ++a) {
        L.start[a] = model.allowed_start(a) ? theta.at(off_start + a) : kNegInf;
        for (std::size_t b = 0; b < Y; ++b) {
          L.trans[a * Y + b] = model.allowed_transition(a, b) ? theta.at(off_trans + a * Y + b) : kNegInf;
        }
      }

      const Marginals m = marginals_of(L);
      double gold_score = L.start[y[0]] + L.emit[y[0]];
      for (std::size_t t = 1; t < T; ++t) gold_score += L.trans[y[t - 1] * Y + y[t]] + L.emit[t * Y + y[t]];
      epoch_loss += m.log_z - gold_score;

      theta.shrink(shrink);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::uint32_t f : feats.positions[t]) {
          for (std::size_t k = 0; k < Y; ++k) {
            const double g = m.node[t * Y + k] - (y[t] == k ? 1.0 : 0.0);
            if (g != 0.0) theta.add(std::size_t{f} * Y + k, -lr * g);
          }
        }
      }
      for (std::size_t k = 0; k < Y; ++k) {
        const double g = m.node[k] - (y[0] == k ? 1.0 : 0.0);
        if (g != 0.0) theta.add(off_start + k, -lr * g);
      }
      for (std::size_t t = 0; t + 1 < T; ++t) {
        for (std::size_t k = 0; k < Y * Y; ++k) {
          double g = m.edge[t * Y * Y + k];
          if (k == y[t] * Y + y[t + 1]) g -= 1.0;
          if (g != 0.0) theta.add(off_trans + k, -lr * g);
        }
      }
    }
    if (stats) stats->epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
  }

  auto flat = theta.release();
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n_emit), model.emission.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off_trans),
            flat.begin() + static_cast<std::ptrdiff_t>(off_start), model.transition.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off_start), flat.end(), model.start.begin());
  return model;
}

CrfModel crf_train(std::span<const CrfExample> data, const FeatureConfig& features,
                   const TrainConfig& config, bool bio_constraints, TrainStats* stats) {
  return crf_train(data, crf_label_set(data), features, config, bio_constraints, stats);
}

}  // namespace nlual
