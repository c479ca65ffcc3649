#include "nlual/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nlual/common.hpp"

namespace nlual {

void PairedErrors::validate() const {
  const std::size_t n = errors_a.size();
  if (errors_b.size() != n || reference_slots.size() != n || (!ids.empty() && ids.size() != n)) {
    throw Error("paired errors have mismatched lengths");
  }
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> diffs) {
  std::vector<double> d;
  for (double x : diffs) {
    if (x != 0.0) d.push_back(x);
  }
  WilcoxonResult r;
  r.n = d.size();
  if (d.empty()) return r;  // no evidence either way: p = 1

  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });

  // Average ranks, kept doubled so they stay integral.
  std::vector<long> rank2(n);
  double tie_term = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long twice_avg = static_cast<long>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = twice_avg;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  long w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) w2 += rank2[i];
  }
  r.statistic = w2 / 2.0;

  if (n <= 25) {
    r.exact = true;
    // counts[s] = number of sign assignments whose doubled W+ equals s.
    const long total2 = std::accumulate(rank2.begin(), rank2.end(), 0L);
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long rk : rank2) {
      for (long s = reach; s >= 0; --s) {
        if (counts[static_cast<std::size_t>(s)] != 0.0) {
          counts[static_cast<std::size_t>(s + rk)] += counts[static_cast<std::size_t>(s)];
        }
      }
      reach += rk;
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double le = 0, ge = 0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) le += counts[static_cast<std::size_t>(s)];
      if (s >= w2) ge += counts[static_cast<std::size_t>(s)];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(le, ge) / all);
    return r;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1) / 4.0;
  const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  if (var <= 0) return r;
  const double dev = std::max(0.0, std::abs(r.statistic - mean) - 0.5);
  r.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(dev / std::sqrt(var))));
  return r;
}

BootstrapResult bootstrap_significance(const PairedErrors& pairs, std::size_t resamples,
                                       std::uint64_t seed) {
  pairs.validate();
  if (pairs.size() == 0) throw Error("bootstrap_significance: no pairs");
  const std::size_t n = pairs.size();

  auto delta_of = [&](double ea, double eb, double refs) {
    return refs > 0 ? (ea - eb) / refs : 0.0;
  };
  const double sum_a = std::accumulate(pairs.errors_a.begin(), pairs.errors_a.end(), 0.0);
  const double sum_b = std::accumulate(pairs.errors_b.begin(), pairs.errors_b.end(), 0.0);
  const double sum_r = std::accumulate(pairs.reference_slots.begin(), pairs.reference_slots.end(), 0.0);

  BootstrapResult r;
  r.resamples = resamples;
  r.observed_delta = delta_of(sum_a, sum_b, sum_r);
  const int sign = r.observed_delta > 0 ? 1 : (r.observed_delta < 0 ? -1 : 0);

  std::vector<double> deltas(resamples);
  parallel_for(resamples, [&](std::size_t k) {
    Rng rng(derive_seed(seed, k));
    double a = 0, b = 0, refs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = rng.below(n);
      a += pairs.errors_a[j];
      b += pairs.errors_b[j];
      refs += pairs.reference_slots[j];
    }
    deltas[k] = delta_of(a, b, refs);
  });

  if (resamples > 0) {
    r.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(resamples);
    std::vector<double> sorted = deltas;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1)));
      return sorted[idx];
    };
    r.ci_low = pct(0.025);
    r.ci_high = pct(0.975);
  }

  if (sign == 0 || resamples == 0) {
    r.p_value = 1.0;
    return r;
  }
  std::size_t contradicting = 0;
  for (double x : deltas) {
    if (x * sign <= 0) ++contradicting;
  }
  r.p_value = std::min(1.0, 2.0 * static_cast<double>(contradicting) / static_cast<double>(resamples));
  return r;
}

double relative_reduction(double base_ser, double new_ser) {
  if (!(base_ser > 0)) throw Error("relative_reduction: base SER must be positive");
  return 100.0 * (base_ser - new_ser) / base_ser;
}

}  // namespace nlual
