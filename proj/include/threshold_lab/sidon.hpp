#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "threshold_lab/analysis.hpp"
#include "threshold_lab/rng.hpp"

// Representation counts of h-fold sums: B_h[g] sets, truncated bases and the
// enumeration of equal-sum tuple systems.
namespace threshold_lab::sidon {

// Sorted distinct integers drawn from {0, 1, ..., n}.
class IntegerSet {
 public:
  IntegerSet() = default;
  IntegerSet(std::uint32_t n, std::vector<std::uint32_t> elements) : n_(n), elements_(std::move(elements)) {
    std::sort(elements_.begin(), elements_.end());
    elements_.erase(std::unique(elements_.begin(), elements_.end()), elements_.end());
    if (!elements_.empty() && elements_.back() > n_) throw std::out_of_range("IntegerSet: element exceeds n");
  }

  std::uint32_t n() const noexcept { return n_; }
  std::size_t size() const noexcept { return elements_.size(); }
  bool empty() const noexcept { return elements_.empty(); }
  const std::vector<std::uint32_t>& elements() const noexcept { return elements_; }

  IntegerSet without(std::uint32_t x) const {
    std::vector<std::uint32_t> rest;
    rest.reserve(elements_.size());
    for (auto e : elements_) {
      if (e != x) rest.push_back(e);
    }
    return IntegerSet(n_, std::move(rest));
  }

 private:
  std::uint32_t n_ = 0;
  std::vector<std::uint32_t> elements_;
};

// counts[s] = number of nondecreasing h-tuples over A summing to s, for
// s in [0, h * max(A)].
struct RepCountTable {
  unsigned h = 2;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(std::uint64_t s) const { return s < counts.size() ? counts[s] : 0; }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::uint64_t max_count() const {
    return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  }
};

struct SidonParams {
  unsigned h = 2;
  unsigned g = 1;
  double alpha = 1.0;

  void validate() const {
    if (h < 2) throw std::invalid_argument("SidonParams: h must be >= 2");
    if (g < 1) throw std::invalid_argument("SidonParams: g must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("SidonParams: alpha must be in (0,1]");
  }
};

namespace detail {

inline void check_h(unsigned h) {
  if (h < 2) throw std::invalid_argument("sidon: h must be >= 2");
}

// Visits the sum of every nondecreasing h-tuple over `elems`. Stops early
// when visit returns false; returns false in that case.
template <typename Visit>
bool for_each_multiset_sum(const std::vector<std::uint32_t>& elems, unsigned h, Visit&& visit) {
  const std::size_t m = elems.size();
  if (m == 0) return true;
  std::vector<std::size_t> idx(h, 0);
  std::vector<std::uint64_t> partial(h + 1, 0);  // partial[d] = sum of first d picks
  for (unsigned d = 0; d < h; ++d) partial[d + 1] = partial[d] + elems[0];
  for (;;) {
    if (!visit(partial[h])) return false;
    // Advance the rightmost position that can move, then reset the tail.
    int d = static_cast<int>(h) - 1;
    while (d >= 0 && idx[static_cast<std::size_t>(d)] + 1 == m) --d;
    if (d < 0) return true;
    const auto du = static_cast<std::size_t>(d);
    ++idx[du];
    partial[du + 1] = partial[du] + elems[idx[du]];
    for (std::size_t e = du + 1; e < h; ++e) {
      idx[e] = idx[du];
      partial[e + 1] = partial[e] + elems[idx[e]];
    }
  }
}

inline double multiset_count(std::size_t m, unsigned h) {
  return std::exp(log_choose(static_cast<double>(m + h - 1), static_cast<double>(h)));
}

}  // namespace detail

// Direct enumeration of nondecreasing h-tuples; cost C(|A|+h-1, h).
inline RepCountTable representation_counts_enumerate(const IntegerSet& a, unsigned h) {
  detail::check_h(h);
  RepCountTable table{h, {}};
  if (a.empty()) return table;
  table.counts.assign(static_cast<std::size_t>(h) * a.elements().back() + 1, 0);
  detail::for_each_multiset_sum(a.elements(), h, [&](std::uint64_t s) {
    ++table.counts[s];
    return true;
  });
  return table;
}

// Multiset convolution: ways[j][s] counts size-j multisets with sum s over
// the elements seen so far. Cost h^2 * |A| * h * max(A).
inline RepCountTable representation_counts_convolve(const IntegerSet& a, unsigned h) {
  detail::check_h(h);
  RepCountTable table{h, {}};
  if (a.empty()) return table;
  const std::size_t width = static_cast<std::size_t>(h) * a.elements().back() + 1;
  std::vector<std::vector<std::uint64_t>> ways(h + 1, std::vector<std::uint64_t>(width, 0));
  ways[0][0] = 1;
  for (auto x : a.elements()) {
    // Ascending j lets x be reused any number of times.
    for (unsigned j = 1; j <= h; ++j) {
      for (std::size_t s = x; s < width; ++s) ways[j][s] += ways[j - 1][s - x];
    }
  }
  table.counts = std::move(ways[h]);
  return table;
}

// Picks whichever route is cheaper for this |A| and h.
inline RepCountTable representation_counts(const IntegerSet& a, unsigned h) {
  detail::check_h(h);
  if (a.empty()) return RepCountTable{h, {}};
  const double enumerate_cost = detail::multiset_count(a.size(), h);
  const double convolve_cost = static_cast<double>(h) * h * a.size() * (static_cast<double>(h) * a.elements().back() + 1);
  return enumerate_cost <= convolve_cost ? representation_counts_enumerate(a, h)
                                         : representation_counts_convolve(a, h);
}

// True iff no sum has more than g representations. Stops at the first
// excess.
inline bool is_Bh_g(const IntegerSet& a, unsigned h, unsigned g) {
  detail::check_h(h);
  if (g < 1) throw std::invalid_argument("is_Bh_g: g must be >= 1");
  if (a.empty()) return true;
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(h) * a.elements().back() + 1, 0);
  return detail::for_each_multiset_sum(a.elements(), h, [&](std::uint64_t s) { return ++counts[s] <= g; });
}

// Largest representation count over all sums.
inline std::uint64_t max_representation_count(const IntegerSet& a, unsigned h) {
  return representation_counts(a, h).max_count();
}

struct TargetInterval {
  std::int64_t lo = 0;
  std::int64_t hi = -1;
  bool empty() const noexcept { return hi < lo; }
};

// [ceil(alpha n), floor((h - alpha) n)], rounded inward.
inline TargetInterval truncated_target(std::uint32_t n, unsigned h, double alpha) {
  constexpr double eps = 1e-9;
  const double nd = n;
  return TargetInterval{static_cast<std::int64_t>(std::ceil(alpha * nd - eps)),
                        static_cast<std::int64_t>(std::floor((h - alpha) * nd + eps))};
}

// True iff every integer in the truncated target interval has at least g
// representations as a nondecreasing h-sum.
inline bool is_truncated_basis(const IntegerSet& a, std::uint32_t n, unsigned h, unsigned g, double alpha) {
  SidonParams{h, g, alpha}.validate();
  const TargetInterval target = truncated_target(n, h, alpha);
  if (target.empty()) return true;
  if (a.empty()) return false;
  const RepCountTable table = representation_counts(a, h);
  for (std::int64_t s = target.lo; s <= target.hi; ++s) {
    if (table.at(static_cast<std::uint64_t>(s)) < g) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Equal-sum tuple systems

inline constexpr std::uint32_t kBhgMaxN = 60;
inline constexpr double kBhgComboBudget = 5e8;

// Number of ordered-increasing (g+1)-tuples of nondecreasing h-tuples over
// [n] = {1..n} with a common sum, bucketed by the number l of distinct
// symbols used. Result index l runs over [0, h(g+1)].
inline std::vector<std::uint64_t> enumerate_Bhg_profile(std::uint32_t n, unsigned h, unsigned g) {
  detail::check_h(h);
  if (g < 1) throw std::invalid_argument("enumerate_Bhg: g must be >= 1");
  if (n > kBhgMaxN) throw std::invalid_argument("enumerate_Bhg: n exceeds the enumeration budget (60)");

  std::vector<std::uint32_t> symbols(n);
  for (std::uint32_t i = 0; i < n; ++i) symbols[i] = i + 1;

  // Tuples grouped by sum, in lexicographic order within each group.
  const std::size_t width = static_cast<std::size_t>(h) * n + 1;
  std::vector<std::vector<std::vector<std::uint32_t>>> by_sum(width);
  if (n > 0) {
    std::vector<std::uint32_t> tuple(h, 1);
    for (;;) {
      std::uint64_t s = 0;
      for (auto v : tuple) s += v;
      by_sum[s].push_back(tuple);
      int d = static_cast<int>(h) - 1;
      while (d >= 0 && tuple[static_cast<std::size_t>(d)] == n) --d;
      if (d < 0) break;
      const auto du = static_cast<std::size_t>(d);
      ++tuple[du];
      for (std::size_t e = du + 1; e < h; ++e) tuple[e] = tuple[du];
    }
  }

  double combos = 0;
  for (const auto& group : by_sum) {
    combos += std::exp(log_choose(static_cast<double>(group.size()), g + 1.0));
  }
  if (combos > kBhgComboBudget) throw std::invalid_argument("enumerate_Bhg: parameters exceed the enumeration budget");

  std::vector<std::uint64_t> by_l(static_cast<std::size_t>(h) * (g + 1) + 1, 0);
  std::vector<std::uint32_t> stamp(n + 1, 0);
  std::uint32_t epoch = 0;
  std::vector<std::size_t> pick(g + 1);
  for (const auto& group : by_sum) {
    const std::size_t m = group.size();
    if (m < g + 1) continue;
    for (std::size_t i = 0; i <= g; ++i) pick[i] = i;
    for (;;) {
      ++epoch;
      unsigned distinct = 0;
      for (auto i : pick) {
        for (auto v : group[i]) {
          if (stamp[v] != epoch) {
            stamp[v] = epoch;
            ++distinct;
          }
        }
      }
      ++by_l[distinct];
      // Next combination of g+1 indices out of m.
      int d = static_cast<int>(g);
      while (d >= 0 && pick[static_cast<std::size_t>(d)] == m - (g + 1) + static_cast<std::size_t>(d)) --d;
      if (d < 0) break;
      const auto du = static_cast<std::size_t>(d);
      ++pick[du];
      for (std::size_t e = du + 1; e <= g; ++e) pick[e] = pick[e - 1] + 1;
    }
  }
  return by_l;
}

// |B_{h,g}(l)|: zero outside g+1 <= l <= h(g+1).
inline std::uint64_t enumerate_Bhg(std::uint32_t n, unsigned h, unsigned g, unsigned l) {
  const auto profile = enumerate_Bhg_profile(n, h, g);
  return l < profile.size() && l >= g + 1 ? profile[l] : 0;
}

// ---------------------------------------------------------------------------
// Threshold expressions (natural logarithms throughout)

// n^{g / (h (g+1))}.
inline double sidon_threshold_k(double n, unsigned h, unsigned g) {
  detail::check_h(h);
  if (g < 1) throw std::invalid_argument("sidon_threshold_k: g must be >= 1");
  return std::pow(n, static_cast<double>(g) / (static_cast<double>(h) * (g + 1.0)));
}

// h! (h-1)! / alpha^{h-1}.
inline double basis_constant_k(unsigned h, double alpha) {
  return std::exp(log_factorial(h) + log_factorial(h - 1.0)) / std::pow(alpha, h - 1.0);
}

// Membership probability for the truncated-basis experiments. g = 1 uses
// ((K ln n - K ln ln n + A) / n^{h-1})^{1/h}; h = 2 uses
// sqrt(((2/alpha) ln n + (g-2)(2/alpha) ln ln n + A) / n). The two agree at
// h = 2, g = 1.
inline double basis_threshold_p(double n, const SidonParams& params, double a_n) {
  params.validate();
  if (!(n >= 3)) throw std::invalid_argument("basis_threshold_p: need n >= 3");
  const double ln_n = std::log(n);
  const double lnln_n = std::log(ln_n);
  double radicand;
  if (params.h == 2) {
    const double c = 2.0 / params.alpha;
    radicand = (c * ln_n + (static_cast<double>(params.g) - 2.0) * c * lnln_n + a_n) / n;
  } else if (params.g == 1) {
    const double k = basis_constant_k(params.h, params.alpha);
    radicand = (k * ln_n - k * lnln_n + a_n) / std::pow(n, params.h - 1.0);
  } else {
    throw std::invalid_argument("basis_threshold_p: only g = 1 (any h) or h = 2 (any g) is supported");
  }
  if (!(radicand >= 0.0 && radicand <= 1.0)) throw std::domain_error("basis_threshold_p: radicand outside [0,1]");
  return std::pow(radicand, 1.0 / params.h);
}

// Limiting probability of being a truncated basis when A_n -> A.
inline double truncated_basis_limit(const SidonParams& params, double a) {
  params.validate();
  if (params.h == 2) return std::exp(-2.0 * params.alpha * std::exp(-a * params.alpha / 2.0));
  if (params.g == 1) {
    const double k = basis_constant_k(params.h, params.alpha);
    return std::exp(-(2.0 * params.alpha / (params.h - 1.0)) * std::exp(-a / k));
  }
  throw std::invalid_argument("truncated_basis_limit: only g = 1 (any h) or h = 2 (any g) is supported");
}

// ---------------------------------------------------------------------------
// Samplers

// Each of 1..n independently with probability p.
inline IntegerSet sample_bernoulli_positive(std::uint32_t n, double p, TrialStream& stream) {
  const IndexSubset picked = sample_bernoulli_subset(n, p, stream);
  std::vector<std::uint32_t> elems;
  elems.reserve(picked.size());
  for (auto i : picked) elems.push_back(static_cast<std::uint32_t>(i + 1));
  return IntegerSet(n, std::move(elems));
}

// Each of 0..n independently with probability p.
inline IntegerSet sample_bernoulli_with_zero(std::uint32_t n, double p, TrialStream& stream) {
  const IndexSubset picked = sample_bernoulli_subset(std::uint64_t{n} + 1, p, stream);
  std::vector<std::uint32_t> elems(picked.begin(), picked.end());
  return IntegerSet(n, std::move(elems));
}

// Uniform k-subset of 1..n.
inline IntegerSet sample_uniform_positive(std::uint32_t n, std::uint32_t k, TrialStream& stream) {
  const IndexSubset picked = sample_uniform_subset(n, k, stream);
  std::vector<std::uint32_t> elems;
  elems.reserve(picked.size());
  for (auto i : picked) elems.push_back(static_cast<std::uint32_t>(i + 1));
  return IntegerSet(n, std::move(elems));
}

}  // namespace threshold_lab::sidon
