#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "threshold_lab/analysis.hpp"
#include "threshold_lab/rng.hpp"

// Random families of k-subsets of [n] and the multiplicity with which they
// cover the t-subsets.
namespace threshold_lab::designs {

inline constexpr unsigned kMaxN = 30;

// Exact binomial coefficients C(a, b) for a <= 64.
class PascalTable {
 public:
  static constexpr unsigned kRows = 65;

  constexpr PascalTable() {
    for (unsigned a = 0; a < kRows; ++a) {
      table_[a][0] = 1;
      for (unsigned b = 1; b <= a; ++b) table_[a][b] = table_[a - 1][b - 1] + (b < a ? table_[a - 1][b] : 0);
    }
  }

  constexpr std::uint64_t operator()(unsigned a, unsigned b) const {
    if (a >= kRows) throw std::out_of_range("PascalTable: row out of range");
    return b > a ? 0 : table_[a][b];
  }

 private:
  std::array<std::array<std::uint64_t, kRows>, kRows> table_{};
};

inline constexpr PascalTable kChoose{};

struct DesignParams {
  unsigned n = 0;
  unsigned k = 0;
  unsigned t = 0;
  unsigned lambda = 1;

  void validate() const {
    if (n > kMaxN) throw std::invalid_argument("DesignParams: n must be <= 30");
    if (!(1 <= t && t < k && k <= n)) throw std::invalid_argument("DesignParams: need 1 <= t < k <= n");
    if (lambda < 1) throw std::invalid_argument("DesignParams: lambda must be >= 1");
  }

  std::uint64_t num_ksets() const { return kChoose(n, k); }
  // Number of t-subsets, N = C(n,t).
  std::uint64_t num_tsets() const { return kChoose(n, t); }
  // k-sets containing a fixed t-set, M = C(n-t, k-t).
  std::uint64_t cover_multiplicity() const { return kChoose(n - t, k - t); }
};

using Mask = std::uint32_t;

// Colexicographic rank of a subset: sum over its i-th smallest element c_i
// (0-based) of C(c_i, i+1).
inline std::uint64_t colex_rank(Mask mask) {
  std::uint64_t rank = 0;
  unsigned i = 0;
  while (mask != 0) {
    const auto c = static_cast<unsigned>(std::countr_zero(mask));
    rank += kChoose(c, i + 1);
    ++i;
    mask &= mask - 1;
  }
  return rank;
}

inline Mask colex_unrank(std::uint64_t rank, unsigned size) {
  Mask mask = 0;
  for (unsigned i = size; i >= 1; --i) {
    unsigned c = i - 1;
    while (kChoose(c + 1, i) <= rank) ++c;
    rank -= kChoose(c, i);
    mask |= Mask{1} << c;
  }
  return mask;
}

// Next mask with the same popcount (Gosper). Walks k-subsets in colex order.
constexpr Mask next_same_popcount(Mask v) {
  const Mask t = v | (v - 1);
  return (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
}

template <typename Fn>
void for_each_subset_of_size(unsigned n, unsigned size, Fn&& fn) {
  if (size > n) return;
  if (size == 0) {
    fn(Mask{0});
    return;
  }
  Mask m = (Mask{1} << size) - 1;
  const std::uint64_t limit = std::uint64_t{1} << n;
  while (m < limit) {
    fn(m);
    if (size == n) break;
    m = next_same_popcount(m);
  }
}

// Members of a family, each a k-bit mask. Kept in increasing numeric order.
struct KSetFamily {
  std::vector<Mask> members;

  std::size_t size() const noexcept { return members.size(); }
};

// Each k-subset of [n] included independently with probability p.
inline KSetFamily sample_design_family(const DesignParams& params, double p, TrialStream& stream) {
  params.validate();
  check_probability(p, "sample_design_family");
  KSetFamily family;
  if (p == 0.0) return family;
  family.members.reserve(static_cast<std::size_t>(static_cast<double>(params.num_ksets()) * p * 1.2) + 16);
  for_each_subset_of_size(params.n, params.k, [&](Mask m) {
    if (stream.bernoulli(p)) family.members.push_back(m);
  });
  return family;
}

// counts[colex rank of tau] = number of family members containing tau.
struct CoverageProfile {
  std::vector<std::uint32_t> counts;
};

inline void add_to_profile(CoverageProfile& profile, const DesignParams& params, Mask kset) {
  std::array<unsigned, kMaxN> pos{};
  unsigned k = 0;
  for (Mask m = kset; m != 0; m &= m - 1) pos[k++] = static_cast<unsigned>(std::countr_zero(m));
  if (k != params.k) throw std::invalid_argument("add_to_profile: member does not have k elements");
  // Each t-subset of the member, as a t-subset of local positions.
  for_each_subset_of_size(k, params.t, [&](Mask local) {
    std::uint64_t rank = 0;
    unsigned i = 0;
    for (Mask m = local; m != 0; m &= m - 1) {
      rank += kChoose(pos[static_cast<unsigned>(std::countr_zero(m))], i + 1);
      ++i;
    }
    ++profile.counts[rank];
  });
}

inline CoverageProfile coverage_profile(const KSetFamily& family, const DesignParams& params) {
  params.validate();
  CoverageProfile profile{std::vector<std::uint32_t>(params.num_tsets(), 0)};
  for (Mask m : family.members) add_to_profile(profile, params, m);
  return profile;
}

// t-sets covered at most lambda-1 times.
inline std::uint64_t deficiency_count(const CoverageProfile& profile, unsigned lambda) {
  if (lambda < 1) throw std::invalid_argument("deficiency_count: lambda must be >= 1");
  std::uint64_t x = 0;
  for (auto c : profile.counts) x += c + 1 <= lambda;
  return x;
}

// t-sets covered at least lambda+1 times.
inline std::uint64_t overfull_count(const CoverageProfile& profile, unsigned lambda) {
  if (lambda < 1) throw std::invalid_argument("overfull_count: lambda must be >= 1");
  std::uint64_t x = 0;
  for (auto c : profile.counts) x += c >= lambda + 1;
  return x;
}

// (ln N + (lambda-1) ln ln N + r) / M with N = C(n,t), M = C(n-t,k-t).
inline double covering_threshold_p(const DesignParams& params, double r) {
  params.validate();
  const auto big_n = static_cast<double>(params.num_tsets());
  if (big_n < 3) throw std::invalid_argument("covering_threshold_p: need C(n,t) >= 3");
  const double ln_n = std::log(big_n);
  const double p = (ln_n + (params.lambda - 1.0) * std::log(ln_n) + r) /
                   static_cast<double>(params.cover_multiplicity());
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("covering_threshold_p: result outside [0,1]");
  return p;
}

// n^{-((k-t) + t/(lambda+1))}.
inline double packing_threshold_p(const DesignParams& params) {
  params.validate();
  return std::pow(static_cast<double>(params.n),
                  -((params.k - params.t) + static_cast<double>(params.t) / (params.lambda + 1.0)));
}

// C(n,t) * sum_{j<lambda} C(M,j) p^j (1-p)^{M-j}, M = C(n-t,k-t).
inline double expected_deficient(const DesignParams& params, double p) {
  params.validate();
  check_probability(p, "expected_deficient");
  const auto big_m = params.cover_multiplicity();
  const std::uint64_t top = std::min<std::uint64_t>(params.lambda - 1, big_m);
  long double sum = 0.0L;
  long double comp = 0.0L;
  long double choose = 1.0L;  // C(M, j), built multiplicatively
  for (std::uint64_t j = 0; j <= top; ++j) {
    if (j > 0) choose = choose * static_cast<long double>(big_m - j + 1) / static_cast<long double>(j);
    long double term;
    if (p == 0.0) {
      term = j == 0 ? 1.0L : 0.0L;
    } else if (p == 1.0) {
      term = j == big_m ? 1.0L : 0.0L;
    } else {
      term = choose * std::pow(static_cast<long double>(p), static_cast<long double>(j)) *
             std::exp(static_cast<long double>(big_m - j) * std::log1p(-static_cast<long double>(p)));
    }
    const long double y = term - comp;
    const long double s = sum + y;
    comp = (s - sum) - y;
    sum = s;
  }
  return static_cast<double>(static_cast<long double>(params.num_tsets()) * sum);
}

enum class DesignMode { cover, pack };

// One trial: sample a family and return X (deficient t-sets for cover mode,
// overfull t-sets for pack mode).
inline std::uint64_t design_trial(const DesignParams& params, double p, DesignMode mode, TrialStream& stream) {
  const auto family = sample_design_family(params, p, stream);
  const auto profile = coverage_profile(family, params);
  return mode == DesignMode::cover ? deficiency_count(profile, params.lambda)
                                   : overfull_count(profile, params.lambda);
}

}  // namespace threshold_lab::designs
