#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "threshold_lab/analysis.hpp"
#include "threshold_lab/rng.hpp"

// Pattern containment of S_n in S_{n+1}.
namespace threshold_lab::permutations {

inline constexpr unsigned kMaxLength = 20;  // 20! fits in 64 bits
inline constexpr unsigned kLemmaMaxN = 6;   // exhaustive lemma checks
inline constexpr unsigned kSweepMaxN = 9;   // exact n! sweeps

// Bijection on {1..m} in one-line notation.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::uint8_t> entries) : entries_(std::move(entries)) {
    if (entries_.size() > kMaxLength) throw std::invalid_argument("Permutation: length exceeds 20");
    std::vector<bool> seen(entries_.size() + 1, false);
    for (auto v : entries_) {
      if (v < 1 || v > entries_.size() || seen[v]) throw std::invalid_argument("Permutation: not a bijection on 1..m");
      seen[v] = true;
    }
  }
  Permutation(std::initializer_list<int> entries)
      : Permutation(std::vector<std::uint8_t>(entries.begin(), entries.end())) {}

  static Permutation identity(unsigned m) {
    std::vector<std::uint8_t> e(m);
    std::iota(e.begin(), e.end(), std::uint8_t{1});
    return Permutation(std::move(e));
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::uint8_t operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<std::uint8_t>& entries() const noexcept { return entries_; }

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

  std::string to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(entries_[i]);
    }
    return s + ")";
  }

 private:
  std::vector<std::uint8_t> entries_;
};

inline std::uint64_t factorial(unsigned m) {
  if (m > kMaxLength) throw std::overflow_error("factorial: argument exceeds 20");
  std::uint64_t f = 1;
  for (unsigned i = 2; i <= m; ++i) f *= i;
  return f;
}

// Lexicographic rank in S_m.
inline std::uint64_t lex_rank(const std::vector<std::uint8_t>& e) {
  const auto m = static_cast<unsigned>(e.size());
  std::uint64_t rank = 0;
  std::uint32_t used = 0;  // bit v set once value v is placed
  for (unsigned i = 0; i < m; ++i) {
    const unsigned smaller_unused = e[i] - 1 - static_cast<unsigned>(std::popcount(used & ((1U << e[i]) - 1)));
    rank = rank * (m - i) + smaller_unused;
    used |= 1U << e[i];
  }
  return rank;
}

inline std::uint64_t lex_rank(const Permutation& p) { return lex_rank(p.entries()); }

inline Permutation lex_unrank(std::uint64_t rank, unsigned m) {
  if (rank >= factorial(m)) throw std::out_of_range("lex_unrank: rank out of range");
  std::vector<std::uint8_t> pool(m);
  std::iota(pool.begin(), pool.end(), std::uint8_t{1});
  std::vector<std::uint8_t> out;
  out.reserve(m);
  for (unsigned i = m; i >= 1; --i) {
    const std::uint64_t f = factorial(i - 1);
    const auto pick = static_cast<std::size_t>(rank / f);
    rank %= f;
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return Permutation(std::move(out));
}

template <typename Fn>
void for_each_permutation(unsigned m, Fn&& fn) {
  std::vector<std::uint8_t> e(m);
  std::iota(e.begin(), e.end(), std::uint8_t{1});
  do {
    fn(e);
  } while (std::next_permutation(e.begin(), e.end()));
}

namespace detail {

inline void delete_and_flatten_into(const std::vector<std::uint8_t>& rho, std::size_t pos,
                                    std::vector<std::uint8_t>& out) {
  const std::uint8_t removed = rho[pos];
  out.clear();
  for (std::size_t j = 0; j < rho.size(); ++j) {
    if (j == pos) continue;
    out.push_back(rho[j] > removed ? static_cast<std::uint8_t>(rho[j] - 1) : rho[j]);
  }
}

// Distinct lexicographic ranks of the patterns obtained by single deletions.
inline void covered_pattern_ranks(const std::vector<std::uint8_t>& rho, std::vector<std::uint64_t>& ranks,
                                  std::vector<std::uint8_t>& scratch) {
  ranks.clear();
  for (std::size_t i = 0; i < rho.size(); ++i) {
    delete_and_flatten_into(rho, i, scratch);
    ranks.push_back(lex_rank(scratch));
  }
  std::sort(ranks.begin(), ranks.end());
  ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
}

}  // namespace detail

// Removes the entry at 1-based position i and closes the gap in values.
inline Permutation delete_and_flatten(const Permutation& rho, std::size_t position) {
  if (position < 1 || position > rho.size()) throw std::out_of_range("delete_and_flatten: position out of range");
  std::vector<std::uint8_t> out;
  detail::delete_and_flatten_into(rho.entries(), position - 1, out);
  return Permutation(std::move(out));
}

inline bool covers(const Permutation& rho, const Permutation& pi) {
  if (rho.size() != pi.size() + 1) throw std::invalid_argument("covers: lengths must differ by exactly one");
  std::vector<std::uint8_t> scratch;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    detail::delete_and_flatten_into(rho.entries(), i, scratch);
    if (scratch == pi.entries()) return true;
  }
  return false;
}

// Distinct patterns of length m-1 contained in rho.
inline std::vector<Permutation> covered_patterns(const Permutation& rho) {
  if (rho.size() < 1) throw std::invalid_argument("covered_patterns: empty permutation");
  std::set<Permutation> out;
  for (std::size_t i = 1; i <= rho.size(); ++i) out.insert(delete_and_flatten(rho, i));
  return {out.begin(), out.end()};
}

// Every rho in S_{n+1} covering pi: insert each new value v at each position,
// shifting values >= v up by one. Sorted, deduplicated.
inline std::vector<Permutation> covering_set(const Permutation& pi) {
  const std::size_t n = pi.size();
  if (n < 1) throw std::invalid_argument("covering_set: need n >= 1");
  if (n + 1 > kMaxLength) throw std::invalid_argument("covering_set: length exceeds 20");
  std::set<Permutation> out;
  std::vector<std::uint8_t> shifted(n);
  for (std::size_t v = 1; v <= n + 1; ++v) {
    for (std::size_t j = 0; j < n; ++j) shifted[j] = static_cast<std::uint8_t>(pi[j] >= v ? pi[j] + 1 : pi[j]);
    for (std::size_t pos = 0; pos <= n; ++pos) {
      std::vector<std::uint8_t> rho(shifted.begin(), shifted.end());
      rho.insert(rho.begin() + static_cast<std::ptrdiff_t>(pos), static_cast<std::uint8_t>(v));
      out.insert(Permutation(std::move(rho)));
    }
  }
  return {out.begin(), out.end()};
}

// Members of S_{n+1} covering both pi and pi2.
inline std::vector<Permutation> joint_covers(const Permutation& pi, const Permutation& pi2) {
  if (pi.size() != pi2.size()) throw std::invalid_argument("joint_covers: permutations must have equal length");
  if (pi == pi2) throw std::invalid_argument("joint_covers: permutations must differ");
  const auto a = covering_set(pi);
  const auto b = covering_set(pi2);
  std::vector<Permutation> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// {pi' != pi : some rho in S_{n+1} covers both}.
inline std::vector<Permutation> dependency_neighborhood(const Permutation& pi) {
  if (pi.size() > kLemmaMaxN) throw std::invalid_argument("dependency_neighborhood: n exceeds the exhaustive budget (6)");
  std::set<Permutation> out;
  for (const auto& rho : covering_set(pi)) {
    for (auto& sigma : covered_patterns(rho)) {
      if (sigma != pi) out.insert(std::move(sigma));
    }
  }
  return {out.begin(), out.end()};
}

// Per-pattern cover multiplicities for a selected family in S_{n+1}.
class PatternCoverCounter {
 public:
  explicit PatternCoverCounter(unsigned n) : n_(n) {
    if (n < 1 || n > kSweepMaxN) throw std::invalid_argument("PatternCoverCounter: n must be in [1, 9]");
    counts_.assign(factorial(n), 0);
  }

  void add(const std::vector<std::uint8_t>& rho) {
    if (rho.size() != n_ + 1) throw std::invalid_argument("PatternCoverCounter: member must lie in S_{n+1}");
    detail::covered_pattern_ranks(rho, ranks_, scratch_);
    for (auto r : ranks_) ++counts_[r];
  }
  void add(const Permutation& rho) { add(rho.entries()); }

  // Patterns covered at most lambda-1 times.
  std::uint64_t deficient(unsigned lambda) const {
    std::uint64_t x = 0;
    for (auto c : counts_) x += c + 1 <= lambda;
    return x;
  }
  // Patterns covered at least lambda+1 times.
  std::uint64_t overfull(unsigned lambda) const {
    std::uint64_t x = 0;
    for (auto c : counts_) x += c >= lambda + 1;
    return x;
  }
  const std::vector<std::uint32_t>& counts() const noexcept { return counts_; }

 private:
  unsigned n_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::uint64_t> ranks_;
  std::vector<std::uint8_t> scratch_;
};

// Number of pi in S_n covered by at most lambda-1 members of the family.
inline std::uint64_t lambda_cover_deficiency(const std::vector<Permutation>& family, unsigned n, unsigned lambda) {
  if (lambda < 1) throw std::invalid_argument("lambda_cover_deficiency: lambda must be >= 1");
  PatternCoverCounter counter(n);
  for (const auto& rho : family) counter.add(rho);
  return counter.deficient(lambda);
}

// Selects each member of S_{n+1} with probability p, streaming over S_{n+1}
// in lexicographic order, and accumulates pattern multiplicities.
inline PatternCoverCounter sample_cover_counts(unsigned n, double p, TrialStream& stream) {
  check_probability(p, "sample_cover_counts");
  PatternCoverCounter counter(n);
  if (p == 0.0) return counter;
  for_each_permutation(n + 1, [&](const std::vector<std::uint8_t>& rho) {
    if (stream.bernoulli(p)) counter.add(rho);
  });
  return counter;
}

// (n ln n - n + (lambda-1) ln n + (lambda-1) ln ln n - ln (lambda-1)! + (ln n)/2 + r) / n^2.
inline double perm_cover_threshold_p(unsigned n, unsigned lambda, double r) {
  if (n < 2) throw std::invalid_argument("perm_cover_threshold_p: need n >= 2");
  if (lambda < 1) throw std::invalid_argument("perm_cover_threshold_p: lambda must be >= 1");
  const double nd = n;
  const double ln_n = std::log(nd);
  const double l1 = lambda - 1.0;
  double lnln = 0.0;
  if (lambda > 1) {
    if (n < 3) throw std::invalid_argument("perm_cover_threshold_p: lambda >= 2 needs n >= 3");
    lnln = std::log(ln_n);
  }
  const double p = (nd * ln_n - nd + l1 * ln_n + l1 * lnln - log_factorial(l1) + ln_n / 2.0 + r) / (nd * nd);
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("perm_cover_threshold_p: result outside [0,1]");
  return p;
}

// Single-cover form (ln n - 1 + (ln n)/(2n) + r/n) / n.
inline double perm_single_cover_threshold_p(unsigned n, double r) {
  const double nd = n;
  const double ln_n = std::log(nd);
  return (ln_n - 1.0 + ln_n / (2.0 * nd) + r / nd) / nd;
}

struct PackingWindow {
  double p_low = 0.0;   // below: lambda-packing holds whp
  double p_high = 0.0;  // above: lambda-packing fails whp
};

// p_low = n^{-2} n!^{-1/(lambda+1)}, p_high = n^{-2 lambda/(lambda+1)} n!^{-1/(lambda+1)}.
inline PackingWindow perm_packing_thresholds(unsigned n, unsigned lambda) {
  if (n < 2) throw std::invalid_argument("perm_packing_thresholds: need n >= 2");
  if (lambda < 1) throw std::invalid_argument("perm_packing_thresholds: lambda must be >= 1");
  const double l = lambda;
  const double log_fact_share = log_factorial(n) / (l + 1.0);
  const double ln_n = std::log(static_cast<double>(n));
  return PackingWindow{std::exp(-2.0 * ln_n - log_fact_share), std::exp(-(2.0 * l / (l + 1.0)) * ln_n - log_fact_share)};
}

// ---------------------------------------------------------------------------
// Exhaustive lemma checks

struct LemmaReport {
  unsigned n = 0;
  std::uint64_t min_cover = 0;       // min over pi of |covering_set(pi)|
  std::uint64_t max_cover = 0;       // max over pi of |covering_set(pi)|
  std::uint64_t max_neighborhood = 0;  // max over pi of |J_pi|
  std::uint64_t max_joint = 0;       // max over pi != pi' of |C_{pi,pi'}|
  bool neighborhood_checked = false;
  bool joint_checked = false;

  bool cover_ok() const { return min_cover == std::uint64_t{n} * n + 1 && max_cover == min_cover; }
  bool neighborhood_ok() const { return !neighborhood_checked || max_neighborhood <= std::uint64_t{n} * n * n; }
  bool joint_ok() const { return !joint_checked || max_joint <= 4; }
  bool ok() const { return cover_ok() && neighborhood_ok() && joint_ok(); }
};

// Covering sizes for every pi in S_n; neighborhood and pairwise joint-cover
// sizes when n <= pair_max_n.
inline LemmaReport verify_lemmas_for(unsigned n, unsigned pair_max_n = 5) {
  if (n < 1 || n > kLemmaMaxN) throw std::invalid_argument("verify_lemmas_for: n must be in [1, 6]");
  LemmaReport report;
  report.n = n;
  report.min_cover = std::numeric_limits<std::uint64_t>::max();
  std::vector<Permutation> all;
  for_each_permutation(n, [&](const std::vector<std::uint8_t>& e) { all.emplace_back(e); });
  std::vector<std::vector<Permutation>> cover_sets;
  cover_sets.reserve(all.size());
  for (const auto& pi : all) {
    cover_sets.push_back(covering_set(pi));
    report.min_cover = std::min<std::uint64_t>(report.min_cover, cover_sets.back().size());
    report.max_cover = std::max<std::uint64_t>(report.max_cover, cover_sets.back().size());
  }
  if (n <= pair_max_n) {
    report.neighborhood_checked = true;
    report.joint_checked = true;
    for (const auto& pi : all) {
      report.max_neighborhood = std::max<std::uint64_t>(report.max_neighborhood, dependency_neighborhood(pi).size());
    }
    std::vector<Permutation> shared;
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t j = i + 1; j < all.size(); ++j) {
        shared.clear();
        std::set_intersection(cover_sets[i].begin(), cover_sets[i].end(), cover_sets[j].begin(), cover_sets[j].end(),
                              std::back_inserter(shared));
        report.max_joint = std::max<std::uint64_t>(report.max_joint, shared.size());
      }
    }
  }
  return report;
}

}  // namespace threshold_lab::permutations
