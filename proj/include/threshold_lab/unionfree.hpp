#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "threshold_lab/rng.hpp"

// Union collisions in random subfamilies of the power set of [n].
namespace threshold_lab::unionfree {

using Mask = std::uint32_t;

inline constexpr unsigned kMaxN = 24;
inline constexpr std::uint64_t kPairBudget = 100'000'000;  // |family|^2
inline constexpr unsigned kBruteForceMaxN = 4;

// Distinct subsets of [n] stored as n-bit masks, sorted.
class SetFamily {
 public:
  SetFamily() = default;
  SetFamily(unsigned n, std::vector<Mask> members) : n_(n), members_(std::move(members)) {
    if (n_ > kMaxN) throw std::invalid_argument("SetFamily: n must be <= 24");
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
    const std::uint64_t limit = std::uint64_t{1} << n_;
    if (!members_.empty() && members_.back() >= limit) throw std::out_of_range("SetFamily: member outside P([n])");
  }

  unsigned n() const noexcept { return n_; }
  std::size_t size() const noexcept { return members_.size(); }
  const std::vector<Mask>& members() const noexcept { return members_; }

  SetFamily without_index(std::size_t i) const {
    std::vector<Mask> rest = members_;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
    return SetFamily(n_, std::move(rest));
  }

 private:
  unsigned n_ = 0;
  std::vector<Mask> members_;
};

// Unordered pairs {R, S} with R u S = U produced by the non-constant maps
// f: U -> {0,1,2} (0: R only, 1: S only, 2: both). The 0 <-> 1 swap gives the
// same unordered pair, so (3^k - 3) / 2 pairs come out. Each pair is stored
// with R < S.
inline std::vector<std::pair<Mask, Mask>> determining_pairs(Mask u) {
  const auto k = static_cast<unsigned>(std::popcount(u));
  if (k < 1) throw std::invalid_argument("determining_pairs: U must be non-empty");
  if (k > 20) throw std::invalid_argument("determining_pairs: |U| must be <= 20");
  std::vector<unsigned> elems;
  for (Mask m = u; m != 0; m &= m - 1) elems.push_back(static_cast<unsigned>(std::countr_zero(m)));
  std::uint64_t maps = 1;
  for (unsigned i = 0; i < k; ++i) maps *= 3;
  std::vector<std::pair<Mask, Mask>> out;
  out.reserve((maps - 3) / 2);
  for (std::uint64_t code = 0; code < maps; ++code) {
    Mask r = 0;
    Mask s = 0;
    std::uint64_t c = code;
    for (unsigned i = 0; i < k; ++i, c /= 3) {
      const Mask bit = Mask{1} << elems[i];
      switch (c % 3) {
        case 0: r |= bit; break;
        case 1: s |= bit; break;
        default: r |= bit; s |= bit; break;
      }
    }
    // Constant maps give (U,{}), ({},U), (U,U); r == s only for the last.
    if (r == u && s == 0) continue;
    if (r == 0 && s == u) continue;
    if (r == s) continue;
    if (r < s) out.emplace_back(r, s);
  }
  return out;
}

inline void check_pair_budget(const SetFamily& family) {
  const std::uint64_t m = family.size();
  if (m * m > kPairBudget) throw std::invalid_argument("find_union_collisions: family exceeds the pair budget");
}

// Number of unordered pairs {{A,B},{C,D}} of member pairs with A u B = C u D
// and A, B, C, D all distinct. Pairs are grouped by union; inside a group of
// m pairs the answer is C(m,2) minus pairs-of-pairs that share a set, since
// two distinct pairs with a common union share at most one set.
inline std::uint64_t find_union_collisions(const SetFamily& family) {
  check_pair_budget(family);
  const auto& sets = family.members();
  const std::size_t m = sets.size();
  struct Pair {
    Mask uni;
    std::uint32_t a;
    std::uint32_t b;
  };
  std::vector<Pair> pairs;
  pairs.reserve(m * (m - (m > 0)) / 2);
  for (std::uint32_t i = 0; i < m; ++i) {
    for (std::uint32_t j = i + 1; j < m; ++j) pairs.push_back({sets[i] | sets[j], i, j});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.uni < y.uni; });

  std::uint64_t total = 0;
  std::vector<std::uint32_t> ends;
  for (std::size_t lo = 0; lo < pairs.size();) {
    std::size_t hi = lo;
    while (hi < pairs.size() && pairs[hi].uni == pairs[lo].uni) ++hi;
    const std::uint64_t group = hi - lo;
    if (group >= 2) {
      ends.clear();
      for (std::size_t q = lo; q < hi; ++q) {
        ends.push_back(pairs[q].a);
        ends.push_back(pairs[q].b);
      }
      std::sort(ends.begin(), ends.end());
      std::uint64_t sharing = 0;
      for (std::size_t x = 0; x < ends.size();) {
        std::size_t y = x;
        while (y < ends.size() && ends[y] == ends[x]) ++y;
        const std::uint64_t d = y - x;
        sharing += d * (d - 1) / 2;
        x = y;
      }
      total += group * (group - 1) / 2 - sharing;
    }
    lo = hi;
  }
  return total;
}

// True iff no four distinct members satisfy A u B = C u D. Returns at the
// first collision found.
inline bool is_weakly_union_free(const SetFamily& family) {
  check_pair_budget(family);
  const auto& sets = family.members();
  if (sets.size() < 4) return true;
  std::unordered_map<Mask, std::vector<std::pair<std::uint32_t, std::uint32_t>>> by_union;
  for (std::uint32_t i = 0; i < sets.size(); ++i) {
    for (std::uint32_t j = i + 1; j < sets.size(); ++j) {
      auto& bucket = by_union[sets[i] | sets[j]];
      for (auto [a, b] : bucket) {
        if (a != i && a != j && b != i && b != j) return false;
      }
      bucket.emplace_back(i, j);
    }
  }
  return true;
}

// Quadruple loop over pairs-of-pairs. Reference for find_union_collisions.
inline std::uint64_t union_collisions_bruteforce(const std::vector<Mask>& sets) {
  const std::size_t m = sets.size();
  std::uint64_t total = 0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      for (std::size_t c = a; c < m; ++c) {
        for (std::size_t d = c + 1; d < m; ++d) {
          if (c == a && d <= b) continue;  // (c,d) strictly after (a,b)
          if (c == a || c == b || d == a || d == b) continue;
          if ((sets[a] | sets[b]) == (sets[c] | sets[d])) ++total;
        }
      }
    }
  }
  return total;
}

using u128 = unsigned __int128;

inline std::string to_string(u128 v) {
  if (v == 0) return "0";
  std::string s;
  while (v > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return {s.rbegin(), s.rend()};
}

inline u128 choose_u128(unsigned n, unsigned k) {
  if (k > n) return 0;
  u128 r = 1;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// sum_{k=3}^{n} C(n,k) C((3^k - 3)/2, 2), exactly.
inline u128 obstacle_count_formula(unsigned n) {
  if (n > kMaxN) throw std::overflow_error("obstacle_count_formula: n must be <= 24");
  u128 total = 0;
  u128 pow3 = 27;
  for (unsigned k = 3; k <= n; ++k, pow3 *= 3) {
    const u128 pairs = (pow3 - 3) / 2;
    total += choose_u128(n, k) * (pairs * (pairs - 1) / 2);
  }
  return total;
}

// Exact number of obstacles {{A,B},{C,D}} over the whole power set of [n].
inline std::uint64_t brute_force_obstacles(unsigned n) {
  if (n > kBruteForceMaxN) throw std::invalid_argument("brute_force_obstacles: n must be <= 4");
  std::vector<Mask> all(std::size_t{1} << n);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Mask>(i);
  return union_collisions_bruteforce(all);
}

// 16^n p^5 + 28^n p^6 + 52^n p^7, evaluated in log space.
inline double janson_delta_bound(unsigned n, double p) {
  check_probability(p, "janson_delta_bound");
  if (p == 0.0) return 0.0;
  const double nd = n;
  const double lp = std::log(p);
  return std::exp(nd * std::log(16.0) + 5 * lp) + std::exp(nd * std::log(28.0) + 6 * lp) +
         std::exp(nd * std::log(52.0) + 7 * lp);
}

// 10^{-n/4}.
inline double wuf_threshold_p(unsigned n) {
  if (n < 1) throw std::invalid_argument("wuf_threshold_p: need n >= 1");
  return std::pow(10.0, -static_cast<double>(n) / 4.0);
}

// Each subset of [n] included independently with probability p.
inline SetFamily sample_power_set_family(unsigned n, double p, TrialStream& stream) {
  if (n > kMaxN) throw std::invalid_argument("sample_power_set_family: n must be <= 24");
  const IndexSubset picked = sample_bernoulli_subset(std::uint64_t{1} << n, p, stream);
  std::vector<Mask> members;
  members.reserve(picked.size());
  for (auto i : picked) members.push_back(static_cast<Mask>(i));
  return SetFamily(n, std::move(members));
}

}  // namespace threshold_lab::unionfree
