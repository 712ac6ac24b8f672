#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace threshold_lab {

// Master seed for a whole experiment. Every trial stream is a pure function
// of (seed, trial_index), so results do not depend on scheduling.
struct MasterSeed {
  std::uint64_t value = 0;

  friend bool operator==(MasterSeed, MasterSeed) = default;
};

namespace detail {

constexpr std::uint64_t splitmix64_step(std::uint64_t& state) noexcept {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Bijective 64-bit finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Derives a child seed from (parent, index). For a fixed parent, distinct
// indices give distinct children because mix64 is a bijection. The domain tag
// separates trial streams from bisection probes and worker ranges.
constexpr MasterSeed derive_seed(MasterSeed parent, std::uint64_t index,
                                 std::uint64_t domain = 0) noexcept {
  const std::uint64_t base = detail::mix64(parent.value ^ detail::mix64(domain + 0x6A09E667F3BCC909ULL));
  return MasterSeed{detail::mix64(base + index)};
}

// xoshiro256** seeded from a derived 64-bit key via splitmix64. Satisfies
// std::uniform_random_bit_generator.
class TrialStream {
 public:
  using result_type = std::uint64_t;

  TrialStream(MasterSeed master, std::uint64_t trial_index)
      : master_(master), trial_index_(trial_index) {
    std::uint64_t sm = derive_seed(master, trial_index).value;
    for (auto& w : s_) w = detail::splitmix64_step(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

  // Unbiased integer in [0, bound) by widening multiply with rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("below: bound must be positive");
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) noexcept {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return uniform01() < p;
  }

  MasterSeed master() const noexcept { return master_; }
  std::uint64_t trial_index() const noexcept { return trial_index_; }

 private:
  MasterSeed master_;
  std::uint64_t trial_index_;
  std::uint64_t s_[4]{};
};

inline TrialStream derive_stream(MasterSeed master, std::uint64_t trial_index) {
  return TrialStream(master, trial_index);
}

inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument(std::string(what) + ": probability outside [0,1]");
  }
}

// Subset of the universe {0, ..., N-1}. Keeps a sorted index list for
// iteration and a bitmap for constant-time membership.
class IndexSubset {
 public:
  IndexSubset() = default;
  explicit IndexSubset(std::uint64_t universe_size)
      : universe_(universe_size), bits_((universe_size + 63) / 64, 0) {}

  IndexSubset(std::uint64_t universe_size, std::vector<std::uint64_t> indices)
      : IndexSubset(universe_size) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    for (auto i : indices) {
      if (i >= universe_) throw std::out_of_range("IndexSubset: index outside universe");
      bits_[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    members_ = std::move(indices);
  }

  // Indices must arrive in increasing order.
  void push_back_sorted(std::uint64_t i) {
    bits_[i / 64] |= std::uint64_t{1} << (i % 64);
    members_.push_back(i);
  }

  bool contains(std::uint64_t i) const noexcept {
    return i < universe_ && ((bits_[i / 64] >> (i % 64)) & 1U);
  }
  std::size_t size() const noexcept { return members_.size(); }
  bool empty() const noexcept { return members_.empty(); }
  std::uint64_t universe_size() const noexcept { return universe_; }
  const std::vector<std::uint64_t>& members() const noexcept { return members_; }
  auto begin() const noexcept { return members_.begin(); }
  auto end() const noexcept { return members_.end(); }

 private:
  std::uint64_t universe_ = 0;
  std::vector<std::uint64_t> bits_;
  std::vector<std::uint64_t> members_;
};

// Each index of [0, N) independently with probability p.
inline IndexSubset sample_bernoulli_subset(std::uint64_t universe_size, double p,
                                           TrialStream& stream) {
  check_probability(p, "sample_bernoulli_subset");
  IndexSubset out(universe_size);
  if (p == 0.0) return out;
  for (std::uint64_t i = 0; i < universe_size; ++i) {
    if (stream.bernoulli(p)) out.push_back_sorted(i);
  }
  return out;
}

// Uniform k-subset of [0, N) via partial Fisher-Yates.
inline IndexSubset sample_uniform_subset(std::uint64_t universe_size, std::uint64_t k,
                                         TrialStream& stream) {
  if (k > universe_size) throw std::invalid_argument("sample_uniform_subset: k exceeds universe");
  std::vector<std::uint64_t> pool(universe_size);
  std::iota(pool.begin(), pool.end(), std::uint64_t{0});
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + stream.below(universe_size - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return IndexSubset(universe_size, std::move(pool));
}

// Box label for each ball, uniform on [0, n_boxes).
inline std::vector<std::uint32_t> throw_balls(std::uint64_t n_balls, std::uint64_t n_boxes,
                                              TrialStream& stream) {
  if (n_boxes == 0) throw std::invalid_argument("throw_balls: need at least one box");
  if (n_boxes > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("throw_balls: too many boxes");
  }
  std::vector<std::uint32_t> out(n_balls);
  for (auto& b : out) b = static_cast<std::uint32_t>(stream.below(n_boxes));
  return out;
}

}  // namespace threshold_lab
