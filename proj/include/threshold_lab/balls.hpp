#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "threshold_lab/analysis.hpp"
#include "threshold_lab/rng.hpp"

// Balls in boxes: overfull-box counts and multiple-coverage waiting times.
namespace threshold_lab::balls {

struct OccupancyState {
  std::vector<std::uint64_t> counts;
  std::uint64_t balls_thrown = 0;

  OccupancyState() = default;
  explicit OccupancyState(std::uint64_t n_boxes) : counts(n_boxes, 0) {}

  static OccupancyState from_assignment(std::uint64_t n_boxes, const std::vector<std::uint32_t>& boxes) {
    OccupancyState s(n_boxes);
    for (auto b : boxes) s.add(b);
    return s;
  }

  void add(std::uint64_t box) {
    ++counts.at(box);
    ++balls_thrown;
  }
  std::uint64_t n_boxes() const noexcept { return counts.size(); }
};

// Parameters for the waiting-time experiment. The normalization uses
// ln ln N, so N >= 3 is required.
struct HolstParams {
  std::uint64_t n_boxes = 3;
  std::uint64_t lambda = 1;

  void validate() const {
    if (n_boxes < 3) throw std::invalid_argument("HolstParams: need at least 3 boxes");
    if (lambda < 1) throw std::invalid_argument("HolstParams: lambda must be >= 1");
  }
};

// Boxes holding lambda+1 or more balls.
inline std::uint64_t count_overfull(const OccupancyState& state, std::uint64_t lambda) {
  if (lambda < 1) throw std::invalid_argument("count_overfull: lambda must be >= 1");
  return static_cast<std::uint64_t>(
      std::count_if(state.counts.begin(), state.counts.end(), [lambda](std::uint64_t c) { return c >= lambda + 1; }));
}

// Same count as count_overfull on a fresh throw, but without an O(N) count
// array: sort the labels and measure run lengths.
inline std::uint64_t overfull_after_throw(std::uint64_t n_balls, std::uint64_t n_boxes, std::uint64_t lambda,
                                          TrialStream& stream) {
  if (lambda < 1) throw std::invalid_argument("overfull_after_throw: lambda must be >= 1");
  auto labels = throw_balls(n_balls, n_boxes, stream);
  std::sort(labels.begin(), labels.end());
  std::uint64_t overfull = 0;
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    if (j - i >= lambda + 1) ++overfull;
    i = j;
  }
  return overfull;
}

// N^{lambda/(lambda+1)}.
inline double packing_threshold_n(std::uint64_t n_boxes, std::uint64_t lambda) {
  if (n_boxes < 1 || lambda < 1) throw std::invalid_argument("packing_threshold_n: need N >= 1, lambda >= 1");
  const auto l = static_cast<double>(lambda);
  return std::pow(static_cast<double>(n_boxes), l / (l + 1.0));
}

// Throws balls until every box holds at least lambda; returns the number thrown.
// Accepts N >= 1 (the Holst formulas need N >= 3, the sampler does not).
inline std::uint64_t waiting_time(std::uint64_t n_boxes, std::uint64_t lambda, TrialStream& stream) {
  if (n_boxes < 1) throw std::invalid_argument("waiting_time: need at least one box");
  if (lambda < 1) throw std::invalid_argument("waiting_time: lambda must be >= 1");
  std::vector<std::uint32_t> counts(n_boxes, 0);
  std::uint64_t short_boxes = n_boxes;
  std::uint64_t thrown = 0;
  while (short_boxes > 0) {
    const auto b = stream.below(n_boxes);
    ++thrown;
    if (++counts[b] == lambda) --short_boxes;
  }
  return thrown;
}

inline std::uint64_t waiting_time(const HolstParams& params, TrialStream& stream) {
  params.validate();
  return waiting_time(params.n_boxes, params.lambda, stream);
}

// N (ln N + (lambda-1) ln ln N + gamma - ln (lambda-1)!).
inline double holst_mean(const HolstParams& params) {
  params.validate();
  const auto n = static_cast<double>(params.n_boxes);
  const auto l = static_cast<double>(params.lambda);
  const double ln_n = std::log(n);
  return n * (ln_n + (l - 1.0) * std::log(ln_n) + static_cast<double>(constants::euler_gamma) -
              log_factorial(l - 1.0));
}

// T/N - ln N - (lambda-1) ln ln N + ln (lambda-1)!.
inline double holst_normalize(double waiting, const HolstParams& params) {
  params.validate();
  const auto n = static_cast<double>(params.n_boxes);
  const auto l = static_cast<double>(params.lambda);
  const double ln_n = std::log(n);
  return waiting / n - ln_n - (l - 1.0) * std::log(ln_n) + log_factorial(l - 1.0);
}

// N (ln N + (lambda-1) ln ln N + r): the waiting-time budget whose coverage
// probability tends to 1 as r grows and to 0 as r falls.
inline double coverage_budget(const HolstParams& params, double r) {
  params.validate();
  const auto n = static_cast<double>(params.n_boxes);
  const double ln_n = std::log(n);
  return n * (ln_n + (static_cast<double>(params.lambda) - 1.0) * std::log(ln_n) + r);
}

}  // namespace threshold_lab::balls
