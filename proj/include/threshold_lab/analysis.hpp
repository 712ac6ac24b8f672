#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "threshold_lab/rng.hpp"

namespace threshold_lab {

namespace constants {
inline constexpr long double euler_gamma = 0.57721566490153286061L;
}

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double log_choose(double n, double k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// ln(n!) via log-gamma.
inline double log_factorial(double n) { return std::lgamma(n + 1.0); }

// ---------------------------------------------------------------------------
// Binomial tails

struct BinomialTailQuery {
  std::uint64_t n = 0;
  double p = 0.0;
  std::uint64_t t0 = 0;
  std::uint64_t t1 = 0;
};

inline void validate(const BinomialTailQuery& q) {
  check_probability(q.p, "BinomialTailQuery");
  if (q.t0 > q.t1 || q.t1 > q.n) throw std::invalid_argument("BinomialTailQuery: need 0 <= t0 <= t1 <= n");
}

// ln of C(n,j) p^j (1-p)^(n-j); -inf for a zero term.
inline double log_binomial_pmf(std::uint64_t n, double p, std::uint64_t j) {
  const double ninf = -std::numeric_limits<double>::infinity();
  if (j > n) return ninf;
  if (p == 0.0) return j == 0 ? 0.0 : ninf;
  if (p == 1.0) return j == n ? 0.0 : ninf;
  const auto nd = static_cast<double>(n);
  const auto jd = static_cast<double>(j);
  return log_choose(nd, jd) + jd * std::log(p) + (nd - jd) * std::log1p(-p);
}

namespace detail {

// ln sum_{j=t0}^{t1} pmf(j), shifted by the largest term before exponentiating.
inline double log_tail_sum(const BinomialTailQuery& q) {
  std::vector<double> logs;
  logs.reserve(q.t1 - q.t0 + 1);
  double top = -std::numeric_limits<double>::infinity();
  for (std::uint64_t j = q.t0; j <= q.t1; ++j) {
    logs.push_back(log_binomial_pmf(q.n, q.p, j));
    top = std::max(top, logs.back());
  }
  if (std::isinf(top)) return top;
  CompensatedSum acc;
  for (double l : logs) acc.add(std::exp(l - top));
  return top + std::log(acc.value());
}

}  // namespace detail

// Sum_{j=t0}^{t1} C(n,j) p^j (1-p)^{n-j}.
inline double binomial_tail_exact(const BinomialTailQuery& q) {
  validate(q);
  return std::exp(detail::log_tail_sum(q));
}

enum class TailMode { first_term, last_term };

inline constexpr std::uint64_t kLastTermMaxT1 = 20;

// Tail sum divided by its t0 term (first_term) or t1 term (last_term).
inline double binomial_tail_first_term_ratio(const BinomialTailQuery& q,
                                             TailMode mode = TailMode::first_term) {
  validate(q);
  if (mode == TailMode::last_term && q.t1 > kLastTermMaxT1) {
    throw std::invalid_argument("binomial_tail_first_term_ratio: last-term mode needs t1 <= 20");
  }
  const double log_term = log_binomial_pmf(q.n, q.p, mode == TailMode::first_term ? q.t0 : q.t1);
  if (std::isinf(log_term)) throw std::domain_error("binomial_tail_first_term_ratio: designated term is zero");
  return std::exp(detail::log_tail_sum(q) - log_term);
}

// ---------------------------------------------------------------------------
// Distribution diagnostics

using Histogram = std::map<std::int64_t, std::uint64_t>;

template <typename Range>
Histogram make_histogram(const Range& values) {
  Histogram h;
  for (auto v : values) ++h[static_cast<std::int64_t>(v)];
  return h;
}

inline double poisson_pmf(double mu, std::int64_t j) {
  if (j < 0) return 0.0;
  if (mu == 0.0) return j == 0 ? 1.0 : 0.0;
  return std::exp(-mu + static_cast<double>(j) * std::log(mu) - std::lgamma(static_cast<double>(j) + 1.0));
}

// Total variation distance between an empirical histogram and Poisson(mu).
// Poisson mass beyond the largest observed value is counted in full.
inline double poisson_tv_distance(const Histogram& histogram, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("poisson_tv_distance: mu must be positive");
  std::uint64_t total = 0;
  std::int64_t top = 0;
  for (auto [value, count] : histogram) {
    total += count;
    if (count > 0) top = std::max(top, value);
  }
  if (total == 0) throw std::invalid_argument("poisson_tv_distance: empty histogram");
  CompensatedSum diff;
  CompensatedSum covered;
  for (auto [value, count] : histogram) {
    if (value < 0 && count > 0) diff.add(static_cast<double>(count) / static_cast<double>(total));
  }
  for (std::int64_t j = 0; j <= top; ++j) {
    const auto it = histogram.find(j);
    const double emp = it == histogram.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total);
    const double pmf = poisson_pmf(mu, j);
    covered.add(pmf);
    diff.add(std::fabs(emp - pmf));
  }
  diff.add(std::max(0.0, 1.0 - covered.value()));
  return 0.5 * diff.value();
}

// Total variation distance between two empirical histograms.
inline double empirical_tv_distance(const Histogram& a, const Histogram& b) {
  auto total = [](const Histogram& h) {
    std::uint64_t t = 0;
    for (auto [v, c] : h) t += c;
    return static_cast<double>(t);
  };
  const double ta = total(a);
  const double tb = total(b);
  if (ta == 0 || tb == 0) throw std::invalid_argument("empirical_tv_distance: empty histogram");
  Histogram keys = a;
  for (auto [v, c] : b) keys[v] += 0;
  CompensatedSum diff;
  for (auto [v, unused] : keys) {
    const auto ia = a.find(v);
    const auto ib = b.find(v);
    const double pa = ia == a.end() ? 0.0 : static_cast<double>(ia->second) / ta;
    const double pb = ib == b.end() ? 0.0 : static_cast<double>(ib->second) / tb;
    diff.add(std::fabs(pa - pb));
  }
  return 0.5 * diff.value();
}

inline double gumbel_cdf(double u) { return std::exp(-std::exp(-u)); }

inline constexpr std::size_t kGumbelMinSamples = 100;

// Kolmogorov distance between the empirical CDF of the samples and the
// standard Gumbel CDF, checked on both sides of every jump.
inline double gumbel_fit_statistic(std::vector<double> samples) {
  if (samples.size() < kGumbelMinSamples) {
    throw std::invalid_argument("gumbel_fit_statistic: need at least 100 samples");
  }
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = gumbel_cdf(samples[i]);
    worst = std::max({worst, std::fabs(static_cast<double>(i + 1) / n - f),
                      std::fabs(static_cast<double>(i) / n - f)});
  }
  return std::min(worst, 1.0);
}

// ---------------------------------------------------------------------------
// Monte Carlo aggregation

struct MonteCarloSummary {
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  MasterSeed seed{};
};

inline constexpr double kWilsonZ95 = 1.959963984540054;

inline std::pair<double, double> wilson_interval(std::uint64_t successes, std::uint64_t trials,
                                                 double z = kWilsonZ95) {
  if (trials == 0) throw std::invalid_argument("wilson_interval: zero trials");
  const auto n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (phat + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  double lo = std::clamp(centre - half, 0.0, 1.0);
  double hi = std::clamp(centre + half, 0.0, 1.0);
  if (successes == 0) lo = 0.0;
  if (successes == trials) hi = 1.0;
  return {std::min(lo, phat), std::max(hi, phat)};
}

inline MonteCarloSummary summarize(std::uint64_t successes, std::uint64_t trials, MasterSeed seed) {
  const auto [lo, hi] = wilson_interval(successes, trials);
  return MonteCarloSummary{trials, successes,
                           static_cast<double>(successes) / static_cast<double>(trials), lo, hi, seed};
}

// Worker count: THRESHOLD_LAB_WORKERS if set and positive, else hardware threads.
inline unsigned default_workers() {
  if (const char* env = std::getenv("THRESHOLD_LAB_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1U : hw;
}

// Evaluates fn(stream_i) for i in [0, trials) with stream_i derived from
// (seed, i). Results land at index i, so the output does not depend on the
// number of workers.
template <typename Fn>
auto collect_trials(Fn&& fn, std::uint64_t trials, MasterSeed seed, unsigned workers = 0)
    -> std::vector<std::invoke_result_t<Fn&, TrialStream&>> {
  using T = std::invoke_result_t<Fn&, TrialStream&>;
  std::vector<T> out(trials);
  if (workers == 0) workers = default_workers();
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, std::max<std::uint64_t>(trials, 1)));

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= trials) return;
      try {
        TrialStream stream = derive_stream(seed, i);
        out[i] = fn(stream);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(trials);
        return;
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// Runs a boolean-valued trial `trials` times and summarizes with a Wilson 95% interval.
template <typename Fn>
MonteCarloSummary run_trials(Fn&& fn, std::uint64_t trials, MasterSeed seed, unsigned workers = 0) {
  if (trials == 0) throw std::invalid_argument("run_trials: need at least one trial");
  auto wrapped = [&fn](TrialStream& s) -> std::uint8_t { return fn(s) ? 1 : 0; };
  const auto hits = collect_trials(wrapped, trials, seed, workers);
  std::uint64_t successes = 0;
  for (auto h : hits) successes += h;
  return summarize(successes, trials, seed);
}

// ---------------------------------------------------------------------------
// Threshold location

enum class Monotone { increasing, decreasing };

struct ScanRow {
  double param = 0.0;
  MonteCarloSummary summary;
};

struct ThresholdScan {
  std::vector<ScanRow> rows;  // sorted by param, strictly increasing
  double p_half = std::numeric_limits<double>::quiet_NaN();
  double tol = 0.0;
  MasterSeed seed{};
};

class BracketViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kBisectSeedDomain = 0xB15EC7;

// Bisects on the parameter until the bracket is narrower than tol. Each probe
// runs with its own seed derived from (seed, probe_index).
template <typename Experiment>
ThresholdScan threshold_bisect(Experiment&& experiment, double p_lo, double p_hi, double target,
                               std::uint64_t trials_per_eval, double tol, MasterSeed seed,
                               Monotone direction, unsigned workers = 0) {
  if (!(p_lo < p_hi)) throw std::invalid_argument("threshold_bisect: need p_lo < p_hi");
  if (!(tol > 0.0)) throw std::invalid_argument("threshold_bisect: tol must be positive");
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("threshold_bisect: target must be in (0,1)");

  ThresholdScan scan;
  scan.tol = tol;
  scan.seed = seed;
  std::uint64_t probe = 0;
  auto evaluate = [&](double p) {
    const MasterSeed probe_seed = derive_seed(seed, probe++, kBisectSeedDomain);
    auto trial = [&](TrialStream& s) -> bool { return experiment(p, s); };
    MonteCarloSummary s = run_trials(trial, trials_per_eval, probe_seed, workers);
    scan.rows.push_back({p, s});
    return s;
  };

  const MonteCarloSummary lo = evaluate(p_lo);
  const MonteCarloSummary hi = evaluate(p_hi);
  const bool violated = direction == Monotone::increasing
                            ? (lo.ci_low > target || hi.ci_high < target)
                            : (lo.ci_high < target || hi.ci_low > target);
  if (violated) {
    throw BracketViolation("threshold_bisect: bracket does not straddle the target (estimates " +
                           std::to_string(lo.estimate) + " at p_lo, " + std::to_string(hi.estimate) +
                           " at p_hi, target " + std::to_string(target) + ")");
  }

  while (p_hi - p_lo > tol) {
    const double mid = 0.5 * (p_lo + p_hi);
    const double est = evaluate(mid).estimate;
    const bool below = direction == Monotone::increasing ? est < target : est > target;
    (below ? p_lo : p_hi) = mid;
  }
  scan.p_half = 0.5 * (p_lo + p_hi);
  std::sort(scan.rows.begin(), scan.rows.end(),
            [](const ScanRow& a, const ScanRow& b) { return a.param < b.param; });
  return scan;
}

// Least-squares slope of ln y against ln x.
inline double loglog_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw std::invalid_argument("loglog_slope: need at least 3 points");
  double sx = 0, sy = 0;
  for (auto [x, y] : points) {
    if (!(x > 0.0 && y > 0.0)) throw std::invalid_argument("loglog_slope: inputs must be positive");
    sx += std::log(x);
    sy += std::log(y);
  }
  const auto n = static_cast<double>(points.size());
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0, sxy = 0;
  for (auto [x, y] : points) {
    const double dx = std::log(x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y) - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("loglog_slope: x values must be distinct");
  return sxy / sxx;
}

}  // namespace threshold_lab
