#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "threshold_lab/analysis.hpp"
#include "threshold_lab/designs.hpp"

using namespace threshold_lab;
using namespace threshold_lab::designs;

namespace {

Mask mask_of(std::initializer_list<unsigned> one_based) {
  Mask m = 0;
  for (unsigned x : one_based) m |= Mask{1} << (x - 1);
  return m;
}

// Reference: for each t-subset, count members that contain it, by masks.
std::map<Mask, unsigned> naive_profile(const std::vector<Mask>& family, unsigned n, unsigned t) {
  std::map<Mask, unsigned> out;
  for (Mask tau = 0; tau < (Mask{1} << n); ++tau) {
    if (static_cast<unsigned>(std::popcount(tau)) != t) continue;
    unsigned c = 0;
    for (Mask m : family) c += (m & tau) == tau;
    out[tau] = c;
  }
  return out;
}

}  // namespace

TEST(Params, Validation) {
  EXPECT_NO_THROW((DesignParams{30, 4, 2, 1}.validate()));
  EXPECT_THROW((DesignParams{31, 4, 2, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((DesignParams{10, 2, 2, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((DesignParams{10, 4, 0, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((DesignParams{10, 11, 2, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((DesignParams{10, 4, 2, 0}.validate()), std::invalid_argument);
  const DesignParams p{12, 4, 2, 1};
  EXPECT_EQ(p.num_tsets(), 66U);
  EXPECT_EQ(p.cover_multiplicity(), 45U);
  EXPECT_EQ(p.num_ksets(), 495U);
}

TEST(Colex, RankIsBijective) {
  for (unsigned size = 0; size <= 5; ++size) {
    std::uint64_t expected = 0;
    for_each_subset_of_size(9, size, [&](Mask m) {
      ASSERT_EQ(colex_rank(m), expected);
      ASSERT_EQ(colex_unrank(expected, size), m);
      ++expected;
    });
    EXPECT_EQ(expected, kChoose(9, size));
  }
}

TEST(Colex, FullSetAtWidth30) {
  std::uint64_t count = 0;
  for_each_subset_of_size(30, 30, [&](Mask m) {
    EXPECT_EQ(m, (Mask{1} << 30) - 1);
    ++count;
  });
  EXPECT_EQ(count, 1U);
  EXPECT_EQ(kChoose(30, 15), 155117520U);
}

TEST(Sampling, ExtremeProbabilities) {
  const DesignParams p{8, 3, 2, 1};
  TrialStream s(MasterSeed{1}, 0);
  EXPECT_EQ(sample_design_family(p, 0.0, s).size(), 0U);
  const auto full = sample_design_family(p, 1.0, s);
  EXPECT_EQ(full.size(), 56U);
  for (Mask m : full.members) EXPECT_EQ(std::popcount(m), 3);
  EXPECT_THROW(sample_design_family(p, 1.2, s), std::invalid_argument);
}

TEST(Profile, FullFamilyUniform) {
  const DesignParams p{5, 3, 2, 1};
  TrialStream s(MasterSeed{1}, 0);
  const auto prof = coverage_profile(sample_design_family(p, 1.0, s), p);
  ASSERT_EQ(prof.counts.size(), 10U);
  for (auto c : prof.counts) EXPECT_EQ(c, 3U);
  EXPECT_EQ(deficiency_count(prof, 3), 0U);
  EXPECT_EQ(overfull_count(prof, 3), 0U);
}

TEST(Profile, EmptyFamily) {
  const DesignParams p{5, 3, 2, 1};
  const auto prof = coverage_profile(KSetFamily{}, p);
  for (auto c : prof.counts) EXPECT_EQ(c, 0U);
  EXPECT_EQ(deficiency_count(prof, 1), 10U);
  EXPECT_EQ(overfull_count(prof, 1), 0U);
}

TEST(Profile, TwoBlockExample) {
  const DesignParams p{5, 3, 2, 1};
  const KSetFamily family{{mask_of({1, 2, 3}), mask_of({1, 2, 4})}};
  const auto prof = coverage_profile(family, p);
  EXPECT_EQ(prof.counts[colex_rank(mask_of({1, 2}))], 2U);
  EXPECT_EQ(prof.counts[colex_rank(mask_of({1, 3}))], 1U);
  EXPECT_EQ(prof.counts[colex_rank(mask_of({3, 4}))], 0U);
  EXPECT_EQ(deficiency_count(prof, 2), 9U);
  EXPECT_EQ(overfull_count(prof, 1), 1U);
}

TEST(Profile, MatchesNaiveOnRandomFamilies) {
  const DesignParams p{9, 4, 2, 1};
  for (std::uint64_t t = 0; t < 50; ++t) {
    TrialStream s(MasterSeed{2}, t);
    const auto family = sample_design_family(p, 0.2, s);
    const auto prof = coverage_profile(family, p);
    for (auto [tau, c] : naive_profile(family.members, 9, 2)) ASSERT_EQ(prof.counts[colex_rank(tau)], c);
  }
}

TEST(Profile, RejectsWrongSize) {
  const DesignParams p{5, 3, 2, 1};
  CoverageProfile prof{std::vector<std::uint32_t>(10, 0)};
  EXPECT_THROW(add_to_profile(prof, p, mask_of({1, 2})), std::invalid_argument);
}

TEST(Thresholds, CoveringExamples) {
  EXPECT_NEAR(covering_threshold_p({12, 4, 2, 1}, 0.0), std::log(66.0) / 45.0, 1e-12);
  EXPECT_NEAR(covering_threshold_p({12, 4, 2, 1}, 0.0), 0.0931034, 5e-6);
  EXPECT_NEAR(covering_threshold_p({12, 4, 2, 2}, 0.0), 0.124939, 5e-6);
  EXPECT_NEAR(covering_threshold_p({12, 4, 2, 2}, 0.0), (std::log(66.0) + std::log(std::log(66.0))) / 45.0, 1e-12);
}

TEST(Thresholds, CoveringOutOfRange) {
  // ln C(14,2) - 6 < 0.
  EXPECT_THROW(covering_threshold_p({14, 4, 2, 1}, -6.0), std::domain_error);
  EXPECT_THROW(covering_threshold_p({4, 3, 2, 1}, 100.0), std::domain_error);
  EXPECT_THROW(covering_threshold_p({2, 2, 1, 1}, 0.0), std::invalid_argument);  // C(2,1) < 3
  EXPECT_NO_THROW(covering_threshold_p({3, 2, 1, 1}, 0.0));
}

TEST(Thresholds, PackingExamples) {
  EXPECT_NEAR(packing_threshold_p({20, 3, 2, 1}), 0.0025, 1e-15);
  EXPECT_NEAR(packing_threshold_p({20, 4, 2, 3}), std::pow(20.0, -2.5), 1e-15);
  double prev = 0;
  for (unsigned l = 1; l <= 6; ++l) {
    const double p = packing_threshold_p({20, 4, 2, l});
    EXPECT_GT(p, prev);
    prev = p;
  }
  EXPECT_LT(prev, std::pow(20.0, -2.0));
}

TEST(Expected, Endpoints) {
  const DesignParams p{10, 4, 2, 1};
  EXPECT_DOUBLE_EQ(expected_deficient(p, 0.0), 45.0);
  EXPECT_DOUBLE_EQ(expected_deficient(p, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(expected_deficient({10, 4, 2, 3}, 0.0), 45.0);
}

TEST(Expected, MatchesBinomialCdf) {
  // C(n,t) * P(Bin(M, p) <= lambda-1) with an independent tail routine.
  for (unsigned l : {1U, 2U, 3U, 5U}) {
    const DesignParams p{12, 4, 2, l};
    const double want = 66.0 * binomial_tail_exact({45, 0.1, 0, l - 1});
    EXPECT_NEAR(expected_deficient(p, 0.1), want, 1e-10 * want);
  }
  EXPECT_NEAR(expected_deficient({12, 4, 2, 2}, 0.1), 3.456274, 1e-6);
}

TEST(Expected, LambdaAboveMultiplicity) {
  // lambda > M = 2: every t-set is deficient.
  const DesignParams p{4, 3, 2, 4};
  EXPECT_EQ(p.cover_multiplicity(), 2U);
  EXPECT_NEAR(expected_deficient(p, 0.3), 6.0, 1e-12);
}

TEST(Expected, MonteCarloAgrees) {
  const DesignParams p{10, 4, 2, 2};
  const double prob = 0.06;
  const auto xs = collect_trials([&](TrialStream& s) { return design_trial(p, prob, DesignMode::cover, s); }, 5000,
                                 MasterSeed{3}, 1);
  double mean = 0;
  for (auto x : xs) mean += static_cast<double>(x);
  mean /= static_cast<double>(xs.size());
  double var = 0;
  for (auto x : xs) var += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
  var /= static_cast<double>(xs.size() - 1);
  EXPECT_NEAR(mean, expected_deficient(p, prob), 3.5 * std::sqrt(var / static_cast<double>(xs.size())));
}

TEST(Trials, CoverMonotoneInP) {
  const DesignParams p{10, 4, 2, 1};
  double prev = -1;
  for (double prob : {0.05, 0.1, 0.15, 0.2, 0.3}) {
    const auto s = run_trials([&](TrialStream& st) { return design_trial(p, prob, DesignMode::cover, st) == 0; }, 1000,
                              MasterSeed{4}, 1);
    EXPECT_GE(s.estimate, prev);
    prev = s.estimate;
  }
  EXPECT_GT(prev, 0.9);
}

TEST(Trials, PackMonotoneInP) {
  const DesignParams p{10, 4, 2, 1};
  double prev = 2;
  for (double prob : {0.001, 0.005, 0.02, 0.05}) {
    const auto s = run_trials([&](TrialStream& st) { return design_trial(p, prob, DesignMode::pack, st) == 0; }, 1000,
                              MasterSeed{5}, 1);
    EXPECT_LE(s.estimate, prev);
    prev = s.estimate;
  }
  EXPECT_LT(prev, 0.1);
}

TEST(Trials, PackCountMatchesNaiveOverfull) {
  const DesignParams p{8, 3, 2, 1};
  for (std::uint64_t t = 0; t < 30; ++t) {
    TrialStream a(MasterSeed{6}, t), b(MasterSeed{6}, t);
    const auto x = design_trial(p, 0.2, DesignMode::pack, a);
    const auto family = sample_design_family(p, 0.2, b);
    std::uint64_t want = 0;
    for (auto [tau, c] : naive_profile(family.members, 8, 2)) want += c >= 2;
    ASSERT_EQ(x, want);
  }
}

TEST(Trials, BisectionNearFormula) {
  const DesignParams p{14, 4, 2, 1};
  const double formula = covering_threshold_p(p, 0.0);
  auto exp = [&](double prob, TrialStream& s) { return design_trial(p, prob, DesignMode::cover, s) == 0; };
  const auto scan = threshold_bisect(exp, 0.01, 0.5, 0.5, 400, 0.002, MasterSeed{7}, Monotone::increasing, 1);
  EXPECT_LT(std::max(scan.p_half / formula, formula / scan.p_half), 1.5);
}

TEST(Trials, PoissonAtThresholdLambdaOne) {
  const DesignParams p{14, 4, 2, 1};
  const double prob = covering_threshold_p(p, 0.0);
  const auto xs = collect_trials([&](TrialStream& s) { return design_trial(p, prob, DesignMode::cover, s); }, 2000,
                                 MasterSeed{8}, 1);
  EXPECT_LT(poisson_tv_distance(make_histogram(xs), expected_deficient(p, prob)), 0.15);
}
