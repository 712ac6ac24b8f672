// Acceptance suite: one PASS/FAIL line per criterion. Monte Carlo criteria
// drive the CLI layer and read its CSV back; criterion 17 reruns every CLI
// invocation with a different worker count and compares bytes.
//
// usage: threshold_lab_acceptance [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "threshold_lab/analysis.hpp"
#include "threshold_lab/balls.hpp"
#include "threshold_lab/cli.hpp"
#include "threshold_lab/designs.hpp"
#include "threshold_lab/permutations.hpp"
#include "threshold_lab/sidon.hpp"
#include "threshold_lab/unionfree.hpp"

namespace tl = threshold_lab;
namespace cli = threshold_lab::cli;

namespace {

constexpr std::uint64_t kSeed = 20240917;
constexpr unsigned kBaseWorkers = 1;
constexpr unsigned kAltWorkers = 4;

struct Csv {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw std::runtime_error("missing column " + name);
  }
  std::vector<double> numbers(const std::string& name) const {
    const std::size_t c = col(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(std::stod(r[c]));
    return out;
  }
};

Csv parse_csv(const std::string& text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!header) {
      csv.columns = cells;
      header = true;
    } else {
      csv.rows.push_back(std::move(cells));
    }
  }
  return csv;
}

struct Invocation {
  std::vector<std::string> args;
  std::string document;
};

std::vector<Invocation> g_invocations;  // replayed by criterion 17

struct CliResult {
  int exit_code = 0;
  std::string error;
  Csv csv;
  cli::Json summary;
};

CliResult run_cli(std::vector<std::string> args) {
  args.push_back("--seed");
  args.push_back(std::to_string(kSeed));
  args.push_back("--workers");
  args.push_back(std::to_string(kBaseWorkers));
  CliResult res;
  cli::ExperimentConfig config;
  try {
    config = cli::parse_args(args);
  } catch (const std::exception& e) {
    res.exit_code = 2;
    res.error = e.what();
    return res;
  }
  const auto out = cli::execute(config);
  res.exit_code = out.exit_code;
  res.error = out.error;
  res.summary = out.summary;
  if (!out.document.empty()) {
    res.csv = parse_csv(out.document);
    g_invocations.push_back({args, out.document});
  }
  return res;
}

double fraction_zero(const Csv& csv, const std::string& column = "X") {
  const auto xs = csv.numbers(column);
  double zeros = 0;
  for (double x : xs) zeros += x == 0.0;
  return zeros / static_cast<double>(xs.size());
}

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> body;
};

std::vector<std::string> design_args(unsigned lambda, const std::string& shift_flag, double shift, unsigned trials) {
  return {"design", "--n", "14", "--k", "4", "--t", "2", "--lambda", std::to_string(lambda),
          "--mode", "cover", shift_flag, fmt(shift, 17), "--trials", std::to_string(trials)};
}

Outcome lemma_cover() {
  bool ok = true;
  std::string detail;
  for (unsigned n = 1; n <= 6; ++n) {
    const auto rep = tl::permutations::verify_lemmas_for(n, 0);
    ok = ok && rep.cover_ok();
    detail += "n=" + std::to_string(n) + ":" + std::to_string(rep.min_cover) + ".." + std::to_string(rep.max_cover) + " ";
  }
  return {ok, detail};
}

Outcome lemma_pairs() {
  bool ok = true;
  std::string detail;
  for (unsigned n = 1; n <= 5; ++n) {
    const auto rep = tl::permutations::verify_lemmas_for(n, 5);
    ok = ok && rep.neighborhood_checked && rep.joint_checked && rep.neighborhood_ok() && rep.joint_ok();
    detail += "n=" + std::to_string(n) + ":J<=" + std::to_string(rep.max_neighborhood) +
              ",C<=" + std::to_string(rep.max_joint) + " ";
  }
  const auto joint = tl::permutations::joint_covers(tl::permutations::Permutation{1, 2},
                                                    tl::permutations::Permutation{2, 1});
  ok = ok && joint.size() == 4;
  detail += "|C_(12),(21)|=" + std::to_string(joint.size());
  return {ok, detail};
}

Outcome determining_maps() {
  bool ok = true;
  std::uint64_t pow3 = 1;
  std::string worst;
  for (unsigned k = 1; k <= 12; ++k) {
    pow3 *= 3;
    const auto got = tl::unionfree::determining_pairs((tl::unionfree::Mask{1} << k) - 1).size();
    if (got != (pow3 - 3) / 2) {
      ok = false;
      worst += " k=" + std::to_string(k) + " got " + std::to_string(got);
    }
  }
  return {ok, ok ? "k=1..12 all equal (3^k-3)/2" : worst};
}

Outcome obstacle_formula() {
  const auto at3 = tl::unionfree::obstacle_count_formula(3);
  const double ratio = static_cast<double>(tl::unionfree::obstacle_count_formula(20)) / (std::pow(10.0, 20) / 8.0);
  return {at3 == 66 && ratio >= 0.9 && ratio <= 1.0,
          "f(3)=" + tl::unionfree::to_string(at3) + " f(20)/(10^20/8)=" + fmt(ratio, 10)};
}

Outcome collision_equivalence() {
  const auto res = run_cli({"verify", "--max-n", "1", "--trials", "1"});
  if (res.exit_code == 2) return {false, res.error};
  const auto& rows = res.csv.rows;
  for (const auto& r : rows) {
    if (r[0] == "union_collisions_vs_bruteforce") {
      return {r[3] == "1", "agreeing families " + r[1] + " / " + r[2]};
    }
  }
  return {false, "check row missing"};
}

Outcome holst_mean() {
  constexpr std::uint64_t n_boxes = 10'000;
  std::string detail;
  bool ok = true;
  std::vector<double> means;
  for (unsigned lambda = 1; lambda <= 3; ++lambda) {
    const auto res = run_cli({"balls", "--boxes", std::to_string(n_boxes), "--lambda", std::to_string(lambda),
                              "--waiting", "--trials", "2000"});
    if (res.exit_code != 0) return {false, res.error};
    const double mean = mean_of(res.csv.numbers("T"));
    const double ref = tl::balls::holst_mean({n_boxes, lambda});
    const double rel = (mean - ref) / ref;
    ok = ok && std::abs(rel) <= 0.02;
    means.push_back(mean);
    detail += "lambda=" + std::to_string(lambda) + " mean=" + fmt(mean, 8) + " holst=" + fmt(ref, 8) +
              " rel=" + fmt(100 * rel, 3) + "%; ";
  }
  const double gap = means[1] - means[0];
  const double ref_gap = n_boxes * std::log(std::log(static_cast<double>(n_boxes)));
  const double gap_rel = (gap - ref_gap) / ref_gap;
  ok = ok && std::abs(gap_rel) <= 0.10;
  detail += "gap=" + fmt(gap, 7) + " vs N ln ln N=" + fmt(ref_gap, 7) + " rel=" + fmt(100 * gap_rel, 3) + "%";
  return {ok, detail};
}

Outcome gumbel_limit() {
  const tl::balls::HolstParams hp{10'000, 2};
  const auto res = run_cli({"balls", "--boxes", "10000", "--lambda", "2", "--waiting", "--trials", "2000"});
  if (res.exit_code != 0) return {false, res.error};
  std::vector<double> normalized;
  for (double t : res.csv.numbers("T")) normalized.push_back(tl::balls::holst_normalize(t, hp));
  const double d = tl::gumbel_fit_statistic(normalized);
  return {d <= 0.05, "sup distance " + fmt(d, 4) + " (bound 0.05)"};
}

Outcome balls_packing() {
  const std::uint64_t n_boxes = 1'000'000;
  const double root = std::sqrt(static_cast<double>(n_boxes));
  auto prob = [&](double balls) {
    const auto res = run_cli({"balls", "--boxes", std::to_string(n_boxes), "--lambda", "1", "--balls",
                              std::to_string(static_cast<std::uint64_t>(std::llround(balls))), "--trials", "2000"});
    if (res.exit_code != 0) throw std::runtime_error(res.error);
    return fraction_zero(res.csv);
  };
  const double low = prob(0.1 * root);
  const double high = prob(10 * root);
  return {low >= 0.95 && high <= 0.05, "P(X=0)=" + fmt(low, 4) + " at 0.1 sqrt N, " + fmt(high, 4) + " at 10 sqrt N"};
}

Outcome design_expectation() {
  const tl::designs::DesignParams dp{12, 4, 2, 2};
  const auto res = run_cli({"design", "--n", "12", "--k", "4", "--t", "2", "--lambda", "2", "--mode", "cover", "--p",
                            "0.1", "--trials", "10000"});
  if (res.exit_code != 0) return {false, res.error};
  const auto xs = res.csv.numbers("X");
  const double mean = mean_of(xs);
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(xs.size()));
  const double expect = tl::designs::expected_deficient(dp, 0.1);
  const double z = (mean - expect) / se;
  return {std::abs(z) <= 3.0, "MC mean " + fmt(mean) + " vs exact " + fmt(expect) + ", z=" + fmt(z, 3)};
}

Outcome design_transition() {
  bool ok = true;
  std::string detail;
  for (unsigned lambda = 1; lambda <= 2; ++lambda) {
    for (double r : {6.0, -6.0}) {
      const auto res = run_cli(design_args(lambda, "--r", r, 2000));
      detail += "lambda=" + std::to_string(lambda) + " r=" + fmt(r) + ": ";
      if (res.exit_code != 0) {
        ok = false;
        detail += "rejected (" + res.error + "); ";
        continue;
      }
      const double p0 = fraction_zero(res.csv);
      ok = ok && (r > 0 ? p0 >= 0.85 : p0 <= 0.15);
      detail += "P(X=0)=" + fmt(p0, 4) + "; ";
    }
  }
  return {ok, detail};
}

Outcome design_poisson() {
  bool ok = true;
  std::string detail;
  for (unsigned lambda = 1; lambda <= 2; ++lambda) {
    const tl::designs::DesignParams dp{14, 4, 2, lambda};
    const double p = tl::designs::covering_threshold_p(dp, 0.0);
    const auto res = run_cli(design_args(lambda, "--r", 0.0, 2000));
    if (res.exit_code != 0) return {false, res.error};
    std::vector<std::int64_t> xs;
    for (double x : res.csv.numbers("X")) xs.push_back(static_cast<std::int64_t>(x));
    const double mu = tl::designs::expected_deficient(dp, p);
    const double tv = tl::poisson_tv_distance(tl::make_histogram(xs), mu);
    ok = ok && tv <= 0.15;
    detail += "lambda=" + std::to_string(lambda) + " mu=" + fmt(mu, 4) + " TV=" + fmt(tv, 4) + "; ";
  }
  return {ok, detail};
}

Outcome bhg_growth() {
  bool ok = true;
  std::string detail;
  for (unsigned l : {3u, 4u}) {
    std::vector<std::pair<double, double>> pts;
    for (std::uint32_t n : {10u, 20u, 40u}) {
      const auto res = run_cli({"sidon", "enum-bhg", "--n", std::to_string(n), "--h", "2", "--g", "1", "--l",
                                std::to_string(l)});
      if (res.exit_code != 0) return {false, res.error};
      pts.emplace_back(n, std::stod(res.csv.rows.at(0).at(res.csv.col("count"))));
    }
    const double slope = tl::loglog_slope(pts);
    const double expect = l - 1.0;
    ok = ok && std::abs(slope - expect) <= 0.3;
    detail += "l=" + std::to_string(l) + " slope=" + fmt(slope, 4) + " (expect " + fmt(expect) + "); ";
  }
  return {ok, detail};
}

Outcome sidon_transition() {
  const double scale = std::pow(1e4, 0.25);
  auto prob = [&](double k) {
    const auto res = run_cli({"sidon", "check", "--n", "10000", "--h", "2", "--g", "1", "--model", "bernoulli", "--k",
                              std::to_string(static_cast<std::uint64_t>(std::llround(k))), "--trials", "2000"});
    if (res.exit_code != 0) throw std::runtime_error(res.error);
    return 1.0 - fraction_zero(res.csv, "prop_holds");
  };
  const double low = prob(0.2 * scale);
  const double high = prob(5 * scale);
  return {low >= 0.9 && high <= 0.1, "P(B_2[1])=" + fmt(low, 4) + " at k=0.2 n^1/4, " + fmt(high, 4) + " at k=5 n^1/4"};
}

Outcome truncated_basis() {
  const auto res = run_cli({"sidon", "basis", "--n", "10000", "--h", "2", "--g", "2", "--alpha", "0.5", "--A", "0",
                            "--trials", "2000"});
  if (res.exit_code != 0) return {false, res.error};
  const double est = 1.0 - fraction_zero(res.csv, "prop_holds");
  const double limit = tl::sidon::truncated_basis_limit({2, 2, 0.5}, 0.0);
  return {std::abs(est - limit) <= 0.15, "estimate " + fmt(est, 4) + " vs limit " + fmt(limit, 4)};
}

Outcome perm_transition() {
  bool ok = true;
  std::string detail;
  for (unsigned lambda = 1; lambda <= 2; ++lambda) {
    for (double r : {5.0, -5.0}) {
      const auto res = run_cli({"perm", "cover", "--n", "7", "--lambda", std::to_string(lambda), "--r", fmt(r),
                                "--trials", "500"});
      detail += "lambda=" + std::to_string(lambda) + " r=" + fmt(r) + ": ";
      if (res.exit_code != 0) {
        ok = false;
        detail += "rejected (" + res.error + "); ";
        continue;
      }
      const double p0 = fraction_zero(res.csv);
      ok = ok && (r > 0 ? p0 >= 0.8 : p0 <= 0.2);
      detail += "P(X=0)=" + fmt(p0, 4) + "; ";
    }
  }
  return {ok, detail};
}

Outcome unionfree_transition() {
  const double p14 = std::pow(10.0, -14.0 / 4.0);
  auto prob = [&](double p) {
    const auto res = run_cli({"unionfree", "--n", "14", "--p", fmt(p, 17), "--trials", "1000"});
    if (res.exit_code != 0) throw std::runtime_error(res.error);
    return fraction_zero(res.csv);
  };
  const double low = prob(0.1 * p14);
  const double high = prob(10 * p14);
  const double p12 = std::pow(10.0, -3.0);
  const auto scan = run_cli({"scan", "--model", "unionfree", "--n", "12", "--lo", "0.0001", "--hi", "0.01",
                             "--tol", "0.00005", "--trials", "1000"});
  if (scan.exit_code != 0) return {false, scan.error};
  const double p_half = scan.summary["p_half"].get<double>();
  const double factor = std::max(p_half / p12, p12 / p_half);
  return {low >= 0.9 && high <= 0.1 && factor <= 3.0,
          "n=14 P(X=0)=" + fmt(low, 4) + " / " + fmt(high, 4) + "; n=12 p_half=" + fmt(p_half, 4) +
              " (factor " + fmt(factor, 3) + ")"};
}

Outcome determinism() {
  std::size_t same = 0;
  std::string diffs;
  for (const auto& inv : g_invocations) {
    auto args = inv.args;
    args.back() = std::to_string(kAltWorkers);  // value of --workers
    const auto out = cli::execute(cli::parse_args(args));
    if (out.document == inv.document) {
      ++same;
    } else {
      diffs += " [" + inv.args[0] + (inv.args.size() > 1 ? " " + inv.args[1] : "") + "]";
    }
  }
  // The exact-oracle checks also go through the CLI once.
  for (const std::vector<std::string>& extra :
       {std::vector<std::string>{"perm", "verify-lemmas", "--max-n", "5"}, std::vector<std::string>{"verify"}}) {
    auto a = extra;
    a.insert(a.end(), {"--seed", std::to_string(kSeed), "--workers", std::to_string(kBaseWorkers)});
    const auto base = cli::execute(cli::parse_args(a));
    a.back() = std::to_string(kAltWorkers);
    const auto alt = cli::execute(cli::parse_args(a));
    if (base.document == alt.document && !base.document.empty()) {
      ++same;
    } else {
      diffs += " [" + extra[0] + "]";
    }
  }
  const std::size_t total = g_invocations.size() + 2;
  return {same == total && g_invocations.size() > 0,
          std::to_string(same) + "/" + std::to_string(total) + " documents identical (workers " +
              std::to_string(kBaseWorkers) + " vs " + std::to_string(kAltWorkers) + ")" + diffs};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "covering sets of S_n have size n^2+1 (n<=6)", 60, lemma_cover},
      {2, "dependency and joint-cover bounds (n<=5)", 120, lemma_pairs},
      {3, "determining pair count (k<=12)", 0, determining_maps},
      {4, "obstacle count formula", 0, obstacle_formula},
      {5, "fast vs quadruple-loop union collisions", 0, collision_equivalence},
      {6, "coverage waiting time mean, N=1e4", 600, holst_mean},
      {7, "coverage waiting time Gumbel fit, N=1e4, lambda=2", 0, gumbel_limit},
      {8, "balls packing transition, N=1e6", 0, balls_packing},
      {9, "design deficiency expectation", 0, design_expectation},
      {10, "design covering transition, n=14", 0, design_transition},
      {11, "design deficiency Poisson TV at r=0", 0, design_poisson},
      {12, "equal-sum system growth exponent", 300, bhg_growth},
      {13, "Sidon transition, n=1e4", 0, sidon_transition},
      {14, "truncated 2-basis limit, n=1e4", 0, truncated_basis},
      {15, "permutation covering transition, n=7", 900, perm_transition},
      {16, "union-free transition and bisection", 0, unionfree_transition},
      {17, "byte-identical output across worker counts", 0, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail += " [over time budget " + fmt(c.budget_seconds) + " s]";
    }
    failures += !o.pass;
    std::printf("%s %2d  %s  (%.1f s)  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d failing criteria\n", failures);
  return failures == 0 ? 0 : 1;
}
