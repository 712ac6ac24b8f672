#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "threshold_lab/analysis.hpp"
#include "threshold_lab/balls.hpp"
#include "threshold_lab/designs.hpp"
#include "threshold_lab/permutations.hpp"
#include "threshold_lab/rng.hpp"
#include "threshold_lab/sidon.hpp"
#include "threshold_lab/unionfree.hpp"

// Command-line front end: argument parsing, experiment dispatch and
// CSV/JSON emission. One process runs one experiment.
namespace threshold_lab::cli {

inline constexpr const char* kVersion = "0.1.0";

enum class Command { balls, design, sidon, perm, unionfree, scan, verify };
enum class OutputFormat { csv, json };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::balls: return "balls";
    case Command::design: return "design";
    case Command::sidon: return "sidon";
    case Command::perm: return "perm";
    case Command::unionfree: return "unionfree";
    case Command::scan: return "scan";
    case Command::verify: return "verify";
  }
  return "?";
}

// Raw flag values; unset flags stay empty.
struct Options {
  std::optional<std::uint64_t> boxes, balls, n, k, t, h, g, l, lambda, max_n;
  std::optional<double> r, p, alpha, a_shift, lo, hi, target, tol;
  std::optional<std::string> mode, model;
  std::vector<double> factors;
  bool waiting = false;
  bool exact_obstacles = false;
};

struct ExperimentConfig {
  Command command = Command::verify;
  std::string action;  // sidon/perm action or scan model
  Options options;
  std::vector<std::pair<std::string, std::string>> parameters;  // recorded in the header, in order
  std::uint64_t trials = 1000;
  MasterSeed seed{};
  std::optional<std::string> out;
  OutputFormat format = OutputFormat::csv;
  unsigned workers = 0;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <typename T>
std::string fmt(const T& v) {
  if constexpr (std::is_floating_point_v<T>) {
    return fmt_double(static_cast<double>(v));
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    return std::to_string(v);
  }
}

class Recorder {
 public:
  explicit Recorder(ExperimentConfig& c) : c_(c) {}
  template <typename T>
  void operator()(const char* name, const std::optional<T>& v) {
    if (v) c_.parameters.emplace_back(name, fmt(*v));
  }
  void flag(const char* name, bool v) {
    if (v) c_.parameters.emplace_back(name, "1");
  }
  void value(const char* name, std::string v) { c_.parameters.emplace_back(name, std::move(v)); }

 private:
  ExperimentConfig& c_;
};

template <typename T>
const T& need(const std::optional<T>& v, const char* flag) {
  if (!v) throw UsageError(std::string("missing required flag ") + flag);
  return *v;
}

inline void check(bool ok, const char* flag, const std::string& why) {
  if (!ok) throw UsageError(std::string(flag) + ": " + why);
}

inline void check_prob(const std::optional<double>& p, const char* flag) {
  if (p) check(*p >= 0.0 && *p <= 1.0, flag, "must lie in [0,1]");
}

void validate(ExperimentConfig& c);

}  // namespace detail

// Parses the arguments that follow the program name. Throws UsageError for
// unknown flags, missing flags and out-of-range values, HelpRequested for
// --help.
inline ExperimentConfig parse_args(const std::vector<std::string>& args) {
  ExperimentConfig c;
  Options& o = c.options;
  CLI::App app{"threshold-lab: packing/covering threshold experiments", "threshold-lab"};
  app.set_help_flag("--help", "print this help and exit");  // -h is taken by --h
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string format = "csv";
  std::optional<unsigned> workers;
  std::optional<std::string> out;
  std::uint64_t trials = c.trials;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--trials", trials, "number of Monte Carlo trials");
    sub->add_option("--seed", seed, "master seed (decimal)");
    sub->add_option_function<std::string>("--out", [&](const std::string& v) { out = v; }, "output path (default stdout)");
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option_function<unsigned>("--workers", [&](const unsigned& v) { workers = v; }, "worker threads");
  };
  auto u64 = [](CLI::App* sub, const char* name, std::optional<std::uint64_t>& dst, const char* help) {
    sub->add_option_function<std::uint64_t>(name, [&dst](const std::uint64_t& v) { dst = v; }, help);
  };
  auto real = [](CLI::App* sub, const char* name, std::optional<double>& dst, const char* help) {
    sub->add_option_function<double>(name, [&dst](const double& v) { dst = v; }, help);
  };

  auto* balls = app.add_subcommand("balls", "balls in boxes: overfull counts or coverage waiting times");
  u64(balls, "--boxes", o.boxes, "number of boxes N");
  u64(balls, "--lambda", o.lambda, "multiplicity lambda");
  u64(balls, "--balls", o.balls, "balls thrown per trial (overfull count mode)");
  balls->add_flag("--waiting", o.waiting, "record the lambda-coverage waiting time");
  common(balls);

  auto* design = app.add_subcommand("design", "random k-set families covering t-sets");
  u64(design, "--n", o.n, "ground set size");
  u64(design, "--k", o.k, "block size");
  u64(design, "--t", o.t, "target subset size");
  u64(design, "--lambda", o.lambda, "multiplicity");
  design->add_option_function<std::string>("--mode", [&](const std::string& v) { o.mode = v; }, "cover or pack")
      ->check(CLI::IsMember({"cover", "pack"}));
  real(design, "--r", o.r, "shift in the covering threshold");
  real(design, "--p", o.p, "selection probability");
  common(design);

  auto* sidon = app.add_subcommand("sidon", "B_h[g] sets and truncated bases");
  sidon->require_subcommand(1);
  auto sidon_action = [&](const char* name, const char* help) {
    auto* sub = sidon->add_subcommand(name, help);
    u64(sub, "--n", o.n, "universe bound n");
    u64(sub, "--h", o.h, "summands h");
    u64(sub, "--g", o.g, "representation bound g");
    common(sub);
    return sub;
  };
  auto* sidon_check = sidon_action("check", "probability of the B_h[g] property");
  u64(sidon_check, "--k", o.k, "expected (bernoulli) or exact (uniform) set size");
  real(sidon_check, "--p", o.p, "membership probability (bernoulli model)");
  sidon_check->add_option_function<std::string>("--model", [&](const std::string& v) { o.model = v; }, "bernoulli or uniform")
      ->check(CLI::IsMember({"bernoulli", "uniform"}));
  auto* sidon_basis = sidon_action("basis", "probability of being an alpha-truncated h-basis with g representations");
  real(sidon_basis, "--alpha", o.alpha, "truncation alpha in (0,1]");
  real(sidon_basis, "--A", o.a_shift, "shift A in the threshold probability");
  auto* sidon_enum = sidon_action("enum-bhg", "exhaustive count of equal-sum tuple systems by distinct symbols");
  u64(sidon_enum, "--l", o.l, "number of distinct symbols (default: all)");
  auto* sidon_scan = sidon_action("scan", "B_h[g] probability over multiples of the threshold k");
  sidon_scan->add_option("--factors", o.factors, "multipliers of n^{g/(h(g+1))}");

  auto* perm = app.add_subcommand("perm", "pattern covering of S_n by S_{n+1}");
  perm->require_subcommand(1);
  auto* perm_verify = perm->add_subcommand("verify-lemmas", "exhaustive cover-count lemmas");
  u64(perm_verify, "--max-n", o.max_n, "largest n to check (<= 6)");
  common(perm_verify);
  auto* perm_cover = perm->add_subcommand("cover", "lambda-cover deficiency at the covering threshold");
  auto* perm_pack = perm->add_subcommand("pack", "lambda-packing violations at probability p");
  for (auto* sub : {perm_cover, perm_pack}) {
    u64(sub, "--n", o.n, "pattern length n");
    u64(sub, "--lambda", o.lambda, "multiplicity");
    common(sub);
  }
  real(perm_cover, "--r", o.r, "threshold shift r");
  real(perm_pack, "--p", o.p, "selection probability");

  auto* uf = app.add_subcommand("unionfree", "union collisions in random subfamilies of P([n])");
  u64(uf, "--n", o.n, "ground set size");
  real(uf, "--p", o.p, "selection probability");
  uf->add_flag("--exact-obstacles", o.exact_obstacles, "report the obstacle count and E(X)");
  common(uf);

  auto* scan = app.add_subcommand("scan", "bisection for the empirical threshold");
  scan->add_option_function<std::string>("--model", [&](const std::string& v) { o.model = v; }, "experiment family")
      ->check(CLI::IsMember({"design-cover", "unionfree", "sidon", "perm-cover", "balls-pack"}));
  u64(scan, "--n", o.n, "size parameter");
  u64(scan, "--k", o.k, "block size (design-cover)");
  u64(scan, "--t", o.t, "target size (design-cover)");
  u64(scan, "--h", o.h, "summands (sidon)");
  u64(scan, "--g", o.g, "representation bound (sidon)");
  u64(scan, "--lambda", o.lambda, "multiplicity");
  u64(scan, "--boxes", o.boxes, "number of boxes (balls-pack)");
  real(scan, "--lo", o.lo, "lower end of the bracket");
  real(scan, "--hi", o.hi, "upper end of the bracket");
  real(scan, "--target", o.target, "target probability (default 0.5)");
  real(scan, "--tol", o.tol, "bracket width at which to stop");
  common(scan);

  auto* verify = app.add_subcommand("verify", "exact oracle checks");
  u64(verify, "--max-n", o.max_n, "largest n for the permutation lemmas (<= 6)");
  common(verify);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::CallForVersion&) {
    throw HelpRequested(std::string("threshold-lab ") + kVersion + "\n");
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  auto picked = [](CLI::App* sub) { return sub->parsed(); };
  if (picked(balls)) c.command = Command::balls;
  else if (picked(design)) c.command = Command::design;
  else if (picked(sidon)) {
    c.command = Command::sidon;
    for (auto* sub : {sidon_check, sidon_basis, sidon_enum, sidon_scan}) {
      if (picked(sub)) c.action = sub->get_name();
    }
  } else if (picked(perm)) {
    c.command = Command::perm;
    for (auto* sub : {perm_verify, perm_cover, perm_pack}) {
      if (picked(sub)) c.action = sub->get_name();
    }
  } else if (picked(uf)) c.command = Command::unionfree;
  else if (picked(scan)) c.command = Command::scan;
  else c.command = Command::verify;

  c.trials = trials;
  c.seed = MasterSeed{seed};
  c.out = out;
  c.format = format == "json" ? OutputFormat::json : OutputFormat::csv;
  c.workers = workers.value_or(0);
  if (workers && *workers == 0) throw UsageError("--workers: must be >= 1");
  if (c.trials == 0) throw UsageError("--trials: must be >= 1");
  detail::validate(c);
  return c;
}

inline void detail::validate(ExperimentConfig& c) {
  const Options& o = c.options;
  Recorder rec(c);
  switch (c.command) {
    case Command::balls: {
      const auto boxes = need(o.boxes, "--boxes");
      check(boxes >= 1 && boxes <= 0xFFFFFFFFULL, "--boxes", "must be in [1, 2^32-1]");
      const auto lambda = need(o.lambda, "--lambda");
      check(lambda >= 1, "--lambda", "must be >= 1");
      if (o.waiting == o.balls.has_value()) throw UsageError("balls: give exactly one of --balls or --waiting");
      rec("boxes", o.boxes);
      rec("lambda", o.lambda);
      rec("balls", o.balls);
      rec.flag("waiting", o.waiting);
      break;
    }
    case Command::design: {
      designs::DesignParams dp;
      const auto n = need(o.n, "--n");
      check(n <= designs::kMaxN, "--n", "must be <= 30");
      const auto k = need(o.k, "--k");
      const auto t = need(o.t, "--t");
      check(k <= n, "--k", "must be <= n");
      check(t >= 1 && t < k, "--t", "must satisfy 1 <= t < k");
      const auto lambda = need(o.lambda, "--lambda");
      check(lambda >= 1, "--lambda", "must be >= 1");
      dp = {static_cast<unsigned>(n), static_cast<unsigned>(k), static_cast<unsigned>(t), static_cast<unsigned>(lambda)};
      const auto& mode = need(o.mode, "--mode");
      if (mode == "cover") {
        if (o.r.has_value() == o.p.has_value()) throw UsageError("design: give exactly one of --r or --p");
        if (o.r) {
          check(dp.num_tsets() >= 3, "--t", "C(n,t) must be >= 3 for the threshold formula");
          try {
            (void)designs::covering_threshold_p(dp, *o.r);
          } catch (const std::domain_error&) {
            throw UsageError("--r: threshold probability falls outside [0,1]");
          }
        }
      } else {
        check(!o.r.has_value(), "--r", "only valid with --mode cover");
        need(o.p, "--p");
      }
      check_prob(o.p, "--p");
      rec("n", o.n);
      rec("k", o.k);
      rec("t", o.t);
      rec("lambda", o.lambda);
      rec("mode", o.mode);
      rec("r", o.r);
      rec("p", o.p);
      break;
    }
    case Command::sidon: {
      const auto n = need(o.n, "--n");
      const auto h = need(o.h, "--h");
      const auto g = need(o.g, "--g");
      check(h >= 2 && h <= 16, "--h", "must be in [2, 16]");
      check(g >= 1, "--g", "must be >= 1");
      rec("action", std::optional<std::string>(c.action));
      rec("n", o.n);
      rec("h", o.h);
      rec("g", o.g);
      if (c.action == "check" || c.action == "scan") {
        check(n >= 1 && n <= 10'000'000, "--n", "must be in [1, 10^7]");
      }
      if (c.action == "check") {
        const std::string model = o.model.value_or("bernoulli");
        if (model == "uniform") {
          check(!o.p.has_value(), "--p", "not valid with --model uniform");
          check(need(o.k, "--k") <= n, "--k", "must be <= n");
        } else {
          if (o.k.has_value() == o.p.has_value()) throw UsageError("sidon check: give exactly one of --k or --p");
          if (o.k) check(*o.k <= n, "--k", "must be <= n");
          check_prob(o.p, "--p");
        }
        rec.value("model", model);
        rec("k", o.k);
        rec("p", o.p);
      } else if (c.action == "basis") {
        check(n >= 3 && n <= 10'000'000, "--n", "must be in [3, 10^7]");
        const double alpha = need(o.alpha, "--alpha");
        check(alpha > 0.0 && alpha <= 1.0, "--alpha", "must lie in (0,1]");
        const double a = need(o.a_shift, "--A");
        check(h == 2 || g == 1, "--h", "basis thresholds exist for g = 1 (any h) or h = 2 (any g)");
        try {
          (void)sidon::basis_threshold_p(static_cast<double>(n),
                                         {static_cast<unsigned>(h), static_cast<unsigned>(g), alpha}, a);
        } catch (const std::domain_error&) {
          throw UsageError("--A: threshold radicand falls outside [0,1]");
        }
        rec("alpha", o.alpha);
        rec("A", o.a_shift);
      } else if (c.action == "enum-bhg") {
        check(n <= sidon::kBhgMaxN, "--n", "must be <= 60 for exhaustive enumeration");
        rec("l", o.l);
      } else if (c.action == "scan") {
        rec.value("factors", [&] {
          std::string s;
          for (double f : o.factors) s += (s.empty() ? "" : ";") + fmt(f);
          return s.empty() ? std::string("default") : s;
        }());
        for (double f : o.factors) check(f > 0.0, "--factors", "must be positive");
      }
      break;
    }
    case Command::perm: {
      rec("action", std::optional<std::string>(c.action));
      if (c.action == "verify-lemmas") {
        if (o.max_n) check(*o.max_n >= 1 && *o.max_n <= permutations::kLemmaMaxN, "--max-n", "must be in [1, 6]");
        rec.value("max_n", std::to_string(o.max_n.value_or(5)));
        break;
      }
      const auto n = need(o.n, "--n");
      check(n >= 2 && n <= permutations::kSweepMaxN, "--n", "must be in [2, 9]");
      const auto lambda = need(o.lambda, "--lambda");
      check(lambda >= 1, "--lambda", "must be >= 1");
      rec("n", o.n);
      rec("lambda", o.lambda);
      if (c.action == "cover") {
        const double r = need(o.r, "--r");
        try {
          (void)permutations::perm_cover_threshold_p(static_cast<unsigned>(n), static_cast<unsigned>(lambda), r);
        } catch (const std::exception&) {
          throw UsageError("--r: threshold probability falls outside [0,1]");
        }
        rec("r", o.r);
      } else {
        need(o.p, "--p");
        check_prob(o.p, "--p");
        rec("p", o.p);
      }
      break;
    }
    case Command::unionfree: {
      const auto n = need(o.n, "--n");
      check(n >= 1 && n <= unionfree::kMaxN, "--n", "must be in [1, 24]");
      need(o.p, "--p");
      check_prob(o.p, "--p");
      rec("n", o.n);
      rec("p", o.p);
      rec.flag("exact_obstacles", o.exact_obstacles);
      break;
    }
    case Command::scan: {
      const auto& model = need(o.model, "--model");
      c.action = model;
      const double lo = need(o.lo, "--lo");
      const double hi = need(o.hi, "--hi");
      const double tol = need(o.tol, "--tol");
      check(tol > 0.0, "--tol", "must be positive");
      if (o.target) check(*o.target > 0.0 && *o.target < 1.0, "--target", "must lie in (0,1)");
      rec.value("model", model);
      if (model == "balls-pack") {
        const auto boxes = need(o.boxes, "--boxes");
        check(boxes >= 1 && boxes <= 0xFFFFFFFFULL, "--boxes", "must be in [1, 2^32-1]");
        check(need(o.lambda, "--lambda") >= 1, "--lambda", "must be >= 1");
        check(lo >= 0 && hi >= 0, "--lo", "ball counts must be non-negative");
        rec("boxes", o.boxes);
        rec("lambda", o.lambda);
      } else {
        check(lo >= 0.0 && lo <= 1.0, "--lo", "must lie in [0,1]");
        check(hi >= 0.0 && hi <= 1.0, "--hi", "must lie in [0,1]");
        const auto n = need(o.n, "--n");
        if (model == "design-cover") {
          check(n <= designs::kMaxN, "--n", "must be <= 30");
          const auto k = need(o.k, "--k");
          const auto t = need(o.t, "--t");
          check(k <= n, "--k", "must be <= n");
          check(t >= 1 && t < k, "--t", "must satisfy 1 <= t < k");
          check(need(o.lambda, "--lambda") >= 1, "--lambda", "must be >= 1");
          rec("n", o.n);
          rec("k", o.k);
          rec("t", o.t);
          rec("lambda", o.lambda);
        } else if (model == "unionfree") {
          check(n >= 1 && n <= unionfree::kMaxN, "--n", "must be in [1, 24]");
          rec("n", o.n);
        } else if (model == "sidon") {
          check(n >= 1 && n <= 10'000'000, "--n", "must be in [1, 10^7]");
          check(need(o.h, "--h") >= 2, "--h", "must be >= 2");
          check(need(o.g, "--g") >= 1, "--g", "must be >= 1");
          rec("n", o.n);
          rec("h", o.h);
          rec("g", o.g);
        } else {
          check(n >= 2 && n <= permutations::kSweepMaxN, "--n", "must be in [2, 9]");
          check(need(o.lambda, "--lambda") >= 1, "--lambda", "must be >= 1");
          rec("n", o.n);
          rec("lambda", o.lambda);
        }
      }
      rec("lo", o.lo);
      rec("hi", o.hi);
      rec.value("target", fmt(o.target.value_or(0.5)));
      rec("tol", o.tol);
      break;
    }
    case Command::verify: {
      if (o.max_n) check(*o.max_n >= 1 && *o.max_n <= permutations::kLemmaMaxN, "--max-n", "must be in [1, 6]");
      rec.value("max_n", std::to_string(o.max_n.value_or(6)));
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Execution

using Json = nlohmann::ordered_json;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
};

struct RunOutput {
  int exit_code = 0;
  std::string document;  // full CSV or JSON text; empty on failure
  Json summary = Json::object();
  std::string error;
};

// Raised for failures that are not usage errors (budget, bracket, failed oracle).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string header_line(const ExperimentConfig& c) {
  std::string s = std::string("# threshold-lab ") + kVersion + " " + to_string(c.command);
  for (const auto& [k, v] : c.parameters) s += " " + k + "=" + v;
  s += " trials=" + std::to_string(c.trials) + " seed=" + std::to_string(c.seed.value);
  return s;
}

inline std::string cell_to_csv(const Json& v) {
  if (v.is_number_float()) return fmt_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  return v.dump();
}

inline std::string render(const ExperimentConfig& c, const Table& table, const Json& summary) {
  if (c.format == OutputFormat::csv) {
    std::string s = header_line(c) + "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) s += (i ? "," : "") + table.columns[i];
    s += "\n";
    for (const auto& row : table.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + cell_to_csv(row[i]);
      s += "\n";
    }
    return s;
  }
  Json doc = Json::object();
  doc["version"] = kVersion;
  doc["command"] = to_string(c.command);
  Json params = Json::object();
  for (const auto& [k, v] : c.parameters) params[k] = v;
  doc["parameters"] = params;
  doc["trials"] = c.trials;
  doc["seed"] = c.seed.value;
  doc["columns"] = table.columns;
  doc["rows"] = table.rows;
  doc["summary"] = summary;
  return doc.dump(2) + "\n";
}

inline Json summary_json(const MonteCarloSummary& s) {
  return Json{{"trials", s.trials}, {"successes", s.successes}, {"estimate", s.estimate},
              {"ci_low", s.ci_low},  {"ci_high", s.ci_high},     {"seed", s.seed.value}};
}

// Appends `trial,X,prop_holds` rows; prop_holds is X == 0.
inline void count_rows(Table& table, Json& summary, const std::vector<std::uint64_t>& xs, MasterSeed seed) {
  table.columns = {"trial", "X", "prop_holds"};
  std::uint64_t zeros = 0;
  double total = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    table.rows.push_back({i, xs[i], xs[i] == 0 ? 1 : 0});
    zeros += xs[i] == 0;
    total += static_cast<double>(xs[i]);
  }
  summary["prop_holds"] = summary_json(summarize(zeros, xs.size(), seed));
  summary["mean_X"] = total / static_cast<double>(xs.size());
}

inline void scan_rows(Table& table, const ThresholdScan& scan) {
  table.columns = {"param", "trials", "successes", "estimate", "ci_low", "ci_high"};
  for (const auto& row : scan.rows) {
    const auto& s = row.summary;
    table.rows.push_back({row.param, s.trials, s.successes, s.estimate, s.ci_low, s.ci_high});
  }
}

inline std::vector<double> default_factors() { return {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}; }

inline void run_balls(const ExperimentConfig& c, Table& table, Json& summary) {
  const auto& o = c.options;
  const std::uint64_t boxes = *o.boxes;
  const std::uint64_t lambda = *o.lambda;
  if (o.waiting) {
    const auto ts = collect_trials([&](TrialStream& s) { return balls::waiting_time(boxes, lambda, s); }, c.trials,
                                   c.seed, c.workers);
    table.columns = {"trial", "T"};
    double mean = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      table.rows.push_back({i, ts[i]});
      mean += static_cast<double>(ts[i]);
    }
    mean /= static_cast<double>(ts.size());
    double var = 0;
    for (auto t : ts) var += (static_cast<double>(t) - mean) * (static_cast<double>(t) - mean);
    var = ts.size() > 1 ? var / static_cast<double>(ts.size() - 1) : 0.0;
    summary["mean_T"] = mean;
    summary["var_T"] = var;
    if (boxes >= 3) {
      const balls::HolstParams hp{boxes, lambda};
      summary["holst_mean"] = balls::holst_mean(hp);
      if (ts.size() >= kGumbelMinSamples) {
        std::vector<double> xs;
        xs.reserve(ts.size());
        for (auto t : ts) xs.push_back(balls::holst_normalize(static_cast<double>(t), hp));
        summary["gumbel_sup_distance"] = gumbel_fit_statistic(std::move(xs));
      }
    }
    return;
  }
  const std::uint64_t n_balls = *o.balls;
  const auto xs = collect_trials([&](TrialStream& s) { return balls::overfull_after_throw(n_balls, boxes, lambda, s); },
                                 c.trials, c.seed, c.workers);
  count_rows(table, summary, xs, c.seed);
  summary["packing_threshold_n"] = balls::packing_threshold_n(boxes, lambda);
}

inline designs::DesignParams design_params(const Options& o) {
  return {static_cast<unsigned>(*o.n), static_cast<unsigned>(*o.k), static_cast<unsigned>(*o.t),
          static_cast<unsigned>(*o.lambda)};
}

inline void run_design(const ExperimentConfig& c, Table& table, Json& summary) {
  const auto& o = c.options;
  const auto dp = design_params(o);
  const bool cover = *o.mode == "cover";
  const double p = o.r ? designs::covering_threshold_p(dp, *o.r) : *o.p;
  const auto mode = cover ? designs::DesignMode::cover : designs::DesignMode::pack;
  const auto xs =
      collect_trials([&](TrialStream& s) { return designs::design_trial(dp, p, mode, s); }, c.trials, c.seed, c.workers);
  count_rows(table, summary, xs, c.seed);
  summary["p"] = p;
  if (cover) {
    const double mu = designs::expected_deficient(dp, p);
    summary["expected_X"] = mu;
    if (mu > 0.0) summary["poisson_tv"] = poisson_tv_distance(make_histogram(xs), mu);
  } else {
    summary["packing_threshold_p"] = designs::packing_threshold_p(dp);
  }
}

inline double sidon_check_p(const Options& o) { return o.p ? *o.p : static_cast<double>(*o.k) / static_cast<double>(*o.n); }

inline void run_sidon(const ExperimentConfig& c, Table& table, Json& summary) {
  const auto& o = c.options;
  const auto n = static_cast<std::uint32_t>(*o.n);
  const auto h = static_cast<unsigned>(*o.h);
  const auto g = static_cast<unsigned>(*o.g);
  if (c.action == "enum-bhg") {
    table.columns = {"n", "l", "count"};
    const auto profile = sidon::enumerate_Bhg_profile(n, h, g);
    for (unsigned l = g + 1; l < profile.size(); ++l) {
      if (!o.l || *o.l == l) table.rows.push_back({n, l, profile[l]});
    }
    if (o.l && (*o.l < g + 1 || *o.l >= profile.size())) table.rows.push_back({n, *o.l, 0});
    return;
  }
  if (c.action == "scan") {
    const double k_star = sidon::sidon_threshold_k(n, h, g);
    const auto factors = o.factors.empty() ? default_factors() : o.factors;
    ThresholdScan scan;
    scan.seed = c.seed;
    std::vector<double> sorted = factors;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double k = sorted[i] * k_star;
      const double p = std::min(1.0, k / n);
      const MasterSeed probe_seed = derive_seed(c.seed, i, kBisectSeedDomain);
      auto trial = [&](TrialStream& s) { return sidon::is_Bh_g(sidon::sample_bernoulli_positive(n, p, s), h, g); };
      scan.rows.push_back({k, run_trials(trial, c.trials, probe_seed, c.workers)});
    }
    scan_rows(table, scan);
    summary["threshold_k"] = k_star;
    return;
  }
  if (c.action == "check") {
    const bool uniform = o.model && *o.model == "uniform";
    const double p = uniform ? 0.0 : sidon_check_p(o);
    const auto maxes = collect_trials(
        [&](TrialStream& s) {
          const auto a = uniform ? sidon::sample_uniform_positive(n, static_cast<std::uint32_t>(*o.k), s)
                                 : sidon::sample_bernoulli_positive(n, p, s);
          return sidon::max_representation_count(a, h);
        },
        c.trials, c.seed, c.workers);
    table.columns = {"trial", "max_rep_count", "prop_holds"};
    std::uint64_t holds = 0;
    for (std::size_t i = 0; i < maxes.size(); ++i) {
      const bool ok = maxes[i] <= g;
      holds += ok;
      table.rows.push_back({i, maxes[i], ok ? 1 : 0});
    }
    summary["prop_holds"] = summary_json(summarize(holds, maxes.size(), c.seed));
    summary["threshold_k"] = sidon::sidon_threshold_k(n, h, g);
    return;
  }
  // basis
  const sidon::SidonParams sp{h, g, *o.alpha};
  const double p = sidon::basis_threshold_p(n, sp, *o.a_shift);
  const auto target = sidon::truncated_target(n, h, sp.alpha);
  const auto mins = collect_trials(
      [&](TrialStream& s) -> std::uint64_t {
        if (target.empty()) return std::numeric_limits<std::uint32_t>::max();
        const auto a = sidon::sample_bernoulli_with_zero(n, p, s);
        const auto table = sidon::representation_counts(a, h);
        std::uint64_t lowest = std::numeric_limits<std::uint64_t>::max();
        for (auto v = target.lo; v <= target.hi; ++v) lowest = std::min(lowest, table.at(static_cast<std::uint64_t>(v)));
        return lowest;
      },
      c.trials, c.seed, c.workers);
  table.columns = {"trial", "min_rep_count", "prop_holds"};
  std::uint64_t holds = 0;
  for (std::size_t i = 0; i < mins.size(); ++i) {
    const bool ok = mins[i] >= g;
    holds += ok;
    table.rows.push_back({i, mins[i], ok ? 1 : 0});
  }
  summary["p"] = p;
  summary["prop_holds"] = summary_json(summarize(holds, mins.size(), c.seed));
  summary["limit_probability"] = sidon::truncated_basis_limit(sp, *o.a_shift);
}

inline void lemma_rows(Table& table, Json& summary, unsigned max_n, unsigned pair_max_n) {
  table.columns = {"n",          "perms",        "min_cover", "max_cover", "cover_expected", "max_neighborhood",
                   "neighborhood_bound", "max_joint", "joint_bound", "ok"};
  bool all_ok = true;
  for (unsigned n = 1; n <= max_n; ++n) {
    const auto rep = permutations::verify_lemmas_for(n, pair_max_n);
    all_ok = all_ok && rep.ok();
    table.rows.push_back({n, permutations::factorial(n), rep.min_cover, rep.max_cover, std::uint64_t{n} * n + 1,
                          rep.neighborhood_checked ? Json(rep.max_neighborhood) : Json("-"),
                          std::uint64_t{n} * n * n, rep.joint_checked ? Json(rep.max_joint) : Json("-"), 4,
                          rep.ok() ? 1 : 0});
  }
  summary["all_ok"] = all_ok;
}

inline void run_perm(const ExperimentConfig& c, Table& table, Json& summary) {
  const auto& o = c.options;
  if (c.action == "verify-lemmas") {
    const auto max_n = static_cast<unsigned>(o.max_n.value_or(5));
    lemma_rows(table, summary, max_n, std::min(max_n, 5U));
    return;
  }
  const auto n = static_cast<unsigned>(*o.n);
  const auto lambda = static_cast<unsigned>(*o.lambda);
  const bool cover = c.action == "cover";
  const double p = cover ? permutations::perm_cover_threshold_p(n, lambda, *o.r) : *o.p;
  const auto xs = collect_trials(
      [&](TrialStream& s) {
        const auto counts = permutations::sample_cover_counts(n, p, s);
        return cover ? counts.deficient(lambda) : counts.overfull(lambda);
      },
      c.trials, c.seed, c.workers);
  count_rows(table, summary, xs, c.seed);
  summary["p"] = p;
  if (!cover) {
    const auto w = permutations::perm_packing_thresholds(n, lambda);
    summary["p_low"] = w.p_low;
    summary["p_high"] = w.p_high;
  }
}

inline void run_unionfree(const ExperimentConfig& c, Table& table, Json& summary) {
  const auto& o = c.options;
  const auto n = static_cast<unsigned>(*o.n);
  const double p = *o.p;
  const auto xs = collect_trials(
      [&](TrialStream& s) { return unionfree::find_union_collisions(unionfree::sample_power_set_family(n, p, s)); },
      c.trials, c.seed, c.workers);
  count_rows(table, summary, xs, c.seed);
  summary["wuf_threshold_p"] = unionfree::wuf_threshold_p(n);
  if (o.exact_obstacles) {
    const bool exact = n <= unionfree::kBruteForceMaxN;
    const double obstacles = exact ? static_cast<double>(unionfree::brute_force_obstacles(n))
                                   : static_cast<double>(unionfree::obstacle_count_formula(n));
    summary["obstacles"] = exact ? std::to_string(unionfree::brute_force_obstacles(n))
                                 : unionfree::to_string(unionfree::obstacle_count_formula(n));
    summary["obstacles_exact"] = exact;
    summary["expected_X"] = std::pow(p, 4) * obstacles;
  }
}

inline void run_scan(const ExperimentConfig& c, Table& table, Json& summary) {
  const auto& o = c.options;
  const double target = o.target.value_or(0.5);
  const std::string& model = c.action;
  if (!(*o.lo < *o.hi)) {
    throw BracketViolation("bracket violation: --lo " + fmt_double(*o.lo) + " is not below --hi " + fmt_double(*o.hi));
  }
  ThresholdScan scan;
  if (model == "design-cover") {
    const auto dp = design_params(o);
    auto exp = [&](double p, TrialStream& s) { return designs::design_trial(dp, p, designs::DesignMode::cover, s) == 0; };
    scan = threshold_bisect(exp, *o.lo, *o.hi, target, c.trials, *o.tol, c.seed, Monotone::increasing, c.workers);
    summary["formula_p"] = designs::covering_threshold_p(dp, 0.0);
  } else if (model == "unionfree") {
    const auto n = static_cast<unsigned>(*o.n);
    auto exp = [&](double p, TrialStream& s) {
      return unionfree::is_weakly_union_free(unionfree::sample_power_set_family(n, p, s));
    };
    scan = threshold_bisect(exp, *o.lo, *o.hi, target, c.trials, *o.tol, c.seed, Monotone::decreasing, c.workers);
    summary["formula_p"] = unionfree::wuf_threshold_p(n);
  } else if (model == "sidon") {
    const auto n = static_cast<std::uint32_t>(*o.n);
    const auto h = static_cast<unsigned>(*o.h);
    const auto g = static_cast<unsigned>(*o.g);
    auto exp = [&](double p, TrialStream& s) { return sidon::is_Bh_g(sidon::sample_bernoulli_positive(n, p, s), h, g); };
    scan = threshold_bisect(exp, *o.lo, *o.hi, target, c.trials, *o.tol, c.seed, Monotone::decreasing, c.workers);
    summary["formula_p"] = sidon::sidon_threshold_k(n, h, g) / n;
  } else if (model == "perm-cover") {
    const auto n = static_cast<unsigned>(*o.n);
    const auto lambda = static_cast<unsigned>(*o.lambda);
    auto exp = [&](double p, TrialStream& s) { return permutations::sample_cover_counts(n, p, s).deficient(lambda) == 0; };
    scan = threshold_bisect(exp, *o.lo, *o.hi, target, c.trials, *o.tol, c.seed, Monotone::increasing, c.workers);
    summary["formula_p"] = permutations::perm_cover_threshold_p(n, lambda, 0.0);
  } else {
    const std::uint64_t boxes = *o.boxes;
    const std::uint64_t lambda = *o.lambda;
    auto exp = [&](double balls, TrialStream& s) {
      return balls::overfull_after_throw(static_cast<std::uint64_t>(std::llround(balls)), boxes, lambda, s) == 0;
    };
    scan = threshold_bisect(exp, *o.lo, *o.hi, target, c.trials, *o.tol, c.seed, Monotone::decreasing, c.workers);
    summary["formula_n"] = balls::packing_threshold_n(boxes, lambda);
  }
  scan_rows(table, scan);
  summary["p_half"] = scan.p_half;
  summary["tol"] = scan.tol;
  summary["seed"] = scan.seed.value;
}

// Exact oracle checks that need no sampling beyond the random-family
// cross-check.
inline void run_verify(const ExperimentConfig& c, Table& table, Json& summary) {
  table.columns = {"check", "value", "expected", "ok"};
  bool all_ok = true;
  auto add = [&](std::string name, std::string value, std::string expected, bool ok) {
    all_ok = all_ok && ok;
    table.rows.push_back({std::move(name), std::move(value), std::move(expected), ok ? 1 : 0});
  };
  const auto max_n = static_cast<unsigned>(c.options.max_n.value_or(6));
  for (unsigned n = 1; n <= max_n; ++n) {
    const auto rep = permutations::verify_lemmas_for(n, 5);
    const std::string tag = "n=" + std::to_string(n);
    add("covering_set_size " + tag, std::to_string(rep.min_cover) + ".." + std::to_string(rep.max_cover),
        std::to_string(n * n + 1), rep.cover_ok());
    if (rep.neighborhood_checked) {
      add("neighborhood_max " + tag, std::to_string(rep.max_neighborhood), "<=" + std::to_string(n * n * n),
          rep.neighborhood_ok());
      add("joint_cover_max " + tag, std::to_string(rep.max_joint), "<=4", rep.joint_ok());
    }
  }
  for (unsigned k = 1; k <= 12; ++k) {
    const auto pairs = unionfree::determining_pairs((unionfree::Mask{1} << k) - 1);
    std::uint64_t pow3 = 1;
    for (unsigned i = 0; i < k; ++i) pow3 *= 3;
    add("determining_pairs k=" + std::to_string(k), std::to_string(pairs.size()), std::to_string((pow3 - 3) / 2),
        pairs.size() == (pow3 - 3) / 2);
  }
  add("obstacle_formula n=3", unionfree::to_string(unionfree::obstacle_count_formula(3)), "66",
      unionfree::obstacle_count_formula(3) == 66);
  const double ratio = static_cast<double>(unionfree::obstacle_count_formula(20)) / (std::pow(10.0, 20) / 8.0);
  add("obstacle_formula_ratio n=20", fmt_double(ratio), "[0.9,1.0]", ratio >= 0.9 && ratio <= 1.0);
  for (unsigned n = 2; n <= unionfree::kBruteForceMaxN; ++n) {
    const auto bf = unionfree::brute_force_obstacles(n);
    std::vector<unionfree::Mask> all(std::size_t{1} << n);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<unionfree::Mask>(i);
    const auto fast = unionfree::find_union_collisions(unionfree::SetFamily(n, all));
    add("power_set_collisions n=" + std::to_string(n), std::to_string(fast), std::to_string(bf), fast == bf);
  }
  constexpr std::uint64_t kFamilies = 10'000;
  const auto agree = collect_trials(
      [](TrialStream& s) -> std::uint8_t {
        const auto n = static_cast<unsigned>(1 + s.below(5));
        const auto size = static_cast<std::size_t>(s.below(9));
        const auto family = unionfree::SetFamily(n, [&] {
          std::vector<unionfree::Mask> v;
          for (std::size_t i = 0; i < size; ++i) v.push_back(static_cast<unionfree::Mask>(s.below(std::uint64_t{1} << n)));
          return v;
        }());
        const auto fast = unionfree::find_union_collisions(family);
        return fast == unionfree::union_collisions_bruteforce(family.members()) &&
               (fast == 0) == unionfree::is_weakly_union_free(family);
      },
      kFamilies, c.seed, c.workers);
  const auto agreeing = static_cast<std::uint64_t>(std::count(agree.begin(), agree.end(), 1));
  add("union_collisions_vs_bruteforce", std::to_string(agreeing), std::to_string(kFamilies), agreeing == kFamilies);
  summary["all_ok"] = all_ok;
}

inline std::string summary_text(const Json& summary) {
  std::string s;
  for (const auto& [k, v] : summary.items()) {
    if (v.is_object()) {
      for (const auto& [k2, v2] : v.items()) s += (s.empty() ? "" : " ") + k + "." + k2 + "=" + cell_to_csv(v2);
    } else {
      s += (s.empty() ? "" : " ") + k + "=" + cell_to_csv(v);
    }
  }
  return s;
}

}  // namespace detail

// Runs the experiment and renders the document in memory.
inline RunOutput execute(const ExperimentConfig& c) {
  RunOutput result;
  Table table;
  try {
    switch (c.command) {
      case Command::balls: detail::run_balls(c, table, result.summary); break;
      case Command::design: detail::run_design(c, table, result.summary); break;
      case Command::sidon: detail::run_sidon(c, table, result.summary); break;
      case Command::perm: detail::run_perm(c, table, result.summary); break;
      case Command::unionfree: detail::run_unionfree(c, table, result.summary); break;
      case Command::scan: detail::run_scan(c, table, result.summary); break;
      case Command::verify: detail::run_verify(c, table, result.summary); break;
    }
  } catch (const std::exception& e) {
    result.exit_code = 1;
    result.error = e.what();
    return result;
  }
  result.document = detail::render(c, table, result.summary);
  if (result.summary.contains("all_ok") && !result.summary["all_ok"].get<bool>()) {
    result.exit_code = 1;
    result.error = "one or more oracle checks failed";
  }
  return result;
}

// Writes via a temporary file in the same directory, then renames.
inline void write_atomically(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f << text;
    f.flush();
    if (!f) {
      f.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw std::runtime_error("cannot move output into place at " + path);
  }
}

// Executes and emits: document to --out (or stdout), summary line to err.
inline int run(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  RunOutput result = execute(c);
  if (result.document.empty()) {
    err << "threshold-lab: error: " << result.error << "\n";
    return result.exit_code == 0 ? 1 : result.exit_code;
  }
  try {
    if (c.out) {
      write_atomically(*c.out, result.document);
    } else {
      out << result.document;
      out.flush();
    }
  } catch (const std::exception& e) {
    err << "threshold-lab: error: " << e.what() << "\n";
    return 1;
  }
  err << "threshold-lab " << to_string(c.command) << (c.action.empty() ? "" : " " + c.action) << ": "
      << detail::summary_text(result.summary) << "\n";
  if (result.exit_code != 0) err << "threshold-lab: error: " << result.error << "\n";
  return result.exit_code;
}

inline int main_entry(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  ExperimentConfig config;
  try {
    config = parse_args(args);
  } catch (const HelpRequested& h) {
    out << h.what();
    return 0;
  } catch (const UsageError& e) {
    err << "threshold-lab: usage error: " << e.what() << "\n"
        << "Run with --help for more information.\n";
    return 2;
  }
  return run(config, out, err);
}

}  // namespace threshold_lab::cli
