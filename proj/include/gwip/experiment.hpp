#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gwip/errors.hpp"
#include "gwip/invasion.hpp"
#include "gwip/measures.hpp"
#include "gwip/offspring.hpp"
#include "gwip/pivot_chain.hpp"
#include "gwip/stats.hpp"
#include "gwip/survival.hpp"
#include "gwip/tree.hpp"

namespace gwip {

inline std::string fmt_g(double x, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
  return buf;
}

// Flat key = value configuration; values run to the end of the line, so
// distribution specs with their own commas and equals signs pass through
// verbatim. Lists use the syntax the owning key documents (a:b:step grids,
// comma-separated integer lists). No nesting.
class ExperimentConfig {
 public:
  std::string experiment;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }

  bool has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    return fallback;
  }

  std::string require_string(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    throw std::invalid_argument("config: missing required key '" + key + "' for experiment '" +
                                experiment + "'");
  }

  int64_t get_int(const std::string& key, int64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = require_string(key);
    try {
      size_t pos = 0;
      int64_t out = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = require_string(key);
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    try {
      size_t pos = 0;
      double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
    }
  }

  int64_t require_positive_int(const std::string& key, int64_t fallback) const {
    int64_t v = get_int(key, fallback);
    if (v <= 0)
      throw std::invalid_argument("config: key '" + key + "' must be positive, got " +
                                  std::to_string(v));
    return v;
  }

  uint64_t seed() const { return static_cast<uint64_t>(get_int("seed", 1)); }

  OffspringDistribution dist() const {
    return OffspringDistribution::parse(get_string("dist", "family=deterministic, b=2"));
  }

  int threads() const {
    int64_t t = get_int("threads", 0);
    if (t < 0) throw std::invalid_argument("config: threads must be >= 0");
    if (t == 0) t = std::max(1u, std::thread::hardware_concurrency());
    return static_cast<int>(t);
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  static ExperimentConfig from_stream(std::istream& is) {
    ExperimentConfig cfg;
    std::string line;
    while (std::getline(is, line)) {
      size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty()) continue;
      if (key == "experiment")
        cfg.experiment = value;
      else
        cfg.set(key, value);
    }
    return cfg;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Uniform tabular result; rendered as CSV or a JSON mirror of the same
// cells. Verdict rows (validate-style experiments) carry pass/fail.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> summary;  // emitted as trailing comment lines
  bool has_verdict = false;
  bool pass = true;
};

// Deterministic replicate fan-out: replicate i derives stream id
// mix_key(master_seed, i) and writes into slot i, so the aggregate is
// independent of scheduling.
template <typename F>
inline void parallel_for(size_t n, int threads, F&& body) {
  if (threads <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  size_t workers = std::min<size_t>(threads, n);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

namespace experiments {

inline std::vector<double> parse_grid(const std::string& text) {
  // a:b:step inclusive-ish grid
  double a, b, step;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &a, &b, &step) != 3 || step <= 0.0)
    throw std::invalid_argument("config: grid expects a:b:step with step > 0, got '" + text + "'");
  std::vector<double> grid;
  for (double x = a; x <= b + 1e-12; x += step) grid.push_back(std::min(x, b));
  if (grid.empty()) throw std::invalid_argument("config: empty grid '" + text + "'");
  return grid;
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw std::invalid_argument("config: empty integer list '" + text + "'");
  return out;
}

inline Table survival(const ExperimentConfig& cfg) {
  SurvivalSolver solver(cfg.dist());
  auto grid = parse_grid(cfg.get_string("p_grid", "0.5:0.999:0.01"));
  Table t;
  t.columns = {"p", "g", "g_prime"};
  for (double p : grid) {
    double g = solver.g(p);
    double gp = (p > solver.p_c() && p < 1.0) ? solver.g_prime(p) : 0.0;
    t.rows.push_back({fmt_g(p), fmt_g(g), fmt_g(gp)});
  }
  return t;
}

inline Table invade_run(const ExperimentConfig& cfg) {
  TreeArena arena(cfg.dist(), cfg.seed());
  size_t steps = static_cast<size_t>(cfg.require_positive_int("steps", 10000));
  InvasionRun run = invade(arena, steps);
  Table t;
  t.columns = {"step", "nodeid", "depth", "u_weight"};
  for (size_t i = 0; i < run.invaded.size(); ++i) {
    const auto& s = run.invaded[i];
    t.rows.push_back({std::to_string(i), std::to_string(s.node),
                      std::to_string(arena.depth(s.node)), fmt_g(s.weight, 17)});
  }
  return t;
}

inline Table backbone_run(const ExperimentConfig& cfg) {
  TreeArena arena(cfg.dist(), cfg.seed());
  size_t steps = static_cast<size_t>(cfg.require_positive_int("steps", 50000));
  CertificationPolicy policy;
  policy.depth_cap = static_cast<int>(cfg.require_positive_int("depth_cap", 25));
  policy.tol = cfg.get_double("tol", 0.02);
  InvasionRun run = invade(arena, steps);
  BackboneTrace trace = backbone(run, arena, policy);
  Table t;
  t.columns = {"n", "h_n", "h_star_n", "beta_lower", "beta_upper"};
  for (size_t n = 0; n < trace.path.size(); ++n) {
    t.rows.push_back({std::to_string(n), fmt_g(trace.h[n]), fmt_g(trace.h_star[n]),
                      fmt_g(trace.beta_lower[n]), fmt_g(trace.beta_upper[n])});
  }
  t.summary.push_back("certified_len = " + std::to_string(trace.certified_len));
  if (!trace.diagnostic.empty()) t.summary.push_back("diagnostic = " + trace.diagnostic);
  return t;
}

inline Table pivot_chain_run(const ExperimentConfig& cfg) {
  SurvivalSolver solver(cfg.dist());
  PivotKernel kernel(solver);
  int n = static_cast<int>(cfg.require_positive_int("n", 500));
  int replicates = static_cast<int>(cfg.require_positive_int("replicates", 1000));
  bool joint = cfg.get_int("joint", 0) != 0;
  double h0 = cfg.get_double("h0", PivotKernel::kSampleFromInitialLaw);
  uint64_t seed = cfg.seed();
  std::vector<std::vector<std::string>> rows(replicates);
  parallel_for(replicates, cfg.threads(), [&](size_t r) {
    ChainPath path = run_chain(kernel, h0, n, mix_key(seed, r), joint);
    std::vector<std::string> row{std::to_string(r), fmt_g(path.h.back())};
    if (joint) row.push_back(fmt_g(path.h_star.back()));
    rows[r] = std::move(row);
  });
  Table t;
  t.columns = joint ? std::vector<std::string>{"replicate", "h_n", "h_star_n"}
                    : std::vector<std::string>{"replicate", "h_n"};
  t.rows = std::move(rows);
  return t;
}

inline Table exp_limit(const ExperimentConfig& cfg) {
  SurvivalSolver solver(cfg.dist());
  PivotKernel kernel(solver);
  int n = static_cast<int>(cfg.require_positive_int("n", 500));
  int replicates = static_cast<int>(cfg.require_positive_int("replicates", 4000));
  double mu = solver.constants().mu;
  uint64_t seed = cfg.seed();
  std::vector<double> samples(replicates);
  parallel_for(replicates, cfg.threads(), [&](size_t r) {
    ChainPath path = run_chain(kernel, PivotKernel::kSampleFromInitialLaw, n, mix_key(seed, r));
    samples[r] = n * path.h.back();
  });
  auto cdf = [mu](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-mu * x); };
  EcdfSummary summary = ecdf_vs_analytic(samples, cdf);
  Table t;
  t.columns = {"x", "empirical_cdf", "analytic_cdf", "ks"};
  size_t stride = std::max<size_t>(1, summary.sorted.size() / 200);
  for (size_t i = 0; i < summary.sorted.size(); i += stride) {
    t.rows.push_back({fmt_g(summary.sorted[i]), fmt_g(double(i + 1) / summary.sorted.size()),
                      fmt_g(summary.analytic[i]), fmt_g(summary.ks)});
  }
  t.summary.push_back("ks = " + fmt_g(summary.ks));
  return t;
}

inline Table lpe_run(const ExperimentConfig& cfg) {
  int replicates = static_cast<int>(cfg.require_positive_int("replicates", 100000));
  double t_max = cfg.get_double("t_max", 1.0);
  uint64_t seed = cfg.seed();
  std::vector<double> samples(replicates);
  parallel_for(replicates, cfg.threads(), [&](size_t r) {
    samples[r] = lpe_sample(t_max, mix_key(seed, r)).value_at(t_max);
  });
  // L_1(t) = 1 ^ L(t): P[L_1(t) <= x] = 1 - e^{-t x} for x < 1, and 1 at 1.
  auto cdf = [t_max](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return 1.0 - std::exp(-t_max * x);
  };
  EcdfSummary summary = ecdf_vs_analytic(samples, cdf);
  Table t;
  t.columns = {"x", "empirical_cdf", "analytic_cdf", "ks"};
  size_t stride = std::max<size_t>(1, summary.sorted.size() / 200);
  for (size_t i = 0; i < summary.sorted.size(); i += stride) {
    t.rows.push_back({fmt_g(summary.sorted[i]), fmt_g(double(i + 1) / summary.sorted.size()),
                      fmt_g(summary.analytic[i]), fmt_g(summary.ks)});
  }
  t.summary.push_back("ks = " + fmt_g(summary.ks));
  return t;
}

inline Table dual_decay(const ExperimentConfig& cfg) {
  SurvivalSolver solver(cfg.dist());
  PivotKernel kernel(solver);
  double t_exp = cfg.get_double("t", 0.75);
  if (!(t_exp > 0.5 && t_exp < 1.0))
    throw std::invalid_argument("config: dual-decay exponent t must lie in (1/2, 1)");
  auto n_grid = parse_int_list(cfg.get_string("n_grid", "50,100,200,400"));
  int replicates = static_cast<int>(cfg.require_positive_int("replicates", 10000));
  auto rows = dual_decay_experiment(kernel, t_exp, n_grid, replicates, cfg.seed());
  Table t;
  t.columns = {"n", "threshold", "p_hat", "wilson_lo", "wilson_hi"};
  std::vector<WilsonInterval> cis;
  for (const auto& row : rows) {
    t.rows.push_back({std::to_string(row.n), fmt_g(row.threshold),
                      fmt_g(double(row.exceed) / double(row.total)), fmt_g(row.ci.lo),
                      fmt_g(row.ci.hi)});
    cis.push_back(row.ci);
  }
  t.summary.push_back(std::string("strictly_decreasing = ") +
                      (trend_decreasing(cis) ? "true" : "false"));
  return t;
}

inline Table kl_series(const ExperimentConfig& cfg) {
  auto dist = cfg.dist();
  SurvivalSolver solver(dist);
  AcOptions opt;
  opt.trees = static_cast<int>(cfg.require_positive_int("trees", 30));
  opt.n_max = static_cast<int>(cfg.require_positive_int("n_max", 12));
  opt.reference_steps = static_cast<size_t>(cfg.require_positive_int("steps", 30000));
  opt.proxy_depth = static_cast<int>(cfg.require_positive_int("proxy_depth", 10));
  opt.inner.replicates = static_cast<int>(cfg.require_positive_int("replicates", 400));
  opt.inner.steps = static_cast<size_t>(cfg.require_positive_int("inner_steps", 3000));
  opt.inner.frontier_depth = static_cast<int>(cfg.require_positive_int("prefix_depth", 12));
  opt.seed = cfg.seed();
  auto rows = ac_diagnostic(dist, solver, opt);
  Table t;
  t.columns = {"n", "EX_n", "se", "partial_sum"};
  for (const auto& row : rows)
    t.rows.push_back({std::to_string(row.n), fmt_g(row.ex), fmt_g(row.se),
                      fmt_g(row.partial_sum)});
  return t;
}

inline Table thm1_check(const ExperimentConfig& cfg) {
  double p = cfg.get_double("p", std::numeric_limits<double>::infinity());
  double p1 = cfg.get_double("p1", 0.0);
  double mu = cfg.get_double("mu", 2.0);
  TheoremCondition cond = main_theorem_condition(p, p1, mu);
  Table t;
  t.columns = {"holds", "margin", "q"};
  t.rows.push_back({cond.holds ? "true" : "false", fmt_g(cond.margin), fmt_g(cond.q)});
  t.has_verdict = true;
  t.pass = true;  // evaluating the predicate always succeeds; the verdict is the row
  return t;
}

}  // namespace experiments

inline std::string render_csv(const ExperimentConfig& cfg, const Table& t) {
  std::string out;
  out += "# gwip " + cfg.experiment + "\n";
  out += "# seed = " + std::to_string(cfg.seed()) + "\n";
  for (const auto& [k, v] : cfg.entries())
    if (k != "seed" && k != "threads") out += "# " + k + " = " + v + "\n";  // threads is an execution knob
  for (size_t c = 0; c < t.columns.size(); ++c)
    out += t.columns[c] + (c + 1 < t.columns.size() ? "," : "\n");
  for (const auto& row : t.rows) {
    for (size_t c = 0; c < row.size(); ++c) out += row[c] + (c + 1 < row.size() ? "," : "");
    out += "\n";
  }
  for (const auto& line : t.summary) out += "# " + line + "\n";
  return out;
}

inline std::string render_json(const ExperimentConfig& cfg, const Table& t) {
  nlohmann::ordered_json j;
  j["experiment"] = cfg.experiment;
  j["seed"] = cfg.seed();
  nlohmann::ordered_json echo = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.entries())
    if (k != "threads") echo[k] = v;
  j["config"] = echo;
  j["columns"] = t.columns;
  j["rows"] = t.rows;
  j["summary"] = t.summary;
  if (t.has_verdict) j["pass"] = t.pass;
  return j.dump(2) + "\n";
}

struct ExperimentOutcome {
  std::string report;
  bool pass = true;
};

// Dispatches a config to the owning module and renders the report.
// validate-all lives in validate.hpp and is wired up by the CLI.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  Table t;
  if (cfg.experiment == "survival") {
    t = experiments::survival(cfg);
  } else if (cfg.experiment == "invade") {
    t = experiments::invade_run(cfg);
  } else if (cfg.experiment == "backbone") {
    t = experiments::backbone_run(cfg);
  } else if (cfg.experiment == "pivot-chain") {
    t = experiments::pivot_chain_run(cfg);
  } else if (cfg.experiment == "exp-limit") {
    t = experiments::exp_limit(cfg);
  } else if (cfg.experiment == "lpe") {
    t = experiments::lpe_run(cfg);
  } else if (cfg.experiment == "dual-decay") {
    t = experiments::dual_decay(cfg);
  } else if (cfg.experiment == "kl") {
    t = experiments::kl_series(cfg);
  } else if (cfg.experiment == "thm1-check") {
    t = experiments::thm1_check(cfg);
  } else {
    throw std::invalid_argument(
        "unknown experiment '" + cfg.experiment +
        "' (expected one of: survival invade backbone pivot-chain exp-limit lpe dual-decay kl "
        "thm1-check validate-all)");
  }
  ExperimentOutcome out;
  std::string emit = cfg.get_string("emit", "csv");
  if (emit == "csv") {
    out.report = render_csv(cfg, t);
  } else if (emit == "json") {
    out.report = render_json(cfg, t);
  } else {
    throw std::invalid_argument("config: emit must be csv or json, got '" + emit + "'");
  }
  out.pass = t.pass;
  return out;
}

}  // namespace gwip
