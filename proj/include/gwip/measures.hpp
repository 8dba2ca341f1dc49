#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gwip/errors.hpp"
#include "gwip/invasion.hpp"
#include "gwip/stats.hpp"
#include "gwip/survival.hpp"
#include "gwip/tree.hpp"

namespace gwip {

// Limit-uniform split at the view root: p(v_i) proportional to the
// depth-D martingale mass through child i. Exact in the D -> infinity
// limit by the martingale decomposition; D is a proxy knob every caller
// states explicitly.
inline std::vector<double> split_p(TreeView view, int proxy_depth) {
  std::vector<double> w = martingale_child_split(view, proxy_depth);
  double total = 0.0;
  for (double x : w) total += x;
  GWIP_ASSERT(total > 0.0);
  for (double& x : w) x /= total;
  return w;
}

struct QSplitOptions {
  int replicates = 400;
  size_t steps = 3000;
  int frontier_depth = 12;
  CertificationPolicy policy;
  uint64_t seed = 1;
  double min_certification_rate = 0.8;
  // When positive, keep drawing replicates (up to 10x) until this many pass
  // the conditioning rejection; equalizes the effective sample size across
  // conditioning levels.
  int min_accepted = 0;
};

struct QSplitResult {
  std::vector<uint64_t> counts;   // per child of the view root
  std::vector<double> q_hat;      // counts / certified
  std::vector<double> se;         // Wilson-width/2z proxy standard errors
  uint64_t certified = 0;
  uint64_t attempted = 0;
  double certification_rate = 0.0;
};

namespace detail {

inline QSplitResult q_split_over_template(const OffspringDistribution& dist,
                                          std::shared_ptr<const PrefixTemplate> tmpl,
                                          uint32_t root_deg, const QSplitOptions& opt,
                                          double conditioning_p) {
  QSplitResult res;
  res.counts.assign(root_deg, 0);
  uint64_t accepted = 0;
  int attempts_cap = opt.min_accepted > 0 ? opt.replicates * 10 : opt.replicates;
  int attempts = 0;
  for (int r = 0; r < attempts_cap; ++r) {
    if (opt.min_accepted > 0 && accepted >= static_cast<uint64_t>(opt.min_accepted)) break;
    ++attempts;
    TreeArena rep(dist, mix_key(opt.seed, static_cast<uint64_t>(r)), tmpl,
                  /*pin_weights=*/false);
    if (conditioning_p < 1.0) {
      // Rejection step: accept the replicate when percolation at the
      // conditioning level reaches 2*depth_cap, the finite certificate
      // for beta(root) <= p.
      uint32_t target = 2 * static_cast<uint32_t>(opt.policy.depth_cap);
      std::vector<NodeId> stack{rep.root()};
      bool reached = false;
      while (!stack.empty() && !reached) {
        NodeId v = stack.back();
        stack.pop_back();
        auto [first, deg] = rep.expand(v);
        for (uint32_t j = 0; j < deg; ++j) {
          NodeId c = first + j;
          if (rep.weight(c) > conditioning_p) continue;
          if (rep.depth(c) >= target) {
            reached = true;
            break;
          }
          stack.push_back(c);
        }
      }
      if (!reached) continue;
    }
    ++accepted;
    InvasionRun run = invade(rep, opt.steps);
    CertificationPolicy policy = opt.policy;
    policy.max_certified_len = 1;  // only the first backbone step is consumed
    BackboneTrace trace = backbone(run, rep, policy);
    if (trace.certified_len < 1) continue;
    uint32_t j = trace.path[1] - rep.child(rep.root(), 0);
    GWIP_ASSERT(j < root_deg);
    ++res.counts[j];
    ++res.certified;
  }
  res.attempted = static_cast<uint64_t>(attempts);
  if (conditioning_p < 1.0) {
    double acc_rate = double(accepted) / double(attempts);
    if (acc_rate < 0.01)
      throw inconclusive_error("conditioning acceptance rate too low (p too close to p_c)",
                               acc_rate);
  }
  res.certification_rate = accepted > 0 ? double(res.certified) / double(accepted) : 0.0;
  if (res.certification_rate < opt.min_certification_rate)
    throw inconclusive_error("backbone certification rate too low for quenched split",
                             res.certification_rate);
  res.q_hat.resize(root_deg);
  res.se.resize(root_deg);
  for (uint32_t j = 0; j < root_deg; ++j) {
    res.q_hat[j] = double(res.counts[j]) / double(res.certified);
    auto ci = wilson_ci(res.counts[j], res.certified, 1.0);
    res.se[j] = 0.5 * (ci.hi - ci.lo);
  }
  return res;
}

}  // namespace detail

// Quenched invasion split at the view root: the tree prefix (offspring
// counts to frontier_depth) is frozen, weights are redrawn per replicate
// with fresh Galton-Watson continuations below the frontier, and q_hat(v)
// is the fraction of certified backbones through child v.
inline QSplitResult split_q_mc(TreeView view, const QSplitOptions& opt) {
  TreeArena& arena = view.arena();
  auto tmpl = std::make_shared<const PrefixTemplate>(
      PrefixTemplate::from_view(view, opt.frontier_depth, false));
  arena.expand(view.root());
  return detail::q_split_over_template(arena.dist(), std::move(tmpl),
                                       arena.degree(view.root()), opt, 1.0);
}

// qtilde(v, p): probability that child v starts the backbone, conditioned on
// the root pivot being at most p; estimated by rejection over the same
// quenched-prefix replicates as split_q_mc.
inline QSplitResult qtilde_split(TreeView view, double p, const QSplitOptions& opt) {
  TreeArena& arena = view.arena();
  double p_c = 1.0 / arena.dist().mean();
  if (!(p > p_c)) throw std::domain_error("qtilde: conditioning level must exceed p_c");
  auto tmpl = std::make_shared<const PrefixTemplate>(
      PrefixTemplate::from_view(view, opt.frontier_depth, false));
  arena.expand(view.root());
  return detail::q_split_over_template(arena.dist(), std::move(tmpl),
                                       arena.degree(view.root()), opt, std::min(p, 1.0));
}

// KL of the invasion split against the limit-uniform split at one vertex,
// with the quadratic comparison sum_w p(w) eps(w)^2.
struct KlResult {
  double x = 0.0;           // plug-in sum q log(q/p), 0 log 0 = 0
  double x_debiased = 0.0;  // Miller-Madow corrected for MC plug-in bias
  double quad_bound = 0.0;  // sum p eps^2
  bool infinite = false;    // some child has q_hat > 0 with p_hat = 0
};

inline KlResult kl_x(const std::vector<double>& p_hat, const std::vector<double>& q_hat,
                     uint64_t replicates) {
  GWIP_ASSERT(p_hat.size() == q_hat.size());
  KlResult res;
  int support = 0;
  for (size_t i = 0; i < p_hat.size(); ++i) {
    if (q_hat[i] <= 0.0) continue;  // 0 log 0 = 0
    ++support;
    if (p_hat[i] <= 0.0) {
      res.infinite = true;
      continue;
    }
    res.x += q_hat[i] * std::log(q_hat[i] / p_hat[i]);
  }
  for (size_t i = 0; i < p_hat.size(); ++i) {
    if (p_hat[i] <= 0.0) continue;
    double eps = q_hat[i] / p_hat[i] - 1.0;
    res.quad_bound += p_hat[i] * eps * eps;
  }
  if (!res.infinite) {
    GWIP_ASSERT(res.x >= -1e-12);
    GWIP_ASSERT(res.x <= res.quad_bound + 1e-12);
  }
  res.x_debiased =
      replicates > 0 ? res.x - double(std::max(support - 1, 0)) / (2.0 * double(replicates))
                     : res.x;
  return res;
}

// Full split estimate at one vertex (spec'd bundle of both splits).
struct SplitEstimate {
  std::vector<double> p_hat;
  std::vector<double> q_hat;
  std::vector<double> q_se;
  std::vector<double> eps_hat;  // q/p - 1 per child
  KlResult kl;
  uint64_t replicates = 0;
  int proxy_depth = 0;
};

inline SplitEstimate make_split_estimate(TreeView view, int proxy_depth,
                                         const QSplitOptions& opt) {
  SplitEstimate est;
  est.p_hat = split_p(view, proxy_depth);
  QSplitResult q = split_q_mc(view, opt);
  est.q_hat = q.q_hat;
  est.q_se = q.se;
  est.replicates = q.certified;
  est.proxy_depth = proxy_depth;
  est.eps_hat.resize(est.p_hat.size());
  for (size_t i = 0; i < est.p_hat.size(); ++i)
    est.eps_hat[i] = est.p_hat[i] > 0.0 ? est.q_hat[i] / est.p_hat[i] - 1.0
                                        : std::numeric_limits<double>::infinity();
  est.kl = kl_x(est.p_hat, est.q_hat, est.replicates);
  return est;
}

// Per-child report of the survival-ratio sandwich for qtilde:
// |qt_j - g_j / sum_k g_k| <= [g_v/(1-g_v)] * [g_j / sum_k g_k] up to MC
// error. The survival values are the exact g_n recursion on the same frozen
// prefix the replicates grow from, so the bound is checked against the
// hybrid (annealed-below-frontier) tree it actually describes.
struct SandwichReport {
  std::vector<double> qt;
  std::vector<double> qt_se;
  std::vector<uint64_t> qt_counts;
  uint64_t certified = 0;
  std::vector<double> ratio;      // g_j / sum g_k
  std::vector<double> bound;      // RHS per child
  std::vector<double> slack;     // bound + 3 se + tol - |qt - ratio|
  bool violated = false;
  double certification_rate = 0.0;
};

inline SandwichReport sandwich_check(TreeView view, double p, const SurvivalSolver& solver,
                                     const QSplitOptions& opt, double recursion_tol = 1e-9) {
  SandwichReport rep;
  QSplitResult q = qtilde_split(view, p, opt);
  TreeArena& arena = view.arena();
  arena.expand(view.root());
  uint32_t deg = arena.degree(view.root());
  int child_depth = opt.frontier_depth - 1;
  GWIP_ASSERT(child_depth >= 0);
  double g_v = solver.g_n(view, opt.frontier_depth, p);
  std::vector<double> g_children(deg);
  double g_sum = 0.0;
  for (uint32_t j = 0; j < deg; ++j) {
    g_children[j] = solver.g_n(view.subtree(arena.child(view.root(), j)), child_depth, p);
    g_sum += g_children[j];
  }
  rep.qt = q.q_hat;
  rep.qt_se = q.se;
  rep.qt_counts = q.counts;
  rep.certified = q.certified;
  rep.certification_rate = q.certification_rate;
  for (uint32_t j = 0; j < deg; ++j) {
    double ratio = g_children[j] / g_sum;
    double bound = g_v / (1.0 - g_v) * ratio;
    double diff = std::fabs(q.q_hat[j] - ratio);
    double slack = bound + 3.0 * q.se[j] + recursion_tol - diff;
    rep.ratio.push_back(ratio);
    rep.bound.push_back(bound);
    rep.slack.push_back(slack);
    if (slack < 0.0) rep.violated = true;
  }
  return rep;
}

// Evaluates the absolute-continuity condition of the main theorem:
// 2 p^2 q^2 + (3p^2 + 5p) q + (-p^2 + 11p - 4) < 0 with
// q = log(mu)/log(1/p1). p_moments may be infinity, in which case the
// condition reduces to 2q^2 + 3q - 1 < 0 (p1 < mu^{-(3+sqrt(17))/2});
// p1 = 0 gives q = 0 and the condition p > (11+sqrt(105))/2. The margin is
// the negated quadratic, positive when the condition holds.
struct TheoremCondition {
  bool holds = false;
  double margin = 0.0;
  double q = 0.0;
};

inline TheoremCondition main_theorem_condition(double p_moments, double p1, double mu) {
  if (!(p1 >= 0.0 && p1 < 1.0)) throw std::domain_error("main_theorem_condition: p1 must lie in [0,1)");
  if (!(mu > 1.0)) throw std::domain_error("main_theorem_condition: mu must exceed 1");
  if (!(p_moments > 0.0)) throw std::domain_error("main_theorem_condition: p must be positive");
  TheoremCondition out;
  out.q = p1 == 0.0 ? 0.0 : std::log(mu) / std::log(1.0 / p1);
  const double q = out.q;
  if (std::isinf(p_moments)) {
    out.margin = -(2.0 * q * q + 3.0 * q - 1.0);
  } else {
    const double p = p_moments;
    out.margin = -(2.0 * p * p * q * q + (3.0 * p * p + 5.0 * p) * q + (-p * p + 11.0 * p - 4.0));
  }
  out.holds = out.margin > 0.0;
  return out;
}

// One row of the absolute-continuity diagnostic series.
struct AcRow {
  int n = 0;
  double ex = 0.0;        // mean of X(gamma_n) over trees
  double se = 0.0;
  double partial_sum = 0.0;
  int trees = 0;          // trees contributing at this n
};

struct AcOptions {
  int trees = 30;
  int n_max = 12;
  size_t reference_steps = 30000;
  int proxy_depth = 10;
  QSplitOptions inner;
  uint64_t seed = 1;
};

// Estimates E[X(gamma_n)] for n <= n_max by averaging the per-vertex KL over
// replicate trees and replicate (conditioned) invasions. The split at
// gamma_n is estimated on the subtree view via qtilde at the observed dual
// pivot, which is the conditional representation of the invasion split.
inline std::vector<AcRow> ac_diagnostic(const OffspringDistribution& dist, const SurvivalSolver& solver,
                                        const AcOptions& opt) {
  std::vector<std::vector<double>> xs(opt.n_max + 1);
  double p_c = solver.constants().p_c;
  int truncated_trees = 0;
  for (int t = 0; t < opt.trees; ++t) {
    TreeArena arena(dist, mix_key(opt.seed, 0x7a000 + t));
    InvasionRun run = invade(arena, opt.reference_steps);
    BackboneTrace trace = backbone(run, arena, opt.inner.policy);
    if (trace.certified_len < static_cast<size_t>(opt.n_max)) ++truncated_trees;
    int reach = std::min<int>(opt.n_max, static_cast<int>(trace.certified_len));
    for (int n = 0; n <= reach; ++n) {
      TreeView sub = arena.subtree(trace.path[n]);
      std::vector<double> p_hat = split_p(sub, opt.proxy_depth);
      QSplitOptions inner = opt.inner;
      inner.seed = mix_key(opt.seed, 0x11b000 + t * 1000 + n);
      if (inner.min_accepted == 0) inner.min_accepted = inner.replicates / 2;
      // Conditioning at the observed dual pivot, floored where the dual
      // estimate degenerates toward p_c and rejection sampling would starve.
      double cond = p_c + std::max(trace.h_star[n], 0.02);
      QSplitResult q;
      try {
        q = cond < 1.0 ? qtilde_split(sub, cond, inner) : split_q_mc(sub, inner);
      } catch (const inconclusive_error&) {
        continue;
      }
      xs[n].push_back(kl_x(p_hat, q.q_hat, q.certified).x_debiased);
    }
  }
  std::vector<AcRow> rows;
  double psum = 0.0;
  for (int n = 0; n <= opt.n_max; ++n) {
    AcRow row;
    row.n = n;
    row.trees = static_cast<int>(xs[n].size());
    if (!xs[n].empty()) {
      double mean = 0.0;
      for (double v : xs[n]) mean += v;
      mean /= xs[n].size();
      double var = 0.0;
      for (double v : xs[n]) var += (v - mean) * (v - mean);
      var = xs[n].size() > 1 ? var / (xs[n].size() - 1) : 0.0;
      row.ex = mean;
      row.se = std::sqrt(var / xs[n].size());
    }
    psum += row.ex;
    row.partial_sum = psum;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace gwip
