#pragma once

#include <cmath>
#include <vector>

#include "gwip/errors.hpp"
#include "gwip/offspring.hpp"
#include "gwip/tree.hpp"

namespace gwip {

// Annealed survival function of Bernoulli(p) percolation on the random tree:
// g(p) is the unique root s in (0,1] of phi(1 - p s) = 1 - s for p > p_c,
// and 0 for p <= p_c.
//
// The trivial root s = 0 is divided out before solving. With
// S_k(x) = (1 - (1-x)^k)/x = sum_{j<k} (1-x)^j, the deflated equation reads
//
//   G(s) = p * sum_k p_k S_k(p s) - 1 = 0,
//
// where G is strictly decreasing on (0,1], G(0) = p/p_c - 1 and G(1) <= 0.
// Evaluating S_k by its geometric sum avoids the cancellation that makes the
// raw fixed-point residual useless near p_c, so the root is well conditioned
// all the way down to the critical point. Bracketed bisection narrows to
// 1e-6, then Newton polishes to machine precision.
class SurvivalSolver {
 public:
  explicit SurvivalSolver(OffspringDistribution dist, double tol = 1e-12, int max_iter = 200)
      : dist_(std::move(dist)), consts_(dist_.constants()), tol_(tol), max_iter_(max_iter) {
    GWIP_ASSERT(tol_ > 0.0);
  }

  const OffspringDistribution& dist() const { return dist_; }
  const GfConstants& constants() const { return consts_; }
  double p_c() const { return consts_.p_c; }

  double g(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("g: p must lie in [0,1]");
    if (p <= consts_.p_c) return 0.0;
    if (p == 1.0) return 1.0;
    if (p - consts_.p_c < 1e-12) return consts_.K * (p - consts_.p_c);
    return solve_root(p);
  }

  // g'(p) = g(p) phi'(1 - p g(p)) / (1 - p phi'(1 - p g(p))) on (p_c, 1);
  // tends to K as p decreases to p_c.
  double g_prime(double p) const {
    if (!(p > consts_.p_c && p < 1.0))
      throw std::domain_error("g_prime: p must lie in (p_c, 1)");
    double gp = g(p);
    double phip = dist_.phi_prime(1.0 - p * gp);
    double denom = 1.0 - p * phip;
    GWIP_ASSERT(denom > 0.0);
    return gp * phip / denom;
  }

  // Numeric inverse of g on [p_c, 1]: returns p with g(p) = y.
  double g_inverse(double y) const {
    if (!(y >= 0.0 && y <= 1.0)) throw std::domain_error("g_inverse: y must lie in [0,1]");
    if (y <= 0.0) return consts_.p_c;
    if (y >= 1.0) return 1.0;
    double lo = consts_.p_c, hi = 1.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
      double mid = 0.5 * (lo + hi);
      (g(mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  // E[g(T,p) | first n generations of T]: exact recursion over the realized
  // prefix with u(v) = prod_w (1 - p (1 - u(w))) and u = 1 - g(p) at the
  // depth-n frontier; returns 1 - u(root). Depends on the prefix topology
  // only. The prefix must be realized to depth n.
  double g_n(TreeView tree, int depth, double p) const {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("g_n: p must lie in (0,1)");
    double frontier_u = 1.0 - g(p);
    return 1.0 - failure_below(tree, depth, p, frontier_u);
  }

  // Quenched upper bound 2 eps Wbar / ((1 - p_c - eps) p_c) with
  // Wbar = max_{n<=depth} W_n of the realized tree.
  double resistance_upper_bound(TreeView tree, double eps, int depth) const {
    if (!(eps > 0.0 && eps < 1.0 - consts_.p_c))
      throw std::domain_error("resistance_upper_bound: eps must lie in (0, 1 - p_c)");
    MartingaleTrace trace = martingale(tree, depth);
    double wbar = 0.0;
    for (double w : trace.w) wbar = std::max(wbar, w);
    return 2.0 * eps * wbar / ((1.0 - consts_.p_c - eps) * consts_.p_c);
  }

  // Finite-depth proxy for the normalized survival error E(v, eps):
  // g_n(tree, p_c + eps) / g(p_c + eps) - W_depth(root).
  double e_functional(TreeView tree, double eps, int depth) const {
    if (!(eps > 0.0)) throw std::domain_error("e_functional: eps must be > 0");
    double gp = g(consts_.p_c + eps);
    if (gp <= 0.0) throw std::domain_error("e_functional: g(p_c + eps) vanished");
    MartingaleTrace trace = martingale(tree, depth);
    return g_n(tree, depth, consts_.p_c + eps) / gp - trace.w[depth];
  }

  // Depth at which the martingale-variance tail |T_depth| * p^(2 depth)
  // drops below 1e-6, capped by max_depth; used to pick a stabilized depth
  // for the E-functional. This is the Azuma variance of the revealed
  // martingale whose increments are bounded by p^n, and it shrinks exactly
  // on the p < sqrt(p_c) range where the depth-n estimate is exponentially
  // close to the full survival probability.
  int stabilized_depth(TreeView tree, double p, int max_depth,
                       size_t realize_budget = 1u << 20) const {
    if (consts_.mu * p * p >= 1.0) return max_depth;  // tail never shrinks
    double z = 1.0;
    double p2 = p * p;
    double tail = 1.0;
    int realized = 0;
    MartingaleTrace trace;
    for (int d = 1; d <= max_depth; ++d) {
      if (realized < d && z * consts_.mu < static_cast<double>(realize_budget)) {
        trace = martingale(tree, d);
        realized = d;
      }
      z = realized >= d ? static_cast<double>(trace.z[d]) : z * consts_.mu;
      tail *= p2;
      if (tail * z < 1e-6) return d;
    }
    return max_depth;
  }

 private:
  // G(s) and G'(s) of the deflated equation, both cancellation-free.
  double deflated(double p, double s, double* deriv) const {
    double acc = 0.0, dacc = 0.0;
    double x = p * s;
    double base = 1.0 - x;
    for (const auto& [k, pk] : dist_.pmf()) {
      // S_k(x) = sum_{j<k} (1-x)^j and S_k'(x) = -sum_{j<k} j (1-x)^{j-1}
      double term = 1.0, sum = 0.0, dsum = 0.0;
      for (int j = 0; j < k; ++j) {
        sum += term;
        if (j >= 1) dsum += j * (j == 1 ? 1.0 : pow_i(base, j - 1));
        term *= base;
      }
      acc += pk * sum;
      dacc += pk * dsum;
    }
    if (deriv) *deriv = -p * p * dacc;
    return p * acc - 1.0;
  }

  double solve_root(double p) const {
    // G is strictly decreasing with G(0) > 0; bracket [0, 1].
    double lo = 0.0, hi = 1.0;
    double s = 0.0;
    while (hi - lo > 1e-6) {
      double mid = 0.5 * (lo + hi);
      (deflated(p, mid, nullptr) > 0.0 ? lo : hi) = mid;
    }
    s = 0.5 * (lo + hi);
    int it = 0;
    for (; it < max_iter_; ++it) {
      double deriv;
      double val = deflated(p, s, &deriv);
      if (deriv == 0.0) break;
      double step = val / deriv;
      double next = s - step;
      if (next <= lo || next >= hi) {  // keep Newton inside the bracket
        (val > 0.0 ? lo : hi) = s;
        next = 0.5 * (lo + hi);
      } else {
        (val > 0.0 ? lo : hi) = s;
      }
      if (std::fabs(next - s) <= 1e-16 * std::max(1.0, std::fabs(s))) {
        s = next;
        break;
      }
      s = next;
    }
    double residual = std::fabs(dist_.phi(1.0 - p * s) - (1.0 - s));
    if (residual > tol_)
      throw solver_error("survival fixed point did not converge at p=" + std::to_string(p),
                         residual);
    return s;
  }

  // Failure probability of the subtree below `node` when the first `depth`
  // generations are pinned; iterative post-order over the prefix.
  double failure_below(TreeView tree, int depth, double p, double frontier_u) const {
    if (depth == 0) return frontier_u;
    struct Frame {
      NodeId node;
      int remaining;
      uint32_t next_child;
      double acc;
    };
    std::vector<Frame> stack;
    stack.push_back({tree.root(), depth, 0, 1.0});
    double result = frontier_u;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const auto& arena = tree.arena();
      if (!arena.is_expanded(f.node))
        throw std::invalid_argument("g_n: tree prefix not realized to requested depth");
      uint32_t deg = arena.degree(f.node);
      if (f.next_child < deg) {
        NodeId child = arena.child(f.node, f.next_child);
        ++f.next_child;
        if (f.remaining == 1) {
          f.acc *= 1.0 - p * (1.0 - frontier_u);
        } else {
          stack.push_back({child, f.remaining - 1, 0, 1.0});
        }
      } else {
        double u = f.acc;
        stack.pop_back();
        if (stack.empty()) {
          result = u;
        } else {
          stack.back().acc *= 1.0 - p * (1.0 - u);
        }
      }
    }
    return result;
  }

  static double pow_i(double z, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= z;
    return r;
  }

  OffspringDistribution dist_;
  GfConstants consts_;
  double tol_;
  int max_iter_;
};

}  // namespace gwip
