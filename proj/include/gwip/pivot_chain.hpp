#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gwip/errors.hpp"
#include "gwip/rng.hpp"
#include "gwip/stats.hpp"
#include "gwip/survival.hpp"

namespace gwip {

// Shape-preserving cubic interpolant (Fritsch-Carlson slopes) over a fixed
// knot vector; used for the kernel tabulations, which are monotone.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> ts, std::vector<double> ys)
      : t_(std::move(ts)), y_(std::move(ys)) {
    const size_t n = t_.size();
    GWIP_ASSERT(n >= 3 && y_.size() == n);
    std::vector<double> h(n - 1), d(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
      h[i] = t_[i + 1] - t_[i];
      d[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    m_.assign(n, 0.0);
    m_[0] = d[0];
    m_[n - 1] = d[n - 2];
    for (size_t i = 1; i + 1 < n; ++i) {
      if (d[i - 1] * d[i] <= 0.0) {
        m_[i] = 0.0;
      } else {
        double w1 = 2.0 * h[i] + h[i - 1];
        double w2 = h[i] + 2.0 * h[i - 1];
        m_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
      }
    }
  }

  double eval(double t) const {
    size_t i = segment(t);
    double hseg = t_[i + 1] - t_[i];
    double s = (t - t_[i]) / hseg;
    double s2 = s * s, s3 = s2 * s;
    double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return h00 * y_[i] + h10 * hseg * m_[i] + h01 * y_[i + 1] + h11 * hseg * m_[i + 1];
  }

  // Inverse for strictly monotone tabulations; y must lie in range.
  double inverse(double y) const {
    bool incr = y_.back() > y_.front();
    size_t lo_i = 0, hi_i = t_.size() - 1;
    while (hi_i - lo_i > 1) {
      size_t mid = (lo_i + hi_i) / 2;
      bool go_right = incr ? (y_[mid] <= y) : (y_[mid] >= y);
      (go_right ? lo_i : hi_i) = mid;
    }
    double lo = t_[lo_i], hi = t_[hi_i];
    for (int it = 0; it < 60 && hi - lo > 1e-15 * std::max(1.0, std::fabs(lo)); ++it) {
      double mid = 0.5 * (lo + hi);
      bool left = incr ? (eval(mid) >= y) : (eval(mid) <= y);
      (left ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  }

  double front_t() const { return t_.front(); }
  double back_t() const { return t_.back(); }

 private:
  size_t segment(double t) const {
    if (t <= t_.front()) return 0;
    if (t >= t_.back()) return t_.size() - 2;
    size_t i = static_cast<size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin());
    return i - 1;
  }

  std::vector<double> t_, y_, m_;
};

// Analytic transition kernels of the pivot chain, reparametrized by
// h = beta - p_c. With f(x) = phi'(1 - (p_c+x) g(p_c+x)):
//
//   h-kernel    p(a,.) : atom C_a at a plus density
//               f(a) g'(p_c+x)/g'(p_c+a) on (0,a), C_a = f(a)(p_c+a)
//   dual update nu~_{a,b}: atom f(b)/f(a) at b plus density -f'(x)/f(a)
//               on (a,b)
//
// C_a also equals 1 - f(a) g(p_c+a)/g'(p_c+a); both forms are evaluated on
// the tabulation grid and construction aborts if they disagree beyond 1e-6,
// which would mean the solver and the derivative identity fell out of sync.
//
// Tabulations live on a log-spaced grid in x (the chain spends its life
// near 0, so relative accuracy is what matters); jump sampling inverts the
// tabulated primitive G(x) = g(p_c + x). Immutable after construction.
class PivotKernel {
 public:
  static constexpr double kSampleFromInitialLaw = -1.0;

  explicit PivotKernel(const SurvivalSolver& solver, size_t grid_size = 2048)
      : solver_(&solver), p_c_(solver.constants().p_c) {
    x_min_ = 1e-8;
    x_max_ = 1.0 - p_c_ - 1e-6;
    GWIP_ASSERT(x_max_ > x_min_);
    const double lmin = std::log(x_min_), lmax = std::log(x_max_);
    std::vector<double> ts(grid_size), gs(grid_size), fs(grid_size), gps(grid_size);
    xs_.resize(grid_size);
    for (size_t i = 0; i < grid_size; ++i) {
      double t = lmin + (lmax - lmin) * double(i) / double(grid_size - 1);
      double x = std::exp(t);
      ts[i] = t;
      xs_[i] = x;
      double g = solver.g(p_c_ + x);
      gs[i] = g;
      fs[i] = solver.dist().phi_prime(1.0 - (p_c_ + x) * g);
      gps[i] = solver.g_prime(p_c_ + x);
      double c_form1 = 1.0 - fs[i] * g / gps[i];
      double c_form2 = fs[i] * (p_c_ + x);
      if (std::fabs(c_form1 - c_form2) > 1e-6)
        throw std::runtime_error(
            "pivot kernel: the two atom-mass expressions disagree at x=" + std::to_string(x) +
            " (" + std::to_string(c_form1) + " vs " + std::to_string(c_form2) + ")");
    }
    f_values_ = fs;
    g_interp_ = MonotoneCubic(ts, gs);
    f_interp_ = MonotoneCubic(ts, fs);
    gp_interp_ = MonotoneCubic(ts, gps);
    // f' by centered differences on the grid in x.
    fprime_.resize(grid_size);
    for (size_t i = 0; i < grid_size; ++i) {
      size_t a = i == 0 ? 0 : i - 1;
      size_t b = i + 1 == grid_size ? i : i + 1;
      fprime_[i] = (fs[b] - fs[a]) / (xs_[b] - xs_[a]);
    }
  }

  double p_c() const { return p_c_; }
  double x_min() const { return x_min_; }
  double x_max() const { return x_max_; }
  const SurvivalSolver& solver() const { return *solver_; }

  double g_at(double x) const { return g_interp_.eval(std::log(clamp(x))); }
  double f_at(double x) const { return f_interp_.eval(std::log(clamp(x))); }
  double g_prime_at(double x) const { return gp_interp_.eval(std::log(clamp(x))); }

  double f_prime_at(double x) const {  // linear interp of the difference table
    double xc = clamp(x);
    size_t i = static_cast<size_t>(std::upper_bound(xs_.begin(), xs_.end(), xc) - xs_.begin());
    if (i == 0) return fprime_.front();
    if (i >= xs_.size()) return fprime_.back();
    double w = (xc - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    return (1.0 - w) * fprime_[i - 1] + w * fprime_[i];
  }

  // Atom mass of the h-kernel at state a.
  double atom(double a) const { return f_at(a) * (p_c_ + a); }

  // Atom mass of the dual update from (a, b).
  double dual_atom(double a, double b) const { return f_at(b) / f_at(a); }

  // One h-step from state a: keep a with probability C_a, otherwise jump to
  // x in (0,a) with density proportional to g'(p_c + x), sampled by
  // inverting the primitive G.
  double step_h(double a, RngStream& rng) const {
    check_state(a);
    double c_a = atom(a);
    if (rng.next_unit() < c_a) return a;
    double target = rng.next_unit() * g_at(a);
    double x = std::exp(g_interp_.inverse(target));
    return std::clamp(x, x_min_, a);
  }

  // One joint step from (a, b), a < b: independent draws of the new h from
  // nu_a and the new h* from nu~_{a,b} (inverse CDF (f(a)-f(x))/(f(a)-f(b))
  // with atom f(b)/f(a) at b).
  std::pair<double, double> step_joint(double a, double b, RngStream& rng) const {
    if (!(a < b)) throw std::domain_error("step_joint: requires a < b");
    check_state(a);
    double h_next = step_h(a, rng);
    double b_c = std::min(b, x_max_);
    double fa = f_at(a), fb = f_at(b_c);
    double u = rng.next_unit();
    double hs_next;
    if (u >= 1.0 - fb / fa) {
      hs_next = b;
    } else {
      double x = std::exp(f_interp_.inverse(fa * (1.0 - u)));
      hs_next = std::clamp(x, a, b);
    }
    return {h_next, hs_next};
  }

  // Sample from the initial law L of h_0 = beta_0 - p_c via P[beta_0 <= x]
  // = g(x): numeric inversion of the solver's g.
  double sample_initial(RngStream& rng) const {
    double u = rng.next_unit();
    double h0 = solver_->g_inverse(u) - p_c_;
    return std::clamp(h0, x_min_, x_max_);
  }

 private:
  void check_state(double a) const {
    if (!(a >= x_min_ && a <= x_max_))
      throw std::domain_error("pivot kernel: state outside tabulated range");
  }
  double clamp(double x) const { return std::clamp(x, x_min_, x_max_); }

  const SurvivalSolver* solver_;
  double p_c_, x_min_, x_max_;
  std::vector<double> xs_, f_values_, fprime_;
  MonotoneCubic g_interp_, f_interp_, gp_interp_;
};

struct ChainPath {
  std::vector<double> h;
  std::vector<double> h_star;  // empty unless joint
  uint64_t seed = 0;
  std::string provenance = "analytic";
};

// Simulates the analytic chain for n steps (path length n+1). h0 may be the
// kSampleFromInitialLaw sentinel. The h-path of the analytic kernel is
// nonincreasing by construction (support of the step is (0, a]).
inline ChainPath run_chain(const PivotKernel& kernel, double h0, int n, uint64_t seed,
                           bool joint = false) {
  ChainPath path;
  path.seed = seed;
  RngStream rng = RngStream::derive(seed, 0x9c5a1b);
  double h = h0 == PivotKernel::kSampleFromInitialLaw ? kernel.sample_initial(rng) : h0;
  if (!(h > 0.0)) throw std::domain_error("run_chain: h0 must be > 0");
  double hs = 1.0 - kernel.p_c();
  path.h.push_back(h);
  if (joint) path.h_star.push_back(hs);
  for (int k = 0; k < n; ++k) {
    if (joint) {
      auto [nh, nhs] = kernel.step_joint(h, hs, rng);
      GWIP_ASSERT(nh <= h && nhs > h - 1e-15 && nhs <= hs + 1e-15);
      h = nh;
      hs = std::min(hs, nhs);  // running minimum of the dual pivot
      path.h.push_back(h);
      path.h_star.push_back(hs);
    } else {
      double nh = kernel.step_h(h, rng);
      GWIP_ASSERT(nh <= h);
      h = nh;
      path.h.push_back(h);
    }
  }
  return path;
}

// Running minimum of IID uniforms, M_0 = U_0.
inline std::vector<double> min_uniform(int n, uint64_t seed) {
  RngStream rng = RngStream::derive(seed, 0x3151ff);
  std::vector<double> m(n + 1);
  double cur = rng.next_unit();
  m[0] = cur;
  for (int k = 1; k <= n; ++k) {
    cur = std::min(cur, rng.next_unit());
    m[k] = cur;
  }
  return m;
}

// Poisson lower envelope path, simulated by its jump construction: from
// height z the process jumps to z*U[0,1] at exponential rate z. start_height
// = 1 gives the L_1 = 1 ^ L version; larger start heights approximate the
// unclipped L marginal (P[L(t) > z0] = e^{-t z0}).
struct LpePath {
  std::vector<double> times;    // jump times, times[0] = 0
  std::vector<double> heights;  // heights[i] from times[i] to times[i+1]
  double t_max = 0.0;

  double value_at(double t) const {
    GWIP_ASSERT(t >= 0.0 && t <= t_max);
    size_t i = static_cast<size_t>(std::upper_bound(times.begin(), times.end(), t) -
                                   times.begin());
    return heights[i - 1];
  }
};

inline LpePath lpe_sample(double t_max, uint64_t seed, double start_height = 1.0) {
  if (!(t_max > 0.0)) throw std::domain_error("lpe_sample: t_max must be > 0");
  LpePath path;
  path.t_max = t_max;
  RngStream rng = RngStream::derive(seed, 0x715e77);
  double t = 0.0, z = start_height;
  path.times.push_back(0.0);
  path.heights.push_back(z);
  while (true) {
    double wait = -std::log(rng.next_unit()) / z;
    if (t + wait > t_max) break;
    t += wait;
    z *= rng.next_unit();
    path.times.push_back(t);
    path.heights.push_back(z);
  }
  return path;
}

struct DecayRow {
  int n;
  double threshold;  // n^{-t}
  uint64_t exceed;
  uint64_t total;
  WilsonInterval ci;
};

// Empirical P[h*_n > n^{-t}] on a grid of n, from independent joint chains.
inline std::vector<DecayRow> dual_decay_experiment(const PivotKernel& kernel, double t_exp,
                                                   const std::vector<int>& n_grid, int replicates,
                                                   uint64_t seed, double z = 2.5758293035489004) {
  GWIP_ASSERT(!n_grid.empty());
  int max_n = *std::max_element(n_grid.begin(), n_grid.end());
  std::vector<uint64_t> exceed(n_grid.size(), 0);
  for (int r = 0; r < replicates; ++r) {
    ChainPath path = run_chain(kernel, PivotKernel::kSampleFromInitialLaw, max_n,
                               mix_key(seed, static_cast<uint64_t>(r)), true);
    for (size_t i = 0; i < n_grid.size(); ++i) {
      int n = n_grid[i];
      if (path.h_star[n] > std::pow(n, -t_exp)) ++exceed[i];
    }
  }
  std::vector<DecayRow> rows;
  for (size_t i = 0; i < n_grid.size(); ++i) {
    DecayRow row;
    row.n = n_grid[i];
    row.threshold = std::pow(n_grid[i], -t_exp);
    row.exceed = exceed[i];
    row.total = static_cast<uint64_t>(replicates);
    row.ci = wilson_ci(exceed[i], replicates, z);
    rows.push_back(row);
  }
  return rows;
}

struct CorridorResult {
  bool applicable = false;  // h never dropped below delta
  bool holds = false;
  int n0 = -1;
};

// Coupled-corridor check for a pivot sequence (typically tree-extracted).
// The coupled min-uniform is reconstructed from the chain's own jump
// quantiles: starting where h first drops below delta with M = h/p_c, every
// jump multiplies M by v = g(p_c + h_new)/g(p_c + h_old), which is the
// exact conditional quantile of the jump target, i.e. a fresh U(0,1) record
// for the min-process. Non-jump steps leave M unchanged. The corridor
// c1 p_c M_n <= h_n <= c2 p_c M_n on [n0, N] then measures the cumulative
// deviation of the observed jumps from the kernel's quantile structure.
inline CorridorResult coupling_corridor(const std::vector<double>& h, const SurvivalSolver& solver,
                                        double c1_ratio = 0.9, double c2_ratio = 1.1,
                                        double delta = 0.02) {
  CorridorResult out;
  const double p_c = solver.constants().p_c;
  size_t n0 = h.size();
  for (size_t i = 0; i < h.size(); ++i) {
    if (h[i] > 0.0 && h[i] <= delta) {
      n0 = i;
      break;
    }
  }
  if (n0 >= h.size()) return out;
  out.applicable = true;
  out.n0 = static_cast<int>(n0);
  double m = h[n0] / p_c;
  double g_prev = solver.g(p_c + h[n0]);
  out.holds = true;
  for (size_t i = n0; i < h.size(); ++i) {
    if (!(h[i] > 0.0)) {
      out.holds = false;
      break;
    }
    if (i > n0 && h[i] < h[i - 1]) {
      double g_cur = solver.g(p_c + h[i]);
      m *= g_cur / g_prev;
      g_prev = g_cur;
    } else if (i > n0 && h[i] > h[i - 1]) {
      g_prev = solver.g(p_c + h[i]);  // not a record; rescale the quantile base
    }
    if (!(c1_ratio * p_c * m <= h[i] && h[i] <= c2_ratio * p_c * m)) {
      out.holds = false;
      break;
    }
  }
  return out;
}

}  // namespace gwip
