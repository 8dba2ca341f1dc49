#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gwip/errors.hpp"
#include "gwip/tree.hpp"

namespace gwip {

// One invaded vertex: invasion step order is the vector index.
struct InvadedStep {
  NodeId node;
  double weight;
};

// State of an invasion run. The boundary heap is kept so a run can be
// extended; ties in weights have probability zero and are broken by node id
// for determinism under replay.
class InvasionRun {
 public:
  std::vector<InvadedStep> invaded;  // invaded[0] is the root (step 0)

  size_t steps() const { return invaded.empty() ? 0 : invaded.size() - 1; }

  double boundary_min() const {
    GWIP_ASSERT(!boundary_.empty());
    return boundary_.top().first;
  }

 private:
  friend InvasionRun invade(TreeArena&, size_t);
  friend void invade_more(InvasionRun&, TreeArena&, size_t);
  using Entry = std::pair<double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> boundary_;
};

inline void invade_more(InvasionRun& run, TreeArena& arena, size_t extra_steps) {
  for (size_t s = 0; s < extra_steps; ++s) {
    GWIP_ASSERT(!run.boundary_.empty());
    auto [w, v] = run.boundary_.top();
    run.boundary_.pop();
    run.invaded.push_back({v, w});
    auto [first, deg] = arena.expand(v);
    for (uint32_t j = 0; j < deg; ++j)
      run.boundary_.push({arena.weight(first + j), first + j});
  }
}

// Grows the cluster by `steps` minimum-weight boundary additions; the root
// counts as step 0, so the invaded list has steps+1 entries.
inline InvasionRun invade(TreeArena& arena, size_t steps) {
  if (steps < 1) throw std::invalid_argument("invade: steps must be >= 1");
  InvasionRun run;
  NodeId root = arena.root();
  run.invaded.push_back({root, arena.weight(root)});
  auto [first, deg] = arena.expand(root);
  for (uint32_t j = 0; j < deg; ++j)
    run.boundary_.push({arena.weight(first + j), first + j});
  invade_more(run, arena, steps);
  return run;
}

// Depth-capped pivot estimate for a vertex. lower is the exact minimax
//   beta_D(v) = min over depth-D descendants' paths of the max weight,
// excluding v's own weight; it increases to beta(v) as D grows. upper is
// lower + tol when a survival probe (percolation at lower + tol continuing
// depth_cap more levels from the witness endpoint) succeeds, else the 1.0
// sentinel with inconclusive set.
struct PivotBound {
  double lower = 0.0;
  double upper = 1.0;
  bool inconclusive = false;
  bool truncated = false;  // search stopped at the ceiling; true value >= lower
  NodeId witness = kNoNode;
};

inline PivotBound pivot_beta(TreeArena& arena, NodeId node, int depth_cap, double tol,
                             double ceiling = 1.0, size_t pop_budget = 300000) {
  GWIP_ASSERT(depth_cap >= 1);
  PivotBound out;
  uint32_t base_depth = arena.depth(node);
  uint32_t target = base_depth + static_cast<uint32_t>(depth_cap);

  // Best-first search on the running path maximum: pops come in
  // nondecreasing bottleneck order, so the first depth-capped pop is exact.
  // Values at or above the ceiling are not resolved: the search stops and
  // reports lower = ceiling with truncated set, which callers use when only
  // escapes below a threshold matter. The pop budget bounds the work on
  // freak configurations with a large minimax value (the sub-beta region is
  // then nearly the whole depth-capped subtree); the heap minimum at
  // exhaustion is still a valid lower bound.
  using Entry = std::pair<double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  {
    auto [first, deg] = arena.expand(node);
    for (uint32_t j = 0; j < deg; ++j)
      heap.push({arena.weight(first + j), first + j});
  }
  size_t pops = 0;
  while (true) {
    if (heap.empty() || heap.top().first >= ceiling || pops >= pop_budget) {
      out.lower = heap.empty() ? ceiling : std::min(ceiling, heap.top().first);
      out.upper = 1.0;
      out.truncated = true;
      out.inconclusive = true;
      return out;
    }
    ++pops;
    auto [bottleneck, v] = heap.top();
    heap.pop();
    if (arena.depth(v) == target) {
      out.lower = bottleneck;
      out.witness = v;
      break;
    }
    auto [first, deg] = arena.expand(v);
    for (uint32_t j = 0; j < deg; ++j)
      heap.push({std::max(bottleneck, arena.weight(first + j)), first + j});
  }

  // Survival probe for the certified slack.
  double level = out.lower + tol;
  uint32_t probe_target = target + static_cast<uint32_t>(depth_cap);
  std::vector<NodeId> stack{out.witness};
  bool reached = false;
  while (!stack.empty() && !reached) {
    NodeId v = stack.back();
    stack.pop_back();
    auto [first, deg] = arena.expand(v);
    for (uint32_t j = 0; j < deg; ++j) {
      NodeId c = first + j;
      if (arena.weight(c) > level) continue;
      if (arena.depth(c) >= probe_target) {
        reached = true;
        break;
      }
      stack.push_back(c);
    }
  }
  if (reached) {
    out.upper = std::min(1.0, level);
    out.inconclusive = false;
  } else {
    out.upper = 1.0;
    out.inconclusive = true;
  }
  return out;
}

// Backbone certification knobs. A candidate next vertex gamma_n is certified
// when (a) every step in the final frontier_fraction of the run lies in its
// subtree, and (b) the last tail_window_mult * depth_cap invaded vertices of
// that subtree all have weight at most the best sibling escape bound
// min over siblings s of max(U_s, beta_upper(s)). Once a vertex with an
// infinite low-weight subtree is invaded, invasion never leaves it; (a) and
// (b) are the finite-run analogue, checked conservatively and verified by
// the longer-run stability oracle in the tests.
struct CertificationPolicy {
  int depth_cap = 25;
  double tol = 0.02;
  double frontier_fraction = 0.25;
  int tail_window_mult = 10;
  size_t max_certified_len = 0;  // 0 = unlimited; callers needing only the first
                                 // steps cap it to skip deeper certification work
};

struct BackboneTrace {
  std::vector<NodeId> path;  // certified prefix gamma_0 = root .. gamma_L
  size_t certified_len = 0;  // L
  std::vector<double> h;           // pivot estimate beta(gamma_n) - p_c
  std::vector<double> h_star;      // running-min dual pivot - p_c (h_star[0] = 1 - p_c)
  std::vector<double> beta_lower;  // depth-capped minimax interval at gamma_n
  std::vector<double> beta_upper;
  std::vector<NodeId> trunk;  // full estimation path, extends past the certified prefix
  CertificationPolicy policy;
  std::string diagnostic;  // set when certification stopped early
};

// Extracts the backbone from a finished run.
//
// The descent follows, level by level, the child whose invaded subtree
// carries the most of the final frontier F (the last frontier_fraction of
// all steps). A level stays certified while all of F sits in one child and
// the tail-window weight condition against the sibling escape bounds holds;
// the descent then continues uncertified as far as the frontier reaches,
// giving the estimation trunk.
//
// Pivots are read off the run itself: the backbone is the minimax escape
// path, so beta(gamma_n) is the maximum future trunk weight
// max_{k>n} U(gamma_k), which the trunk reveals exactly down to the scale
// of its tail. Dual pivots use per-level sibling escape lower bounds
// max(U_s, beta_lb(s)) where beta_lb(s) combines the depth-capped minimax
// with the sibling's end-of-run boundary minimum (any escape through an
// invaded sibling subtree must cross its boundary).
inline BackboneTrace backbone(const InvasionRun& run, TreeArena& arena,
                              const CertificationPolicy& policy = {}) {
  BackboneTrace trace;
  trace.policy = policy;
  trace.path.push_back(arena.root());
  trace.trunk.push_back(arena.root());

  const auto& inv = run.invaded;
  const size_t n_inv = inv.size();
  const size_t pos_limit = arena.size();  // nodes beyond this are probe-created, never invaded
  const size_t tail_window =
      static_cast<size_t>(policy.tail_window_mult) * static_cast<size_t>(policy.depth_cap);

  std::vector<uint32_t> pos_of(pos_limit, kNoNode);
  for (size_t i = 0; i < n_inv; ++i) pos_of[inv[i].node] = static_cast<uint32_t>(i);
  size_t f_count = static_cast<size_t>(std::ceil(policy.frontier_fraction * double(n_inv)));
  f_count = std::max<size_t>(f_count, 1);
  size_t f_begin = n_inv - f_count;

  // cnt_f[i] = number of frontier vertices in the invaded subtree of
  // inv[i].node. Parents are invaded before children, so one reverse pass
  // accumulates the counts.
  std::vector<uint32_t> cnt_f(n_inv, 0);
  for (size_t i = f_begin; i < n_inv; ++i) cnt_f[i] = 1;
  for (size_t i = n_inv - 1; i > 0; --i) {
    NodeId par = arena.parent(inv[i].node);
    cnt_f[pos_of[par]] += cnt_f[i];
  }
  auto invaded_pos = [&](NodeId v) -> uint32_t {
    return v < pos_limit ? pos_of[v] : kNoNode;
  };

  // Pass 1: trunk discovery. Descend by frontier plurality, filtering the
  // member positions level by level; record per level everything the
  // certification pass needs so no tree search happens yet.
  struct LevelInfo {
    bool all_contained = false;
    bool window_filled = false;
    double tail_max = 0.0;
    std::vector<std::pair<NodeId, double>> sibling_boundary_min;  // invaded siblings only
  };
  std::vector<LevelInfo> levels;
  {
    std::vector<uint32_t> members(n_inv), next_members;
    for (size_t i = 0; i < n_inv; ++i) members[i] = static_cast<uint32_t>(i);
    std::vector<NodeId> anc(n_inv, kNoNode);  // ancestor at the current depth, per position
    NodeId cur = arena.root();
    while (true) {
      uint32_t cur_pos = pos_of[cur];
      uint32_t below = cnt_f[cur_pos] - (cur_pos >= f_begin ? 1 : 0);
      if (below == 0) break;
      GWIP_ASSERT(arena.is_expanded(cur));
      NodeId best = kNoNode;
      uint32_t best_cnt = 0;
      for (uint32_t j = 0; j < arena.degree(cur); ++j) {
        NodeId c = arena.child(cur, j);
        uint32_t p = invaded_pos(c);
        if (p == kNoNode) continue;
        if (cnt_f[p] > best_cnt) {
          best_cnt = cnt_f[p];
          best = c;
        }
      }
      if (best == kNoNode) break;

      LevelInfo info;
      info.all_contained = best_cnt >= below;
      std::unordered_map<NodeId, size_t> sibling_slot;
      for (uint32_t j = 0; j < arena.degree(cur); ++j) {
        NodeId s = arena.child(cur, j);
        if (s != best && invaded_pos(s) != kNoNode) {
          sibling_slot[s] = info.sibling_boundary_min.size();
          info.sibling_boundary_min.emplace_back(s, 1.0);
        }
      }

      uint32_t d = arena.depth(best);
      next_members.clear();
      for (uint32_t p : members) {
        NodeId v = inv[p].node;
        NodeId a;
        if (arena.depth(v) < d) {
          a = kNoNode;
        } else if (arena.depth(v) == d) {
          a = v;
        } else {
          a = anc[pos_of[arena.parent(v)]];
        }
        anc[p] = a;
        if (a == best) {
          next_members.push_back(p);
        } else if (a != kNoNode) {
          auto it = sibling_slot.find(a);
          if (it != sibling_slot.end()) {
            // exits of the invaded sibling subtree: non-invaded children of
            // invaded vertices
            double& mb = info.sibling_boundary_min[it->second].second;
            for (uint32_t j = 0; j < arena.degree(v); ++j) {
              NodeId c = arena.child(v, j);
              if (invaded_pos(c) == kNoNode) mb = std::min(mb, arena.weight(c));
            }
          }
        }
      }
      info.window_filled = next_members.size() >= tail_window;
      if (info.window_filled) {
        for (size_t i = next_members.size() - tail_window; i < next_members.size(); ++i)
          info.tail_max = std::max(info.tail_max, inv[next_members[i]].weight);
      }
      levels.push_back(std::move(info));
      trace.trunk.push_back(best);
      members.swap(next_members);
      cur = best;
    }
  }

  // Trunk suffix maxima: h_n estimates and exactness ceilings for the
  // depth-capped pivot searches.
  const size_t m = trace.trunk.size() - 1;
  std::vector<double> suffix_max(m + 1, 0.0);
  for (size_t k = m; k >= 1; --k)
    suffix_max[k - 1] = std::max(suffix_max[k], arena.weight(trace.trunk[k]));
  // A window max over the next depth_cap trunk weights bounds the minimax
  // value from above, so a search ceilinged just past it stays exact while
  // never exploring above the scale the trunk already certifies.
  auto window_ceiling = [&](size_t n) {
    double w = 0.0;
    size_t hi = std::min(m, n + static_cast<size_t>(policy.depth_cap));
    for (size_t k = n + 1; k <= hi; ++k) w = std::max(w, arena.weight(trace.trunk[k]));
    return w + 1e-9;
  };
  // Dual escapes above the whole trunk scale carry no information; clamping
  // the search there keeps h <= h_star sound because every reported h lies
  // below it.
  const double dual_clamp = suffix_max[0] + 0.01;

  // Pass 2: certification and dual pivots, all searches ceilinged.
  double beta_star_run = 1.0;
  std::vector<double> level_escape;
  const size_t usable = m > static_cast<size_t>(policy.depth_cap)
                            ? m - static_cast<size_t>(policy.depth_cap)
                            : 0;
  for (size_t d = 0; d < levels.size(); ++d) {
    const LevelInfo& info = levels[d];
    if (policy.max_certified_len > 0 && trace.certified_len >= policy.max_certified_len) break;
    if (trace.certified_len + 1 > usable) {
      if (trace.diagnostic.empty()) trace.diagnostic = "trunk margin caps certified length";
      break;
    }
    if (!info.all_contained) {
      trace.diagnostic = "frontier straddles siblings";
      break;
    }
    if (!info.window_filled) {
      trace.diagnostic = "tail window underfilled (run too short)";
      break;
    }
    NodeId parent_v = trace.trunk[d];
    NodeId child_v = trace.trunk[d + 1];
    double ceiling = std::max(info.tail_max + 1e-12, std::min(beta_star_run, dual_clamp));
    bool tail_ok = true;
    double escape_lb = 1.0;
    for (uint32_t j = 0; j < arena.degree(parent_v); ++j) {
      NodeId s = arena.child(parent_v, j);
      if (s == child_v) continue;
      double u_s = arena.weight(s);
      double beta_lb;
      bool upper_below_tail = false;
      if (u_s >= ceiling) {
        beta_lb = 0.0;  // search not needed, U_s alone clears the ceiling
      } else {
        PivotBound pb = pivot_beta(arena, s, policy.depth_cap, policy.tol, ceiling);
        beta_lb = pb.lower;
        if (!pb.truncated && std::max(u_s, pb.upper) < info.tail_max) upper_below_tail = true;
      }
      for (const auto& [sb, mb] : info.sibling_boundary_min)
        if (sb == s) beta_lb = std::max(beta_lb, mb);
      escape_lb = std::min(escape_lb, std::max(u_s, beta_lb));
      if (upper_below_tail) tail_ok = false;
    }
    if (!tail_ok) {
      trace.diagnostic = "tail weights exceed sibling escape bound";
      break;
    }
    level_escape.push_back(escape_lb);
    beta_star_run = std::min(beta_star_run, escape_lb);
    trace.path.push_back(child_v);
    trace.certified_len += 1;
  }

  // Pivot intervals and the trace arrays along the certified prefix.
  double p_c = 1.0 / arena.dist().mean();
  double beta_star = 1.0;
  for (size_t n = 0; n < trace.path.size(); ++n) {
    // Exact below the trunk-window ceiling; reported as a truncated interval
    // [lower, 1] on budget-capped freak configurations.
    PivotBound pb = pivot_beta(arena, trace.path[n], policy.depth_cap, policy.tol,
                               window_ceiling(n));
    trace.beta_lower.push_back(pb.lower);
    trace.beta_upper.push_back(pb.upper);
    trace.h.push_back(suffix_max[n] - p_c);
    if (n >= 1) beta_star = std::min(beta_star, level_escape[n - 1]);
    trace.h_star.push_back(beta_star - p_c);
  }
  return trace;
}

// Frontier-plurality trunk with the suffix-max pivot estimates, without
// certification or dual-pivot machinery. Enough for distribution-level
// pivot sampling where only the leading h_n values matter; h[n] is exact
// whenever the true pivot exceeds the trunk-tail scale.
struct TrunkEstimate {
  std::vector<NodeId> trunk;  // gamma_0 .. gamma_M by frontier plurality
  std::vector<double> h;      // suffix-max pivot estimates, size trunk.size()
};

inline TrunkEstimate trunk_pivots(const InvasionRun& run, TreeArena& arena,
                                  double frontier_fraction = 0.25) {
  const auto& inv = run.invaded;
  const size_t n_inv = inv.size();
  std::vector<uint32_t> pos_of(arena.size(), kNoNode);
  for (size_t i = 0; i < n_inv; ++i) pos_of[inv[i].node] = static_cast<uint32_t>(i);
  size_t f_count =
      std::max<size_t>(static_cast<size_t>(std::ceil(frontier_fraction * double(n_inv))), 1);
  size_t f_begin = n_inv - f_count;
  std::vector<uint32_t> cnt_f(n_inv, 0);
  for (size_t i = f_begin; i < n_inv; ++i) cnt_f[i] = 1;
  for (size_t i = n_inv - 1; i > 0; --i) cnt_f[pos_of[arena.parent(inv[i].node)]] += cnt_f[i];

  TrunkEstimate est;
  est.trunk.push_back(arena.root());
  NodeId cur = arena.root();
  while (true) {
    NodeId best = kNoNode;
    uint32_t best_cnt = 0;
    for (uint32_t j = 0; j < arena.degree(cur); ++j) {
      NodeId c = arena.child(cur, j);
      uint32_t p = c < pos_of.size() ? pos_of[c] : kNoNode;
      if (p == kNoNode || cnt_f[p] == 0) continue;
      if (cnt_f[p] > best_cnt) {
        best_cnt = cnt_f[p];
        best = c;
      }
    }
    if (best == kNoNode) break;
    est.trunk.push_back(best);
    cur = best;
  }
  double p_c = 1.0 / arena.dist().mean();
  size_t m = est.trunk.size() - 1;
  est.h.assign(m + 1, -p_c);
  double suffix = 0.0;
  for (size_t k = m; k >= 1; --k) {
    suffix = std::max(suffix, arena.weight(est.trunk[k]));
    est.h[k - 1] = suffix - p_c;
  }
  return est;
}

// Largest n whose suffix-max pivot estimate is trustworthy: the remaining
// trunk window must be long enough to renew the running maximum at the
// scale of h_n (the chain jumps at rate ~ mu h per step, so the window
// needs margin / (mu h_n) entries).
inline size_t resolvable_pivot_length(const BackboneTrace& trace, double mu,
                                      double margin = 3.0) {
  size_t m = trace.trunk.size() - 1;
  size_t n = 0;
  while (n + 1 < trace.h.size()) {
    double h = trace.h[n + 1];
    if (!(h > 0.0)) break;
    if (double(m - (n + 1)) * mu * h < margin) break;
    ++n;
  }
  return n;
}

// Consistency probe: whenever the pivot intervals of the competing children
// are disjoint, the certified child must be the argmin of
// max(U_child, beta(child)). Returns {checked, violations}.
inline std::pair<int, int> backbone_argmin_consistency(const BackboneTrace& trace,
                                                       TreeArena& arena, int depth_cap = 0) {
  if (depth_cap == 0) depth_cap = 2 * trace.policy.depth_cap;
  int checked = 0, violations = 0;
  double p_c = 1.0 / arena.dist().mean();
  for (size_t n = 1; n < trace.path.size(); ++n) {
    if (n + static_cast<size_t>(depth_cap) >= trace.trunk.size()) break;
    NodeId par = trace.path[n - 1];
    NodeId chosen = trace.path[n];
    // The trunk window bounds the chosen minimax from above, keeping its
    // search exact; h already carries the trunk estimate.
    double win = 0.0;
    for (size_t k = n + 1; k <= n + static_cast<size_t>(depth_cap); ++k)
      win = std::max(win, arena.weight(trace.trunk[k]));
    PivotBound pb_chosen =
        pivot_beta(arena, chosen, depth_cap, trace.policy.tol, win + 1e-9);
    GWIP_ASSERT(!pb_chosen.truncated);
    if (pb_chosen.inconclusive) continue;  // no honest upper bound to compare against
    double chosen_lo = std::max(arena.weight(chosen), pb_chosen.lower);
    double chosen_hi = std::max(arena.weight(chosen), pb_chosen.upper);
    // Rival escape values above chosen_hi are disjoint-right however far the
    // searches run, so the ceiling keeps the comparison exact and cheap.
    std::vector<std::pair<double, double>> rival_ivals;
    for (uint32_t j = 0; j < arena.degree(par); ++j) {
      NodeId c = arena.child(par, j);
      if (c == chosen) continue;
      double u_c = arena.weight(c);
      if (u_c > chosen_hi) {
        rival_ivals.emplace_back(u_c, 1.0);
        continue;
      }
      PivotBound pb = pivot_beta(arena, c, depth_cap, trace.policy.tol, chosen_hi + 1e-9);
      if (pb.truncated || pb.inconclusive) {
        rival_ivals.emplace_back(std::max(u_c, pb.lower), 1.0);
      } else {
        rival_ivals.emplace_back(std::max(u_c, pb.lower), std::max(u_c, pb.upper));
      }
    }
    bool disjoint = true;
    for (auto& [lo, hi] : rival_ivals)
      if (!(chosen_hi < lo || hi < chosen_lo)) disjoint = false;
    if (!disjoint) continue;
    ++checked;
    for (auto& [lo, hi] : rival_ivals)
      if (hi < chosen_lo) ++violations;
  }
  return {checked, violations};
}

}  // namespace gwip
