#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "gwip/errors.hpp"
#include "gwip/offspring.hpp"
#include "gwip/rng.hpp"

namespace gwip {

using NodeId = uint32_t;
inline constexpr NodeId kNoNode = 0xFFFFFFFFu;
inline constexpr uint32_t kUnknownDeg = 0xFFFFFFFFu;

// Per-generation counts of a realized prefix: z[n] = |T_n| and the
// martingale w[n] = z[n] / mu^n.
struct MartingaleTrace {
  std::vector<uint64_t> z;
  std::vector<double> w;
};

class TreeArena;

// Read/expand view rooted at some vertex; depths are re-based so the view
// root has depth 0. Views share the arena's storage and its confinement.
class TreeView {
 public:
  TreeView(TreeArena& arena, NodeId root) : arena_(&arena), root_(root) {}
  TreeArena& arena() const { return *arena_; }
  NodeId root() const { return root_; }
  uint32_t depth(NodeId v) const;
  TreeView subtree(NodeId v) const { return TreeView(*arena_, v); }

 private:
  TreeArena* arena_;
  NodeId root_;
};

// Frozen first generations of a tree: topology (offspring counts) plus
// weights, in BFS order so that children stay contiguous. Backs both the
// quenched-prefix replicates of the measure experiments (weights redrawn)
// and text serialization for replay (weights pinned bit-exactly).
class PrefixTemplate {
 public:
  struct TNode {
    NodeId parent = kNoNode;
    NodeId first_child = kNoNode;
    uint32_t depth = 0;
    uint32_t deg = kUnknownDeg;
    double u = 0.0;
  };

  static PrefixTemplate from_view(TreeView view, int max_depth, bool pin_frontier_degs = false);

  size_t size() const { return nodes_.size(); }
  const TNode& node(size_t i) const { return nodes_[i]; }

  void write(std::ostream& os) const {
    char buf[128];
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const TNode& t = nodes_[i];
      // hex float keeps weights bit-exact through the round trip
      std::snprintf(buf, sizeof(buf), "%zu %d %u %d %a\n", i,
                    t.parent == kNoNode ? -1 : static_cast<int>(t.parent), t.depth,
                    t.deg == kUnknownDeg ? -1 : static_cast<int>(t.deg), t.u);
      os << buf;
    }
  }

  static PrefixTemplate read(std::istream& is) {
    PrefixTemplate tmpl;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      size_t id;
      long long parent;
      uint32_t depth;
      long long deg;
      double u;
      char ubuf[64];
      if (std::sscanf(line.c_str(), "%zu %lld %u %lld %63s", &id, &parent, &depth, &deg, ubuf) != 5)
        throw std::invalid_argument("tree prefix: malformed line '" + line + "'");
      u = std::strtod(ubuf, nullptr);
      TNode t;
      t.parent = parent < 0 ? kNoNode : static_cast<NodeId>(parent);
      t.depth = depth;
      t.deg = deg < 0 ? kUnknownDeg : static_cast<uint32_t>(deg);
      t.u = u;
      if (id != tmpl.nodes_.size())
        throw std::invalid_argument("tree prefix: ids must be consecutive from 0");
      tmpl.nodes_.push_back(t);
    }
    // Recover child ranges; children of a node are contiguous in BFS order.
    for (size_t i = 0; i < tmpl.nodes_.size(); ++i) {
      NodeId par = tmpl.nodes_[i].parent;
      if (par == kNoNode) continue;
      if (par >= tmpl.nodes_.size())
        throw std::invalid_argument("tree prefix: parent id out of range");
      if (tmpl.nodes_[par].first_child == kNoNode)
        tmpl.nodes_[par].first_child = static_cast<NodeId>(i);
    }
    return tmpl;
  }

 private:
  friend class TreeArena;
  std::vector<TNode> nodes_;
};

// Lazily grown Galton-Watson tree with per-vertex uniform weights.
//
// Every vertex carries a positional RNG key split from its parent's key by
// child slot, so (deg_v, U_v) depend only on the seed and the vertex's
// position. Expansion order cannot change the tree: expanding everything up
// front and expanding on demand during invasion agree on the touched region.
// Weights are assigned once at creation and never mutated.
//
// An arena is confined to one worker at a time (expansion mutates);
// independent replicate arenas run in parallel.
class TreeArena {
 public:
  static constexpr size_t kDefaultNodeBudget = 200000000;  // fail loudly, trees grow fast

  TreeArena(OffspringDistribution dist, uint64_t seed, size_t node_budget = kDefaultNodeBudget)
      : dist_(std::move(dist)), budget_(node_budget) {
    root_key_ = splitmix64(seed ^ 0x5bf03635u);
    create_node(kNoNode, 0, root_key_, 0);
  }

  // Replicate over a frozen prefix. With pin_weights the template weights are
  // kept (replay); otherwise all weights are redrawn from this arena's seed
  // while the prefix topology stays fixed. Fresh subtrees continue below the
  // template frontier either way.
  TreeArena(OffspringDistribution dist, uint64_t seed, std::shared_ptr<const PrefixTemplate> tmpl,
            bool pin_weights, size_t node_budget = kDefaultNodeBudget)
      : dist_(std::move(dist)), tmpl_(std::move(tmpl)), pin_weights_(pin_weights),
        budget_(node_budget) {
    GWIP_ASSERT(tmpl_ && tmpl_->size() > 0);
    root_key_ = splitmix64(seed ^ 0x5bf03635u);
    create_node(kNoNode, 0, root_key_, 0);
  }

  NodeId root() const { return 0; }
  size_t size() const { return nodes_.size(); }
  const OffspringDistribution& dist() const { return dist_; }

  NodeId parent(NodeId v) const { return nodes_[v].parent; }
  uint32_t depth(NodeId v) const { return nodes_[v].depth; }
  double weight(NodeId v) const { return nodes_[v].u; }
  uint32_t degree(NodeId v) const { return nodes_[v].deg; }
  bool is_expanded(NodeId v) const { return nodes_[v].first_child != kNoNode; }

  NodeId child(NodeId v, uint32_t j) const {
    GWIP_ASSERT(is_expanded(v) && j < nodes_[v].deg);
    return nodes_[v].first_child + j;
  }

  // Realizes the children of v exactly once; idempotent, and a second call
  // consumes no randomness. Returns (first child id, count).
  std::pair<NodeId, uint32_t> expand(NodeId v) {
    Node& n = nodes_[v];
    if (n.first_child != kNoNode) return {n.first_child, n.deg};
    uint32_t deg = n.deg;
    if (nodes_.size() + deg > budget_)
      throw resource_error("node budget exceeded while expanding at depth " +
                           std::to_string(n.depth + 1));
    NodeId first = static_cast<NodeId>(nodes_.size());
    uint32_t node_depth = n.depth;
    uint64_t node_key = n.key;
    uint32_t node_tmpl = n.tmpl;
    nodes_[v].first_child = first;
    for (uint32_t j = 0; j < deg; ++j) {
      uint32_t child_tmpl = kNoNode;
      if (tmpl_ && node_tmpl != kNoNode) {
        NodeId tfc = tmpl_->nodes_[node_tmpl].first_child;
        if (tfc != kNoNode) child_tmpl = tfc + j;
      }
      create_node(v, node_depth + 1, mix_key(node_key, j + 1), child_tmpl);
    }
    return {first, deg};
  }

  TreeView view() { return TreeView(*this, 0); }
  TreeView subtree(NodeId v) { return TreeView(*this, v); }

 private:
  struct Node {
    NodeId parent;
    NodeId first_child = kNoNode;
    uint32_t depth;
    uint32_t deg;
    uint32_t tmpl = kNoNode;  // template id when growing over a frozen prefix
    double u;
    uint64_t key;
  };

  void create_node(NodeId parent, uint32_t depth, uint64_t key, uint32_t tmpl_id) {
    Node n;
    n.parent = parent;
    n.depth = depth;
    n.key = key;
    RngStream stream(key);
    uint32_t deg;
    double u = stream.unit_at(1);
    if (tmpl_ && tmpl_id != kNoNode && tmpl_id < tmpl_->size()) {
      const PrefixTemplate::TNode& t = tmpl_->nodes_[tmpl_id];
      deg = t.deg != kUnknownDeg ? t.deg : static_cast<uint32_t>(dist_.sample_unit(stream.unit_at(0)));
      if (pin_weights_) u = t.u;
      n.tmpl = tmpl_id;
    } else {
      deg = static_cast<uint32_t>(dist_.sample_unit(stream.unit_at(0)));
    }
    n.deg = deg;
    n.u = u;
    nodes_.push_back(n);
  }

  OffspringDistribution dist_;
  std::shared_ptr<const PrefixTemplate> tmpl_;
  bool pin_weights_ = false;
  std::vector<Node> nodes_;
  uint64_t root_key_;
  size_t budget_;
};

inline uint32_t TreeView::depth(NodeId v) const {
  return arena_->depth(v) - arena_->depth(root_);
}

// Realizes the view to `depth` (expanding as needed) and returns Z_n, W_n
// for n <= depth.
inline MartingaleTrace martingale(TreeView view, int depth) {
  TreeArena& arena = view.arena();
  double mu = arena.dist().mean();
  MartingaleTrace trace;
  trace.z.assign(depth + 1, 0);
  trace.w.assign(depth + 1, 0.0);
  std::vector<NodeId> level{view.root()}, next;
  double mu_pow = 1.0;
  for (int n = 0; n <= depth; ++n) {
    trace.z[n] = level.size();
    trace.w[n] = static_cast<double>(level.size()) / mu_pow;
    mu_pow *= mu;
    if (n == depth) break;
    next.clear();
    for (NodeId v : level) {
      auto [first, deg] = arena.expand(v);
      for (uint32_t j = 0; j < deg; ++j) next.push_back(first + j);
    }
    level.swap(next);
  }
  return trace;
}

// W_n^{(i)}(root of view): the depth-n martingale mass split by child of the
// view root. Sums exactly to W_n.
inline std::vector<double> martingale_child_split(TreeView view, int n) {
  TreeArena& arena = view.arena();
  GWIP_ASSERT(n >= 1);
  double mu_pow = 1.0;
  for (int i = 0; i < n; ++i) mu_pow *= arena.dist().mean();
  auto [first, deg] = arena.expand(view.root());
  std::vector<double> split(deg, 0.0);
  std::vector<NodeId> level, next;
  for (uint32_t i = 0; i < deg; ++i) {
    uint64_t count = 0;
    level.assign(1, first + i);
    for (int d = 1; d < n; ++d) {
      next.clear();
      for (NodeId v : level) {
        auto [cfirst, cdeg] = arena.expand(v);
        for (uint32_t j = 0; j < cdeg; ++j) next.push_back(cfirst + j);
      }
      level.swap(next);
    }
    count = level.size();
    split[i] = static_cast<double>(count) / mu_pow;
  }
  return split;
}

inline PrefixTemplate PrefixTemplate::from_view(TreeView view, int max_depth,
                                                bool pin_frontier_degs) {
  TreeArena& arena = view.arena();
  PrefixTemplate tmpl;
  std::vector<NodeId> level{view.root()}, next;
  std::vector<NodeId> parent_tid{kNoNode};
  for (int d = 0; d <= max_depth; ++d) {
    next.clear();
    std::vector<NodeId> next_parent_tid;
    for (size_t i = 0; i < level.size(); ++i) {
      NodeId v = level[i];
      TNode t;
      t.parent = parent_tid[i];
      t.depth = static_cast<uint32_t>(d);
      t.u = arena.weight(v);
      t.deg = (d < max_depth || pin_frontier_degs) ? arena.degree(v) : kUnknownDeg;
      NodeId tid = static_cast<NodeId>(tmpl.nodes_.size());
      tmpl.nodes_.push_back(t);
      if (t.parent != kNoNode && tmpl.nodes_[t.parent].first_child == kNoNode)
        tmpl.nodes_[t.parent].first_child = tid;
      if (d < max_depth) {
        auto [first, deg] = arena.expand(v);
        for (uint32_t j = 0; j < deg; ++j) {
          next.push_back(first + j);
          next_parent_tid.push_back(tid);
        }
      }
    }
    level.swap(next);
    parent_tid.swap(next_parent_tid);
  }
  return tmpl;
}

}  // namespace gwip
