#include "gwip/tree.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "gwip/stats.hpp"

namespace gwip {
namespace {

TEST(Tree, RootHasSampledDegree) {
  TreeArena arena(OffspringDistribution::deterministic(2), 1234);
  EXPECT_EQ(arena.degree(arena.root()), 2u);
  auto [first, deg] = arena.expand(arena.root());
  EXPECT_EQ(deg, 2u);
  EXPECT_EQ(arena.depth(first), 1u);
  EXPECT_EQ(arena.depth(first + 1), 1u);
  EXPECT_EQ(arena.parent(first), arena.root());
}

TEST(Tree, DeterministicUnderReplay) {
  auto dist = OffspringDistribution::two_point(0.4);
  TreeArena a(dist, 555), b(dist, 555);
  martingale(a.view(), 10);
  martingale(b.view(), 10);
  ASSERT_EQ(a.size(), b.size());
  for (NodeId v = 0; v < a.size(); ++v) {
    EXPECT_EQ(a.degree(v), b.degree(v));
    EXPECT_DOUBLE_EQ(a.weight(v), b.weight(v));
  }
}

TEST(Tree, ExpandIsIdempotent) {
  TreeArena arena(OffspringDistribution::two_point(0.4), 9);
  auto [f1, d1] = arena.expand(arena.root());
  size_t size_after = arena.size();
  std::vector<double> w1;
  for (uint32_t j = 0; j < d1; ++j) w1.push_back(arena.weight(f1 + j));
  auto [f2, d2] = arena.expand(arena.root());
  EXPECT_EQ(f1, f2);
  EXPECT_EQ(d1, d2);
  EXPECT_EQ(arena.size(), size_after);  // no new nodes, no randomness consumed
  for (uint32_t j = 0; j < d1; ++j) EXPECT_DOUBLE_EQ(arena.weight(f1 + j), w1[j]);
}

TEST(Tree, LazyEagerEquivalence) {
  auto dist = OffspringDistribution::two_point(0.4);
  // Eager: realize everything to depth 8 in BFS order.
  TreeArena eager(dist, 4242);
  martingale(eager.view(), 8);
  // Lazy: expand along a zig-zag path first, then everything.
  TreeArena lazy(dist, 4242);
  NodeId v = lazy.root();
  for (int d = 0; d < 8; ++d) {
    auto [first, deg] = lazy.expand(v);
    v = first + (d % deg == 0 ? 0 : deg - 1);
  }
  martingale(lazy.view(), 8);

  // Compare by position (path of child slots), not by node id.
  struct Pos {
    NodeId eager_id, lazy_id;
  };
  std::vector<Pos> level{{eager.root(), lazy.root()}}, next;
  for (int d = 0; d < 8; ++d) {
    next.clear();
    for (auto [ev, lv] : level) {
      ASSERT_EQ(eager.degree(ev), lazy.degree(lv));
      EXPECT_DOUBLE_EQ(eager.weight(ev), lazy.weight(lv));
      for (uint32_t j = 0; j < eager.degree(ev); ++j)
        next.push_back({eager.child(ev, j), lazy.child(lv, j)});
    }
    level.swap(next);
  }
}

TEST(Tree, RootDegreeFrequency) {
  auto dist = OffspringDistribution::two_point(0.4);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    TreeArena arena(dist, 70000 + i);
    if (arena.degree(arena.root()) == 1) ++ones;
  }
  EXPECT_NEAR(double(ones) / n, 0.4, 0.005);
}

TEST(Tree, ChildWeightsAreUniform) {
  TreeArena arena(OffspringDistribution::deterministic(2), 31337);
  martingale(arena.view(), 19);  // 2^20 - 1 nodes
  std::vector<double> weights;
  weights.reserve(arena.size());
  for (NodeId v = 1; v < arena.size(); ++v) weights.push_back(arena.weight(v));
  ASSERT_GT(weights.size(), 1000000u);
  double ks = ks_analytic(std::move(weights), [](double x) { return x; });
  EXPECT_LT(ks, 0.002);
}

TEST(Tree, MartingaleOnBinaryTree) {
  TreeArena arena(OffspringDistribution::deterministic(2), 1);
  MartingaleTrace trace = martingale(arena.view(), 10);
  EXPECT_EQ(trace.z[10], 1024u);
  EXPECT_DOUBLE_EQ(trace.w[10], 1.0);
  EXPECT_EQ(trace.z[0], 1u);
}

TEST(Tree, MartingaleMeanNearOne) {
  auto dist = OffspringDistribution::two_point(0.4);
  const int trees = 3000, depth = 12;
  double sum = 0.0;
  for (int i = 0; i < trees; ++i) {
    TreeArena arena(dist, 90000 + i);
    sum += martingale(arena.view(), depth).w[depth];
  }
  // Var W = Var Z / (mu^2 - mu) = 0.24/0.96 = 0.25; 3 sigma of the mean ~ 0.028
  EXPECT_NEAR(sum / trees, 1.0, 0.03);
}

TEST(Tree, ChildDecompositionPartitionsMartingale) {
  auto dist = OffspringDistribution::two_point(0.4);
  TreeArena arena(dist, 777);
  const int n = 9;
  MartingaleTrace trace = martingale(arena.view(), n);
  std::vector<double> split = martingale_child_split(arena.view(), n);
  double total = 0.0;
  for (double w : split) total += w;
  EXPECT_NEAR(total, trace.w[n], 1e-12);
}

TEST(Tree, SubtreeViewRebasesDepth) {
  TreeArena arena(OffspringDistribution::deterministic(2), 5);
  martingale(arena.view(), 3);
  NodeId v = arena.child(arena.child(arena.child(arena.root(), 1), 0), 1);
  ASSERT_EQ(arena.depth(v), 3u);
  TreeView sub = arena.subtree(v);
  EXPECT_EQ(sub.depth(v), 0u);
  MartingaleTrace trace = martingale(sub, 5);
  EXPECT_EQ(trace.z[5], 32u);  // binary subtree
  // Expanding the view realized the parent arena to depth 8.
  bool depth8 = false;
  for (NodeId u = 0; u < arena.size(); ++u)
    if (arena.depth(u) == 8) depth8 = true;
  EXPECT_TRUE(depth8);
}

TEST(Tree, IdentityView) {
  TreeArena arena(OffspringDistribution::deterministic(3), 6);
  TreeView v = arena.view();
  EXPECT_EQ(v.root(), arena.root());
  EXPECT_EQ(v.depth(arena.root()), 0u);
}

TEST(Tree, SerializationRoundTripIsBitExact) {
  auto dist = OffspringDistribution::two_point(0.4);
  TreeArena arena(dist, 2024);
  martingale(arena.view(), 5);
  PrefixTemplate tmpl = PrefixTemplate::from_view(arena.view(), 5, /*pin_frontier_degs=*/true);

  std::stringstream ss;
  tmpl.write(ss);
  PrefixTemplate parsed = PrefixTemplate::read(ss);
  ASSERT_EQ(parsed.size(), tmpl.size());
  for (size_t i = 0; i < tmpl.size(); ++i) {
    EXPECT_EQ(parsed.node(i).parent, tmpl.node(i).parent);
    EXPECT_EQ(parsed.node(i).depth, tmpl.node(i).depth);
    EXPECT_EQ(parsed.node(i).deg, tmpl.node(i).deg);
    EXPECT_EQ(parsed.node(i).u, tmpl.node(i).u);  // exact: hex float round trip
  }

  // Replay: pinned weights reproduce the original prefix exactly.
  auto shared = std::make_shared<const PrefixTemplate>(std::move(parsed));
  TreeArena replay(dist, 999, shared, /*pin_weights=*/true);
  martingale(replay.view(), 5);
  std::vector<NodeId> orig_level{arena.root()}, rep_level{replay.root()}, n1, n2;
  for (int d = 0; d < 5; ++d) {
    n1.clear();
    n2.clear();
    for (size_t i = 0; i < orig_level.size(); ++i) {
      NodeId ov = orig_level[i], rv = rep_level[i];
      ASSERT_EQ(arena.degree(ov), replay.degree(rv));
      EXPECT_EQ(arena.weight(ov), replay.weight(rv));
      for (uint32_t j = 0; j < arena.degree(ov); ++j) {
        n1.push_back(arena.child(ov, j));
        n2.push_back(replay.child(rv, j));
      }
    }
    orig_level.swap(n1);
    rep_level.swap(n2);
  }
}

TEST(Tree, FrozenTopologyRedrawsWeights) {
  auto dist = OffspringDistribution::two_point(0.4);
  TreeArena arena(dist, 11);
  martingale(arena.view(), 6);
  auto tmpl = std::make_shared<const PrefixTemplate>(
      PrefixTemplate::from_view(arena.view(), 6, false));

  TreeArena rep1(dist, 100, tmpl, false), rep2(dist, 101, tmpl, false);
  martingale(rep1.view(), 6);
  martingale(rep2.view(), 6);
  // Same topology on the prefix...
  ASSERT_EQ(rep1.degree(rep1.root()), arena.degree(arena.root()));
  std::vector<NodeId> l0{rep1.root()}, l1{rep2.root()}, m0, m1;
  int weight_matches = 0, nodes = 0;
  for (int d = 0; d < 6; ++d) {
    m0.clear();
    m1.clear();
    for (size_t i = 0; i < l0.size(); ++i) {
      ASSERT_EQ(rep1.degree(l0[i]), rep2.degree(l1[i]));
      ++nodes;
      if (rep1.weight(l0[i]) == rep2.weight(l1[i])) ++weight_matches;
      for (uint32_t j = 0; j < rep1.degree(l0[i]); ++j) {
        m0.push_back(rep1.child(l0[i], j));
        m1.push_back(rep2.child(l1[i], j));
      }
    }
    l0.swap(m0);
    l1.swap(m1);
  }
  // ...but fresh weights per replicate.
  EXPECT_EQ(weight_matches, 0);
  EXPECT_GT(nodes, 10);
}

TEST(Tree, NodeBudgetRaisesResourceError) {
  TreeArena arena(OffspringDistribution::deterministic(2), 3, /*node_budget=*/16);
  try {
    martingale(arena.view(), 10);
    FAIL() << "expected resource_error";
  } catch (const resource_error& e) {
    EXPECT_NE(std::string(e.what()).find("depth"), std::string::npos);
  }
}

}  // namespace
}  // namespace gwip
