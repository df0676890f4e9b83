#include <gtest/gtest.h>

#include <set>

#include "drf/error.hpp"
#include "drf/tree.hpp"
#include "support.hpp"

namespace drf {
namespace {

TEST(Gini, Examples) {
  EXPECT_EQ(gini(10, 0), 0.0);
  EXPECT_EQ(gini(5, 5), 0.5);
  EXPECT_NEAR(gini(30, 10), 1.0 - 0.75 * 0.75 - 0.25 * 0.25, 1e-15);
  EXPECT_THROW(gini(0, 0), DomainError);
}

TEST(Gini, DecreaseIsSymmetric) {
  const ClassCounts a{3, 11}, b{17, 2};
  EXPECT_EQ(gini_decrease(a, b), gini_decrease(b, a));
}

// Builds a one-feature table from per-level (pos, neg) counts.
Table level_table(const std::vector<std::pair<int, int>>& counts) {
  FeatureSpec f{"f", FeatureKind::categorical, {}};
  std::vector<Level> col;
  std::vector<std::uint8_t> y;
  for (std::size_t v = 0; v < counts.size(); ++v) {
    f.levels.push_back(std::string(1, static_cast<char>('a' + v)));
    for (int i = 0; i < counts[v].first; ++i) {
      col.push_back(static_cast<Level>(v));
      y.push_back(1);
    }
    for (int i = 0; i < counts[v].second; ++i) {
      col.push_back(static_cast<Level>(v));
      y.push_back(0);
    }
  }
  return Table(Schema({f}, "y"), {col}, y);
}

std::vector<std::size_t> all_rows(const Table& t) {
  std::vector<std::size_t> rows(t.n_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

TEST(BestSplit, PureNodeHasNoSplit) {
  const auto t = level_table({{4, 0}, {3, 0}});
  const std::vector<std::size_t> features{0};
  EXPECT_FALSE(best_split(t, all_rows(t), features, 1));
}

TEST(BestSplit, SeparatingFeatureRemovesAllImpurity) {
  const auto t = level_table({{6, 0}, {0, 4}});
  const std::vector<std::size_t> features{0};
  const auto s = best_split(t, all_rows(t), features, 1);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->decrease, gini(6, 4));
  EXPECT_EQ(s->split.left_levels, LevelSet{0});
}

TEST(BestSplit, ThreeLevelsMatchExhaustive) {
  const auto t = level_table({{8, 2}, {5, 5}, {1, 9}});
  const std::vector<std::size_t> features{0};
  const auto rows = all_rows(t);
  const auto s = best_split(t, rows, features, 1);
  const auto oracle = test::exhaustive_best_split(t, rows, features, 1);
  ASSERT_TRUE(s);
  EXPECT_NEAR(s->decrease, oracle.decrease, 1e-15);
  // {a} vs {b, c} or {a, b} vs {c}: the oracle decides.
  EXPECT_EQ(s->split.left_levels, oracle.left);
}

TEST(BestSplit, MinLeafRespected) {
  const auto t = level_table({{3, 0}, {10, 10}});
  const std::vector<std::size_t> features{0};
  EXPECT_TRUE(best_split(t, all_rows(t), features, 3));
  EXPECT_FALSE(best_split(t, all_rows(t), features, 4));
}

TEST(BestSplit, TiesPreferLowerFeature) {
  // Two identical copies of one feature.
  FeatureSpec f{"f", FeatureKind::categorical, {"a", "b"}};
  FeatureSpec g{"g", FeatureKind::categorical, {"a", "b"}};
  const std::vector<Level> col{0, 0, 1, 1, 0, 1};
  const Table t(Schema({f, g}, "y"), {col, col}, {1, 1, 0, 0, 1, 0});
  const std::vector<std::size_t> features{1, 0};
  const auto s = best_split(t, all_rows(t), features, 1);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->split.feature, 0u);
}

TEST(BestSplit, RandomNodesMatchExhaustive) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = test::random_table(rng, 10 + uniform_below(rng, 300), 1 + uniform_below(rng, 4), 6,
                                      0.5 + 0.4 * uniform01(rng));
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
      if (bernoulli(rng, 0.7)) rows.push_back(i);
    }
    std::vector<std::size_t> features(t.n_features());
    for (std::size_t f = 0; f < features.size(); ++f) features[f] = f;
    const auto s = best_split(t, rows, features, 1);
    const auto oracle = test::exhaustive_best_split(t, rows, features, 1);
    if (oracle.decrease <= kMinDecrease) {
      EXPECT_FALSE(s) << "trial " << trial;
      continue;
    }
    ASSERT_TRUE(s) << "trial " << trial;
    EXPECT_NEAR(s->decrease, oracle.decrease, 1e-14) << "trial " << trial;
  }
}

Table xor_table() {
  FeatureSpec x1{"x1", FeatureKind::binary, {"0", "1"}};
  FeatureSpec x2{"x2", FeatureKind::binary, {"0", "1"}};
  std::vector<Level> a, b;
  std::vector<std::uint8_t> y;
  for (int copy = 0; copy < 100; ++copy) {
    for (Level u = 0; u < 2; ++u) {
      for (Level v = 0; v < 2; ++v) {
        a.push_back(u);
        b.push_back(v);
        y.push_back(u != v ? 1 : 0);
      }
    }
  }
  return Table(Schema({x1, x2}, "y"), {a, b}, y);
}

TEST(GrowTree, BudgetOneIsSingleLeaf) {
  Rng rng(1);
  const auto t = xor_table();
  const auto tree = grow_tree(t, {}, GrowOptions{1, 0, 1}, rng);
  EXPECT_EQ(tree.n_leaves(), 1u);
  for (std::size_t i = 0; i < t.n_rows(); ++i) EXPECT_EQ(tree.encode(t.row(i)), 0u);
  EXPECT_TRUE(tree.path_rule(0).literals.empty());
}

TEST(GrowTree, ConstantFeaturesGiveSingleLeaf) {
  const auto t = level_table({{5, 5}});
  Rng rng(1);
  EXPECT_EQ(grow_tree(t, {}, GrowOptions{8, 0, 1}, rng).n_leaves(), 1u);
}

TEST(GrowTree, XorFourPureLeaves) {
  // The first split of pure XOR has zero decrease, so the root split needs
  // a hint: XOR with one extra copy of (0,1) breaks the tie just enough.
  auto base = xor_table();
  std::vector<std::size_t> rows = all_rows(base);
  rows.push_back(1);
  Rng rng(1);
  std::vector<std::vector<std::size_t>> leaf_rows;
  const auto tree = grow_tree(base, rows, GrowOptions{4, 0, 1}, rng, &leaf_rows);
  ASSERT_EQ(tree.n_leaves(), 4u);
  // Each leaf holds exactly one XOR cell and is pure.
  std::set<std::pair<Level, Level>> cells;
  for (const auto& lr : leaf_rows) {
    std::set<std::pair<Level, Level>> here;
    for (auto r : lr) here.insert({base.at(r, 0), base.at(r, 1)});
    ASSERT_EQ(here.size(), 1u);
    cells.insert(*here.begin());
  }
  EXPECT_EQ(cells.size(), 4u);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < base.n_rows(); ++i) {
    const auto& leaf = tree.leaf(tree.encode(base.row(i)));
    correct += (leaf.counts.pos > leaf.counts.neg) == (base.target()[i] == 1);
  }
  EXPECT_EQ(correct, base.n_rows());
}

TEST(Encode, UnseenLevelGoesToHeavierChild) {
  // Root splits f (levels a, b, c) with a left (70 rows), b right (30);
  // c was never seen at training.
  DecisionTree::Node root, left, right;
  left.counts = {50, 20};
  left.region = 0;
  right.counts = {5, 25};
  right.region = 1;
  root.leaf = false;
  root.counts = left.counts + right.counts;
  root.feature = 0;
  root.left_levels = {0};
  root.right_levels = {1};
  root.left = 1;
  root.right = 2;
  const DecisionTree tree({root, left, right}, {3});
  const std::vector<Level> unseen{2};
  EXPECT_EQ(tree.encode(unseen), 0u);
  // The left path rule now includes the unseen level.
  EXPECT_EQ(tree.path_rule(0).literals.front().allowed, (LevelSet{0, 2}));

  DecisionTree::Node light = left, heavy = right;
  light.counts = {1, 9};
  heavy.counts = {40, 40};
  root.counts = light.counts + heavy.counts;
  const DecisionTree flipped({root, light, heavy}, {3});
  EXPECT_EQ(flipped.encode(unseen), 1u);
  // Beyond the schema's domain (a level appended by a later CSV).
  const std::vector<Level> beyond{7};
  EXPECT_EQ(flipped.encode(beyond), 1u);
  EXPECT_THROW(flipped.encode(std::vector<Level>{0, 0}), EncodingError);
}

TEST(PathRule, DepthOneSplit) {
  DecisionTree::Node root, left, right;
  left.counts = {3, 1};
  right.counts = {1, 3};
  left.region = 0;
  right.region = 1;
  root.leaf = false;
  root.counts = {4, 4};
  root.left_levels = {1};
  root.right_levels = {0};
  root.left = 1;
  root.right = 2;
  const DecisionTree tree({root, left, right}, {2});
  const auto rule = tree.path_rule(0);
  ASSERT_EQ(rule.literals.size(), 1u);
  EXPECT_EQ(rule.literals[0].allowed, LevelSet{1});
  EXPECT_THROW(tree.path_rule(2), LookupError);
}

TEST(PathRule, StackedSplitsMerge) {
  // f has levels a..d; the root keeps {a, b} left, the left child keeps {a}.
  DecisionTree::Node root, mid, ll, lr, r;
  ll.counts = {4, 0};
  ll.region = 0;
  lr.counts = {0, 4};
  lr.region = 1;
  r.counts = {2, 2};
  r.region = 2;
  mid.leaf = false;
  mid.counts = ll.counts + lr.counts;
  mid.left_levels = {0};
  mid.right_levels = {1};
  mid.left = 2;
  mid.right = 3;
  root.leaf = false;
  root.counts = mid.counts + r.counts;
  root.left_levels = {0, 1};
  root.right_levels = {2, 3};
  root.left = 1;
  root.right = 4;
  const DecisionTree tree({root, mid, ll, lr, r}, {4});
  const auto rule = tree.path_rule(0);
  ASSERT_EQ(rule.literals.size(), 1u);
  EXPECT_EQ(rule.literals[0].allowed, LevelSet{0});
  // The merged literal selects the same rows as the two path literals.
  for (Level v = 0; v < 4; ++v) {
    const bool unmerged = (v == 0 || v == 1) && v == 0;
    EXPECT_EQ(rule.literals[0].satisfied_by(v), unmerged);
  }
}

TEST(DecisionTree, RejectsInconsistentNodes) {
  DecisionTree::Node root, left, right;
  left.counts = {1, 1};
  right.counts = {1, 1};
  right.region = 1;
  root.leaf = false;
  root.counts = {3, 2};
  root.left_levels = {0};
  root.right_levels = {1};
  root.left = 1;
  root.right = 2;
  EXPECT_THROW(DecisionTree({root, left, right}, {2}), LookupError);
}

TEST(GrowTree, PartitionFidelityAndBudget) {
  Rng data_rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto t = test::random_table(data_rng, 50 + uniform_below(data_rng, 1950),
                                      1 + uniform_below(data_rng, 20), 6);
    GrowOptions opts;
    opts.leaf_budget = 1 + uniform_below(data_rng, 12);
    opts.feature_sample = uniform_below(data_rng, t.n_features() + 1);
    opts.min_leaf = 1 + uniform_below(data_rng, 6);
    std::vector<std::size_t> rows;
    if (trial % 2) {
      for (std::size_t i = 0; i < t.n_rows(); ++i) rows.push_back(uniform_below(data_rng, t.n_rows()));
    }
    Rng rng(static_cast<std::uint64_t>(trial));
    std::vector<std::vector<std::size_t>> leaf_rows;
    const auto tree = grow_tree(t, rows, opts, rng, &leaf_rows);
    ASSERT_LE(tree.n_leaves(), opts.leaf_budget);

    // Leaf row multisets partition the training multiset.
    std::vector<std::size_t> expected = rows.empty() ? all_rows(t) : rows;
    std::vector<std::size_t> got;
    for (RegionId r = 0; r < leaf_rows.size(); ++r) {
      for (auto i : leaf_rows[r]) {
        got.push_back(i);
        ASSERT_EQ(tree.encode(t.row(i)), r);
      }
    }
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, expected);

    // encode = r exactly when the row satisfies path_rule(r).
    std::vector<Conjunction> rules;
    for (RegionId r = 0; r < tree.n_leaves(); ++r) rules.push_back(tree.path_rule(r));
    for (std::size_t i = 0; i < t.n_rows(); ++i) {
      const auto row = t.row(i);
      const auto region = tree.encode(row);
      for (RegionId r = 0; r < tree.n_leaves(); ++r) ASSERT_EQ(rules[r].satisfied_by(row), r == region);
    }

    // Stopping short of the budget means no leaf had a usable split.
    if (tree.n_leaves() < opts.leaf_budget && opts.feature_sample == 0) {
      std::vector<std::size_t> features(t.n_features());
      for (std::size_t f = 0; f < features.size(); ++f) features[f] = f;
      for (const auto& lr : leaf_rows) EXPECT_FALSE(best_split(t, lr, features, opts.min_leaf));
    }
  }
}

TEST(GrowTree, Deterministic) {
  Rng data_rng(3);
  const auto t = test::random_table(data_rng, 500, 8, 4);
  GrowOptions opts{7, 3, 5};
  Rng a(42), b(42);
  EXPECT_EQ(grow_tree(t, {}, opts, a), grow_tree(t, {}, opts, b));
}

}  // namespace
}  // namespace drf
