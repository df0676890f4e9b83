#include <gtest/gtest.h>

#include "drf/error.hpp"
#include "drf/expand.hpp"
#include "drf/model.hpp"
#include "drf/rule.hpp"
#include "support.hpp"

namespace drf {
namespace {

Literal lit(std::size_t f, LevelSet allowed) { return Literal{f, std::move(allowed)}; }
Conjunction conj(std::vector<Literal> literals) { return Conjunction{std::move(literals)}; }

const std::vector<std::size_t> kBinary3{2, 2, 2};

TEST(Simplify, Absorption) {
  // A ∨ (A & B) = A
  const Dnf in{{conj({lit(0, {1})}), conj({lit(0, {1}), lit(1, {1})})}, false};
  const auto out = simplify(in, kBinary3);
  ASSERT_EQ(out.terms.size(), 1u);
  EXPECT_EQ(out.terms[0], conj({lit(0, {1})}));
}

TEST(Simplify, MergeOnOneFeature) {
  // (A & B) ∨ (A & ¬B) = A
  const Dnf in{{conj({lit(0, {1}), lit(1, {1})}), conj({lit(0, {1}), lit(1, {0})})}, false};
  EXPECT_EQ(simplify(in, kBinary3).terms, std::vector<Conjunction>{conj({lit(0, {1})})});
}

TEST(Simplify, ContradictionAndTautology) {
  const Dnf contra{{conj({lit(0, {1}), lit(0, {0})})}, false};
  EXPECT_TRUE(simplify(contra, kBinary3).terms.empty());
  const Dnf taut{{conj({lit(2, {0, 1})}), conj({lit(0, {1})})}, false};
  EXPECT_EQ(simplify(taut, kBinary3), Dnf::tautology());
  EXPECT_EQ(simplify(Dnf::contradiction(), kBinary3), Dnf::contradiction());
}

TEST(Simplify, UnknownFeatureRejected) {
  const Dnf in{{conj({lit(5, {1})})}, false};
  EXPECT_THROW(simplify(in, kBinary3), SchemaError);
}

// All rows of a small domain.
std::vector<std::vector<Level>> every_row(const std::vector<std::size_t>& domain) {
  std::vector<std::vector<Level>> rows{{}};
  for (auto k : domain) {
    std::vector<std::vector<Level>> next;
    for (const auto& r : rows) {
      for (Level v = 0; v < k; ++v) {
        auto e = r;
        e.push_back(v);
        next.push_back(std::move(e));
      }
    }
    rows = std::move(next);
  }
  return rows;
}

Dnf random_dnf(Rng& rng, const std::vector<std::size_t>& domain) {
  Dnf d;
  const auto n_terms = uniform_below(rng, 7);
  for (std::size_t t = 0; t < n_terms; ++t) {
    Conjunction c;
    for (std::size_t f = 0; f < domain.size(); ++f) {
      if (!bernoulli(rng, 0.5)) continue;
      Literal l{f, {}};
      for (Level v = 0; v < domain[f]; ++v) {
        if (bernoulli(rng, 0.5)) l.allowed.push_back(v);
      }
      c.literals.push_back(l);
    }
    d.terms.push_back(c);
  }
  return d;
}

TEST(Simplify, RandomEquivalenceAndIdempotence) {
  Rng rng(99);
  const std::vector<std::size_t> domain{2, 3, 2, 4};
  const auto rows = every_row(domain);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = random_dnf(rng, domain);
    const auto out = simplify(in, domain);
    for (const auto& r : rows) ASSERT_EQ(evaluate(out, r), evaluate(in, r)) << "trial " << trial;
    ASSERT_EQ(simplify(out, domain), out) << "trial " << trial;
    // No term implies another.
    for (std::size_t i = 0; i < out.terms.size(); ++i) {
      for (std::size_t j = 0; j < out.terms.size(); ++j) {
        if (i != j) ASSERT_FALSE(out.terms[i].implies(out.terms[j]));
      }
    }
  }
}

TEST(Distribute, MatchesConjunctionOfRules) {
  Rng rng(5);
  const std::vector<std::size_t> domain{3, 2, 3};
  const auto rows = every_row(domain);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_dnf(rng, domain), b = random_dnf(rng, domain);
    const auto both = distribute(a, b, domain, 512);
    const auto either = disjoin(a, b, domain, 512);
    for (const auto& r : rows) {
      ASSERT_EQ(evaluate(both, r), evaluate(a, r) && evaluate(b, r));
      ASSERT_EQ(evaluate(either, r), evaluate(a, r) || evaluate(b, r));
    }
  }
}

TEST(Distribute, CapMarksTruncation) {
  const std::vector<std::size_t> domain{4, 4, 4, 4};
  Dnf a, b;
  for (Level v = 0; v < 4; ++v) {
    a.terms.push_back(conj({lit(0, {v}), lit(1, {v})}));
    b.terms.push_back(conj({lit(2, {v}), lit(3, {v})}));
  }
  const auto full = distribute(a, b, domain, 512);
  EXPECT_EQ(full.terms.size(), 16u);
  EXPECT_FALSE(full.truncated);
  const auto cut = distribute(a, b, domain, 5);
  EXPECT_EQ(cut.terms.size(), 5u);
  EXPECT_TRUE(cut.truncated);
  // A truncated rule covers a subset of the exact one.
  for (const auto& r : every_row(domain)) {
    if (evaluate(cut, r)) EXPECT_TRUE(evaluate(full, r));
  }
}

Table binary_table() {
  std::vector<FeatureSpec> f;
  for (const char* n : {"MET", "NSA", "AGE"}) f.push_back({n, FeatureKind::binary, {"0", "1"}});
  f[2] = {"AGE", FeatureKind::categorical, {"18-39", "40-59", "60-79"}};
  return Table(Schema(f, "aki"), {{1, 1, 0, 0}, {0, 1, 1, 0}, {0, 1, 2, 2}}, {1, 1, 0, 0});
}

TEST(Coverage, EmptyAndTautology) {
  const auto t = binary_table();
  EXPECT_EQ(coverage(Dnf::contradiction(), t), (Coverage{0, 0}));
  EXPECT_EQ(coverage(Dnf::tautology(), t), (Coverage{4, 2}));
  const Dnf met{{conj({lit(0, {1})})}, false};
  EXPECT_EQ(coverage(met, t), (Coverage{2, 2}));
  EXPECT_EQ(covered_rows(met, t), (std::vector<std::uint8_t>{1, 1, 0, 0}));
  const Dnf bad{{conj({lit(7, {1})})}, false};
  EXPECT_THROW(coverage(bad, t), SchemaError);
}

TEST(Format, BinaryAndCategorical) {
  const auto s = binary_table().schema();
  EXPECT_EQ(format_literal(lit(0, {1}), s), "MET");
  EXPECT_EQ(format_literal(lit(1, {0}), s), "¬NSA");
  EXPECT_EQ(format_literal(lit(2, {0, 2}), s), "AGE ∈ {18-39, 60-79}");
  const Dnf rule{{conj({lit(0, {1}), lit(1, {0})}), conj({lit(2, {1})})}, false};
  EXPECT_EQ(format_dnf(rule, s), "(MET & ¬NSA) ∨ AGE ∈ {40-59}");
  EXPECT_EQ(format_dnf(Dnf::tautology(), s), "TRUE");
  EXPECT_EQ(format_dnf(Dnf::contradiction(), s), "FALSE");
}

Table random_data(std::uint64_t seed) {
  Rng rng(seed);
  return test::random_table(rng, 300 + uniform_below(rng, 700), 3 + uniform_below(rng, 8), 4);
}

TEST(Expand, CoverageEqualsRegionMembership) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto data = random_data(seed);
    DrfConfig c;
    c.master_seed = seed;
    c.layers = parse_layers("6x2..5,5x2..5");
    const auto model = fit_drf(data, c);
    RuleExpander expander(model);
    for (std::size_t layer = 1; layer <= 2; ++layer) {
      const auto regions = transform(model, data, layer);
      for (std::size_t t = 0; t < model.forest(layer).size(); ++t) {
        // Regions of one tree are mutually exclusive and exhaustive.
        std::vector<int> hits(data.n_rows(), 0);
        for (RegionId r = 0; r < model.forest(layer).tree(t).n_leaves(); ++r) {
          const auto& rule = expander.expand(layer, t, r);
          ASSERT_FALSE(rule.truncated);
          const auto mask = covered_rows(rule, data);
          for (std::size_t i = 0; i < data.n_rows(); ++i) {
            ASSERT_EQ(mask[i] == 1, regions.at(i, t) == r) << "layer " << layer << " tree " << t;
            hits[i] += mask[i];
          }
        }
        for (int h : hits) ASSERT_EQ(h, 1);
      }
    }
    EXPECT_THROW(expander.expand(2, 99, 0), LookupError);
    EXPECT_THROW(expander.expand(3, 0, 0), LookupError);
  }
}

TEST(Expand, TwoLayerHandExample) {
  // Layer 1: one tree on MET (r0 = ¬MET, r1 = MET) and one on NSA.
  // Layer 2: one tree splitting T1 then T2, so L2 r0 = MET & NSA.
  const Schema raw({{"MET", FeatureKind::binary, {"0", "1"}}, {"NSA", FeatureKind::binary, {"0", "1"}}}, "aki");
  auto stump = [](std::size_t feature, ClassCounts l, ClassCounts r, std::size_t n_features) {
    DecisionTree::Node root, a, b;
    a.counts = l;
    a.region = 0;
    b.counts = r;
    b.region = 1;
    root.leaf = false;
    root.feature = feature;
    root.counts = l + r;
    root.left_levels = {0};
    root.right_levels = {1};
    root.left = 1;
    root.right = 2;
    return DecisionTree({root, a, b}, std::vector<std::size_t>(n_features, 2));
  };
  LayerConfig one;
  one.n_trees = 2;
  Forest f1(one, 1, raw, {stump(0, {1, 5}, {4, 2}, 2), stump(1, {2, 4}, {3, 3}, 2)});

  DecisionTree::Node root, mid, both, other, rest;
  both.counts = {3, 0};
  both.region = 0;
  other.counts = {1, 2};
  other.region = 1;
  rest.counts = {1, 5};
  rest.region = 2;
  mid.leaf = false;
  mid.feature = 1;
  mid.counts = both.counts + other.counts;
  mid.left_levels = {1};
  mid.right_levels = {0};
  mid.left = 2;
  mid.right = 3;
  root.leaf = false;
  root.feature = 0;
  root.counts = mid.counts + rest.counts;
  root.left_levels = {1};
  root.right_levels = {0};
  root.left = 1;
  root.right = 4;
  LayerConfig two;
  two.n_trees = 1;
  Forest f2(two, 2, f1.output_schema(), {DecisionTree({root, mid, both, other, rest}, {2, 2})});

  DrfConfig config;
  config.layers = {one, two};
  const DrfModel model(config, {f1, f2});
  EXPECT_EQ(format_dnf(expand_region(model, 2, 0, 0), raw), "MET & NSA");
  EXPECT_EQ(format_dnf(expand_region(model, 2, 0, 1), raw), "MET & ¬NSA");
  EXPECT_EQ(format_dnf(expand_region(model, 2, 0, 2), raw), "¬MET");
}

}  // namespace
}  // namespace drf
