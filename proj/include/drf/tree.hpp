#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "drf/dataset.hpp"
#include "drf/random.hpp"
#include "drf/rule.hpp"

namespace drf {

using RegionId = std::uint32_t;

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;

  std::size_t total() const { return pos + neg; }
  ClassCounts& operator+=(const ClassCounts& o) {
    pos += o.pos;
    neg += o.neg;
    return *this;
  }
  friend ClassCounts operator+(ClassCounts a, const ClassCounts& b) { return a += b; }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// Gini impurity 1 - p² - q² of a binary node. Throws DomainError on an
// empty node.
double gini(std::size_t pos_count, std::size_t neg_count);

// Weighted Gini decrease of splitting parent = left + right. Symmetric in
// (left, right) bit for bit.
double gini_decrease(const ClassCounts& left, const ClassCounts& right);

// Decreases at or below this are numerically zero.
inline constexpr double kMinDecrease = 1e-12;

struct Split {
  std::size_t feature = 0;
  LevelSet left_levels;

  friend bool operator==(const Split&, const Split&) = default;
};

struct SplitCandidate {
  Split split;
  LevelSet right_levels;  // observed levels routed right
  double decrease = 0.0;
  ClassCounts left;
  ClassCounts right;
};

// Best binary subset split over the candidate features. Levels of each
// feature are ordered by positive rate and the |V|-1 prefix cuts scanned.
// Both children need at least min_leaf rows. Ties prefer the lower feature
// index, then the lexicographically smaller left set (left always holds the
// smallest observed level). Returns nullopt if no cut has a positive decrease.
std::optional<SplitCandidate> best_split(const Table& table, std::span<const std::size_t> rows,
                                         std::span<const std::size_t> candidate_features,
                                         std::size_t min_leaf);

class DecisionTree {
 public:
  struct Node {
    ClassCounts counts;
    bool leaf = true;
    RegionId region = 0;       // leaves only
    std::size_t feature = 0;   // internal nodes only
    LevelSet left_levels;      // observed at training, routed left
    LevelSet right_levels;     // observed at training, routed right
    std::size_t left = 0;      // child node indices
    std::size_t right = 0;

    friend bool operator==(const Node&, const Node&) = default;
  };

  // `nodes[0]` is the root. `level_counts` is the input schema's domain.
  // Validates structure, region numbering, and count consistency.
  DecisionTree(std::vector<Node> nodes, std::vector<std::size_t> level_counts);

  static DecisionTree single_leaf(ClassCounts counts, std::vector<std::size_t> level_counts);

  std::size_t n_leaves() const { return leaf_of_region_.size(); }
  std::size_t n_features() const { return level_counts_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<std::size_t>& level_counts() const { return level_counts_; }
  const Node& leaf(RegionId region) const;

  // Routes by split membership; a level not observed at a node goes to the
  // child with more training rows (ties left).
  RegionId encode(std::span<const Level> row) const;

  // Conjunction of the path's routing literals, same-feature literals
  // intersected. Throws LookupError for an unknown region.
  Conjunction path_rule(RegionId region) const;

  // All in-domain levels this internal node sends left.
  LevelSet left_route(std::size_t node) const;

  friend bool operator==(const DecisionTree& a, const DecisionTree& b) {
    return a.nodes_ == b.nodes_ && a.level_counts_ == b.level_counts_;
  }

 private:
  bool goes_left(const Node& n, std::size_t index, Level v) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> level_counts_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> leaf_of_region_;
  // Per internal node: 1 = left, 0 = right, for each in-domain level.
  std::vector<std::vector<std::uint8_t>> route_;
};

struct GrowOptions {
  std::size_t leaf_budget = 2;
  // Features sampled per node; 0 or >= p means all features.
  std::size_t feature_sample = 0;
  std::size_t min_leaf = 5;
};

// Best-first growth from a single root leaf: repeatedly split the frontier
// leaf with the largest decrease until leaf_budget leaves exist or no
// frontier leaf can be split. Leaves are numbered in creation order.
// `rows` may repeat indices (bootstrap samples); empty means all rows.
// When `leaf_rows` is given it receives each region's training rows.
DecisionTree grow_tree(const Table& table, std::span<const std::size_t> rows,
                       const GrowOptions& options, Rng& rng,
                       std::vector<std::vector<std::size_t>>* leaf_rows = nullptr);

}  // namespace drf
