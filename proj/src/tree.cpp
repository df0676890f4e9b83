#include "drf/tree.hpp"

#include <algorithm>
#include <string>

#include "drf/error.hpp"

namespace drf {

double gini(std::size_t pos_count, std::size_t neg_count) {
  const auto total = pos_count + neg_count;
  if (total == 0) throw DomainError("gini of an empty node");
  const double p = static_cast<double>(pos_count) / static_cast<double>(total);
  const double q = static_cast<double>(neg_count) / static_cast<double>(total);
  return 1.0 - (p * p + q * q);
}

double gini_decrease(const ClassCounts& left, const ClassCounts& right) {
  const auto parent = left + right;
  const double n = static_cast<double>(parent.total());
  const double weighted = static_cast<double>(left.total()) * gini(left.pos, left.neg) +
                          static_cast<double>(right.total()) * gini(right.pos, right.neg);
  return gini(parent.pos, parent.neg) - weighted / n;
}

std::optional<SplitCandidate> best_split(const Table& table, std::span<const std::size_t> rows,
                                         std::span<const std::size_t> candidate_features,
                                         std::size_t min_leaf) {
  if (rows.empty()) return std::nullopt;
  const auto target = table.target();
  ClassCounts parent;
  for (auto r : rows) (target[r] ? parent.pos : parent.neg)++;
  if (parent.pos == 0 || parent.neg == 0) return std::nullopt;

  std::optional<SplitCandidate> best;
  std::vector<ClassCounts> per_level;
  std::vector<Level> order;
  for (std::size_t f : candidate_features) {
    const auto column = table.column(f);
    per_level.assign(table.schema().feature(f).n_levels(), ClassCounts{});
    for (auto r : rows) {
      auto& c = per_level[column[r]];
      (target[r] ? c.pos : c.neg)++;
    }
    order.clear();
    for (Level v = 0; v < per_level.size(); ++v) {
      if (per_level[v].total() > 0) order.push_back(v);
    }
    if (order.size() < 2) continue;
    const Level smallest = order.front();
    std::sort(order.begin(), order.end(), [&](Level a, Level b) {
      const auto lhs = per_level[a].pos * per_level[b].total();
      const auto rhs = per_level[b].pos * per_level[a].total();
      return lhs != rhs ? lhs < rhs : a < b;
    });

    ClassCounts acc;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      acc += per_level[order[i]];
      const ClassCounts rest{parent.pos - acc.pos, parent.neg - acc.neg};
      if (acc.total() < min_leaf || rest.total() < min_leaf) continue;
      const double dec = gini_decrease(acc, rest);
      if (dec <= kMinDecrease) continue;
      if (best && dec < best->decrease) continue;

      LevelSet prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(i + 1));
      LevelSet suffix(order.begin() + static_cast<std::ptrdiff_t>(i + 1), order.end());
      std::sort(prefix.begin(), prefix.end());
      std::sort(suffix.begin(), suffix.end());
      const bool prefix_left = std::binary_search(prefix.begin(), prefix.end(), smallest);
      SplitCandidate cand;
      cand.split.feature = f;
      cand.decrease = dec;
      cand.split.left_levels = prefix_left ? std::move(prefix) : std::move(suffix);
      cand.right_levels = prefix_left ? std::move(suffix) : std::move(prefix);
      cand.left = prefix_left ? acc : rest;
      cand.right = prefix_left ? rest : acc;

      const bool better =
          !best || dec > best->decrease ||
          (f < best->split.feature ||
           (f == best->split.feature && cand.split.left_levels < best->split.left_levels));
      if (better) best = std::move(cand);
    }
  }
  return best;
}

namespace {

// Renumbers nodes so that index order is preorder (root, left subtree,
// right subtree). Rejects shapes that are not a tree rooted at node 0.
std::vector<DecisionTree::Node> to_preorder(std::vector<DecisionTree::Node> nodes) {
  const auto n = nodes.size();
  std::vector<std::size_t> order;
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    if (i >= n || seen[i]) throw LookupError("tree nodes do not form a tree");
    seen[i] = 1;
    order.push_back(i);
    if (!nodes[i].leaf) {
      stack.push_back(nodes[i].right);
      stack.push_back(nodes[i].left);
    }
  }
  if (order.size() != n) throw LookupError("unreachable tree nodes");
  std::vector<std::size_t> index(n);
  for (std::size_t k = 0; k < n; ++k) index[order[k]] = k;
  std::vector<DecisionTree::Node> out;
  out.reserve(n);
  for (auto i : order) {
    auto node = std::move(nodes[i]);
    if (!node.leaf) {
      node.left = index[node.left];
      node.right = index[node.right];
    }
    out.push_back(std::move(node));
  }
  return out;
}

}  // namespace

DecisionTree::DecisionTree(std::vector<Node> nodes, std::vector<std::size_t> level_counts)
    : level_counts_(std::move(level_counts)) {
  if (nodes.empty()) throw LookupError("tree has no nodes");
  nodes_ = to_preorder(std::move(nodes));
  parent_.assign(nodes_.size(), SIZE_MAX);
  route_.resize(nodes_.size());
  std::vector<char> visited(nodes_.size(), 0);
  std::vector<std::size_t> stack{0};
  std::size_t n_leaves = 0;
  while (!stack.empty()) {
    const auto i = stack.back();
    stack.pop_back();
    if (visited[i]) throw LookupError("tree nodes do not form a tree");
    visited[i] = 1;
    const auto& n = nodes_[i];
    if (n.leaf) {
      ++n_leaves;
      continue;
    }
    if (n.left >= nodes_.size() || n.right >= nodes_.size() || n.left == 0 || n.right == 0 ||
        n.left == n.right) {
      throw LookupError("node " + std::to_string(i) + " has invalid children");
    }
    if (n.feature >= level_counts_.size()) throw LookupError("split on unknown feature");
    const auto domain = level_counts_[n.feature];
    if (n.left_levels.empty() || n.right_levels.empty()) throw LookupError("split with an empty side");
    auto& route = route_[i];
    const auto& l = nodes_[n.left];
    const auto& r = nodes_[n.right];
    if (l.counts + r.counts != n.counts) throw LookupError("child counts do not sum to parent");
    const std::uint8_t unseen = l.counts.total() >= r.counts.total() ? 1 : 0;
    route.assign(domain, unseen);
    for (Level v : n.left_levels) {
      if (v >= domain) throw LookupError("split level out of range");
      route[v] = 1;
    }
    for (Level v : n.right_levels) {
      if (v >= domain) throw LookupError("split level out of range");
      if (std::binary_search(n.left_levels.begin(), n.left_levels.end(), v)) {
        throw LookupError("level routed both ways");
      }
      route[v] = 0;
    }
    parent_[n.left] = i;
    parent_[n.right] = i;
    stack.push_back(n.right);
    stack.push_back(n.left);
  }
  if (std::find(visited.begin(), visited.end(), 0) != visited.end()) {
    throw LookupError("unreachable tree nodes");
  }
  leaf_of_region_.assign(n_leaves, SIZE_MAX);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].leaf) continue;
    const auto region = nodes_[i].region;
    if (region >= n_leaves || leaf_of_region_[region] != SIZE_MAX) {
      throw LookupError("leaf region ids must be a permutation of 0..leaves-1");
    }
    leaf_of_region_[region] = i;
  }
}

DecisionTree DecisionTree::single_leaf(ClassCounts counts, std::vector<std::size_t> level_counts) {
  Node root;
  root.counts = counts;
  return DecisionTree({root}, std::move(level_counts));
}

const DecisionTree::Node& DecisionTree::leaf(RegionId region) const {
  if (region >= leaf_of_region_.size()) {
    throw LookupError("unknown region r" + std::to_string(region));
  }
  return nodes_[leaf_of_region_[region]];
}

bool DecisionTree::goes_left(const Node& n, std::size_t index, Level v) const {
  const auto& route = route_[index];
  if (v < route.size()) return route[v] != 0;
  return nodes_[n.left].counts.total() >= nodes_[n.right].counts.total();
}

RegionId DecisionTree::encode(std::span<const Level> row) const {
  if (row.size() != level_counts_.size()) {
    throw EncodingError("row has " + std::to_string(row.size()) + " features, tree expects " +
                        std::to_string(level_counts_.size()));
  }
  std::size_t i = 0;
  while (!nodes_[i].leaf) {
    const auto& n = nodes_[i];
    i = goes_left(n, i, row[n.feature]) ? n.left : n.right;
  }
  return nodes_[i].region;
}

LevelSet DecisionTree::left_route(std::size_t node) const {
  LevelSet out;
  const auto& route = route_.at(node);
  for (Level v = 0; v < route.size(); ++v) {
    if (route[v]) out.push_back(v);
  }
  return out;
}

Conjunction DecisionTree::path_rule(RegionId region) const {
  leaf(region);
  Conjunction rule;
  auto child = leaf_of_region_[region];
  while (child != 0) {
    const auto p = parent_[child];
    const auto& n = nodes_[p];
    const bool left = n.left == child;
    Literal lit{n.feature, {}};
    const auto& route = route_[p];
    for (Level v = 0; v < route.size(); ++v) {
      if ((route[v] != 0) == left) lit.allowed.push_back(v);
    }
    rule.constrain(lit);
    child = p;
  }
  return rule;
}

namespace {

struct Frontier {
  std::size_t node;
  std::vector<std::size_t> rows;
  std::optional<SplitCandidate> best;
};

}  // namespace

DecisionTree grow_tree(const Table& table, std::span<const std::size_t> rows,
                       const GrowOptions& options, Rng& rng,
                       std::vector<std::vector<std::size_t>>* leaf_rows) {
  const std::size_t p = table.n_features();
  const bool sample = options.feature_sample > 0 && options.feature_sample < p;
  std::vector<std::size_t> all_features(p);
  for (std::size_t f = 0; f < p; ++f) all_features[f] = f;
  const std::size_t min_leaf = std::max<std::size_t>(options.min_leaf, 1);

  auto evaluate = [&](Frontier& leaf) {
    if (sample) {
      auto features = sample_without_replacement(rng, p, options.feature_sample);
      std::sort(features.begin(), features.end());
      leaf.best = best_split(table, leaf.rows, features, min_leaf);
    } else {
      leaf.best = best_split(table, leaf.rows, all_features, min_leaf);
    }
  };
  auto count = [&](std::span<const std::size_t> rs) {
    ClassCounts c;
    for (auto r : rs) (table.target()[r] ? c.pos : c.neg)++;
    return c;
  };

  std::vector<DecisionTree::Node> nodes(1);
  std::vector<Frontier> frontier(1);
  if (rows.empty()) {
    frontier[0].rows.resize(table.n_rows());
    for (std::size_t i = 0; i < table.n_rows(); ++i) frontier[0].rows[i] = i;
  } else {
    frontier[0].rows.assign(rows.begin(), rows.end());
  }
  nodes[0].counts = count(frontier[0].rows);
  std::size_t n_leaves = 1;
  if (options.leaf_budget > 1) evaluate(frontier[0]);

  while (n_leaves < options.leaf_budget) {
    std::size_t pick = SIZE_MAX;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const auto& f = frontier[i];
      if (!f.best) continue;
      if (pick == SIZE_MAX || f.best->decrease > frontier[pick].best->decrease ||
          (f.best->decrease == frontier[pick].best->decrease && f.node < frontier[pick].node)) {
        pick = i;
      }
    }
    if (pick == SIZE_MAX) break;

    Frontier parent = std::move(frontier[pick]);
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
    const auto& cand = *parent.best;
    const auto column = table.column(cand.split.feature);
    Frontier left, right;
    for (auto r : parent.rows) {
      const bool go_left = std::binary_search(cand.split.left_levels.begin(),
                                              cand.split.left_levels.end(), column[r]);
      (go_left ? left.rows : right.rows).push_back(r);
    }
    left.node = nodes.size();
    right.node = nodes.size() + 1;
    auto& pn = nodes[parent.node];
    pn.leaf = false;
    pn.feature = cand.split.feature;
    pn.left_levels = cand.split.left_levels;
    pn.right_levels = cand.right_levels;
    pn.left = left.node;
    pn.right = right.node;
    DecisionTree::Node ln, rn;
    ln.counts = cand.left;
    rn.counts = cand.right;
    nodes.push_back(ln);
    nodes.push_back(rn);
    ++n_leaves;
    if (n_leaves < options.leaf_budget) {
      evaluate(left);
      evaluate(right);
    }
    frontier.push_back(std::move(left));
    frontier.push_back(std::move(right));
  }

  RegionId next = 0;
  for (auto& n : nodes) {
    if (n.leaf) n.region = next++;
  }
  if (leaf_rows) {
    leaf_rows->assign(next, {});
    for (auto& f : frontier) (*leaf_rows)[nodes[f.node].region] = std::move(f.rows);
  }
  return DecisionTree(std::move(nodes), table.schema().level_counts());
}

}  // namespace drf
