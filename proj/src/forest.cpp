#include "drf/forest.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "drf/error.hpp"
#include "drf/random.hpp"

namespace drf {

void LayerConfig::validate() const {
  if (n_trees < 1) throw ConfigError("a layer needs at least one tree");
  if (leaf_budget_min < 1 || leaf_budget_min > leaf_budget_max) {
    throw ConfigError("leaf budgets must satisfy 1 <= min <= max");
  }
}

std::size_t LayerConfig::budget_for(std::size_t tree) const {
  return leaf_budget_min + tree % (leaf_budget_max - leaf_budget_min + 1);
}

std::size_t LayerConfig::features_per_node(std::size_t n_features) const {
  if (feature_sample != 0) return std::min(feature_sample, n_features);
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features))));
}

std::string region_column_name(std::size_t layer, std::size_t tree) {
  return "L" + std::to_string(layer) + ".T" + std::to_string(tree + 1);
}

std::string region_token(RegionId region) { return "r" + std::to_string(region); }

Forest::Forest(LayerConfig config, std::size_t layer, Schema input_schema,
               std::vector<DecisionTree> trees)
    : config_(config), layer_(layer), input_schema_(std::move(input_schema)),
      trees_(std::move(trees)) {
  if (trees_.empty()) throw ConfigError("forest has no trees");
  const auto counts = input_schema_.level_counts();
  std::vector<FeatureSpec> columns;
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    if (trees_[t].level_counts() != counts) {
      throw SchemaError("tree " + std::to_string(t + 1) + " does not match the layer input schema");
    }
    FeatureSpec spec;
    spec.name = region_column_name(layer_, t);
    spec.kind = FeatureKind::categorical;
    for (RegionId r = 0; r < trees_[t].n_leaves(); ++r) spec.levels.push_back(region_token(r));
    columns.push_back(std::move(spec));
  }
  output_schema_ = Schema(std::move(columns), input_schema_.target_name());
}

Forest fit_layer(const Table& table, const LayerConfig& config, std::size_t layer,
                 std::uint64_t master_seed, std::size_t threads) {
  config.validate();
  const std::size_t n = table.n_rows();
  std::vector<std::optional<DecisionTree>> trees(config.n_trees);

  auto train_one = [&](std::size_t t) {
    Rng rng(derive_seed(master_seed, layer, t));
    std::vector<std::size_t> rows;
    if (config.bootstrap) {
      rows.resize(n);
      for (auto& r : rows) r = uniform_below(rng, n);
    }
    GrowOptions opts;
    opts.leaf_budget = config.budget_for(t);
    opts.feature_sample = config.features_per_node(table.n_features());
    opts.min_leaf = config.min_leaf;
    trees[t].emplace(grow_tree(table, rows, opts, rng));
  };

  threads = std::clamp<std::size_t>(threads, 1, config.n_trees);
  if (threads == 1) {
    for (std::size_t t = 0; t < config.n_trees; ++t) train_one(t);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t t = w; t < config.n_trees; t += threads) train_one(t);
      });
    }
  }

  std::vector<DecisionTree> out;
  out.reserve(trees.size());
  for (auto& t : trees) out.push_back(std::move(*t));
  return Forest(config, layer, table.schema(), std::move(out));
}

RegionTable encode_table(const Forest& forest, const Table& table) {
  const auto& expected = forest.input_schema();
  if (table.n_features() != expected.size()) {
    throw EncodingError("table has " + std::to_string(table.n_features()) +
                        " features, layer expects " + std::to_string(expected.size()));
  }
  for (std::size_t f = 0; f < expected.size(); ++f) {
    if (table.schema().feature(f).name != expected.feature(f).name) {
      throw EncodingError("column " + std::to_string(f) + " is '" + table.schema().feature(f).name +
                          "', layer expects '" + expected.feature(f).name + "'");
    }
  }
  std::vector<std::vector<Level>> columns(forest.size(), std::vector<Level>(table.n_rows()));
  std::vector<Level> row(table.n_features());
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = table.at(i, f);
    for (std::size_t t = 0; t < forest.size(); ++t) columns[t][i] = forest.tree(t).encode(row);
  }
  std::vector<std::uint8_t> target(table.target().begin(), table.target().end());
  return RegionTable(forest.output_schema(), std::move(columns), std::move(target));
}

}  // namespace drf
