#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "drf/dataset.hpp"
#include "drf/tree.hpp"

namespace drf {

struct LayerConfig {
  std::size_t n_trees = 100;
  std::size_t leaf_budget_min = 2;
  std::size_t leaf_budget_max = 11;
  std::size_t feature_sample = 0;  // 0 = ceil(sqrt(p))
  bool bootstrap = true;
  std::size_t min_leaf = 5;

  void validate() const;
  // Round-robin over [leaf_budget_min, leaf_budget_max].
  std::size_t budget_for(std::size_t tree) const;
  std::size_t features_per_node(std::size_t n_features) const;

  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

// Column name of tree `tree` (0-based) in layer `layer` (1-based): L2.T3
// is the third tree of the second layer.
std::string region_column_name(std::size_t layer, std::size_t tree);
std::string region_token(RegionId region);

class Forest {
 public:
  Forest(LayerConfig config, std::size_t layer, Schema input_schema,
         std::vector<DecisionTree> trees);

  const LayerConfig& config() const { return config_; }
  std::size_t layer() const { return layer_; }
  const Schema& input_schema() const { return input_schema_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  const DecisionTree& tree(std::size_t t) const { return trees_.at(t); }
  std::size_t size() const { return trees_.size(); }

  // One categorical column per tree whose levels are that tree's regions.
  const Schema& output_schema() const { return output_schema_; }

  friend bool operator==(const Forest& a, const Forest& b) {
    return a.config_ == b.config_ && a.layer_ == b.layer_ &&
           a.input_schema_ == b.input_schema_ && a.trees_ == b.trees_;
  }

 private:
  LayerConfig config_;
  std::size_t layer_;
  Schema input_schema_;
  std::vector<DecisionTree> trees_;
  Schema output_schema_;
};

// Trains one layer. Tree t draws from a stream seeded by (master_seed,
// layer, t) only, so any `threads` value gives the same forest.
Forest fit_layer(const Table& table, const LayerConfig& config, std::size_t layer,
                 std::uint64_t master_seed, std::size_t threads = 1);

// Cell (i, t) = region of row i in tree t. Target copied through.
RegionTable encode_table(const Forest& forest, const Table& table);

}  // namespace drf
