#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "drf/dataset.hpp"
#include "drf/model.hpp"
#include "drf/rule.hpp"

namespace drf {

// Synthetic planted-rule data: every feature is an independent fair coin;
// y ~ Bernoulli(lifted_rate) where the planted rule holds, else
// Bernoulli(base_rate).
struct SynthSpec {
  std::size_t n_rows = 1000;
  std::vector<std::string> features;  // named features the rule may use
  std::size_t n_noise_features = 0;   // appended as X1, X2, ...
  std::string planted;                // e.g. "(A & B) | (C & D)", "!" negates
  double base_rate = 0.05;
  double lifted_rate = 0.5;
  std::uint64_t seed = 0;
  std::string target_name = "y";

  void validate() const;
};

// JSON object with the SynthSpec field names. Missing `features` means the
// rule's features in order of appearance.
SynthSpec parse_synth_spec(std::string_view json_text);

// Parses `|`/`∨`-separated terms of `&`/`∧`-joined literals over a binary
// schema. `!A` / `¬A` means A = 0.
Dnf parse_planted_rule(std::string_view text, const Schema& schema);

Dataset synth(const SynthSpec& spec);
// Binary schema of synth(spec).
Schema synth_schema(const SynthSpec& spec);

struct BenchOptions {
  std::uint64_t seed = 0;
  std::size_t tree_leaf_budget = 16;
  std::size_t tree_min_leaf = 5;
  std::size_t threads = 1;
};

struct BenchCell {
  std::string representation;  // "raw" or "DRF layer <l>"
  std::string learner;         // "tree" or "elastic_net"
  double auc = 0.0;
};

struct BenchReport {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::string layers;
  std::vector<BenchCell> cells;
};

// Single tree and elastic net on raw features and on every DRF layer,
// scored by held-out AUC. `test` must share `train`'s schema.
BenchReport benchmark(const Dataset& train, const Dataset& test, const DrfConfig& config,
                      const BenchOptions& options = {});

// Rows are representations, columns are learners.
void write_bench_tsv(const BenchReport& report, std::ostream& out);

// Scores of a single tree: training positive rate of each row's leaf.
std::vector<double> tree_scores(const DecisionTree& tree, const Table& table);

}  // namespace drf
