#include "drf/expand.hpp"

#include <string>

#include "drf/error.hpp"

namespace drf {

RuleExpander::RuleExpander(const DrfModel& model, std::size_t max_terms)
    : model_(model), max_terms_(max_terms), domain_(model.input_schema().level_counts()) {
  if (max_terms_ == 0) throw ConfigError("max_terms must be positive");
}

const Dnf& RuleExpander::expand(std::size_t layer, std::size_t tree, RegionId region) {
  const auto key = std::make_tuple(layer, tree, region);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  const auto& forest = model_.forest(layer);
  if (tree >= forest.size()) {
    throw LookupError("layer " + std::to_string(layer) + " has no tree " + std::to_string(tree + 1));
  }
  const Conjunction path = forest.tree(tree).path_rule(region);

  Dnf result;
  if (layer == 1) {
    result = simplify(Dnf{{path}, false}, domain_);
  } else {
    result = Dnf::tautology();
    for (const auto& lit : path.literals) {
      // Feature index of a layer-l table is the tree index of layer l-1.
      Dnf alternatives = Dnf::contradiction();
      for (Level r : lit.allowed) {
        const Dnf& sub = expand(layer - 1, lit.feature, r);
        alternatives = disjoin(alternatives, sub, domain_, max_terms_);
      }
      result = distribute(result, alternatives, domain_, max_terms_);
      if (result.terms.empty()) break;
    }
  }
  return memo_.emplace(key, std::move(result)).first->second;
}

Dnf expand_region(const DrfModel& model, std::size_t layer, std::size_t tree, RegionId region,
                  std::size_t max_terms) {
  RuleExpander expander(model, max_terms);
  return expander.expand(layer, tree, region);
}

}  // namespace drf
