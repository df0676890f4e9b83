#pragma once

#include <cstddef>
#include <map>
#include <tuple>

#include "drf/model.hpp"
#include "drf/rule.hpp"

namespace drf {

inline constexpr std::size_t kDefaultMaxTerms = 512;

// Rewrites regions of any layer as DNF rules over the model's raw input
// features. A region-valued literal `L<l>.T<t> ∈ S` becomes the OR of the
// expansions of the regions in S; the AND over a path is then distributed.
// Expansions are memoized per (layer, tree, region).
class RuleExpander {
 public:
  explicit RuleExpander(const DrfModel& model, std::size_t max_terms = kDefaultMaxTerms);

  // `layer` is 1-based, `tree` 0-based. Throws LookupError for an unknown
  // region. A result with truncated = true covers a subset of the region.
  const Dnf& expand(std::size_t layer, std::size_t tree, RegionId region);

  const Schema& raw_schema() const { return model_.input_schema(); }

 private:
  const DrfModel& model_;
  std::size_t max_terms_;
  std::vector<std::size_t> domain_;
  std::map<std::tuple<std::size_t, std::size_t, RegionId>, Dnf> memo_;
};

Dnf expand_region(const DrfModel& model, std::size_t layer, std::size_t tree, RegionId region,
                  std::size_t max_terms = kDefaultMaxTerms);

}  // namespace drf
