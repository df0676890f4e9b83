#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "drf/elastic_net.hpp"
#include "drf/expand.hpp"
#include "drf/model.hpp"

namespace drf {

struct RuleEntry {
  std::string indicator;  // L2.T3=r1
  std::size_t tree = 0;   // 0-based
  RegionId region = 0;
  double importance = 0.0;  // Σ |standardized coefficient| over the group
  double coefficient = 0.0;  // summed effect of the group, in this orientation
  // Other nonzero indicators selecting exactly the same training rows, or
  // exactly the other rows; their coefficients are folded into this entry.
  std::vector<std::string> aliases;
  std::vector<std::string> complements;
  Dnf rule;
  std::string rule_text;
  Coverage coverage;
  std::optional<OddsRatio> odds;
};

struct RuleReport {
  std::size_t layer = 0;
  double alpha = 0.0;
  double lambda = 0.0;
  double cv_auc = 0.0;
  std::vector<RuleEntry> entries;  // importance descending
};

inline constexpr std::size_t kDefaultTopK = 5;

// Top-k nonzero indicators of a layer's region table by |standardized
// coefficient|, each expanded to a raw-feature rule with coverage on `train`.
// With `merge_equivalent`, indicators with identical or complementary
// training row sets count as one rule: importance is summed over the group
// and the rule is shown in the orientation with a positive summed effect.
RuleReport rank_rules(const ElasticNetFit& fit, const IndicatorMatrix& indicators,
                      const DrfModel& model, std::size_t layer, std::size_t k,
                      const Dataset& train, std::size_t max_terms = kDefaultMaxTerms,
                      bool merge_equivalent = true);

// Joint unpenalized refit on the report's indicators.
void attach_odds_ratios(RuleReport& report, const IndicatorMatrix& indicators,
                        std::span<const std::uint8_t> y);

struct ExplainOptions {
  std::size_t layer = 2;
  std::size_t top_k = kDefaultTopK;
  EnetOptions enet;
  std::size_t max_terms = kDefaultMaxTerms;
  bool merge_equivalent = true;
};

// transform → elastic net on region indicators → rank → odds ratios.
RuleReport explain(const DrfModel& model, const Dataset& data, const ExplainOptions& options);

// Tab-separated, one row per rule, term list as JSON.
void write_report_tsv(const RuleReport& report, const Schema& raw, std::ostream& out);
void write_report_text(const RuleReport& report, std::ostream& out);

}  // namespace drf
