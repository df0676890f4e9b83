#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace drf {

// Mann-Whitney AUC: (concordant + ½ tied) / (n_pos · n_neg), via midranks.
// Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

// One point per distinct score (descending), starting at (0, 0).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace drf
