#include "drf/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "drf/error.hpp"

namespace drf {

namespace {

void check(std::span<const double> scores, std::span<const std::uint8_t> labels,
           std::size_t& n_pos, std::size_t& n_neg) {
  if (scores.size() != labels.size()) throw MetricError("scores and labels differ in length");
  n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("AUC needs both classes");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::size_t n_pos = 0, n_neg = 0;
  check(scores, labels, n_pos, n_neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie block spanning positions [i, j) gets (i+j+1)/2.
  // Doubled ranks keep the sum integral.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    std::uint64_t pos_in_block = 0;
    for (std::size_t k = i; k < j; ++k) pos_in_block += labels[order[k]];
    doubled_rank_sum += pos_in_block * (i + j + 1);
    i = j;
  }
  // U = R_pos - n_pos(n_pos+1)/2, doubled.
  const std::uint64_t doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::size_t n_pos = 0, n_neg = 0;
  check(scores, labels, n_pos, n_neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    out.push_back({s, static_cast<double>(fp) / static_cast<double>(n_neg),
                   static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return out;
}

}  // namespace drf
