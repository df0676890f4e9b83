#pragma once

// Table generators and reference implementations shared by the unit tests
// and the acceptance runner. The oracles use only the standard library so
// they stay independent of the code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drf/dataset.hpp"
#include "drf/random.hpp"
#include "drf/tree.hpp"

namespace drf::test {

// Features F0..F{p-1} with 2..max_levels levels named a, b, c, ...; target
// drawn with P(y=1) depending on the first two features so trees have
// something to find.
inline Table random_table(Rng& rng, std::size_t n, std::size_t p, std::size_t max_levels,
                          double signal = 0.6) {
  std::vector<FeatureSpec> specs;
  std::vector<std::vector<Level>> cols(p, std::vector<Level>(n));
  for (std::size_t f = 0; f < p; ++f) {
    const auto k = 2 + uniform_below(rng, max_levels - 1);
    FeatureSpec spec{"F" + std::to_string(f), FeatureKind::categorical, {}};
    for (std::size_t v = 0; v < k; ++v) spec.levels.push_back(std::string(1, static_cast<char>('a' + v)));
    specs.push_back(spec);
    for (std::size_t i = 0; i < n; ++i) cols[f][i] = static_cast<Level>(uniform_below(rng, k));
  }
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool lifted = cols[0][i] == 0 && (p < 2 || cols[1][i] != 0);
    y[i] = bernoulli(rng, lifted ? signal : 1.0 - signal) ? 1 : 0;
  }
  y[0] = 1;
  y[n - 1] = 0;
  return Table(Schema(std::move(specs), "y"), std::move(cols), std::move(y));
}

// Mann-Whitney by direct enumeration of positive/negative pairs.
inline double pair_count_auc(std::span<const double> s, std::span<const std::uint8_t> y) {
  std::uint64_t doubled = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? n_pos : n_neg)++;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      doubled += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return static_cast<double>(doubled) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double gini_of(double pos, double neg) {
  const double n = pos + neg;
  return 1.0 - (pos / n) * (pos / n) - (neg / n) * (neg / n);
}

// Children purity (a²+b²)/(a+b) + (c²+d²)/(c+d) as an exact fraction; a
// larger value means a larger Gini decrease for the same parent.
struct Purity {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  friend bool operator<(const Purity& x, const Purity& y) {
    return static_cast<unsigned __int128>(x.num) * y.den < static_cast<unsigned __int128>(y.num) * x.den;
  }
  friend bool operator==(const Purity& x, const Purity& y) { return !(x < y) && !(y < x); }
};

inline Purity purity(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return {(a * a + b * b) * (c + d) + (c * c + d * d) * (a + b), (a + b) * (c + d)};
}

struct BipartitionResult {
  double decrease = 0.0;  // 0 when no admissible split
  Purity best;            // exact score of the best split
  std::size_t feature = 0;
  std::vector<Level> left;
};

// Best Gini decrease over every bipartition of every candidate feature's
// observed levels.
inline BipartitionResult exhaustive_best_split(const Table& t, std::span<const std::size_t> rows,
                                               std::span<const std::size_t> features,
                                               std::size_t min_leaf) {
  BipartitionResult best;
  double pos = 0, neg = 0;
  for (auto r : rows) (t.target()[r] ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return best;
  const double parent = gini_of(pos, neg);
  for (auto f : features) {
    const auto k = t.schema().feature(f).n_levels();
    std::vector<double> lp(k, 0.0), ln(k, 0.0);
    for (auto r : rows) (t.target()[r] ? lp : ln)[t.at(r, f)] += 1;
    std::vector<Level> seen;
    for (Level v = 0; v < k; ++v) {
      if (lp[v] + ln[v] > 0) seen.push_back(v);
    }
    if (seen.size() < 2) continue;
    const std::uint64_t masks = std::uint64_t{1} << seen.size();
    for (std::uint64_t mask = 1; mask + 1 < masks; ++mask) {
      if (!(mask & 1)) continue;  // each bipartition once: first level on the left
      double a = 0, b = 0;
      for (std::size_t i = 0; i < seen.size(); ++i) {
        if (mask >> i & 1) {
          a += lp[seen[i]];
          b += ln[seen[i]];
        }
      }
      const double c = pos - a, d = neg - b;
      if (a + b < static_cast<double>(min_leaf) || c + d < static_cast<double>(min_leaf)) continue;
      const double dec = parent - ((a + b) * gini_of(a, b) + (c + d) * gini_of(c, d)) / (pos + neg);
      const auto score = purity(static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b),
                                static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(d));
      if (best.left.empty() || best.best < score) {
        best.best = score;
        best.decrease = dec;
        best.feature = f;
        best.left.clear();
        for (std::size_t i = 0; i < seen.size(); ++i) {
          if (mask >> i & 1) best.left.push_back(seen[i]);
        }
      }
    }
  }
  return best;
}

// Solves A x = b for symmetric positive definite A (row-major n×n) by a
// textbook Cholesky factorization.
inline std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (d <= 0.0) throw std::runtime_error("matrix not positive definite");
    a[j * n + j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / a[j * n + j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= a[i * n + k] * b[k];
    b[i] /= a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) b[i] -= a[k * n + i] * b[k];
    b[i] /= a[i * n + i];
  }
  return b;
}

struct LogitFit {
  double intercept = 0.0;
  std::vector<double> coef;
};

// Unpenalized logistic regression by Newton-Raphson on dense columns.
inline LogitFit irls_oracle(const std::vector<std::vector<double>>& cols, std::span<const std::uint8_t> y) {
  const std::size_t n = y.size(), p = cols.size() + 1;
  auto x = [&](std::size_t i, std::size_t j) { return j == 0 ? 1.0 : cols[j - 1][i]; };
  std::vector<double> beta(p, 0.0);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> h(p * p, 0.0), g(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0;
      for (std::size_t j = 0; j < p; ++j) eta += beta[j] * x(i, j);
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      const double w = mu * (1.0 - mu);
      for (std::size_t j = 0; j < p; ++j) {
        g[j] += x(i, j) * (y[i] - mu);
        for (std::size_t k = 0; k < p; ++k) h[j * p + k] += w * x(i, j) * x(i, k);
      }
    }
    const auto step = cholesky_solve(h, g, p);
    double change = 0;
    for (std::size_t j = 0; j < p; ++j) {
      beta[j] += step[j];
      change = std::max(change, std::abs(step[j]));
    }
    if (change < 1e-13) break;
  }
  return {beta[0], std::vector<double>(beta.begin() + 1, beta.end())};
}

struct TwoByTwo {
  double odds_ratio;
  double ci_low;
  double ci_high;
};

// Exposed (a pos, b neg), unexposed (c pos, d neg).
inline TwoByTwo closed_form_or(double a, double b, double c, double d) {
  const double log_or = std::log((a * d) / (b * c));
  const double se = std::sqrt(1 / a + 1 / b + 1 / c + 1 / d);
  return {std::exp(log_or), std::exp(log_or - 1.96 * se), std::exp(log_or + 1.96 * se)};
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("drf_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace drf::test
