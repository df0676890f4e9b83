#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drf/dataset.hpp"
#include "drf/error.hpp"

namespace drf {

// Column-compressed design matrix. A column with no stored values is a 0/1
// indicator whose ones are at `rows`.
class DesignMatrix {
 public:
  struct Column {
    std::vector<std::uint32_t> rows;  // ascending
    std::vector<double> values;       // empty = all ones
  };

  explicit DesignMatrix(std::size_t n_rows = 0) : n_rows_(n_rows) {}

  static DesignMatrix from_dense(const std::vector<std::vector<double>>& columns,
                                 std::vector<std::string> names = {});

  void add_column(std::string name, Column column);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return columns_.size(); }
  const Column& column(std::size_t j) const { return columns_.at(j); }
  const std::string& name(std::size_t j) const { return names_.at(j); }
  const std::vector<std::string>& names() const { return names_; }

  // Dense copy of column j.
  std::vector<double> dense_column(std::size_t j) const;

  DesignMatrix select_rows(std::span<const std::size_t> rows) const;
  DesignMatrix select_columns(std::span<const std::size_t> cols) const;
  DesignMatrix scale_column(std::size_t j, double factor) const;

 private:
  std::size_t n_rows_;
  std::vector<Column> columns_;
  std::vector<std::string> names_;
};

// One 0/1 column per (feature, level) pair. For a region table the names
// read `L2.T3=r1`.
struct IndicatorMatrix {
  DesignMatrix x;
  std::vector<std::size_t> feature;
  std::vector<Level> level;
};

// Levels beyond `reference`'s level lists are dropped, so train and test
// matrices line up column for column.
IndicatorMatrix one_hot(const Table& table, const Schema& reference);
IndicatorMatrix one_hot(const Table& table);

struct EnetOptions {
  double alpha = 0.5;
  std::size_t n_lambda = 100;
  double lambda_min_ratio = 1e-4;  // path spans four decades
  std::size_t cv_folds = 5;
  std::uint64_t seed = 0;
  // Fit this single lambda and skip cross-validation.
  std::optional<double> lambda;
  double tolerance = 1e-7;
  std::size_t max_sweeps = 10000;
  std::size_t threads = 1;
};

struct ElasticNetFit {
  double intercept = 0.0;             // original scale
  std::vector<double> coefficients;   // original scale
  std::vector<double> standardized;   // per standardized column
  double intercept_standardized = 0.0;
  double alpha = 0.0;
  double lambda = 0.0;
  std::vector<double> lambda_path;
  std::vector<double> cv_auc;         // mean held-out AUC per lambda
  std::vector<std::string> names;

  // Linear predictor for each row.
  std::vector<double> decision_function(const DesignMatrix& x) const;
};

// Raised when coordinate descent exhausts its sweep budget.
class ConvergenceError : public FitError {
 public:
  ConvergenceError(const std::string& what, ElasticNetFit last, double last_change,
                   std::size_t sweeps)
      : FitError(what), last_iterate(std::move(last)), last_change(last_change), sweeps(sweeps) {}

  ElasticNetFit last_iterate;
  double last_change;
  std::size_t sweeps;
};

// Smallest lambda at which every penalized coefficient is zero.
double lambda_max(const DesignMatrix& x, std::span<const std::uint8_t> y, double alpha);

// Penalized logistic regression on internally standardized columns with an
// unpenalized intercept:
//   -(1/n) loglik + lambda * sum((1-alpha)/2 b² + alpha |b|).
// Solved by an IRLS outer loop with coordinate descent inner updates along a
// warm-started log-spaced lambda path; lambda is chosen by mean CV AUC.
ElasticNetFit fit_enet(const DesignMatrix& x, std::span<const std::uint8_t> y,
                       const EnetOptions& options = {});

// Solutions along an explicit lambda sequence, warm-started in order.
std::vector<ElasticNetFit> fit_enet_path(const DesignMatrix& x, std::span<const std::uint8_t> y,
                                         double alpha, std::span<const double> lambdas,
                                         const EnetOptions& options = {});

struct KktResiduals {
  double zero_excess = 0.0;     // max(|g_j| - alpha*lambda, 0) over zero coefficients
  double stationarity = 0.0;    // max |g_j - lambda((1-alpha) b_j + alpha sign b_j)| over nonzeros
  double intercept = 0.0;       // |mean(y - p)|
};

// Optimality residuals of a fit, with gradients taken on the standardized
// columns of `x`.
KktResiduals kkt_residuals(const DesignMatrix& x, std::span<const std::uint8_t> y,
                           const ElasticNetFit& fit);

struct OddsRatio {
  double coefficient = 0.0;
  double std_error = 0.0;
  double odds_ratio = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool separated = false;  // MLE diverged; coefficient capped
  bool aliased = false;    // linearly dependent on earlier columns; not estimated
};

struct OddsRatioFit {
  double intercept = 0.0;
  std::vector<OddsRatio> terms;
};

inline constexpr double kSeparationCap = 20.0;

// Unpenalized logistic refit (Newton/IRLS) on exactly these columns plus an
// intercept. CI = exp(b ± 1.96 se) with se from the inverse observed
// information. Columns are tried in order; a column dependent on earlier ones
// is marked aliased.
OddsRatioFit odds_ratios(const DesignMatrix& x, std::span<const std::uint8_t> y,
                         double cap = kSeparationCap);

}  // namespace drf
