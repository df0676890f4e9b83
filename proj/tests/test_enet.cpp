#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "drf/elastic_net.hpp"
#include "drf/report.hpp"
#include "support.hpp"

namespace drf {
namespace {

struct Problem {
  std::vector<std::vector<double>> cols;
  std::vector<std::uint8_t> y;
};

// Mixed continuous and 0/1 columns with a moderate true signal.
Problem random_problem(Rng& rng, std::size_t n, std::size_t p) {
  Problem pr;
  pr.cols.assign(p, std::vector<double>(n));
  std::vector<double> beta(p);
  for (std::size_t j = 0; j < p; ++j) beta[j] = 1.2 * uniform01(rng) - 0.6;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      pr.cols[j][i] = j % 2 ? (bernoulli(rng, 0.3) ? 1.0 : 0.0) : 4.0 * uniform01(rng) - 2.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double eta = -0.3;
    for (std::size_t j = 0; j < p; ++j) eta += beta[j] * pr.cols[j][i];
    pr.y.push_back(bernoulli(rng, 1.0 / (1.0 + std::exp(-eta))) ? 1 : 0);
  }
  return pr;
}

EnetOptions at_lambda(double lambda, double alpha = 0.5) {
  EnetOptions o;
  o.alpha = alpha;
  o.lambda = lambda;
  return o;
}

TEST(Enet, UnpenalizedMatchesIrlsOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const auto pr = random_problem(rng, 500, 10);
    const auto oracle = test::irls_oracle(pr.cols, pr.y);
    const auto fit = fit_enet(DesignMatrix::from_dense(pr.cols), pr.y, at_lambda(0.0));
    EXPECT_NEAR(fit.intercept, oracle.intercept, 1e-4);
    for (std::size_t j = 0; j < pr.cols.size(); ++j) EXPECT_NEAR(fit.coefficients[j], oracle.coef[j], 1e-4);
  }
}

TEST(Enet, LambdaMaxZeroesEverything) {
  Rng rng(3);
  const auto pr = random_problem(rng, 300, 6);
  const auto x = DesignMatrix::from_dense(pr.cols);
  const double lmax = lambda_max(x, pr.y, 0.5);
  const auto at = fit_enet(x, pr.y, at_lambda(lmax));
  for (double b : at.coefficients) EXPECT_EQ(b, 0.0);
  const double rate = static_cast<double>(std::count(pr.y.begin(), pr.y.end(), 1)) / 300.0;
  EXPECT_NEAR(at.intercept, std::log(rate / (1 - rate)), 1e-9);
  const auto below = fit_enet(x, pr.y, at_lambda(0.95 * lmax));
  EXPECT_TRUE(std::any_of(below.coefficients.begin(), below.coefficients.end(), [](double b) { return b != 0.0; }));
}

TEST(Enet, KktHoldsAlongPath) {
  Rng rng(8);
  for (double alpha : {1.0, 0.5, 0.1}) {
    const auto pr = random_problem(rng, 400, 12);
    const auto x = DesignMatrix::from_dense(pr.cols);
    const double lmax = lambda_max(x, pr.y, alpha);
    std::vector<double> grid;
    for (int k = 0; k < 20; ++k) grid.push_back(lmax * std::pow(1e-3, k / 19.0));
    for (const auto& fit : fit_enet_path(x, pr.y, alpha, grid)) {
      const auto r = kkt_residuals(x, pr.y, fit);
      EXPECT_LE(r.zero_excess, 1e-6) << "alpha " << alpha << " lambda " << fit.lambda;
      EXPECT_LE(r.stationarity, 1e-6) << "alpha " << alpha << " lambda " << fit.lambda;
      EXPECT_LE(r.intercept, 1e-6);
    }
  }
}

TEST(Enet, ColumnScaleDoesNotChangeStandardizedFit) {
  Rng rng(12);
  const auto pr = random_problem(rng, 300, 5);
  const auto x = DesignMatrix::from_dense(pr.cols);
  const auto a = fit_enet(x, pr.y, at_lambda(0.01));
  const auto b = fit_enet(x.scale_column(0, 7.0), pr.y, at_lambda(0.01));
  EXPECT_NEAR(a.standardized[0], b.standardized[0], 1e-7);
  EXPECT_NEAR(a.coefficients[0], 7.0 * b.coefficients[0], 1e-6);
}

TEST(Enet, PerfectPredictorStaysFinite) {
  std::vector<double> col;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 100; ++i) {
    col.push_back(i % 2);
    y.push_back(i % 2);
  }
  const auto x = DesignMatrix::from_dense({col});
  const auto fit = fit_enet(x, y, at_lambda(0.01));
  EXPECT_GT(fit.coefficients[0], 0.0);
  EXPECT_TRUE(std::isfinite(fit.coefficients[0]));
}

TEST(Enet, ConstantColumnGetsZero) {
  Rng rng(1);
  auto pr = random_problem(rng, 200, 3);
  pr.cols.push_back(std::vector<double>(200, 1.0));
  const auto fit = fit_enet(DesignMatrix::from_dense(pr.cols), pr.y, at_lambda(0.0));
  EXPECT_EQ(fit.coefficients[3], 0.0);
}

TEST(Enet, SweepBudgetRaisesConvergenceError) {
  Rng rng(6);
  const auto pr = random_problem(rng, 300, 10);
  auto o = at_lambda(0.0);
  o.max_sweeps = 1;
  o.tolerance = 1e-15;
  try {
    fit_enet(DesignMatrix::from_dense(pr.cols), pr.y, o);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.last_iterate.coefficients.size(), 10u);
    EXPECT_GT(e.last_change, 0.0);
  }
}

TEST(Enet, BadInputs) {
  const auto x = DesignMatrix::from_dense({{0, 1, 0, 1}});
  const std::vector<std::uint8_t> one_class{1, 1, 1, 1};
  EXPECT_THROW(fit_enet(x, one_class), FitError);
  const std::vector<std::uint8_t> y{0, 1, 0, 1};
  EXPECT_THROW(fit_enet(x, y, at_lambda(0.1, 1.5)), FitError);
  const std::vector<std::uint8_t> short_y{0, 1};
  EXPECT_THROW(fit_enet(x, short_y), FitError);
}

TEST(Enet, CrossValidationPicksFromPath) {
  Rng rng(10);
  const auto pr = random_problem(rng, 400, 8);
  EnetOptions o;
  o.n_lambda = 30;
  const auto fit = fit_enet(DesignMatrix::from_dense(pr.cols), pr.y, o);
  ASSERT_EQ(fit.cv_auc.size(), fit.lambda_path.size());
  const auto best = std::max_element(fit.cv_auc.begin(), fit.cv_auc.end()) - fit.cv_auc.begin();
  EXPECT_EQ(fit.lambda, fit.lambda_path[static_cast<std::size_t>(best)]);
  EnetOptions threaded = o;
  threaded.threads = 4;
  EXPECT_EQ(fit_enet(DesignMatrix::from_dense(pr.cols), pr.y, threaded).coefficients, fit.coefficients);
}

// Builds a single 0/1 column and labels from 2×2 counts.
void two_by_two(std::size_t a, std::size_t b, std::size_t c, std::size_t d, std::vector<double>& col,
                std::vector<std::uint8_t>& y) {
  col.clear();
  y.clear();
  auto add = [&](std::size_t count, double x, std::uint8_t label) {
    for (std::size_t i = 0; i < count; ++i) {
      col.push_back(x);
      y.push_back(label);
    }
  };
  add(a, 1, 1);
  add(b, 1, 0);
  add(c, 0, 1);
  add(d, 0, 0);
}

TEST(OddsRatio, MatchesClosedFormTwoByTwo) {
  Rng rng(77);
  std::vector<double> col;
  std::vector<std::uint8_t> y;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = 1 + uniform_below(rng, 200), b = 1 + uniform_below(rng, 200);
    const auto c = 1 + uniform_below(rng, 200), d = 1 + uniform_below(rng, 200);
    two_by_two(a, b, c, d, col, y);
    const auto fit = odds_ratios(DesignMatrix::from_dense({col}), y);
    const auto ref = test::closed_form_or(a, b, c, d);
    const auto& t = fit.terms.at(0);
    EXPECT_NEAR(t.odds_ratio, ref.odds_ratio, 1e-10 * ref.odds_ratio);
    EXPECT_NEAR(t.ci_low, ref.ci_low, 1e-10 * ref.ci_low);
    EXPECT_NEAR(t.ci_high, ref.ci_high, 1e-10 * ref.ci_high);
    EXPECT_FALSE(t.separated);
  }
}

TEST(OddsRatio, IndependenceGivesExactlyOne) {
  std::vector<double> col;
  std::vector<std::uint8_t> y;
  for (std::size_t k : {1, 2, 3, 7}) {
    two_by_two(3 * k, 5 * k, 6 * k, 10 * k, col, y);
    EXPECT_EQ(odds_ratios(DesignMatrix::from_dense({col}), y).terms[0].odds_ratio, 1.0);
  }
}

TEST(OddsRatio, SeparationAndAliasing) {
  std::vector<double> col;
  std::vector<std::uint8_t> y;
  two_by_two(10, 0, 5, 20, col, y);
  const auto sep = odds_ratios(DesignMatrix::from_dense({col}), y);
  EXPECT_TRUE(sep.terms[0].separated);
  EXPECT_NEAR(sep.terms[0].coefficient, kSeparationCap, 1e-9);

  two_by_two(10, 8, 5, 20, col, y);
  std::vector<double> flipped(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) flipped[i] = 1.0 - col[i];
  const auto al = odds_ratios(DesignMatrix::from_dense({col, col, flipped}), y);
  EXPECT_FALSE(al.terms[0].aliased);
  EXPECT_TRUE(al.terms[1].aliased);
  EXPECT_TRUE(al.terms[2].aliased);
  const auto ref = test::closed_form_or(10, 8, 5, 20);
  EXPECT_NEAR(al.terms[0].odds_ratio, ref.odds_ratio, 1e-10 * ref.odds_ratio);
}

// A model and indicator matrix with a clear signal, for ranking tests.
struct Ranked {
  Table data;
  DrfModel model;
  IndicatorMatrix ind;
  ElasticNetFit fit;
};

Ranked ranked_fixture() {
  Rng rng(31);
  auto data = test::random_table(rng, 800, 6, 3, 0.85);
  DrfConfig c;
  c.master_seed = 4;
  c.layers = parse_layers("15x2..5,10x2..5");
  auto model = fit_drf(data, c);
  auto ind = one_hot(transform(model, data, 2));
  auto fit = fit_enet(ind.x, data.target(), at_lambda(0.002));
  return {std::move(data), std::move(model), std::move(ind), std::move(fit)};
}

TEST(RankRules, PerIndicatorOrderMatchesSort) {
  const auto r = ranked_fixture();
  const auto report = rank_rules(r.fit, r.ind, r.model, 2, 5, r.data, kDefaultMaxTerms, false);
  std::vector<std::pair<double, std::string>> oracle;
  for (std::size_t j = 0; j < r.fit.standardized.size(); ++j) {
    if (r.fit.standardized[j] != 0.0) oracle.emplace_back(std::abs(r.fit.standardized[j]), r.ind.x.name(j));
  }
  std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  ASSERT_EQ(report.entries.size(), std::min<std::size_t>(5, oracle.size()));
  for (std::size_t k = 0; k < report.entries.size(); ++k) {
    EXPECT_EQ(report.entries[k].importance, oracle[k].first);
    EXPECT_EQ(report.entries[k].indicator, oracle[k].second);
    EXPECT_TRUE(report.entries[k].aliases.empty());
    EXPECT_TRUE(report.entries[k].complements.empty());
  }
}

TEST(RankRules, MergedGroupsShareRows) {
  const auto r = ranked_fixture();
  const auto report = rank_rules(r.fit, r.ind, r.model, 2, 10, r.data);
  const auto& names = r.ind.x.names();
  auto rows_of = [&](const std::string& name) {
    const auto j = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
    return r.ind.x.column(j).rows;
  };
  for (std::size_t k = 0; k < report.entries.size(); ++k) {
    const auto& e = report.entries[k];
    if (k > 0) EXPECT_GE(report.entries[k - 1].importance, e.importance);
    const auto mine = rows_of(e.indicator);
    for (const auto& a : e.aliases) EXPECT_EQ(rows_of(a), mine);
    for (const auto& c : e.complements) EXPECT_EQ(rows_of(c).size() + mine.size(), r.data.n_rows());
    // The expanded rule covers the indicator's rows.
    const auto mask = covered_rows(e.rule, r.data);
    std::size_t covered = 0;
    for (auto i : mine) covered += mask[i];
    EXPECT_EQ(covered, mine.size());
    EXPECT_EQ(e.coverage.n_covered, mine.size());
  }
}

TEST(Explain, ReportHasOddsRatios) {
  const auto r = ranked_fixture();
  ExplainOptions o;
  o.enet.n_lambda = 20;
  const auto report = explain(r.model, r.data, o);
  ASSERT_FALSE(report.entries.empty());
  for (const auto& e : report.entries) {
    ASSERT_TRUE(e.odds.has_value());
    if (!e.odds->aliased) EXPECT_LE(e.odds->ci_low, e.odds->ci_high);
  }
  std::ostringstream tsv, text;
  write_report_tsv(report, r.model.input_schema(), tsv);
  write_report_text(report, text);
  EXPECT_NE(tsv.str().find("rank\tindicator"), std::string::npos);
  EXPECT_NE(text.str().find("1st important"), std::string::npos);
  EXPECT_NE(text.str().find("# of records (Positive)"), std::string::npos);
}

}  // namespace
}  // namespace drf
