#include "drf/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <json.hpp>

namespace drf {

RuleReport rank_rules(const ElasticNetFit& fit, const IndicatorMatrix& indicators,
                      const DrfModel& model, std::size_t layer, std::size_t k,
                      const Dataset& train, std::size_t max_terms, bool merge_equivalent) {
  if (fit.standardized.size() != indicators.x.n_cols()) {
    throw FitError("fit was not built on this indicator matrix");
  }
  model.forest(layer);
  const auto& x = indicators.x;
  // Members carry +1 when their rows equal the group's first member's, -1
  // when they are its complement.
  struct Group {
    std::vector<std::pair<std::size_t, double>> members;
    double importance = 0.0;
    double direction = 0.0;  // standardized effect of the first orientation
  };
  std::map<std::vector<std::uint32_t>, std::size_t> group_of;
  std::vector<Group> groups;
  std::vector<std::uint32_t> complement;
  for (std::size_t j = 0; j < fit.standardized.size(); ++j) {
    if (fit.standardized[j] == 0.0) continue;
    const auto& rows = x.column(j).rows;
    double orientation = 1.0;
    auto it = merge_equivalent ? group_of.find(rows) : group_of.end();
    if (merge_equivalent && it == group_of.end()) {
      complement.clear();
      std::size_t r = 0;
      for (std::uint32_t i = 0; i < x.n_rows(); ++i) {
        if (r < rows.size() && rows[r] == i) {
          ++r;
        } else {
          complement.push_back(i);
        }
      }
      it = group_of.find(complement);
      orientation = -1.0;
    }
    if (it == group_of.end()) {
      it = group_of.insert_or_assign(rows, groups.size()).first;
      groups.emplace_back();
      orientation = 1.0;
    }
    auto& g = groups[it->second];
    g.members.emplace_back(j, orientation);
    g.importance += std::abs(fit.standardized[j]);
    g.direction += orientation * fit.standardized[j];
  }
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return groups[a].importance > groups[b].importance; });
  if (order.size() > k) order.resize(k);

  RuleReport report;
  report.layer = layer;
  report.alpha = fit.alpha;
  report.lambda = fit.lambda;
  if (!fit.cv_auc.empty()) {
    const auto it = std::find(fit.lambda_path.begin(), fit.lambda_path.end(), fit.lambda);
    if (it != fit.lambda_path.end()) report.cv_auc = fit.cv_auc[static_cast<std::size_t>(it - fit.lambda_path.begin())];
  }
  RuleExpander expander(model, max_terms);
  for (auto gi : order) {
    const auto& g = groups[gi];
    // Shown in the orientation that raises the risk when it is present.
    const double shown = g.direction < 0.0 ? -1.0 : 1.0;
    auto rep = std::find_if(g.members.begin(), g.members.end(), [&](const auto& m) { return m.second == shown; });
    if (rep == g.members.end()) rep = g.members.begin();
    const auto j = rep->first;
    const double flip = rep->second;
    RuleEntry e;
    e.indicator = x.name(j);
    e.tree = indicators.feature[j];
    e.region = indicators.level[j];
    e.importance = g.importance;
    for (const auto& [a, orientation] : g.members) {
      e.coefficient += orientation * flip * fit.coefficients[a];
      if (a == j) continue;
      (orientation == flip ? e.aliases : e.complements).push_back(x.name(a));
    }
    e.rule = expander.expand(layer, e.tree, e.region);
    e.rule_text = format_dnf(e.rule, model.input_schema());
    e.coverage = coverage(e.rule, train);
    report.entries.push_back(std::move(e));
  }
  return report;
}

void attach_odds_ratios(RuleReport& report, const IndicatorMatrix& indicators,
                        std::span<const std::uint8_t> y) {
  if (report.entries.empty()) return;
  std::vector<std::size_t> cols;
  for (const auto& e : report.entries) {
    const auto& names = indicators.x.names();
    const auto it = std::find(names.begin(), names.end(), e.indicator);
    if (it == names.end()) throw FitError("indicator " + e.indicator + " not in matrix");
    cols.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  const auto fit = odds_ratios(indicators.x.select_columns(cols), y);
  for (std::size_t k = 0; k < report.entries.size(); ++k) report.entries[k].odds = fit.terms[k];
}

RuleReport explain(const DrfModel& model, const Dataset& data, const ExplainOptions& options) {
  const auto table = transform(model, data, options.layer);
  const auto indicators = one_hot(table);
  const auto fit = fit_enet(indicators.x, table.target(), options.enet);
  auto report = rank_rules(fit, indicators, model, options.layer, options.top_k, data, options.max_terms,
                           options.merge_equivalent);
  attach_odds_ratios(report, indicators, table.target());
  return report;
}

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string ordinal(std::size_t k) {
  const char* suffix = "th";
  if (k % 100 < 11 || k % 100 > 13) {
    if (k % 10 == 1) suffix = "st";
    if (k % 10 == 2) suffix = "nd";
    if (k % 10 == 3) suffix = "rd";
  }
  return std::to_string(k) + suffix;
}

nlohmann::json term_list(const Dnf& dnf, const Schema& raw) {
  auto terms = nlohmann::json::array();
  for (const auto& t : dnf.terms) {
    auto lits = nlohmann::json::array();
    for (const auto& l : t.literals) {
      auto levels = nlohmann::json::array();
      for (auto v : l.allowed) levels.push_back(raw.feature(l.feature).levels[v]);
      lits.push_back({{"feature", raw.feature(l.feature).name}, {"in", levels}});
    }
    terms.push_back(lits);
  }
  return terms;
}

std::string join(const std::vector<std::string>& names) {
  if (names.empty()) return "-";
  std::string out = names.front();
  for (std::size_t k = 1; k < names.size(); ++k) out += "," + names[k];
  return out;
}

}  // namespace

void write_report_tsv(const RuleReport& report, const Schema& raw, std::ostream& out) {
  out << "# layer=" << report.layer << " alpha=" << fmt(report.alpha) << " lambda=" << fmt(report.lambda)
      << " cv_auc=" << fmt(report.cv_auc) << '\n';
  out << "rank\tindicator\timportance\tcoefficient\trule\tn_covered\tn_positive\todds_ratio\tci_low\t"
         "ci_high\tflags\ttruncated\taliases\tcomplements\tterms\n";
  for (std::size_t k = 0; k < report.entries.size(); ++k) {
    const auto& e = report.entries[k];
    std::string flags;
    if (e.odds && e.odds->separated) flags = "separated";
    if (e.odds && e.odds->aliased) flags = "aliased";
    out << k + 1 << '\t' << e.indicator << '\t' << fmt(e.importance) << '\t' << fmt(e.coefficient) << '\t'
        << e.rule_text << '\t' << e.coverage.n_covered << '\t' << e.coverage.n_positive << '\t'
        << (e.odds ? fmt(e.odds->odds_ratio) : "NA") << '\t' << (e.odds ? fmt(e.odds->ci_low) : "NA")
        << '\t' << (e.odds ? fmt(e.odds->ci_high) : "NA") << '\t' << (flags.empty() ? "-" : flags)
        << '\t' << (e.rule.truncated ? 1 : 0) << '\t' << join(e.aliases) << '\t' << join(e.complements) << '\t'
        << term_list(e.rule, raw).dump()
        << '\n';
  }
}

void write_report_text(const RuleReport& report, std::ostream& out) {
  out << "Rules ranked by elastic net on DRF layer " << report.layer << " (alpha " << fmt(report.alpha)
      << ", lambda " << fmt(report.lambda) << ", CV AUC " << fmt(report.cv_auc, "%.3f") << ")\n\n";
  if (report.entries.empty()) {
    out << "(no nonzero coefficients)\n";
    return;
  }
  for (std::size_t k = 0; k < report.entries.size(); ++k) {
    const auto& e = report.entries[k];
    out << ordinal(k + 1) << " important (" << e.indicator << ")  importance " << fmt(e.importance, "%.4f")
        << '\n';
    if (!e.aliases.empty()) {
      out << "  Same rows as:";
      for (const auto& a : e.aliases) out << ' ' << a;
      out << '\n';
    }
    if (!e.complements.empty()) {
      out << "  Complement of:";
      for (const auto& a : e.complements) out << ' ' << a;
      out << '\n';
    }
    out << "  Rule: " << e.rule_text << (e.rule.truncated ? "  [truncated]" : "") << '\n';
    out << "  # of records (Positive): " << e.coverage.n_covered << " (" << e.coverage.n_positive << ")\n";
    if (e.odds) {
      if (e.odds->aliased) {
        out << "  Odds ratio: not estimable (aliased with a higher-ranked rule)\n";
      } else {
        out << "  Odds ratio: " << fmt(e.odds->odds_ratio, "%.2f") << " [95% CI " << fmt(e.odds->ci_low, "%.2f")
            << ", " << fmt(e.odds->ci_high, "%.2f") << "]" << (e.odds->separated ? "  (separated; capped)" : "")
            << '\n';
      }
    }
    out << '\n';
  }
}

}  // namespace drf
