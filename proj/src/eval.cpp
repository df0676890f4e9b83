#include "drf/eval.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include <json.hpp>

#include "drf/elastic_net.hpp"
#include "drf/error.hpp"
#include "drf/metrics.hpp"
#include "drf/random.hpp"

namespace drf {

void SynthSpec::validate() const {
  if (n_rows == 0) throw SpecError("n_rows must be positive");
  if (!(base_rate >= 0.0 && base_rate <= lifted_rate && lifted_rate <= 1.0)) {
    throw SpecError("rates must satisfy 0 <= base_rate <= lifted_rate <= 1");
  }
  std::unordered_set<std::string> seen;
  for (const auto& f : features) {
    if (f.empty() || !seen.insert(f).second) throw SpecError("feature names must be unique and non-empty");
  }
}

namespace {

enum class Tok { ident, and_, or_, not_, lparen, rparen, end };

struct Lexer {
  std::string_view s;
  std::size_t i = 0;
  std::string text;

  Tok next() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) return Tok::end;
    auto starts = [&](std::string_view p) { return s.substr(i, p.size()) == p; };
    if (s[i] == '&') return ++i, Tok::and_;
    if (s[i] == '|') return ++i, Tok::or_;
    if (s[i] == '!') return ++i, Tok::not_;
    if (s[i] == '(') return ++i, Tok::lparen;
    if (s[i] == ')') return ++i, Tok::rparen;
    if (starts("∧")) return i += std::string_view("∧").size(), Tok::and_;
    if (starts("∨")) return i += std::string_view("∨").size(), Tok::or_;
    if (starts("¬")) return i += std::string_view("¬").size(), Tok::not_;
    const auto start = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '.' || s[i] == '-')) ++i;
    if (i == start) throw SpecError("unexpected character in rule at offset " + std::to_string(start));
    text = std::string(s.substr(start, i - start));
    return Tok::ident;
  }
};

std::vector<std::string> rule_identifiers(std::string_view text) {
  Lexer lex{text, 0, {}};
  std::vector<std::string> out;
  for (Tok t = lex.next(); t != Tok::end; t = lex.next()) {
    if (t == Tok::ident && std::find(out.begin(), out.end(), lex.text) == out.end()) out.push_back(lex.text);
  }
  return out;
}

}  // namespace

SynthSpec parse_synth_spec(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("synth spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SpecError("synth spec must be a JSON object");
  static const std::unordered_set<std::string> known{"n_rows", "features", "n_noise_features", "planted",
                                                     "base_rate", "lifted_rate", "seed", "target_name"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw SpecError("unknown synth spec field '" + key + "'");
  }
  SynthSpec spec;
  try {
    spec.n_rows = j.value("n_rows", spec.n_rows);
    spec.n_noise_features = j.value("n_noise_features", spec.n_noise_features);
    spec.planted = j.value("planted", spec.planted);
    spec.base_rate = j.value("base_rate", spec.base_rate);
    spec.lifted_rate = j.value("lifted_rate", spec.lifted_rate);
    spec.seed = j.value("seed", spec.seed);
    spec.target_name = j.value("target_name", spec.target_name);
    if (j.contains("features")) {
      spec.features = j.at("features").get<std::vector<std::string>>();
    } else {
      spec.features = rule_identifiers(spec.planted);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

Dnf parse_planted_rule(std::string_view text, const Schema& schema) {
  Lexer lex{text, 0, {}};
  Dnf out;
  Tok t = lex.next();
  if (t == Tok::end) return out;
  while (true) {
    Conjunction term;
    bool consistent = true;
    bool paren = false;
    if (t == Tok::lparen) {
      paren = true;
      t = lex.next();
    }
    while (true) {
      bool negated = false;
      if (t == Tok::not_) {
        negated = true;
        t = lex.next();
      }
      if (t != Tok::ident) throw SpecError("expected a feature name in rule");
      const auto f = schema.index_of(lex.text);
      if (!f) throw SpecError("rule references undeclared feature '" + lex.text + "'");
      if (schema.feature(*f).kind != FeatureKind::binary) throw SpecError("rule features must be binary");
      consistent = term.constrain(Literal{*f, {negated ? Level{0} : Level{1}}}) && consistent;
      t = lex.next();
      if (t != Tok::and_) break;
      t = lex.next();
    }
    if (paren) {
      if (t != Tok::rparen) throw SpecError("missing ')' in rule");
      t = lex.next();
    }
    if (consistent) out.terms.push_back(std::move(term));
    if (t == Tok::end) break;
    if (t != Tok::or_) throw SpecError("expected '|' between rule terms");
    t = lex.next();
  }
  return out;
}

Schema synth_schema(const SynthSpec& spec) {
  std::vector<FeatureSpec> features;
  auto add = [&](const std::string& name) {
    features.push_back(FeatureSpec{name, FeatureKind::binary, {"0", "1"}});
  };
  for (const auto& f : spec.features) add(f);
  for (std::size_t k = 1; k <= spec.n_noise_features; ++k) add("X" + std::to_string(k));
  try {
    return Schema(std::move(features), spec.target_name);
  } catch (const SchemaError& e) {
    throw SpecError(e.what());
  }
}

Dataset synth(const SynthSpec& spec) {
  spec.validate();
  auto schema = synth_schema(spec);
  const Dnf rule = parse_planted_rule(spec.planted, schema);
  const auto p = schema.size();
  std::vector<std::vector<Level>> columns(p, std::vector<Level>(spec.n_rows));
  std::vector<std::uint8_t> target(spec.n_rows);
  Rng rng(derive_seed(spec.seed, 0x5e7d));
  std::vector<Level> row(p);
  for (std::size_t i = 0; i < spec.n_rows; ++i) {
    for (std::size_t f = 0; f < p; ++f) {
      row[f] = static_cast<Level>(rng() >> 63);
      columns[f][i] = row[f];
    }
    const double rate = evaluate(rule, row) ? spec.lifted_rate : spec.base_rate;
    target[i] = bernoulli(rng, rate) ? 1 : 0;
  }
  return Dataset(std::move(schema), std::move(columns), std::move(target));
}

std::vector<double> tree_scores(const DecisionTree& tree, const Table& table) {
  std::vector<double> scores(table.n_rows());
  std::vector<Level> row(table.n_features());
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = table.at(i, f);
    const auto& c = tree.leaf(tree.encode(row)).counts;
    scores[i] = c.total() ? static_cast<double>(c.pos) / static_cast<double>(c.total()) : 0.0;
  }
  return scores;
}

namespace {

double tree_auc(const Table& train, const Table& test, const BenchOptions& options) {
  Rng rng(derive_seed(options.seed, 0xbe7c));
  GrowOptions grow;
  grow.leaf_budget = options.tree_leaf_budget;
  grow.min_leaf = options.tree_min_leaf;
  const auto tree = grow_tree(train, {}, grow, rng);
  return auc(tree_scores(tree, test), test.target());
}

double enet_auc(const Table& train, const Table& test, const BenchOptions& options) {
  const auto x_train = one_hot(train);
  const auto x_test = one_hot(test, train.schema());
  EnetOptions enet;
  enet.seed = options.seed;
  enet.threads = options.threads;
  const auto fit = fit_enet(x_train.x, train.target(), enet);
  return auc(fit.decision_function(x_test.x), test.target());
}

}  // namespace

BenchReport benchmark(const Dataset& train, const Dataset& test, const DrfConfig& config,
                      const BenchOptions& options) {
  if (train.schema().size() != test.schema().size()) throw SchemaError("train and test schemas differ");
  BenchReport report;
  report.n_train = train.n_rows();
  report.n_test = test.n_rows();
  report.layers = format_layers(config.layers);
  report.cells.push_back({"raw", "tree", tree_auc(train, test, options)});
  report.cells.push_back({"raw", "elastic_net", enet_auc(train, test, options)});

  std::vector<RegionTable> tables;
  const auto model = fit_drf(train, config, options.threads, &tables);
  for (std::size_t l = 1; l <= model.n_layers(); ++l) {
    const auto test_table = transform(model, test, l);
    const auto name = "DRF layer " + std::to_string(l);
    report.cells.push_back({name, "tree", tree_auc(tables[l - 1], test_table, options)});
    report.cells.push_back({name, "elastic_net", enet_auc(tables[l - 1], test_table, options)});
  }
  return report;
}

void write_bench_tsv(const BenchReport& report, std::ostream& out) {
  out << "# held-out AUC; n_train=" << report.n_train << " n_test=" << report.n_test
      << " layers=" << report.layers << '\n';
  out << "representation\ttree\telastic_net\n";
  for (std::size_t k = 0; k + 1 < report.cells.size(); k += 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f\t%.4f", report.cells[k].auc, report.cells[k + 1].auc);
    out << report.cells[k].representation << '\t' << buf << '\n';
  }
}

}  // namespace drf
