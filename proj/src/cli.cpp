#include "drf/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "drf/dataset.hpp"
#include "drf/error.hpp"
#include "drf/eval.hpp"
#include "drf/expand.hpp"
#include "drf/io.hpp"
#include "drf/metrics.hpp"
#include "drf/model.hpp"
#include "drf/report.hpp"

namespace drf {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainArgs {
  fs::path data, schema, out;
  std::string layers{kDefaultLayers};
  std::uint64_t seed = 0;
  std::size_t min_leaf = 5;
  bool no_bootstrap = false;
  std::size_t threads = 1;
};

struct TransformArgs {
  fs::path model, data, out;
  std::size_t layer = 1;
};

struct RulesArgs {
  fs::path model;
  std::size_t layer = 1;
  std::size_t tree = 1;
  std::string region;
  std::size_t max_terms = kDefaultMaxTerms;
};

struct ExplainArgs {
  fs::path model, data, out;
  std::size_t layer = 2;
  std::size_t top_k = kDefaultTopK;
  double alpha = 0.5;
  std::optional<std::uint64_t> seed;
  std::string format = "text";
  std::size_t max_terms = kDefaultMaxTerms;
  bool per_indicator = false;
  std::size_t threads = 1;
};

struct EvalArgs {
  bool bench = false;
  fs::path model, data, train, test, schema, out;
  std::string metric = "auc";
  std::string layers{kDefaultLayers};
  std::optional<std::uint64_t> seed;
  std::size_t min_leaf = 5;
  bool no_bootstrap = false;
  double test_fraction = 0.3;
  std::size_t tree_leaf_budget = 16;
  std::size_t threads = 1;
};

struct SynthArgs {
  fs::path spec, out, schema_out;
  std::uint64_t seed = 0;
};

DrfConfig make_config(const std::string& layers, std::uint64_t seed, std::size_t min_leaf,
                      bool no_bootstrap) {
  LayerConfig base;
  base.min_leaf = min_leaf;
  base.bootstrap = !no_bootstrap;
  DrfConfig cfg;
  try {
    cfg.layers = parse_layers(layers, base);
    cfg.master_seed = seed;
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

RegionId parse_region(const std::string& text) {
  std::string_view s = text;
  if (!s.empty() && (s[0] == 'r' || s[0] == 'R')) s.remove_prefix(1);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string_view::npos || s.size() > 9) {
    throw UsageError("--region expects rK or K, got '" + text + "'");
  }
  return static_cast<RegionId>(std::stoul(std::string(s)));
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = make_config(a.layers, a.seed, a.min_leaf, a.no_bootstrap);
  const auto data = load_csv(a.data, a.schema);
  const auto model = fit_drf(data, cfg, a.threads);
  save_model(model, a.out);
  out << "trained " << model.n_layers() << " layers on " << data.n_rows() << " rows -> "
      << a.out.string() << '\n';
  return 0;
}

int run_transform(const TransformArgs& a, std::ostream& out) {
  const auto model = load_model(a.model);
  const auto data = load_csv(a.data, model.input_schema());
  const auto table = transform(model, data, a.layer);
  std::ostringstream csv;
  write_csv(table, csv);
  write_file_atomic(a.out, csv.str());
  out << "wrote " << table.n_rows() << " rows x " << table.n_features() << " regions -> "
      << a.out.string() << '\n';
  return 0;
}

int run_rules(const RulesArgs& a, std::ostream& out) {
  const auto model = load_model(a.model);
  if (a.tree == 0) throw UsageError("--tree is 1-based");
  const auto region = parse_region(a.region);
  const auto dnf = expand_region(model, a.layer, a.tree - 1, region, a.max_terms);
  out << region_column_name(a.layer, a.tree - 1) << '=' << region_token(region) << '\n'
      << format_dnf(dnf, model.input_schema()) << '\n';
  if (dnf.truncated) out << "# truncated at " << a.max_terms << " terms\n";
  return 0;
}

int run_explain(const ExplainArgs& a, std::ostream& out) {
  if (a.format != "text" && a.format != "tsv") throw UsageError("--format must be text or tsv");
  const auto model = load_model(a.model);
  const auto data = load_csv(a.data, model.input_schema());
  ExplainOptions opts;
  opts.layer = a.layer;
  opts.top_k = a.top_k;
  opts.max_terms = a.max_terms;
  opts.merge_equivalent = !a.per_indicator;
  opts.enet.alpha = a.alpha;
  opts.enet.seed = a.seed.value_or(model.config().master_seed);
  opts.enet.threads = a.threads;
  const auto report = explain(model, data, opts);
  std::ostringstream text;
  if (a.format == "tsv") {
    write_report_tsv(report, model.input_schema(), text);
  } else {
    write_report_text(report, text);
  }
  write_file_atomic(a.out, text.str());
  out << "wrote " << report.entries.size() << " rules -> " << a.out.string() << '\n';
  return 0;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  if (!a.bench) {
    if (a.model.empty() || a.data.empty()) throw UsageError("eval needs --model and --data, or --bench");
    const auto model = load_model(a.model);
    const auto data = load_csv(a.data, model.input_schema());
    const auto scores = predict_proba(model, data);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", auc(scores, data.target()));
    out << a.metric << '\t' << buf << '\n';
    return 0;
  }
  if (a.schema.empty()) throw UsageError("eval --bench needs --schema");
  if (!a.seed) throw UsageError("eval --bench needs --seed");
  const bool split_mode = !a.data.empty();
  if (split_mode == (!a.train.empty() || !a.test.empty())) {
    throw UsageError("eval --bench takes either --data or both --train and --test");
  }
  if (!split_mode && (a.train.empty() || a.test.empty())) {
    throw UsageError("eval --bench needs both --train and --test");
  }
  if (!(a.test_fraction > 0.0 && a.test_fraction < 1.0)) throw UsageError("--test-fraction must be in (0, 1)");
  const auto cfg = make_config(a.layers, *a.seed, a.min_leaf, a.no_bootstrap);

  std::optional<Dataset> train, test;
  if (split_mode) {
    auto [tr, te] = stratified_split(load_csv(a.data, a.schema), a.test_fraction, *a.seed);
    train.emplace(std::move(tr));
    test.emplace(std::move(te));
  } else {
    train.emplace(load_csv(a.train, a.schema));
    test.emplace(load_csv(a.test, train->schema()));
  }
  BenchOptions opts;
  opts.seed = *a.seed;
  opts.tree_leaf_budget = a.tree_leaf_budget;
  opts.tree_min_leaf = a.min_leaf;
  opts.threads = a.threads;
  const auto report = benchmark(*train, *test, cfg, opts);
  std::ostringstream tsv;
  write_bench_tsv(report, tsv);
  if (a.out.empty()) {
    out << tsv.str();
  } else {
    write_file_atomic(a.out, tsv.str());
    out << "wrote benchmark -> " << a.out.string() << '\n';
  }
  return 0;
}

int run_synth(const SynthArgs& a, std::ostream& out) {
  auto spec = parse_synth_spec(read_file(a.spec));
  spec.seed = a.seed;
  const auto data = synth(spec);
  std::ostringstream csv, schema;
  write_csv(data, csv);
  write_schema_decls(data.schema(), schema);
  const auto schema_path = a.schema_out.empty() ? fs::path(a.out.string() + ".schema") : a.schema_out;
  write_file_atomic(a.out, csv.str());
  write_file_atomic(schema_path, schema.str());
  out << "wrote " << data.n_rows() << " rows (" << data.n_positive() << " positive) -> "
      << a.out.string() << ", schema -> " << schema_path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep rule forests: layered region encodings and rule extraction", "drf"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Fit a layered forest and save the model");
  c_train->add_option("--data", train.data, "Training CSV")->required();
  c_train->add_option("--schema", train.schema, "Column declarations (name,kind per line)")->required();
  c_train->add_option("--layers", train.layers, "Trees x leaf budgets per layer")->capture_default_str();
  c_train->add_option("--seed", train.seed, "Master seed")->required();
  c_train->add_option("--out", train.out, "Model file")->required();
  c_train->add_option("--min-leaf", train.min_leaf, "Minimum rows per leaf")->capture_default_str();
  c_train->add_flag("--no-bootstrap", train.no_bootstrap, "Grow every tree on all rows");
  c_train->add_option("--threads", train.threads, "Worker cap")->check(CLI::PositiveNumber);

  TransformArgs tf;
  auto* c_tf = app.add_subcommand("transform", "Write the region table after a layer");
  c_tf->add_option("--model", tf.model)->required();
  c_tf->add_option("--data", tf.data)->required();
  c_tf->add_option("--layer", tf.layer, "1-based layer")->required()->check(CLI::PositiveNumber);
  c_tf->add_option("--out", tf.out)->required();

  RulesArgs rules;
  auto* c_rules = app.add_subcommand("rules", "Expand one region into a raw-feature rule");
  c_rules->add_option("--model", rules.model)->required();
  c_rules->add_option("--layer", rules.layer, "1-based layer")->required()->check(CLI::PositiveNumber);
  c_rules->add_option("--tree", rules.tree, "1-based tree")->required()->check(CLI::PositiveNumber);
  c_rules->add_option("--region", rules.region, "Region, rK or K")->required();
  c_rules->add_option("--max-terms", rules.max_terms)->capture_default_str()->check(CLI::PositiveNumber);

  ExplainArgs ex;
  auto* c_ex = app.add_subcommand("explain", "Rank a layer's regions with an elastic net and report rules");
  c_ex->add_option("--model", ex.model)->required();
  c_ex->add_option("--data", ex.data)->required();
  c_ex->add_option("--layer", ex.layer, "1-based layer")->capture_default_str()->check(CLI::PositiveNumber);
  c_ex->add_option("--top-k", ex.top_k)->capture_default_str()->check(CLI::PositiveNumber);
  c_ex->add_option("--alpha", ex.alpha, "L1 share of the penalty")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  c_ex->add_option("--seed", ex.seed, "CV fold seed (default: the model's seed)");
  c_ex->add_option("--format", ex.format, "text or tsv")->capture_default_str();
  c_ex->add_option("--max-terms", ex.max_terms)->capture_default_str()->check(CLI::PositiveNumber);
  c_ex->add_flag("--per-indicator", ex.per_indicator,
                 "Rank single indicators; do not merge identical or complementary regions");
  c_ex->add_option("--out", ex.out, "Report file")->required();
  c_ex->add_option("--threads", ex.threads)->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score a model, or run the learner benchmark with --bench");
  c_ev->add_flag("--bench", ev.bench, "Tree and elastic net on raw features and every layer");
  c_ev->add_option("--model", ev.model);
  c_ev->add_option("--data", ev.data, "Scored CSV, or the CSV to split with --bench");
  c_ev->add_option("--metric", ev.metric)->capture_default_str()->check(CLI::IsMember({"auc"}));
  c_ev->add_option("--train", ev.train);
  c_ev->add_option("--test", ev.test);
  c_ev->add_option("--schema", ev.schema);
  c_ev->add_option("--layers", ev.layers)->capture_default_str();
  c_ev->add_option("--seed", ev.seed);
  c_ev->add_option("--min-leaf", ev.min_leaf)->capture_default_str();
  c_ev->add_flag("--no-bootstrap", ev.no_bootstrap);
  c_ev->add_option("--test-fraction", ev.test_fraction)->capture_default_str();
  c_ev->add_option("--tree-leaf-budget", ev.tree_leaf_budget)->capture_default_str()->check(CLI::PositiveNumber);
  c_ev->add_option("--out", ev.out, "Benchmark TSV (default: stdout)");
  c_ev->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Generate planted-rule data from a JSON spec");
  c_sy->add_option("--spec", sy.spec)->required();
  c_sy->add_option("--out", sy.out)->required();
  c_sy->add_option("--seed", sy.seed)->required();
  c_sy->add_option("--schema-out", sy.schema_out, "Schema file (default: OUT.schema)");

  std::vector<std::string> argv_store{"drf"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (c_train->parsed()) return run_train(train, out);
    if (c_tf->parsed()) return run_transform(tf, out);
    if (c_rules->parsed()) return run_rules(rules, out);
    if (c_ex->parsed()) return run_explain(ex, out);
    if (c_ev->parsed()) return run_eval(ev, out);
    if (c_sy->parsed()) return run_synth(sy, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommands().back()->help();
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace drf
