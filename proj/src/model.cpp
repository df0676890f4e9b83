#include "drf/model.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "drf/error.hpp"
#include "drf/io.hpp"

namespace drf {

void DrfConfig::validate() const {
  if (layers.empty()) throw ConfigError("a DRF model needs at least one layer");
  for (const auto& l : layers) l.validate();
}

DrfConfig DrfConfig::default_stack(std::uint64_t seed) {
  return DrfConfig{parse_layers(kDefaultLayers), seed};
}

namespace {

std::size_t parse_count(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::vector<LayerConfig> parse_layers(std::string_view text, const LayerConfig& base) {
  std::vector<LayerConfig> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const auto x = item.find('x');
    const auto dots = item.find("..");
    if (x == std::string_view::npos || dots == std::string_view::npos || dots < x) {
      throw ConfigError("layer spec '" + std::string(item) + "' is not TREESxMIN..MAX");
    }
    LayerConfig cfg = base;
    cfg.n_trees = parse_count(item.substr(0, x), "tree count");
    cfg.leaf_budget_min = parse_count(item.substr(x + 1, dots - x - 1), "leaf budget");
    cfg.leaf_budget_max = parse_count(item.substr(dots + 2), "leaf budget");
    cfg.validate();
    out.push_back(cfg);
  }
  if (out.empty()) throw ConfigError("empty layer specification");
  return out;
}

std::string format_layers(const std::vector<LayerConfig>& layers) {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ',';
    out += std::to_string(l.n_trees) + "x" + std::to_string(l.leaf_budget_min) + ".." +
           std::to_string(l.leaf_budget_max);
  }
  return out;
}

DrfModel::DrfModel(DrfConfig config, std::vector<Forest> forests)
    : config_(std::move(config)), forests_(std::move(forests)) {
  config_.validate();
  if (forests_.size() != config_.layers.size()) throw ConfigError("forest count does not match layer count");
  for (std::size_t l = 0; l < forests_.size(); ++l) {
    if (forests_[l].layer() != l + 1) throw ConfigError("forest layer index out of sequence");
    if (l > 0 && forests_[l].input_schema() != forests_[l - 1].output_schema()) {
      throw SchemaError("layer " + std::to_string(l + 1) + " was not trained on layer " +
                        std::to_string(l) + "'s region table");
    }
  }
}

const Forest& DrfModel::forest(std::size_t layer) const {
  if (layer < 1 || layer > forests_.size()) {
    throw LookupError("layer " + std::to_string(layer) + " out of range 1.." +
                      std::to_string(forests_.size()));
  }
  return forests_[layer - 1];
}

DrfModel fit_drf(const Dataset& train, const DrfConfig& config, std::size_t threads,
                 std::vector<RegionTable>* tables) {
  config.validate();
  std::vector<Forest> forests;
  if (tables) tables->clear();
  const Table* input = &train;
  std::optional<RegionTable> current;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    forests.push_back(fit_layer(*input, config.layers[l], l + 1, config.master_seed, threads));
    current.emplace(encode_table(forests.back(), *input));
    if (tables) tables->push_back(*current);
    input = &*current;
  }
  return DrfModel(config, std::move(forests));
}

RegionTable transform(const DrfModel& model, const Dataset& data, std::size_t upto_layer) {
  model.forest(upto_layer);
  RegionTable table = encode_table(model.forest(1), data);
  for (std::size_t l = 2; l <= upto_layer; ++l) table = encode_table(model.forest(l), table);
  return table;
}

std::vector<double> predict_proba(const DrfModel& model, const Dataset& data) {
  const auto last = model.n_layers();
  const auto& forest = model.forest(last);
  const RegionTable table = last == 1 ? encode_table(forest, data)
                                      : encode_table(forest, transform(model, data, last - 1));
  std::vector<double> out(table.n_rows(), 0.0);
  for (std::size_t t = 0; t < forest.size(); ++t) {
    const auto& tree = forest.tree(t);
    std::vector<double> rate(tree.n_leaves());
    for (RegionId r = 0; r < tree.n_leaves(); ++r) {
      const auto& c = tree.leaf(r).counts;
      rate[r] = c.total() ? static_cast<double>(c.pos) / static_cast<double>(c.total()) : 0.0;
    }
    const auto column = table.column(t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += rate[column[i]];
  }
  for (auto& v : out) v /= static_cast<double>(forest.size());
  return out;
}

// ---------------------------------------------------------------------------
// Text format. Tokens are percent-escaped so every field is one
// whitespace-free word. Trees are written in preorder, indented by depth.

namespace {

constexpr std::string_view kMagic = "drf-model";

std::string escape(std::string_view token) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : token) {
    if (c <= 0x20 || c == '%' || c == '{' || c == '}' || c == ',' || c == 0x7f) {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string level_set(const LevelSet& set, const FeatureSpec& f) {
  std::string out = "{";
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) out += ',';
    out += escape(f.levels.at(set[i]));
  }
  return out + "}";
}

void write_tree(std::ostream& out, const DecisionTree& tree, const Schema& schema) {
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int depth) {
    const auto& n = tree.node(i);
    out << std::string(static_cast<std::size_t>(depth) * 2, ' ');
    if (n.leaf) {
      out << "leaf " << region_token(n.region) << " counts " << n.counts.pos << ' ' << n.counts.neg << '\n';
      return;
    }
    const auto& f = schema.feature(n.feature);
    out << "split " << escape(f.name) << " left " << level_set(n.left_levels, f) << " right "
        << level_set(n.right_levels, f) << " counts " << n.counts.pos << ' ' << n.counts.neg << '\n';
    rec(n.left, depth + 1);
    rec(n.right, depth + 1);
  };
  rec(0, 1);
}

}  // namespace

std::string serialize_model(const DrfModel& model) {
  std::ostringstream out;
  out << kMagic << ' ' << DrfModel::kFormatVersion << '\n';
  out << "master_seed " << model.config().master_seed << '\n';
  const auto& schema = model.input_schema();
  out << "target " << escape(schema.target_name()) << '\n';
  out << "features " << schema.size() << '\n';
  for (const auto& f : schema.features()) {
    out << "feature " << escape(f.name) << ' ' << to_string(f.kind) << ' ' << f.levels.size();
    for (const auto& level : f.levels) out << ' ' << escape(level);
    out << '\n';
  }
  out << "layers " << model.n_layers() << '\n';
  for (const auto& forest : model.forests()) {
    const auto& c = forest.config();
    out << "layer " << forest.layer() << " trees " << c.n_trees << " budget " << c.leaf_budget_min
        << ' ' << c.leaf_budget_max << " feature_sample " << c.feature_sample << " bootstrap "
        << (c.bootstrap ? 1 : 0) << " min_leaf " << c.min_leaf << '\n';
    for (std::size_t t = 0; t < forest.size(); ++t) {
      out << "tree " << t + 1 << " leaves " << forest.tree(t).n_leaves() << '\n';
      write_tree(out, forest.tree(t), forest.input_schema());
    }
  }
  std::string body = out.str();
  body += "end " + hex64(fnv1a(body)) + '\n';
  return body;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }

  // Next line split into words.
  std::vector<std::string_view> line() {
    if (done()) throw TruncatedModelError("model file ends early");
    auto nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) throw TruncatedModelError("model file ends mid-line");
    auto l = text_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    ++line_no_;
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < l.size()) {
      while (i < l.size() && l[i] == ' ') ++i;
      auto j = i;
      while (j < l.size() && l[j] != ' ') ++j;
      if (j > i) words.push_back(l.substr(i, j - i));
      i = j;
    }
    return words;
  }

  std::vector<std::string_view> expect(std::string_view keyword, std::size_t n_words) {
    auto w = line();
    if (w.size() < n_words || w[0] != keyword) fail("expected '" + std::string(keyword) + "'");
    return w;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw CorruptModelError("model line " + std::to_string(line_no_) + ": " + what);
  }

  std::uint64_t number(std::string_view s) const {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
      fail("bad number '" + std::string(s) + "'");
    }
    return v;
  }

  std::string unescape(std::string_view s) const {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != '%') {
        out += s[i];
        continue;
      }
      if (i + 2 >= s.size()) fail("bad escape");
      unsigned v = 0;
      auto [ptr, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (ec != std::errc{} || ptr != s.data() + i + 3) fail("bad escape");
      out += static_cast<char>(v);
      i += 2;
    }
    return out;
  }

  LevelSet levels(std::string_view s, const FeatureSpec& f) const {
    if (s.size() < 2 || s.front() != '{' || s.back() != '}') fail("bad level set");
    s = s.substr(1, s.size() - 2);
    LevelSet out;
    while (!s.empty()) {
      auto comma = s.find(',');
      auto tok = unescape(s.substr(0, comma));
      auto level = f.find(tok);
      if (!level) fail("unknown level '" + tok + "' of " + f.name);
      out.push_back(*level);
      s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

DecisionTree parse_tree(Parser& p, const Schema& schema, std::size_t n_leaves) {
  std::vector<DecisionTree::Node> nodes;
  std::function<std::size_t()> rec = [&]() -> std::size_t {
    const auto w = p.line();
    if (w.empty()) p.fail("empty node line");
    const auto index = nodes.size();
    nodes.emplace_back();
    if (w[0] == "leaf") {
      if (w.size() != 5 || w[2] != "counts" || w[1].size() < 2 || w[1][0] != 'r') p.fail("bad leaf");
      nodes[index].region = static_cast<RegionId>(p.number(w[1].substr(1)));
      nodes[index].counts = {p.number(w[3]), p.number(w[4])};
      return index;
    }
    if (w[0] != "split" || w.size() != 9 || w[2] != "left" || w[4] != "right" || w[6] != "counts") {
      p.fail("bad split");
    }
    const auto feature = schema.index_of(p.unescape(w[1]));
    if (!feature) p.fail("split on unknown feature");
    const auto& f = schema.feature(*feature);
    DecisionTree::Node n;
    n.leaf = false;
    n.feature = *feature;
    n.left_levels = p.levels(w[3], f);
    n.right_levels = p.levels(w[5], f);
    n.counts = {p.number(w[7]), p.number(w[8])};
    n.left = rec();
    n.right = rec();
    nodes[index] = std::move(n);
    return index;
  };
  rec();
  try {
    DecisionTree tree(std::move(nodes), schema.level_counts());
    if (tree.n_leaves() != n_leaves) p.fail("leaf count mismatch");
    return tree;
  } catch (const LookupError& e) {
    p.fail(e.what());
  }
}

}  // namespace

DrfModel parse_model(std::string_view text) {
  Parser p(text);
  {
    const auto header = p.line();
    if (header.size() != 2 || header[0] != kMagic) p.fail("not a DRF model file");
    if (header[1] != std::to_string(DrfModel::kFormatVersion)) {
      throw VersionMismatchError("model format version " + std::string(header[1]) +
                                 " is not supported (expected " +
                                 std::to_string(DrfModel::kFormatVersion) + ")");
    }
  }
  // The trailer carries a hash of everything before it.
  const auto end_pos = text.rfind("\nend ");
  if (end_pos == std::string_view::npos || text.back() != '\n') {
    throw TruncatedModelError("model file has no end marker");
  }
  const auto body = text.substr(0, end_pos + 1);
  const auto trailer = text.substr(end_pos + 5, text.size() - end_pos - 6);
  if (trailer != hex64(fnv1a(body))) throw CorruptModelError("model checksum mismatch");

  try {
    DrfConfig config;
    config.master_seed = p.number(p.expect("master_seed", 2)[1]);
    const auto target = p.unescape(p.expect("target", 2)[1]);
    const auto n_features = p.number(p.expect("features", 2)[1]);
    std::vector<FeatureSpec> specs;
    for (std::uint64_t i = 0; i < n_features; ++i) {
      const auto w = p.expect("feature", 4);
      FeatureSpec f;
      f.name = p.unescape(w[1]);
      f.kind = parse_feature_kind(w[2]);
      const auto n_levels = p.number(w[3]);
      if (w.size() != 4 + n_levels) p.fail("level count mismatch");
      for (std::uint64_t k = 0; k < n_levels; ++k) f.levels.push_back(p.unescape(w[4 + k]));
      specs.push_back(std::move(f));
    }
    Schema schema(std::move(specs), target);
    const auto n_layers = p.number(p.expect("layers", 2)[1]);
    std::vector<Forest> forests;
    for (std::uint64_t l = 1; l <= n_layers; ++l) {
      const auto w = p.expect("layer", 13);
      if (p.number(w[1]) != l || w[2] != "trees" || w[4] != "budget" || w[7] != "feature_sample" ||
          w[9] != "bootstrap" || w[11] != "min_leaf") {
        p.fail("bad layer header");
      }
      LayerConfig c;
      c.n_trees = p.number(w[3]);
      c.leaf_budget_min = p.number(w[5]);
      c.leaf_budget_max = p.number(w[6]);
      c.feature_sample = p.number(w[8]);
      c.bootstrap = p.number(w[10]) != 0;
      c.min_leaf = p.number(w[12]);
      const Schema& input = forests.empty() ? schema : forests.back().output_schema();
      std::vector<DecisionTree> trees;
      for (std::size_t t = 1; t <= c.n_trees; ++t) {
        const auto tw = p.expect("tree", 4);
        if (p.number(tw[1]) != t || tw[2] != "leaves") p.fail("bad tree header");
        trees.push_back(parse_tree(p, input, p.number(tw[3])));
      }
      forests.emplace_back(c, l, input, std::move(trees));
      config.layers.push_back(c);
    }
    const auto last = p.line();
    if (last.empty() || last.front() != "end") p.fail("trailing content before end marker");
    return DrfModel(std::move(config), std::move(forests));
  } catch (const TruncatedModelError&) {
    throw CorruptModelError("model structure ends before its end marker");
  } catch (const CorruptModelError&) {
    throw;
  } catch (const Error& e) {
    throw CorruptModelError(e.what());
  }
}

void save_model(const DrfModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

DrfModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace drf
