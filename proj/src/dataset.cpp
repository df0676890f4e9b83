#include "drf/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "drf/error.hpp"
#include "drf/io.hpp"
#include "drf/random.hpp"

namespace drf {

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::binary: return "binary";
    case FeatureKind::target: return "target";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "categorical") return FeatureKind::categorical;
  if (text == "binary") return FeatureKind::binary;
  if (text == "target") return FeatureKind::target;
  throw SchemaError("unknown feature kind '" + std::string(text) + "'");
}

std::optional<Level> FeatureSpec::find(std::string_view token) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == token) return static_cast<Level>(i);
  }
  return std::nullopt;
}

Schema::Schema(std::vector<FeatureSpec> features, std::string target_name)
    : features_(std::move(features)), target_name_(std::move(target_name)) {
  std::unordered_set<std::string> seen{target_name_};
  for (const auto& f : features_) {
    if (f.kind == FeatureKind::target) throw SchemaError("feature '" + f.name + "' declared as a second target");
    if (!seen.insert(f.name).second) throw SchemaError("duplicate column '" + f.name + "'");
    if (f.levels.empty()) throw SchemaError("feature '" + f.name + "' has no levels");
    std::unordered_set<std::string_view> tokens(f.levels.begin(), f.levels.end());
    if (tokens.size() != f.levels.size()) throw SchemaError("feature '" + f.name + "' has duplicate levels");
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> Schema::level_counts() const {
  std::vector<std::size_t> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.n_levels());
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<ColumnDecl> read_schema_decls(std::istream& in) {
  std::vector<ColumnDecl> decls;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) {
      throw SchemaError("schema line " + std::to_string(line_no) + ": expected 'name,kind'");
    }
    decls.push_back({std::string(trim(text.substr(0, comma))),
                     parse_feature_kind(trim(text.substr(comma + 1)))});
  }
  const auto targets = std::count_if(decls.begin(), decls.end(),
                                     [](const ColumnDecl& d) { return d.kind == FeatureKind::target; });
  if (targets != 1) throw SchemaError("schema must declare exactly one target column");
  return decls;
}

std::vector<ColumnDecl> read_schema_decls(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema " + path.string());
  return read_schema_decls(in);
}

void write_schema_decls(const Schema& schema, std::ostream& out) {
  for (const auto& f : schema.features()) out << f.name << ',' << to_string(f.kind) << '\n';
  out << schema.target_name() << ",target\n";
}

Table::Table(Schema schema, std::vector<std::vector<Level>> columns,
             std::vector<std::uint8_t> target)
    : schema_(std::move(schema)), columns_(std::move(columns)), target_(std::move(target)) {
  if (target_.empty()) throw EmptyDatasetError("dataset has no rows");
  if (columns_.size() != schema_.size()) throw SchemaError("column count does not match schema");
  for (std::size_t f = 0; f < columns_.size(); ++f) {
    if (columns_[f].size() != target_.size()) throw SchemaError("ragged column '" + schema_.feature(f).name + "'");
    const auto n_levels = schema_.feature(f).n_levels();
    for (Level v : columns_[f]) {
      if (v >= n_levels) throw SchemaError("cell out of range in column '" + schema_.feature(f).name + "'");
    }
  }
  for (auto y : target_) {
    if (y > 1) throw SchemaError("target must be 0/1");
    n_positive_ += y;
  }
}

std::vector<Level> Table::row(std::size_t i) const {
  std::vector<Level> out(columns_.size());
  for (std::size_t f = 0; f < columns_.size(); ++f) out[f] = columns_[f][i];
  return out;
}

Table Table::subset(std::span<const std::size_t> rows) const {
  std::vector<std::vector<Level>> cols(columns_.size());
  for (std::size_t f = 0; f < columns_.size(); ++f) {
    cols[f].reserve(rows.size());
    for (auto r : rows) cols[f].push_back(columns_[f].at(r));
  }
  std::vector<std::uint8_t> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(target_.at(r));
  return Table(schema_, std::move(cols), std::move(y));
}

namespace {

struct ColumnBuilder {
  FeatureSpec spec;
  std::unordered_map<std::string, Level> index;
  std::vector<Level> cells;

  Level intern(const std::string& token) {
    auto it = index.find(token);
    if (it != index.end()) return it->second;
    const auto level = static_cast<Level>(spec.levels.size());
    spec.levels.push_back(token);
    index.emplace(token, level);
    return level;
  }
};

Dataset read_csv_impl(std::istream& in, const std::vector<ColumnDecl>& decls,
                      const Schema* reference) {
  std::vector<std::string> header;
  if (!read_csv_record(in, header)) throw EmptyDatasetError("CSV is empty (no header row)");
  for (auto& h : header) h = std::string(trim(h));

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' missing from CSV header");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<ColumnBuilder> builders;
  std::vector<std::size_t> source;
  std::size_t target_col = 0;
  std::string target_name;
  for (const auto& d : decls) {
    if (d.kind == FeatureKind::target) {
      target_col = column_of(d.name);
      target_name = d.name;
      continue;
    }
    source.push_back(column_of(d.name));
    ColumnBuilder b;
    b.spec.name = d.name;
    b.spec.kind = d.kind;
    if (reference) {
      b.spec = reference->feature(*reference->index_of(d.name));
    } else if (d.kind == FeatureKind::binary) {
      b.spec.levels = {"0", "1"};
    }
    for (std::size_t i = 0; i < b.spec.levels.size(); ++i) {
      b.index.emplace(b.spec.levels[i], static_cast<Level>(i));
    }
    builders.push_back(std::move(b));
  }

  std::vector<std::uint8_t> target;
  std::vector<std::string> fields;
  std::size_t row_no = 1;  // header is row 1
  while (read_csv_record(in, fields)) {
    ++row_no;
    if (fields.size() == 1 && fields[0].empty() && header.size() > 1) continue;
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    const auto y = trim(fields[target_col]);
    if (y == "1") {
      target.push_back(1);
    } else if (y == "0") {
      target.push_back(0);
    } else {
      throw ParseError("row " + std::to_string(row_no) + ": target '" + target_name +
                       "' must be 0 or 1, got '" + std::string(y) + "'");
    }
    for (std::size_t c = 0; c < builders.size(); ++c) {
      auto token = std::string(trim(fields[source[c]]));
      if (token.empty()) token = kMissingToken;
      auto& b = builders[c];
      if (b.spec.kind == FeatureKind::binary && token != "0" && token != "1" && token != kMissingToken) {
        throw ParseError("row " + std::to_string(row_no) + ": binary column '" + b.spec.name +
                         "' has value '" + token + "'");
      }
      b.cells.push_back(b.intern(token));
    }
  }
  if (target.empty()) throw EmptyDatasetError("CSV has a header but no data rows");

  std::vector<FeatureSpec> specs;
  std::vector<std::vector<Level>> columns;
  for (auto& b : builders) {
    specs.push_back(std::move(b.spec));
    columns.push_back(std::move(b.cells));
  }
  return Dataset(Schema(std::move(specs), target_name), std::move(columns), std::move(target));
}

std::vector<ColumnDecl> decls_of(const Schema& schema) {
  std::vector<ColumnDecl> decls;
  for (const auto& f : schema.features()) decls.push_back({f.name, f.kind});
  decls.push_back({schema.target_name(), FeatureKind::target});
  return decls;
}

}  // namespace

Dataset read_csv(std::istream& in, const std::vector<ColumnDecl>& decls) {
  return read_csv_impl(in, decls, nullptr);
}

Dataset read_csv(std::istream& in, const Schema& reference) {
  return read_csv_impl(in, decls_of(reference), &reference);
}

Dataset load_csv(const std::filesystem::path& data, const std::filesystem::path& schema) {
  const auto decls = read_schema_decls(schema);
  std::ifstream in(data, std::ios::binary);
  if (!in) throw IoError("cannot open data file " + data.string());
  return read_csv(in, decls);
}

Dataset load_csv(const std::filesystem::path& data, const Schema& reference) {
  std::ifstream in(data, std::ios::binary);
  if (!in) throw IoError("cannot open data file " + data.string());
  return read_csv(in, reference);
}

void write_csv(const Table& table, std::ostream& out) {
  const auto& schema = table.schema();
  for (const auto& f : schema.features()) out << csv_escape(f.name) << ',';
  out << csv_escape(schema.target_name()) << '\n';
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (std::size_t f = 0; f < table.n_features(); ++f) {
      const auto& token = schema.feature(f).levels[table.at(i, f)];
      // An NA cell is written empty so it reads back as NA.
      if (token != kMissingToken) out << csv_escape(token);
      out << ',';
    }
    out << static_cast<int>(table.target()[i]) << '\n';
  }
}

SplitIndices stratified_split_indices(const Dataset& d, double test_fraction,
                                      std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw StratificationError("test fraction must lie strictly between 0 and 1");
  }
  SplitIndices out;
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
      if (d.target()[i] == cls) rows.push_back(i);
    }
    if (rows.size() < 2) {
      throw StratificationError("class " + std::to_string(cls) + " has fewer than 2 rows");
    }
    Rng rng(derive_seed(seed, 0x5715u, cls));
    shuffle(rng, rows);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, rows.size() - 1);
    out.test.insert(out.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double test_fraction,
                                             std::uint64_t seed) {
  const auto idx = stratified_split_indices(d, test_fraction, seed);
  return {d.subset(idx.train), d.subset(idx.test)};
}

}  // namespace drf
