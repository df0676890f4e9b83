#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace drf {

// Index into a feature's level list.
using Level = std::uint32_t;
// Sorted, duplicate-free set of levels.
using LevelSet = std::vector<Level>;

inline constexpr std::string_view kMissingToken = "NA";

enum class FeatureKind { categorical, binary, target };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::categorical;
  // Category tokens in first-seen order. Binary features always start {0,1}.
  std::vector<std::string> levels;

  std::optional<Level> find(std::string_view token) const;
  std::size_t n_levels() const { return levels.size(); }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

// Input features plus the binary target. The target is not part of
// features(); its levels are always {0,1}.
class Schema {
 public:
  Schema() = default;
  Schema(std::vector<FeatureSpec> features, std::string target_name);

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
  std::size_t size() const { return features_.size(); }
  const std::string& target_name() const { return target_name_; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::size_t> level_counts() const;

  friend bool operator==(const Schema&, const Schema&) = default;

 private:
  std::vector<FeatureSpec> features_;
  std::string target_name_;
};

// Column declaration read from a schema file (`name,kind` per line).
struct ColumnDecl {
  std::string name;
  FeatureKind kind;
};

std::vector<ColumnDecl> read_schema_decls(std::istream& in);
std::vector<ColumnDecl> read_schema_decls(const std::filesystem::path& path);
void write_schema_decls(const Schema& schema, std::ostream& out);

// Immutable column-major table of categorical cells with a binary target.
// Raw datasets and per-layer region tables share this representation.
class Table {
 public:
  Table(Schema schema, std::vector<std::vector<Level>> columns,
        std::vector<std::uint8_t> target);

  const Schema& schema() const { return schema_; }
  std::size_t n_rows() const { return target_.size(); }
  std::size_t n_features() const { return columns_.size(); }
  std::size_t n_positive() const { return n_positive_; }
  std::size_t n_negative() const { return n_rows() - n_positive_; }

  Level at(std::size_t row, std::size_t feature) const { return columns_[feature][row]; }
  std::span<const Level> column(std::size_t feature) const { return columns_.at(feature); }
  std::span<const std::uint8_t> target() const { return target_; }
  std::vector<Level> row(std::size_t i) const;

  // Rows in the given order (duplicates allowed). Schema is unchanged.
  Table subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  Schema schema_;
  std::vector<std::vector<Level>> columns_;
  std::vector<std::uint8_t> target_;
  std::size_t n_positive_ = 0;
};

using Dataset = Table;
using RegionTable = Table;

// Parses a CSV against column declarations. Levels are registered in
// first-seen order; an empty cell maps to "NA".
Dataset read_csv(std::istream& in, const std::vector<ColumnDecl>& decls);
Dataset load_csv(const std::filesystem::path& data, const std::filesystem::path& schema);

// Parses a CSV against an existing schema: known tokens keep their level
// index, unseen tokens are appended after the known levels.
Dataset read_csv(std::istream& in, const Schema& reference);
Dataset load_csv(const std::filesystem::path& data, const Schema& reference);

void write_csv(const Table& table, std::ostream& out);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per-class deterministic split; both index lists are ascending.
SplitIndices stratified_split_indices(const Dataset& d, double test_fraction,
                                      std::uint64_t seed);
std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double test_fraction,
                                             std::uint64_t seed);

}  // namespace drf
