#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "drf/dataset.hpp"
#include "drf/forest.hpp"

namespace drf {

struct DrfConfig {
  std::vector<LayerConfig> layers;
  std::uint64_t master_seed = 0;

  void validate() const;

  // Three layers of 100 trees; budgets 2..11, 2..11, then 3..3.
  static DrfConfig default_stack(std::uint64_t seed);

  friend bool operator==(const DrfConfig&, const DrfConfig&) = default;
};

inline constexpr std::string_view kDefaultLayers = "100x2..11,100x2..11,100x3..3";

// Parses "100x2..11,100x2..11,100x3..3" (trees x min..max per layer). The
// remaining LayerConfig fields take `base`'s values.
std::vector<LayerConfig> parse_layers(std::string_view text, const LayerConfig& base = {});
std::string format_layers(const std::vector<LayerConfig>& layers);

class DrfModel {
 public:
  static constexpr int kFormatVersion = 1;

  // Layer l's forest must consume layer l-1's output schema.
  DrfModel(DrfConfig config, std::vector<Forest> forests);

  const DrfConfig& config() const { return config_; }
  std::size_t n_layers() const { return forests_.size(); }
  // 1-based layer index.
  const Forest& forest(std::size_t layer) const;
  const std::vector<Forest>& forests() const { return forests_; }
  const Schema& input_schema() const { return forests_.front().input_schema(); }

  friend bool operator==(const DrfModel&, const DrfModel&) = default;

 private:
  DrfConfig config_;
  std::vector<Forest> forests_;
};

// Fits layer by layer, feeding each layer's region table to the next. When
// `tables` is given it receives the per-layer training tables.
DrfModel fit_drf(const Dataset& train, const DrfConfig& config, std::size_t threads = 1,
                 std::vector<RegionTable>* tables = nullptr);

// Region table after `upto_layer` (1-based) layers.
RegionTable transform(const DrfModel& model, const Dataset& data, std::size_t upto_layer);

// Mean training positive rate of the row's last-layer leaves.
std::vector<double> predict_proba(const DrfModel& model, const Dataset& data);

std::string serialize_model(const DrfModel& model);
// Throws TruncatedModelError, VersionMismatchError or CorruptModelError.
DrfModel parse_model(std::string_view text);

void save_model(const DrfModel& model, const std::filesystem::path& path);
DrfModel load_model(const std::filesystem::path& path);

}  // namespace drf
