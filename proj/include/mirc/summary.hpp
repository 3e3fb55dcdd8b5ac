#pragma once

#include <map>
#include <vector>

#include <json.hpp>

#include "mirc/dataset.hpp"
#include "mirc/reduction.hpp"

namespace mirc {

struct LevelTally {
  std::size_t nodes = 0;
  std::size_t tested = 0;
  std::size_t pruned = 0;
};

struct SplitSummary {
  std::size_t videos = 0;
  /// Tested nodes, intact and scrambled.
  std::size_t samples = 0;
  std::size_t mircs = 0;
  std::size_t spatial_sub_mircs = 0;
  /// Tested scrambled variants.
  std::size_t spatiotemporal_quadrants = 0;
  /// ...of which fell below the recognition threshold.
  std::size_t spatiotemporal_unrecognisable = 0;
  std::vector<std::string> verb_classes;
  std::map<int, LevelTally> per_level;
};

struct DatasetSummary {
  std::map<Split, SplitSummary> splits;

  std::size_t spatiotemporal_total() const;
  std::size_t spatiotemporal_unrecognisable_total() const;
  /// Fraction of tested scrambled variants that became unrecognisable; 0 when none.
  double unrecognisable_fraction() const;
};

/// Exact tally over labelled trees. Clips without a tree count as videos only.
DatasetSummary summarize(const DatasetManifest& manifest, const Forest& forest, const ReductionConfig& config);

nlohmann::json to_json(const DatasetSummary& s);

}  // namespace mirc
