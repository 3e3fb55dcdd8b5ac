#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "mirc/dataset.hpp"
#include "mirc/reduction.hpp"

// Synthetic fixtures: a tiny on-disk dataset for end-to-end runs and an
// in-memory labelling that encodes the released dataset's summary counts.
namespace mirc::synth {

struct MiniInfo {
  std::filesystem::path manifest;
  std::filesystem::path config;
  /// Scripted human accuracy per node id (intact and scrambled).
  std::map<std::string, double> accuracies;
};

/// Writes 3 test clips (levels 0-2), 5 practice and 2 catch clips, masks,
/// conspicuity maps quantised to k/255, embeddings, a dictionary, model
/// confidences and scripted responses under `dir`. Deterministic in `seed`;
/// scrambled node ids and plans follow the CLI's derivation for that seed.
MiniInfo write_mini_dataset(const std::filesystem::path& dir, std::uint64_t seed);

/// Run configuration matching the mini dataset (max_level 2, scoring constants).
nlohmann::json mini_config(std::uint64_t seed);

struct Table1Fixture {
  DatasetManifest manifest;
  Forest forest;
  ReductionConfig config;
};

/// 18 Easy and 18 Hard videos whose labelled trees hold 273/1092 and 402/804
/// MIRCs/spatial sub-MIRCs, with 273 (200) and 201 (145) tested scrambled variants.
Table1Fixture table1_fixture();

}  // namespace mirc::synth
