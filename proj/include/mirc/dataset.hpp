#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mirc/geometry.hpp"

namespace mirc {

enum class Split { Easy, Hard };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

/// Verb classes of the released dataset.
const std::vector<std::string>& default_verb_classes();

/// Practice and catch clips run through the protocol but never enter a reduction tree.
enum class ClipRole { Test, Practice, Catch };
std::string_view clip_role_name(ClipRole r);

struct Clip {
  std::string clip_id;
  ClipRole role = ClipRole::Test;
  Split split = Split::Easy;
  std::string verb_class;
  std::string gt_label;
  std::vector<std::string> frames;  // absolute paths, playback order
  int width = 0;
  int height = 0;
  double fps = 0.0;

  std::size_t frame_count() const { return frames.size(); }
  CropRect full_rect() const { return CropRect{0, 0, width, height}; }
};

/// Object categories stored as masks, then GBVS-style channels, in the fixed
/// report column order.
enum class Feature : std::uint8_t {
  ActiveHand,
  ActiveObject,
  ContextualObjects,
  Background,
  DKLColour,
  Intensity,
  Orientation,
  Colour,
  Flicker,
  Contrast,
  Motion,
};
inline constexpr std::size_t kFeatureCount = 11;
inline constexpr std::size_t kObjectFeatureCount = 4;
inline constexpr std::size_t kChannelCount = 7;

std::string_view feature_name(Feature f);
std::optional<Feature> parse_feature(std::string_view s);
const std::array<Feature, kFeatureCount>& all_features();
inline bool is_channel(Feature f) { return static_cast<std::size_t>(f) >= kObjectFeatureCount; }

struct MaskRef {
  std::string clip_id;
  Feature category;  // ActiveHand, ActiveObject or ContextualObjects
  std::string dir;
};

struct MapRef {
  std::string clip_id;
  Feature channel;
  std::string dir;
  /// Set for maps recomputed on a scrambled node; absent for the intact video.
  std::optional<std::string> node_id;
};

struct EmbeddingPaths {
  std::string sentence;
  std::string word;
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<std::string> verb_classes;
  std::vector<Clip> clips;
  std::vector<MaskRef> masks;
  std::vector<MapRef> maps;
  std::optional<std::string> confidences;
  std::optional<std::string> responses;
  std::optional<EmbeddingPaths> embeddings;
  std::optional<std::string> dictionary;
  std::vector<std::string> unresolved;

  const Clip* find_clip(std::string_view clip_id) const;
  const Clip& clip(std::string_view clip_id) const;
  std::vector<const Clip*> clips_with_role(ClipRole role) const;
};

/// Parses the JSON manifest; relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);

/// Binary masks for one clip. Background is derived: pixels not covered by
/// any segmented object.
struct MaskSet {
  int width = 0;
  int height = 0;
  std::size_t frames = 0;
  /// planes[category][frame] -> width*height bytes, 0 or 1.
  std::array<std::vector<std::vector<std::uint8_t>>, kObjectFeatureCount> planes;

  /// Recomputes the Background planes from the three object categories.
  void derive_background();
};

/// Conspicuity activations in [0,1] per channel per frame.
struct ConspicuityMapSet {
  int width = 0;
  int height = 0;
  std::size_t frames = 0;
  /// planes[channel index][frame] -> width*height floats.
  std::array<std::vector<std::vector<float>>, kChannelCount> planes;
};

MaskSet load_masks(const DatasetManifest& manifest, const Clip& clip);
/// Intact maps when `node_id` is empty, otherwise the maps recomputed for that node.
/// Throws Error(NotFound) if any channel is missing for the requested node.
ConspicuityMapSet load_maps(const DatasetManifest& manifest, const Clip& clip,
                            const std::optional<std::string>& node_id = std::nullopt);

enum class TrialKind { Practice, Catch, Main };
std::string_view trial_kind_name(TrialKind k);
std::optional<TrialKind> parse_trial_kind(std::string_view s);

struct ResponseRecord {
  std::string participant_id;
  std::string node_id;
  std::string raw_text;
  std::int64_t response_time_ms = 0;
  TrialKind trial_kind = TrialKind::Main;
};

std::vector<ResponseRecord> load_responses(const std::string& path);

struct ConfidenceRecord {
  std::string node_id;
  std::map<std::string, double> per_verb;
  double gt_verb_confidence = 0.0;

  /// Verb with the highest confidence (ties: lexicographically first).
  std::string predicted_verb() const;
};

/// Reads `node_id,verb,confidence` rows. `gt_verb_of` maps a node id to its
/// ground-truth verb. Validates range and softmax normalisation.
std::map<std::string, ConfidenceRecord> load_confidences(
    const std::string& path, const std::map<std::string, std::string>& gt_verb_of);
/// Same, with each node's ground truth taken from its clip (node id prefix).
std::map<std::string, ConfidenceRecord> load_confidences(const std::string& path, const DatasetManifest& manifest);

struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<float>, std::less<>> vectors;

  const std::vector<float>* find(std::string_view text) const;
};

/// Reads `text,dim0..dimN`. Keys are normalised (lowercase, single spaces).
EmbeddingTable load_embeddings(const std::string& path);

std::string normalize_key(std::string_view text);

}  // namespace mirc
