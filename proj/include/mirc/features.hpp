#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mirc/dataset.hpp"
#include "mirc/metrics.hpp"
#include "mirc/reduction.hpp"
#include "mirc/stats.hpp"

namespace mirc {

struct RetentionRatio {
  std::string node_id;
  Feature feature = Feature::ActiveHand;
  double s_q = 0.0;
  double s_f = 0.0;
  /// S_q / S_f; nullopt when S_f == 0 (feature absent from the video).
  std::optional<double> p;
};

using RatioRow = std::array<RetentionRatio, kFeatureCount>;

/// Number of set mask pixels inside `rect`, summed over frames.
std::uint64_t masked_area(const std::vector<std::vector<std::uint8_t>>& frames, int width, const CropRect& rect);
/// Sum of activations inside `rect`, summed over frames.
double activation_sum(const std::vector<std::vector<float>>& frames, int width, const CropRect& rect);

/// Object-feature ratios. Frame order does not change mask sums.
std::array<RetentionRatio, kObjectFeatureCount> mask_retention(const MaskSet& masks, const CropRect& rect,
                                                               const std::string& node_id = {});

/// Channel ratios: S_q from `quadrant_maps` (the node's own maps for scrambled
/// nodes), S_f always from the intact `full_maps`.
std::array<RetentionRatio, kChannelCount> map_retention(const ConspicuityMapSet& full_maps,
                                                        const ConspicuityMapSet& quadrant_maps, const CropRect& rect,
                                                        const std::string& node_id = {});

/// All 11 features for a node. Scrambled nodes must have their own map
/// files in the manifest (Error(NotFound) otherwise).
class RatioCalculator {
 public:
  explicit RatioCalculator(const DatasetManifest& manifest) : manifest_(manifest) {}
  RatioRow compute(const QuadrantNode& node);

 private:
  const DatasetManifest& manifest_;
  std::map<std::string, MaskSet> masks_;
  std::map<std::string, ConspicuityMapSet> maps_;
};

enum class Classifier { Human, AI };
enum class Direction { Failure, Recovery };
std::string_view classifier_name(Classifier c);
std::string_view direction_name(Direction d);

struct TransitionRecord {
  std::string parent_node_id;
  std::string child_node_id;
  Direction direction = Direction::Failure;
  Classifier classifier = Classifier::Human;
  /// p_child - p_parent per feature; nullopt where either ratio is undefined.
  std::array<std::optional<double>, kFeatureCount> delta{};
};

/// Flip edges between intact parent and child where correctness is known at
/// both ends. Edges with an unknown end are skipped.
std::vector<TransitionRecord> detect_transitions(const ReductionTree& tree,
                                                 const std::map<std::string, bool>& correct,
                                                 Classifier classifier);

/// Human verb correctness: tested accuracy >= threshold.
std::map<std::string, bool> human_correctness(const ReductionTree& tree, double threshold);
/// Model verb correctness: arg-max verb equals the ground-truth verb.
std::map<std::string, bool> model_correctness(const std::map<std::string, ConfidenceRecord>& confidences,
                                              const DatasetManifest& manifest);

using RatioTable = std::map<std::string, std::array<std::optional<double>, kFeatureCount>>;
RatioTable to_ratio_table(const std::map<std::string, RatioRow>& rows);

void attach_deltas(std::vector<TransitionRecord>& transitions, const RatioTable& ratios);

struct FeatureDeltaStat {
  std::size_t used = 0;
  std::size_t excluded = 0;
  std::optional<double> mean;
};

struct DeltaStats {
  Classifier classifier = Classifier::Human;
  Direction direction = Direction::Failure;
  std::size_t transitions = 0;
  std::array<FeatureDeltaStat, kFeatureCount> features{};
};

/// Mean Δ per feature over transitions of one classifier and direction.
DeltaStats transition_delta_stats(std::span<const TransitionRecord> transitions, Classifier classifier,
                                  Direction direction);

enum class CorrelationMethod { Pearson, Spearman };

struct CorrelationMatrix {
  std::size_t transitions = 0;
  /// r[i][j]; nullopt where a feature has zero variance.
  std::array<std::array<std::optional<double>, kFeatureCount>, kFeatureCount> r{};
};

/// Pairwise-complete correlation of per-transition Δ across the 11 features.
/// Throws Error(InsufficientData) with fewer than 2 transitions.
CorrelationMatrix correlation_matrix(std::span<const TransitionRecord> transitions, Direction direction,
                                     CorrelationMethod method = CorrelationMethod::Pearson);

enum class TemporalCategory { LTA, HTA };
std::string_view temporal_category_name(TemporalCategory c);

struct TemporalCategoryTable {
  std::map<std::string, TemporalCategory> verbs;

  /// wash, cut, peel -> LTA; every other declared verb -> HTA.
  static TemporalCategoryTable standard(std::span<const std::string> vocabulary);
  TemporalCategory of(const std::string& verb) const;
};

struct CategoryCount {
  std::size_t pairs = 0;
  std::size_t improved = 0;
  /// improved / pairs * 100, rounded to two decimals.
  double percent = 0.0;
};

struct TemporalCategoryStats {
  std::map<TemporalCategory, CategoryCount> counts;
  std::optional<stats::TTest> welch;
  std::optional<stats::TTest> student;
  /// Same test after averaging gaps per source video.
  std::optional<stats::TTest> welch_by_video;
  std::size_t videos_lta = 0;
  std::size_t videos_hta = 0;
  std::vector<std::string> notices;
};

/// Improvement = Δ < 0 on MIRC vs scrambled pairs. Gaps are compared LTA vs HTA.
TemporalCategoryStats temporal_category_stats(std::span<const PairRecord> pairs, const TemporalCategoryTable& table);

/// improved / total * 100 with two decimals, e.g. "26.11".
std::string percent_string(std::size_t improved, std::size_t total);

nlohmann::json to_json(const DeltaStats& s);
nlohmann::json to_json(const TemporalCategoryStats& s);
std::string feature_header_csv();

}  // namespace mirc
