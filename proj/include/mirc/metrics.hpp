#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mirc/dataset.hpp"
#include "mirc/reduction.hpp"

namespace mirc {

enum class PairKind { AnyParentChild, MircSubMirc, SpatiotemporalMircSubMirc };
enum class MeasureKind { HumanAccuracy, ModelConfidence };

std::string_view pair_kind_name(PairKind k);
std::string_view measure_kind_name(MeasureKind k);

struct PairRecord {
  std::string parent_node_id;
  std::string child_node_id;
  std::string clip_id;
  std::string verb_class;
  double a_parent = 0.0;
  double a_child = 0.0;
  /// a_parent - a_child; positive means degradation.
  double delta = 0.0;
  int level = 0;
  PairKind pair_kind = PairKind::AnyParentChild;
  MeasureKind measure_kind = MeasureKind::HumanAccuracy;
};

PairRecord make_pair(std::string parent, std::string child, double a_parent, double a_child, int level, PairKind kind,
                     MeasureKind measure);

/// MIRC-level data used to calibrate the model operating point.
struct MircSample {
  std::string node_id;
  std::string clip_id;
  std::string verb_class;
  std::optional<double> human_accuracy;
  std::optional<double> model_confidence;
};

struct PairSet {
  std::vector<PairRecord> pairs;
  std::vector<MircSample> mircs;
};

/// Pairs of the requested kind/measure from labelled trees. Pairs lacking a
/// measurement at either end are skipped.
std::vector<PairRecord> extract_pairs(const Forest& forest, const DatasetManifest& manifest, PairKind kind,
                                      MeasureKind measure);
std::vector<MircSample> extract_mircs(const Forest& forest, const DatasetManifest& manifest);
/// All kinds and both measures.
PairSet extract_pair_set(const Forest& forest, const DatasetManifest& manifest);

nlohmann::json to_json(const PairSet& set, std::uint64_t seed);
PairSet pair_set_from_json(const nlohmann::json& j);

std::vector<PairRecord> filter_pairs(std::span<const PairRecord> pairs, PairKind kind, MeasureKind measure);

struct ClassGap {
  std::string verb_class;
  std::size_t pairs = 0;
  /// Undefined (nullopt) when no pair qualifies.
  std::optional<double> mean;
  std::optional<double> std;
};

struct GapReport {
  std::map<std::string, ClassGap> classes;
  std::vector<std::string> warnings;
};

/// Per-class mean and population std of a_parent - a_child. Classes listed in
/// `expected_classes` without pairs are reported with a warning.
GapReport human_recognition_gap(std::span<const PairRecord> pairs,
                                std::span<const std::string> expected_classes = {});

struct ClassOperatingPoint {
  std::string verb_class;
  double human_rate = 0.0;  // X
  double threshold = 0.0;   // tl
  std::size_t sample_size = 0;
  std::size_t k = 0;
  std::vector<std::string> qualifying;
  /// qualifying / sample_size
  double qualifying_fraction = 0.0;
  /// |qualifying_fraction - human_rate|
  double deviation = 0.0;
};

/// tl = k-th largest confidence, k = round(X*N). X*N rounding to 0 puts tl
/// just above the maximum. Ties at tl all qualify.
/// Throws Error(NoOperatingPoint) on an empty list.
ClassOperatingPoint calibrate_threshold(std::span<const std::pair<std::string, double>> confidences,
                                        double human_rate);

/// X = mean human MIRC accuracy per class, calibrated against that class's MIRC confidences.
std::map<std::string, ClassOperatingPoint> operating_points(std::span<const MircSample> mircs);

/// Per-class gaps over model-confidence pairs whose parent confidence >= tl.
GapReport ai_recognition_gap(std::span<const PairRecord> pairs,
                             const std::map<std::string, ClassOperatingPoint>& points);

inline constexpr std::size_t kHistogramBins = 20;

/// Bin of Δ over [-1, 1] at width 0.1: lower edge inclusive, last bin closed.
/// Edges are the doubles nearest to -1.0, -0.9, ..., 1.0.
std::size_t histogram_bin(double delta);
double histogram_edge(std::size_t i);

struct ReductionRateReport {
  std::size_t pair_count = 0;
  std::size_t positive_count = 0;
  std::optional<double> arr;
  std::array<std::size_t, kHistogramBins> histogram{};
  std::map<int, std::optional<double>> per_level_means;
  std::map<int, std::size_t> per_level_counts;
};

/// ARR = mean of strictly positive Δa. Throws Error(InsufficientData) on empty input.
ReductionRateReport reduction_rate(std::span<const PairRecord> pairs);

struct GapStatistics {
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;
  double mean = 0.0;
};

GapStatistics gap_statistics(std::span<const double> gaps);

nlohmann::json to_json(const GapReport& r, std::string_view classifier);
nlohmann::json to_json(const ReductionRateReport& r);
nlohmann::json to_json(const GapStatistics& s);
nlohmann::json to_json(const ClassOperatingPoint& p);

/// Fraction -> percentage rounded to two decimals.
double percent2(double fraction);

}  // namespace mirc
