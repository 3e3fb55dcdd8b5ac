#include "mirc/features.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mirc/error.hpp"
#include "mirc/simd/kernels.hpp"

using nlohmann::json;

namespace mirc {

namespace {

void check_rect(const CropRect& rect, int width, std::size_t plane_size) {
  const auto height = static_cast<std::int64_t>(plane_size / static_cast<std::size_t>(width));
  if (!rect.valid() || rect.x < 0 || rect.y < 0 || rect.right() > width || rect.bottom() > height)
    throw Error(ErrorKind::Integrity, "retention: rectangle outside the frame");
}

}  // namespace

std::uint64_t masked_area(const std::vector<std::vector<std::uint8_t>>& frames, int width, const CropRect& rect) {
  std::uint64_t total = 0;
  for (const auto& plane : frames) {
    check_rect(rect, width, plane.size());
    for (std::int64_t y = rect.y; y < rect.bottom(); ++y) {
      const auto offset = static_cast<std::size_t>(y * width + rect.x);
      total += simd::count_nonzero(std::span(plane).subspan(offset, static_cast<std::size_t>(rect.w)));
    }
  }
  return total;
}

double activation_sum(const std::vector<std::vector<float>>& frames, int width, const CropRect& rect) {
  double total = 0.0;
  for (const auto& plane : frames) {
    check_rect(rect, width, plane.size());
    for (std::int64_t y = rect.y; y < rect.bottom(); ++y) {
      const auto offset = static_cast<std::size_t>(y * width + rect.x);
      total += simd::sum(std::span(plane).subspan(offset, static_cast<std::size_t>(rect.w)));
    }
  }
  return total;
}

namespace {

RetentionRatio make_ratio(const std::string& node_id, Feature f, double s_q, double s_f) {
  RetentionRatio r{node_id, f, s_q, s_f, std::nullopt};
  if (s_f > 0.0) r.p = s_q / s_f;
  return r;
}

}  // namespace

std::array<RetentionRatio, kObjectFeatureCount> mask_retention(const MaskSet& masks, const CropRect& rect,
                                                               const std::string& node_id) {
  const CropRect full{0, 0, masks.width, masks.height};
  std::array<RetentionRatio, kObjectFeatureCount> out;
  for (std::size_t i = 0; i < kObjectFeatureCount; ++i) {
    const auto& planes = masks.planes[i];
    const auto s_q = static_cast<double>(masked_area(planes, masks.width, rect));
    const auto s_f = static_cast<double>(masked_area(planes, masks.width, full));
    out[i] = make_ratio(node_id, static_cast<Feature>(i), s_q, s_f);
  }
  return out;
}

std::array<RetentionRatio, kChannelCount> map_retention(const ConspicuityMapSet& full_maps,
                                                        const ConspicuityMapSet& quadrant_maps, const CropRect& rect,
                                                        const std::string& node_id) {
  if (full_maps.width != quadrant_maps.width || full_maps.height != quadrant_maps.height)
    throw Error(ErrorKind::Integrity, "retention: map dimensions differ");
  const CropRect full{0, 0, full_maps.width, full_maps.height};
  std::array<RetentionRatio, kChannelCount> out;
  for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
    const double s_q = activation_sum(quadrant_maps.planes[ch], quadrant_maps.width, rect);
    const double s_f = activation_sum(full_maps.planes[ch], full_maps.width, full);
    out[ch] = make_ratio(node_id, static_cast<Feature>(ch + kObjectFeatureCount), s_q, s_f);
  }
  return out;
}

RatioRow RatioCalculator::compute(const QuadrantNode& node) {
  const Clip& clip = manifest_.clip(node.clip_id);
  auto mit = masks_.find(clip.clip_id);
  if (mit == masks_.end()) mit = masks_.emplace(clip.clip_id, load_masks(manifest_, clip)).first;
  auto fit = maps_.find(clip.clip_id);
  if (fit == maps_.end()) fit = maps_.emplace(clip.clip_id, load_maps(manifest_, clip)).first;

  RatioRow row;
  const auto objects = mask_retention(mit->second, node.rect, node.node_id);
  std::copy(objects.begin(), objects.end(), row.begin());
  if (node.scrambled()) {
    // Post-shuffle maps must be supplied; intact maps are never reused.
    const ConspicuityMapSet own = load_maps(manifest_, clip, node.node_id);
    const auto channels = map_retention(fit->second, own, node.rect, node.node_id);
    std::copy(channels.begin(), channels.end(), row.begin() + kObjectFeatureCount);
  } else {
    const auto channels = map_retention(fit->second, fit->second, node.rect, node.node_id);
    std::copy(channels.begin(), channels.end(), row.begin() + kObjectFeatureCount);
  }
  return row;
}

std::string_view classifier_name(Classifier c) { return c == Classifier::Human ? "Human" : "AI"; }
std::string_view direction_name(Direction d) { return d == Direction::Failure ? "Failure" : "Recovery"; }

std::vector<TransitionRecord> detect_transitions(const ReductionTree& tree, const std::map<std::string, bool>& correct,
                                                 Classifier classifier) {
  std::vector<TransitionRecord> out;
  for (const auto& [id, child] : tree.nodes) {
    if (child.scrambled() || !child.parent_id) continue;
    auto pc = correct.find(*child.parent_id);
    auto cc = correct.find(id);
    if (pc == correct.end() || cc == correct.end() || pc->second == cc->second) continue;
    TransitionRecord t;
    t.parent_node_id = *child.parent_id;
    t.child_node_id = id;
    t.classifier = classifier;
    t.direction = pc->second ? Direction::Failure : Direction::Recovery;
    out.push_back(std::move(t));
  }
  return out;
}

std::map<std::string, bool> human_correctness(const ReductionTree& tree, double threshold) {
  std::map<std::string, bool> out;
  for (const auto& [id, n] : tree.nodes)
    if (n.status == NodeStatus::Tested && n.human_accuracy) out[id] = *n.human_accuracy >= threshold;
  return out;
}

std::map<std::string, bool> model_correctness(const std::map<std::string, ConfidenceRecord>& confidences,
                                              const DatasetManifest& manifest) {
  std::map<std::string, bool> out;
  for (const auto& [id, rec] : confidences) {
    const Clip* clip = manifest.find_clip(clip_of_node(id));
    if (!clip) continue;
    out[id] = rec.predicted_verb() == clip->verb_class;
  }
  return out;
}

RatioTable to_ratio_table(const std::map<std::string, RatioRow>& rows) {
  RatioTable table;
  for (const auto& [id, row] : rows) {
    auto& entry = table[id];
    for (std::size_t f = 0; f < kFeatureCount; ++f) entry[f] = row[f].p;
  }
  return table;
}

void attach_deltas(std::vector<TransitionRecord>& transitions, const RatioTable& ratios) {
  for (auto& t : transitions) {
    auto p = ratios.find(t.parent_node_id);
    auto c = ratios.find(t.child_node_id);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      t.delta[f].reset();
      if (p == ratios.end() || c == ratios.end() || !p->second[f] || !c->second[f]) continue;
      t.delta[f] = *c->second[f] - *p->second[f];
    }
  }
}

DeltaStats transition_delta_stats(std::span<const TransitionRecord> transitions, Classifier classifier,
                                  Direction direction) {
  DeltaStats s;
  s.classifier = classifier;
  s.direction = direction;
  std::array<double, kFeatureCount> sums{};
  for (const auto& t : transitions) {
    if (t.classifier != classifier || t.direction != direction) continue;
    ++s.transitions;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (t.delta[f]) {
        sums[f] += *t.delta[f];
        ++s.features[f].used;
      } else {
        ++s.features[f].excluded;
      }
    }
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    if (s.features[f].used) s.features[f].mean = sums[f] / static_cast<double>(s.features[f].used);
  return s;
}

CorrelationMatrix correlation_matrix(std::span<const TransitionRecord> transitions, Direction direction,
                                     CorrelationMethod method) {
  std::vector<const TransitionRecord*> picked;
  for (const auto& t : transitions)
    if (t.direction == direction) picked.push_back(&t);
  if (picked.size() < 2)
    throw Error(ErrorKind::InsufficientData, "correlation: need at least 2 " + std::string(direction_name(direction)) +
                                                 " transitions, have " + std::to_string(picked.size()));
  CorrelationMatrix m;
  m.transitions = picked.size();
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    for (std::size_t j = i; j < kFeatureCount; ++j) {
      std::vector<double> xs, ys;
      for (const auto* t : picked) {
        if (!t->delta[i] || !t->delta[j]) continue;
        xs.push_back(*t->delta[i]);
        ys.push_back(*t->delta[j]);
      }
      std::optional<double> r =
          method == CorrelationMethod::Pearson ? stats::pearson(xs, ys) : stats::spearman(xs, ys);
      if (r && i == j) r = 1.0;
      m.r[i][j] = r;
      m.r[j][i] = r;
    }
  }
  return m;
}

std::string_view temporal_category_name(TemporalCategory c) { return c == TemporalCategory::LTA ? "LTA" : "HTA"; }

TemporalCategoryTable TemporalCategoryTable::standard(std::span<const std::string> vocabulary) {
  TemporalCategoryTable t;
  for (const auto& v : vocabulary)
    t.verbs[v] = (v == "wash" || v == "cut" || v == "peel") ? TemporalCategory::LTA : TemporalCategory::HTA;
  return t;
}

TemporalCategory TemporalCategoryTable::of(const std::string& verb) const {
  auto it = verbs.find(verb);
  if (it == verbs.end()) throw Error(ErrorKind::Integrity, "verb '" + verb + "' has no temporal category");
  return it->second;
}

std::string percent_string(std::size_t improved, std::size_t total) {
  if (total == 0) return "0.00";
  return fmt::format("{:.2f}", 100.0 * static_cast<double>(improved) / static_cast<double>(total));
}

TemporalCategoryStats temporal_category_stats(std::span<const PairRecord> pairs, const TemporalCategoryTable& table) {
  TemporalCategoryStats s;
  s.counts[TemporalCategory::LTA];
  s.counts[TemporalCategory::HTA];
  std::map<TemporalCategory, std::vector<double>> gaps;
  std::map<TemporalCategory, std::map<std::string, std::vector<double>>> by_video;
  for (const auto& p : pairs) {
    const TemporalCategory c = table.of(p.verb_class);
    auto& count = s.counts[c];
    ++count.pairs;
    if (p.delta < 0.0) ++count.improved;
    gaps[c].push_back(p.delta);
    by_video[c][p.clip_id].push_back(p.delta);
  }
  for (auto& [c, count] : s.counts)
    count.percent = count.pairs ? std::stod(percent_string(count.improved, count.pairs)) : 0.0;

  const auto& lta = gaps[TemporalCategory::LTA];
  const auto& hta = gaps[TemporalCategory::HTA];
  if (lta.empty() || hta.empty()) {
    s.notices.push_back("a category has no pairs; significance tests skipped");
    return s;
  }
  s.welch = stats::welch_t_test(lta, hta);
  s.student = stats::student_t_test(lta, hta);
  if (!s.welch) s.notices.push_back("pair-level test undefined (too few pairs or zero variance)");

  std::map<TemporalCategory, std::vector<double>> video_means;
  for (auto& [c, videos] : by_video)
    for (auto& [clip, ds] : videos) video_means[c].push_back(stats::mean(ds));
  s.videos_lta = video_means[TemporalCategory::LTA].size();
  s.videos_hta = video_means[TemporalCategory::HTA].size();
  s.welch_by_video = stats::welch_t_test(video_means[TemporalCategory::LTA], video_means[TemporalCategory::HTA]);
  if (!s.welch_by_video) s.notices.push_back("video-level test undefined (too few videos or zero variance)");
  return s;
}

namespace {

json test_json(const std::optional<stats::TTest>& t) {
  if (!t) return nullptr;
  return json{{"t", t->t}, {"df", t->df}, {"p", t->p_value}};
}

}  // namespace

json to_json(const DeltaStats& s) {
  json features = json::object();
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    const auto& fs = s.features[f];
    features[std::string(feature_name(static_cast<Feature>(f)))] = {
        {"mean_delta", fs.mean ? json(*fs.mean) : json(nullptr)}, {"used", fs.used}, {"excluded", fs.excluded}};
  }
  return json{{"classifier", classifier_name(s.classifier)},
              {"direction", direction_name(s.direction)},
              {"transitions", s.transitions},
              {"features", features}};
}

json to_json(const TemporalCategoryStats& s) {
  json cats = json::object();
  for (const auto& [c, count] : s.counts) {
    cats[std::string(temporal_category_name(c))] = {
        {"pairs", count.pairs}, {"improved", count.improved}, {"percent", percent_string(count.improved, count.pairs)}};
  }
  return json{{"categories", cats},
              {"welch", test_json(s.welch)},
              {"student", test_json(s.student)},
              {"welch_by_video", test_json(s.welch_by_video)},
              {"videos", {{"LTA", s.videos_lta}, {"HTA", s.videos_hta}}},
              {"notices", s.notices}};
}

std::string feature_header_csv() {
  std::string out;
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (f) out += ',';
    out += feature_name(static_cast<Feature>(f));
  }
  return out;
}

}  // namespace mirc
