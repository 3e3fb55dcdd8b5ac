#include "mirc/summary.hpp"

#include <algorithm>
#include <set>

using nlohmann::json;

namespace mirc {

std::size_t DatasetSummary::spatiotemporal_total() const {
  std::size_t n = 0;
  for (const auto& [s, v] : splits) n += v.spatiotemporal_quadrants;
  return n;
}

std::size_t DatasetSummary::spatiotemporal_unrecognisable_total() const {
  std::size_t n = 0;
  for (const auto& [s, v] : splits) n += v.spatiotemporal_unrecognisable;
  return n;
}

double DatasetSummary::unrecognisable_fraction() const {
  const std::size_t total = spatiotemporal_total();
  return total ? static_cast<double>(spatiotemporal_unrecognisable_total()) / static_cast<double>(total) : 0.0;
}

DatasetSummary summarize(const DatasetManifest& manifest, const Forest& forest, const ReductionConfig& config) {
  DatasetSummary out;
  out.splits[Split::Easy];
  out.splits[Split::Hard];
  std::map<Split, std::set<std::string>> verbs;
  for (const Clip& clip : manifest.clips) {
    if (clip.role != ClipRole::Test) continue;
    SplitSummary& s = out.splits[clip.split];
    ++s.videos;
    verbs[clip.split].insert(clip.verb_class);
    auto it = forest.find(clip.clip_id);
    if (it == forest.end()) continue;
    for (const auto& [id, n] : it->second.nodes) {
      if (!n.scrambled()) {
        LevelTally& t = s.per_level[n.level];
        ++t.nodes;
        if (n.status == NodeStatus::Tested) ++t.tested;
        if (n.status == NodeStatus::PrunedPresumedUnrecognisable) ++t.pruned;
      }
      if (n.status == NodeStatus::Tested) ++s.samples;
      if (is_mirc(n.mirc_role)) ++s.mircs;
      if (n.mirc_role == MircRole::SubMIRC) ++s.spatial_sub_mircs;
      if (n.scrambled() && n.status == NodeStatus::Tested) {
        ++s.spatiotemporal_quadrants;
        if (n.human_accuracy && *n.human_accuracy < config.recognition_threshold) ++s.spatiotemporal_unrecognisable;
      }
    }
  }
  for (auto& [split, s] : out.splits) s.verb_classes.assign(verbs[split].begin(), verbs[split].end());
  return out;
}

json to_json(const DatasetSummary& s) {
  json splits = json::object();
  for (const auto& [split, v] : s.splits) {
    json levels = json::array();
    for (const auto& [lvl, t] : v.per_level)
      levels.push_back({{"level", lvl}, {"nodes", t.nodes}, {"tested", t.tested}, {"pruned", t.pruned}});
    splits[std::string(split_name(split))] = {{"videos", v.videos},
                                              {"samples", v.samples},
                                              {"mircs", v.mircs},
                                              {"spatial_sub_mircs", v.spatial_sub_mircs},
                                              {"spatiotemporal_quadrants", v.spatiotemporal_quadrants},
                                              {"spatiotemporal_unrecognisable", v.spatiotemporal_unrecognisable},
                                              {"verb_classes", v.verb_classes},
                                              {"per_level", levels}};
  }
  return json{{"splits", splits},
              {"spatiotemporal_total", s.spatiotemporal_total()},
              {"spatiotemporal_unrecognisable", s.spatiotemporal_unrecognisable_total()},
              {"unrecognisable_fraction", s.unrecognisable_fraction()}};
}

}  // namespace mirc
