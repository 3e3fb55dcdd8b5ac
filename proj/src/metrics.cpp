#include "mirc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mirc/error.hpp"
#include "mirc/stats.hpp"

using nlohmann::json;

namespace mirc {

std::string_view pair_kind_name(PairKind k) {
  switch (k) {
    case PairKind::AnyParentChild: return "AnyParentChild";
    case PairKind::MircSubMirc: return "MircSubMirc";
    case PairKind::SpatiotemporalMircSubMirc: return "SpatiotemporalMircSubMirc";
  }
  return "AnyParentChild";
}

std::string_view measure_kind_name(MeasureKind k) {
  return k == MeasureKind::HumanAccuracy ? "HumanAccuracy" : "ModelConfidence";
}

namespace {

PairKind parse_pair_kind(const std::string& s) {
  for (auto k : {PairKind::AnyParentChild, PairKind::MircSubMirc, PairKind::SpatiotemporalMircSubMirc})
    if (pair_kind_name(k) == s) return k;
  throw Error(ErrorKind::Parse, "unknown pair kind '" + s + "'");
}

MeasureKind parse_measure_kind(const std::string& s) {
  if (s == "HumanAccuracy") return MeasureKind::HumanAccuracy;
  if (s == "ModelConfidence") return MeasureKind::ModelConfidence;
  throw Error(ErrorKind::Parse, "unknown measure kind '" + s + "'");
}

std::optional<double> measure_of(const ReductionTree& tree, const QuadrantNode& n, MeasureKind m) {
  if (m == MeasureKind::ModelConfidence) return n.model_confidence;
  return tree.effective_accuracy(n);
}

}  // namespace

PairRecord make_pair(std::string parent, std::string child, double a_parent, double a_child, int level, PairKind kind,
                     MeasureKind measure) {
  PairRecord p;
  p.parent_node_id = std::move(parent);
  p.child_node_id = std::move(child);
  p.clip_id = clip_of_node(p.parent_node_id);
  p.a_parent = a_parent;
  p.a_child = a_child;
  p.delta = a_parent - a_child;
  p.level = level;
  p.pair_kind = kind;
  p.measure_kind = measure;
  return p;
}

std::vector<PairRecord> extract_pairs(const Forest& forest, const DatasetManifest& manifest, PairKind kind,
                                      MeasureKind measure) {
  std::vector<PairRecord> out;
  for (const auto& [clip_id, tree] : forest) {
    const Clip* clip = manifest.find_clip(clip_id);
    const std::string verb = clip ? clip->verb_class : std::string();
    for (const auto& [id, parent] : tree.nodes) {
      if (parent.scrambled()) continue;
      const bool want_scrambled = kind == PairKind::SpatiotemporalMircSubMirc;
      if (kind == PairKind::MircSubMirc && !is_mirc(parent.mirc_role)) continue;
      if (kind == PairKind::SpatiotemporalMircSubMirc && parent.mirc_role != MircRole::SpatiotemporalMIRC) continue;
      if (kind == PairKind::AnyParentChild && parent.status != NodeStatus::Tested) continue;
      const auto a_parent = measure_of(tree, parent, measure);
      if (!a_parent) continue;
      for (const auto& cid : tree.children(id, want_scrambled)) {
        const QuadrantNode& child = tree.node(cid);
        if (kind == PairKind::MircSubMirc && child.mirc_role != MircRole::SubMIRC) continue;
        if (kind == PairKind::SpatiotemporalMircSubMirc && child.mirc_role != MircRole::SpatiotemporalSubMIRC) continue;
        if (kind == PairKind::AnyParentChild && child.status != NodeStatus::Tested) continue;
        const auto a_child = measure_of(tree, child, measure);
        if (!a_child) continue;
        PairRecord p = make_pair(id, cid, *a_parent, *a_child, child.level, kind, measure);
        p.verb_class = verb;
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

std::vector<MircSample> extract_mircs(const Forest& forest, const DatasetManifest& manifest) {
  std::vector<MircSample> out;
  for (const auto& [clip_id, tree] : forest) {
    const Clip* clip = manifest.find_clip(clip_id);
    for (const auto& [id, n] : tree.nodes) {
      if (!is_mirc(n.mirc_role)) continue;
      out.push_back({id, clip_id, clip ? clip->verb_class : std::string(), n.human_accuracy, n.model_confidence});
    }
  }
  return out;
}

PairSet extract_pair_set(const Forest& forest, const DatasetManifest& manifest) {
  PairSet set;
  for (auto kind : {PairKind::AnyParentChild, PairKind::MircSubMirc, PairKind::SpatiotemporalMircSubMirc}) {
    for (auto measure : {MeasureKind::HumanAccuracy, MeasureKind::ModelConfidence}) {
      auto p = extract_pairs(forest, manifest, kind, measure);
      set.pairs.insert(set.pairs.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    }
  }
  set.mircs = extract_mircs(forest, manifest);
  return set;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

json to_json(const PairSet& set, std::uint64_t seed) {
  json pairs = json::array();
  for (const auto& p : set.pairs) {
    pairs.push_back({{"parent_node_id", p.parent_node_id},
                     {"child_node_id", p.child_node_id},
                     {"clip_id", p.clip_id},
                     {"verb_class", p.verb_class},
                     {"a_parent", p.a_parent},
                     {"a_child", p.a_child},
                     {"delta", p.delta},
                     {"level", p.level},
                     {"pair_kind", pair_kind_name(p.pair_kind)},
                     {"measure_kind", measure_kind_name(p.measure_kind)}});
  }
  json mircs = json::array();
  for (const auto& m : set.mircs) {
    mircs.push_back({{"node_id", m.node_id},
                     {"clip_id", m.clip_id},
                     {"verb_class", m.verb_class},
                     {"human_accuracy", optional_number(m.human_accuracy)},
                     {"model_confidence", optional_number(m.model_confidence)}});
  }
  return json{{"seed", seed}, {"pairs", pairs}, {"mircs", mircs}};
}

PairSet pair_set_from_json(const json& j) {
  PairSet set;
  for (const auto& jp : j.at("pairs")) {
    PairRecord p = make_pair(jp.at("parent_node_id").get<std::string>(), jp.at("child_node_id").get<std::string>(),
                             jp.at("a_parent").get<double>(), jp.at("a_child").get<double>(), jp.at("level").get<int>(),
                             parse_pair_kind(jp.at("pair_kind").get<std::string>()),
                             parse_measure_kind(jp.at("measure_kind").get<std::string>()));
    p.clip_id = jp.value("clip_id", p.clip_id);
    p.verb_class = jp.value("verb_class", std::string());
    if (jp.contains("delta") && jp["delta"].get<double>() != p.delta)
      throw Error(ErrorKind::Integrity, "pair " + p.parent_node_id + " -> " + p.child_node_id + ": stored delta mismatch");
    set.pairs.push_back(std::move(p));
  }
  if (j.contains("mircs")) {
    for (const auto& jm : j["mircs"]) {
      set.mircs.push_back({jm.at("node_id").get<std::string>(), jm.value("clip_id", std::string()),
                           jm.value("verb_class", std::string()), read_optional(jm, "human_accuracy"),
                           read_optional(jm, "model_confidence")});
    }
  }
  return set;
}

std::vector<PairRecord> filter_pairs(std::span<const PairRecord> pairs, PairKind kind, MeasureKind measure) {
  std::vector<PairRecord> out;
  for (const auto& p : pairs)
    if (p.pair_kind == kind && p.measure_kind == measure) out.push_back(p);
  return out;
}

namespace {

ClassGap summarise_class(const std::string& verb, const std::vector<double>& gaps) {
  ClassGap g;
  g.verb_class = verb;
  g.pairs = gaps.size();
  if (!gaps.empty()) {
    g.mean = stats::mean(gaps);
    g.std = stats::population_std(gaps);
  }
  return g;
}

}  // namespace

GapReport human_recognition_gap(std::span<const PairRecord> pairs, std::span<const std::string> expected_classes) {
  std::map<std::string, std::vector<double>> by_class;
  for (const auto& p : pairs) by_class[p.verb_class].push_back(p.a_parent - p.a_child);
  GapReport report;
  for (const auto& [verb, gaps] : by_class) report.classes[verb] = summarise_class(verb, gaps);
  for (const auto& verb : expected_classes)
    if (!by_class.count(verb)) report.warnings.push_back("class '" + verb + "' has no pairs; omitted");
  return report;
}

ClassOperatingPoint calibrate_threshold(std::span<const std::pair<std::string, double>> confidences,
                                        double human_rate) {
  if (confidences.empty()) throw Error(ErrorKind::NoOperatingPoint, "calibrate: no MIRC confidences");
  if (!(human_rate >= 0.0 && human_rate <= 1.0)) throw Error(ErrorKind::Usage, "calibrate: X must be in [0,1]");
  std::vector<double> sorted;
  sorted.reserve(confidences.size());
  for (const auto& [id, c] : confidences) sorted.push_back(c);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  ClassOperatingPoint op;
  op.human_rate = human_rate;
  op.sample_size = sorted.size();
  op.k = static_cast<std::size_t>(round_half_away(human_rate * static_cast<double>(sorted.size())));
  op.threshold = op.k == 0 ? std::nextafter(sorted.front(), std::numeric_limits<double>::infinity())
                           : sorted[op.k - 1];
  for (const auto& [id, c] : confidences)
    if (c >= op.threshold) op.qualifying.push_back(id);
  std::sort(op.qualifying.begin(), op.qualifying.end());
  op.qualifying_fraction = static_cast<double>(op.qualifying.size()) / static_cast<double>(sorted.size());
  op.deviation = std::abs(op.qualifying_fraction - human_rate);
  return op;
}

std::map<std::string, ClassOperatingPoint> operating_points(std::span<const MircSample> mircs) {
  std::map<std::string, std::vector<double>> human;
  std::map<std::string, std::vector<std::pair<std::string, double>>> model;
  for (const auto& m : mircs) {
    if (m.human_accuracy) human[m.verb_class].push_back(*m.human_accuracy);
    if (m.model_confidence) model[m.verb_class].emplace_back(m.node_id, *m.model_confidence);
  }
  std::map<std::string, ClassOperatingPoint> out;
  for (const auto& [verb, confs] : model) {
    auto h = human.find(verb);
    if (h == human.end() || h->second.empty()) continue;
    ClassOperatingPoint op = calibrate_threshold(confs, stats::mean(h->second));
    op.verb_class = verb;
    out.emplace(verb, std::move(op));
  }
  return out;
}

GapReport ai_recognition_gap(std::span<const PairRecord> pairs,
                             const std::map<std::string, ClassOperatingPoint>& points) {
  std::map<std::string, std::vector<double>> by_class;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    seen.insert(p.verb_class);
    auto op = points.find(p.verb_class);
    if (op == points.end()) continue;
    if (p.a_parent >= op->second.threshold) by_class[p.verb_class].push_back(p.a_parent - p.a_child);
  }
  GapReport report;
  for (const auto& verb : seen) {
    report.classes[verb] = summarise_class(verb, by_class[verb]);
    if (!points.count(verb)) report.warnings.push_back("class '" + verb + "' has no operating point; undefined");
    else if (by_class[verb].empty()) report.warnings.push_back("class '" + verb + "' has no qualifying MIRC; undefined");
  }
  return report;
}

double histogram_edge(std::size_t i) { return (static_cast<double>(i) - 10.0) / 10.0; }

std::size_t histogram_bin(double delta) {
  const double clamped = std::clamp(delta, -1.0, 1.0);
  auto idx = static_cast<long>(std::floor((clamped + 1.0) * 10.0));
  idx = std::clamp(idx, 0L, static_cast<long>(kHistogramBins - 1));
  // The estimate can be one off near an edge; settle against the exact edges.
  while (idx > 0 && clamped < histogram_edge(static_cast<std::size_t>(idx))) --idx;
  while (idx + 1 < static_cast<long>(kHistogramBins) && clamped >= histogram_edge(static_cast<std::size_t>(idx) + 1))
    ++idx;
  return static_cast<std::size_t>(idx);
}

ReductionRateReport reduction_rate(std::span<const PairRecord> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::InsufficientData, "reduction rate: no pairs");
  ReductionRateReport r;
  r.pair_count = pairs.size();
  double positive_sum = 0.0;
  std::map<int, std::pair<double, std::size_t>> level_pos;
  for (const auto& p : pairs) {
    ++r.histogram[histogram_bin(p.delta)];
    ++r.per_level_counts[p.level];
    if (p.delta > 0.0) {
      positive_sum += p.delta;
      ++r.positive_count;
      auto& lp = level_pos[p.level];
      lp.first += p.delta;
      ++lp.second;
    }
  }
  if (r.positive_count) r.arr = positive_sum / static_cast<double>(r.positive_count);
  for (const auto& [level, count] : r.per_level_counts) {
    auto it = level_pos.find(level);
    r.per_level_means[level] =
        it == level_pos.end() ? std::nullopt : std::optional<double>(it->second.first / static_cast<double>(it->second.second));
  }
  return r;
}

GapStatistics gap_statistics(std::span<const double> gaps) {
  if (gaps.empty()) throw Error(ErrorKind::InsufficientData, "gap statistics: no gaps");
  GapStatistics s;
  s.min = *std::min_element(gaps.begin(), gaps.end());
  s.max = *std::max_element(gaps.begin(), gaps.end());
  s.mean = stats::mean(gaps);
  s.std = stats::population_std(gaps);
  return s;
}

double percent2(double fraction) { return std::round(fraction * 100.0 * 100.0) / 100.0; }

json to_json(const GapReport& r, std::string_view classifier) {
  json rg = json::object(), sd = json::object(), n = json::object();
  for (const auto& [verb, g] : r.classes) {
    rg[verb] = g.mean ? json(percent2(*g.mean)) : json(nullptr);
    sd[verb] = g.std ? json(percent2(*g.std)) : json(nullptr);
    n[verb] = g.pairs;
  }
  return json{{"classifier", classifier},
              {"rows", json::array({{{"metric", "RG"}, {"values", rg}}, {{"metric", "Std."}, {"values", sd}}})},
              {"pairs", n},
              {"warnings", r.warnings}};
}

json to_json(const ReductionRateReport& r) {
  json bins = json::array();
  for (std::size_t i = 0; i < kHistogramBins; ++i)
    bins.push_back({{"lower", histogram_edge(i)}, {"upper", histogram_edge(i + 1)}, {"count", r.histogram[i]}});
  json levels = json::array();
  for (const auto& [level, count] : r.per_level_counts) {
    const auto& m = r.per_level_means.at(level);
    levels.push_back({{"level", level}, {"pairs", count}, {"mean_positive_delta", m ? json(*m) : json(nullptr)}});
  }
  return json{{"pairs", r.pair_count},
              {"positive_pairs", r.positive_count},
              {"arr", r.arr ? json(*r.arr) : json(nullptr)},
              {"histogram", bins},
              {"per_level", levels}};
}

json to_json(const GapStatistics& s) {
  return json{{"min", s.min}, {"max", s.max}, {"std", s.std}, {"mean", s.mean}};
}

json to_json(const ClassOperatingPoint& p) {
  return json{{"verb_class", p.verb_class},
              {"X", p.human_rate},
              {"tl", p.threshold},
              {"N", p.sample_size},
              {"k", p.k},
              {"qualifying", p.qualifying},
              {"qualifying_fraction", p.qualifying_fraction},
              {"deviation", p.deviation}};
}

}  // namespace mirc
