#include "mirc/reduction.hpp"

#include <algorithm>
#include <numeric>

#include "mirc/error.hpp"
#include "mirc/rng.hpp"

using nlohmann::json;

namespace mirc {

void ReductionConfig::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorKind::Usage, std::string("reduction: ") + name + " must be in (0,1]");
  };
  if (!(scale >= 0.5 && scale < 1.0)) throw Error(ErrorKind::Usage, "reduction: scale must be in [0.5, 1)");
  if (max_level < 0) throw Error(ErrorKind::Usage, "reduction: max_level must be >= 0");
  if (max_quadrants_per_level < 1) throw Error(ErrorKind::Usage, "reduction: max_quadrants_per_level must be >= 1");
  fraction(recognition_threshold, "recognition_threshold");
  fraction(cluster_overlap, "cluster_overlap");
  fraction(containment_share, "containment_share");
}

std::string_view status_name(NodeStatus s) {
  switch (s) {
    case NodeStatus::Untested: return "Untested";
    case NodeStatus::Tested: return "Tested";
    case NodeStatus::PrunedPresumedUnrecognisable: return "PrunedPresumedUnrecognisable";
  }
  return "Untested";
}

std::string_view role_name(MircRole r) {
  switch (r) {
    case MircRole::None: return "None";
    case MircRole::MIRC: return "MIRC";
    case MircRole::SubMIRC: return "SubMIRC";
    case MircRole::SpatiotemporalMIRC: return "SpatiotemporalMIRC";
    case MircRole::SpatiotemporalSubMIRC: return "SpatiotemporalSubMIRC";
  }
  return "None";
}

namespace {

NodeStatus parse_status(const std::string& s) {
  for (auto v : {NodeStatus::Untested, NodeStatus::Tested, NodeStatus::PrunedPresumedUnrecognisable})
    if (status_name(v) == s) return v;
  throw Error(ErrorKind::Parse, "unknown node status '" + s + "'");
}

MircRole parse_role(const std::string& s) {
  for (auto v : {MircRole::None, MircRole::MIRC, MircRole::SubMIRC, MircRole::SpatiotemporalMIRC,
                 MircRole::SpatiotemporalSubMIRC})
    if (role_name(v) == s) return v;
  throw Error(ErrorKind::Parse, "unknown MIRC role '" + s + "'");
}

}  // namespace

std::string make_node_id(std::string_view clip_id, int level, const CornerPath& path,
                         std::optional<std::uint64_t> scramble_seed) {
  std::string id = std::string(clip_id) + "/L" + std::to_string(level) + "/" + corner_path_string(path);
  if (scramble_seed) id += "/scr" + std::to_string(*scramble_seed);
  return id;
}

std::string clip_of_node(std::string_view node_id) {
  const auto pos = node_id.find('/');
  return std::string(node_id.substr(0, pos));
}

const QuadrantNode* ReductionTree::find(std::string_view id) const {
  auto it = nodes.find(std::string(id));
  return it == nodes.end() ? nullptr : &it->second;
}

const QuadrantNode& ReductionTree::node(std::string_view id) const {
  if (const auto* n = find(id)) return *n;
  throw Error(ErrorKind::NotFound, "unknown node '" + std::string(id) + "'");
}

QuadrantNode& ReductionTree::node(std::string_view id) {
  auto it = nodes.find(std::string(id));
  if (it == nodes.end()) throw Error(ErrorKind::NotFound, "unknown node '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> ReductionTree::children(std::string_view id, bool scrambled) const {
  std::vector<std::string> out;
  for (const auto& [nid, n] : nodes)
    if (n.parent_id && *n.parent_id == id && n.scrambled() == scrambled) out.push_back(nid);
  return out;
}

std::vector<const QuadrantNode*> ReductionTree::at_level(int level, bool scrambled) const {
  std::vector<const QuadrantNode*> out;
  for (const auto& [nid, n] : nodes)
    if (n.level == level && n.scrambled() == scrambled) out.push_back(&n);
  return out;
}

std::optional<double> ReductionTree::effective_accuracy(const QuadrantNode& n) const {
  if (n.status == NodeStatus::Tested) return n.human_accuracy;
  if (n.represented_by) {
    const QuadrantNode* rep = find(*n.represented_by);
    if (rep && rep->status == NodeStatus::Tested) return rep->human_accuracy;
  }
  return std::nullopt;
}

ReductionTree init_tree(const Clip& clip) {
  ReductionTree tree;
  tree.clip_id = clip.clip_id;
  QuadrantNode root;
  root.clip_id = clip.clip_id;
  root.level = 0;
  root.rect = clip.full_rect();
  root.node_id = make_node_id(clip.clip_id, 0, {});
  tree.nodes.emplace(root.node_id, root);
  return tree;
}

void attach_accuracies(ReductionTree& tree, const std::map<std::string, double>& accuracies) {
  for (const auto& [id, acc] : accuracies) {
    if (clip_of_node(id) != tree.clip_id) continue;
    if (!(acc >= 0.0 && acc <= 1.0)) throw Error(ErrorKind::Integrity, "accuracy of " + id + " outside [0,1]");
    QuadrantNode& n = tree.node(id);
    n.status = NodeStatus::Tested;
    n.human_accuracy = acc;
  }
}

void attach_confidences(ReductionTree& tree, const std::map<std::string, double>& confidences) {
  for (const auto& [id, conf] : confidences) {
    if (clip_of_node(id) != tree.clip_id) continue;
    if (auto it = tree.nodes.find(id); it != tree.nodes.end()) it->second.model_confidence = conf;
  }
}

namespace {

struct Candidate {
  QuadrantNode node;
  bool near_unrecognised = false;
  std::int64_t cumulative_overlap = 0;
};

bool path_then_id_less(const QuadrantNode& a, const QuadrantNode& b) {
  if (a.corner_path != b.corner_path) return corner_path_less(a.corner_path, b.corner_path);
  if (a.clip_id != b.clip_id) return a.clip_id < b.clip_id;
  return a.node_id < b.node_id;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

Expansion expand_level(ReductionTree& tree, int level, const ReductionConfig& config) {
  config.validate();
  Expansion result;
  if (level >= config.max_level) {
    tree.expanded_through = std::max(tree.expanded_through, level);
    return result;
  }

  const double theta = config.recognition_threshold;
  std::vector<const QuadrantNode*> parents;
  for (const QuadrantNode* n : tree.at_level(level)) {
    if (n->status == NodeStatus::Untested && !n->represented_by)
      throw Error(ErrorKind::NotReady, "expand: node " + n->node_id + " has not been tested");
    if (n->status == NodeStatus::Tested && n->human_accuracy && *n->human_accuracy >= theta) parents.push_back(n);
  }
  tree.expanded_through = std::max(tree.expanded_through, level);

  std::vector<Candidate> candidates;
  for (const QuadrantNode* p : parents) {
    for (Corner c : kCorners) {
      Candidate cand;
      QuadrantNode& n = cand.node;
      n.clip_id = tree.clip_id;
      n.level = level + 1;
      n.corner_path = p->corner_path;
      n.corner_path.push_back(c);
      n.rect = child_rect(p->rect, c, config.scale);
      n.parent_id = p->node_id;
      n.node_id = make_node_id(tree.clip_id, n.level, n.corner_path);
      candidates.push_back(std::move(cand));
    }
  }

  if (!config.pruning) {
    for (auto& cand : candidates) {
      tree.nodes.emplace(cand.node.node_id, cand.node);
      result.selected.push_back(std::move(cand.node));
    }
    return result;
  }

  // Unrecognised evidence: tested intact nodes below threshold at this or earlier levels.
  std::vector<const QuadrantNode*> unrecognised;
  for (const auto& [id, n] : tree.nodes) {
    if (!n.scrambled() && n.level <= level && n.status == NodeStatus::Tested && n.human_accuracy &&
        *n.human_accuracy < theta)
      unrecognised.push_back(&n);
  }

  // Rule 2: fully contained in an unrecognised node.
  std::vector<Candidate> remaining;
  for (auto& cand : candidates) {
    const bool contained = std::any_of(unrecognised.begin(), unrecognised.end(), [&](const QuadrantNode* u) {
      return u->rect.contains(cand.node.rect);
    });
    if (contained) {
      cand.node.status = NodeStatus::PrunedPresumedUnrecognisable;
      result.pruned.push_back(cand.node.node_id);
      tree.nodes.emplace(cand.node.node_id, cand.node);
    } else {
      remaining.push_back(std::move(cand));
    }
  }

  // Rule 3: single-linkage clusters at IoU >= cluster_overlap, smallest corner path represents.
  std::sort(remaining.begin(), remaining.end(),
            [](const Candidate& a, const Candidate& b) { return path_then_id_less(a.node, b.node); });
  std::vector<std::size_t> uf(remaining.size());
  std::iota(uf.begin(), uf.end(), 0);
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    for (std::size_t j = i + 1; j < remaining.size(); ++j) {
      if (overlap(remaining[i].node.rect, remaining[j].node.rect).iou >= config.cluster_overlap) {
        const std::size_t ri = find_root(uf, i), rj = find_root(uf, j);
        if (ri != rj) uf[std::max(ri, rj)] = std::min(ri, rj);
      }
    }
  }
  std::vector<std::size_t> reps;
  std::vector<std::vector<std::size_t>> members(remaining.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    const std::size_t r = find_root(uf, i);
    if (r == i) reps.push_back(i);
    else members[r].push_back(i);
  }

  // Rule 4 ranking.
  for (std::size_t ri : reps) {
    Candidate& c = remaining[ri];
    c.near_unrecognised = std::any_of(unrecognised.begin(), unrecognised.end(), [&](const QuadrantNode* u) {
      return overlap(c.node.rect, u->rect).share_of_first >= config.containment_share;
    });
    for (std::size_t rj : reps)
      if (rj != ri) c.cumulative_overlap += intersection_area(c.node.rect, remaining[rj].node.rect);
  }
  std::sort(reps.begin(), reps.end(), [&](std::size_t a, std::size_t b) {
    const Candidate& ca = remaining[a];
    const Candidate& cb = remaining[b];
    if (ca.near_unrecognised != cb.near_unrecognised) return ca.near_unrecognised;
    if (ca.cumulative_overlap != cb.cumulative_overlap) return ca.cumulative_overlap > cb.cumulative_overlap;
    return path_then_id_less(ca.node, cb.node);
  });

  const auto budget = static_cast<std::size_t>(config.max_quadrants_per_level);
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const std::size_t ri = reps[k];
    if (k >= budget) {
      result.dropped_by_budget += 1 + members[ri].size();
      continue;
    }
    tree.nodes.emplace(remaining[ri].node.node_id, remaining[ri].node);
    for (std::size_t mi : members[ri]) {
      QuadrantNode member = remaining[mi].node;
      member.represented_by = remaining[ri].node.node_id;
      result.clustered.push_back(member.node_id);
      tree.nodes.emplace(member.node_id, std::move(member));
    }
    result.selected.push_back(remaining[ri].node);
  }
  return result;
}

LabelReport label_mircs(ReductionTree& tree, const ReductionConfig& config) {
  const double theta = config.recognition_threshold;
  for (auto& [id, n] : tree.nodes) {
    n.mirc_role = MircRole::None;
    n.unresolved_leaf = false;
  }

  LabelReport report;
  for (auto& [id, n] : tree.nodes) {
    if (n.scrambled() || n.status != NodeStatus::Tested || !n.human_accuracy || *n.human_accuracy < theta) continue;

    bool any_evaluated = false;
    bool all_below = true;
    std::vector<std::string> below;
    const auto kids = tree.children(id);
    for (const auto& cid : kids) {
      const QuadrantNode& c = tree.node(cid);
      if (c.status == NodeStatus::PrunedPresumedUnrecognisable) {
        any_evaluated = true;
        continue;
      }
      const auto acc = tree.effective_accuracy(c);
      if (!acc) continue;
      any_evaluated = true;
      if (*acc >= theta) all_below = false;
      else below.push_back(cid);
    }

    if (!any_evaluated) {
      // Children still awaiting responses leave the node pending.
      if (kids.empty() && (n.level >= config.max_level || n.level <= tree.expanded_through)) {
        n.unresolved_leaf = true;
        report.unresolved_leaves.push_back(id);
      }
      continue;
    }
    if (!all_below) continue;

    n.mirc_role = MircRole::MIRC;
    report.mircs.push_back(id);
    for (const auto& cid : below) {
      tree.node(cid).mirc_role = MircRole::SubMIRC;
      report.sub_mircs.push_back(cid);
    }
    for (const auto& sid : tree.children(id, true)) {
      QuadrantNode& s = tree.node(sid);
      if (s.status != NodeStatus::Tested) continue;
      n.mirc_role = MircRole::SpatiotemporalMIRC;
      s.mirc_role = MircRole::SpatiotemporalSubMIRC;
    }
  }
  return report;
}

std::string add_scrambled(ReductionTree& tree, std::string_view source_id, const ScramblePlan& plan,
                          std::uint64_t id_seed) {
  const QuadrantNode& src = tree.node(source_id);
  if (src.scrambled()) throw Error(ErrorKind::Integrity, "cannot scramble an already scrambled node");
  QuadrantNode n;
  n.clip_id = src.clip_id;
  n.level = src.level;
  n.corner_path = src.corner_path;
  n.rect = src.rect;
  n.parent_id = src.node_id;
  n.scramble = plan;
  n.node_id = make_node_id(src.clip_id, src.level, src.corner_path, id_seed);
  const std::string id = n.node_id;
  tree.nodes.insert_or_assign(id, std::move(n));
  return id;
}

ScramblePlan node_scramble_plan(std::size_t frame_count, std::string_view node_id, std::uint64_t root_seed) {
  return sample_scramble(frame_count, derive_seed(derive_seed(root_seed, "scramble"), node_id));
}

json to_json(const ScramblePlan& plan) {
  json blocks = json::array();
  for (const auto& b : plan.blocks) blocks.push_back({b.start, b.end});
  return json{{"seed", plan.seed},
              {"frame_count", plan.frame_count},
              {"n_blocks", plan.n_blocks},
              {"blocks", blocks},
              {"permutation", plan.permutation}};
}

ScramblePlan scramble_plan_from_json(const json& j) {
  ScramblePlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.frame_count = j.at("frame_count").get<std::size_t>();
  plan.n_blocks = j.at("n_blocks").get<int>();
  for (const auto& b : j.at("blocks")) plan.blocks.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>()});
  plan.permutation = j.at("permutation").get<std::vector<int>>();
  return plan;
}

json to_json(const QuadrantNode& n) {
  json j{{"node_id", n.node_id},
         {"clip_id", n.clip_id},
         {"level", n.level},
         {"corner_path", corner_path_string(n.corner_path)},
         {"rect", {n.rect.x, n.rect.y, n.rect.w, n.rect.h}},
         {"status", status_name(n.status)},
         {"mirc_role", role_name(n.mirc_role)}};
  j["parent_id"] = n.parent_id ? json(*n.parent_id) : json(nullptr);
  j["temporal"] = n.scramble ? to_json(*n.scramble) : json("Intact");
  j["human_accuracy"] = n.human_accuracy ? json(*n.human_accuracy) : json(nullptr);
  j["model_confidence"] = n.model_confidence ? json(*n.model_confidence) : json(nullptr);
  if (n.represented_by) j["represented_by"] = *n.represented_by;
  if (n.unresolved_leaf) j["unresolved_leaf"] = true;
  return j;
}

QuadrantNode node_from_json(const json& j) {
  QuadrantNode n;
  n.node_id = j.at("node_id").get<std::string>();
  n.clip_id = j.at("clip_id").get<std::string>();
  n.level = j.at("level").get<int>();
  n.corner_path = parse_corner_path(j.at("corner_path").get<std::string>());
  const auto& r = j.at("rect");
  n.rect = CropRect{r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>(), r.at(2).get<std::int64_t>(),
                    r.at(3).get<std::int64_t>()};
  n.status = parse_status(j.at("status").get<std::string>());
  n.mirc_role = parse_role(j.value("mirc_role", std::string("None")));
  if (j.contains("parent_id") && !j["parent_id"].is_null()) n.parent_id = j["parent_id"].get<std::string>();
  if (j.contains("temporal") && j["temporal"].is_object()) n.scramble = scramble_plan_from_json(j["temporal"]);
  if (j.contains("human_accuracy") && !j["human_accuracy"].is_null()) n.human_accuracy = j["human_accuracy"].get<double>();
  if (j.contains("model_confidence") && !j["model_confidence"].is_null())
    n.model_confidence = j["model_confidence"].get<double>();
  if (j.contains("represented_by")) n.represented_by = j["represented_by"].get<std::string>();
  n.unresolved_leaf = j.value("unresolved_leaf", false);
  if (n.level != static_cast<int>(n.corner_path.size()))
    throw Error(ErrorKind::Integrity, "node " + n.node_id + ": level does not match corner path length");
  if ((n.status == NodeStatus::Tested) != n.human_accuracy.has_value())
    throw Error(ErrorKind::Integrity, "node " + n.node_id + ": human_accuracy must be present iff Tested");
  return n;
}

json to_json(const ReductionConfig& c) {
  return json{{"scale", c.scale},
              {"max_level", c.max_level},
              {"recognition_threshold", c.recognition_threshold},
              {"cluster_overlap", c.cluster_overlap},
              {"containment_share", c.containment_share},
              {"max_quadrants_per_level", c.max_quadrants_per_level},
              {"pruning", c.pruning}};
}

ReductionConfig reduction_config_from_json(const json& j) {
  ReductionConfig c;
  c.scale = j.value("scale", c.scale);
  c.max_level = j.value("max_level", c.max_level);
  c.recognition_threshold = j.value("recognition_threshold", c.recognition_threshold);
  c.cluster_overlap = j.value("cluster_overlap", c.cluster_overlap);
  c.containment_share = j.value("containment_share", c.containment_share);
  c.max_quadrants_per_level = j.value("max_quadrants_per_level", c.max_quadrants_per_level);
  c.pruning = j.value("pruning", c.pruning);
  c.validate();
  return c;
}

json forest_to_json(const Forest& forest, std::uint64_t seed, const ReductionConfig& config) {
  json trees = json::array();
  for (const auto& [clip, tree] : forest) {
    json nodes = json::array();
    for (const auto& [id, n] : tree.nodes) nodes.push_back(to_json(n));
    trees.push_back({{"clip_id", clip}, {"expanded_through", tree.expanded_through}, {"nodes", nodes}});
  }
  return json{{"seed", seed}, {"config", to_json(config)}, {"trees", trees}};
}

ForestFile forest_from_json(const json& j) {
  ForestFile f;
  f.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("config")) f.config = reduction_config_from_json(j["config"]);
  for (const auto& jt : j.at("trees")) {
    ReductionTree tree;
    tree.clip_id = jt.at("clip_id").get<std::string>();
    tree.expanded_through = jt.value("expanded_through", -1);
    for (const auto& jn : jt.at("nodes")) {
      QuadrantNode n = node_from_json(jn);
      tree.nodes.emplace(n.node_id, std::move(n));
    }
    for (const auto& [id, n] : tree.nodes) {
      if (!n.parent_id) continue;
      const QuadrantNode* p = tree.find(*n.parent_id);
      if (!p) throw Error(ErrorKind::Integrity, "node " + id + ": parent missing");
      if (!p->rect.contains(n.rect)) throw Error(ErrorKind::Integrity, "node " + id + ": rect not inside parent");
    }
    f.forest.emplace(tree.clip_id, std::move(tree));
  }
  return f;
}

}  // namespace mirc
