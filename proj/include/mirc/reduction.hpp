#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mirc/dataset.hpp"
#include "mirc/geometry.hpp"
#include "mirc/scramble.hpp"

namespace mirc {

struct ReductionConfig {
  double scale = 0.8;
  int max_level = 7;
  double recognition_threshold = 0.50;
  double cluster_overlap = 0.95;
  double containment_share = 0.65;
  int max_quadrants_per_level = 16;
  /// Rules 2-4 on/off. Rule 1 (threshold gating) always applies.
  bool pruning = true;

  /// Throws Error(Usage) for out-of-range values.
  void validate() const;
  /// s == 0.5 makes siblings disjoint, so overlap rules never fire.
  bool pruning_vacuous() const { return scale <= 0.5; }
};

enum class NodeStatus { Untested, Tested, PrunedPresumedUnrecognisable };
enum class MircRole { None, MIRC, SubMIRC, SpatiotemporalMIRC, SpatiotemporalSubMIRC };

std::string_view status_name(NodeStatus s);
std::string_view role_name(MircRole r);
inline bool is_mirc(MircRole r) { return r == MircRole::MIRC || r == MircRole::SpatiotemporalMIRC; }

struct QuadrantNode {
  std::string node_id;
  std::string clip_id;
  int level = 0;
  CornerPath corner_path;
  CropRect rect;
  std::optional<std::string> parent_id;
  /// Set for temporally scrambled variants; rect equals the source rect.
  std::optional<ScramblePlan> scramble;
  NodeStatus status = NodeStatus::Untested;
  std::optional<double> human_accuracy;
  std::optional<double> model_confidence;
  MircRole mirc_role = MircRole::None;
  /// Rule-3 cluster member that was not tested; shares the representative's accuracy.
  std::optional<std::string> represented_by;
  bool unresolved_leaf = false;

  bool scrambled() const { return scramble.has_value(); }
};

/// Node id `clip/L{level}/{corner_path}` with `/scr{seed}` appended for scrambled variants.
std::string make_node_id(std::string_view clip_id, int level, const CornerPath& path,
                         std::optional<std::uint64_t> scramble_seed = std::nullopt);
/// Clip id prefix of a node id.
std::string clip_of_node(std::string_view node_id);

struct ReductionTree {
  std::string clip_id;
  /// Deepest level whose expansion has run; -1 before the first expansion.
  int expanded_through = -1;
  std::map<std::string, QuadrantNode> nodes;

  const QuadrantNode& node(std::string_view id) const;
  QuadrantNode& node(std::string_view id);
  const QuadrantNode* find(std::string_view id) const;
  /// Child ids sorted by node id; scrambled variants included only when asked.
  std::vector<std::string> children(std::string_view id, bool scrambled = false) const;
  std::vector<const QuadrantNode*> at_level(int level, bool scrambled = false) const;
  /// Accuracy used for decisions: own if tested, else the rule-3 representative's.
  std::optional<double> effective_accuracy(const QuadrantNode& n) const;
};

using Forest = std::map<std::string, ReductionTree>;

/// Level-0 tree for a clip: one untested node covering the full frame.
ReductionTree init_tree(const Clip& clip);

/// Marks nodes Tested with the given accuracies. Unknown node ids throw Error(NotFound).
void attach_accuracies(ReductionTree& tree, const std::map<std::string, double>& accuracies);
void attach_confidences(ReductionTree& tree, const std::map<std::string, double>& confidences);

struct Expansion {
  std::vector<QuadrantNode> selected;
  std::vector<std::string> pruned;
  std::vector<std::string> clustered;
  std::size_t dropped_by_budget = 0;
};

/// Generates and selects the next level's quadrants under `level` (rules 1-4).
/// Selected nodes are inserted Untested; rule-2 nodes PrunedPresumedUnrecognisable;
/// rule-3 members Untested with represented_by set. Budget-dropped candidates are
/// not inserted.
Expansion expand_level(ReductionTree& tree, int level, const ReductionConfig& config);

struct LabelReport {
  std::vector<std::string> mircs;
  std::vector<std::string> sub_mircs;
  std::vector<std::string> unresolved_leaves;
};

/// Assigns MIRC / sub-MIRC roles from the attached accuracies. Idempotent.
LabelReport label_mircs(ReductionTree& tree, const ReductionConfig& config);

/// Adds the temporally scrambled variant of a node, returns its id.
std::string add_scrambled(ReductionTree& tree, std::string_view source_id, const ScramblePlan& plan,
                          std::uint64_t id_seed);

/// Plan for a node's scrambled variant, seeded by
/// derive_seed(derive_seed(root_seed, "scramble"), node_id) so each node's
/// plan is independent of which other nodes are scrambled.
ScramblePlan node_scramble_plan(std::size_t frame_count, std::string_view node_id, std::uint64_t root_seed);

nlohmann::json to_json(const ScramblePlan& plan);
ScramblePlan scramble_plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QuadrantNode& node);
QuadrantNode node_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReductionConfig& config);
ReductionConfig reduction_config_from_json(const nlohmann::json& j);

nlohmann::json forest_to_json(const Forest& forest, std::uint64_t seed, const ReductionConfig& config);
struct ForestFile {
  Forest forest;
  std::uint64_t seed = 0;
  ReductionConfig config;
};
ForestFile forest_from_json(const nlohmann::json& j);

}  // namespace mirc
