#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mirc/error.hpp"
#include "mirc/reduction.hpp"
#include "mirc/rng.hpp"

using namespace mirc;

namespace {

Clip square_clip(const std::string& id = "c", int side = 100) {
  Clip c;
  c.clip_id = id;
  c.verb_class = "put";
  c.gt_label = "put cup";
  c.width = side;
  c.height = side;
  c.fps = 10;
  c.frames.assign(10, "unused");
  return c;
}

ReductionConfig cfg(double s = 0.8, int max_level = 7) {
  ReductionConfig c;
  c.scale = s;
  c.max_level = max_level;
  return c;
}

std::vector<std::string> ids(const std::vector<QuadrantNode>& nodes) {
  std::vector<std::string> out;
  for (const auto& n : nodes) out.push_back(n.node_id);
  return out;
}

}  // namespace

TEST_CASE("node ids") {
  CHECK(make_node_id("c", 0, {}) == "c/L0/root");
  CHECK(make_node_id("c", 2, {Corner::UL, Corner::BR}) == "c/L2/UL-BR");
  CHECK(make_node_id("c", 2, {Corner::UL, Corner::BR}, 7) == "c/L2/UL-BR/scr7");
  CHECK(clip_of_node("P01_x/L1/UL") == "P01_x");
}

TEST_CASE("rule 1 gates children on the parent's accuracy") {
  auto tree = init_tree(square_clip());
  REQUIRE(tree.nodes.size() == 1);
  attach_accuracies(tree, {{"c/L0/root", 0.65}});
  auto e = expand_level(tree, 0, cfg());
  CHECK(e.selected.size() == 4);

  auto low = init_tree(square_clip());
  attach_accuracies(low, {{"c/L0/root", 0.40}});
  CHECK(expand_level(low, 0, cfg()).selected.empty());
}

TEST_CASE("expanding an untested level is refused") {
  auto tree = init_tree(square_clip());
  CHECK_THROWS_AS(expand_level(tree, 0, cfg()), Error);
  CHECK_THROWS_AS(attach_accuracies(tree, {{"c/L0/nope", 0.5}}), Error);
}

TEST_CASE("max level is terminal") {
  auto tree = init_tree(square_clip());
  attach_accuracies(tree, {{"c/L0/root", 0.9}});
  CHECK(expand_level(tree, 0, cfg(0.8, 0)).selected.empty());
}

TEST_CASE("rule 2 prunes candidates inside an unrecognised node") {
  // BL (0,20,80,80) is unrecognised and contains UL-BL-BL (0,29,51,51) and UL-BL-BR (13,29,51,51).
  auto tree = init_tree(square_clip());
  const auto c = cfg();
  attach_accuracies(tree, {{"c/L0/root", 0.9}});
  expand_level(tree, 0, c);
  attach_accuracies(tree, {{"c/L1/UL", 0.8}, {"c/L1/BL", 0.3}, {"c/L1/UR", 0.3}, {"c/L1/BR", 0.3}});
  expand_level(tree, 1, c);
  attach_accuracies(tree, {{"c/L2/UL-UL", 0.3}, {"c/L2/UL-BL", 0.7}, {"c/L2/UL-UR", 0.3}, {"c/L2/UL-BR", 0.3}});
  const auto e = expand_level(tree, 2, c);
  std::vector<std::string> pruned = e.pruned;
  std::sort(pruned.begin(), pruned.end());
  CHECK(pruned == std::vector<std::string>{"c/L3/UL-BL-BL", "c/L3/UL-BL-BR"});
  CHECK(tree.node("c/L3/UL-BL-BL").status == NodeStatus::PrunedPresumedUnrecognisable);
  CHECK(tree.node("c/L1/BL").rect.contains(tree.node("c/L3/UL-BL-BR").rect));
  for (const auto& n : e.selected) CHECK_FALSE(tree.node("c/L1/BL").rect.contains(n.rect));
}

TEST_CASE("rule 3 keeps one representative per overlap cluster") {
  // At s = 0.99 on 1000x1000 every sibling pair has IoU >= 0.96.
  auto tree = init_tree(square_clip("c", 1000));
  attach_accuracies(tree, {{"c/L0/root", 0.9}});
  const auto c = cfg(0.99);
  CHECK(overlap(child_rect({0, 0, 1000, 1000}, Corner::UL, 0.99), child_rect({0, 0, 1000, 1000}, Corner::BR, 0.99))
            .iou >= 0.95);
  const auto e = expand_level(tree, 0, c);
  CHECK(ids(e.selected) == std::vector<std::string>{"c/L1/UL"});
  CHECK(e.clustered.size() == 3);
  CHECK(tree.node("c/L1/BR").represented_by == std::optional<std::string>("c/L1/UL"));

  // Members share their representative's accuracy.
  attach_accuracies(tree, {{"c/L1/UL", 0.3}});
  CHECK(tree.effective_accuracy(tree.node("c/L1/UR")) == std::optional<double>(0.3));
}

TEST_CASE("rule 4 budget keeps ties in corner order") {
  auto tree = init_tree(square_clip());
  auto c = cfg();
  c.max_quadrants_per_level = 2;
  attach_accuracies(tree, {{"c/L0/root", 0.9}});
  const auto e = expand_level(tree, 0, c);
  CHECK(ids(e.selected) == std::vector<std::string>{"c/L1/UL", "c/L1/BL"});
  CHECK(e.dropped_by_budget == 2);
  CHECK(tree.find("c/L1/UR") == nullptr);
}

TEST_CASE("expansion is deterministic") {
  auto a = init_tree(square_clip());
  attach_accuracies(a, {{"c/L0/root", 0.9}});
  auto b = a;
  CHECK(ids(expand_level(a, 0, cfg()).selected) == ids(expand_level(b, 0, cfg()).selected));
  CHECK(forest_to_json({{"c", a}}, 1, cfg()) == forest_to_json({{"c", b}}, 1, cfg()));
}

TEST_CASE("unpruned expansion yields the geometric node count") {
  for (int L = 0; L <= 4; ++L) {
    auto c = cfg(0.8, L);
    c.pruning = false;
    auto tree = init_tree(square_clip("c", 1000));
    for (int level = 0; level <= L; ++level) {
      std::map<std::string, double> acc;
      for (const auto* n : tree.at_level(level)) acc[n->node_id] = 1.0;
      attach_accuracies(tree, acc);
      expand_level(tree, level, c);
    }
    std::size_t expected = 0;
    for (int l = 0, pow4 = 1; l <= L; ++l, pow4 *= 4) expected += pow4;
    CHECK(tree.nodes.size() == expected);
  }
}

TEST_CASE("labelling follows the worked example") {
  auto tree = init_tree(square_clip());
  const auto c = cfg();
  attach_accuracies(tree, {{"c/L0/root", 0.65}});
  expand_level(tree, 0, c);
  attach_accuracies(tree, {{"c/L1/UL", 0.45}, {"c/L1/UR", 0.30}, {"c/L1/BL", 0.20}, {"c/L1/BR", 0.40}});
  expand_level(tree, 1, c);
  auto report = label_mircs(tree, c);
  CHECK(report.mircs == std::vector<std::string>{"c/L0/root"});
  CHECK(report.sub_mircs.size() == 4);
  CHECK(tree.node("c/L1/BR").mirc_role == MircRole::SubMIRC);

  // Idempotent.
  const auto before = forest_to_json({{"c", tree}}, 0, c);
  label_mircs(tree, c);
  CHECK(forest_to_json({{"c", tree}}, 0, c) == before);
}

TEST_CASE("a recognised child defers the MIRC label") {
  auto tree = init_tree(square_clip());
  const auto c = cfg();
  attach_accuracies(tree, {{"c/L0/root", 0.65}});
  expand_level(tree, 0, c);
  attach_accuracies(tree, {{"c/L1/UL", 0.55}, {"c/L1/UR", 0.30}, {"c/L1/BL", 0.20}, {"c/L1/BR", 0.40}});
  const auto next = expand_level(tree, 1, c);
  CHECK(next.selected.size() == 4);
  for (const auto& n : next.selected) CHECK(n.parent_id == std::optional<std::string>("c/L1/UL"));
  const auto report = label_mircs(tree, c);
  CHECK(report.mircs.empty());
  CHECK(tree.node("c/L0/root").mirc_role == MircRole::None);
}

TEST_CASE("pruned children count as unrecognised") {
  ReductionTree tree = init_tree(square_clip());
  attach_accuracies(tree, {{"c/L0/root", 0.70}});
  auto c = cfg();
  expand_level(tree, 0, c);
  for (auto& [id, n] : tree.nodes)
    if (n.level == 1) n.status = NodeStatus::PrunedPresumedUnrecognisable;
  const auto report = label_mircs(tree, c);
  CHECK(report.mircs == std::vector<std::string>{"c/L0/root"});
  CHECK(report.sub_mircs.empty());
}

TEST_CASE("recognised leaf at the last level is unresolved") {
  auto tree = init_tree(square_clip());
  const auto c = cfg(0.8, 1);
  attach_accuracies(tree, {{"c/L0/root", 0.9}});
  expand_level(tree, 0, c);
  attach_accuracies(tree, {{"c/L1/UL", 0.8}, {"c/L1/UR", 0.1}, {"c/L1/BL", 0.1}, {"c/L1/BR", 0.1}});
  expand_level(tree, 1, c);
  const auto report = label_mircs(tree, c);
  CHECK(report.unresolved_leaves == std::vector<std::string>{"c/L1/UL"});
  CHECK(report.mircs.empty());
  CHECK(tree.node("c/L1/UL").unresolved_leaf);
}

TEST_CASE("labelled trees satisfy the ancestor and sub-MIRC invariants") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto c = cfg(0.8, 3);
  for (int trial = 0; trial < 50; ++trial) {
    auto tree = init_tree(square_clip("c", 400));
    for (int level = 0; level <= 3; ++level) {
      std::map<std::string, double> acc;
      for (const auto* n : tree.at_level(level))
        if (n->status == NodeStatus::Untested && !n->represented_by) acc[n->node_id] = std::round(u(gen) * 20) / 20;
      attach_accuracies(tree, acc);
      expand_level(tree, level, c);
    }
    label_mircs(tree, c);
    for (const auto& [id, n] : tree.nodes) {
      if (n.mirc_role == MircRole::SubMIRC) CHECK(*tree.effective_accuracy(n) < c.recognition_threshold);
      if (!is_mirc(n.mirc_role)) continue;
      for (auto p = n.parent_id; p; p = tree.node(*p).parent_id)
        CHECK(*tree.node(*p).human_accuracy >= c.recognition_threshold);
    }
  }
}

TEST_CASE("scrambled variants use the derived per-node seed") {
  auto tree = init_tree(square_clip());
  const std::string id = "c/L0/root";
  const auto plan = node_scramble_plan(10, id, 7);
  CHECK(plan == sample_scramble(10, splitmix64(splitmix64(7 ^ fnv1a64("scramble")) ^ fnv1a64(id))));
  const auto sid = add_scrambled(tree, id, plan, 7);
  CHECK(sid == "c/L0/root/scr7");
  CHECK(tree.node(sid).rect == tree.node(id).rect);
  CHECK(tree.children(id).empty());
  CHECK(tree.children(id, true) == std::vector<std::string>{sid});
}

TEST_CASE("forest JSON round trip") {
  auto tree = init_tree(square_clip());
  attach_accuracies(tree, {{"c/L0/root", 0.9}});
  expand_level(tree, 0, cfg());
  add_scrambled(tree, "c/L0/root", make_plan(10, {3, 5, 1, 4, 2}, 9), 9);
  const auto j = forest_to_json({{"c", tree}}, 42, cfg());
  const auto back = forest_from_json(j);
  CHECK(back.seed == 42);
  CHECK(forest_to_json(back.forest, back.seed, back.config) == j);
}

TEST_CASE("config validation") {
  auto c = cfg(1.2);
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(cfg(0.5).pruning_vacuous());
  CHECK_FALSE(cfg(0.8).pruning_vacuous());
}
