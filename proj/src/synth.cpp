#include "mirc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mirc/csv.hpp"
#include "mirc/error.hpp"
#include "mirc/image_io.hpp"
#include "mirc/rng.hpp"
#include "mirc/scoring.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace mirc::synth {

namespace {

constexpr int kW = 40;
constexpr int kH = 32;
constexpr std::size_t kFrames = 10;
constexpr int kParticipants = 20;

struct ClipSpec {
  std::string id;
  ClipRole role;
  Split split;
  std::string verb;
  std::string object;
};

const std::vector<ClipSpec>& clip_specs() {
  static const std::vector<ClipSpec> specs{
      {"kit01", ClipRole::Test, Split::Easy, "wash", "plate"},
      {"kit02", ClipRole::Test, Split::Hard, "put", "cup"},
      {"kit03", ClipRole::Test, Split::Easy, "cut", "onion"},
      {"pr1", ClipRole::Practice, Split::Easy, "take", "box"},
      {"pr2", ClipRole::Practice, Split::Easy, "close", "door"},
      {"pr3", ClipRole::Practice, Split::Easy, "open", "box"},
      {"pr4", ClipRole::Practice, Split::Easy, "pour", "water"},
      {"pr5", ClipRole::Practice, Split::Easy, "take", "cup"},
      {"ct1", ClipRole::Catch, Split::Easy, "open", "door"},
      {"ct2", ClipRole::Catch, Split::Easy, "pour", "water"},
  };
  return specs;
}

const std::vector<std::string> kVerbs{"close", "cut", "open", "pour", "put", "take", "wash"};
const std::vector<std::string> kObjects{"bowl", "box", "cup", "door", "knife", "onion", "plate", "water"};

// Scripted accuracies; unlisted intact nodes default to 0.25, scrambled to 0.40.
const std::map<std::string, double>& scripted() {
  static const std::map<std::string, double> acc{
      {"kit01/L0/root", 0.90}, {"kit01/L1/UL", 0.70}, {"kit01/L1/UR", 0.30}, {"kit01/L1/BL", 0.45},
      {"kit01/L1/BR", 0.20},   {"kit02/L0/root", 0.85}, {"kit02/L1/UL", 0.35}, {"kit02/L1/UR", 0.55},
      {"kit02/L1/BL", 0.40},   {"kit02/L1/BR", 0.60}, {"kit02/L2/UR-UL", 0.55}, {"kit03/L0/root", 0.80},
      {"kit03/L1/UL", 0.45},   {"kit03/L1/UR", 0.40}, {"kit03/L1/BL", 0.30}, {"kit03/L1/BR", 0.20},
  };
  return acc;
}

double scripted_accuracy(const std::string& node_id, bool scrambled, const std::string& source_id) {
  if (scrambled) {
    if (source_id == "kit03/L0/root") return 0.60;
    if (source_id == "kit02/L1/BR") return 0.35;
    return 0.40;
  }
  auto it = scripted().find(node_id);
  return it == scripted().end() ? 0.25 : it->second;
}

using Plane = std::vector<std::uint8_t>;

struct Rect {
  int x, y, w, h;
  bool has(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
};

Rect hand_rect(std::size_t clip_index, std::size_t t) {
  return {static_cast<int>(4 + 2 * t), static_cast<int>(6 + clip_index), 10, 8};
}
Rect object_rect(std::size_t clip_index) { return {22, static_cast<int>(14 + clip_index), 8, 8}; }
Rect context_rect() { return {2, 22, 12, 6}; }

Plane render_frame(std::size_t clip_index, std::size_t t) {
  Plane p(static_cast<std::size_t>(kW * kH));
  const Rect hand = hand_rect(clip_index, t), obj = object_rect(clip_index), ctx = context_rect();
  for (int y = 0; y < kH; ++y) {
    for (int x = 0; x < kW; ++x) {
      int v = 40 + (x * 3 + y * 2 + static_cast<int>(clip_index) * 17) % 60;
      if (ctx.has(x, y)) v = 100;
      if (obj.has(x, y)) v = 150;
      if (hand.has(x, y)) v = 200 + static_cast<int>(t);
      p[static_cast<std::size_t>(y * kW + x)] = static_cast<std::uint8_t>(v);
    }
  }
  return p;
}

// Integer activation levels 0..255 per channel; stored as k/255.
std::array<Plane, kChannelCount> channel_levels(const Plane& cur, const Plane* prev) {
  std::array<Plane, kChannelCount> out;
  for (auto& p : out) p.assign(cur.size(), 0);
  auto at = [&](const Plane& p, int x, int y) {
    x = std::clamp(x, 0, kW - 1);
    y = std::clamp(y, 0, kH - 1);
    return static_cast<int>(p[static_cast<std::size_t>(y * kW + x)]);
  };
  for (int y = 0; y < kH; ++y) {
    for (int x = 0; x < kW; ++x) {
      const auto i = static_cast<std::size_t>(y * kW + x);
      const int v = at(cur, x, y);
      out[0][i] = static_cast<std::uint8_t>(v * (x + 1) / kW);
      out[1][i] = static_cast<std::uint8_t>(v);
      out[2][i] = static_cast<std::uint8_t>(std::abs(at(cur, x + 1, y) - v));
      out[3][i] = static_cast<std::uint8_t>(std::abs(at(cur, x, y + 1) - v));
      out[4][i] = prev ? static_cast<std::uint8_t>(std::abs(v - at(*prev, x, y))) : 0;
      out[5][i] = static_cast<std::uint8_t>(std::min(255, 2 * std::abs(v - 128)));
      out[6][i] = prev ? static_cast<std::uint8_t>((std::abs(v - at(*prev, x, y)) + std::abs(v - at(*prev, x - 1, y))) / 2)
                       : 0;
    }
  }
  return out;
}

void write_maps(const fs::path& root, const std::vector<Plane>& frames, json& map_entries, const std::string& clip_id,
                const std::optional<std::string>& node_id, const std::string& subdir) {
  for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
    const std::string name(feature_name(static_cast<Feature>(ch + kObjectFeatureCount)));
    const fs::path dir = root / subdir / name;
    fs::create_directories(dir);
    io::write_text_atomic((dir / "meta.json").string(),
                          json{{"width", kW}, {"height", kH}, {"frames", frames.size()}, {"channel", name}}.dump());
    json entry{{"clip_id", clip_id}, {"channel", name}, {"dir", fs::relative(dir, root).string()}};
    if (node_id) entry["node_id"] = *node_id;
    map_entries.push_back(entry);
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto levels = channel_levels(frames[t], t ? &frames[t - 1] : nullptr);
    for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
      const std::string name(feature_name(static_cast<Feature>(ch + kObjectFeatureCount)));
      std::vector<float> values(levels[ch].size());
      for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(levels[ch][i]) / 255.0f;
      io::write_f32((root / subdir / name / io::frame_name(t, ".f32")).string(), values);
    }
  }
}

void write_mask(const fs::path& dir, std::size_t t, const Rect& r) {
  io::GrayImage img{kW, kH, Plane(static_cast<std::size_t>(kW * kH), 0)};
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x)
      if (r.has(x, y)) img.pixels[static_cast<std::size_t>(y * kW + x)] = 255;
  io::write_pgm((dir / io::frame_name(t, ".pgm")).string(), img);
}

// Every intact node of the unpruned tree down to `max_level`.
std::vector<QuadrantNode> full_tree(const Clip& clip, int max_level, double scale) {
  std::vector<QuadrantNode> out;
  ReductionTree tree = init_tree(clip);
  out.push_back(tree.nodes.begin()->second);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].level >= max_level) continue;
    for (Corner c : kCorners) {
      QuadrantNode n;
      n.clip_id = clip.clip_id;
      n.level = out[i].level + 1;
      n.corner_path = out[i].corner_path;
      n.corner_path.push_back(c);
      n.rect = child_rect(out[i].rect, c, scale);
      n.parent_id = out[i].node_id;
      n.node_id = make_node_id(clip.clip_id, n.level, n.corner_path);
      out.push_back(std::move(n));
    }
  }
  return out;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::ostringstream os;
  csv::write_row(os, fields);
  return os.str();
}

}  // namespace

json mini_config(std::uint64_t seed) {
  ReductionConfig r;
  r.max_level = 2;
  ScoringConfig s;
  s.penalty = 0.5;
  s.bonus = 0.6;
  s.threshold = 0.7;
  s.verb_lexicon.insert(kVerbs.begin(), kVerbs.end());
  return json{{"seed", seed},
              {"reduction", to_json(r)},
              {"scoring", to_json(s)},
              {"catch_required_correct", 2},
              {"study", {{"quota", kParticipants}, {"max_set_size", 36}}}};
}

MiniInfo write_mini_dataset(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  MiniInfo info;
  const json config = mini_config(seed);
  const ReductionConfig rconf = reduction_config_from_json(config["reduction"]);
  const ScoringConfig sconf = scoring_config_from_json(config["scoring"]);

  json clips = json::array(), masks = json::array(), maps = json::array();
  std::map<std::string, Clip> clip_models;
  const auto& specs = clip_specs();
  for (std::size_t ci = 0; ci < specs.size(); ++ci) {
    const ClipSpec& spec = specs[ci];
    const fs::path frame_dir = dir / "frames" / spec.id;
    fs::create_directories(frame_dir);
    std::vector<Plane> frames;
    for (std::size_t t = 0; t < kFrames; ++t) {
      frames.push_back(render_frame(ci, t));
      io::write_pgm((frame_dir / io::frame_name(t, ".pgm")).string(), io::GrayImage{kW, kH, frames.back()});
    }
    const std::string role(clip_role_name(spec.role));
    clips.push_back({{"clip_id", spec.id},
                     {"role", role},
                     {"split", split_name(spec.split)},
                     {"verb_class", spec.verb},
                     {"gt_label", spec.verb + " " + spec.object},
                     {"frame_dir", fs::relative(frame_dir, dir).string()},
                     {"width", kW},
                     {"height", kH},
                     {"fps", 10}});
    Clip model;
    model.clip_id = spec.id;
    model.split = spec.split;
    model.verb_class = spec.verb;
    model.width = kW;
    model.height = kH;
    model.frames.assign(kFrames, std::string());
    clip_models[spec.id] = model;
    if (spec.role != ClipRole::Test) continue;

    const std::array<std::pair<Feature, std::string>, 3> cats{{{Feature::ActiveHand, "ActiveHand"},
                                                               {Feature::ActiveObject, "ActiveObject"},
                                                               {Feature::ContextualObjects, "ContextualObjects"}}};
    for (const auto& [cat, name] : cats) {
      const fs::path mdir = dir / "masks" / spec.id / name;
      fs::create_directories(mdir);
      for (std::size_t t = 0; t < kFrames; ++t) {
        const Rect r = cat == Feature::ActiveHand ? hand_rect(ci, t)
                       : cat == Feature::ActiveObject ? object_rect(ci)
                                                      : context_rect();
        write_mask(mdir, t, r);
      }
      masks.push_back({{"clip_id", spec.id}, {"category", name}, {"dir", fs::relative(mdir, dir).string()}});
    }
    write_maps(dir, frames, maps, spec.id, std::nullopt, "maps/" + spec.id + "/intact");

    // Replay the scripted protocol to learn which MIRCs get scrambled maps.
    ReductionTree tree = init_tree(model);
    for (int level = 0;; ++level) {
      std::map<std::string, double> acc;
      for (const auto* n : tree.at_level(level))
        if (n->status == NodeStatus::Untested && !n->represented_by) acc[n->node_id] = scripted_accuracy(n->node_id, false, "");
      attach_accuracies(tree, acc);
      if (expand_level(tree, level, rconf).selected.empty()) break;
    }
    for (const auto& mid : label_mircs(tree, rconf).mircs) {
      const ScramblePlan plan = node_scramble_plan(kFrames, mid, seed);
      const std::string sid = make_node_id(spec.id, tree.node(mid).level, tree.node(mid).corner_path, seed);
      std::vector<Plane> shuffled;
      for (std::size_t f : materialize(kFrames, plan)) shuffled.push_back(frames[f]);
      std::string sub = sid;
      std::replace(sub.begin(), sub.end(), '/', '_');
      write_maps(dir, shuffled, maps, spec.id, sid, "maps/" + spec.id + "/" + sub);
    }
  }

  // Vocabulary, embeddings and dictionary.
  std::vector<std::string> vocab(kVerbs);
  vocab.insert(vocab.end(), kObjects.begin(), kObjects.end());
  std::map<std::string, std::uint64_t> dict;
  for (const auto& v : kVerbs) dict[v] = 100;
  for (const auto& o : kObjects) dict[o] = 50;
  std::ofstream(dir / "dictionary.csv") << "word,count\n" << [&] {
    std::string s;
    for (const auto& [w, c] : dict) s += w + "," + std::to_string(c) + "\n";
    return s;
  }();
  const SpellCorrector speller(dict, sconf.spell_max_edit_distance);

  // Responses.
  std::string responses = "participant_id,node_id,trial_kind,response_time_ms,raw_text\n";
  std::set<std::string> sentences;
  auto add_row = [&](const std::string& pid, const std::string& node, TrialKind kind, std::int64_t rt,
                     const std::string& text) {
    responses += csv_line({pid, node, std::string(trial_kind_name(kind)), std::to_string(rt), text});
    const CleanResult c = clean(text, sconf, &speller);
    if (!c.empty()) sentences.insert(c.text);
  };
  auto pid = [](int i) { return fmt::format("p{:02}", i); };
  auto rt = [](int p, std::uint64_t h) { return p == 5 ? std::int64_t{3500} : std::int64_t(4200 + (h % 900)); };

  for (int p = 1; p <= kParticipants + 1; ++p) {
    for (const auto& spec : specs) {
      if (spec.role == ClipRole::Test) continue;
      const std::string node = make_node_id(spec.id, 0, {});
      const TrialKind kind = spec.role == ClipRole::Practice ? TrialKind::Practice : TrialKind::Catch;
      const bool bad = p == kParticipants + 1 && kind == TrialKind::Catch;
      add_row(pid(p), node, kind, rt(p, fnv1a64(node)), bad ? "take knife" : spec.verb + " " + spec.object);
    }
  }

  std::vector<std::string> conf_rows;
  for (const auto& spec : specs) {
    if (spec.role != ClipRole::Test) continue;
    const Clip& model = clip_models[spec.id];
    std::vector<std::pair<std::string, std::string>> nodes;  // (node id, source id)
    for (const auto& n : full_tree(model, rconf.max_level, rconf.scale)) {
      nodes.emplace_back(n.node_id, "");
      nodes.emplace_back(make_node_id(spec.id, n.level, n.corner_path, seed), n.node_id);
    }
    const std::vector<std::string> correct{spec.verb + " " + spec.object, "the man " + spec.verb + " the " + spec.object,
                                           spec.verb.substr(0, 1) + spec.verb.substr(2) + " " + spec.object,
                                           spec.verb + " bowl", spec.verb + "s " + spec.object + "!"};
    const std::vector<std::string> wrong{"open door", "take " + spec.object, "pour water", "", "the person",
                                         "close box"};
    for (const auto& [node, source] : nodes) {
      const double a = scripted_accuracy(node, !source.empty(), source);
      info.accuracies[node] = a;
      const auto k = static_cast<int>(std::lround(a * kParticipants));
      const std::uint64_t h = fnv1a64(node);
      for (int i = 0; i < kParticipants; ++i) {
        const int p = 1 + static_cast<int>((h + static_cast<std::uint64_t>(i)) % kParticipants);
        const std::string& text = i < k ? correct[(h + i) % correct.size()] : wrong[(h + i) % wrong.size()];
        add_row(pid(p), node, TrialKind::Main, rt(p, h + i), text);
      }
      add_row(pid(kParticipants + 1), node, TrialKind::Main, rt(0, h), correct[0]);

      // Model confidences in thousandths; a distractor verb takes 60% of the rest.
      Rng rng(derive_seed(seed, "confidence/" + node));
      const double jitter = (static_cast<double>(rng.below(101)) - 50.0) / 1000.0;
      const int gt = static_cast<int>(std::lround(1000.0 * std::clamp(0.15 + 0.8 * a + jitter, 0.05, 0.95)));
      const std::string distractor = kVerbs[(h + (spec.verb == kVerbs[h % kVerbs.size()] ? 1 : 0)) % kVerbs.size()];
      int rest = 1000 - gt;
      const int d = rest * 6 / 10;
      rest -= d;
      std::vector<std::string> others;
      for (const auto& v : kVerbs)
        if (v != spec.verb && v != distractor) others.push_back(v);
      std::map<std::string, int> milli{{spec.verb, gt}, {distractor, d}};
      for (std::size_t i = 0; i < others.size(); ++i) {
        const int share = i + 1 == others.size() ? rest : rest / static_cast<int>(others.size());
        milli[others[i]] = share;
        if (i + 1 < others.size()) rest -= share;
      }
      for (const auto& [verb, m] : milli) conf_rows.push_back(csv_line({node, verb, fmt::format("{:.3f}", m / 1000.0)}));
    }
  }
  io::write_text_atomic((dir / "responses.csv").string(), responses);
  std::string conf = "node_id,verb,confidence\n";
  for (const auto& r : conf_rows) conf += r;
  io::write_text_atomic((dir / "confidences.csv").string(), conf);

  // Bag-of-words embeddings: one-hot words, sentences sum their words.
  for (const auto& spec : specs) sentences.insert(spec.verb + " " + spec.object);
  auto header = [&] {
    std::string h = "text";
    for (std::size_t i = 0; i < vocab.size(); ++i) h += ",d" + std::to_string(i);
    return h + "\n";
  };
  std::string words = header(), sents = header();
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    words += vocab[w];
    for (std::size_t i = 0; i < vocab.size(); ++i) words += i == w ? ",1" : ",0";
    words += "\n";
  }
  for (const auto& s : sentences) {
    std::vector<int> v(vocab.size(), 0);
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
      auto it = std::find(vocab.begin(), vocab.end(), tok);
      if (it == vocab.end()) throw Error(ErrorKind::Integrity, "synth: token '" + tok + "' outside the vocabulary");
      ++v[static_cast<std::size_t>(it - vocab.begin())];
    }
    sents += s;
    for (int x : v) sents += "," + std::to_string(x);
    sents += "\n";
  }
  io::write_text_atomic((dir / "words.csv").string(), words);
  io::write_text_atomic((dir / "sentences.csv").string(), sents);

  json manifest{{"verb_classes", kVerbs},
                {"clips", clips},
                {"masks", masks},
                {"maps", maps},
                {"confidences", "confidences.csv"},
                {"responses", "responses.csv"},
                {"embeddings", {{"sentence", "sentences.csv"}, {"word", "words.csv"}}},
                {"dictionary", "dictionary.csv"}};
  info.manifest = dir / "manifest.json";
  info.config = dir / "config.json";
  io::write_text_atomic(info.manifest.string(), manifest.dump(1) + "\n");
  io::write_text_atomic(info.config.string(), config.dump(1) + "\n");
  return info;
}

namespace {

QuadrantNode& add_child(ReductionTree& tree, const QuadrantNode& parent, Corner c, double scale, NodeStatus status,
                        std::optional<double> acc) {
  QuadrantNode n;
  n.clip_id = tree.clip_id;
  n.level = parent.level + 1;
  n.corner_path = parent.corner_path;
  n.corner_path.push_back(c);
  n.rect = child_rect(parent.rect, c, scale);
  n.parent_id = parent.node_id;
  n.node_id = make_node_id(tree.clip_id, n.level, n.corner_path);
  n.status = status;
  n.human_accuracy = acc;
  const std::string id = n.node_id;
  return tree.nodes.emplace(id, std::move(n)).first->second;
}

std::vector<std::string> intact_at(const ReductionTree& tree, int level) {
  std::vector<std::string> out;
  for (const auto* n : tree.at_level(level)) out.push_back(n->node_id);
  return out;
}

}  // namespace

Table1Fixture table1_fixture() {
  Table1Fixture fx;
  fx.config.max_level = 7;
  fx.manifest.verb_classes = default_verb_classes();
  const std::vector<std::string> easy_verbs{"close", "cut",  "hang",     "open",    "pour", "put",
                                            "remove", "take", "turn-off", "turn-on", "wash"};
  const std::vector<std::string> hard_verbs{"close", "hang", "insert", "open", "peel", "pour",
                                            "put",   "remove", "serve", "take", "turn-off", "wash"};
  const double theta = fx.config.recognition_threshold;
  const double scale = fx.config.scale;

  struct SplitPlan {
    Split split;
    const std::vector<std::string>* verbs;
    int mirc_level;
    std::size_t mircs;
    int sub_per_mirc;
    std::size_t scrambled;
    std::size_t scrambled_unrecognised;
  };
  const std::array<SplitPlan, 2> plans{{{Split::Easy, &easy_verbs, 2, 273, 4, 273, 200},
                                        {Split::Hard, &hard_verbs, 3, 402, 2, 201, 145}}};
  constexpr std::size_t kVideos = 18;
  for (const auto& plan : plans) {
    std::size_t scrambled_done = 0, unrec_done = 0;
    for (std::size_t v = 0; v < kVideos; ++v) {
      Clip clip;
      clip.clip_id = fmt::format("{}{:02}", plan.split == Split::Easy ? "easy" : "hard", v + 1);
      clip.split = plan.split;
      clip.verb_class = (*plan.verbs)[v % plan.verbs->size()];
      clip.gt_label = clip.verb_class + " object";
      clip.width = 456;
      clip.height = 256;
      clip.fps = 30;
      clip.frames.assign(60, std::string());
      fx.manifest.clips.push_back(clip);

      ReductionTree tree = init_tree(clip);
      tree.nodes.begin()->second.status = NodeStatus::Tested;
      tree.nodes.begin()->second.human_accuracy = 0.9;
      // Fully recognised levels above the MIRC level.
      for (int level = 0; level + 1 < plan.mirc_level; ++level)
        for (const auto& id : intact_at(tree, level))
          for (Corner c : kCorners) add_child(tree, tree.node(id), c, scale, NodeStatus::Tested, 0.8);

      const std::size_t quota = plan.mircs / kVideos + (v < plan.mircs % kVideos ? 1 : 0);
      // Deal MIRCs round-robin over parents so every parent keeps a recognised child.
      std::vector<std::string> parents = intact_at(tree, plan.mirc_level - 1);
      std::vector<std::pair<std::string, Corner>> slots;
      for (Corner c : kCorners)
        for (const auto& p : parents) slots.emplace_back(p, c);
      for (std::size_t s = 0; s < slots.size(); ++s) {
        const bool mirc = s < quota;
        QuadrantNode& m = add_child(tree, tree.node(slots[s].first), slots[s].second, scale, NodeStatus::Tested,
                                    mirc ? 0.7 : 0.3);
        if (!mirc) continue;
        const QuadrantNode parent = m;
        for (int k = 0; k < 4; ++k) {
          const bool tested = k < plan.sub_per_mirc;
          add_child(tree, parent, kCorners[static_cast<std::size_t>(k)], scale,
                    tested ? NodeStatus::Tested : NodeStatus::PrunedPresumedUnrecognisable,
                    tested ? std::optional<double>(0.2) : std::nullopt);
        }
        if (scrambled_done < plan.scrambled) {
          const bool unrec = unrec_done < plan.scrambled_unrecognised;
          const std::string sid = add_scrambled(tree, parent.node_id, make_plan(60, {3, 5, 1, 4, 2}), 1);
          tree.node(sid).status = NodeStatus::Tested;
          tree.node(sid).human_accuracy = unrec ? 0.3 : theta + 0.1;
          ++scrambled_done;
          unrec_done += unrec ? 1 : 0;
        }
      }
      tree.expanded_through = plan.mirc_level;
      label_mircs(tree, fx.config);
      fx.forest.emplace(clip.clip_id, std::move(tree));
    }
  }
  return fx;
}

}  // namespace mirc::synth
