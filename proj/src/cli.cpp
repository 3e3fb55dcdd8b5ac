#include "mirc/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

#include "mirc/csv.hpp"
#include "mirc/error.hpp"
#include "mirc/features.hpp"
#include "mirc/image_io.hpp"
#include "mirc/metrics.hpp"
#include "mirc/reduction.hpp"
#include "mirc/rng.hpp"
#include "mirc/scoring.hpp"
#include "mirc/service.hpp"
#include "mirc/summary.hpp"
#include "mirc/synth.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace mirc::cli {

namespace {

json read_json(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "file not found: " + path);
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path + ": " + e.what());
  }
}

void write_json(const std::string& path, const json& j) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  io::write_text_atomic(path, j.dump(1) + "\n");
}

void write_text(const std::string& path, const std::string& text) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  io::write_text_atomic(path, text);
}

std::string number(double v) { return fmt::format("{}", v); }
std::string number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

struct Settings {
  json config = json::object();
  std::uint64_t seed = 0;

  ReductionConfig reduction() const {
    return config.contains("reduction") ? reduction_config_from_json(config["reduction"]) : ReductionConfig{};
  }
  ScoringConfig scoring() const {
    if (!config.contains("scoring")) throw Error(ErrorKind::Usage, "config has no scoring section (use --config)");
    return scoring_config_from_json(config["scoring"]);
  }
  int catch_required() const { return config.value("catch_required_correct", 2); }
};

std::uint64_t parse_seed(const std::string& text, const char* source) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 0);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Usage, std::string(source) + ": not an unsigned integer: '" + text + "'");
  }
}

// Precedence: --seed, then MIRC_LAB_SEED, then the config file, then 0.
Settings load_settings(const std::string& config_path, const std::string& seed_flag) {
  Settings s;
  if (!config_path.empty()) s.config = read_json(config_path);
  if (!s.config.is_object()) throw Error(ErrorKind::Usage, "config must be a JSON object");
  if (s.config.contains("seed")) s.seed = s.config["seed"].get<std::uint64_t>();
  if (const char* env = std::getenv("MIRC_LAB_SEED"); env && *env) s.seed = parse_seed(env, "MIRC_LAB_SEED");
  if (!seed_flag.empty()) s.seed = parse_seed(seed_flag, "--seed");
  return s;
}

std::string seed_comment(std::uint64_t seed) { return fmt::format("# mirc-lab seed={}\n", seed); }

Forest load_forest(const std::string& path) { return forest_from_json(read_json(path)).forest; }

std::vector<ScoredResponse> load_scored(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "file not found: " + path);
  return read_scored_csv(path);
}

PairKind pair_kind_option(const std::string& s) {
  if (s == "mirc") return PairKind::MircSubMirc;
  if (s == "st") return PairKind::SpatiotemporalMircSubMirc;
  if (s == "all") return PairKind::AnyParentChild;
  throw Error(ErrorKind::Usage, "--kind must be mirc, st or all");
}

MeasureKind measure_option(const std::string& s) {
  if (s == "human") return MeasureKind::HumanAccuracy;
  if (s == "ai") return MeasureKind::ModelConfidence;
  throw Error(ErrorKind::Usage, "--measure must be human or ai");
}

// Deepest intact level of a tree and its nodes still awaiting responses.
std::pair<int, std::vector<std::string>> frontier(const ReductionTree& tree) {
  int level = 0;
  for (const auto& [id, n] : tree.nodes)
    if (!n.scrambled()) level = std::max(level, n.level);
  std::vector<std::string> waiting;
  for (const auto* n : tree.at_level(level))
    if (n->status == NodeStatus::Untested && !n->represented_by) waiting.push_back(n->node_id);
  return {level, waiting};
}

std::map<std::string, double> usable_accuracies(const std::vector<ScoredResponse>& scored, int required,
                                                std::ostream& out) {
  const auto excluded = failing_catch(scored, required);
  if (!excluded.empty()) out << "excluded participants (catch trials): " << excluded.size() << "\n";
  return accuracies_by_node(scored, excluded);
}

// ---- subcommands ----------------------------------------------------------

struct ReduceArgs {
  std::string manifest, trees, scored, out;
};

int cmd_reduce(const Settings& st, const ReduceArgs& a, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  const ReductionConfig config = st.reduction();
  config.validate();
  Forest forest;
  if (a.trees.empty()) {
    for (const Clip* c : manifest.clips_with_role(ClipRole::Test)) forest.emplace(c->clip_id, init_tree(*c));
    out << "initialised " << forest.size() << " trees at level 0\n";
  } else {
    if (a.scored.empty()) throw Error(ErrorKind::Usage, "reduce: --trees needs --scored");
    forest = load_forest(a.trees);
    const auto acc = usable_accuracies(load_scored(a.scored), st.catch_required(), out);
    for (auto& [clip, tree] : forest) {
      auto [level, waiting] = frontier(tree);
      if (waiting.empty() && tree.expanded_through >= level) {
        out << clip << ": frontier closed at level " << level << "\n";
        continue;
      }
      std::map<std::string, double> found;
      for (const auto& id : waiting) {
        auto it = acc.find(id);
        if (it == acc.end()) throw Error(ErrorKind::Integrity, "reduce: no responses for active node " + id);
        found[id] = it->second;
      }
      attach_accuracies(tree, found);
      const Expansion e = expand_level(tree, level, config);
      label_mircs(tree, config);
      out << fmt::format("{}: level {} -> {} selected, {} pruned, {} clustered, {} over budget\n", clip, level,
                         e.selected.size(), e.pruned.size(), e.clustered.size(), e.dropped_by_budget);
    }
  }
  write_json(a.out, forest_to_json(forest, st.seed, config));
  return 0;
}

struct ScrambleArgs {
  std::string manifest, trees, out, plans_out;
  bool all = false;
};

int cmd_scramble(const Settings& st, const ScrambleArgs& a, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  const ReductionConfig config = st.reduction();
  Forest forest = load_forest(a.trees);
  json plans = json::array();
  for (auto& [clip_id, tree] : forest) {
    label_mircs(tree, config);
    const Clip& clip = manifest.clip(clip_id);
    std::vector<std::string> sources;
    for (const auto& [id, n] : tree.nodes) {
      if (n.scrambled()) continue;
      if (a.all ? n.status == NodeStatus::Tested : is_mirc(n.mirc_role)) sources.push_back(id);
    }
    for (const auto& id : sources) {
      const ScramblePlan plan = node_scramble_plan(clip.frame_count(), id, st.seed);
      const std::string sid = add_scrambled(tree, id, plan, st.seed);
      plans.push_back({{"node_id", sid},
                       {"source_id", id},
                       {"plan", to_json(plan)},
                       {"frame_order", materialize(clip.frame_count(), plan)}});
    }
  }
  out << "scrambled " << plans.size() << " nodes\n";
  write_json(a.out, forest_to_json(forest, st.seed, config));
  if (!a.plans_out.empty()) write_json(a.plans_out, json{{"seed", st.seed}, {"plans", plans}});
  return 0;
}

struct ScoreArgs {
  std::string manifest, responses, out;
};

int cmd_score(const Settings& st, const ScoreArgs& a, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  const ScoringConfig config = st.scoring();
  const std::string responses_path = !a.responses.empty() ? a.responses : manifest.responses.value_or("");
  if (responses_path.empty()) throw Error(ErrorKind::Usage, "score: no --responses and none in the manifest");
  if (!manifest.embeddings) throw Error(ErrorKind::Integrity, "score: manifest lists no embedding tables");
  const EmbeddingTable sentence = load_embeddings(manifest.embeddings->sentence);
  const EmbeddingTable word = manifest.embeddings->word == manifest.embeddings->sentence
                                  ? sentence
                                  : load_embeddings(manifest.embeddings->word);
  std::optional<SpellCorrector> speller;
  if (manifest.dictionary) speller.emplace(load_dictionary(*manifest.dictionary), config.spell_max_edit_distance);

  const std::int64_t prompt_delay_ms = st.config.value("study", json::object()).value("prompt_delay_ms", 4000);
  std::vector<ScoredResponse> scored;
  std::size_t flagged = 0;
  for (const auto& r : load_responses(responses_path)) {
    const Clip& clip = manifest.clip(clip_of_node(r.node_id));
    ScoredResponse s = score_response(r, clip.gt_label, {&sentence, &word}, config, speller ? &*speller : nullptr);
    if (r.response_time_ms < prompt_delay_ms) s.flags |= kEarlyResponse;
    flagged += s.flags ? 1 : 0;
    scored.push_back(std::move(s));
  }
  std::ostringstream os;
  os << seed_comment(st.seed);
  write_scored_csv(os, scored);
  write_text(a.out, os.str());
  out << "scored " << scored.size() << " responses, " << flagged << " flagged\n";
  return 0;
}

struct LabelArgs {
  std::string manifest, trees, scored, confidences, out, pairs_out;
};

int cmd_label(const Settings& st, const LabelArgs& a, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  const ReductionConfig config = st.reduction();
  Forest forest = load_forest(a.trees);
  std::map<std::string, double> acc;
  if (!a.scored.empty()) acc = usable_accuracies(load_scored(a.scored), st.catch_required(), out);
  std::map<std::string, double> conf;
  const std::string conf_path = !a.confidences.empty() ? a.confidences : manifest.confidences.value_or("");
  if (!conf_path.empty())
    for (const auto& [id, rec] : load_confidences(conf_path, manifest)) conf[id] = rec.gt_verb_confidence;

  std::size_t mircs = 0, subs = 0, leaves = 0;
  for (auto& [clip, tree] : forest) {
    std::map<std::string, double> pending;
    for (const auto& [id, n] : tree.nodes) {
      if (n.status != NodeStatus::Untested || n.represented_by) continue;
      if (auto it = acc.find(id); it != acc.end()) pending[id] = it->second;
    }
    attach_accuracies(tree, pending);
    attach_confidences(tree, conf);
    const LabelReport r = label_mircs(tree, config);
    mircs += r.mircs.size();
    subs += r.sub_mircs.size();
    leaves += r.unresolved_leaves.size();
  }
  out << fmt::format("labelled {} MIRCs, {} sub-MIRCs, {} unresolved leaves\n", mircs, subs, leaves);
  write_json(a.out, forest_to_json(forest, st.seed, config));
  if (!a.pairs_out.empty()) write_json(a.pairs_out, to_json(extract_pair_set(forest, manifest), st.seed));
  return 0;
}

struct MetricsArgs {
  std::string pairs, out, measure = "human", kind = "mirc";
  std::vector<std::string> classes;
};

int cmd_metrics_rg(const Settings& st, const MetricsArgs& a, std::ostream& out) {
  const PairSet set = pair_set_from_json(read_json(a.pairs));
  const MeasureKind measure = measure_option(a.measure);
  const auto pairs = filter_pairs(set.pairs, pair_kind_option(a.kind), measure);
  json result{{"seed", st.seed}, {"kind", a.kind}};
  GapReport report;
  if (measure == MeasureKind::HumanAccuracy) {
    report = human_recognition_gap(pairs, a.classes);
    result["report"] = to_json(report, "Human");
  } else {
    const auto points = operating_points(set.mircs);
    report = ai_recognition_gap(pairs, points);
    result["report"] = to_json(report, "AI");
    json op = json::object();
    for (const auto& [verb, p] : points) op[verb] = to_json(p);
    result["operating_points"] = op;
  }
  for (const auto& [verb, g] : report.classes)
    out << fmt::format("{:<10} pairs {:>4}  RG {}\n", verb, g.pairs, g.mean ? fmt::format("{:+.2f}%", *g.mean * 100) : "n/a");
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  write_json(a.out, result);
  return 0;
}

int cmd_metrics_arr(const Settings& st, const MetricsArgs& a, std::ostream& out) {
  const PairSet set = pair_set_from_json(read_json(a.pairs));
  const auto pairs = filter_pairs(set.pairs, pair_kind_option(a.kind), measure_option(a.measure));
  const ReductionRateReport r = reduction_rate(pairs);
  std::vector<double> gaps;
  for (const auto& p : pairs) gaps.push_back(p.delta);
  json result{{"seed", st.seed}, {"kind", a.kind}, {"measure", a.measure}, {"report", to_json(r)},
              {"gap_statistics", to_json(gap_statistics(gaps))}};
  out << fmt::format("pairs {}  positive {}  ARR {}\n", r.pair_count, r.positive_count,
                     r.arr ? fmt::format("{:.4f}", *r.arr) : "n/a");
  write_json(a.out, result);
  return 0;
}

struct FeatureArgs {
  std::string manifest, trees, ratios, transitions, pairs, confidences, out;
  std::string direction = "failure", classifier = "human", method = "pearson", measure = "ai";
};

void write_ratio_csv(const std::string& path, std::uint64_t seed, const std::map<std::string, RatioRow>& rows) {
  std::ostringstream os;
  os << seed_comment(seed) << "node_id," << feature_header_csv() << "\n";
  for (const auto& [id, row] : rows) {
    csv::Row r{id};
    for (const auto& ratio : row) r.push_back(number(ratio.p));
    csv::write_row(os, r);
  }
  write_text(path, os.str());
}

RatioTable read_ratio_csv(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "file not found: " + path);
  const csv::Table t = csv::read_file(path);
  RatioTable table;
  const std::size_t cn = t.column("node_id");
  std::array<std::size_t, kFeatureCount> cols{};
  for (std::size_t f = 0; f < kFeatureCount; ++f) cols[f] = t.column(feature_name(static_cast<Feature>(f)));
  for (const auto& row : t.rows) {
    auto& entry = table[row[cn]];
    for (std::size_t f = 0; f < kFeatureCount; ++f) entry[f] = parse_optional(row[cols[f]]);
  }
  return table;
}

void write_transition_csv(const std::string& path, std::uint64_t seed, const std::vector<TransitionRecord>& ts) {
  std::ostringstream os;
  os << seed_comment(seed) << "parent_node_id,child_node_id,classifier,direction," << feature_header_csv() << "\n";
  for (const auto& t : ts) {
    csv::Row r{t.parent_node_id, t.child_node_id, std::string(classifier_name(t.classifier)),
               std::string(direction_name(t.direction))};
    for (const auto& d : t.delta) r.push_back(number(d));
    csv::write_row(os, r);
  }
  write_text(path, os.str());
}

std::vector<TransitionRecord> read_transition_csv(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "file not found: " + path);
  const csv::Table t = csv::read_file(path);
  const std::size_t cp = t.column("parent_node_id"), cc = t.column("child_node_id"), ck = t.column("classifier"),
                    cd = t.column("direction");
  std::vector<TransitionRecord> out;
  for (const auto& row : t.rows) {
    TransitionRecord r;
    r.parent_node_id = row[cp];
    r.child_node_id = row[cc];
    r.classifier = row[ck] == "AI" ? Classifier::AI : Classifier::Human;
    r.direction = row[cd] == "Recovery" ? Direction::Recovery : Direction::Failure;
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      r.delta[f] = parse_optional(row[t.column(feature_name(static_cast<Feature>(f)))]);
    out.push_back(std::move(r));
  }
  return out;
}

int cmd_features_ratios(const Settings& st, const FeatureArgs& a, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  const Forest forest = load_forest(a.trees);
  RatioCalculator calc(manifest);
  std::map<std::string, RatioRow> rows;
  for (const auto& [clip, tree] : forest)
    for (const auto& [id, n] : tree.nodes)
      if (n.status == NodeStatus::Tested) rows.emplace(id, calc.compute(n));
  write_ratio_csv(a.out, st.seed, rows);
  out << "retention ratios for " << rows.size() << " nodes\n";
  return 0;
}

int cmd_features_transitions(const Settings& st, const FeatureArgs& a, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(a.manifest);
  const Forest forest = load_forest(a.trees);
  const ReductionConfig config = st.reduction();
  const RatioTable ratios = read_ratio_csv(a.ratios);
  std::map<std::string, bool> ai;
  const std::string conf_path = !a.confidences.empty() ? a.confidences : manifest.confidences.value_or("");
  if (!conf_path.empty()) ai = model_correctness(load_confidences(conf_path, manifest), manifest);

  std::vector<TransitionRecord> all;
  for (const auto& [clip, tree] : forest) {
    auto human = detect_transitions(tree, human_correctness(tree, config.recognition_threshold), Classifier::Human);
    auto model = detect_transitions(tree, ai, Classifier::AI);
    all.insert(all.end(), human.begin(), human.end());
    all.insert(all.end(), model.begin(), model.end());
  }
  attach_deltas(all, ratios);
  write_transition_csv(a.out, st.seed, all);
  out << "transitions: " << all.size() << "\n";
  return 0;
}

Classifier classifier_option(const std::string& s) {
  if (s == "human") return Classifier::Human;
  if (s == "ai") return Classifier::AI;
  throw Error(ErrorKind::Usage, "--classifier must be human or ai");
}

Direction direction_option(const std::string& s) {
  if (s == "failure") return Direction::Failure;
  if (s == "recovery") return Direction::Recovery;
  throw Error(ErrorKind::Usage, "--direction must be failure or recovery");
}

int cmd_features_deltas(const Settings& st, const FeatureArgs& a, std::ostream& out) {
  const auto ts = read_transition_csv(a.transitions);
  json stats = json::array();
  for (Classifier c : {Classifier::Human, Classifier::AI}) {
    for (Direction d : {Direction::Failure, Direction::Recovery}) {
      const DeltaStats s = transition_delta_stats(ts, c, d);
      stats.push_back(to_json(s));
      out << fmt::format("{} {}: {} transitions\n", classifier_name(c), direction_name(d), s.transitions);
    }
  }
  write_json(a.out, json{{"seed", st.seed}, {"stats", stats}});
  return 0;
}

int cmd_features_correlate(const Settings& st, const FeatureArgs& a, std::ostream& out) {
  const auto all = read_transition_csv(a.transitions);
  const Classifier c = classifier_option(a.classifier);
  std::vector<TransitionRecord> ts;
  for (const auto& t : all)
    if (t.classifier == c) ts.push_back(t);
  const auto method = a.method == "spearman" ? CorrelationMethod::Spearman : CorrelationMethod::Pearson;
  if (a.method != "pearson" && a.method != "spearman") throw Error(ErrorKind::Usage, "--method must be pearson or spearman");
  const CorrelationMatrix m = correlation_matrix(ts, direction_option(a.direction), method);
  json rows = json::object();
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    json row = json::object();
    for (std::size_t j = 0; j < kFeatureCount; ++j)
      row[std::string(feature_name(static_cast<Feature>(j)))] = m.r[i][j] ? json(*m.r[i][j]) : json(nullptr);
    rows[std::string(feature_name(static_cast<Feature>(i)))] = row;
  }
  write_json(a.out, json{{"seed", st.seed},
                         {"classifier", a.classifier},
                         {"direction", a.direction},
                         {"method", a.method},
                         {"transitions", m.transitions},
                         {"matrix", rows}});
  out << "correlation over " << m.transitions << " transitions\n";
  return 0;
}

int cmd_features_temporal(const Settings& st, const FeatureArgs& a, std::ostream& out) {
  const PairSet set = pair_set_from_json(read_json(a.pairs));
  const auto pairs = filter_pairs(set.pairs, PairKind::SpatiotemporalMircSubMirc, measure_option(a.measure));
  std::vector<std::string> verbs;
  if (!a.manifest.empty()) verbs = load_manifest(a.manifest).verb_classes;
  else verbs = default_verb_classes();
  const TemporalCategoryStats s = temporal_category_stats(pairs, TemporalCategoryTable::standard(verbs));
  for (const auto& [c, count] : s.counts)
    out << fmt::format("{}: {}/{} improved ({}%)\n", temporal_category_name(c), count.improved, count.pairs,
                       percent_string(count.improved, count.pairs));
  json j = to_json(s);
  j["seed"] = st.seed;
  j["measure"] = a.measure;
  write_json(a.out, j);
  return 0;
}

int cmd_summarize(const Settings& st, const std::string& manifest_path, const std::string& trees,
                  const std::string& out_path, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const Forest forest = trees.empty() ? Forest{} : load_forest(trees);
  const DatasetSummary s = summarize(manifest, forest, st.reduction());
  out << fmt::format("{:<6} {:>6} {:>8} {:>6} {:>12} {:>16}\n", "Split", "Videos", "Samples", "MIRCs", "Sub-MIRCs",
                     "Spatiotemporal");
  for (const auto& [split, v] : s.splits)
    out << fmt::format("{:<6} {:>6} {:>8} {:>6} {:>12} {:>16}\n", split_name(split), v.videos, v.samples, v.mircs,
                       v.spatial_sub_mircs, fmt::format("{} ({})", v.spatiotemporal_quadrants, v.spatiotemporal_unrecognisable));
  out << fmt::format("unrecognisable after scrambling: {}/{} = {:.2f}%\n", s.spatiotemporal_unrecognisable_total(),
                     s.spatiotemporal_total(), percent2(s.unrecognisable_fraction()));
  if (!out_path.empty()) {
    json j = to_json(s);
    j["seed"] = st.seed;
    write_json(out_path, j);
  }
  return 0;
}

int cmd_synth(const Settings& st, const std::string& out_dir, bool table1, std::ostream& out) {
  if (table1) {
    const auto fx = synth::table1_fixture();
    json clips = json::array();
    for (const auto& c : fx.manifest.clips)
      clips.push_back({{"clip_id", c.clip_id},
                       {"split", split_name(c.split)},
                       {"verb_class", c.verb_class},
                       {"gt_label", c.gt_label},
                       {"frame_dir", "frames/" + c.clip_id},
                       {"frame_count", c.frame_count()},
                       {"width", c.width},
                       {"height", c.height},
                       {"fps", c.fps}});
    write_json((fs::path(out_dir) / "manifest.json").string(), json{{"verb_classes", fx.manifest.verb_classes}, {"clips", clips}});
    write_json((fs::path(out_dir) / "trees.json").string(), forest_to_json(fx.forest, st.seed, fx.config));
    out << "wrote Table-1 fixture to " << out_dir << "\n";
    return 0;
  }
  const auto info = synth::write_mini_dataset(out_dir, st.seed);
  out << "wrote mini dataset: " << info.manifest.string() << "\n";
  return 0;
}

int cmd_serve(const Settings& st, const std::string& data_dir, const std::string& host, int port, std::ostream& out) {
  service::Service svc(data_dir);
  httplib::Server server;
  svc.mount(server);
  int bound = port;
  if (port == 0) bound = server.bind_to_any_port(host);
  else if (!server.bind_to_port(host, port)) throw Error(ErrorKind::Io, fmt::format("cannot bind {}:{}", host, port));
  out << fmt::format("mirc-lab serving /v1 on http://{}:{} (seed {})", host, bound, st.seed) << std::endl;
  server.listen_after_bind();
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mirc-lab: reduction, scrambling, scoring and analysis for minimal recognisable video configurations",
               "mirc-lab"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, seed_flag;
  app.add_option("--config", config_path, "JSON config with seed, reduction, scoring and study sections");
  app.add_option("--seed", seed_flag, "root seed (overrides MIRC_LAB_SEED and the config)");

  ReduceArgs ra;
  auto* reduce = app.add_subcommand("reduce", "initialise trees or run one reduction step from scored responses");
  reduce->add_option("--manifest", ra.manifest)->required();
  reduce->add_option("--trees", ra.trees, "trees to advance; omit to initialise");
  reduce->add_option("--scored", ra.scored, "scored responses for the current frontier");
  reduce->add_option("--out", ra.out)->required();

  ScrambleArgs sa;
  auto* scramble = app.add_subcommand("scramble", "add temporally scrambled variants of MIRCs");
  scramble->add_option("--manifest", sa.manifest)->required();
  scramble->add_option("--trees", sa.trees)->required();
  scramble->add_option("--out", sa.out)->required();
  scramble->add_option("--plans-out", sa.plans_out);
  scramble->add_flag("--all-tested", sa.all, "scramble every tested intact node, not only MIRCs");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "clean and score free-text responses");
  score->add_option("--manifest", sc.manifest)->required();
  score->add_option("--responses", sc.responses);
  score->add_option("--out", sc.out)->required();

  LabelArgs la;
  auto* label = app.add_subcommand("mirc-label", "attach accuracies and confidences, label MIRCs, export pairs");
  label->add_option("--manifest", la.manifest)->required();
  label->add_option("--trees", la.trees)->required();
  label->add_option("--scored", la.scored);
  label->add_option("--confidences", la.confidences);
  label->add_option("--out", la.out)->required();
  label->add_option("--pairs-out", la.pairs_out);

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "recognition gap and average reduction rate");
  metrics->require_subcommand(1);
  auto* rg = metrics->add_subcommand("rg", "per-class recognition gap");
  auto* arr = metrics->add_subcommand("arr", "average reduction rate and histogram");
  for (auto* sub : {rg, arr}) {
    sub->add_option("--pairs", ma.pairs)->required();
    sub->add_option("--measure", ma.measure, "human or ai");
    sub->add_option("--kind", ma.kind, "mirc, st or all");
    sub->add_option("--out", ma.out)->required();
  }
  rg->add_option("--classes", ma.classes, "classes expected in the report");

  FeatureArgs fa;
  auto* features = app.add_subcommand("features", "retention ratios, transitions, correlations, LTA/HTA");
  features->require_subcommand(1);
  auto* f_ratios = features->add_subcommand("ratios", "retention ratio per tested node and feature");
  f_ratios->add_option("--manifest", fa.manifest)->required();
  f_ratios->add_option("--trees", fa.trees)->required();
  f_ratios->add_option("--out", fa.out)->required();
  auto* f_trans = features->add_subcommand("transitions", "prediction flips with per-feature deltas");
  f_trans->add_option("--manifest", fa.manifest)->required();
  f_trans->add_option("--trees", fa.trees)->required();
  f_trans->add_option("--ratios", fa.ratios)->required();
  f_trans->add_option("--confidences", fa.confidences);
  f_trans->add_option("--out", fa.out)->required();
  auto* f_deltas = features->add_subcommand("deltas", "mean delta per feature by classifier and direction");
  f_deltas->add_option("--transitions", fa.transitions)->required();
  f_deltas->add_option("--out", fa.out)->required();
  auto* f_corr = features->add_subcommand("correlate", "feature correlation matrix over transitions");
  f_corr->add_option("--transitions", fa.transitions)->required();
  f_corr->add_option("--classifier", fa.classifier);
  f_corr->add_option("--direction", fa.direction);
  f_corr->add_option("--method", fa.method);
  f_corr->add_option("--out", fa.out)->required();
  auto* f_temp = features->add_subcommand("temporal", "LTA/HTA improvement proportions and t-tests");
  f_temp->add_option("--pairs", fa.pairs)->required();
  f_temp->add_option("--manifest", fa.manifest);
  f_temp->add_option("--measure", fa.measure, "human or ai");
  f_temp->add_option("--out", fa.out)->required();

  std::string sum_manifest, sum_trees, sum_out;
  auto* summ = app.add_subcommand("summarize", "per-split dataset counts");
  summ->add_option("--manifest", sum_manifest)->required();
  summ->add_option("--trees", sum_trees);
  summ->add_option("--out", sum_out);

  std::string synth_out;
  bool synth_table1 = false;
  auto* synth = app.add_subcommand("synth", "write synthetic fixtures");
  synth->add_option("--out", synth_out)->required();
  synth->add_flag("--table1", synth_table1, "write the dataset-summary fixture instead of the mini dataset");

  std::string data_dir = "mirc-data", host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the experiment service");
  serve->add_option("--data-dir", data_dir);
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 2;
  }

  try {
    const Settings st = load_settings(config_path, seed_flag);
    if (*reduce) return cmd_reduce(st, ra, out);
    if (*scramble) return cmd_scramble(st, sa, out);
    if (*score) return cmd_score(st, sc, out);
    if (*label) return cmd_label(st, la, out);
    if (*rg) return cmd_metrics_rg(st, ma, out);
    if (*arr) return cmd_metrics_arr(st, ma, out);
    if (*f_ratios) return cmd_features_ratios(st, fa, out);
    if (*f_trans) return cmd_features_transitions(st, fa, out);
    if (*f_deltas) return cmd_features_deltas(st, fa, out);
    if (*f_corr) return cmd_features_correlate(st, fa, out);
    if (*f_temp) return cmd_features_temporal(st, fa, out);
    if (*summ) return cmd_summarize(st, sum_manifest, sum_trees, sum_out, out);
    if (*synth) return cmd_synth(st, synth_out, synth_table1, out);
    if (*serve) return cmd_serve(st, data_dir, host, port, out);
  } catch (const Error& e) {
    err << "error [" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return e.kind() == ErrorKind::Usage ? 2 : 1;
  } catch (const json::exception& e) {
    err << "error [Parse]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace mirc::cli
