#include "mirc/service.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <numeric>

#include <httplib.h>

#include "mirc/image_io.hpp"
#include "mirc/rng.hpp"
#include "mirc/scramble.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace mirc::service {

void StudyConfig::validate() const {
  if (practice_count < 0 || catch_count < 0) throw Error(ErrorKind::Usage, "study: trial counts must be >= 0");
  if (catch_required_correct < 0 || catch_required_correct > catch_count)
    throw Error(ErrorKind::Usage, "study: catch_required_correct must lie in [0, catch_count]");
  if (quota < 1) throw Error(ErrorKind::Usage, "study: quota must be >= 1");
  if (fixation_ms < 0 || prompt_delay_ms < 0) throw Error(ErrorKind::Usage, "study: timings must be >= 0");
  if (max_set_size < 1) throw Error(ErrorKind::Usage, "study: max_set_size must be >= 1");
  reduction.validate();
  scoring.validate();
}

StudyConfig study_config_from_json(const json& j) {
  StudyConfig c;
  if (!j.is_object()) throw Error(ErrorKind::Usage, "study config must be an object");
  c.practice_count = j.value("practice_count", c.practice_count);
  c.catch_count = j.value("catch_count", c.catch_count);
  c.catch_required_correct = j.value("catch_required_correct", c.catch_count);
  c.quota = j.value("quota", c.quota);
  c.fixation_ms = j.value("fixation_ms", c.fixation_ms);
  c.prompt_delay_ms = j.value("prompt_delay_ms", c.prompt_delay_ms);
  c.max_set_size = j.value("max_set_size", c.max_set_size);
  c.loop = j.value("loop", c.loop);
  c.seed = j.value("seed", c.seed);
  if (auto it = j.find("reduction"); it != j.end()) c.reduction = reduction_config_from_json(*it);
  if (auto it = j.find("scoring"); it != j.end()) c.scoring = scoring_config_from_json(*it);
  else throw Error(ErrorKind::Usage, "study config: missing scoring section");
  c.reduction.recognition_threshold = j.value("advancement_threshold", c.reduction.recognition_threshold);
  c.validate();
  return c;
}

json to_json(const StudyConfig& c) {
  return json{{"practice_count", c.practice_count},
              {"catch_count", c.catch_count},
              {"catch_required_correct", c.catch_required_correct},
              {"quota", c.quota},
              {"fixation_ms", c.fixation_ms},
              {"prompt_delay_ms", c.prompt_delay_ms},
              {"max_set_size", c.max_set_size},
              {"loop", c.loop},
              {"seed", c.seed},
              {"reduction", mirc::to_json(c.reduction)},
              {"scoring", mirc::to_json(c.scoring)}};
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Spatial: return "spatial";
    case Phase::Spatiotemporal: return "spatiotemporal";
    case Phase::Done: return "done";
  }
  return "?";
}

std::vector<Trial> build_trial_order(const std::vector<std::string>& practice, const std::vector<std::string>& main,
                                     const std::vector<std::string>& catches, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trial> body;
  for (const auto& id : main) body.push_back({id, TrialKind::Main});
  for (std::size_t i = body.size(); i > 1; --i) std::swap(body[i - 1], body[rng.below(i)]);
  for (const auto& id : catches) {
    const auto pos = static_cast<std::ptrdiff_t>(rng.below(body.size() + 1));
    body.insert(body.begin() + pos, Trial{id, TrialKind::Catch});
  }
  std::vector<Trial> out;
  for (const auto& id : practice) out.push_back({id, TrialKind::Practice});
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::vector<std::vector<std::string>> partition_stimulus_sets(std::vector<StimulusNode> nodes,
                                                              std::size_t max_set_size) {
  if (nodes.empty()) return {};
  std::sort(nodes.begin(), nodes.end(), [](const StimulusNode& a, const StimulusNode& b) {
    return std::tie(a.split, a.verb_class, a.clip_id, a.node_id) <
           std::tie(b.split, b.verb_class, b.clip_id, b.node_id);
  });
  std::map<std::string, std::size_t> per_clip;
  std::size_t widest = 0;
  for (const auto& n : nodes) widest = std::max(widest, ++per_clip[n.clip_id]);
  const std::size_t count = std::max(widest, (nodes.size() + max_set_size - 1) / max_set_size);

  std::vector<std::vector<std::string>> sets(count);
  std::vector<std::set<std::string>> clips(count);
  for (const auto& n : nodes) {
    std::size_t best = count;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      if (clips[s].count(n.clip_id)) continue;
      if (best == count || sets[s].size() < sets[best].size()) best = s;
    }
    if (best == count) {
      best = sets.size();
      sets.emplace_back();
      clips.emplace_back();
    }
    sets[best].push_back(n.node_id);
    clips[best].insert(n.clip_id);
  }
  return sets;
}

Study::Study(std::string study_id, fs::path manifest_path, StudyConfig config)
    : id_(std::move(study_id)), manifest_path_(std::move(manifest_path)), config_(std::move(config)) {
  config_.validate();
  manifest_ = load_manifest(manifest_path_);
  const auto practice = manifest_.clips_with_role(ClipRole::Practice);
  const auto catches = manifest_.clips_with_role(ClipRole::Catch);
  const auto tests = manifest_.clips_with_role(ClipRole::Test);
  if (practice.size() < static_cast<std::size_t>(config_.practice_count))
    throw Error(ErrorKind::Setup, "study: manifest has " + std::to_string(practice.size()) + " practice clips, need " +
                                      std::to_string(config_.practice_count));
  if (catches.size() < static_cast<std::size_t>(config_.catch_count))
    throw Error(ErrorKind::Setup, "study: manifest has " + std::to_string(catches.size()) + " catch clips, need " +
                                      std::to_string(config_.catch_count));
  if (tests.empty()) throw Error(ErrorKind::Setup, "study: manifest has no test clips");
  load_resources();
  for (const Clip* c : tests) {
    forest_.emplace(c->clip_id, init_tree(*c));
    phases_[c->clip_id] = Phase::Spatial;
  }
  rebuild_sets();
}

void Study::load_resources() {
  if (!manifest_.embeddings) throw Error(ErrorKind::Setup, "study: manifest lists no embedding tables");
  sentence_ = load_embeddings(manifest_.embeddings->sentence);
  word_ = manifest_.embeddings->word == manifest_.embeddings->sentence ? sentence_
                                                                      : load_embeddings(manifest_.embeddings->word);
  if (manifest_.dictionary)
    speller_ = std::make_unique<SpellCorrector>(load_dictionary(*manifest_.dictionary),
                                                config_.scoring.spell_max_edit_distance);
}

const QuadrantNode* Study::find_node(const std::string& node_id) const {
  auto it = forest_.find(clip_of_node(node_id));
  return it == forest_.end() ? nullptr : it->second.find(node_id);
}

std::string Study::gt_label_of(const std::string& node_id) const {
  return manifest_.clip(clip_of_node(node_id)).gt_label;
}

std::vector<std::string> Study::active_nodes(const std::string& clip_id) const {
  std::vector<std::string> out;
  const Phase phase = phases_.at(clip_id);
  if (phase == Phase::Done) return out;
  for (const auto& [id, n] : forest_.at(clip_id).nodes) {
    if (n.status != NodeStatus::Untested || n.represented_by) continue;
    if (n.scrambled() == (phase == Phase::Spatiotemporal)) out.push_back(id);
  }
  return out;
}

std::map<std::string, std::size_t> Study::response_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& [sid, s] : sessions_) {
    if (s.excluded) continue;
    for (const auto& r : s.responses)
      if (r.trial_kind == TrialKind::Main) ++counts[r.node_id];
  }
  return counts;
}

std::set<std::string> Study::excluded_participants() const {
  std::set<std::string> out;
  for (const auto& [sid, s] : sessions_)
    if (s.excluded) out.insert(s.participant_id);
  return out;
}

void Study::rebuild_sets() {
  const auto counts = response_counts();
  std::vector<StimulusNode> nodes;
  for (const auto& [clip_id, tree] : forest_) {
    const Clip& clip = manifest_.clip(clip_id);
    for (const auto& id : active_nodes(clip_id)) {
      auto it = counts.find(id);
      if (it != counts.end() && it->second >= static_cast<std::size_t>(config_.quota)) continue;
      nodes.push_back({id, clip_id, clip.split, clip.verb_class});
    }
  }
  sets_ = partition_stimulus_sets(std::move(nodes), config_.max_set_size);
}

Session& Study::add_participant(const std::string& participant_id) {
  if (participant_id.empty()) throw Error(ErrorKind::Usage, "participant_id must be non-empty");
  for (const auto& [sid, s] : sessions_)
    if (s.participant_id == participant_id)
      throw Error(ErrorKind::Conflict, "participant " + participant_id + " already has session " + sid);

  Session s;
  s.session_id = id_ + ".s" + std::to_string(++participants_seen_);
  s.participant_id = participant_id;
  s.seed = derive_seed(config_.seed, id_ + "/" + participant_id);

  std::vector<std::string> practice, catches, main;
  for (const Clip* c : manifest_.clips_with_role(ClipRole::Practice))
    if (practice.size() < static_cast<std::size_t>(config_.practice_count)) practice.push_back(make_node_id(c->clip_id, 0, {}));
  for (const Clip* c : manifest_.clips_with_role(ClipRole::Catch))
    if (catches.size() < static_cast<std::size_t>(config_.catch_count)) catches.push_back(make_node_id(c->clip_id, 0, {}));
  if (!sets_.empty()) {
    s.stimulus_set = (participants_seen_ - 1) % sets_.size();
    main = sets_[s.stimulus_set];
  }
  s.trials = build_trial_order(practice, main, catches, s.seed);
  const std::string sid = s.session_id;
  return sessions_.emplace(sid, std::move(s)).first->second;
}

const Session& Study::session(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "unknown session " + session_id);
  return it->second;
}

Session& Study::session(const std::string& session_id) {
  return const_cast<Session&>(std::as_const(*this).session(session_id));
}

const ScoredResponse& Study::submit(const std::string& session_id, const std::string& node_id,
                                    const std::string& raw_text, std::int64_t response_time_ms) {
  Session& s = session(session_id);
  if (s.excluded) throw Error(ErrorKind::Sequencing, "session " + session_id + " is excluded");
  for (std::size_t i = 0; i < s.cursor; ++i)
    if (s.trials[i].node_id == node_id)
      throw Error(ErrorKind::Conflict, "response for " + node_id + " already recorded");
  if (s.done()) throw Error(ErrorKind::Sequencing, "session " + session_id + " is complete");
  const Trial& trial = s.trials[s.cursor];
  if (trial.node_id != node_id)
    throw Error(ErrorKind::Sequencing, "expected a response for " + trial.node_id + ", got " + node_id);

  ResponseRecord rec{s.participant_id, node_id, raw_text, response_time_ms, trial.kind};
  EmbeddingTables tables{&sentence_, &word_};
  ScoredResponse scored = score_response(rec, gt_label_of(node_id), tables, config_.scoring, speller_.get());
  if (response_time_ms < config_.prompt_delay_ms) scored.flags |= kEarlyResponse;
  s.responses.push_back(std::move(scored));
  s.response_times.push_back(response_time_ms);
  ++s.cursor;

  if (trial.kind == TrialKind::Catch) {
    const auto catch_total = std::count_if(s.trials.begin(), s.trials.end(),
                                           [](const Trial& t) { return t.kind == TrialKind::Catch; });
    const auto answered = std::count_if(s.responses.begin(), s.responses.end(),
                                        [](const ScoredResponse& r) { return r.trial_kind == TrialKind::Catch; });
    if (answered == catch_total)
      s.excluded = failing_catch(s.responses, config_.catch_required_correct).count(s.participant_id) > 0;
  }
  return s.responses.back();
}

std::vector<std::string> Study::advance(const std::string& clip_id) {
  auto tit = forest_.find(clip_id);
  if (tit == forest_.end()) throw Error(ErrorKind::NotFound, "study has no clip " + clip_id);
  ReductionTree& tree = tit->second;
  Phase& phase = phases_.at(clip_id);
  if (phase == Phase::Done) throw Error(ErrorKind::NotReady, "clip " + clip_id + " has finished");

  const auto active = active_nodes(clip_id);
  const auto counts = response_counts();
  for (const auto& id : active) {
    auto it = counts.find(id);
    const std::size_t have = it == counts.end() ? 0 : it->second;
    if (have < static_cast<std::size_t>(config_.quota))
      throw Error(ErrorKind::NotReady, "node " + id + " has " + std::to_string(have) + " of " +
                                           std::to_string(config_.quota) + " responses");
  }

  std::vector<ScoredResponse> responses;
  for (const auto& [sid, s] : sessions_) {
    if (s.excluded) continue;
    for (const auto& r : s.responses)
      if (r.trial_kind == TrialKind::Main && clip_of_node(r.node_id) == clip_id) responses.push_back(r);
  }
  const auto all = accuracies_by_node(responses, {});
  std::map<std::string, double> acc;
  for (const auto& id : active) acc[id] = all.at(id);
  attach_accuracies(tree, acc);

  std::vector<std::string> activated;
  if (phase == Phase::Spatial) {
    int level = 0;
    for (const auto& [id, n] : tree.nodes)
      if (!n.scrambled() && n.status != NodeStatus::Untested) level = std::max(level, n.level);
    for (const auto& id : active) level = std::max(level, tree.node(id).level);
    const Expansion e = expand_level(tree, level, config_.reduction);
    for (const auto& n : e.selected) activated.push_back(n.node_id);
    if (activated.empty()) {
      const LabelReport report = label_mircs(tree, config_.reduction);
      const Clip& clip = manifest_.clip(clip_id);
      for (const auto& mid : report.mircs) {
        const ScramblePlan plan = node_scramble_plan(clip.frame_count(), mid, config_.seed);
        activated.push_back(add_scrambled(tree, mid, plan, config_.seed));
      }
      phase = activated.empty() ? Phase::Done : Phase::Spatiotemporal;
    }
  } else {
    label_mircs(tree, config_.reduction);
    phase = Phase::Done;
  }
  rebuild_sets();
  return activated;
}

json Study::trial_descriptor(const Session& s) const {
  if (s.excluded) return json{{"status", "excluded"}, {"session_id", s.session_id}};
  if (s.done()) return json{{"status", "done"}, {"session_id", s.session_id}};
  const Trial& t = s.trials[s.cursor];
  const Clip& clip = manifest_.clip(clip_of_node(t.node_id));
  CropRect rect = clip.full_rect();
  std::vector<std::size_t> order(clip.frame_count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (const QuadrantNode* n = find_node(t.node_id)) {
    rect = n->rect;
    if (n->scramble) order = materialize(clip.frame_count(), *n->scramble);
  }
  json frames = json::array();
  for (std::size_t f : order) frames.push_back("/v1/studies/" + id_ + "/media/" + clip.clip_id + "/" + std::to_string(f));
  return json{{"status", "trial"},
              {"session_id", s.session_id},
              {"index", s.cursor},
              {"total", s.trials.size()},
              {"node_id", t.node_id},
              {"practice", t.kind == TrialKind::Practice},
              {"timing", {{"fixation_ms", config_.fixation_ms}, {"prompt_delay_ms", config_.prompt_delay_ms}}},
              {"loop", config_.loop},
              {"media",
               {{"fps", clip.fps},
                {"frame_size", {clip.width, clip.height}},
                {"crop", {{"x", rect.x}, {"y", rect.y}, {"w", rect.w}, {"h", rect.h}}},
                {"frames", frames}}}};
}

json Study::progress() const {
  const auto counts = response_counts();
  json clips = json::array();
  for (const auto& [clip_id, tree] : forest_) {
    json active = json::array();
    bool ready = phases_.at(clip_id) != Phase::Done;
    for (const auto& id : active_nodes(clip_id)) {
      auto it = counts.find(id);
      const std::size_t have = it == counts.end() ? 0 : it->second;
      ready = ready && have >= static_cast<std::size_t>(config_.quota);
      active.push_back({{"node_id", id}, {"responses", have}});
    }
    clips.push_back({{"clip_id", clip_id},
                     {"phase", phase_name(phases_.at(clip_id))},
                     {"ready", ready},
                     {"quota", config_.quota},
                     {"active", active}});
  }
  json sets = json::array();
  for (const auto& s : sets_) sets.push_back(s.size());
  std::size_t excluded = 0, complete = 0;
  for (const auto& [sid, s] : sessions_) {
    excluded += s.excluded ? 1 : 0;
    complete += s.done() ? 1 : 0;
  }
  return json{{"study_id", id_},
              {"participants", sessions_.size()},
              {"excluded", excluded},
              {"complete", complete},
              {"stimulus_sets", sets},
              {"clips", clips}};
}

namespace {

json to_json(const ScoredResponse& r) {
  return json{{"participant_id", r.participant_id},
              {"node_id", r.node_id},
              {"trial_kind", trial_kind_name(r.trial_kind)},
              {"cleaned_text", r.cleaned_text},
              {"cs", r.cs},
              {"cs_action", r.cs_action},
              {"cs_object", r.cs_object},
              {"s_sim", r.s_sim},
              {"correct", r.correct},
              {"flags", r.flags}};
}

ScoredResponse scored_from_json(const json& j) {
  ScoredResponse r;
  r.participant_id = j.at("participant_id").get<std::string>();
  r.node_id = j.at("node_id").get<std::string>();
  r.trial_kind = *parse_trial_kind(j.at("trial_kind").get<std::string>());
  r.cleaned_text = j.at("cleaned_text").get<std::string>();
  r.cs = j.at("cs").get<double>();
  r.cs_action = j.at("cs_action").get<double>();
  r.cs_object = j.at("cs_object").get<double>();
  r.s_sim = j.at("s_sim").get<double>();
  r.correct = j.at("correct").get<bool>();
  r.flags = j.at("flags").get<std::uint32_t>();
  return r;
}

}  // namespace

json Study::snapshot() const {
  json sessions = json::array();
  for (const auto& [sid, s] : sessions_) {
    json trials = json::array();
    for (const auto& t : s.trials) trials.push_back({{"node_id", t.node_id}, {"kind", trial_kind_name(t.kind)}});
    json responses = json::array();
    for (const auto& r : s.responses) responses.push_back(to_json(r));
    sessions.push_back({{"session_id", s.session_id},
                        {"participant_id", s.participant_id},
                        {"stimulus_set", s.stimulus_set},
                        {"seed", s.seed},
                        {"trials", trials},
                        {"cursor", s.cursor},
                        {"excluded", s.excluded},
                        {"responses", responses},
                        {"response_times", s.response_times}});
  }
  json phases = json::object();
  for (const auto& [c, p] : phases_) phases[c] = phase_name(p);
  return json{{"study_id", id_},
              {"manifest", manifest_path_.string()},
              {"config", to_json(config_)},
              {"forest", forest_to_json(forest_, config_.seed, config_.reduction)},
              {"phases", phases},
              {"stimulus_sets", sets_},
              {"participants_seen", participants_seen_},
              {"sessions", sessions}};
}

std::unique_ptr<Study> Study::restore(const json& j) {
  std::unique_ptr<Study> s(new Study());
  s->id_ = j.at("study_id").get<std::string>();
  s->manifest_path_ = j.at("manifest").get<std::string>();
  s->config_ = study_config_from_json(j.at("config"));
  s->manifest_ = load_manifest(s->manifest_path_);
  s->load_resources();
  s->forest_ = forest_from_json(j.at("forest")).forest;
  for (const auto& [c, p] : j.at("phases").items()) {
    const std::string name = p.get<std::string>();
    s->phases_[c] = name == "spatial" ? Phase::Spatial : name == "spatiotemporal" ? Phase::Spatiotemporal : Phase::Done;
  }
  s->sets_ = j.at("stimulus_sets").get<std::vector<std::vector<std::string>>>();
  s->participants_seen_ = j.at("participants_seen").get<std::size_t>();
  for (const auto& js : j.at("sessions")) {
    Session ses;
    ses.session_id = js.at("session_id").get<std::string>();
    ses.participant_id = js.at("participant_id").get<std::string>();
    ses.stimulus_set = js.at("stimulus_set").get<std::size_t>();
    ses.seed = js.at("seed").get<std::uint64_t>();
    for (const auto& t : js.at("trials"))
      ses.trials.push_back({t.at("node_id").get<std::string>(), *parse_trial_kind(t.at("kind").get<std::string>())});
    ses.cursor = js.at("cursor").get<std::size_t>();
    ses.excluded = js.at("excluded").get<bool>();
    for (const auto& r : js.at("responses")) ses.responses.push_back(scored_from_json(r));
    ses.response_times = js.at("response_times").get<std::vector<std::int64_t>>();
    s->sessions_.emplace(ses.session_id, std::move(ses));
  }
  return s;
}

Service::Service(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  fs::create_directories(data_dir_);
  for (const auto& entry : fs::directory_iterator(data_dir_)) {
    const fs::path snap = entry.path() / "snapshot.json";
    if (!entry.is_directory() || !fs::exists(snap)) continue;
    auto study = Study::restore(json::parse(io::read_text(snap.string())));
    const std::string& id = study->id();
    if (id.rfind("study-", 0) == 0) next_study_ = std::max(next_study_, std::stoul(id.substr(6)) + 1);
    studies_.emplace(id, std::move(study));
  }
}

Study& Service::study(const std::string& id) {
  auto it = studies_.find(id);
  if (it == studies_.end()) throw Error(ErrorKind::NotFound, "unknown study " + id);
  return *it->second;
}

const Study& Service::study(const std::string& id) const {
  return const_cast<Service*>(this)->study(id);
}

Study& Service::study_of_session(const std::string& session_id, std::string* study_id) {
  const auto dot = session_id.rfind('.');
  if (dot == std::string::npos) throw Error(ErrorKind::NotFound, "unknown session " + session_id);
  const std::string sid = session_id.substr(0, dot);
  if (study_id) *study_id = sid;
  auto it = studies_.find(sid);
  if (it == studies_.end()) throw Error(ErrorKind::NotFound, "unknown session " + session_id);
  return *it->second;
}

const Study& Service::study_of_session(const std::string& session_id) const {
  return const_cast<Service*>(this)->study_of_session(session_id);
}

void Service::log_event(const Study& s, const json& event) {
  const fs::path dir = data_dir_ / s.id();
  fs::create_directories(dir);
  std::ofstream out(dir / "events.jsonl", std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "cannot append to event log of " + s.id());
}

void Service::persist(const Study& s) {
  const fs::path dir = data_dir_ / s.id();
  fs::create_directories(dir);
  io::write_text_atomic((dir / "snapshot.json").string(), s.snapshot().dump(1));
}

json Service::create_study(const json& body) {
  if (!body.is_object() || !body.contains("manifest") || !body["manifest"].is_string())
    throw Error(ErrorKind::Usage, "body needs a manifest path");
  StudyConfig config = study_config_from_json(body.value("config", json::object()));
  std::unique_lock lock(mutex_);
  const std::string id = "study-" + std::to_string(next_study_);
  auto s = std::make_unique<Study>(id, fs::path(body["manifest"].get<std::string>()), config);
  ++next_study_;
  Study& ref = *s;
  studies_.emplace(id, std::move(s));
  log_event(ref, {{"event", "create_study"}, {"study_id", id}, {"manifest", body["manifest"]}, {"config", to_json(config)}});
  persist(ref);
  json sets = json::array();
  for (const auto& set : ref.stimulus_sets()) sets.push_back(set.size());
  return json{{"study_id", id}, {"seed", config.seed}, {"stimulus_sets", sets}};
}

json Service::add_participant(const std::string& study_id, const json& body) {
  if (!body.is_object() || !body.contains("participant_id") || !body["participant_id"].is_string())
    throw Error(ErrorKind::Usage, "body needs participant_id");
  std::unique_lock lock(mutex_);
  Study& s = study(study_id);
  const Session& ses = s.add_participant(body["participant_id"].get<std::string>());
  log_event(s, {{"event", "add_participant"}, {"session_id", ses.session_id}, {"participant_id", ses.participant_id}});
  persist(s);
  return json{{"session_id", ses.session_id}, {"stimulus_set", ses.stimulus_set}, {"trials", ses.trials.size()}};
}

json Service::next_trial(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const Study& s = study_of_session(session_id);
  return s.trial_descriptor(s.session(session_id));
}

json Service::submit_response(const std::string& session_id, const json& body) {
  if (!body.is_object() || !body.contains("node_id") || !body["node_id"].is_string() || !body.contains("raw_text") ||
      !body["raw_text"].is_string() || !body.contains("response_time_ms") || !body["response_time_ms"].is_number_integer())
    throw Error(ErrorKind::Usage, "body needs node_id, raw_text and integer response_time_ms");
  std::unique_lock lock(mutex_);
  Study& s = study_of_session(session_id);
  const ScoredResponse& r = s.submit(session_id, body["node_id"].get<std::string>(), body["raw_text"].get<std::string>(),
                                     body["response_time_ms"].get<std::int64_t>());
  const Session& ses = s.session(session_id);
  log_event(s, {{"event", "response"},
                {"session_id", session_id},
                {"node_id", r.node_id},
                {"raw_text", body["raw_text"]},
                {"response_time_ms", body["response_time_ms"]},
                {"correct", r.correct},
                {"flags", flags_string(r.flags)}});
  if (ses.excluded) log_event(s, {{"event", "excluded"}, {"session_id", session_id}});
  persist(s);
  return json{{"accepted", true},
              {"cursor", ses.cursor},
              {"total", ses.trials.size()},
              {"excluded", ses.excluded},
              {"flags", flags_string(r.flags)}};
}

json Service::advance(const std::string& study_id, const json& body) {
  std::unique_lock lock(mutex_);
  Study& s = study(study_id);
  std::vector<std::string> clips;
  if (body.is_object() && body.contains("clip_id")) {
    clips.push_back(body["clip_id"].get<std::string>());
  } else {
    for (const auto& [clip, tree] : s.forest())
      if (s.phase(clip) != Phase::Done) clips.push_back(clip);
  }
  json out = json::object();
  for (const auto& clip : clips) {
    const auto activated = s.advance(clip);
    log_event(s, {{"event", "advance"}, {"clip_id", clip}, {"activated", activated}});
    out[clip] = {{"activated", activated}, {"phase", phase_name(s.phase(clip))}};
  }
  persist(s);
  return json{{"study_id", study_id}, {"clips", out}};
}

json Service::progress(const std::string& study_id) const {
  std::shared_lock lock(mutex_);
  return study(study_id).progress();
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::Usage: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Sequencing:
    case ErrorKind::Conflict:
    case ErrorKind::NotReady: return 409;
    case ErrorKind::Io: return 500;
    default: return 422;
  }
}

namespace {

template <typename F>
void respond(httplib::Response& res, F&& fn, int ok_status = 200) {
  try {
    json body = fn();
    res.status = ok_status;
    res.set_content(body.dump(), "application/json");
  } catch (const Error& e) {
    res.status = http_status(e.kind());
    res.set_content(json{{"error", error_kind_name(e.kind())}, {"message", e.what()}}.dump(), "application/json");
  } catch (const json::exception& e) {
    res.status = 400;
    res.set_content(json{{"error", "Parse"}, {"message", e.what()}}.dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, std::string("request body: ") + e.what());
  }
}

std::string content_type_for(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".pgm") return "image/x-portable-graymap";
  return "application/octet-stream";
}

}  // namespace

void Service::mount(httplib::Server& server) {
  server.Post("/v1/studies", [this](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return create_study(parse_body(req)); }, 201);
  });
  server.Post(R"(/v1/studies/([^/]+)/participants)", [this](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return add_participant(req.matches[1], parse_body(req)); }, 201);
  });
  server.Get(R"(/v1/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return next_trial(req.matches[1]); });
  });
  server.Post(R"(/v1/sessions/([^/]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return submit_response(req.matches[1], parse_body(req)); });
  });
  server.Post(R"(/v1/studies/([^/]+)/advance)", [this](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return advance(req.matches[1], parse_body(req)); });
  });
  server.Get(R"(/v1/studies/([^/]+)/progress)", [this](const httplib::Request& req, httplib::Response& res) {
    respond(res, [&] { return progress(req.matches[1]); });
  });
  server.Get(R"(/v1/studies/([^/]+)/media/([^/]+)/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      std::string path;
      {
        std::shared_lock lock(mutex_);
        const Clip* c = study(req.matches[1]).manifest().find_clip(std::string(req.matches[2]));
        const std::size_t index = std::stoul(req.matches[3]);
        if (!c || index >= c->frame_count()) throw Error(ErrorKind::NotFound, "unknown clip or frame");
        path = c->frames[index];
      }
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorKind::NotFound, "frame file missing");
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      res.set_content(bytes, content_type_for(path));
    } catch (const Error& e) {
      res.status = http_status(e.kind());
      res.set_content(json{{"error", error_kind_name(e.kind())}, {"message", e.what()}}.dump(), "application/json");
    }
  });
}

}  // namespace mirc::service
