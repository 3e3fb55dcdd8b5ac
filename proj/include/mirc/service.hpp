#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "mirc/dataset.hpp"
#include "mirc/error.hpp"
#include "mirc/reduction.hpp"
#include "mirc/scoring.hpp"

namespace httplib {
class Server;
}

namespace mirc::service {

struct StudyConfig {
  int practice_count = 5;
  int catch_count = 2;
  /// Catch responses that must score correct; 2 of 2 by default.
  int catch_required_correct = 2;
  int quota = 20;
  int fixation_ms = 500;
  int prompt_delay_ms = 4000;
  std::size_t max_set_size = 36;
  bool loop = true;
  std::uint64_t seed = 0;
  ReductionConfig reduction;
  ScoringConfig scoring;

  void validate() const;
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& c);

struct Trial {
  std::string node_id;
  TrialKind kind = TrialKind::Main;
};

struct Session {
  std::string session_id;
  std::string participant_id;
  std::size_t stimulus_set = 0;
  std::uint64_t seed = 0;
  std::vector<Trial> trials;
  std::size_t cursor = 0;
  bool excluded = false;
  std::vector<ScoredResponse> responses;
  std::vector<std::int64_t> response_times;

  bool done() const { return cursor >= trials.size(); }
};

enum class Phase { Spatial, Spatiotemporal, Done };
std::string_view phase_name(Phase p);

/// Trial order: practice first, main trials shuffled, catch trials inserted at
/// seeded positions among them. Reproducible from (seed, inputs).
std::vector<Trial> build_trial_order(const std::vector<std::string>& practice, const std::vector<std::string>& main,
                                     const std::vector<std::string>& catches, std::uint64_t seed);

struct StimulusNode {
  std::string node_id;
  std::string clip_id;
  Split split = Split::Easy;
  std::string verb_class;
};

/// Partitions nodes into sets holding at most one node per clip and at most
/// `max_set_size` nodes where the clip constraint allows. Nodes are dealt in
/// (split, verb, clip, node) order to the emptiest admissible set, which keeps
/// split and verb mixes even across sets.
std::vector<std::vector<std::string>> partition_stimulus_sets(std::vector<StimulusNode> nodes,
                                                              std::size_t max_set_size);

class Study {
 public:
  Study(std::string study_id, std::filesystem::path manifest_path, StudyConfig config);

  const std::string& id() const { return id_; }
  const StudyConfig& config() const { return config_; }
  const DatasetManifest& manifest() const { return manifest_; }
  const Forest& forest() const { return forest_; }
  const std::vector<std::vector<std::string>>& stimulus_sets() const { return sets_; }
  const std::map<std::string, Session>& sessions() const { return sessions_; }
  Phase phase(const std::string& clip_id) const { return phases_.at(clip_id); }

  Session& add_participant(const std::string& participant_id);
  /// Records a response for the session's current trial and returns the scored result.
  const ScoredResponse& submit(const std::string& session_id, const std::string& node_id, const std::string& raw_text,
                               std::int64_t response_time_ms);
  /// Runs one reduction step for a clip. Returns the newly activated node ids.
  std::vector<std::string> advance(const std::string& clip_id);

  /// Nodes currently shown to participants.
  std::vector<std::string> active_nodes(const std::string& clip_id) const;
  /// Main responses per node from participants who are not excluded.
  std::map<std::string, std::size_t> response_counts() const;
  nlohmann::json trial_descriptor(const Session& s) const;
  nlohmann::json progress() const;
  const Session& session(const std::string& session_id) const;
  Session& session(const std::string& session_id);
  std::set<std::string> excluded_participants() const;

  nlohmann::json snapshot() const;
  static std::unique_ptr<Study> restore(const nlohmann::json& snapshot);

 private:
  Study() = default;
  void load_resources();
  void rebuild_sets();
  std::string gt_label_of(const std::string& node_id) const;
  const QuadrantNode* find_node(const std::string& node_id) const;

  std::string id_;
  std::filesystem::path manifest_path_;
  StudyConfig config_;
  DatasetManifest manifest_;
  Forest forest_;
  std::map<std::string, Phase> phases_;
  std::vector<std::vector<std::string>> sets_;
  std::map<std::string, Session> sessions_;
  std::size_t participants_seen_ = 0;

  EmbeddingTable sentence_;
  EmbeddingTable word_;
  std::unique_ptr<SpellCorrector> speller_;
};

/// Thread-safe registry of studies with append-only event logs and atomic
/// snapshots under `data_dir/<study_id>/`.
class Service {
 public:
  explicit Service(std::filesystem::path data_dir);

  nlohmann::json create_study(const nlohmann::json& body);
  nlohmann::json add_participant(const std::string& study_id, const nlohmann::json& body);
  nlohmann::json next_trial(const std::string& session_id) const;
  nlohmann::json submit_response(const std::string& session_id, const nlohmann::json& body);
  nlohmann::json advance(const std::string& study_id, const nlohmann::json& body);
  nlohmann::json progress(const std::string& study_id) const;

  /// Registers the /v1 routes.
  void mount(httplib::Server& server);

 private:
  Study& study(const std::string& id);
  const Study& study(const std::string& id) const;
  Study& study_of_session(const std::string& session_id, std::string* study_id = nullptr);
  const Study& study_of_session(const std::string& session_id) const;
  void log_event(const Study& s, const nlohmann::json& event);
  void persist(const Study& s);

  std::filesystem::path data_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Study>> studies_;
  std::size_t next_study_ = 1;
};

/// HTTP status for an error kind.
int http_status(ErrorKind kind);

}  // namespace mirc::service
