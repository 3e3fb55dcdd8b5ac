#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mirc/dataset.hpp"

namespace mirc {

struct ScoringConfig {
  double penalty = 0.0;    // p_pen
  double bonus = 0.0;      // b_bon
  double threshold = 0.0;  // correct iff S_sim > threshold
  std::set<std::string> articles{"a", "an", "the"};
  std::set<std::string> generic_subjects{"man",   "woman",  "person", "people", "someone", "somebody",
                                         "guy",   "lady",   "he",     "she",    "they",    "i",
                                         "you",   "user",   "human",  "individual"};
  /// Words recognised as verbs when splitting action and object terms.
  std::set<std::string> verb_lexicon;
  int spell_max_edit_distance = 2;
  std::size_t max_content_words = 3;

  void validate() const;
};

/// Reads a scoring config. penalty, bonus and threshold are required.
ScoringConfig scoring_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScoringConfig& c);

/// Optimal string alignment distance (adjacent transpositions count 1).
int osa_distance(std::string_view a, std::string_view b);

/// Symmetric-delete spelling corrector over a word-frequency dictionary.
class SpellCorrector {
 public:
  struct Suggestion {
    std::string term;
    int distance = 0;
    std::uint64_t count = 0;
  };

  SpellCorrector(const std::map<std::string, std::uint64_t>& dictionary, int max_distance);

  /// Closest dictionary term within max_distance: smallest distance, then
  /// highest count, then lexicographically first. nullopt when none.
  std::optional<Suggestion> lookup(std::string_view word) const;

  int max_distance() const { return max_distance_; }
  std::size_t size() const { return words_.size(); }

 private:
  int max_distance_;
  std::map<std::string, std::uint64_t, std::less<>> words_;
  std::map<std::string, std::vector<std::string>, std::less<>> deletes_;
};

/// Reads `word,count` CSV (header required).
std::map<std::string, std::uint64_t> load_dictionary(const std::string& path);

enum ResponseFlag : std::uint32_t {
  kFlagNone = 0,
  kNeedsManualReview = 1u << 0,
  kEmptyAfterCleaning = 1u << 1,
  kMissingEmbedding = 1u << 2,
  kNoObjectTerm = 1u << 3,
  kEarlyResponse = 1u << 4,
};
std::string flags_string(std::uint32_t flags);

struct CleanResult {
  std::string text;
  std::vector<std::string> tokens;
  /// Human-readable record of each edit.
  std::vector<std::string> trace;
  std::uint32_t flags = kFlagNone;

  bool empty() const { return tokens.empty(); }
};

/// Lowercase, strip punctuation, drop articles and generic subjects,
/// spell-correct. Idempotent.
CleanResult clean(std::string_view raw_text, const ScoringConfig& config, const SpellCorrector* speller);

struct ScoredResponse {
  std::string participant_id;
  std::string node_id;
  TrialKind trial_kind = TrialKind::Main;
  std::string cleaned_text;
  double cs = 0.0;
  double cs_action = 0.0;
  double cs_object = 0.0;
  double s_sim = 0.0;
  bool correct = false;
  std::uint32_t flags = kFlagNone;
};

/// S_sim = CS - (CS_O * penalty)^2 + (CS_A * bonus)^2
double semantic_similarity(double cs, double cs_object, double cs_action, double penalty, double bonus);

double cosine(std::span<const float> a, std::span<const float> b);

struct EmbeddingTables {
  const EmbeddingTable* sentence = nullptr;
  const EmbeddingTable* word = nullptr;
};

/// Scores an already cleaned response against a ground-truth label.
/// Throws Error(MissingEmbedding) naming the absent text.
ScoredResponse semantic_score(const CleanResult& cleaned, std::string_view gt_label, const EmbeddingTables& tables,
                              const ScoringConfig& config);

/// Clean + score; empty responses come back incorrect and flagged instead of throwing.
ScoredResponse score_response(const ResponseRecord& response, std::string_view gt_label,
                              const EmbeddingTables& tables, const ScoringConfig& config,
                              const SpellCorrector* speller);

/// Fraction correct over Main-trial responses; nullopt when there are none.
std::optional<double> node_accuracy(std::span<const ScoredResponse> responses);

/// Participants whose catch trials fail: `required_correct` of their catch
/// responses must be correct (2 = both).
std::set<std::string> failing_catch(std::span<const ScoredResponse> responses, int required_correct = 2);

/// Node accuracies from scored responses, excluding the given participants.
std::map<std::string, double> accuracies_by_node(std::span<const ScoredResponse> responses,
                                                 const std::set<std::string>& excluded);

void write_scored_csv(std::ostream& out, std::span<const ScoredResponse> scored);
std::vector<ScoredResponse> read_scored_csv(const std::string& path);

/// One row of a manually labelled calibration set.
struct CalibrationSample {
  double cs = 0.0;
  double cs_action = 0.0;
  double cs_object = 0.0;
  bool manual_correct = false;
};

struct CalibrationResult {
  double penalty = 0.0;
  double bonus = 0.0;
  double threshold = 0.0;
  double agreement = 0.0;
};

/// Grid search maximising agreement with manual labels. Ties keep the first
/// grid point (smallest penalty, then bonus, then threshold).
CalibrationResult calibrate_constants(std::span<const CalibrationSample> samples,
                                      std::span<const double> penalty_grid, std::span<const double> bonus_grid,
                                      std::span<const double> threshold_grid);

}  // namespace mirc
