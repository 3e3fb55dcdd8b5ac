#include "mirc/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "mirc/csv.hpp"
#include "mirc/error.hpp"
#include "mirc/simd/kernels.hpp"

using nlohmann::json;

namespace mirc {

void ScoringConfig::validate() const {
  if (!(penalty >= 0.0) || !(bonus >= 0.0)) throw Error(ErrorKind::Usage, "scoring: penalty and bonus must be >= 0");
  // S_sim ranges over [-1 - penalty^2, 1 + bonus^2].
  if (!(threshold >= -1.0 - penalty * penalty && threshold <= 1.0 + bonus * bonus))
    throw Error(ErrorKind::Usage, "scoring: threshold outside the achievable S_sim range");
  if (spell_max_edit_distance < 0) throw Error(ErrorKind::Usage, "scoring: spell_max_edit_distance must be >= 0");
}

ScoringConfig scoring_config_from_json(const json& j) {
  ScoringConfig c;
  for (const char* key : {"penalty", "bonus", "threshold"})
    if (!j.contains(key) || !j[key].is_number())
      throw Error(ErrorKind::Usage, std::string("scoring config: '") + key + "' is required");
  c.penalty = j["penalty"].get<double>();
  c.bonus = j["bonus"].get<double>();
  c.threshold = j["threshold"].get<double>();
  if (j.contains("articles")) c.articles = j["articles"].get<std::set<std::string>>();
  if (j.contains("generic_subjects")) c.generic_subjects = j["generic_subjects"].get<std::set<std::string>>();
  if (j.contains("verb_lexicon")) c.verb_lexicon = j["verb_lexicon"].get<std::set<std::string>>();
  c.spell_max_edit_distance = j.value("spell_max_edit_distance", c.spell_max_edit_distance);
  c.max_content_words = j.value("max_content_words", c.max_content_words);
  c.validate();
  return c;
}

json to_json(const ScoringConfig& c) {
  return json{{"penalty", c.penalty},
              {"bonus", c.bonus},
              {"threshold", c.threshold},
              {"articles", c.articles},
              {"generic_subjects", c.generic_subjects},
              {"verb_lexicon", c.verb_lexicon},
              {"spell_max_edit_distance", c.spell_max_edit_distance},
              {"max_content_words", c.max_content_words}};
}

int osa_distance(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
    }
  }
  return d[n][m];
}

namespace {

void collect_deletes(const std::string& word, int depth, std::set<std::string>& out) {
  if (depth == 0 || word.empty()) return;
  for (std::size_t i = 0; i < word.size(); ++i) {
    std::string shorter = word.substr(0, i) + word.substr(i + 1);
    if (out.insert(shorter).second) collect_deletes(shorter, depth - 1, out);
  }
}

std::set<std::string> deletes_of(const std::string& word, int max_distance) {
  std::set<std::string> out{word};
  collect_deletes(word, max_distance, out);
  return out;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

SpellCorrector::SpellCorrector(const std::map<std::string, std::uint64_t>& dictionary, int max_distance)
    : max_distance_(max_distance) {
  for (const auto& [raw, count] : dictionary) {
    const std::string w = lowercase(raw);
    if (w.empty()) continue;
    words_[w] += count;
  }
  for (const auto& [w, count] : words_)
    for (const auto& del : deletes_of(w, max_distance_)) deletes_[del].push_back(w);
}

std::optional<SpellCorrector::Suggestion> SpellCorrector::lookup(std::string_view word) const {
  const std::string w = lowercase(word);
  if (auto it = words_.find(w); it != words_.end()) return Suggestion{w, 0, it->second};
  std::optional<Suggestion> best;
  std::set<std::string> seen;
  for (const auto& del : deletes_of(w, max_distance_)) {
    auto it = deletes_.find(del);
    if (it == deletes_.end()) continue;
    for (const auto& cand : it->second) {
      if (!seen.insert(cand).second) continue;
      const int dist = osa_distance(w, cand);
      if (dist > max_distance_) continue;
      const std::uint64_t count = words_.find(cand)->second;
      if (!best || dist < best->distance || (dist == best->distance && count > best->count) ||
          (dist == best->distance && count == best->count && cand < best->term))
        best = Suggestion{cand, dist, count};
    }
  }
  return best;
}

std::map<std::string, std::uint64_t> load_dictionary(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const std::size_t cw = t.column("word"), cc = t.column("count");
  std::map<std::string, std::uint64_t> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& s = t.rows[r][cc];
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw Error(ErrorKind::Parse, path + ":" + std::to_string(t.lines[r]) + ": bad count '" + s + "'");
    out[t.rows[r][cw]] += v;
  }
  return out;
}

std::string flags_string(std::uint32_t flags) {
  static const std::pair<std::uint32_t, const char*> names[] = {
      {kNeedsManualReview, "NeedsManualReview"}, {kEmptyAfterCleaning, "EmptyAfterCleaning"},
      {kMissingEmbedding, "MissingEmbedding"},   {kNoObjectTerm, "NoObjectTerm"},
      {kEarlyResponse, "EarlyResponse"}};
  std::string out;
  for (const auto& [bit, name] : names) {
    if (!(flags & bit)) continue;
    if (!out.empty()) out += '|';
    out += name;
  }
  return out;
}

namespace {

std::uint32_t parse_flags(std::string_view s) {
  std::uint32_t flags = 0;
  for (std::uint32_t bit = 1; bit <= kEarlyResponse; bit <<= 1) {
    const std::string name = flags_string(bit);
    if (s.find(name) != std::string_view::npos) flags |= bit;
  }
  return flags;
}

std::vector<std::string> tokenize(std::string_view raw) {
  const std::string lower = lowercase(raw);
  std::string spaced;
  spaced.reserve(lower.size());
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < lower.size(); ++i) {
    const char c = lower[i];
    if (alnum(c)) {
      spaced += c;
    } else if (c == '-' && i > 0 && i + 1 < lower.size() && alnum(lower[i - 1]) && alnum(lower[i + 1])) {
      spaced += c;  // intra-word hyphen, e.g. "turn-on"
    } else if (c == '\'' && i > 0 && i + 1 < lower.size() && alnum(lower[i - 1]) && alnum(lower[i + 1])) {
      // apostrophes join: "don't" -> "dont"
    } else {
      spaced += ' ';
    }
  }
  std::vector<std::string> tokens;
  std::istringstream ss(spaced);
  for (std::string tok; ss >> tok;) tokens.push_back(tok);
  return tokens;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

CleanResult clean(std::string_view raw_text, const ScoringConfig& config, const SpellCorrector* speller) {
  CleanResult r;
  std::vector<std::string> tokens = tokenize(raw_text);
  const std::string normalised = join(tokens);
  if (normalised != raw_text) r.trace.push_back("normalise: '" + std::string(raw_text) + "' -> '" + normalised + "'");

  auto drop_stop_words = [&](std::vector<std::string>& toks) {
    std::vector<std::string> kept;
    for (auto& t : toks) {
      if (config.articles.count(t)) r.trace.push_back("drop article '" + t + "'");
      else if (config.generic_subjects.count(t)) r.trace.push_back("drop subject '" + t + "'");
      else kept.push_back(std::move(t));
    }
    toks = std::move(kept);
  };
  drop_stop_words(tokens);

  if (speller && speller->size() > 0) {
    for (auto& t : tokens) {
      auto s = speller->lookup(t);
      if (s && s->term != t) {
        r.trace.push_back("spell '" + t + "' -> '" + s->term + "' (distance " + std::to_string(s->distance) + ")");
        t = s->term;
      }
    }
    drop_stop_words(tokens);
  }

  r.tokens = std::move(tokens);
  r.text = join(r.tokens);
  if (r.tokens.empty()) r.flags |= kEmptyAfterCleaning;
  if (r.tokens.size() > config.max_content_words) r.flags |= kNeedsManualReview;
  return r;
}

double semantic_similarity(double cs, double cs_object, double cs_action, double penalty, double bonus) {
  const double pen = cs_object * penalty;
  const double bon = cs_action * bonus;
  return cs - pen * pen + bon * bon;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::Integrity, "cosine: dimension mismatch");
  const double ab = simd::dot(a, b);
  const double aa = simd::dot(a, a);
  const double bb = simd::dot(b, b);
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

namespace {

struct TermSplit {
  std::string verb;
  std::vector<std::string> objects;
};

TermSplit split_terms(const std::vector<std::string>& tokens, const ScoringConfig& config) {
  TermSplit s;
  if (tokens.empty()) return s;
  std::size_t verb_at = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (config.verb_lexicon.count(tokens[i])) {
      verb_at = i;
      break;
    }
  }
  s.verb = tokens[verb_at];
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (i != verb_at) s.objects.push_back(tokens[i]);
  return s;
}

const std::vector<float>& require(const EmbeddingTable* table, const std::string& text, const char* kind) {
  const std::vector<float>* v = table ? table->find(text) : nullptr;
  if (!v) throw Error(ErrorKind::MissingEmbedding, std::string("no ") + kind + " embedding for '" + text + "'");
  return *v;
}

std::vector<float> mean_vector(const EmbeddingTable* table, const std::vector<std::string>& words) {
  std::vector<double> acc;
  for (const auto& w : words) {
    const auto& v = require(table, w, "word");
    if (acc.empty()) acc.assign(v.size(), 0.0);
    for (std::size_t d = 0; d < v.size(); ++d) acc[d] += v[d];
  }
  std::vector<float> out(acc.size());
  for (std::size_t d = 0; d < acc.size(); ++d) out[d] = static_cast<float>(acc[d] / static_cast<double>(words.size()));
  return out;
}

std::vector<std::string> label_tokens(std::string_view gt_label, const ScoringConfig& config) {
  std::vector<std::string> out;
  for (auto& t : tokenize(gt_label))
    if (!config.articles.count(t) && !config.generic_subjects.count(t)) out.push_back(std::move(t));
  return out;
}

}  // namespace

ScoredResponse semantic_score(const CleanResult& cleaned, std::string_view gt_label, const EmbeddingTables& tables,
                              const ScoringConfig& config) {
  ScoredResponse out;
  out.cleaned_text = cleaned.text;
  out.flags = cleaned.flags;
  if (cleaned.empty()) {
    out.flags |= kEmptyAfterCleaning;
    out.s_sim = 0.0;
    out.correct = false;
    return out;
  }
  const std::vector<std::string> gt_tokens = label_tokens(gt_label, config);
  const std::string gt_text = normalize_key(gt_label);

  out.cs = cosine(require(tables.sentence, cleaned.text, "sentence"), require(tables.sentence, gt_text, "sentence"));

  const TermSplit resp = split_terms(cleaned.tokens, config);
  const TermSplit gt = split_terms(gt_tokens, config);
  if (gt.verb.empty()) throw Error(ErrorKind::MissingEmbedding, "ground-truth label '" + std::string(gt_label) + "' is empty");
  out.cs_action = cosine(require(tables.word, resp.verb, "word"), require(tables.word, gt.verb, "word"));
  if (resp.objects.empty() || gt.objects.empty()) {
    out.cs_object = 0.0;
    out.flags |= kNoObjectTerm;
  } else {
    out.cs_object = cosine(mean_vector(tables.word, resp.objects), mean_vector(tables.word, gt.objects));
  }
  out.s_sim = semantic_similarity(out.cs, out.cs_object, out.cs_action, config.penalty, config.bonus);
  out.correct = out.s_sim > config.threshold;
  return out;
}

ScoredResponse score_response(const ResponseRecord& response, std::string_view gt_label,
                              const EmbeddingTables& tables, const ScoringConfig& config,
                              const SpellCorrector* speller) {
  const CleanResult cleaned = clean(response.raw_text, config, speller);
  ScoredResponse out = semantic_score(cleaned, gt_label, tables, config);
  out.participant_id = response.participant_id;
  out.node_id = response.node_id;
  out.trial_kind = response.trial_kind;
  return out;
}

std::optional<double> node_accuracy(std::span<const ScoredResponse> responses) {
  std::size_t total = 0, correct = 0;
  for (const auto& r : responses) {
    if (r.trial_kind != TrialKind::Main) continue;
    ++total;
    correct += r.correct ? 1 : 0;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::set<std::string> failing_catch(std::span<const ScoredResponse> responses, int required_correct) {
  std::map<std::string, int> correct;
  for (const auto& r : responses) {
    if (r.trial_kind != TrialKind::Catch) continue;
    correct[r.participant_id] += r.correct ? 1 : 0;
  }
  std::set<std::string> out;
  for (const auto& [pid, c] : correct)
    if (c < required_correct) out.insert(pid);
  return out;
}

std::map<std::string, double> accuracies_by_node(std::span<const ScoredResponse> responses,
                                                 const std::set<std::string>& excluded) {
  std::map<std::string, std::vector<ScoredResponse>> by_node;
  for (const auto& r : responses) {
    if (r.trial_kind != TrialKind::Main || excluded.count(r.participant_id)) continue;
    by_node[r.node_id].push_back(r);
  }
  std::map<std::string, double> out;
  for (const auto& [node, rs] : by_node)
    if (auto acc = node_accuracy(rs)) out[node] = *acc;
  return out;
}

void write_scored_csv(std::ostream& out, std::span<const ScoredResponse> scored) {
  csv::write_row(out, {"participant_id", "node_id", "cleaned_text", "CS", "CS_A", "CS_O", "S_sim", "correct", "flags",
                       "trial_kind"});
  for (const auto& s : scored) {
    csv::write_row(out, {s.participant_id, s.node_id, s.cleaned_text, fmt::format("{}", s.cs),
                         fmt::format("{}", s.cs_action), fmt::format("{}", s.cs_object), fmt::format("{}", s.s_sim),
                         s.correct ? "1" : "0", flags_string(s.flags), std::string(trial_kind_name(s.trial_kind))});
  }
}

std::vector<ScoredResponse> read_scored_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const std::size_t cp = t.column("participant_id"), cn = t.column("node_id"), ct = t.column("cleaned_text"),
                    ccs = t.column("CS"), ca = t.column("CS_A"), co = t.column("CS_O"), cs = t.column("S_sim"),
                    cc = t.column("correct"), cf = t.column("flags"), ck = t.column("trial_kind");
  std::vector<ScoredResponse> out;
  for (const auto& row : t.rows) {
    ScoredResponse s;
    s.participant_id = row[cp];
    s.node_id = row[cn];
    s.cleaned_text = row[ct];
    s.cs = std::stod(row[ccs]);
    s.cs_action = std::stod(row[ca]);
    s.cs_object = std::stod(row[co]);
    s.s_sim = std::stod(row[cs]);
    s.correct = row[cc] == "1";
    s.flags = parse_flags(row[cf]);
    s.trial_kind = parse_trial_kind(row[ck]).value_or(TrialKind::Main);
    out.push_back(std::move(s));
  }
  return out;
}

CalibrationResult calibrate_constants(std::span<const CalibrationSample> samples,
                                      std::span<const double> penalty_grid, std::span<const double> bonus_grid,
                                      std::span<const double> threshold_grid) {
  if (samples.empty()) throw Error(ErrorKind::InsufficientData, "calibration: no labelled samples");
  CalibrationResult best;
  best.agreement = -1.0;
  for (double p : penalty_grid) {
    for (double b : bonus_grid) {
      std::vector<double> sims;
      sims.reserve(samples.size());
      for (const auto& s : samples) sims.push_back(semantic_similarity(s.cs, s.cs_object, s.cs_action, p, b));
      for (double th : threshold_grid) {
        std::size_t agree = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) agree += ((sims[i] > th) == samples[i].manual_correct) ? 1 : 0;
        const double a = static_cast<double>(agree) / static_cast<double>(samples.size());
        if (a > best.agreement) best = CalibrationResult{p, b, th, a};
      }
    }
  }
  return best;
}

}  // namespace mirc
