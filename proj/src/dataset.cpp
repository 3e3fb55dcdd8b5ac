#include "mirc/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include <json.hpp>

#include "mirc/csv.hpp"
#include "mirc/error.hpp"
#include "mirc/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mirc {

std::string_view split_name(Split s) { return s == Split::Easy ? "Easy" : "Hard"; }

std::optional<Split> parse_split(std::string_view s) {
  if (s == "Easy" || s == "easy") return Split::Easy;
  if (s == "Hard" || s == "hard") return Split::Hard;
  return std::nullopt;
}

const std::vector<std::string>& default_verb_classes() {
  static const std::vector<std::string> verbs{"close", "cut",  "hang",   "insert", "open",     "peel",    "pour",
                                              "put",   "remove", "serve", "take", "turn-off", "turn-on", "wash"};
  return verbs;
}

namespace {

constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "ActiveHand", "ActiveObject", "ContextualObjects", "Background", "DKLColour", "Intensity",
    "Orientation", "Colour",      "Flicker",           "Contrast",   "Motion"};

}  // namespace

std::string_view feature_name(Feature f) { return kFeatureNames[static_cast<std::size_t>(f)]; }

std::optional<Feature> parse_feature(std::string_view s) {
  for (std::size_t i = 0; i < kFeatureNames.size(); ++i)
    if (kFeatureNames[i] == s) return static_cast<Feature>(i);
  return std::nullopt;
}

const std::array<Feature, kFeatureCount>& all_features() {
  static const std::array<Feature, kFeatureCount> features = [] {
    std::array<Feature, kFeatureCount> out{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = static_cast<Feature>(i);
    return out;
  }();
  return features;
}

const Clip* DatasetManifest::find_clip(std::string_view clip_id) const {
  for (const auto& c : clips)
    if (c.clip_id == clip_id) return &c;
  return nullptr;
}

const Clip& DatasetManifest::clip(std::string_view clip_id) const {
  if (const Clip* c = find_clip(clip_id)) return *c;
  throw Error(ErrorKind::NotFound, "unknown clip '" + std::string(clip_id) + "'");
}

std::vector<const Clip*> DatasetManifest::clips_with_role(ClipRole role) const {
  std::vector<const Clip*> out;
  for (const auto& c : clips)
    if (c.role == role) out.push_back(&c);
  return out;
}

std::string_view clip_role_name(ClipRole r) {
  switch (r) {
    case ClipRole::Test: return "test";
    case ClipRole::Practice: return "practice";
    case ClipRole::Catch: return "catch";
  }
  return "?";
}

namespace {

[[noreturn]] void field_error(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Parse, "manifest: field " + where + ": " + what);
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) field_error(where + "." + key, "expected string");
  return it->get<std::string>();
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) field_error(where + "." + key, "expected number");
  return it->get<double>();
}

int get_positive_int(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer() || it->get<long long>() < 1)
    field_error(where + "." + key, "expected positive integer");
  return it->get<int>();
}

bool numeric_stem(const fs::path& p) {
  const std::string stem = p.stem().string();
  return !stem.empty() && std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<std::string> list_frames(const fs::path& dir) {
  std::vector<std::pair<unsigned long long, std::string>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !numeric_stem(entry.path())) continue;
    found.emplace_back(std::stoull(entry.path().stem().string()), entry.path().string());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  out.reserve(found.size());
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::string resolve(const fs::path& base, const std::string& rel) {
  const fs::path p(rel);
  return (p.is_absolute() ? p : base / p).lexically_normal().string();
}

}  // namespace

DatasetManifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; translate to a line number.
    const std::size_t offset = std::min<std::size_t>(e.byte, json_text.size());
    const auto line = 1 + std::count(json_text.begin(), json_text.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
    throw Error(ErrorKind::Parse, "manifest: line " + std::to_string(line) + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::Parse, "manifest: top level must be an object");

  DatasetManifest m;
  m.base_dir = base_dir;
  if (auto it = doc.find("verb_classes"); it != doc.end()) {
    if (!it->is_array()) field_error("verb_classes", "expected array");
    for (const auto& v : *it) m.verb_classes.push_back(v.get<std::string>());
  } else {
    m.verb_classes = default_verb_classes();
  }

  std::set<std::string> seen;
  const json clips = doc.value("clips", json::array());
  if (!clips.is_array()) field_error("clips", "expected array");
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string where = "clips[" + std::to_string(i) + "]";
    const json& jc = clips[i];
    if (!jc.is_object()) field_error(where, "expected object");
    Clip c;
    c.clip_id = get_string(jc, "clip_id", where);
    if (c.clip_id.empty() || c.clip_id.find('/') != std::string::npos)
      field_error(where + ".clip_id", "must be non-empty and contain no '/'");
    if (!seen.insert(c.clip_id).second)
      throw Error(ErrorKind::Integrity, "manifest: duplicate clip_id '" + c.clip_id + "'");
    if (auto r = jc.find("role"); r != jc.end()) {
      const std::string role = r->is_string() ? r->get<std::string>() : std::string();
      if (role == "test") c.role = ClipRole::Test;
      else if (role == "practice") c.role = ClipRole::Practice;
      else if (role == "catch") c.role = ClipRole::Catch;
      else field_error(where + ".role", "expected test, practice or catch");
    }
    const auto split = parse_split(get_string(jc, "split", where));
    if (!split) field_error(where + ".split", "expected Easy or Hard");
    c.split = *split;
    c.verb_class = get_string(jc, "verb_class", where);
    if (std::find(m.verb_classes.begin(), m.verb_classes.end(), c.verb_class) == m.verb_classes.end())
      field_error(where + ".verb_class", "'" + c.verb_class + "' not in the declared verb vocabulary");
    c.gt_label = get_string(jc, "gt_label", where);
    c.fps = get_number(jc, "fps", where);
    if (!(c.fps > 0)) field_error(where + ".fps", "must be positive");
    c.width = get_positive_int(jc, "width", where);
    c.height = get_positive_int(jc, "height", where);
    const fs::path frame_dir = resolve(base_dir, get_string(jc, "frame_dir", where));
    if (fs::is_directory(frame_dir)) {
      c.frames = list_frames(frame_dir);
    } else {
      m.unresolved.push_back(where + ".frame_dir: " + frame_dir.string());
    }
    if (c.frames.empty()) {
      // Without frames on disk a declared count still lets geometry and
      // scrambling run; the missing directory stays reported above.
      if (auto fc = jc.find("frame_count"); fc != jc.end() && fc->is_number_integer() && fc->get<long long>() > 0) {
        for (long long f = 0; f < fc->get<long long>(); ++f)
          c.frames.push_back((frame_dir / io::frame_name(static_cast<std::size_t>(f), ".png")).string());
      } else if (fs::is_directory(frame_dir)) {
        field_error(where + ".frame_dir", "contains no numbered frames");
      }
    }
    m.clips.push_back(std::move(c));
  }

  const json masks = doc.value("masks", json::array());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const std::string where = "masks[" + std::to_string(i) + "]";
    MaskRef r;
    r.clip_id = get_string(masks[i], "clip_id", where);
    const auto cat = parse_feature(get_string(masks[i], "category", where));
    if (!cat || *cat == Feature::Background || is_channel(*cat))
      field_error(where + ".category", "expected ActiveHand, ActiveObject or ContextualObjects");
    r.category = *cat;
    r.dir = resolve(base_dir, get_string(masks[i], "dir", where));
    if (!m.find_clip(r.clip_id)) m.unresolved.push_back(where + ".clip_id: " + r.clip_id);
    if (!fs::is_directory(r.dir)) m.unresolved.push_back(where + ".dir: " + r.dir);
    m.masks.push_back(std::move(r));
  }

  const json maps = doc.value("maps", json::array());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const std::string where = "maps[" + std::to_string(i) + "]";
    MapRef r;
    r.clip_id = get_string(maps[i], "clip_id", where);
    const auto ch = parse_feature(get_string(maps[i], "channel", where));
    if (!ch || !is_channel(*ch)) field_error(where + ".channel", "expected a conspicuity channel name");
    r.channel = *ch;
    r.dir = resolve(base_dir, get_string(maps[i], "dir", where));
    if (auto it = maps[i].find("node_id"); it != maps[i].end() && it->is_string()) r.node_id = it->get<std::string>();
    if (!m.find_clip(r.clip_id)) m.unresolved.push_back(where + ".clip_id: " + r.clip_id);
    if (!fs::is_directory(r.dir)) m.unresolved.push_back(where + ".dir: " + r.dir);
    m.maps.push_back(std::move(r));
  }

  auto optional_path = [&](const char* key) -> std::optional<std::string> {
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) field_error(key, "expected path string");
    std::string p = resolve(base_dir, it->get<std::string>());
    if (!fs::exists(p)) m.unresolved.push_back(std::string(key) + ": " + p);
    return p;
  };
  m.confidences = optional_path("confidences");
  m.responses = optional_path("responses");
  m.dictionary = optional_path("dictionary");
  if (auto it = doc.find("embeddings"); it != doc.end() && !it->is_null()) {
    EmbeddingPaths e;
    if (it->is_string()) {
      e.sentence = e.word = resolve(base_dir, it->get<std::string>());
    } else if (it->is_object()) {
      e.sentence = resolve(base_dir, get_string(*it, "sentence", "embeddings"));
      e.word = it->contains("word") ? resolve(base_dir, get_string(*it, "word", "embeddings")) : e.sentence;
    } else {
      field_error("embeddings", "expected path or {sentence, word}");
    }
    for (const auto& p : {e.sentence, e.word})
      if (!fs::exists(p)) m.unresolved.push_back("embeddings: " + p);
    m.embeddings = e;
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "manifest not found: " + path.string());
  return parse_manifest(io::read_text(path.string()), path.parent_path());
}

void MaskSet::derive_background() {
  auto& bg = planes[static_cast<std::size_t>(Feature::Background)];
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  bg.assign(frames, std::vector<std::uint8_t>(n, 1));
  for (std::size_t cat = 0; cat < 3; ++cat) {
    const auto& src = planes[cat];
    if (src.empty()) continue;
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t i = 0; i < n; ++i)
        if (src[f][i]) bg[f][i] = 0;
  }
}

MaskSet load_masks(const DatasetManifest& manifest, const Clip& clip) {
  MaskSet set;
  set.width = clip.width;
  set.height = clip.height;
  set.frames = clip.frame_count();
  const std::size_t n = static_cast<std::size_t>(clip.width) * static_cast<std::size_t>(clip.height);
  for (const auto& ref : manifest.masks) {
    if (ref.clip_id != clip.clip_id) continue;
    auto& planes = set.planes[static_cast<std::size_t>(ref.category)];
    planes.clear();
    for (std::size_t f = 0; f < set.frames; ++f) {
      const std::string path = (fs::path(ref.dir) / io::frame_name(f, ".pgm")).string();
      io::GrayImage img = io::read_pgm(path);
      if (img.width != clip.width || img.height != clip.height)
        throw Error(ErrorKind::Integrity, path + ": mask size differs from frame size");
      for (auto& px : img.pixels) {
        if (px != 0 && px != 255) throw Error(ErrorKind::Integrity, path + ": mask is not binary (0/255)");
        px = px ? 1 : 0;
      }
      planes.push_back(std::move(img.pixels));
    }
  }
  for (std::size_t cat = 0; cat < 3; ++cat)
    if (set.planes[cat].empty()) set.planes[cat].assign(set.frames, std::vector<std::uint8_t>(n, 0));
  set.derive_background();
  return set;
}

ConspicuityMapSet load_maps(const DatasetManifest& manifest, const Clip& clip,
                            const std::optional<std::string>& node_id) {
  ConspicuityMapSet set;
  set.width = clip.width;
  set.height = clip.height;
  set.frames = clip.frame_count();
  const std::size_t n = static_cast<std::size_t>(clip.width) * static_cast<std::size_t>(clip.height);
  std::array<bool, kChannelCount> have{};
  for (const auto& ref : manifest.maps) {
    if (ref.clip_id != clip.clip_id || ref.node_id != node_id) continue;
    const std::size_t ch = static_cast<std::size_t>(ref.channel) - kObjectFeatureCount;
    const json meta = json::parse(io::read_text((fs::path(ref.dir) / "meta.json").string()));
    if (meta.at("width").get<int>() != clip.width || meta.at("height").get<int>() != clip.height)
      throw Error(ErrorKind::Integrity, ref.dir + ": map size differs from frame size");
    const auto frames = meta.at("frames").get<std::size_t>();
    if (frames != set.frames) throw Error(ErrorKind::Integrity, ref.dir + ": map frame count differs from clip");
    auto& planes = set.planes[ch];
    planes.clear();
    for (std::size_t f = 0; f < frames; ++f) {
      const std::string path = (fs::path(ref.dir) / io::frame_name(f, ".f32")).string();
      auto values = io::read_f32(path, n);
      for (float v : values)
        if (!(v >= 0.0f && v <= 1.0f)) throw Error(ErrorKind::Integrity, path + ": activation outside [0,1]");
      planes.push_back(std::move(values));
    }
    have[ch] = true;
  }
  for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
    if (!have[ch]) {
      throw Error(ErrorKind::NotFound,
                  "no " + std::string(feature_name(static_cast<Feature>(ch + kObjectFeatureCount))) +
                      " map for clip " + clip.clip_id + (node_id ? " node " + *node_id : std::string()));
    }
  }
  return set;
}

std::string_view trial_kind_name(TrialKind k) {
  switch (k) {
    case TrialKind::Practice: return "Practice";
    case TrialKind::Catch: return "Catch";
    case TrialKind::Main: return "Main";
  }
  return "Main";
}

std::optional<TrialKind> parse_trial_kind(std::string_view s) {
  if (s == "Practice" || s == "practice") return TrialKind::Practice;
  if (s == "Catch" || s == "catch") return TrialKind::Catch;
  if (s == "Main" || s == "main") return TrialKind::Main;
  return std::nullopt;
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error(ErrorKind::Parse, where + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::vector<ResponseRecord> load_responses(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const std::size_t cp = t.column("participant_id"), cn = t.column("node_id"), ck = t.column("trial_kind"),
                    crt = t.column("response_time_ms"), ctext = t.column("raw_text");
  std::vector<ResponseRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path + ":" + std::to_string(t.lines[r]);
    ResponseRecord rec;
    rec.participant_id = row[cp];
    rec.node_id = row[cn];
    const auto kind = parse_trial_kind(row[ck]);
    if (!kind) throw Error(ErrorKind::Parse, where + ": bad trial_kind '" + row[ck] + "'");
    rec.trial_kind = *kind;
    rec.response_time_ms = static_cast<std::int64_t>(parse_double(row[crt], where));
    rec.raw_text = row[ctext];
    out.push_back(std::move(rec));
  }
  return out;
}

std::string ConfidenceRecord::predicted_verb() const {
  std::string best;
  double best_v = -1.0;
  for (const auto& [verb, v] : per_verb) {
    if (v > best_v) {
      best_v = v;
      best = verb;
    }
  }
  return best;
}

std::map<std::string, ConfidenceRecord> load_confidences(const std::string& path,
                                                         const std::map<std::string, std::string>& gt_verb_of) {
  const csv::Table t = csv::read_file(path);
  const std::size_t cn = t.column("node_id"), cv = t.column("verb"), cc = t.column("confidence");
  std::map<std::string, ConfidenceRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path + ":" + std::to_string(t.lines[r]);
    const double v = parse_double(row[cc], where);
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::Integrity, where + ": confidence outside [0,1]");
    auto& rec = out[row[cn]];
    rec.node_id = row[cn];
    rec.per_verb[row[cv]] += v;
  }
  for (auto& [node, rec] : out) {
    double total = 0;
    for (const auto& [verb, v] : rec.per_verb) total += v;
    if (std::abs(total - 1.0) > 1e-6)
      throw Error(ErrorKind::Integrity, path + ": confidences of node " + node + " sum to " + std::to_string(total));
    auto gt = gt_verb_of.find(node);
    if (gt == gt_verb_of.end()) throw Error(ErrorKind::Integrity, path + ": node " + node + " has no ground truth");
    auto hit = rec.per_verb.find(gt->second);
    rec.gt_verb_confidence = hit == rec.per_verb.end() ? 0.0 : hit->second;
  }
  return out;
}

std::map<std::string, ConfidenceRecord> load_confidences(const std::string& path, const DatasetManifest& manifest) {
  const csv::Table t = csv::read_file(path);
  const std::size_t cn = t.column("node_id");
  std::map<std::string, std::string> gt;
  for (const auto& row : t.rows) {
    const std::string& node = row[cn];
    const Clip* clip = manifest.find_clip(std::string_view(node).substr(0, node.find('/')));
    if (clip) gt[node] = clip->verb_class;
  }
  return load_confidences(path, gt);
}

std::string normalize_key(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

const std::vector<float>* EmbeddingTable::find(std::string_view text) const {
  auto it = vectors.find(normalize_key(text));
  return it == vectors.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  if (t.header.size() < 2 || t.header[0] != "text") throw Error(ErrorKind::Parse, path + ": expected header text,dim0..");
  EmbeddingTable table;
  table.dim = t.header.size() - 1;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path + ":" + std::to_string(t.lines[r]);
    std::vector<float> v(table.dim);
    double norm = 0;
    for (std::size_t d = 0; d < table.dim; ++d) {
      v[d] = static_cast<float>(parse_double(row[d + 1], where));
      norm += static_cast<double>(v[d]) * v[d];
    }
    if (norm == 0.0) throw Error(ErrorKind::Integrity, where + ": zero-length embedding for '" + row[0] + "'");
    table.vectors[normalize_key(row[0])] = std::move(v);
  }
  return table;
}

}  // namespace mirc
