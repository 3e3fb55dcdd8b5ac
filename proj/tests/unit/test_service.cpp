#include <doctest.h>

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "mirc/error.hpp"
#include "mirc/scramble.hpp"
#include "mirc/service.hpp"
#include "mirc/synth.hpp"
#include "support.hpp"

using namespace mirc;
using namespace mirc::service;
using nlohmann::json;

namespace {

constexpr const char* kWrong = "take knife";

json study_json(std::uint64_t seed) {
  json j = synth::mini_config(seed);
  for (auto& [k, v] : j.at("study").items()) j[k] = v;
  j.erase("study");
  return j;
}

/// Mini dataset plus a variant manifest with 36 test clips reusing its frames.
struct Fixture {
  std::filesystem::path dir;
  synth::MiniInfo info;
  std::filesystem::path manifest36;

  explicit Fixture(const std::string& name) : dir(testsupport::scratch(name)) {
    info = synth::write_mini_dataset(dir / "mini", 7);
    json m = json::parse(testsupport::slurp(info.manifest));
    json clips = json::array();
    std::vector<json> tests;
    for (const auto& c : m["clips"]) {
      if (c.value("role", "test") == "test") tests.push_back(c);
      else clips.push_back(c);
    }
    for (int i = 0; i < 36; ++i) {
      json c = tests[static_cast<std::size_t>(i) % tests.size()];
      c["clip_id"] = fmt::format("v{:02d}", i);
      c["split"] = i < 18 ? "Easy" : "Hard";
      clips.push_back(c);
    }
    m["clips"] = clips;
    m.erase("masks");
    m.erase("maps");
    manifest36 = dir / "mini" / "manifest36.json";
    testsupport::write_file(manifest36, m.dump(1));
  }
};

/// Answers whole sessions; Main trials are correct for the first `target[node]` responders.
struct Driver {
  Study& study;
  std::map<std::string, int> target;
  std::map<std::string, int> served;
  int joined = 0;

  std::string gt(const std::string& node) const { return study.manifest().clip(clip_of_node(node)).gt_label; }

  std::string join_and_run(int catch_correct = 2) {
    const std::string sid = study.add_participant(fmt::format("u{:03d}", ++joined)).session_id;
    int catches = 0;
    Session& s = study.session(sid);
    while (!s.done() && !s.excluded) {
      const Trial t = s.trials[s.cursor];
      bool ok = true;
      if (t.kind == TrialKind::Catch) ok = catches++ < catch_correct;
      if (t.kind == TrialKind::Main) ok = served[t.node_id]++ < target[t.node_id];
      study.submit(sid, t.node_id, ok ? gt(t.node_id) : kWrong, 5000);
    }
    return sid;
  }

  bool quota_met() const {
    const auto counts = study.response_counts();
    for (const auto& [clip, tree] : study.forest()) {
      if (study.phase(clip) == Phase::Done) continue;
      for (const auto& id : study.active_nodes(clip)) {
        auto it = counts.find(id);
        if (it == counts.end() || it->second < static_cast<std::size_t>(study.config().quota)) return false;
      }
    }
    return true;
  }

  void fill() {
    while (!quota_met()) join_and_run();
  }
};

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Usage;
}

}  // namespace

TEST_CASE("trial order puts practice first and keeps catches") {
  const std::vector<std::string> practice{"p1", "p2"}, main{"a", "b", "c", "d"}, catches{"x", "y"};
  const auto t = build_trial_order(practice, main, catches, 3);
  REQUIRE(t.size() == 8);
  CHECK(t[0].node_id == "p1");
  CHECK(t[1].node_id == "p2");
  CHECK(t[0].kind == TrialKind::Practice);
  std::multiset<std::string> rest;
  for (std::size_t i = 2; i < t.size(); ++i) rest.insert(t[i].node_id);
  CHECK(rest == std::multiset<std::string>{"a", "b", "c", "d", "x", "y"});
  const auto again = build_trial_order(practice, main, catches, 3);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i].node_id == again[i].node_id);
}

TEST_CASE("stimulus sets: 72 nodes, at most 36 per set") {
  std::vector<StimulusNode> nodes;
  for (int c = 0; c < 36; ++c)
    for (int k = 0; k < 2; ++k)
      nodes.push_back({fmt::format("v{:02d}/L1/{}", c, k ? "UR" : "UL"), fmt::format("v{:02d}", c),
                       c < 18 ? Split::Easy : Split::Hard, c % 3 ? "put" : "wash"});
  const auto sets = partition_stimulus_sets(nodes, 36);
  REQUIRE(sets.size() == 2);
  for (const auto& s : sets) {
    CHECK(s.size() == 36);
    std::set<std::string> clips;
    std::size_t easy = 0;
    for (const auto& id : s) {
      clips.insert(clip_of_node(id));
      easy += id < "v18";
    }
    CHECK(clips.size() == s.size());
    CHECK(easy == 18);
  }
  // one clip with four nodes forces four sets
  std::vector<StimulusNode> four;
  for (const char* c : {"UL", "UR", "BL", "BR"}) four.push_back({std::string("k/L1/") + c, "k", Split::Easy, "put"});
  CHECK(partition_stimulus_sets(four, 36).size() == 4);
}

TEST_CASE("36-clip study gives 43-trial sessions") {
  Fixture fx("svc36");
  Study study("s36", fx.manifest36, study_config_from_json(study_json(7)));
  REQUIRE(study.stimulus_sets().size() == 1);
  CHECK(study.stimulus_sets()[0].size() == 36);
  const Session& s = study.add_participant("alice");
  REQUIRE(s.trials.size() == 43);
  for (int i = 0; i < 5; ++i) CHECK(s.trials[i].kind == TrialKind::Practice);
  std::set<std::string> clips;
  std::size_t catches = 0;
  for (const auto& t : s.trials) {
    if (t.kind == TrialKind::Catch) ++catches;
    if (t.kind == TrialKind::Main) CHECK(clips.insert(clip_of_node(t.node_id)).second);
  }
  CHECK(catches == 2);
  CHECK(clips.size() == 36);
  CHECK(kind_of([&] { study.add_participant("alice"); }) == ErrorKind::Conflict);
}

TEST_CASE("study setup errors") {
  Fixture fx("svc_setup");
  json m = json::parse(testsupport::slurp(fx.info.manifest));
  json only_tests = m;
  only_tests["clips"] = json::array();
  for (const auto& c : m["clips"])
    if (c.value("role", "test") != "catch") only_tests["clips"].push_back(c);
  testsupport::write_file(fx.dir / "mini" / "nocatch.json", only_tests.dump());
  CHECK(kind_of([&] { Study("x", fx.dir / "mini" / "nocatch.json", study_config_from_json(study_json(1))); }) ==
        ErrorKind::Setup);

  json no_tests = m;
  no_tests["clips"] = json::array();
  for (const auto& c : m["clips"])
    if (c.value("role", "test") != "test") no_tests["clips"].push_back(c);
  testsupport::write_file(fx.dir / "mini" / "notests.json", no_tests.dump());
  CHECK(kind_of([&] { Study("x", fx.dir / "mini" / "notests.json", study_config_from_json(study_json(1))); }) ==
        ErrorKind::Setup);
  CHECK(kind_of([] { study_config_from_json(json{{"quota", 20}}); }) == ErrorKind::Usage);
}

TEST_CASE("session sequencing, conflicts, early responses and exclusion") {
  Fixture fx("svc_seq");
  Study study("s", fx.info.manifest, study_config_from_json(study_json(7)));
  Session& s = study.add_participant("p");
  REQUIRE(s.trials.size() == 10);
  const auto first = study.trial_descriptor(s);
  CHECK(first["status"] == "trial");
  CHECK(first["practice"] == true);
  CHECK(first["timing"]["fixation_ms"] == 500);
  CHECK(first["timing"]["prompt_delay_ms"] == 4000);
  // idempotent until answered
  CHECK(study.trial_descriptor(s) == first);

  CHECK(kind_of([&] { study.submit(s.session_id, s.trials[1].node_id, "x", 5000); }) == ErrorKind::Sequencing);
  const auto& r = study.submit(s.session_id, s.trials[0].node_id, "take box", 3500);
  CHECK((r.flags & kEarlyResponse) != 0);
  CHECK(s.cursor == 1);
  CHECK(kind_of([&] { study.submit(s.session_id, s.trials[0].node_id, "take box", 5000); }) == ErrorKind::Conflict);

  // Fail both catches: excluded once the second is scored.
  while (!s.excluded && !s.done()) {
    const Trial t = s.trials[s.cursor];
    study.submit(s.session_id, t.node_id, t.kind == TrialKind::Catch ? kWrong : "take box", 5000);
  }
  CHECK(s.excluded);
  CHECK(study.trial_descriptor(s)["status"] == "excluded");
  CHECK(kind_of([&] { study.submit(s.session_id, s.trials[s.cursor].node_id, "x", 5000); }) == ErrorKind::Sequencing);
  CHECK(study.excluded_participants() == std::set<std::string>{"p"});
  for (const auto& [id, n] : study.response_counts()) CHECK(n == 0);
}

TEST_CASE("adaptive study runs spatial then spatiotemporal phases") {
  Fixture fx("svc_adaptive");
  Study study("s", fx.info.manifest, study_config_from_json(study_json(7)));
  Driver d{study, {}, {}, 0};
  d.target = {{"kit01/L0/root", 13}, {"kit02/L0/root", 6}, {"kit03/L0/root", 4},
              {"kit01/L1/UL", 9},    {"kit01/L1/UR", 6},   {"kit01/L1/BL", 4},
              {"kit01/L1/BR", 8},    {"kit01/L0/root/scr7", 6}};

  // An excluded participant answering every Main trial correctly must not count.
  d.join_and_run(0);
  for (const auto& [node, n] : d.served) d.served[node] = 0;
  CHECK(study.excluded_participants().size() == 1);

  for (int i = 0; i < 12; ++i) d.join_and_run();
  CHECK(kind_of([&] { study.advance("kit01"); }) == ErrorKind::NotReady);
  d.fill();

  const auto kids = study.advance("kit01");
  CHECK(kids == std::vector<std::string>{"kit01/L1/UL", "kit01/L1/BL", "kit01/L1/UR", "kit01/L1/BR"});
  CHECK(study.forest().at("kit01").node("kit01/L0/root").human_accuracy == std::optional<double>(0.65));
  CHECK(study.advance("kit02").empty());
  CHECK(study.phase("kit02") == Phase::Done);
  study.advance("kit03");
  CHECK(kind_of([&] { study.advance("kit02"); }) == ErrorKind::NotReady);

  // Four kit01 children need four sets so nobody sees two of them.
  CHECK(study.stimulus_sets().size() == 4);
  d.fill();
  for (const auto& [sid, s] : study.sessions()) {
    std::set<std::string> clips;
    for (const auto& t : s.trials)
      if (t.kind == TrialKind::Main) CHECK(clips.insert(clip_of_node(t.node_id)).second);
  }

  const auto st = study.advance("kit01");
  REQUIRE(st == std::vector<std::string>{"kit01/L0/root/scr7"});
  CHECK(study.phase("kit01") == Phase::Spatiotemporal);
  const auto& tree = study.forest().at("kit01");
  CHECK(tree.node("kit01/L0/root").mirc_role == MircRole::MIRC);
  for (const char* c : {"UL", "UR", "BL", "BR"})
    CHECK(tree.node(std::string("kit01/L1/") + c).mirc_role == MircRole::SubMIRC);
  CHECK(tree.node("kit01/L1/BR").human_accuracy == std::optional<double>(0.40));

  // Scrambled trials play frames in the plan's order.
  const std::string sid = study.add_participant("viewer").session_id;
  Session& viewer = study.session(sid);
  while (viewer.trials[viewer.cursor].kind != TrialKind::Main || viewer.trials[viewer.cursor].node_id != st[0]) {
    const Trial t = viewer.trials[viewer.cursor];
    study.submit(sid, t.node_id, d.gt(t.node_id), 5000);
  }
  const auto desc = study.trial_descriptor(viewer);
  const auto order = materialize(10, node_scramble_plan(10, "kit01/L0/root", 7));
  REQUIRE(desc["media"]["frames"].size() == order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    CHECK(desc["media"]["frames"][i].get<std::string>() == fmt::format("/v1/studies/s/media/kit01/{}", order[i]));
  study.submit(sid, st[0], "wash plate", 5000);
  d.served[st[0]] = 1;
  d.target[st[0]] = 7;
  while (study.session(sid).cursor < study.session(sid).trials.size()) {
    const Trial t = viewer.trials[viewer.cursor];
    study.submit(sid, t.node_id, d.gt(t.node_id), 5000);
  }

  d.fill();
  CHECK(study.advance("kit01").empty());
  CHECK(study.phase("kit01") == Phase::Done);
  const auto& done = study.forest().at("kit01");
  CHECK(done.node("kit01/L0/root").mirc_role == MircRole::SpatiotemporalMIRC);
  CHECK(done.node("kit01/L0/root/scr7").mirc_role == MircRole::SpatiotemporalSubMIRC);
  CHECK(done.node("kit01/L0/root/scr7").human_accuracy == std::optional<double>(0.35));
  for (const auto& c : study.progress()["clips"]) CHECK(c["phase"] == "done");
}

TEST_CASE("snapshot restores the same study") {
  Fixture fx("svc_snapshot");
  Study study("s", fx.info.manifest, study_config_from_json(study_json(7)));
  Driver d{study, {{"kit01/L0/root", 20}}, {}, 0};
  d.join_and_run();
  const auto snap = study.snapshot();
  const auto back = Study::restore(snap);
  CHECK(back->snapshot() == snap);
  CHECK(back->progress() == study.progress());
}

namespace {

struct LiveServer {
  httplib::Server server;
  Service service;
  int port = 0;
  std::thread thread;

  explicit LiveServer(const std::filesystem::path& data) : service(data) {
    service.mount(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
};

json body(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST_CASE("HTTP /v1 session against a live server") {
  Fixture fx("svc_http");
  const auto data = fx.dir / "data";
  std::string study_id, session_id;
  {
    LiveServer live(data);
    httplib::Client cli("127.0.0.1", live.port);

    auto r = cli.Post("/v1/studies", json{{"manifest", fx.info.manifest.string()}, {"config", study_json(7)}}.dump(),
                      "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    study_id = body(r)["study_id"];
    CHECK(study_id == "study-1");

    CHECK(cli.Post("/v1/studies", "{not json", "application/json")->status == 400);
    CHECK(cli.Get("/v1/studies/nope/progress")->status == 404);

    r = cli.Post("/v1/studies/" + study_id + "/participants", json{{"participant_id", "p1"}}.dump(), "application/json");
    REQUIRE(r->status == 201);
    session_id = body(r)["session_id"];
    CHECK(body(r)["trials"] == 10);
    CHECK(cli.Post("/v1/studies/" + study_id + "/participants", json{{"participant_id", "p1"}}.dump(),
                   "application/json")
              ->status == 409);

    r = cli.Get("/v1/sessions/" + session_id + "/next");
    REQUIRE(r->status == 200);
    json trial = body(r);
    CHECK(trial["practice"] == true);
    CHECK(trial["timing"]["prompt_delay_ms"] == 4000);

    // media route serves the frame file bytes
    const std::string url = trial["media"]["frames"][0];
    r = cli.Get(url);
    REQUIRE(r->status == 200);
    const std::string clip = trial["node_id"].get<std::string>().substr(0, 3);
    CHECK(r->body == testsupport::slurp(fx.dir / "mini" / "frames" / clip / "000000.pgm"));
    CHECK(cli.Get("/v1/studies/" + study_id + "/media/" + clip + "/999")->status == 404);

    // wrong node -> 409
    r = cli.Post("/v1/sessions/" + session_id + "/responses",
                 json{{"node_id", "kit01/L0/root/x"}, {"raw_text", "a"}, {"response_time_ms", 5000}}.dump(),
                 "application/json");
    CHECK(r->status == 409);
    CHECK(body(r)["error"] == "sequencing error");
    CHECK(cli.Post("/v1/sessions/" + session_id + "/responses", json{{"node_id", "x"}}.dump(), "application/json")
              ->status == 400);

    // advance before quota -> 409 NotReady
    r = cli.Post("/v1/studies/" + study_id + "/advance", json{{"clip_id", "kit01"}}.dump(), "application/json");
    CHECK(r->status == 409);
    CHECK(body(r)["error"] == "not ready");

    // answer everything correctly
    for (;;) {
      trial = body(cli.Get("/v1/sessions/" + session_id + "/next"));
      if (trial["status"] != "trial") break;
      const std::string node = trial["node_id"];
      std::string text = "wash plate";
      json m = json::parse(testsupport::slurp(fx.info.manifest));
      for (const auto& c : m["clips"])
        if (node.rfind(c["clip_id"].get<std::string>() + "/", 0) == 0) text = c["gt_label"];
      r = cli.Post("/v1/sessions/" + session_id + "/responses",
                   json{{"node_id", node}, {"raw_text", text}, {"response_time_ms", 4500}}.dump(), "application/json");
      REQUIRE(r->status == 200);
      CHECK(body(r)["excluded"] == false);
    }
    CHECK(trial["status"] == "done");

    r = cli.Get("/v1/studies/" + study_id + "/progress");
    REQUIRE(r->status == 200);
    CHECK(body(r)["participants"] == 1);
  }

  // Restart on the same data directory: state survives, events were appended.
  Service restarted(data);
  const auto progress = restarted.progress(study_id);
  CHECK(progress["participants"] == 1);
  CHECK(restarted.next_trial(session_id)["status"] == "done");
  std::ifstream events(data / study_id / "events.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(events, line);) {
    CHECK_NOTHROW(json::parse(line));
    ++lines;
  }
  CHECK(lines == 12);  // create + join + 10 responses
}

TEST_CASE("error kinds map to HTTP statuses") {
  CHECK(http_status(ErrorKind::Parse) == 400);
  CHECK(http_status(ErrorKind::NotFound) == 404);
  CHECK(http_status(ErrorKind::Sequencing) == 409);
  CHECK(http_status(ErrorKind::Conflict) == 409);
  CHECK(http_status(ErrorKind::NotReady) == 409);
  CHECK(http_status(ErrorKind::Setup) == 422);
}
