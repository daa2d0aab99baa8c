#include <doctest.h>

#include <set>
#include <thread>

#include "harness_support.hpp"
#include "topicflow/corpus.hpp"
#include "topicflow/digest.hpp"
#include "topicflow/manifest.hpp"
#include "topicflow/response_store.hpp"
#include "topicflow/service.hpp"

using namespace topicflow;
using namespace topicflow::harness;
using namespace testing;
using evaluation::CoderResponse;
using nlohmann::json;

namespace {

const std::string kData = TOPICFLOW_DATA_DIR;
const std::string kFixtures = TOPICFLOW_FIXTURE_DIR;

CoderResponse response(const std::string& task, const std::string& coder, std::optional<std::size_t> choice) {
  return {task, coder, choice, "2026-03-01T10:00:00Z", 99};
}

std::unordered_map<std::string, std::size_t> counts(std::initializer_list<std::string> ids, std::size_t n) {
  std::unordered_map<std::string, std::size_t> m;
  for (const auto& id : ids) m[id] = n;
  return m;
}

RunManifest sample_manifest(const TempDir& dir) {
  std::ofstream(dir / "input.txt") << "some input\n";
  RunManifest m;
  m.config["fit"] = {{"K", 5}, {"alpha", 10.0}};
  m.seeds["fit"] = 7;
  m.add_file("dtm", dir / "input.txt");
  m.stages.push_back({"fit", {{"K", 5}}, 12.5});
  m.created_at = "2026-03-01T10:00:00Z";
  return m;
}

// Everything except the creation time, which is the one field that changes
// between otherwise identical runs.
json masked(json j) {
  j.erase("created_at");
  return j;
}

}  // namespace

TEST_CASE("manifest round trip and validation") {
  TempDir dir;
  const auto m = sample_manifest(dir);
  CHECK(m.input_digests.at("dtm").file == "input.txt");
  CHECK(m.input_digests.at("dtm").sha256 == sha256_hex("some input\n"));
  CHECK(m.config_digest() == sha256_hex(m.config.dump()));

  write_manifest(m, dir / "manifest.json");
  const auto back = read_manifest(dir / "manifest.json");
  CHECK(to_json(back) == to_json(m));
  CHECK(back.config_digest() == m.config_digest());
  CHECK(to_json(m)["artifact_version"] == "topicflow 1.0.0");
  CHECK(to_json(m)["config_digest"] == m.config_digest());

  auto tampered = to_json(m);
  tampered["config"]["fit"]["K"] = 6;
  std::ofstream(dir / "bad.json") << tampered.dump();
  CHECK(error_code([&] { read_manifest(dir / "bad.json"); }) == "CorruptInput");
  std::ofstream(dir / "garbage.json") << "{not json";
  CHECK(error_code([&] { read_manifest(dir / "garbage.json"); }) == "CorruptInput");

  RunManifest empty;
  CHECK(error_code([&] { write_manifest(empty, dir / "empty.json"); }) == "InvalidArgument");
  CHECK_FALSE(fs::exists(dir / "empty.json"));
  CHECK(error_code([&] { empty.add_file("x", dir / "missing"); }) == "IoError");
}

TEST_CASE("config digest tracks the resolved preprocessing config") {
  const json base = json::parse(slurp(kFixtures + "/preprocess_config.json"));
  auto digest_of = [&](const json& j) {
    RunManifest m;
    m.config["prep"] = corpus::resolved_config(corpus::parse_config(j, kFixtures));
    return m.config_digest();
  };
  const auto d0 = digest_of(base);
  CHECK(digest_of(base) == d0);

  auto more = base;
  more["stopwords"]["add"].push_back("study");
  CHECK(digest_of(more) != d0);

  auto longer = base;
  longer["min_token_len"] = 4;
  CHECK(digest_of(longer) != d0);
}

TEST_CASE("response store round trip and validation") {
  TempDir dir;
  const fs::path log = dir / "responses.jsonl";
  {
    ResponseStore store(log, counts({"a:word:0", "a:word:1"}, 6));
    store.record(response("a:word:0", "alice", 2));
    store.record(response("a:word:1", "alice", std::nullopt));
    store.record(response("a:word:0", "bob", 5));
    CHECK(error_code([&] { store.record(response("a:word:0", "alice", 3)); }) == "DuplicateResponse");
    CHECK(error_code([&] { store.record(response("a:word:9", "alice", 0)); }) == "UnknownTask");
    CHECK(error_code([&] { store.record(response("a:word:1", "bob", 6)); }) == "InvalidChoice");
    CHECK(store.responses().size() == 3);
    CHECK(store.find("a:word:1", "alice")->skipped());
    CHECK_FALSE(store.find("a:word:1", "bob").has_value());
  }
  CHECK(slurp(log).find("\"SKIP\"") != std::string::npos);

  ResponseStore reopened(log, counts({"a:word:0", "a:word:1"}, 6));
  CHECK(reopened.quarantined() == 0);
  const auto all = reopened.responses();
  REQUIRE(all.size() == 3);
  CHECK(all[0] == response("a:word:0", "alice", 2));
  CHECK(all[1] == response("a:word:1", "alice", std::nullopt));
  CHECK(all[2] == response("a:word:0", "bob", 5));
  CHECK(error_code([&] { reopened.record(response("a:word:0", "bob", 1)); }) == "DuplicateResponse");
}

TEST_CASE("response store quarantines a torn final write") {
  TempDir dir;
  const fs::path log = dir / "responses.jsonl";
  {
    ResponseStore store(log, counts({"t0", "t1", "t2"}, 4));
    for (const char* t : {"t0", "t1", "t2"}) store.record(response(t, "alice", 1));
  }
  // Simulate a crash part-way through a fourth append.
  const std::string full = to_json(response("t0", "bob", 3)).dump();
  {
    std::ofstream out(log, std::ios::app);
    out << full.substr(0, full.size() / 2);
  }
  const auto raw = read_response_log(log);
  CHECK(raw.responses.size() == 3);
  CHECK(raw.bad_lines.size() == 1);

  ResponseStore store(log, counts({"t0", "t1", "t2"}, 4));
  CHECK(store.quarantined() == 1);
  CHECK(store.responses().size() == 3);
  CHECK(slurp(fs::path(log.string() + ".quarantine")) == full.substr(0, full.size() / 2) + "\n");
  CHECK(read_response_log(log).bad_lines.empty());
  // The interrupted response can be submitted again.
  store.record(response("t0", "bob", 3));
  CHECK(read_response_log(log).responses.size() == 4);
}

TEST_CASE("response store quarantines corrupt and duplicate records") {
  TempDir dir;
  const fs::path log = dir / "responses.jsonl";
  {
    std::ofstream out(log);
    out << to_json(response("t0", "alice", 0)).dump() << "\n";
    out << "this is not json\n";
    out << to_json(response("t0", "alice", 1)).dump() << "\n";
    out << to_json(response("t1", "alice", 2)).dump() << "\n";
  }
  ResponseStore store(log, counts({"t0", "t1"}, 4));
  CHECK(store.quarantined() == 2);
  REQUIRE(store.responses().size() == 2);
  CHECK(store.find("t0", "alice")->choice == 0u);  // first record wins
}

TEST_CASE("response store serializes concurrent appends") {
  TempDir dir;
  const fs::path log = dir / "responses.jsonl";
  std::unordered_map<std::string, std::size_t> ids;
  for (int i = 0; i < 50; ++i) ids["t" + std::to_string(i)] = 4;
  {
    ResponseStore store(log, ids);
    std::vector<std::thread> threads;
    for (int c = 0; c < 8; ++c)
      threads.emplace_back([&, c] {
        for (int i = 0; i < 50; ++i) store.record(response("t" + std::to_string(i), "c" + std::to_string(c), i % 4));
      });
    for (auto& t : threads) t.join();
  }
  const auto back = read_response_log(log);
  CHECK(back.bad_lines.empty());
  CHECK(back.responses.size() == 400);
}

TEST_CASE("cli usage and error reporting") {
  auto r = cli({"frobnicate"});
  CHECK(r.code == 2);
  r = cli({});
  CHECK(r.code == 2);
  r = cli({"fit", "--dtm", "x.dtm"});
  CHECK(r.code == 2);
  r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("searchk") != std::string::npos);

  TempDir dir;
  r = cli({"fit", "--dtm", dir / "missing.dtm", "--out", dir / "m.bin", "--k", "3"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: module=corpus code=IoError message=", 0) == 0);

  std::ofstream(dir / "junk.dtm") << "junk";
  r = cli({"fit", "--dtm", dir / "junk.dtm", "--out", dir / "m.bin", "--k", "3"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: module=io code=CorruptFile message=", 0) == 0);

  r = cli({"manifest", dir / "nothing.json"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: module=harness code=IoError", 0) == 0);
}

TEST_CASE("cli searchk writes one row per grid entry") {
  TempDir dir;
  const auto s = generate_lda(3, 40, 60, 40, 0.1, 0.05, 5);
  corpus::write_dtm(s.dtm, fs::path(dir / "c.dtm"));
  const auto r = cli({"searchk", "--dtm", dir / "c.dtm", "--k", "15,5,10", "--out", dir / "grid", "--iterations",
                      "40", "--burn-in", "10", "--threads", "2", "--no-timing"});
  REQUIRE(r.code == 0);
  std::istringstream table(slurp(dir / "grid.diagnostics.tsv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(table, line);) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[1].rfind("5\t", 0) == 0);
  CHECK(lines[2].rfind("10\t", 0) == 0);
  CHECK(lines[3].rfind("15\t", 0) == 0);
  CHECK(r.out == slurp(dir / "grid.diagnostics.tsv"));

  const auto m = read_manifest(dir / "manifest.json");
  REQUIRE(m.stages.size() == 1);
  CHECK(m.stages[0].name == "searchk");
  CHECK(m.stages[0].wall_time_ms == 0.0);
  CHECK(m.config["searchk"]["grid"] == json({5, 10, 15}));
  CHECK(m.seeds.count("searchk.K=10") == 1);

  CHECK(cli({"searchk", "--dtm", dir / "c.dtm", "--k", "1,3", "--out", dir / "bad"}).code == 1);
}

TEST_CASE("sample pipeline manifest matches golden") {
  TempDir dir;
  const std::string corpus = kData + "/sample_corpus.jsonl", config = kData + "/sample_config.json";
  REQUIRE(cli({"prep", "--corpus", corpus, "--config", config, "--out", dir / "corpus.dtm", "--no-timing"}).code == 0);
  REQUIRE(cli({"fit", "--dtm", dir / "corpus.dtm", "--out", dir / "model.bin", "--k", "10", "--iterations", "200",
               "--burn-in", "50", "--seed", "3", "--no-timing"})
              .code == 0);
  REQUIRE(cli({"diagnose", "--dtm", dir / "corpus.dtm", "--model", dir / "model.bin", "--out", dir / "diag",
               "--no-timing"})
              .code == 0);
  REQUIRE(cli({"tasks", "--model", dir / "model.bin", "--dtm", dir / "corpus.dtm", "--corpus", corpus, "--out",
               dir / "tasks.jsonl", "--no-timing"})
              .code == 0);

  const auto shown = cli({"manifest", dir / "manifest.json"});
  REQUIRE(shown.code == 0);
  const json m = masked(json::parse(shown.out));
  std::vector<std::string> stages;
  for (const auto& s : m["stages"]) stages.push_back(s["name"]);
  CHECK(stages == std::vector<std::string>{"prep", "fit", "diagnose", "tasks"});
  CHECK(m["config"]["fit"]["alpha"] == 5.0);
  const auto stop = m["config"]["prep"]["stopwords"].get<std::vector<std::string>>();
  CHECK(std::find(stop.begin(), stop.end(), "also") != stop.end());

  const fs::path golden = kFixtures + "/sample_manifest.json";
  if (std::getenv("TOPICFLOW_REGENERATE_GOLDEN")) std::ofstream(golden) << m.dump(2) << "\n";
  CHECK(m == json::parse(slurp(golden)));
}

TEST_CASE("service session config") {
  TempDir dir;
  const auto f = make_session(dir.path());
  const auto config = load_service_config(f.config);
  REQUIRE(config.sessions.size() == 1);
  CHECK(config.admin_token == "admin-secret");
  CHECK(config.sessions[0].tasks == dir.path() / "tasks.jsonl");
  CHECK(find_session(config, "pilot").coders.at("tok-bob") == "bob");
  CHECK(error_code([&] { find_session(config, "other"); }) == "UnknownSession");

  ::setenv("TOPICFLOW_ADMIN_TOKEN", "from-env", 1);
  CHECK(load_service_config(f.config).admin_token == "from-env");
  ::unsetenv("TOPICFLOW_ADMIN_TOKEN");

  std::ofstream(dir / "broken.json") << R"({"sessions": [{"id": "x"}]})";
  CHECK(error_code([&] { load_service_config(dir / "broken.json"); }) == "InvalidConfig");

  CHECK_FALSE(is_closed(config.sessions[0]));
  REQUIRE(cli({"close", "--config", f.config.string(), "--session", "pilot"}).code == 0);
  CHECK(is_closed(config.sessions[0]));
  CHECK(cli({"close", "--config", f.config.string(), "--session", "nope"}).code == 1);
}

TEST_CASE("service scripted session") {
  TempDir dir;
  const auto f = make_session(dir.path());
  REQUIRE(f.set.word.size() + f.set.topic.size() == 10);
  Service service(load_service_config(f.config));
  const int port = service.start("127.0.0.1", 0);
  httplib::Client c("127.0.0.1", port);
  const std::string base = "/api/sessions/pilot";

  std::vector<std::string> payloads;
  auto get = [&](const std::string& path) {
    auto r = c.Get(path);
    REQUIRE(r);
    payloads.push_back(r->body);
    return r;
  };

  auto list = body_of(get("/api/sessions"));
  CHECK(list["sessions"][0]["id"] == "pilot");
  CHECK(list["sessions"][0]["total"] == 10);

  CHECK(get(base + "/next")->status == 400);
  CHECK(get(base + "/next?coder=nobody")->status == 403);
  CHECK(get("/api/sessions/missing/next?coder=tok-alice")->status == 404);
  CHECK(get(base + "/tasks/10?coder=tok-alice")->status == 404);

  // Alice works through the queue; every fourth task is skipped.
  std::set<std::string> seen;
  for (std::size_t step = 0; step < 10; ++step) {
    const auto next = body_of(get(base + "/next?coder=tok-alice"));
    REQUIRE(next["done"] == false);
    const auto& task = next["task"];
    CHECK(task["index"] == step);
    CHECK(task["progress"]["coded"] == step);
    CHECK(task["response"].is_null());
    CHECK(seen.insert(task["task_id"]).second);
    if (task["kind"] == "topic") {
      CHECK(task.contains("snippet"));
      CHECK(task["options"].size() == 4);
    } else {
      CHECK(task["options"].size() == 6);
    }
    const json choice = step % 4 == 3 ? json("SKIP") : json((step * 5) % task["options"].size());
    auto r = post_json(c, base + "/responses", {{"task_id", task["task_id"]}, {"coder", "tok-alice"}, {"choice", choice}});
    REQUIRE(r);
    payloads.push_back(r->body);
    CHECK(r->status == 201);
    CHECK(body_of(r)["progress"]["coded"] == step + 1);

    const auto again = body_of(get(base + "/tasks/" + std::to_string(step) + "?coder=tok-alice"));
    CHECK(again["response"]["choice"] == choice);
    CHECK(again["options"] == task["options"]);

    if (step == 2) {
      const auto p = body_of(get(base + "/progress?coder=tok-alice"));
      CHECK(p == json({{"coded", 3}, {"total", 10}}));
    }
  }
  CHECK(body_of(get(base + "/next?coder=tok-alice"))["done"] == true);

  // Duplicates, bad choices, unknown tasks and malformed bodies.
  const std::string first = f.set.word[0].task_id;
  auto dup = post_json(c, base + "/responses", {{"task_id", first}, {"coder", "tok-alice"}, {"choice", 0}});
  CHECK(dup->status == 409);
  CHECK(body_of(dup)["error"]["code"] == "DuplicateResponse");
  CHECK(post_json(c, base + "/responses", {{"task_id", first}, {"coder", "tok-bob"}, {"choice", 6}})->status == 400);
  CHECK(post_json(c, base + "/responses", {{"task_id", first}, {"coder", "tok-bob"}, {"choice", -1}})->status == 400);
  CHECK(post_json(c, base + "/responses", {{"task_id", "zzz"}, {"coder", "tok-bob"}, {"choice", 0}})->status == 404);
  CHECK(post_json(c, base + "/responses", {{"task_id", first}, {"coder", "tok-eve"}, {"choice", 0}})->status == 403);
  CHECK(c.Post(base + "/responses", "{oops", "application/json")->status == 400);
  CHECK(post_json(c, base + "/responses", {{"task_id", first}})->status == 400);

  // Bob sees the same options, shuffled for him, and his choice is stored
  // against the canonical position.
  bool reordered = false;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto a = body_of(get(base + "/tasks/" + std::to_string(i) + "?coder=tok-alice"));
    const auto b = body_of(get(base + "/tasks/" + std::to_string(i) + "?coder=tok-bob"));
    auto sa = a["options"].get<std::vector<std::string>>(), sb = b["options"].get<std::vector<std::string>>();
    reordered |= sa != sb;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    CHECK(sa == sb);
  }
  CHECK(reordered);
  const auto bob_task = body_of(get(base + "/tasks/0?coder=tok-bob"));
  const auto& w0 = f.set.word[0];
  const auto bob_pick = std::find(bob_task["options"].begin(), bob_task["options"].end(),
                                  json(w0.options[w0.intruder_position])) -
                        bob_task["options"].begin();
  REQUIRE(post_json(c, base + "/responses", {{"task_id", w0.task_id}, {"coder", "tok-bob"}, {"choice", bob_pick}})
              ->status == 201);
  const auto stored = read_response_log(f.responses);
  CHECK(stored.responses.back().coder_id == "bob");
  CHECK(stored.responses.back().choice == w0.intruder_position);
  CHECK(stored.responses.back().shuffle_seed == evaluation::coder_shuffle_seed(w0.gen_seed, "bob"));

  const auto status = body_of(get(base + "/status?coder=tok-alice"));
  CHECK(status["progress"]["coded"] == 10);
  CHECK(status["tasks"][3]["skipped"] == true);
  CHECK(status["closed"] == false);

  // Nothing served before close reveals the answer key.
  for (const auto& p : payloads)
    for (const char* key : {"intruder_position", "gen_seed", "topic_id", "shuffle_seed", "model_id"})
      CHECK_MESSAGE(p.find(key) == std::string::npos, key);

  CHECK(get(base + "/metrics")->status == 409);
  CHECK(c.Post(base + "/close")->status == 403);
  httplib::Headers wrong{{"X-Admin-Token", "guess"}};
  CHECK(c.Post(base + "/close", wrong, "", "application/json")->status == 403);
  httplib::Headers admin{{"X-Admin-Token", f.admin_token}};
  CHECK(c.Post(base + "/close", admin, "", "application/json")->status == 200);
  CHECK(post_json(c, base + "/responses", {{"task_id", f.set.word[1].task_id}, {"coder", "tok-bob"}, {"choice", 0}})
            ->status == 409);

  const auto metrics = get(base + "/metrics");
  REQUIRE(metrics->status == 200);
  const auto offline = cli({"metrics", "--tasks", f.tasks.string(), "--responses", f.responses.string(), "--model",
                            f.model.string()});
  REQUIRE(offline.code == 0);
  CHECK(body_of(metrics) == json::parse(offline.out));
  CHECK(body_of(metrics)["responses"] == 11);
  CHECK(body_of(metrics)["word_intrusion"]["n_skipped"].get<int>() +
            body_of(metrics)["topic_intrusion"]["n_skipped"].get<int>() ==
        2);
  service.stop();

  // A restarted service picks up the stored responses.
  Service restarted(load_service_config(f.config));
  const int port2 = restarted.start("127.0.0.1", 0);
  httplib::Client c2("127.0.0.1", port2);
  CHECK(body_of(c2.Get(base + "/progress?coder=tok-alice")) == json({{"coded", 10}, {"total", 10}}));
  CHECK(body_of(c2.Get(base + "/metrics")) == body_of(metrics));
}

TEST_CASE("metrics with no scored responses are null") {
  TempDir dir;
  const auto f = make_session(dir.path());
  const auto model = inference::read_model(f.model);
  const std::vector<CoderResponse> skips{response(f.set.word[0].task_id, "alice", std::nullopt)};
  const auto m = compute_metrics(f.set, skips, model);
  CHECK(m["word_intrusion"]["model_precision"].is_null());
  CHECK(m["word_intrusion"]["n_skipped"] == 1);
  CHECK(m["topic_intrusion"]["topic_log_odds"].is_null());
  CHECK(error_code([&] { compute_metrics(f.set, std::vector{response("x", "a", 0)}, model); }) == "UnknownTask");
}
