#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <map>
#include <thread>

#include "../support/fixtures.h"
#include "../support/schema_check.h"
#include "pedal/error.h"
#include "pedal/journal.h"
#include "pedal/metrics.h"
#include "pedal/service.h"
#include "pedal/simulator.h"

using namespace pedal;
using nlohmann::json;

namespace {

const schema_check::Validator& validator() {
  static const auto v = schema_check::Validator::load(PEDAL_SOURCE_DIR "/schema/api.schema.json");
  return v;
}

void check_schema(const std::string& def, const json& body) {
  const auto errors = validator().check(def, body);
  for (const auto& e : errors) FAIL_CHECK(def << " " << e);
}

void check_response(const ApiResponse& r, const std::string& def) {
  check_schema(r.status == 200 ? def : "Error", r.body);
}

struct Rig {
  fixture::TempDir dir;
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1000);
  ServiceConfig config;

  explicit Rig(const Corpus& corpus, PolicyKind kind = PolicyKind::Estimator, std::size_t warmup = 0) {
    write_corpus_tsv(corpus, dir / "corpus.tsv");
    config.data_dir = dir / "data";
    config.corpus_path = dir / "corpus.tsv";
    config.scheduler.policy = {kind, 3};
    config.scheduler.params.warmup = warmup;
  }

  Session session() {
    auto clock = now;
    return Session(config, [clock] { return *clock; });
  }
};

Corpus synthetic(std::size_t n, std::uint64_t seed = 21) {
  SyntheticParams p;
  p.segments = n;
  p.seed = seed;
  return make_synthetic_corpus(p);
}

json edit(const std::string& text, const std::string& editor = "") {
  return {{"edited_text", text}, {"editor_id", editor}};
}

std::string gold_for(Session& s, SegmentId id) {
  std::string out;
  s.with_scheduler([&](Scheduler& sc) { out = *sc.corpus()[id].reference; });
  return out;
}

}  // namespace

TEST_CASE("the shipped schema describes every endpoint payload") {
  const auto& root = validator().root();
  for (const auto& [endpoint, statuses] : root.at("endpoints").items())
    for (const auto& [status, def] : statuses.items()) CHECK_MESSAGE(root.at("$defs").contains(def.get<std::string>()), endpoint);
}

TEST_CASE("fresh session") {
  Rig rig(synthetic(12));
  auto s = rig.session();
  const auto st = s.stats();
  check_response(st, "Stats");
  CHECK(st.body["counts"]["pending"] == 12);
  CHECK(st.body["counts"]["post_edited"] == 0);
  CHECK(st.body["counts"]["in_progress"] == 0);
  CHECK(st.body["counts"]["auto_closed"] == 0);
  CHECK(st.body["prequential"]["samples"] == 0);
  CHECK(st.body["prequential"]["pearson_r"].is_null());
  CHECK(st.body["pct_post_edited"] == 0.0);
  check_response(s.health(), "Health");
  CHECK(s.health().body["session"] == true);
  check_response(s.flags(), "Flags");
  check_response(s.snapshot(), "Snapshot");
}

TEST_CASE("next serves the highest estimate and marks it in progress") {
  Rig rig(fixture::corpus({{"a", {"x"}, "x"}, {fixture::words(9), {"x"}, "x"}}));
  auto s = rig.session();
  s.with_scheduler([](Scheduler& sc) {
    sc.set_model(fixture::linear_model(sc.layout().names(), {{"src.token_count", 0.1}}, 0.0));
  });
  const auto r = s.next("");
  check_response(r, "NextResponse");
  CHECK(r.body["status"] == "ok");
  CHECK(r.body["task"]["segment_id"] == 1);
  CHECK(r.body["task"]["predicted_ter"].get<double>() == doctest::Approx(0.9));
  CHECK(r.body["task"]["hypothesis_text"] == "x");
  CHECK(r.body["queue"]["in_progress"] == 1);

  const auto second = s.next("");
  CHECK(second.body["task"]["segment_id"] == 0);
  CHECK(second.body["task"]["predicted_ter"].get<double>() == doctest::Approx(0.1));

  const auto drained = s.next("");
  check_response(drained, "NextResponse");
  CHECK(drained.body["status"] == "drained");
  CHECK(drained.body["task"].is_null());
}

TEST_CASE("a named editor holds one claim") {
  Rig rig(synthetic(5));
  auto s = rig.session();
  const auto a = s.next("ann");
  const auto b = s.next("ann");
  CHECK(a.body["task"]["segment_id"] == b.body["task"]["segment_id"]);
  CHECK(a.body["task"]["editor_id"] == "ann");
  const auto c = s.next("bob");
  CHECK(c.body["task"]["segment_id"] != a.body["task"]["segment_id"]);

  const std::string id = std::to_string(a.body["task"]["segment_id"].get<SegmentId>());
  const auto stolen = s.post_edit(id, edit("x", "bob"));
  CHECK(stolen.status == 409);
  check_response(stolen, "PostEditResponse");
  CHECK(s.post_edit(id, edit("x", "ann")).status == 200);
}

TEST_CASE("post-edit feedback") {
  Rig rig(fixture::corpus({{"a", {"a b c d"}, "a b c d"}, {"b", {"e f g"}, "e f g"}}));
  auto s = rig.session();
  s.with_scheduler([](Scheduler& sc) { sc.set_model(fixture::linear_model(sc.layout().names(), {}, 0.1)); });

  SUBCASE("unchanged text has zero TER") {
    const auto task = s.next("ann").body["task"];
    const auto r = s.post_edit(std::to_string(task["segment_id"].get<int>()), edit(task["hypothesis_text"], "ann"));
    check_response(r, "PostEditResponse");
    CHECK(r.status == 200);
    CHECK(r.body["realized_ter"] == 0.0);
    CHECK(r.body["seq"] == 1);
    CHECK(r.body["sanity_flag"].is_null());
    CHECK(r.body["queue"]["post_edited"] == 1);
    CHECK(r.body["pct_post_edited"] == 50.0);
  }
  SUBCASE("large discrepancy carries a sanity flag") {
    s.next("ann");
    const auto r = s.post_edit("0", edit("a x y z", "ann"));
    check_response(r, "PostEditResponse");
    REQUIRE(r.body["sanity_flag"].is_object());
    CHECK(r.body["sanity_flag"]["discrepancy"].get<double>() == doctest::Approx(0.65));
    CHECK(r.body["discrepancy"].get<double>() == doctest::Approx(0.65));
    const auto flags = s.flags();
    check_response(flags, "Flags");
    CHECK(flags.body["flags"].size() == 1);
    CHECK(flags.body["flags"][0]["editor_id"] == "ann");
  }
}

TEST_CASE("error statuses") {
  Rig rig(synthetic(4));
  auto s = rig.session();
  CHECK(s.post_edit("99", edit("x")).status == 404);
  CHECK(s.post_edit("abc", edit("x")).status == 404);
  CHECK(s.post_edit("0", edit("x")).status == 409);
  CHECK(s.post_edit("0", json::array()).status == 400);
  CHECK(s.post_edit("0", {{"edited_text", 3}}).status == 400);
  CHECK(s.post_edit("0", {{"edited_text", "x"}, {"editor_id", 5}}).status == 400);
  for (const auto& r : {s.post_edit("99", edit("x")), s.post_edit("0", edit("x")), s.post_edit("0", json())})
    check_response(r, "PostEditResponse");

  fixture::TempDir empty;
  ServiceConfig c;
  c.data_dir = empty / "data";
  Session none(c);
  CHECK_FALSE(none.active());
  CHECK(none.health().body["session"] == false);
  for (const auto& r : {none.next("x"), none.stats(), none.snapshot(), none.flags(), none.post_edit("0", edit("x"))}) {
    CHECK(r.status == 503);
    CHECK(r.body["error"]["code"] == "no_session");
    check_response(r, "Stats");
  }
}

TEST_CASE("expired leases return segments to the queue") {
  Rig rig(synthetic(3));
  auto s = rig.session();
  const auto a = s.next("ann").body["task"];
  *rig.now += 31 * 60 * 1000;
  const auto b = s.next("bob").body["task"];
  CHECK(b["segment_id"] == a["segment_id"]);
  const auto late = s.post_edit(std::to_string(a["segment_id"].get<int>()), edit("x", "ann"));
  CHECK(late.status == 409);
}

TEST_CASE("journal, stats and offline recomputation agree") {
  const auto corpus = synthetic(30);
  Rig rig(corpus, PolicyKind::Estimator, 5);
  std::vector<double> blind;
  std::string snapshot_before;
  {
    auto s = rig.session();
    for (int k = 0; k < 12; ++k) {
      const auto task = s.next("ann").body["task"];
      const auto id = task["segment_id"].get<SegmentId>();
      // Every third edit leaves the hypothesis alone.
      const std::string text = k % 3 == 0 ? task["hypothesis_text"].get<std::string>() : gold_for(s, id);
      const auto r = s.post_edit(std::to_string(id), edit(text, "ann"));
      REQUIRE(r.status == 200);
      blind.push_back(r.body["blind_prediction"]);
    }
    const auto st = s.stats();
    CHECK(st.body["prequential"]["samples"] == 12);
    CHECK(st.body["counts"]["post_edited"] == 12);

    const auto events = read_journal(rig.config.journal_path());
    REQUIRE(events.size() == 12);
    Corpus offline = ingest_corpus(rig.config.corpus_path, rig.config.ingest);
    for (std::size_t i = 0; i < events.size(); ++i) {
      CHECK(events[i].blind_prediction == doctest::Approx(blind[i]).epsilon(1e-6));
      auto& seg = offline[events[i].segment_id];
      seg.state = SegmentState::PostEdited;
      seg.post_edit = PostEditRecord{events[i].hypothesis_index, events[i].edited_text, events[i].editor_id,
                                     events[i].realized_target};
    }
    CHECK(st.body["mean_corpus_quality"].get<double>() == metrics::corpus_quality(offline));
    snapshot_before = s.snapshot().body["snapshot"];
  }

  SUBCASE("a restarted session replays the journal") {
    auto s = rig.session();
    CHECK(s.snapshot().body["snapshot"] == snapshot_before);
    CHECK(s.stats().body["counts"]["post_edited"] == 12);
    const auto task = s.next("ann").body["task"];
    const auto r = s.post_edit(std::to_string(task["segment_id"].get<int>()), edit("w", "ann"));
    CHECK(r.body["seq"] == 13);
    CHECK(read_journal(rig.config.journal_path()).size() == 13);
  }
  SUBCASE("a journal without a corpus is refused") {
    auto c = rig.config;
    c.corpus_path.clear();
    CHECK_THROWS_AS(Session{c}, StateError);
  }
}

TEST_CASE("API-driven session matches the simulator") {
  const auto corpus = synthetic(60, 5);
  Rig rig(corpus, PolicyKind::Estimator, 10);
  auto s = rig.session();
  while (true) {
    const auto r = s.next("simulator");
    if (r.body["status"] == "drained") break;
    const auto id = r.body["task"]["segment_id"].get<SegmentId>();
    REQUIRE(s.post_edit(std::to_string(id), edit(gold_for(s, id), "simulator")).status == 200);
  }
  RunConfig rc;
  rc.policy = PolicyKind::Estimator;
  rc.seed = 3;
  rc.scheduler.warmup = 10;
  const auto report = simulate(ingest_corpus(rig.config.corpus_path, rig.config.ingest), rc);
  CHECK(s.snapshot().body["snapshot"] == report.snapshot);
  CHECK(s.stats().body["mean_corpus_quality"].get<double>() == report.curve.back().quality);
}

TEST_CASE("ingest by upload") {
  fixture::TempDir dir;
  ServiceConfig c;
  c.data_dir = dir / "data";
  {
    Session s(c);
    const auto bad = s.ingest("only-one-column\n", {});
    CHECK(bad.status == 400);
    CHECK(bad.body["error"]["message"].get<std::string>().find("line 1") != std::string::npos);
    check_response(bad, "IngestResponse");

    const auto ok = s.ingest("Hallo Welt\tHello world\tHello, world!\tHello, world!\nDanke\tThanks\tThank you\tThank you\n", {});
    check_response(ok, "IngestResponse");
    CHECK(ok.status == 200);
    CHECK(ok.body["segments"] == 2);
    CHECK(s.active());
    CHECK(s.ingest("a\tb\tc\td\n", {}).status == 409);
    const auto id = s.next("ann").body["task"]["segment_id"].get<int>();
    CHECK(s.post_edit(std::to_string(id), edit("Thank you", "ann")).status == 200);
  }
  Session again(c);
  REQUIRE(again.active());
  CHECK(again.stats().body["counts"]["post_edited"] == 1);
}

TEST_CASE("service configuration") {
  const auto c = ServiceConfig::from_json(
      {{"port", 9000}, {"data_dir", "d"}, {"corpus", "c.tsv"}, {"policy", "random"}, {"seed", 4},
       {"scheduler", {{"tau_close", 0.05}, {"warmup", 3}}}, {"lease_minutes", 1}, {"api_token", "t"}},
      "/base");
  CHECK(c.port == 9000);
  CHECK(c.data_dir == "/base/d");
  CHECK(c.corpus_path == "/base/c.tsv");
  CHECK(c.scheduler.policy.kind == PolicyKind::Random);
  CHECK(c.scheduler.policy.seed == 4);
  CHECK(c.scheduler.params.tau_close == 0.05);
  CHECK(c.scheduler.params.warmup == 3);
  CHECK(c.lease_ms == 60000);
  CHECK(c.api_token == "t");
  CHECK(c.to_json()["api_token_set"] == true);

  std::map<std::string, std::string> env{{"PEDAL_PORT", "7001"}, {"PEDAL_DATA_DIR", "/x"}, {"PEDAL_API_TOKEN", "s"}};
  auto lookup = [&](const char* k) -> const char* {
    const auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  auto d = c;
  d.apply_env(lookup);
  CHECK(d.port == 7001);
  CHECK(d.data_dir == "/x");
  CHECK(d.api_token == "s");
  CHECK(d.corpus_path == "/base/c.tsv");
  env["PEDAL_PORT"] = "70a";
  CHECK_THROWS_AS(d.apply_env(lookup), ParseError);

  CHECK_THROWS_AS(ServiceConfig::from_json({{"port", 70000}}), ParseError);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"port", "x"}}), ParseError);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"scheduler", {{"rescore_interval", 0}}}}), ParseError);
}

TEST_CASE("HTTP front end") {
  Rig rig(synthetic(8));
  rig.config.port = 0;
  rig.config.api_token = "secret";
  HttpService service(rig.config);
  const int port = service.bind();
  std::thread server([&] { service.run(); });

  httplib::Client cli("127.0.0.1", port);
  const httplib::Headers auth{{"Authorization", "Bearer secret"}};

  auto get = [&](const std::string& path, const httplib::Headers& h) {
    auto r = cli.Get(path, h);
    REQUIRE(r);
    return std::make_pair(r->status, json::parse(r->body));
  };

  auto [hs, health] = get("/health", {});
  CHECK(hs == 200);
  check_schema("Health", health);

  auto [us, unauth] = get("/stats", {});
  CHECK(us == 401);
  check_schema("Error", unauth);
  CHECK(get("/stats", {{"X-API-Token", "secret"}}).first == 200);

  auto [ns, next] = get("/queue/next?editor_id=ann", auth);
  CHECK(ns == 200);
  check_schema("NextResponse", next);
  const auto id = next["task"]["segment_id"].get<int>();

  auto post = cli.Post("/segments/" + std::to_string(id) + "/postedit", auth,
                       edit(next["task"]["hypothesis_text"], "ann").dump(), "application/json");
  REQUIRE(post);
  CHECK(post->status == 200);
  check_schema("PostEditResponse", json::parse(post->body));

  auto again = cli.Post("/segments/" + std::to_string(id) + "/postedit", auth, edit("x", "ann").dump(),
                        "application/json");
  CHECK(again->status == 409);
  check_schema("Error", json::parse(again->body));
  auto garbage = cli.Post("/segments/0/postedit", auth, "{not json", "application/json");
  CHECK(garbage->status == 400);
  auto missing = cli.Post("/segments/77/postedit", auth, edit("x").dump(), "application/json");
  CHECK(missing->status == 404);

  for (const auto& [path, def] : std::vector<std::pair<std::string, std::string>>{
           {"/stats", "Stats"}, {"/model/snapshot", "Snapshot"}, {"/flags", "Flags"}}) {
    auto [st, body] = get(path, auth);
    CHECK(st == 200);
    check_schema(def, body);
  }
  auto [nf, notfound] = get("/nowhere", auth);
  CHECK(nf == 404);
  check_schema("Error", notfound);

  httplib::MultipartFormDataItems items{{"corpus", "a\tb\tc\td\n", "c.tsv", "text/tab-separated-values"}};
  auto ingest = cli.Post("/ingest", auth, items);
  REQUIRE(ingest);
  CHECK(ingest->status == 409);
  check_schema("Error", json::parse(ingest->body));

  service.stop();
  server.join();
}

TEST_CASE("HTTP ingest starts a session") {
  fixture::TempDir dir;
  ServiceConfig c;
  c.data_dir = dir / "data";
  c.port = 0;
  HttpService service(c);
  const int port = service.bind();
  std::thread server([&] { service.run(); });
  httplib::Client cli("127.0.0.1", port);

  CHECK(cli.Get("/queue/next")->status == 503);
  httplib::MultipartFormDataItems items{
      {"corpus", "x\tHallo Welt\tHello world\tHello, world!\tHello, world!\n", "c.tsv", "text/plain"},
      {"source", "1", "", ""},
      {"hypothesis", "2", "", ""},
      {"post_edit", "3", "", ""},
      {"reference", "4", "", ""},
      {"langs", "de-en", "", ""}};
  auto r = cli.Post("/ingest", items);
  REQUIRE(r);
  CHECK(r->status == 200);
  check_schema("IngestResponse", json::parse(r->body));
  auto next = json::parse(cli.Get("/queue/next")->body);
  CHECK(next["task"]["source_text"] == "Hallo Welt");
  CHECK(next["task"]["source_lang"] == "de");

  httplib::MultipartFormDataItems bad{{"corpus", "a\tb\n", "c.tsv", "text/plain"}, {"source", "x", "", ""}};
  CHECK(cli.Post("/ingest", bad)->status == 400);

  service.stop();
  server.join();
}
