#include <httplib.h>

#include <fstream>
#include <thread>

#include "abtest/abtest.hpp"
#include "abtest/server.hpp"
#include "helpers.hpp"

using namespace eemp;

namespace {

std::vector<ModelOutput> outputs(const std::string& tag, std::size_t n) {
  std::vector<ModelOutput> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "d" + std::to_string(i);
    out.push_back({id, {{Role::speaker, "context " + id}}, tag + " reply " + id});
  }
  return out;
}

std::vector<PairTask> make_tasks(std::size_t n) {
  std::vector<PairTask> tasks;
  for (std::size_t i = 0; i < n; ++i) {
    tasks.push_back({"t" + std::to_string(i), "d" + std::to_string(i), {{Role::speaker, "hi"}}, "L", "R", i % 2 == 0});
  }
  return tasks;
}

Verdict verdict(const std::string& task, const std::string& annotator, std::array<Side, 4> outcomes,
                std::string request_id = "") {
  return {task, annotator, outcomes, "", std::move(request_id)};
}

json verdict_json(const std::string& task, const std::string& annotator, const std::string& request_id = "") {
  json j = {{"task_id", task},
            {"annotator_id", annotator},
            {"outcomes", {{"coherence", "left"}, {"empathy", "right"}, {"informativeness", "tie"}, {"continuity", "left"}}}};
  if (!request_id.empty()) j["request_id"] = request_id;
  return j;
}

std::string ab_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const AbError& e) {
    return e.code();
  }
  return "";
}

struct Workspace {
  test::TempDir dir;
  std::filesystem::path tasks = dir / "tasks.jsonl";
  std::filesystem::path log = dir / "verdicts.jsonl";
  explicit Workspace(std::size_t n) { save_tasks(tasks, make_tasks(n)); }
};

}  // namespace

TEST_SUITE("abtest") {
  TEST_CASE("task construction samples shared ids and is seeded") {
    const auto ours = outputs("ours", 30), base = outputs("base", 25);
    const auto a = build_tasks(ours, base, 10, 4);
    const auto b = build_tasks(ours, base, 10, 4);
    CHECK(a == b);
    CHECK_FALSE(build_tasks(ours, base, 10, 5) == a);
    std::set<std::string> ids;
    for (const auto& t : a) {
      ids.insert(t.dialogue_id);
      const auto& ours_text = t.ours_on_left ? t.response_left : t.response_right;
      const auto& base_text = t.ours_on_left ? t.response_right : t.response_left;
      CHECK(ours_text == "ours reply " + t.dialogue_id);
      CHECK(base_text == "base reply " + t.dialogue_id);
      CHECK(std::stoi(t.dialogue_id.substr(1)) < 25);
    }
    CHECK(ids.size() == 10);
    CHECK(a[0].task_id == "t0001");
    CHECK_THROWS_AS(build_tasks(ours, base, 26, 1), Error);
  }

  TEST_CASE("side assignment stays within binomial bounds") {
    const auto ours = outputs("ours", 200), base = outputs("base", 200);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::size_t left = 0;
      for (const auto& t : build_tasks(ours, base, 200, seed)) left += t.ours_on_left;
      // Mean 100, sd ~7.1; 130 is over 4 sd out.
      CHECK(left >= 70);
      CHECK(left <= 130);
    }
  }

  TEST_CASE("annotator payload is blinded") {
    const auto t = make_tasks(1)[0];
    const auto payload = task_payload(t);
    CHECK(payload.contains("task_id"));
    CHECK(payload.contains("response_left"));
    CHECK_FALSE(payload.contains("ours_on_left"));
    CHECK_FALSE(payload.contains("ours_side"));
    CHECK_FALSE(payload.contains("dialogue_id"));
    CHECK(payload.dump().find("ours") == std::string::npos);
    CHECK(task_from_json(task_to_json(t)) == t);
  }

  TEST_CASE("verdict validation") {
    CHECK_NOTHROW(verdict_from_json(verdict_json("t0", "a")));
    auto missing = verdict_json("t0", "a");
    missing["outcomes"].erase("empathy");
    CHECK(ab_code([&] { verdict_from_json(missing); }) == "malformed_verdict");
    auto extra = verdict_json("t0", "a");
    extra["outcomes"]["fluency"] = "left";
    CHECK(ab_code([&] { verdict_from_json(extra); }) == "malformed_verdict");
    auto bad_side = verdict_json("t0", "a");
    bad_side["outcomes"]["empathy"] = "both";
    CHECK(ab_code([&] { verdict_from_json(bad_side); }) == "malformed_verdict");
    CHECK(ab_code([&] { verdict_from_json(json::array()); }) == "malformed_verdict");
    CHECK(ab_code([&] { verdict_from_json(verdict_json("t0", "")); }) == "malformed_verdict");
  }

  TEST_CASE("overall side is a plurality with ties going to tie") {
    using S = Side;
    CHECK(overall_side({S::left, S::left, S::right, S::tie}) == S::left);
    CHECK(overall_side({S::left, S::left, S::right, S::right}) == S::tie);
    CHECK(overall_side({S::tie, S::tie, S::right, S::left}) == S::tie);
    CHECK(overall_side({S::right, S::right, S::right, S::left}) == S::right);
    CHECK(overall_side({S::left, S::right, S::tie, S::tie}) == S::tie);
  }

  TEST_CASE("ten tasks by three annotators, counted by hand") {
    Workspace ws(10);
    AbService svc(ws.tasks, ws.log);
    using S = Side;
    for (int k = 0; k < 3; ++k) {
      const std::string who = "ann" + std::to_string(k);
      for (int i = 0; i < 10; ++i) {
        auto t = svc.next_task(who);
        REQUIRE(t.has_value());
        const S continuity = k == 0 ? S::tie : S::right;
        CHECK(svc.submit_verdict(verdict(t->task_id, who, {S::left, S::right, S::tie, continuity})));
      }
      CHECK_FALSE(svc.next_task(who).has_value());
    }
    const auto r = svc.report();
    CHECK(r.verdicts == 30);
    CHECK(r.annotators == 3);
    CHECK(r.fully_covered_tasks == 10);
    // Even tasks have ours on the left.
    auto expect = [&](const char* dim, std::size_t w, std::size_t l, std::size_t t) {
      CAPTURE(dim);
      const auto& c = r.dimensions.at(dim);
      CHECK(c.win == w);
      CHECK(c.lose == l);
      CHECK(c.tie == t);
    };
    expect("coherence", 15, 15, 0);
    expect("empathy", 15, 15, 0);
    expect("informativeness", 0, 0, 30);
    expect("continuity", 10, 10, 10);
    CHECK(r.overall.win == 10);
    CHECK(r.overall.lose == 10);
    CHECK(r.overall.tie == 10);
    const auto j = r.to_json();
    CHECK(j["dimensions"]["coherence"]["win_pct"].get<double>() == doctest::Approx(50.0));
    CHECK(r.to_text().find("overall") != std::string::npos);
  }

  TEST_CASE("duplicates, idempotent retries and full tasks") {
    Workspace ws(1);
    AbService svc(ws.tasks, ws.log, 2);
    const auto v = verdict("t0", "a", {Side::left, Side::left, Side::left, Side::left}, "req-1");
    CHECK(svc.submit_verdict(v));
    CHECK_FALSE(svc.submit_verdict(v));
    auto again = v;
    again.request_id = "req-2";
    CHECK(ab_code([&] { svc.submit_verdict(again); }) == "duplicate_verdict");
    CHECK(ab_code([&] { svc.submit_verdict(verdict("t9", "a", {})); }) == "unknown_task");
    CHECK(svc.submit_verdict(verdict("t0", "b", {})));
    CHECK(ab_code([&] { svc.submit_verdict(verdict("t0", "c", {})); }) == "task_full");
    CHECK_FALSE(svc.next_task("c").has_value());
    CHECK(svc.report().verdicts == 2);
  }

  TEST_CASE("reservations prevent over-assignment") {
    Workspace ws(2);
    AbService svc(ws.tasks, ws.log, 1);
    const auto a = svc.next_task("a");
    const auto b = svc.next_task("b");
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->task_id != b->task_id);
    CHECK(svc.next_task("a")->task_id == a->task_id);
    CHECK_FALSE(svc.next_task("c").has_value());
  }

  TEST_CASE("verdicts survive a restart") {
    Workspace ws(3);
    {
      AbService svc(ws.tasks, ws.log);
      svc.submit_verdict(verdict("t0", "a", {Side::left, Side::right, Side::tie, Side::left}, "r1"));
      svc.submit_verdict(verdict("t1", "a", {Side::right, Side::right, Side::right, Side::right}));
    }
    AbService svc(ws.tasks, ws.log);
    CHECK(svc.report().verdicts == 2);
    CHECK(ab_code([&] { svc.submit_verdict(verdict("t0", "a", {})); }) == "duplicate_verdict");
    CHECK_FALSE(svc.submit_verdict(verdict("t0", "a", {}, "r1")));
    CHECK(svc.next_task("a")->task_id == "t2");
    CHECK(svc.progress()["verdicts"] == 2);
    CHECK(svc.progress()["required_verdicts"] == 9);
    CHECK(load_verdicts(ws.log).size() == 2);
    CHECK_FALSE(load_verdicts(ws.log)[0].timestamp.empty());
  }

  TEST_CASE("HTTP API") {
    Workspace ws(2);
    AbService svc(ws.tasks, ws.log, 1);
    AbServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);

    auto res = client.Get("/api/tasks/next?annotator=alice");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto task = json::parse(res->body)["task"];
    CHECK(task.contains("response_left"));
    CHECK_FALSE(task.contains("ours_on_left"));
    CHECK(res->body.find("ours") == std::string::npos);

    res = client.Get("/api/tasks/next");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"] == "missing_annotator");

    const std::string tid = task["task_id"];
    res = client.Post("/api/verdicts", verdict_json(tid, "alice", "x1").dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["status"] == "recorded");

    res = client.Post("/api/verdicts", verdict_json(tid, "alice", "x1").dump(), "application/json");
    CHECK(json::parse(res->body)["status"] == "already_recorded");

    res = client.Post("/api/verdicts", verdict_json(tid, "alice").dump(), "application/json");
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["error"] == "duplicate_verdict");

    res = client.Post("/api/verdicts", verdict_json(tid, "bob").dump(), "application/json");
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["error"] == "task_full");

    res = client.Post("/api/verdicts", verdict_json("nope", "bob").dump(), "application/json");
    CHECK(res->status == 404);

    res = client.Post("/api/verdicts", "{broken", "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"] == "malformed_verdict");

    res = client.Get("/api/report");
    REQUIRE(res);
    CHECK(json::parse(res->body)["verdicts"] == 1);
    res = client.Get("/api/progress");
    REQUIRE(res);
    CHECK(json::parse(res->body)["tasks"] == 2);

    res = client.Get("/api/tasks/next?annotator=alice");
    CHECK(json::parse(res->body)["task"]["task_id"] != tid);

    server.stop();
    thread.join();
  }
}
