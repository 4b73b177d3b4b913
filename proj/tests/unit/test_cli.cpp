#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <httplib.h>

#include "oracular/cli.hpp"
#include "oracular/traces.hpp"

using namespace oracular;
namespace fs = std::filesystem;

namespace {

std::string src(const std::string& rel) { return std::string(ORACULAR_SOURCE_DIR) + "/" + rel; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

// A fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() / ("oracular-" + tag + "-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

RunConfig pythagorean_run(const std::string& trace) {
  RunConfig c;
  c.strategy = "pythagorean";
  c.args = Json{{"n", 12}};
  c.mock_script = src("mock/pythagorean.yaml");
  c.budget = Budget{{metric::kNumRequests, 10}};
  c.trace_path = trace;
  c.seed = 42;
  return c;
}

struct Served {
  ApiServer server;
  int port;
  std::thread th;
  explicit Served(const std::string& root) : server(root) {
    port = server.bind("127.0.0.1", 0);
    th = std::thread([this] { server.listen(); });
    server.wait_until_ready();
  }
  ~Served() {
    server.stop();
    th.join();
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("run configs are validated") {
    CHECK_THROWS_AS(RunConfig::from_json(Json{{"strategy", "x"}, {"polcy", "dfs"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(Json{{"seed", "abc"}}), ConfigError);
    CHECK(RunConfig::from_json(Json{{"budget", "num_requests=3"}}).budget == Budget{{metric::kNumRequests, 3}});

    std::ostringstream out, err;
    RunConfig c = pythagorean_run("");
    c.mock_script.clear();
    CHECK(cmd_run(c, out, err) == exit_code::kConfig);
    CHECK(err.str().find("oracle") != std::string::npos);
    c = pythagorean_run("");
    c.strategy = "nope";
    CHECK(cmd_run(c, out, err) == exit_code::kConfig);
    c = pythagorean_run("");
    c.policy = "bfs";
    CHECK(cmd_run(c, out, err) == exit_code::kConfig);
    c = pythagorean_run("");
    c.transforms = "fold";
    CHECK(cmd_run(c, out, err) == exit_code::kConfig);
    c = pythagorean_run("");
    c.mock_script = "/nonexistent.yaml";
    CHECK(cmd_run(c, out, err) == exit_code::kConfig);
    c = pythagorean_run("");
    c.args = Json{{"n", "twelve"}};
    CHECK(cmd_run(c, out, err) == exit_code::kConfig);
  }

  TEST_CASE("run prints the successes and the spend") {
    TempDir dir("run");
    std::ostringstream out, err;
    CHECK(cmd_run(pythagorean_run(dir / "t.json"), out, err) == exit_code::kOk);
    CHECK(out.str().find("success 0: [3,4,5]") != std::string::npos);
    CHECK(out.str().find("spent: {") != std::string::npos);
    Trace t = load_trace(dir / "t.json");
    REQUIRE(t.successes.size() == 1);
    CHECK(t.successes[0].value == Json::array({3, 4, 5}));
    // Two answered requests; the final miss is charged nothing.
    CHECK(t.total_spent().get(metric::kNumRequests) == 2);
    CHECK(t.total_spent().fits_within(Budget{{metric::kNumRequests, 10}}));
    CHECK(t.config["seed"] == 42);
  }

  TEST_CASE("identical runs write identical traces") {
    TempDir dir("det");
    std::ostringstream out, err;
    REQUIRE(cmd_run(pythagorean_run(dir / "a.json"), out, err) == exit_code::kOk);
    RunConfig again = pythagorean_run(dir / "b.json");
    REQUIRE(cmd_run(again, out, err) == exit_code::kOk);
    // The trace records its own output path; compare everything else.
    std::string a = slurp(dir / "a.json"), b = slurp(dir / "b.json");
    std::string pa = Json(dir / "a.json").dump(), pb = Json(dir / "b.json").dump();
    REQUIRE(a.find(pa) != std::string::npos);
    a.replace(a.find(pa), pa.size(), pb);
    CHECK(a == b);
  }

  TEST_CASE("a zero request budget ends with no solution") {
    TempDir dir("zero");
    RunConfig c = pythagorean_run(dir / "t.json");
    c.budget = Budget{{metric::kNumRequests, 0}};
    std::ostringstream out, err;
    CHECK(cmd_run(c, out, err) == exit_code::kNoSolution);
    Trace t = load_trace(dir / "t.json");
    // One denied barrier, closed by an empty Spent.
    REQUIRE(t.spend_log.size() == 2);
    CHECK(t.spend_log[0].kind == TraceSpend::Kind::kBarrier);
    CHECK_FALSE(t.spend_log[0].granted);
    CHECK(t.spend_log[1].kind == TraceSpend::Kind::kSpent);
    CHECK(t.spend_log[1].amount == Budget());
  }

  TEST_CASE("oracle misses during a run are errors") {
    TempDir dir("miss");
    spit(dir.path / "empty.yaml", "- match: {type: Other}\n  answers: [x]\n");
    RunConfig c = pythagorean_run("");
    c.mock_script = dir / "empty.yaml";
    std::ostringstream out, err;
    // few_shot treats the miss as the end of the candidates: no solution.
    CHECK(cmd_run(c, out, err) == exit_code::kNoSolution);
  }

  TEST_CASE("demo-check statuses and exit codes") {
    std::ostringstream out, err;
    CHECK(cmd_demo_check({src("demos/selectors.yaml"), src("demos/compare.yaml"), src("demos/pythagorean.yaml")},
                         false, out, err) == exit_code::kOk);
    CHECK(out.str().find("summary: 8 passed, 0 failed, 0 stuck, 0 broken") != std::string::npos);

    std::ostringstream out2;
    CHECK(cmd_demo_check({src("demos/generate_prog.yaml")}, false, out2, err) == exit_code::kError);
    CHECK(out2.str().find("stuck   run 'wrong'") != std::string::npos);
    CHECK(out2.str().find("missing query ProveProg") != std::string::npos);

    std::ostringstream out3;
    CHECK(cmd_demo_check({src("demos/generate_prog.yaml")}, true, out3, err) == exit_code::kError);
    Json j = Json::parse(out3.str());
    CHECK(j["ok"] == false);
    CHECK(j["demos"][0]["tests"][2]["stuck"]["query"]["type"] == "ProveProg");
  }

  TEST_CASE("demo-check reports parse errors with positions") {
    TempDir dir("parse");
    spit(dir.path / "bad.yaml", "strategy: x\ntests: [run\n");
    spit(dir.path / "keys.yaml", "strategy: x\npolicy: y\n");
    std::ostringstream out, err;
    CHECK(cmd_demo_check({dir / "bad.yaml", dir / "keys.yaml"}, false, out, err) == exit_code::kError);
    CHECK(out.str().find("bad.yaml:") != std::string::npos);
    CHECK(out.str().find("keys.yaml: ") != std::string::npos);
    CHECK(out.str().find("2 broken") != std::string::npos);
    Json j = demo_check_json({dir / "bad.yaml"});
    CHECK(j["demos"][0]["parse_error"]["offset"].is_number());
    CHECK(cmd_demo_check({}, false, out, err) == exit_code::kConfig);
  }

  TEST_CASE("demo-extract writes a passing demo") {
    TempDir dir("extract");
    std::ostringstream out, err;
    REQUIRE(cmd_run(pythagorean_run(dir / "t.json"), out, err) == exit_code::kOk);
    std::ostringstream out2;
    CHECK(cmd_demo_extract(dir / "t.json", 0, dir / "d.yaml", out2, err) == exit_code::kOk);
    Demonstration d = load_demo(dir / "d.yaml");
    CHECK(d.strategy == "pythagorean");
    REQUIRE(d.queries.size() == 1);
    CHECK(d.queries[0].answers[0].text == "(3, 4, 5)");

    CHECK(cmd_demo_extract(dir / "t.json", 1, dir / "e.yaml", out2, err) == exit_code::kError);
    RunConfig zero = pythagorean_run(dir / "z.json");
    zero.budget = Budget{{metric::kNumRequests, 0}};
    cmd_run(zero, out, err);
    CHECK(cmd_demo_extract(dir / "z.json", 0, dir / "e.yaml", out2, err) == exit_code::kError);
    CHECK_FALSE(fs::exists(dir / "e.yaml"));
  }

  TEST_CASE("add-query patches append a skeleton") {
    std::string block = "strategy: s\ntests: [run]\nqueries:\n  - query: {type: A}\n    answers: [{answer: x}]\n";
    DemoPatch p = add_query_patch(block, "B", Json{{"k", 1}});
    CHECK(p.offset == block.size());
    CHECK(p.inserted == "  - query: {type: \"B\", args: {\"k\":1}}\n    answers: []\n");

    std::string indentless = "strategy: s\nqueries:\n- query: {type: A}\n  answers: [{answer: x}]";
    CHECK(add_query_patch(indentless, "B", Json::object()).inserted ==
          "\n- query: {type: \"B\", args: {}}\n  answers: []\n");

    CHECK(add_query_patch("strategy: s\n", "B", Json::object()).inserted ==
          "queries:\n  - query: {type: \"B\", args: {}}\n    answers: []\n");

    CHECK_THROWS_AS(add_query_patch("strategy: s\nqueries: []\n", "B", Json::object()), ConfigError);
    CHECK_THROWS_AS(add_query_patch("queries:\n  - query: {type: A}\n    answers: []\nstrategy: s\n", "B",
                                    Json::object()),
                    ConfigError);
  }

  TEST_CASE("http api") {
    TempDir root("serve");
    fs::create_directories(root.path / "demos");
    fs::create_directories(root.path / "traces");
    fs::copy_file(src("demos/generate_prog.yaml"), root.path / "demos/generate_prog.yaml");
    fs::copy_file(src("demos/selectors.yaml"), root.path / "demos/selectors.yaml");
    {
      std::ostringstream out, err;
      REQUIRE(cmd_run(pythagorean_run(root / "traces/pyth.json"), out, err) == exit_code::kOk);
    }
    Served s(root.path.string());
    REQUIRE(s.port > 0);
    httplib::Client cli("127.0.0.1", s.port);

    auto demos = cli.Get("/api/demos");
    REQUIRE(demos);
    CHECK(demos->status == 200);
    Json dl = Json::parse(demos->body);
    REQUIRE(dl.size() == 2);
    CHECK(dl[0]["id"] == "generate_prog");
    CHECK(dl[0]["strategy"] == "generate_prog");

    // The eval endpoint shares demo-check's report code.
    auto ev = cli.Post("/api/demos/generate_prog/eval", "", "application/json");
    REQUIRE(ev);
    CHECK(ev->status == 200);
    fs::path cwd = fs::current_path();
    fs::current_path(root.path);
    std::ostringstream out, err;
    cmd_demo_check({"demos/generate_prog.yaml"}, true, out, err);
    fs::current_path(cwd);
    CHECK(Json::parse(ev->body) == Json::parse(out.str()));
    Json stuck = Json::parse(ev->body)["demos"][0]["tests"][2]["stuck"];
    CHECK(stuck["reason"] == "missing query");

    CHECK(cli.Post("/api/demos/nope/eval", "", "application/json")->status == 404);
    CHECK(cli.Post("/api/demos/..%2Fx/eval", "", "application/json")->status >= 400);

    // Add the stuck query, see it reported as unanswered, then answer it.
    std::string before = slurp(root.path / "demos/generate_prog.yaml");
    Json add{{"type", stuck["query"]["type"]}, {"args", stuck["query"]["args"]}};
    auto added = cli.Post("/api/demos/generate_prog/add-query", add.dump(), "application/json");
    REQUIRE(added);
    REQUIRE(added->status == 200);
    Json patch = Json::parse(added->body);
    std::string after = slurp(root.path / "demos/generate_prog.yaml");
    CHECK(after == before + patch["inserted"].get<std::string>());
    CHECK(patch["offset"] == before.size());
    CHECK(patch["sha256"] == sha256_hex(after));

    Json re = Json::parse(cli.Post("/api/demos/generate_prog/eval", "", "application/json")->body);
    CHECK(re["demos"][0]["tests"][2]["status"] == "stuck");
    CHECK(re["demos"][0]["tests"][2]["stuck"]["reason"] == "missing answer text");

    CHECK(cli.Post("/api/demos/generate_prog/add-query", add.dump(), "application/json")->status == 409);
    Json stale = add;
    stale["type"] = "Other";
    stale["expected_sha256"] = sha256_hex(before);
    CHECK(cli.Post("/api/demos/generate_prog/add-query", stale.dump(), "application/json")->status == 409);
    CHECK(cli.Post("/api/demos/generate_prog/add-query", "{", "application/json")->status == 400);

    std::string filled = after;
    filled.replace(filled.rfind("answers: []"), 11, "answers: [{answer: \"trust me\"}]");
    spit(root.path / "demos/generate_prog.yaml", filled);
    Json done = Json::parse(cli.Post("/api/demos/generate_prog/eval", "", "application/json")->body);
    CHECK(done["demos"][0]["tests"][2]["status"] == "passed");

    auto traces = cli.Get("/api/traces");
    REQUIRE(traces);
    Json tl = Json::parse(traces->body);
    REQUIRE(tl.size() == 1);
    CHECK(tl[0]["id"] == "pyth");
    CHECK(tl[0]["successes"] == 1);

    auto node = cli.Get("/api/traces/pyth/node?ref=%24");
    REQUIRE(node);
    CHECK(node->status == 200);
    Json nv = Json::parse(node->body);
    CHECK(nv["spaces"][0]["name"] == "cands");
    CHECK(nv["actions"].size() == 2);
    CHECK(cli.Get("/api/traces/pyth/node?ref=%24%2Fnope")->status >= 400);
    CHECK(cli.Get("/api/traces/none/node")->status == 404);
  }
}
