#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "oracular/oracle.hpp"

using namespace oracular;

namespace {

OracleRequest request_for(const Query& q, int n = 1) {
  OracleRequest r;
  r.messages = {{"user", "hello"}};
  r.num_completions = n;
  r.query = q;
  return r;
}

const char* kScript = R"yaml(
- match: {type: UniversalQuery}
  answers: ["(3,4,5)"]
  usage: {input_tokens: 100, output_tokens: 10}
- match: {type: Pick, args: {at: r}}
  answers: ["0", "1"]
- match: {type: Pick}
  mode: cycle
  answers: ["2", "3"]
)yaml";

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("mock answers from the first matching rule") {
    MockOracle m(MockScript::parse(kScript));
    auto r = m.complete(request_for(Query::make("UniversalQuery", Json::object(), "json")));
    CHECK(r.completions == std::vector<std::string>{"(3,4,5)"});
    CHECK(r.usage.get(metric::kNumRequests) == 1);
    CHECK(r.usage.get(metric::kInputTokens) == 100);
  }

  TEST_CASE("mock payload patterns, ordered exhaustion and cycling") {
    MockOracle m(MockScript::parse(kScript));
    Query at_root = Query::make("Pick", Json{{"at", "r"}, {"n", 2}}, "int");
    Query elsewhere = Query::make("Pick", Json{{"at", "r.0"}, {"n", 2}}, "int");
    CHECK(m.complete(request_for(at_root)).completions == std::vector<std::string>{"0"});
    CHECK(m.complete(request_for(at_root)).completions == std::vector<std::string>{"1"});
    // The first rule is exhausted; the catch-all cycles.
    CHECK(m.complete(request_for(at_root)).completions == std::vector<std::string>{"2"});
    CHECK(m.complete(request_for(elsewhere, 3)).completions == std::vector<std::string>{"3", "2", "3"});
    CHECK(m.calls() == 4);
  }

  TEST_CASE("mock misses name the query") {
    MockOracle m(MockScript::parse(kScript));
    Query q = Query::make("Unknown", Json{{"x", 1}}, "int");
    try {
      m.complete(request_for(q));
      FAIL("expected a miss");
    } catch (const NoRuleError& e) {
      CHECK(std::string(e.what()).find("Unknown") != std::string::npos);
    }
    MockOracle once(MockScript::parse("- match: {type: T}\n  answers: [a]\n"));
    Query t = Query::make("T", Json::object(), "str");
    once.complete(request_for(t));
    CHECK_THROWS_AS(once.complete(request_for(t)), NoRuleError);
  }

  TEST_CASE("mock determinism") {
    auto run = [] {
      MockOracle m(MockScript::parse(kScript));
      std::vector<std::string> out;
      for (int i = 0; i < 5; ++i) {
        auto r = m.complete(request_for(Query::make("Pick", Json{{"at", "r"}}, "int"), 2));
        out.insert(out.end(), r.completions.begin(), r.completions.end());
      }
      return out;
    };
    CHECK(run() == run());
  }

  TEST_CASE("mock script validation") {
    CHECK_THROWS_AS(MockScript::parse("- answers: [a]\n"), ConfigError);
    CHECK_THROWS_AS(MockScript::parse("- match: {type: T}\n  answers: []\n"), ConfigError);
    CHECK_THROWS_AS(MockScript::parse("- match: {type: T}\n  answers: [a]\n  mode: random\n"), ConfigError);
  }

  TEST_CASE("pricing is linear in tokens") {
    Pricing p = Pricing::from_json(Json::parse(R"({"m": {"input_per_token": 1e-6, "output_per_token": 2e-6}})"));
    CHECK(p.price("m", 1000, 500) == doctest::Approx(0.002).epsilon(1e-12));
    CHECK(p.price("other", 1000, 500) == 0);
    CHECK_THROWS_AS(Pricing::from_json(Json::parse(R"({"m": {"input_per_token": 1}})")), ConfigError);
  }

  TEST_CASE("estimates") {
    Pricing p = Pricing::from_json(Json::parse(R"({"m": {"input_per_token": 1e-6, "output_per_token": 2e-6}})"));
    p.default_max_tokens = 100;
    OracleRequest r;
    r.model = "m";
    r.num_completions = 2;
    Estimate e = estimate(r, p);
    CHECK_FALSE(e.unknown_model);
    CHECK(e.budget.get(metric::kNumRequests) == 1);
    CHECK(e.budget.get(metric::kInputTokens) == kRequestTokenOverhead);
    CHECK(e.budget.get(metric::kOutputTokens) == 200);
    CHECK(e.budget.get(metric::kPriceUsd) == doctest::Approx(kRequestTokenOverhead * 1e-6 + 200 * 2e-6));
    r.max_tokens = 10;
    r.messages = {{"user", std::string(40, 'x')}};
    e = estimate(r, p);
    CHECK(e.budget.get(metric::kInputTokens) == kRequestTokenOverhead + 10);
    CHECK(e.budget.get(metric::kOutputTokens) == 20);
    r.model = "unknown";
    e = estimate(r, p);
    CHECK(e.unknown_model);
    CHECK(e.budget == Budget{{metric::kNumRequests, 1}});
  }

  TEST_CASE("http client: request shape, usage, retries") {
    httplib::Server server;
    std::atomic<int> hits{0};
    Json last_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      int k = ++hits;
      last_body = Json::parse(req.body);
      if (req.get_header_value("Authorization") != "Bearer secret") {
        res.status = 401;
        return;
      }
      if (k == 1) {
        res.status = 503;
        return;
      }
      Json body{{"model", "m"},
                {"choices", Json::array({Json{{"message", {{"role", "assistant"}, {"content", "42"}}}}})},
                {"usage", {{"prompt_tokens", 1000}, {"completion_tokens", 500}}}};
      res.set_content(body.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpOracleConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    cfg.api_key = "secret";
    cfg.model = "m";
    cfg.pricing = Pricing::from_json(Json::parse(R"({"m": {"input_per_token": 1e-6, "output_per_token": 2e-6}})"));
    cfg.initial_backoff_ms = 1;
    HttpOracle client(cfg);
    OracleRequest r = request_for(Query::make("T", Json::object(), "int"));
    r.max_tokens = 7;
    auto resp = client.complete(r);
    CHECK(resp.completions == std::vector<std::string>{"42"});
    CHECK(resp.usage.get(metric::kNumRequests) == 2);  // one failed attempt, one success
    CHECK(resp.usage.get(metric::kPriceUsd) == doctest::Approx(0.002));
    CHECK(last_body["max_tokens"] == 7);
    CHECK(last_body["messages"][0]["content"] == "hello");

    cfg.api_key = "wrong";
    HttpOracle bad(cfg);
    try {
      bad.complete(r);
      FAIL("expected an error");
    } catch (const OracleError& e) {
      CHECK_FALSE(e.retriable());
      CHECK(e.attempts() == 1);
      CHECK(e.consumed().get(metric::kNumRequests) == 1);
    }
    server.stop();
    th.join();

    cfg.api_key = "";
    CHECK_THROWS_AS(HttpOracle{cfg}, ConfigError);
  }

  TEST_CASE("http client: transport errors are retried and charged") {
    HttpOracleConfig cfg;
    cfg.base_url = "http://127.0.0.1:1/v1";
    cfg.api_key = "k";
    cfg.max_attempts = 2;
    cfg.initial_backoff_ms = 1;
    cfg.timeout_s = 2;
    HttpOracle client(cfg);
    try {
      client.complete(request_for(Query::make("T", Json::object(), "int")));
      FAIL("expected an error");
    } catch (const OracleError& e) {
      CHECK(e.retriable());
      CHECK(e.attempts() == 2);
      CHECK(e.consumed().get(metric::kNumRequests) == 2);
    }
  }
}
