#include <doctest.h>

#include <random>

#include "oracular/fixtures.hpp"
#include "oracular/policies.hpp"
#include "oracular/traces.hpp"
#include "support/tree_corpus.hpp"

using namespace oracular;
namespace fx = oracular::fixtures;

namespace {

struct Run {
  Trace trace;
  std::vector<LocalValue> found;
  Budget spent;
};

Run record_dfs(const std::string& name, const Json& args, const InnerPolicy& ip, Budget limit = {},
               std::size_t max_found = 1000) {
  auto rec = std::make_shared<TraceRecorder>(name, args);
  Tree root = reify(StrategyRegistry::global().instantiate(name, args), rec);
  auto c = collect(with_budget(limit, take(max_found, rec->tap(dfs_stream(root, std::make_shared<const InnerPolicy>(ip))))));
  for (const auto& v : c.values) rec->add_success(v);
  return Run{rec->snapshot(), c.values, c.spent};
}

InnerPolicy mock_policy(const Json& rules) {
  InnerPolicy ip;
  ip.set_any_query(few_shot(std::make_shared<MockOracle>(MockScript::from_json(rules)), FewShotParams{}));
  ip.set_any_strategy(SearchBinding{dfs(), nullptr});
  return ip;
}

Json choice(const char* tree) { return Json{{"tree", Json::parse(tree)}}; }

}  // namespace

TEST_SUITE("traces") {
  TEST_CASE("dfs logs exactly the visited prefix") {
    fx::register_all();
    Run r = record_dfs("choice_tree", choice(R"({"branch": [{"success": 1}, {"success": 2}]})"),
                       fx::choice_tree_policy(), {}, 1);
    REQUIRE(r.trace.nodes.size() == 2);
    CHECK(r.trace.nodes[0].location == "$");
    CHECK(r.trace.nodes[0].kind == "branch");
    CHECK(r.trace.nodes[0].declared.size() == 1);
    REQUIRE(r.trace.nodes[0].spaces.size() == 1);
    CHECK(r.trace.nodes[0].spaces[0].source == "query");
    CHECK(r.trace.nodes[0].spaces[0].query == Json{{"type", "Pick"}, {"args", {{"at", "r"}, {"n", 2}}}});
    CHECK(r.trace.nodes[1].kind == "success");
    CHECK(r.trace.nodes[1].value == Json(1));
    REQUIRE(r.trace.successes.size() == 1);
  }

  TEST_CASE("a denied barrier is logged with nothing spent") {
    fx::register_all();
    Json rules = Json::parse(R"([{"match": {"type": "Pick"}, "answers": ["0"]}])");
    Run r = record_dfs("choice_tree", choice(R"({"branch": [{"success": 1}]})"), mock_policy(rules),
                       Budget{{metric::kNumRequests, 0}});
    CHECK(r.found.empty());
    int barriers = 0;
    for (const auto& e : r.trace.spend_log) {
      if (e.kind == TraceSpend::Kind::kBarrier) {
        ++barriers;
        CHECK_FALSE(e.granted);
      }
    }
    CHECK(barriers == 1);
    CHECK(r.trace.total_spent() == Budget());
  }

  TEST_CASE("the spend log adds up to what the run spent") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"fail": "x"}, {"branch": [{"success": 1}, {"success": 2}]}]})");
    Run r = record_dfs("choice_tree", Json{{"tree", tree}}, mock_policy(corpus::mock_rules_for(tree)));
    CHECK(r.found.size() == 2);
    CHECK(r.spent.get(metric::kNumRequests) > 0);
    CHECK(r.trace.total_spent() == r.spent);
    CHECK_FALSE(r.trace.answers.empty());
  }

  TEST_CASE("logged successes resolve on a fresh reification") {
    fx::register_all();
    std::mt19937 rng(7);
    for (int i = 0; i < 10; ++i) {
      Json tree = corpus::random_tree(rng, 3, 3);
      Run r = record_dfs("choice_tree", Json{{"tree", tree}}, fx::choice_tree_policy());
      Tree fresh = reify(fx::choice_tree(tree));
      CHECK(r.trace.successes.size() == corpus::enumerate(tree).size());
      for (const auto& s : r.trace.successes) {
        auto v = success_value(fresh, parse_node_ref(s.ref));
        REQUIRE(v);
        CHECK(v->value() == s.value);
      }
    }
  }

  TEST_CASE("export and import round-trip") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"fail": "x"}, {"success": 2}]})");
    Run r = record_dfs("choice_tree", Json{{"tree", tree}}, mock_policy(corpus::mock_rules_for(tree)));
    std::string text = export_trace(r.trace);
    Trace back = import_trace(text);
    CHECK(back == r.trace);
    CHECK(export_trace(back) == text);

    Run empty = record_dfs("choice_tree", choice(R"({"success": 0})"), fx::choice_tree_policy());
    REQUIRE(empty.trace.nodes.size() == 1);
    CHECK(empty.trace.nodes[0].location == "$");
    CHECK(import_trace(export_trace(empty.trace)) == empty.trace);
  }

  TEST_CASE("a large random trace round-trips byte for byte") {
    std::mt19937 rng(11);
    auto word = [&rng] {
      static const std::vector<std::string> parts{"a", "bc", "\xC3\xA9", "\"q\"", "\\", "\n", "x y", "\xE2\x88\x80"};
      std::string s;
      int n = std::uniform_int_distribution<int>(0, 5)(rng);
      for (int i = 0; i < n; ++i) s += parts[std::uniform_int_distribution<std::size_t>(0, parts.size() - 1)(rng)];
      return s;
    };
    Trace t;
    t.strategy = "fuzz";
    t.args = Json{{"seed", 11}};
    for (int i = 0; i < 1000; ++i) {
      TraceNode n;
      n.location = "$" + std::to_string(i);
      n.kind = i % 7 == 0 ? "success" : "branch";
      n.tags = {word()};
      if (n.kind == "success") {
        n.value = Json{{"w", word()}, {"i", i}, {"f", i * 0.25}};
      } else {
        n.declared = {{"cands", false, false}};
        n.spaces = {TraceSpace{"cands()", {word()}, "query", Json{{"type", "Pick"}, {"args", {{"w", word()}}}}}};
      }
      if (i % 13 == 0) n.annotations = {Annotation{"feedback", Json{{"note", word()}}}};
      t.nodes.push_back(std::move(n));
      if (i % 3 == 0) {
        t.answers.push_back(TraceAnswers{"$" + std::to_string(i), "cands()", "Pick", Json{{"k", i}},
                                         {TraceCompletion{word(), i % 2 == 0, std::string(64, 'f'), std::nullopt},
                                          TraceCompletion{word(), false, std::nullopt, "bad " + word()}}});
      }
      if (i % 5 == 0) {
        t.spend_log.push_back(TraceSpend{TraceSpend::Kind::kBarrier, Budget{{metric::kNumRequests, 1}}, i % 2 == 0, 0});
        t.spend_log.push_back(TraceSpend{TraceSpend::Kind::kSpent, Budget{{metric::kInputTokens, i}}, false, i % 3});
      }
      if (i % 50 == 0) t.successes.push_back(TraceSuccess{"$" + std::to_string(i), Json(i)});
    }
    std::string once = export_trace(t);
    Trace back = import_trace(once);
    CHECK(back == t);
    CHECK(export_trace(back) == once);
  }

  TEST_CASE("imports check the version") {
    Json j = trace_to_json(Trace{});
    j["version"] = kTraceVersion + 1;
    CHECK_THROWS_AS(trace_from_json(j), TraceVersionError);
    j.erase("version");
    CHECK_THROWS_AS(trace_from_json(j), ConfigError);
    CHECK_THROWS_AS(import_trace("{"), ParseError);
    CHECK_THROWS_AS(import_trace(R"({"format": "oracular-trace", "version": 1})"), ConfigError);
  }

  TEST_CASE("long completions are cut and hashed") {
    TraceRecorder rec("x", Json::object(), 8);
    PromptContext ctx{Query::make("T", Json::object(), "str"), NodeLocation(), SpaceRef::named("cands"), nullptr};
    rec.on_answer(ctx, "The quick brown fox jumps over the lazy dog", "");
    rec.on_answer(ctx, "short", "bad");
    Trace t = rec.snapshot();
    REQUIRE(t.answers.size() == 1);
    const auto& c = t.answers[0].completions;
    REQUIRE(c.size() == 2);
    CHECK(c[0].raw == "The quic");
    CHECK(c[0].truncated);
    CHECK(c[0].sha256 == std::optional<std::string>("d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592"));
    CHECK(c[1].raw == "short");
    CHECK_FALSE(c[1].sha256);
    CHECK(c[1].error == std::optional<std::string>("bad"));

    TraceRecorder utf("x", Json::object(), 2);
    utf.on_answer(ctx, "a\xC3\xA9z", "");
    CHECK(utf.snapshot().answers[0].completions[0].raw == "a");
  }

  TEST_CASE("node view lists spaces, actions and nested trees") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"fail": "x"}, {"success": 2}]})");
    Run r = record_dfs("choice_tree", Json{{"tree", tree}}, mock_policy(corpus::mock_rules_for(tree)));
    Json v = trace_node_view(r.trace, "$");
    CHECK(v["node"]["kind"] == "branch");
    REQUIRE(v["spaces"].size() == 1);
    CHECK(v["spaces"][0]["name"] == "cands");
    CHECK(v["actions"].size() == 2);
    // Two answers, then the miss that ended the stream.
    REQUIRE(v["answers"][0]["completions"].size() == 3);
    CHECK(v["answers"][0]["completions"][1]["error"].is_null());
    CHECK(v["answers"][0]["completions"][2]["error"].get<std::string>().rfind("oracle: ", 0) == 0);
    CHECK_THROWS_AS(trace_node_view(r.trace, "$/nowhere"), NotFound);

    InnerPolicy ip = fx::choice_tree_policy();
    ip.set_any_query(fx::scripted_answers([](const Query& q) -> std::vector<std::string> {
      return {"v" + std::to_string(q.payload["round"].get<int>()) + std::to_string(q.payload["i"].get<int>())};
    }));
    ip.set_any_strategy(SearchBinding{dfs(), nullptr});
    Run nested = record_dfs("selector_fixture", Json::object(), ip);
    Json root = trace_node_view(nested.trace, "$");
    REQUIRE(root["nested"].size() == 1);
    CHECK(root["nested"][0]["space"] == "cands()");
    CHECK(root["spaces"][0]["instances"][0]["source"] == "tree");
  }

  TEST_CASE("extracting a demo from a one-choice run") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"fail": "x"}, {"success": 2}]})");
    Run r = record_dfs("choice_tree", Json{{"tree", tree}}, mock_policy(corpus::mock_rules_for(tree)));
    REQUIRE(r.trace.successes.size() == 1);
    Demonstration d = extract_demo(r.trace, std::size_t{0});
    CHECK(d.queries.size() == 1);
    CHECK(d.tests == std::vector<std::string>{"run | success"});
    DemoReport rep = eval_demo(d);
    CHECK(rep.ok());
    CHECK(parse_demo(dump_demo(d)).queries.size() == 1);
    CHECK_THROWS_AS(extract_demo(r.trace, std::size_t{1}), ExtractionError);
    CHECK_THROWS_AS(extract_demo(r.trace, std::string("$")), ExtractionError);
  }

  TEST_CASE("extraction pulls answers from nested trees") {
    fx::register_all();
    InnerPolicy ip;
    ip.set_any_query(fx::scripted_answers([](const Query& q) -> std::vector<std::string> {
      return {"v" + std::to_string(q.payload["round"].get<int>()) + std::to_string(q.payload["i"].get<int>())};
    }));
    ip.set_any_strategy(SearchBinding{dfs(), nullptr});
    Run r = record_dfs("selector_fixture", Json::object(), ip);
    REQUIRE(r.trace.successes.size() == 1);
    Demonstration d = extract_demo(r.trace, std::size_t{0});
    CHECK(d.queries.size() == 6);
    DemoReport rep = eval_demo(d);
    CHECK(rep.ok());
    CHECK(rep.warnings.empty());
  }

  TEST_CASE("demos extracted from mock-oracle runs pass") {
    fx::register_all();
    std::mt19937 rng(2024);
    int runs = 0;
    while (runs < 20) {
      Json tree = corpus::random_tree(rng, 3, 3);
      if (corpus::enumerate(tree).empty()) continue;
      ++runs;
      Run r = record_dfs("choice_tree", Json{{"tree", tree}}, mock_policy(corpus::mock_rules_for(tree)));
      REQUIRE(!r.trace.successes.empty());
      for (std::size_t i = 0; i < r.trace.successes.size(); ++i) {
        Demonstration d = extract_demo(import_trace(export_trace(r.trace)), i);
        DemoReport rep = eval_demo(d);
        INFO("tree " << tree.dump() << " success " << i);
        CHECK(rep.ok());
      }
    }
  }
}
