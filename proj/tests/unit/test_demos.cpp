#include <doctest.h>

#include <random>

#include "oracular/demos.hpp"
#include "oracular/fixtures.hpp"
#include "support/node_enum.hpp"
#include "support/tree_corpus.hpp"

using namespace oracular;
namespace fx = oracular::fixtures;

namespace {

std::string demo_path(const std::string& name) { return std::string(ORACULAR_SOURCE_DIR) + "/demos/" + name; }

std::vector<TestStatus> statuses(const DemoReport& r) {
  std::vector<TestStatus> out;
  for (const auto& t : r.tests) out.push_back(t.status);
  return out;
}

const TestStatus P = TestStatus::kPassed;
const TestStatus F = TestStatus::kFailed;
const TestStatus S = TestStatus::kStuck;

Demonstration choice_demo(const Json& tree, std::vector<std::string> tests, std::vector<AnsweredQuery> qs = {}) {
  Demonstration d;
  d.strategy = "choice_tree";
  d.args = Json{{"tree", tree}};
  d.tests = std::move(tests);
  d.queries = std::move(qs);
  return d;
}

AnsweredQuery pick(const std::string& at, std::size_t n, std::vector<DemoAnswer> answers) {
  return AnsweredQuery{"Pick", Json{{"at", at}, {"n", n}}, std::move(answers)};
}

DemoAnswer ans(std::string text, std::optional<std::string> label = std::nullopt) {
  return DemoAnswer{std::move(label), true, std::move(text)};
}

}  // namespace

TEST_SUITE("demos") {
  TEST_CASE("test grammar") {
    using K = test_ast::Instr::Kind;
    TestAst a = parse_test("run | success");
    REQUIRE(a.size() == 2);
    CHECK(a[0].kind == K::kRun);
    CHECK(a[0].hints.empty());
    CHECK(a[1].kind == K::kSuccess);

    TestAst b = parse_test("at EvalProg 'wrong' | answer");
    REQUIRE(b.size() == 2);
    CHECK(b[0].kind == K::kAt);
    CHECK(b[0].sel->node.tag == "EvalProg");
    CHECK(b[0].hints == std::vector<std::string>{"wrong"});
    CHECK(b[1].kind == K::kAnswer);
    CHECK_FALSE(b[1].space);

    TestAst c = parse_test("at foo#2/bar#3");
    REQUIRE(c[0].sel->spaces.size() == 1);
    CHECK(c[0].sel->spaces[0].tag == "foo");
    CHECK(c[0].sel->spaces[0].index == 2);
    CHECK(c[0].sel->node.tag == "bar");
    CHECK(c[0].sel->node.index == 3);

    TestAst d = parse_test("go compare(['', 'foo'])");
    REQUIRE(d[0].space);
    CHECK(d[0].space->id == "compare");
    const auto& arg = *d[0].space->arg;
    REQUIRE(arg.kind == test_ast::ValRef::Kind::kList);
    REQUIRE(arg.items.size() == 2);
    CHECK(arg.items[0].element.hints.empty());
    CHECK(arg.items[1].element.hints == std::vector<std::string>{"foo"});

    CHECK(parse_test("run `a b'")[0].hints == std::vector<std::string>{"a", "b"});
    CHECK(parse_test("").empty());
    CHECK(parse_test("go").size() == 1);
  }

  TEST_CASE("printing round-trips") {
    for (std::string t : {"run | success", "at EvalProg 'wrong' | answer", "at foo#2/bar#3",
                          "go compare([cands{''}, cands{'foo'}]) | run 'a b'", "go x([''][0])", "answer value",
                          "go s(t(['x']){'a'})"}) {
      CHECK(print_test(parse_test(t)) == t);
    }
    CHECK(print_test(parse_test("  run   `a'|success ")) == "run 'a' | success");
  }

  TEST_CASE("parse errors carry positions") {
    auto offset = [](const std::string& t) -> std::size_t {
      try {
        parse_test(t);
      } catch (const ParseError& e) {
        return e.position();
      }
      return 999;
    };
    CHECK(offset("run | fly") == 6);
    CHECK(offset("at foo#0") == 8);
    CHECK(offset("run 'a") == 6);
    CHECK(offset("go compare(['', 'foo']") == 22);
    CHECK(offset("success now") == 8);
    CHECK(offset("run |") == 5);
  }

  TEST_CASE("demo files parse, validate and round-trip") {
    Demonstration d = load_demo(demo_path("generate_prog.yaml"));
    CHECK(d.strategy == "generate_prog");
    REQUIRE(d.queries.size() == 3);
    CHECK(d.queries[0].answers[1].label == std::optional<std::string>("wrong"));
    CHECK_FALSE(d.queries[0].answers[1].example);
    CHECK(d.queries[1].answers[0].text == "0.1");
    Demonstration again = parse_demo(dump_demo(d));
    CHECK(demo_to_json(again) == demo_to_json(d));

    CHECK_THROWS_AS(parse_demo("strategy: x\npolicy: dfs\n"), ConfigError);
    CHECK_THROWS_AS(parse_demo("strategy: x\nqueries:\n  - query: {type: T}\n    answers: [{label: a, answer: 1}, "
                               "{label: a, answer: 2}]\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_demo("strategy: x\nqueries:\n  - query: {type: T}\n  - query: {type: T}\n"), ConfigError);
    try {
      parse_demo("strategy: [x\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.position() > 0);
    }
  }

  TEST_CASE("program synthesis demo: passed, passed, stuck at the proof") {
    fx::register_all();
    DemoReport r = eval_demo(load_demo(demo_path("generate_prog.yaml")));
    REQUIRE(r.error.empty());
    CHECK(statuses(r) == std::vector<TestStatus>{P, P, S});
    const auto& stuck = *r.tests[2].stuck;
    CHECK(stuck.query_type == "ProveProg");
    CHECK(stuck.query_args["prog"] == "bubble_sort_without_swaps");
    CHECK(stuck.tags == std::vector<std::string>{"ProveProg"});
    CHECK(stuck.reason == "missing query");
    CHECK(r.warnings.empty());
    CHECK_FALSE(r.ok());
  }

  TEST_CASE("inserting a value node keeps passing tests passing") {
    fx::register_all();
    Demonstration d = load_demo(demo_path("generate_prog.yaml"));
    auto before = statuses(eval_demo(d));
    d.strategy = "generate_prog_valued";
    auto after = statuses(eval_demo(d));
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (before[i] == P) CHECK(after[i] == P);
    }
  }

  TEST_CASE("a strategy without choices passes with no queries") {
    fx::register_all();
    DemoReport r = eval_demo(choice_demo(Json{{"success", 1}}, {"run | success", ""}));
    CHECK(statuses(r) == std::vector<TestStatus>{P, P});
    CHECK(r.tests[1].end == "$");
  }

  TEST_CASE("answers match by canonical payload") {
    fx::register_all();
    Demonstration d = parse_demo(R"(
strategy: choice_tree
args: {tree: {branch: [{fail: x}, {success: 1}]}}
tests: [run | success]
queries:
  - query: {type: Pick, args: {n: 2, at: r}}
    answers: [{answer: "1"}]
)");
    CHECK(statuses(eval_demo(d)) == std::vector<TestStatus>{P});
  }

  TEST_CASE("hints are consumed only when they match") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"branch": [{"fail": "a"}, {"success": 1}]},
                                            {"branch": [{"success": 2}, {"success": 3}]}]})");
    std::vector<AnsweredQuery> qs{pick("r", 2, {ans("0"), ans("1", "right")}),
                                  pick("r.0", 2, {ans("1")}), pick("r.1", 2, {ans("0"), ans("1", "last")})};
    // `last` only labels an answer of the second level: it waits there.
    DemoReport r = eval_demo(choice_demo(tree, {"run | success", "run 'last right' | success",
                                                "run 'right last' | success", "run 'right' | success"}, qs));
    CHECK(statuses(r) == std::vector<TestStatus>{P, P, P, P});
    CHECK(r.tests[1].warnings.size() == 1);  // `right` was never reached after `last`
    CHECK(r.tests[2].warnings.empty());
    CHECK(r.warnings.empty());
  }

  TEST_CASE("stuck outcomes name the query; skeletons report missing text") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"success": 1}, {"success": 2}]})");
    DemoReport r = eval_demo(choice_demo(tree, {"run | success"}));
    REQUIRE(r.tests[0].status == S);
    CHECK(r.tests[0].stuck->query_type == "Pick");
    CHECK(r.tests[0].stuck->query_args == Json{{"at", "r"}, {"n", 2}});
    CHECK(r.tests[0].stuck->location == "$");

    r = eval_demo(choice_demo(tree, {"run | success"}, {pick("r", 2, {})}));
    REQUIRE(r.tests[0].status == S);
    CHECK(r.tests[0].stuck->reason == "missing answer text");
  }

  TEST_CASE("failures are reported, not thrown") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"fail": "dead"}, {"success": 2}]})");
    std::vector<AnsweredQuery> qs{pick("r", 2, {ans("0"), ans("x", "garbage")})};
    DemoReport r = eval_demo(choice_demo(tree, {"run | success", "run 'garbage'", "at nowhere", "go", "run | fly",
                                                "answer cands | go cands"}, qs));
    CHECK(statuses(r) == std::vector<TestStatus>{F, F, F, F, F, F});
    CHECK(r.tests[0].reason.find("fail node") != std::string::npos);
    CHECK(r.tests[1].reason.find("does not parse") != std::string::npos);
    CHECK(r.tests[4].parse_error_offset == std::optional<std::size_t>(6));
    CHECK(r.tests[5].reason.find("instruction 2") != std::string::npos);

    Demonstration bad = choice_demo(tree, {"run"});
    bad.strategy = "no_such_strategy";
    DemoReport e = eval_demo(bad);
    CHECK_FALSE(e.error.empty());
    CHECK(e.tests.empty());
  }

  TEST_CASE("unused queries and answers are reported") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"success": 1}, {"success": 2}]})");
    std::vector<AnsweredQuery> qs{pick("r", 2, {ans("0"), ans("1", "other")}), pick("elsewhere", 1, {ans("0")})};
    DemoReport r = eval_demo(choice_demo(tree, {"run | success"}, qs));
    CHECK(r.ok());
    REQUIRE(r.warnings.size() == 2);
    CHECK(r.warnings[0].find("'other'") != std::string::npos);
    CHECK(r.warnings[1].find("unused query Pick") != std::string::npos);
  }

  TEST_CASE("selectors stop inside the selected space") {
    fx::register_all();
    Demonstration d = load_demo(demo_path("selectors.yaml"));
    DemoReport r = eval_demo(d);
    CHECK(statuses(r) == std::vector<TestStatus>{P, P, P});
    CHECK(r.warnings.empty());
    CHECK(r.tests[2].warnings.empty());

    Tree root = reify(StrategyRegistry::global().instantiate(d.strategy, d.args));
    TestOutcome o = eval_test(d, root, "at foo#2/bar#3");
    REQUIRE(o.status == P);
    NodeLocation end = parse_location(o.end);
    REQUIRE(end.nesting() == 1);
    CHECK(end.segments()[0].node.depth() == 1);  // the second branch node
    CHECK(end.segments()[1].space->name() == "cands");
    CHECK(end.segments()[1].node.depth() == 2);  // third bar node

    o = eval_test(d, root, "at foo/bar#3 'b' | run");
    REQUIRE(o.status == P);
    NodeLocation inner = parse_location(o.end);
    CHECK(inner.nesting() == 1);
    CHECK(inner.segments()[0].node.is_root());

    // `at` never stops in a nested tree without a space selector.
    o = eval_test(d, root, "at bar");
    CHECK(o.status == F);
  }

  TEST_CASE("go enters a parametric space named by hint lists") {
    fx::register_all();
    Demonstration d = load_demo(demo_path("compare.yaml"));
    DemoReport r = eval_demo(d);
    CHECK(statuses(r) == std::vector<TestStatus>{P, P, P});
    Tree root = reify(StrategyRegistry::global().instantiate(d.strategy, d.args));
    TestOutcome o = eval_test(d, root, "go compare(['', 'foo'])");
    REQUIRE(o.status == P);
    NodeLocation at = parse_location(o.end);
    REQUIRE(at.nesting() == 1);
    CHECK(at.segments()[1].space->name() == "compare");
    CHECK(to_string(*at.segments()[1].space) == R"(compare([cands()#"alpha",cands()#"beta"]))");
    CHECK(eval_test(d, root, "go cands").status == F);  // defined by a query
    CHECK(eval_test(d, root, "go compare(['', 'nope'])").status == F);
  }

  TEST_CASE("reaching tests: root, leaves and nested targets") {
    fx::register_all();
    Json tree = Json::parse(R"({"branch": [{"join": [{"branch": [{"success": "a"}, {"success": "b"}]},
                                                      {"value": 0.5, "then": {"branch": [{"fail": "x"}, {"success": "c"}]}}],
                                             "then": {"branch": [{"success": 1}, {"success": 2}]}},
                                            {"success": 3}]})");
    Demonstration base = choice_demo(tree, {});
    Tree root = reify(fx::choice_tree(tree));
    std::vector<Tree> nodes;
    node_enum::all_nodes(root, fx::choice_tree_policy(), nodes);
    CHECK(nodes.size() > 15);
    bool saw_go = false;
    for (const auto& n : nodes) {
      ReachingTest rt = generate_reaching_test(root, n.location());
      Demonstration d = base;
      d.queries = rt.queries;
      TestOutcome o = eval_test(d, root, rt.text);
      INFO("target " << to_string(n.location()) << " test " << rt.text);
      CHECK(o.status == P);
      CHECK(o.end == to_string(n.location()));
      saw_go = saw_go || rt.text.find("go left") != std::string::npos;
      for (const auto& q : rt.queries)
        for (const auto& a : q.answers) CHECK(a.label);
    }
    CHECK(saw_go);
    CHECK(generate_reaching_test(root, root.location()).text.empty());
  }

  TEST_CASE("reaching tests into nested search trees") {
    fx::register_all();
    Demonstration d = load_demo(demo_path("selectors.yaml"));
    Tree root = reify(StrategyRegistry::global().instantiate(d.strategy, d.args));
    for (std::string t : {"at foo#2/bar#3", "at foo/bar#3 'b'", "at foo#2/bar", "run", ""}) {
      TestOutcome o = eval_test(d, root, t);
      REQUIRE(o.status == P);
      NodeLocation target = parse_location(o.end);
      ReachingTest rt = generate_reaching_test(root, target);
      Demonstration g = d;
      g.queries = rt.queries;
      INFO("from " << t << " generated " << rt.text);
      TestOutcome again = eval_test(g, root, rt.text);
      CHECK(again.status == P);
      CHECK(again.end == o.end);
    }
  }

  TEST_CASE("examples come from demos, excluding non-examples") {
    Demonstration d = load_demo(demo_path("generate_prog.yaml"));
    ExampleSelector sel = demo_examples({d});
    auto ex = sel(Query::make("ConjectureProg", Json{{"spec", "other"}}, "str"), 5);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].answer == "merge_sort");
    CHECK(sel(Query::make("EvalProg", Json::object(), "float"), 0).empty());
  }
}
