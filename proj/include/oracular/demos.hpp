#pragma once

// Demonstrations: answered queries bundled with navigation tests, the test
// language parser, and the interpreter that walks strategy trees with them.
// The file format and test grammar are described in docs/demo-format.md.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "oracular/common.hpp"
#include "oracular/policies.hpp"
#include "oracular/query.hpp"
#include "oracular/strategy.hpp"

namespace oracular {

// ---------------------------------------------------------------------------
// Demo files

struct DemoAnswer {
  std::optional<std::string> label;
  bool example = true;  // usable as a few-shot example
  std::string text;
};

struct AnsweredQuery {
  std::string type;
  Json args = Json::object();
  // May be empty only for skeletons added by tooling; evaluation then
  // reports the query as missing its answer text.
  std::vector<DemoAnswer> answers;

  std::string key() const;  // same identity as Query::key()
};

struct Demonstration {
  std::string strategy;
  Json args = Json::object();
  std::vector<std::string> tests;
  std::vector<AnsweredQuery> queries;

  const AnsweredQuery* find(const Query& q) const;
};

// Throws ParseError (YAML syntax, with offset) or ConfigError (schema).
Demonstration parse_demo(const std::string& text);
Demonstration load_demo(const std::string& path);
std::string dump_demo(const Demonstration& d);
Json demo_to_json(const Demonstration& d);
Demonstration demo_from_json(const Json& j);

// Few-shot examples drawn from demos: answers marked as examples, for
// queries of the requested type, in file order.
ExampleSelector demo_examples(std::vector<Demonstration> demos);

// ---------------------------------------------------------------------------
// Test language

namespace test_ast {

struct ValRef;

struct SpaceRefAst {
  std::string id;
  std::shared_ptr<const ValRef> arg;  // null without parentheses
};

// `space{hints}` or bare hints, which refer to the primary space.
struct EltRef {
  std::optional<SpaceRefAst> space;
  std::vector<std::string> hints;
};

struct ValRef {
  enum class Kind { kElement, kList, kIndex };
  Kind kind = Kind::kElement;
  EltRef element;
  std::vector<ValRef> items;
  std::size_t index = 0;
  std::shared_ptr<const ValRef> of;  // for kIndex
};

struct Selector {
  std::string tag;
  std::size_t index = 1;  // 1-based occurrence
};

struct NodeSel {
  std::vector<Selector> spaces;
  Selector node;
};

struct Instr {
  enum class Kind { kRun, kAt, kGo, kAnswer, kSuccess };
  Kind kind = Kind::kRun;
  std::vector<std::string> hints;
  std::optional<NodeSel> sel;           // kAt
  std::optional<SpaceRefAst> space;     // kGo, kAnswer; none means primary
  std::size_t position = 0;             // offset in the test text
};

}  // namespace test_ast

using TestAst = std::vector<test_ast::Instr>;

// The empty string is the empty test, which stays at the root.
TestAst parse_test(const std::string& text);
std::string print_test(const TestAst& t);
std::string print_val_ref(const test_ast::ValRef& v);

// ---------------------------------------------------------------------------
// Evaluation

enum class TestStatus { kPassed, kFailed, kStuck };
std::string to_string(TestStatus s);

struct StuckInfo {
  std::string location;  // node owning the unanswered query
  std::vector<std::string> tags;
  std::string query_type;
  Json query_args;
  std::string reason;    // "missing query" | "missing answer text"
};

struct TestOutcome {
  std::string test;
  TestStatus status = TestStatus::kPassed;
  std::string reason;  // for failed tests
  std::optional<StuckInfo> stuck;
  std::optional<std::size_t> parse_error_offset;
  // Locations of the nodes reached, starting node included.
  std::vector<std::string> visited;
  std::string end;  // location of the current node when the test stopped
  std::vector<std::string> warnings;
};

struct DemoReport {
  std::string strategy;
  // Set when the strategy could not be instantiated; no test then runs.
  std::string error;
  std::vector<TestOutcome> tests;
  std::vector<std::string> warnings;  // unused queries and answers

  bool ok() const;
  Json to_json() const;
};

// Runs one test on an already reified tree. `used` collects the
// (query index, answer index) pairs the test relied on.
TestOutcome eval_test(const Demonstration& d, const Tree& root, const std::string& test,
                      std::vector<std::pair<std::size_t, std::size_t>>* used = nullptr);

DemoReport eval_demo(const Demonstration& d, const StrategyRegistry& registry = StrategyRegistry::global());

// ---------------------------------------------------------------------------
// Reaching tests

struct ReachingTest {
  std::vector<AnsweredQuery> queries;  // every answer labeled
  TestAst test;
  std::string text;
};

// Answers for queries that the target's refs do not carry, keyed by
// Query::key().
using KnownAnswers = std::map<std::string, std::string>;

// A test whose evaluation, with the returned queries, stops exactly at
// `target`. Throws Error when the target cannot be reached.
ReachingTest generate_reaching_test(const Tree& root, const NodeLocation& target,
                                    const KnownAnswers& known = {});

}  // namespace oracular
