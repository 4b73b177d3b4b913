#pragma once

// Small strategies used by the demos, the CLI and the test suites.

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "oracular/effects.hpp"
#include "oracular/strategy.hpp"

namespace oracular::fixtures {

// Synthetic trees described as JSON:
//   {"success": v}
//   {"fail": "label"}
//   {"branch": [tree, ...]}                 Pick query, answer = child index
//   {"value": x, "then": tree}              Estimate query answered with x
//   {"join": [tree, tree], "then": tree}    `then` sees nothing of the pair;
//                                           the result is [[l, r], then]
// Query payloads carry the node path ("at") so that every node asks a
// distinct question.
StrategyValue choice_tree(const Json& spec);

// Answers Pick with every index in order and Estimate with its estimate.
PromptingPolicy choice_tree_oracle();
InnerPolicy choice_tree_policy();

// Horn clauses `head <- body` with abduction over `goal`.
struct HornRule {
  std::string head;
  std::vector<std::string> body;
};
Json horn_rules_json(const std::vector<HornRule>& rules);
std::vector<HornRule> horn_rules_from_json(const Json& j);
// goal <- a, b ; a ; b <- c ; c
std::vector<HornRule> horn_toy_rules();
StrategyValue horn(const std::vector<HornRule>& rules, const std::string& goal);

// Computes answers of the Horn queries directly from the rules and logs the
// prove/suggest calls as "prove([a,c]|b)" and "suggest(b)".
class HornOracle {
 public:
  HornOracle(std::vector<HornRule> rules, std::string goal) : rules_(std::move(rules)), goal_(std::move(goal)) {}
  // Raw answer text for a Horn query.
  std::string answer(const Query& q);
  // Choice function over query spaces, for navigation tests.
  ChoiceFn choice_fn();
  InnerPolicy policy();
  std::vector<std::string> calls() const;

 private:
  std::vector<HornRule> rules_;
  std::string goal_;
  mutable std::mutex mu_;
  std::vector<std::string> calls_;
};

// Conjecture a program, estimate it, prove it. With `extra_value` an
// additional value node follows the proof.
StrategyValue generate_prog(const std::string& spec, bool extra_value = false);

// Guesses a Pythagorean triple with perimeter n.
StrategyValue pythagorean(int n);

// Two branch nodes over nested "foo" strategies with three "bar" choices
// each.
StrategyValue selector_fixture();
// A cbranch whose compare family is a nested "rank" strategy.
StrategyValue compare_fixture();

// Adds all fixtures to the registry and prompt templates for their queries.
void register_all(StrategyRegistry& registry = StrategyRegistry::global(),
                  TemplateRegistry& templates = TemplateRegistry::global());

// Prompting policy yielding the given answer texts for every query.
PromptingPolicy scripted_answers(std::function<std::vector<std::string>(const Query&)> answers);

}  // namespace oracular::fixtures
