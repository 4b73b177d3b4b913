#pragma once

// Standard effects: trigger functions for strategy bodies and the navigation
// functions registered with them.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oracular/strategy.hpp"

namespace oracular {

namespace effect {
inline constexpr const char* kBranch = "branch";
inline constexpr const char* kFail = "fail";
inline constexpr const char* kValue = "value";
inline constexpr const char* kJoin = "join";
inline constexpr const char* kCBranch = "cbranch";
inline constexpr const char* kAbduction = "abduction";
// Not a node kind: feedback is recorded as an annotation on the current node.
inline constexpr const char* kFeedback = "feedback";
}  // namespace effect

// Raised by navigation functions that cannot produce an action.
class NavigationFailure : public Error {
 public:
  using Error::Error;
};

Json branch(StrategyContext& ctx, SpaceSpec cands, std::string action_type = "json");

[[noreturn]] void fail(StrategyContext& ctx, const std::string& label, const std::string& message = "");
void ensure(StrategyContext& ctx, bool cond, const std::string& label, const std::string& message = "");

void value(StrategyContext& ctx, SpaceSpec estimate);

// Returns [left, right].
Json join(StrategyContext& ctx, StrategyValue left, StrategyValue right);

Json cbranch(StrategyContext& ctx, SpaceSpec cands, std::function<SpaceSpec(const Json&)> compare,
             std::string action_type = "json");

// Families of the abduction node. Arguments as received by each family:
//   prove:             [[[fact, proof], ...], option(fact)]  -> either(proof, feedback)
//   suggest:           feedback                              -> list(fact)
//   search_equivalent: [[fact, ...], fact]                   -> option(fact)
//   redundant:         [[fact, ...], fact]                   -> bool
// Prove answers are [0, proof] when proved, [1, feedback] when feedback is
// available and [1, null] when the fact is disproved.
struct AbductionSpaces {
  std::function<SpaceSpec(const Json&)> prove;
  std::function<SpaceSpec(const Json&)> suggest;
  std::function<SpaceSpec(const Json&)> search_equivalent;
  std::function<SpaceSpec(const Json&)> redundant;
};

Json abduction(StrategyContext& ctx, AbductionSpaces spaces);

// Universal query for `variable` of the running strategy.
Json guess(StrategyContext& ctx, const std::string& variable, const std::string& answer_type,
           const std::vector<ContextItem>& context);

void feedback(StrategyContext& ctx, const std::string& label, Json payload = nullptr);

// Navigation functions of the standard effects, exposed for tests.
LocalValue navigate_branch(const EffectNode& n, const ChoiceFn& choose);
LocalValue navigate_value(const EffectNode& n, const ChoiceFn& choose);
LocalValue navigate_join(const EffectNode& n, const ChoiceFn& choose);
LocalValue navigate_abduction(const EffectNode& n, const ChoiceFn& choose);

// Building blocks of abduction navigation, shared with abduct_saturate.
struct ProvedFact {
  std::optional<LocalValue> fact;  // none for the main goal
  LocalValue proof;
};
LocalValue abduction_prove_arg(const EffectNode& n, const std::vector<ProvedFact>& proved,
                               const std::optional<LocalValue>& fact);
std::vector<ProvedFact> dedup_proved(std::vector<ProvedFact> proved);

}  // namespace oracular
