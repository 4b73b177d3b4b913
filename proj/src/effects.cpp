#include "oracular/effects.hpp"

#include <set>

namespace oracular {

Json branch(StrategyContext& ctx, SpaceSpec cands, std::string action_type) {
  EffectRequest r;
  r.kind = effect::kBranch;
  r.spaces.push_back(SpaceDecl::single("cands", std::move(cands)));
  r.action_type = std::move(action_type);
  return ctx.emit(r);
}

void fail(StrategyContext& ctx, const std::string& label, const std::string& message) {
  EffectRequest r;
  r.kind = effect::kFail;
  if (!label.empty()) r.tags.push_back(label);
  r.attrs = Json{{"label", label}, {"message", message}};
  r.action_type = "unit";
  ctx.emit(r);
  // Fail nodes have no children, so replay never returns here.
  throw ReplayDivergence("replay went through a fail node of " + ctx.strategy().name);
}

void ensure(StrategyContext& ctx, bool cond, const std::string& label, const std::string& message) {
  if (!cond) fail(ctx, label, message);
}

void value(StrategyContext& ctx, SpaceSpec estimate) {
  EffectRequest r;
  r.kind = effect::kValue;
  r.spaces.push_back(SpaceDecl::single("value", std::move(estimate)));
  r.action_type = "unit";
  ctx.emit(r);
}

Json join(StrategyContext& ctx, StrategyValue left, StrategyValue right) {
  EffectRequest r;
  r.kind = effect::kJoin;
  r.action_type = "pair(" + left.return_type + "," + right.return_type + ")";
  r.spaces.push_back(SpaceDecl::single("left", SpaceSpec::embedded(std::move(left))));
  r.spaces.push_back(SpaceDecl::single("right", SpaceSpec::embedded(std::move(right))));
  return ctx.emit(r);
}

Json cbranch(StrategyContext& ctx, SpaceSpec cands, std::function<SpaceSpec(const Json&)> compare,
             std::string action_type) {
  EffectRequest r;
  r.kind = effect::kCBranch;
  r.spaces.push_back(SpaceDecl::single("cands", std::move(cands)));
  r.spaces.push_back(SpaceDecl::indexed("compare", std::move(compare)));
  r.action_type = std::move(action_type);
  return ctx.emit(r);
}

Json abduction(StrategyContext& ctx, AbductionSpaces spaces) {
  EffectRequest r;
  r.kind = effect::kAbduction;
  r.spaces.push_back(SpaceDecl::indexed("prove", std::move(spaces.prove)));
  r.spaces.push_back(SpaceDecl::indexed("suggest", std::move(spaces.suggest)));
  r.spaces.push_back(SpaceDecl::indexed("search_equivalent", std::move(spaces.search_equivalent)));
  r.spaces.push_back(SpaceDecl::indexed("redundant", std::move(spaces.redundant)));
  return ctx.emit(r);
}

Json guess(StrategyContext& ctx, const std::string& variable, const std::string& answer_type,
           const std::vector<ContextItem>& context) {
  Query q = universal_query(ctx.strategy().name, variable, answer_type, context);
  return branch(ctx, SpaceSpec::of_query(std::move(q)), answer_type);
}

void feedback(StrategyContext& ctx, const std::string& label, Json payload) {
  ctx.annotate(label, std::move(payload));
}

// ---------------------------------------------------------------------------
// Navigation

LocalValue navigate_branch(const EffectNode& n, const ChoiceFn& choose) { return choose(n.space("cands")); }

LocalValue navigate_value(const EffectNode& n, const ChoiceFn&) { return lift_unit(n.id()); }

LocalValue navigate_join(const EffectNode& n, const ChoiceFn& choose) {
  LocalValue l = choose(n.space("left"));
  LocalValue r = choose(n.space("right"));
  return lift_pair(l, r);
}

LocalValue abduction_prove_arg(const EffectNode& n, const std::vector<ProvedFact>& proved,
                               const std::optional<LocalValue>& fact) {
  std::vector<LocalValue> pairs;
  for (const auto& p : proved) {
    if (!p.fact) continue;  // the main goal is never an assumption
    pairs.push_back(lift_pair(*p.fact, p.proof));
  }
  return lift_pair(lift_list(pairs, n.id()), lift_option(fact, n.id()));
}

std::vector<ProvedFact> dedup_proved(std::vector<ProvedFact> proved) {
  std::vector<ProvedFact> out;
  std::set<std::string> seen;
  for (auto& p : proved) {
    std::string key = p.fact ? canonical(p.fact->value()) : std::string("<main>");
    if (seen.insert(key).second) out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::vector<ProvedFact> abduce(const EffectNode& n, const ChoiceFn& choose, const std::optional<LocalValue>& fact) {
  auto [status, payload] = unlift_either(choose(n.space("prove", abduction_prove_arg(n, {}, fact))));
  if (status == 0) return {ProvedFact{fact, payload}};
  if (payload.value().is_null()) return {};
  std::vector<LocalValue> suggestions = unlift_list(choose(n.space("suggest", payload)));
  std::vector<ProvedFact> proved;
  for (const auto& s : suggestions) {
    auto extra = abduce(n, choose, s);
    proved.insert(proved.end(), extra.begin(), extra.end());
  }
  auto [status2, payload2] = unlift_either(choose(n.space("prove", abduction_prove_arg(n, proved, fact))));
  if (status2 == 0) proved.push_back(ProvedFact{fact, payload2});
  return dedup_proved(std::move(proved));
}

}  // namespace

LocalValue navigate_abduction(const EffectNode& n, const ChoiceFn& choose) {
  std::vector<ProvedFact> proved = abduce(n, choose, std::nullopt);
  for (const auto& p : proved) {
    if (!p.fact) return p.proof;
  }
  throw NavigationFailure("abduction at " + to_string(n.location()) + ": the main goal was not proved");
}

// ---------------------------------------------------------------------------
// Registry of standard effects

EffectRegistry& EffectRegistry::global() {
  static EffectRegistry* r = [] {
    auto* reg = new EffectRegistry();
    register_effect("branch { cands: Opaque a } -> a", navigate_branch, "cands", *reg);
    register_effect("fail { } -> unit", nullptr, std::nullopt, *reg);
    register_effect("value { value: Opaque float } -> unit", navigate_value, "value", *reg);
    register_effect("join { left: Strategy a, right: Strategy b } -> pair(a,b)", navigate_join, std::nullopt, *reg);
    register_effect("cbranch { cands: Opaque a, compare: list(a) -> Opaque list(float) } -> a", navigate_branch,
                    "cands", *reg);
    register_effect(
        "abduction { prove: pair(list(pair(fact,proof)),option(fact)) -> Opaque either(proof,feedback), "
        "suggest: feedback -> Opaque list(fact), "
        "search_equivalent: pair(list(fact),fact) -> Opaque option(fact), "
        "redundant: pair(list(fact),fact) -> Opaque bool } -> proof",
        navigate_abduction, std::nullopt, *reg);
    return reg;
  }();
  return *r;
}

}  // namespace oracular
