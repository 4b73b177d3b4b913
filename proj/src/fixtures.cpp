#include "oracular/fixtures.hpp"

#include <algorithm>
#include <set>

namespace oracular::fixtures {

PromptingPolicy scripted_answers(std::function<std::vector<std::string>(const Query&)> answers) {
  return [answers](const PromptContext& ctx) -> Stream<ParsedAnswer> {
    return Stream<ParsedAnswer>([answers, ctx]() -> StreamMsg<ParsedAnswer> {
      std::vector<ParsedAnswer> out;
      for (const auto& raw : answers(ctx.query)) {
        try {
          Json v = parse_answer(ctx.query, raw);
          ctx.record(raw, "");
          out.push_back(ParsedAnswer{raw, std::move(v)});
        } catch (const AnswerParseError& e) {
          ctx.record(raw, e.what());
        }
      }
      return from_values(std::move(out)).next();
    });
  };
}

// ---------------------------------------------------------------------------
// Choice trees

namespace {

StrategyValue choice_tree_at(const Json& spec, const std::string& at);

Json walk(StrategyContext& ctx, Json spec, std::string path) {
  for (;;) {
    if (!spec.is_object()) throw ConfigError("choice tree node must be an object, got " + spec.dump());
    if (spec.contains("success")) return spec["success"];
    if (spec.contains("fail")) fail(ctx, spec["fail"].is_string() ? spec["fail"].get<std::string>() : "fail");
    if (spec.contains("branch")) {
      const Json& kids = spec["branch"];
      Json q{{"at", path}, {"n", kids.size()}};
      Json i = branch(ctx, SpaceSpec::of_query(Query::make("Pick", q, "int")), "int");
      std::size_t k = i.get<std::size_t>();
      if (k >= kids.size()) fail(ctx, "out_of_range");
      path += "." + std::to_string(k);
      Json next = kids[k];
      spec = std::move(next);
      continue;
    }
    if (spec.contains("value")) {
      Json q{{"at", path}, {"estimate", spec["value"]}};
      value(ctx, SpaceSpec::of_query(Query::make("Estimate", q, "float")));
      path += ".v";
      Json next = spec.value("then", Json{{"success", nullptr}});
      spec = std::move(next);
      continue;
    }
    if (spec.contains("join")) {
      const Json& parts = spec["join"];
      Json pair = join(ctx, choice_tree_at(parts.at(0), path + ".l"), choice_tree_at(parts.at(1), path + ".r"));
      if (!spec.contains("then")) return pair;
      return Json::array({pair, walk(ctx, spec["then"], path + ".j")});
    }
    throw ConfigError("unknown choice tree node " + spec.dump());
  }
}

StrategyValue choice_tree_at(const Json& spec, const std::string& at) {
  StrategyValue s;
  s.name = "choice_tree";
  s.args = Json{{"tree", spec}};
  if (!at.empty()) s.args["at"] = at;
  s.signature = {effect::kBranch, effect::kFail, effect::kValue, effect::kJoin};
  s.return_type = "json";
  s.body = [spec, at](StrategyContext& ctx) { return walk(ctx, spec, at.empty() ? "r" : at); };
  return s;
}

}  // namespace

StrategyValue choice_tree(const Json& spec) { return choice_tree_at(spec, ""); }

PromptingPolicy choice_tree_oracle() {
  return scripted_answers([](const Query& q) -> std::vector<std::string> {
    if (q.type_name == "Pick") {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < q.payload.value("n", std::size_t{0}); ++i) out.push_back(std::to_string(i));
      return out;
    }
    if (q.type_name == "Estimate") return {q.payload["estimate"].dump()};
    return {};
  });
}

InnerPolicy choice_tree_policy() {
  InnerPolicy ip;
  ip.set_any_query(choice_tree_oracle());
  return ip;
}

// ---------------------------------------------------------------------------
// Horn clauses

Json horn_rules_json(const std::vector<HornRule>& rules) {
  Json out = Json::array();
  for (const auto& r : rules) out.push_back(Json{{"head", r.head}, {"body", r.body}});
  return out;
}

std::vector<HornRule> horn_rules_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("Horn rules must be a list");
  std::vector<HornRule> out;
  for (const auto& r : j) {
    if (!r.is_object() || !r.contains("head") || !r["head"].is_string()) throw ConfigError("Horn rule needs a head");
    HornRule h;
    h.head = r["head"].get<std::string>();
    if (r.contains("body")) h.body = r["body"].get<std::vector<std::string>>();
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<HornRule> horn_toy_rules() {
  return {{"goal", {"a", "b"}}, {"a", {}}, {"b", {"c"}}, {"c", {}}};
}

StrategyValue horn(const std::vector<HornRule>& rules, const std::string& goal) {
  StrategyValue s;
  s.name = "horn";
  s.args = Json{{"rules", horn_rules_json(rules)}, {"goal", goal}};
  s.signature = {effect::kAbduction, effect::kFail};
  s.return_type = "str";
  s.body = [goal](StrategyContext& ctx) -> Json {
    AbductionSpaces sp;
    sp.prove = [goal](const Json& p) {
      Json assumed = Json::array();
      for (const auto& pr : p.at(0)) assumed.push_back(pr.at(0));
      Json fact = p.at(1).empty() ? Json() : p.at(1).at(0);
      return SpaceSpec::of_query(Query::make("Prove", Json{{"goal", goal}, {"assumed", assumed}, {"fact", fact}}, "json"));
    };
    sp.suggest = [](const Json& feedback) {
      return SpaceSpec::of_query(Query::make("Suggest", Json{{"feedback", feedback}}, "list(str)"));
    };
    sp.search_equivalent = [](const Json& p) {
      return SpaceSpec::of_query(Query::make("SearchEquivalent", Json{{"known", p.at(0)}, {"fact", p.at(1)}}, "option(str)"));
    };
    sp.redundant = [](const Json& p) {
      return SpaceSpec::of_query(Query::make("Redundant", Json{{"known", p.at(0)}, {"fact", p.at(1)}}, "bool"));
    };
    return abduction(ctx, std::move(sp));
  };
  return s;
}

namespace {

std::string fact_name(const Json& f) { return f.is_null() ? "None" : f.get<std::string>(); }

}  // namespace

std::string HornOracle::answer(const Query& q) {
  const Json& p = q.payload;
  if (q.type_name == "Prove") {
    std::set<std::string> assumed;
    std::string list;
    for (const auto& f : p["assumed"]) {
      assumed.insert(f.get<std::string>());
      list += (list.empty() ? "" : ",") + f.get<std::string>();
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      calls_.push_back("prove([" + list + "]|" + fact_name(p["fact"]) + ")");
    }
    std::string target = p["fact"].is_null() ? goal_ : p["fact"].get<std::string>();
    const HornRule* first = nullptr;
    for (const auto& r : rules_) {
      if (r.head != target) continue;
      if (!first) first = &r;
      bool ok = std::all_of(r.body.begin(), r.body.end(), [&](const std::string& b) { return assumed.count(b) > 0; });
      if (ok) {
        std::string why = target + " <-";
        for (const auto& b : r.body) why += " " + b;
        return Json::array({0, why}).dump();
      }
    }
    if (!first) return Json::array({1, nullptr}).dump();
    Json missing = Json::array();
    for (const auto& b : first->body) {
      if (!assumed.count(b)) missing.push_back(b);
    }
    return Json::array({1, Json{{"fact", p["fact"]}, {"missing", missing}}}).dump();
  }
  if (q.type_name == "Suggest") {
    const Json& fb = p["feedback"];
    {
      std::lock_guard<std::mutex> lock(mu_);
      calls_.push_back("suggest(" + fact_name(fb.value("fact", Json())) + ")");
    }
    return fb.value("missing", Json::array()).dump();
  }
  if (q.type_name == "SearchEquivalent") {
    for (const auto& k : p["known"]) {
      if (k == p["fact"]) return Json::array({k}).dump();
    }
    return "[]";
  }
  if (q.type_name == "Redundant") return "false";
  throw ConfigError("HornOracle cannot answer " + q.type_name);
}

ChoiceFn HornOracle::choice_fn() {
  return [this](const LocalSpace& sp) -> LocalValue {
    const auto& o = std::get<OpaqueSpace>(sp);
    return SpaceInspector::answer_element(o, answer(SpaceInspector::query(o)));
  };
}

InnerPolicy HornOracle::policy() {
  InnerPolicy ip;
  ip.set_any_query(scripted_answers([this](const Query& q) { return std::vector<std::string>{answer(q)}; }));
  return ip;
}

std::vector<std::string> HornOracle::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

// ---------------------------------------------------------------------------
// Program synthesis stub

StrategyValue generate_prog(const std::string& spec, bool extra_value) {
  StrategyValue s;
  s.name = extra_value ? "generate_prog_valued" : "generate_prog";
  s.args = Json{{"spec", spec}};
  s.signature = {effect::kBranch, effect::kFail, effect::kValue};
  s.return_type = "str";
  s.body = [spec, extra_value](StrategyContext& ctx) -> Json {
    Json prog = branch(ctx, SpaceSpec::of_query(Query::make("ConjectureProg", Json{{"spec", spec}}, "str")), "str");
    Json both{{"spec", spec}, {"prog", prog}};
    value(ctx, SpaceSpec::of_query(Query::make("EvalProg", both, "float")));
    Json proof = branch(ctx, SpaceSpec::of_query(Query::make("ProveProg", both, "str")), "str");
    ensure(ctx, !proof.get<std::string>().empty(), "invalid_proof", "empty proof");
    if (extra_value) {
      value(ctx, SpaceSpec::of_query(Query::make("CheckProof", Json{{"prog", prog}, {"proof", proof}}, "float")));
    }
    return prog;
  };
  return s;
}

StrategyValue pythagorean(int n) {
  StrategyValue s;
  s.name = "pythagorean";
  s.args = Json{{"n", n}};
  s.signature = {effect::kBranch, effect::kFail};
  s.return_type = "tuple(int,int,int)";
  s.body = [n](StrategyContext& ctx) -> Json {
    Json t = guess(ctx, "triple", "tuple(int,int,int)", {ContextItem{"perimeter", n}});
    long a = t.at(0).get<long>(), b = t.at(1).get<long>(), c = t.at(2).get<long>();
    ensure(ctx, a > 0 && b > 0 && c > 0, "positive", "sides must be positive");
    ensure(ctx, a + b + c == n, "perimeter", "perimeter differs from " + std::to_string(n));
    ensure(ctx, a * a + b * b == c * c, "right_angle", "not a right triangle");
    return t;
  };
  return s;
}

// ---------------------------------------------------------------------------
// Selector fixtures

namespace {

StrategyValue foo(int round) {
  StrategyValue s;
  s.name = "foo";
  s.args = Json{{"round", round}};
  s.signature = {effect::kBranch, effect::kFail};
  s.return_type = "json";
  s.body = [round](StrategyContext& ctx) -> Json {
    Json out = Json::array();
    for (int i = 1; i <= 3; ++i) {
      out.push_back(branch(ctx, SpaceSpec::of_query(Query::make("bar", Json{{"round", round}, {"i", i}}, "str")), "str"));
    }
    return out;
  };
  return s;
}

StrategyValue rank(const Json& items) {
  StrategyValue s;
  s.name = "rank";
  s.args = Json{{"items", items}};
  s.signature = {effect::kBranch, effect::kFail};
  s.return_type = "list(float)";
  s.body = [items](StrategyContext& ctx) -> Json {
    return branch(ctx, SpaceSpec::of_query(Query::make("Rank", Json{{"items", items}}, "list(float)")), "list(float)");
  };
  return s;
}

}  // namespace

StrategyValue selector_fixture() {
  StrategyValue s;
  s.name = "selector_fixture";
  s.signature = {effect::kBranch, effect::kFail};
  s.body = [](StrategyContext& ctx) -> Json {
    Json x = branch(ctx, SpaceSpec::search(foo(1)));
    Json y = branch(ctx, SpaceSpec::search(foo(2)));
    return Json::array({x, y});
  };
  return s;
}

StrategyValue compare_fixture() {
  StrategyValue s;
  s.name = "compare_fixture";
  s.signature = {effect::kCBranch, effect::kFail};
  s.return_type = "str";
  s.body = [](StrategyContext& ctx) -> Json {
    return cbranch(
        ctx, SpaceSpec::of_query(Query::make("Candidates", Json{{"topic", "demo"}}, "str")),
        [](const Json& items) { return SpaceSpec::search(rank(items)); }, "str");
  };
  return s;
}

// ---------------------------------------------------------------------------
// Registration

void register_all(StrategyRegistry& registry, TemplateRegistry& templates) {
  auto add_if_missing = [&registry](StrategyEntry e) {
    if (!registry.find(e.name)) registry.add(std::move(e));
  };
  add_if_missing({"choice_tree", Json{{"tree", "json"}}, [](const Json& a) { return choice_tree(a["tree"]); },
                  "synthetic tree of picks, estimates and joins"});
  add_if_missing({"horn", Json{{"rules", "json"}, {"goal", "str"}},
                  [](const Json& a) { return horn(horn_rules_from_json(a["rules"]), a["goal"].get<std::string>()); },
                  "abduction over Horn clauses"});
  add_if_missing({"generate_prog", Json{{"spec", "str"}},
                  [](const Json& a) { return generate_prog(a["spec"].get<std::string>(), false); },
                  "conjecture, evaluate and prove a program"});
  add_if_missing({"generate_prog_valued", Json{{"spec", "str"}},
                  [](const Json& a) { return generate_prog(a["spec"].get<std::string>(), true); },
                  "generate_prog with an extra value node"});
  add_if_missing({"pythagorean", Json{{"n", "int"}}, [](const Json& a) { return pythagorean(a["n"].get<int>()); },
                  "guess a Pythagorean triple with a given perimeter"});
  add_if_missing({"selector_fixture", Json::object(), [](const Json&) { return selector_fixture(); },
                  "two nested foo strategies with three bar choices each"});
  add_if_missing({"compare_fixture", Json::object(), [](const Json&) { return compare_fixture(); },
                  "cbranch with a nested rank strategy"});

  const char* system = "Answer the query. Put the answer alone in a fenced code block.";
  for (const char* type : {"Pick", "Estimate", "Prove", "Suggest", "SearchEquivalent", "Redundant", "ConjectureProg",
                           "EvalProg", "ProveProg", "CheckProof", "bar", "Candidates", "Rank"}) {
    if (!templates.find(type)) templates.add(type, PromptTemplate{system, ""});
  }
}

}  // namespace oracular::fixtures
