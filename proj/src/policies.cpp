#include "oracular/policies.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

namespace oracular {

namespace {

std::shared_ptr<const InnerPolicy> share(const InnerPolicy& ip) { return std::make_shared<const InnerPolicy>(ip); }

[[noreturn]] void unexpected_effect(const std::string& policy, const EffectNode& n) {
  throw SignatureMismatch(policy + " cannot handle effect '" + n.kind() + "' at " + to_string(n.location()));
}

}  // namespace

// ---------------------------------------------------------------------------
// dfs

Stream<LocalValue> dfs_stream(const Tree& t, std::shared_ptr<const InnerPolicy> ip) {
  if (t.is_success()) return yield_one(t.value());
  const EffectNode& n = t.node();
  if (n.kind() == effect::kFail) return Stream<LocalValue>();
  if (n.kind() != effect::kBranch) unexpected_effect("dfs", n);
  auto node = t.node_ptr();
  return bind(node->opaque("cands").get_stream(*ip),
              [node, ip](const LocalValue& a) { return dfs_stream(node->child(a), ip); });
}

std::shared_ptr<const SearchPolicy> dfs() {
  auto p = std::make_shared<SearchPolicy>();
  p->name = "dfs";
  p->accepted = {effect::kBranch, effect::kFail};
  p->run = [](const Tree& t, const InnerPolicy& ip) { return dfs_stream(t, share(ip)); };
  return p;
}

// ---------------------------------------------------------------------------
// best_first

namespace {

struct FrontierEntry {
  double priority;
  std::uint64_t seq;
  Tree tree;
  // Remaining candidates of a branch node already expanded once.
  std::shared_ptr<Cursor<LocalValue>> cands;
};

struct FrontierOrder {
  bool operator()(const FrontierEntry& a, const FrontierEntry& b) const {
    if (a.priority != b.priority) return a.priority < b.priority;
    return a.seq > b.seq;
  }
};

Producer<LocalValue> best_first_run(Tree root, std::shared_ptr<const InnerPolicy> ip) {
  std::priority_queue<FrontierEntry, std::vector<FrontierEntry>, FrontierOrder> frontier;
  std::uint64_t seq = 0;
  frontier.push(FrontierEntry{1.0, seq++, root, nullptr});
  while (!frontier.empty()) {
    FrontierEntry e = frontier.top();
    frontier.pop();
    if (e.tree.is_success()) {
      co_yield e.tree.value();
      continue;
    }
    const EffectNode& n = e.tree.node();
    if (n.kind() == effect::kFail) continue;
    if (n.kind() == effect::kValue) {
      Cursor<LocalValue> c(take<LocalValue>(1, n.opaque("value").get_stream(*ip)));
      std::optional<LocalValue> est = co_await c.next();
      double v = 1.0;
      if (est && est->value().is_number()) v = est->value().get<double>();
      frontier.push(FrontierEntry{e.priority * v, seq++, n.child(lift_unit(n.id())), nullptr});
      continue;
    }
    if (n.kind() != effect::kBranch) unexpected_effect("best_first", n);
    if (!e.cands) e.cands = std::make_shared<Cursor<LocalValue>>(n.opaque("cands").get_stream(*ip));
    std::optional<LocalValue> a = co_await e.cands->next();
    if (!a) continue;
    frontier.push(FrontierEntry{e.priority, seq++, n.child(*a), nullptr});
    frontier.push(FrontierEntry{e.priority, seq++, e.tree, e.cands});
  }
}

}  // namespace

Stream<LocalValue> best_first_stream(const Tree& t, std::shared_ptr<const InnerPolicy> ip) {
  return best_first_run(t, std::move(ip));
}

std::shared_ptr<const SearchPolicy> best_first() {
  auto p = std::make_shared<SearchPolicy>();
  p->name = "best_first";
  p->accepted = {effect::kBranch, effect::kFail, effect::kValue};
  p->run = [](const Tree& t, const InnerPolicy& ip) { return best_first_stream(t, share(ip)); };
  return p;
}

// ---------------------------------------------------------------------------
// abduct_saturate

namespace {

struct Candidate {
  LocalValue fact;
  int count = 0;
  int explored = 0;
};

struct SaturateState {
  std::shared_ptr<const EffectNode> node;
  std::shared_ptr<const InnerPolicy> ip;
  SaturateParams params;
  std::vector<ProvedFact> proved;
  std::vector<Candidate> candidates;  // in order of first suggestion
  int requests = 0;
  bool capped = false;

  bool is_proved(const LocalValue& fact) const {
    std::string k = canonical(fact.value());
    for (const auto& p : proved) {
      if (p.fact && canonical(p.fact->value()) == k) return true;
    }
    return false;
  }

  // Stream of at most `n` elements of a space, or nullopt past the cap.
  std::optional<Stream<LocalValue>> request(const std::string& space, const LocalValue& param, std::size_t n) {
    if (requests >= params.max_requests_per_attempt) {
      capped = true;
      return std::nullopt;
    }
    ++requests;
    if (params.stats) ++params.stats->requests;
    return take<LocalValue>(n, node->opaque(space, param).get_stream(*ip));
  }

  std::size_t find(const std::string& key) const {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (canonical(candidates[i].fact.value()) == key) return i;
    }
    return candidates.size();
  }
};

// Index of the candidate a suggestion counts toward, adding it if new.
Producer<std::size_t> register_suggestion(std::shared_ptr<SaturateState> st, LocalValue s) {
  std::size_t i = st->find(canonical(s.value()));
  if (i == st->candidates.size() && !st->candidates.empty()) {
    std::vector<LocalValue> known;
    for (const auto& c : st->candidates) known.push_back(c.fact);
    auto req = st->request("search_equivalent", lift_pair(lift_list(known, st->node->id()), s), 1);
    if (req) {
      Cursor<LocalValue> c(std::move(*req));
      std::optional<LocalValue> eq = co_await c.next();
      if (eq) {
        if (auto f = unlift_option(*eq)) i = st->find(canonical(f->value()));
      }
    }
  }
  if (i == st->candidates.size()) st->candidates.push_back(Candidate{s, 0, 0});
  ++st->candidates[i].count;
  if (st->params.stats) {
    st->params.stats->suggestion_counts[canonical(st->candidates[i].fact.value())] = st->candidates[i].count;
  }
  co_yield i;
}

Producer<bool> rollout(std::shared_ptr<SaturateState> st, std::optional<LocalValue> fact, int depth) {
  if (fact && st->is_proved(*fact)) {
    co_yield true;
    co_return;
  }
  const EffectNode& n = *st->node;
  std::optional<LocalValue> first;
  {
    auto req = st->request("prove", abduction_prove_arg(n, st->proved, fact), 1);
    if (req) {
      Cursor<LocalValue> c(std::move(*req));
      first = co_await c.next();
    }
  }
  if (!first) {
    co_yield false;
    co_return;
  }
  auto [status, payload] = unlift_either(*first);
  if (status == 0) {
    st->proved.push_back(ProvedFact{fact, payload});
    co_yield true;
    co_return;
  }
  if (payload.value().is_null() || depth >= st->params.max_rollout_depth) {
    co_yield false;
    co_return;
  }

  // Candidates suggested for this fact, by index into st->candidates.
  std::vector<std::size_t> local;
  {
    auto req = st->request("suggest", payload, static_cast<std::size_t>(std::max(1, st->params.candidates_per_step)));
    if (req) {
      Cursor<LocalValue> c(std::move(*req));
      for (;;) {
        std::optional<LocalValue> batch = co_await c.next();
        if (!batch) break;
        for (const auto& s : unlift_list(*batch)) {
          Cursor<std::size_t> rc(register_suggestion(st, s));
          std::optional<std::size_t> i = co_await rc.next();
          if (i && std::find(local.begin(), local.end(), *i) == local.end()) local.push_back(*i);
        }
      }
    }
  }

  std::vector<std::size_t> tried;
  for (;;) {
    if (st->capped) break;
    // Most suggested first, then least explored, then first suggested.
    std::optional<std::size_t> pick;
    for (std::size_t i : local) {
      if (std::find(tried.begin(), tried.end(), i) != tried.end()) continue;
      if (st->is_proved(st->candidates[i].fact)) continue;
      if (!pick) {
        pick = i;
        continue;
      }
      const Candidate& a = st->candidates[i];
      const Candidate& b = st->candidates[*pick];
      if (a.count > b.count || (a.count == b.count && a.explored < b.explored)) pick = i;
    }
    if (!pick) break;
    tried.push_back(*pick);
    ++st->candidates[*pick].explored;
    {
      Cursor<bool> sub(rollout(st, st->candidates[*pick].fact, depth + 1));
      co_await sub.next();
    }
    std::optional<LocalValue> retry;
    {
      auto req = st->request("prove", abduction_prove_arg(n, st->proved, fact), 1);
      if (req) {
        Cursor<LocalValue> c(std::move(*req));
        retry = co_await c.next();
      }
    }
    if (retry) {
      auto [s2, p2] = unlift_either(*retry);
      if (s2 == 0) {
        st->proved.push_back(ProvedFact{fact, p2});
        co_yield true;
        co_return;
      }
    }
  }
  co_yield false;
}

Producer<LocalValue> saturate_run(Tree t, std::shared_ptr<const InnerPolicy> ip, SaturateParams params) {
  if (t.is_success()) {
    co_yield t.value();
    co_return;
  }
  const EffectNode& n = t.node();
  if (n.kind() == effect::kFail) co_return;
  if (n.kind() != effect::kAbduction) unexpected_effect("abduct_saturate", n);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    if (params.stats) {
      ++params.stats->attempts;
      params.stats->suggestion_counts.clear();
    }
    auto st = std::make_shared<SaturateState>();
    st->node = t.node_ptr();
    st->ip = ip;
    st->params = params;
    for (;;) {
      std::size_t before = st->proved.size();
      if (params.stats) ++params.stats->rollouts;
      bool solved = false;
      {
        Cursor<bool> c(rollout(st, std::nullopt, 0));
        std::optional<bool> r = co_await c.next();
        solved = r && *r;
      }
      if (solved) {
        const LocalValue* proof = nullptr;
        for (const auto& p : st->proved) {
          if (!p.fact) proof = &p.proof;
        }
        Cursor<LocalValue> rest(saturate_run(n.child(*proof), ip, params));
        for (;;) {
          std::optional<LocalValue> v = co_await rest.next();
          if (!v) break;
          co_yield std::move(*v);
        }
        co_return;
      }
      if (st->capped) break;                       // forget everything and restart
      if (st->proved.size() == before) co_return;  // no progress possible
    }
  }
}

}  // namespace

Stream<LocalValue> abduct_saturate_stream(const Tree& t, std::shared_ptr<const InnerPolicy> ip,
                                          SaturateParams params) {
  if (params.max_rollout_depth < 0) throw ConfigError("max_rollout_depth must be non-negative");
  if (params.max_requests_per_attempt < 1) throw ConfigError("max_requests_per_attempt must be positive");
  if (params.candidates_per_step < 1) throw ConfigError("candidates_per_step must be positive");
  return saturate_run(t, std::move(ip), std::move(params));
}

std::shared_ptr<const SearchPolicy> abduct_saturate(SaturateParams params) {
  auto p = std::make_shared<SearchPolicy>();
  p->name = "abduct_saturate";
  p->accepted = {effect::kAbduction, effect::kFail};
  p->run = [params](const Tree& t, const InnerPolicy& ip) { return abduct_saturate_stream(t, share(ip), params); };
  return p;
}

// ---------------------------------------------------------------------------
// few_shot

namespace {

std::vector<ParsedAnswer> parse_completions(const PromptContext& ctx, const std::vector<std::string>& raws) {
  std::vector<ParsedAnswer> out;
  for (const auto& raw : raws) {
    try {
      Json value = parse_answer(ctx.query, raw);
      ctx.record(raw, "");
      out.push_back(ParsedAnswer{raw, std::move(value)});
    } catch (const AnswerParseError& e) {
      ctx.record(raw, e.what());
    }
  }
  return out;
}

Producer<ParsedAnswer> few_shot_run(std::shared_ptr<OracleClient> oracle, FewShotParams params, PromptContext ctx) {
  std::vector<Example> examples;
  if (params.examples && params.max_examples > 0) {
    for (auto& e : params.examples(ctx.query, params.max_examples)) {
      if (e.query == ctx.query) continue;  // never show the answer being asked for
      if (examples.size() < params.max_examples) examples.push_back(std::move(e));
    }
  }
  OracleRequest req;
  req.messages = render_prompt(ctx.query, examples).messages;
  req.num_completions = params.num_completions;
  req.temperature = params.temperature;
  req.max_tokens = params.max_tokens;
  req.model = params.model;
  req.query = ctx.query;
  Budget est = estimate(req, params.pricing).budget;

  for (;;) {
    Cursor<OracleResponse> c(spend<OracleResponse>(
        est,
        [oracle, req] {
          OracleResponse r = oracle->complete(req);
          return std::make_pair(r, r.usage);
        },
        [ctx](const std::string& what, const Budget&) { ctx.record("", "oracle: " + what); }));
    std::optional<OracleResponse> resp = co_await c.next();
    if (!resp) co_return;
    // Parsing happens outside the coroutine frame's control flow; GCC 11
    // mishandles temporaries that live across a co_yield inside try blocks.
    std::vector<ParsedAnswer> parsed = parse_completions(ctx, resp->completions);
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      co_yield parsed[i];
    }
  }
}

}  // namespace

PromptingPolicy few_shot(std::shared_ptr<OracleClient> oracle, FewShotParams params) {
  if (!oracle) throw ConfigError("few_shot needs an oracle");
  if (params.num_completions < 1) throw ConfigError("num_completions must be at least 1");
  return [oracle, params](const PromptContext& ctx) -> Stream<ParsedAnswer> {
    return few_shot_run(oracle, params, ctx);
  };
}

// ---------------------------------------------------------------------------
// Lifted stream transformers

namespace {

std::shared_ptr<const SearchPolicy> wrap(std::shared_ptr<const SearchPolicy> p, std::string name,
                                         std::function<Stream<LocalValue>(Stream<LocalValue>)> f) {
  auto q = std::make_shared<SearchPolicy>();
  q->name = std::move(name);
  q->accepted = p->accepted;
  q->run = [p, f](const Tree& t, const InnerPolicy& ip) { return f(p->run(t, ip)); };
  return q;
}

PromptingPolicy wrap(PromptingPolicy p, std::function<Stream<ParsedAnswer>(Stream<ParsedAnswer>)> f) {
  return [p, f](const PromptContext& ctx) { return f(p(ctx)); };
}

}  // namespace

std::shared_ptr<const SearchPolicy> take_n(std::shared_ptr<const SearchPolicy> p, std::size_t n) {
  std::string name = "take_n(" + p->name + ")";
  return wrap(std::move(p), name, [n](Stream<LocalValue> s) { return take(n, std::move(s)); });
}

std::shared_ptr<const SearchPolicy> with_budget_policy(std::shared_ptr<const SearchPolicy> p, Budget limit) {
  std::string name = "with_budget(" + p->name + ")";
  return wrap(std::move(p), name, [limit](Stream<LocalValue> s) { return with_budget(limit, std::move(s)); });
}

std::shared_ptr<const SearchPolicy> majority_vote(std::shared_ptr<const SearchPolicy> p) {
  std::string name = "majority_vote(" + p->name + ")";
  return wrap(std::move(p), name, [](Stream<LocalValue> s) -> Stream<LocalValue> {
    return majority_vote_stream(std::move(s), [](const LocalValue& v) { return canonical(v.value()); });
  });
}

PromptingPolicy take_n(PromptingPolicy p, std::size_t n) {
  return wrap(std::move(p), [n](Stream<ParsedAnswer> s) { return take(n, std::move(s)); });
}

PromptingPolicy with_budget_policy(PromptingPolicy p, Budget limit) {
  return wrap(std::move(p), [limit](Stream<ParsedAnswer> s) { return with_budget(limit, std::move(s)); });
}

PromptingPolicy majority_vote(PromptingPolicy p) {
  return wrap(std::move(p), [](Stream<ParsedAnswer> s) -> Stream<ParsedAnswer> {
    return majority_vote_stream(std::move(s), [](const ParsedAnswer& a) { return canonical(a.value); });
  });
}

// ---------------------------------------------------------------------------
// Tree transformers

Tree bind_tree(const Tree& t, std::function<Tree(const LocalValue&)> f) {
  if (t.is_success()) return f(t.value());
  auto node = t.node_ptr();
  if (node->is_leaf()) return t;
  return Tree::node(node->rebuild([node, f](const LocalValue& a) { return bind_tree(node->child(a), f); }, nullptr),
                    t.annotations());
}

namespace {

Tree rewrite_shared(const Tree& t, std::shared_ptr<const NodeRewrite> h) {
  if (t.is_success()) return t;
  TreeTransform self = [h](const Tree& x) { return rewrite_shared(x, h); };
  if (auto r = (*h)(t, self)) return *r;
  auto node = t.node_ptr();
  return Tree::node(node->rebuild([node, self](const LocalValue& a) { return self(node->child(a)); }, self),
                    t.annotations());
}

}  // namespace

Tree rewrite_tree(const Tree& t, NodeRewrite handler) {
  return rewrite_shared(t, std::make_shared<const NodeRewrite>(std::move(handler)));
}

Tree drop_values(const Tree& t) {
  return rewrite_tree(t, [](const Tree& x, const TreeTransform& self) -> std::optional<Tree> {
    const EffectNode& n = x.node();
    if (n.kind() != effect::kValue) return std::nullopt;
    return self(n.child(lift_unit(n.id())));
  });
}

Tree threshold(const Tree& t, double cut) {
  return rewrite_tree(t, [cut](const Tree& x, const TreeTransform& self) -> std::optional<Tree> {
    const EffectNode& n = x.node();
    if (n.kind() != effect::kValue) return std::nullopt;
    auto node = x.node_ptr();
    // A branch with a single unit candidate when the estimate passes and
    // none otherwise; it keeps the node identity so the original child
    // accepts the unit action.
    OpaqueSpace value_space = node->opaque("value");
    SpaceFactory::Elements elements = [node, cut](const InnerPolicy& ip) -> Stream<LocalValue> {
      return bind(take<LocalValue>(1, node->opaque("value").get_stream(ip)),
                  [node, cut](const LocalValue& est) -> Stream<LocalValue> {
                    if (!est.value().is_number() || est.value().get<double>() < cut) return Stream<LocalValue>();
                    return yield_one(lift_unit(node->id()));
                  });
    };
    NodeIdentity id = node->id();
    OpaqueSpace gate = SpaceFactory::computed(
        SpaceRef::named("cands"), id, value_space.tags(), elements,
        [id](const std::string&) -> LocalValue { return lift_unit(id); });
    NodeParts parts;
    parts.kind = effect::kBranch;
    parts.tags = node->tags();
    parts.id = id;
    parts.primary = "cands";
    parts.slots.push_back(SpaceSlot{"cands", false, false,
                                    [gate](const std::optional<LocalValue>&) -> LocalSpace { return gate; }});
    parts.child = [node, self](const LocalValue& a) { return self(node->child(a)); };
    parts.navigate = navigate_branch;
    parts.location = node->location();
    parts.attrs = Json{{"threshold", cut}};
    parts.action_type = "unit";
    parts.observer = node->parts().observer;
    return Tree::node(std::make_shared<const EffectNode>(std::move(parts)), x.annotations());
  });
}

Tree elim_join(const Tree& t) {
  return rewrite_tree(t, [](const Tree& x, const TreeTransform& self) -> std::optional<Tree> {
    const EffectNode& n = x.node();
    if (n.kind() != effect::kJoin) return std::nullopt;
    auto node = x.node_ptr();
    Tree left = self(*node->embedded("left"));
    return bind_tree(left, [node, self](const LocalValue& l) {
      Tree right = self(*node->embedded("right"));
      return bind_tree(right, [node, self, l](const LocalValue& r) { return self(node->child(lift_pair(l, r))); });
    });
  });
}

// ---------------------------------------------------------------------------
// Registry

namespace {

int int_arg(const Json& args, const char* key, int dflt) {
  if (!args.contains(key)) return dflt;
  if (!args[key].is_number_integer()) throw ConfigError(std::string("policy argument '") + key + "' must be an integer");
  return args[key].get<int>();
}

void check_keys(const Json& args, const std::vector<std::string>& allowed, const std::string& id) {
  if (args.is_null()) return;
  if (!args.is_object()) throw ConfigError("arguments of policy '" + id + "' must be an object");
  for (auto it = args.begin(); it != args.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("unknown argument '" + it.key() + "' for policy '" + id + "'");
    }
  }
}

}  // namespace

PolicyRegistry& PolicyRegistry::global() {
  static PolicyRegistry* r = [] {
    auto* reg = new PolicyRegistry();
    reg->add_search("dfs", [](const Json& a) {
      check_keys(a, {}, "dfs");
      return dfs();
    });
    reg->add_search("best_first", [](const Json& a) {
      check_keys(a, {}, "best_first");
      return best_first();
    });
    reg->add_search("abduct_saturate", [](const Json& a) {
      check_keys(a, {"max_rollout_depth", "max_requests_per_attempt", "candidates_per_step", "max_attempts"},
                 "abduct_saturate");
      Json args = a.is_null() ? Json::object() : a;
      SaturateParams p;
      p.max_rollout_depth = int_arg(args, "max_rollout_depth", p.max_rollout_depth);
      p.max_requests_per_attempt = int_arg(args, "max_requests_per_attempt", p.max_requests_per_attempt);
      p.candidates_per_step = int_arg(args, "candidates_per_step", p.candidates_per_step);
      p.max_attempts = int_arg(args, "max_attempts", p.max_attempts);
      return abduct_saturate(p);
    });
    auto no_arg = [](const std::string& id, TreeTransform f) {
      return [id, f](const std::string& arg) -> TreeTransform {
        if (!arg.empty()) throw ConfigError("transform '" + id + "' takes no argument");
        return f;
      };
    };
    reg->add_transform("drop_values", no_arg("drop_values", drop_values));
    reg->add_transform("elim_join", no_arg("elim_join", elim_join));
    reg->add_transform("threshold", [](const std::string& arg) -> TreeTransform {
      double cut = 0;
      std::istringstream in(arg);
      if (arg.empty() || !(in >> cut) || !in.eof()) throw ConfigError("threshold needs a numeric cut: threshold:0.5");
      return [cut](const Tree& t) { return threshold(t, cut); };
    });
    return reg;
  }();
  return *r;
}

void PolicyRegistry::add_search(const std::string& id, SearchFactory f) { search_[id] = std::move(f); }
void PolicyRegistry::add_transform(const std::string& id, TransformFactory f) { transforms_[id] = std::move(f); }

std::shared_ptr<const SearchPolicy> PolicyRegistry::search(const std::string& id, const Json& args) const {
  auto it = search_.find(id);
  if (it == search_.end()) throw ConfigError("unknown policy '" + id + "'");
  return it->second(args);
}

TreeTransform PolicyRegistry::transforms(const std::string& chain) const {
  std::vector<TreeTransform> steps;
  std::stringstream in(chain);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t colon = item.find(':');
    std::string id = item.substr(0, colon);
    std::string arg = colon == std::string::npos ? "" : item.substr(colon + 1);
    auto it = transforms_.find(id);
    if (it == transforms_.end()) throw ConfigError("unknown tree transform '" + id + "'");
    steps.push_back(it->second(arg));
  }
  return [steps](const Tree& t) {
    Tree cur = t;
    for (const auto& s : steps) cur = s(cur);
    return cur;
  };
}

std::vector<std::string> PolicyRegistry::search_ids() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : search_) out.push_back(k);
  return out;
}

std::vector<std::string> PolicyRegistry::transform_ids() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : transforms_) out.push_back(k);
  return out;
}

}  // namespace oracular
