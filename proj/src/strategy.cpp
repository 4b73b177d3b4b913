#include "oracular/strategy.hpp"

#include <algorithm>
#include <cctype>

namespace oracular {

// ---------------------------------------------------------------------------
// Specs and requests

SpaceSpec SpaceSpec::of_query(Query q, std::string selector) {
  SpaceSpec s;
  s.kind = Kind::kQuery;
  s.selector = selector.empty() ? q.type_name : std::move(selector);
  s.query = std::move(q);
  return s;
}

SpaceSpec SpaceSpec::search(StrategyValue sv, std::string selector) {
  SpaceSpec s;
  s.kind = Kind::kSearch;
  s.selector = selector.empty() ? sv.name : std::move(selector);
  s.strategy = std::make_shared<const StrategyValue>(std::move(sv));
  return s;
}

SpaceSpec SpaceSpec::embedded(StrategyValue sv) {
  SpaceSpec s;
  s.kind = Kind::kEmbedded;
  s.strategy = std::make_shared<const StrategyValue>(std::move(sv));
  return s;
}

std::vector<std::string> SpaceSpec::tags() const {
  if (kind == Kind::kQuery) return query.tags;
  return {strategy->name};
}

std::string SpaceSpec::fingerprint() const {
  switch (kind) {
    case Kind::kQuery:
      return "query " + query.key() + " @" + selector;
    case Kind::kSearch:
      return "search " + strategy->name + canonical(strategy->args) + " @" + selector;
    case Kind::kEmbedded:
      return "embedded " + strategy->name + canonical(strategy->args);
  }
  return "";
}

SpaceDecl SpaceDecl::single(std::string name, SpaceSpec spec) {
  SpaceDecl d;
  d.name = std::move(name);
  d.fixed = std::move(spec);
  return d;
}

SpaceDecl SpaceDecl::indexed(std::string name, std::function<SpaceSpec(const Json&)> family) {
  SpaceDecl d;
  d.name = std::move(name);
  d.parametric = true;
  d.family = std::move(family);
  return d;
}

std::string EffectRequest::fingerprint() const {
  std::string fp = kind;
  for (const auto& s : spaces) {
    fp += "; " + s.name + "=" + (s.parametric ? std::string("<family>") : s.fixed.fingerprint());
  }
  for (const auto& t : tags) fp += "; #" + t;
  fp += "; " + canonical(attrs);
  return fp;
}

// ---------------------------------------------------------------------------
// Context

StrategyContext::StrategyContext(const StrategyValue& s, const std::vector<Step>& steps,
                                 const NodeLocation& base)
    : strategy_(s), steps_(steps), location_(base) {}

Json StrategyContext::emit(const EffectRequest& req) {
  if (!strategy_.signature.count(req.kind)) {
    throw SignatureMismatch("strategy " + strategy_.name + " emitted effect '" + req.kind +
                            "' outside its signature");
  }
  std::string fp = req.fingerprint();
  if (next_ < steps_.size()) {
    const Step& s = steps_[next_];
    if (s.fingerprint != fp) {
      throw ReplayDivergence("strategy " + strategy_.name + " diverged on replay towards " +
                             to_string(location_) + ": recorded [" + s.fingerprint + "], got [" + fp + "]");
    }
    ++next_;
    return s.payload;
  }
  throw ReplaySuspend{req};
}

void StrategyContext::annotate(const std::string& label, Json payload) {
  // Annotations of replayed prefixes belong to ancestors.
  if (next_ < steps_.size()) return;
  annotations_.push_back({label, std::move(payload)});
}

void PromptContext::record(const std::string& raw, const std::string& error) const {
  if (observer) observer->on_answer(*this, raw, error);
}

// ---------------------------------------------------------------------------
// Inner policies

InnerPolicy& InnerPolicy::set(const std::string& selector, Entry e) {
  entries_[selector] = std::move(e);
  return *this;
}

InnerPolicy& InnerPolicy::set_any_query(PromptingPolicy p) {
  any_query_ = std::move(p);
  return *this;
}

InnerPolicy& InnerPolicy::set_any_strategy(SearchBinding b) {
  any_strategy_ = std::move(b);
  return *this;
}

const PromptingPolicy& InnerPolicy::prompting(const std::string& selector) const {
  auto it = entries_.find(selector);
  if (it != entries_.end()) {
    if (auto* p = std::get_if<PromptingPolicy>(&it->second)) return *p;
    throw SelectorError("selector '" + selector + "' names a search policy, a prompting policy is needed");
  }
  if (any_query_) return *any_query_;
  throw SelectorError("no prompting policy for selector '" + selector + "'");
}

const SearchBinding& InnerPolicy::search(const std::string& selector) const {
  auto it = entries_.find(selector);
  if (it != entries_.end()) {
    if (auto* b = std::get_if<SearchBinding>(&it->second)) return *b;
    throw SelectorError("selector '" + selector + "' names a prompting policy, a search policy is needed");
  }
  if (any_strategy_) return *any_strategy_;
  throw SelectorError("no search policy for selector '" + selector + "'");
}

// ---------------------------------------------------------------------------
// Spaces

namespace detail {

struct OpaqueSource {
  SpaceInspector::Source kind = SpaceInspector::Source::kQuery;
  SpaceRef ref = SpaceRef::main();
  NodeIdentity owner = NodeIdentity::fresh();
  NodeLocation location;
  std::vector<std::string> tags;
  std::string selector;
  Query query;
  std::shared_ptr<const StrategyValue> strategy;
  std::function<Tree()> tree;
  SpaceFactory::Elements elements;
  std::function<LocalValue(const std::string&)> decode;
  std::shared_ptr<RunObserver> observer;
};

}  // namespace detail

Stream<LocalValue> OpaqueSpace::get_stream(const InnerPolicy& ip) const {
  auto src = src_;
  switch (src->kind) {
    case SpaceInspector::Source::kQuery: {
      PromptingPolicy pp = ip.prompting(src->selector);
      PromptContext ctx{src->query, src->location, src->ref, src->observer};
      return map_stream(pp(ctx), [src](const ParsedAnswer& a) {
        return ElementFactory::make(a.value,
                                    ValueRef::atom(SpaceElementRef::answer(src->ref, canonical_answer(a.raw))),
                                    src->owner, src->query.answer_type);
      });
    }
    case SpaceInspector::Source::kTree: {
      const SearchBinding& b = ip.search(src->selector);
      for (const auto& k : src->strategy->signature) {
        if (!b.policy->accepted.count(k)) {
          throw SignatureMismatch("search policy " + b.policy->name + " does not handle effect '" + k +
                                  "' of strategy " + src->strategy->name);
        }
      }
      Tree t = src->tree();
      if (b.inner) return b.policy->run(t, *b.inner);
      return b.policy->run(t, ip);
    }
    case SpaceInspector::Source::kComputed:
      return src->elements(ip);
  }
  return {};
}

const std::vector<std::string>& OpaqueSpace::tags() const { return src_->tags; }
const SpaceRef& OpaqueSpace::ref() const { return src_->ref; }

std::vector<std::string> space_tags(const LocalSpace& s) {
  if (auto* o = std::get_if<OpaqueSpace>(&s)) return o->tags();
  return std::get<EmbeddedTree>(s).tags;
}

const SpaceRef& space_ref(const LocalSpace& s) {
  if (auto* o = std::get_if<OpaqueSpace>(&s)) return o->ref();
  return std::get<EmbeddedTree>(s).ref;
}

SpaceInspector::Source SpaceInspector::source(const OpaqueSpace& s) { return s.src_->kind; }

const Query& SpaceInspector::query(const OpaqueSpace& s) {
  if (s.src_->kind != Source::kQuery) throw Error("space " + to_string(s.ref()) + " is not defined by a query");
  return s.src_->query;
}

std::shared_ptr<const Tree> SpaceInspector::nested_tree(const OpaqueSpace& s) {
  if (s.src_->kind != Source::kTree) throw Error("space " + to_string(s.ref()) + " is not defined by a strategy");
  return std::make_shared<const Tree>(s.src_->tree());
}

const std::string& SpaceInspector::selector(const OpaqueSpace& s) { return s.src_->selector; }
NodeIdentity SpaceInspector::owner(const OpaqueSpace& s) { return s.src_->owner; }

LocalValue SpaceInspector::answer_element(const OpaqueSpace& s, const std::string& raw) {
  const auto& src = *s.src_;
  std::string text = canonical_answer(raw);
  ValueRef ref = ValueRef::atom(SpaceElementRef::answer(src.ref, text));
  if (src.kind == Source::kComputed) return src.decode(text);
  if (src.kind != Source::kQuery) throw Error("space " + to_string(src.ref) + " has no answers");
  return ElementFactory::make(parse_answer(src.query, text), ref, src.owner, src.query.answer_type);
}

OpaqueSpace SpaceFactory::computed(SpaceRef ref, NodeIdentity owner, std::vector<std::string> tags,
                                   Elements elements, std::function<LocalValue(const std::string&)> decode) {
  auto src = std::make_shared<detail::OpaqueSource>();
  src->kind = SpaceInspector::Source::kComputed;
  src->ref = std::move(ref);
  src->owner = owner;
  src->tags = std::move(tags);
  src->elements = std::move(elements);
  src->decode = std::move(decode);
  return OpaqueSpace(std::move(src));
}

// ---------------------------------------------------------------------------
// Trees and nodes

Tree Tree::success(LocalValue v, NodeLocation loc, std::vector<Annotation> ann) {
  Tree t;
  t.value_ = std::move(v);
  t.location_ = std::move(loc);
  t.annotations_ = std::move(ann);
  return t;
}

Tree Tree::node(std::shared_ptr<const EffectNode> n, std::vector<Annotation> ann) {
  Tree t;
  t.location_ = n->location();
  t.node_ = std::move(n);
  t.annotations_ = std::move(ann);
  return t;
}

const LocalValue& Tree::value() const {
  if (!value_) throw Error("tree at " + to_string(location_) + " is not a success leaf");
  return *value_;
}

const EffectNode& Tree::node() const {
  if (!node_) throw Error("tree at " + to_string(location_) + " is a success leaf");
  return *node_;
}

const NodeLocation& Tree::location() const { return location_; }

std::vector<EffectNode::SpaceInfo> EffectNode::spaces() const {
  std::vector<SpaceInfo> out;
  for (const auto& s : p_.slots) out.push_back({s.name, s.parametric, s.embedded});
  return out;
}

bool EffectNode::has_space(const std::string& name) const {
  return std::any_of(p_.slots.begin(), p_.slots.end(), [&](const SpaceSlot& s) { return s.name == name; });
}

const SpaceSlot& EffectNode::slot(const std::string& name) const {
  for (const auto& s : p_.slots)
    if (s.name == name) return s;
  throw Error(p_.kind + " node at " + to_string(p_.location) + " has no space '" + name + "'");
}

LocalSpace EffectNode::space(const std::string& name) const {
  const SpaceSlot& s = slot(name);
  if (s.parametric) throw Error("space '" + name + "' is parametric and needs an argument");
  LocalSpace sp = s.make(std::nullopt);
  if (p_.observer) p_.observer->on_space(*this, sp);
  return sp;
}

LocalSpace EffectNode::space(const std::string& name, const LocalValue& param) const {
  const SpaceSlot& s = slot(name);
  if (!s.parametric) throw Error("space '" + name + "' takes no argument");
  param.check_owner(p_.id, "argument of space '" + name + "'");
  LocalSpace sp = s.make(param);
  if (p_.observer) p_.observer->on_space(*this, sp);
  return sp;
}

OpaqueSpace EffectNode::opaque(const std::string& name) const {
  LocalSpace s = space(name);
  if (auto* o = std::get_if<OpaqueSpace>(&s)) return *o;
  throw Error("space '" + name + "' is an embedded tree");
}

OpaqueSpace EffectNode::opaque(const std::string& name, const LocalValue& param) const {
  LocalSpace s = space(name, param);
  if (auto* o = std::get_if<OpaqueSpace>(&s)) return *o;
  throw Error("space '" + name + "' is an embedded tree");
}

std::shared_ptr<const Tree> EffectNode::embedded(const std::string& name) const {
  LocalSpace s = space(name);
  if (auto* e = std::get_if<EmbeddedTree>(&s)) return e->tree;
  throw Error("space '" + name + "' is opaque");
}

LocalSpace EffectNode::space_at(const SpaceRef& ref) const {
  if (ref.is_main()) throw Error("the main space is not a space of a node");
  const SpaceSlot& s = slot(ref.name());
  if (!s.parametric) {
    if (!ref.param().is_unit()) throw Error("space '" + ref.name() + "' takes no argument");
    return space(ref.name());
  }
  Resolution r = resolve_ref(*this, ref.param());
  if (!r.value) throw Error("argument of space '" + ref.name() + "': " + r.error);
  return space(ref.name(), *r.value);
}

Tree EffectNode::child(const LocalValue& action) const {
  if (!p_.child) throw Error(p_.kind + " node at " + to_string(p_.location) + " is a leaf");
  action.check_owner(p_.id, "action of " + p_.kind + " node at " + to_string(p_.location));
  return p_.child(action);
}

LocalValue EffectNode::navigate(const ChoiceFn& choose) const {
  if (!p_.navigate) throw Error(p_.kind + " node at " + to_string(p_.location) + " cannot be navigated");
  LocalValue v = p_.navigate(*this, choose);
  v.check_owner(p_.id, "navigation of " + p_.kind + " node");
  return v;
}

std::shared_ptr<const EffectNode> EffectNode::rebuild(std::function<Tree(const LocalValue&)> child,
                                                      std::function<Tree(const Tree&)> embedded_map) const {
  NodeParts parts = p_;
  if (parts.child) parts.child = std::move(child);
  if (embedded_map) {
    for (auto& s : parts.slots) {
      if (!s.embedded) continue;
      auto orig = s.make;
      s.make = [orig, embedded_map](const std::optional<LocalValue>& param) -> LocalSpace {
        LocalSpace sp = orig(param);
        auto& e = std::get<EmbeddedTree>(sp);
        e.tree = std::make_shared<const Tree>(embedded_map(*e.tree));
        return sp;
      };
    }
  }
  return std::make_shared<const EffectNode>(std::move(parts));
}

// ---------------------------------------------------------------------------
// Reification

namespace {

using Step = StrategyContext::Step;

struct Frame {
  std::shared_ptr<const StrategyValue> strategy;
  NodeIdentity owner;
  SpaceRef sr;
  std::shared_ptr<RunObserver> observer;
};

Tree reify_from(std::shared_ptr<const Frame> f, std::shared_ptr<const std::vector<Step>> steps,
                NodeLocation loc, NodeRef path);

Tree reify_nested(const std::shared_ptr<const StrategyValue>& s, NodeIdentity owner, const SpaceRef& sr,
                  const NodeLocation& at, const std::shared_ptr<RunObserver>& observer) {
  auto f = std::make_shared<const Frame>(Frame{s, owner, sr, observer});
  return reify_from(f, std::make_shared<const std::vector<Step>>(), at.nested(sr), NodeRef::root());
}

LocalSpace build_space(const SpaceSpec& spec, const SpaceRef& sr, NodeIdentity owner, const NodeLocation& loc,
                       const std::shared_ptr<RunObserver>& observer) {
  if (spec.kind == SpaceSpec::Kind::kEmbedded) {
    auto tree = std::make_shared<const Tree>(reify_nested(spec.strategy, owner, sr, loc, observer));
    return EmbeddedTree{tree, spec.tags(), sr};
  }
  auto src = std::make_shared<detail::OpaqueSource>();
  src->ref = sr;
  src->owner = owner;
  src->location = loc;
  src->tags = spec.tags();
  src->selector = spec.selector;
  src->observer = observer;
  if (spec.kind == SpaceSpec::Kind::kQuery) {
    src->kind = SpaceInspector::Source::kQuery;
    src->query = spec.query;
  } else {
    src->kind = SpaceInspector::Source::kTree;
    src->strategy = spec.strategy;
    auto strategy = spec.strategy;
    src->tree = [strategy, owner, sr, loc, observer]() { return reify_nested(strategy, owner, sr, loc, observer); };
  }
  return SpaceFactory::make_opaque(std::move(src));
}

void check_against_decl(const EffectRequest& req, const EffectDecl& decl) {
  if (req.spaces.size() != decl.args.size()) {
    throw TypeError("effect '" + req.kind + "' expects " + std::to_string(decl.args.size()) + " spaces, got " +
                    std::to_string(req.spaces.size()));
  }
  for (const auto& arg : decl.args) {
    auto it = std::find_if(req.spaces.begin(), req.spaces.end(), [&](const SpaceDecl& d) { return d.name == arg.name; });
    if (it == req.spaces.end()) throw TypeError("effect '" + req.kind + "' is missing space '" + arg.name + "'");
    if (it->parametric != arg.parametric) {
      throw TypeError("space '" + arg.name + "' of effect '" + req.kind + "' has the wrong arity");
    }
    if (!it->parametric && (it->fixed.kind == SpaceSpec::Kind::kEmbedded) != arg.embedded) {
      throw TypeError("space '" + arg.name + "' of effect '" + req.kind + "' must be " +
                      (arg.embedded ? "an embedded strategy" : "opaque"));
    }
  }
}

Tree make_node(const std::shared_ptr<const Frame>& f, const std::shared_ptr<const std::vector<Step>>& steps,
               const NodeLocation& loc, const NodeRef& path, const EffectRequest& req,
               std::vector<Annotation> annotations) {
  const EffectRegistration* reg = EffectRegistry::global().find(req.kind);
  if (!reg) throw ConfigError("effect '" + req.kind + "' is not registered");
  check_against_decl(req, reg->decl);

  NodeParts parts;
  parts.kind = req.kind;
  parts.primary = reg->primary;
  parts.location = loc;
  parts.attrs = req.attrs;
  parts.action_type = req.action_type;
  parts.observer = f->observer;
  NodeIdentity id = parts.id;

  if (reg->primary) {
    for (const auto& d : req.spaces) {
      if (d.name != *reg->primary) continue;
      parts.tags = d.parametric ? std::vector<std::string>{d.name} : d.fixed.tags();
    }
  } else {
    parts.tags = {req.kind};
  }
  for (const auto& t : req.tags) {
    if (std::find(parts.tags.begin(), parts.tags.end(), t) == parts.tags.end()) parts.tags.push_back(t);
  }

  auto observer = f->observer;
  for (const auto& d : req.spaces) {
    SpaceSlot slot;
    slot.name = d.name;
    slot.parametric = d.parametric;
    const EffectArg* arg = nullptr;
    for (const auto& a : reg->decl.args)
      if (a.name == d.name) arg = &a;
    slot.embedded = arg && arg->embedded;
    slot.make = [d, id, loc, observer](const std::optional<LocalValue>& param) -> LocalSpace {
      if (d.parametric) {
        if (!param) throw Error("space '" + d.name + "' needs an argument");
        SpaceRef sr = SpaceRef::named(d.name, param->ref());
        return build_space(d.family(param->value()), sr, id, loc, observer);
      }
      return build_space(d.fixed, SpaceRef::named(d.name), id, loc, observer);
    };
    parts.slots.push_back(std::move(slot));
  }

  if (reg->navigate) {
    parts.navigate = reg->navigate;
    std::string fp = req.fingerprint();
    parts.child = [f, steps, loc, path, fp](const LocalValue& a) {
      auto next = std::make_shared<std::vector<Step>>(*steps);
      next->push_back(Step{a.value(), a.ref(), fp});
      return reify_from(f, std::move(next), loc.child(a.ref()), path.child(a.ref()));
    };
  }
  return Tree::node(std::make_shared<const EffectNode>(std::move(parts)), std::move(annotations));
}

Tree reify_from(std::shared_ptr<const Frame> f, std::shared_ptr<const std::vector<Step>> steps,
                NodeLocation loc, NodeRef path) {
  StrategyContext ctx(*f->strategy, *steps, loc);
  std::optional<Tree> out;
  try {
    Json result = f->strategy->body(ctx);
    if (!conforms(f->strategy->return_type, result)) {
      throw TypeError("strategy " + f->strategy->name + " returned " + result.dump() + ", expected " +
                      f->strategy->return_type);
    }
    ValueRef ref = ValueRef::atom(SpaceElementRef::result(f->sr, path));
    out = Tree::success(ElementFactory::make(std::move(result), std::move(ref), f->owner, f->strategy->return_type),
                        loc, ctx.annotations());
  } catch (ReplaySuspend& s) {
    out = make_node(f, steps, loc, path, s.request, ctx.annotations());
  }
  if (f->observer) f->observer->on_tree(*out);
  return std::move(*out);
}

}  // namespace

OpaqueSpace SpaceFactory::make_opaque(std::shared_ptr<detail::OpaqueSource> src) {
  return OpaqueSpace(std::move(src));
}

Tree reify(const StrategyValue& s, std::shared_ptr<RunObserver> observer) {
  auto f = std::make_shared<const Frame>(
      Frame{std::make_shared<const StrategyValue>(s), NodeIdentity::fresh(), SpaceRef::main(), std::move(observer)});
  return reify_from(f, std::make_shared<const std::vector<Step>>(), NodeLocation(), NodeRef::root());
}

// ---------------------------------------------------------------------------
// References

Resolution resolve_ref(const EffectNode& node, const ValueRef& ref) {
  try {
    switch (ref.kind()) {
      case ValueRef::Kind::kAtom: {
        const SpaceElementRef& elem = ref.atom();
        LocalSpace sp = node.space_at(elem.space());
        if (elem.kind() == SpaceElementRef::Kind::kAnswer) {
          auto* o = std::get_if<OpaqueSpace>(&sp);
          if (!o || SpaceInspector::source(*o) == SpaceInspector::Source::kTree) {
            return {std::nullopt, "space " + to_string(elem.space()) + " is not defined by a query"};
          }
          return {SpaceInspector::answer_element(*o, elem.answer_text()), ""};
        }
        std::shared_ptr<const Tree> nested;
        if (auto* e = std::get_if<EmbeddedTree>(&sp)) {
          nested = e->tree;
        } else {
          const auto& o = std::get<OpaqueSpace>(sp);
          if (SpaceInspector::source(o) != SpaceInspector::Source::kTree) {
            return {std::nullopt, "space " + to_string(elem.space()) + " is not defined by a strategy"};
          }
          nested = SpaceInspector::nested_tree(o);
        }
        SuccessLookup look = follow_ref(*nested, elem.node());
        if (!look.value) return {std::nullopt, "in space " + to_string(elem.space()) + ": " + look.error};
        return {look.value, ""};
      }
      case ValueRef::Kind::kList: {
        Json payload = Json::array();
        for (const auto& item : ref.items()) {
          Resolution r = resolve_ref(node, item);
          if (!r.value) return r;
          payload.push_back(r.value->value());
        }
        return {ElementFactory::make(std::move(payload), ref, node.id(), "list(any)"), ""};
      }
      case ValueRef::Kind::kElement: {
        if (ref.of().is_unit()) {
          return {ElementFactory::make(Json(ref.index()), ref, node.id(), "int"), ""};
        }
        Resolution r = resolve_ref(node, ref.of());
        if (!r.value) return r;
        const Json& v = r.value->value();
        if (!v.is_array()) return {std::nullopt, "projection " + to_string(ref) + " of a non-composite value"};
        if (ref.index() >= v.size()) {
          return {std::nullopt, v.empty() ? "projection " + to_string(ref) + " out of an empty (none) value"
                                          : "projection " + to_string(ref) + " out of range"};
        }
        return {ElementFactory::make(v[ref.index()], ref, node.id(), "json"), ""};
      }
    }
  } catch (const Error& e) {
    return {std::nullopt, e.what()};
  }
  return {std::nullopt, "unknown reference"};
}

SuccessLookup follow_ref(const Tree& t, const NodeRef& ref) {
  SuccessLookup out;
  Tree cur = t;
  std::size_t i = 0;
  for (const auto& action : ref.actions()) {
    if (cur.is_success()) {
      out.error = "path continues past a success leaf after " + std::to_string(i) + " actions";
      return out;
    }
    const EffectNode& node = cur.node();
    if (node.is_leaf()) {
      out.error = "path continues past a " + node.kind() + " leaf at " + to_string(node.location());
      return out;
    }
    Resolution r = resolve_ref(node, action);
    if (!r.value) {
      out.error = "action " + std::to_string(i) + " at " + to_string(node.location()) + ": " + r.error;
      return out;
    }
    try {
      cur = node.child(*r.value);
    } catch (const Error& e) {
      out.error = e.what();
      return out;
    }
    ++i;
  }
  out.reached = cur;
  if (cur.is_success()) {
    out.value = cur.value();
  } else {
    out.error = "path ends at a " + cur.node().kind() + " node";
  }
  return out;
}

std::optional<LocalValue> success_value(const Tree& t, const NodeRef& ref) { return follow_ref(t, ref).value; }

// ---------------------------------------------------------------------------
// Effect declarations

namespace {

std::string trim_copy(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\n");
  return s.substr(a, b - a + 1);
}

// Splits on `sep` at bracket depth zero; returns pieces with their offsets.
std::vector<std::pair<std::string, std::size_t>> split_top(const std::string& s, char sep, std::size_t base) {
  std::vector<std::pair<std::string, std::size_t>> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (c == sep && depth == 0) {
      out.push_back({s.substr(start, i - start), base + start});
      start = i + 1;
    }
  }
  out.push_back({s.substr(start), base + start});
  return out;
}

std::size_t find_top(const std::string& s, const std::string& needle) {
  int depth = 0;
  for (std::size_t i = 0; i + needle.size() <= s.size(); ++i) {
    char c = s[i];
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (depth == 0 && s.compare(i, needle.size(), needle) == 0) return i;
  }
  return std::string::npos;
}

bool valid_name(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

}  // namespace

EffectDecl parse_effect_decl(const std::string& text) {
  EffectDecl d;
  std::size_t open = text.find('{');
  std::size_t close = text.rfind('}');
  if (open == std::string::npos) throw ParseError("effect declaration: expected '{'", text.size());
  if (close == std::string::npos || close < open) throw ParseError("effect declaration: expected '}'", text.size());
  d.kind = trim_copy(text.substr(0, open));
  if (!valid_name(d.kind)) throw ParseError("effect declaration: invalid effect name", 0);
  std::string tail = text.substr(close + 1);
  std::size_t arrow = tail.find("->");
  if (arrow == std::string::npos || !trim_copy(tail.substr(0, arrow)).empty()) {
    throw ParseError("effect declaration: expected '-> action-type' after '}'", close + 1);
  }
  d.action_type = trim_copy(tail.substr(arrow + 2));
  if (d.action_type.empty()) throw ParseError("effect declaration: missing action type", text.size());

  std::string body = text.substr(open + 1, close - open - 1);
  if (trim_copy(body).empty()) return d;
  for (auto& [piece, offset] : split_top(body, ',', open + 1)) {
    std::size_t colon = piece.find(':');
    if (colon == std::string::npos) throw ParseError("effect declaration: expected 'name: space'", offset);
    EffectArg arg;
    arg.name = trim_copy(piece.substr(0, colon));
    if (!valid_name(arg.name)) throw ParseError("effect declaration: invalid argument name", offset);
    for (const auto& other : d.args) {
      if (other.name == arg.name) throw ParseError("effect declaration: duplicate argument '" + arg.name + "'", offset);
    }
    std::string rest = piece.substr(colon + 1);
    std::size_t pos = offset + colon + 1;
    std::size_t a = find_top(rest, "->");
    if (a != std::string::npos) {
      arg.parametric = true;
      arg.param_type = trim_copy(rest.substr(0, a));
      if (arg.param_type.empty()) throw ParseError("effect declaration: missing parameter type", pos);
      pos += a + 2;
      rest = rest.substr(a + 2);
    }
    std::string space = trim_copy(rest);
    if (space.rfind("Opaque ", 0) == 0) {
      arg.elem_type = trim_copy(space.substr(7));
    } else if (space.rfind("Strategy ", 0) == 0) {
      arg.embedded = true;
      arg.elem_type = trim_copy(space.substr(9));
    } else {
      throw ParseError("effect declaration: argument '" + arg.name +
                           "' must be an opaque space or a strategy, possibly parametric",
                       pos);
    }
    if (arg.elem_type.empty()) throw ParseError("effect declaration: missing element type", pos);
    d.args.push_back(std::move(arg));
  }
  return d;
}

void EffectRegistry::add(EffectRegistration r) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string kind = r.decl.kind;
  if (entries_.count(kind)) throw ConfigError("effect '" + kind + "' is already registered");
  if (r.primary) {
    bool found = false;
    for (const auto& a : r.decl.args) found = found || (a.name == *r.primary && !a.parametric);
    if (!found) throw ConfigError("primary space '" + *r.primary + "' of effect '" + kind + "' is not a plain argument");
  }
  entries_[kind] = std::make_shared<const EffectRegistration>(std::move(r));
}

const EffectRegistration* EffectRegistry::find(const std::string& kind) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(kind);
  return it == entries_.end() ? nullptr : it->second.get();
}

std::vector<std::string> EffectRegistry::kinds() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

void register_effect(const std::string& decl_text, NavigateFn navigate, std::optional<std::string> primary,
                     EffectRegistry& registry) {
  registry.add(EffectRegistration{parse_effect_decl(decl_text), std::move(navigate), std::move(primary)});
}

// ---------------------------------------------------------------------------
// Strategy registry

StrategyRegistry& StrategyRegistry::global() {
  static StrategyRegistry* r = new StrategyRegistry();
  return *r;
}

void StrategyRegistry::add(StrategyEntry e) {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string name = e.name;
  if (entries_.count(name)) throw ConfigError("strategy '" + name + "' is already registered");
  entries_[name] = std::make_shared<const StrategyEntry>(std::move(e));
}

const StrategyEntry* StrategyRegistry::find(const std::string& name) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : it->second.get();
}

std::vector<std::string> StrategyRegistry::names() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

StrategyValue StrategyRegistry::instantiate(const std::string& name, const Json& args) const {
  const StrategyEntry* e = find(name);
  if (!e) throw ConfigError("unknown strategy '" + name + "'");
  Json a = args.is_null() ? Json::object() : args;
  if (!a.is_object()) throw ConfigError("arguments of strategy '" + name + "' must be a record");
  for (auto it = e->args_schema.begin(); it != e->args_schema.end(); ++it) {
    if (!a.contains(it.key())) throw ConfigError("strategy '" + name + "' needs argument '" + it.key() + "'");
    if (!conforms(it.value().get<std::string>(), a[it.key()])) {
      throw ConfigError("argument '" + it.key() + "' of strategy '" + name + "' must be " +
                        it.value().get<std::string>());
    }
  }
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!e->args_schema.contains(it.key())) {
      throw ConfigError("strategy '" + name + "' has no argument '" + it.key() + "'");
    }
  }
  return e->make(a);
}

}  // namespace oracular
