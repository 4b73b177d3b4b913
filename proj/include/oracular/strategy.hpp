#pragma once

// Strategies, search trees and opaque spaces.
//
// A strategy body is an ordinary function that receives a StrategyContext
// and calls `emit` for every effect it triggers. Reification replays the
// body from scratch for each node: recorded actions are fed back to the
// first emits, and the first emit past the recorded prefix becomes the node.
// Bodies must therefore be deterministic given the actions they receive.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "oracular/budget.hpp"
#include "oracular/common.hpp"
#include "oracular/local_value.hpp"
#include "oracular/query.hpp"
#include "oracular/refs.hpp"
#include "oracular/stream.hpp"

namespace oracular {

class StrategyContext;
class EffectNode;
class Tree;
class InnerPolicy;
class RunObserver;

struct StrategyValue {
  std::string name;
  Json args = Json::object();
  std::set<std::string> signature;
  std::string return_type = "json";
  std::function<Json(StrategyContext&)> body;
};

// Where the elements of a space come from, as written by strategies.
struct SpaceSpec {
  enum class Kind { kQuery, kSearch, kEmbedded };

  Kind kind = Kind::kQuery;
  Query query;
  std::shared_ptr<const StrategyValue> strategy;
  // Key into the ambient inner policy. Defaults to the query type or the
  // strategy name.
  std::string selector;

  static SpaceSpec of_query(Query q, std::string selector = "");
  static SpaceSpec search(StrategyValue s, std::string selector = "");
  static SpaceSpec embedded(StrategyValue s);

  std::vector<std::string> tags() const;
  std::string fingerprint() const;
};

struct SpaceDecl {
  std::string name;
  bool parametric = false;
  SpaceSpec fixed;
  std::function<SpaceSpec(const Json& param)> family;

  static SpaceDecl single(std::string name, SpaceSpec spec);
  static SpaceDecl indexed(std::string name, std::function<SpaceSpec(const Json&)> family);
};

struct EffectRequest {
  std::string kind;
  std::vector<SpaceDecl> spaces;
  std::vector<std::string> tags;
  Json attrs = Json::object();
  std::string action_type = "json";

  std::string fingerprint() const;
};

// Thrown inside strategy bodies to stop replay at a new effect. It does not
// derive from std::exception so that `catch (const std::exception&)` in a
// body cannot swallow it.
struct ReplaySuspend {
  EffectRequest request;
};

struct Annotation {
  std::string label;
  Json payload;
  friend bool operator==(const Annotation& a, const Annotation& b) {
    return a.label == b.label && a.payload == b.payload;
  }
};

class StrategyContext {
 public:
  struct Step {
    Json payload;
    ValueRef ref;
    std::string fingerprint;
  };

  StrategyContext(const StrategyValue& s, const std::vector<Step>& steps, const NodeLocation& base);

  // Triggers an effect and returns the payload of the chosen action.
  Json emit(const EffectRequest& req);
  // Records a labeled annotation on the node being reified.
  void annotate(const std::string& label, Json payload);

  const StrategyValue& strategy() const { return strategy_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }

 private:
  const StrategyValue& strategy_;
  const std::vector<Step>& steps_;
  NodeLocation location_;
  std::size_t next_ = 0;
  std::vector<Annotation> annotations_;
};

// ---------------------------------------------------------------------------
// Inner policies

struct ParsedAnswer {
  std::string raw;
  Json value;
};

struct PromptContext {
  Query query;
  NodeLocation location;
  SpaceRef space = SpaceRef::main();
  std::shared_ptr<RunObserver> observer;

  // Reports a completion to the observer, if any. `error` is empty when the
  // completion parsed.
  void record(const std::string& raw, const std::string& error) const;
};

using PromptingPolicy = std::function<Stream<ParsedAnswer>(const PromptContext&)>;

struct SearchPolicy {
  std::string name;
  std::set<std::string> accepted;
  std::function<Stream<LocalValue>(const Tree&, const InnerPolicy&)> run;
};

struct SearchBinding {
  std::shared_ptr<const SearchPolicy> policy;
  // Null means the enclosing inner policy is reused.
  std::shared_ptr<const InnerPolicy> inner;
};

class InnerPolicy {
 public:
  using Entry = std::variant<PromptingPolicy, SearchBinding>;

  InnerPolicy& set(const std::string& selector, Entry e);
  InnerPolicy& set_any_query(PromptingPolicy p);
  InnerPolicy& set_any_strategy(SearchBinding b);

  const PromptingPolicy& prompting(const std::string& selector) const;
  const SearchBinding& search(const std::string& selector) const;

  Json hyper = Json::object();

 private:
  std::map<std::string, Entry> entries_;
  std::optional<PromptingPolicy> any_query_;
  std::optional<SearchBinding> any_strategy_;
};

// ---------------------------------------------------------------------------
// Spaces

namespace detail {
struct OpaqueSource;
}

// The policy-facing view of a space: a stream of local values and tags.
class OpaqueSpace {
 public:
  Stream<LocalValue> get_stream(const InnerPolicy& ip) const;
  const std::vector<std::string>& tags() const;
  const SpaceRef& ref() const;

 private:
  explicit OpaqueSpace(std::shared_ptr<const detail::OpaqueSource> src) : src_(std::move(src)) {}
  std::shared_ptr<const detail::OpaqueSource> src_;
  friend class SpaceInspector;
  friend class SpaceFactory;
};

// Trees embedded in a node are visible to policies.
struct EmbeddedTree {
  std::shared_ptr<const Tree> tree;
  std::vector<std::string> tags;
  SpaceRef ref = SpaceRef::main();
};

using LocalSpace = std::variant<OpaqueSpace, EmbeddedTree>;

std::vector<std::string> space_tags(const LocalSpace& s);
const SpaceRef& space_ref(const LocalSpace& s);

// ---------------------------------------------------------------------------
// Trees

class Tree {
 public:
  static Tree success(LocalValue v, NodeLocation loc, std::vector<Annotation> ann = {});
  static Tree node(std::shared_ptr<const EffectNode> n, std::vector<Annotation> ann = {});

  bool is_success() const { return !node_; }
  const LocalValue& value() const;
  const EffectNode& node() const;
  const std::shared_ptr<const EffectNode>& node_ptr() const { return node_; }
  const NodeLocation& location() const;
  const std::vector<Annotation>& annotations() const { return annotations_; }

 private:
  Tree() = default;
  std::optional<LocalValue> value_;
  NodeLocation location_;
  std::shared_ptr<const EffectNode> node_;
  std::vector<Annotation> annotations_;
};

using ChoiceFn = std::function<LocalValue(const LocalSpace&)>;
using NavigateFn = std::function<LocalValue(const EffectNode&, const ChoiceFn&)>;

struct SpaceSlot {
  std::string name;
  bool parametric = false;
  bool embedded = false;
  // Builds the space; the argument is the parameter for parametric slots.
  std::function<LocalSpace(const std::optional<LocalValue>&)> make;
};

struct NodeParts {
  std::string kind;
  std::vector<std::string> tags;
  NodeIdentity id = NodeIdentity::fresh();
  std::optional<std::string> primary;
  std::vector<SpaceSlot> slots;
  std::function<Tree(const LocalValue&)> child;  // empty for leaves
  NavigateFn navigate;                           // empty for leaves
  NodeLocation location;
  Json attrs = Json::object();
  std::string action_type = "json";
  std::shared_ptr<RunObserver> observer;
};

class EffectNode {
 public:
  explicit EffectNode(NodeParts parts) : p_(std::move(parts)) {}

  const std::string& kind() const { return p_.kind; }
  const std::vector<std::string>& tags() const { return p_.tags; }
  NodeIdentity id() const { return p_.id; }
  const std::optional<std::string>& primary() const { return p_.primary; }
  const NodeLocation& location() const { return p_.location; }
  const Json& attrs() const { return p_.attrs; }
  const std::string& action_type() const { return p_.action_type; }
  bool is_leaf() const { return !p_.navigate; }

  struct SpaceInfo {
    std::string name;
    bool parametric;
    bool embedded;
  };
  std::vector<SpaceInfo> spaces() const;
  bool has_space(const std::string& name) const;

  // Non-parametric and parametric access. Parameters must be owned by this
  // node.
  LocalSpace space(const std::string& name) const;
  LocalSpace space(const std::string& name, const LocalValue& param) const;
  OpaqueSpace opaque(const std::string& name) const;
  OpaqueSpace opaque(const std::string& name, const LocalValue& param) const;
  std::shared_ptr<const Tree> embedded(const std::string& name) const;
  // Space addressed by a SpaceRef, resolving its parameter at this node.
  LocalSpace space_at(const SpaceRef& ref) const;

  Tree child(const LocalValue& action) const;
  LocalValue navigate(const ChoiceFn& choose) const;

  // Copy with a new child function and embedded trees mapped through `f`.
  // Used by tree transformers.
  std::shared_ptr<const EffectNode> rebuild(std::function<Tree(const LocalValue&)> child,
                                            std::function<Tree(const Tree&)> embedded_map) const;
  const NodeParts& parts() const { return p_; }

 private:
  const SpaceSlot& slot(const std::string& name) const;
  NodeParts p_;
};

// ---------------------------------------------------------------------------
// Observation

class RunObserver {
 public:
  virtual ~RunObserver() = default;
  // A tree (leaf or node) was materialized.
  virtual void on_tree(const Tree&) {}
  // A space was instantiated at a node (including parametric instances).
  virtual void on_space(const EffectNode&, const LocalSpace&) {}
  // A completion was received for a query; `error` empty when it parsed.
  virtual void on_answer(const PromptContext&, const std::string& raw, const std::string& error) {
    (void)raw;
    (void)error;
  }
};

// ---------------------------------------------------------------------------
// Reification and references

Tree reify(const StrategyValue& s, std::shared_ptr<RunObserver> observer = nullptr);

// Internal structure of spaces, for the demo interpreter and the trace
// recorder. Policies must not use it.
class SpaceInspector {
 public:
  enum class Source { kQuery, kTree, kComputed };
  static Source source(const OpaqueSpace& s);
  static const Query& query(const OpaqueSpace& s);
  static std::shared_ptr<const Tree> nested_tree(const OpaqueSpace& s);
  static const std::string& selector(const OpaqueSpace& s);
  static NodeIdentity owner(const OpaqueSpace& s);
  // Local value for an answer text of a query space.
  static LocalValue answer_element(const OpaqueSpace& s, const std::string& raw);
};

// Construction of spaces that are not written by strategies (transformers).
class SpaceFactory {
 public:
  using Elements = std::function<Stream<LocalValue>(const InnerPolicy&)>;
  static OpaqueSpace computed(SpaceRef ref, NodeIdentity owner, std::vector<std::string> tags,
                              Elements elements, std::function<LocalValue(const std::string&)> decode);
  static OpaqueSpace make_opaque(std::shared_ptr<detail::OpaqueSource> src);
};

// Local value designated by `ref` at `node`, or an error message.
struct Resolution {
  std::optional<LocalValue> value;
  std::string error;
};
Resolution resolve_ref(const EffectNode& node, const ValueRef& ref);

// Follows the actions of `ref` from the root of `t`.
struct SuccessLookup {
  std::optional<LocalValue> value;
  std::optional<Tree> reached;
  std::string error;
};
SuccessLookup follow_ref(const Tree& t, const NodeRef& ref);
std::optional<LocalValue> success_value(const Tree& t, const NodeRef& ref);

// ---------------------------------------------------------------------------
// Effect declarations

struct EffectArg {
  std::string name;
  bool parametric = false;
  bool embedded = false;  // Strategy rather than Opaque
  std::string param_type;
  std::string elem_type;
};

struct EffectDecl {
  std::string kind;
  std::vector<EffectArg> args;
  std::string action_type;
};

// Declarations read
//   kind { name: Opaque T, name: P -> Opaque T, name: Strategy T, ... } -> A
// Anything else is rejected with a ParseError.
EffectDecl parse_effect_decl(const std::string& text);

struct EffectRegistration {
  EffectDecl decl;
  NavigateFn navigate;  // empty for leaf effects
  std::optional<std::string> primary;
};

class EffectRegistry {
 public:
  // Holds the standard effects.
  static EffectRegistry& global();
  void add(EffectRegistration r);
  const EffectRegistration* find(const std::string& kind) const;
  std::vector<std::string> kinds() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const EffectRegistration>> entries_;
};

void register_effect(const std::string& decl_text, NavigateFn navigate,
                     std::optional<std::string> primary = std::nullopt,
                     EffectRegistry& registry = EffectRegistry::global());

// ---------------------------------------------------------------------------
// Strategy registry

struct StrategyEntry {
  std::string name;
  // Object mapping argument name to an answer-type expression.
  Json args_schema = Json::object();
  std::function<StrategyValue(const Json& args)> make;
  std::string description;
};

class StrategyRegistry {
 public:
  static StrategyRegistry& global();
  void add(StrategyEntry e);
  const StrategyEntry* find(const std::string& name) const;
  std::vector<std::string> names() const;
  // Validates `args` against the schema and builds the strategy value.
  StrategyValue instantiate(const std::string& name, const Json& args) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const StrategyEntry>> entries_;
};

}  // namespace oracular
