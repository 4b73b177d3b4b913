#include "oracular/local_value.hpp"

#include <atomic>

namespace oracular {

NodeIdentity NodeIdentity::fresh() {
  static std::atomic<std::uint64_t> counter{1};
  return NodeIdentity(counter.fetch_add(1, std::memory_order_relaxed));
}

TypeRegistry& TypeRegistry::global() {
  static TypeRegistry registry;
  return registry;
}

void TypeRegistry::declare_alias(const std::string& alias, const std::string& target) {
  std::lock_guard<std::mutex> lock(mu_);
  aliases_[alias] = target;
}

std::string TypeRegistry::resolve(const std::string& tag) const {
  std::string cur = tag;
  // Alias chains are short; the bound guards against accidental cycles.
  for (int i = 0; i < 64; ++i) {
    auto it = aliases_.find(cur);
    if (it == aliases_.end()) break;
    cur = it->second;
  }
  return cur;
}

bool TypeRegistry::compatible(const std::string& from, const std::string& to) const {
  if (from == to) return true;
  std::lock_guard<std::mutex> lock(mu_);
  return resolve(from) == resolve(to);
}

LocalValue ElementFactory::make(Json value, ValueRef ref, NodeIdentity owner, std::string type_tag) {
  return LocalValue(ElementKey(), std::move(value), std::move(ref), owner, std::move(type_tag));
}

void LocalValue::check_owner(NodeIdentity node, const std::string& context) const {
  if (owner_ != node) {
    throw LocalityError(context + ": value " + to_string(ref_) + " belongs to node #" +
                        std::to_string(owner_.raw()) + ", used at node #" +
                        std::to_string(node.raw()));
  }
}

namespace {

const char* kind_name(CompositeKind kind) {
  switch (kind) {
    case CompositeKind::kUnit: return "unit";
    case CompositeKind::kPair: return "pair";
    case CompositeKind::kList: return "list";
    case CompositeKind::kOption: return "option";
    case CompositeKind::kEither: return "either";
  }
  return "?";
}

// Splits "name(a,b)" into its top-level arguments; returns nullopt when the
// tag is not of the form name(...).
std::optional<std::vector<std::string>> tag_args(const std::string& tag, const std::string& name) {
  if (tag.size() < name.size() + 2 || tag.compare(0, name.size(), name) != 0 ||
      tag[name.size()] != '(' || tag.back() != ')') {
    return std::nullopt;
  }
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (std::size_t i = name.size() + 1; i + 1 < tag.size(); ++i) {
    char c = tag[i];
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string part_tag(const std::string& tag, const std::string& name, std::size_t i) {
  auto args = tag_args(tag, name);
  if (args && i < args->size()) return (*args)[i];
  if (args && args->size() == 1) return (*args)[0];
  return "any";
}

NodeIdentity common_owner(const std::vector<LocalValue>& parts, NodeIdentity fallback) {
  if (parts.empty()) return fallback;
  NodeIdentity owner = parts.front().owner();
  for (const auto& p : parts) p.check_owner(owner, "lift");
  return owner;
}

std::vector<ValueRef> refs_of(const std::vector<LocalValue>& parts) {
  std::vector<ValueRef> refs;
  refs.reserve(parts.size());
  for (const auto& p : parts) refs.push_back(p.ref());
  return refs;
}

Json payloads_of(const std::vector<LocalValue>& parts) {
  Json arr = Json::array();
  for (const auto& p : parts) arr.push_back(p.value());
  return arr;
}

}  // namespace

LocalValue lift_composite(CompositeKind kind, const std::vector<LocalValue>& parts,
                          NodeIdentity owner, int side) {
  std::size_t n = parts.size();
  bool arity_ok = (kind == CompositeKind::kUnit && n == 0) ||
                  (kind == CompositeKind::kPair && n == 2) ||
                  (kind == CompositeKind::kOption && n <= 1) ||
                  (kind == CompositeKind::kEither && n == 1) || kind == CompositeKind::kList;
  if (!arity_ok) {
    throw TypeError(std::string("lift ") + kind_name(kind) + ": wrong number of parts (" +
                    std::to_string(n) + ")");
  }
  NodeIdentity o = common_owner(parts, owner);
  switch (kind) {
    case CompositeKind::kUnit:
      return ElementFactory::make(Json::array(), ValueRef::unit(), o, "unit");
    case CompositeKind::kPair:
      return ElementFactory::make(payloads_of(parts), ValueRef::list(refs_of(parts)), o,
                                  "pair(" + parts[0].type_tag() + "," + parts[1].type_tag() + ")");
    case CompositeKind::kList:
      return ElementFactory::make(payloads_of(parts), ValueRef::list(refs_of(parts)), o,
                                  "list(" + (n ? parts[0].type_tag() : std::string("any")) + ")");
    case CompositeKind::kOption:
      return ElementFactory::make(payloads_of(parts), ValueRef::list(refs_of(parts)), o,
                                  "option(" + (n ? parts[0].type_tag() : std::string("any")) + ")");
    case CompositeKind::kEither: {
      if (side != 0 && side != 1) throw TypeError("either side must be 0 or 1");
      ValueRef tag = ValueRef::element(static_cast<std::size_t>(side), ValueRef::unit());
      return ElementFactory::make(Json::array({side, parts[0].value()}),
                                  ValueRef::list({tag, parts[0].ref()}), o, "either");
    }
  }
  throw TypeError("unknown composite kind");
}

LocalValue lift_unit(NodeIdentity owner) { return lift_composite(CompositeKind::kUnit, {}, owner); }

LocalValue lift_pair(const LocalValue& a, const LocalValue& b) {
  return lift_composite(CompositeKind::kPair, {a, b}, a.owner());
}

LocalValue lift_list(const std::vector<LocalValue>& parts, NodeIdentity owner) {
  return lift_composite(CompositeKind::kList, parts, owner);
}

LocalValue lift_option(const std::optional<LocalValue>& part, NodeIdentity owner) {
  if (part) return lift_composite(CompositeKind::kOption, {*part}, owner);
  return lift_composite(CompositeKind::kOption, {}, owner);
}

LocalValue lift_either(int side, const LocalValue& part) {
  return lift_composite(CompositeKind::kEither, {part}, part.owner(), side);
}

std::vector<LocalValue> unlift_composite(const LocalValue& v, CompositeKind kind) {
  const Json& p = v.value();
  auto mismatch = [&](const std::string& expected) {
    return TypeError("unlift: expected " + expected + ", got " + v.type_tag() + " with payload " +
                     p.dump());
  };
  if (!p.is_array()) throw mismatch(kind_name(kind));
  std::size_t n = p.size();
  const ValueRef& ref = v.ref();
  bool listed = ref.kind() == ValueRef::Kind::kList;

  auto part_ref = [&](std::size_t i) {
    if (listed) {
      if (i >= ref.items().size()) throw mismatch("a reference with " + std::to_string(i + 1) + " items");
      return ref.items()[i];
    }
    return ValueRef::element(i, ref);
  };

  std::vector<LocalValue> out;
  switch (kind) {
    case CompositeKind::kUnit:
      if (n != 0) throw mismatch("unit");
      return out;
    case CompositeKind::kPair:
      if (n != 2) throw mismatch("pair");
      for (std::size_t i = 0; i < 2; ++i) {
        out.push_back(ElementFactory::make(p[i], part_ref(i), v.owner(),
                                           part_tag(v.type_tag(), "pair", i)));
      }
      return out;
    case CompositeKind::kList:
    case CompositeKind::kOption: {
      const char* name = kind == CompositeKind::kList ? "list" : "option";
      if (kind == CompositeKind::kOption && n > 1) throw mismatch("option");
      for (std::size_t i = 0; i < n; ++i) {
        out.push_back(ElementFactory::make(p[i], part_ref(i), v.owner(), part_tag(v.type_tag(), name, 0)));
      }
      return out;
    }
    case CompositeKind::kEither:
      if (n != 2 || !p[0].is_number_integer()) throw mismatch("either");
      out.push_back(ElementFactory::make(p[1], part_ref(1), v.owner(), "any"));
      return out;
  }
  throw mismatch("a known composite");
}

std::pair<LocalValue, LocalValue> unlift_pair(const LocalValue& v) {
  auto parts = unlift_composite(v, CompositeKind::kPair);
  return {parts[0], parts[1]};
}

std::vector<LocalValue> unlift_list(const LocalValue& v) {
  return unlift_composite(v, CompositeKind::kList);
}

std::optional<LocalValue> unlift_option(const LocalValue& v) {
  auto parts = unlift_composite(v, CompositeKind::kOption);
  if (parts.empty()) return std::nullopt;
  return parts[0];
}

std::pair<int, LocalValue> unlift_either(const LocalValue& v) {
  auto parts = unlift_composite(v, CompositeKind::kEither);
  return {v.value()[0].get<int>(), parts[0]};
}

std::optional<LocalValue> cast_local(const LocalValue& v, const std::string& target) {
  if (!TypeRegistry::global().compatible(v.type_tag(), target)) return std::nullopt;
  LocalValue out = v;
  out.type_tag_ = target;
  return out;
}

}  // namespace oracular
