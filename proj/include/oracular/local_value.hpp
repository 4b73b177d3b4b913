#pragma once

// Values that are only meaningful at one tree node. A LocalValue pairs a
// payload with the ValueRef that produced it and the identity of its owning
// node; mixing values of different nodes is rejected at runtime.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oracular/common.hpp"
#include "oracular/refs.hpp"

namespace oracular {

class NodeIdentity {
 public:
  static NodeIdentity fresh();
  std::uint64_t raw() const { return id_; }
  friend bool operator==(NodeIdentity a, NodeIdentity b) { return a.id_ == b.id_; }
  friend bool operator!=(NodeIdentity a, NodeIdentity b) { return a.id_ != b.id_; }

 private:
  explicit NodeIdentity(std::uint64_t id) : id_(id) {}
  std::uint64_t id_;
};

// Runtime type descriptors are plain strings such as "int", "str",
// "list(int)" or "pair(str,int)". Two tags are compatible when equal or
// declared as aliases of each other.
class TypeRegistry {
 public:
  static TypeRegistry& global();
  void declare_alias(const std::string& alias, const std::string& target);
  bool compatible(const std::string& from, const std::string& to) const;

 private:
  std::string resolve(const std::string& tag) const;
  mutable std::mutex mu_;
  std::map<std::string, std::string> aliases_;
};

class LocalValue;

// Passkey restricting who may create LocalValues from scratch: space
// element extraction in the strategy core and the lift operations below.
class ElementKey {
 private:
  ElementKey() = default;
  friend class ElementFactory;
};

// Internal entry point used by the strategy core when extracting space
// elements and success values.
class ElementFactory {
 public:
  static LocalValue make(Json value, ValueRef ref, NodeIdentity owner, std::string type_tag);
};

class LocalValue {
 public:
  LocalValue(ElementKey, Json value, ValueRef ref, NodeIdentity owner, std::string type_tag)
      : value_(std::move(value)),
        ref_(std::move(ref)),
        owner_(owner),
        type_tag_(std::move(type_tag)) {}

  const Json& value() const { return value_; }
  const ValueRef& ref() const { return ref_; }
  NodeIdentity owner() const { return owner_; }
  const std::string& type_tag() const { return type_tag_; }

  // Throws LocalityError unless owned by `node`.
  void check_owner(NodeIdentity node, const std::string& context) const;

 private:
  friend std::optional<LocalValue> cast_local(const LocalValue& v, const std::string& target);

  Json value_;
  ValueRef ref_;
  NodeIdentity owner_;
  std::string type_tag_;
};

enum class CompositeKind { kUnit, kPair, kList, kOption, kEither };

LocalValue lift_unit(NodeIdentity owner);
LocalValue lift_pair(const LocalValue& a, const LocalValue& b);
LocalValue lift_list(const std::vector<LocalValue>& parts, NodeIdentity owner);
LocalValue lift_option(const std::optional<LocalValue>& part, NodeIdentity owner);
LocalValue lift_either(int side, const LocalValue& part);

// Generic form. `owner` is only consulted when there are no parts; `side`
// only for kEither.
LocalValue lift_composite(CompositeKind kind, const std::vector<LocalValue>& parts,
                          NodeIdentity owner, int side = 0);

std::vector<LocalValue> unlift_composite(const LocalValue& v, CompositeKind kind);
std::pair<LocalValue, LocalValue> unlift_pair(const LocalValue& v);
std::vector<LocalValue> unlift_list(const LocalValue& v);
std::optional<LocalValue> unlift_option(const LocalValue& v);
std::pair<int, LocalValue> unlift_either(const LocalValue& v);

std::optional<LocalValue> cast_local(const LocalValue& v, const std::string& target);

}  // namespace oracular
