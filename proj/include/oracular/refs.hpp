#pragma once

// Provenance references. Every local value carries a ValueRef explaining how
// it was assembled from space elements; NodeRefs address nodes by the chain
// of actions leading to them. The textual syntax is specified in docs/refs.md.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oracular/common.hpp"

namespace oracular {

class SpaceElementRef;
class NodeRef;

class ValueRef {
 public:
  enum class Kind { kAtom, kList, kElement };

  static ValueRef atom(SpaceElementRef elem);
  static ValueRef list(std::vector<ValueRef> items);
  static ValueRef element(std::size_t index, ValueRef of);
  static ValueRef unit() { return list({}); }

  Kind kind() const { return kind_; }
  const SpaceElementRef& atom() const;
  const std::vector<ValueRef>& items() const;
  std::size_t index() const;
  const ValueRef& of() const;

  bool is_unit() const { return kind_ == Kind::kList && items_.empty(); }

  friend bool operator==(const ValueRef& a, const ValueRef& b);
  friend bool operator!=(const ValueRef& a, const ValueRef& b) { return !(a == b); }

 private:
  ValueRef() = default;

  Kind kind_ = Kind::kList;
  std::shared_ptr<const SpaceElementRef> atom_;
  std::vector<ValueRef> items_;
  std::size_t index_ = 0;
  std::shared_ptr<const ValueRef> of_;
};

class SpaceRef {
 public:
  static SpaceRef main();
  static SpaceRef named(std::string name, ValueRef param = ValueRef::unit());

  bool is_main() const { return main_; }
  const std::string& name() const { return name_; }
  const ValueRef& param() const { return param_; }

  friend bool operator==(const SpaceRef& a, const SpaceRef& b);
  friend bool operator!=(const SpaceRef& a, const SpaceRef& b) { return !(a == b); }

 private:
  SpaceRef() : param_(ValueRef::unit()) {}

  bool main_ = true;
  std::string name_;
  ValueRef param_;
};

// Root is the empty action chain; Child(parent, a) appends a.
class NodeRef {
 public:
  NodeRef() = default;
  static NodeRef root() { return NodeRef(); }

  NodeRef child(ValueRef action) const;
  bool is_root() const { return actions_.empty(); }
  NodeRef parent() const;
  const std::vector<ValueRef>& actions() const { return actions_; }
  std::size_t depth() const { return actions_.size(); }

  friend bool operator==(const NodeRef& a, const NodeRef& b) { return a.actions_ == b.actions_; }
  friend bool operator!=(const NodeRef& a, const NodeRef& b) { return !(a == b); }

 private:
  std::vector<ValueRef> actions_;
};

NodeRef make_child_ref(const NodeRef& parent, ValueRef action);

class SpaceElementRef {
 public:
  enum class Kind { kAnswer, kResult };

  static SpaceElementRef answer(SpaceRef space, std::string text);
  static SpaceElementRef result(SpaceRef space, NodeRef node);

  Kind kind() const { return kind_; }
  const SpaceRef& space() const { return space_; }
  const std::string& answer_text() const { return text_; }
  const NodeRef& node() const { return node_; }

  friend bool operator==(const SpaceElementRef& a, const SpaceElementRef& b);
  friend bool operator!=(const SpaceElementRef& a, const SpaceElementRef& b) { return !(a == b); }

 private:
  SpaceElementRef(Kind kind, SpaceRef space) : kind_(kind), space_(std::move(space)) {}

  Kind kind_;
  SpaceRef space_;
  std::string text_;
  NodeRef node_;
};

// Trims trailing whitespace; answers are stored in this form inside refs.
std::string canonical_answer(std::string_view raw);

std::string to_string(const ValueRef& r);
std::string to_string(const SpaceRef& r);
std::string to_string(const NodeRef& r);
std::string to_string(const SpaceElementRef& r);

ValueRef parse_value_ref(std::string_view text);
SpaceRef parse_space_ref(std::string_view text);
NodeRef parse_node_ref(std::string_view text);

// Position of a node in a run, including nested trees. The first segment is a
// path in the top-level tree; every further segment names the space (at the
// node designated so far) holding a nested tree, and a path inside it.
class NodeLocation {
 public:
  struct Segment {
    std::optional<SpaceRef> space;
    NodeRef node;
    friend bool operator==(const Segment& a, const Segment& b) {
      return a.space == b.space && a.node == b.node;
    }
  };

  NodeLocation() : segments_{Segment{std::nullopt, NodeRef::root()}} {}

  NodeLocation child(const ValueRef& action) const;
  NodeLocation nested(const SpaceRef& space) const;

  const std::vector<Segment>& segments() const { return segments_; }
  const NodeRef& local() const { return segments_.back().node; }
  std::size_t nesting() const { return segments_.size() - 1; }
  // Location of the node owning the innermost nested tree.
  NodeLocation enclosing() const;

  friend bool operator==(const NodeLocation& a, const NodeLocation& b) {
    return a.segments_ == b.segments_;
  }
  friend bool operator!=(const NodeLocation& a, const NodeLocation& b) { return !(a == b); }

 private:
  std::vector<Segment> segments_;
};

std::string to_string(const NodeLocation& loc);
NodeLocation parse_location(std::string_view text);

}  // namespace oracular
