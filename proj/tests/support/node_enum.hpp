#pragma once

// Test-only: every node of a reified choice tree, nested join trees
// included, found by expanding children directly rather than through a
// search policy.

#include <vector>

#include "oracular/effects.hpp"
#include "oracular/fixtures.hpp"

namespace node_enum {

using namespace oracular;

inline std::vector<Tree> children(const Tree& t, const InnerPolicy& ip);

inline std::vector<LocalValue> successes(const Tree& t, const InnerPolicy& ip) {
  if (t.is_success()) return {t.value()};
  std::vector<LocalValue> out;
  for (const auto& c : children(t, ip)) {
    auto sub = successes(c, ip);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

inline std::vector<Tree> children(const Tree& t, const InnerPolicy& ip) {
  if (t.is_success() || t.node().is_leaf()) return {};
  const EffectNode& n = t.node();
  std::vector<Tree> out;
  if (n.kind() == "join") {
    for (const auto& l : successes(*n.embedded("left"), ip)) {
      for (const auto& r : successes(*n.embedded("right"), ip)) out.push_back(n.child(lift_pair(l, r)));
    }
  } else if (n.kind() == "value") {
    out.push_back(n.child(navigate_value(n, {})));
  } else {
    for (const auto& c : collect(n.opaque("cands").get_stream(ip)).values) out.push_back(n.child(c));
  }
  return out;
}

// Pre-order: a node, the nodes of its embedded trees, then its children.
inline void all_nodes(const Tree& t, const InnerPolicy& ip, std::vector<Tree>& out) {
  out.push_back(t);
  if (t.is_success() || t.node().is_leaf()) return;
  if (t.node().kind() == "join") {
    all_nodes(*t.node().embedded("left"), ip, out);
    all_nodes(*t.node().embedded("right"), ip, out);
  }
  for (const auto& c : children(t, ip)) all_nodes(c, ip, out);
}

}  // namespace node_enum
