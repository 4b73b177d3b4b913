#pragma once

// Test-only: exhaustive generator of small choice trees and a brute-force
// enumerator of their successes, written directly over the JSON description
// without going through reification or any policy.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

namespace corpus {

using Json = nlohmann::json;

// Every tree whose branch nodes are nested at most `levels` deep, with 1 to
// `max_children` children per branch. Leaves are success or fail. Success
// payloads are made unique by numbering them in generation order.
inline std::vector<Json> all_trees(int levels, int max_children) {
  std::function<std::vector<Json>(int)> gen = [&](int d) {
    std::vector<Json> out{Json{{"success", 0}}, Json{{"fail", "dead"}}};
    if (d == 0) return out;
    std::vector<Json> sub = gen(d - 1);
    for (int k = 1; k <= max_children; ++k) {
      std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
      for (;;) {
        Json kids = Json::array();
        for (std::size_t i : idx) kids.push_back(sub[i]);
        out.push_back(Json{{"branch", kids}});
        std::size_t p = 0;
        while (p < idx.size() && ++idx[p] == sub.size()) idx[p++] = 0;
        if (p == idx.size()) break;
      }
    }
    return out;
  };
  std::vector<Json> trees = gen(levels);
  for (auto& t : trees) {
    int next = 0;
    std::function<void(Json&)> number = [&](Json& n) {
      if (n.contains("success")) n["success"] = next++;
      if (n.contains("branch"))
        for (auto& c : n["branch"]) number(c);
      if (n.contains("then")) number(n["then"]);
    };
    number(t);
  }
  return trees;
}

// Success payloads in depth-first, candidate order.
inline std::vector<Json> enumerate(const Json& n) {
  if (n.contains("success")) return {n["success"]};
  if (n.contains("fail")) return {};
  if (n.contains("branch")) {
    std::vector<Json> out;
    for (const auto& c : n["branch"]) {
      auto sub = enumerate(c);
      out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
  }
  if (n.contains("value")) return n.contains("then") ? enumerate(n["then"]) : std::vector<Json>{nullptr};
  if (n.contains("join")) {
    std::vector<Json> out;
    for (const auto& l : enumerate(n["join"][0])) {
      for (const auto& r : enumerate(n["join"][1])) {
        Json pair = Json::array({l, r});
        if (!n.contains("then")) {
          out.push_back(pair);
          continue;
        }
        for (const auto& t : enumerate(n["then"])) out.push_back(Json::array({pair, t}));
      }
    }
    return out;
  }
  return {};
}

// Number of nodes (branch, fail and success) in a tree.
inline int count_nodes(const Json& n) {
  int c = 1;
  if (n.contains("branch"))
    for (const auto& k : n["branch"]) c += count_nodes(k);
  return c;
}

// A random tree of branch, fail and success nodes, at most `depth` branch
// levels deep. Success payloads are numbered in depth-first order.
inline Json random_tree(std::mt19937& rng, int depth, int max_children) {
  int next = 0;
  std::function<Json(int)> gen = [&](int d) -> Json {
    int roll = std::uniform_int_distribution<int>(0, 9)(rng);
    if (d == 0 || roll < 2) return roll % 2 == 0 ? Json{{"success", next++}} : Json{{"fail", "dead"}};
    if (roll < 3) return Json{{"fail", "dead"}};
    int k = std::uniform_int_distribution<int>(1, max_children)(rng);
    Json kids = Json::array();
    for (int i = 0; i < k; ++i) kids.push_back(gen(d - 1));
    return Json{{"branch", kids}};
  };
  return gen(depth);
}

// Mock oracle rules answering every Pick of a branch-only tree with each
// child index once, in order.
inline Json mock_rules_for(const Json& tree) {
  Json rules = Json::array();
  std::function<void(const Json&, const std::string&)> visit = [&](const Json& n, const std::string& path) {
    if (!n.contains("branch")) return;
    Json answers = Json::array();
    for (std::size_t i = 0; i < n["branch"].size(); ++i) {
      answers.push_back(std::to_string(i));
      visit(n["branch"][i], path + "." + std::to_string(i));
    }
    rules.push_back(Json{{"match", {{"type", "Pick"}, {"args", {{"at", path}}}}}, {"answers", answers}});
  };
  visit(tree, "r");
  return rules;
}

}  // namespace corpus
