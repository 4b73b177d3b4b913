#pragma once

// Search policies, prompting policies, and the stream and tree transformers
// they are assembled from.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oracular/effects.hpp"
#include "oracular/oracle.hpp"
#include "oracular/strategy.hpp"

namespace oracular {

// ---------------------------------------------------------------------------
// Search policies

// Depth-first over {branch, fail}, candidates in stream order.
std::shared_ptr<const SearchPolicy> dfs();
Stream<LocalValue> dfs_stream(const Tree& t, std::shared_ptr<const InnerPolicy> ip);

// Best-first over {branch, fail, value}. A path's priority is the product of
// the value estimates met along it (1.0 when there are none). A branch node
// hands out one candidate per expansion and goes back into the frontier with
// its remaining candidates. Ties expand in insertion order.
std::shared_ptr<const SearchPolicy> best_first();
Stream<LocalValue> best_first_stream(const Tree& t, std::shared_ptr<const InnerPolicy> ip);

struct SaturateStats {
  int attempts = 0;
  int rollouts = 0;
  int requests = 0;
  // Times each candidate fact was suggested in the latest attempt, keyed by
  // canonical payload, after merging equivalent suggestions.
  std::map<std::string, int> suggestion_counts;
};

struct SaturateParams {
  int max_rollout_depth = 2;
  int max_requests_per_attempt = 64;
  // Suggestion answers drawn each time a fact needs auxiliary facts.
  int candidates_per_step = 1;
  // Restarts after the request cap; the run also stops after a rollout
  // that proves nothing new.
  int max_attempts = 4;
  std::shared_ptr<SaturateStats> stats;  // optional, filled while running
};

// Repeated abduction rollouts over {abduction}.
std::shared_ptr<const SearchPolicy> abduct_saturate(SaturateParams params = {});
Stream<LocalValue> abduct_saturate_stream(const Tree& t, std::shared_ptr<const InnerPolicy> ip,
                                          SaturateParams params);

// ---------------------------------------------------------------------------
// Prompting policies

// Few-shot examples for a query, at most `max` of them.
using ExampleSelector = std::function<std::vector<Example>(const Query&, std::size_t max)>;

struct FewShotParams {
  int num_completions = 1;
  double temperature = 1.0;
  std::size_t max_examples = 5;
  ExampleSelector examples;
  std::optional<int> max_tokens;
  std::string model;
  Pricing pricing;
};

// One spend-guarded request per round; parsed completions in order,
// unparsable ones skipped. Stops when a request is denied or fails.
PromptingPolicy few_shot(std::shared_ptr<OracleClient> oracle, FewShotParams params);

// ---------------------------------------------------------------------------
// Stream transformers lifted to policies

template <class T, class Key>
Producer<T> majority_vote_stream(Stream<T> s, Key key) {
  Cursor<T> c(std::move(s));
  std::vector<std::pair<T, int>> seen;
  std::map<std::string, std::size_t> index;
  int best = -1;
  int best_count = 0;
  for (;;) {
    std::optional<T> v = co_await c.next();
    if (!v) break;
    std::string k = key(*v);
    auto it = index.find(k);
    std::size_t i;
    if (it == index.end()) {
      i = seen.size();
      index.emplace(k, i);
      seen.emplace_back(std::move(*v), 0);
    } else {
      i = it->second;
    }
    // Strictly greater: ties stay with the element that got there first.
    if (++seen[i].second > best_count) {
      best_count = seen[i].second;
      best = static_cast<int>(i);
    }
  }
  if (best >= 0) co_yield seen[static_cast<std::size_t>(best)].first;
}

std::shared_ptr<const SearchPolicy> take_n(std::shared_ptr<const SearchPolicy> p, std::size_t n);
std::shared_ptr<const SearchPolicy> with_budget_policy(std::shared_ptr<const SearchPolicy> p, Budget limit);
std::shared_ptr<const SearchPolicy> majority_vote(std::shared_ptr<const SearchPolicy> p);

PromptingPolicy take_n(PromptingPolicy p, std::size_t n);
PromptingPolicy with_budget_policy(PromptingPolicy p, Budget limit);
PromptingPolicy majority_vote(PromptingPolicy p);

// ---------------------------------------------------------------------------
// Tree transformers
//
// Transformed trees keep the node identities and locations of the nodes
// they copy, so refs of success values are those of the original tree and
// still resolve there with success_value.

using TreeTransform = std::function<Tree(const Tree&)>;

// Each success continues into `f(value)`.
Tree bind_tree(const Tree& t, std::function<Tree(const LocalValue&)> f);

// Rewrites nodes for which `handler` returns a tree; recurses through
// children and embedded trees otherwise. `self` is the whole rewrite.
using NodeRewrite = std::function<std::optional<Tree>(const Tree& t, const TreeTransform& self)>;
Tree rewrite_tree(const Tree& t, NodeRewrite handler);

Tree drop_values(const Tree& t);
Tree threshold(const Tree& t, double cut);
Tree elim_join(const Tree& t);

// ---------------------------------------------------------------------------
// Registry for command-line ids

class PolicyRegistry {
 public:
  using SearchFactory = std::function<std::shared_ptr<const SearchPolicy>(const Json& args)>;
  using TransformFactory = std::function<TreeTransform(const std::string& arg)>;

  // Holds dfs, best_first, abduct_saturate and the three tree transformers.
  static PolicyRegistry& global();

  void add_search(const std::string& id, SearchFactory f);
  void add_transform(const std::string& id, TransformFactory f);
  std::shared_ptr<const SearchPolicy> search(const std::string& id, const Json& args) const;
  // Comma-separated ids applied left to right; `id:arg` passes an argument
  // (threshold:0.5).
  TreeTransform transforms(const std::string& chain) const;
  std::vector<std::string> search_ids() const;
  std::vector<std::string> transform_ids() const;

 private:
  std::map<std::string, SearchFactory> search_;
  std::map<std::string, TransformFactory> transforms_;
};

}  // namespace oracular
