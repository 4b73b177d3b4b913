#pragma once

// Run traces: the pruned tree of nodes a run materialized, the completions
// its queries received, the accounting events of the top-level stream, and
// the successes it produced. The JSON layout is in docs/trace-format.md.

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oracular/demos.hpp"
#include "oracular/strategy.hpp"
#include "oracular/stream.hpp"

namespace oracular {

inline constexpr int kTraceVersion = 1;
inline constexpr std::size_t kDefaultCompletionCap = 4096;

struct TraceSpace {
  std::string ref;  // SpaceRef text
  std::vector<std::string> tags;
  std::string source;  // query | tree | computed | embedded
  std::optional<Json> query;  // {type, args} for query spaces
};

struct TraceNode {
  std::string location;  // NodeLocation text
  std::string kind;      // effect kind, or "success"
  std::vector<std::string> tags;
  // Declared spaces of the node, by name.
  std::vector<EffectNode::SpaceInfo> declared;
  // Space instances that were built during the run, in arrival order.
  std::vector<TraceSpace> spaces;
  std::optional<Json> value;  // success leaves only
  std::vector<Annotation> annotations;
};

struct TraceCompletion {
  std::string raw;  // cut to the completion cap
  bool truncated = false;
  std::optional<std::string> sha256;  // of the full text, when truncated
  std::optional<std::string> error;   // parse error
};

struct TraceAnswers {
  std::string location;
  std::string space;
  std::string type;
  Json args;
  std::vector<TraceCompletion> completions;
};

struct TraceSpend {
  enum class Kind { kBarrier, kSpent } kind;
  Budget amount;
  bool granted = false;  // barriers
  int skipped = 0;       // spent
};

struct TraceSuccess {
  std::string ref;  // NodeRef of the success leaf in the top-level tree
  Json value;
};

struct Trace {
  std::string strategy;
  Json args = Json::object();
  Json config = Json::object();  // free-form run settings
  std::vector<TraceNode> nodes;   // first materialization order
  std::vector<TraceAnswers> answers;
  std::vector<TraceSpend> spend_log;
  std::vector<TraceSuccess> successes;

  const TraceNode* node(const std::string& location) const;
  Budget total_spent() const;  // sum of the Spent events

  friend bool operator==(const Trace& a, const Trace& b);
};

class TraceVersionError : public Error {
 public:
  TraceVersionError(int found) : Error("unsupported trace version " + std::to_string(found)) {}
};

// Collects a trace. Attach it to reify() as the observer before the run,
// route the top-level stream through tap(), and report successes.
class TraceRecorder : public RunObserver {
 public:
  TraceRecorder(std::string strategy, Json args, std::size_t completion_cap = kDefaultCompletionCap);

  void on_tree(const Tree& t) override;
  void on_space(const EffectNode& n, const LocalSpace& s) override;
  void on_answer(const PromptContext& ctx, const std::string& raw, const std::string& error) override;

  template <class T>
  Stream<T> tap(Stream<T> s) {
    return tap_accounting(std::move(s), [this](const StreamEvent& e) { on_event(e); });
  }
  void on_event(const StreamEvent& e);
  // `v` must be a success value of the top-level tree.
  void add_success(const LocalValue& v);
  void set_config(Json config);

  Trace snapshot() const;

 private:
  TraceNode& node_for(const std::string& location);

  mutable std::mutex mu_;
  std::size_t cap_;
  Trace trace_;
  std::map<std::string, std::size_t> node_index_;
  std::map<std::string, std::size_t> answer_index_;
};

Json trace_to_json(const Trace& t);
Trace trace_from_json(const Json& j);  // TraceVersionError, ConfigError
std::string export_trace(const Trace& t);
Trace import_trace(const std::string& text);
Trace load_trace(const std::string& path);

// Lowercase hex SHA-256, as stored for truncated completions.
std::string sha256_hex(const std::string& data);

// Node, spaces, actions to children, and nested trees seen under a node.
// Throws NotFound when the trace never visited `location`.
Json trace_node_view(const Trace& t, const std::string& location);

class NotFound : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

// A demo whose single test reaches the success along the recorded choices.
// Re-reifies the strategy from `registry`.
Demonstration extract_demo(const Trace& t, const std::string& success_ref,
                           const StrategyRegistry& registry = StrategyRegistry::global());
Demonstration extract_demo(const Trace& t, std::size_t success_index,
                           const StrategyRegistry& registry = StrategyRegistry::global());

}  // namespace oracular
