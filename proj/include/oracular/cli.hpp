#pragma once

// Command implementations behind the `oracular` executable, callable from
// tests. Exit codes: 0 success, 1 error, 2 invalid configuration, 3 no
// solution within the budget.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oracular/budget.hpp"
#include "oracular/common.hpp"
#include "oracular/demos.hpp"

namespace oracular {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kError = 1;
inline constexpr int kConfig = 2;
inline constexpr int kNoSolution = 3;
}  // namespace exit_code

struct RunConfig {
  std::string strategy;
  Json args = Json::object();
  std::string policy = "dfs";
  Json policy_args = Json::object();
  // Search policy for sub-strategies met inside spaces.
  std::string nested_policy = "dfs";
  std::string transforms;  // e.g. "drop_values,threshold:0.5"
  // Oracle: a mock script, or the HTTP client configured from the
  // environment.
  std::string mock_script;
  bool http = false;
  std::string model;
  std::string pricing;  // pricing file, optional
  int num_completions = 1;
  std::vector<std::string> example_demos;  // few-shot examples
  Budget budget;                            // empty: unlimited
  std::optional<std::size_t> max_successes;
  std::string trace_path;
  // Stored in the trace. Nothing in the runtime draws random numbers, so
  // runs are deterministic whatever its value.
  std::uint64_t seed = 0;

  // Throws ConfigError on unknown keys or ill-typed values.
  static RunConfig from_json(const Json& j);
  Json to_json() const;
  // Throws ConfigError when a name is unknown or the oracle is unset.
  void validate() const;
};

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Report JSON of demo files, shared by `demo-check --json` and the eval
// endpoint. `ok` is true iff every demo parsed and all its tests passed.
Json demo_check_json(const std::vector<std::string>& paths, const std::vector<std::string>& shown_as = {});
int cmd_demo_check(const std::vector<std::string>& paths, bool json, std::ostream& out, std::ostream& err);

int cmd_demo_extract(const std::string& trace_path, std::size_t success_index, const std::string& out_path,
                     std::ostream& out, std::ostream& err);

// HTTP API over a workspace holding demos/*.yaml and traces/*.json. Static
// files under ui/ are served at the root when present.
class ApiServer {
 public:
  explicit ApiServer(std::string root);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Port 0 picks a free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();
  void wait_until_ready();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int cmd_serve(const std::string& root, const std::string& host, int port, std::ostream& out, std::ostream& err);

// The text appended to a demo file by add-query, for the query described by
// `type` and `args`. Throws ConfigError when the file layout does not allow
// a plain append.
struct DemoPatch {
  std::size_t offset;  // byte offset of the insertion (end of file)
  std::string inserted;
};
DemoPatch add_query_patch(const std::string& demo_text, const std::string& type, const Json& args);

}  // namespace oracular
