// oracular: run strategies, check and extract demos, serve the local API.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "oracular/cli.hpp"
#include "oracular/yaml_json.hpp"

using namespace oracular;

namespace {

Json parse_json_flag(const std::string& name, const std::string& text) {
  try {
    return parse_yaml(text);
  } catch (const ParseError& e) {
    throw ConfigError("--" + name + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oracular programming runtime"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run a strategy under a search policy and an oracle");
  std::string config_path, strategy, args_text, policy, policy_args_text, nested_policy, transforms, mock, model,
      pricing, budget_text, trace_path;
  bool http = false;
  int num_completions = 0;
  std::size_t max_successes = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> examples;
  run->add_option("--config", config_path, "YAML or JSON run configuration; flags override it");
  run->add_option("--strategy", strategy, "Registered strategy name");
  run->add_option("--args", args_text, "Strategy arguments (JSON or YAML flow mapping)");
  run->add_option("--policy", policy, "Search policy id (dfs, best_first, abduct_saturate)");
  run->add_option("--policy-args", policy_args_text, "Search policy arguments");
  run->add_option("--nested-policy", nested_policy, "Search policy for sub-strategies");
  run->add_option("--transforms", transforms, "Tree transforms, e.g. drop_values,threshold:0.5");
  run->add_option("--mock", mock, "Mock oracle script");
  run->add_flag("--http", http, "Use the HTTP oracle (ORACLE_BASE_URL, ORACLE_API_KEY)");
  run->add_option("--model", model, "Model name sent to the oracle");
  run->add_option("--pricing", pricing, "Pricing file");
  run->add_option("--num-completions", num_completions, "Completions per request");
  run->add_option("--examples", examples, "Demo files supplying few-shot examples");
  run->add_option("--budget", budget_text, "Limit, e.g. num_requests=50,price_usd=0.2");
  run->add_option("--max-successes", max_successes, "Stop after this many successes");
  run->add_option("--trace", trace_path, "Write the run trace here");
  run->add_option("--seed", seed, "Recorded in the trace");

  // demo-check
  auto* check = app.add_subcommand("demo-check", "Evaluate demonstration files");
  std::vector<std::string> demo_paths;
  bool json = false;
  check->add_option("paths", demo_paths, "Demo files")->required();
  check->add_flag("--json", json, "Print the JSON report");

  // demo-extract
  auto* extract = app.add_subcommand("demo-extract", "Extract a demo from a success in a trace");
  std::string extract_trace, extract_out;
  std::size_t success_index = 0;
  extract->add_option("--trace", extract_trace, "Trace file")->required();
  extract->add_option("--success-index", success_index, "Index into the trace's successes");
  extract->add_option("--out", extract_out, "Demo file to write")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API over a workspace");
  std::string root = ".", host = "127.0.0.1";
  int port = 8765;
  serve->add_option("--root", root, "Directory holding demos/ and traces/");
  serve->add_option("--host", host, "Interface to bind");
  serve->add_option("--port", port, "Port (0 picks one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? exit_code::kOk : exit_code::kConfig;
  }

  if (*run) {
    RunConfig cfg;
    try {
      Json j = Json::object();
      if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw ConfigError("cannot read " + config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        j = parse_yaml(ss.str());
        if (j.is_null()) j = Json::object();
        if (!j.is_object()) throw ConfigError(config_path + " must hold a mapping");
      }
      if (!strategy.empty()) j["strategy"] = strategy;
      if (!args_text.empty()) j["args"] = parse_json_flag("args", args_text);
      if (!policy.empty()) j["policy"] = policy;
      if (!policy_args_text.empty()) j["policy_args"] = parse_json_flag("policy-args", policy_args_text);
      if (!nested_policy.empty()) j["nested_policy"] = nested_policy;
      if (!transforms.empty()) j["transforms"] = transforms;
      if (!mock.empty()) j["mock_script"] = mock;
      if (http) j["http"] = true;
      if (!model.empty()) j["model"] = model;
      if (!pricing.empty()) j["pricing"] = pricing;
      if (num_completions > 0) j["num_completions"] = num_completions;
      if (!examples.empty()) j["example_demos"] = examples;
      if (!budget_text.empty()) j["budget"] = budget_text;
      if (max_successes > 0) j["max_successes"] = max_successes;
      if (!trace_path.empty()) j["trace"] = trace_path;
      if (run->count("--seed")) j["seed"] = seed;
      cfg = RunConfig::from_json(j);
    } catch (const Error& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return exit_code::kConfig;
    }
    return cmd_run(cfg, std::cout, std::cerr);
  }
  if (*check) return cmd_demo_check(demo_paths, json, std::cout, std::cerr);
  if (*extract) return cmd_demo_extract(extract_trace, success_index, extract_out, std::cout, std::cerr);
  if (*serve) return cmd_serve(root, host, port, std::cout, std::cerr);
  return exit_code::kConfig;
}
