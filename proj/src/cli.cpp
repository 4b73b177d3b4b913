#include "oracular/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

#include <httplib.h>

#include "oracular/fixtures.hpp"
#include "oracular/oracle.hpp"
#include "oracular/policies.hpp"
#include "oracular/traces.hpp"
#include "oracular/yaml_json.hpp"

namespace fs = std::filesystem;

namespace oracular {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary file so readers never see a partial file.
void write_file(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("cannot write " + path);
  }
  fs::rename(tmp, path);
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("run config: '") + key + "' has the wrong type");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Run

RunConfig RunConfig::from_json(const Json& j) {
  static const std::set<std::string> known{"strategy",  "args",         "policy",          "policy_args",
                                           "nested_policy", "transforms", "mock_script",   "http",
                                           "model",     "pricing",      "num_completions", "example_demos",
                                           "budget",    "max_successes", "trace",          "seed"};
  if (!j.is_object()) throw ConfigError("run config must be a mapping");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("run config: unknown key '" + it.key() + "'");
  }
  RunConfig c;
  c.strategy = get_or<std::string>(j, "strategy", "");
  c.args = j.value("args", Json::object());
  if (c.args.is_null()) c.args = Json::object();
  c.policy = get_or<std::string>(j, "policy", c.policy);
  c.policy_args = j.value("policy_args", Json::object());
  c.nested_policy = get_or<std::string>(j, "nested_policy", c.nested_policy);
  c.transforms = get_or<std::string>(j, "transforms", "");
  c.mock_script = get_or<std::string>(j, "mock_script", "");
  c.http = get_or<bool>(j, "http", false);
  c.model = get_or<std::string>(j, "model", "");
  c.pricing = get_or<std::string>(j, "pricing", "");
  c.num_completions = get_or<int>(j, "num_completions", 1);
  c.example_demos = get_or<std::vector<std::string>>(j, "example_demos", {});
  if (j.contains("budget")) {
    c.budget = j["budget"].is_string() ? Budget::parse(j["budget"].get<std::string>()) : Budget::from_json(j["budget"]);
  }
  if (j.contains("max_successes") && !j["max_successes"].is_null()) {
    c.max_successes = get_or<std::size_t>(j, "max_successes", 0);
  }
  c.trace_path = get_or<std::string>(j, "trace", "");
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  return c;
}

Json RunConfig::to_json() const {
  return Json{{"strategy", strategy},
              {"args", args},
              {"policy", policy},
              {"policy_args", policy_args},
              {"nested_policy", nested_policy},
              {"transforms", transforms},
              {"mock_script", mock_script},
              {"http", http},
              {"model", model},
              {"pricing", pricing},
              {"num_completions", num_completions},
              {"example_demos", example_demos},
              {"budget", budget.to_json()},
              {"max_successes", max_successes ? Json(*max_successes) : Json()},
              {"trace", trace_path},
              {"seed", seed}};
}

void RunConfig::validate() const {
  if (strategy.empty()) throw ConfigError("no strategy given");
  if (!StrategyRegistry::global().find(strategy)) throw ConfigError("unknown strategy '" + strategy + "'");
  if (!args.is_object()) throw ConfigError("strategy args must be a mapping");
  PolicyRegistry::global().search(policy, policy_args);
  PolicyRegistry::global().search(nested_policy, Json::object());
  PolicyRegistry::global().transforms(transforms);
  if (http == !mock_script.empty()) throw ConfigError("choose exactly one oracle: a mock script or --http");
  if (num_completions < 1) throw ConfigError("num_completions must be positive");
  if (max_successes && *max_successes == 0) throw ConfigError("max_successes must be positive");
  for (const auto& [k, v] : budget.values()) {
    if (v < 0) throw ConfigError("budget metric '" + k + "' is negative");
  }
}

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  fixtures::register_all();
  std::shared_ptr<OracleClient> oracle;
  FewShotParams params;
  std::shared_ptr<const SearchPolicy> policy;
  TreeTransform transform;
  StrategyValue strategy;
  try {
    cfg.validate();
    params.num_completions = cfg.num_completions;
    params.model = cfg.model;
    if (!cfg.pricing.empty()) params.pricing = Pricing::load(cfg.pricing);
    if (!cfg.example_demos.empty()) {
      std::vector<Demonstration> demos;
      for (const auto& p : cfg.example_demos) demos.push_back(load_demo(p));
      params.examples = demo_examples(std::move(demos));
    }
    if (cfg.http) {
      oracle = std::make_shared<HttpOracle>(HttpOracleConfig::from_env(cfg.model, params.pricing));
    } else {
      oracle = std::make_shared<MockOracle>(MockScript::load(cfg.mock_script));
    }
    policy = PolicyRegistry::global().search(cfg.policy, cfg.policy_args);
    transform = PolicyRegistry::global().transforms(cfg.transforms);
    strategy = StrategyRegistry::global().instantiate(cfg.strategy, cfg.args);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return exit_code::kConfig;
  }

  auto ip = std::make_shared<InnerPolicy>();
  ip->set_any_query(few_shot(oracle, params));
  ip->set_any_strategy(SearchBinding{PolicyRegistry::global().search(cfg.nested_policy, Json::object()), nullptr});
  auto rec = std::make_shared<TraceRecorder>(cfg.strategy, cfg.args);
  rec->set_config(cfg.to_json());

  auto write_trace = [&]() -> bool {
    if (cfg.trace_path.empty()) return true;
    try {
      write_file(cfg.trace_path, export_trace(rec->snapshot()));
      return true;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return false;
    }
  };

  Collected<LocalValue> result;
  try {
    Tree root = transform(reify(strategy, rec));
    Stream<LocalValue> s = with_budget(cfg.budget, rec->tap(policy->run(root, *ip)));
    if (cfg.max_successes) s = take(*cfg.max_successes, std::move(s));
    result = collect(std::move(s));
  } catch (const CollectError& e) {
    err << "error: " << e.what() << "\n";
    err << "spent: " << e.spent().to_json().dump() << "\n";
    write_trace();
    return exit_code::kError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    write_trace();
    return exit_code::kError;
  }
  for (std::size_t i = 0; i < result.values.size(); ++i) {
    const LocalValue& v = result.values[i];
    rec->add_success(v);
    out << "success " << i << ": " << v.value().dump() << "  ref " << to_string(v.ref().atom().node()) << "\n";
  }
  out << "spent: " << result.spent.to_json().dump() << "\n";
  if (!cfg.budget.empty()) out << "limit: " << cfg.budget.to_json().dump() << "\n";
  if (!write_trace()) return exit_code::kError;
  if (result.values.empty()) {
    err << "no solution within the budget\n";
    return exit_code::kNoSolution;
  }
  return exit_code::kOk;
}

// ---------------------------------------------------------------------------
// Demo check

Json demo_check_json(const std::vector<std::string>& paths, const std::vector<std::string>& shown_as) {
  fixtures::register_all();
  Json demos = Json::array();
  bool all_ok = true;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    Json entry{{"path", i < shown_as.size() ? shown_as[i] : paths[i]},
               {"parse_error", nullptr},
               {"strategy", nullptr},
               {"error", nullptr},
               {"ok", false},
               {"tests", Json::array()},
               {"warnings", Json::array()}};
    try {
      Demonstration d = load_demo(paths[i]);
      Json r = eval_demo(d).to_json();
      for (auto it = r.begin(); it != r.end(); ++it) entry[it.key()] = it.value();
    } catch (const ParseError& e) {
      entry["parse_error"] = Json{{"message", e.what()}, {"offset", e.position()}};
    } catch (const ConfigError& e) {
      entry["parse_error"] = Json{{"message", e.what()}, {"offset", nullptr}};
    }
    all_ok = all_ok && entry["ok"].get<bool>();
    demos.push_back(std::move(entry));
  }
  return Json{{"version", 1}, {"ok", all_ok}, {"demos", demos}};
}

namespace {

// Line and column (1-based) of a byte offset.
std::string line_col(const std::string& path, std::size_t offset) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    return "";
  }
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return ":" + std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace

int cmd_demo_check(const std::vector<std::string>& paths, bool json, std::ostream& out, std::ostream& err) {
  if (paths.empty()) {
    err << "no demo files given\n";
    return exit_code::kConfig;
  }
  Json report = demo_check_json(paths);
  if (json) {
    out << report.dump(2) << "\n";
    return report["ok"].get<bool>() ? exit_code::kOk : exit_code::kError;
  }
  int passed = 0, failed = 0, stuck = 0, broken = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Json& d = report["demos"][i];
    if (!d["parse_error"].is_null()) {
      ++broken;
      std::string where = d["parse_error"]["offset"].is_null()
                              ? ""
                              : line_col(paths[i], d["parse_error"]["offset"].get<std::size_t>());
      out << d["path"].get<std::string>() << where << ": " << d["parse_error"]["message"].get<std::string>() << "\n";
      continue;
    }
    out << d["path"].get<std::string>() << " (" << d["strategy"].get<std::string>() << ")\n";
    if (!d["error"].is_null()) {
      ++broken;
      out << "  error: " << d["error"].get<std::string>() << "\n";
      continue;
    }
    for (const auto& t : d["tests"]) {
      std::string status = t["status"].get<std::string>();
      if (status == "passed") ++passed;
      if (status == "failed") ++failed;
      if (status == "stuck") ++stuck;
      out << "  " << status << std::string(8 - status.size(), ' ') << t["test"].get<std::string>() << "\n";
      if (status == "failed") out << "          " << t["reason"].get<std::string>() << "\n";
      if (status == "stuck") {
        const Json& s = t["stuck"];
        out << "          at " << s["location"].get<std::string>() << " " << s["tags"].dump() << ": "
            << s["reason"].get<std::string>() << " " << s["query"]["type"].get<std::string>() << " "
            << s["query"]["args"].dump() << "\n";
      }
      for (const auto& w : t["warnings"]) out << "          warning: " << w.get<std::string>() << "\n";
    }
    for (const auto& w : d["warnings"]) out << "  warning: " << w.get<std::string>() << "\n";
  }
  out << "summary: " << passed << " passed, " << failed << " failed, " << stuck << " stuck, " << broken
      << " broken\n";
  return report["ok"].get<bool>() ? exit_code::kOk : exit_code::kError;
}

// ---------------------------------------------------------------------------
// Extraction

int cmd_demo_extract(const std::string& trace_path, std::size_t success_index, const std::string& out_path,
                     std::ostream& out, std::ostream& err) {
  fixtures::register_all();
  Demonstration d;
  try {
    d = extract_demo(load_trace(trace_path), success_index);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kError;
  }
  std::string text = dump_demo(d);
  try {
    write_file(out_path, text);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kError;
  }
  out << "wrote " << out_path << " (" << d.queries.size() << " queries)\n";
  return cmd_demo_check({out_path}, false, out, err);
}

// ---------------------------------------------------------------------------
// add-query patches

DemoPatch add_query_patch(const std::string& text, const std::string& type, const Json& args) {
  Demonstration before = parse_demo(text);
  std::string entry_args = (args.is_null() ? Json::object() : args).dump();
  std::string lead = text.empty() || text.back() == '\n' ? "" : "\n";

  // Locate a top-level block `queries:` key and the indentation of its items.
  std::vector<std::string> lines;
  {
    std::stringstream ss(text);
    std::string l;
    while (std::getline(ss, l)) lines.push_back(l);
  }
  std::optional<std::size_t> key_line;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].rfind("queries:", 0) == 0) key_line = i;
  }
  std::string inserted;
  auto item = [&](const std::string& indent) {
    return indent + "- query: {type: " + Json(type).dump() + ", args: " + entry_args + "}\n" + indent +
           "  answers: []\n";
  };
  if (!key_line) {
    inserted = lead + "queries:\n" + item("  ");
  } else {
    std::string rest = lines[*key_line].substr(8);
    if (rest.find_first_not_of(" \t") != std::string::npos && rest.find_first_not_of(" \t") != rest.find('#')) {
      throw ConfigError("queries are not a block list; add the query by hand");
    }
    std::optional<std::string> indent;
    for (std::size_t i = *key_line + 1; i < lines.size(); ++i) {
      const std::string& l = lines[i];
      std::size_t first = l.find_first_not_of(' ');
      if (first == std::string::npos || l[first] == '#') continue;
      if (!indent && l.compare(first, 2, "- ") == 0) indent = l.substr(0, first);
      if (first == 0 && l[0] != '-') throw ConfigError("queries is not the last key; add the query by hand");
    }
    inserted = lead + item(indent.value_or("  "));
  }

  // The patched file must read back as the old demo plus the new query.
  Demonstration after = parse_demo(text + inserted);
  Demonstration expected = before;
  expected.queries.push_back(AnsweredQuery{type, args.is_null() ? Json::object() : args, {}});
  if (demo_to_json(after) != demo_to_json(expected)) {
    throw ConfigError("appending would not add exactly one query; add it by hand");
  }
  return DemoPatch{text.size(), inserted};
}

// ---------------------------------------------------------------------------
// Server

struct ApiServer::Impl {
  std::string root;
  httplib::Server server;
  std::mutex locks_mu;
  std::map<std::string, std::shared_ptr<std::mutex>> locks;

  std::shared_ptr<std::mutex> lock_for(const std::string& path) {
    std::lock_guard<std::mutex> g(locks_mu);
    auto& m = locks[path];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
  }

  static bool valid_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9_][A-Za-z0-9_.-]*");
    return std::regex_match(id, re) && id.find("..") == std::string::npos;
  }

  std::string demo_rel(const std::string& id) const { return "demos/" + id + ".yaml"; }
  std::string trace_rel(const std::string& id) const { return "traces/" + id + ".json"; }
  std::string abs(const std::string& rel) const { return (fs::path(root) / rel).string(); }

  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(2), "application/json");
  }
  static void error(httplib::Response& res, int status, const std::string& msg) {
    reply(res, status, Json{{"error", msg}});
  }

  std::vector<std::string> ids(const std::string& dir, const std::string& ext) const {
    std::vector<std::string> out;
    fs::path p = fs::path(root) / dir;
    if (!fs::is_directory(p)) return out;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file() && e.path().extension() == ext && valid_id(e.path().stem().string())) {
        out.push_back(e.path().stem().string());
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void routes() {
    server.Get("/api/demos", [this](const httplib::Request&, httplib::Response& res) {
      Json list = Json::array();
      for (const auto& id : ids("demos", ".yaml")) {
        Json e{{"id", id}, {"path", demo_rel(id)}, {"strategy", nullptr}, {"tests", nullptr}, {"error", nullptr}};
        try {
          Demonstration d = load_demo(abs(demo_rel(id)));
          e["strategy"] = d.strategy;
          e["tests"] = d.tests;
          e["queries"] = d.queries.size();
        } catch (const Error& ex) {
          e["error"] = ex.what();
        }
        list.push_back(std::move(e));
      }
      reply(res, 200, list);
    });

    server.Post(R"(/api/demos/([^/]+)/eval)", [this](const httplib::Request& req, httplib::Response& res) {
      std::string id = req.matches[1];
      if (!valid_id(id)) return error(res, 400, "bad demo id");
      std::string rel = demo_rel(id);
      if (!fs::exists(abs(rel))) return error(res, 404, "no demo " + id);
      auto lock = lock_for(rel);
      std::lock_guard<std::mutex> g(*lock);
      reply(res, 200, demo_check_json({abs(rel)}, {rel}));
    });

    server.Post(R"(/api/demos/([^/]+)/add-query)", [this](const httplib::Request& req, httplib::Response& res) {
      std::string id = req.matches[1];
      if (!valid_id(id)) return error(res, 400, "bad demo id");
      Json body;
      try {
        body = Json::parse(req.body);
      } catch (const Json::exception&) {
        return error(res, 400, "body must be JSON");
      }
      if (!body.is_object() || !body.contains("type") || !body["type"].is_string()) {
        return error(res, 400, "body needs a string 'type'");
      }
      Json args = body.value("args", Json::object());
      if (!args.is_object()) return error(res, 400, "'args' must be an object");
      std::string rel = demo_rel(id);
      std::string path = abs(rel);
      if (!fs::exists(path)) return error(res, 404, "no demo " + id);
      auto lock = lock_for(rel);
      std::lock_guard<std::mutex> g(*lock);
      std::string text = read_file(path);
      if (body.contains("expected_sha256") && body["expected_sha256"] != sha256_hex(text)) {
        return error(res, 409, "demo file changed since it was read");
      }
      try {
        Demonstration d = parse_demo(text);
        std::string key = AnsweredQuery{body["type"].get<std::string>(), args, {}}.key();
        for (const auto& q : d.queries) {
          if (q.key() == key) return error(res, 409, "the demo already has this query");
        }
        DemoPatch p = add_query_patch(text, body["type"].get<std::string>(), args);
        write_file(path, text + p.inserted);
        reply(res, 200,
              Json{{"path", rel}, {"offset", p.offset}, {"inserted", p.inserted}, {"sha256", sha256_hex(text + p.inserted)}});
      } catch (const ParseError& e) {
        error(res, 409, std::string("demo file does not parse: ") + e.what());
      } catch (const ConfigError& e) {
        error(res, 409, e.what());
      }
    });

    server.Get("/api/traces", [this](const httplib::Request&, httplib::Response& res) {
      Json list = Json::array();
      for (const auto& id : ids("traces", ".json")) {
        Json e{{"id", id}, {"path", trace_rel(id)}, {"strategy", nullptr}, {"error", nullptr}};
        try {
          Trace t = load_trace(abs(trace_rel(id)));
          e["strategy"] = Json{{"name", t.strategy}, {"args", t.args}};
          e["nodes"] = t.nodes.size();
          e["successes"] = t.successes.size();
        } catch (const Error& ex) {
          e["error"] = ex.what();
        }
        list.push_back(std::move(e));
      }
      reply(res, 200, list);
    });

    server.Get(R"(/api/traces/([^/]+)/node)", [this](const httplib::Request& req, httplib::Response& res) {
      std::string id = req.matches[1];
      if (!valid_id(id)) return error(res, 400, "bad trace id");
      std::string path = abs(trace_rel(id));
      if (!fs::exists(path)) return error(res, 404, "no trace " + id);
      std::string ref = req.has_param("ref") ? req.get_param_value("ref") : "$";
      try {
        reply(res, 200, trace_node_view(load_trace(path), ref));
      } catch (const NotFound& e) {
        error(res, 404, e.what());
      } catch (const ParseError& e) {
        error(res, 400, e.what());
      } catch (const Error& e) {
        error(res, 500, e.what());
      }
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        error(res, 500, e.what());
      } catch (...) {
        error(res, 500, "unknown error");
      }
    });

    fs::path ui = fs::path(root) / "ui";
    if (fs::is_directory(ui)) server.set_mount_point("/", ui.string());
  }
};

ApiServer::ApiServer(std::string root) : impl_(std::make_unique<Impl>()) {
  fixtures::register_all();
  impl_->root = std::move(root);
  impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void ApiServer::listen() { impl_->server.listen_after_bind(); }
void ApiServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}
void ApiServer::wait_until_ready() { impl_->server.wait_until_ready(); }

int cmd_serve(const std::string& root, const std::string& host, int port, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(root)) {
    err << "config error: " << root << " is not a directory\n";
    return exit_code::kConfig;
  }
  ApiServer server(root);
  int bound = server.bind(host, port);
  if (bound < 0) {
    err << "error: cannot listen on " << host << ":" << port << "\n";
    return exit_code::kError;
  }
  out << "serving " << root << " on http://" << host << ":" << bound << "\n" << std::flush;
  server.listen();
  return exit_code::kOk;
}

}  // namespace oracular
