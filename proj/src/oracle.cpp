#include "oracular/oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "oracular/yaml_json.hpp"

namespace oracular {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Pricing and estimates

Pricing Pricing::from_json(const Json& j) {
  Pricing p;
  if (j.is_null()) return p;
  if (!j.is_object()) throw ConfigError("pricing must map model names to prices");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Json& v = it.value();
    if (it.key() == "default_max_tokens") {
      if (!v.is_number_integer() || v.get<int>() <= 0) throw ConfigError("default_max_tokens must be a positive integer");
      p.default_max_tokens = v.get<int>();
      continue;
    }
    if (!v.is_object() || !v.contains("input_per_token") || !v.contains("output_per_token") ||
        !v["input_per_token"].is_number() || !v["output_per_token"].is_number()) {
      throw ConfigError("price of model '" + it.key() + "' needs numeric input_per_token and output_per_token");
    }
    p.set(it.key(), ModelPrice{v["input_per_token"].get<double>(), v["output_per_token"].get<double>()});
  }
  return p;
}

Pricing Pricing::load(const std::string& path) { return from_json(parse_yaml(read_file(path))); }

std::optional<ModelPrice> Pricing::find(const std::string& model) const {
  auto it = prices_.find(model);
  if (it == prices_.end()) return std::nullopt;
  return it->second;
}

double Pricing::price(const std::string& model, double input_tokens, double output_tokens) const {
  auto p = find(model);
  if (!p) return 0;
  return p->input_per_token * input_tokens + p->output_per_token * output_tokens;
}

int estimate_prompt_tokens(const std::vector<ChatMessage>& messages) {
  int tokens = kRequestTokenOverhead;
  for (const auto& m : messages) tokens += static_cast<int>((m.content.size() + 3) / 4);
  return tokens;
}

Estimate estimate(const OracleRequest& req, const Pricing& pricing) {
  Estimate e;
  e.budget.set(metric::kNumRequests, 1);
  auto price = pricing.find(req.model);
  if (!price) {
    e.unknown_model = true;
    return e;
  }
  double in = estimate_prompt_tokens(req.messages);
  double out = static_cast<double>(req.max_tokens.value_or(pricing.default_max_tokens)) * req.num_completions;
  e.budget.set(metric::kInputTokens, in);
  e.budget.set(metric::kOutputTokens, out);
  e.budget.set(metric::kPriceUsd, price->input_per_token * in + price->output_per_token * out);
  return e;
}

// ---------------------------------------------------------------------------
// Mock

bool payload_matches(const Json& pattern, const Json& payload) {
  if (pattern.is_object()) {
    if (!payload.is_object()) return false;
    for (auto it = pattern.begin(); it != pattern.end(); ++it) {
      if (!payload.contains(it.key()) || !payload_matches(it.value(), payload[it.key()])) return false;
    }
    return true;
  }
  return pattern == payload;
}

MockScript MockScript::from_json(const Json& j) {
  const Json& rules = j.is_object() && j.contains("rules") ? j["rules"] : j;
  if (!rules.is_array()) throw ConfigError("mock script must be a list of rules");
  MockScript s;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const Json& r = rules[i];
    std::string where = "mock rule " + std::to_string(i + 1);
    if (!r.is_object() || !r.contains("match") || !r["match"].is_object()) throw ConfigError(where + ": missing 'match'");
    const Json& m = r["match"];
    if (!m.contains("type") || !m["type"].is_string()) throw ConfigError(where + ": match needs a query 'type'");
    MockRule rule;
    rule.type = m["type"].get<std::string>();
    if (m.contains("args")) rule.args = m["args"];
    if (!r.contains("answers") || !r["answers"].is_array() || r["answers"].empty()) {
      throw ConfigError(where + ": 'answers' must be a non-empty list");
    }
    for (const auto& a : r["answers"]) {
      if (a.is_string()) {
        rule.answers.push_back(a.get<std::string>());
      } else {
        rule.answers.push_back(a.dump());
      }
    }
    std::string mode = r.value("mode", std::string("ordered"));
    if (mode != "ordered" && mode != "cycle") throw ConfigError(where + ": mode must be 'ordered' or 'cycle'");
    rule.cycle = mode == "cycle";
    if (r.contains("usage")) rule.usage = Budget::from_json(r["usage"]);
    rule.usage.set(metric::kNumRequests, 1);
    s.rules.push_back(std::move(rule));
  }
  return s;
}

MockScript MockScript::parse(const std::string& yaml_text) { return from_json(parse_yaml(yaml_text)); }
MockScript MockScript::load(const std::string& path) { return parse(read_file(path)); }

OracleResponse MockOracle::complete(const OracleRequest& req) {
  if (!req.query) throw NoRuleError("mock oracle: request carries no query");
  if (req.num_completions < 1) throw OracleError("num_completions must be at least 1", 1, false, Budget());
  std::lock_guard<std::mutex> lock(mu_);
  ++calls_;
  const Query& q = *req.query;
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    const MockRule& r = script_.rules[i];
    if (r.type != q.type_name) continue;
    if (r.args && !payload_matches(*r.args, q.payload)) continue;
    std::size_t& cur = cursors_[i];
    if (!r.cycle && cur >= r.answers.size()) continue;  // exhausted; a later rule may match
    OracleResponse resp;
    for (int k = 0; k < req.num_completions; ++k) {
      if (r.cycle) {
        resp.completions.push_back(r.answers[cur % r.answers.size()]);
        ++cur;
      } else if (cur < r.answers.size()) {
        resp.completions.push_back(r.answers[cur++]);
      }
    }
    resp.usage = r.usage;
    return resp;
  }
  throw NoRuleError("mock oracle: no rule left for query " + q.type_name + " " + canonical(q.payload));
}

std::size_t MockOracle::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

// ---------------------------------------------------------------------------
// HTTP

HttpOracleConfig HttpOracleConfig::from_env(std::string model, Pricing pricing) {
  HttpOracleConfig c;
  const char* url = std::getenv("ORACLE_BASE_URL");
  const char* key = std::getenv("ORACLE_API_KEY");
  c.base_url = url ? url : "https://api.openai.com/v1";
  c.api_key = key ? key : "";
  c.model = std::move(model);
  c.pricing = std::move(pricing);
  return c;
}

HttpOracle::HttpOracle(HttpOracleConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) throw ConfigError("HTTP oracle needs a base URL (ORACLE_BASE_URL)");
  if (cfg_.api_key.empty()) throw ConfigError("HTTP oracle needs an API key (ORACLE_API_KEY)");
  if (cfg_.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
}

Json HttpOracle::request_body(const OracleRequest& req) const {
  Json messages = Json::array();
  for (const auto& m : req.messages) messages.push_back(Json{{"role", m.role}, {"content", m.content}});
  Json body{{"model", req.model.empty() ? cfg_.model : req.model},
            {"messages", messages},
            {"n", req.num_completions},
            {"temperature", req.temperature}};
  if (req.max_tokens) body["max_tokens"] = *req.max_tokens;
  return body;
}

OracleResponse HttpOracle::parse_response(const Json& body) const {
  OracleResponse r;
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array()) {
    throw OracleError("malformed provider response: no choices", 1, false, Budget{{metric::kNumRequests, 1}});
  }
  for (const auto& c : body["choices"]) {
    const Json& content = c.contains("message") ? c["message"].value("content", Json()) : Json();
    r.completions.push_back(content.is_string() ? content.get<std::string>() : std::string());
  }
  double in = 0, out = 0;
  if (body.contains("usage") && body["usage"].is_object()) {
    in = body["usage"].value("prompt_tokens", 0.0);
    out = body["usage"].value("completion_tokens", 0.0);
  }
  std::string model = body.value("model", cfg_.model);
  if (!cfg_.pricing.find(model)) model = cfg_.model;
  r.usage.set(metric::kNumRequests, 1);
  r.usage.set(metric::kInputTokens, in);
  r.usage.set(metric::kOutputTokens, out);
  r.usage.set(metric::kPriceUsd, cfg_.pricing.price(model, in, out));
  return r;
}

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

ParsedUrl split_url(const std::string& url) {
  std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("base URL needs a scheme: " + url);
  std::size_t slash = url.find('/', scheme + 3);
  ParsedUrl p;
  p.origin = slash == std::string::npos ? url : url.substr(0, slash);
  p.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

}  // namespace

OracleResponse HttpOracle::complete(const OracleRequest& req) {
  if (req.num_completions < 1) throw OracleError("num_completions must be at least 1", 0, false, Budget());
  ParsedUrl url = split_url(cfg_.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(cfg_.timeout_s);
  client.set_read_timeout(cfg_.timeout_s);
  client.set_bearer_token_auth(cfg_.api_key);
  std::string body = request_body(req).dump();

  std::string last_error;
  int backoff = cfg_.initial_backoff_ms;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    auto res = client.Post(url.path + "/chat/completions", body, "application/json");
    bool retriable = true;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      Json parsed = Json::parse(res->body, nullptr, false);
      if (parsed.is_discarded()) {
        last_error = "provider returned invalid JSON";
      } else {
        OracleResponse r = parse_response(parsed);
        // Failed attempts are charged as requests too.
        r.usage.set(metric::kNumRequests, attempt);
        return r;
      }
    } else {
      last_error = "provider returned HTTP " + std::to_string(res->status);
      retriable = res->status == 429 || res->status >= 500;
    }
    if (!retriable || attempt == cfg_.max_attempts) {
      throw OracleError(last_error + " after " + std::to_string(attempt) + " attempt(s)", attempt, retriable,
                        Budget{{metric::kNumRequests, static_cast<double>(attempt)}});
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
    backoff *= 2;
  }
  throw OracleError(last_error, cfg_.max_attempts, true,
                    Budget{{metric::kNumRequests, static_cast<double>(cfg_.max_attempts)}});
}

}  // namespace oracular
