#pragma once

// Oracle clients: a scripted mock and an OpenAI-compatible HTTP client.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oracular/budget.hpp"
#include "oracular/query.hpp"
#include "oracular/stream.hpp"

namespace oracular {

struct OracleRequest {
  std::vector<ChatMessage> messages;
  int num_completions = 1;
  double temperature = 1.0;
  std::optional<int> max_tokens;
  std::string model;
  // The query being answered; the mock matches rules against it.
  std::optional<Query> query;
};

struct OracleResponse {
  std::vector<std::string> completions;
  Budget usage;
};

// Failed oracle call. Derives from SpendFailure so that the resources used
// by failed attempts are reported by `spend`.
class OracleError : public SpendFailure {
 public:
  OracleError(const std::string& what, int attempts, bool retriable, Budget consumed)
      : SpendFailure(what, std::move(consumed)), attempts_(attempts), retriable_(retriable) {}
  int attempts() const { return attempts_; }
  bool retriable() const { return retriable_; }

 private:
  int attempts_;
  bool retriable_;
};

// No mock rule matches the request, or the matching rule ran out of answers.
class NoRuleError : public OracleError {
 public:
  explicit NoRuleError(const std::string& what) : OracleError(what, 1, false, Budget()) {}
};

class OracleClient {
 public:
  virtual ~OracleClient() = default;
  virtual OracleResponse complete(const OracleRequest& req) = 0;
};

struct ModelPrice {
  double input_per_token = 0;
  double output_per_token = 0;
};

class Pricing {
 public:
  // Maps model -> {input_per_token, output_per_token} (USD), YAML or JSON.
  static Pricing from_json(const Json& j);
  static Pricing load(const std::string& path);

  void set(const std::string& model, ModelPrice p) { prices_[model] = p; }
  std::optional<ModelPrice> find(const std::string& model) const;
  // Linear in tokens. Unknown models cost nothing.
  double price(const std::string& model, double input_tokens, double output_tokens) const;

  // Completion-length cap assumed when a request sets no max_tokens.
  int default_max_tokens = 1024;

 private:
  std::map<std::string, ModelPrice> prices_;
};

// Token heuristic used by estimates: ceil(chars / 4) per message plus a
// fixed per-request overhead.
inline constexpr int kRequestTokenOverhead = 16;
int estimate_prompt_tokens(const std::vector<ChatMessage>& messages);

struct Estimate {
  Budget budget;
  bool unknown_model = false;
};

// Over-approximation of the cost of `req`.
Estimate estimate(const OracleRequest& req, const Pricing& pricing);

// ---------------------------------------------------------------------------
// Mock

struct MockRule {
  std::string type;
  // Subset pattern: every member must appear with an equal value in the
  // query payload (objects are matched recursively).
  std::optional<Json> args;
  std::vector<std::string> answers;
  bool cycle = false;  // round-robin instead of consuming answers in order
  Budget usage;        // per call; num_requests is always 1
};

struct MockScript {
  std::vector<MockRule> rules;
  static MockScript from_json(const Json& j);
  static MockScript parse(const std::string& yaml_text);
  static MockScript load(const std::string& path);
};

bool payload_matches(const Json& pattern, const Json& payload);

class MockOracle : public OracleClient {
 public:
  explicit MockOracle(MockScript script) : script_(std::move(script)), cursors_(script_.rules.size(), 0) {}
  OracleResponse complete(const OracleRequest& req) override;
  std::size_t calls() const;

 private:
  MockScript script_;
  mutable std::mutex mu_;
  std::vector<std::size_t> cursors_;
  std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// HTTP

struct HttpOracleConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::string model;
  Pricing pricing;
  int max_attempts = 3;
  int initial_backoff_ms = 500;
  int timeout_s = 120;

  // Reads ORACLE_BASE_URL and ORACLE_API_KEY.
  static HttpOracleConfig from_env(std::string model, Pricing pricing);
};

class HttpOracle : public OracleClient {
 public:
  explicit HttpOracle(HttpOracleConfig cfg);
  OracleResponse complete(const OracleRequest& req) override;

  // Request body for the chat-completions endpoint.
  Json request_body(const OracleRequest& req) const;
  // Completions and usage of a provider response.
  OracleResponse parse_response(const Json& body) const;

 private:
  HttpOracleConfig cfg_;
};

}  // namespace oracular
