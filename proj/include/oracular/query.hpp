#pragma once

// Queries, answer parsing and prompt rendering.

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oracular/common.hpp"

namespace oracular {

// Answer types are small type expressions:
//   int | float | bool | str | json | unit
//   list(T) | option(T) | pair(A,B) | tuple(A,B,...) | either(A,B)
// A record type name registered nowhere is treated as json.
struct Query {
  std::string type_name;
  Json payload = Json::object();
  std::string answer_type = "json";
  std::vector<std::string> tags;  // defaults to {type_name}

  static Query make(std::string type_name, Json payload, std::string answer_type,
                    std::vector<std::string> tags = {});

  // Type name plus canonical payload: the identity used by demos and mocks.
  std::string key() const;
  Json to_json() const;
  static Query from_json(const Json& j);

  friend bool operator==(const Query& a, const Query& b) { return a.key() == b.key(); }
  friend bool operator!=(const Query& a, const Query& b) { return !(a == b); }
};

class AnswerParseError : public Error {
 public:
  AnswerParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Text of the last ``` fenced block, or the whole text when there is none.
std::string extract_answer_block(const std::string& raw);

// Structured answer of `q.answer_type` read from `raw`.
Json parse_answer(const Query& q, const std::string& raw);
Json parse_typed(const std::string& answer_type, const std::string& text);

// Checks that `value` has the shape of `answer_type`.
bool conforms(const std::string& answer_type, const Json& value);

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
  friend bool operator==(const ChatMessage& a, const ChatMessage& b) {
    return a.role == b.role && a.content == b.content;
  }
};

struct PromptTemplate {
  std::string system;
  // Rendering of one query instance. `{{field}}` is replaced by the YAML
  // rendering of payload[field] (strings verbatim). Empty means the whole
  // payload as YAML.
  std::string instance;
};

class TemplateRegistry {
 public:
  static TemplateRegistry& global();
  void add(const std::string& query_type, PromptTemplate t);
  std::optional<PromptTemplate> find(const std::string& query_type) const;
  // YAML file mapping query type -> {system, instance}.
  void load_file(const std::string& path);

 private:
  mutable std::mutex mu_;
  std::map<std::string, PromptTemplate> templates_;
};

struct Example {
  Query query;
  std::string answer;
};

struct Prompt {
  std::string system;
  // System message first, then one user/assistant pair per example, then
  // the final user turn for the query.
  std::vector<ChatMessage> messages;
};

std::string render_instance(const PromptTemplate& t, const Query& q);
Prompt render_prompt(const Query& q, const std::vector<Example>& examples,
                     const TemplateRegistry& templates = TemplateRegistry::global());

// Universal queries ask the oracle to fill in a variable of a strategy given
// explicitly supplied context values.
inline constexpr const char* kUniversalQuery = "UniversalQuery";

struct ContextItem {
  std::string label;
  Json value;
};

Query universal_query(const std::string& strategy, const std::string& variable,
                      const std::string& answer_type, const std::vector<ContextItem>& context);

}  // namespace oracular
