#include "oracular/query.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "oracular/yaml_json.hpp"

namespace oracular {

Query Query::make(std::string type_name, Json payload, std::string answer_type,
                  std::vector<std::string> tags) {
  Query q;
  q.type_name = std::move(type_name);
  q.payload = std::move(payload);
  q.answer_type = std::move(answer_type);
  q.tags = tags.empty() ? std::vector<std::string>{q.type_name} : std::move(tags);
  return q;
}

std::string Query::key() const { return type_name + ":" + canonical(payload); }

Json Query::to_json() const {
  return Json{{"type", type_name}, {"args", payload}, {"answer_type", answer_type}, {"tags", tags}};
}

Query Query::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ConfigError("query must be an object with a string 'type'");
  }
  std::vector<std::string> tags;
  if (j.contains("tags")) tags = j["tags"].get<std::vector<std::string>>();
  return make(j["type"].get<std::string>(), j.value("args", Json::object()),
              j.value("answer_type", std::string("json")), tags);
}

// ---------------------------------------------------------------------------
// Answer extraction

std::string extract_answer_block(const std::string& raw) {
  // Collect fenced blocks; an unterminated trailing fence is ignored.
  std::size_t pos = 0;
  std::optional<std::string> last;
  for (;;) {
    std::size_t open = raw.find("```", pos);
    if (open == std::string::npos) break;
    std::size_t body = raw.find('\n', open);
    if (body == std::string::npos) break;
    std::size_t close = raw.find("```", body + 1);
    if (close == std::string::npos) break;
    last = raw.substr(body + 1, close - body - 1);
    pos = close + 3;
  }
  return last ? *last : raw;
}

namespace {

struct TypeExpr {
  std::string head;
  std::vector<TypeExpr> args;
};

class TypeParser {
 public:
  explicit TypeParser(const std::string& s) : s_(s) {}
  TypeExpr parse() {
    TypeExpr t = expr();
    skip();
    if (pos_ != s_.size()) throw ConfigError("malformed answer type '" + s_ + "'");
    return t;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }
  TypeExpr expr() {
    skip();
    TypeExpr t;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
      t.head += s_[pos_++];
    }
    if (t.head.empty()) throw ConfigError("malformed answer type '" + s_ + "'");
    skip();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      ++pos_;
      t.args.push_back(expr());
      skip();
      while (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        t.args.push_back(expr());
        skip();
      }
      if (pos_ >= s_.size() || s_[pos_] != ')') throw ConfigError("malformed answer type '" + s_ + "'");
      ++pos_;
    }
    return t;
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

bool mentions_tuples(const TypeExpr& t) {
  if (t.head == "pair" || t.head == "tuple") return true;
  for (const auto& a : t.args)
    if (mentions_tuples(a)) return true;
  return false;
}

// Python-style tuples "(a, b)" become YAML flow sequences.
std::string parens_to_brackets(const std::string& text) {
  std::string out = text;
  char quote = 0;
  for (auto& c : out) {
    if (quote) {
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') quote = c;
    if (c == '(') c = '[';
    if (c == ')') c = ']';
  }
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

Json coerce(const TypeExpr& t, const Json& v);

Json coerce_all(const TypeExpr& t, const Json& v, std::size_t arity) {
  if (!v.is_array() || v.size() != arity) {
    throw TypeError("expected a sequence of " + std::to_string(arity) + " items, got " + v.dump());
  }
  Json out = Json::array();
  for (std::size_t i = 0; i < arity; ++i) out.push_back(coerce(t.args[i], v[i]));
  return out;
}

Json coerce(const TypeExpr& t, const Json& v) {
  const std::string& h = t.head;
  if (h == "json" || h == "any") return v;
  if (h == "int") {
    if (v.is_number_integer()) return v;
    if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()))) {
      return static_cast<long long>(v.get<double>());
    }
    throw TypeError("expected an integer, got " + v.dump());
  }
  if (h == "float") {
    if (v.is_number()) return v.get<double>();
    throw TypeError("expected a number, got " + v.dump());
  }
  if (h == "bool") {
    if (v.is_boolean()) return v;
    throw TypeError("expected a boolean, got " + v.dump());
  }
  if (h == "str") {
    if (v.is_string()) return v;
    if (v.is_number() || v.is_boolean()) return v.dump();
    throw TypeError("expected a string, got " + v.dump());
  }
  if (h == "unit") {
    if (v.is_null() || (v.is_array() && v.empty())) return Json::array();
    throw TypeError("expected unit, got " + v.dump());
  }
  if (h == "list") {
    if (!v.is_array()) throw TypeError("expected a list, got " + v.dump());
    Json out = Json::array();
    for (const auto& item : v) out.push_back(t.args.empty() ? item : coerce(t.args[0], item));
    return out;
  }
  if (h == "option") {
    if (v.is_null()) return Json::array();
    // [] and [x] are the encoded forms; anything else is a bare value. An
    // option of a list must therefore always be written encoded.
    bool list_inner = !t.args.empty() && (t.args[0].head == "list" || t.args[0].head == "tuple" ||
                                          t.args[0].head == "pair" || t.args[0].head == "either");
    if (v.is_array() && (v.size() <= 1 || list_inner)) {
      if (v.empty()) return v;
      if (v.size() != 1) throw TypeError("expected [] or [value], got " + v.dump());
      return Json::array({t.args.empty() ? v[0] : coerce(t.args[0], v[0])});
    }
    return Json::array({t.args.empty() ? v : coerce(t.args[0], v)});
  }
  if (h == "pair") {
    if (t.args.size() != 2) throw ConfigError("pair takes two type arguments");
    return coerce_all(t, v, 2);
  }
  if (h == "tuple") return coerce_all(t, v, t.args.size());
  if (h == "either") {
    if (v.is_array() && v.size() == 2 && v[0].is_number_integer()) {
      int side = v[0].get<int>();
      if ((side == 0 || side == 1) && t.args.size() == 2) {
        return Json::array({side, coerce(t.args[static_cast<std::size_t>(side)], v[1])});
      }
      if (side == 0 || side == 1) return v;
    }
    throw TypeError("expected [side, value], got " + v.dump());
  }
  // Record and other named types are carried as generic JSON.
  return v;
}

}  // namespace

Json parse_typed(const std::string& answer_type, const std::string& text) {
  TypeExpr t = TypeParser(answer_type).parse();
  if (t.head == "str") return trim(text);
  std::string body = mentions_tuples(t) ? parens_to_brackets(text) : text;
  Json v;
  try {
    v = parse_yaml(body);
  } catch (const ParseError& e) {
    throw AnswerParseError(e.what(), text);
  }
  try {
    return coerce(t, v);
  } catch (const TypeError& e) {
    throw AnswerParseError(e.what(), text);
  }
}

Json parse_answer(const Query& q, const std::string& raw) {
  try {
    return parse_typed(q.answer_type, extract_answer_block(raw));
  } catch (const AnswerParseError& e) {
    throw AnswerParseError(std::string(e.what()) + " (query " + q.type_name + ")", raw);
  }
}

bool conforms(const std::string& answer_type, const Json& value) {
  try {
    TypeExpr t = TypeParser(answer_type).parse();
    if (t.head == "option") {
      if (!value.is_array() || value.size() > 1) return false;
      return value.empty() || t.args.empty() || coerce(t.args[0], value[0]) == value[0];
    }
    return coerce(t, value) == value;
  } catch (const Error&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Templates

TemplateRegistry& TemplateRegistry::global() {
  static TemplateRegistry* registry = [] {
    auto* r = new TemplateRegistry();
    r->add(kUniversalQuery,
           PromptTemplate{
               "You complete partially written programs. You are shown the name of a "
               "strategy, the variable to assign, its type and the values the author marked "
               "as relevant. Reply with the value, ending your message with a code block "
               "that contains only that value.",
               "strategy: {{strategy}}\nvariable: {{variable}}\ntype: {{type}}\ncontext:\n{{context}}"});
    return r;
  }();
  return *registry;
}

void TemplateRegistry::add(const std::string& query_type, PromptTemplate t) {
  std::lock_guard<std::mutex> lock(mu_);
  templates_[query_type] = std::move(t);
}

std::optional<PromptTemplate> TemplateRegistry::find(const std::string& query_type) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = templates_.find(query_type);
  if (it == templates_.end()) return std::nullopt;
  return it->second;
}

void TemplateRegistry::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read template file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Json j = parse_yaml(ss.str());
  if (!j.is_object()) throw ConfigError("template file must map query types to templates");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Json& v = it.value();
    add(it.key(), PromptTemplate{v.value("system", std::string()), v.value("instance", std::string())});
  }
}

std::string render_instance(const PromptTemplate& t, const Query& q) {
  if (t.instance.empty()) return dump_yaml(q.payload);
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t open = t.instance.find("{{", pos);
    if (open == std::string::npos) {
      out += t.instance.substr(pos);
      break;
    }
    std::size_t close = t.instance.find("}}", open);
    if (close == std::string::npos) throw ConfigError("unterminated placeholder in template for " + q.type_name);
    out += t.instance.substr(pos, open - pos);
    std::string field = trim(t.instance.substr(open + 2, close - open - 2));
    if (!q.payload.is_object() || !q.payload.contains(field)) {
      throw ConfigError("template for " + q.type_name + " uses unknown field '" + field + "'");
    }
    const Json& v = q.payload[field];
    out += v.is_string() ? v.get<std::string>() : dump_yaml(v);
    pos = close + 2;
  }
  return out;
}

Prompt render_prompt(const Query& q, const std::vector<Example>& examples, const TemplateRegistry& templates) {
  auto t = templates.find(q.type_name);
  if (!t) throw ConfigError("no prompt template for query type " + q.type_name);
  Prompt p;
  p.system = t->system;
  p.messages.push_back({"system", t->system});
  for (const auto& ex : examples) {
    if (ex.query.type_name != q.type_name) {
      throw ConfigError("example of type " + ex.query.type_name + " given for " + q.type_name);
    }
    p.messages.push_back({"user", render_instance(*t, ex.query)});
    p.messages.push_back({"assistant", ex.answer});
  }
  p.messages.push_back({"user", render_instance(*t, q)});
  return p;
}

Query universal_query(const std::string& strategy, const std::string& variable,
                      const std::string& answer_type, const std::vector<ContextItem>& context) {
  Json ctx = Json::array();
  for (const auto& item : context) ctx.push_back(Json{{"label", item.label}, {"value", item.value}});
  Json payload{{"strategy", strategy}, {"variable", variable}, {"type", answer_type}, {"context", ctx}};
  return Query::make(kUniversalQuery, std::move(payload), answer_type);
}

}  // namespace oracular
