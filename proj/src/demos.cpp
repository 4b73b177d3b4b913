#include "oracular/demos.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "oracular/yaml_json.hpp"

namespace oracular {

// ---------------------------------------------------------------------------
// Demo files

std::string AnsweredQuery::key() const { return type + ":" + canonical(args); }

const AnsweredQuery* Demonstration::find(const Query& q) const {
  std::string k = q.key();
  for (const auto& aq : queries) {
    if (aq.key() == k) return &aq;
  }
  return nullptr;
}

namespace {

bool valid_label(const std::string& s) {
  if (s.empty()) return false;
  return std::none_of(s.begin(), s.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '\'' || c == '`';
  });
}

// Answer texts are kept verbatim: scalars as written, anything else as JSON.
std::string answer_text(const YAML::Node& n) {
  if (n.IsScalar()) return n.Scalar();
  if (n.IsNull()) return "";
  return yaml_to_json(n).dump();
}

void check_keys(const YAML::Node& n, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = n.begin(); it != n.end(); ++it) {
    std::string k = it->first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw ConfigError(where + ": unknown key '" + k + "'");
    }
  }
}

void validate(const Demonstration& d) {
  if (d.strategy.empty()) throw ConfigError("demo: 'strategy' must be a non-empty string");
  std::set<std::string> keys;
  for (std::size_t i = 0; i < d.queries.size(); ++i) {
    const auto& aq = d.queries[i];
    std::string where = "demo query " + std::to_string(i + 1) + " (" + aq.type + ")";
    if (aq.type.empty()) throw ConfigError(where + ": missing type");
    if (!keys.insert(aq.key()).second) throw ConfigError(where + ": duplicate query");
    std::set<std::string> labels;
    for (const auto& a : aq.answers) {
      if (!a.label) continue;
      if (!valid_label(*a.label)) throw ConfigError(where + ": invalid label '" + *a.label + "'");
      if (!labels.insert(*a.label).second) throw ConfigError(where + ": duplicate label '" + *a.label + "'");
    }
  }
}

}  // namespace

Demonstration parse_demo(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError("YAML: " + e.msg, e.mark.pos >= 0 ? static_cast<std::size_t>(e.mark.pos) : 0);
  }
  if (!root.IsMap()) throw ConfigError("demo: expected a mapping at the top level");
  check_keys(root, {"strategy", "args", "tests", "queries"}, "demo");

  Demonstration d;
  if (!root["strategy"] || !root["strategy"].IsScalar()) throw ConfigError("demo: missing 'strategy'");
  d.strategy = root["strategy"].Scalar();
  if (root["args"] && !root["args"].IsNull()) {
    d.args = yaml_to_json(root["args"]);
    if (!d.args.is_object()) throw ConfigError("demo: 'args' must be a mapping");
  }
  if (auto tests = root["tests"]; tests && !tests.IsNull()) {
    if (!tests.IsSequence()) throw ConfigError("demo: 'tests' must be a list of strings");
    for (const auto& t : tests) {
      if (!t.IsScalar()) throw ConfigError("demo: every test must be a string");
      d.tests.push_back(t.Scalar());
    }
  }
  if (auto qs = root["queries"]; qs && !qs.IsNull()) {
    if (!qs.IsSequence()) throw ConfigError("demo: 'queries' must be a list");
    std::size_t i = 0;
    for (const auto& qn : qs) {
      std::string where = "demo query " + std::to_string(++i);
      if (!qn.IsMap()) throw ConfigError(where + ": expected a mapping");
      check_keys(qn, {"query", "answers"}, where);
      auto q = qn["query"];
      if (!q || !q.IsMap()) throw ConfigError(where + ": missing 'query'");
      check_keys(q, {"type", "args"}, where + " query");
      AnsweredQuery aq;
      if (!q["type"] || !q["type"].IsScalar()) throw ConfigError(where + ": missing query type");
      aq.type = q["type"].Scalar();
      if (q["args"] && !q["args"].IsNull()) aq.args = yaml_to_json(q["args"]);
      if (auto answers = qn["answers"]; answers && !answers.IsNull()) {
        if (!answers.IsSequence()) throw ConfigError(where + ": 'answers' must be a list");
        for (const auto& an : answers) {
          if (!an.IsMap()) throw ConfigError(where + ": every answer must be a mapping");
          check_keys(an, {"label", "example", "answer"}, where + " answer");
          if (!an["answer"]) throw ConfigError(where + ": answer without 'answer' text");
          DemoAnswer a;
          a.text = answer_text(an["answer"]);
          if (an["label"] && !an["label"].IsNull()) a.label = an["label"].Scalar();
          if (an["example"]) {
            Json ex = yaml_to_json(an["example"]);
            if (!ex.is_boolean()) throw ConfigError(where + ": 'example' must be true or false");
            a.example = ex.get<bool>();
          }
          aq.answers.push_back(std::move(a));
        }
      }
      d.queries.push_back(std::move(aq));
    }
  }
  validate(d);
  return d;
}

Demonstration load_demo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read demo file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_demo(ss.str());
}

Json demo_to_json(const Demonstration& d) {
  Json queries = Json::array();
  for (const auto& aq : d.queries) {
    Json answers = Json::array();
    for (const auto& a : aq.answers) {
      Json aj = Json::object();
      if (a.label) aj["label"] = *a.label;
      if (!a.example) aj["example"] = false;
      aj["answer"] = a.text;
      answers.push_back(std::move(aj));
    }
    queries.push_back(Json{{"query", {{"type", aq.type}, {"args", aq.args}}}, {"answers", answers}});
  }
  return Json{{"strategy", d.strategy}, {"args", d.args}, {"tests", d.tests}, {"queries", queries}};
}

Demonstration demo_from_json(const Json& j) { return parse_demo(dump_yaml(j)); }

std::string dump_demo(const Demonstration& d) {
  // Key order matches the usual way demos are written by hand.
  const Json j = demo_to_json(d);
  std::string out;
  for (const char* k : {"strategy", "args", "tests", "queries"}) {
    out += dump_yaml(Json{{k, j[k]}}) + "\n";
  }
  return out;
}

ExampleSelector demo_examples(std::vector<Demonstration> demos) {
  auto shared = std::make_shared<const std::vector<Demonstration>>(std::move(demos));
  return [shared](const Query& q, std::size_t max) {
    std::vector<Example> out;
    for (const auto& d : *shared) {
      for (const auto& aq : d.queries) {
        if (aq.type != q.type_name) continue;
        for (const auto& a : aq.answers) {
          if (!a.example) continue;
          if (out.size() >= max) return out;
          out.push_back(Example{Query::make(aq.type, aq.args, q.answer_type, q.tags), a.text});
        }
      }
    }
    return out;
  };
}

// ---------------------------------------------------------------------------
// Test language

namespace {

using namespace test_ast;

bool is_tag_char(char c) {
  if (std::isspace(static_cast<unsigned char>(c))) return false;
  static const std::string kStop = "/#|'`{}()[],";
  return kStop.find(c) == std::string::npos;
}

class TestParser {
 public:
  explicit TestParser(const std::string& s) : s_(s) {}

  TestAst parse() {
    TestAst out;
    skip();
    if (at_end()) return out;
    for (;;) {
      out.push_back(instr());
      skip();
      if (at_end()) break;
      expect('|');
    }
    return out;
  }

 private:
  const std::string& s_;
  std::size_t i_ = 0;

  bool at_end() const { return i_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[i_]; }
  void skip() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  [[noreturn]] void error(const std::string& what) const { throw ParseError(what, i_); }
  void expect(char c) {
    skip();
    if (peek() != c) error(std::string("expected '") + c + "'");
    ++i_;
  }

  std::string word() {
    skip();
    std::size_t start = i_;
    while (!at_end() && is_tag_char(s_[i_])) ++i_;
    if (start == i_) error("expected a name");
    return s_.substr(start, i_ - start);
  }

  std::size_t integer() {
    skip();
    std::size_t start = i_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
    if (start == i_) error("expected a number");
    return static_cast<std::size_t>(std::stoull(s_.substr(start, i_ - start)));
  }

  bool at_hints() {
    skip();
    return peek() == '\'' || peek() == '`';
  }

  std::vector<std::string> hints() {
    skip();
    if (peek() != '\'' && peek() != '`') error("expected hints in quotes");
    ++i_;
    std::vector<std::string> out;
    for (;;) {
      skip();
      if (at_end()) error("unterminated hints");
      if (peek() == '\'') {
        ++i_;
        return out;
      }
      std::size_t start = i_;
      while (!at_end() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != '\'' && s_[i_] != '`') ++i_;
      if (start == i_) error("unexpected character in hints");
      out.push_back(s_.substr(start, i_ - start));
    }
  }

  Selector selector() {
    Selector sel;
    sel.tag = word();
    if (peek() == '#') {
      ++i_;
      sel.index = integer();
      if (sel.index == 0) error("occurrence indices start at 1");
    }
    return sel;
  }

  bool at_instr_end() {
    skip();
    return at_end() || peek() == '|';
  }

  SpaceRefAst space_ref() {
    SpaceRefAst r;
    r.id = word();
    skip();
    if (peek() == '(') {
      ++i_;
      r.arg = std::make_shared<const ValRef>(val_ref());
      expect(')');
    }
    return r;
  }

  ValRef val_ref() {
    skip();
    ValRef v;
    if (peek() == '[') {
      ++i_;
      v.kind = ValRef::Kind::kList;
      skip();
      if (peek() == ']') {
        ++i_;
      } else {
        for (;;) {
          v.items.push_back(val_ref());
          skip();
          if (peek() == ',') {
            ++i_;
            continue;
          }
          expect(']');
          break;
        }
      }
    } else if (at_hints()) {
      v.element.hints = hints();
    } else {
      v.element.space = space_ref();
      expect('{');
      v.element.hints = hints();
      expect('}');
    }
    for (;;) {
      skip();
      if (peek() != '[') return v;
      ++i_;
      ValRef idx;
      idx.kind = ValRef::Kind::kIndex;
      idx.index = integer();
      expect(']');
      idx.of = std::make_shared<const ValRef>(std::move(v));
      v = std::move(idx);
    }
  }

  Instr instr() {
    skip();
    Instr in;
    in.position = i_;
    std::string kw = word();
    if (kw == "run") {
      in.kind = Instr::Kind::kRun;
      if (at_hints()) in.hints = hints();
    } else if (kw == "at") {
      in.kind = Instr::Kind::kAt;
      NodeSel sel;
      sel.node = selector();
      while (peek() == '/') {
        ++i_;
        sel.spaces.push_back(sel.node);
        sel.node = selector();
      }
      in.sel = std::move(sel);
      if (at_hints()) in.hints = hints();
    } else if (kw == "go" || kw == "answer") {
      in.kind = kw == "go" ? Instr::Kind::kGo : Instr::Kind::kAnswer;
      if (!at_instr_end()) in.space = space_ref();
    } else if (kw == "success") {
      in.kind = Instr::Kind::kSuccess;
    } else {
      i_ = in.position;
      error("unknown instruction '" + kw + "'");
    }
    if (!at_instr_end()) error("unexpected text after instruction");
    return in;
  }
};

std::string print_hints(const std::vector<std::string>& hints) {
  std::string out = "'";
  for (std::size_t i = 0; i < hints.size(); ++i) out += (i ? " " : "") + hints[i];
  return out + "'";
}

std::string print_selector(const Selector& s) {
  return s.index == 1 ? s.tag : s.tag + "#" + std::to_string(s.index);
}

std::string print_space_ref(const SpaceRefAst& r) {
  return r.arg ? r.id + "(" + print_val_ref(*r.arg) + ")" : r.id;
}

}  // namespace

TestAst parse_test(const std::string& text) { return TestParser(text).parse(); }

std::string print_val_ref(const ValRef& v) {
  switch (v.kind) {
    case ValRef::Kind::kElement:
      if (v.element.space) return print_space_ref(*v.element.space) + "{" + print_hints(v.element.hints) + "}";
      return print_hints(v.element.hints);
    case ValRef::Kind::kList: {
      std::string out = "[";
      for (std::size_t i = 0; i < v.items.size(); ++i) out += (i ? ", " : "") + print_val_ref(v.items[i]);
      return out + "]";
    }
    case ValRef::Kind::kIndex:
      return print_val_ref(*v.of) + "[" + std::to_string(v.index) + "]";
  }
  return "";
}

std::string print_test(const TestAst& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Instr& in = t[i];
    if (i) out += " | ";
    switch (in.kind) {
      case Instr::Kind::kRun:
        out += "run";
        if (!in.hints.empty()) out += " " + print_hints(in.hints);
        break;
      case Instr::Kind::kAt: {
        out += "at ";
        for (const auto& s : in.sel->spaces) out += print_selector(s) + "/";
        out += print_selector(in.sel->node);
        if (!in.hints.empty()) out += " " + print_hints(in.hints);
        break;
      }
      case Instr::Kind::kGo:
      case Instr::Kind::kAnswer:
        out += in.kind == Instr::Kind::kGo ? "go" : "answer";
        if (in.space) out += " " + print_space_ref(*in.space);
        break;
      case Instr::Kind::kSuccess:
        out += "success";
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string to_string(TestStatus s) {
  switch (s) {
    case TestStatus::kPassed:
      return "passed";
    case TestStatus::kFailed:
      return "failed";
    case TestStatus::kStuck:
      return "stuck";
  }
  return "failed";
}

namespace {

struct Stuck {
  StuckInfo info;
};
struct Failed {
  std::string reason;
};
struct StopAt {
  Tree node;
};

constexpr std::size_t kMaxSteps = 100000;

bool has_tag(const Tree& t, const std::string& tag) {
  if (t.is_success()) return false;
  const auto& tags = t.node().tags();
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

std::string describe(const Tree& t) {
  if (t.is_success()) return "success leaf at " + to_string(t.location());
  return t.node().kind() + " node at " + to_string(t.location());
}

using Usage = std::vector<std::pair<std::size_t, std::size_t>>;

class Walker {
 public:
  Walker(const Demonstration& d, Usage& used, std::vector<std::string>& visited)
      : d_(d), used_(used), visited_(visited) {}

  // Occurrence indices count within one instruction's walk.
  void reset() { counts_.clear(); }

  // Runs from `start` until a leaf of the same tree. With a selector, stops
  // (by throwing StopAt) at the matching node; `level` is the nesting depth
  // relative to the instruction's starting tree.
  Tree walk(Tree cur, std::deque<std::string>& hints, const NodeSel* sel, std::size_t level) {
    check(cur, sel, level);
    for (std::size_t steps = 0;; ++steps) {
      if (cur.is_success() || cur.node().is_leaf()) return cur;
      if (steps >= kMaxSteps) throw Failed("walk exceeded " + std::to_string(kMaxSteps) + " steps");
      const EffectNode& n = cur.node();
      LocalValue action = n.navigate([&](const LocalSpace& sp) { return choose(n, sp, hints, sel, level); });
      cur = n.child(action);
      visited_.push_back(to_string(cur.location()));
      check(cur, sel, level);
    }
  }

  // Element of a query space picked by at most one hint.
  LocalValue pick_answer(const EffectNode& n, const OpaqueSpace& o, std::deque<std::string>& hints, bool strict) {
    const Query& q = SpaceInspector::query(o);
    std::size_t qi = index_of(q);
    if (qi == d_.queries.size()) throw Stuck{stuck_info(n, q, "missing query")};
    const AnsweredQuery& aq = d_.queries[qi];
    if (aq.answers.empty()) throw Stuck{stuck_info(n, q, "missing answer text")};
    std::size_t ai = 0;
    if (!hints.empty()) {
      auto it = std::find_if(aq.answers.begin(), aq.answers.end(),
                             [&](const DemoAnswer& a) { return a.label && *a.label == hints.front(); });
      if (it != aq.answers.end()) {
        ai = static_cast<std::size_t>(it - aq.answers.begin());
        hints.pop_front();
      } else if (strict) {
        throw Failed("no answer labeled '" + hints.front() + "' for query " + q.type_name);
      }
    }
    used_.emplace_back(qi, ai);
    try {
      return SpaceInspector::answer_element(o, aq.answers[ai].text);
    } catch (const AnswerParseError& e) {
      throw Failed("answer " + (aq.answers[ai].label ? "'" + *aq.answers[ai].label + "' " : std::string()) +
                   "to " + q.type_name + " does not parse: " + e.what());
    }
  }

  // Success value of a nested tree walked with `hints`.
  LocalValue run_nested(const Tree& t, const std::string& space, std::deque<std::string>& hints,
                        const NodeSel* sel, std::size_t level) {
    visited_.push_back(to_string(t.location()));
    Tree end = walk(t, hints, sel, level);
    if (!end.is_success()) throw Failed("nested tree of space " + space + " ends at a " + describe(end));
    return end.value();
  }

  std::size_t index_of(const Query& q) const {
    std::string k = q.key();
    for (std::size_t i = 0; i < d_.queries.size(); ++i) {
      if (d_.queries[i].key() == k) return i;
    }
    return d_.queries.size();
  }

  StuckInfo stuck_info(const EffectNode& n, const Query& q, const std::string& reason) const {
    return StuckInfo{to_string(n.location()), n.tags(), q.type_name, q.payload, reason};
  }

 private:
  const Demonstration& d_;
  Usage& used_;
  std::vector<std::string>& visited_;
  // Occurrence counters of the selector parts, by level.
  std::map<std::size_t, std::size_t> counts_;

  void check(const Tree& t, const NodeSel* sel, std::size_t level) {
    if (!sel || level != sel->spaces.size()) return;
    if (!has_tag(t, sel->node.tag)) return;
    if (++counts_[level] == sel->node.index) throw StopAt{t};
  }

  LocalValue choose(const EffectNode& n, const LocalSpace& sp, std::deque<std::string>& hints, const NodeSel* sel,
                    std::size_t level) {
    std::shared_ptr<const Tree> nested;
    if (auto* o = std::get_if<OpaqueSpace>(&sp)) {
      switch (SpaceInspector::source(*o)) {
        case SpaceInspector::Source::kQuery:
          return pick_answer(n, *o, hints, false);
        case SpaceInspector::Source::kComputed:
          throw Failed("space " + to_string(o->ref()) + " is computed by a transformer and cannot be navigated");
        case SpaceInspector::Source::kTree:
          nested = SpaceInspector::nested_tree(*o);
          break;
      }
    } else {
      nested = std::get<EmbeddedTree>(sp).tree;
    }
    // The nested walk may stop only inside the selected space.
    const NodeSel* inner = nullptr;
    if (sel && level < sel->spaces.size()) {
      auto tags = space_tags(sp);
      const Selector& want = sel->spaces[level];
      if (std::find(tags.begin(), tags.end(), want.tag) != tags.end() && ++counts_[level] == want.index) {
        inner = sel;
      }
    }
    return run_nested(*nested, to_string(space_ref(sp)), hints, inner, level + 1);
  }
};

class TestRunner {
 public:
  TestRunner(const Demonstration& d, const Tree& root, Usage& used, TestOutcome& out)
      : d_(d), cur_(root), used_(used), out_(out), walker_(d, used, out.visited) {}

  void run(const TestAst& ast) {
    out_.visited.push_back(to_string(cur_.location()));
    for (std::size_t k = 0; k < ast.size(); ++k) {
      const Instr& in = ast[k];
      std::deque<std::string> hints(in.hints.begin(), in.hints.end());
      walker_.reset();
      try {
        exec(in, hints);
      } catch (const Stuck& s) {
        out_.status = TestStatus::kStuck;
        out_.stuck = s.info;
        out_.reason = "stuck: " + s.info.reason + " " + s.info.query_type + " " + canonical(s.info.query_args);
      } catch (const Failed& f) {
        fail(k, f.reason);
      } catch (const Error& e) {
        fail(k, e.what());
      }
      if (!hints.empty()) {
        std::vector<std::string> rest(hints.begin(), hints.end());
        out_.warnings.push_back("instruction " + std::to_string(k + 1) + ": unused hints " + print_hints(rest));
      }
      if (out_.status != TestStatus::kPassed) break;
    }
    out_.end = to_string(cur_.location());
  }

 private:
  const Demonstration& d_;
  Tree cur_;
  Usage& used_;
  TestOutcome& out_;
  Walker walker_;

  void fail(std::size_t k, const std::string& reason) {
    out_.status = TestStatus::kFailed;
    out_.reason = "instruction " + std::to_string(k + 1) + ": " + reason;
  }

  void exec(const Instr& in, std::deque<std::string>& hints) {
    switch (in.kind) {
      case Instr::Kind::kRun:
        cur_ = walker_.walk(cur_, hints, nullptr, 0);
        return;
      case Instr::Kind::kAt: {
        try {
          Tree end = walker_.walk(cur_, hints, &*in.sel, 0);
          cur_ = end;
        } catch (StopAt& s) {
          cur_ = s.node;
          return;
        }
        throw Failed("no node matching the selector before reaching a " + describe(cur_));
      }
      case Instr::Kind::kGo: {
        LocalSpace sp = space(in.space);
        std::shared_ptr<const Tree> nested;
        if (auto* o = std::get_if<OpaqueSpace>(&sp)) {
          if (SpaceInspector::source(*o) != SpaceInspector::Source::kTree) {
            throw Failed("space " + to_string(o->ref()) + " is not defined by a strategy");
          }
          nested = SpaceInspector::nested_tree(*o);
        } else {
          nested = std::get<EmbeddedTree>(sp).tree;
        }
        cur_ = *nested;
        out_.visited.push_back(to_string(cur_.location()));
        return;
      }
      case Instr::Kind::kAnswer: {
        LocalSpace sp = space(in.space);
        auto* o = std::get_if<OpaqueSpace>(&sp);
        if (!o || SpaceInspector::source(*o) != SpaceInspector::Source::kQuery) {
          throw Failed("space " + to_string(space_ref(sp)) + " is not defined by a query");
        }
        const Query& q = SpaceInspector::query(*o);
        std::size_t qi = walker_.index_of(q);
        if (qi == d_.queries.size()) throw Stuck{walker_.stuck_info(cur_.node(), q, "missing query")};
        if (d_.queries[qi].answers.empty()) throw Stuck{walker_.stuck_info(cur_.node(), q, "missing answer text")};
        for (std::size_t a = 0; a < d_.queries[qi].answers.size(); ++a) used_.emplace_back(qi, a);
        return;
      }
      case Instr::Kind::kSuccess:
        if (!cur_.is_success()) throw Failed("expected a success leaf, found a " + describe(cur_));
        return;
    }
  }

  const EffectNode& node() const {
    if (cur_.is_success() || cur_.node().is_leaf()) throw Failed("no spaces at a " + describe(cur_));
    return cur_.node();
  }

  LocalSpace space(const std::optional<SpaceRefAst>& ref) {
    const EffectNode& n = node();
    if (!ref) {
      if (!n.primary()) throw Failed(n.kind() + " nodes have no primary space");
      return n.space(*n.primary());
    }
    if (!n.has_space(ref->id)) throw Failed(n.kind() + " node has no space '" + ref->id + "'");
    if (ref->arg) return n.space(ref->id, value(*ref->arg));
    return n.space(ref->id);
  }

  LocalValue value(const ValRef& v) {
    const EffectNode& n = node();
    switch (v.kind) {
      case ValRef::Kind::kElement: {
        LocalSpace sp = space(v.element.space);
        std::deque<std::string> hints(v.element.hints.begin(), v.element.hints.end());
        LocalValue out = element(n, sp, hints);
        if (!hints.empty()) {
          std::vector<std::string> rest(hints.begin(), hints.end());
          out_.warnings.push_back("unused hints " + print_hints(rest) + " in a reference to " +
                                  to_string(space_ref(sp)));
        }
        return out;
      }
      case ValRef::Kind::kList: {
        std::vector<LocalValue> items;
        for (const auto& item : v.items) items.push_back(value(item));
        return lift_list(items, n.id());
      }
      case ValRef::Kind::kIndex: {
        LocalValue of = value(*v.of);
        Resolution r = resolve_ref(n, ValueRef::element(v.index, of.ref()));
        if (!r.value) throw Failed(r.error);
        return *r.value;
      }
    }
    throw Failed("bad reference");
  }

  LocalValue element(const EffectNode& n, const LocalSpace& sp, std::deque<std::string>& hints) {
    if (auto* o = std::get_if<OpaqueSpace>(&sp)) {
      switch (SpaceInspector::source(*o)) {
        case SpaceInspector::Source::kQuery:
          if (hints.size() > 1) throw Failed("a query element takes at most one hint");
          return walker_.pick_answer(n, *o, hints, true);
        case SpaceInspector::Source::kComputed:
          throw Failed("space " + to_string(o->ref()) + " is computed by a transformer");
        case SpaceInspector::Source::kTree:
          return walker_.run_nested(*SpaceInspector::nested_tree(*o), to_string(o->ref()), hints, nullptr, 1);
      }
    }
    const auto& e = std::get<EmbeddedTree>(sp);
    return walker_.run_nested(*e.tree, to_string(e.ref), hints, nullptr, 1);
  }
};

}  // namespace

TestOutcome eval_test(const Demonstration& d, const Tree& root, const std::string& test, Usage* used) {
  TestOutcome out;
  out.test = test;
  out.end = to_string(root.location());
  TestAst ast;
  try {
    ast = parse_test(test);
  } catch (const ParseError& e) {
    out.status = TestStatus::kFailed;
    out.reason = std::string("parse error: ") + e.what();
    out.parse_error_offset = e.position();
    return out;
  }
  Usage local;
  TestRunner(d, root, used ? *used : local, out).run(ast);
  return out;
}

bool DemoReport::ok() const {
  return error.empty() &&
         std::all_of(tests.begin(), tests.end(), [](const TestOutcome& t) { return t.status == TestStatus::kPassed; });
}

Json DemoReport::to_json() const {
  Json tj = Json::array();
  for (const auto& t : tests) {
    Json stuck = nullptr;
    if (t.stuck) {
      stuck = Json{{"location", t.stuck->location},
                   {"tags", t.stuck->tags},
                   {"query", {{"type", t.stuck->query_type}, {"args", t.stuck->query_args}}},
                   {"reason", t.stuck->reason}};
    }
    tj.push_back(Json{{"test", t.test},
                      {"status", to_string(t.status)},
                      {"reason", t.reason},
                      {"stuck", stuck},
                      {"parse_error_offset", t.parse_error_offset ? Json(*t.parse_error_offset) : Json()},
                      {"visited", t.visited},
                      {"end", t.end},
                      {"warnings", t.warnings}});
  }
  return Json{{"strategy", strategy},
              {"error", error.empty() ? Json() : Json(error)},
              {"ok", ok()},
              {"tests", tj},
              {"warnings", warnings}};
}

DemoReport eval_demo(const Demonstration& d, const StrategyRegistry& registry) {
  DemoReport report;
  report.strategy = d.strategy;
  std::optional<Tree> root;
  try {
    root = reify(registry.instantiate(d.strategy, d.args));
  } catch (const Error& e) {
    report.error = e.what();
    return report;
  }
  Usage used;
  for (const auto& t : d.tests) report.tests.push_back(eval_test(d, *root, t, &used));
  std::set<std::pair<std::size_t, std::size_t>> seen(used.begin(), used.end());
  for (std::size_t qi = 0; qi < d.queries.size(); ++qi) {
    const auto& aq = d.queries[qi];
    bool any = false;
    for (std::size_t ai = 0; ai < aq.answers.size(); ++ai) any = any || seen.count({qi, ai});
    if (!any) {
      report.warnings.push_back("unused query " + aq.type + " " + canonical(aq.args));
      continue;
    }
    for (std::size_t ai = 0; ai < aq.answers.size(); ++ai) {
      if (seen.count({qi, ai})) continue;
      const auto& a = aq.answers[ai];
      report.warnings.push_back("unused answer " + (a.label ? "'" + *a.label + "'" : "#" + std::to_string(ai + 1)) +
                                " of " + aq.type + " " + canonical(aq.args));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reaching tests

namespace {

struct Encounter {
  std::string qkey;
  std::string text;
};

class Generator {
 public:
  explicit Generator(const KnownAnswers& known) : known_(known) {}

  // Follows `path` from `start`, recording the query answers the
  // navigation functions ask for, in the order they ask.
  Tree follow(Tree cur, const NodeRef& path, std::vector<Encounter>& enc) {
    for (const auto& action : path.actions()) {
      if (cur.is_success() || cur.node().is_leaf()) {
        throw Error("target path continues past a " + describe(cur));
      }
      const EffectNode& n = cur.node();
      std::map<std::string, std::vector<SpaceElementRef>> atoms;
      index_atoms(action, atoms);
      std::map<std::string, std::size_t> cursor;
      LocalValue got = n.navigate([&](const LocalSpace& sp) -> LocalValue {
        std::string key = to_string(space_ref(sp));
        const SpaceElementRef* atom = nullptr;
        if (auto it = atoms.find(key); it != atoms.end()) {
          std::size_t& c = cursor[key];
          atom = &it->second[std::min(c, it->second.size() - 1)];
          ++c;
        }
        if (auto* o = std::get_if<OpaqueSpace>(&sp)) {
          if (SpaceInspector::source(*o) == SpaceInspector::Source::kQuery) {
            const Query& q = SpaceInspector::query(*o);
            std::string text;
            if (atom && atom->kind() == SpaceElementRef::Kind::kAnswer) {
              text = atom->answer_text();
            } else if (auto k = known_.find(q.key()); k != known_.end()) {
              text = canonical_answer(k->second);
            } else {
              throw Error("no known answer for " + q.type_name + " " + canonical(q.payload) + " at " +
                          to_string(n.location()));
            }
            enc.push_back(note(q, text));
            return SpaceInspector::answer_element(*o, text);
          }
          if (SpaceInspector::source(*o) == SpaceInspector::Source::kComputed) {
            throw Error("space " + key + " is computed by a transformer");
          }
        }
        if (!atom || atom->kind() != SpaceElementRef::Kind::kResult) {
          throw Error("no result reference for space " + key + " at " + to_string(n.location()));
        }
        std::shared_ptr<const Tree> nested = nested_of(sp);
        Tree end = follow(*nested, atom->node(), enc);
        if (!end.is_success()) throw Error("reference into space " + key + " does not end at a success leaf");
        return end.value();
      });
      if (got.ref() != action) {
        throw Error("navigation at " + to_string(n.location()) + " does not reproduce action " + to_string(action));
      }
      cur = n.child(got);
    }
    return cur;
  }

  // Instruction reaching the end of `path` from `start`, if any is needed.
  std::optional<Instr> reach(const Tree& start, const NodeRef& path, const Tree& target, std::size_t group) {
    if (path.is_root()) return std::nullopt;
    Instr in;
    in.hints = hint_placeholder(group);
    if (target.is_success()) {
      in.kind = Instr::Kind::kRun;
      return in;
    }
    in.kind = Instr::Kind::kAt;
    const std::string tag = target.node().tags().empty() ? target.node().kind() : target.node().tags().front();
    // Count matching nodes along the path, start and target included.
    std::size_t count = has_tag(start, tag) ? 1 : 0;
    Tree cur = start;
    for (const auto& action : path.actions()) {
      const EffectNode& n = cur.node();
      Resolution r = resolve_ref(n, action);
      if (!r.value) throw Error(r.error);
      cur = n.child(*r.value);
      if (has_tag(cur, tag)) ++count;
    }
    in.sel = NodeSel{{}, Selector{tag, count}};
    return in;
  }

  // Test syntax for a value reference at `n`.
  ValRef val_ref(const EffectNode& n, const ValueRef& ref) {
    ValRef v;
    switch (ref.kind()) {
      case ValueRef::Kind::kList:
        v.kind = ValRef::Kind::kList;
        for (const auto& item : ref.items()) v.items.push_back(val_ref(n, item));
        return v;
      case ValueRef::Kind::kElement:
        v.kind = ValRef::Kind::kIndex;
        v.index = ref.index();
        v.of = std::make_shared<const ValRef>(val_ref(n, ref.of()));
        return v;
      case ValueRef::Kind::kAtom:
        break;
    }
    const SpaceElementRef& atom = ref.atom();
    v.element.space = space_ref_ast(n, atom.space());
    LocalSpace sp = n.space_at(atom.space());
    if (atom.kind() == SpaceElementRef::Kind::kAnswer) {
      const Query& q = SpaceInspector::query(std::get<OpaqueSpace>(sp));
      Encounter e = note(q, atom.answer_text());
      v.element.hints = {label(e)};
      return v;
    }
    std::size_t group = new_group();
    follow(*nested_of(sp), atom.node(), groups_[group]);
    v.element.hints = hint_placeholder(group);
    return v;
  }

  SpaceRefAst space_ref_ast(const EffectNode& n, const SpaceRef& sr) {
    SpaceRefAst r;
    r.id = sr.name();
    if (!sr.param().is_unit() || space_is_parametric(n, sr.name())) {
      r.arg = std::make_shared<const ValRef>(val_ref(n, sr.param()));
    }
    return r;
  }

  std::size_t new_group() {
    groups_.emplace_back();
    return groups_.size() - 1;
  }
  std::vector<Encounter>& group(std::size_t g) { return groups_[g]; }

  // Replaces placeholders with the hints each group needs: one per
  // encounter of a query answered with more than one text.
  void fill_hints(TestAst& ast) {
    for (auto& in : ast) {
      fill(in.hints);
      if (in.space && in.space->arg) in.space->arg = std::make_shared<const ValRef>(filled(*in.space->arg));
    }
  }

  std::vector<AnsweredQuery> queries() const { return order_; }

 private:
  const KnownAnswers& known_;
  std::vector<std::vector<Encounter>> groups_;
  std::vector<AnsweredQuery> order_;
  std::map<std::pair<std::string, std::string>, std::string> labels_;

  static constexpr const char* kGroupMark = "\x01group:";

  std::vector<std::string> hint_placeholder(std::size_t group) const {
    return {kGroupMark + std::to_string(group)};
  }

  void fill(std::vector<std::string>& hints) const {
    if (hints.size() != 1 || hints[0].rfind(kGroupMark, 0) != 0) return;
    std::size_t g = std::stoul(hints[0].substr(std::string(kGroupMark).size()));
    hints.clear();
    for (const auto& e : groups_[g]) {
      if (distinct_texts(e.qkey) > 1) hints.push_back(label(e));
    }
  }

  ValRef filled(const ValRef& v) const {
    ValRef out = v;
    fill(out.element.hints);
    if (out.element.space && out.element.space->arg) {
      out.element.space->arg = std::make_shared<const ValRef>(filled(*out.element.space->arg));
    }
    for (auto& item : out.items) item = filled(item);
    if (out.of) out.of = std::make_shared<const ValRef>(filled(*out.of));
    return out;
  }

  std::size_t distinct_texts(const std::string& qkey) const {
    for (const auto& aq : order_) {
      if (aq.key() == qkey) return aq.answers.size();
    }
    return 0;
  }

  Encounter note(const Query& q, const std::string& text) {
    std::string k = q.key();
    auto it = std::find_if(order_.begin(), order_.end(), [&](const AnsweredQuery& aq) { return aq.key() == k; });
    if (it == order_.end()) {
      order_.push_back(AnsweredQuery{q.type_name, q.payload, {}});
      it = order_.end() - 1;
    }
    auto& lab = labels_[{k, text}];
    if (lab.empty()) {
      lab = "a" + std::to_string(labels_.size());
      it->answers.push_back(DemoAnswer{lab, true, text});
    }
    return Encounter{k, text};
  }

  std::string label(const Encounter& e) const { return labels_.at({e.qkey, e.text}); }

  static bool space_is_parametric(const EffectNode& n, const std::string& name) {
    for (const auto& s : n.spaces()) {
      if (s.name == name) return s.parametric;
    }
    return false;
  }

  static std::shared_ptr<const Tree> nested_of(const LocalSpace& sp) {
    if (auto* o = std::get_if<OpaqueSpace>(&sp)) return SpaceInspector::nested_tree(*o);
    return std::get<EmbeddedTree>(sp).tree;
  }

  static void index_atoms(const ValueRef& r, std::map<std::string, std::vector<SpaceElementRef>>& out) {
    switch (r.kind()) {
      case ValueRef::Kind::kAtom: {
        const auto& a = r.atom();
        out[to_string(a.space())].push_back(a);
        index_atoms(a.space().param(), out);
        return;
      }
      case ValueRef::Kind::kList:
        for (const auto& item : r.items()) index_atoms(item, out);
        return;
      case ValueRef::Kind::kElement:
        index_atoms(r.of(), out);
        return;
    }
  }
};

}  // namespace

ReachingTest generate_reaching_test(const Tree& root, const NodeLocation& target, const KnownAnswers& known) {
  Generator gen(known);
  TestAst ast;
  Tree cur = root;
  const auto& segs = target.segments();
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i > 0) {
      if (cur.is_success() || cur.node().is_leaf()) throw Error("cannot enter a space of a " + describe(cur));
      const EffectNode& n = cur.node();
      Instr go;
      go.kind = Instr::Kind::kGo;
      go.space = gen.space_ref_ast(n, *segs[i].space);
      LocalSpace sp = n.space_at(*segs[i].space);
      if (auto* o = std::get_if<OpaqueSpace>(&sp)) {
        cur = *SpaceInspector::nested_tree(*o);
      } else {
        cur = *std::get<EmbeddedTree>(sp).tree;
      }
      ast.push_back(std::move(go));
    }
    std::size_t g = gen.new_group();
    Tree start = cur;
    cur = gen.follow(start, segs[i].node, gen.group(g));
    if (auto in = gen.reach(start, segs[i].node, cur, g)) ast.push_back(std::move(*in));
  }
  gen.fill_hints(ast);
  ReachingTest out;
  out.queries = gen.queries();
  out.test = std::move(ast);
  out.text = print_test(out.test);
  return out;
}

}  // namespace oracular
