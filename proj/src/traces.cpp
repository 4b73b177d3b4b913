#include "oracular/traces.hpp"

#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace oracular {

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

namespace {

// Cuts at a UTF-8 boundary at or below `cap` bytes.
std::string cut_utf8(const std::string& s, std::size_t cap) {
  std::size_t n = cap;
  while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
  return s.substr(0, n);
}

Json opt(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }
std::optional<std::string> opt_str(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Trace

const TraceNode* Trace::node(const std::string& location) const {
  for (const auto& n : nodes) {
    if (n.location == location) return &n;
  }
  return nullptr;
}

Budget Trace::total_spent() const {
  Budget b;
  for (const auto& e : spend_log) {
    if (e.kind == TraceSpend::Kind::kSpent) b += e.amount;
  }
  return b;
}

bool operator==(const Trace& a, const Trace& b) { return trace_to_json(a) == trace_to_json(b); }

// ---------------------------------------------------------------------------
// Recorder

TraceRecorder::TraceRecorder(std::string strategy, Json args, std::size_t completion_cap) : cap_(completion_cap) {
  trace_.strategy = std::move(strategy);
  trace_.args = std::move(args);
}

TraceNode& TraceRecorder::node_for(const std::string& location) {
  auto it = node_index_.find(location);
  if (it != node_index_.end()) return trace_.nodes[it->second];
  node_index_.emplace(location, trace_.nodes.size());
  trace_.nodes.push_back(TraceNode{location, "", {}, {}, {}, std::nullopt, {}});
  return trace_.nodes.back();
}

void TraceRecorder::on_tree(const Tree& t) {
  std::lock_guard<std::mutex> lock(mu_);
  std::string loc = to_string(t.location());
  bool fresh = !node_index_.count(loc);
  TraceNode& n = node_for(loc);
  if (!fresh) return;
  if (t.is_success()) {
    n.kind = "success";
    n.value = t.value().value();
  } else {
    n.kind = t.node().kind();
    n.tags = t.node().tags();
    n.declared = t.node().spaces();
  }
  n.annotations = t.annotations();
}

void TraceRecorder::on_space(const EffectNode& node, const LocalSpace& s) {
  TraceSpace ts;
  ts.ref = to_string(space_ref(s));
  ts.tags = space_tags(s);
  if (const auto* o = std::get_if<OpaqueSpace>(&s)) {
    switch (SpaceInspector::source(*o)) {
      case SpaceInspector::Source::kQuery: {
        ts.source = "query";
        const Query& q = SpaceInspector::query(*o);
        ts.query = Json{{"type", q.type_name}, {"args", q.payload}};
        break;
      }
      case SpaceInspector::Source::kTree:
        ts.source = "tree";
        break;
      case SpaceInspector::Source::kComputed:
        ts.source = "computed";
        break;
    }
  } else {
    ts.source = "embedded";
  }
  std::lock_guard<std::mutex> lock(mu_);
  TraceNode& n = node_for(to_string(node.location()));
  for (const auto& existing : n.spaces) {
    if (existing.ref == ts.ref) return;
  }
  n.spaces.push_back(std::move(ts));
}

void TraceRecorder::on_answer(const PromptContext& ctx, const std::string& raw, const std::string& error) {
  TraceCompletion c;
  if (raw.size() > cap_) {
    c.raw = cut_utf8(raw, cap_);
    c.truncated = true;
    c.sha256 = sha256_hex(raw);
  } else {
    c.raw = raw;
  }
  if (!error.empty()) c.error = error;
  std::string loc = to_string(ctx.location);
  std::string space = to_string(ctx.space);
  std::string key = loc + " " + space;
  std::lock_guard<std::mutex> lock(mu_);
  auto it = answer_index_.find(key);
  if (it == answer_index_.end()) {
    it = answer_index_.emplace(key, trace_.answers.size()).first;
    trace_.answers.push_back(TraceAnswers{loc, space, ctx.query.type_name, ctx.query.payload, {}});
  }
  trace_.answers[it->second].completions.push_back(std::move(c));
}

void TraceRecorder::on_event(const StreamEvent& e) {
  std::lock_guard<std::mutex> lock(mu_);
  trace_.spend_log.push_back(e.kind == StreamEvent::Kind::kBarrier
                                 ? TraceSpend{TraceSpend::Kind::kBarrier, e.amount, e.granted, 0}
                                 : TraceSpend{TraceSpend::Kind::kSpent, e.amount, false, e.skipped});
}

void TraceRecorder::add_success(const LocalValue& v) {
  const ValueRef& r = v.ref();
  if (r.kind() != ValueRef::Kind::kAtom || r.atom().kind() != SpaceElementRef::Kind::kResult) {
    throw Error("not a success value: " + to_string(r));
  }
  std::lock_guard<std::mutex> lock(mu_);
  trace_.successes.push_back(TraceSuccess{to_string(r.atom().node()), v.value()});
}

void TraceRecorder::set_config(Json config) {
  std::lock_guard<std::mutex> lock(mu_);
  trace_.config = std::move(config);
}

Trace TraceRecorder::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return trace_;
}

// ---------------------------------------------------------------------------
// JSON

Json trace_to_json(const Trace& t) {
  Json nodes = Json::array();
  for (const auto& n : t.nodes) {
    Json declared = Json::array();
    for (const auto& d : n.declared) {
      declared.push_back(Json{{"name", d.name}, {"parametric", d.parametric}, {"embedded", d.embedded}});
    }
    Json spaces = Json::array();
    for (const auto& s : n.spaces) {
      spaces.push_back(Json{{"ref", s.ref},
                            {"tags", s.tags},
                            {"source", s.source},
                            {"query", s.query ? *s.query : Json(nullptr)}});
    }
    Json ann = Json::array();
    for (const auto& a : n.annotations) ann.push_back(Json{{"label", a.label}, {"payload", a.payload}});
    nodes.push_back(Json{{"location", n.location},
                         {"kind", n.kind},
                         {"tags", n.tags},
                         {"declared", declared},
                         {"spaces", spaces},
                         {"value", n.value ? *n.value : Json(nullptr)},
                         {"annotations", ann}});
  }
  Json answers = Json::array();
  for (const auto& a : t.answers) {
    Json cs = Json::array();
    for (const auto& c : a.completions) {
      cs.push_back(Json{{"raw", c.raw}, {"truncated", c.truncated}, {"sha256", opt(c.sha256)}, {"error", opt(c.error)}});
    }
    answers.push_back(Json{{"location", a.location},
                           {"space", a.space},
                           {"query", Json{{"type", a.type}, {"args", a.args}}},
                           {"completions", cs}});
  }
  Json spend = Json::array();
  for (const auto& e : t.spend_log) {
    if (e.kind == TraceSpend::Kind::kBarrier) {
      spend.push_back(Json{{"kind", "barrier"}, {"amount", e.amount.to_json()}, {"granted", e.granted}});
    } else {
      spend.push_back(Json{{"kind", "spent"}, {"amount", e.amount.to_json()}, {"skipped", e.skipped}});
    }
  }
  Json successes = Json::array();
  for (const auto& s : t.successes) successes.push_back(Json{{"ref", s.ref}, {"value", s.value}});
  return Json{{"format", "oracular-trace"},
              {"version", kTraceVersion},
              {"strategy", Json{{"name", t.strategy}, {"args", t.args}}},
              {"config", t.config},
              {"nodes", nodes},
              {"answers", answers},
              {"spend_log", spend},
              {"successes", successes}};
}

Trace trace_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "oracular-trace") throw ConfigError("not a trace file");
  if (!j.contains("version") || !j["version"].is_number_integer()) throw ConfigError("trace without a version");
  int version = j["version"].get<int>();
  if (version != kTraceVersion) throw TraceVersionError(version);
  try {
    Trace t;
    t.strategy = j.at("strategy").at("name").get<std::string>();
    t.args = j.at("strategy").at("args");
    t.config = j.at("config");
    for (const auto& n : j.at("nodes")) {
      TraceNode tn;
      tn.location = n.at("location").get<std::string>();
      tn.kind = n.at("kind").get<std::string>();
      tn.tags = n.at("tags").get<std::vector<std::string>>();
      for (const auto& d : n.at("declared")) {
        tn.declared.push_back(
            {d.at("name").get<std::string>(), d.at("parametric").get<bool>(), d.at("embedded").get<bool>()});
      }
      for (const auto& s : n.at("spaces")) {
        TraceSpace ts{s.at("ref").get<std::string>(), s.at("tags").get<std::vector<std::string>>(),
                      s.at("source").get<std::string>(), std::nullopt};
        if (!s.at("query").is_null()) ts.query = s.at("query");
        tn.spaces.push_back(std::move(ts));
      }
      if (!n.at("value").is_null()) tn.value = n.at("value");
      for (const auto& a : n.at("annotations")) {
        tn.annotations.push_back(Annotation{a.at("label").get<std::string>(), a.at("payload")});
      }
      t.nodes.push_back(std::move(tn));
    }
    for (const auto& a : j.at("answers")) {
      TraceAnswers ta{a.at("location").get<std::string>(), a.at("space").get<std::string>(),
                      a.at("query").at("type").get<std::string>(), a.at("query").at("args"), {}};
      for (const auto& c : a.at("completions")) {
        ta.completions.push_back(TraceCompletion{c.at("raw").get<std::string>(), c.at("truncated").get<bool>(),
                                                 opt_str(c.at("sha256")), opt_str(c.at("error"))});
      }
      t.answers.push_back(std::move(ta));
    }
    for (const auto& e : j.at("spend_log")) {
      std::string kind = e.at("kind").get<std::string>();
      if (kind == "barrier") {
        t.spend_log.push_back(
            TraceSpend{TraceSpend::Kind::kBarrier, Budget::from_json(e.at("amount")), e.at("granted").get<bool>(), 0});
      } else if (kind == "spent") {
        t.spend_log.push_back(
            TraceSpend{TraceSpend::Kind::kSpent, Budget::from_json(e.at("amount")), false, e.at("skipped").get<int>()});
      } else {
        throw ConfigError("unknown spend event " + kind);
      }
    }
    for (const auto& s : j.at("successes")) {
      t.successes.push_back(TraceSuccess{s.at("ref").get<std::string>(), s.at("value")});
    }
    return t;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed trace: ") + e.what());
  }
}

std::string export_trace(const Trace& t) { return trace_to_json(t).dump(2) + "\n"; }

Trace import_trace(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("trace is not JSON: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  return trace_from_json(j);
}

Trace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read trace file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return import_trace(ss.str());
}

// ---------------------------------------------------------------------------
// Node view

Json trace_node_view(const Trace& t, const std::string& location) {
  const TraceNode* n = t.node(location);
  if (!n) throw NotFound("no node at " + location);
  NodeLocation here = parse_location(location);
  Json actions = Json::array();
  Json nested = Json::array();
  for (const auto& other : t.nodes) {
    NodeLocation o = parse_location(other.location);
    const auto& os = o.segments();
    const auto& hs = here.segments();
    if (os.size() == hs.size() && !o.local().is_root() && o.local().parent() == here.local() &&
        std::equal(hs.begin(), hs.end() - 1, os.begin())) {
      actions.push_back(Json{{"action", to_string(o.local().actions().back())},
                             {"location", other.location},
                             {"kind", other.kind}});
    } else if (os.size() == hs.size() + 1 && o.local().is_root() && o.enclosing() == here) {
      nested.push_back(Json{{"space", to_string(*os.back().space)}, {"location", other.location}});
    }
  }
  Json spaces = Json::array();
  for (const auto& d : n->declared) {
    Json instances = Json::array();
    for (const auto& s : n->spaces) {
      if (parse_space_ref(s.ref).name() != d.name) continue;
      instances.push_back(Json{{"ref", s.ref}, {"tags", s.tags}, {"source", s.source},
                               {"query", s.query ? *s.query : Json(nullptr)}});
    }
    spaces.push_back(Json{{"name", d.name}, {"parametric", d.parametric}, {"embedded", d.embedded},
                          {"instances", instances}});
  }
  Json answers = Json::array();
  for (const auto& a : t.answers) {
    if (a.location != location) continue;
    Json raws = Json::array();
    for (const auto& c : a.completions) raws.push_back(Json{{"raw", c.raw}, {"error", opt(c.error)}});
    answers.push_back(Json{{"space", a.space}, {"completions", raws}});
  }
  Json ann = Json::array();
  for (const auto& a : n->annotations) ann.push_back(Json{{"label", a.label}, {"payload", a.payload}});
  return Json{{"node", Json{{"location", n->location},
                            {"kind", n->kind},
                            {"tags", n->tags},
                            {"value", n->value ? *n->value : Json(nullptr)},
                            {"annotations", ann}}},
              {"spaces", spaces},
              {"actions", actions},
              {"nested", nested},
              {"answers", answers}};
}

// ---------------------------------------------------------------------------
// Extraction

Demonstration extract_demo(const Trace& t, const std::string& success_ref, const StrategyRegistry& registry) {
  bool listed = false;
  for (const auto& s : t.successes) listed = listed || s.ref == success_ref;
  if (!listed) throw ExtractionError("no success " + success_ref + " in the trace");

  Tree root = reify(registry.instantiate(t.strategy, t.args));
  NodeRef ref;
  try {
    ref = parse_node_ref(success_ref);
  } catch (const ParseError& e) {
    throw ExtractionError(std::string("bad success ref: ") + e.what());
  }
  SuccessLookup look = follow_ref(root, ref);
  if (!look.reached || !look.reached->is_success()) {
    throw ExtractionError("success " + success_ref + " does not resolve: " + look.error);
  }

  // Answers that refs do not carry (value estimates, say) come from the
  // first completion of each query that parsed.
  KnownAnswers known;
  for (const auto& a : t.answers) {
    std::string key = AnsweredQuery{a.type, a.args, {}}.key();
    for (const auto& c : a.completions) {
      if (!c.error && !c.truncated) {
        known.emplace(key, c.raw);
        break;
      }
    }
  }

  ReachingTest rt;
  try {
    rt = generate_reaching_test(root, look.reached->location(), known);
  } catch (const Error& e) {
    throw ExtractionError(std::string("cannot extract ") + success_ref + ": " + e.what());
  }
  Demonstration d;
  d.strategy = t.strategy;
  d.args = t.args;
  d.tests = {rt.text.empty() ? "run | success" : rt.text + " | success"};
  d.queries = std::move(rt.queries);
  return d;
}

Demonstration extract_demo(const Trace& t, std::size_t success_index, const StrategyRegistry& registry) {
  if (success_index >= t.successes.size()) {
    throw ExtractionError("trace has " + std::to_string(t.successes.size()) + " successes, index " +
                          std::to_string(success_index) + " requested");
  }
  return extract_demo(t, t.successes[success_index].ref, registry);
}

}  // namespace oracular
