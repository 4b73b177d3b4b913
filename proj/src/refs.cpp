#include "oracular/refs.hpp"

#include <cctype>

namespace oracular {

std::string canonical(const Json& j) { return j.dump(); }

ValueRef ValueRef::atom(SpaceElementRef elem) {
  ValueRef r;
  r.kind_ = Kind::kAtom;
  r.atom_ = std::make_shared<const SpaceElementRef>(std::move(elem));
  return r;
}

ValueRef ValueRef::list(std::vector<ValueRef> items) {
  ValueRef r;
  r.kind_ = Kind::kList;
  r.items_ = std::move(items);
  return r;
}

ValueRef ValueRef::element(std::size_t index, ValueRef of) {
  ValueRef r;
  r.kind_ = Kind::kElement;
  r.index_ = index;
  r.of_ = std::make_shared<const ValueRef>(std::move(of));
  return r;
}

const SpaceElementRef& ValueRef::atom() const {
  if (kind_ != Kind::kAtom) throw TypeError("value ref is not an atom");
  return *atom_;
}

const std::vector<ValueRef>& ValueRef::items() const {
  if (kind_ != Kind::kList) throw TypeError("value ref is not a list");
  return items_;
}

std::size_t ValueRef::index() const {
  if (kind_ != Kind::kElement) throw TypeError("value ref is not an element projection");
  return index_;
}

const ValueRef& ValueRef::of() const {
  if (kind_ != Kind::kElement) throw TypeError("value ref is not an element projection");
  return *of_;
}

bool operator==(const ValueRef& a, const ValueRef& b) {
  if (a.kind_ != b.kind_) return false;
  switch (a.kind_) {
    case ValueRef::Kind::kAtom:
      return *a.atom_ == *b.atom_;
    case ValueRef::Kind::kList:
      return a.items_ == b.items_;
    case ValueRef::Kind::kElement:
      return a.index_ == b.index_ && *a.of_ == *b.of_;
  }
  return false;
}

SpaceRef SpaceRef::main() { return SpaceRef(); }

SpaceRef SpaceRef::named(std::string name, ValueRef param) {
  SpaceRef r;
  r.main_ = false;
  r.name_ = std::move(name);
  r.param_ = std::move(param);
  return r;
}

bool operator==(const SpaceRef& a, const SpaceRef& b) {
  if (a.main_ != b.main_) return false;
  if (a.main_) return true;
  return a.name_ == b.name_ && a.param_ == b.param_;
}

NodeRef NodeRef::child(ValueRef action) const {
  NodeRef r = *this;
  r.actions_.push_back(std::move(action));
  return r;
}

NodeRef NodeRef::parent() const {
  if (actions_.empty()) throw Error("the root has no parent");
  NodeRef r = *this;
  r.actions_.pop_back();
  return r;
}

NodeRef make_child_ref(const NodeRef& parent, ValueRef action) {
  return parent.child(std::move(action));
}

SpaceElementRef SpaceElementRef::answer(SpaceRef space, std::string text) {
  SpaceElementRef r(Kind::kAnswer, std::move(space));
  r.text_ = std::move(text);
  return r;
}

SpaceElementRef SpaceElementRef::result(SpaceRef space, NodeRef node) {
  SpaceElementRef r(Kind::kResult, std::move(space));
  r.node_ = std::move(node);
  return r;
}

bool operator==(const SpaceElementRef& a, const SpaceElementRef& b) {
  if (a.kind_ != b.kind_ || a.space_ != b.space_) return false;
  if (a.kind_ == SpaceElementRef::Kind::kAnswer) return a.text_ == b.text_;
  return a.node_ == b.node_;
}

std::string canonical_answer(std::string_view raw) {
  std::size_t end = raw.size();
  while (end > 0 && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
  return std::string(raw.substr(0, end));
}

// ---------------------------------------------------------------------------
// Printing

std::string to_string(const SpaceRef& r) {
  if (r.is_main()) return "main";
  if (r.param().is_unit()) return r.name() + "()";
  return r.name() + "(" + to_string(r.param()) + ")";
}

std::string to_string(const SpaceElementRef& r) {
  std::string out = to_string(r.space()) + "#";
  if (r.kind() == SpaceElementRef::Kind::kAnswer) {
    out += Json(r.answer_text()).dump();
  } else {
    out += "{" + to_string(r.node()) + "}";
  }
  return out;
}

std::string to_string(const ValueRef& r) {
  switch (r.kind()) {
    case ValueRef::Kind::kAtom:
      return to_string(r.atom());
    case ValueRef::Kind::kList: {
      std::string out = "[";
      for (std::size_t i = 0; i < r.items().size(); ++i) {
        if (i > 0) out += ",";
        out += to_string(r.items()[i]);
      }
      return out + "]";
    }
    case ValueRef::Kind::kElement:
      return to_string(r.of()) + "[" + std::to_string(r.index()) + "]";
  }
  return {};
}

std::string to_string(const NodeRef& r) {
  std::string out = "$";
  for (const auto& a : r.actions()) out += "/" + to_string(a);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class RefParser {
 public:
  explicit RefParser(std::string_view text) : text_(text) {}

  NodeRef node_ref() {
    expect('$');
    NodeRef r;
    while (peek() == '/') {
      ++pos_;
      r = r.child(value_ref());
    }
    return r;
  }

  ValueRef value_ref() {
    ValueRef r = primary();
    while (peek() == '[') {
      ++pos_;
      std::size_t index = number();
      expect(']');
      r = ValueRef::element(index, std::move(r));
    }
    return r;
  }

  SpaceRef space_ref() {
    std::string name = ident();
    if (peek() != '(') {
      if (name == "main") return SpaceRef::main();
      fail("expected '(' after space name");
    }
    ++pos_;
    if (peek() == ')') {
      ++pos_;
      return SpaceRef::named(std::move(name));
    }
    ValueRef param = value_ref();
    expect(')');
    return SpaceRef::named(std::move(name), std::move(param));
  }

  void finish() {
    if (pos_ != text_.size()) fail("unexpected trailing characters");
  }

  std::size_t pos() const { return pos_; }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  bool at_end() const { return pos_ >= text_.size(); }
  void advance(std::size_t n) { pos_ += n; }
  bool starts_with(std::string_view s) const { return text_.substr(pos_).substr(0, s.size()) == s; }

 private:
  ValueRef primary() {
    if (peek() == '[') {
      ++pos_;
      std::vector<ValueRef> items;
      if (peek() == ']') {
        ++pos_;
        return ValueRef::list({});
      }
      items.push_back(value_ref());
      while (peek() == ',') {
        ++pos_;
        items.push_back(value_ref());
      }
      expect(']');
      return ValueRef::list(std::move(items));
    }
    SpaceRef space = space_ref();
    expect('#');
    if (peek() == '"') {
      return ValueRef::atom(SpaceElementRef::answer(std::move(space), string_literal()));
    }
    expect('{');
    NodeRef node = node_ref();
    expect('}');
    return ValueRef::atom(SpaceElementRef::result(std::move(space), std::move(node)));
  }

  std::string ident() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_ || std::isdigit(static_cast<unsigned char>(text_[start]))) {
      fail("expected a space name");
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  std::size_t number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected an index");
    return std::stoul(std::string(text_.substr(start, pos_ - start)));
  }

  std::string string_literal() {
    std::size_t start = pos_;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') ++pos_;
      ++pos_;
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    try {
      return Json::parse(text_.substr(start, pos_ - start)).get<std::string>();
    } catch (const Json::exception&) {
      throw ParseError("malformed string literal", start);
    }
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

ValueRef parse_value_ref(std::string_view text) {
  RefParser p(text);
  ValueRef r = p.value_ref();
  p.finish();
  return r;
}

SpaceRef parse_space_ref(std::string_view text) {
  RefParser p(text);
  SpaceRef r = p.space_ref();
  p.finish();
  return r;
}

NodeRef parse_node_ref(std::string_view text) {
  RefParser p(text);
  NodeRef r = p.node_ref();
  p.finish();
  return r;
}

// ---------------------------------------------------------------------------
// Locations

NodeLocation NodeLocation::child(const ValueRef& action) const {
  NodeLocation r = *this;
  r.segments_.back().node = r.segments_.back().node.child(action);
  return r;
}

NodeLocation NodeLocation::nested(const SpaceRef& space) const {
  NodeLocation r = *this;
  r.segments_.push_back(Segment{space, NodeRef::root()});
  return r;
}

NodeLocation NodeLocation::enclosing() const {
  if (segments_.size() < 2) throw Error("top-level location has no enclosing node");
  NodeLocation r = *this;
  r.segments_.pop_back();
  return r;
}

std::string to_string(const NodeLocation& loc) {
  std::string out;
  for (const auto& seg : loc.segments()) {
    if (seg.space) out += "::" + to_string(*seg.space);
    out += to_string(seg.node);
  }
  return out;
}

NodeLocation parse_location(std::string_view text) {
  RefParser p(text);
  std::vector<NodeLocation::Segment> segs;
  segs.push_back({std::nullopt, p.node_ref()});
  while (p.starts_with("::")) {
    p.advance(2);
    SpaceRef space = p.space_ref();
    segs.push_back({space, p.node_ref()});
  }
  p.finish();
  NodeLocation out;
  for (const auto& a : segs[0].node.actions()) out = out.child(a);
  for (std::size_t i = 1; i < segs.size(); ++i) {
    out = out.nested(*segs[i].space);
    for (const auto& a : segs[i].node.actions()) out = out.child(a);
  }
  return out;
}

}  // namespace oracular
