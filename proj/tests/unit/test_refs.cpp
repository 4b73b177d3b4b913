#include <doctest.h>

#include "oracular/local_value.hpp"
#include "oracular/refs.hpp"
#include "support/random_refs.hpp"

using namespace oracular;

namespace {

ValueRef answer_atom(const std::string& text) {
  return ValueRef::atom(SpaceElementRef::answer(SpaceRef::main(), text));
}

LocalValue make_local(Json v, ValueRef ref, NodeIdentity owner, std::string tag = "int") {
  return ElementFactory::make(std::move(v), std::move(ref), owner, std::move(tag));
}

}  // namespace

TEST_SUITE("refs") {
  TEST_CASE("child refs chain from the root") {
    NodeRef c = make_child_ref(NodeRef::root(), answer_atom("42"));
    CHECK(c.depth() == 1);
    CHECK(c.parent() == NodeRef::root());
    CHECK(to_string(c) == "$/main#\"42\"");
    NodeRef c2 = make_child_ref(c, ValueRef::unit());
    CHECK(c2.depth() == 2);
    CHECK(to_string(c2) == "$/main#\"42\"/[]");
  }

  TEST_CASE("textual syntax samples") {
    CHECK(to_string(SpaceRef::named("cands")) == "cands()");
    ValueRef nested = ValueRef::atom(SpaceElementRef::result(
        SpaceRef::named("cands"), NodeRef::root().child(answer_atom("x"))));
    CHECK(to_string(nested) == "cands()#{$/main#\"x\"}");
    ValueRef proj = ValueRef::element(1, ValueRef::list({answer_atom("a"), nested}));
    CHECK(to_string(proj) == "[main#\"a\",cands()#{$/main#\"x\"}][1]");
    SpaceRef param = SpaceRef::named("compare", ValueRef::list({answer_atom("a")}));
    CHECK(to_string(param) == "compare([main#\"a\"])");
    CHECK(parse_space_ref("compare([main#\"a\"])") == param);
    CHECK(parse_value_ref(to_string(proj)) == proj);
  }

  TEST_CASE("round trip on random refs") {
    std::mt19937 rng(7);
    for (int i = 0; i < 100; ++i) {
      NodeRef r = gen::random_node_ref(rng, 3);
      std::string text = to_string(r);
      CAPTURE(text);
      CHECK(parse_node_ref(text) == r);
      ValueRef v = gen::random_value_ref(rng, 3);
      CHECK(parse_value_ref(to_string(v)) == v);
      SpaceRef s = gen::random_space_ref(rng, 3);
      CHECK(parse_space_ref(to_string(s)) == s);
    }
  }

  TEST_CASE("locations round trip") {
    NodeLocation loc = NodeLocation()
                           .child(answer_atom("p"))
                           .nested(SpaceRef::named("cands"))
                           .child(ValueRef::unit());
    CHECK(loc.nesting() == 1);
    std::string text = to_string(loc);
    CHECK(text == "$/main#\"p\"::cands()$/[]");
    CHECK(parse_location(text) == loc);
    CHECK(loc.enclosing() == NodeLocation().child(answer_atom("p")));
    CHECK(parse_location("$") == NodeLocation());
  }

  TEST_CASE("parse errors carry positions") {
    try {
      parse_node_ref("$/main#\"x\"/oops");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.position() == 15);
    }
    CHECK_THROWS_AS(parse_value_ref("[main#\"a\""), ParseError);
    CHECK_THROWS_AS(parse_node_ref("$/main#\"a\" "), ParseError);
  }

  TEST_CASE("answers are canonicalized by trimming trailing whitespace") {
    CHECK(canonical_answer("  x \n\t") == "  x");
    CHECK(canonical_answer("") == "");
  }

  TEST_CASE("lift and unlift") {
    NodeIdentity n = NodeIdentity::fresh();
    LocalValue x = make_local(1, answer_atom("1"), n);
    LocalValue y = make_local("s", answer_atom("s"), n, "str");

    LocalValue p = lift_pair(x, y);
    CHECK(p.ref() == ValueRef::list({x.ref(), y.ref()}));
    CHECK(p.value() == Json::array({1, "s"}));
    CHECK(p.type_tag() == "pair(int,str)");
    CHECK(p.owner() == n);
    auto [x2, y2] = unlift_pair(p);
    CHECK(x2.value() == 1);
    CHECK(x2.ref() == x.ref());
    CHECK(y2.type_tag() == "str");

    LocalValue u = lift_unit(n);
    CHECK(u.ref() == ValueRef::unit());
    CHECK(u.value() == Json::array());

    LocalValue l = lift_list({x, x, y}, n);
    CHECK(l.ref().items().size() == 3);
    CHECK(unlift_list(l).size() == 3);

    LocalValue none = lift_option(std::nullopt, n);
    CHECK(!unlift_option(none).has_value());
    LocalValue some = lift_option(x, n);
    CHECK(unlift_option(some)->value() == 1);

    LocalValue e = lift_either(1, y);
    CHECK(e.value() == Json::array({1, "s"}));
    CHECK(to_string(e.ref()) == "[[][1],main#\"s\"]");
    auto [side, part] = unlift_either(e);
    CHECK(side == 1);
    CHECK(part.ref() == y.ref());
  }

  TEST_CASE("unlift through a non-list ref uses element projections") {
    NodeIdentity n = NodeIdentity::fresh();
    LocalValue whole = make_local(Json::array({3, 4}), answer_atom("(3,4)"), n, "pair(int,int)");
    auto [a, b] = unlift_pair(whole);
    CHECK(a.ref() == ValueRef::element(0, whole.ref()));
    CHECK(b.ref() == ValueRef::element(1, whole.ref()));
    CHECK(b.value() == 4);
    CHECK(a.type_tag() == "int");
  }

  TEST_CASE("shape mismatches are type errors") {
    NodeIdentity n = NodeIdentity::fresh();
    LocalValue scalar = make_local(5, answer_atom("5"), n);
    CHECK_THROWS_AS(unlift_pair(scalar), TypeError);
    LocalValue triple = make_local(Json::array({1, 2, 3}), answer_atom("t"), n, "list(int)");
    CHECK_THROWS_AS(unlift_pair(triple), TypeError);
  }

  TEST_CASE("mixing node identities is a locality error") {
    LocalValue x = make_local(1, answer_atom("1"), NodeIdentity::fresh());
    LocalValue y = make_local(2, answer_atom("2"), NodeIdentity::fresh());
    CHECK_THROWS_AS(lift_pair(x, y), LocalityError);
    CHECK_THROWS_AS(lift_list({x, y}, x.owner()), LocalityError);
  }

  TEST_CASE("cast_local") {
    NodeIdentity n = NodeIdentity::fresh();
    LocalValue x = make_local(1, answer_atom("1"), n);
    CHECK(cast_local(x, "int").has_value());
    CHECK(!cast_local(x, "str").has_value());
    TypeRegistry::global().declare_alias("Count", "int");
    auto c = cast_local(x, "Count");
    REQUIRE(c.has_value());
    CHECK(c->type_tag() == "Count");
    CHECK(c->ref() == x.ref());
  }
}
