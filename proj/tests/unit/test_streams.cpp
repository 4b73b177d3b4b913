#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <random>

#include "oracular/stream.hpp"
#include "support/stream_sim.hpp"

using namespace oracular;
using K = sim::Event<int>::Kind;

namespace {

Budget req(double n) { return Budget{{metric::kNumRequests, n}}; }

Stream<int> unit_spend(int v, double actual = 1) {
  return spend<int>(req(1), [v, actual] { return std::make_pair(v, req(actual)); });
}

Stream<int> spends(int n, int first = 0) {
  Stream<int> s;
  for (int i = n - 1; i >= 0; --i) s = concat(unit_spend(first + i), s);
  return s;
}

std::vector<K> kinds(const sim::Log<int>& log) {
  std::vector<K> out;
  for (const auto& e : log.events) out.push_back(e.kind);
  return out;
}

Producer<int> count_up(int n) {
  for (int i = 0; i < n; ++i) co_yield i;
}

Producer<int> doubled(Stream<int> in) {
  Cursor<int> c(in);
  while (auto v = co_await c.next()) co_yield *v * 2;
}

}  // namespace

TEST_SUITE("streams") {
  TEST_CASE("spend: grant and denial") {
    auto granted = sim::drive(unit_spend(7, 0.5));
    CHECK(kinds(granted) == std::vector<K>{K::kBarrier, K::kSpent, K::kYield, K::kDone});
    CHECK(granted.events[1].amount == req(0.5));
    CHECK(granted.events[1].skipped == 0);
    CHECK(granted.values() == std::vector<int>{7});

    auto denied = sim::drive(unit_spend(7), [](const Budget&) { return false; });
    CHECK(kinds(denied) == std::vector<K>{K::kBarrier, K::kSpent, K::kDone});
    CHECK(denied.events[1].amount == Budget());
  }

  TEST_CASE("spend: operation runs only after the grant") {
    int calls = 0;
    auto s = spend<int>(req(1), [&calls] {
      ++calls;
      return std::make_pair(1, req(1));
    });
    auto m = s.next();
    CHECK(calls == 0);
    auto& br = std::get<BarrierMsg<int>>(m);
    sim::drive(br.resume(false));
    CHECK(calls == 0);
    sim::drive(br.resume(true));
    CHECK(calls == 1);
  }

  TEST_CASE("spend: failures close the barrier with the reported amount") {
    std::string seen;
    auto s = spend<int>(
        req(1), []() -> std::pair<int, Budget> { throw SpendFailure("boom", req(1)); },
        [&seen](const std::string& what, const Budget&) { seen = what; });
    auto log = sim::drive(s);
    CHECK(kinds(log) == std::vector<K>{K::kBarrier, K::kSpent, K::kDone});
    CHECK(log.events[1].amount == req(1));
    CHECK(seen == "boom");

    auto plain = spend<int>(req(1), []() -> std::pair<int, Budget> { throw std::runtime_error("x"); });
    auto log2 = sim::drive(plain);
    CHECK(log2.events[1].amount == Budget());
  }

  TEST_CASE("sequential spends open one barrier at a time") {
    auto log = sim::drive(spends(2));
    CHECK(kinds(log) == std::vector<K>{K::kBarrier, K::kSpent, K::kYield, K::kBarrier, K::kSpent,
                                       K::kYield, K::kDone});
    CHECK(sim::check_pairing(log).ok);
  }

  TEST_CASE("bind laws") {
    auto f = [](const int& x) { return concat(unit_spend(x), yield_one(x + 100)); };
    CHECK(sim::drive(bind(Stream<int>(), f)).values().empty());
    auto lhs = sim::drive(bind(yield_one(3), f));
    auto rhs = sim::drive(f(3));
    CHECK(kinds(lhs) == kinds(rhs));
    CHECK(lhs.values() == rhs.values());

    auto three = from_values<int>({1, 2, 3});
    auto out = sim::drive(bind(three, [](const int& x) { return yield_one(x); }));
    CHECK(out.values() == std::vector<int>{1, 2, 3});
  }

  TEST_CASE("bind skips long runs of empty continuations") {
    std::vector<int> many(200000);
    for (int i = 0; i < 200000; ++i) many[i] = i;
    auto s = bind(from_values(many), [](const int& x) {
      return x == 199999 ? yield_one(x) : Stream<int>();
    });
    CHECK(collect(s).values == std::vector<int>{199999});
  }

  TEST_CASE("concat identity and associativity") {
    auto a = sim::drive(concat(Stream<int>(), spends(2)));
    auto b = sim::drive(spends(2));
    CHECK(kinds(a) == kinds(b));
    auto x = [] { return spends(1, 0); };
    auto y = [] { return spends(1, 10); };
    auto z = [] { return spends(1, 20); };
    auto l = sim::drive(concat(concat(x(), y()), z()));
    auto r = sim::drive(concat(x(), concat(y(), z())));
    CHECK(kinds(l) == kinds(r));
    CHECK(l.values() == r.values());
  }

  TEST_CASE("take") {
    int asked = 0;
    auto none = sim::drive(take(0, spends(3)), [&asked](const Budget&) {
      ++asked;
      return true;
    });
    CHECK(asked == 0);
    CHECK(none.values().empty());

    CHECK(sim::drive(take(2, from_values<int>({1, 2, 3, 4, 5}))).values() == std::vector<int>{1, 2});
    auto paid = sim::drive(take(2, spends(5)));
    CHECK(paid.values() == std::vector<int>{0, 1});
    CHECK(paid.count(K::kBarrier) == 2);
    CHECK(sim::check_pairing(paid).ok);
  }

  TEST_CASE("take keeps accounting of spends already granted") {
    // Two concurrent spends; the first value arrives while the second is in
    // flight, so take(1) must still let its Spent through.
    auto s = take(1, parallel(unit_spend(1), unit_spend(2), {.threaded = false}));
    auto log = sim::drive(s);
    CHECK(log.values().size() == 1);
    auto pairing = sim::check_pairing(log);
    CHECK_MESSAGE(pairing.ok, pairing.error);
  }

  TEST_CASE("with_budget") {
    auto capped = collect(with_budget(req(2), spends(5)));
    CHECK(capped.values.size() == 2);
    CHECK(capped.spent == req(2));

    auto open = collect(with_budget(Budget(), spends(5)));
    CHECK(open.values == std::vector<int>{0, 1, 2, 3, 4});

    auto zero = sim::drive(with_budget(req(0), spends(1)));
    CHECK(kinds(zero) == std::vector<K>{K::kBarrier, K::kSpent, K::kDone});
    CHECK(zero.events[1].amount == Budget());
  }

  TEST_CASE("with_budget honors a consumer denial") {
    auto log = sim::drive(with_budget(req(10), spends(3)), [](const Budget&) { return false; });
    CHECK(log.values().empty());
    CHECK(sim::check_pairing(log).ok);
  }

  TEST_CASE("collect") {
    auto empty = collect(Stream<int>());
    CHECK(empty.values.empty());
    CHECK(empty.spent == Budget());
    auto one = collect(unit_spend(9, 0.25));
    CHECK(one.values == std::vector<int>{9});
    CHECK(one.spent == req(0.25));
  }

  TEST_CASE("collect reports accounting when the stream throws") {
    auto failing = concat(unit_spend(1), Stream<int>([]() -> StreamMsg<int> { throw ConfigError("bad"); }));
    try {
      collect(failing);
      FAIL("expected CollectError");
    } catch (const CollectError& e) {
      CHECK(e.spent() == req(1));
      CHECK(e.values_before_failure() == 1);
      CHECK_THROWS_AS(std::rethrow_exception(e.cause()), ConfigError);
    }
  }

  TEST_CASE("partial") {
    auto empty = collect(partial(Stream<int>()));
    REQUIRE(empty.values.size() == 1);
    CHECK(empty.values[0].values.empty());
    CHECK(empty.values[0].spent == Budget());
    CHECK(collect(empty.values[0].rest).values.empty());

    auto limited = collect(with_budget(req(2), partial(spends(4))));
    REQUIRE(limited.values.size() == 1);
    CHECK(limited.values[0].values == std::vector<int>{0, 1});
    CHECK(limited.spent == req(2));
    // The continuation is not bound by the outer limit.
    auto rest = collect(limited.values[0].rest);
    CHECK(rest.values == std::vector<int>{2, 3});
    CHECK(rest.spent == req(2));
  }

  TEST_CASE("partial forwards accounting") {
    auto log = sim::drive(partial(spends(2)));
    using PK = sim::Event<PartialResult<int>>::Kind;
    CHECK(log.count(PK::kBarrier) == 2);
    CHECK(log.count(PK::kSpent) == 2);
    CHECK(sim::check_pairing(log).ok);
  }

  TEST_CASE("producers") {
    CHECK(collect(Stream<int>(count_up(4))).values == std::vector<int>{0, 1, 2, 3});
    auto log = sim::drive(Stream<int>(doubled(spends(3, 1))));
    CHECK(log.values() == std::vector<int>{2, 4, 6});
    CHECK(log.count(K::kBarrier) == 3);
    CHECK(sim::check_pairing(log).ok);
    auto denied = sim::drive(Stream<int>(doubled(spends(3, 1))), [](const Budget&) { return false; });
    CHECK(denied.values().empty());
    CHECK(sim::check_pairing(denied).ok);
  }

  TEST_CASE("producer continuations are single-use") {
    Stream<int> s = count_up(3);
    auto m = s.next();
    auto& y = std::get<YieldMsg<int>>(m);
    Stream<int> rest = y.rest;
    rest.next();
    CHECK_THROWS_AS(rest.next(), Error);
  }

  TEST_CASE("producer errors surface to the consumer") {
    auto thrower = []() -> Producer<int> {
      co_yield 1;
      throw TypeError("inside");
    };
    Stream<int> s = thrower();
    CHECK_THROWS_AS(collect(s), CollectError);
  }

  TEST_CASE("parallel merges values and keeps pairing") {
    for (bool threaded : {false, true}) {
      auto log = sim::drive(parallel(spends(2, 0), spends(2, 10), {.threaded = threaded}));
      auto values = log.values();
      std::sort(values.begin(), values.end());
      CHECK(values == std::vector<int>{0, 1, 10, 11});
      auto p = sim::check_pairing(log);
      CHECK_MESSAGE(p.ok, p.error);
    }
  }

  TEST_CASE("parallel interleaves barriers and rewrites skip counts") {
    auto log = sim::drive(parallel(unit_spend(1), unit_spend(2), {.threaded = false}));
    // Both barriers are open before either spend settles.
    CHECK(kinds(log)[0] == K::kBarrier);
    CHECK(kinds(log)[1] == K::kBarrier);
    auto p = sim::check_pairing(log);
    REQUIRE(p.ok);
    // The first Spent belongs to the first (older) barrier.
    CHECK(log.events[2].kind == K::kSpent);
    CHECK(log.events[2].skipped == 1);
  }

  TEST_CASE("parallel defers a denial while the other branch has spends in flight") {
    // Limit allows exactly one request at a time: while branch A holds a
    // reservation, branch B is denied, waits, and is asked again.
    auto s = with_budget(req(2), parallel(unit_spend(1), unit_spend(2), {.threaded = false}));
    auto log = sim::drive(s);
    auto values = log.values();
    std::sort(values.begin(), values.end());
    CHECK(values == std::vector<int>{1, 2});
    CHECK(sim::check_pairing(log).ok);

    auto tight = with_budget(req(1), parallel(unit_spend(1), unit_spend(2), {.threaded = false}));
    auto tlog = sim::drive(tight);
    CHECK(tlog.values().size() == 1);
    // B was refused once, closed with a zero Spent, then re-asked and refused
    // for good after A settled.
    CHECK(tlog.count(K::kBarrier) == 3);
    CHECK(sim::check_pairing(tlog).ok);
  }

  TEST_CASE("parallel with a seeded random scheduler") {
    std::mt19937 rng(3);
    ParallelOptions opts;
    opts.scheduler = [&rng](int) { return static_cast<int>(rng() % 2); };
    auto log = sim::drive(parallel(spends(3, 0), parallel(spends(2, 10), spends(2, 20), opts), opts));
    CHECK(log.values().size() == 7);
    CHECK(sim::check_pairing(log).ok);
  }

  TEST_CASE("tap_accounting mirrors barrier answers and spends") {
    std::vector<StreamEvent> events;
    // Placed inside with_budget, the tap sees the limit's decisions.
    auto s = with_budget(req(1), tap_accounting(spends(2), [&events](const StreamEvent& e) { events.push_back(e); }));
    collect(s);
    REQUIRE(events.size() == 4);
    CHECK(events[0].granted);
    CHECK(events[1].kind == StreamEvent::Kind::kSpent);
    CHECK(!events[2].granted);
    CHECK(events[3].amount == Budget());
  }

  TEST_CASE("budget arithmetic and parsing") {
    Budget b = Budget::parse("num_requests=50,price_usd=0.25");
    CHECK(b.get("num_requests") == 50);
    CHECK(b.get("price_usd") == 0.25);
    CHECK(b.get("input_tokens") == 0);
    CHECK(req(3).fits_within(b));
    CHECK(!req(51).fits_within(b));
    CHECK(Budget{{"anything", 1e9}}.fits_within(b));
    CHECK((req(1) + req(2)) == req(3));
    CHECK(Budget{{"x", 0}} == Budget());
    CHECK(Budget::from_json(b.to_json()) == b);
    CHECK_THROWS_AS(Budget::parse("num_requests"), ConfigError);
    CHECK_THROWS_AS(Budget::parse("num_requests=-1"), ConfigError);
    CHECK_THROWS_AS(Budget::parse("num_requests=1x"), ConfigError);
  }
}
