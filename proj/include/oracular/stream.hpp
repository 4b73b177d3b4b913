#pragma once

// Search streams: pull-driven value streams that ask permission before
// spending resources (Barrier) and report what was actually used (Spent).
//
// A Spent message names its Barrier by counting back over *unmatched*
// barriers: skipped = 0 is the most recent barrier still waiting for its
// Spent. With that convention every combinator that only sequences streams
// can forward Spent messages untouched; only merges (parallel, producers
// reading several cursors) have to translate indices.
//
// Continuations of coroutine-backed streams are single-use. Functional
// combinators (bind, take, with_budget, ...) produce persistent streams, but
// persistence is only as strong as the stream they wrap.

#include <array>
#include <atomic>
#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "oracular/budget.hpp"
#include "oracular/common.hpp"

namespace oracular {

template <class T>
class Stream;

struct DoneMsg {};

template <class T>
struct YieldMsg {
  T value;
  Stream<T> rest;
};

template <class T>
struct BarrierMsg {
  Budget estimate;
  std::function<Stream<T>(bool)> resume;
};

template <class T>
struct SpentMsg {
  Budget actual;
  int skipped = 0;
  Stream<T> rest;
};

template <class T>
using StreamMsg = std::variant<DoneMsg, YieldMsg<T>, BarrierMsg<T>, SpentMsg<T>>;

template <class T>
class Stream {
 public:
  using value_type = T;
  using Step = std::function<StreamMsg<T>()>;

  // The empty stream.
  Stream() = default;
  explicit Stream(Step step) : step_(std::move(step)) {}

  StreamMsg<T> next() const {
    if (!step_) return DoneMsg{};
    return step_();
  }

 private:
  Step step_;
};

template <class T>
Stream<T> just(StreamMsg<T> msg) {
  auto shared = std::make_shared<StreamMsg<T>>(std::move(msg));
  return Stream<T>([shared] { return *shared; });
}

template <class T>
Stream<T> yield_one(T value) {
  return just<T>(YieldMsg<T>{std::move(value), Stream<T>()});
}

namespace detail {

template <class T>
Stream<T> values_from(std::shared_ptr<const std::vector<T>> values, std::size_t from) {
  if (from >= values->size()) return Stream<T>();
  return Stream<T>([values, from]() -> StreamMsg<T> {
    return YieldMsg<T>{(*values)[from], values_from<T>(values, from + 1)};
  });
}

}  // namespace detail

template <class T>
Stream<T> from_values(std::vector<T> values) {
  return detail::values_from<T>(std::make_shared<const std::vector<T>>(std::move(values)), 0);
}

// ---------------------------------------------------------------------------
// Spending

// Thrown by spend operations that fail after consuming resources.
class SpendFailure : public Error {
 public:
  SpendFailure(const std::string& what, Budget consumed)
      : Error(what), consumed_(std::move(consumed)) {}
  const Budget& consumed() const { return consumed_; }

 private:
  Budget consumed_;
};

using SpendFailureHook = std::function<void(const std::string& what, const Budget& consumed)>;

// Barrier(estimate); on grant runs `op` when the continuation is pulled and
// reports its actual cost. A failing op closes the barrier with the consumed
// amount it reports (zero unless it throws SpendFailure) and ends the stream.
template <class T>
Stream<T> spend(Budget estimate, std::function<std::pair<T, Budget>()> op,
                SpendFailureHook on_failure = {}) {
  return Stream<T>([estimate, op, on_failure]() -> StreamMsg<T> {
    return BarrierMsg<T>{estimate, [op, on_failure](bool allow) -> Stream<T> {
      if (!allow) return just<T>(SpentMsg<T>{Budget(), 0, Stream<T>()});
      return Stream<T>([op, on_failure]() -> StreamMsg<T> {
        try {
          auto [value, actual] = op();
          return SpentMsg<T>{actual, 0, yield_one<T>(std::move(value))};
        } catch (const SpendFailure& f) {
          if (on_failure) on_failure(f.what(), f.consumed());
          return SpentMsg<T>{f.consumed(), 0, Stream<T>()};
        } catch (const std::exception& e) {
          if (on_failure) on_failure(e.what(), Budget());
          return SpentMsg<T>{Budget(), 0, Stream<T>()};
        }
      });
    }};
  });
}

// ---------------------------------------------------------------------------
// Sequencing

template <class T>
Stream<T> concat(Stream<T> a, Stream<T> b) {
  return Stream<T>([a, b]() -> StreamMsg<T> {
    StreamMsg<T> m = a.next();
    if (std::holds_alternative<DoneMsg>(m)) return b.next();
    if (auto* y = std::get_if<YieldMsg<T>>(&m)) return YieldMsg<T>{std::move(y->value), concat(y->rest, b)};
    if (auto* s = std::get_if<SpentMsg<T>>(&m)) return SpentMsg<T>{s->actual, s->skipped, concat(s->rest, b)};
    auto& br = std::get<BarrierMsg<T>>(m);
    auto resume = br.resume;
    return BarrierMsg<T>{br.estimate, [resume, b](bool allow) { return concat(resume(allow), b); }};
  });
}

template <class T, class F, class U = typename std::invoke_result_t<F, const T&>::value_type>
Stream<U> bind(Stream<T> s, F f) {
  std::function<Stream<U>(const T&)> fn = f;
  return Stream<U>([s, fn]() -> StreamMsg<U> {
    Stream<T> cur = s;
    // Loop over values whose continuation is immediately empty so that long
    // runs of dead ends do not deepen the call stack.
    for (;;) {
      StreamMsg<T> m = cur.next();
      if (std::holds_alternative<DoneMsg>(m)) return DoneMsg{};
      if (auto* sp = std::get_if<SpentMsg<T>>(&m)) {
        return SpentMsg<U>{sp->actual, sp->skipped, bind<T>(sp->rest, fn)};
      }
      if (auto* br = std::get_if<BarrierMsg<T>>(&m)) {
        auto resume = br->resume;
        return BarrierMsg<U>{br->estimate, [resume, fn](bool allow) { return bind<T>(resume(allow), fn); }};
      }
      auto& y = std::get<YieldMsg<T>>(m);
      Stream<U> inner = fn(y.value);
      StreamMsg<U> first = inner.next();
      if (std::holds_alternative<DoneMsg>(first)) {
        cur = y.rest;
        continue;
      }
      Stream<U> tail = bind<T>(y.rest, fn);
      if (auto* iy = std::get_if<YieldMsg<U>>(&first)) {
        return YieldMsg<U>{std::move(iy->value), concat(iy->rest, tail)};
      }
      if (auto* is = std::get_if<SpentMsg<U>>(&first)) {
        return SpentMsg<U>{is->actual, is->skipped, concat(is->rest, tail)};
      }
      auto& ib = std::get<BarrierMsg<U>>(first);
      auto iresume = ib.resume;
      return BarrierMsg<U>{ib.estimate, [iresume, tail](bool allow) { return concat(iresume(allow), tail); }};
    }
  });
}

template <class T, class F, class U = std::invoke_result_t<F, const T&>>
Stream<U> map_stream(Stream<T> s, F f) {
  std::function<U(const T&)> fn = f;
  return bind(std::move(s), [fn](const T& v) { return yield_one<U>(fn(v)); });
}

// ---------------------------------------------------------------------------
// Budget-aware transformers

namespace detail {

template <class T>
Stream<T> take_from(std::size_t n, int open, Stream<T> s) {
  return Stream<T>([n, open, s]() -> StreamMsg<T> {
    if (n == 0 && open == 0) return DoneMsg{};
    Stream<T> cur = s;
    for (;;) {
      StreamMsg<T> m = cur.next();
      if (std::holds_alternative<DoneMsg>(m)) return DoneMsg{};
      if (auto* y = std::get_if<YieldMsg<T>>(&m)) {
        if (n > 0) return YieldMsg<T>{std::move(y->value), take_from(n - 1, open, y->rest)};
        cur = y->rest;  // quota reached: drain without yielding
        continue;
      }
      if (auto* sp = std::get_if<SpentMsg<T>>(&m)) {
        return SpentMsg<T>{sp->actual, sp->skipped, take_from(n, open - 1, sp->rest)};
      }
      auto& br = std::get<BarrierMsg<T>>(m);
      auto resume = br.resume;
      return BarrierMsg<T>{br.estimate, [n, open, resume](bool allow) {
                             return take_from(n, open + 1, resume(allow && n > 0));
                           }};
    }
  });
}

struct PendingReservation {
  int key;  // unmatched barriers opened after this one
  Budget reserved;
};

template <class T>
Stream<T> budgeted(Budget limit, Budget spent, std::vector<PendingReservation> pending, Stream<T> s) {
  return Stream<T>([limit, spent, pending, s]() -> StreamMsg<T> {
    StreamMsg<T> m = s.next();
    if (std::holds_alternative<DoneMsg>(m)) return DoneMsg{};
    if (auto* y = std::get_if<YieldMsg<T>>(&m)) {
      return YieldMsg<T>{std::move(y->value), budgeted(limit, spent, pending, y->rest)};
    }
    if (auto* sp = std::get_if<SpentMsg<T>>(&m)) {
      std::vector<PendingReservation> next;
      bool found = false;
      for (const auto& p : pending) {
        if (!found && p.key == sp->skipped) {
          found = true;
          continue;
        }
        next.push_back(p);
      }
      if (!found) throw Error("with_budget: Spent message matches no open Barrier");
      for (auto& p : next) {
        if (p.key > sp->skipped) --p.key;
      }
      return SpentMsg<T>{sp->actual, sp->skipped,
                         budgeted(limit, spent + sp->actual, std::move(next), sp->rest)};
    }
    auto& br = std::get<BarrierMsg<T>>(m);
    auto resume = br.resume;
    Budget estimate = br.estimate;
    return BarrierMsg<T>{estimate, [limit, spent, pending, resume, estimate](bool allow) {
                           Budget frozen;
                           for (const auto& p : pending) frozen += p.reserved;
                           bool ok = allow && (spent + estimate + frozen).fits_within(limit);
                           std::vector<PendingReservation> next;
                           next.reserve(pending.size() + 1);
                           next.push_back({0, ok ? estimate : Budget()});
                           for (const auto& p : pending) next.push_back({p.key + 1, p.reserved});
                           return budgeted(limit, spent, std::move(next), resume(ok));
                         }};
  });
}

}  // namespace detail

template <class T>
Stream<T> take(std::size_t n, Stream<T> s) {
  return detail::take_from(n, 0, std::move(s));
}

template <class T>
Stream<T> with_budget(Budget limit, Stream<T> s) {
  return detail::budgeted(std::move(limit), Budget(), {}, std::move(s));
}

template <class T>
struct PartialResult {
  std::vector<T> values;
  Budget spent;
  Stream<T> rest;
};

namespace detail {

template <class T>
Stream<PartialResult<T>> partial_from(std::vector<T> values, Budget spent, int open, Stream<T> s) {
  using R = PartialResult<T>;
  return Stream<R>([values, spent, open, s]() -> StreamMsg<R> {
    std::vector<T> vals = values;
    Stream<T> cur = s;
    for (;;) {
      StreamMsg<T> m = cur.next();
      if (std::holds_alternative<DoneMsg>(m)) return YieldMsg<R>{R{std::move(vals), spent, Stream<T>()}, Stream<R>()};
      if (auto* y = std::get_if<YieldMsg<T>>(&m)) {
        vals.push_back(std::move(y->value));
        cur = y->rest;
        continue;
      }
      if (auto* sp = std::get_if<SpentMsg<T>>(&m)) {
        return SpentMsg<R>{sp->actual, sp->skipped, partial_from(vals, spent + sp->actual, open - 1, sp->rest)};
      }
      auto& br = std::get<BarrierMsg<T>>(m);
      Budget estimate = br.estimate;
      auto resume = br.resume;
      return BarrierMsg<R>{estimate, [vals, spent, open, estimate, resume](bool allow) -> Stream<R> {
                             if (allow || open > 0) return partial_from(vals, spent, open + 1, resume(allow));
                             // Out of budget with nothing else in flight: close the
                             // barrier ourselves and hand back a continuation that asks
                             // again when resumed.
                             Stream<T> again = just<T>(BarrierMsg<T>{estimate, resume});
                             return just<R>(SpentMsg<R>{
                                 Budget(), 0, yield_one<R>(R{vals, spent, again})});
                           }};
    }
  });
}

}  // namespace detail

template <class T>
Stream<PartialResult<T>> partial(Stream<T> s) {
  return detail::partial_from<T>({}, Budget(), 0, std::move(s));
}

// Raised by collect when the stream itself throws; carries the accounting
// gathered so far and the original exception.
class CollectError : public Error {
 public:
  CollectError(const std::string& what, Budget spent, std::size_t values, std::exception_ptr cause)
      : Error(what), spent_(std::move(spent)), values_(values), cause_(std::move(cause)) {}
  const Budget& spent() const { return spent_; }
  std::size_t values_before_failure() const { return values_; }
  const std::exception_ptr& cause() const { return cause_; }

 private:
  Budget spent_;
  std::size_t values_;
  std::exception_ptr cause_;
};

template <class T>
struct Collected {
  std::vector<T> values;
  Budget spent;
};

// Accounting events seen by a tap. For barriers, `granted` is the answer
// the downstream consumer gave.
struct StreamEvent {
  enum class Kind { kBarrier, kSpent } kind;
  Budget amount;
  bool granted = false;
  int skipped = 0;
};

using StreamEventHook = std::function<void(const StreamEvent&)>;

template <class T>
Stream<T> tap_accounting(Stream<T> s, StreamEventHook hook) {
  return Stream<T>([s, hook]() -> StreamMsg<T> {
    StreamMsg<T> m = s.next();
    if (std::holds_alternative<DoneMsg>(m)) return DoneMsg{};
    if (auto* y = std::get_if<YieldMsg<T>>(&m)) return YieldMsg<T>{std::move(y->value), tap_accounting(y->rest, hook)};
    if (auto* sp = std::get_if<SpentMsg<T>>(&m)) {
      hook(StreamEvent{StreamEvent::Kind::kSpent, sp->actual, false, sp->skipped});
      return SpentMsg<T>{sp->actual, sp->skipped, tap_accounting(sp->rest, hook)};
    }
    auto& br = std::get<BarrierMsg<T>>(m);
    auto resume = br.resume;
    Budget estimate = br.estimate;
    return BarrierMsg<T>{estimate, [resume, hook, estimate](bool allow) {
                           hook(StreamEvent{StreamEvent::Kind::kBarrier, estimate, allow, 0});
                           return tap_accounting(resume(allow), hook);
                         }};
  });
}

// Grants every request. Only meaningful at the top level of a run.
template <class T>
Collected<T> collect(Stream<T> s) {
  Collected<T> out;
  Stream<T> cur = std::move(s);
  try {
    for (;;) {
      StreamMsg<T> m = cur.next();
      if (std::holds_alternative<DoneMsg>(m)) break;
      if (auto* y = std::get_if<YieldMsg<T>>(&m)) {
        out.values.push_back(std::move(y->value));
        cur = y->rest;
      } else if (auto* sp = std::get_if<SpentMsg<T>>(&m)) {
        out.spent += sp->actual;
        cur = sp->rest;
      } else {
        cur = std::get<BarrierMsg<T>>(m).resume(true);
      }
    }
  } catch (const std::exception& e) {
    throw CollectError(e.what(), out.spent, out.values.size(), std::current_exception());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index translation for merges

// Tracks the open barriers of several sources interleaved into one output
// stream and rewrites per-source skip counts into output skip counts.
class SkipTranslator {
 public:
  void on_barrier(int source) { open_.push_back(source); }
  // `local` counts unmatched barriers of `source` opened after the one being
  // closed. Returns the same count over all sources, and forgets the barrier.
  int on_spent(int source, int local);
  int pending(int source) const;
  int pending() const { return static_cast<int>(open_.size()); }

 private:
  std::vector<int> open_;
};

int fresh_source_id();

// ---------------------------------------------------------------------------
// Coroutine producers
//
// A Producer<T> body may `co_yield` values and `co_await cursor.next()` on
// Cursors over other streams. Barrier and Spent messages of the cursors are
// forwarded outward (with translated skip counts); the awaiting expression
// completes with the next value or nullopt when the cursor is exhausted.

namespace detail {

struct PullOutcome {
  enum class Kind { kReady, kBarrier, kSpent } kind = Kind::kReady;
  Budget amount;
  int skipped = 0;
};

class PendingPull {
 public:
  virtual ~PendingPull() = default;
  virtual PullOutcome pull(SkipTranslator& tr) = 0;
  virtual void answer(bool allow) = 0;
};

}  // namespace detail

template <class U>
class Cursor {
 public:
  explicit Cursor(Stream<U> s) : stream_(std::move(s)), source_(fresh_source_id()) {}
  Cursor(const Cursor&) = delete;
  Cursor& operator=(const Cursor&) = delete;

  class NextAwaiter : public detail::PendingPull {
   public:
    explicit NextAwaiter(Cursor* c) : cursor_(c) {}
    bool await_ready() const noexcept { return false; }
    template <class P>
    void await_suspend(std::coroutine_handle<P> h) noexcept {
      h.promise().pending = this;
    }
    std::optional<U> await_resume() { return std::move(result_); }

    detail::PullOutcome pull(SkipTranslator& tr) override {
      using K = detail::PullOutcome::Kind;
      StreamMsg<U> m = cursor_->stream_.next();
      if (std::holds_alternative<DoneMsg>(m)) {
        cursor_->stream_ = Stream<U>();
        return {K::kReady, {}, 0};
      }
      if (auto* y = std::get_if<YieldMsg<U>>(&m)) {
        result_ = std::move(y->value);
        cursor_->stream_ = y->rest;
        return {K::kReady, {}, 0};
      }
      if (auto* sp = std::get_if<SpentMsg<U>>(&m)) {
        int g = tr.on_spent(cursor_->source_, sp->skipped);
        cursor_->stream_ = sp->rest;
        return {K::kSpent, sp->actual, g};
      }
      auto& br = std::get<BarrierMsg<U>>(m);
      tr.on_barrier(cursor_->source_);
      cursor_->resume_ = br.resume;
      return {K::kBarrier, br.estimate, 0};
    }

    void answer(bool allow) override {
      auto resume = std::move(cursor_->resume_);
      cursor_->resume_ = nullptr;
      cursor_->stream_ = resume(allow);
    }

   private:
    Cursor* cursor_;
    std::optional<U> result_;
  };

  NextAwaiter next() { return NextAwaiter(this); }

 private:
  Stream<U> stream_;
  int source_;
  std::function<Stream<U>(bool)> resume_;
};

template <class T>
class Producer {
 public:
  struct promise_type {
    std::optional<T> yielded;
    detail::PendingPull* pending = nullptr;
    std::exception_ptr error;

    Producer get_return_object() {
      return Producer(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    std::suspend_always final_suspend() noexcept { return {}; }
    std::suspend_always yield_value(T v) {
      yielded = std::move(v);
      return {};
    }
    void return_void() {}
    void unhandled_exception() { error = std::current_exception(); }
  };

  using Handle = std::coroutine_handle<promise_type>;

  Producer(Producer&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  Producer(const Producer&) = delete;
  ~Producer() {
    if (h_) h_.destroy();
  }

  // NOLINTNEXTLINE(google-explicit-constructor): producers stand in for streams.
  operator Stream<T>() && {
    auto state = std::make_shared<State>(std::exchange(h_, {}));
    return state->continuation();
  }

 private:
  explicit Producer(Handle h) : h_(h) {}

  class State : public std::enable_shared_from_this<State> {
   public:
    explicit State(Handle h) : h_(h) {}
    ~State() {
      if (h_) h_.destroy();
    }

    Stream<T> continuation() {
      auto self = this->shared_from_this();
      std::uint64_t g = generation_;
      return Stream<T>([self, g]() { return self->step(g); });
    }

   private:
    void claim(std::uint64_t g) {
      if (g != generation_) throw Error("stream continuation used more than once");
      ++generation_;
    }

    StreamMsg<T> step(std::uint64_t g) {
      claim(g);
      promise_type& p = h_.promise();
      for (;;) {
        if (p.pending) {
          detail::PullOutcome out = p.pending->pull(tr_);
          using K = detail::PullOutcome::Kind;
          if (out.kind == K::kBarrier) {
            auto self = this->shared_from_this();
            std::uint64_t gb = generation_;
            return BarrierMsg<T>{out.amount, [self, gb](bool allow) {
                                   self->claim(gb);
                                   self->h_.promise().pending->answer(allow);
                                   return self->continuation();
                                 }};
          }
          if (out.kind == K::kSpent) return SpentMsg<T>{out.amount, out.skipped, continuation()};
          p.pending = nullptr;
        }
        h_.resume();
        if (h_.done()) {
          if (p.error) std::rethrow_exception(p.error);
          return DoneMsg{};
        }
        if (p.yielded) {
          T v = std::move(*p.yielded);
          p.yielded.reset();
          return YieldMsg<T>{std::move(v), continuation()};
        }
      }
    }

    Handle h_;
    SkipTranslator tr_;
    std::uint64_t generation_ = 0;
  };

  Handle h_;
};

// ---------------------------------------------------------------------------
// Parallel merge

struct ParallelOptions {
  // Run the spend that follows a granted barrier on a worker thread while
  // the other branch keeps producing messages.
  bool threaded = true;
  // Picks a branch (0 or 1) when both can make progress; the argument is the
  // branch picked last. Defaults to alternation. Message order depends only on
  // the scheduler, never on thread timing.
  std::function<int(int last)> scheduler;
};

namespace detail {

template <class T>
class ParallelState : public std::enable_shared_from_this<ParallelState<T>> {
 public:
  ParallelState(Stream<T> a, Stream<T> b, ParallelOptions opts) : opts_(std::move(opts)) {
    branches_[0].stream = std::move(a);
    branches_[1].stream = std::move(b);
  }

  Stream<T> continuation() {
    auto self = this->shared_from_this();
    std::uint64_t g = generation_;
    return Stream<T>([self, g]() { return self->step(g); });
  }

 private:
  struct Branch {
    Stream<T> stream;
    std::optional<std::future<StreamMsg<T>>> ahead;
    bool done = false;
    int open = 0;
    std::optional<BarrierMsg<T>> deferred;
  };

  void claim(std::uint64_t g) {
    if (g != generation_) throw Error("stream continuation used more than once");
    ++generation_;
  }

  bool runnable(int i) const {
    const Branch& b = branches_[i];
    const Branch& o = branches_[1 - i];
    if (b.done) return false;
    return !b.deferred || o.done || o.open == 0;
  }

  StreamMsg<T> pull(int i) {
    Branch& b = branches_[i];
    if (b.ahead) {
      auto fut = std::move(*b.ahead);
      b.ahead.reset();
      return fut.get();
    }
    return b.stream.next();
  }

  StreamMsg<T> step(std::uint64_t g) {
    claim(g);
    for (;;) {
      bool r0 = runnable(0), r1 = runnable(1);
      if (!r0 && !r1) {
        if (branches_[0].done && branches_[1].done) return DoneMsg{};
        throw Error("parallel: no branch can make progress");
      }
      int i = r0 && r1 ? pick() : (r0 ? 0 : 1);
      last_ = i;
      Branch& b = branches_[i];
      if (b.deferred) {
        BarrierMsg<T> again = std::move(*b.deferred);
        b.deferred.reset();
        return ask(i, std::move(again));
      }
      StreamMsg<T> m = pull(i);
      if (std::holds_alternative<DoneMsg>(m)) {
        b.done = true;
        continue;
      }
      if (auto* y = std::get_if<YieldMsg<T>>(&m)) {
        b.stream = y->rest;
        return YieldMsg<T>{std::move(y->value), continuation()};
      }
      if (auto* sp = std::get_if<SpentMsg<T>>(&m)) {
        int global = tr_.on_spent(i, sp->skipped);
        --b.open;
        b.stream = sp->rest;
        return SpentMsg<T>{sp->actual, global, continuation()};
      }
      return ask(i, std::get<BarrierMsg<T>>(std::move(m)));
    }
  }

  int pick() {
    if (opts_.scheduler) return opts_.scheduler(last_) == 0 ? 0 : 1;
    return 1 - last_;
  }

  StreamMsg<T> ask(int i, BarrierMsg<T> barrier) {
    tr_.on_barrier(i);
    ++branches_[i].open;
    auto self = this->shared_from_this();
    std::uint64_t g = generation_;
    Budget estimate = barrier.estimate;
    return BarrierMsg<T>{estimate, [self, g, i, barrier](bool allow) {
                           self->claim(g);
                           return self->answer(i, barrier, allow);
                         }};
  }

  Stream<T> answer(int i, const BarrierMsg<T>& barrier, bool allow) {
    Branch& b = branches_[i];
    Branch& o = branches_[1 - i];
    if (!allow && !o.done && o.open > 0 && !o.deferred) {
      // The other branch may free reserved budget when its spends settle:
      // close this request for now and ask again later.
      b.deferred = barrier;
      int global = tr_.on_spent(i, 0);
      --b.open;
      return just<T>(SpentMsg<T>{Budget(), global, continuation()});
    }
    b.stream = barrier.resume(allow);
    if (allow && opts_.threaded) {
      Stream<T> s = b.stream;
      b.ahead = std::async(std::launch::async, [s]() { return s.next(); });
    }
    return continuation();
  }

  std::array<Branch, 2> branches_;
  SkipTranslator tr_;
  ParallelOptions opts_;
  int last_ = 1;
  std::uint64_t generation_ = 0;
};

}  // namespace detail

template <class T>
Stream<T> parallel(Stream<T> a, Stream<T> b, ParallelOptions opts = {}) {
  auto state = std::make_shared<detail::ParallelState<T>>(std::move(a), std::move(b), std::move(opts));
  return state->continuation();
}

}  // namespace oracular
