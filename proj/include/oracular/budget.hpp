#pragma once

// Multi-metric resource vectors. A missing metric is unconstrained when the
// budget is used as a limit and zero when it is used as an amount spent.

#include <map>
#include <string>

#include "oracular/common.hpp"

namespace oracular {

namespace metric {
inline constexpr const char* kNumRequests = "num_requests";
inline constexpr const char* kInputTokens = "input_tokens";
inline constexpr const char* kOutputTokens = "output_tokens";
inline constexpr const char* kPriceUsd = "price_usd";
}  // namespace metric

class Budget {
 public:
  Budget() = default;
  Budget(std::initializer_list<std::pair<const std::string, double>> init);

  static Budget zero() { return Budget(); }

  // Value of `key` read as a spend (0 when absent).
  double get(const std::string& key) const;
  void set(const std::string& key, double v);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, double>& values() const { return values_; }
  bool empty() const { return values_.empty(); }

  // Component-wise comparison of a spend against a limit: every metric of
  // *this must be at most the limit's value, absent limit metrics being
  // unconstrained.
  bool fits_within(const Budget& limit) const;

  Budget& operator+=(const Budget& o);
  Budget& operator-=(const Budget& o);
  friend Budget operator+(Budget a, const Budget& b) { return a += b; }
  friend Budget operator-(Budget a, const Budget& b) { return a -= b; }
  // Equality ignores explicit zero entries.
  friend bool operator==(const Budget& a, const Budget& b);
  friend bool operator!=(const Budget& a, const Budget& b) { return !(a == b); }

  Json to_json() const;
  static Budget from_json(const Json& j);
  // "num_requests=50,price_usd=0.2"; empty text is the unconstrained budget.
  static Budget parse(const std::string& text);

 private:
  std::map<std::string, double> values_;
};

std::string to_string(const Budget& b);

}  // namespace oracular
