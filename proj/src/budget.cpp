#include "oracular/budget.hpp"

#include <cmath>
#include <sstream>

namespace oracular {

Budget::Budget(std::initializer_list<std::pair<const std::string, double>> init) : values_(init) {}

double Budget::get(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? 0.0 : it->second;
}

void Budget::set(const std::string& key, double v) { values_[key] = v; }

bool Budget::fits_within(const Budget& limit) const {
  for (const auto& [k, v] : values_) {
    auto it = limit.values_.find(k);
    if (it != limit.values_.end() && v > it->second) return false;
  }
  return true;
}

Budget& Budget::operator+=(const Budget& o) {
  for (const auto& [k, v] : o.values_) values_[k] += v;
  return *this;
}

Budget& Budget::operator-=(const Budget& o) {
  for (const auto& [k, v] : o.values_) values_[k] -= v;
  return *this;
}

bool operator==(const Budget& a, const Budget& b) {
  auto covered = [](const Budget& x, const Budget& y) {
    for (const auto& [k, v] : x.values_) {
      if (v != y.get(k)) return false;
    }
    return true;
  };
  return covered(a, b) && covered(b, a);
}

Json Budget::to_json() const {
  Json j = Json::object();
  for (const auto& [k, v] : values_) {
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
      j[k] = static_cast<long long>(v);
    } else {
      j[k] = v;
    }
  }
  return j;
}

Budget Budget::from_json(const Json& j) {
  if (j.is_null()) return Budget();
  if (!j.is_object()) throw ConfigError("budget must be an object of metric values");
  Budget b;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) throw ConfigError("budget metric '" + it.key() + "' is not a number");
    double v = it.value().get<double>();
    if (v < 0) throw ConfigError("budget metric '" + it.key() + "' is negative");
    b.values_[it.key()] = v;
  }
  return b;
}

Budget Budget::parse(const std::string& text) {
  Budget b;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("malformed budget entry '" + item + "'");
    std::string key = item.substr(0, eq);
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("malformed budget value in '" + item + "'");
    }
    if (v < 0) throw ConfigError("budget metric '" + key + "' is negative");
    b.values_[key] = v;
  }
  return b;
}

std::string to_string(const Budget& b) { return b.to_json().dump(); }

}  // namespace oracular
