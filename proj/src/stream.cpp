#include "oracular/stream.hpp"

namespace oracular {

int SkipTranslator::on_spent(int source, int local) {
  int seen = 0;
  for (int i = static_cast<int>(open_.size()) - 1; i >= 0; --i) {
    if (open_[i] != source) continue;
    if (seen == local) {
      int global = static_cast<int>(open_.size()) - 1 - i;
      open_.erase(open_.begin() + i);
      return global;
    }
    ++seen;
  }
  throw Error("Spent message (skipped=" + std::to_string(local) +
              ") matches no open Barrier of its source");
}

int SkipTranslator::pending(int source) const {
  int n = 0;
  for (int s : open_) n += s == source ? 1 : 0;
  return n;
}

int fresh_source_id() {
  static std::atomic<int> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace oracular
