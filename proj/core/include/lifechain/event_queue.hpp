#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

namespace lifechain {

/// Min-queue on (time, insertion sequence). Equal times pop in insertion order.
template <typename Event>
class EventQueue {
 public:
  struct Entry {
    double time = 0.0;
    std::uint64_t seq = 0;
    Event event;
  };

  void push(double time, Event event) { heap_.push(Entry{time, next_seq_++, std::move(event)}); }

  std::optional<Entry> pop() {
    if (heap_.empty()) return std::nullopt;
    Entry e = heap_.top();
    heap_.pop();
    return e;
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace lifechain
