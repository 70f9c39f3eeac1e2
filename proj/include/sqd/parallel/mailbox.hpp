// SPDX-License-Identifier: Apache-2.0
#pragma once

// Point-to-point message passing between in-process worker ranks.
//
// Each rank owns one bounded mailbox. Receives match on (source, tag) like
// MPI_Recv and give up after a watchdog timeout, so a missing message turns
// into a DeadlockError naming the waiting rank instead of a hang.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sqd/error.hpp"

namespace sqd::parallel {

enum class Tag : int { ring = 0, reduce = 1, concat = 2, gather = 3 };
inline constexpr std::size_t kTagCount = 4;

inline const char* to_string(Tag t) {
  switch (t) {
    case Tag::ring: return "ring-shift";
    case Tag::reduce: return "task-reduce";
    case Tag::concat: return "row-concat";
    case Tag::gather: return "gather";
  }
  return "?";
}

struct Message {
  int source = -1;
  Tag tag = Tag::ring;
  int step = 0;
  std::vector<double> payload;
};

/// Message counters per tag, shared by a rank group.
struct CommStats {
  std::array<std::atomic<std::size_t>, kTagCount> messages{};
  std::array<std::atomic<std::size_t>, kTagCount> doubles{};

  std::size_t count(Tag t) const { return messages[static_cast<std::size_t>(t)].load(); }
  std::size_t volume(Tag t) const { return doubles[static_cast<std::size_t>(t)].load(); }
};

class Mailbox {
 public:
  explicit Mailbox(std::size_t capacity = 64) : capacity_(capacity) {}

  /// Blocks while the box is full. Returns false if the group was aborted.
  bool post(Message msg, const std::atomic<bool>& abort, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    const bool ok = not_full_.wait_for(lock, timeout, [&] { return queue_.size() < capacity_ || abort.load(); });
    if (abort.load()) return false;
    if (!ok) throw DeadlockError("mailbox full for " + std::to_string(timeout.count()) + " ms");
    queue_.push_back(std::move(msg));
    not_empty_.notify_all();
    return true;
  }

  /// First message from `source` with `tag` (and `step`), or nullopt on timeout/abort.
  std::optional<Message> take(int source, Tag tag, int step, const std::atomic<bool>& abort,
                              std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    std::optional<Message> found;
    auto match = [&] {
      for (auto it = queue_.begin(); it != queue_.end(); ++it)
        if (it->source == source && it->tag == tag && it->step == step) {
          found = std::move(*it);
          queue_.erase(it);
          return true;
        }
      return abort.load();
    };
    not_empty_.wait_for(lock, timeout, match);
    if (found) not_full_.notify_all();
    return found;
  }

  void wake() {
    std::lock_guard lock(mu_);
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Message> queue_;
};

/// Mailboxes for `size` ranks plus one extra box (index `size`) for the caller.
class RankGroup {
 public:
  RankGroup(int size, std::chrono::milliseconds watchdog, std::size_t capacity = 64)
      : size_(size), watchdog_(watchdog) {
    boxes_.reserve(static_cast<std::size_t>(size) + 1);
    for (int i = 0; i <= size; ++i) boxes_.push_back(std::make_unique<Mailbox>(capacity));
  }

  int size() const { return size_; }
  int caller() const { return size_; }
  CommStats& stats() { return stats_; }
  const CommStats& stats() const { return stats_; }
  bool aborted() const { return abort_.load(); }

  void send(int from, int to, Tag tag, int step, std::vector<double> payload) {
    stats_.messages[static_cast<std::size_t>(tag)].fetch_add(1);
    stats_.doubles[static_cast<std::size_t>(tag)].fetch_add(payload.size());
    boxes_[static_cast<std::size_t>(to)]->post({from, tag, step, std::move(payload)}, abort_, watchdog_);
  }

  /// `patience` scales the watchdog; the caller waits longer so a stalled worker is reported first.
  std::vector<double> recv(int self, int from, Tag tag, int step, const std::string& who, int patience = 1) {
    const auto timeout = watchdog_ * patience;
    auto m = boxes_[static_cast<std::size_t>(self)]->take(from, tag, step, abort_, timeout);
    if (!m) {
      if (abort_.load()) throw DeadlockError(who + " aborted while waiting in phase " + to_string(tag));
      throw DeadlockError(who + " stalled in phase " + to_string(tag) + " (step " + std::to_string(step) +
                          ") waiting for rank " + std::to_string(from) + " after " +
                          std::to_string(timeout.count()) + " ms");
    }
    return std::move(m->payload);
  }

  void abort() {
    abort_.store(true);
    for (auto& b : boxes_) b->wake();
  }

 private:
  int size_;
  std::chrono::milliseconds watchdog_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  CommStats stats_;
  std::atomic<bool> abort_{false};
};

}  // namespace sqd::parallel
