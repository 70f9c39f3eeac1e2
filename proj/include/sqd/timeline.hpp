// SPDX-License-Identifier: Apache-2.0
#pragma once

// Phase timing records on a monotonic run clock, with per-resource idle fractions.

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sqd/error.hpp"

namespace sqd {

enum class Phase { throw_circuit, retrieve, preprocessing, diagonalization, quantum_execution };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::throw_circuit: return "throw";
    case Phase::retrieve: return "retrieve";
    case Phase::preprocessing: return "pre-processing";
    case Phase::diagonalization: return "diagonalization";
    case Phase::quantum_execution: return "quantum-execution";
  }
  return "?";
}

inline Phase phase_from_string(const std::string& s) {
  for (Phase p : {Phase::throw_circuit, Phase::retrieve, Phase::preprocessing, Phase::diagonalization,
                  Phase::quantum_execution})
    if (s == to_string(p)) return p;
  throw ParseError("unknown phase '" + s + "'");
}

/// quantum-execution runs on the sampler; every other phase on the classical host.
inline const char* resource_of(Phase p) { return p == Phase::quantum_execution ? "sampler" : "classical"; }

struct TimingRecord {
  Phase phase = Phase::preprocessing;
  int population = 0;
  int walker = -1;
  int iteration = 0;
  double start = 0.0;
  double end = 0.0;
};

/// Seconds since construction on std::chrono::steady_clock.
class RunClock {
 public:
  RunClock() : origin_(std::chrono::steady_clock::now()) {}
  explicit RunClock(double offset) : RunClock() { offset_ = offset; }
  double now() const {
    return offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
  }

 private:
  std::chrono::steady_clock::time_point origin_;
  double offset_ = 0.0;
};

class TimingLog {
 public:
  explicit TimingLog(const RunClock& clock) : clock_(&clock) {}

  void add(TimingRecord r) {
    require(r.end >= r.start, "TimingLog: record ends before it starts");
    std::lock_guard lock(mu_);
    records_.push_back(r);
  }

  /// Runs f and records its interval.
  template <class F>
  auto timed(Phase phase, int population, int walker, int iteration, F&& f) {
    const double t0 = clock_->now();
    struct Guard {
      TimingLog* log;
      TimingRecord r;
      ~Guard() {
        r.end = std::max(r.start, log->clock_->now());
        log->add(r);
      }
    } guard{this, {phase, population, walker, iteration, t0, t0}};
    return f();
  }

  std::vector<TimingRecord> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }
  void restore(std::vector<TimingRecord> r) {
    std::lock_guard lock(mu_);
    records_ = std::move(r);
  }

 private:
  const RunClock* clock_;
  mutable std::mutex mu_;
  std::vector<TimingRecord> records_;
};

/// Total length of the union of [start, end) intervals.
inline double covered_length(std::vector<std::pair<double, double>> iv) {
  std::sort(iv.begin(), iv.end());
  double total = 0.0, cur_s = 0.0, cur_e = 0.0;
  bool open = false;
  for (const auto& [s, e] : iv) {
    if (!open || s > cur_e) {
      if (open) total += cur_e - cur_s;
      cur_s = s;
      cur_e = e;
      open = true;
    } else {
      cur_e = std::max(cur_e, e);
    }
  }
  if (open) total += cur_e - cur_s;
  return total;
}

struct ResourceUsage {
  std::string resource;
  double busy = 0.0;
  double span = 0.0;
  double idle_fraction = 0.0;
};

/// idle = 1 - covered / span per resource, span = [earliest start, latest end] over all records.
inline std::vector<ResourceUsage> resource_usage(const std::vector<TimingRecord>& records) {
  std::vector<ResourceUsage> out;
  if (records.empty()) return out;
  double lo = records.front().start, hi = records.front().end;
  for (const auto& r : records) {
    lo = std::min(lo, r.start);
    hi = std::max(hi, r.end);
  }
  for (const char* res : {"sampler", "classical"}) {
    std::vector<std::pair<double, double>> iv;
    for (const auto& r : records)
      if (std::string(resource_of(r.phase)) == res) iv.emplace_back(r.start, r.end);
    ResourceUsage u{res, covered_length(iv), hi - lo, 0.0};
    u.idle_fraction = u.span > 0.0 ? 1.0 - u.busy / u.span : 0.0;
    out.push_back(u);
  }
  return out;
}

inline constexpr const char* kTimelineHeader = "phase,resource,population,walker,iteration,start,end";

inline void write_timeline_csv(std::ostream& os, const std::vector<TimingRecord>& records) {
  os << "# sqd-timeline v1\n" << kTimelineHeader << '\n' << std::setprecision(9) << std::fixed;
  for (const auto& r : records)
    os << to_string(r.phase) << ',' << resource_of(r.phase) << ',' << r.population << ',' << r.walker << ','
       << r.iteration << ',' << r.start << ',' << r.end << '\n';
}

inline nlohmann::json to_json(const TimingRecord& r) {
  return {{"phase", to_string(r.phase)}, {"resource", resource_of(r.phase)}, {"population", r.population},
          {"walker", r.walker},          {"iteration", r.iteration},         {"start", r.start},
          {"end", r.end}};
}

inline TimingRecord timing_record_from_json(const nlohmann::json& j) {
  return {phase_from_string(j.at("phase").get<std::string>()), j.at("population").get<int>(), j.at("walker").get<int>(),
          j.at("iteration").get<int>(), j.at("start").get<double>(), j.at("end").get<double>()};
}

inline nlohmann::json timeline_json(const std::vector<TimingRecord>& records) {
  nlohmann::json j;
  j["schema"] = "sqd-timeline v1";
  j["records"] = nlohmann::json::array();
  for (const auto& r : records) j["records"].push_back(to_json(r));
  j["resources"] = nlohmann::json::array();
  for (const auto& u : resource_usage(records))
    j["resources"].push_back({{"resource", u.resource}, {"busy", u.busy}, {"span", u.span}, {"idle_fraction", u.idle_fraction}});
  return j;
}

/// True when some sampler interval of population `sampler_pop` overlaps a classical interval of `classical_pop`.
inline bool sampler_overlaps_classical(const std::vector<TimingRecord>& records, int sampler_pop, int classical_pop) {
  for (const auto& q : records) {
    if (q.phase != Phase::quantum_execution || q.population != sampler_pop) continue;
    for (const auto& c : records) {
      if (c.population != classical_pop) continue;
      if (c.phase != Phase::preprocessing && c.phase != Phase::diagonalization) continue;
      if (std::min(q.end, c.end) > std::max(q.start, c.start)) return true;
    }
  }
  return false;
}

}  // namespace sqd
