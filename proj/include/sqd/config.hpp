// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration for the closed loop, loaded from JSON.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "sqd/de.hpp"
#include "sqd/error.hpp"
#include "sqd/lucj.hpp"

namespace sqd {

struct SamplerConfig {
  std::uint64_t shots = 10'000;
  double noise = 0.01;
  InitMode init = InitMode::random;
  std::filesystem::path params;
  double magnitude = 0.05;
  int layers = 1;
  /// Simulated hardware time per shot; the execution interval lasts at least shots * shot_time.
  double shot_time_us = 10.0;
  int max_retries = 2;
  int retry_backoff_ms = 20;
  /// Fault injection: the first n sampler attempts of the run fail.
  int fail_attempts = 0;
};

struct OrbitalConfig {
  bool enabled = true;
  int rounds = 1;
  int max_iterations = 1000;
  double gradient_tolerance = 1e-6;
  /// Start each evaluation from the walker's previous kappa (false: from kappa = 0).
  bool persist_kappa = true;
};

struct DavidsonConfig {
  double tolerance = 1e-3;
  int max_iterations = 10;
  std::optional<double> wall_clock_s;
};

struct PartitionConfig {
  int b_alpha = 1;
  int b_beta = 1;
  int t = 1;
  int m = 1;
  bool balance = true;

  int rank_count() const { return b_alpha * b_beta * t * m; }
};

struct RunConfig {
  std::filesystem::path fcidump;
  std::filesystem::path output_dir = "sqd-run";
  std::optional<std::filesystem::path> occupancies;
  std::optional<std::filesystem::path> warm_start;
  std::uint64_t seed = 1;
  int max_iterations = 10;
  SamplerConfig sampler;
  std::size_t subsample = 1000;
  int recovery_rounds = 1;
  double recovery_floor = 1e-6;
  double carryover_ratio = 0.5;
  bool spin_symmetric = true;
  DEConfig de;
  OrbitalConfig orbital;
  DavidsonConfig davidson;
  PartitionConfig partition;
  /// First iteration of the cooperative carryover exchange; negative disables it.
  int cooperative_start = -1;
  std::optional<double> wall_clock_s;
  bool compute_variance = true;

  void validate() const {
    require(!fcidump.empty(), "config: fcidump is required");
    require(std::filesystem::exists(fcidump), "config: fcidump " + fcidump.string() + " does not exist");
    if (occupancies)
      require(std::filesystem::exists(*occupancies), "config: occupancies " + occupancies->string() + " does not exist");
    if (warm_start)
      require(std::filesystem::exists(*warm_start / "checkpoint.json"),
              "config: warm_start directory " + warm_start->string() + " has no checkpoint.json");
    if (sampler.init != InitMode::random)
      require(std::filesystem::exists(sampler.params), "config: sampler.params " + sampler.params.string() + " does not exist");
    require(max_iterations >= 0, "config: max_iterations must be >= 0");
    require(sampler.shots > 0, "config: sampler.shots must be positive");
    require(sampler.noise >= 0.0 && sampler.noise <= 1.0, "config: sampler.noise must lie in [0, 1]");
    require(sampler.magnitude >= 0.0, "config: sampler.magnitude must be >= 0");
    require(sampler.layers >= 0, "config: sampler.layers must be >= 0");
    require(sampler.shot_time_us >= 0.0, "config: sampler.shot_time_us must be >= 0");
    require(sampler.max_retries >= 0 && sampler.retry_backoff_ms >= 0, "config: sampler retry settings must be >= 0");
    require(subsample > 0, "config: subsample must be positive");
    require(recovery_rounds >= 1, "config: recovery_rounds must be >= 1");
    require(recovery_floor >= 0.0, "config: recovery_floor must be >= 0");
    require(carryover_ratio >= 0.0 && carryover_ratio <= 1.0, "config: carryover_ratio must lie in [0, 1]");
    de.validate();
    require(orbital.rounds >= 0 && orbital.max_iterations >= 0, "config: orbital settings must be >= 0");
    require(davidson.tolerance > 0.0 && davidson.max_iterations >= 1, "config: invalid davidson settings");
    require(partition.b_alpha >= 1 && partition.b_beta >= 1 && partition.t >= 1 && partition.m >= 1,
            "config: partition sizes must be >= 1");
  }
};

namespace detail {

inline InitMode init_mode_from_string(const std::string& s) {
  if (s == "random") return InitMode::random;
  if (s == "file") return InitMode::file;
  if (s == "perturbed_file") return InitMode::perturbed_file;
  throw ParseError("config: unknown sampler.init '" + s + "' (expected random, file or perturbed_file)");
}

inline const char* to_string(InitMode m) {
  switch (m) {
    case InitMode::random: return "random";
    case InitMode::file: return "file";
    case InitMode::perturbed_file: return "perturbed_file";
  }
  return "?";
}

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.empty() || path.is_absolute() ? path : base / path;
}

}  // namespace detail

/// Relative paths are resolved against `base` (the config file's directory).
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = ".") {
  static const char* kKeys[] = {"fcidump", "output_dir", "occupancies", "warm_start", "seed", "max_iterations", "sampler",
                                "subsample", "recovery_rounds", "recovery_floor", "carryover_ratio", "spin_symmetric",
                                "de", "orbital", "davidson", "partition", "cooperative_start", "wall_clock_s",
                                "compute_variance"};
  require(j.is_object(), "config: top level must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : kKeys) known = known || k == key;
    if (!known) throw ParseError("config: unknown key '" + k + "'");
  }
  RunConfig c;
  try {
    c.fcidump = detail::resolve(base, j.at("fcidump").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = detail::resolve(base, j.at("output_dir").get<std::string>());
    if (j.contains("occupancies") && !j["occupancies"].is_null())
      c.occupancies = detail::resolve(base, j["occupancies"].get<std::string>());
    if (j.contains("warm_start") && !j["warm_start"].is_null())
      c.warm_start = detail::resolve(base, j["warm_start"].get<std::string>());
    detail::get_if(j, "seed", c.seed);
    detail::get_if(j, "max_iterations", c.max_iterations);
    detail::get_if(j, "subsample", c.subsample);
    detail::get_if(j, "recovery_rounds", c.recovery_rounds);
    detail::get_if(j, "recovery_floor", c.recovery_floor);
    detail::get_if(j, "carryover_ratio", c.carryover_ratio);
    detail::get_if(j, "spin_symmetric", c.spin_symmetric);
    detail::get_if(j, "cooperative_start", c.cooperative_start);
    detail::get_if(j, "compute_variance", c.compute_variance);
    if (j.contains("wall_clock_s") && !j["wall_clock_s"].is_null()) c.wall_clock_s = j["wall_clock_s"].get<double>();
    if (j.contains("sampler")) {
      const auto& s = j["sampler"];
      detail::get_if(s, "shots", c.sampler.shots);
      detail::get_if(s, "noise", c.sampler.noise);
      if (s.contains("init")) c.sampler.init = detail::init_mode_from_string(s["init"].get<std::string>());
      if (s.contains("params") && !s["params"].is_null()) c.sampler.params = detail::resolve(base, s["params"].get<std::string>());
      detail::get_if(s, "magnitude", c.sampler.magnitude);
      detail::get_if(s, "layers", c.sampler.layers);
      detail::get_if(s, "shot_time_us", c.sampler.shot_time_us);
      detail::get_if(s, "max_retries", c.sampler.max_retries);
      detail::get_if(s, "retry_backoff_ms", c.sampler.retry_backoff_ms);
      detail::get_if(s, "fail_attempts", c.sampler.fail_attempts);
    }
    if (j.contains("de")) {
      const auto& d = j["de"];
      detail::get_if(d, "populations", c.de.populations);
      detail::get_if(d, "walkers", c.de.walkers);
      detail::get_if(d, "F", c.de.F);
      detail::get_if(d, "CR", c.de.CR);
      if (d.contains("index_mode")) c.de.index_mode = index_mode_from_string(d["index_mode"].get<std::string>());
      if (d.contains("bounds") && !d["bounds"].is_null()) {
        const auto b = d["bounds"].get<std::vector<double>>();
        if (b.size() != 2) throw ParseError("config: de.bounds must be [lo, hi]");
        c.de.bounds = std::make_pair(b[0], b[1]);
      }
    }
    if (j.contains("orbital")) {
      const auto& o = j["orbital"];
      detail::get_if(o, "enabled", c.orbital.enabled);
      detail::get_if(o, "rounds", c.orbital.rounds);
      detail::get_if(o, "max_iterations", c.orbital.max_iterations);
      detail::get_if(o, "gradient_tolerance", c.orbital.gradient_tolerance);
      detail::get_if(o, "persist_kappa", c.orbital.persist_kappa);
    }
    if (j.contains("davidson")) {
      const auto& d = j["davidson"];
      detail::get_if(d, "tolerance", c.davidson.tolerance);
      detail::get_if(d, "max_iterations", c.davidson.max_iterations);
      if (d.contains("wall_clock_s") && !d["wall_clock_s"].is_null()) c.davidson.wall_clock_s = d["wall_clock_s"].get<double>();
    }
    if (j.contains("partition")) {
      const auto& p = j["partition"];
      detail::get_if(p, "b_alpha", c.partition.b_alpha);
      detail::get_if(p, "b_beta", c.partition.b_beta);
      detail::get_if(p, "t", c.partition.t);
      detail::get_if(p, "m", c.partition.m);
      detail::get_if(p, "balance", c.partition.balance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["fcidump"] = c.fcidump.string();
  j["output_dir"] = c.output_dir.string();
  j["occupancies"] = c.occupancies ? nlohmann::json(c.occupancies->string()) : nlohmann::json(nullptr);
  j["warm_start"] = c.warm_start ? nlohmann::json(c.warm_start->string()) : nlohmann::json(nullptr);
  j["seed"] = c.seed;
  j["max_iterations"] = c.max_iterations;
  j["sampler"] = {{"shots", c.sampler.shots},
                  {"noise", c.sampler.noise},
                  {"init", detail::to_string(c.sampler.init)},
                  {"params", c.sampler.params.string()},
                  {"magnitude", c.sampler.magnitude},
                  {"layers", c.sampler.layers},
                  {"shot_time_us", c.sampler.shot_time_us},
                  {"max_retries", c.sampler.max_retries},
                  {"retry_backoff_ms", c.sampler.retry_backoff_ms},
                  {"fail_attempts", c.sampler.fail_attempts}};
  j["subsample"] = c.subsample;
  j["recovery_rounds"] = c.recovery_rounds;
  j["recovery_floor"] = c.recovery_floor;
  j["carryover_ratio"] = c.carryover_ratio;
  j["spin_symmetric"] = c.spin_symmetric;
  j["de"] = {{"populations", c.de.populations}, {"walkers", c.de.walkers}, {"F", c.de.F}, {"CR", c.de.CR},
             {"index_mode", to_string(c.de.index_mode)}};
  j["de"]["bounds"] = c.de.bounds ? nlohmann::json({c.de.bounds->first, c.de.bounds->second}) : nlohmann::json(nullptr);
  j["orbital"] = {{"enabled", c.orbital.enabled},
                  {"rounds", c.orbital.rounds},
                  {"max_iterations", c.orbital.max_iterations},
                  {"gradient_tolerance", c.orbital.gradient_tolerance},
                  {"persist_kappa", c.orbital.persist_kappa}};
  j["davidson"] = {{"tolerance", c.davidson.tolerance}, {"max_iterations", c.davidson.max_iterations}};
  j["davidson"]["wall_clock_s"] = c.davidson.wall_clock_s ? nlohmann::json(*c.davidson.wall_clock_s) : nlohmann::json(nullptr);
  j["partition"] = {{"b_alpha", c.partition.b_alpha}, {"b_beta", c.partition.b_beta}, {"t", c.partition.t},
                    {"m", c.partition.m}, {"balance", c.partition.balance}};
  j["cooperative_start"] = c.cooperative_start;
  j["wall_clock_s"] = c.wall_clock_s ? nlohmann::json(*c.wall_clock_s) : nlohmann::json(nullptr);
  j["compute_variance"] = c.compute_variance;
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  auto c = run_config_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  c.validate();
  return c;
}

/// Rank cap from SQD_THREADS (unset or invalid: no cap).
inline int thread_cap_from_env() {
  const char* v = std::getenv("SQD_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ContractViolation(std::string("SQD_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<int>(n);
}

/// Shrinks t, then m, then b_beta, then b_alpha (halving) until the rank count fits `cap`.
inline PartitionConfig cap_partition(PartitionConfig p, int cap) {
  if (cap <= 0) return p;
  while (p.rank_count() > cap) {
    if (p.t > 1) p.t /= 2;
    else if (p.m > 1) p.m /= 2;
    else if (p.b_beta > 1) p.b_beta /= 2;
    else p.b_alpha /= 2;
  }
  return p;
}

}  // namespace sqd
