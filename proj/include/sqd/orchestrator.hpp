// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Closed loop with two-population overlap.
 *
 *   launch sampler(0, p) for every population p
 *   for itr in 0 .. MaxItr-1
 *     for p in populations
 *       wait sampler(itr, p)
 *       classical(itr, p): recovery x R, subspace, Davidson, kappa, carryover,
 *                          occupancies, selection, next DE trials
 *       launch sampler(itr + 1, p)
 *     cooperative carryover exchange (from the configured iteration)
 *     checkpoint
 *
 * Sampler calls run on their own threads and share one simulated device, so
 * one population's classical work overlaps the other population's sampling.
 */

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sqd/config.hpp"
#include "sqd/de.hpp"
#include "sqd/extrapolation.hpp"
#include "sqd/integrals.hpp"
#include "sqd/lucj.hpp"
#include "sqd/orbital.hpp"
#include "sqd/parallel/distributed.hpp"
#include "sqd/recovery.hpp"
#include "sqd/sampling.hpp"
#include "sqd/solver.hpp"
#include "sqd/timeline.hpp"
#include "sqd/variance.hpp"

namespace sqd {

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WalkerState {
  /// Accepted LUCJ parameters and the energy they achieved.
  Eigen::VectorXd params;
  double energy = std::numeric_limits<double>::infinity();
  /// Parameters the next sampler call evaluates.
  Eigen::VectorXd trial;
  OrbitalRotation kappa;
  CarryoverSet carryover;
  OccupancyVector occupancies;
  std::vector<double> history;
  /// Last accepted subspace solution, the warm start for the next Davidson solve.
  std::vector<Mask> psi_alpha, psi_beta;
  Eigen::VectorXd psi;
};

struct PopulationState {
  std::vector<WalkerState> walkers;
  /// Carryover received from the other population.
  CarryoverSet shared;
};

struct DeTraceRow {
  int iteration = 0;
  int population = 0;
  int walker = 0;
  double energy = 0.0;
  bool accepted = false;
  double best_energy = 0.0;
  std::string param_hash;
};

struct RunState {
  SystemSpec spec;
  /// Last completed iteration (-1: none).
  int iteration = -1;
  std::vector<PopulationState> populations;
  std::vector<double> best_trace;
  std::vector<DeTraceRow> de_trace;
  std::vector<VariancePoint> variance_points;
  std::vector<TimingRecord> timeline;
  std::string status = "running";

  double best_energy() const {
    double e = std::numeric_limits<double>::infinity();
    for (const auto& p : populations)
      for (const auto& w : p.walkers) e = std::min(e, w.energy);
    return e;
  }
};

/// FNV-1a over the raw bytes of the parameter vector, as 16 hex digits.
inline std::string parameter_hash(const Eigen::VectorXd& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(v.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---- checkpoint serialisation ----

namespace detail {

inline nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json halves_json(const std::vector<Mask>& h, int n) {
  nlohmann::json a = nlohmann::json::array();
  for (Mask m : h) a.push_back(to_bitstring(m, n));
  return a;
}

inline std::vector<Mask> json_halves(const nlohmann::json& j) {
  std::vector<Mask> out;
  for (const auto& s : j) out.push_back(mask_from_bitstring(s.get<std::string>()));
  return out;
}

inline nlohmann::json carryover_json(const CarryoverSet& c, int n) {
  nlohmann::json j{{"iteration", c.iteration}, {"alpha", nlohmann::json::array()}, {"beta", nlohmann::json::array()}};
  for (const auto& e : c.alpha) j["alpha"].push_back({to_bitstring(e.half, n), e.weight});
  for (const auto& e : c.beta) j["beta"].push_back({to_bitstring(e.half, n), e.weight});
  return j;
}

inline CarryoverSet json_carryover(const nlohmann::json& j) {
  CarryoverSet c;
  c.iteration = j.at("iteration").get<int>();
  for (const auto& e : j.at("alpha")) c.alpha.push_back({mask_from_bitstring(e[0].get<std::string>()), e[1].get<double>()});
  for (const auto& e : j.at("beta")) c.beta.push_back({mask_from_bitstring(e[0].get<std::string>()), e[1].get<double>()});
  return c;
}

inline nlohmann::json energy_json(double e) { return std::isfinite(e) ? nlohmann::json(e) : nlohmann::json(nullptr); }
inline double json_energy(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const WalkerState& w, int n) {
  return {{"params", detail::vec_json(w.params)},
          {"energy", detail::energy_json(w.energy)},
          {"trial", detail::vec_json(w.trial)},
          {"kappa", detail::vec_json(w.kappa.to_vector())},
          {"carryover", detail::carryover_json(w.carryover, n)},
          {"occupancies", {{"alpha", detail::vec_json(w.occupancies.alpha)}, {"beta", detail::vec_json(w.occupancies.beta)}}},
          {"history", w.history},
          {"psi", {{"alpha", detail::halves_json(w.psi_alpha, n)},
                   {"beta", detail::halves_json(w.psi_beta, n)},
                   {"values", detail::vec_json(w.psi)}}}};
}

inline WalkerState walker_from_json(const nlohmann::json& j, int n) {
  WalkerState w;
  w.params = detail::json_vec(j.at("params"));
  w.energy = detail::json_energy(j.at("energy"));
  w.trial = detail::json_vec(j.at("trial"));
  w.kappa = OrbitalRotation::from_vector(n, detail::json_vec(j.at("kappa")));
  w.carryover = detail::json_carryover(j.at("carryover"));
  w.occupancies = {detail::json_vec(j.at("occupancies").at("alpha")), detail::json_vec(j.at("occupancies").at("beta"))};
  w.history = j.at("history").get<std::vector<double>>();
  w.psi_alpha = detail::json_halves(j.at("psi").at("alpha"));
  w.psi_beta = detail::json_halves(j.at("psi").at("beta"));
  w.psi = detail::json_vec(j.at("psi").at("values"));
  return w;
}

inline nlohmann::json to_json(const RunState& s) {
  const int n = s.spec.n_orb;
  nlohmann::json j;
  j["schema"] = "sqd-checkpoint v1";
  j["spec"] = {{"n_orb", s.spec.n_orb}, {"n_alpha", s.spec.n_alpha}, {"n_beta", s.spec.n_beta}};
  j["iteration"] = s.iteration;
  j["status"] = s.status;
  j["populations"] = nlohmann::json::array();
  for (const auto& p : s.populations) {
    nlohmann::json pj{{"walkers", nlohmann::json::array()}, {"shared", detail::carryover_json(p.shared, n)}};
    for (const auto& w : p.walkers) pj["walkers"].push_back(to_json(w, n));
    j["populations"].push_back(pj);
  }
  j["best_trace"] = s.best_trace;
  j["de_trace"] = nlohmann::json::array();
  for (const auto& r : s.de_trace)
    j["de_trace"].push_back({r.iteration, r.population, r.walker, r.energy, r.accepted, r.best_energy, r.param_hash});
  j["variance_points"] = nlohmann::json::array();
  for (const auto& v : s.variance_points)
    j["variance_points"].push_back({v.energy, v.variance, v.dimension, v.iteration, v.population, v.walker});
  j["timeline"] = nlohmann::json::array();
  for (const auto& r : s.timeline) j["timeline"].push_back(to_json(r));
  return j;
}

inline RunState run_state_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "sqd-checkpoint v1") throw ParseError("checkpoint: unknown schema");
  RunState s;
  try {
    s.spec = {j.at("spec").at("n_orb").get<int>(), j.at("spec").at("n_alpha").get<int>(), j.at("spec").at("n_beta").get<int>()};
    s.iteration = j.at("iteration").get<int>();
    s.status = j.value("status", "running");
    for (const auto& pj : j.at("populations")) {
      PopulationState p;
      for (const auto& wj : pj.at("walkers")) p.walkers.push_back(walker_from_json(wj, s.spec.n_orb));
      p.shared = detail::json_carryover(pj.at("shared"));
      s.populations.push_back(std::move(p));
    }
    s.best_trace = j.at("best_trace").get<std::vector<double>>();
    for (const auto& r : j.at("de_trace"))
      s.de_trace.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<double>(), r[4].get<bool>(),
                            r[5].get<double>(), r[6].get<std::string>()});
    for (const auto& v : j.at("variance_points"))
      s.variance_points.push_back({v[0].get<double>(), v[1].get<double>(), v[2].get<std::size_t>(), v[3].get<int>(),
                                   v[4].get<int>(), v[5].get<int>()});
    for (const auto& r : j.at("timeline")) s.timeline.push_back(timing_record_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  return s;
}

inline RunState load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.json";
  std::ifstream in(path);
  if (!in) throw ParseError("no checkpoint at " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return run_state_from_json(j);
}

// ---- reports ----

inline void write_de_trace(std::ostream& os, const std::vector<DeTraceRow>& rows) {
  os << "# sqd-de-trace v1\niteration,population,walker,energy,accepted,best_energy,param_hash\n" << std::setprecision(17);
  for (const auto& r : rows)
    os << r.iteration << ',' << r.population << ',' << r.walker << ',' << r.energy << ',' << (r.accepted ? 1 : 0) << ','
       << r.best_energy << ',' << r.param_hash << '\n';
}

/// Classical work of one population never overlaps another's, and sampler(i, p) starts after classical(i-1, p).
inline std::vector<std::string> schedule_violations(const std::vector<TimingRecord>& records) {
  std::vector<std::string> out;
  auto classical = [](const TimingRecord& r) {
    return r.phase == Phase::preprocessing || r.phase == Phase::diagonalization;
  };
  for (const auto& a : records)
    for (const auto& b : records)
      if (classical(a) && classical(b) && a.population < b.population && std::min(a.end, b.end) > std::max(a.start, b.start))
        out.push_back("classical work of populations " + std::to_string(a.population) + " and " +
                      std::to_string(b.population) + " overlaps at iteration " + std::to_string(a.iteration));
  for (const auto& q : records) {
    if (q.iteration == 0 || (q.phase != Phase::quantum_execution && q.phase != Phase::throw_circuit)) continue;
    for (const auto& c : records)
      if (classical(c) && c.population == q.population && c.iteration == q.iteration - 1 && c.end > q.start + 1e-9)
        out.push_back("sampler for iteration " + std::to_string(q.iteration) + " population " +
                      std::to_string(q.population) + " started before the previous classical step ended");
  }
  return out;
}

inline nlohmann::json run_summary(const RunState& s) {
  nlohmann::json j;
  j["schema"] = "sqd-summary v1";
  j["status"] = s.status;
  j["system"] = {{"n_orb", s.spec.n_orb}, {"n_alpha", s.spec.n_alpha}, {"n_beta", s.spec.n_beta}};
  j["iterations_completed"] = s.iteration + 1;
  j["best_energy"] = detail::energy_json(s.best_energy());
  j["initial_best_energy"] = s.best_trace.empty() ? nlohmann::json(nullptr) : nlohmann::json(s.best_trace.front());
  j["best_trace"] = s.best_trace;
  int bp = -1, bw = -1;
  double be = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < s.populations.size(); ++p)
    for (std::size_t w = 0; w < s.populations[p].walkers.size(); ++w)
      if (s.populations[p].walkers[w].energy < be) {
        be = s.populations[p].walkers[w].energy;
        bp = static_cast<int>(p);
        bw = static_cast<int>(w);
      }
  j["best_walker"] = {{"population", bp}, {"walker", bw}};
  j["resources"] = timeline_json(s.timeline)["resources"];
  j["sampler_p1_overlaps_classical_p0"] = sampler_overlaps_classical(s.timeline, 1, 0);
  const auto v = schedule_violations(s.timeline);
  j["schedule_ok"] = v.empty();
  j["schedule_violations"] = v;
  j["extrapolation"] = nullptr;
  try {
    if (s.variance_points.size() >= 2) {
      const auto e = extrapolate_zero_variance(s.variance_points);
      j["extrapolation"] = {{"intercept", e.intercept}, {"sigma", e.sigma}, {"slope", e.slope}, {"points", e.points}};
    }
  } catch (const ContractViolation&) {
  }
  return j;
}

/// Rewrites the CSV/JSON reports of a run directory from its state.
inline void write_run_reports(const std::filesystem::path& dir, const RunState& s) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "de_trace.csv");
    write_de_trace(os, s.de_trace);
  }
  {
    std::ofstream os(dir / "timeline.csv");
    write_timeline_csv(os, s.timeline);
  }
  {
    std::ofstream os(dir / "timeline.json");
    os << timeline_json(s.timeline).dump(1) << '\n';
  }
  {
    std::ofstream os(dir / "variance_points.csv");
    write_variance_points(os, s.variance_points);
  }
  {
    std::ofstream os(dir / "summary.json");
    os << run_summary(s).dump(1) << '\n';
  }
}

// ---- the loop ----

struct RunOptions {
  /// Continue a run directory from its checkpoint.
  std::optional<std::filesystem::path> resume;
  bool echo_log = false;
  /// Cap on worker ranks (0: none).
  int thread_cap = 0;
};

class ClosedLoop {
 public:
  ClosedLoop(RunConfig cfg, RunOptions opts = {}) : cfg_(std::move(cfg)), opts_(std::move(opts)) {
    cfg_.validate();
    auto contents = parse_fcidump(cfg_.fcidump);
    spec_ = contents.spec;
    ints_ = std::make_shared<const MolecularIntegrals>(std::move(contents.integrals));
    dir_ = opts_.resume ? *opts_.resume : cfg_.output_dir;
    partition_ = cap_partition(cfg_.partition, opts_.thread_cap);
  }

  const SystemSpec& spec() const { return spec_; }
  const std::filesystem::path& directory() const { return dir_; }

  RunState run() {
    std::filesystem::create_directories(dir_ / "samples");
    std::filesystem::create_directories(dir_ / "davidson");
    std::filesystem::create_directories(dir_ / "checkpoints");
    log_.open(dir_ / "run.log", std::ios::app);
    initialise_state();
    {
      std::ofstream os(dir_ / "config.json");
      os << to_json(cfg_).dump(1) << '\n';
    }
    clock_ = RunClock(state_.timeline.empty() ? 0.0 : last_time(state_.timeline));
    timing_ = std::make_unique<TimingLog>(clock_);
    timing_->restore(state_.timeline);
    log("run start: " + std::to_string(spec_.n_orb) + " orbitals, " + std::to_string(state_.populations.size()) +
        " populations x " + std::to_string(cfg_.de.walkers) + " walkers, iterations " +
        std::to_string(state_.iteration + 1) + ".." + std::to_string(cfg_.max_iterations - 1));

    const int P = static_cast<int>(state_.populations.size());
    const int first = state_.iteration + 1;
    std::vector<std::future<std::vector<SampleBatch>>> pending(static_cast<std::size_t>(P));
    cancel_.store(false);
    auto cancel_all = [&] {
      cancel_.store(true);
      for (auto& f : pending)
        if (f.valid()) {
          try {
            f.get();
          } catch (...) {
          }
        }
    };
    if (first < cfg_.max_iterations)
      for (int p = 0; p < P; ++p) pending[static_cast<std::size_t>(p)] = launch_sampler(first, p);

    try {
      for (int itr = first; itr < cfg_.max_iterations; ++itr) {
        for (int p = 0; p < P; ++p) {
          auto batches = pending[static_cast<std::size_t>(p)].get();
          run_classical(itr, p, batches);
          if (itr + 1 < cfg_.max_iterations) pending[static_cast<std::size_t>(p)] = launch_sampler(itr + 1, p);
        }
        if (cfg_.cooperative_start >= 0 && itr >= cfg_.cooperative_start && P > 1) exchange_carryover(itr);
        state_.best_trace.push_back(state_.best_energy());
        state_.iteration = itr;
        checkpoint();
        log("iteration " + std::to_string(itr) + " best " + format_energy(state_.best_energy()));
        if (cfg_.wall_clock_s && clock_.now() > *cfg_.wall_clock_s && itr + 1 < cfg_.max_iterations) {
          log("wall-clock limit reached after iteration " + std::to_string(itr));
          state_.status = "wall-clock";
          cancel_all();
          break;
        }
      }
    } catch (const std::exception& e) {
      log(std::string("abort: ") + e.what());
      cancel_all();
      state_.status = "aborted";
      checkpoint();
      state_.timeline = timing_->records();
      write_run_reports(dir_, state_);
      throw;
    }
    if (state_.status == "running") state_.status = "completed";
    state_.timeline = timing_->records();
    checkpoint();
    write_run_reports(dir_, state_);
    log("run " + state_.status + ": best " + format_energy(state_.best_energy()));
    return state_;
  }

 private:
  RunConfig cfg_;
  RunOptions opts_;
  SystemSpec spec_;
  std::shared_ptr<const MolecularIntegrals> ints_;
  std::filesystem::path dir_;
  PartitionConfig partition_;
  RunState state_;
  RunClock clock_;
  std::unique_ptr<TimingLog> timing_;
  std::atomic<bool> cancel_{false};
  std::mutex device_;
  std::mutex log_mu_;
  std::ofstream log_;
  std::atomic<int> attempts_{0};

  static double last_time(const std::vector<TimingRecord>& r) {
    double t = 0.0;
    for (const auto& x : r) t = std::max(t, x.end);
    return t;
  }

  static std::string format_energy(double e) {
    std::ostringstream os;
    os << std::setprecision(12) << e;
    return os.str();
  }

  void log(const std::string& msg) {
    std::lock_guard lock(log_mu_);
    std::ostringstream line;
    line << '[' << std::fixed << std::setprecision(3) << clock_.now() << "s] " << msg << '\n';
    log_ << line.str() << std::flush;
    if (opts_.echo_log) std::clog << line.str();
  }

  std::string tag(int itr, int p, int w) const {
    return "i" + std::to_string(itr) + "_p" + std::to_string(p) + "_w" + std::to_string(w);
  }

  void check_spec(const RunState& s, const std::string& what) const {
    if (!(s.spec == spec_))
      throw ContractViolation(what + " is for (" + std::to_string(s.spec.n_orb) + "," + std::to_string(s.spec.n_alpha) + "," +
                              std::to_string(s.spec.n_beta) + "), config system is (" + std::to_string(spec_.n_orb) + "," +
                              std::to_string(spec_.n_alpha) + "," + std::to_string(spec_.n_beta) + ")");
    if (static_cast<int>(s.populations.size()) != cfg_.de.populations)
      throw ContractViolation(what + " has " + std::to_string(s.populations.size()) + " populations, config asks for " +
                              std::to_string(cfg_.de.populations));
    for (const auto& p : s.populations)
      if (static_cast<int>(p.walkers.size()) != cfg_.de.walkers)
        throw ContractViolation(what + " has " + std::to_string(p.walkers.size()) + " walkers per population, config asks for " +
                                std::to_string(cfg_.de.walkers));
  }

  void initialise_state() {
    if (opts_.resume) {
      state_ = load_checkpoint(*opts_.resume);
      check_spec(state_, "checkpoint");
      state_.status = "running";
      return;
    }
    state_ = RunState{};
    state_.spec = spec_;
    if (cfg_.warm_start) {
      const auto prior = load_checkpoint(*cfg_.warm_start);
      check_spec(prior, "warm-start checkpoint");
      state_.populations = prior.populations;
      log("warm start from " + cfg_.warm_start->string());
      return;
    }
    const auto occ = cfg_.occupancies ? read_occupancies(*cfg_.occupancies) : hf_occupancies(spec_);
    require(occ.n_orb() == spec_.n_orb, "occupancy file does not match the system");
    LucjParameters base;
    if (cfg_.sampler.init != InitMode::random) base = load_lucj_parameters(cfg_.sampler.params);
    for (int p = 0; p < cfg_.de.populations; ++p) {
      PopulationState pop;
      for (int w = 0; w < cfg_.de.walkers; ++w) {
        WalkerState ws;
        const auto params = init_parameters(cfg_.sampler.init, cfg_.sampler.magnitude,
                                            derive_seed({cfg_.seed, 0x1417, static_cast<std::uint64_t>(p),
                                                         static_cast<std::uint64_t>(w)}),
                                            base, spec_.n_orb, cfg_.sampler.layers);
        require(params.n_orb == spec_.n_orb || params.layers.empty(), "LUCJ parameters do not match the system");
        ws.params = params.to_vector();
        ws.trial = ws.params;
        ws.kappa = OrbitalRotation(spec_.n_orb);
        ws.occupancies = occ;
        pop.walkers.push_back(std::move(ws));
      }
      state_.populations.push_back(std::move(pop));
    }
  }

  // ---- sampler ----

  std::future<std::vector<SampleBatch>> launch_sampler(int itr, int p) {
    std::vector<Eigen::VectorXd> trials;
    for (const auto& w : state_.populations[static_cast<std::size_t>(p)].walkers) trials.push_back(w.trial);
    return std::async(std::launch::async, [this, itr, p, trials = std::move(trials)] { return run_sampler(itr, p, trials); });
  }

  std::vector<SampleBatch> run_sampler(int itr, int p, const std::vector<Eigen::VectorXd>& trials) {
    std::vector<SampleBatch> out;
    for (std::size_t w = 0; w < trials.size(); ++w) {
      for (int attempt = 0;; ++attempt) {
        try {
          out.push_back(sample_walker(itr, p, static_cast<int>(w), trials[w]));
          break;
        } catch (const CancelledError&) {
          throw;
        } catch (const std::exception& e) {
          if (attempt >= cfg_.sampler.max_retries)
            throw SamplerError("sampler for " + tag(itr, p, static_cast<int>(w)) + " failed after " +
                               std::to_string(attempt + 1) + " attempts: " + e.what());
          const int backoff = cfg_.sampler.retry_backoff_ms << attempt;
          log("sampler " + tag(itr, p, static_cast<int>(w)) + " attempt " + std::to_string(attempt + 1) + " failed (" +
              e.what() + "), retrying in " + std::to_string(backoff) + " ms");
          std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        }
      }
    }
    return out;
  }

  SampleBatch sample_walker(int itr, int p, int w, const Eigen::VectorXd& trial) {
    if (cancel_.load()) throw CancelledError("sampler cancelled");
    const auto params = LucjParameters::from_vector(spec_.n_orb, trial);
    auto state = timing_->timed(Phase::throw_circuit, p, w, itr, [&] {
      return lucj_state(params, spec_, hf_configuration(spec_));
    });
    SampleBatch batch;
    {
      std::lock_guard device(device_);
      if (attempts_.fetch_add(1) < cfg_.sampler.fail_attempts) throw SamplerError("injected sampler fault");
      timing_->timed(Phase::quantum_execution, p, w, itr, [&] {
        const double t0 = clock_.now();
        const auto us = static_cast<std::uint64_t>(itr) , ps = static_cast<std::uint64_t>(p), ws = static_cast<std::uint64_t>(w);
        auto ideal = sample_counts(state, cfg_.sampler.shots, derive_seed({cfg_.seed, 0x5a, us, ps, ws}), &cancel_);
        batch = apply_noise(ideal, cfg_.sampler.noise, derive_seed({cfg_.seed, 0xf1, us, ps, ws}));
        const double until = t0 + static_cast<double>(cfg_.sampler.shots) * cfg_.sampler.shot_time_us * 1e-6;
        while (clock_.now() < until) {
          if (cancel_.load()) throw CancelledError("sampler cancelled");
          std::this_thread::sleep_for(std::chrono::microseconds(
              std::min<std::int64_t>(2000, static_cast<std::int64_t>((until - clock_.now()) * 1e6) + 1)));
        }
        batch.start = t0;
        batch.end = clock_.now();
        return 0;
      });
    }
    return timing_->timed(Phase::retrieve, p, w, itr, [&] {
      const auto path = dir_ / "samples" / (tag(itr, p, w) + ".txt");
      write_samples(path, batch);
      std::ifstream in(path);
      auto back = read_samples(in, spec_.n_orb, path.string());
      back.provenance = Provenance::noisy;
      back.start = batch.start;
      back.end = batch.end;
      return back;
    });
  }

  // ---- classical ----

  struct Evaluation {
    double energy = 0.0;
    OrbitalRotation kappa;
    CarryoverSet carryover;
    OccupancyVector occupancies;
    SubspaceBasis basis;
    CIVector psi;
    nlohmann::json reports = nlohmann::json::array();
    std::optional<VariancePoint> variance;
  };

  SubspaceSolution solve(const SubspaceBasis& basis, std::shared_ptr<const MolecularIntegrals> ints,
                         const std::optional<CIVector>& guess) {
    DavidsonOptions opts;
    opts.tolerance = cfg_.davidson.tolerance;
    opts.max_iterations = cfg_.davidson.max_iterations;
    if (cfg_.davidson.wall_clock_s) opts.wall_clock_limit = std::chrono::duration<double>(*cfg_.davidson.wall_clock_s);
    const ProjectedHamiltonian ham(basis, std::move(ints));
    if (partition_.rank_count() == 1) return solve_subspace(ham, opts, guess);
    const int ba = std::min<int>(partition_.b_alpha, static_cast<int>(basis.alpha_size()));
    const int bb = std::min<int>(partition_.b_beta, static_cast<int>(basis.beta_size()));
    const int m = std::max(1, std::min<int>(partition_.m, static_cast<int>(basis.alpha_size()) / ba));
    parallel::DistributedOptions dopts;
    dopts.balance = partition_.balance;
    const auto plan = parallel::plan_partition(basis.alpha_size(), basis.beta_size(), ba, bb, partition_.t, m);
    return solve_subspace(ham, opts, guess, parallel::distributed_operator(ham, plan, dopts));
  }

  Evaluation evaluate(int itr, int p, int w, const WalkerState& ws, const SampleBatch& noisy) {
    const auto u = [](int x) { return static_cast<std::uint64_t>(x); };
    Evaluation ev;
    OrbitalRotation kappa = cfg_.orbital.persist_kappa && ws.kappa.n_orb() == spec_.n_orb ? ws.kappa : OrbitalRotation(spec_.n_orb);
    auto rotated = std::make_shared<const MolecularIntegrals>(transform_integrals(*ints_, kappa));
    OccupancyVector occ = ws.occupancies;
    CarryoverSet carry = ws.carryover;
    const auto& shared = state_.populations[static_cast<std::size_t>(p)].shared;
    carry.alpha.insert(carry.alpha.end(), shared.alpha.begin(), shared.alpha.end());
    carry.beta.insert(carry.beta.end(), shared.beta.begin(), shared.beta.end());
    std::optional<SubspaceBasis> prev_basis;
    std::optional<CIVector> prev_psi;
    if (ws.psi.size() > 0) {
      prev_basis = SubspaceBasis(spec_, ws.psi_alpha, ws.psi_beta);
      prev_psi = CIVector(*prev_basis, ws.psi);
    }
    SubspaceSolution sol;
    for (int r = 0; r < cfg_.recovery_rounds; ++r) {
      const auto basis = timing_->timed(Phase::preprocessing, p, w, itr, [&] {
        const auto rec = recover_configurations(noisy, occ, spec_, derive_seed({cfg_.seed, 0xec, u(itr), u(p), u(w), u(r)}),
                                                cfg_.recovery_floor);
        const auto sel = subsample(rec, cfg_.subsample, derive_seed({cfg_.seed, 0x55, u(itr), u(p), u(w), u(r)}));
        return build_subspace(sel, carry, spec_, cfg_.spin_symmetric);
      });
      timing_->timed(Phase::diagonalization, p, w, itr, [&] {
        std::optional<CIVector> guess;
        if (prev_psi) guess = project_onto(*prev_basis, *prev_psi, basis);
        sol = solve(basis, rotated, guess);
        ev.reports.push_back(to_json(sol.report, basis.dimension()));
        if (r + 1 == cfg_.recovery_rounds && cfg_.orbital.enabled) {
          for (int k = 0; k < cfg_.orbital.rounds; ++k) {
            LbfgsOptions lo;
            lo.max_iterations = cfg_.orbital.max_iterations;
            lo.gradient_tolerance = cfg_.orbital.gradient_tolerance;
            const auto opt = optimize_orbitals(basis, sol.vector, ints_, kappa, lo);
            kappa = opt.rotation;
            rotated = std::make_shared<const MolecularIntegrals>(transform_integrals(*ints_, kappa));
            sol = solve(basis, rotated, sol.vector);
            auto rep = to_json(sol.report, basis.dimension());
            rep["orbital_energy"] = opt.energy;
            rep["orbital_iterations"] = opt.lbfgs.iterations;
            ev.reports.push_back(rep);
          }
        }
        occ = update_occupancies(basis, sol.vector);
        return 0;
      });
      prev_basis = basis;
      prev_psi = sol.vector;
    }
    ev.energy = sol.report.energy;
    ev.kappa = kappa;
    ev.occupancies = occ;
    ev.basis = *prev_basis;
    ev.psi = sol.vector;
    ev.carryover = select_carryover(ev.basis, ev.psi, cfg_.carryover_ratio, itr);
    if (cfg_.compute_variance) {
      timing_->timed(Phase::diagonalization, p, w, itr, [&] {
        const auto v = energy_variance(ev.basis, ev.psi, *rotated);
        ev.variance = VariancePoint{v.energy, std::max(0.0, v.variance), ev.basis.dimension(), itr, p, w};
        return 0;
      });
    }
    return ev;
  }

  void run_classical(int itr, int p, const std::vector<SampleBatch>& batches) {
    auto& pop = state_.populations[static_cast<std::size_t>(p)];
    for (std::size_t w = 0; w < pop.walkers.size(); ++w) {
      auto& ws = pop.walkers[w];
      const int wi = static_cast<int>(w);
      auto ev = evaluate(itr, p, wi, ws, batches[w]);
      {
        std::ofstream os(dir_ / "davidson" / (tag(itr, p, wi) + ".json"));
        nlohmann::json j{{"iteration", itr}, {"population", p}, {"walker", wi}, {"solves", ev.reports}};
        j["dimension"] = ev.basis.dimension();
        if (ev.basis.alpha_size() <= 4096) {
          j["alpha_halves"] = detail::halves_json(ev.basis.alpha(), spec_.n_orb);
          j["beta_halves"] = detail::halves_json(ev.basis.beta(), spec_.n_orb);
        }
        os << j.dump(1) << '\n';
      }
      const bool accepted = ev.energy < ws.energy;
      ws.history.push_back(ev.energy);
      if (accepted) {
        ws.params = ws.trial;
        ws.energy = ev.energy;
        ws.kappa = ev.kappa;
        ws.carryover = ev.carryover;
        ws.occupancies = ev.occupancies;
        ws.psi_alpha = ev.basis.alpha();
        ws.psi_beta = ev.basis.beta();
        ws.psi = ev.psi.values;
      }
      state_.de_trace.push_back({itr, p, wi, ev.energy, accepted, ws.energy, parameter_hash(ws.trial)});
      if (ev.variance) state_.variance_points.push_back(*ev.variance);
      log("  " + tag(itr, p, wi) + " E=" + format_energy(ev.energy) + " dim=" + std::to_string(ev.basis.dimension()) +
          (accepted ? " accepted" : " rejected"));
    }
    // next trials
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> es;
    for (const auto& ws : pop.walkers) {
      xs.push_back(ws.params);
      es.push_back(ws.energy);
    }
    if (xs.size() >= 2 && xs.front().size() > 0) {
      const auto trials = de_step(xs, es, cfg_.de, derive_seed({cfg_.seed, 0xde, static_cast<std::uint64_t>(itr),
                                                               static_cast<std::uint64_t>(p)}));
      for (std::size_t w = 0; w < pop.walkers.size(); ++w) pop.walkers[w].trial = trials[w];
    } else {
      for (auto& ws : pop.walkers) ws.trial = ws.params;
    }
  }

  /// Population p receives the carryover of the best walker of population p - 1.
  void exchange_carryover(int itr) {
    const auto P = state_.populations.size();
    std::vector<CarryoverSet> best(P);
    for (std::size_t p = 0; p < P; ++p) {
      const auto& ws = state_.populations[p].walkers;
      std::size_t b = 0;
      for (std::size_t w = 1; w < ws.size(); ++w)
        if (ws[w].energy < ws[b].energy) b = w;
      best[p] = ws[b].carryover;
    }
    for (std::size_t p = 0; p < P; ++p) {
      state_.populations[p].shared = best[(p + P - 1) % P];
      state_.populations[p].shared.iteration = itr;
    }
    log("cooperative carryover exchange after iteration " + std::to_string(itr));
  }

  void checkpoint() {
    // in-flight sampler records of the next iteration are replayed on resume
    state_.timeline.clear();
    for (const auto& r : timing_->records())
      if (r.iteration <= state_.iteration) state_.timeline.push_back(r);
    const auto j = to_json(state_).dump();
    const auto tmp = dir_ / "checkpoint.json.tmp";
    {
      std::ofstream os(tmp);
      os << j << '\n';
    }
    std::filesystem::rename(tmp, dir_ / "checkpoint.json");
    if (state_.iteration >= 0) {
      std::ostringstream name;
      name << "iter_" << std::setw(4) << std::setfill('0') << state_.iteration << ".json";
      std::ofstream os(dir_ / "checkpoints" / name.str());
      os << j << '\n';
    }
  }
};

inline RunState run_closed_loop(const RunConfig& cfg, RunOptions opts = {}) { return ClosedLoop(cfg, std::move(opts)).run(); }

}  // namespace sqd
