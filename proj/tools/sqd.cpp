// SPDX-License-Identifier: Apache-2.0
// sqd: command-line front end for the sample-based diagonalization workflow.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "sqd/config.hpp"
#include "sqd/extrapolation.hpp"
#include "sqd/integrals.hpp"
#include "sqd/lucj.hpp"
#include "sqd/orchestrator.hpp"
#include "sqd/parallel/distributed.hpp"
#include "sqd/parallel/scaling.hpp"
#include "sqd/recovery.hpp"
#include "sqd/sampling.hpp"
#include "sqd/solver.hpp"
#include "sqd/variance.hpp"

using namespace sqd;
using namespace sqd::parallel;

namespace {

/// One configuration per line, `<alpha bits><beta bits>` with an optional trailing count.
std::vector<Configuration> read_basis_file(const std::string& path, int n_orb) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open basis file " + path);
  std::vector<Configuration> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    std::istringstream ls(line);
    std::string bits;
    if (!(ls >> bits) || bits[0] == '#') continue;
    try {
      out.push_back(configuration_from_bitstring(bits, n_orb));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw ParseError(path + ": no configurations");
  return out;
}

std::vector<int> parse_list(const std::string& s) {
  std::vector<int> v;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) v.push_back(std::stoi(tok));
  return v;
}

int cmd_run(const std::string& config_path, const std::string& resume, int max_iterations, const std::string& index_mode,
            bool verbose) {
  auto cfg = load_run_config(config_path);
  if (max_iterations >= 0) cfg.max_iterations = max_iterations;
  if (!index_mode.empty()) cfg.de.index_mode = index_mode_from_string(index_mode);
  RunOptions opts;
  if (!resume.empty()) opts.resume = resume;
  opts.echo_log = verbose;
  opts.thread_cap = thread_cap_from_env();
  const auto state = run_closed_loop(cfg, opts);
  std::cout << std::setprecision(12) << "status " << state.status << "\nbest_energy " << state.best_energy()
            << "\niterations " << state.iteration + 1 << "\nrun_dir " << (opts.resume ? *opts.resume : cfg.output_dir).string()
            << '\n';
  return 0;
}

int cmd_diagonalize(const std::string& fcidump, const std::string& basis_path, double tol, int max_iter,
                    const std::string& partition, bool asymmetric, bool variance, const std::string& json_out) {
  auto c = parse_fcidump(fcidump);
  auto ints = std::make_shared<const MolecularIntegrals>(std::move(c.integrals));
  const SubspaceBasis basis = basis_path.empty()
                                  ? SubspaceBasis::full(c.spec)
                                  : build_subspace(read_basis_file(basis_path, c.spec.n_orb), {}, c.spec,
                                                   !asymmetric && c.spec.n_alpha == c.spec.n_beta);
  DavidsonOptions opts;
  opts.tolerance = tol;
  opts.max_iterations = max_iter;
  const ProjectedHamiltonian ham(basis, ints);
  SubspaceSolution sol;
  if (partition.empty()) {
    sol = solve_subspace(ham, opts);
  } else {
    const auto f = parse_list(partition);
    if (f.size() != 4) throw ContractViolation("--partition expects b_alpha,b_beta,t,m");
    auto pc = cap_partition({f[0], f[1], f[2], f[3], true}, thread_cap_from_env());
    const auto plan = plan_partition(basis.alpha_size(), basis.beta_size(), pc.b_alpha, pc.b_beta, pc.t, pc.m);
    sol = solve_subspace(ham, opts, std::nullopt, distributed_operator(ham, plan));
  }
  auto j = to_json(sol.report, basis.dimension());
  if (variance) j["variance"] = energy_variance(basis, sol.vector, *ints).variance;
  std::cout << j.dump(1) << '\n';
  if (!json_out.empty()) {
    std::ofstream os(json_out);
    if (!os) throw ParseError("cannot write " + json_out);
    os << j.dump(1) << '\n';
  }
  return 0;
}

int cmd_sample(const std::string& params_path, const std::string& fcidump, int n_orb, int n_alpha, int n_beta,
               std::uint64_t shots, double noise, std::uint64_t seed, const std::string& out) {
  const auto params = load_lucj_parameters(params_path);
  SystemSpec spec{n_orb > 0 ? n_orb : params.n_orb, n_alpha, n_beta};
  if (!fcidump.empty()) spec = parse_fcidump(fcidump).spec;
  const auto state = lucj_state(params, spec, hf_configuration(spec));
  auto batch = sample_counts(state, shots, derive_seed({seed, 0x5a}));
  batch = apply_noise(batch, noise, derive_seed({seed, 0xf1}));
  if (out.empty()) write_samples(std::cout, batch);
  else write_samples(std::filesystem::path(out), batch);
  return 0;
}

int cmd_bench(const ScalingProblem& problem, const std::string& ranks, std::size_t plans, int reps, bool no_balance,
              const std::string& out) {
  ScalingOptions opts;
  opts.rank_counts = parse_list(ranks);
  if (const int cap = thread_cap_from_env(); cap > 0)
    std::erase_if(opts.rank_counts, [cap](int r) { return r > cap; });
  opts.plans_per_count = plans;
  opts.repetitions = reps;
  opts.balance = !no_balance;
  const auto records = scaling_benchmark(problem, opts);
  if (out.empty()) {
    write_scaling_csv(std::cout, records);
  } else {
    std::ofstream os(out);
    if (!os) throw ParseError("cannot write " + out);
    write_scaling_csv(os, records);
  }
  return 0;
}

int cmd_extrapolate(const std::string& points) {
  const auto e = extrapolate_zero_variance(read_variance_points(points));
  std::cout << std::setprecision(17)
            << nlohmann::json{{"intercept", e.intercept}, {"sigma", e.sigma}, {"slope", e.slope}, {"points", e.points}}.dump(1)
            << '\n';
  return 0;
}

int cmd_report(const std::string& dir) {
  const auto state = load_checkpoint(dir);
  write_run_reports(dir, state);
  std::cout << run_summary(state).dump(1) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sqd: sample-based quantum diagonalization at desk scale"};
  app.require_subcommand(1);

  std::string config, resume, index_mode;
  int run_iters = -1;
  bool verbose = false;
  auto* run = app.add_subcommand("run", "closed-loop optimisation from a JSON config");
  run->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--resume", resume, "continue the run directory from its checkpoint")->check(CLI::ExistingDirectory);
  run->add_option("--max-iterations", run_iters, "override max_iterations");
  run->add_option("--de-index-mode", index_mode, "strict or replacement");
  run->add_flag("-v,--verbose", verbose, "echo the run log to stderr");

  std::string fcidump, basis, partition, json_out;
  double tol = 1e-3;
  int max_iter = 10;
  bool asymmetric = false, with_variance = false;
  auto* diag = app.add_subcommand("diagonalize", "lowest eigenpair in a subspace (full space without --basis)");
  diag->add_option("--fcidump", fcidump)->required()->check(CLI::ExistingFile);
  diag->add_option("--basis", basis, "configurations, one bitstring per line");
  diag->add_option("--tol", tol, "residual tolerance");
  diag->add_option("--max-iter", max_iter, "Davidson iteration limit");
  diag->add_option("--partition", partition, "b_alpha,b_beta,t,m for the distributed operator");
  diag->add_flag("--asymmetric", asymmetric, "separate alpha and beta half lists");
  diag->add_flag("--variance", with_variance, "also report the energy variance");
  diag->add_option("--json", json_out, "write the report to a file");

  std::string params, samp_fcidump, samp_out;
  int n_orb = 0, n_alpha = 0, n_beta = 0;
  std::uint64_t shots = 10000, seed = 1;
  double noise = 0.0;
  auto* sample = app.add_subcommand("sample", "draw noisy bitstrings from an LUCJ state");
  sample->add_option("--params", params, "LUCJ parameter JSON")->required()->check(CLI::ExistingFile);
  sample->add_option("--shots", shots);
  sample->add_option("--noise", noise, "bit-flip probability");
  sample->add_option("--seed", seed);
  sample->add_option("--fcidump", samp_fcidump, "takes the electron counts from this file")->check(CLI::ExistingFile);
  sample->add_option("--n-orb", n_orb);
  sample->add_option("--n-alpha", n_alpha);
  sample->add_option("--n-beta", n_beta);
  sample->add_option("--out", samp_out, "output file (default stdout)");

  ScalingProblem problem;
  std::string ranks = "1,2,4,8", bench_out;
  std::size_t plans = 3;
  int reps = 3;
  bool no_balance = false;
  auto* bench = app.add_subcommand("bench-scaling", "strong-scaling sweep of the distributed operator");
  bench->add_option("--n-orb", problem.n_orb);
  bench->add_option("--n-alpha", problem.n_alpha);
  bench->add_option("--n-beta", problem.n_beta);
  bench->add_option("--d-alpha", problem.d_alpha);
  bench->add_option("--d-beta", problem.d_beta);
  bench->add_option("--seed", problem.seed);
  bench->add_option("--ranks", ranks, "comma-separated rank counts");
  bench->add_option("--plans", plans, "plans per rank count");
  bench->add_option("--reps", reps, "repetitions per plan");
  bench->add_flag("--no-balance", no_balance, "round-robin task assignment");
  bench->add_option("--out", bench_out, "CSV output (default stdout)");

  std::string points;
  auto* extrap = app.add_subcommand("extrapolate", "zero-variance linear extrapolation");
  extrap->add_option("--points", points, "CSV of energy,variance rows")->required()->check(CLI::ExistingFile);

  std::string run_dir;
  auto* report = app.add_subcommand("report", "regenerate CSV/JSON reports of a run directory");
  report->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, resume, run_iters, index_mode, verbose);
    if (*diag) return cmd_diagonalize(fcidump, basis, tol, max_iter, partition, asymmetric, with_variance, json_out);
    if (*sample) return cmd_sample(params, samp_fcidump, n_orb, n_alpha, n_beta, shots, noise, seed, samp_out);
    if (*bench) return cmd_bench(problem, ranks, plans, reps, no_balance, bench_out);
    if (*extrap) return cmd_extrapolate(points);
    if (*report) return cmd_report(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "sqd: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
