// SPDX-License-Identifier: Apache-2.0
#pragma once

// Limited-memory BFGS with an Armijo backtracking line search.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <string>

#include "sqd/error.hpp"

namespace sqd {

/// Returns f(x) and writes the gradient into the second argument.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LbfgsOptions {
  int max_iterations = 1000;
  int memory = 10;
  double gradient_tolerance = 1e-6;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;
};

inline LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opts = {}) {
  require(opts.memory >= 1, "lbfgs_minimize: memory must be positive");
  require(opts.max_iterations >= 0, "lbfgs_minimize: negative iteration limit");
  LbfgsResult res;
  res.x = std::move(x0);
  Eigen::VectorXd g;
  res.value = f(res.x, g);
  require(std::isfinite(res.value), "lbfgs_minimize: objective is not finite at the starting point");
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  for (;;) {
    res.gradient_norm = g.size() ? g.lpNorm<Eigen::Infinity>() : 0.0;
    if (res.gradient_norm <= opts.gradient_tolerance) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= opts.max_iterations) {
      res.diagnostic = "iteration limit reached";
      return res;
    }
    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    Eigen::VectorXd x_new, g_new;
    double f_new = 0.0;
    bool accepted = false;
    for (int k = 0; k < opts.max_backtracks; ++k) {
      x_new = res.x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.value + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      // safeguarded minimiser of the quadratic through f(0), f'(0), f(step)
      double next = 0.5 * step;
      if (std::isfinite(f_new)) {
        const double curv = f_new - res.value - slope * step;
        if (curv > 0.0) next = std::clamp(-slope * step * step / (2.0 * curv), 0.1 * step, 0.5 * step);
      }
      step = next;
    }
    if (!accepted) {
      res.diagnostic = "line search failed";
      return res;
    }
    Eigen::VectorXd s = x_new - res.x, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    res.x = std::move(x_new);
    g = std::move(g_new);
    res.value = f_new;
    ++res.iterations;
  }
}

}  // namespace sqd
