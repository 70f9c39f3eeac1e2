// SPDX-License-Identifier: Apache-2.0
#pragma once

// Zero-variance extrapolation: ordinary least squares of energy against variance.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sqd/error.hpp"

namespace sqd {

struct VariancePoint {
  double energy = 0.0;
  double variance = 0.0;
  std::size_t dimension = 0;
  int iteration = -1;
  int population = -1;
  int walker = -1;
};

struct Extrapolation {
  double intercept = 0.0;
  /// Standard error of the intercept; zero when the fit has no residual degrees of freedom.
  double sigma = 0.0;
  double slope = 0.0;
  std::size_t points = 0;
};

/// E = E0 + s dE fitted by OLS; sigma = sqrt(s^2 (1/n + xbar^2 / Sxx)) with s^2 = SSR / (n - 2).
inline Extrapolation extrapolate_zero_variance(const std::vector<VariancePoint>& pts) {
  const std::size_t n = pts.size();
  require(n >= 2, "extrapolate_zero_variance: need at least two points");
  double xbar = 0.0, ybar = 0.0;
  for (const auto& p : pts) {
    require(p.variance >= 0.0 && std::isfinite(p.variance) && std::isfinite(p.energy),
            "extrapolate_zero_variance: variances must be finite and non-negative");
    xbar += p.variance;
    ybar += p.energy;
  }
  xbar /= static_cast<double>(n);
  ybar /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.variance - xbar) * (p.variance - xbar);
    sxy += (p.variance - xbar) * (p.energy - ybar);
  }
  require(sxx > 1e-300 && sxx > 1e-24 * xbar * xbar * static_cast<double>(n),
          "extrapolate_zero_variance: variances are all equal (degenerate abscissae)");
  Extrapolation e;
  e.points = n;
  e.slope = sxy / sxx;
  e.intercept = ybar - e.slope * xbar;
  if (n > 2) {
    double ssr = 0.0;
    for (const auto& p : pts) {
      const double r = p.energy - e.intercept - e.slope * p.variance;
      ssr += r * r;
    }
    const double s2 = ssr / static_cast<double>(n - 2);
    e.sigma = std::sqrt(s2 * (1.0 / static_cast<double>(n) + xbar * xbar / sxx));
  }
  return e;
}

inline constexpr const char* kVarianceHeader = "energy,variance,dimension,iteration,population,walker";

inline void write_variance_points(std::ostream& os, const std::vector<VariancePoint>& pts) {
  os << "# sqd-variance v1\n" << kVarianceHeader << '\n' << std::setprecision(17);
  for (const auto& p : pts)
    os << p.energy << ',' << p.variance << ',' << p.dimension << ',' << p.iteration << ',' << p.population << ','
       << p.walker << '\n';
}

/// Accepts the full schema or bare `energy,variance` rows; `#` lines and a header row are skipped.
inline std::vector<VariancePoint> read_variance_points(std::istream& in, const std::string& name = "<points>") {
  std::vector<VariancePoint> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("energy", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string tok; std::getline(ls, tok, ',');) f.push_back(tok);
    if (f.size() < 2) throw ParseError(name + ":" + std::to_string(lineno) + ": expected at least energy,variance");
    VariancePoint p;
    try {
      p.energy = std::stod(f[0]);
      p.variance = std::stod(f[1]);
      if (f.size() > 2) p.dimension = std::stoull(f[2]);
      if (f.size() > 3) p.iteration = std::stoi(f[3]);
      if (f.size() > 4) p.population = std::stoi(f[4]);
      if (f.size() > 5) p.walker = std::stoi(f[5]);
    } catch (const std::exception&) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": malformed number");
    }
    out.push_back(p);
  }
  return out;
}

inline std::vector<VariancePoint> read_variance_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_variance_points(in, path.string());
}

}  // namespace sqd
