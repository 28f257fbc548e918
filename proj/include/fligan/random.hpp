#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <vector>

namespace fligan {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a base seed and a path of stream identifiers (label index, round,
/// node id, ...) into one seed. Equal paths give equal seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(base);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Draws a Dirichlet(alpha, ..., alpha) vector of length n.
///
/// Works in log space so that very small concentrations (alpha = 0.05) do not
/// underflow every gamma draw to zero: for alpha < 1 we use
/// Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha).
inline std::vector<double> sample_symmetric_dirichlet(std::size_t n, double alpha, Rng& rng) {
  std::vector<double> log_g(n);
  const bool boost = alpha < 1.0;
  std::gamma_distribution<double> gamma(boost ? alpha + 1.0 : alpha, 1.0);
  for (auto& lg : log_g) {
    double g = gamma(rng);
    lg = std::log(std::max(g, std::numeric_limits<double>::min()));
    if (boost) {
      double u = uniform01(rng);
      lg += std::log(std::max(u, std::numeric_limits<double>::min())) / alpha;
    }
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_g) mx = std::max(mx, v);
  double total = 0.0;
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(log_g[i] - mx);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace fligan
