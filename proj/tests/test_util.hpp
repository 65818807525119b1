#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "prerankcal/distributions.hpp"
#include "prerankcal/random.hpp"

namespace prerankcal::testing {

/// Asymptotic Kolmogorov-Smirnov p-value for uniformity on [0, 1].
inline double ks_uniform_p(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = values[i];
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k < 100; ++k) {
    p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

/// Central differences of f at x.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1, max_i |b_i|)
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  double scale = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

/// True when h maps distinct values to distinct values in the same order.
inline bool strictly_increasing_on(const std::function<double(double)>& h, std::vector<double> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(h(values[i - 1]) < h(values[i]))) return false;
  }
  return true;
}

inline MixtureParams random_mixture(std::size_t k_count, std::size_t dim, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.2, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  MixtureParams p(k_count, dim);
  double total = 0.0;
  for (auto& w : p.weights) total += (w = unif(rng));
  for (auto& w : p.weights) w /= total;
  for (auto& m : p.means) m = normal(rng);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < i; ++j) p.chol_at(k, i, j) = 0.3 * normal(rng);
      p.chol_at(k, i, i) = 0.5 + unif(rng);
    }
  }
  return p;
}

}  // namespace prerankcal::testing
