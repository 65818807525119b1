#pragma once

// Proper scoring rules: mixture negative log-likelihood and the sample-based
// energy score.

#include <span>

#include "prerankcal/distributions.hpp"

namespace prerankcal {

inline constexpr std::size_t kEnergySamples = 100;

struct ScoreValue {
  double nll = 0.0;
  double energy = 0.0;
};

double nll(const MixtureParams& params, std::span<const double> y);

/// (1/G) sum_i |Yhat_i - y| - (1/(2 G^2)) sum_i sum_j |Yhat_i - Yhat_j|
template <typename T>
T energy_score(const BasicSampleSet<T>& samples, std::span<const T> y) {
  const std::size_t g = samples.size();
  require(g >= 1, "energy_score: need at least one sample");
  require(y.size() == samples.dim, "energy_score: dimension mismatch");
  std::vector<T> to_obs;
  to_obs.reserve(g);
  for (std::size_t i = 0; i < g; ++i) to_obs.push_back(distance(samples[i], y));
  // the double sum is symmetric with a zero diagonal
  std::vector<T> pairs;
  pairs.reserve(g * (g - 1) / 2);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = i + 1; j < g; ++j) pairs.push_back(distance(samples[i], samples[j]));
  }
  const double gd = static_cast<double>(g);
  return sum(std::span<const T>(to_obs)) * (1.0 / gd) - sum(std::span<const T>(pairs)) * (1.0 / (gd * gd));
}

double energy_score(const SampleSet& samples, std::span<const double> y);

}  // namespace prerankcal
