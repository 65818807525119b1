#pragma once

#include <random>

#include "prerankcal/training.hpp"
#include "test_util.hpp"

namespace prerankcal::testing {

struct GradientCase {
  ScoreKind score = ScoreKind::Nll;
  double lambda = 0.0;
  Composition composition = Composition::Plain;
  PreRankSpec prerank = PreRankSpec::location();
};

/// Reverse-mode vs central differences for the full batch objective on
/// K=2, D=2, hidden [8], batch of 8 rows. Stop-gradient quantities are frozen
/// at the base point so both sides see the same smooth function.
inline double gradient_relative_error(const GradientCase& c, std::uint64_t seed, std::size_t samples = 32) {
  NetworkConfig config;
  config.input_dim = 3;
  config.output_dim = 2;
  config.components = 2;
  config.hidden = {8};
  const auto weights = init_weights(config, seed);

  Rng rng = make_rng(split_seed(seed, 77));
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix x(8, 3), y(8, 2);
  for (auto& v : x.data) v = normal(rng);
  for (auto& v : y.data) v = normal(rng);

  RegularizerConfig reg;
  reg.lambda = c.lambda;
  reg.prerank = c.prerank;
  reg.composition = c.composition;
  reg.samples = samples;
  reg.grid_size = 20;
  const std::uint64_t noise_seed = split_seed(seed, 5);

  FrozenState frozen;
  const auto base = objective(config, weights, x, y, reg, c.score, noise_seed, true, false, &frozen);
  auto f = [&](std::span<const double> theta) {
    ModelWeights w;
    w.params.assign(theta.begin(), theta.end());
    return objective(config, w, x, y, reg, c.score, noise_seed, false, false, &frozen).total;
  };
  const auto numeric = numeric_gradient(f, weights.params, 1e-6);
  return relative_error(base.gradient, numeric);
}

}  // namespace prerankcal::testing
