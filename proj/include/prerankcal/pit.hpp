#pragma once

// Projected PITs: Z = F_{T|X}(T) with T = rho(x, y), where the conditional CDF
// of T is estimated from projected predictive samples.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "prerankcal/distributions.hpp"
#include "prerankcal/matrix.hpp"
#include "prerankcal/preranks.hpp"

namespace prerankcal {

enum class PitMode { Smooth, Hard };

struct PitBatch {
  std::vector<double> pit_values;
  PitMode mode = PitMode::Hard;
  double tau = 100.0;
  PreRankSpec prerank;
  std::size_t sample_count = 0;

  std::size_t size() const { return pit_values.size(); }
  bool empty() const { return pit_values.empty(); }
};

/// (1/S) sum_s sigmoid(tau (t - values_s))
template <typename T>
T smooth_ecdf(std::span<const T> values, const T& t, double tau) {
  require(!values.empty(), "smooth_ecdf: need at least one value");
  require(tau > 0.0, "smooth_ecdf: tau must be positive");
  T acc(0.0);
  for (const auto& v : values) acc += sigmoid((t - v) * tau);
  return acc * (1.0 / static_cast<double>(values.size()));
}

ad::Var smooth_ecdf(std::span<const ad::Var> values, const ad::Var& t, double tau);

/// (1/S) |{s : values_s <= t}|
double hard_ecdf(std::span<const double> values, double t);

using PostTransform = std::function<double(double)>;

/// PIT of the observation under ctx.samples. `post`, when given, is applied
/// to T and to every projected sample before ranking.
double projected_pit(const PreRankSpec& spec, const ProjectionContext& ctx, std::span<const double> y,
                     PitMode mode, double tau, const PostTransform& post = {});

/// Maps standardized inputs to a predictive mixture.
using Predictor = std::function<MixtureParams(std::span<const double>)>;

struct PitOptions {
  std::size_t samples = 100;
  double tau = 100.0;
  PitMode mode = PitMode::Hard;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Per-row PITs; row i draws its samples from split_seed(seed, i).
PitBatch pit_batch(const PreRankSpec& spec, const Predictor& model, const RowMatrix& features,
                   const RowMatrix& targets, const PitOptions& options);

/// Several pre-ranks over the same per-row samples.
std::vector<PitBatch> pit_batches(std::span<const PreRankSpec> specs, const Predictor& model,
                                  const RowMatrix& features, const RowMatrix& targets,
                                  const PitOptions& options);

}  // namespace prerankcal
