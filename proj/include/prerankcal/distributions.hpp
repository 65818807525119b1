#pragma once

// Gaussian-mixture predictive distributions.
//
// Containers are templated on the scalar type so the same code evaluates
// plain doubles (evaluation) and tape variables (training). Means and
// Cholesky factors are stored flat: means K x D, chol K x D x D row-major
// with the strict upper triangle kept at zero.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "prerankcal/autodiff.hpp"
#include "prerankcal/errors.hpp"
#include "prerankcal/numeric.hpp"

namespace prerankcal {

inline constexpr double kDefaultCholFloor = 1e-4;

template <typename T>
struct BasicMixture {
  std::size_t components = 0;
  std::size_t dim = 0;
  std::vector<T> weights;
  std::vector<T> means;
  std::vector<T> chol;

  BasicMixture() = default;
  BasicMixture(std::size_t k, std::size_t d)
      : components(k), dim(d), weights(k, T(0.0)), means(k * d, T(0.0)), chol(k * d * d, T(0.0)) {}

  std::span<const T> mean(std::size_t k) const { return {means.data() + k * dim, dim}; }
  std::span<T> mean(std::size_t k) { return {means.data() + k * dim, dim}; }
  const T& chol_at(std::size_t k, std::size_t i, std::size_t j) const {
    return chol[(k * dim + i) * dim + j];
  }
  T& chol_at(std::size_t k, std::size_t i, std::size_t j) { return chol[(k * dim + i) * dim + j]; }
};

using MixtureParams = BasicMixture<double>;
using VarMixture = BasicMixture<ad::Var>;

/// Single Gaussian N(mean, chol chol^T).
MixtureParams make_gaussian(std::span<const double> mean, std::span<const double> chol_row_major);

/// Checks the weight, triangularity and diagonal-floor invariants.
void validate(const MixtureParams& params, double chol_floor = kDefaultCholFloor);

/// Affine change of units y' = (y - shift) / scale applied coordinatewise.
MixtureParams rescale(const MixtureParams& params, std::span<const double> shift,
                      std::span<const double> scale);

/// Drops tape information.
MixtureParams values_of(const VarMixture& params);

template <typename T>
struct BasicSampleSet {
  std::size_t dim = 0;
  std::vector<T> values;  // S x D row-major
  std::uint64_t source_seed = 0;
  std::vector<std::size_t> component_indices;

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const T> operator[](std::size_t s) const { return {values.data() + s * dim, dim}; }
};

using SampleSet = BasicSampleSet<double>;
using VarSampleSet = BasicSampleSet<ad::Var>;

/// The random part of a draw: component labels and standard-normal noise.
/// Kept separate from the mixture so the reparametrized sample mu_k + L_k z
/// can be rebuilt on a tape.
struct SampleNoise {
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> component_indices;
  std::vector<double> z;  // S x D

  std::size_t size() const { return component_indices.size(); }
};

SampleNoise draw_noise(std::span<const double> weights, std::size_t dim, std::uint64_t seed,
                       std::size_t count);

template <typename T>
BasicSampleSet<T> materialize(const BasicMixture<T>& params, const SampleNoise& noise) {
  require(noise.dim == params.dim, "materialize: dimension mismatch");
  const std::size_t d_count = params.dim;
  BasicSampleSet<T> out;
  out.dim = d_count;
  out.source_seed = noise.seed;
  out.component_indices = noise.component_indices;
  out.values.reserve(noise.size() * d_count);
  for (std::size_t s = 0; s < noise.size(); ++s) {
    const std::size_t k = noise.component_indices[s];
    const double* z = noise.z.data() + s * d_count;
    for (std::size_t i = 0; i < d_count; ++i) {
      std::span<const T> row(&params.chol_at(k, i, 0), i + 1);
      out.values.push_back(affine(params.means[k * d_count + i], row, std::span<const double>(z, i + 1)));
    }
  }
  return out;
}

/// S draws: categorical component from the weights, then mu_k + L_k z.
SampleSet sample(const MixtureParams& params, std::uint64_t seed, std::size_t count);

/// log sum_k w_k N(y | mu_k, L_k L_k^T), using the Cholesky factor directly.
template <typename T>
T log_density(const BasicMixture<T>& params, std::span<const T> y) {
  using std::log;
  require(y.size() == params.dim, "log_density: dimension mismatch");
  const std::size_t d_count = params.dim;
  std::vector<T> terms;
  terms.reserve(params.components);
  std::vector<T> r(d_count);
  std::vector<double> ones(d_count, 1.0);
  for (std::size_t k = 0; k < params.components; ++k) {
    if (value_of(params.weights[k]) <= 0.0) continue;
    // forward substitution r = L^{-1} (y - mu)
    std::vector<T> log_diag(d_count);
    T quad(0.0);
    for (std::size_t i = 0; i < d_count; ++i) {
      T acc = y[i] - params.means[k * d_count + i];
      for (std::size_t j = 0; j < i; ++j) acc -= params.chol_at(k, i, j) * r[j];
      r[i] = acc / params.chol_at(k, i, i);
      quad += r[i] * r[i];
      log_diag[i] = log(params.chol_at(k, i, i));
    }
    const T log_det = sum(std::span<const T>(log_diag));
    terms.push_back(log(params.weights[k]) - 0.5 * static_cast<double>(d_count) * kLog2Pi - log_det -
                    0.5 * quad);
  }
  return log_sum_exp(std::span<const T>(terms));
}

double log_density(const MixtureParams& params, std::span<const double> y);

/// (1/S) sum_s prod_d sigmoid(tau (y_d - yhat_{s,d})): smoothed lower-orthant
/// probability P(Yhat <= y) estimated from samples.
double smooth_orthant_cdf(std::span<const double> y, const SampleSet& samples, double tau);
ad::Var smooth_orthant_cdf(std::span<const ad::Var> y, const VarSampleSet& samples, double tau);

/// Exact indicator version, used as a reference in tests.
double orthant_fraction(std::span<const double> y, const SampleSet& samples);

struct PcaBasis {
  std::size_t dim = 0;
  std::vector<double> eigenvectors;  // component c occupies [c*D, (c+1)*D)
  std::vector<double> eigenvalues;
  std::vector<double> explained_variance_ratio;

  std::span<const double> component(std::size_t c) const { return {eigenvectors.data() + c * dim, dim}; }
};

/// Eigendecomposition of the sample covariance (divisor S-1), eigenvalues
/// descending and each eigenvector signed so its largest-magnitude entry is
/// positive.
PcaBasis pca_of_samples(const SampleSet& samples);
PcaBasis pca_of_covariance(std::span<const double> covariance, std::size_t dim);

/// Sample covariance with divisor S-1, row-major D x D.
std::vector<double> sample_covariance(const SampleSet& samples);

}  // namespace prerankcal
