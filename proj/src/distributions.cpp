#include "prerankcal/distributions.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "prerankcal/random.hpp"

namespace prerankcal {

MixtureParams make_gaussian(std::span<const double> mean, std::span<const double> chol_row_major) {
  const std::size_t d = mean.size();
  require(chol_row_major.size() == d * d, "make_gaussian: Cholesky factor must be D x D");
  MixtureParams p(1, d);
  p.weights[0] = 1.0;
  std::copy(mean.begin(), mean.end(), p.means.begin());
  std::copy(chol_row_major.begin(), chol_row_major.end(), p.chol.begin());
  return p;
}

void validate(const MixtureParams& params, double chol_floor) {
  const std::size_t k_count = params.components;
  const std::size_t d = params.dim;
  require(k_count >= 1 && d >= 1, "mixture: need K >= 1 and D >= 1");
  require(params.weights.size() == k_count && params.means.size() == k_count * d &&
              params.chol.size() == k_count * d * d,
          "mixture: storage does not match K and D");
  double total = 0.0;
  for (double w : params.weights) {
    require(w >= 0.0 && std::isfinite(w), "mixture: weights must be nonnegative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, "mixture: weights must sum to 1");
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      require(std::isfinite(params.means[k * d + i]), "mixture: non-finite mean");
      for (std::size_t j = i + 1; j < d; ++j) {
        require(params.chol_at(k, i, j) == 0.0, "mixture: Cholesky factor must be lower triangular");
      }
      require(params.chol_at(k, i, i) >= chol_floor,
              "mixture: Cholesky diagonal below floor " + std::to_string(chol_floor));
    }
  }
}

MixtureParams rescale(const MixtureParams& params, std::span<const double> shift,
                      std::span<const double> scale) {
  const std::size_t d = params.dim;
  require(shift.size() == d && scale.size() == d, "rescale: dimension mismatch");
  MixtureParams out = params;
  for (std::size_t k = 0; k < params.components; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      out.means[k * d + i] = (params.means[k * d + i] - shift[i]) / scale[i];
      for (std::size_t j = 0; j <= i; ++j) out.chol_at(k, i, j) = params.chol_at(k, i, j) / scale[i];
    }
  }
  return out;
}

MixtureParams values_of(const VarMixture& params) {
  MixtureParams out(params.components, params.dim);
  auto copy = [](const std::vector<ad::Var>& from, std::vector<double>& to) {
    for (std::size_t i = 0; i < from.size(); ++i) to[i] = from[i].value();
  };
  copy(params.weights, out.weights);
  copy(params.means, out.means);
  copy(params.chol, out.chol);
  return out;
}

SampleNoise draw_noise(std::span<const double> weights, std::size_t dim, std::uint64_t seed,
                       std::size_t count) {
  require(count >= 1, "sample: need at least one sample");
  SampleNoise noise;
  noise.dim = dim;
  noise.seed = seed;
  noise.component_indices.resize(count);
  noise.z.resize(count * dim);
  Rng rng = make_rng(seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool single = weights.size() == 1;
  for (std::size_t s = 0; s < count; ++s) {
    noise.component_indices[s] = single ? 0 : pick(rng);
    for (std::size_t i = 0; i < dim; ++i) noise.z[s * dim + i] = normal(rng);
  }
  return noise;
}

SampleSet sample(const MixtureParams& params, std::uint64_t seed, std::size_t count) {
  return materialize(params, draw_noise(params.weights, params.dim, seed, count));
}

double log_density(const MixtureParams& params, std::span<const double> y) {
  return log_density<double>(params, y);
}

double smooth_orthant_cdf(std::span<const double> y, const SampleSet& samples, double tau) {
  require(tau > 0.0, "smooth_orthant_cdf: tau must be positive");
  require(y.size() == samples.dim, "smooth_orthant_cdf: dimension mismatch");
  const std::size_t count = samples.size();
  double acc = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const auto row = samples[s];
    double prod = 1.0;
    for (std::size_t d = 0; d < y.size(); ++d) prod *= sigmoid(tau * (y[d] - row[d]));
    acc += prod;
  }
  return acc / static_cast<double>(count);
}

ad::Var smooth_orthant_cdf(std::span<const ad::Var> y, const VarSampleSet& samples, double tau) {
  require(tau > 0.0, "smooth_orthant_cdf: tau must be positive");
  require(y.size() == samples.dim, "smooth_orthant_cdf: dimension mismatch");
  const std::size_t count = samples.size();
  const std::size_t dim = y.size();
  const double inv_s = 1.0 / static_cast<double>(count);

  ad::Tape* tape = ad::tape_of(y);
  if (!tape) tape = ad::tape_of(std::span<const ad::Var>(samples.values));

  // d/dy_d of prod_e sigma_e is prod * tau * (1 - sigma_d)
  std::vector<double> sig(dim);
  std::vector<double> dy(dim, 0.0);
  std::vector<double> dsample;
  if (tape) dsample.resize(count * dim);
  double acc = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const auto row = samples[s];
    double prod = 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      sig[d] = sigmoid(tau * (y[d].value() - row[d].value()));
      prod *= sig[d];
    }
    acc += prod;
    if (!tape) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      const double g = inv_s * prod * tau * (1.0 - sig[d]);
      dy[d] += g;
      dsample[s * dim + d] = -g;
    }
  }
  const double value = acc * inv_s;
  if (!tape) return ad::Var(value);
  auto b = tape->builder();
  for (std::size_t d = 0; d < dim; ++d) b.add(y[d], dy[d]);
  for (std::size_t k = 0; k < samples.values.size(); ++k) b.add(samples.values[k], dsample[k]);
  return b.finish(value);
}

double orthant_fraction(std::span<const double> y, const SampleSet& samples) {
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto row = samples[s];
    bool below = true;
    for (std::size_t d = 0; d < y.size() && below; ++d) below = row[d] <= y[d];
    hits += below ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

std::vector<double> sample_covariance(const SampleSet& samples) {
  const std::size_t count = samples.size();
  const std::size_t d = samples.dim;
  if (count < 2) throw InsufficientSamples("sample covariance needs at least two samples");
  std::vector<double> mean(d, 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += samples[s][i];
  }
  for (double& m : mean) m /= static_cast<double>(count);
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    const auto row = samples[s];
    for (std::size_t i = 0; i < d; ++i) {
      const double di = row[i] - mean[i];
      for (std::size_t j = 0; j <= i; ++j) cov[i * d + j] += di * (row[j] - mean[j]);
    }
  }
  const double denom = static_cast<double>(count - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      cov[i * d + j] /= denom;
      cov[j * d + i] = cov[i * d + j];
    }
  }
  return cov;
}

PcaBasis pca_of_covariance(std::span<const double> covariance, std::size_t dim) {
  require(covariance.size() == dim * dim, "pca: covariance must be D x D");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> cov(
      covariance.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, "pca: eigendecomposition failed");

  PcaBasis basis;
  basis.dim = dim;
  basis.eigenvectors.resize(dim * dim);
  basis.eigenvalues.resize(dim);
  basis.explained_variance_ratio.resize(dim);
  // Eigen returns ascending eigenvalues
  for (std::size_t c = 0; c < dim; ++c) {
    const auto src = static_cast<Eigen::Index>(dim - 1 - c);
    basis.eigenvalues[c] = std::max(0.0, solver.eigenvalues()(src));
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      if (std::abs(solver.eigenvectors()(static_cast<Eigen::Index>(i), src)) >
          std::abs(solver.eigenvectors()(static_cast<Eigen::Index>(argmax), src)) + 1e-12) {
        argmax = i;
      }
    }
    const double sign = solver.eigenvectors()(static_cast<Eigen::Index>(argmax), src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < dim; ++i) {
      basis.eigenvectors[c * dim + i] = sign * solver.eigenvectors()(static_cast<Eigen::Index>(i), src);
    }
  }
  const double total = std::accumulate(basis.eigenvalues.begin(), basis.eigenvalues.end(), 0.0);
  for (std::size_t c = 0; c < dim; ++c) {
    // a degenerate (zero-spread) cloud puts everything on the first axis
    basis.explained_variance_ratio[c] = total > 0.0 ? basis.eigenvalues[c] / total : (c == 0 ? 1.0 : 0.0);
  }
  return basis;
}

PcaBasis pca_of_samples(const SampleSet& samples) {
  if (samples.size() < 2) throw InsufficientSamples("pca_of_samples needs at least two samples");
  return pca_of_covariance(sample_covariance(samples), samples.dim);
}

}  // namespace prerankcal
