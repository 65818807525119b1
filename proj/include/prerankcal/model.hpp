#pragma once

// Mixture hypernetwork: an MLP with rectifier hidden layers whose linear
// output head is split into mixture logits, component means and Cholesky
// entries.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prerankcal/distributions.hpp"
#include "prerankcal/matrix.hpp"
#include "prerankcal/pit.hpp"

namespace prerankcal {

struct NetworkConfig {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t components = 5;
  std::vector<std::size_t> hidden{100, 100, 100};
  double chol_floor = kDefaultCholFloor;

  /// K (1 + D + D(D+1)/2)
  std::size_t head_size() const;
  std::size_t parameter_count() const;
  void validate() const;
};

struct ModelWeights {
  std::vector<double> params;
  std::uint64_t seed = 0;
};

/// Fan-in uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
ModelWeights init_weights(const NetworkConfig& config, std::uint64_t seed);

/// Raw head layout: K logits, then K*D means, then per component the lower
/// triangle row by row. Diagonal entries go through softplus + floor.
template <typename T>
BasicMixture<T> head_to_mixture(std::span<const T> raw, std::size_t k_count, std::size_t dim,
                                double chol_floor) {
  using std::exp;
  const std::size_t tri = dim * (dim + 1) / 2;
  require(raw.size() == k_count * (1 + dim + tri), "head_to_mixture: raw head has the wrong size");
  BasicMixture<T> out(k_count, dim);
  const auto logits = raw.subspan(0, k_count);
  const T normalizer = log_sum_exp(logits);
  for (std::size_t k = 0; k < k_count; ++k) out.weights[k] = exp(logits[k] - normalizer);
  for (std::size_t i = 0; i < k_count * dim; ++i) out.means[i] = raw[k_count + i];
  std::size_t pos = k_count * (1 + dim);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j <= i; ++j, ++pos) {
        out.chol_at(k, i, j) = i == j ? softplus(raw[pos]) + chol_floor : raw[pos];
      }
    }
  }
  return out;
}

/// Right inverse of head_to_mixture for diagonals strictly above the floor.
std::vector<double> mixture_to_head(const MixtureParams& params, double chol_floor);

std::vector<double> raw_head(const ModelWeights& weights, const NetworkConfig& config,
                             std::span<const double> x);

MixtureParams forward(const ModelWeights& weights, const NetworkConfig& config, std::span<const double> x);

/// Predictor holding its own copy of the weights.
Predictor make_predictor(const NetworkConfig& config, const ModelWeights& weights);

/// Batched forward pass that keeps activations for a backward pass.
class BatchNetwork {
 public:
  BatchNetwork(const NetworkConfig& config, const ModelWeights& weights);

  /// Raw heads, one row per input row.
  const Eigen::MatrixXd& forward(const RowMatrix& inputs);
  /// Gradient with respect to the flat parameter vector, given d(loss)/d(heads).
  std::vector<double> backward(const Eigen::MatrixXd& head_grad) const;

 private:
  const NetworkConfig& config_;
  const ModelWeights& weights_;
  std::vector<Eigen::MatrixXd> activations_;  // input and post-activation of each layer
  std::vector<Eigen::MatrixXd> preactivations_;
};

void save_checkpoint(const std::filesystem::path& path, const NetworkConfig& config,
                     const ModelWeights& weights);

struct Checkpoint {
  NetworkConfig config;
  ModelWeights weights;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace prerankcal
