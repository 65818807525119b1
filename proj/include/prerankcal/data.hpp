#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prerankcal/matrix.hpp"
#include "prerankcal/pit.hpp"

namespace prerankcal {

struct Standardization {
  std::vector<double> feature_mean, feature_sd;
  std::vector<double> target_mean, target_sd;
};

struct Dataset {
  RowMatrix features;
  RowMatrix targets;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  bool standardized = false;

  std::size_t size() const { return targets.rows; }
  std::size_t input_dim() const { return features.cols; }
  std::size_t output_dim() const { return targets.cols; }
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_rejected = 0;
};

/// Reads a headered CSV; columns starting with the prefixes become features
/// and targets. Rows with a missing or non-finite cell are dropped.
Dataset load_csv(const std::filesystem::path& path, std::string_view feature_prefix = "x_",
                 std::string_view target_prefix = "y_", LoadReport* report = nullptr);

/// Writes shortest round-trip decimal representations.
void write_csv(const std::filesystem::path& path, const Dataset& dataset);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  std::size_t run_index = 1;

  void validate() const;
};

struct DataSplits {
  Dataset train, val, test;
  Standardization standardization;
  std::vector<std::size_t> train_index, val_index, test_index;
};

/// Population (divisor N) mean/sd per column; zero-spread columns get sd 1.
Standardization fit_standardization(const Dataset& dataset);
Dataset apply_standardization(const Dataset& dataset, const Standardization& stats);

/// Permutes rows from (seed, run_index), slices by fraction and standardizes
/// all three parts with statistics of the training part.
DataSplits split(const Dataset& dataset, const SplitSpec& spec);

enum class SynthKind { LinearGaussian, Bimodal, HeteroCorr, LowRank };

std::string_view synth_token(SynthKind kind);
std::optional<SynthKind> parse_synth_kind(std::string_view token);

struct SynthDataset {
  SynthKind kind = SynthKind::LinearGaussian;
  Dataset data;
  /// True conditional distribution of y given x, in raw units.
  Predictor truth;
};

/// Synthetic generators with known conditionals:
///  linear_gaussian  L=4, D=3; y = A x + eps, eps ~ N(0, Sigma)
///  bimodal          L=2, D=2; two modes along (1,1) with x-dependent weights
///  hetero_corr      L=2, D=2; mixture of a tight positively correlated and a
///                   wide negatively correlated component, weight depends on x
///  lowrank          L=3, D=8; three latent factors (one of them bimodal)
///                   loaded onto eight outputs plus small isotropic noise
SynthDataset synth(SynthKind kind, std::size_t n, std::uint64_t seed);

/// Conditional mixture for the linear-Gaussian generator with an arbitrary
/// noise Cholesky factor (the default generator uses linear_gaussian_chol()).
MixtureParams linear_gaussian_truth(std::span<const double> x, std::span<const double> noise_chol);
std::vector<double> linear_gaussian_chol();

/// Wraps a raw-unit truth so it takes standardized x and returns a mixture
/// over standardized y.
Predictor standardized_truth(Predictor truth, const Standardization& stats);

}  // namespace prerankcal
