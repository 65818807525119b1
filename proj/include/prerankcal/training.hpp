#pragma once

// Regularized training of the mixture hypernetwork.
//
// The loss is  mean score + lambda * R,  where R is a PCE-KDE penalty on
// smoothed projected PITs for one pre-rank, optionally combined with the
// average penalty over all marginals or over the leading PCA directions.
// Gradients come from the tape for everything downstream of the network
// head and from a batched backward pass through the MLP.

#include <cstdint>
#include <optional>
#include <string_view>
#include <string>
#include <vector>

#include "prerankcal/autodiff.hpp"
#include "prerankcal/data.hpp"
#include "prerankcal/metrics.hpp"
#include "prerankcal/model.hpp"
#include "prerankcal/preranks.hpp"

namespace prerankcal {

enum class Composition { Plain, MarginalPlus, PcaPlus };
enum class ScoreKind { Nll, Energy };

std::string_view composition_token(Composition c);
std::optional<Composition> parse_composition(std::string_view token);

struct RegularizerConfig {
  double lambda = 0.0;
  PreRankSpec prerank = PreRankSpec::location();
  Composition composition = Composition::Plain;
  std::size_t samples = 100;  // S
  double tau = 100.0;
  std::size_t grid_size = 100;  // M
  double p = 1.0;
  double pca_threshold = 0.8;
  /// Reuse the same Gaussian draws at every step instead of resampling.
  bool fixed_noise = false;

  void validate(std::size_t dim) const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  ScoreKind score = ScoreKind::Nll;
  std::size_t eval_samples = 100;
  std::size_t threads = 1;

  void validate() const;
};

struct RegularizerTerm {
  PreRankSpec spec;
  double weight = 1.0;
};

/// Expands the composition into weighted single-pre-rank terms.
std::vector<RegularizerTerm> regularizer_terms(const RegularizerConfig& reg, std::size_t dim,
                                               std::size_t d_star);

/// Quantities that carry no gradient: sampling noise, per-row PCA bases and
/// d*. When `filled` is false, objective() records them; afterwards they are
/// reused, which makes the objective a smooth function of the weights for
/// finite-difference checks.
struct FrozenState {
  bool filled = false;
  std::vector<SampleNoise> noise;
  std::vector<PcaBasis> bases;
  std::size_t d_star = 0;
};

/// d* from the average of the per-row sample covariances.
std::size_t pooled_top_components(std::span<const SampleSet> samples, double threshold);

struct LossParts {
  ad::Var score;
  ad::Var regularizer;
  std::size_t d_star = 0;
};

/// Records the batch loss on the tape of the given predictive mixtures. Row i draws its noise from split_seed(noise_seed, i).
LossParts build_loss(std::span<const VarMixture> mixtures, const RowMatrix& targets,
                     const RegularizerConfig& reg, ScoreKind score, std::uint64_t noise_seed,
                     bool with_regularizer, FrozenState* frozen = nullptr);

struct ObjectiveValue {
  double score = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
  std::size_t d_star = 0;
  std::vector<double> gradient;  // empty unless requested
};

/// Batch objective and its gradient with respect to the flat weights. The
/// regularizer is only evaluated when lambda > 0 or `force_regularizer`.
ObjectiveValue objective(const NetworkConfig& config, const ModelWeights& weights, const RowMatrix& features,
                         const RowMatrix& targets, const RegularizerConfig& reg, ScoreKind score,
                         std::uint64_t noise_seed, bool with_gradient = true, bool force_regularizer = false,
                         FrozenState* frozen = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_score = 0.0;
  double val_pce = 0.0;  // composed hard-PIT PCE of the regularizer terms
  double val_objective = 0.0;
  std::vector<std::pair<std::string, double>> val_pce_terms;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // index into epochs

  double best_objective() const { return epochs.at(best_epoch).val_objective; }
  /// CSV with columns epoch, train_loss, val_score, val_objective, val_pce, val_pce_<term>...
  std::string to_csv() const;
};

struct TrainResult {
  ModelWeights weights;
  TrainHistory history;
};

/// Hard-PIT validation metrics for a predictor.
struct ValidationMetrics {
  double score = 0.0;  // mean NLL or mean energy, per the configured score
  double nll = 0.0;
  double energy = 0.0;
  double composed_pce = 0.0;
  std::size_t d_star = 0;
  std::vector<std::pair<std::string, double>> term_pce;
};

ValidationMetrics validation_metrics(const Predictor& model, const Dataset& data, const RegularizerConfig& reg,
                                     ScoreKind score, std::size_t samples, std::uint64_t seed,
                                     std::size_t threads = 1);

/// Adam with early stopping on val_score + lambda * composed validation PCE.
/// Throws NumericFailure naming the epoch and batch on a non-finite loss.
TrainResult train(const NetworkConfig& config, const TrainConfig& train_config, const RegularizerConfig& reg,
                   const Dataset& train_set, const Dataset& val_set);

struct LambdaTrial {
  double lambda = 0.0;
  double val_pce = 0.0;
  double val_es = 0.0;
  bool within_budget = false;
};

struct TuneResult {
  double selected = 0.0;
  double reference_es = 0.0;
  double budget = 0.0;  // 1.1 * reference_es
  std::vector<LambdaTrial> trials;
};

inline constexpr double kEnergyBudget = 1.1;

/// Among trials whose ES stays within 1.1x the lambda = 0 reference, picks
/// the lowest PCE (ties go to the smaller lambda). Marks within_budget.
TuneResult select_lambda(std::vector<LambdaTrial> trials, double reference_es);

TuneResult tune_lambda(std::span<const double> grid, const NetworkConfig& config, const TrainConfig& train_config,
                       const RegularizerConfig& reg_template, const Dataset& train_set, const Dataset& val_set);

}  // namespace prerankcal
