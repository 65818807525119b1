#pragma once

// Test-set calibration reports and significance tables built on the PIT,
// metric and scoring modules.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prerankcal/data.hpp"
#include "prerankcal/metrics.hpp"
#include "prerankcal/preranks.hpp"

namespace prerankcal {

/// PIT values of one pre-rank, possibly over several runs of equal size.
struct PitColumn {
  std::string name;
  std::vector<std::vector<double>> runs;
};

struct SignificanceRow {
  std::string name;
  double pce = 0.0;  // mean PCE over the column's runs
  double p_value = 1.0;
  double holm_p = 1.0;
};

/// One-sided p-values of each column's (mean) PCE against a simulated null
/// with matching N and run count, followed by Holm adjustment over columns.
std::vector<SignificanceRow> significance_table(std::span<const PitColumn> columns, const QuantileGrid& grid,
                                                std::size_t n_sims, std::uint64_t seed, std::size_t threads = 1);

/// CSV with one column per pre-rank and an optional `run` column (integer
/// run labels). Values must lie in [0, 1].
std::vector<PitColumn> load_pit_file(const std::filesystem::path& path);
/// Writes single-run columns of equal length.
void write_pit_file(const std::filesystem::path& path, std::span<const PitColumn> columns);

struct EvaluationOptions {
  /// Pre-rank families; marginal and pca are averaged over all D coordinates
  /// or components. Empty means all seven (dependency only when D >= 2).
  std::vector<PreRankKind> kinds;
  std::size_t samples = 100;
  std::size_t grid_size = 100;
  std::size_t n_sims = 50000;
  double tau = 100.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct PreRankReport {
  std::string prerank;
  double pce = 0.0;
  double p_value = 1.0;
  double holm_p = 1.0;
  double null_q95 = 0.0;
  /// Averaged over components for marginal and pca.
  ReliabilityCurve reliability;
  std::vector<std::pair<std::string, double>> components;
};

struct CalibrationReport {
  std::size_t n_test = 0;
  std::size_t samples = 0;
  std::size_t n_sims = 0;
  bool standardized = true;
  double nll = 0.0;
  double energy = 0.0;
  std::vector<PreRankReport> preranks;
  /// Per-component PIT values (marginal_1, ..., pca_1, ..., location, ...).
  std::vector<PitColumn> pits;

  std::string to_json() const;
};

/// Hard-PIT calibration of `model` on `test`. Family p-values use the
/// single-PCE null, which is conservative for averaged families.
CalibrationReport evaluate(const Predictor& model, const Dataset& test, const EvaluationOptions& options);

void write_reliability_csv(const std::filesystem::path& path, const ReliabilityCurve& curve);

}  // namespace prerankcal
