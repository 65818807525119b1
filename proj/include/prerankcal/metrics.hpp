#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "prerankcal/autodiff.hpp"
#include "prerankcal/pit.hpp"

namespace prerankcal {

/// Interior quantile levels alpha_j = j / (M + 1), j = 1..M.
struct QuantileGrid {
  std::vector<double> levels;

  static QuantileGrid uniform(std::size_t m);
  std::size_t size() const { return levels.size(); }
};

/// Mean absolute gap between the levels and the empirical CDF of the PITs.
double pce(std::span<const double> pits, const QuantileGrid& grid);
double pce(const PitBatch& pits, const QuantileGrid& grid);

/// Differentiable surrogate of pce: the empirical CDF is replaced by
/// (1/N) sum_i sigmoid(tau (alpha - Z_i)) and the gap raised to the power p.
template <typename T>
T pce_kde(std::span<const T> pits, const QuantileGrid& grid, double tau, double p) {
  using std::abs;
  using std::pow;
  if (pits.empty()) throw UndefinedMetric("pce_kde: no PIT values");
  require(p >= 1.0, "pce_kde: p must be >= 1");
  require(tau > 0.0, "pce_kde: tau must be positive");
  std::vector<T> gaps;
  gaps.reserve(grid.size());
  for (double alpha : grid.levels) {
    const T cdf = smooth_ecdf(pits, T(alpha), tau);
    const T gap = abs(T(alpha) - cdf);
    gaps.push_back(p == 1.0 ? gap : pow(gap, p));
  }
  return sum(std::span<const T>(gaps)) * (1.0 / static_cast<double>(grid.size()));
}

using ReliabilityCurve = std::vector<std::pair<double, double>>;

/// (alpha_j, empirical CDF of the PITs at alpha_j).
ReliabilityCurve reliability_curve(std::span<const double> pits, const QuantileGrid& grid);

/// pce recomputed from a reliability curve.
double pce_from_curve(const ReliabilityCurve& curve);

struct NullDistribution {
  std::size_t n_test = 0;
  std::size_t runs = 1;  // statistic is the mean of this many independent PCEs
  std::vector<double> statistics;

  std::size_t n_sims() const { return statistics.size(); }
};

/// PCE of n_test independent U(0,1) PITs, replicated n_sims times (or the mean
/// of `runs` such PCEs per replicate). Replicate r uses split_seed(seed, r).
NullDistribution null_pce_distribution(std::size_t n_test, const QuantileGrid& grid, std::size_t n_sims,
                                       std::uint64_t seed, std::size_t runs = 1, std::size_t threads = 1);

/// (1 + #{s >= observed}) / (1 + n_sims)
double p_value(double observed_pce, const NullDistribution& null);

/// Holm step-down adjustment, returned in input order.
std::vector<double> holm_correct(std::span<const double> p_values);

/// Empirical quantile (linear interpolation) of the null statistics.
double null_quantile(const NullDistribution& null, double q);

}  // namespace prerankcal
