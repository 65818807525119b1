#include "prerankcal/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "prerankcal/parallel.hpp"
#include "prerankcal/random.hpp"

namespace prerankcal {

QuantileGrid QuantileGrid::uniform(std::size_t m) {
  require(m >= 1, "quantile grid: M must be at least 1");
  QuantileGrid grid;
  grid.levels.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    grid.levels[j] = static_cast<double>(j + 1) / static_cast<double>(m + 1);
  }
  return grid;
}

namespace {

// Counts #{Z <= alpha_j} for every level with one pass over the sorted PITs.
std::vector<std::size_t> cumulative_counts(std::vector<double> sorted, const QuantileGrid& grid) {
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> counts(grid.size());
  std::size_t i = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    while (i < sorted.size() && sorted[i] <= grid.levels[j]) ++i;
    counts[j] = i;
  }
  return counts;
}

}  // namespace

ReliabilityCurve reliability_curve(std::span<const double> pits, const QuantileGrid& grid) {
  if (pits.empty()) throw UndefinedMetric("reliability curve: no PIT values");
  const auto counts = cumulative_counts(std::vector<double>(pits.begin(), pits.end()), grid);
  const double n = static_cast<double>(pits.size());
  ReliabilityCurve curve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    curve[j] = {grid.levels[j], static_cast<double>(counts[j]) / n};
  }
  return curve;
}

double pce_from_curve(const ReliabilityCurve& curve) {
  double acc = 0.0;
  for (const auto& [alpha, cdf] : curve) acc += std::abs(alpha - cdf);
  return acc / static_cast<double>(curve.size());
}

double pce(std::span<const double> pits, const QuantileGrid& grid) {
  if (pits.empty()) throw UndefinedMetric("PCE is undefined for an empty PIT batch");
  return pce_from_curve(reliability_curve(pits, grid));
}

double pce(const PitBatch& pits, const QuantileGrid& grid) { return pce(pits.pit_values, grid); }

NullDistribution null_pce_distribution(std::size_t n_test, const QuantileGrid& grid, std::size_t n_sims,
                                       std::uint64_t seed, std::size_t runs, std::size_t threads) {
  require(n_test >= 1, "null distribution: n_test must be at least 1");
  require(n_sims >= 1, "null distribution: n_sims must be at least 1");
  require(runs >= 1, "null distribution: runs must be at least 1");
  NullDistribution null;
  null.n_test = n_test;
  null.runs = runs;
  null.statistics.resize(n_sims);
  parallel_for(n_sims, threads, [&](std::size_t r) {
    Rng rng = make_rng(split_seed(seed, r));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> pits(n_test);
    double acc = 0.0;
    for (std::size_t k = 0; k < runs; ++k) {
      for (double& z : pits) z = unif(rng);
      acc += pce(pits, grid);
    }
    null.statistics[r] = acc / static_cast<double>(runs);
  });
  return null;
}

double p_value(double observed_pce, const NullDistribution& null) {
  const auto exceed = std::count_if(null.statistics.begin(), null.statistics.end(),
                                    [observed_pce](double s) { return s >= observed_pce; });
  return (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(null.n_sims()));
}

std::vector<double> holm_correct(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t rank = 0; rank < m; ++rank) {
    const double scaled = std::min(1.0, static_cast<double>(m - rank) * p_values[order[rank]]);
    running = std::max(running, scaled);
    adjusted[order[rank]] = running;
  }
  return adjusted;
}

double null_quantile(const NullDistribution& null, double q) {
  require(!null.statistics.empty(), "null_quantile: empty null distribution");
  std::vector<double> sorted = null.statistics;
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace prerankcal
