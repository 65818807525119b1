#include "prerankcal/scoring.hpp"

namespace prerankcal {

double nll(const MixtureParams& params, std::span<const double> y) { return -log_density(params, y); }

double energy_score(const SampleSet& samples, std::span<const double> y) {
  return energy_score<double>(samples, y);
}

}  // namespace prerankcal
