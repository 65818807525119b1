#include "prerankcal/pit.hpp"

#include <algorithm>
#include <optional>

#include "prerankcal/parallel.hpp"
#include "prerankcal/random.hpp"

namespace prerankcal {

ad::Var smooth_ecdf(std::span<const ad::Var> values, const ad::Var& t, double tau) {
  require(!values.empty(), "smooth_ecdf: need at least one value");
  require(tau > 0.0, "smooth_ecdf: tau must be positive");
  const double inv_s = 1.0 / static_cast<double>(values.size());
  ad::Tape* tape = t.tape() ? t.tape() : ad::tape_of(values);
  double acc = 0.0;
  double dt = 0.0;
  std::vector<double> dv;
  if (tape) dv.resize(values.size());
  for (std::size_t s = 0; s < values.size(); ++s) {
    const double sig = sigmoid(tau * (t.value() - values[s].value()));
    acc += sig;
    if (!tape) continue;
    const double g = inv_s * tau * sig * (1.0 - sig);
    dt += g;
    dv[s] = -g;
  }
  if (!tape) return ad::Var(acc * inv_s);
  auto b = tape->builder();
  b.add(t, dt);
  for (std::size_t s = 0; s < values.size(); ++s) b.add(values[s], dv[s]);
  return b.finish(acc * inv_s);
}

double hard_ecdf(std::span<const double> values, double t) {
  require(!values.empty(), "hard_ecdf: need at least one value");
  const auto below = std::count_if(values.begin(), values.end(), [t](double v) { return v <= t; });
  return static_cast<double>(below) / static_cast<double>(values.size());
}

double projected_pit(const PreRankSpec& spec, const ProjectionContext& ctx, std::span<const double> y,
                     PitMode mode, double tau, const PostTransform& post) {
  require(ctx.samples != nullptr && ctx.samples->size() >= 1, "projected_pit: context needs samples");
  check_context(spec, ctx.mixture != nullptr, true, ctx.pca != nullptr);
  auto [t, projected] = pit_projections(spec, ctx, y);
  if (post) {
    t = post(t);
    for (double& v : projected) v = post(v);
  }
  if (mode == PitMode::Hard) return hard_ecdf(projected, t);
  return smooth_ecdf<double>(projected, t, tau);
}

std::vector<PitBatch> pit_batches(std::span<const PreRankSpec> specs, const Predictor& model,
                                  const RowMatrix& features, const RowMatrix& targets,
                                  const PitOptions& options) {
  require(features.rows == targets.rows, "pit_batch: feature and target row counts differ");
  require(options.samples >= 1, "pit_batch: need S >= 1");
  const std::size_t n = features.rows;
  bool want_pca = false;
  for (const auto& spec : specs) {
    validate(spec, targets.cols);
    want_pca = want_pca || needs_pca(spec.kind);
  }
  std::vector<std::vector<double>> per_row(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    const MixtureParams mixture = model(features.row(i));
    require(mixture.dim == targets.cols, "pit_batch: model output dimension does not match targets");
    const SampleSet samples = sample(mixture, split_seed(options.seed, i), options.samples);
    std::optional<PcaBasis> basis;
    if (want_pca) basis = pca_of_samples(samples);
    ProjectionContext ctx{&mixture, &samples, basis ? &*basis : nullptr, options.tau};
    per_row[i].reserve(specs.size());
    for (const auto& spec : specs) {
      per_row[i].push_back(projected_pit(spec, ctx, targets.row(i), options.mode, options.tau));
    }
  });
  std::vector<PitBatch> out;
  out.reserve(specs.size());
  for (std::size_t j = 0; j < specs.size(); ++j) {
    PitBatch batch;
    batch.mode = options.mode;
    batch.tau = options.tau;
    batch.prerank = specs[j];
    batch.sample_count = options.samples;
    batch.pit_values.resize(n);
    for (std::size_t i = 0; i < n; ++i) batch.pit_values[i] = per_row[i][j];
    out.push_back(std::move(batch));
  }
  return out;
}

PitBatch pit_batch(const PreRankSpec& spec, const Predictor& model, const RowMatrix& features,
                   const RowMatrix& targets, const PitOptions& options) {
  return pit_batches(std::span<const PreRankSpec>(&spec, 1), model, features, targets, options).front();
}

}  // namespace prerankcal
