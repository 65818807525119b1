#pragma once

// Pre-rank functions rho(x, y): scalar projections of a multivariate outcome
// under the predictive distribution for x.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prerankcal/distributions.hpp"

namespace prerankcal {

enum class PreRankKind { Marginal, Location, Scale, Dependency, Pca, Hdr, Copula };

struct PreRankSpec {
  PreRankKind kind = PreRankKind::Location;
  std::size_t index = 1;  // 1-based coordinate (Marginal) or component (Pca)
  std::size_t lag = 1;    // Dependency
  double explained_variance_threshold = 0.8;

  static PreRankSpec marginal(std::size_t d) { return {PreRankKind::Marginal, d}; }
  static PreRankSpec location() { return {PreRankKind::Location}; }
  static PreRankSpec scale() { return {PreRankKind::Scale}; }
  static PreRankSpec dependency(std::size_t h = 1) { return {PreRankKind::Dependency, 1, h}; }
  static PreRankSpec pca(std::size_t d) { return {PreRankKind::Pca, d}; }
  static PreRankSpec hdr() { return {PreRankKind::Hdr}; }
  static PreRankSpec copula() { return {PreRankKind::Copula}; }

  bool operator==(const PreRankSpec&) const = default;
};

/// Lowercase token: marginal, location, scale, dependency, pca, hdr, copula.
std::string_view kind_token(PreRankKind kind);
std::optional<PreRankKind> parse_kind(std::string_view token);
/// Token plus index where one applies, e.g. "marginal_2", "pca_1", "dependency".
std::string label(const PreRankSpec& spec);
/// Inverse of label; a bare family token selects index 1 or lag 1.
std::optional<PreRankSpec> parse_label(std::string_view text);

/// Throws ContractViolation naming the broken constraint.
void validate(const PreRankSpec& spec, std::size_t dim);

bool needs_mixture(PreRankKind kind);
bool needs_pca(PreRankKind kind);

template <typename T>
struct BasicProjectionContext {
  const BasicMixture<T>* mixture = nullptr;
  const BasicSampleSet<T>* samples = nullptr;
  const PcaBasis* pca = nullptr;
  double tau = 100.0;
};

using ProjectionContext = BasicProjectionContext<double>;
using VarProjectionContext = BasicProjectionContext<ad::Var>;

void check_context(const PreRankSpec& spec, bool has_mixture, bool has_samples, bool has_pca);

template <typename T>
T project(const PreRankSpec& spec, const BasicProjectionContext<T>& ctx, std::span<const T> y) {
  using std::exp;
  const std::size_t d_count = y.size();
  switch (spec.kind) {
    case PreRankKind::Marginal:
      require(spec.index >= 1 && spec.index <= d_count, "marginal pre-rank: index out of range");
      return y[spec.index - 1];
    case PreRankKind::Location:
      return sum(y) * (1.0 / static_cast<double>(d_count));
    case PreRankKind::Scale: {
      const T mean = sum(y) * (1.0 / static_cast<double>(d_count));
      std::vector<T> sq(d_count);
      for (std::size_t i = 0; i < d_count; ++i) {
        const T c = y[i] - mean;
        sq[i] = c * c;
      }
      return sum(std::span<const T>(sq)) * (1.0 / static_cast<double>(d_count));
    }
    case PreRankKind::Dependency: {
      const std::size_t h = spec.lag;
      require(d_count >= 2 && h >= 1 && h < d_count, "dependency pre-rank: needs D >= 2 and 1 <= h < D");
      const T mean = sum(y) * (1.0 / static_cast<double>(d_count));
      std::vector<T> sq(d_count);
      for (std::size_t i = 0; i < d_count; ++i) {
        const T c = y[i] - mean;
        sq[i] = c * c;
      }
      const T variance = sum(std::span<const T>(sq)) * (1.0 / static_cast<double>(d_count));
      // constant y: gamma is 0 as well, no dependency signal
      if (value_of(variance) <= 0.0) return T(0.0);
      std::vector<T> diffs(d_count - h);
      for (std::size_t i = 0; i + h < d_count; ++i) {
        const T diff = y[i] - y[i + h];
        diffs[i] = diff * diff;
      }
      const T gamma = sum(std::span<const T>(diffs)) * (1.0 / (2.0 * static_cast<double>(d_count - h)));
      return -(gamma / variance);
    }
    case PreRankKind::Pca:
      require(ctx.pca != nullptr, "pca pre-rank: context has no PCA basis");
      require(spec.index >= 1 && spec.index <= ctx.pca->dim, "pca pre-rank: component out of range");
      return dot(y, ctx.pca->component(spec.index - 1));
    case PreRankKind::Hdr:
      require(ctx.mixture != nullptr, "hdr pre-rank: context has no mixture");
      return exp(log_density(*ctx.mixture, y));
    case PreRankKind::Copula:
      require(ctx.samples != nullptr, "copula pre-rank: context has no samples");
      return smooth_orthant_cdf(y, *ctx.samples, ctx.tau);
  }
  throw ContractViolation("project: unknown pre-rank kind");
}

/// project applied to every sample of `samples`. Copula values are estimated
/// against ctx.samples including the sample itself.
template <typename T>
std::vector<T> project_samples(const PreRankSpec& spec, const BasicProjectionContext<T>& ctx,
                               const BasicSampleSet<T>& samples) {
  std::vector<T> out;
  out.reserve(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) out.push_back(project(spec, ctx, samples[s]));
  return out;
}

/// Projected observation and projected samples, ready for a PIT. For the
/// copula the observation joins the pool: every value, the observation's
/// included, is a self-inclusive orthant estimate over the same S+1 points,
/// which keeps the S+1 values exchangeable under a calibrated forecast.
template <typename T>
std::pair<T, std::vector<T>> pit_projections(const PreRankSpec& spec, const BasicProjectionContext<T>& ctx,
                                             std::span<const T> y) {
  require(ctx.samples != nullptr, "pit_projections: context has no samples");
  if (spec.kind != PreRankKind::Copula) return {project(spec, ctx, y), project_samples(spec, ctx, *ctx.samples)};
  BasicSampleSet<T> pooled = *ctx.samples;
  require(y.size() == pooled.dim, "pit_projections: dimension mismatch");
  pooled.values.insert(pooled.values.end(), y.begin(), y.end());
  pooled.component_indices.push_back(0);
  BasicProjectionContext<T> inner = ctx;
  inner.samples = &pooled;
  std::vector<T> values;
  values.reserve(ctx.samples->size());
  for (std::size_t s = 0; s < ctx.samples->size(); ++s) values.push_back(project(spec, inner, pooled[s]));
  return {project(spec, inner, y), std::move(values)};
}

double project(const PreRankSpec& spec, const ProjectionContext& ctx, std::span<const double> y);

/// Smallest d* with cumulative explained variance >= threshold, in [1, D].
std::size_t top_components(const PcaBasis& basis, double threshold);

}  // namespace prerankcal
