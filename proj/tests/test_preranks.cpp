#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "prerankcal/preranks.hpp"
#include "test_util.hpp"

using namespace prerankcal;
using prerankcal::testing::random_mixture;

namespace {

double proj(const PreRankSpec& spec, std::vector<double> y, const ProjectionContext& ctx = {}) {
  return project(spec, ctx, std::span<const double>(y));
}

PcaBasis axis_basis() {
  PcaBasis b;
  b.dim = 2;
  b.eigenvectors = {1, 0, 0, 1};
  b.eigenvalues = {1, 0};
  b.explained_variance_ratio = {1, 0};
  return b;
}

PcaBasis ratios(std::vector<double> r) {
  PcaBasis b;
  b.dim = r.size();
  b.explained_variance_ratio = std::move(r);
  return b;
}

std::vector<PreRankSpec> all_specs(std::size_t dim) {
  std::vector<PreRankSpec> out{PreRankSpec::location(), PreRankSpec::scale(), PreRankSpec::hdr(),
                               PreRankSpec::copula()};
  for (std::size_t d = 1; d <= dim; ++d) {
    out.push_back(PreRankSpec::marginal(d));
    out.push_back(PreRankSpec::pca(d));
  }
  for (std::size_t h = 1; h < dim; ++h) out.push_back(PreRankSpec::dependency(h));
  return out;
}

}  // namespace

TEST(Project, HandValues) {
  EXPECT_DOUBLE_EQ(proj(PreRankSpec::location(), {1, 2, 3}), 2.0);
  EXPECT_NEAR(proj(PreRankSpec::scale(), {1, 2, 3}), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(proj(PreRankSpec::dependency(1), {0, 1, 2}), -0.75, 1e-12);
  EXPECT_DOUBLE_EQ(proj(PreRankSpec::marginal(2), {7, -3, 4}), -3.0);
  const auto basis = axis_basis();
  ProjectionContext ctx;
  ctx.pca = &basis;
  EXPECT_DOUBLE_EQ(proj(PreRankSpec::pca(1), {5, 1}, ctx), 5.0);
}

TEST(Project, DependencyMatchesDirectFormula) {
  Rng rng = make_rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 2 + static_cast<std::size_t>(trial % 5);
    std::vector<double> y(dim);
    for (auto& v : y) v = normal(rng);
    for (std::size_t h = 1; h < dim; ++h) {
      double mean = 0.0;
      for (double v : y) mean += v / static_cast<double>(dim);
      double var = 0.0;
      for (double v : y) var += (v - mean) * (v - mean) / static_cast<double>(dim);
      double gamma = 0.0;
      for (std::size_t d = 0; d + h < dim; ++d) gamma += (y[d] - y[d + h]) * (y[d] - y[d + h]);
      gamma /= 2.0 * static_cast<double>(dim - h);
      EXPECT_NEAR(proj(PreRankSpec::dependency(h), y), -gamma / var, 1e-12);
    }
  }
}

TEST(Project, ConstantVectorHasZeroDependency) {
  EXPECT_EQ(proj(PreRankSpec::dependency(1), {4, 4, 4}), 0.0);
}

TEST(ProjectSamples, LocationOnTwoSamples) {
  SampleSet s;
  s.dim = 2;
  s.values = {0, 0, 2, 2};
  s.component_indices = {0, 0};
  ProjectionContext ctx;
  ctx.samples = &s;
  const auto out = project_samples(PreRankSpec::location(), ctx, s);
  EXPECT_EQ(out, (std::vector<double>{0.0, 2.0}));
}

TEST(ProjectSamples, HdrAtTheModeOfAStandardNormal) {
  const auto p = make_gaussian(std::vector<double>{0, 0}, std::vector<double>{1, 0, 0, 1});
  SampleSet s;
  s.dim = 2;
  s.values = {0, 0};
  s.component_indices = {0};
  ProjectionContext ctx{&p, &s, nullptr, 100.0};
  const auto out = project_samples(PreRankSpec::hdr(), ctx, s);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0], 1.0 / (2.0 * std::numbers::pi), 1e-15);
}

TEST(ProjectSamples, AgreesWithLoopedProject) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t dim = 2 + seed % 3;
    const auto p = random_mixture(2, dim, seed);
    const auto s = sample(p, seed, 12);
    const auto basis = pca_of_samples(s);
    ProjectionContext ctx{&p, &s, &basis, 100.0};
    for (const auto& spec : all_specs(dim)) {
      const auto batch = project_samples(spec, ctx, s);
      for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(batch[i], project(spec, ctx, s[i])) << label(spec);
    }
  }
}

TEST(ProjectSamples, CopulaIsSelfInclusive) {
  SampleSet s;
  s.dim = 2;
  s.values = {0, 0, 100, 100};
  s.component_indices = {0, 0};
  const auto p = make_gaussian(std::vector<double>{0, 0}, std::vector<double>{1, 0, 0, 1});
  ProjectionContext ctx{&p, &s, nullptr, 100.0};
  const auto out = project_samples(PreRankSpec::copula(), ctx, s);
  // the first sample sees only itself: 0.5^2 / 2
  EXPECT_NEAR(out[0], 0.125, 1e-12);
  EXPECT_NEAR(out[1], 0.625, 1e-12);
}

TEST(Project, LinearityOfLocationAndMarginal) {
  Rng rng = make_rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(4);
    for (auto& v : y) v = normal(rng);
    const double a = normal(rng), b = normal(rng);
    std::vector<double> t(4);
    for (std::size_t i = 0; i < 4; ++i) t[i] = a * y[i] + b;
    for (const auto& spec : {PreRankSpec::location(), PreRankSpec::marginal(3)}) {
      EXPECT_NEAR(proj(spec, t), a * proj(spec, y) + b, 1e-12);
    }
  }
}

TEST(Project, ScaleAndDependencyInvariances) {
  Rng rng = make_rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(5);
    for (auto& v : y) v = normal(rng);
    const double a = std::exp(normal(rng)), b = 3.0 * normal(rng);
    std::vector<double> shifted(5), affine(5);
    for (std::size_t i = 0; i < 5; ++i) {
      shifted[i] = y[i] + b;
      affine[i] = a * y[i] + b;
    }
    EXPECT_NEAR(proj(PreRankSpec::scale(), shifted), proj(PreRankSpec::scale(), y), 1e-12);
    for (std::size_t h = 1; h < 5; ++h) {
      EXPECT_NEAR(proj(PreRankSpec::dependency(h), affine), proj(PreRankSpec::dependency(h), y), 1e-12);
    }
  }
}

TEST(Project, HdrIsTheDensity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_mixture(3, 2, seed);
    const auto s = sample(p, seed, 5);
    ProjectionContext ctx{&p, &s, nullptr, 100.0};
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double expected = std::exp(log_density(p, s[i]));
      EXPECT_NEAR(project(PreRankSpec::hdr(), ctx, s[i]), expected, 1e-12 * expected);
    }
  }
}

TEST(Project, PcaOfSampleMeanIsMeanOfProjections) {
  const auto p = random_mixture(2, 3, 8);
  const auto s = sample(p, 8, 30);
  const auto basis = pca_of_samples(s);
  ProjectionContext ctx{&p, &s, &basis, 100.0};
  std::vector<double> mean(3, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t d = 0; d < 3; ++d) mean[d] += s[i][d] / static_cast<double>(s.size());
  }
  for (std::size_t c = 1; c <= 3; ++c) {
    const auto values = project_samples(PreRankSpec::pca(c), ctx, s);
    double avg = 0.0;
    for (double v : values) avg += v / static_cast<double>(values.size());
    EXPECT_NEAR(project(PreRankSpec::pca(c), ctx, std::span<const double>(mean)), avg, 1e-12);
  }
}

TEST(Project, MissingContextIsAContractViolation) {
  const std::vector<double> y{1, 2};
  const ProjectionContext empty;
  EXPECT_THROW(project(PreRankSpec::hdr(), empty, y), ContractViolation);
  EXPECT_THROW(project(PreRankSpec::copula(), empty, y), ContractViolation);
  EXPECT_THROW(project(PreRankSpec::pca(1), empty, y), ContractViolation);
  EXPECT_THROW(check_context(PreRankSpec::hdr(), false, true, false), ContractViolation);
}

TEST(TopComponents, Examples) {
  EXPECT_EQ(top_components(ratios({0.9, 0.1}), 0.8), 1u);
  EXPECT_EQ(top_components(ratios({0.5, 0.3, 0.2}), 0.8), 2u);
  EXPECT_EQ(top_components(ratios({0.25, 0.25, 0.25, 0.25}), 1.0), 4u);
  EXPECT_EQ(top_components(ratios({0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}), 1.0), 10u);
}

TEST(PreRankSpec, ValidationNamesTheConstraint) {
  try {
    validate(PreRankSpec::dependency(), 1);
    FAIL() << "expected a contract violation";
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("D >= 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(validate(PreRankSpec::marginal(3), 2), ContractViolation);
  EXPECT_THROW(validate(PreRankSpec::marginal(0), 2), ContractViolation);
  EXPECT_THROW(validate(PreRankSpec::pca(3), 2), ContractViolation);
  EXPECT_THROW(validate(PreRankSpec::dependency(2), 2), ContractViolation);
  EXPECT_NO_THROW(validate(PreRankSpec::dependency(2), 3));
  EXPECT_NO_THROW(validate(PreRankSpec::scale(), 1));
}

TEST(PreRankSpec, TokensAndLabelsRoundTrip) {
  for (auto kind : {PreRankKind::Marginal, PreRankKind::Location, PreRankKind::Scale, PreRankKind::Dependency,
                    PreRankKind::Pca, PreRankKind::Hdr, PreRankKind::Copula}) {
    EXPECT_EQ(parse_kind(kind_token(kind)), kind);
  }
  EXPECT_FALSE(parse_kind("Location").has_value());
  for (const auto& spec : all_specs(4)) EXPECT_EQ(parse_label(label(spec)), spec) << label(spec);
  EXPECT_EQ(label(PreRankSpec::dependency(2)), "dependency_h2");
  EXPECT_EQ(parse_label("marginal"), PreRankSpec::marginal(1));
  EXPECT_FALSE(parse_label("marginal_x").has_value());
  EXPECT_FALSE(parse_label("location_2").has_value());
}
