#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "gradient_check.hpp"
#include "prerankcal/data.hpp"
#include "prerankcal/scoring.hpp"
#include "prerankcal/training.hpp"

using namespace prerankcal;
using prerankcal::testing::GradientCase;
using prerankcal::testing::gradient_relative_error;

namespace {

NetworkConfig tiny_config(std::size_t input_dim, std::size_t output_dim) {
  NetworkConfig c;
  c.input_dim = input_dim;
  c.output_dim = output_dim;
  c.components = 2;
  c.hidden = {8};
  return c;
}

RowMatrix normal_rows(std::size_t n, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix m(n, cols);
  for (auto& v : m.data) v = normal(rng);
  return m;
}

DataSplits small_splits(SynthKind kind, std::size_t n, std::uint64_t seed) {
  SplitSpec spec;
  spec.seed = seed;
  return split(synth(kind, n, seed).data, spec);
}

}  // namespace

TEST(Objective, WithoutRegularizerIsTheMeanNll) {
  const auto c = tiny_config(3, 2);
  const auto w = init_weights(c, 1);
  const auto x = normal_rows(10, 3, 2);
  const auto y = normal_rows(10, 2, 3);
  const RegularizerConfig reg;
  const auto value = objective(c, w, x, y, reg, ScoreKind::Nll, 4, false);
  double expected = 0.0;
  for (std::size_t i = 0; i < 10; ++i) expected += nll(forward(w, c, x.row(i)), y.row(i)) / 10.0;
  EXPECT_NEAR(value.total, expected, 1e-12);
  EXPECT_EQ(value.regularizer, 0.0);
  EXPECT_TRUE(value.gradient.empty());
}

TEST(Objective, DecomposesIntoScorePlusLambdaTimesPenalty) {
  const auto c = tiny_config(3, 2);
  const auto w = init_weights(c, 5);
  const auto x = normal_rows(12, 3, 6);
  const auto y = normal_rows(12, 2, 7);
  RegularizerConfig reg;
  reg.prerank = PreRankSpec::hdr();
  reg.composition = Composition::MarginalPlus;
  const auto base = objective(c, w, x, y, reg, ScoreKind::Nll, 8, false, true);
  EXPECT_GT(base.regularizer, 0.0);
  EXPECT_EQ(base.total, base.score);
  for (double lambda : {0.5, 2.0, 10.0}) {
    reg.lambda = lambda;
    const auto value = objective(c, w, x, y, reg, ScoreKind::Nll, 8, false);
    EXPECT_NEAR(value.score, base.score, 1e-12);
    EXPECT_NEAR(value.total - base.score, lambda * base.regularizer, 1e-12);
  }
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  const std::vector<GradientCase> cases{
      {ScoreKind::Nll, 0.0, Composition::Plain, PreRankSpec::location()},
      {ScoreKind::Energy, 0.0, Composition::Plain, PreRankSpec::location()},
      {ScoreKind::Nll, 1.0, Composition::Plain, PreRankSpec::location()},
      {ScoreKind::Nll, 1.0, Composition::Plain, PreRankSpec::scale()},
      {ScoreKind::Nll, 1.0, Composition::Plain, PreRankSpec::hdr()},
      {ScoreKind::Nll, 1.0, Composition::Plain, PreRankSpec::copula()},
      {ScoreKind::Nll, 1.0, Composition::Plain, PreRankSpec::dependency(1)},
      {ScoreKind::Energy, 2.0, Composition::Plain, PreRankSpec::marginal(2)},
      {ScoreKind::Nll, 1.0, Composition::Plain, PreRankSpec::pca(1)},
      {ScoreKind::Nll, 1.0, Composition::MarginalPlus, PreRankSpec::copula()},
      {ScoreKind::Nll, 1.0, Composition::PcaPlus, PreRankSpec::location()},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      EXPECT_LE(gradient_relative_error(c, seed), 1e-4)
          << label(c.prerank) << " " << composition_token(c.composition) << " seed " << seed;
    }
  }
}

TEST(BuildLoss, MarginalOnOneDimensionIsTheUnivariatePenalty) {
  const std::size_t n = 30;
  ad::Tape tape;
  std::vector<VarMixture> mixtures;
  RowMatrix y(n, 1);
  Rng rng = make_rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    VarMixture m(1, 1);
    m.weights[0] = ad::Var(1.0);
    m.means[0] = tape.variable(normal(rng));
    m.chol[0] = tape.variable(1.0 + 0.1 * std::abs(normal(rng)));
    mixtures.push_back(m);
    y(i, 0) = normal(rng);
  }
  RegularizerConfig reg;
  reg.prerank = PreRankSpec::marginal(1);
  reg.samples = 50;
  FrozenState frozen;
  const auto parts = build_loss(mixtures, y, reg, ScoreKind::Nll, 3, true, &frozen);
  ASSERT_EQ(frozen.noise.size(), n);

  std::vector<double> pits(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = materialize(values_of(mixtures[i]), frozen.noise[i]);
    pits[i] = smooth_ecdf<double>(s.values, y(i, 0), reg.tau);
  }
  const double expected = pce_kde<double>(pits, QuantileGrid::uniform(reg.grid_size), reg.tau, reg.p);
  EXPECT_NEAR(parts.regularizer.value(), expected, 1e-12);
}

TEST(BuildLoss, ReparametrizedGradientIsUnbiased) {
  // d/dmu E[(mu + sigma z - c)^2] = 2 (mu - c)
  ad::Tape tape;
  VarMixture m(1, 1);
  m.weights[0] = ad::Var(1.0);
  const double mu = 0.7, sigma = 1.3, target = -0.4;
  m.means[0] = tape.variable(mu);
  m.chol[0] = ad::Var(sigma);
  const auto noise = draw_noise(std::vector<double>{1.0}, 1, 11, 200000);
  const auto s = materialize(m, noise);
  std::vector<ad::Var> sq;
  for (const auto& v : s.values) sq.push_back((v - target) * (v - target));
  const ad::Var mean = sum(std::span<const ad::Var>(sq)) * (1.0 / static_cast<double>(sq.size()));
  const auto adj = tape.adjoints(mean);
  EXPECT_NEAR(adj[m.means[0].index()], 2.0 * (mu - target), 0.02);
}

TEST(Regularizer, TermsOfEachComposition) {
  RegularizerConfig reg;
  reg.prerank = PreRankSpec::copula();
  auto terms = regularizer_terms(reg, 3, 0);
  ASSERT_EQ(terms.size(), 1u);
  EXPECT_EQ(terms[0].weight, 1.0);

  reg.composition = Composition::MarginalPlus;
  terms = regularizer_terms(reg, 3, 0);
  ASSERT_EQ(terms.size(), 4u);
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_EQ(terms[d].spec, PreRankSpec::marginal(d + 1));
    EXPECT_DOUBLE_EQ(terms[d].weight, 1.0 / 3.0);
  }
  EXPECT_EQ(terms[3].spec, PreRankSpec::copula());

  reg.composition = Composition::PcaPlus;
  terms = regularizer_terms(reg, 5, 2);
  ASSERT_EQ(terms.size(), 3u);
  EXPECT_EQ(terms[1].spec, PreRankSpec::pca(2));
  EXPECT_DOUBLE_EQ(terms[1].weight, 0.5);
  EXPECT_THROW(regularizer_terms(reg, 5, 0), ContractViolation);
}

TEST(Regularizer, PooledComponentsFindTheDominantDirection) {
  std::vector<SampleSet> sets;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto p = make_gaussian(std::vector<double>{0, 0, 0}, std::vector<double>{3, 0, 0, 2.9, 0.3, 0, 3, 0, 0.3});
    sets.push_back(sample(p, i, 200));
  }
  EXPECT_EQ(pooled_top_components(sets, 0.8), 1u);
  EXPECT_EQ(pooled_top_components(sets, 1.0), 3u);
}

TEST(Regularizer, ConfigValidation) {
  RegularizerConfig reg;
  EXPECT_NO_THROW(reg.validate(2));
  reg.lambda = -1.0;
  EXPECT_THROW(reg.validate(2), ContractViolation);
  reg.lambda = 1.0;
  reg.prerank = PreRankSpec::dependency();
  EXPECT_THROW(reg.validate(1), ContractViolation);
  reg.prerank = PreRankSpec::pca(1);
  reg.samples = 1;
  EXPECT_THROW(reg.validate(2), ContractViolation);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  EXPECT_THROW(tc.validate(), ContractViolation);
  EXPECT_EQ(parse_composition("marginal_plus"), Composition::MarginalPlus);
  EXPECT_FALSE(parse_composition("both").has_value());
}

TEST(Train, DeterministicAndTracksTheBestEpoch) {
  const auto splits = small_splits(SynthKind::Bimodal, 400, 3);
  const auto c = tiny_config(2, 2);
  TrainConfig tc;
  tc.max_epochs = 6;
  tc.batch_size = 64;
  tc.learning_rate = 1e-2;
  tc.seed = 9;
  RegularizerConfig reg;
  reg.lambda = 1.0;
  reg.samples = 20;
  const auto a = train(c, tc, reg, splits.train, splits.val);
  const auto b = train(c, tc, reg, splits.train, splits.val);
  EXPECT_EQ(a.weights.params, b.weights.params);
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  ASSERT_FALSE(a.history.epochs.empty());
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    const auto& e = a.history.epochs[i];
    EXPECT_NEAR(e.val_objective, e.val_score + reg.lambda * e.val_pce, 1e-12);
    if (e.val_objective < best) {
      best = e.val_objective;
      best_index = i;
    }
  }
  EXPECT_EQ(a.history.best_epoch, best_index);
  const auto csv = a.history.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,val_score,val_objective,val_pce,val_pce_location");
}

TEST(Train, EarlyStoppingRespectsPatience) {
  const auto splits = small_splits(SynthKind::LinearGaussian, 300, 4);
  const auto c = tiny_config(4, 3);
  TrainConfig tc;
  tc.max_epochs = 40;
  tc.patience = 2;
  tc.learning_rate = 0.5;  // large steps make the validation loss wander
  tc.batch_size = 32;
  const auto result = train(c, tc, RegularizerConfig{}, splits.train, splits.val);
  const auto& h = result.history;
  EXPECT_LE(h.epochs.size(), h.best_epoch + 1 + tc.patience);
  if (h.epochs.size() < tc.max_epochs) {
    EXPECT_EQ(h.epochs.size(), h.best_epoch + 1 + tc.patience);
  }
}

TEST(Train, NonFiniteLossIsANumericFailure) {
  auto splits = small_splits(SynthKind::LinearGaussian, 100, 5);
  for (auto& v : splits.train.targets.data) v = 1e200;
  TrainConfig tc;
  tc.max_epochs = 2;
  try {
    train(tiny_config(4, 3), tc, RegularizerConfig{}, splits.train, splits.val);
    FAIL() << "expected a numeric failure";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 0"), std::string::npos) << e.what();
  }
}

TEST(Train, ApproachesTheBayesNllOnLinearGaussianData) {
  const auto data = synth(SynthKind::LinearGaussian, 6000, 21);
  SplitSpec spec;
  spec.seed = 21;
  const auto splits = split(data.data, spec);
  NetworkConfig c;
  c.input_dim = 4;
  c.output_dim = 3;
  c.components = 1;
  c.hidden = {32};
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 128;
  tc.max_epochs = 80;
  tc.patience = 10;
  const auto result = train(c, tc, RegularizerConfig{}, splits.train, splits.val);
  const auto truth = standardized_truth(data.truth, splits.standardization);
  const auto model = make_predictor(c, result.weights);
  double model_nll = 0.0, bayes_nll = 0.0;
  const auto& test = splits.test;
  for (std::size_t i = 0; i < test.size(); ++i) {
    model_nll += nll(model(test.features.row(i)), test.targets.row(i)) / static_cast<double>(test.size());
    bayes_nll += nll(truth(test.features.row(i)), test.targets.row(i)) / static_cast<double>(test.size());
  }
  EXPECT_LE(model_nll, bayes_nll + 0.1);
}

TEST(SelectLambda, PicksLowestPceWithinTheEnergyBudget) {
  const std::vector<LambdaTrial> trials{{0.0, 0.10, 1.00, false}, {1.0, 0.05, 1.02, false}, {10.0, 0.01, 1.15, false}};
  const auto result = select_lambda(trials, 1.0);
  EXPECT_EQ(result.selected, 1.0);
  EXPECT_DOUBLE_EQ(result.budget, 1.1);
  EXPECT_TRUE(result.trials[0].within_budget);
  EXPECT_TRUE(result.trials[1].within_budget);
  EXPECT_FALSE(result.trials[2].within_budget);
}

TEST(SelectLambda, DegenerateGridsAndTies) {
  EXPECT_EQ(select_lambda({{0.0, 0.2, 1.0, false}}, 1.0).selected, 0.0);
  EXPECT_EQ(select_lambda({{1.0, 0.1, 1.0, false}, {0.0, 0.1, 1.0, false}}, 1.0).selected, 0.0);
  EXPECT_EQ(select_lambda({{5.0, 0.1, 1.0, false}, {1.0, 0.1, 1.0, false}, {0.0, 0.3, 1.0, false}}, 1.0).selected, 1.0);
}

TEST(TuneLambda, GridMustContainZero) {
  const auto splits = small_splits(SynthKind::Bimodal, 100, 1);
  const std::vector<double> grid{1.0, 5.0};
  EXPECT_THROW(tune_lambda(grid, tiny_config(2, 2), TrainConfig{}, RegularizerConfig{}, splits.train, splits.val),
               ContractViolation);
}
