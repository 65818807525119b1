#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "prerankcal/autodiff.hpp"
#include "prerankcal/distributions.hpp"
#include "prerankcal/pit.hpp"
#include "test_util.hpp"

using namespace prerankcal;
using namespace prerankcal::ad;
using prerankcal::testing::numeric_gradient;
using prerankcal::testing::relative_error;
using std::abs;
using std::exp;
using std::log;
using std::pow;
using std::sqrt;

namespace {

using ScalarFn = std::function<double(std::span<const double>)>;
using VarFn = std::function<Var(std::span<const Var>)>;

struct Primitive {
  const char* name;
  std::size_t arity;
  ScalarFn plain;
  VarFn taped;
  double lo = -2.0;
  double hi = 2.0;
};

// Same expression for both scalar types.
#define PRIMITIVE(NAME, ARITY, LO, HI, EXPR)                                  \
  Primitive {                                                                 \
    NAME, ARITY, [](std::span<const double> x) -> double { return EXPR; },    \
        [](std::span<const Var> x) -> Var { return EXPR; }, LO, HI            \
  }

std::vector<Primitive> primitives() {
  return {
      PRIMITIVE("add", 2, -2.0, 2.0, x[0] + x[1]),
      PRIMITIVE("sub", 2, -2.0, 2.0, x[0] - x[1] * 3.0),
      PRIMITIVE("mul", 2, -2.0, 2.0, x[0] * x[1]),
      PRIMITIVE("div", 2, 0.5, 2.0, x[0] / x[1]),
      PRIMITIVE("neg", 1, -2.0, 2.0, -x[0] * 2.0),
      PRIMITIVE("exp", 1, -2.0, 2.0, exp(x[0])),
      PRIMITIVE("log", 1, 0.2, 3.0, log(x[0])),
      PRIMITIVE("sqrt", 1, 0.2, 3.0, sqrt(x[0])),
      PRIMITIVE("pow", 1, 0.2, 3.0, pow(x[0], 2.5)),
      PRIMITIVE("abs", 1, 0.1, 2.0, abs(x[0]) + abs(-x[0] * 2.0)),
      PRIMITIVE("sigmoid", 1, -4.0, 4.0, sigmoid(x[0])),
      PRIMITIVE("softplus", 1, -4.0, 4.0, softplus(x[0])),
      PRIMITIVE("relu", 1, 0.1, 2.0, relu(x[0]) + relu(-x[0])),
      PRIMITIVE("sum", 4, -2.0, 2.0, sum(x) * x[0]),
      PRIMITIVE("dot", 3, -2.0, 2.0, dot(x, std::vector<double>{0.5, -1.5, 2.0})),
      PRIMITIVE("affine", 3, -2.0, 2.0, affine(x[0], x.subspan(1), std::vector<double>{0.7, -0.2})),
      PRIMITIVE("log_sum_exp", 4, -3.0, 3.0, log_sum_exp(x)),
      PRIMITIVE("distance", 4, -2.0, 2.0, distance(x.subspan(0, 2), x.subspan(2, 2))),
      PRIMITIVE("chain", 3, -1.0, 1.0, log(softplus(x[0] * x[1]) + exp(x[2]) * sigmoid(x[0] - x[2]))),
  };
}

#undef PRIMITIVE

}  // namespace

TEST(Autodiff, HalfSquaredNormGradientIsTheta) {
  const std::vector<double> theta{0.3, -1.2, 2.5, 0.0};
  const auto g = gradient(
      [](std::span<const Var> x) {
        Var acc(0.0);
        for (const auto& v : x) acc += v * v;
        return acc * 0.5;
      },
      theta);
  for (std::size_t i = 0; i < theta.size(); ++i) EXPECT_DOUBLE_EQ(g[i], theta[i]);
}

TEST(Autodiff, SigmoidDerivativeAtZero) {
  const std::vector<double> theta{0.0};
  const auto g = gradient([](std::span<const Var> x) { return sigmoid(x[0]); }, theta);
  EXPECT_DOUBLE_EQ(g[0], 0.25);
}

TEST(Autodiff, PrimitivesMatchCentralDifferences) {
  Rng rng = make_rng(7);
  for (const auto& prim : primitives()) {
    std::uniform_real_distribution<double> unif(prim.lo, prim.hi);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(prim.arity);
      for (auto& v : x) v = unif(rng);
      const auto reverse = gradient(prim.taped, x);
      const auto numeric = numeric_gradient(prim.plain, x, 1e-6);
      EXPECT_LE(relative_error(reverse, numeric), 1e-6) << prim.name << " trial " << trial;
      // the taped value equals the plain value
      Tape tape;
      std::vector<Var> vars;
      for (double v : x) vars.push_back(tape.variable(v));
      EXPECT_NEAR(prim.taped(vars).value(), prim.plain(x), 1e-12 * (1.0 + std::abs(prim.plain(x)))) << prim.name;
    }
  }
}

TEST(Autodiff, FusedCdfNodesMatchCentralDifferences) {
  Rng rng = make_rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    // 2 coordinates of y followed by 5 samples of dimension 2
    std::vector<double> theta(12);
    for (auto& v : theta) v = normal(rng);
    auto orthant = [](auto x, double tau) {
      using T = std::remove_cvref_t<decltype(x[0])>;
      BasicSampleSet<T> s;
      s.dim = 2;
      s.values.assign(x.begin() + 2, x.end());
      s.component_indices.assign(5, 0);
      return smooth_orthant_cdf(x.subspan(0, 2), s, tau);
    };
    const auto rev = gradient([&](std::span<const Var> x) { return orthant(x, 3.0); }, theta);
    const auto num = numeric_gradient([&](std::span<const double> x) { return orthant(x, 3.0); }, theta);
    EXPECT_LE(relative_error(rev, num), 1e-6);

    auto ecdf = [](auto x) { return smooth_ecdf(x.subspan(1), x[0], 2.0); };
    const auto rev2 = gradient([&](std::span<const Var> x) { return ecdf(x); }, theta);
    const auto num2 = numeric_gradient([&](std::span<const double> x) { return ecdf(x); }, theta);
    EXPECT_LE(relative_error(rev2, num2), 1e-6);
  }
}

TEST(Autodiff, KinkConventions) {
  const std::vector<double> zero{0.0};
  EXPECT_EQ(gradient([](std::span<const Var> x) { return abs(x[0]); }, zero)[0], 0.0);
  EXPECT_EQ(gradient([](std::span<const Var> x) { return sqrt(x[0]); }, zero)[0], 0.0);
  const std::vector<double> same{1.0, 2.0, 1.0, 2.0};
  const auto g = gradient([](std::span<const Var> x) { return distance(x.subspan(0, 2), x.subspan(2, 2)); }, same);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, ReusedNodesAccumulate) {
  const std::vector<double> theta{3.0};
  const auto g = gradient(
      [](std::span<const Var> x) {
        const Var y = x[0] * x[0];
        return y * x[0] + y;  // x^3 + x^2
      },
      theta);
  EXPECT_DOUBLE_EQ(g[0], 3.0 * 9.0 + 2.0 * 3.0);
}

TEST(Autodiff, ConstantsStayOffTheTape) {
  Tape tape;
  const Var x = tape.variable(2.0);
  const Var c(5.0);
  EXPECT_TRUE(c.is_constant());
  EXPECT_TRUE((c * 3.0).is_constant());
  const std::size_t before = tape.edge_count();
  const Var y = x * c;
  EXPECT_EQ(tape.edge_count(), before + 1);
  const auto adj = tape.adjoints(y);
  EXPECT_DOUBLE_EQ(adj[x.index()], 5.0);
}

TEST(Autodiff, MixingTapesIsRejected) {
  Tape a;
  Tape b;
  const Var x = a.variable(1.0);
  const Var y = b.variable(2.0);
  EXPECT_THROW(x + y, ContractViolation);
}
