#include "prerankcal/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace prerankcal::ad {

void Tape::clear() {
  values_.clear();
  offsets_.assign(1, 0);
  parents_.clear();
  partials_.clear();
}

void Tape::reserve(std::size_t nodes, std::size_t edges) {
  values_.reserve(nodes);
  offsets_.reserve(nodes + 1);
  parents_.reserve(edges);
  partials_.reserve(edges);
}

std::vector<double> Tape::adjoints(const Var& output) const {
  std::vector<double> adj(values_.size(), 0.0);
  if (output.is_constant()) return adj;
  require(output.tape() == this, "autodiff: output belongs to a different tape");
  adj[output.index()] = 1.0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    const double a = adj[i];
    if (a == 0.0) continue;
    for (std::uint32_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
      adj[parents_[k]] += a * partials_[k];
    }
  }
  return adj;
}

Tape* tape_of(std::span<const Var> xs) {
  for (const auto& x : xs) {
    if (x.tape()) return x.tape();
  }
  return nullptr;
}

Var operator+(const Var& a, const Var& b) {
  const double v = a.value() + b.value();
  Tape* t = tape_of(a, b);
  return t ? t->binary(v, a, 1.0, b, 1.0) : Var(v);
}

Var operator-(const Var& a, const Var& b) {
  const double v = a.value() - b.value();
  Tape* t = tape_of(a, b);
  return t ? t->binary(v, a, 1.0, b, -1.0) : Var(v);
}

Var operator*(const Var& a, const Var& b) {
  const double v = a.value() * b.value();
  Tape* t = tape_of(a, b);
  return t ? t->binary(v, a, b.value(), b, a.value()) : Var(v);
}

Var operator/(const Var& a, const Var& b) {
  const double v = a.value() / b.value();
  Tape* t = tape_of(a, b);
  return t ? t->binary(v, a, 1.0 / b.value(), b, -v / b.value()) : Var(v);
}

Var operator-(const Var& a) {
  return a.tape() ? a.tape()->unary(-a.value(), a, -1.0) : Var(-a.value());
}

Var exp(const Var& x) {
  const double v = std::exp(x.value());
  return x.tape() ? x.tape()->unary(v, x, v) : Var(v);
}

Var log(const Var& x) {
  const double v = std::log(x.value());
  return x.tape() ? x.tape()->unary(v, x, 1.0 / x.value()) : Var(v);
}

Var sqrt(const Var& x) {
  const double v = std::sqrt(x.value());
  const double d = v > 0.0 ? 0.5 / v : 0.0;
  return x.tape() ? x.tape()->unary(v, x, d) : Var(v);
}

Var abs(const Var& x) {
  const double v = std::abs(x.value());
  const double d = x.value() > 0.0 ? 1.0 : (x.value() < 0.0 ? -1.0 : 0.0);
  return x.tape() ? x.tape()->unary(v, x, d) : Var(v);
}

Var pow(const Var& x, double exponent) {
  const double v = std::pow(x.value(), exponent);
  const double d = exponent == 1.0 ? 1.0
                   : x.value() == 0.0 ? (exponent > 1.0 ? 0.0 : std::pow(0.0, exponent - 1.0) * exponent)
                                      : exponent * std::pow(x.value(), exponent - 1.0);
  return x.tape() ? x.tape()->unary(v, x, d) : Var(v);
}

Var sigmoid(const Var& x) {
  const double s = prerankcal::sigmoid(x.value());
  return x.tape() ? x.tape()->unary(s, x, s * (1.0 - s)) : Var(s);
}

Var softplus(const Var& x) {
  const double v = prerankcal::softplus(x.value());
  return x.tape() ? x.tape()->unary(v, x, prerankcal::sigmoid(x.value())) : Var(v);
}

Var relu(const Var& x) {
  const double v = x.value() > 0.0 ? x.value() : 0.0;
  return x.tape() ? x.tape()->unary(v, x, x.value() > 0.0 ? 1.0 : 0.0) : Var(v);
}

Var sum(std::span<const Var> xs) {
  double v = 0.0;
  for (const auto& x : xs) v += x.value();
  Tape* t = tape_of(xs);
  if (!t) return Var(v);
  auto b = t->builder();
  for (const auto& x : xs) b.add(x, 1.0);
  return b.finish(v);
}

Var dot(std::span<const Var> a, std::span<const double> w) {
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) v += a[i].value() * w[i];
  Tape* t = tape_of(a);
  if (!t) return Var(v);
  auto b = t->builder();
  for (std::size_t i = 0; i < a.size(); ++i) b.add(a[i], w[i]);
  return b.finish(v);
}

Var affine(const Var& base, std::span<const Var> coeffs, std::span<const double> weights) {
  double v = base.value();
  for (std::size_t i = 0; i < coeffs.size(); ++i) v += coeffs[i].value() * weights[i];
  Tape* t = base.tape() ? base.tape() : tape_of(coeffs);
  if (!t) return Var(v);
  auto b = t->builder();
  b.add(base, 1.0);
  for (std::size_t i = 0; i < coeffs.size(); ++i) b.add(coeffs[i], weights[i]);
  return b.finish(v);
}

Var log_sum_exp(std::span<const Var> xs) {
  if (xs.empty()) return Var(-std::numeric_limits<double>::infinity());
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& x : xs) m = std::max(m, x.value());
  if (!std::isfinite(m)) return Var(m);
  double acc = 0.0;
  for (const auto& x : xs) acc += std::exp(x.value() - m);
  const double v = m + std::log(acc);
  Tape* t = tape_of(xs);
  if (!t) return Var(v);
  auto b = t->builder();
  for (const auto& x : xs) b.add(x, std::exp(x.value() - v));
  return b.finish(v);
}

Var distance(std::span<const Var> a, std::span<const Var> c) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i].value() - c[i].value();
    acc += d * d;
  }
  const double v = std::sqrt(acc);
  Tape* t = tape_of(a);
  if (!t) t = tape_of(c);
  if (!t) return Var(v);
  auto b = t->builder();
  if (v > 0.0) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double g = (a[i].value() - c[i].value()) / v;
      b.add(a[i], g);
      b.add(c[i], -g);
    }
  }
  return b.finish(v);
}

std::vector<double> gradient(const std::function<Var(std::span<const Var>)>& f,
                             std::span<const double> theta) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(theta.size());
  for (double x : theta) leaves.push_back(tape.variable(x));
  const Var out = f(leaves);
  const auto adj = tape.adjoints(out);
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) g[i] = adj[leaves[i].index()];
  return g;
}

}  // namespace prerankcal::ad
