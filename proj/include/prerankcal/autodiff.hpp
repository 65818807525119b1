#pragma once

// Tape-based reverse-mode differentiation over scalar nodes.
//
// Every node stores its value and a list of (parent, partial) pairs. Heavy
// primitives (sums, dot products, log-sum-exp, pairwise distances, smoothed
// orthant probabilities) are recorded as a single n-ary node so that the tape
// stays small relative to the arithmetic performed.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "prerankcal/errors.hpp"
#include "prerankcal/numeric.hpp"

namespace prerankcal::ad {

class Tape;

/// A scalar on a tape, or a constant when it has no tape.
class Var {
 public:
  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT(google-explicit-constructor)

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index, double value) : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  double value_ = 0.0;
};

inline double value_of(const Var& v) { return v.value(); }

class Tape {
 public:
  /// Records a new n-ary node. Constant parents are dropped as they are added.
  class NodeBuilder {
   public:
    void add(const Var& parent, double partial) {
      if (parent.is_constant()) return;
      require(parent.tape() == tape_, "autodiff: mixing variables from different tapes");
      tape_->parents_.push_back(parent.index());
      tape_->partials_.push_back(partial);
    }
    Var finish(double value) { return tape_->close_node(value); }

   private:
    friend class Tape;
    explicit NodeBuilder(Tape* tape) : tape_(tape) {}
    Tape* tape_;
  };

  Tape() { offsets_.push_back(0); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(double value) { return close_node(value); }
  NodeBuilder builder() { return NodeBuilder(this); }

  Var unary(double value, const Var& a, double da) {
    auto b = builder();
    b.add(a, da);
    return b.finish(value);
  }
  Var binary(double value, const Var& a, double da, const Var& c, double dc) {
    auto b = builder();
    b.add(a, da);
    b.add(c, dc);
    return b.finish(value);
  }

  std::size_t size() const { return values_.size(); }
  std::size_t edge_count() const { return parents_.size(); }
  void clear();
  void reserve(std::size_t nodes, std::size_t edges);

  /// Adjoints d(output)/d(node) for every node on the tape.
  std::vector<double> adjoints(const Var& output) const;

 private:
  Var close_node(double value) {
    const auto index = static_cast<std::uint32_t>(values_.size());
    values_.push_back(value);
    offsets_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return Var(this, index, value);
  }

  std::vector<double> values_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
};

/// Tape that any of the operands lives on, or nullptr if all are constants.
inline Tape* tape_of(const Var& a, const Var& b) { return a.tape() ? a.tape() : b.tape(); }
Tape* tape_of(std::span<const Var> xs);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

Var exp(const Var& x);
Var log(const Var& x);
/// Derivative at 0 is taken as 0.
Var sqrt(const Var& x);
/// Subgradient 0 at the kink.
Var abs(const Var& x);
Var pow(const Var& x, double exponent);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var relu(const Var& x);

Var sum(std::span<const Var> xs);
Var dot(std::span<const Var> a, std::span<const double> b);
/// base + sum_i coeffs[i] * weights[i]
Var affine(const Var& base, std::span<const Var> coeffs, std::span<const double> weights);
Var log_sum_exp(std::span<const Var> xs);
/// Euclidean distance; gradient 0 when a == b.
Var distance(std::span<const Var> a, std::span<const Var> b);

/// Gradient of f at theta via one forward recording and one reverse sweep.
std::vector<double> gradient(const std::function<Var(std::span<const Var>)>& f,
                             std::span<const double> theta);

}  // namespace prerankcal::ad
