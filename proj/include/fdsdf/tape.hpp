#pragma once

/**
 * @file tape.hpp
 * @brief Reverse-mode automatic differentiation over a recorded tape.
 *
 * Every node is a scalar produced by one first-order primitive. Spatial
 * derivatives of a network are obtained by pushing forward-mode tangents
 * through the same primitives, so they are ordinary nodes and a loss built
 * from them can be differentiated with respect to the parameters by a single
 * reverse sweep. There is no Hessian primitive: nothing on the tape ever
 * needs a second derivative of a primitive.
 *
 * Storage is structure-of-arrays. The `Affine` primitive reads a contiguous
 * block of weights and a contiguous block of inputs, which keeps dense layers
 * cheap to record and to differentiate.
 */

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace fdsdf::ad {

enum class Op : std::uint8_t {
  Leaf,    // differentiable input (parameter)
  Const,   // non-differentiable input
  Add,
  Sub,
  Mul,     // aux * a * b
  Div,
  Neg,
  Scale,   // aux * a
  Shift,   // a + aux
  Sin,     // sin(aux * a)
  Cos,     // cos(aux * a)
  Exp,
  Abs,
  Sqrt,
  Square,
  Affine,  // sum_j w[j] * x[j] (+ bias)
};

inline constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::Affine) + 1;

inline constexpr std::string_view op_name(Op op) {
  constexpr std::array<std::string_view, kOpCount> names = {
      "leaf", "const", "add", "sub", "mul", "div", "neg", "scale",
      "shift", "sin", "cos", "exp", "abs", "sqrt", "square", "affine"};
  return names[static_cast<std::size_t>(op)];
}

/// Number of parents a primitive takes; -1 for `Affine`, which is variadic.
inline constexpr int arity(Op op) {
  switch (op) {
    case Op::Leaf:
    case Op::Const:
      return 0;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Affine:
      return -1;
    default:
      return 1;
  }
}

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class ScalarNode {
 public:
  ScalarNode() = default;
  ScalarNode(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  inline double value() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = kNoNode;
};

/// Adjoints of every node with respect to one root.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<double> adjoint) : adjoint_(std::move(adjoint)) {}

  double operator[](NodeId id) const { return id < adjoint_.size() ? adjoint_[id] : 0.0; }
  double wrt(const ScalarNode& node) const { return (*this)[node.id()]; }
  std::span<const double> block(NodeId first, std::size_t count) const {
    return std::span<const double>(adjoint_).subspan(first, count);
  }
  std::size_t size() const { return adjoint_.size(); }

 private:
  std::vector<double> adjoint_;
};

using OpCensus = std::array<std::size_t, kOpCount>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reserve(std::size_t nodes) {
    ops_.reserve(nodes);
    values_.reserve(nodes);
    args_.reserve(nodes);
    aux_.reserve(nodes);
  }

  void clear() {
    ops_.clear();
    values_.clear();
    args_.clear();
    aux_.clear();
  }

  std::size_t size() const { return values_.size(); }
  double value(NodeId id) const { return values_.at(id); }
  Op op(NodeId id) const { return ops_.at(id); }
  std::span<const double> values() const { return values_; }

  ScalarNode variable(double v) { return {this, push(Op::Leaf, v, {}, 0.0)}; }
  ScalarNode constant(double v) { return {this, push(Op::Const, v, {}, 0.0)}; }

  /// Appends a contiguous block of leaves and returns the id of the first.
  NodeId variables(std::span<const double> vs) { return push_block(Op::Leaf, vs); }
  NodeId constants(std::span<const double> vs) { return push_block(Op::Const, vs); }

  /// Records a unary or binary primitive; the value is computed here.
  ScalarNode record(Op op, std::span<const NodeId> parents, double aux = 1.0) {
    const int n = arity(op);
    if (n < 0) throw ContractViolation("record: use affine() for the affine primitive");
    if (static_cast<int>(parents.size()) != n)
      throw ContractViolation("record: wrong number of parents for " + std::string(op_name(op)));
    Args a{kNoNode, kNoNode, 0, kNoNode};
    for (std::size_t i = 0; i < parents.size(); ++i) {
      check_exists(parents[i]);
      a[i] = parents[i];
    }
    if (n == 0) return {this, push(op, aux, a, 0.0)};
    return {this, push(op, compute(op, a, aux), a, aux)};
  }

  ScalarNode record(Op op, std::initializer_list<NodeId> parents, double aux = 1.0) {
    return record(op, std::span<const NodeId>(parents.begin(), parents.size()), aux);
  }

  /// sum_j value(weights + j) * value(inputs + j) + value(bias).
  /// Both blocks must already be on the tape; `bias` may be kNoNode.
  ScalarNode affine(NodeId weights, NodeId inputs, std::uint32_t count, NodeId bias = kNoNode) {
    if (count == 0) throw ContractViolation("affine: empty input block");
    check_exists(weights + count - 1);
    check_exists(inputs + count - 1);
    if (bias != kNoNode) check_exists(bias);
    Args a{weights, inputs, count, bias};
    return {this, push(Op::Affine, compute(Op::Affine, a, 1.0), a, 1.0)};
  }

  /// Overwrites the value of a leaf or constant. Call replay() afterwards.
  void set_value(NodeId id, double v) {
    check_exists(id);
    if (arity(ops_[id]) != 0) throw ContractViolation("set_value: node is not an input");
    values_[id] = v;
  }

  /// Recomputes every non-input node from its parents, in recording order.
  void replay() {
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (arity(ops_[i]) != 0) values_[i] = compute(ops_[i], args_[i], aux_[i]);
  }

  /// Reverse sweep from `root`. Values are not modified.
  Gradients backward(const ScalarNode& root) const {
    if (root.tape() != this) throw ContractViolation("backward: root is not on this tape");
    check_exists(root.id());
    std::vector<double> adj(root.id() + 1, 0.0);
    adj[root.id()] = 1.0;
    const double* v = values_.data();
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      const double g = adj[i];
      if (g == 0.0) continue;
      const Args& a = args_[i];
      const double c = aux_[i];
      switch (ops_[i]) {
        case Op::Leaf:
        case Op::Const:
          break;
        case Op::Add:
          adj[a[0]] += g;
          adj[a[1]] += g;
          break;
        case Op::Sub:
          adj[a[0]] += g;
          adj[a[1]] -= g;
          break;
        case Op::Mul:
          adj[a[0]] += c * v[a[1]] * g;
          adj[a[1]] += c * v[a[0]] * g;
          break;
        case Op::Div:
          adj[a[0]] += g / v[a[1]];
          adj[a[1]] -= g * v[i] / v[a[1]];
          break;
        case Op::Neg:
          adj[a[0]] -= g;
          break;
        case Op::Scale:
          adj[a[0]] += c * g;
          break;
        case Op::Shift:
          adj[a[0]] += g;
          break;
        case Op::Sin:
          adj[a[0]] += c * std::cos(c * v[a[0]]) * g;
          break;
        case Op::Cos:
          adj[a[0]] -= c * std::sin(c * v[a[0]]) * g;
          break;
        case Op::Exp:
          adj[a[0]] += v[i] * g;
          break;
        case Op::Abs:
          adj[a[0]] += (v[a[0]] > 0.0 ? g : (v[a[0]] < 0.0 ? -g : 0.0));
          break;
        case Op::Sqrt:
          // subgradient 0 at the origin keeps ‖0‖ from poisoning the sweep
          if (v[i] > 0.0) adj[a[0]] += g / (2.0 * v[i]);
          break;
        case Op::Square:
          adj[a[0]] += 2.0 * v[a[0]] * g;
          break;
        case Op::Affine: {
          const NodeId w = a[0], x = a[1], n = a[2];
          double* aw = adj.data() + w;
          double* ax = adj.data() + x;
          const double* vw = v + w;
          const double* vx = v + x;
          for (NodeId j = 0; j < n; ++j) {
            aw[j] += vx[j] * g;
            ax[j] += vw[j] * g;
          }
          if (a[3] != kNoNode) adj[a[3]] += g;
          break;
        }
      }
    }
    return Gradients(std::move(adj));
  }

  OpCensus census() const {
    OpCensus c{};
    for (Op op : ops_) ++c[static_cast<std::size_t>(op)];
    return c;
  }

 private:
  using Args = std::array<NodeId, 4>;

  void check_exists(NodeId id) const {
    if (id >= values_.size()) throw ContractViolation("node " + std::to_string(id) + " is not on the tape");
  }

  NodeId push(Op op, double value, const Args& a, double aux) {
    if (values_.size() >= kNoNode) throw ContractViolation("tape is full");
    ops_.push_back(op);
    values_.push_back(value);
    args_.push_back(a);
    aux_.push_back(aux);
    return static_cast<NodeId>(values_.size() - 1);
  }

  NodeId push_block(Op op, std::span<const double> vs) {
    const auto first = static_cast<NodeId>(values_.size());
    for (double v : vs) push(op, v, {kNoNode, kNoNode, 0, kNoNode}, 0.0);
    return first;
  }

  double compute(Op op, const Args& a, double c) const {
    const double* v = values_.data();
    switch (op) {
      case Op::Add: return v[a[0]] + v[a[1]];
      case Op::Sub: return v[a[0]] - v[a[1]];
      case Op::Mul: return c * v[a[0]] * v[a[1]];
      case Op::Div: return v[a[0]] / v[a[1]];
      case Op::Neg: return -v[a[0]];
      case Op::Scale: return c * v[a[0]];
      case Op::Shift: return v[a[0]] + c;
      case Op::Sin: return std::sin(c * v[a[0]]);
      case Op::Cos: return std::cos(c * v[a[0]]);
      case Op::Exp: return std::exp(v[a[0]]);
      case Op::Abs: return std::abs(v[a[0]]);
      case Op::Sqrt: return std::sqrt(v[a[0]]);
      case Op::Square: return v[a[0]] * v[a[0]];
      case Op::Affine: {
        const double* w = v + a[0];
        const double* x = v + a[1];
        double s = 0.0;
        for (NodeId j = 0; j < a[2]; ++j) s += w[j] * x[j];
        return a[3] != kNoNode ? s + v[a[3]] : s;
      }
      default: return 0.0;
    }
  }

  std::vector<Op> ops_;
  std::vector<double> values_;
  std::vector<Args> args_;
  std::vector<double> aux_;
};

inline double ScalarNode::value() const { return tape_->value(id_); }

inline Gradients backward(const Tape& tape, const ScalarNode& root) { return tape.backward(root); }

namespace detail {

inline Tape& same_tape(const ScalarNode& a, const ScalarNode& b) {
  if (!a.valid() || a.tape() != b.tape())
    throw ContractViolation("operands recorded on different tapes");
  return *a.tape();
}

inline Tape& tape_of(const ScalarNode& a) {
  if (!a.valid()) throw ContractViolation("operand is not on a tape");
  return *a.tape();
}

inline ScalarNode unary(Op op, const ScalarNode& a, double aux = 1.0) {
  return tape_of(a).record(op, {a.id()}, aux);
}

inline ScalarNode binary(Op op, const ScalarNode& a, const ScalarNode& b) {
  return same_tape(a, b).record(op, {a.id(), b.id()});
}

}  // namespace detail

inline ScalarNode operator+(const ScalarNode& a, const ScalarNode& b) { return detail::binary(Op::Add, a, b); }
inline ScalarNode operator-(const ScalarNode& a, const ScalarNode& b) { return detail::binary(Op::Sub, a, b); }
inline ScalarNode operator*(const ScalarNode& a, const ScalarNode& b) { return detail::binary(Op::Mul, a, b); }
inline ScalarNode operator/(const ScalarNode& a, const ScalarNode& b) { return detail::binary(Op::Div, a, b); }
inline ScalarNode operator-(const ScalarNode& a) { return detail::unary(Op::Neg, a); }

inline ScalarNode operator+(const ScalarNode& a, double c) { return detail::unary(Op::Shift, a, c); }
inline ScalarNode operator+(double c, const ScalarNode& a) { return a + c; }
inline ScalarNode operator-(const ScalarNode& a, double c) { return detail::unary(Op::Shift, a, -c); }
inline ScalarNode operator-(double c, const ScalarNode& a) { return detail::unary(Op::Shift, -a, c); }
inline ScalarNode operator*(const ScalarNode& a, double c) { return detail::unary(Op::Scale, a, c); }
inline ScalarNode operator*(double c, const ScalarNode& a) { return a * c; }
inline ScalarNode operator/(const ScalarNode& a, double c) { return detail::unary(Op::Scale, a, 1.0 / c); }

inline ScalarNode& operator+=(ScalarNode& a, const ScalarNode& b) { return a = a + b; }

/// c * a * b as a single node.
inline ScalarNode scaled_mul(const ScalarNode& a, const ScalarNode& b, double c) {
  return detail::same_tape(a, b).record(Op::Mul, {a.id(), b.id()}, c);
}

/// sin(freq * a) as a single node.
inline ScalarNode sin(const ScalarNode& a, double freq = 1.0) { return detail::unary(Op::Sin, a, freq); }
inline ScalarNode cos(const ScalarNode& a, double freq = 1.0) { return detail::unary(Op::Cos, a, freq); }
inline ScalarNode exp(const ScalarNode& a) { return detail::unary(Op::Exp, a); }
inline ScalarNode abs(const ScalarNode& a) { return detail::unary(Op::Abs, a); }
inline ScalarNode sqrt(const ScalarNode& a) { return detail::unary(Op::Sqrt, a); }
inline ScalarNode square(const ScalarNode& a) { return detail::unary(Op::Square, a); }

}  // namespace fdsdf::ad

namespace fdsdf {

/// Value of a plain double or of a tape node; lets templates branch on values.
inline double value_of(double x) { return x; }
inline double value_of(const ad::ScalarNode& x) { return x.value(); }

/// f together with its spatial partials. For `ad::ScalarNode` each entry is
/// a differentiable node, so losses built from ∇f stay parameter-differentiable.
template <class T>
struct TangentTriple {
  T value;
  T dx, dy, dz;
};

}  // namespace fdsdf
