#pragma once

// Sinusoidal MLP f: R^3 -> R.
//
//   h_0 = x
//   h_l = sin(omega0 * (W_l h_{l-1} + b_l))     l = 1..depth
//   f   = W_out h_depth + b_out                  (linear output)
//
// Parameters are stored flat, layer by layer, each layer as its row-major
// weight matrix (out x in) followed by its bias vector. The checkpoint file
// uses the same order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "tape.hpp"
#include "types.hpp"

namespace fdsdf {

struct SirenParams {
  static constexpr std::size_t kInputDim = 3;

  std::size_t width = 256;
  std::size_t depth = 4;  // number of sine layers
  double omega0 = 30.0;
  std::uint64_t seed = 0;
  std::vector<double> values;

  std::size_t layer_count() const { return depth + 1; }
  std::size_t in_dim(std::size_t layer) const { return layer == 0 ? kInputDim : width; }
  std::size_t out_dim(std::size_t layer) const { return layer == depth ? 1 : width; }

  std::size_t weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += out_dim(l) * (in_dim(l) + 1);
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const {
    return weight_offset(layer) + out_dim(layer) * in_dim(layer);
  }
  std::size_t parameter_count() const { return weight_offset(layer_count()); }

  std::span<const double> weights(std::size_t layer) const {
    return std::span<const double>(values).subspan(weight_offset(layer), out_dim(layer) * in_dim(layer));
  }
  std::span<const double> biases(std::size_t layer) const {
    return std::span<const double>(values).subspan(bias_offset(layer), out_dim(layer));
  }

  /// All-zero parameters of the given shape.
  static SirenParams zeros(std::size_t width, std::size_t depth, double omega0 = 30.0) {
    if (width == 0 || depth == 0) throw ContractViolation("siren: width and depth must be >= 1");
    SirenParams p;
    p.width = width;
    p.depth = depth;
    p.omega0 = omega0;
    p.values.assign(p.parameter_count(), 0.0);
    return p;
  }
};

/// SIREN initialisation. First layer weights ~ U(-1/in, 1/in); later sine
/// layers ~ U(-sqrt(6/in)/omega0, +sqrt(6/in)/omega0); biases ~
/// U(-1/sqrt(in), 1/sqrt(in)). The linear output layer uses the
/// sqrt(6/in)/omega0 bound scaled by `output_gain`.
inline SirenParams init_siren(std::uint64_t seed, std::size_t width, std::size_t depth,
                              double omega0 = 30.0, double output_gain = 10.0) {
  SirenParams p = SirenParams::zeros(width, depth, omega0);
  p.seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    const double in = static_cast<double>(p.in_dim(l));
    double bound = std::sqrt(6.0 / in) / omega0;
    if (l == 0) bound = 1.0 / in;
    if (l == depth) bound *= output_gain;
    std::uniform_real_distribution<double> w(-bound, bound);
    std::uniform_real_distribution<double> b(-1.0 / std::sqrt(in), 1.0 / std::sqrt(in));
    const std::size_t wo = p.weight_offset(l), bo = p.bias_offset(l);
    for (std::size_t i = wo; i < bo; ++i) p.values[i] = w(rng);
    for (std::size_t i = bo; i < bo + p.out_dim(l); ++i) p.values[i] = b(rng);
  }
  return p;
}

/// Geometric sine initialisation (sphere-like start, as in DiGS-style
/// unoriented reconstruction). Early layers are near-linear with small
/// weights; the last sine layer sits at the top of its period so it
/// responds quadratically; the output turns that into f ~ c(|x|^2 - r^2).
/// With radius 0 the field starts as a non-negative bowl.
inline SirenParams init_geometric(std::uint64_t seed, std::size_t width, std::size_t depth,
                                  double omega0 = 30.0, double radius = 0.0) {
  if (depth < 2) throw ContractViolation("siren: geometric init needs depth >= 2");
  SirenParams p = SirenParams::zeros(width, depth, omega0);
  p.seed = seed;
  Rng rng(seed);
  const double n = static_cast<double>(width);
  std::uniform_real_distribution<double> w(-std::sqrt(3.0 / n), std::sqrt(3.0 / n));
  std::uniform_real_distribution<double> b(-1.0 / (n * 1000.0), 1.0 / (n * 1000.0));
  std::normal_distribution<double> noise(0.0, 1.0);
  const double half_pi = std::numbers::pi / 2;
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    const std::size_t wo = p.weight_offset(l), bo = p.bias_offset(l);
    for (std::size_t i = wo; i < bo; ++i) p.values[i] = w(rng) / omega0;
    for (std::size_t i = bo; i < bo + p.out_dim(l); ++i) p.values[i] = b(rng) / omega0;
  }
  const std::size_t top = depth - 1;
  for (std::size_t r = 0; r < width; ++r) {
    for (std::size_t c = 0; c < width; ++c)
      p.values[p.weight_offset(top) + r * width + c] = ((r == c ? half_pi : 0.0) + 1e-3 * noise(rng)) / omega0;
    p.values[p.bias_offset(top) + r] = (half_pi + 1e-3 * noise(rng)) / omega0;
  }
  for (std::size_t c = 0; c < width; ++c) p.values[p.weight_offset(depth) + c] = -1.0 + 1e-5 * noise(rng);
  // sum_i cos(pi/2 h_i) ~ n - (pi^2/8)|x|^2 near the origin
  p.values[p.bias_offset(depth)] = n - std::numbers::pi * std::numbers::pi / 8.0 * radius * radius;
  return p;
}

/// Geometric init with a quarter of the first-layer units at the standard sine
/// frequency. Their outgoing weights are zero, so the net still starts as the
/// sphere, but the fast units get gradient from the first step.
inline SirenParams init_multifreq(std::uint64_t seed, std::size_t width, std::size_t depth,
                                  double omega0 = 30.0, double radius = 0.0) {
  SirenParams p = init_geometric(seed, width, depth, omega0, radius);
  if (depth < 3) throw ContractViolation("siren: multi-frequency init needs depth >= 3");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> units(width);
  for (std::size_t i = 0; i < width; ++i) units[i] = i;
  std::shuffle(units.begin(), units.end(), rng);
  const double a = 1.0 / static_cast<double>(SirenParams::kInputDim);
  std::uniform_real_distribution<double> u(-a, a);
  const std::size_t fast = std::max<std::size_t>(1, width / 4);
  for (std::size_t k = 0; k < fast; ++k) {
    const std::size_t r = units[k];
    for (std::size_t c = 0; c < SirenParams::kInputDim; ++c) p.values[p.weight_offset(0) + r * SirenParams::kInputDim + c] = u(rng);
    p.values[p.bias_offset(0) + r] = u(rng);
    for (std::size_t o = 0; o < width; ++o) p.values[p.weight_offset(1) + o * width + r] = 0.0;
  }
  return p;
}

namespace detail {

inline void require_finite(const Vec3& x) {
  if (!is_finite(x)) throw ContractViolation("siren: non-finite input point");
}

}  // namespace detail

/// Plain (tape-free) batched evaluation. Used for extraction and metrics.
inline std::vector<double> evaluate(const SirenParams& p, std::span<const Vec3> xs) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<double> out(xs.size());
  constexpr std::size_t kChunk = 2048;
  for (std::size_t start = 0; start < xs.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, xs.size() - start);
    Eigen::MatrixXd h(3, n);
    for (std::size_t j = 0; j < n; ++j) {
      detail::require_finite(xs[start + j]);
      h.col(j) = xs[start + j];
    }
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      Eigen::Map<const RowMat> w(p.weights(l).data(), p.out_dim(l), p.in_dim(l));
      Eigen::Map<const Eigen::VectorXd> b(p.biases(l).data(), p.out_dim(l));
      Eigen::MatrixXd z = w * h;
      z.colwise() += b;
      if (l + 1 < p.layer_count())
        h = (p.omega0 * z.array()).sin().matrix();
      else
        h = std::move(z);
    }
    for (std::size_t j = 0; j < n; ++j) out[start + j] = h(0, j);
  }
  return out;
}

inline double evaluate(const SirenParams& p, const Vec3& x) {
  return evaluate(p, std::span<const Vec3>(&x, 1))[0];
}

/// Plain batched value and spatial gradient (forward-mode tangents).
inline std::vector<TangentTriple<double>> evaluate_with_gradient(const SirenParams& p, std::span<const Vec3> xs) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<TangentTriple<double>> out(xs.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < xs.size(); start += kChunk) {
    const auto n = static_cast<Eigen::Index>(std::min(kChunk, xs.size() - start));
    Eigen::MatrixXd h(3, n);
    std::array<Eigen::MatrixXd, 3> dh;
    for (int k = 0; k < 3; ++k) dh[k] = Eigen::MatrixXd::Zero(3, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      detail::require_finite(xs[start + j]);
      h.col(j) = xs[start + j];
      for (int k = 0; k < 3; ++k) dh[k](k, j) = 1.0;
    }
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      Eigen::Map<const RowMat> w(p.weights(l).data(), p.out_dim(l), p.in_dim(l));
      Eigen::Map<const Eigen::VectorXd> b(p.biases(l).data(), p.out_dim(l));
      Eigen::MatrixXd z = w * h;
      z.colwise() += b;
      for (int k = 0; k < 3; ++k) dh[k] = w * dh[k];
      if (l + 1 < p.layer_count()) {
        const Eigen::ArrayXXd arg = p.omega0 * z.array();
        const Eigen::ArrayXXd c = p.omega0 * arg.cos();
        for (int k = 0; k < 3; ++k) dh[k] = (c * dh[k].array()).matrix();
        h = arg.sin().matrix();
      } else {
        h = std::move(z);
      }
    }
    for (Eigen::Index j = 0; j < n; ++j)
      out[start + static_cast<std::size_t>(j)] = {h(0, j), dh[0](0, j), dh[1](0, j), dh[2](0, j)};
  }
  return out;
}

/// Tape-free field adapter with the same eval / eval_with_gradient surface
/// as SirenOnTape, for loss evaluation in plain doubles.
struct PlainSiren {
  const SirenParams* params;

  double eval(const Vec3& x) const { return evaluate(*params, x); }
  TangentTriple<double> eval_with_gradient(const Vec3& x) const {
    return evaluate_with_gradient(*params, std::span<const Vec3>(&x, 1))[0];
  }
};

enum class GradientMode {
  Forward,            // tangents pushed through the network
  CentralDifference,  // 6 extra evaluations, for cross-validation
};

/// A network whose parameters are leaves of one tape. All evaluations share
/// those leaves, so one backward sweep yields the parameter gradient.
class SirenOnTape {
 public:
  SirenOnTape(ad::Tape& tape, const SirenParams& params) : tape_(&tape), params_(&params) {
    if (params.values.size() != params.parameter_count())
      throw ContractViolation("siren: parameter vector has wrong size");
    param_base_ = tape.variables(params.values);
    const double units[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    unit_base_ = tape.constants(units);
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      w_off_.push_back(param_base_ + static_cast<ad::NodeId>(params.weight_offset(l)));
      b_off_.push_back(param_base_ + static_cast<ad::NodeId>(params.bias_offset(l)));
    }
  }

  ad::Tape& tape() const { return *tape_; }
  const SirenParams& params() const { return *params_; }
  ad::NodeId parameter_base() const { return param_base_; }

  /// Number of network evaluations recorded so far (value or value+gradient).
  std::size_t evaluations() const { return evaluations_; }
  std::size_t gradient_evaluations() const { return gradient_evaluations_; }

  ad::ScalarNode eval(const Vec3& x) {
    detail::require_finite(x);
    ++evaluations_;
    const double xv[3] = {x.x(), x.y(), x.z()};
    ad::NodeId in = tape_->constants(xv);
    const auto& p = *params_;
    for (std::size_t l = 0; l < p.depth; ++l) {
      const ad::NodeId z = dense(l, in, true);
      in = sine_block(z, p.width, ad::Op::Sin);
    }
    return tape_->affine(w_off_[p.depth], in, static_cast<std::uint32_t>(p.width), b_off_[p.depth]);
  }

  /// Mode used by the one-argument eval_with_gradient.
  void set_gradient_mode(GradientMode mode, double step = 1e-4) {
    mode_ = mode;
    cd_step_ = step;
  }

  TangentTriple<ad::ScalarNode> eval_with_gradient(const Vec3& x) { return eval_with_gradient(x, mode_, cd_step_); }

  TangentTriple<ad::ScalarNode> eval_with_gradient(const Vec3& x, GradientMode mode, double step = 1e-4) {
    if (mode == GradientMode::CentralDifference) return central_difference(x, step);
    detail::require_finite(x);
    ++evaluations_;
    ++gradient_evaluations_;
    const auto& p = *params_;
    const double xv[3] = {x.x(), x.y(), x.z()};
    ad::NodeId in = tape_->constants(xv);
    std::array<ad::NodeId, 3> tin = {unit_base_, unit_base_ + 3, unit_base_ + 6};
    const auto width = static_cast<ad::NodeId>(p.width);
    for (std::size_t l = 0; l < p.depth; ++l) {
      const ad::NodeId z = dense(l, in, true);
      const ad::NodeId h = sine_block(z, width, ad::Op::Sin);
      const ad::NodeId c = sine_block(z, width, ad::Op::Cos);
      std::array<ad::NodeId, 3> dz{};
      for (int k = 0; k < 3; ++k) dz[k] = dense(l, tin[k], false);
      // d/dx sin(w z) = w cos(w z) dz/dx
      for (int k = 0; k < 3; ++k) {
        tin[k] = static_cast<ad::NodeId>(tape_->size());
        for (ad::NodeId i = 0; i < width; ++i)
          tape_->record(ad::Op::Mul, {c + i, dz[k] + i}, p.omega0);
      }
      in = h;
    }
    const ad::NodeId wl = w_off_[p.depth];
    TangentTriple<ad::ScalarNode> out;
    out.value = tape_->affine(wl, in, width, b_off_[p.depth]);
    out.dx = tape_->affine(wl, tin[0], width);
    out.dy = tape_->affine(wl, tin[1], width);
    out.dz = tape_->affine(wl, tin[2], width);
    return out;
  }

  /// Extracts d(root)/d(parameters) in flat layout.
  std::vector<double> parameter_gradient(const ad::Gradients& g) const {
    std::vector<double> out(params_->parameter_count(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[param_base_ + static_cast<ad::NodeId>(i)];
    return out;
  }

 private:
  ad::NodeId dense(std::size_t layer, ad::NodeId in, bool with_bias) {
    const auto& p = *params_;
    const auto in_dim = static_cast<std::uint32_t>(p.in_dim(layer));
    const auto out_dim = static_cast<ad::NodeId>(p.out_dim(layer));
    const auto first = static_cast<ad::NodeId>(tape_->size());
    for (ad::NodeId i = 0; i < out_dim; ++i)
      tape_->affine(w_off_[layer] + i * in_dim, in, in_dim, with_bias ? b_off_[layer] + i : ad::kNoNode);
    return first;
  }

  ad::NodeId sine_block(ad::NodeId z, ad::NodeId n, ad::Op op) {
    const auto first = static_cast<ad::NodeId>(tape_->size());
    for (ad::NodeId i = 0; i < n; ++i) tape_->record(op, {z + i}, params_->omega0);
    return first;
  }

  TangentTriple<ad::ScalarNode> central_difference(const Vec3& x, double step) {
    if (!(step > 0.0)) throw ContractViolation("siren: central-difference step must be > 0");
    TangentTriple<ad::ScalarNode> out;
    out.value = eval(x);
    ad::ScalarNode* parts[3] = {&out.dx, &out.dy, &out.dz};
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = Vec3::Unit(k) * step;
      *parts[k] = (eval(x + e) - eval(x - e)) * (0.5 / step);
    }
    ++gradient_evaluations_;
    return out;
  }

  ad::Tape* tape_;
  const SirenParams* params_;
  ad::NodeId param_base_ = 0;
  ad::NodeId unit_base_ = 0;
  std::vector<ad::NodeId> w_off_, b_off_;
  std::size_t evaluations_ = 0;
  std::size_t gradient_evaluations_ = 0;
  GradientMode mode_ = GradientMode::Forward;
  double cd_step_ = 1e-4;
};

/// f(x) recorded on `tape` with a fresh parameter block.
inline ad::ScalarNode eval(const SirenParams& params, const Vec3& x, ad::Tape& tape) {
  return SirenOnTape(tape, params).eval(x);
}

inline TangentTriple<ad::ScalarNode> eval_with_gradient(const SirenParams& params, const Vec3& x, ad::Tape& tape) {
  return SirenOnTape(tape, params).eval_with_gradient(x);
}

// Checkpoint format (text):
//   fdsdf-siren 1
//   depth <d> width <w> omega0 <o> seed <s> count <n>
//   <n values, one per line, in flat layer order>
inline void save_checkpoint(const SirenParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << "fdsdf-siren 1\n"
      << "depth " << p.depth << " width " << p.width << " omega0 " << std::setprecision(17) << p.omega0
      << " seed " << p.seed << " count " << p.values.size() << "\n";
  for (double v : p.values) out << v << "\n";
  if (!out) throw Error("failed writing checkpoint " + path);
}

inline SirenParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "fdsdf-siren" || version != 1) throw ParseError("not a checkpoint: " + path, 1);
  SirenParams p;
  std::string k1, k2, k3, k4, k5;
  std::size_t count = 0;
  in >> k1 >> p.depth >> k2 >> p.width >> k3 >> p.omega0 >> k4 >> p.seed >> k5 >> count;
  if (!in || k1 != "depth" || k2 != "width" || k3 != "omega0" || k4 != "seed" || k5 != "count")
    throw ParseError("malformed checkpoint header: " + path, 2);
  if (p.width == 0 || p.depth == 0 || count != p.parameter_count())
    throw ParseError("checkpoint shape mismatch: " + path, 2);
  p.values.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    if (!(in >> p.values[i])) throw ParseError("truncated checkpoint: " + path, 3 + i);
  return p;
}

}  // namespace fdsdf
