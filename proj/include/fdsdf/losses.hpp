#pragma once

// Training objective:
//
//   L = λ_dm L_dm + λ_dnm L_dnm + λ_eik L_eik + λ_fd L_fd
//
//   L_dm   mean |f| on surface samples
//   L_dnm  mean exp(-α|f|) on off-surface samples
//   L_eik  mean (‖∇f‖ - 1)² on surface and off-surface samples together
//   L_fd   mean |K_FD| (ncr-fd) or mean |D_FD| (nsh-fd) on shell samples
//
// Terms are accumulated as sums so a batch can be split across several
// tapes and normalized by the global counts afterwards.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "batch.hpp"
#include "error.hpp"
#include "fd_curvature.hpp"
#include "frames.hpp"
#include "log.hpp"
#include "tape.hpp"

namespace fdsdf {

enum class Variant { NcrFd, NshFd };

inline std::string_view to_string(Variant v) { return v == Variant::NcrFd ? "ncr-fd" : "nsh-fd"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "ncr-fd") return Variant::NcrFd;
  if (s == "nsh-fd") return Variant::NshFd;
  throw ContractViolation("unknown variant '" + std::string(s) + "' (expected ncr-fd or nsh-fd)");
}

/// λ_dm = 1 gives the plain L_dm + ... form. The default pairs the
/// Dirichlet term with the other defaults the way the usual SIREN-based
/// unoriented setups do; with λ_dm = 1 the surface term is too weak to
/// anchor the zero level set.
struct LossWeights {
  double lambda_dm = 3000.0;
  double lambda_dnm = 100.0;
  double lambda_eik = 50.0;
  double lambda_fd = 1.0;

  void validate() const {
    for (double w : {lambda_dm, lambda_dnm, lambda_eik, lambda_fd})
      if (!std::isfinite(w) || w < 0.0) throw ContractViolation("loss weights must be finite and non-negative");
  }
};

struct LossConfig {
  Variant variant = Variant::NcrFd;
  double alpha = 100.0;    // off-surface decay
  double fd_step = 1e-2;   // stencil half-width h
  bool full_denominator = false;  // ncr-fd only: divide by ‖∇f‖⁴ instead of 1

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ContractViolation("alpha must be > 0");
    if (!(fd_step > 0.0) || !std::isfinite(fd_step)) throw ContractViolation("fd step must be > 0");
  }
};

/// Per-iteration means of each term and the weighted total.
struct LossBreakdown {
  double dm = 0.0, dnm = 0.0, eik = 0.0, fd = 0.0, total = 0.0;
};

namespace detail {

inline void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw ContractViolation(std::string(what) + ": empty batch");
}

template <class T>
T accumulate(const T& sum, const T& term, bool first) {
  return first ? term : sum + term;
}

template <class T>
T gradient_norm(const TangentTriple<T>& g) {
  using std::sqrt;
  return sqrt(g.dx * g.dx + g.dy * g.dy + g.dz * g.dz);
}

template <class T>
Vec3 gradient_value(const TangentTriple<T>& g) {
  return {value_of(g.dx), value_of(g.dy), value_of(g.dz)};
}

}  // namespace detail

template <class T>
T dirichlet_sum(std::span<const T> f) {
  detail::require_nonempty(f.size(), "dirichlet_loss");
  using std::abs;
  T s = abs(f[0]);
  for (std::size_t i = 1; i < f.size(); ++i) s = s + abs(f[i]);
  return s;
}

template <class T>
T eikonal_sum(std::span<const TangentTriple<T>> g) {
  detail::require_nonempty(g.size(), "eikonal_loss");
  auto term = [](const TangentTriple<T>& gi) {
    const T r = detail::gradient_norm(gi) - 1.0;
    return r * r;
  };
  T s = term(g[0]);
  for (std::size_t i = 1; i < g.size(); ++i) s = s + term(g[i]);
  return s;
}

template <class T>
T nonmanifold_sum(std::span<const T> f, double alpha) {
  detail::require_nonempty(f.size(), "nonmanifold_loss");
  if (!(alpha > 0.0)) throw ContractViolation("nonmanifold_loss: alpha must be > 0");
  using std::abs;
  using std::exp;
  T s = exp(abs(f[0]) * -alpha);
  for (std::size_t i = 1; i < f.size(); ++i) s = s + exp(abs(f[i]) * -alpha);
  return s;
}

template <class T>
T dirichlet_loss(std::span<const T> f) {
  return dirichlet_sum(f) * (1.0 / static_cast<double>(f.size()));
}

template <class T>
T eikonal_loss(std::span<const TangentTriple<T>> g) {
  return eikonal_sum(g) * (1.0 / static_cast<double>(g.size()));
}

template <class T>
T nonmanifold_loss(std::span<const T> f, double alpha) {
  return nonmanifold_sum(f, alpha) * (1.0 / static_cast<double>(f.size()));
}

/// Frames used for the shell points of one call, so a second call can reuse
/// them exactly (finite-difference checks hold the frames fixed). With
/// `angles` set, the in-plane angles are taken from it instead of the rng,
/// which keeps frames independent of how a batch is split across workers.
struct FrameCache {
  std::vector<std::optional<TangentFrame>> frames;
  bool replay = false;
  std::span<const double> angles;
};

template <class T>
struct FdSum {
  T sum{};
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/**
 * Sum of |K_FD| or |D_FD| over the shell points. `field` must provide
 * eval(x) -> T and eval_with_gradient(x) -> TangentTriple<T>. Per point: one
 * gradient evaluation at the center (whose value doubles as the stencil
 * center) and eight plain evaluations. The frame is built from the gradient
 * values only; it is not differentiated through.
 */
template <class Field>
auto fd_regularizer_sum(Field& field, std::span<const Vec3> shell, const LossConfig& cfg, Rng& rng,
                        FrameCache* cache = nullptr) {
  using T = std::decay_t<decltype(field.eval(Vec3::Zero()))>;
  cfg.validate();
  if (cache && cache->replay && cache->frames.size() != shell.size())
    throw ContractViolation("fd_regularizer: frame cache does not match the shell batch");
  if (cache && !cache->replay) cache->frames.clear();
  if (cache && !cache->angles.empty() && cache->angles.size() != shell.size())
    throw ContractViolation("fd_regularizer: one angle per shell point required");
  FdSum<T> out;
  for (std::size_t i = 0; i < shell.size(); ++i) {
    const Vec3& x0 = shell[i];
    const TangentTriple<T> c = field.eval_with_gradient(x0);
    std::optional<TangentFrame> frame;
    if (cache && cache->replay) {
      frame = cache->frames[i];
    } else {
      const double theta = cache && !cache->angles.empty() ? cache->angles[i] : draw_frame_angle(rng);
      frame = try_frame_from_angle(detail::gradient_value(c), theta);
      if (cache) cache->frames.push_back(frame);
    }
    if (!frame) {
      ++out.skipped;
      continue;
    }
    bool center = true;
    auto f = [&](const Vec3& x) -> T {
      if (center) {
        center = false;
        return c.value;
      }
      return field.eval(x);
    };
    const SecondForm<T> form = second_form(f, make_stencil(x0, *frame, cfg.fd_step));
    T term;
    using std::abs;
    if (cfg.variant == Variant::NshFd) {
      term = abs(projected_determinant_fd(form));
    } else if (cfg.full_denominator) {
      term = abs(gaussian_curvature_fd(form, detail::gradient_norm(c)));
    } else {
      term = abs(gaussian_curvature_fd(form));
    }
    out.sum = detail::accumulate(out.sum, term, out.used == 0);
    ++out.used;
  }
  return out;
}

/// Mean over the non-degenerate shell points; 0 (with a warning) if every
/// point had a vanishing gradient.
template <class Field>
auto fd_regularizer(Field& field, std::span<const Vec3> shell, const LossConfig& cfg, Rng& rng) {
  detail::require_nonempty(shell.size(), "fd_regularizer");
  auto s = fd_regularizer_sum(field, shell, cfg, rng);
  using T = decltype(s.sum);
  if (s.used == 0) {
    warn("fd_regularizer: every shell point has a degenerate gradient; term is 0");
    if constexpr (std::is_same_v<T, double>) {
      return 0.0;
    } else {
      return field.eval(shell[0]) * 0.0;
    }
  } else {
    return T(s.sum * (1.0 / static_cast<double>(s.used)));
  }
}

/// Unnormalized loss terms for one batch (or one shard of a batch).
template <class T>
struct LossSums {
  T dm{}, dnm{}, eik{};
  FdSum<T> fd;
  std::size_t surface = 0, offsurface = 0;
  std::size_t mixed() const { return surface + offsurface; }
};

/// Normalizers shared by every shard of a batch.
struct LossCounts {
  std::size_t surface = 0, offsurface = 0, fd_used = 0;
  std::size_t mixed() const { return surface + offsurface; }
};

template <class Field>
auto loss_sums(Field& field, const TrainingBatch& batch, const LossConfig& cfg, Rng& rng,
               FrameCache* cache = nullptr) {
  using T = std::decay_t<decltype(field.eval(Vec3::Zero()))>;
  detail::require_nonempty(batch.surface.size(), "surface batch");
  detail::require_nonempty(batch.offsurface.size(), "off-surface batch");
  detail::require_nonempty(batch.shell.size(), "shell batch");
  cfg.validate();
  LossSums<T> s;
  s.surface = batch.surface.size();
  s.offsurface = batch.offsurface.size();
  std::vector<T> fs, fo;
  std::vector<TangentTriple<T>> grads;
  fs.reserve(s.surface);
  fo.reserve(s.offsurface);
  grads.reserve(s.mixed());
  for (const Vec3& x : batch.surface) {
    grads.push_back(field.eval_with_gradient(x));
    fs.push_back(grads.back().value);
  }
  for (const Vec3& x : batch.offsurface) {
    grads.push_back(field.eval_with_gradient(x));
    fo.push_back(grads.back().value);
  }
  s.dm = dirichlet_sum(std::span<const T>(fs));
  s.dnm = nonmanifold_sum(std::span<const T>(fo), cfg.alpha);
  s.eik = eikonal_sum(std::span<const TangentTriple<T>>(grads));
  s.fd = fd_regularizer_sum(field, std::span<const Vec3>(batch.shell), cfg, rng, cache);
  return s;
}

/**
 * Weighted objective of one shard normalized by global counts; the sum of
 * these over all shards is the batch objective. The fd term is left out of
 * the graph entirely when λ_fd = 0 or no shell point survived, and so is any
 * other zero-weight term.
 */
template <class T>
T weighted_objective(const LossSums<T>& s, const LossCounts& n, const LossWeights& w) {
  T total = s.dm * (w.lambda_dm / static_cast<double>(n.surface));
  if (w.lambda_dnm > 0.0) total = total + s.dnm * (w.lambda_dnm / static_cast<double>(n.offsurface));
  if (w.lambda_eik > 0.0) total = total + s.eik * (w.lambda_eik / static_cast<double>(n.mixed()));
  if (w.lambda_fd > 0.0 && s.fd.used > 0 && n.fd_used > 0)
    total = total + s.fd.sum * (w.lambda_fd / static_cast<double>(n.fd_used));
  return total;
}

/// Breakdown from the (already summed across shards) values.
inline LossBreakdown breakdown(double dm_sum, double dnm_sum, double eik_sum, double fd_sum, const LossCounts& n,
                               const LossWeights& w) {
  LossBreakdown b;
  b.dm = dm_sum * (1.0 / static_cast<double>(n.surface));
  b.dnm = dnm_sum / static_cast<double>(n.offsurface);
  b.eik = eik_sum / static_cast<double>(n.mixed());
  b.fd = n.fd_used > 0 ? fd_sum / static_cast<double>(n.fd_used) : 0.0;
  b.total = w.lambda_dm * b.dm + w.lambda_dnm * b.dnm + w.lambda_eik * b.eik + w.lambda_fd * b.fd;
  return b;
}

template <class T>
struct LossResult {
  T total;
  LossBreakdown parts;
  std::size_t fd_skipped = 0;
};

/// Full objective for one batch on a single field.
template <class Field>
auto total_loss(Field& field, const TrainingBatch& batch, const LossWeights& w, const LossConfig& cfg, Rng& rng,
                FrameCache* cache = nullptr) {
  w.validate();
  auto s = loss_sums(field, batch, cfg, rng, cache);
  using T = decltype(s.dm);
  const LossCounts n{s.surface, s.offsurface, s.fd.used};
  if (s.fd.used == 0) warn("fd_regularizer: every shell point has a degenerate gradient; term is 0");
  LossResult<T> r{weighted_objective(s, n, w), {}, s.fd.skipped};
  r.parts = breakdown(value_of(s.dm), value_of(s.dnm), value_of(s.eik), s.fd.used ? value_of(s.fd.sum) : 0.0, n, w);
  return r;
}

}  // namespace fdsdf
