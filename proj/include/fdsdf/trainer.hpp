#pragma once

// Training loop: Adam on freshly drawn batches each iteration, periodic
// Chamfer evaluation on an extracted mesh, early stopping on that Chamfer
// value, and the best-CD parameters as the result.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <algorithm>
#include <iterator>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "adam.hpp"
#include "losses.hpp"
#include "mesh.hpp"
#include "metrics.hpp"
#include "sampling.hpp"
#include "siren.hpp"

namespace fdsdf {

enum class InitScheme { Siren, Geometric, MultiFrequency };

struct NetworkConfig {
  std::size_t width = 256;
  std::size_t depth = 4;
  double omega0 = 30.0;
  double output_gain = 10.0;  // Siren scheme only
  InitScheme init = InitScheme::Geometric;
  double init_radius = 0.5;   // Geometric and MultiFrequency

  SirenParams initialise(std::uint64_t seed) const {
    if (init == InitScheme::Geometric) return init_geometric(seed, width, depth, omega0, init_radius);
    if (init == InitScheme::MultiFrequency) return init_multifreq(seed, width, depth, omega0, init_radius);
    return init_siren(seed, width, depth, omega0, output_gain);
  }
};

struct TrainConfig {
  double lr = 5e-5;
  std::size_t max_iters = 10000;
  std::size_t patience = 1500;
  std::size_t eval_every = 100;
  LossWeights weights;
  LossConfig loss;
  BatchConfig batch;
  NetworkConfig network;
  std::size_t mc_resolution = 128;    // early-stopping extraction grid
  std::size_t heldout_points = 10000;  // reference subsample for early-stopping CD
  std::size_t eval_samples = 10000;    // mesh samples for early-stopping CD
  GradientMode gradient_mode = GradientMode::Forward;  // central differences for cross-checks
  unsigned threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractViolation("lr must be > 0");
    if (eval_every == 0) throw ContractViolation("eval_every must be >= 1");
    if (patience < eval_every) throw ContractViolation("patience must be >= eval_every");
    if (max_iters == 0) throw ContractViolation("max_iters must be >= 1");
    if (threads == 0) throw ContractViolation("threads must be >= 1");
    if (mc_resolution < 8) throw ContractViolation("mc resolution must be >= 8");
    if (network.width == 0 || network.depth == 0) throw ContractViolation("network width and depth must be >= 1");
    if (heldout_points == 0 || eval_samples == 0) throw ContractViolation("evaluation sizes must be >= 1");
    weights.validate();
    loss.validate();
  }
};

struct LogRow {
  std::size_t iter = 0;
  LossBreakdown loss;
  double wall_ms = 0.0;
  double cd = std::numeric_limits<double>::quiet_NaN();  // set on evaluation iterations
  std::size_t fd_skipped = 0;
};

/// Network evaluations per iteration.
struct EvaluationCount {
  std::size_t forward = 0;   // every f evaluation, with or without gradient
  std::size_t gradient = 0;  // of which also produced ∇f
  bool operator==(const EvaluationCount&) const = default;
};

/// |surface| + |offsurface| + 9 |shell| forward evaluations, of which
/// |surface| + |offsurface| + |shell| carry a gradient. Central-difference
/// gradients cost 6 more forward evaluations each.
inline EvaluationCount evaluation_budget(std::size_t surface, std::size_t offsurface, std::size_t shell,
                                         GradientMode mode = GradientMode::Forward) {
  const std::size_t grads = surface + offsurface + shell;
  const std::size_t extra = mode == GradientMode::CentralDifference ? 6 * grads : 0;
  return {surface + offsurface + 9 * shell + extra, grads};
}

struct TrainReport {
  std::size_t best_iter = 0;
  double best_cd = std::numeric_limits<double>::infinity();
  std::size_t iters_run = 0;
  double wall_seconds = 0.0;
  double iteration_seconds = 0.0;  // mean, excluding evaluations
  std::vector<LogRow> rows;
  EvaluationCount per_iteration;
  std::size_t total_forward = 0, total_gradient = 0;
  std::size_t skipped_steps = 0;
  ad::OpCensus census{};  // tape of the first iteration, all shards
  bool stopped_early = false;
};

class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, TrainReport report) : DivergenceError(what), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

struct TrainResult {
  SirenParams params;  // best-CD checkpoint
  SirenParams last;    // final iterate
  TrainReport report;
};

/// Returns the Chamfer distance used for early stopping; lower is better.
using CdEvaluator = std::function<double(const SirenParams&, std::size_t iter)>;

struct TrainHooks {
  CdEvaluator cd;                    // replaces the mesh-based evaluator
  std::ostream* progress = nullptr;  // one line per evaluation
};

/// Points on the zero level set of `p`, by marching cubes on [-1, 1]³ and
/// area-weighted resampling. Throws EmptySurface when there is no surface.
inline PointCloud extract_samples(const SirenParams& p, std::size_t resolution, std::size_t count, Rng& rng,
                                  TriangleMesh* mesh_out = nullptr) {
  auto mesh = marching_cubes([&](std::span<const Vec3> xs) { return evaluate(p, xs); },
                             GridSpec{resolution, {Vec3::Constant(-1.0), Vec3::Constant(1.0)}});
  auto samples = resample_mesh_surface(mesh, count, rng);
  if (mesh_out) *mesh_out = std::move(mesh);
  return samples;
}

/// Early-stopping CD against a fixed held-out subsample (normalized units).
inline CdEvaluator mesh_chamfer_evaluator(std::vector<Vec3> heldout, const TrainConfig& cfg) {
  return [heldout = std::move(heldout), cfg](const SirenParams& p, std::size_t) {
    Rng rng(cfg.seed ^ 0x5eedc0deULL);  // same samples pattern at every evaluation
    try {
      auto samples = extract_samples(p, cfg.mc_resolution, cfg.eval_samples, rng);
      return chamfer(samples.points, heldout, Search::Tree, cfg.threads);
    } catch (const EmptySurface&) {
      return std::numeric_limits<double>::infinity();
    }
  };
}

inline std::vector<Vec3> heldout_subsample(const NormalizedCloud& nc, std::size_t n, std::uint64_t seed) {
  const auto& pts = nc.cloud.points;
  if (pts.size() <= n) return pts;
  Rng rng(seed ^ 0x4e1d0a7ULL);
  std::vector<Vec3> out;
  std::sample(pts.begin(), pts.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(n), rng);
  return out;
}

namespace detail {

template <class T>
std::span<const T> shard_of(std::span<const T> v, std::size_t k, std::size_t shards) {
  const std::size_t chunk = (v.size() + shards - 1) / shards;
  const std::size_t b = std::min(v.size(), k * chunk), e = std::min(v.size(), (k + 1) * chunk);
  return v.subspan(b, e - b);
}

template <class T>
std::vector<T> shard_copy(const std::vector<T>& v, std::size_t k, std::size_t shards) {
  auto s = shard_of(std::span<const T>(v), k, shards);
  return {s.begin(), s.end()};
}

struct ShardWork {
  ad::Tape tape;
  std::optional<LossSums<ad::ScalarNode>> sums;
  std::optional<SirenOnTape> net;
  std::vector<double> grad;
  EvaluationCount evals;
  std::exception_ptr error;
};

}  // namespace detail

/// Loss and parameter gradient for one batch. With several threads the batch
/// is split into contiguous shards with their own tapes; each shard's
/// objective uses the global normalizers, so the gradients simply add up.
struct StepResult {
  LossBreakdown loss;
  std::vector<double> grad;
  EvaluationCount evals;
  std::size_t fd_skipped = 0;
  ad::OpCensus census{};
};

inline StepResult loss_and_gradient(const SirenParams& params, const TrainingBatch& batch, const LossWeights& w,
                                    const LossConfig& cfg, std::span<const double> angles, unsigned threads,
                                    std::vector<std::unique_ptr<detail::ShardWork>>& work,
                                    GradientMode mode = GradientMode::Forward) {
  // every shard needs at least one point of each kind
  const std::size_t shards = std::max<std::size_t>(
      1, std::min({static_cast<std::size_t>(threads), batch.surface.size(), batch.offsurface.size(), batch.shell.size()}));
  while (work.size() < shards) work.push_back(std::make_unique<detail::ShardWork>());
  auto phase1 = [&](std::size_t k) {
    auto& sw = *work[k];
    try {
      sw.tape.clear();
      sw.net.emplace(sw.tape, params);
      sw.net->set_gradient_mode(mode);
      TrainingBatch part{detail::shard_copy(batch.surface, k, shards), detail::shard_copy(batch.offsurface, k, shards),
                         detail::shard_copy(batch.shell, k, shards)};
      FrameCache frames;
      frames.angles = detail::shard_of(angles, k, shards);
      Rng unused(0);  // angles are supplied
      sw.sums = loss_sums(*sw.net, part, cfg, unused, &frames);
      sw.evals = {sw.net->evaluations(), sw.net->gradient_evaluations()};
    } catch (...) {
      sw.error = std::current_exception();
    }
  };
  LossCounts n;
  auto phase2 = [&](std::size_t k) {
    auto& sw = *work[k];
    try {
      const auto root = weighted_objective(*sw.sums, n, w);
      sw.grad = sw.net->parameter_gradient(sw.tape.backward(root));
    } catch (...) {
      sw.error = std::current_exception();
    }
  };
  auto run = [&](auto&& fn) {
    if (shards == 1) {
      fn(0);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t k = 1; k < shards; ++k) pool.emplace_back(fn, k);
      fn(0);
    }
    for (std::size_t k = 0; k < shards; ++k)
      if (work[k]->error) std::rethrow_exception(std::exchange(work[k]->error, nullptr));
  };
  run(phase1);
  double dm = 0, dnm = 0, eik = 0, fd = 0;
  StepResult r;
  for (std::size_t k = 0; k < shards; ++k) {
    const auto& sw = *work[k];
    n.surface += sw.sums->surface;
    n.offsurface += sw.sums->offsurface;
    n.fd_used += sw.sums->fd.used;
    r.fd_skipped += sw.sums->fd.skipped;
    dm += sw.sums->dm.value();
    dnm += sw.sums->dnm.value();
    eik += sw.sums->eik.value();
    if (sw.sums->fd.used) fd += sw.sums->fd.sum.value();
    r.evals.forward += sw.evals.forward;
    r.evals.gradient += sw.evals.gradient;
  }
  if (n.fd_used == 0) warn("fd_regularizer: every shell point has a degenerate gradient; term is 0");
  run(phase2);
  r.loss = breakdown(dm, dnm, eik, fd, n, w);
  r.grad.assign(params.parameter_count(), 0.0);
  for (std::size_t k = 0; k < shards; ++k) {
    const auto& sw = *work[k];
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] += sw.grad[i];
    const auto c = sw.tape.census();
    for (std::size_t op = 0; op < ad::kOpCount; ++op) r.census[op] += c[op];
  }
  return r;
}

inline void write_log_csv(const std::string& path, const std::vector<LogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "iter,dm,dnm,eik,fd,total,wall_ms,cd,fd_skipped\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.iter << ',' << r.loss.dm << ',' << r.loss.dnm << ',' << r.loss.eik << ',' << r.loss.fd << ','
        << r.loss.total << ',' << r.wall_ms << ',';
    if (!std::isnan(r.cd)) out << r.cd;
    out << ',' << r.fd_skipped << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

inline TrainResult train(const NormalizedCloud& cloud, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (cloud.cloud.empty()) throw ContractViolation("train: empty cloud");
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  TrainResult out;
  out.last = cfg.network.initialise(cfg.seed);
  SirenParams& params = out.last;
  out.params = params;
  TrainReport& rep = out.report;

  CdEvaluator evaluate_cd = hooks.cd;
  if (!evaluate_cd) evaluate_cd = mesh_chamfer_evaluator(heldout_subsample(cloud, cfg.heldout_points, cfg.seed), cfg);

  Rng batch_rng(cfg.seed + 1), frame_rng(cfg.seed + 2);
  AdamState adam;
  std::vector<std::unique_ptr<detail::ShardWork>> work;
  std::vector<double> angles;
  double step_seconds = 0.0;

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    const auto ts = Clock::now();
    const TrainingBatch batch = sample_batches(cloud, cfg.batch, batch_rng);
    angles.resize(batch.shell.size());
    for (double& a : angles) a = draw_frame_angle(frame_rng);
    const StepResult step =
        loss_and_gradient(params, batch, cfg.weights, cfg.loss, angles, cfg.threads, work, cfg.gradient_mode);

    const EvaluationCount budget =
        evaluation_budget(batch.surface.size(), batch.offsurface.size(), batch.shell.size(), cfg.gradient_mode);
    if (it == 1) {
      rep.per_iteration = budget;
      rep.census = step.census;
    }
    LogRow row{it, step.loss, 0.0, std::numeric_limits<double>::quiet_NaN(), step.fd_skipped};
    if (!std::isfinite(step.loss.total)) {
      rep.iters_run = it;
      rep.rows.push_back(row);
      rep.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      std::ostringstream msg;
      msg << "training diverged at iteration " << it << ": dm=" << step.loss.dm << " dnm=" << step.loss.dnm
          << " eik=" << step.loss.eik << " fd=" << step.loss.fd;
      throw TrainingDiverged(msg.str(), rep);
    }
    // a skipped shell point stops after its centre evaluation
    EvaluationCount expected = budget;
    expected.forward -= 8 * step.fd_skipped;
    if (!(step.evals == expected)) throw Error("trainer: evaluation count differs from the analytic budget");
    rep.total_forward += step.evals.forward;
    rep.total_gradient += step.evals.gradient;
    if (!adam_step(params.values, step.grad, adam, cfg.lr)) warn("non-finite gradient; update skipped");
    rep.skipped_steps = adam.skipped;
    const double secs = std::chrono::duration<double>(Clock::now() - ts).count();
    step_seconds += secs;
    row.wall_ms = 1e3 * secs;
    rep.iters_run = it;

    const bool last = it == cfg.max_iters;
    if (it % cfg.eval_every == 0 || last) {
      const SirenParams snapshot = params;
      row.cd = evaluate_cd(snapshot, it);
      if (row.cd < rep.best_cd) {
        rep.best_cd = row.cd;
        rep.best_iter = it;
        out.params = snapshot;
      }
      if (hooks.progress)
        *hooks.progress << "iter " << it << " loss " << step.loss.total << " eik " << step.loss.eik << " fd "
                        << step.loss.fd << " cd " << row.cd << " best " << rep.best_cd << " @" << rep.best_iter
                        << std::endl;
    }
    rep.rows.push_back(row);
    if (!std::isnan(row.cd) && rep.best_iter > 0 && it - rep.best_iter >= cfg.patience) {
      rep.stopped_early = !last;
      break;
    }
    if (!std::isnan(row.cd) && rep.best_iter == 0 && it >= cfg.patience) {
      rep.stopped_early = !last;  // never produced a finite CD
      break;
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  rep.iteration_seconds = step_seconds / static_cast<double>(std::max<std::size_t>(1, rep.iters_run));
  return out;
}

}  // namespace fdsdf
