#pragma once

// End-to-end pieces shared by the command-line tool and the acceptance
// suite: reconstruct, evaluate a mesh, sweep the regularizer weight, and
// the stencil convergence study.

#include <chrono>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "convergence.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "trainer.hpp"

namespace fdsdf {

struct EvalOptions {
  std::size_t resolution = 256;    // final marching-cubes grid
  std::size_t samples = 1000000;   // points drawn from each mesh
  MetricsConfig metrics;
  std::uint64_t seed = 0;
};

/// Zero level set of `p` on [-1, 1]³, in normalized coordinates.
inline TriangleMesh extract_mesh(const SirenParams& p, std::size_t resolution) {
  return marching_cubes([&](std::span<const Vec3> xs) { return evaluate(p, xs); },
                        GridSpec{resolution, {Vec3::Constant(-1.0), Vec3::Constant(1.0)}});
}

/// A mesh becomes a dense sample with face normals; a cloud is used as given.
inline PointCloud reference_points(const Geometry& g, std::size_t samples, Rng& rng) {
  if (!g.faces.empty()) return resample_mesh_surface(g.mesh(), samples, rng);
  if (g.cloud.empty()) throw ContractViolation("reference geometry is empty");
  return g.cloud;
}

inline MetricsReport evaluate_mesh(const TriangleMesh& pred, const PointCloud& reference, const EvalOptions& opt) {
  if (reference.empty()) throw ContractViolation("evaluate: empty reference");
  Rng rng(opt.seed ^ 0xe7a1ULL);
  return compute_metrics(resample_mesh_surface(pred, opt.samples, rng), reference, opt.metrics);
}

inline PointCloud to_normalized(const NormalizedCloud& frame, PointCloud c) {
  for (auto& p : c.points) p = frame.to_normalized(p);
  return c;
}

struct Reconstruction {
  TrainResult train;
  TriangleMesh mesh;  // object coordinates
  std::optional<MetricsReport> metrics;
};

/// Trains on `cloud` (object units), extracts the best checkpoint and, when a
/// reference is given (object units), scores it in normalized coordinates.
inline Reconstruction reconstruct(const PointCloud& cloud, const TrainConfig& cfg, const EvalOptions& eval,
                                  const PointCloud* reference = nullptr, const TrainHooks& hooks = {}) {
  const NormalizedCloud nc = normalize(cloud);
  Reconstruction r;
  r.train = train(nc, cfg, hooks);
  TriangleMesh mesh = extract_mesh(r.train.params, eval.resolution);
  if (reference) r.metrics = evaluate_mesh(mesh, to_normalized(nc, *reference), eval);
  transform(mesh, nc.scale, nc.translate);
  r.mesh = std::move(mesh);
  return r;
}

struct SweepRow {
  double lambda_fd = 0.0;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
  double wall_seconds = 0.0;
  EvaluationCount per_iteration;  // measured
  EvaluationCount budget;         // analytic
  std::size_t best_iter = 0, iters_run = 0;
};

/// One reconstruction per weight with the same seed; a failed run is
/// recorded and the sweep continues.
inline std::vector<SweepRow> sweep_lambda(const PointCloud& cloud, const PointCloud& reference, TrainConfig cfg,
                                          const std::vector<double>& lambdas, const EvalOptions& eval,
                                          std::ostream* progress = nullptr) {
  if (lambdas.empty()) throw ContractViolation("sweep: no weights given");
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    SweepRow row;
    row.lambda_fd = l;
    row.budget = evaluation_budget(cfg.batch.surface, cfg.batch.offsurface, std::min(cfg.batch.shell, cfg.batch.surface));
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cfg.weights.lambda_fd = l;
      auto r = reconstruct(cloud, cfg, eval, &reference);
      row.ok = true;
      row.metrics = *r.metrics;
      row.per_iteration = r.train.report.per_iteration;
      row.best_iter = r.train.report.best_iter;
      row.iters_run = r.train.report.iters_run;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) {
      *progress << "lambda_fd " << l << ": ";
      if (row.ok)
        *progress << "CD " << row.metrics.cd_x1000 << " F1 " << row.metrics.f1_x100 << " NC " << row.metrics.nc_x100;
      else
        *progress << "failed: " << row.error;
      *progress << " (" << row.wall_seconds << " s)" << std::endl;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "lambda_fd,status,nc,cd,f1,wall_seconds,forward_evals,gradient_evals,budget_forward,budget_gradient,"
         "best_iter,iters_run,error\n"
      << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.lambda_fd << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok)
      out << r.metrics.nc_x100 << ',' << r.metrics.cd_x1000 << ',' << r.metrics.f1_x100;
    else
      out << ",,";
    out << ',' << r.wall_seconds << ',' << r.per_iteration.forward << ',' << r.per_iteration.gradient << ','
        << r.budget.forward << ',' << r.budget.gradient << ',' << r.best_iter << ',' << r.iters_run << ',';
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << '\n';
  }
}

struct StencilStudy {
  std::vector<ConvergenceReport> reports;
  bool passes() const {
    return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.passes(); });
  }
};

inline const std::vector<double>& default_stencil_steps() {
  static const std::vector<double> steps = {0.04, 0.02, 0.01, 0.005};
  return steps;
}

/// Sphere, cylinder and torus (second order expected) and a quadratic
/// (exact up to round-off), each on points sampled from its surface.
inline StencilStudy verify_stencils(const std::vector<double>& steps = default_stencil_steps(),
                                    std::size_t points = 50, std::uint64_t seed = 0) {
  if (steps.size() < 2) throw ContractViolation("verify_stencils: need at least two steps");
  Rng rng(seed);
  StencilStudy study;
  for (const oracle::AnalyticShape& s :
       {oracle::AnalyticShape(oracle::Sphere{Vec3::Zero(), 0.5}), oracle::AnalyticShape(oracle::Cylinder{0.5}),
        oracle::AnalyticShape(oracle::Torus{1.0, 0.25})})
    study.reports.push_back(stencil_convergence(s, oracle::sample_surface(s, points, rng).points, steps));
  oracle::Quadratic q{Eigen::Vector3d(1, 2, 3).asDiagonal(), Vec3(0.1, -0.2, 0.05), -0.25};
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  std::vector<Vec3> xs;
  for (std::size_t i = 0; i < points; ++i) xs.emplace_back(uni(rng), uni(rng), uni(rng));
  study.reports.push_back(stencil_convergence(q, xs, steps));
  return study;
}

inline void print_stencil_study(std::ostream& out, const StencilStudy& study) {
  out << std::left << std::setw(10) << "shape" << std::setw(9) << "h" << std::setw(13) << "err_uu" << std::setw(13)
      << "err_uv" << std::setw(13) << "err_vv" << '\n';
  for (const auto& r : study.reports) {
    for (const auto& row : r.rows)
      out << std::setw(10) << r.shape << std::setw(9) << row.h << std::scientific << std::setprecision(3)
          << std::setw(13) << row.err_uu << std::setw(13) << row.err_uv << std::setw(13) << row.err_vv
          << std::defaultfloat << std::setprecision(6) << '\n';
    out << std::setw(10) << r.shape << "order ";
    if (r.exact)
      out << "exact (round-off)";
    else
      out << std::fixed << std::setprecision(3) << r.order << std::defaultfloat << std::setprecision(6);
    out << (r.passes() ? "  ok" : "  FAIL") << "\n\n";
  }
  out << std::right;
}

}  // namespace fdsdf
