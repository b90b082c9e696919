// fdsdf: reconstruct surfaces from point clouds, check the stencils, sweep the
// curvature weight, and score meshes.
//
// Exit codes: 0 success, 1 verification or evaluation failure, 2 usage or
// input error, 3 training divergence.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdsdf/config.hpp"
#include "fdsdf/pipeline.hpp"

#ifndef FDSDF_VERSION
#define FDSDF_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fdsdf;

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kDiverged = 3 };

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// FNV-1a, 64 bit, over the raw file bytes
std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("input not found: " + path.string(), 0);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + hex;
}

void require_input(const fs::path& p) {
  if (!fs::exists(p)) throw ParseError("input not found: " + p.string(), 0);
}

json versions() {
  return {{"fdsdf", FDSDF_VERSION},
          {"compiler", __VERSION__},
          {"cplusplus", __cplusplus},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"cli11", CLI11_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

// One per command invocation; written next to the outputs.
struct Manifest {
  json doc;
  fs::path path;

  Manifest(std::string command, fs::path out_dir) : path(std::move(out_dir) / "manifest.json") {
    doc["command"] = std::move(command);
    doc["versions"] = versions();
    doc["started"] = utc_now();
  }
  void set_config(const TrainConfig& cfg) {
    json c = json::object();
    for (const auto& [k, v] : settings_of(cfg)) c[k] = v;
    doc["config"] = c;
    doc["seed"] = cfg.seed;
  }
  void add_input(const std::string& role, const fs::path& p) {
    doc["inputs"][role] = {{"path", p.string()}, {"hash", file_hash(p)}};
  }
  void add_output(const std::string& role, const fs::path& p) { doc["outputs"][role] = p.string(); }
  void write(int exit_code, const std::string& status) {
    doc["finished"] = utc_now();
    doc["exit_code"] = exit_code;
    doc["status"] = status;
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
    if (!out) throw Error("cannot write " + path.string());
  }
};

json metrics_json(const MetricsReport& m) {
  json j = {{"cd_x1000", m.cd_x1000}, {"f1_x100", m.f1_x100}, {"hausdorff", m.hausdorff}};
  j["nc_x100"] = std::isnan(m.nc_x100) ? json(nullptr) : json(m.nc_x100);
  return j;
}

void print_metrics(std::ostream& out, const MetricsReport& m) {
  out << "CD x1e3 " << m.cd_x1000 << "  F1 x1e2 " << m.f1_x100 << "  NC x1e2 ";
  if (std::isnan(m.nc_x100))
    out << "n/a";
  else
    out << m.nc_x100;
  out << "  Hausdorff " << m.hausdorff << '\n';
}

void write_metrics_csv(const fs::path& path, const MetricsReport& m) {
  std::ofstream out(path);
  out << "cd_x1000,f1_x100,nc_x100,hausdorff\n" << std::setprecision(10) << m.cd_x1000 << ',' << m.f1_x100 << ',';
  if (!std::isnan(m.nc_x100)) out << m.nc_x100;
  out << ',' << m.hausdorff << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

// Training settings: defaults, then a manifest, then a key = value file,
// then individual flags.
struct SettingsFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_file, manifest_file;

  void attach(CLI::App* app) {
    for (const auto& k : config_keys()) options[k.name] = app->add_option("--" + k.name, values[k.name], k.help);
    app->add_option("--config", config_file, "key = value settings file (flags take precedence)");
    app->add_option("--from-manifest", manifest_file, "reuse the config recorded in a manifest.json");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!manifest_file.empty()) {
      require_input(manifest_file);
      std::ifstream in(manifest_file);
      json m;
      try {
        m = json::parse(in);
      } catch (const json::exception& e) {
        throw ParseError(manifest_file + ": " + e.what(), 0);
      }
      if (!m.contains("config") || !m["config"].is_object())
        throw ParseError(manifest_file + ": no config object", 0);
      for (const auto& [k, v] : m["config"].items()) apply_setting(cfg, k, v.get<std::string>());
    }
    if (!config_file.empty())
      for (const auto& [k, v] : read_settings_file(config_file)) apply_setting(cfg, k, v);
    for (const auto& [k, opt] : options)
      if (opt->count() > 0) apply_setting(cfg, k, values.at(k));
    try {
      cfg.validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

struct EvalFlags {
  std::size_t resolution = EvalOptions{}.resolution;
  std::size_t samples = EvalOptions{}.samples;
  double f1_threshold = MetricsConfig{}.f1_threshold;

  void attach(CLI::App* app, bool with_resolution) {
    if (with_resolution) app->add_option("--extract-res", resolution, "marching-cubes grid for the output mesh");
    app->add_option("--metric-samples", samples, "points sampled per mesh for metrics");
    app->add_option("--f1-threshold", f1_threshold, "F1 distance threshold (normalized units)");
  }
  EvalOptions options(std::uint64_t seed, unsigned threads) const {
    EvalOptions e;
    e.resolution = resolution;
    e.samples = samples;
    e.metrics.f1_threshold = f1_threshold;
    e.metrics.threads = threads;
    e.seed = seed;
    return e;
  }
};

PointCloud load_reference(const fs::path& p, std::size_t samples, std::uint64_t seed) {
  require_input(p);
  Rng rng(seed ^ 0x9e3779b9ULL);
  return reference_points(load_geometry(p), samples, rng);
}

int run_reconstruct(const fs::path& input, const fs::path& out_dir, const std::string& reference, bool binary,
                    bool quiet, const SettingsFlags& settings, const EvalFlags& eval_flags) {
  require_input(input);
  const TrainConfig cfg = settings.resolve();
  Manifest man("reconstruct", out_dir);
  man.set_config(cfg);
  man.add_input("cloud", input);
  const EvalOptions eval = eval_flags.options(cfg.seed, cfg.threads);
  man.doc["evaluation"] = {{"extract_res", eval.resolution},
                           {"metric_samples", eval.samples},
                           {"f1_threshold", eval.metrics.f1_threshold}};
  const PointCloud cloud = load_cloud(input);
  PointCloud ref = cloud;
  if (!reference.empty()) {
    man.add_input("reference", reference);
    ref = load_reference(reference, eval.samples, cfg.seed);
  }
  fs::create_directories(out_dir);
  TrainHooks hooks;
  if (!quiet) hooks.progress = &std::cout;
  Reconstruction r;
  try {
    r = reconstruct(cloud, cfg, eval, &ref, hooks);
  } catch (const TrainingDiverged& e) {
    write_log_csv((out_dir / "log.csv").string(), e.report().rows);
    man.add_output("log", out_dir / "log.csv");
    man.doc["error"] = e.what();
    man.write(kDiverged, "diverged");
    std::cerr << "error: " << e.what() << "\nper-iteration log: " << (out_dir / "log.csv").string() << '\n';
    return kDiverged;
  }
  const auto& rep = r.train.report;
  write_mesh(out_dir / (binary ? "mesh.ply" : "mesh.obj"), r.mesh);
  save_checkpoint(r.train.params, (out_dir / "best.ckpt").string());
  save_checkpoint(r.train.last, (out_dir / "final.ckpt").string());
  write_log_csv((out_dir / "log.csv").string(), rep.rows);
  man.add_output("mesh", out_dir / (binary ? "mesh.ply" : "mesh.obj"));
  man.add_output("best_checkpoint", out_dir / "best.ckpt");
  man.add_output("final_checkpoint", out_dir / "final.ckpt");
  man.add_output("log", out_dir / "log.csv");
  man.doc["training"] = {{"best_iter", rep.best_iter},
                         {"best_cd", rep.best_cd},
                         {"iters_run", rep.iters_run},
                         {"stopped_early", rep.stopped_early},
                         {"wall_seconds", rep.wall_seconds},
                         {"iteration_seconds", rep.iteration_seconds},
                         {"forward_evals_per_iter", rep.per_iteration.forward},
                         {"gradient_evals_per_iter", rep.per_iteration.gradient},
                         {"skipped_steps", rep.skipped_steps}};
  man.doc["metrics"] = metrics_json(*r.metrics);
  write_metrics_csv(out_dir / "metrics.csv", *r.metrics);
  man.add_output("metrics", out_dir / "metrics.csv");
  std::cout << "best iteration " << rep.best_iter << " of " << rep.iters_run << ", " << rep.wall_seconds << " s\n";
  print_metrics(std::cout, *r.metrics);
  man.write(kOk, "ok");
  return kOk;
}

int run_verify(const fs::path& out_dir, std::vector<double> steps, std::size_t points, std::uint64_t seed) {
  Manifest man("verify-stencils", out_dir);
  man.doc["steps"] = steps;
  man.doc["points"] = points;
  man.doc["seed"] = seed;
  std::sort(steps.begin(), steps.end(), std::greater<>());
  const auto study = verify_stencils(steps, points, seed);
  print_stencil_study(std::cout, study);
  json rep = json::array();
  for (const auto& r : study.reports)
    rep.push_back({{"shape", r.shape}, {"order", r.order}, {"exact", r.exact}, {"passes", r.passes()}});
  man.doc["report"] = rep;
  const bool ok = study.passes();
  std::cout << (ok ? "all stencil orders within [1.5, 2.5]\n" : "stencil verification FAILED\n");
  man.write(ok ? kOk : kFailed, ok ? "ok" : "failed");
  return ok ? kOk : kFailed;
}

int run_sweep(const fs::path& input, const fs::path& out_dir, const std::vector<double>& lambdas,
              const std::string& reference, bool quiet, const SettingsFlags& settings, const EvalFlags& eval_flags) {
  require_input(input);
  const TrainConfig cfg = settings.resolve();
  Manifest man("sweep-lambda", out_dir);
  man.set_config(cfg);
  man.doc["lambdas"] = lambdas;
  man.add_input("cloud", input);
  const EvalOptions eval = eval_flags.options(cfg.seed, cfg.threads);
  const PointCloud cloud = load_cloud(input);
  PointCloud ref = cloud;
  if (!reference.empty()) {
    man.add_input("reference", reference);
    ref = load_reference(reference, eval.samples, cfg.seed);
  }
  fs::create_directories(out_dir);
  const auto rows = sweep_lambda(cloud, ref, cfg, lambdas, eval, quiet ? nullptr : &std::cout);
  std::ofstream csv(out_dir / "sweep.csv");
  write_sweep_csv(csv, rows);
  if (!csv) throw Error("cannot write " + (out_dir / "sweep.csv").string());
  man.add_output("csv", out_dir / "sweep.csv");
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.ok; });
  man.doc["failed_rows"] = failed;
  write_sweep_csv(std::cout, rows);
  man.write(failed ? kFailed : kOk, failed ? "some runs failed" : "ok");
  return failed ? kFailed : kOk;
}

int run_eval(const fs::path& pred, const fs::path& gt, const fs::path& out_dir, std::uint64_t seed, unsigned threads,
             const EvalFlags& flags) {
  require_input(pred);
  require_input(gt);
  Manifest man("eval", out_dir);
  man.add_input("prediction", pred);
  man.add_input("reference", gt);
  man.doc["seed"] = seed;
  const EvalOptions opt = flags.options(seed, threads);
  man.doc["evaluation"] = {{"metric_samples", opt.samples}, {"f1_threshold", opt.metrics.f1_threshold}};
  const TriangleMesh mesh = load_mesh(pred);
  const PointCloud ref = load_reference(gt, opt.samples, seed);
  const auto m = evaluate_mesh(mesh, ref, opt);
  print_metrics(std::cout, m);
  man.doc["metrics"] = metrics_json(m);
  fs::create_directories(out_dir);
  write_metrics_csv(out_dir / "metrics.csv", m);
  man.add_output("metrics", out_dir / "metrics.csv");
  man.write(kOk, "ok");
  return kOk;
}

int run_emit_oracle(const std::string& shape, const fs::path& out, std::size_t points, std::uint64_t seed,
                    bool normals) {
  oracle::AnalyticShape s;
  if (shape == "sphere")
    s = oracle::Sphere{Vec3::Zero(), 0.5};
  else if (shape == "torus")
    s = oracle::Torus{0.5, 0.2};
  else if (shape == "rounded-box")
    s = oracle::RoundedBox{Vec3(0.5, 0.4, 0.3), 0.1};
  else if (shape == "cylinder")
    s = oracle::Cylinder{0.4};
  else
    throw UsageError("unknown shape '" + shape + "' (sphere, torus, rounded-box, cylinder)");
  Rng rng(seed);
  PointCloud c = oracle::sample_surface(s, points, rng);
  if (!normals) c.normals.clear();
  write_cloud(out, c);
  std::cout << "wrote " << c.size() << " points to " << out.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural SDF surface reconstruction with finite-difference curvature regularization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FDSDF_VERSION);

  SettingsFlags train_settings, sweep_settings;
  EvalFlags rec_eval, sweep_eval, eval_eval;

  std::string rec_input, rec_out = "fdsdf_out", rec_ref;
  bool rec_binary = false, rec_quiet = false;
  auto* rec = app.add_subcommand("reconstruct", "train on a point cloud and extract a mesh");
  rec->add_option("input", rec_input, "point cloud (.xyz, .ply, .obj)")->required();
  rec->add_option("-o,--out", rec_out, "output directory");
  rec->add_option("--reference", rec_ref, "reference cloud or mesh for metrics (default: the input)");
  rec->add_flag("--ply", rec_binary, "write the mesh as ascii .ply instead of .obj");
  rec->add_flag("-q,--quiet", rec_quiet, "no progress lines");
  train_settings.attach(rec);
  rec_eval.attach(rec, true);

  std::vector<double> steps = default_stencil_steps();
  std::size_t ver_points = 50;
  std::uint64_t ver_seed = 0;
  std::string ver_out = ".";
  auto* ver = app.add_subcommand("verify-stencils", "convergence order of the stencils on analytic shapes");
  ver->add_option("--steps", steps, "step sizes h")->delimiter(',');
  ver->add_option("--points", ver_points, "surface points per shape");
  ver->add_option("--seed", ver_seed, "random seed");
  ver->add_option("-o,--out", ver_out, "directory for manifest.json and metrics.csv");

  std::string sw_input, sw_out = "fdsdf_sweep", sw_ref;
  std::vector<double> lambdas = {0.6, 1.0, 3.0};
  bool sw_quiet = false;
  auto* sw = app.add_subcommand("sweep-lambda", "one reconstruction per curvature weight");
  sw->add_option("input", sw_input, "point cloud")->required();
  sw->add_option("--lambdas", lambdas, "weights to try")->delimiter(',');
  sw->add_option("-o,--out", sw_out, "output directory");
  sw->add_option("--reference", sw_ref, "reference cloud or mesh for metrics (default: the input)");
  sw->add_flag("-q,--quiet", sw_quiet, "no progress lines");
  sweep_settings.attach(sw);
  sweep_eval.attach(sw, true);

  std::string ev_pred, ev_gt, ev_out = ".";
  std::uint64_t ev_seed = 0;
  unsigned ev_threads = 1;
  auto* ev = app.add_subcommand("eval", "score a mesh against a reference cloud or mesh");
  ev->add_option("prediction", ev_pred, "predicted mesh (.obj, .ply)")->required();
  ev->add_option("reference", ev_gt, "reference cloud or mesh")->required();
  ev->add_option("--seed", ev_seed, "sampling seed");
  ev->add_option("--threads", ev_threads, "worker threads");
  ev->add_option("-o,--out", ev_out, "directory for manifest.json and metrics.csv");
  eval_eval.attach(ev, false);

  std::string em_shape, em_out;
  std::size_t em_points = 5000;
  std::uint64_t em_seed = 0;
  bool em_normals = false;
  auto* em = app.add_subcommand("emit-oracle", "write a point cloud sampled from an analytic shape");
  em->add_option("shape", em_shape, "sphere, torus, rounded-box or cylinder")->required();
  em->add_option("output", em_out, "output file (.xyz, .ply, .obj)")->required();
  em->add_option("--points", em_points, "number of points");
  em->add_option("--seed", em_seed, "random seed");
  em->add_flag("--normals", em_normals, "include analytic normals");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (rec->parsed())
      return run_reconstruct(rec_input, rec_out, rec_ref, rec_binary, rec_quiet, train_settings, rec_eval);
    if (ver->parsed()) return run_verify(ver_out, steps, ver_points, ver_seed);
    if (sw->parsed()) return run_sweep(sw_input, sw_out, lambdas, sw_ref, sw_quiet, sweep_settings, sweep_eval);
    if (ev->parsed()) return run_eval(ev_pred, ev_gt, ev_out, ev_seed, ev_threads, eval_eval);
    if (em->parsed()) return run_emit_oracle(em_shape, em_out, em_points, em_seed, em_normals);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kUsage;
}
