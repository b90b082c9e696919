#pragma once

// Text form of TrainConfig: one `key = value` per setting. The same keys are
// the command-line flag names, and the run manifest records every key.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trainer.hpp"

namespace fdsdf {

class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string format_real(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

inline double parse_real_value(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out))
    throw UsageError("invalid value for " + key + ": '" + v + "'");
  return out;
}

inline std::uint64_t parse_count_value(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw UsageError("invalid value for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool_value(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("invalid value for " + key + ": '" + v + "' (expected true or false)");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::format_real;
  // accessors take a mutable config; getters read through a copy
  auto real = [](std::string name, std::string help, auto field) {
    return ConfigKey{name, std::move(help),
                     [field](const TrainConfig& c) {
                       TrainConfig copy = c;
                       return format_real(field(copy));
                     },
                     [field, name](TrainConfig& c, const std::string& v) { field(c) = detail::parse_real_value(name, v); }};
  };
  auto count = [](std::string name, std::string help, auto field) {
    return ConfigKey{name, std::move(help),
                     [field](const TrainConfig& c) {
                       TrainConfig copy = c;
                       return std::to_string(field(copy));
                     },
                     [field, name](TrainConfig& c, const std::string& v) {
                       using T = std::remove_reference_t<decltype(field(c))>;
                       const auto n = detail::parse_count_value(name, v);
                       if (n > std::numeric_limits<T>::max()) throw UsageError("value out of range for " + name);
                       field(c) = static_cast<T>(n);
                     }};
  };
  static const std::vector<ConfigKey> keys = {
      ConfigKey{"variant", "curvature regularizer: ncr-fd or nsh-fd",
                [](const TrainConfig& c) { return std::string(to_string(c.loss.variant)); },
                [](TrainConfig& c, const std::string& v) {
                  try {
                    c.loss.variant = parse_variant(v);
                  } catch (const ContractViolation& e) {
                    throw UsageError(e.what());
                  }
                }},
      real("fd-step", "finite-difference step h", [](TrainConfig& c) -> double& { return c.loss.fd_step; }),
      real("shell-sigma", "std of the shell offset around surface points",
           [](TrainConfig& c) -> double& { return c.batch.shell_sigma; }),
      real("alpha", "non-manifold sharpness", [](TrainConfig& c) -> double& { return c.loss.alpha; }),
      ConfigKey{"full-denominator", "divide K by |grad f|^4 instead of 1",
                [](const TrainConfig& c) { return std::string(c.loss.full_denominator ? "true" : "false"); },
                [](TrainConfig& c, const std::string& v) {
                  c.loss.full_denominator = detail::parse_bool_value("full-denominator", v);
                }},
      real("lambda-dm", "Dirichlet weight", [](TrainConfig& c) -> double& { return c.weights.lambda_dm; }),
      real("lambda-dnm", "non-manifold weight", [](TrainConfig& c) -> double& { return c.weights.lambda_dnm; }),
      real("lambda-eik", "eikonal weight", [](TrainConfig& c) -> double& { return c.weights.lambda_eik; }),
      real("lambda-fd", "curvature regularizer weight",
           [](TrainConfig& c) -> double& { return c.weights.lambda_fd; }),
      real("lr", "Adam learning rate", [](TrainConfig& c) -> double& { return c.lr; }),
      count("max-iters", "iteration cap", [](TrainConfig& c) -> std::size_t& { return c.max_iters; }),
      count("patience", "early-stopping patience in iterations", [](TrainConfig& c) -> std::size_t& { return c.patience; }),
      count("eval-every", "iterations between Chamfer evaluations",
            [](TrainConfig& c) -> std::size_t& { return c.eval_every; }),
      count("mc-res", "marching-cubes samples per axis for early stopping",
            [](TrainConfig& c) -> std::size_t& { return c.mc_resolution; }),
      count("heldout", "reference points for early stopping",
            [](TrainConfig& c) -> std::size_t& { return c.heldout_points; }),
      count("eval-samples", "mesh samples for early stopping",
            [](TrainConfig& c) -> std::size_t& { return c.eval_samples; }),
      count("batch-surface", "surface points per iteration", [](TrainConfig& c) -> std::size_t& { return c.batch.surface; }),
      count("batch-offsurface", "uniform points per iteration",
            [](TrainConfig& c) -> std::size_t& { return c.batch.offsurface; }),
      count("batch-shell", "shell points per iteration", [](TrainConfig& c) -> std::size_t& { return c.batch.shell; }),
      count("width", "hidden units per layer", [](TrainConfig& c) -> std::size_t& { return c.network.width; }),
      count("depth", "sine layers", [](TrainConfig& c) -> std::size_t& { return c.network.depth; }),
      real("omega0", "sine frequency scale", [](TrainConfig& c) -> double& { return c.network.omega0; }),
      ConfigKey{"init", "initialisation: geometric, multifreq or siren",
                [](const TrainConfig& c) {
                  switch (c.network.init) {
                    case InitScheme::Geometric: return std::string("geometric");
                    case InitScheme::MultiFrequency: return std::string("multifreq");
                    default: return std::string("siren");
                  }
                },
                [](TrainConfig& c, const std::string& v) {
                  if (v == "geometric")
                    c.network.init = InitScheme::Geometric;
                  else if (v == "multifreq")
                    c.network.init = InitScheme::MultiFrequency;
                  else if (v == "siren")
                    c.network.init = InitScheme::Siren;
                  else
                    throw UsageError("invalid value for init: '" + v + "'");
                }},
      real("init-radius", "radius of the initial sphere (geometric and multifreq init)",
           [](TrainConfig& c) -> double& { return c.network.init_radius; }),
      real("output-gain", "output layer scale (siren init)",
           [](TrainConfig& c) -> double& { return c.network.output_gain; }),
      ConfigKey{"gradient-mode", "spatial gradients: forward (tangents) or central (differences, for checks)",
                [](const TrainConfig& c) {
                  return std::string(c.gradient_mode == GradientMode::Forward ? "forward" : "central");
                },
                [](TrainConfig& c, const std::string& v) {
                  if (v == "forward")
                    c.gradient_mode = GradientMode::Forward;
                  else if (v == "central")
                    c.gradient_mode = GradientMode::CentralDifference;
                  else
                    throw UsageError("invalid value for gradient-mode: '" + v + "'");
                }},
      count("seed", "random seed", [](TrainConfig& c) -> std::uint64_t& { return c.seed; }),
      count("threads", "worker threads (1 = deterministic)", [](TrainConfig& c) -> unsigned& { return c.threads; }),
  };
  return keys;
}

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

inline void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw UsageError("unknown setting '" + key + "'");
  k->set(cfg, value);
}

/// Every key with its current value, in table order.
inline std::vector<std::pair<std::string, std::string>> settings_of(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

/// Reads `key = value` lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> read_settings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("input not found: " + path, 0);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path + ": expected 'key = value'", lineno);
    auto key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(path + ": expected 'key = value'", lineno);
    if (!find_config_key(key)) throw ParseError(path + ": unknown setting '" + key + "'", lineno);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

}  // namespace fdsdf
