#pragma once

// Run configuration: a single JSON document per experiment.
//
//   {
//     "kernel":    {"dimension": 1, "entries": [{"z": [2], "p": "1/3"}, {"z": [-1], "p": "2/3"}]},
//     "N":         3 | [2, 3, 4],
//     "K":         3            (exactly one of K / density)
//     "density":   0.5,
//     "direction": [1.0],       (optional; full matrix otherwise)
//     "sign":      -1,          (optional correction-sign override)
//     "solver":    {"tol": 1e-10, "max_iter": 20000, "restart": 80, "dense_threshold": 5000,
//                   "dense_eigen_threshold": 2000, "method": "auto|dense|iterative",
//                   "precondition": false},
//     "plateau_rtol": 0.05,
//     "mc":        {"T": 100, "M": 10000, "seed": 1, "fast_path": false,
//                   "relaxation_factor": 10, "max_replicas": 160000},
//     "diagnostics": {"prop1_trials": 100, "gap": true, "sector": true,
//                     "resolvent_ladder": [1, 0.1, 0.01],
//                     "multiscale": {"l": 1, "q": 2, "n_max": 3, "function": F},
//                     "hminus1": {"N": [3, 4, 5, 6], "function": F},
//                     "range_residual": {"radii": [1, 2]}},
//     "calibration": [{"N": 2, "K": 2, "kernel": {...}}],
//     "caps":      {"states": 500000, "nonzeros": 50000000},
//     "dump_operator": false
//   }
//
// F is {"occupation": [x...], "offset": c} or
//      {"constant": c, "terms": [{"coef": c, "sites": [[x...], ...]}]}.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sepdiff/diffusion.hpp"
#include "sepdiff/kernel.hpp"
#include "sepdiff/montecarlo.hpp"
#include "sepdiff/sobolev.hpp"

namespace sepdiff {

struct MultiscaleConfig {
  int l = 1;
  int q = 2;
  int n_max = 1;
  LocalFunction function;
};

struct HMinus1Config {
  std::vector<int> half_widths;
  LocalFunction function;
};

struct DiagnosticsConfig {
  int prop1_trials = 100;
  bool gap = true;
  bool sector = true;
  std::vector<double> resolvent_ladder;
  std::optional<MultiscaleConfig> multiscale;
  std::optional<HMinus1Config> hminus1;
  std::vector<int> range_radii;
};

struct RunConfig {
  nlohmann::json raw;
  JumpKernel kernel;
  std::vector<int> half_widths;
  std::optional<int> total_particles;
  std::optional<double> density;
  std::optional<std::vector<double>> direction;
  std::optional<int> sign;
  SolverOptions solver;
  double plateau_rtol = 0.05;
  MCOptions mc;
  double relaxation_factor = 10.0;
  std::size_t max_replicas = 160000;
  DiagnosticsConfig diagnostics;
  std::vector<CalibrationSystem> calibration;
  std::uint64_t state_cap = kDefaultStateCap;
  std::uint64_t nonzero_cap = kDefaultNonzeroCap;
  bool dump_operator = false;

  /// K on a torus of half-width n, from K or density.
  int particles_for(int half_width) const;
};

JumpKernel parse_kernel(const nlohmann::json& block);
LocalFunction parse_local_function(const nlohmann::json& block, int dimension);

/// Throws Error{ConfigError, ...} or the kernel validation errors.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

}  // namespace sepdiff
