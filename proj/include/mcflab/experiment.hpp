#pragma once

// Declarative experiments: config -> runs -> probes -> metrics -> assertions.

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcflab/arrival.hpp"
#include "mcflab/flow.hpp"

namespace mcflab {

struct InitialSpec {
  /// "sphere" or "perturbed".
  std::string kind = "perturbed";
  int degree = 2;
  /// Coefficient of the orthonormal Y_degree as a fraction of sqrt(n).
  double amplitude = 0.01;
  /// Physical radius for mcf-only runs; 0 means sqrt(2n), the rescaled run's physical surface.
  double radius = 0;
  /// Nonzero: add c Y_cancel_degree with c tuned so that degree's tail vanishes.
  int cancel_degree = 0;
  double cancel_s = 4;

  bool operator==(const InitialSpec&) const = default;
};

struct ProbeSpec {
  bool rates = true;
  std::vector<int> rate_degrees{2};
  std::optional<double> window_s0, window_s1;
  bool huisken = false;
  bool z = false;
  bool alpha = false;
  bool arrival = false;
  int directions = 16;
  /// Hessian scale as a fraction of the initial radius; 0 = smallest sampled radius.
  double hessian_h_fraction = 0;
  double rho_fraction = 0.1;
  bool c3 = false;
  bool corollary = false;
  int lemma_sweep_cases = 0;
  std::vector<double> linearization_amplitudes;
  double linearization_s_max = 2;

  bool operator==(const ProbeSpec&) const = default;
};

/// op: approx (relative tol), abs (absolute tol), lt, le, gt, ge.
struct Assertion {
  std::string metric;
  std::string op = "approx";
  double value = 0;
  double tol = 0;

  bool operator==(const Assertion&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  int n = 2;
  int N = 32;
  InitialSpec initial;
  /// mcf, rescaled, both, or none (probes that need no flow).
  std::string frame = "rescaled";
  double s_max = 10;
  IntegratorConfig integrator;
  ProbeSpec probes;
  std::vector<Assertion> assertions;
  std::uint64_t seed = 0;
  std::string output_dir;
  /// Rescaled runs write a checkpoint every this many units of s.
  double checkpoint_interval = 1;

  bool uses_rescaled() const { return frame == "rescaled" || frame == "both"; }
  bool uses_mcf() const { return frame == "mcf" || frame == "both"; }
  /// Throws Config with the offending field path.
  void validate() const;
  bool operator==(const ExperimentConfig& o) const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
/// "a.b.c=value"; value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

struct Metric {
  double value = 0;
  /// Fit window and quality; NaN when the entry is not a fit.
  double s0 = std::numeric_limits<double>::quiet_NaN();
  double s1 = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  int n_points = 0;
};

struct AssertionResult {
  Assertion assertion;
  std::optional<double> observed;
  bool pass = false;
  std::string detail;
};

struct RunReport {
  ExperimentConfig config;
  /// complete or interrupted
  std::string status = "complete";
  std::map<std::string, Metric> metrics;
  std::vector<AssertionResult> assertions;
  bool pass = false;
  std::vector<std::string> warnings;
  std::optional<double> T;
  std::optional<Eigen::VectorXd> x_star;
  std::optional<HessianReport> hessian;
  std::optional<RegularityReport> regularity;
  std::optional<CorollaryReport> corollary;
  std::optional<CancelTuning> tuning;
  double wall_seconds = 0;
  long accepted_steps = 0, rejected_steps = 0;
  std::string output_dir;
  std::vector<std::string> files;
};

nlohmann::json to_json(const RunReport& rep);

struct RunControl {
  /// Stop the rescaled run once its clock reaches this value (checkpoint kept).
  double stop_after = std::numeric_limits<double>::infinity();
  bool write_files = true;
};

/// Output root: $MCFLAB_OUTPUT_ROOT, else ./mcflab-out. Absolute output_dir wins.
std::string resolve_output_dir(const ExperimentConfig& cfg);

RunReport run_experiment(const ExperimentConfig& cfg, const RunControl& ctl = {});
RunReport resume_experiment(const std::string& checkpoint_path, const RunControl& ctl = {});

struct PresetInfo {
  std::string name;
  std::string description;
};

std::vector<PresetInfo> list_presets();
/// Throws Config for unknown names.
ExperimentConfig preset(const std::string& name);

}  // namespace mcflab
