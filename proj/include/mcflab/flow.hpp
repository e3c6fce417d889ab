#pragma once

// Time integration of mean curvature flow on radial graphs.
//
// Unrescaled:  dr/dt = -H v
// Rescaled:    dr/ds = -H v + r,   x = x* + sqrt(2 (T - t)) y,   s = -1/2 ln(T - t)
//
// Degrees 0 and 1 are unstable for the rescaled flow (eigenvalues 2 and 1).
// They encode the choice of T and x*, so a rescaled run keeps them in check with
// two gauge moves every `gauge_interval` of run clock: recenter (translation,
// kills a_1) and renormalize (dilation, zeroes the mean of dr/ds). Each move is
// booked into the gauge (T, x*); at the end every snapshot is re-expressed
// about the final (T, x*), which is then the best available estimate.

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "mcflab/hypersurface.hpp"

namespace mcflab {

enum class Frame { Mcf, Rescaled };

inline const char* to_string(Frame f) { return f == Frame::Mcf ? "mcf" : "rescaled"; }

struct FlowState {
  /// t for the unrescaled frame, s for the rescaled one.
  double time = 0;
  RadialGraphd graph;
  Frame frame = Frame::Mcf;
};

/// Extinction time and shrink point that relate a rescaled state to the physical flow.
struct Gauge {
  double T = 1;
  Eigen::VectorXd x_star;
};

struct StepRecord {
  double time = 0;
  double dt = 0;
  double H_max = 0, H_min = 0;
  double pinching_max = 0;
  double r_min = 0;
  double grad_A_max = 0;
};

struct FlowTrace {
  Frame frame = Frame::Mcf;
  std::vector<FlowState> snapshots;
  /// Rescaled traces: gauge each snapshot is expressed in.
  std::vector<Gauge> gauges;
  std::vector<StepRecord> steps;
  /// True once every snapshot refers to `final_gauge`.
  bool gauge_normalized = false;
  Gauge final_gauge;
  long accepted_steps = 0;
  long rejected_steps = 0;

  std::vector<double> times() const;
};

struct IntegratorConfig {
  double dt_safety = 0.8;
  double tol = 1e-10;
  long max_steps = 5'000'000;
  bool dealias = true;
  /// Rescaled runs: snapshot and gauge cadence in run clock.
  double snapshot_interval = 0.05;
  double gauge_interval = 0.5;
  bool gauges = true;
  /// Unrescaled runs stop once the area radius drops below this fraction of its initial value.
  double floor_fraction = 1e-3;
  /// Unrescaled runs: keep every k-th accepted step.
  int snapshot_every = 1;
  bool record_steps = true;

  void validate() const;
};

/// dr/dt (or dr/ds) at the current graph, without projection.
Eigen::VectorXd flow_rhs(const RadialGraphd& graph, Frame frame);

/// Step-size cap from the spectral radius of the linearised operator.
double stable_dt(const RadialGraphd& graph, const IntegratorConfig& cfg);

/// Radius of the round sphere with the same area; translation invariant.
double area_radius(const RadialGraphd& graph);

/// Advance by exactly dt with adaptive substeps.
FlowState step_mcf(const FlowState& state, double dt, const IntegratorConfig& cfg = {});
FlowState step_rescaled(const FlowState& state, double ds, const IntegratorConfig& cfg = {});

struct SingularityRun {
  FlowTrace trace;
  double T = 0;
  Eigen::VectorXd x_star;
  /// Spread of the per-snapshot T values inside the fit window.
  double T_spread = 0;
  int fit_points = 0;
};

SingularityRun run_to_singularity(const RadialGraphd& initial, const IntegratorConfig& cfg = {});

FlowTrace rescale_trace(const FlowTrace& trace, double T, const Eigen::VectorXd& x_star);

/// Translation that removes the degree-1 part of r - sqrt(n); returns the shift.
std::pair<FlowState, Eigen::VectorXd> recenter(const FlowState& state);

/// Dilation r -> lambda r making the mean of dr/ds zero; returns lambda.
std::pair<FlowState, double> renormalize(const FlowState& state);

/// Everything needed to continue a rescaled run.
struct RescaledCursor {
  FlowState state;
  Gauge gauge;
  double clock = 0;
  double dt = 0;
  long snapshot_count = 0;
  long gauge_count = 0;
};

RescaledCursor start_rescaled(const RadialGraphd& initial, const IntegratorConfig& cfg);

/// Integrates the cursor up to `clock_end`, appending raw (un-normalised) snapshots.
void advance_rescaled(RescaledCursor& cursor, double clock_end, const IntegratorConfig& cfg, FlowTrace& raw);

/// Re-expresses every snapshot of a raw rescaled trace about its final gauge.
FlowTrace normalize_gauge(const FlowTrace& raw);

FlowTrace run_rescaled(const RadialGraphd& initial, double s_max, const IntegratorConfig& cfg = {});

}  // namespace mcflab
