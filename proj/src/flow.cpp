#include "mcflab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace mcflab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Dormand-Prince 5(4)
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kStabilityRadius = 3.3;

int effective_degree(const ZonalGridd& grid, bool dealias) {
  return dealias ? dealias_degree(grid.k_max()) : grid.k_max();
}

MatrixXd band_projector(const ZonalGridd& grid, int max_degree) {
  const int m = modes_for_degree(grid.dimension(), max_degree);
  return grid.basis().leftCols(m) * grid.analysis().topRows(m);
}

void check_state(const VectorXd& r, double time) {
  if (!r.allFinite()) throw Error(ErrorKind::Blowup, "non-finite radius at time " + std::to_string(time));
  if (!(r.minCoeff() > 0)) throw Error(ErrorKind::Blowup, "radius reached zero at time " + std::to_string(time));
}

StepRecord make_record(const RadialGraphd& g, const CurvatureDatad& cd, double time, double dt) {
  StepRecord rec;
  rec.time = time;
  rec.dt = dt;
  rec.H_max = cd.H.maxCoeff();
  rec.H_min = cd.H.minCoeff();
  rec.pinching_max = cd.pinching.maxCoeff();
  rec.r_min = g.r.minCoeff();
  rec.grad_A_max = std::sqrt(second_form_gradient_sq(g, cd).maxCoeff());
  return rec;
}

/// Adaptive integrator on the node values of r.
class Stepper {
 public:
  Stepper(const GridPtrd& grid, const VectorXd& center, Frame frame, const IntegratorConfig& cfg)
      : grid_(grid), center_(center), frame_(frame), cfg_(cfg) {
    cfg.validate();
    if (cfg.dealias) projector_ = band_projector(*grid, effective_degree(*grid, true));
  }

  VectorXd project(const VectorXd& r) const { return cfg_.dealias ? VectorXd(projector_ * r) : r; }

  VectorXd rhs(const VectorXd& r, CurvatureDatad* out = nullptr) const {
    const RadialGraphd g{grid_, r, center_};
    CurvatureDatad cd = curvature_data(g);
    VectorXd f = -cd.H.cwiseProduct(cd.v);
    if (frame_ == Frame::Rescaled) f += r;
    if (out) *out = std::move(cd);
    return project(f);
  }

  double cfl(const VectorXd& r) const {
    const int n = grid_->dimension();
    const double K = effective_degree(*grid_, cfg_.dealias);
    const double rmin = r.minCoeff();
    const double lam = K * (K + n - 1) / (rmin * rmin) + (frame_ == Frame::Rescaled ? 1.0 : 0.0);
    return cfg_.dt_safety * kStabilityRadius / lam;
  }

  /// Takes one accepted step of at most `max_dt`. Returns the step taken and
  /// updates the proposal for the next one.
  double step(VectorXd& r, double time, double max_dt, double& dt_next, FlowTrace* trace) {
    const double cap = std::min(max_dt, cfl(r));
    double dt = dt_next > 0 ? std::min(dt_next, cap) : cap;
    if (!have_k1_) {
      k1_ = rhs(r);
      have_k1_ = true;
    }
    int rejects = 0;
    for (;;) {
      const VectorXd k2 = rhs(r + dt * a21 * k1_);
      const VectorXd k3 = rhs(r + dt * (a31 * k1_ + a32 * k2));
      const VectorXd k4 = rhs(r + dt * (a41 * k1_ + a42 * k2 + a43 * k3));
      const VectorXd k5 = rhs(r + dt * (a51 * k1_ + a52 * k2 + a53 * k3 + a54 * k4));
      const VectorXd k6 = rhs(r + dt * (a61 * k1_ + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const VectorXd y = r + dt * (b1 * k1_ + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      bool ok = y.allFinite() && y.minCoeff() > 0;
      double err = std::numeric_limits<double>::infinity();
      CurvatureDatad cd;
      VectorXd k7;
      if (ok) {
        try {
          k7 = rhs(y, &cd);
        } catch (const Error&) {
          ok = false;
        }
      }
      if (ok) {
        const VectorXd e = dt * (e1 * k1_ + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double scale = cfg_.tol * std::max(y.cwiseAbs().maxCoeff(), r.cwiseAbs().maxCoeff());
        err = e.cwiseAbs().maxCoeff() / scale;
      }
      if (ok && err <= 1) {
        if (cd.kappa.minCoeff() <= 0)
          throw Error(ErrorKind::ConvexityLost, "principal curvature changed sign at " + std::string(to_string(frame_)) +
                                                    " time " + std::to_string(time + dt));
        r = y;
        k1_ = k7;
        ++accepted_;
        const double fac = err > 0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        dt_next = dt * std::clamp(fac, 0.2, 5.0);
        if (trace && cfg_.record_steps) trace->steps.push_back(make_record({grid_, r, center_}, cd, time + dt, dt));
        if (accepted_ > cfg_.max_steps) throw Error(ErrorKind::StepRejected, "max_steps exceeded");
        return dt;
      }
      ++rejected_;
      const double fac = std::isfinite(err) ? std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.5) : 0.25;
      dt *= fac;
      if (++rejects > 60 || dt < 1e-15 * std::max(1.0, std::abs(time)))
        throw Error(ErrorKind::StepRejected,
                    "error tolerance not met at time " + std::to_string(time) + " (dt " + std::to_string(dt) + ")");
    }
  }

  /// Advances exactly `span`, landing on the endpoint.
  void advance(VectorXd& r, double time, double span, double& dt_next, FlowTrace* trace) {
    double done = 0;
    while (span - done > 1e-14 * std::max(1.0, std::abs(time))) {
      const double remaining = span - done;
      double dt = step(r, time + done, remaining, dt_next, trace);
      // avoid a sliver step at the end
      if (remaining - dt < 1e-12 * std::max(1.0, std::abs(time))) dt = remaining;
      done += dt;
    }
  }

  /// The state changed outside the integrator (projection, gauge move).
  void invalidate() { have_k1_ = false; }
  void set_center(const VectorXd& c) { center_ = c; invalidate(); }

  long accepted() const { return accepted_; }
  long rejected() const { return rejected_; }

 private:
  GridPtrd grid_;
  VectorXd center_;
  Frame frame_;
  IntegratorConfig cfg_;
  MatrixXd projector_;
  VectorXd k1_;
  bool have_k1_ = false;
  long accepted_ = 0, rejected_ = 0;
};

FlowState advance_fixed(const FlowState& state, double span, const IntegratorConfig& cfg, Frame frame) {
  if (state.frame != frame)
    throw Error(ErrorKind::FrameMismatch, std::string("expected ") + to_string(frame) + " frame state");
  if (!(span >= 0) || !std::isfinite(span)) throw Error(ErrorKind::InvalidArgument, "step length must be >= 0");
  Stepper st(state.graph.grid, state.graph.center, frame, cfg);
  VectorXd r = st.project(state.graph.r);
  double dt = 0;
  st.advance(r, state.time, span, dt, nullptr);
  check_state(r, state.time + span);
  return {state.time + span, make_graph(state.graph.grid, r, state.graph.center), frame};
}

double ambient_mean(const ZonalGridd& grid, const VectorXd& f) {
  return grid.integrate(f) / grid.integrate(VectorXd::Ones(grid.size()));
}

}  // namespace

std::vector<double> FlowTrace::times() const {
  std::vector<double> out;
  out.reserve(snapshots.size());
  for (const auto& s : snapshots) out.push_back(s.time);
  return out;
}

void IntegratorConfig::validate() const {
  if (!(tol > 0)) throw Error(ErrorKind::Config, "integrator.tol must be > 0");
  if (!(dt_safety > 0 && dt_safety <= 1)) throw Error(ErrorKind::Config, "integrator.dt_safety must be in (0,1]");
  if (max_steps <= 0) throw Error(ErrorKind::Config, "integrator.max_steps must be positive");
  if (!(snapshot_interval > 0)) throw Error(ErrorKind::Config, "integrator.snapshot_interval must be > 0");
  if (!(gauge_interval > 0)) throw Error(ErrorKind::Config, "integrator.gauge_interval must be > 0");
  if (!(floor_fraction > 0 && floor_fraction < 1)) throw Error(ErrorKind::Config, "integrator.floor_fraction must be in (0,1)");
  if (snapshot_every < 1) throw Error(ErrorKind::Config, "integrator.snapshot_every must be >= 1");
}

VectorXd flow_rhs(const RadialGraphd& graph, Frame frame) {
  const CurvatureDatad cd = curvature_data(graph);
  VectorXd f = -cd.H.cwiseProduct(cd.v);
  if (frame == Frame::Rescaled) f += graph.r;
  return f;
}

double stable_dt(const RadialGraphd& graph, const IntegratorConfig& cfg) {
  const int n = graph.dimension();
  const double K = effective_degree(*graph.grid, cfg.dealias);
  const double rmin = graph.r.minCoeff();
  return cfg.dt_safety * kStabilityRadius * rmin * rmin / (K * (K + n - 1));
}

double area_radius(const RadialGraphd& graph) {
  const int n = graph.dimension();
  const CurvatureDatad cd = curvature_data(graph);
  const double area = surface_integral(graph, cd, VectorXd(VectorXd::Ones(graph.size())));
  return std::pow(area / detail::unit_sphere_area<double>(n), 1.0 / n);
}

FlowState step_mcf(const FlowState& state, double dt, const IntegratorConfig& cfg) {
  return advance_fixed(state, dt, cfg, Frame::Mcf);
}

FlowState step_rescaled(const FlowState& state, double ds, const IntegratorConfig& cfg) {
  return advance_fixed(state, ds, cfg, Frame::Rescaled);
}

SingularityRun run_to_singularity(const RadialGraphd& initial, const IntegratorConfig& cfg) {
  cfg.validate();
  const auto cv = convexity_check(initial);
  if (!cv.convex)
    throw Error(ErrorKind::NonConvexInput, "initial graph is not convex (min principal curvature " +
                                               std::to_string(cv.margin) + ")");
  const int n = initial.dimension();
  SingularityRun out;
  FlowTrace& trace = out.trace;
  trace.frame = Frame::Mcf;

  Stepper st(initial.grid, initial.center, Frame::Mcf, cfg);
  RadialGraphd g = make_graph(initial.grid, st.project(initial.r), initial.center);
  double t = 0, dt = 0;
  const double floor = cfg.floor_fraction * area_radius(g);
  trace.snapshots.push_back({t, g, Frame::Mcf});
  std::vector<double> radius{area_radius(g)};
  std::vector<VectorXd> centroid{area_centroid(g)};

  long count = 0;
  for (;;) {
    t += st.step(g.r, t, std::numeric_limits<double>::infinity(), dt, &trace);
    check_state(g.r, t);
    const double ra = area_radius(g);
    const bool done = ra < floor;
    if (++count % cfg.snapshot_every == 0 || done) {
      trace.snapshots.push_back({t, g, Frame::Mcf});
      radius.push_back(ra);
      centroid.push_back(area_centroid(g));
    }
    if (done) break;
    // keep the graph star-shaped about a point near the shrink point
    const VectorXd c = area_centroid(g);
    if ((c - g.center).norm() > 0.05 * ra) {
      g = resample_about(g, c);
      g.r = st.project(g.r);
      st.set_center(g.center);
    }
  }
  trace.accepted_steps = st.accepted();
  trace.rejected_steps = st.rejected();

  // T from r^2 = 2n(T - t) with the slope fixed, over the final decade of radius.
  const double r_last = radius.back();
  std::vector<int> window;
  for (int k = 0; k < static_cast<int>(radius.size()); ++k)
    if (radius[k] <= 10 * r_last) window.push_back(k);
  if (window.size() < 5) throw Error(ErrorKind::WindowTooShort, "run_to_singularity: fewer than 5 snapshots in the final decade");
  double sum = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int k : window) {
    const double Tk = trace.snapshots[k].time + radius[k] * radius[k] / (2.0 * n);
    sum += Tk;
    lo = std::min(lo, Tk);
    hi = std::max(hi, Tk);
  }
  out.T = sum / window.size();
  out.T_spread = hi - lo;
  out.fit_points = static_cast<int>(window.size());

  // x*: centroid extrapolated linearly in T - t.
  const int m = static_cast<int>(window.size());
  MatrixXd A(m, 2);
  MatrixXd Y(m, centroid[0].size());
  for (int i = 0; i < m; ++i) {
    A(i, 0) = 1;
    A(i, 1) = out.T - trace.snapshots[window[i]].time;
    Y.row(i) = centroid[window[i]].transpose();
  }
  const MatrixXd coef = A.colPivHouseholderQr().solve(Y);
  out.x_star = coef.row(0).transpose();
  if (n >= 2) out.x_star.tail(out.x_star.size() - 1).setZero();
  trace.final_gauge = {out.T, out.x_star};
  return out;
}

FlowTrace rescale_trace(const FlowTrace& trace, double T, const VectorXd& x_star) {
  if (trace.frame != Frame::Mcf) throw Error(ErrorKind::FrameMismatch, "rescale_trace expects an unrescaled trace");
  FlowTrace out;
  out.frame = Frame::Rescaled;
  out.gauge_normalized = true;
  out.final_gauge = {T, x_star};
  out.accepted_steps = trace.accepted_steps;
  out.rejected_steps = trace.rejected_steps;
  for (const auto& snap : trace.snapshots) {
    const double tau = T - snap.time;
    if (!(tau > 0))
      throw Error(ErrorKind::TimeInconsistent,
                  "rescale_trace: snapshot time " + std::to_string(snap.time) + " is not before T = " + std::to_string(T));
    RadialGraphd g = resample_about(snap.graph, x_star);
    g.r /= std::sqrt(2 * tau);
    g.center = VectorXd::Zero(x_star.size());
    out.snapshots.push_back({-0.5 * std::log(tau), std::move(g), Frame::Rescaled});
    out.gauges.push_back(out.final_gauge);
  }
  return out;
}

std::pair<FlowState, VectorXd> recenter(const FlowState& state) {
  if (state.frame != Frame::Rescaled) throw Error(ErrorKind::FrameMismatch, "recenter expects a rescaled state");
  const int n = state.graph.dimension();
  const auto& grid = *state.graph.grid;
  VectorXd total = VectorXd::Zero(state.graph.center.size());
  RadialGraphd g = state.graph;
  const double c1 = n == 1 ? 1 / std::sqrt(detail::pi<double>()) : zonal_harmonic(n, 1, 0.0);
  for (int it = 0; it < 40; ++it) {
    const ZonalSpectrumd w = analyze(grid, g.r);
    VectorXd d = VectorXd::Zero(total.size());
    d[0] = w.amplitude(1, Parity::Cosine) * c1;
    if (n == 1) d[1] = w.amplitude(1, Parity::Sine) * c1;
    if (d.norm() <= 1e-15 * std::sqrt(double(n))) break;
    if (d.norm() > 0.25 * g.r.minCoeff())
      throw Error(ErrorKind::ShiftTooLarge, "recenter: degree-1 shift " + std::to_string(d.norm()) +
                                                " too large to re-sample as a graph");
    RadialGraphd moved = resample_about(g, VectorXd(g.center + d));
    moved.center = g.center;
    g = std::move(moved);
    total += d;
  }
  return {{state.time, std::move(g), Frame::Rescaled}, total};
}

std::pair<FlowState, double> renormalize(const FlowState& state) {
  if (state.frame != Frame::Rescaled) throw Error(ErrorKind::FrameMismatch, "renormalize expects a rescaled state");
  const auto& grid = *state.graph.grid;
  const CurvatureDatad cd = curvature_data(state.graph);
  const double hv = ambient_mean(grid, cd.H.cwiseProduct(cd.v));
  const double rm = ambient_mean(grid, state.graph.r);
  if (!(hv > 0)) throw Error(ErrorKind::NonPositiveH, "renormalize: mean of H v is not positive");
  const double lambda = std::sqrt(hv / rm);
  FlowState out = state;
  out.graph.r *= lambda;
  return {out, lambda};
}

RescaledCursor start_rescaled(const RadialGraphd& initial, const IntegratorConfig& cfg) {
  cfg.validate();
  const auto cv = convexity_check(initial);
  if (!cv.convex)
    throw Error(ErrorKind::NonConvexInput, "initial graph is not convex (min principal curvature " +
                                               std::to_string(cv.margin) + ")");
  if (initial.center.norm() != 0)
    throw Error(ErrorKind::InvalidArgument, "rescaled runs expect graphs centred at the origin");
  RescaledCursor cur;
  RadialGraphd g = initial;
  if (cfg.dealias) g.r = band_projector(*g.grid, dealias_degree(g.grid->k_max())) * g.r;
  cur.state = {0.0, make_graph(g.grid, g.r, g.center), Frame::Rescaled};
  cur.gauge = {1.0, VectorXd::Zero(initial.center.size())};
  return cur;
}

void advance_rescaled(RescaledCursor& cur, double clock_end, const IntegratorConfig& cfg, FlowTrace& raw) {
  raw.frame = Frame::Rescaled;
  Stepper st(cur.state.graph.grid, cur.state.graph.center, Frame::Rescaled, cfg);
  const double root_n = std::sqrt(double(cur.state.graph.dimension()));
  const auto push = [&] {
    raw.snapshots.push_back(cur.state);
    raw.gauges.push_back(cur.gauge);
  };
  if (cur.snapshot_count == 0) {
    push();
    cur.snapshot_count = 1;
  }
  const double eps = 1e-12 * std::max(1.0, clock_end);
  while (cur.clock < clock_end - eps) {
    const double next_snap = cur.snapshot_count * cfg.snapshot_interval;
    const double next_gauge = cfg.gauges ? (cur.gauge_count + 1) * cfg.gauge_interval
                                         : std::numeric_limits<double>::infinity();
    const double target = std::min({next_snap, next_gauge, clock_end});
    VectorXd r = cur.state.graph.r;
    st.advance(r, cur.clock, target - cur.clock, cur.dt, &raw);
    check_state(r, cur.state.time);
    cur.state.time += target - cur.clock;
    cur.clock = target;
    cur.state.graph = make_graph(cur.state.graph.grid, std::move(r), cur.state.graph.center);
    const double mean_r = ambient_mean(*cur.state.graph.grid, cur.state.graph.r);
    if (!(mean_r > 0.1 * root_n && mean_r < 10 * root_n))
      throw Error(ErrorKind::Blowup, "rescaled mean radius left (0.1, 10) sqrt(n) at s = " + std::to_string(cur.state.time));

    if (std::abs(cur.clock - next_gauge) <= eps) {
      const double tau = std::exp(-2 * cur.state.time);
      auto [moved, shift] = recenter(cur.state);
      cur.gauge.x_star += std::sqrt(2 * tau) * shift;
      if (cfg.dealias) moved.graph.r = st.project(moved.graph.r);
      auto [scaled, lambda] = renormalize(moved);
      cur.gauge.T += tau * (1 / (lambda * lambda) - 1);
      scaled.time += std::log(lambda);
      cur.state = std::move(scaled);
      ++cur.gauge_count;
      st.invalidate();
    }
    if (std::abs(cur.clock - next_snap) <= eps) {
      push();
      ++cur.snapshot_count;
    }
  }
  raw.accepted_steps += st.accepted();
  raw.rejected_steps += st.rejected();
  raw.final_gauge = cur.gauge;
  raw.gauge_normalized = !cfg.gauges;
}

FlowTrace normalize_gauge(const FlowTrace& raw) {
  if (raw.frame != Frame::Rescaled) throw Error(ErrorKind::FrameMismatch, "normalize_gauge expects a rescaled trace");
  if (raw.gauges.size() != raw.snapshots.size()) throw Error(ErrorKind::InvalidArgument, "normalize_gauge: gauge list length");
  FlowTrace out = raw;
  const Gauge& fin = raw.final_gauge;
  for (std::size_t k = 0; k < raw.snapshots.size(); ++k) {
    const FlowState& snap = raw.snapshots[k];
    const Gauge& gk = raw.gauges[k];
    const double tau_k = std::exp(-2 * snap.time);
    const double tau_f = tau_k + (fin.T - gk.T);
    if (!(tau_f > 0))
      throw Error(ErrorKind::TimeInconsistent, "normalize_gauge: snapshot lies past the final extinction time");
    RadialGraphd g = snap.graph;
    g.r *= std::sqrt(tau_k / tau_f);
    const VectorXd shift = (fin.x_star - gk.x_star) / std::sqrt(2 * tau_f);
    if (shift.norm() > 0) {
      const VectorXd origin = g.center;
      g = resample_about(g, VectorXd(origin + shift));
      g.center = origin;
    }
    out.snapshots[k] = {-0.5 * std::log(tau_f), std::move(g), Frame::Rescaled};
    out.gauges[k] = fin;
  }
  out.gauge_normalized = true;
  return out;
}

FlowTrace run_rescaled(const RadialGraphd& initial, double s_max, const IntegratorConfig& cfg) {
  if (!(s_max > 0)) throw Error(ErrorKind::InvalidArgument, "run_rescaled: s_max must be positive");
  RescaledCursor cur = start_rescaled(initial, cfg);
  FlowTrace raw;
  advance_rescaled(cur, s_max, cfg, raw);
  return cfg.gauges ? normalize_gauge(raw) : raw;
}

}  // namespace mcflab
