#include "mcflab/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace mcflab {

using Eigen::VectorXd;

std::vector<double> ModalTrace::series(int k, Parity parity) const {
  std::vector<double> out;
  out.reserve(spectra.size());
  for (const auto& sp : spectra) out.push_back(sp.amplitude(k, parity));
  return out;
}

std::vector<double> ModalTrace::degree_norm_series(int k) const {
  std::vector<double> out;
  out.reserve(spectra.size());
  for (const auto& sp : spectra) out.push_back(sp.degree_norm(k));
  return out;
}

ModalTrace modal_trace(const FlowTrace& trace) {
  if (trace.frame != Frame::Rescaled) throw Error(ErrorKind::FrameMismatch, "modal_trace expects a rescaled trace");
  if (trace.snapshots.empty()) throw Error(ErrorKind::InvalidArgument, "modal_trace: empty trace");
  ModalTrace mt;
  mt.n = trace.snapshots.front().graph.dimension();
  const double root_n = std::sqrt(double(mt.n));
  for (const auto& snap : trace.snapshots) {
    if (!mt.s.empty() && !(snap.time > mt.s.back()))
      throw Error(ErrorKind::InvalidArgument, "modal_trace: snapshot times must increase");
    mt.s.push_back(snap.time);
    mt.spectra.push_back(perturbation_w(snap.graph));
    mt.w_norm.push_back(mt.spectra.back().norm());
    mt.w_max.push_back((snap.graph.r.array() - root_n).abs().maxCoeff());
  }
  return mt;
}

RateFit fit_decay_rate(const std::vector<double>& s, const std::vector<double>& values, double s0, double s1) {
  if (s.size() != values.size()) throw Error(ErrorKind::InvalidArgument, "fit_decay_rate: length mismatch");
  if (!(s1 > s0)) throw Error(ErrorKind::WindowTooShort, "fit_decay_rate: empty window");
  std::vector<double> xs, ys;
  int sign = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < s0 || s[i] > s1) continue;
    const double v = values[i];
    if (!std::isfinite(v) || v == 0)
      throw Error(ErrorKind::NonPositive, "fit_decay_rate: zero or non-finite value at s = " + std::to_string(s[i]));
    const int sg = v > 0 ? 1 : -1;
    if (sign != 0 && sg != sign)
      throw Error(ErrorKind::SignChange, "fit_decay_rate: sign change inside window at s = " + std::to_string(s[i]));
    sign = sg;
    xs.push_back(s[i]);
    ys.push_back(std::log(std::abs(v)));
  }
  const int m = static_cast<int>(xs.size());
  if (m < 10) throw Error(ErrorKind::WindowTooShort, "fit_decay_rate: " + std::to_string(m) + " points in window (need 10)");
  const Eigen::Map<const VectorXd> x(xs.data(), m), y(ys.data(), m);
  const double xm = x.mean(), ym = y.mean();
  const double sxx = (x.array() - xm).square().sum();
  const double sxy = ((x.array() - xm) * (y.array() - ym)).sum();
  const double syy = (y.array() - ym).square().sum();
  RateFit f;
  f.s0 = xs.front();
  f.s1 = xs.back();
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  f.r_squared = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  f.n_points = m;
  return f;
}

FitWindow default_window(const ModalTrace& mt, double fraction, double tail) {
  if (mt.s.empty()) throw Error(ErrorKind::WindowTooShort, "default_window: empty trace");
  const double w0 = mt.w_max.front();
  double s0 = mt.s.front();
  for (std::size_t i = 0; i < mt.s.size(); ++i) {
    if (mt.w_max[i] < fraction * w0) {
      s0 = mt.s[i];
      break;
    }
  }
  const double s1 = mt.s.back() - tail;
  if (!(s1 > s0))
    throw Error(ErrorKind::WindowTooShort, "default_window: run ends before the transient is over (s0 = " +
                                               std::to_string(s0) + ", s1 = " + std::to_string(s1) + ")");
  return {s0, s1};
}

double decay_rate(int n, int k) { return -operator_eigenvalue(n, k); }

VectorXd compute_Z(const RadialGraphd& graph, const CurvatureDatad& cd) {
  if (!(cd.H.minCoeff() > 0)) throw Error(ErrorKind::NonPositiveH, "compute_Z: H must be positive everywhere");
  const int n = graph.dimension();
  const VectorXd lap = surface_laplacian(graph, cd, cd.H);
  const VectorXd H2 = cd.H.array().square();
  return (-1.0 / n - (lap.array() / (H2.array() * cd.H.array()) + cd.pinching.array() / H2.array())).matrix();
}

HuiskenMonitors huisken_monitors(const FlowTrace& trace) {
  if (trace.frame != Frame::Rescaled) throw Error(ErrorKind::FrameMismatch, "huisken_monitors expects a rescaled trace");
  HuiskenMonitors m;
  for (const auto& snap : trace.snapshots) {
    const int n = snap.graph.dimension();
    const CurvatureDatad cd = curvature_data(snap.graph);
    m.s.push_back(snap.time);
    m.oscillation_H.push_back(cd.H.maxCoeff() - cd.H.minCoeff());
    m.pinching_max.push_back(cd.pinching.cwiseAbs().maxCoeff());
    m.grad_H_max.push_back(surface_gradient(snap.graph, cd, cd.H).cwiseAbs().maxCoeff());
    m.grad_A_max.push_back(std::sqrt(second_form_gradient_sq(snap.graph, cd).maxCoeff()));
    m.Z_deviation.push_back((compute_Z(snap.graph, cd).array() + 1.0 / n).abs().maxCoeff());
  }
  return m;
}

AlphaEstimate extract_alpha(const ModalTrace& mt, int n, int degree, std::optional<FitWindow> window,
                            double slope_tolerance) {
  if (degree < 2) throw Error(ErrorKind::InvalidArgument, "extract_alpha: degree must be >= 2");
  const FitWindow w = window ? *window : default_window(mt);
  const std::vector<double> a = mt.series(degree);
  AlphaEstimate out;
  out.degree = degree;
  out.expected_slope = -decay_rate(n, degree);
  out.fit = fit_decay_rate(mt.s, a, w.s0, w.s1);
  if (std::abs(out.fit.slope - out.expected_slope) > slope_tolerance * std::abs(out.expected_slope))
    throw Error(ErrorKind::SlopeMismatch, "extract_alpha: degree-" + std::to_string(degree) + " slope " +
                                              std::to_string(out.fit.slope) + " differs from " +
                                              std::to_string(out.expected_slope) + " by more than " +
                                              std::to_string(100 * slope_tolerance) + "%");
  double sum = 0, sign = 0;
  int count = 0;
  for (std::size_t i = 0; i < mt.s.size(); ++i) {
    if (mt.s[i] < w.s0 || mt.s[i] > w.s1) continue;
    sum += std::log(std::abs(a[i])) - out.expected_slope * mt.s[i];
    sign = a[i] > 0 ? 1 : -1;
    ++count;
  }
  out.alpha = sign * std::exp(sum / count);
  out.alpha_free = sign * std::exp(out.fit.intercept);
  return out;
}

}  // namespace mcflab
