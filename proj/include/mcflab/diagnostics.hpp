#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcflab/flow.hpp"

namespace mcflab {

/// Per-snapshot spectrum of w = r - sqrt(n).
struct ModalTrace {
  int n = 1;
  std::vector<double> s;
  std::vector<ZonalSpectrumd> spectra;
  /// L2 norm of w and max over nodes of |w|.
  std::vector<double> w_norm, w_max;

  /// a_k(s) for one stored coefficient.
  std::vector<double> series(int k, Parity parity = Parity::Cosine) const;
  /// Norm of the degree-k block (both partners for n = 1).
  std::vector<double> degree_norm_series(int k) const;
};

ModalTrace modal_trace(const FlowTrace& trace);

struct RateFit {
  double s0 = 0, s1 = 0;
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
  int n_points = 0;
};

/// Least squares of ln|value| against s over [s0, s1].
RateFit fit_decay_rate(const std::vector<double>& s, const std::vector<double>& values, double s0, double s1);

struct FitWindow {
  double s0 = 0, s1 = 0;
};

/// From the first s where max|w| < `fraction` of its initial value to the end of the run minus `tail`.
FitWindow default_window(const ModalTrace& mt, double fraction = 0.1, double tail = 1.0);

/// Beta_k = k(k+n-1)/n - 2, the decay rate of degree k.
double decay_rate(int n, int k);

struct HuiskenMonitors {
  std::vector<double> s;
  std::vector<double> oscillation_H;
  std::vector<double> pinching_max;
  std::vector<double> grad_H_max;
  std::vector<double> grad_A_max;
  /// max |Z + 1/n|
  std::vector<double> Z_deviation;
};

HuiskenMonitors huisken_monitors(const FlowTrace& trace);

/// Z = -1/n - (Delta H / H^3 + (|A|^2 - H^2/n) / H^2), Laplacian in the induced metric.
Eigen::VectorXd compute_Z(const RadialGraphd& graph, const CurvatureDatad& cd);

struct AlphaEstimate {
  int degree = 2;
  /// Amplitude of e^{-beta s} referred to s = 0 of the trace's frame, from the fixed-slope fit.
  double alpha = 0;
  /// Same, from the free fit.
  double alpha_free = 0;
  double expected_slope = 0;
  RateFit fit;
  /// s origin used for alpha (always 0 of the trace).
  double frame_s0 = 0;
};

AlphaEstimate extract_alpha(const ModalTrace& mt, int n, int degree = 2, std::optional<FitWindow> window = {},
                            double slope_tolerance = 0.1);

}  // namespace mcflab
