#pragma once

// Arrival time u(x) = t for x in M_t, reconstructed from a flow trace.
//
// Each snapshot gives, along a ray x* + rho w, one exact sample (rho, tau) with
// tau = T - u. Between samples ln tau is interpolated against ln rho^2 by a
// monotone cubic Hermite rule; for a shrinking sphere that relation is linear.
// Rescaled traces give tau = e^{-2s} directly, which avoids the cancellation in
// T - t close to the singular time, and the residual tau - rho^2/(2n) comes
// from w as -tau w (2 sqrt(n) + w) / n.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mcflab/flow.hpp"

namespace mcflab {

struct RaySamples {
  /// Polar angle (n >= 2) or circle angle (n = 1).
  double angle = 0;
  /// Time order: rho and tau decrease.
  std::vector<double> rho, tau;
  /// tau - rho^2/(2n) and its noise estimate.
  std::vector<double> residual, noise;
  /// Hermite data on x = ln rho^2 (ascending), y = ln tau, m = dy/dx.
  std::vector<double> x, y, m;
};

struct ArrivalField {
  int n = 1;
  double T = 0;
  Eigen::VectorXd x_star;
  Frame source = Frame::Mcf;
  std::vector<RaySamples> rays;
  /// Radius about x* of the first snapshot: mean, min and max over the nodes.
  double initial_radius = 0, initial_min_radius = 0, initial_max_radius = 0;

  /// Smallest radius covered by every ray, and the largest.
  double rho_min() const;
  double rho_max() const;
  double tau_at(int ray, double rho) const;
  double u_at(int ray, double rho) const { return T - tau_at(ray, rho); }
  /// Index of the ray through -w.
  int antipode(int ray) const;
};

struct ArrivalOptions {
  /// Number of symmetric directions when `angles` is empty.
  int directions = 16;
  std::vector<double> angles;
};

/// Symmetric direction set: (j + 1/2) pi / M for n >= 2, (j + 1/2) 2 pi / M for n = 1 (M even).
std::vector<double> symmetric_directions(int n, int M);

ArrivalField reconstruct_arrival(const FlowTrace& trace, double T, const Eigen::VectorXd& x_star,
                                 const ArrivalOptions& opts = {});

struct HessianReport {
  double h = 0;
  std::vector<double> angles;
  /// -(tau(h w) + tau(-h w)) / h^2 at the finest scale, and the three-scale extrapolation.
  std::vector<double> raw, extrapolated, exponent;
  double spread_raw = 0, spread_extrapolated = 0;
  double mean_extrapolated = 0;
};

/// h = 0 picks the smallest radius available on every ray.
HessianReport hessian_at_center(const ArrivalField& field, double h = 0);

struct C3Entry {
  double angle = 0;
  bool noise_floor = true;
  /// Fit of |residual| = |c| rho^p over points at least 10x above noise.
  double p = 0, c = 0, r_squared = 0;
  int n_points = 0;
  double rho_lo = 0, rho_hi = 0;
  double max_snr = 0;
};

/// `rho_fraction` restricts the fit to rho <= fraction * (first sample on the ray).
C3Entry c3_probe(const ArrivalField& field, int ray, double rho_fraction = 0.1);

struct RegularityReport {
  int n = 1;
  int degree = 2;
  std::vector<C3Entry> entries;
  /// Median exponent over rays that cleared the noise floor; 0 if none did.
  double p_median = 0;
  int p_count = 0;
  /// c(w) at fixed p_median and its correlation with Y_degree(w).
  std::vector<double> profile;
  double profile_correlation = 0;
  /// c / (alpha Y_2) on the ray of largest |Y_2|, and the value the expansion of
  /// tau in w predicts, -(2/sqrt n)(2n)^{-1-1/n}.
  double c_over_alpha = 0, c_over_alpha_expected = 0;
  double quadratic_coefficient = 0;
  std::string note;
};

RegularityReport regularity_report(const ArrivalField& field, int degree, double alpha = 0,
                                   double rho_fraction = 0.1);

struct CorollaryReport {
  int l = 3, n = 2;
  double beta_l = 0;
  double expected_p = 0;
  /// beta_l = 3: the case the corollary leaves out; reported only.
  bool boundary = false;
  bool noise_floor = true;
  double p = 0;
  /// Weighted fit of the residual on rho^3, rho^{2+beta_l}, rho^{2+2beta_l}.
  double c3 = 0;
  double c3_max_snr = 0;
  bool low_order_detected = false;
  bool c3_compatible = false;
  std::string verdict;
};

CorollaryReport corollary_check(const ArrivalField& field, int l, int n, double rho_fraction = 0.1);

/// Initial data sqrt(n) + eps Y_l + c Y_cancel with c tuned by secant so the
/// degree-`cancel` tail of the rescaled run vanishes: psi(c) = mean of
/// a_cancel(s) e^{beta s} over [s_eval - 0.5, s_eval + 0.5].
struct CancelTuning {
  double coefficient = 0;
  double psi = 0, psi_untuned = 0;
  int iterations = 0;
  FlowTrace trace;
};

CancelTuning tune_cancellation(int n, int N, int l, double eps, int cancel, double s_max, double s_eval,
                               const IntegratorConfig& cfg, double psi_tol = 1e-13, int max_iter = 8);

}  // namespace mcflab
