#include "mcflab/arrival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mcflab/diagnostics.hpp"

namespace mcflab {

using Eigen::VectorXd;

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Fritsch-Carlson limiter; x ascending, y ascending.
void limit_slopes(const std::vector<double>& x, const std::vector<double>& y, std::vector<double>& m) {
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double d = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    if (d <= 0) {
      m[i] = m[i + 1] = 0;
      continue;
    }
    double a = m[i] / d, b = m[i + 1] / d;
    a = std::max(a, 0.0);
    b = std::max(b, 0.0);
    const double r2 = a * a + b * b;
    if (r2 > 9) {
      const double t = 3 / std::sqrt(r2);
      a *= t;
      b *= t;
    }
    m[i] = a * d;
    m[i + 1] = b * d;
  }
}

double hermite(double x0, double x1, double y0, double y1, double m0, double m1, double xq) {
  const double h = x1 - x0, t = (xq - x0) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * m1;
}

double eval_ray(const RaySamples& ray, double rho) {
  const double xq = std::log(rho * rho);
  const auto& x = ray.x;
  if (xq < x.front() - 1e-12 * std::abs(x.front()) || xq > x.back() + 1e-12 * std::abs(x.back()))
    throw Error(ErrorKind::DirectionOutOfGraph, "arrival: radius " + std::to_string(rho) + " outside the sampled range");
  auto it = std::upper_bound(x.begin(), x.end(), xq);
  std::size_t i = it == x.begin() ? 0 : std::size_t(it - x.begin()) - 1;
  i = std::min(i, x.size() - 2);
  return std::exp(hermite(x[i], x[i + 1], ray.y[i], ray.y[i + 1], ray.m[i], ray.m[i + 1], xq));
}

double angle_distance(int n, double a, double b) {
  if (n >= 2) return std::abs(a - b);
  const double two_pi = 2 * std::numbers::pi;
  double d = std::fmod(std::abs(a - b), two_pi);
  return std::min(d, two_pi - d);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// Hermite prediction of sample k from its neighbours; measures round-off jitter
// plus the interpolation error at twice the sample spacing.
// floor[k]: absolute noise level of the sample itself before the jitter term.
void estimate_noise(RaySamples& ray, const std::vector<double>& floor) {
  const std::size_t m = ray.rho.size();
  std::vector<double> raw(m, 0.0);
  // ray.x is ascending, time index k maps to i = m - 1 - k
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double y = hermite(ray.x[i - 1], ray.x[i + 1], ray.y[i - 1], ray.y[i + 1], ray.m[i - 1], ray.m[i + 1], ray.x[i]);
    const std::size_t k = m - 1 - i;
    raw[k] = std::abs(std::exp(y) - ray.tau[k]);
  }
  if (m >= 3) {
    raw[0] = raw[1];
    raw[m - 1] = raw[m - 2];
  }
  ray.noise.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double v = 0;
    for (std::size_t j = k >= 2 ? k - 2 : 0; j <= std::min(m - 1, k + 2); ++j) v = std::max(v, raw[j]);
    double fl = 0;
    for (std::size_t j = k >= 2 ? k - 2 : 0; j <= std::min(m - 1, k + 2); ++j) fl = std::max(fl, floor[j]);
    ray.noise[k] = v + fl + 8 * kEps * ray.tau[k];
  }
}

}  // namespace

std::vector<double> symmetric_directions(int n, int M) {
  if (M < 2) throw Error(ErrorKind::InvalidArgument, "symmetric_directions: need at least 2 directions");
  if (n == 1 && M % 2) throw Error(ErrorKind::InvalidArgument, "symmetric_directions: n = 1 needs an even count");
  std::vector<double> a(M);
  const double span = n == 1 ? 2 * std::numbers::pi : std::numbers::pi;
  for (int j = 0; j < M; ++j) a[j] = span * (j + 0.5) / M;
  return a;
}

double ArrivalField::rho_min() const {
  double v = 0;
  for (const auto& r : rays) v = std::max(v, r.rho.back());
  return v;
}

double ArrivalField::rho_max() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& r : rays) v = std::min(v, r.rho.front());
  return v;
}

double ArrivalField::tau_at(int ray, double rho) const {
  if (ray < 0 || ray >= int(rays.size())) throw Error(ErrorKind::InvalidArgument, "tau_at: ray index out of range");
  if (!(rho > 0)) throw Error(ErrorKind::InvalidArgument, "tau_at: radius must be positive");
  return eval_ray(rays[ray], rho);
}

int ArrivalField::antipode(int ray) const {
  const double a = rays.at(ray).angle;
  const double target = n >= 2 ? std::numbers::pi - a : a + std::numbers::pi;
  for (int j = 0; j < int(rays.size()); ++j)
    if (angle_distance(n, rays[j].angle, target) < 1e-9) return j;
  throw Error(ErrorKind::InvalidArgument, "arrival: direction set is not symmetric under w -> -w");
}

ArrivalField reconstruct_arrival(const FlowTrace& trace, double T, const VectorXd& x_star, const ArrivalOptions& opts) {
  if (trace.snapshots.size() < 4) throw Error(ErrorKind::InsufficientResolution, "reconstruct_arrival: need at least 4 snapshots");
  ArrivalField f;
  f.n = trace.snapshots.front().graph.dimension();
  f.T = T;
  f.x_star = x_star;
  f.source = trace.frame;
  const int n = f.n;
  if (x_star.size() != trace.snapshots.front().graph.center.size())
    throw Error(ErrorKind::InvalidArgument, "reconstruct_arrival: x* has the wrong dimension");
  if (trace.frame == Frame::Rescaled) {
    if (!trace.gauge_normalized)
      throw Error(ErrorKind::FrameMismatch, "reconstruct_arrival: rescaled trace must be gauge normalised");
    if (std::abs(trace.final_gauge.T - T) > 1e-12 * std::abs(T) ||
        (trace.final_gauge.x_star.size() == x_star.size() && (trace.final_gauge.x_star - x_star).norm() > 1e-12))
      throw Error(ErrorKind::InvalidArgument, "reconstruct_arrival: T and x* must be the trace's final gauge");
  }

  const std::vector<double> angles = opts.angles.empty() ? symmetric_directions(n, opts.directions) : opts.angles;
  for (double a : angles)
    if (!std::isfinite(a) || (n >= 2 && (a < 0 || a > std::numbers::pi)))
      throw Error(ErrorKind::DirectionOutOfGraph, "reconstruct_arrival: polar angle outside [0, pi]");

  const std::size_t K = trace.snapshots.size();
  f.rays.resize(angles.size());
  for (std::size_t j = 0; j < angles.size(); ++j) {
    auto& ray = f.rays[j];
    ray.angle = angles[j];
    ray.rho.resize(K);
    ray.tau.resize(K);
    ray.residual.resize(K);
    ray.m.resize(K);
  }
  std::vector<double> slope(K * angles.size());
  std::vector<double> floor(K, 0.0);
  const double root_n = std::sqrt(double(n));

  for (std::size_t k = 0; k < K; ++k) {
    const auto& snap = trace.snapshots[k];
    RadialGraphd g = snap.graph;
    double tau = 0, scale = 1;
    if (trace.frame == Frame::Rescaled) {
      if (g.center.norm() > 1e-12) g = resample_about(g, VectorXd(VectorXd::Zero(g.center.size())));
      tau = std::exp(-2 * snap.time);
      scale = std::sqrt(2 * tau);
    } else {
      if ((g.center - x_star).norm() > 0) g = resample_about(g, x_star);
      tau = T - snap.time;
      if (!(tau > 0)) throw Error(ErrorKind::TimeInconsistent, "reconstruct_arrival: snapshot at or after T");
    }
    const auto& grid = *g.grid;
    const auto rspec = analyze(grid, g.r);
    if (trace.frame == Frame::Rescaled) {
      // degrees 0 and 1 are removed by the gauges; what is left of them is the state's round-off
      const auto w = perturbation_w(g);
      const double y0 = std::abs(zonal_harmonic<double>(n, 0, 0.0)), y1 = std::abs(zonal_harmonic<double>(n, 1, 0.0));
      const double level = std::abs(w.amplitude(0)) * y0 + w.degree_norm(1) * y1;
      floor[k] = 2 * tau * (2 / root_n) * level;
    } else {
      floor[k] = 8 * kEps * std::abs(T);
    }
    const auto dspec = analyze(grid, flow_rhs(g, trace.frame));
    if (k == 0) {
      f.initial_radius = scale * g.r.mean();
      f.initial_min_radius = scale * g.r.minCoeff();
      f.initial_max_radius = scale * g.r.maxCoeff();
    }
    for (std::size_t j = 0; j < angles.size(); ++j) {
      auto& ray = f.rays[j];
      const double r = evaluate(grid, rspec, angles[j]);
      const double dr = evaluate(grid, dspec, angles[j]);
      ray.rho[k] = scale * r;
      ray.tau[k] = tau;
      if (trace.frame == Frame::Rescaled) {
        const double w = r - root_n;
        ray.residual[k] = -tau * w * (2 * root_n + w) / n;
        slope[j * K + k] = 1 / (1 - dr / r);
      } else {
        ray.residual[k] = tau - r * r / (2 * n);
        slope[j * K + k] = -r / (2 * tau * dr);
      }
      if (k > 0 && !(ray.rho[k] < ray.rho[k - 1]))
        throw Error(ErrorKind::NonMonotoneRadius, "reconstruct_arrival: radius along a ray is not decreasing at snapshot " +
                                                      std::to_string(k));
      if (k > 0 && !(ray.tau[k] < ray.tau[k - 1]))
        throw Error(ErrorKind::TimeInconsistent, "reconstruct_arrival: snapshot times must increase");
    }
  }

  for (std::size_t j = 0; j < angles.size(); ++j) {
    auto& ray = f.rays[j];
    ray.x.resize(K);
    ray.y.resize(K);
    for (std::size_t i = 0; i < K; ++i) {
      const std::size_t k = K - 1 - i;
      ray.x[i] = std::log(ray.rho[k] * ray.rho[k]);
      ray.y[i] = std::log(ray.tau[k]);
      ray.m[i] = slope[j * K + k];
      if (!std::isfinite(ray.m[i])) throw Error(ErrorKind::NonFinite, "reconstruct_arrival: non-finite slope");
    }
    limit_slopes(ray.x, ray.y, ray.m);
    estimate_noise(ray, floor);
  }
  return f;
}

HessianReport hessian_at_center(const ArrivalField& field, double h) {
  if (field.rays.empty()) throw Error(ErrorKind::InvalidArgument, "hessian_at_center: empty field");
  const double lo = field.rho_min() * (1 + 1e-12);
  if (h == 0) h = lo;
  if (field.rho_min() > 0.01 * field.initial_radius)
    throw Error(ErrorKind::InsufficientResolution, "hessian_at_center: smallest radius " + std::to_string(field.rho_min()) +
                                                       " is above 1% of the initial radius");
  if (h < lo || 4 * h > field.rho_max())
    throw Error(ErrorKind::InsufficientResolution, "hessian_at_center: scales h, 2h, 4h are not all sampled");

  HessianReport rep;
  rep.h = h;
  auto D = [&](int j, int jm, double hh) { return -(field.tau_at(j, hh) + field.tau_at(jm, hh)) / (hh * hh); };
  for (int j = 0; j < int(field.rays.size()); ++j) {
    const int jm = field.antipode(j);
    const double d1 = D(j, jm, h), d2 = D(j, jm, 2 * h), d4 = D(j, jm, 4 * h);
    double ex = d1, q = 0;
    const double a = d2 - d1, b = d4 - d2;
    if (std::abs(a) > 1e-13 * std::abs(d1) && a * b > 0 && std::abs(b) > std::abs(a)) {
      const double ratio = b / a;
      q = std::log2(ratio);
      ex = d1 - a / (ratio - 1);
    }
    rep.angles.push_back(field.rays[j].angle);
    rep.raw.push_back(d1);
    rep.extrapolated.push_back(ex);
    rep.exponent.push_back(q);
  }
  const auto [rmin, rmax] = std::minmax_element(rep.raw.begin(), rep.raw.end());
  const auto [emin, emax] = std::minmax_element(rep.extrapolated.begin(), rep.extrapolated.end());
  rep.spread_raw = *rmax - *rmin;
  rep.spread_extrapolated = *emax - *emin;
  double sum = 0;
  for (double v : rep.extrapolated) sum += v;
  rep.mean_extrapolated = sum / rep.extrapolated.size();
  return rep;
}

C3Entry c3_probe(const ArrivalField& field, int ray_index, double rho_fraction) {
  const auto& ray = field.rays.at(ray_index);
  C3Entry e;
  e.angle = ray.angle;
  const double cap = rho_fraction * ray.rho.front();
  std::vector<double> lx, ly;
  int sign = 0;
  for (std::size_t k = 0; k < ray.rho.size(); ++k) {
    if (ray.rho[k] > cap) continue;
    const double snr = std::abs(ray.residual[k]) / ray.noise[k];
    e.max_snr = std::max(e.max_snr, snr);
    if (snr <= 10) continue;
    const int sg = ray.residual[k] > 0 ? 1 : -1;
    if (sign == 0) sign = sg;
    if (sg != sign) continue;
    lx.push_back(std::log(ray.rho[k]));
    ly.push_back(std::log(std::abs(ray.residual[k])));
  }
  e.n_points = int(lx.size());
  if (e.n_points < 8) return e;
  const Eigen::Map<const VectorXd> x(lx.data(), e.n_points), y(ly.data(), e.n_points);
  const double xm = x.mean(), ym = y.mean();
  const double sxx = (x.array() - xm).square().sum();
  const double sxy = ((x.array() - xm) * (y.array() - ym)).sum();
  const double syy = (y.array() - ym).square().sum();
  if (!(sxx > 0)) return e;
  e.noise_floor = false;
  e.p = sxy / sxx;
  e.c = sign * std::exp(ym - e.p * xm);
  e.r_squared = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  e.rho_lo = std::exp(x.minCoeff());
  e.rho_hi = std::exp(x.maxCoeff());
  return e;
}

RegularityReport regularity_report(const ArrivalField& field, int degree, double alpha, double rho_fraction) {
  RegularityReport rep;
  rep.n = field.n;
  rep.degree = degree;
  rep.quadratic_coefficient = 1.0 / (2 * field.n);
  std::vector<double> ps;
  for (int j = 0; j < int(field.rays.size()); ++j) {
    rep.entries.push_back(c3_probe(field, j, rho_fraction));
    if (!rep.entries.back().noise_floor) ps.push_back(rep.entries.back().p);
  }
  rep.p_count = int(ps.size());
  if (ps.empty()) {
    rep.note = "residual tau - rho^2/(2n) is below the noise floor on every ray";
    return rep;
  }
  rep.p_median = median(ps);

  // c(w) at the common exponent, from the points that cleared the floor on some ray
  const std::size_t K = field.rays.front().rho.size();
  std::vector<bool> use(K, false);
  for (std::size_t k = 0; k < K; ++k)
    for (const auto& ray : field.rays)
      if (ray.rho[k] <= rho_fraction * ray.rho.front() && std::abs(ray.residual[k]) > 10 * ray.noise[k]) use[k] = true;
  VectorXd c(field.rays.size()), Y(field.rays.size());
  for (std::size_t j = 0; j < field.rays.size(); ++j) {
    const auto& ray = field.rays[j];
    double sum = 0;
    int cnt = 0;
    for (std::size_t k = 0; k < K; ++k)
      if (use[k] && ray.rho[k] <= rho_fraction * ray.rho.front()) sum += ray.residual[k] / std::pow(ray.rho[k], rep.p_median), ++cnt;
    c[j] = cnt ? sum / cnt : 0.0;
    Y[j] = zonal_harmonic<double>(field.n, degree, ray.angle);
  }
  rep.profile.assign(c.data(), c.data() + c.size());
  const VectorXd cc = c.array() - c.mean(), yc = Y.array() - Y.mean();
  const double den = cc.norm() * yc.norm();
  rep.profile_correlation = den > 0 ? cc.dot(yc) / den : 0.0;

  if (degree == 2 && alpha != 0) {
    Eigen::Index jmax = 0;
    Y.cwiseAbs().maxCoeff(&jmax);
    rep.c_over_alpha = c[jmax] / (alpha * Y[jmax]);
    const int n = field.n;
    rep.c_over_alpha_expected = -(2 / std::sqrt(double(n))) * std::pow(2.0 * n, -1 - 1.0 / n);
  }
  rep.note = "quadratic part of tau is rho^2/(2n); residual exponent p = 2 + 2/n is expected for a degree-2 tail";
  return rep;
}

CorollaryReport corollary_check(const ArrivalField& field, int l, int n, double rho_fraction) {
  if (field.n != n) throw Error(ErrorKind::InvalidArgument, "corollary_check: dimension mismatch");
  if (l < 2) throw Error(ErrorKind::InvalidArgument, "corollary_check: degree must be >= 2");
  CorollaryReport rep;
  rep.l = l;
  rep.n = n;
  rep.beta_l = -operator_eigenvalue(n, l);
  rep.expected_p = 2 + rep.beta_l;
  rep.boundary = std::abs(rep.beta_l - 3) < 1e-12;

  const double p2 = rep.expected_p, p3 = 2 + 2 * rep.beta_l;
  for (int j = 0; j < int(field.rays.size()); ++j) {
    const auto& ray = field.rays[j];
    std::vector<int> idx;
    for (std::size_t k = 0; k < ray.rho.size(); ++k)
      if (ray.rho[k] <= rho_fraction * ray.rho.front()) idx.push_back(int(k));
    if (idx.size() < 4) continue;
    // columns scaled to unit size at the largest radius keep the system well conditioned
    const double r0 = ray.rho[idx.front()];
    Eigen::MatrixXd A(idx.size(), 3);
    VectorXd b(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const int k = idx[i];
      const double x = ray.rho[k] / r0, wgt = 1 / ray.noise[k];
      A(i, 0) = wgt * x * x * x;
      A(i, 1) = wgt * std::pow(x, p2);
      A(i, 2) = wgt * std::pow(x, p3);
      b[i] = wgt * ray.residual[k];
    }
    const VectorXd coef = A.colPivHouseholderQr().solve(b);
    for (int k : idx) {
      const double x = ray.rho[k] / r0;
      const double snr = std::abs(coef[0] * x * x * x) / ray.noise[k];
      if (snr > rep.c3_max_snr) {
        rep.c3_max_snr = snr;
        rep.c3 = coef[0] / (r0 * r0 * r0);
      }
    }
  }
  rep.low_order_detected = rep.c3_max_snr > 10;

  std::vector<double> ps;
  for (int j = 0; j < int(field.rays.size()); ++j) {
    const auto e = c3_probe(field, j, rho_fraction);
    if (!e.noise_floor) ps.push_back(e.p);
  }
  rep.noise_floor = ps.empty();
  if (!rep.noise_floor) rep.p = median(ps);
  rep.c3_compatible = !rep.low_order_detected && (rep.noise_floor || rep.p > 3);
  if (rep.boundary)
    rep.verdict = "beta_l = 3: boundary case, reported only";
  else if (rep.c3_compatible)
    rep.verdict = rep.noise_floor ? "no residual above the noise floor" : "no rho^3 term above noise; leading exponent above 3";
  else
    rep.verdict = "a rho^p term with p <= 3 is detectable";
  return rep;
}

CancelTuning tune_cancellation(int n, int N, int l, double eps, int cancel, double s_max, double s_eval,
                               const IntegratorConfig& cfg, double psi_tol, int max_iter) {
  if (cancel < 2 || cancel == l) throw Error(ErrorKind::InvalidArgument, "tune_cancellation: cancel degree must be >= 2 and differ from l");
  if (!(s_eval + 0.5 < s_max)) throw Error(ErrorKind::InvalidArgument, "tune_cancellation: s_eval + 0.5 must lie inside the run");
  auto grid = make_grid<double>(n, N);
  const double beta = decay_rate(n, cancel);
  auto run = [&](double c) {
    ZonalSpectrumd sp{n, VectorXd::Zero(modes_for_degree(n, std::max(l, cancel)))};
    sp.coeffs[mode_index(n, l)] = eps;
    sp.coeffs[mode_index(n, cancel)] = c;
    return run_rescaled(perturbed_sphere(grid, std::sqrt(double(n)), sp), s_max, cfg);
  };
  auto psi = [&](const FlowTrace& tr) {
    const auto mt = modal_trace(tr);
    const auto a = mt.series(cancel);
    double sum = 0;
    int cnt = 0;
    for (std::size_t i = 0; i < mt.s.size(); ++i)
      if (std::abs(mt.s[i] - s_eval) <= 0.5) sum += a[i] * std::exp(beta * mt.s[i]), ++cnt;
    return sum / cnt;
  };
  CancelTuning out;
  double c0 = 0;
  FlowTrace t0 = run(c0);
  double p0 = psi(t0);
  out.psi_untuned = p0;
  // first guess: the tail is linear in c with unit slope to leading order
  double c1 = -p0;
  FlowTrace t1 = run(c1);
  double p1 = psi(t1);
  double best_c = std::abs(p1) < std::abs(p0) ? c1 : c0, best_p = std::min(std::abs(p0), std::abs(p1));
  FlowTrace best = std::abs(p1) < std::abs(p0) ? t1 : t0;
  int it = 0;
  for (; it < max_iter && best_p > psi_tol && p1 != p0; ++it) {
    const double c2 = c1 - p1 * (c1 - c0) / (p1 - p0);
    c0 = c1, p0 = p1, c1 = c2;
    t1 = run(c1);
    p1 = psi(t1);
    if (std::abs(p1) < best_p) best_c = c1, best_p = std::abs(p1), best = t1;
  }
  out.coefficient = best_c;
  out.psi = best_p;
  out.iterations = it;
  out.trace = std::move(best);
  return out;
}

}  // namespace mcflab
