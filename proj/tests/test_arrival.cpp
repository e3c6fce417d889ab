#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mcflab/arrival.hpp"
#include "mcflab/diagnostics.hpp"

using namespace mcflab;
using Vec = Eigen::VectorXd;

namespace {

IntegratorConfig tight() {
  IntegratorConfig cfg;
  cfg.tol = 1e-11;
  return cfg;
}

RadialGraphd perturbed(int n, int N, double radius, double amp, int k) {
  auto grid = make_grid<double>(n, N);
  ZonalSpectrumd s{n, Vec::Zero(modes_for_degree(n, k))};
  s.coeffs[mode_index(n, k)] = amp;
  return perturbed_sphere(grid, radius, s);
}

double s_max_for(int n) { return n == 1 ? 8 : n == 2 ? 12 : 18; }

// frac * sqrt(n) Y_2 on S^n(sqrt n)
FlowTrace y2_run(int n, double frac) {
  const double rn = std::sqrt(double(n));
  return run_rescaled(perturbed(n, n == 1 ? 64 : 32, rn, frac * rn, 2), s_max_for(n), tight());
}

ArrivalField field_of(const FlowTrace& tr, const ArrivalOptions& opts = {}) {
  return reconstruct_arrival(tr, tr.final_gauge.T, tr.final_gauge.x_star, opts);
}

}  // namespace

TEST_CASE("symmetric directions") {
  const auto a = symmetric_directions(2, 4);
  CHECK(a[0] == doctest::Approx(std::numbers::pi / 8));
  CHECK(a[3] == doctest::Approx(7 * std::numbers::pi / 8));
  CHECK_THROWS_AS(symmetric_directions(1, 5), Error);
}

TEST_CASE("sphere: u = (R^2 - rho^2)/(2n) from both frames") {
  for (int n : {1, 2, 3}) {
    const double R = 1.3;
    const double T = R * R / (2 * n);
    const auto run = run_to_singularity(perturbed(n, n == 1 ? 32 : 24, R, 0, 2), tight());
    const auto f = reconstruct_arrival(run.trace, T, Vec::Zero(n + 1));
    for (int j = 0; j < int(f.rays.size()); ++j)
      for (double rho : {0.9 * R, 0.5 * R, 0.1 * R, 3 * f.rho_min()})
        CHECK(std::abs(f.u_at(j, rho) - (R * R - rho * rho) / (2 * n)) < 1e-8);

    const auto tr = y2_run(n, 0);
    const auto g = field_of(tr);
    for (int j = 0; j < int(g.rays.size()); ++j)
      for (double rho : {1.0, 0.3, 1e-3}) {
        const double exact = (2 * n - rho * rho) / (2 * n);  // physical radius sqrt(2n) at t = 0
        CHECK(std::abs(g.u_at(j, rho) - exact) < 1e-10);
        CHECK(g.tau_at(j, rho) / (rho * rho / (2 * n)) == doctest::Approx(1).epsilon(1e-12));
      }
  }
}

TEST_CASE("errors") {
  const auto tr = y2_run(2, 0.01);
  FlowTrace raw = tr;
  raw.gauge_normalized = false;
  try {
    field_of(raw);
    FAIL("expected FrameMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FrameMismatch);
  }
  ArrivalOptions bad;
  bad.angles = {0.5, 4.0};
  try {
    field_of(tr, bad);
    FAIL("expected DirectionOutOfGraph");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DirectionOutOfGraph);
  }
  const auto f = field_of(tr);
  try {
    f.tau_at(0, 10 * f.rho_max());
    FAIL("expected DirectionOutOfGraph");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DirectionOutOfGraph);
  }
  // a run that stops early cannot resolve the quadratic term
  const auto short_run = run_rescaled(perturbed(2, 32, std::sqrt(2.0), 0.01, 2), 1.0, tight());
  try {
    hessian_at_center(field_of(short_run));
    FAIL("expected InsufficientResolution");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientResolution);
  }
  // radius along a ray must decrease
  FlowTrace twisted = tr;
  twisted.snapshots[4].graph.r *= 1.2;
  try {
    field_of(twisted);
    FAIL("expected NonMonotoneRadius");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonMonotoneRadius);
  }
}

TEST_CASE("sandwich between the inscribed and circumscribed spheres, monotone along rays") {
  for (int n : {1, 2, 3}) {
    const auto f = field_of(y2_run(n, 0.03));
    const double rin = f.initial_min_radius, rout = f.initial_max_radius;
    for (int j = 0; j < int(f.rays.size()); ++j) {
      const auto& ray = f.rays[j];
      double prev = 0;
      for (double rho = f.rho_min() * 1.0001; rho < ray.rho.front(); rho *= 1.07) {
        const double u = f.u_at(j, rho);
        if (rho < rin) CHECK(u >= (rin * rin - rho * rho) / (2 * n) - 1e-12);
        CHECK(u <= (rout * rout - rho * rho) / (2 * n) + 1e-12);
        // u decreases outward; compared through tau, which keeps full precision near T
        const double tau = f.tau_at(j, rho);
        CHECK(tau > prev);
        prev = tau;
      }
    }
  }
}

TEST_CASE("tau identity: T - u = rho^2 / (2 (sqrt n + w)^2) at the samples") {
  const int n = 2;
  const auto tr = y2_run(n, 0.02);
  const auto f = field_of(tr);
  const auto& grid = *tr.snapshots.front().graph.grid;
  for (std::size_t k = 0; k < tr.snapshots.size(); k += 7) {
    const auto spec = analyze(grid, tr.snapshots[k].graph.r);
    for (int j = 0; j < int(f.rays.size()); j += 3) {
      const double rt = evaluate(grid, spec, f.rays[j].angle);
      const double rho = f.rays[j].rho[k];
      CHECK(f.tau_at(j, rho) == doctest::Approx(rho * rho / (2 * rt * rt)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradient vanishes at x*, Hessian is -I/n") {
  for (int n : {1, 2, 3}) {
    const auto f = field_of(y2_run(n, 0.01));
    // one-sided difference quotient (u(h w) - u(0)) / h -> 0 linearly
    for (int j = 0; j < int(f.rays.size()); j += 5) {
      const double h = 0.01, q1 = -f.tau_at(j, h) / h, q2 = -f.tau_at(j, h / 2) / (h / 2);
      CHECK(std::abs(q1) < h);
      CHECK(q1 / q2 == doctest::Approx(2).epsilon(0.01));
    }
    const auto H = hessian_at_center(f);
    for (std::size_t j = 0; j < H.raw.size(); ++j) {
      CHECK(H.raw[j] == doctest::Approx(-1.0 / n).epsilon(0.02));
      CHECK(H.extrapolated[j] == doctest::Approx(-1.0 / n).epsilon(1e-9));
      // correction term behaves like h^{2/n}
      CHECK(H.exponent[j] == doctest::Approx(2.0 / n).epsilon(0.02));
    }
    CHECK(H.spread_extrapolated < 1e-3 * H.spread_raw);
  }
}

TEST_CASE("isotropy spread is linear in the amplitude") {
  for (int n : {2, 3}) {
    const auto f1 = field_of(y2_run(n, 0.01)), f2 = field_of(y2_run(n, 0.005));
    const double h = 0.005 * f1.initial_radius;
    const double s1 = hessian_at_center(f1, h).spread_raw, s2 = hessian_at_center(f2, h).spread_raw;
    CHECK(s1 / s2 == doctest::Approx(2).epsilon(0.05));
  }
}

TEST_CASE("C^3 probe: residual exponent 2 + 2/n with a Y_2 profile") {
  for (int n : {1, 2, 3}) {
    const auto tr = y2_run(n, 0.01);
    const double alpha = extract_alpha(modal_trace(tr), n).alpha;
    const auto rep = regularity_report(field_of(tr), 2, alpha);
    CHECK(rep.p_count == int(rep.entries.size()));
    CHECK(rep.p_median == doctest::Approx(2 + 2.0 / n).epsilon(0.05));
    for (const auto& e : rep.entries) {
      CHECK(e.p == doctest::Approx(2 + 2.0 / n).epsilon(0.05));
      CHECK(e.r_squared > 0.999);
    }
    CHECK(std::abs(rep.profile_correlation) > 0.99);
    CHECK(rep.c_over_alpha == doctest::Approx(rep.c_over_alpha_expected).epsilon(0.01));
    CHECK(rep.quadratic_coefficient == doctest::Approx(1.0 / (2 * n)));
  }
}

TEST_CASE("C^3 probe on the exact sphere reports the noise floor") {
  for (int n : {1, 2, 3}) {
    const auto rep = regularity_report(field_of(y2_run(n, 0)), 2);
    CHECK(rep.p_count == 0);
    for (const auto& e : rep.entries) CHECK(e.noise_floor);
  }
}

TEST_CASE("Y_3 data with the Y_2 tail cancelled") {
  const int n = 2;
  const double eps = 0.01 * std::sqrt(double(n));
  auto cfg = tight();
  cfg.tol = 1e-12;
  const auto tuned = tune_cancellation(n, 32, 3, eps, 2, 9, 4, cfg);
  CHECK(std::abs(tuned.psi_untuned) > 1e-6);
  CHECK(tuned.psi < 1e-13);
  const auto rep = corollary_check(field_of(tuned.trace), 3, n);
  CHECK(rep.beta_l == doctest::Approx(4));
  CHECK_FALSE(rep.boundary);
  CHECK_FALSE(rep.low_order_detected);
  CHECK(rep.c3_compatible);
  if (!rep.noise_floor) CHECK(rep.p == doctest::Approx(6).epsilon(0.05));

  // untuned data keeps a small Y_2 tail, and the probe sees it
  ZonalSpectrumd sp{n, Vec::Zero(modes_for_degree(n, 3))};
  sp.coeffs[mode_index(n, 3)] = eps;
  const auto raw = run_rescaled(perturbed_sphere(make_grid<double>(n, 32), std::sqrt(double(n)), sp), 9, cfg);
  const auto rep0 = corollary_check(field_of(raw), 3, n);
  CHECK(rep0.low_order_detected);
  CHECK_FALSE(rep0.c3_compatible);

  // beta_3 = 3 for n = 3: reported, not judged
  CHECK(corollary_check(field_of(y2_run(3, 0.01)), 3, 3).boundary);
}
