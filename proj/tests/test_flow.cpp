#include <doctest.h>

#include <cmath>

#include "mcflab/flow.hpp"

using namespace mcflab;
using Vec = Eigen::VectorXd;

namespace {

RadialGraphd sphere(int n, int N, double R) {
  return make_graph(make_grid<double>(n, N), Vec(Vec::Constant(N, R)));
}

RadialGraphd perturbed(int n, int N, double base, double amp, int k, double amp1 = 0) {
  auto grid = make_grid<double>(n, N);
  ZonalSpectrumd s{n, Vec::Zero(modes_for_degree(n, std::max(k, 1)))};
  s.coeffs[mode_index(n, k)] = amp;
  s.coeffs[mode_index(n, 1)] += amp1;
  return perturbed_sphere(grid, base, s);
}

IntegratorConfig tight() {
  IntegratorConfig c;
  c.tol = 1e-10;
  return c;
}

}  // namespace

TEST_CASE("step_mcf: shrinking spheres follow r^2 = r0^2 - 2nt") {
  SUBCASE("n=2, r0=2") {
    FlowState s{0, sphere(2, 24, 2.0), Frame::Mcf};
    const FlowState e = step_mcf(s, 0.5, tight());
    CHECK(e.time == 0.5);
    CHECK((e.graph.r.array() - std::sqrt(2.0)).abs().maxCoeff() < 1e-8);
  }
  SUBCASE("n=1 circle, r0=1") {
    FlowState s{0, sphere(1, 32, 1.0), Frame::Mcf};
    const FlowState e = step_mcf(s, 0.375, tight());
    CHECK((e.graph.r.array() - 0.5).abs().maxCoeff() < 1e-8);
  }
  SUBCASE("n=3") {
    FlowState s{0, sphere(3, 24, 3.0), Frame::Mcf};
    const FlowState e = step_mcf(s, 1.0, tight());
    CHECK((e.graph.r.array() - std::sqrt(9.0 - 6.0)).abs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("step_mcf: step doubling on a perturbed sphere") {
  const auto cfg = tight();
  FlowState s{0, perturbed(2, 32, 1.5, 0.02, 2), Frame::Mcf};
  const double dt = 0.05;
  const FlowState one = step_mcf(s, dt, cfg);
  const FlowState two = step_mcf(step_mcf(s, dt / 2, cfg), dt / 2, cfg);
  CHECK((one.graph.r - two.graph.r).cwiseAbs().maxCoeff() < 10 * cfg.tol * s.graph.r.maxCoeff());
}

TEST_CASE("step_rescaled: the sphere of radius sqrt(n) is a fixed point") {
  for (int n : {1, 2, 3}) {
    // without gauges round-off in degree 0 grows like e^{2s}
    FlowState s{0, sphere(n, 24, std::sqrt(double(n))), Frame::Rescaled};
    const FlowState e = step_rescaled(s, 2.0, tight());
    CHECK((e.graph.r.array() - std::sqrt(double(n))).abs().maxCoeff() < 1e-11);
    const FlowTrace tr = run_rescaled(s.graph, 10.0, tight());
    CHECK(tr.snapshots.back().time == doctest::Approx(10.0).epsilon(1e-12));
    for (const auto& snap : tr.snapshots) CHECK((snap.graph.r.array() - std::sqrt(double(n))).abs().maxCoeff() < 1e-9);
    CHECK(std::abs(tr.final_gauge.T - 1.0) < 1e-12);
  }
}

TEST_CASE("step_rescaled: constant radius follows the scalar phase line") {
  // dr/ds = c - n/c has the exact solution c^2 = n + (c0^2 - n) e^{2s}.
  const int n = 2;
  for (double c0 : {1.3, 1.5}) {
    FlowState s{0, sphere(n, 16, c0), Frame::Rescaled};
    double prev = c0;
    for (int k = 1; k <= 5; ++k) {
      s = step_rescaled(s, 0.1, tight());
      const double exact = std::sqrt(n + (c0 * c0 - n) * std::exp(2 * 0.1 * k));
      CHECK(std::abs(s.graph.r[0] - exact) < 1e-8 * exact);
      CHECK((s.graph.r[0] - prev) * (c0 - std::sqrt(2.0)) > 0);
      prev = s.graph.r[0];
    }
  }
}

TEST_CASE("errors") {
  FlowState s{0, sphere(2, 16, 1.0), Frame::Mcf};
  CHECK_THROWS_AS(step_rescaled(s, 0.1), Error);
  try {
    step_rescaled(s, 0.1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FrameMismatch);
  }
  // dumbbell-like input: large Y_2 making the waist concave
  const auto bad = perturbed(2, 32, 1.0, 0.9, 2);
  CHECK_FALSE(convexity_check(bad).convex);
  try {
    run_to_singularity(bad);
    FAIL("expected NonConvexInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonConvexInput);
  }
  IntegratorConfig cfg;
  cfg.tol = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("run_to_singularity") {
  SUBCASE("spheres: T = r0^2 / 2n") {
    for (int n : {1, 2, 3}) {
      const double r0 = 1.7;
      const auto run = run_to_singularity(sphere(n, n == 1 ? 32 : 24, r0), tight());
      const double T = r0 * r0 / (2 * n);
      CHECK(std::abs(run.T - T) < 1e-6 * T);
      CHECK(run.x_star.norm() < 1e-10);
      for (std::size_t k = 1; k < run.trace.snapshots.size(); ++k)
        CHECK(run.trace.snapshots[k].time > run.trace.snapshots[k - 1].time);
    }
  }
  SUBCASE("even zonal perturbation shrinks to the center") {
    const auto run = run_to_singularity(perturbed(2, 32, 1.5, 0.03, 2), tight());
    CHECK(run.x_star.norm() < 1e-8);
  }
  SUBCASE("degree-1 component moves the shrink point; recentred rerun agrees") {
    const auto g = perturbed(2, 32, 1.5, 0.03, 2, 0.05);
    const auto run = run_to_singularity(g, tight());
    CHECK(std::abs(run.x_star[0]) > 1e-3);
    const auto g2 = resample_about(g, run.x_star);
    const auto run2 = run_to_singularity(g2, tight());
    CHECK(std::abs(run2.T - run.T) < 1e-6 * run.T);
  }
}

TEST_CASE("rescale_trace") {
  const int n = 2;
  const double r0 = 2.0;
  const auto run = run_to_singularity(sphere(n, 24, r0), tight());
  const double T = r0 * r0 / (2 * n);
  const auto rs = rescale_trace(run.trace, T, Vec::Zero(3));
  CHECK(rs.frame == Frame::Rescaled);
  // absolute errors in r and T are magnified by 1/sqrt(T - t) and 1/(T - t)
  double max_dev = 0, early_dev = 0;
  for (std::size_t k = 0; k < rs.snapshots.size(); ++k) {
    const double dev = (rs.snapshots[k].graph.r.array() - std::sqrt(2.0)).abs().maxCoeff();
    max_dev = std::max(max_dev, dev);
    if (std::exp(-2 * rs.snapshots[k].time) > 1e-3 * T) early_dev = std::max(early_dev, dev);
    if (k > 0) CHECK(rs.snapshots[k].time > rs.snapshots[k - 1].time);
  }
  CHECK(early_dev < 1e-8);
  CHECK(max_dev < 1e-5);
  CHECK(rs.snapshots.back().time > 5);
  try {
    rescale_trace(run.trace, 0.5, Vec::Zero(3));
    FAIL("expected TimeInconsistent");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TimeInconsistent);
  }
  CHECK_THROWS_AS(rescale_trace(rs, T, Vec::Zero(3)), Error);
}

TEST_CASE("recenter") {
  SUBCASE("no degree-1 part: identity") {
    FlowState s{0, perturbed(2, 32, std::sqrt(2.0), 0.01, 2), Frame::Rescaled};
    const auto [out, shift] = recenter(s);
    CHECK(shift.norm() < 1e-15);
    CHECK((out.graph.r - s.graph.r).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("r = sqrt(n) + eps Y_1 is a translated sphere to second order") {
    for (int n : {1, 2, 3}) {
      const double c1 = n == 1 ? 1 / std::sqrt(M_PI) : zonal_harmonic(n, 1, 0.0);
      double prev_err = 0;
      for (double eps : {0.02, 0.01}) {
        FlowState s{0, perturbed(n, 32, std::sqrt(double(n)), eps, 1), Frame::Rescaled};
        const auto [out, shift] = recenter(s);
        const double err = std::abs(shift.norm() - eps * c1);
        CHECK(err < 2 * eps * eps);
        if (prev_err > 0) CHECK(err < 0.3 * prev_err);
        prev_err = err;
        CHECK(std::abs(analyze(*out.graph.grid, out.graph.r).amplitude(1)) < 1e-12);
      }
    }
  }
  SUBCASE("idempotent") {
    FlowState s{0, perturbed(2, 32, std::sqrt(2.0), 0.01, 2, 0.02), Frame::Rescaled};
    const auto [once, shift1] = recenter(s);
    const auto [twice, shift2] = recenter(once);
    CHECK(shift1.norm() > 1e-3);
    CHECK(shift2.norm() < 1e-10);
    CHECK((twice.graph.r - once.graph.r).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("renormalize zeroes the mean rescaled velocity") {
  FlowState s{0, perturbed(3, 24, 1.9, 0.03, 2), Frame::Rescaled};
  const auto [out, lambda] = renormalize(s);
  const Vec f = flow_rhs(out.graph, Frame::Rescaled);
  CHECK(std::abs(out.graph.grid->integrate(f)) < 1e-12);
  CHECK(lambda > 0);
}

TEST_CASE("run_rescaled: Y_2 perturbation decays, gauges keep degrees 0 and 1 quiet") {
  const int n = 2;
  const double eps = 0.01 * std::sqrt(2.0);
  auto cfg = tight();
  const auto trace = run_rescaled(perturbed(n, 32, std::sqrt(2.0), eps, 2), 6.0, cfg);
  CHECK(trace.gauge_normalized);
  const auto& grid = *trace.snapshots[0].graph.grid;
  const auto w0 = perturbation_w(trace.snapshots.front().graph);
  const auto w1 = perturbation_w(trace.snapshots.back().graph);
  const double ds = trace.snapshots.back().time - trace.snapshots.front().time;
  const double rate = std::log(std::abs(w1.amplitude(2)) / std::abs(w0.amplitude(2))) / ds;
  CHECK(rate == doctest::Approx(-1.0).epsilon(0.05));
  CHECK(std::abs(w1.amplitude(0)) < 1e-3 * std::abs(w1.amplitude(2)) + 1e-12);
  CHECK(std::abs(w1.amplitude(1)) < 1e-10);
  CHECK(grid.size() == 32);
}

TEST_CASE("avoidance: nested spheres stay ordered") {
  FlowState inner{0, sphere(2, 16, 1.0), Frame::Mcf};
  FlowState outer{0, sphere(2, 16, 1.2), Frame::Mcf};
  for (int k = 0; k < 24; ++k) {
    inner = step_mcf(inner, 0.01, tight());
    outer = step_mcf(outer, 0.01, tight());
    CHECK(inner.graph.r.maxCoeff() < outer.graph.r.minCoeff());
  }
}

TEST_CASE("unrescaled run plus rescale_trace agrees with the rescaled run") {
  const int n = 2;
  const double eps = 0.01 * std::sqrt(2.0);
  const auto y0 = perturbed(n, 32, std::sqrt(2.0), eps, 2);
  const auto cfg = tight();
  const auto rs = run_rescaled(y0, 2.0, cfg);
  const double T = rs.final_gauge.T;
  const Vec xs = rs.final_gauge.x_star;
  // the physical surface at t = 0 is sqrt(2) y0 about the origin
  FlowState st{0, make_graph(y0.grid, Vec(std::sqrt(2.0) * y0.r)), Frame::Mcf};
  double worst = 0;
  for (std::size_t k = 4; k < rs.snapshots.size(); k += 8) {
    const double t = T - std::exp(-2 * rs.snapshots[k].time);
    st = step_mcf(st, t - st.time, cfg);
    FlowTrace one;
    one.frame = Frame::Mcf;
    one.snapshots.push_back(st);
    const auto back = rescale_trace(one, T, xs);
    worst = std::max(worst, (back.snapshots[0].graph.r - rs.snapshots[k].graph.r).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 10 * cfg.tol);
}

namespace {

// max residual of the H and pinching evolution equations at time t0, using
// central differences in time with half-width h; normalised by the size of
// the spatial terms.
std::pair<double, double> identity_residuals(double h) {
  const int n = 2;
  IntegratorConfig cfg;
  cfg.tol = 1e-13;
  cfg.dealias = false;
  FlowState s0{0, perturbed(n, 40, 1.5, 0.05, 2), Frame::Mcf};
  const double t0 = 0.1;
  const FlowState mid = step_mcf(s0, t0, cfg);
  const FlowState lo = step_mcf(s0, t0 - h, cfg);
  const FlowState hi = step_mcf(mid, h, cfg);
  const auto cm = curvature_data(mid.graph), cl = curvature_data(lo.graph), ch = curvature_data(hi.graph);
  const Vec dH = (ch.H - cl.H) / (2 * h);
  const Vec dP = (ch.pinching - cl.pinching) / (2 * h);
  const Vec Hphi = mid.graph.grid->d_angle() * cm.H;
  const Vec Pphi = mid.graph.grid->d_angle() * cm.pinching;
  // the rays move tangentially as well as normally
  const Vec speed = cm.H.cwiseProduct(cm.v).cwiseProduct(cm.dr).cwiseQuotient(cm.g_angle);
  const Vec lapH = surface_laplacian(mid.graph, cm, cm.H);
  const Vec rhsH = lapH + cm.A2.cwiseProduct(cm.H);
  const Vec lhsH = dH + speed.cwiseProduct(Hphi);
  const Vec gradA2 = second_form_gradient_sq(mid.graph, cm);
  const Vec gradH = surface_gradient(mid.graph, cm, cm.H);
  const Vec rhsP = surface_laplacian(mid.graph, cm, cm.pinching) -
                   2 * (gradA2 - gradH.cwiseAbs2() / double(n)) + 2 * cm.A2.cwiseProduct(cm.pinching);
  const Vec lhsP = dP + speed.cwiseProduct(Pphi);
  return {(lhsH - rhsH).cwiseAbs().maxCoeff() / lapH.cwiseAbs().maxCoeff(),
          (lhsP - rhsP).cwiseAbs().maxCoeff() / rhsP.cwiseAbs().maxCoeff()};
}

}  // namespace

TEST_CASE("evolution identities for H and the pinching quantity") {
  const auto [h1, p1] = identity_residuals(4e-3);
  const auto [h2, p2] = identity_residuals(2e-3);
  CHECK(h1 < 1e-3);
  CHECK(p1 < 1e-3);
  // second-order differences: halving h cuts the residual by about 4
  CHECK(h2 < 0.35 * h1);
  CHECK(p2 < 0.35 * p1);
}
