#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "mcflab/spectral_sphere.hpp"

using namespace mcflab;
using Vec = Eigen::VectorXd;

namespace {

// Adaptive Simpson quadrature, used as an independent oracle for weight sums.
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * eps) return left + right + (left + right - whole) / 15;
  return simpson(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

double adaptive_integral(const std::function<double(double)>& f, double a, double b) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), 1e-14, 40);
}

Vec sample_harmonic(const ZonalGridd& g, int k, Parity p = Parity::Cosine) {
  Vec v(g.size());
  for (int j = 0; j < g.size(); ++j) v[j] = zonal_harmonic(g.dimension(), k, g.nodes()[j], p);
  return v;
}

}  // namespace

TEST_CASE("build_grid examples") {
  SUBCASE("circle trapezoid") {
    const auto g = build_grid<double>(1, 16);
    CHECK(g.size() == 16);
    for (int j = 0; j < 16; ++j) {
      CHECK(g.nodes()[j] == doctest::Approx(2 * std::numbers::pi * j / 16).epsilon(1e-15));
      CHECK(g.weights()[j] == doctest::Approx(2 * std::numbers::pi / 16).epsilon(1e-15));
    }
    CHECK(g.k_max() == 7);
  }
  SUBCASE("Gauss-Legendre for n=2") {
    const auto g = build_grid<double>(2, 32);
    CHECK(std::abs(g.weights().sum() - 2.0) < 1e-12 * 2.0);
    CHECK(g.k_max() == 31);
    for (int j = 0; j < 32; ++j) {
      CHECK(g.nodes()[j] > 0);
      CHECK(g.nodes()[j] < std::numbers::pi);
    }
  }
  SUBCASE("Gauss-Gegenbauer for n=3 against adaptive integration of sin^2") {
    const auto g = build_grid<double>(3, 24);
    const double oracle = adaptive_integral([](double p) { return std::sin(p) * std::sin(p); }, 0, std::numbers::pi);
    CHECK(std::abs(oracle - std::numbers::pi / 2) < 1e-12);
    CHECK(std::abs(g.weights().sum() - oracle) < 1e-12 * oracle);
  }
  SUBCASE("weights sum for higher n") {
    for (int n : {4, 5, 10}) {
      const auto g = build_grid<double>(n, 20);
      const double oracle =
          adaptive_integral([n](double p) { return std::pow(std::sin(p), n - 1); }, 0, std::numbers::pi);
      CHECK(std::abs(g.weights().sum() - oracle) < 1e-12 * oracle);
    }
  }
  SUBCASE("rejects bad arguments") {
    CHECK_THROWS_AS(build_grid<double>(0, 16), Error);
    CHECK_THROWS_AS(build_grid<double>(2, 7), Error);
    try {
      build_grid<double>(2, 4);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidArgument);
      CHECK(std::string(e.what()).find("N must be >= 8") != std::string::npos);
    }
  }
}

TEST_CASE("quadrature exactness and orthonormality") {
  for (int n : {1, 2, 3, 5}) {
    const auto g = build_grid<double>(n, n == 1 ? 33 : 24);
    // Gram of the full basis: combined degree up to 2 K_max.
    const Eigen::MatrixXd gram = g.basis().transpose() * (g.measure_factor() * g.weights()).asDiagonal() * g.basis();
    CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("zonal_harmonic examples") {
  SUBCASE("k=0 is the normalised constant") {
    for (int n : {1, 2, 3}) {
      const double R = std::sqrt(double(n));
      const double vol = n == 1 ? 2 * std::numbers::pi
                                : std::pow(R, n) * detail::unit_sphere_area<double>(n);
      for (double phi : {0.1, 1.0, 2.5}) CHECK(zonal_harmonic(n, 0, phi) == doctest::Approx(1 / std::sqrt(vol)));
    }
  }
  SUBCASE("n=2, k=1 proportional to cos and orthogonal to k=0,2") {
    const auto g = build_grid<double>(2, 32);
    const double ratio = zonal_harmonic(2, 1, 0.3) / std::cos(0.3);
    CHECK(zonal_harmonic(2, 1, 1.1) == doctest::Approx(ratio * std::cos(1.1)));
    const Vec y0 = sample_harmonic(g, 0), y1 = sample_harmonic(g, 1), y2 = sample_harmonic(g, 2);
    CHECK(std::abs(g.integrate(y0.cwiseProduct(y1))) < 1e-10);
    CHECK(std::abs(g.integrate(y2.cwiseProduct(y1))) < 1e-10);
  }
  SUBCASE("n=2, k=2 proportional to 3cos^2-1 and an eigenfunction") {
    const auto g = build_grid<double>(2, 32);
    const double c = zonal_harmonic(2, 2, 0.0001) / 2.0;
    for (double phi : {0.4, 1.2, 2.9})
      CHECK(zonal_harmonic(2, 2, phi) == doctest::Approx(c * (3 * std::cos(phi) * std::cos(phi) - 1)).epsilon(1e-6));
    const Vec y2 = sample_harmonic(g, 2);
    const Vec ly = laplace_beltrami(g, y2, std::sqrt(2.0));
    CHECK((ly + 3.0 * y2).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK_THROWS_AS(zonal_harmonic(2, -1, 0.5), Error);
}

TEST_CASE("analyze and synthesize") {
  for (int n : {1, 2, 3}) {
    const auto g = build_grid<double>(n, 32);
    SUBCASE("constant") {
      const auto s = analyze(g, Vec::Constant(g.size(), 1.7));
      CHECK(s.coeffs[0] != 0);
      CHECK(s.coeffs.tail(s.size() - 1).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("single harmonic") {
      const auto s = analyze(g, sample_harmonic(g, 2));
      for (int i = 0; i < s.size(); ++i) CHECK(std::abs(s.coeffs[i] - (i == mode_index(n, 2) ? 1.0 : 0.0)) < 1e-10);
    }
    SUBCASE("random band-limited round trip") {
      std::mt19937_64 rng(1234 + n);
      std::normal_distribution<double> nd;
      ZonalSpectrumd spec{n, Vec(g.modes())};
      for (int i = 0; i < spec.size(); ++i) spec.coeffs[i] = nd(rng);
      const Vec f = synthesize(g, spec);
      CHECK((synthesize(g, analyze(g, f)) - f).cwiseAbs().maxCoeff() < 1e-10 * f.cwiseAbs().maxCoeff());
      CHECK((analyze(g, f).coeffs - spec.coeffs).cwiseAbs().maxCoeff() < 1e-10);
      // Parseval
      CHECK(std::sqrt(g.integrate(f.cwiseProduct(f))) == doctest::Approx(spec.norm()).epsilon(1e-10));
    }
  }
  const auto g = build_grid<double>(2, 16);
  Vec bad = Vec::Ones(16);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(analyze(g, bad), Error);
  ZonalSpectrumd big{2, Vec::Ones(17)};
  try {
    synthesize(g, big);
    FAIL("expected DegreeOverflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegreeOverflow);
  }
}

TEST_CASE("laplace_beltrami examples") {
  const auto g2 = build_grid<double>(2, 24);
  CHECK(laplace_beltrami(g2, Vec::Constant(24, 3.0), std::sqrt(2.0)).cwiseAbs().maxCoeff() < 1e-10);
  const auto g1 = build_grid<double>(1, 32);
  Vec c2(32);
  for (int j = 0; j < 32; ++j) c2[j] = std::cos(2 * g1.nodes()[j]);
  CHECK((laplace_beltrami(g1, c2, 1.0) + 4.0 * c2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(laplace_beltrami(g1, c2, 0.0), Error);
  CHECK_THROWS_AS(laplace_beltrami(g1, c2, -1.0), Error);
}

TEST_CASE("eigencheck for every resolvable degree") {
  for (int n : {1, 2, 3, 5}) {
    const auto g = build_grid<double>(n, 40);
    const double R = std::sqrt(double(n));
    for (int k = 0; k <= g.k_max() / 2; ++k) {
      for (Parity p : {Parity::Cosine, Parity::Sine}) {
        if ((n != 1 || k == 0) && p == Parity::Sine) continue;
        const Vec y = sample_harmonic(g, k, p);
        const Vec ly = laplace_beltrami(g, y, R);
        const double lambda = -double(k) * (k + n - 1) / n;
        CHECK((ly - lambda * y).cwiseAbs().maxCoeff() < 1e-8);
      }
    }
  }
}

TEST_CASE("spectral derivative matrices") {
  const auto g = build_grid<double>(3, 28);
  // f = Y_4(phi): compare d/dphi against a central difference of the closed form.
  Vec f(g.size()), df(g.size());
  const double h = 1e-5;
  for (int j = 0; j < g.size(); ++j) {
    const double p = g.nodes()[j];
    f[j] = zonal_harmonic(3, 4, p);
    df[j] = (zonal_harmonic(3, 4, p + h) - zonal_harmonic(3, 4, p - h)) / (2 * h);
  }
  CHECK((g.d_angle() * f - df).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("operator_eigenvalue") {
  for (int n : {1, 2, 3, 5, 10}) {
    CHECK(operator_eigenvalue(n, 0) == 2.0);
    CHECK(operator_eigenvalue(n, 1) == 1.0);
    CHECK(operator_eigenvalue(n, 2) == doctest::Approx(-2.0 / n).epsilon(1e-15));
    for (int k = 0; k < 30; ++k) {
      CHECK(operator_eigenvalue(n, k + 1) < operator_eigenvalue(n, k));
      CHECK((operator_eigenvalue(n, k) > 0) == (k <= 1));
      CHECK(operator_eigenvalue(n, k) != 0.0);
    }
  }
  CHECK(operator_eigenvalue(2, 3) == -4.0);
  CHECK_THROWS_AS(operator_eigenvalue(0, 1), Error);
}

TEST_CASE("extended precision instantiation") {
  const auto g = build_grid<long double>(3, 24);
  CHECK(std::abs(g.weights().sum() - 3.14159265358979323846264338327950288L / 2) < 1e-16L);
  const Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> gram =
      g.basis().transpose() * (g.measure_factor() * g.weights()).asDiagonal() * g.basis();
  CHECK((gram - decltype(gram)::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-15L);
}
