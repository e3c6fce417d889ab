#pragma once

// Zonal (axisymmetric) spectral machinery on the round sphere S^n of radius
// sqrt(n). For n >= 2 functions depend only on the polar angle phi and are
// expanded in Gegenbauer polynomials of cos(phi); for n = 1 the full Fourier
// basis on the circle is used.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <string>
#include <type_traits>

#include "mcflab/errors.hpp"

namespace mcflab {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// For n = 1 each degree k >= 1 carries a cos/sin pair.
enum class Parity { Cosine, Sine };

namespace detail {

template <typename Scalar>
constexpr Scalar pi() {
  return Scalar(3.141592653589793238462643383279502884L);
}

/// Area of the unit sphere S^dim.
template <typename Scalar>
Scalar unit_sphere_area(int dim) {
  using std::pow;
  using std::tgamma;
  const Scalar half = Scalar(dim + 1) / 2;
  return 2 * pow(pi<Scalar>(), half) / tgamma(half);
}

/// Integral of (1-x^2)^{(n-2)/2} over (-1,1), i.e. of sin^{n-1}(phi) over (0,pi).
template <typename Scalar>
Scalar gegenbauer_mass(int n) {
  using std::sqrt;
  using std::tgamma;
  return sqrt(pi<Scalar>()) * tgamma(Scalar(n) / 2) / tgamma(Scalar(n + 1) / 2);
}

/// Monic three-term coefficient for the symmetric Jacobi weight (1-x^2)^a.
template <typename Scalar>
Scalar recurrence_beta(int k, Scalar a) {
  const Scalar kk = Scalar(k);
  return kk * (kk + 2 * a) / (4 * (kk + a) * (kk + a) - 1);
}

/// Orthonormal polynomials p_0..p_kmax (weight (1-x^2)^{(n-2)/2}) and their
/// first two x-derivatives at x. Any of the output pointers may be null.
template <typename Scalar>
void orthonormal_polynomials(int n, int kmax, Scalar x, Scalar* p, Scalar* dp, Scalar* d2p) {
  using std::sqrt;
  const Scalar a = Scalar(n - 2) / 2;
  Scalar pm1 = 0, dpm1 = 0, d2pm1 = 0;
  Scalar p0 = 1 / sqrt(gegenbauer_mass<Scalar>(n)), dp0 = 0, d2p0 = 0;
  Scalar sb_prev = 0;
  for (int k = 0; k <= kmax; ++k) {
    if (p) p[k] = p0;
    if (dp) dp[k] = dp0;
    if (d2p) d2p[k] = d2p0;
    if (k == kmax) break;
    const Scalar sb = sqrt(recurrence_beta<Scalar>(k + 1, a));
    const Scalar p1 = (x * p0 - sb_prev * pm1) / sb;
    const Scalar dp1 = (p0 + x * dp0 - sb_prev * dpm1) / sb;
    const Scalar d2p1 = (2 * dp0 + x * d2p0 - sb_prev * d2pm1) / sb;
    pm1 = p0, dpm1 = dp0, d2pm1 = d2p0;
    p0 = p1, dp0 = dp1, d2p0 = d2p1;
    sb_prev = sb;
  }
}

}  // namespace detail

/// Degree of the coefficient stored at `index` of a spectrum in dimension n.
inline int mode_degree(int n, int index) { return n == 1 ? (index + 1) / 2 : index; }

/// Storage index of the degree-k coefficient (cosine partner by default for n = 1).
inline int mode_index(int n, int k, Parity parity = Parity::Cosine) {
  if (n != 1 || k == 0) return k;
  return parity == Parity::Cosine ? 2 * k - 1 : 2 * k;
}

/// Number of stored coefficients needed for degrees 0..k.
inline int modes_for_degree(int n, int k) { return n == 1 ? 2 * k + 1 : k + 1; }

/// Eigenvalue 2 - k(k+n-1)/n of L = Laplace-Beltrami on S^n(sqrt n) plus 2.
inline double operator_eigenvalue(int n, int k) {
  if (n < 1 || k < 0) throw Error(ErrorKind::InvalidArgument, "operator_eigenvalue needs n >= 1, k >= 0");
  // one rounding, so lambda_2 is exactly -2/n
  return (2.0 * n - double(k) * double(k + n - 1)) / double(n);
}

/// Orthonormal zonal harmonic of degree k on S^n(sqrt n) at polar angle phi
/// (n >= 2), or the normalised cos/sin k*theta on the unit circle (n = 1).
template <typename Scalar>
Scalar zonal_harmonic(int n, int k, Scalar angle, Parity parity = Parity::Cosine) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (n < 1 || k < 0) throw Error(ErrorKind::InvalidArgument, "zonal_harmonic needs n >= 1, k >= 0");
  if (n == 1) {
    if (k == 0) return 1 / sqrt(2 * detail::pi<Scalar>());
    const Scalar c = 1 / sqrt(detail::pi<Scalar>());
    return parity == Parity::Cosine ? c * cos(Scalar(k) * angle) : c * sin(Scalar(k) * angle);
  }
  VectorX<Scalar> p(k + 1);
  detail::orthonormal_polynomials<Scalar>(n, k, cos(angle), p.data(), nullptr, nullptr);
  const Scalar radius = sqrt(Scalar(n));
  using std::pow;
  const Scalar factor = pow(radius, Scalar(n)) * detail::unit_sphere_area<Scalar>(n - 1);
  return p[k] / sqrt(factor);
}

/// Quadrature grid plus the dense transforms built on it. Immutable once built;
/// share it between graphs through `GridPtr`.
template <typename Scalar>
class ZonalGrid {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  int dimension() const { return n_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int k_max() const { return k_max_; }
  int modes() const { return modes_for_degree(n_, k_max_); }
  Scalar radius() const { return std::sqrt(Scalar(n_)); }

  /// Polar angles (n >= 2) or circle angles (n = 1).
  const Vector& nodes() const { return nodes_; }
  const Vector& weights() const { return weights_; }

  /// Converts a weighted node sum into an integral over S^n(sqrt n) (n >= 2),
  /// or over the unit circle (n = 1).
  Scalar measure_factor() const { return measure_factor_; }

  /// Node values of every basis function (size x modes).
  const Matrix& basis() const { return basis_; }
  /// Projection onto the basis (modes x size).
  const Matrix& analysis() const { return analysis_; }
  /// Spectral d/dangle and d^2/dangle^2 acting on node values.
  const Matrix& d_angle() const { return d1_; }
  const Matrix& d2_angle() const { return d2_; }

  int degree(int index) const { return mode_degree(n_, index); }

  /// Integral of f over the reference sphere.
  Scalar integrate(const Vector& f) const { return measure_factor_ * weights_.dot(f); }

  /// Basis row (values of every harmonic) at an arbitrary angle.
  Vector basis_at(Scalar angle) const {
    Vector row(modes());
    fill_row(angle, row.data(), nullptr, nullptr);
    return row;
  }

  /// Basis row and its first angular derivative at an arbitrary angle.
  void basis_with_derivative_at(Scalar angle, Vector& row, Vector& drow) const {
    row.resize(modes());
    drow.resize(modes());
    fill_row(angle, row.data(), drow.data(), nullptr);
  }

  template <typename S>
  friend ZonalGrid<S> build_grid(int n, int N);

 private:
  void fill_row(Scalar angle, Scalar* v, Scalar* dv, Scalar* d2v) const {
    using std::cos;
    using std::sin;
    const int m = modes();
    if (n_ == 1) {
      const Scalar c0 = 1 / std::sqrt(2 * detail::pi<Scalar>());
      const Scalar c = 1 / std::sqrt(detail::pi<Scalar>());
      v[0] = c0;
      if (dv) dv[0] = 0;
      if (d2v) d2v[0] = 0;
      for (int k = 1; 2 * k < m + 1; ++k) {
        const Scalar kk = Scalar(k);
        const Scalar ck = cos(kk * angle), sk = sin(kk * angle);
        v[2 * k - 1] = c * ck;
        v[2 * k] = c * sk;
        if (dv) dv[2 * k - 1] = -c * kk * sk, dv[2 * k] = c * kk * ck;
        if (d2v) d2v[2 * k - 1] = -c * kk * kk * ck, d2v[2 * k] = -c * kk * kk * sk;
      }
      return;
    }
    const Scalar x = cos(angle), sx = sin(angle);
    Vector p(m), dp(m), d2p(m);
    detail::orthonormal_polynomials<Scalar>(n_, m - 1, x, p.data(), dp.data(), d2p.data());
    const Scalar inv = 1 / std::sqrt(measure_factor_);
    for (int k = 0; k < m; ++k) {
      v[k] = inv * p[k];
      // d/dphi = -sin(phi) d/dx
      if (dv) dv[k] = -inv * sx * dp[k];
      if (d2v) d2v[k] = inv * (-x * dp[k] + sx * sx * d2p[k]);
    }
  }

  int n_ = 0;
  int k_max_ = 0;
  Scalar measure_factor_ = 1;
  Vector nodes_, weights_;
  Matrix basis_, analysis_, d1_, d2_;
};

template <typename Scalar>
using GridPtr = std::shared_ptr<const ZonalGrid<Scalar>>;

/// Builds the quadrature grid: N equispaced angles for n = 1, N Gauss-Gegenbauer
/// nodes (weight sin^{n-1} phi) for n >= 2.
template <typename Scalar>
ZonalGrid<Scalar> build_grid(int n, int N) {
  using std::acos;
  using std::abs;
  using std::pow;
  using std::sqrt;
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "build_grid: dimension n must be >= 1, got " + std::to_string(n));
  if (N < 8) throw Error(ErrorKind::InvalidArgument, "build_grid: node count N must be >= 8, got " + std::to_string(N));

  ZonalGrid<Scalar> g;
  g.n_ = n;
  g.nodes_.resize(N);
  g.weights_.resize(N);

  if (n == 1) {
    const Scalar two_pi = 2 * detail::pi<Scalar>();
    for (int j = 0; j < N; ++j) {
      g.nodes_[j] = two_pi * Scalar(j) / Scalar(N);
      g.weights_[j] = two_pi / Scalar(N);
    }
    g.k_max_ = (N - 1) / 2;
    g.measure_factor_ = 1;
  } else {
    // Golub-Welsch for the initial nodes, then Newton on p_N and Christoffel
    // weights from the orthonormal recurrence.
    const Scalar a = Scalar(n - 2) / 2;
    Matrix jacobi = Matrix::Zero(N, N);
    for (int k = 1; k < N; ++k) {
      const Scalar b = sqrt(detail::recurrence_beta<Scalar>(k, a));
      jacobi(k, k - 1) = b;
      jacobi(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi, Eigen::EigenvaluesOnly);
    Vector x = eig.eigenvalues();
    Vector p(N + 1), dp(N + 1);
    for (int j = 0; j < N; ++j) {
      for (int it = 0; it < 3; ++it) {
        detail::orthonormal_polynomials<Scalar>(n, N, x[j], p.data(), dp.data(), nullptr);
        const Scalar dx = p[N] / dp[N];
        x[j] -= dx;
        if (abs(dx) < 4 * Eigen::NumTraits<Scalar>::epsilon()) break;
      }
      detail::orthonormal_polynomials<Scalar>(n, N - 1, x[j], p.data(), nullptr, nullptr);
      const Scalar w = 1 / p.head(N).squaredNorm();
      // ascending polar angle = descending x
      g.nodes_[N - 1 - j] = acos(x[j]);
      g.weights_[N - 1 - j] = w;
    }
    g.k_max_ = N - 1;
    g.measure_factor_ = pow(sqrt(Scalar(n)), Scalar(n)) * detail::unit_sphere_area<Scalar>(n - 1);
  }

  const int m = modes_for_degree(n, g.k_max_);
  Matrix b(N, m), db(N, m), d2b(N, m);
  for (int j = 0; j < N; ++j) {
    Vector v(m), dv(m), d2v(m);
    g.fill_row(g.nodes_[j], v.data(), dv.data(), d2v.data());
    b.row(j) = v.transpose();
    db.row(j) = dv.transpose();
    d2b.row(j) = d2v.transpose();
  }
  g.basis_ = b;
  g.analysis_ = b.transpose() * (g.measure_factor_ * g.weights_).asDiagonal();
  g.d1_ = db * g.analysis_;
  g.d2_ = d2b * g.analysis_;
  return g;
}

template <typename Scalar>
GridPtr<Scalar> make_grid(int n, int N) {
  return std::make_shared<const ZonalGrid<Scalar>>(build_grid<Scalar>(n, N));
}

/// Coefficients in the orthonormal zonal basis; see `mode_index` for layout.
template <typename Scalar>
struct ZonalSpectrum {
  int n = 1;
  VectorX<Scalar> coeffs;

  int size() const { return static_cast<int>(coeffs.size()); }
  int max_degree() const { return size() == 0 ? -1 : mode_degree(n, size() - 1); }

  /// Coefficient of the degree-k harmonic (0 when not stored).
  Scalar amplitude(int k, Parity parity = Parity::Cosine) const {
    const int i = mode_index(n, k, parity);
    return i < size() ? coeffs[i] : Scalar(0);
  }

  /// L2 norm of everything at degree k (both partners when n = 1).
  Scalar degree_norm(int k) const {
    using std::hypot;
    using std::abs;
    if (n == 1 && k > 0) return hypot(amplitude(k, Parity::Cosine), amplitude(k, Parity::Sine));
    return abs(amplitude(k));
  }

  Scalar norm() const { return coeffs.norm(); }
};

template <typename Scalar>
ZonalSpectrum<Scalar> analyze(const ZonalGrid<Scalar>& grid, const std::type_identity_t<VectorX<Scalar>>& values) {
  if (values.size() != grid.size())
    throw Error(ErrorKind::InvalidArgument, "analyze: expected " + std::to_string(grid.size()) + " node values");
  if (!values.allFinite()) throw Error(ErrorKind::NonFinite, "analyze: non-finite node values");
  return {grid.dimension(), grid.analysis() * values};
}

template <typename Scalar>
VectorX<Scalar> synthesize(const ZonalGrid<Scalar>& grid, const ZonalSpectrum<Scalar>& spec) {
  if (spec.size() > grid.modes())
    throw Error(ErrorKind::DegreeOverflow, "synthesize: spectrum degree " + std::to_string(spec.max_degree()) +
                                               " exceeds K_max " + std::to_string(grid.k_max()));
  return grid.basis().leftCols(spec.size()) * spec.coeffs;
}

/// Evaluates an expansion at an arbitrary angle.
template <typename Scalar>
Scalar evaluate(const ZonalGrid<Scalar>& grid, const ZonalSpectrum<Scalar>& spec, Scalar angle) {
  return grid.basis_at(angle).head(spec.size()).dot(spec.coeffs);
}

/// Laplace-Beltrami on the round sphere of the given radius, applied spectrally.
template <typename Scalar>
VectorX<Scalar> laplace_beltrami(const ZonalGrid<Scalar>& grid, const std::type_identity_t<VectorX<Scalar>>& values,
                                 std::type_identity_t<Scalar> radius) {
  if (!(radius > 0)) throw Error(ErrorKind::InvalidArgument, "laplace_beltrami: radius must be positive");
  ZonalSpectrum<Scalar> spec = analyze(grid, values);
  const int n = grid.dimension();
  for (int i = 0; i < spec.size(); ++i) {
    const Scalar k = Scalar(mode_degree(n, i));
    spec.coeffs[i] *= -k * (k + Scalar(n - 1)) / (radius * radius);
  }
  return synthesize(grid, spec);
}

/// Zeroes every coefficient above `max_degree`.
template <typename Scalar>
void truncate_spectrum(ZonalSpectrum<Scalar>& spec, int max_degree) {
  for (int i = 0; i < spec.size(); ++i)
    if (mode_degree(spec.n, i) > max_degree) spec.coeffs[i] = 0;
}

/// Highest degree retained by the 2/3 dealiasing rule.
inline int dealias_degree(int k_max) { return (2 * k_max) / 3; }

/// Spectrum with a single unit coefficient at degree k.
template <typename Scalar>
ZonalSpectrum<Scalar> unit_mode(int n, int k, Parity parity = Parity::Cosine) {
  ZonalSpectrum<Scalar> s{n, VectorX<Scalar>::Zero(modes_for_degree(n, k))};
  s.coeffs[mode_index(n, k, parity)] = 1;
  return s;
}

using ZonalGridd = ZonalGrid<double>;
using ZonalSpectrumd = ZonalSpectrum<double>;
using GridPtrd = GridPtr<double>;

}  // namespace mcflab
