#pragma once

// Differential geometry of radial graphs F(w) = center + r(w) w over S^n.
//
// For n >= 2 the graph is zonal: r depends on the polar angle phi only, the
// surface is a hypersurface of revolution about the axis e_0 and its profile
// curve in the meridian plane is (X, Y) = (r cos phi, r sin phi). With
// r' = dr/dphi and s = sqrt(r^2 + r'^2):
//
//   meridian curvature     k_m = (r^2 + 2 r'^2 - r r'') / s^3
//   rotational curvature   k_r = (r - r' cot phi) / (r s)      [(n-1)-fold]
//   H = k_m + (n-1) k_r,   |A|^2 = k_m^2 + (n-1) k_r^2,   v = s / r.
//
// For n = 1 only k_m exists (the curve curvature in polar form). The outward
// normal makes the round sphere H = n/R > 0, so MCF moves with normal speed -H.
//
// |A|^2 is sum k_i^2, which is 1 on S^n(sqrt n); this matches the constant
// 2 = |A|^2 + 1 of the linearised rescaled flow.

#include <cmath>
#include <string>

#include "mcflab/spectral_sphere.hpp"

namespace mcflab {

template <typename Scalar>
struct RadialGraph {
  GridPtr<Scalar> grid;
  VectorX<Scalar> r;
  /// Point in R^{n+1} (R^2 for n = 1); for n >= 2 component 0 is the symmetry axis.
  VectorX<Scalar> center;

  int dimension() const { return grid->dimension(); }
  int size() const { return grid->size(); }
};

/// Validates the graph invariants and returns the graph.
template <typename Scalar>
RadialGraph<Scalar> make_graph(GridPtr<Scalar> grid, std::type_identity_t<VectorX<Scalar>> r,
                               std::type_identity_t<VectorX<Scalar>> center = {}) {
  if (!grid) throw Error(ErrorKind::InvalidArgument, "make_graph: null grid");
  const int n = grid->dimension();
  const int ambient = n == 1 ? 2 : n + 1;
  if (center.size() == 0) center = VectorX<Scalar>::Zero(ambient);
  if (center.size() != ambient) throw Error(ErrorKind::InvalidArgument, "make_graph: center has wrong dimension");
  if (r.size() != grid->size()) throw Error(ErrorKind::InvalidArgument, "make_graph: radius vector has wrong length");
  if (!r.allFinite()) throw Error(ErrorKind::NonFinite, "make_graph: non-finite radius");
  if (!(r.minCoeff() > 0)) throw Error(ErrorKind::NotStarShaped, "make_graph: radius must be positive at every node");
  return {std::move(grid), std::move(r), std::move(center)};
}

/// Graph with r = radius + sum of the given spectrum (in the orthonormal basis).
template <typename Scalar>
RadialGraph<Scalar> perturbed_sphere(GridPtr<Scalar> grid, std::type_identity_t<Scalar> radius, const ZonalSpectrum<Scalar>& perturbation) {
  VectorX<Scalar> r = VectorX<Scalar>::Constant(grid->size(), radius);
  if (perturbation.size() > 0) r += synthesize(*grid, perturbation);
  return make_graph(std::move(grid), std::move(r));
}

template <typename Scalar>
struct CurvatureData {
  VectorX<Scalar> H;
  VectorX<Scalar> A2;
  VectorX<Scalar> pinching;
  VectorX<Scalar> v;
  /// Column 0: meridian curvature; column 1 (n >= 2): rotational curvature.
  MatrixX<Scalar> kappa;
  VectorX<Scalar> normal_align;
  /// Angular derivatives of r and the metric coefficient g_aa = r^2 + r'^2.
  VectorX<Scalar> dr, d2r, g_angle;
};

template <typename Scalar>
CurvatureData<Scalar> curvature_data(const RadialGraph<Scalar>& graph) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const auto& grid = *graph.grid;
  const int n = grid.dimension();
  const int N = grid.size();
  CurvatureData<Scalar> cd;
  cd.dr = grid.d_angle() * graph.r;
  cd.d2r = grid.d2_angle() * graph.r;
  cd.g_angle = graph.r.array().square() + cd.dr.array().square();
  cd.H.resize(N);
  cd.A2.resize(N);
  cd.pinching.resize(N);
  cd.v.resize(N);
  cd.normal_align.resize(N);
  cd.kappa.resize(N, n == 1 ? 1 : 2);
  for (int j = 0; j < N; ++j) {
    const Scalar r = graph.r[j], r1 = cd.dr[j], r2 = cd.d2r[j];
    const Scalar s = sqrt(cd.g_angle[j]);
    const Scalar km = (r * r + 2 * r1 * r1 - r * r2) / (s * s * s);
    cd.kappa(j, 0) = km;
    Scalar H = km, A2 = km * km;
    if (n >= 2) {
      const Scalar phi = grid.nodes()[j];
      const Scalar kr = (r - r1 * cos(phi) / sin(phi)) / (r * s);
      cd.kappa(j, 1) = kr;
      H += Scalar(n - 1) * kr;
      A2 += Scalar(n - 1) * kr * kr;
    }
    cd.H[j] = H;
    cd.A2[j] = A2;
    cd.pinching[j] = A2 - H * H / Scalar(n);
    cd.v[j] = s / r;
    cd.normal_align[j] = r / s;
  }
  if (!cd.v.allFinite() || !cd.H.allFinite())
    throw Error(ErrorKind::NotStarShaped, "curvature_data: non-finite slope factor or curvature");
  return cd;
}

/// First and second fundamental forms in the principal coordinate frame,
/// computed from g_ij = <F_i, F_j> and h_ij = -<nu, F_ij> with explicit
/// meridian-plane vectors. Used as an independent route to H.
template <typename Scalar>
struct FundamentalForms {
  VectorX<Scalar> g_angle, g_rot, h_angle, h_rot;
  /// H = g^{ij} h_ij.
  VectorX<Scalar> H;
};

template <typename Scalar>
FundamentalForms<Scalar> fundamental_forms(const RadialGraph<Scalar>& graph) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  using V2 = Eigen::Matrix<Scalar, 2, 1>;
  const auto& grid = *graph.grid;
  const int n = grid.dimension();
  const int N = grid.size();
  const VectorX<Scalar> dr = grid.d_angle() * graph.r;
  const VectorX<Scalar> d2r = grid.d2_angle() * graph.r;
  FundamentalForms<Scalar> ff;
  ff.g_angle.resize(N);
  ff.h_angle.resize(N);
  ff.g_rot = VectorX<Scalar>::Zero(N);
  ff.h_rot = VectorX<Scalar>::Zero(N);
  ff.H.resize(N);
  for (int j = 0; j < N; ++j) {
    const Scalar a = grid.nodes()[j];
    const V2 w(cos(a), sin(a));
    const V2 wa(-sin(a), cos(a));
    const V2 Fa = dr[j] * w + graph.r[j] * wa;
    const V2 Faa = d2r[j] * w + 2 * dr[j] * wa - graph.r[j] * w;
    const V2 nu = V2(Fa.y(), -Fa.x()) / Fa.norm();
    ff.g_angle[j] = Fa.dot(Fa);
    ff.h_angle[j] = -nu.dot(Faa);
    ff.H[j] = ff.h_angle[j] / ff.g_angle[j];
    if (n >= 2) {
      // Unit-speed chart on S^{n-1}: F_tt = -Y e_perp in the meridian plane.
      const Scalar Y = graph.r[j] * sin(a);
      const V2 Ftt(0, -Y);
      ff.g_rot[j] = Y * Y;
      ff.h_rot[j] = -nu.dot(Ftt);
      ff.H[j] += Scalar(n - 1) * ff.h_rot[j] / ff.g_rot[j];
    }
  }
  return ff;
}

/// Radial speed dr/dt that realises the given outward normal speed.
template <typename Scalar>
VectorX<Scalar> radial_velocity(const RadialGraph<Scalar>& graph, const VectorX<Scalar>& normal_speed) {
  const CurvatureData<Scalar> cd = curvature_data(graph);
  if (normal_speed.size() != graph.size()) throw Error(ErrorKind::InvalidArgument, "radial_velocity: length mismatch");
  return normal_speed.cwiseProduct(cd.v);
}

template <typename Scalar>
struct ConvexityResult {
  bool convex = false;
  /// Smallest principal curvature over all nodes.
  Scalar margin = 0;
};

template <typename Scalar>
ConvexityResult<Scalar> convexity_check(const RadialGraph<Scalar>& graph) {
  const CurvatureData<Scalar> cd = curvature_data(graph);
  const Scalar m = cd.kappa.minCoeff();
  return {m > 0, m};
}

/// w = r - sqrt(n) projected on the zonal basis.
template <typename Scalar>
ZonalSpectrum<Scalar> perturbation_w(const RadialGraph<Scalar>& graph) {
  const Scalar root_n = std::sqrt(Scalar(graph.dimension()));
  return analyze(*graph.grid, VectorX<Scalar>(graph.r.array() - root_n));
}

/// Derivative of a node function along the unit meridian direction e_1.
template <typename Scalar>
VectorX<Scalar> surface_gradient(const RadialGraph<Scalar>& graph, const CurvatureData<Scalar>& cd,
                                 const VectorX<Scalar>& f) {
  const VectorX<Scalar> df = graph.grid->d_angle() * f;
  return df.cwiseQuotient(cd.g_angle.cwiseSqrt());
}

/// Laplace-Beltrami of a zonal node function in the induced metric of the graph.
template <typename Scalar>
VectorX<Scalar> surface_laplacian(const RadialGraph<Scalar>& graph, const CurvatureData<Scalar>& cd,
                                  const VectorX<Scalar>& f) {
  using std::cos;
  using std::sin;
  const auto& grid = *graph.grid;
  const int n = grid.dimension();
  const VectorX<Scalar> df = grid.d_angle() * f;
  const VectorX<Scalar> d2f = grid.d2_angle() * f;
  VectorX<Scalar> out(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    const Scalar r = graph.r[j], r1 = cd.dr[j], r2 = cd.d2r[j], g = cd.g_angle[j];
    // (1/sqrt(det)) d(sqrt(det) g^{aa} df) with sqrt(det) = sqrt(g) (r sin)^{n-1}
    Scalar lap = d2f[j] - df[j] * (r * r1 + r1 * r2) / g;
    if (n >= 2) {
      const Scalar a = grid.nodes()[j];
      lap += Scalar(n - 1) * df[j] * (r1 / r + cos(a) / sin(a));
    }
    out[j] = lap / g;
  }
  return out;
}

/// |nabla A|^2 for a hypersurface of revolution: (e1 k_m)^2 + 3(n-1)(e1 k_r)^2
/// (Codazzi makes every permutation of the mixed component equal e1 k_r).
template <typename Scalar>
VectorX<Scalar> second_form_gradient_sq(const RadialGraph<Scalar>& graph, const CurvatureData<Scalar>& cd) {
  const VectorX<Scalar> gm = surface_gradient(graph, cd, VectorX<Scalar>(cd.kappa.col(0)));
  VectorX<Scalar> out = gm.array().square();
  if (graph.dimension() >= 2) {
    const VectorX<Scalar> gr = surface_gradient(graph, cd, VectorX<Scalar>(cd.kappa.col(1)));
    out.array() += Scalar(3 * (graph.dimension() - 1)) * gr.array().square();
  }
  return out;
}

/// Integral over the graph of a node function with respect to surface area.
template <typename Scalar>
Scalar surface_integral(const RadialGraph<Scalar>& graph, const CurvatureData<Scalar>& cd, const VectorX<Scalar>& f) {
  const auto& grid = *graph.grid;
  const int n = grid.dimension();
  Scalar sum = 0;
  for (int j = 0; j < grid.size(); ++j) {
    using std::pow;
    using std::sqrt;
    sum += grid.weights()[j] * f[j] * sqrt(cd.g_angle[j]) * pow(graph.r[j], Scalar(n - 1));
  }
  return n == 1 ? sum : sum * detail::unit_sphere_area<Scalar>(n - 1);
}

/// Area-weighted centroid of the graph, in ambient coordinates.
template <typename Scalar>
VectorX<Scalar> area_centroid(const RadialGraph<Scalar>& graph) {
  using std::cos;
  using std::sin;
  const CurvatureData<Scalar> cd = curvature_data(graph);
  const auto& nodes = graph.grid->nodes();
  const VectorX<Scalar> one = VectorX<Scalar>::Ones(graph.size());
  const Scalar area = surface_integral(graph, cd, one);
  VectorX<Scalar> c = graph.center;
  const VectorX<Scalar> x = graph.r.cwiseProduct(VectorX<Scalar>(nodes.array().cos()));
  c[0] += surface_integral(graph, cd, x) / area;
  if (graph.dimension() == 1) {
    const VectorX<Scalar> y = graph.r.cwiseProduct(VectorX<Scalar>(nodes.array().sin()));
    c[1] += surface_integral(graph, cd, y) / area;
  }
  return c;
}

/// Mean of r over the reference sphere measure.
template <typename Scalar>
Scalar mean_radius(const RadialGraph<Scalar>& graph) {
  const auto& grid = *graph.grid;
  return grid.integrate(graph.r) / grid.integrate(VectorX<Scalar>::Ones(grid.size()));
}

/// Re-expresses the same hypersurface as a radial graph about `new_center`.
/// For n >= 2 the shift must lie on the symmetry axis.
template <typename Scalar>
RadialGraph<Scalar> resample_about(const RadialGraph<Scalar>& graph, const VectorX<Scalar>& new_center) {
  using std::abs;
  using std::atan2;
  using std::cos;
  using std::hypot;
  using std::sin;
  const auto& grid = *graph.grid;
  const int n = grid.dimension();
  const VectorX<Scalar> d = new_center - graph.center;
  if (d.size() != graph.center.size()) throw Error(ErrorKind::InvalidArgument, "resample_about: center dimension");
  if (n >= 2 && d.tail(d.size() - 1).norm() > Scalar(1e-14) * (1 + abs(d[0])))
    throw Error(ErrorKind::DirectionOutOfGraph, "resample_about: off-axis shift breaks zonal symmetry");
  const Scalar dx = d[0];
  const Scalar dy = n == 1 ? d[1] : Scalar(0);
  if (hypot(dx, dy) == Scalar(0)) return RadialGraph<Scalar>{graph.grid, graph.r, new_center};
  if (hypot(dx, dy) > Scalar(0.5) * graph.r.minCoeff())
    throw Error(ErrorKind::ShiftTooLarge, "resample_about: shift exceeds half the minimum radius");

  const ZonalSpectrum<Scalar> spec = analyze(grid, graph.r);
  VectorX<Scalar> row, drow;
  VectorX<Scalar> out(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    const Scalar a = grid.nodes()[j];
    const Scalar wx = cos(a), wy = sin(a);
    grid.basis_with_derivative_at(a, row, drow);
    Scalar rho = row.head(spec.size()).dot(spec.coeffs) - (dx * wx + dy * wy);
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      const Scalar px = dx + rho * wx, py = dy + rho * wy;
      const Scalar len = hypot(px, py);
      const Scalar ang = atan2(py, px);
      grid.basis_with_derivative_at(ang, row, drow);
      const Scalar rv = row.head(spec.size()).dot(spec.coeffs);
      const Scalar drv = drow.head(spec.size()).dot(spec.coeffs);
      const Scalar f = len - rv;
      const Scalar dlen = (px * wx + py * wy) / len;
      const Scalar dang = (px * wy - py * wx) / (len * len);
      const Scalar step = f / (dlen - drv * dang);
      rho -= step;
      if (abs(step) <= Scalar(8) * Eigen::NumTraits<Scalar>::epsilon() * (1 + abs(rho))) {
        converged = true;
        break;
      }
    }
    if (!converged || !(rho > 0)) throw Error(ErrorKind::ShiftTooLarge, "resample_about: graph re-sampling failed");
    out[j] = rho;
  }
  return make_graph(graph.grid, std::move(out), new_center);
}

using RadialGraphd = RadialGraph<double>;
using CurvatureDatad = CurvatureData<double>;

}  // namespace mcflab
