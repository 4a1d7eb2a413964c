#pragma once

// Initial surface families.

#include "kflow/geometry.hpp"

namespace kflow::surfaces {

// F(u, v) = origin + u a + v b on a doubly periodic parameter cell; the lift
// jumps by 2 pi a and 2 pi b across the seams.
inline SurfaceGrid plane(int nu, int nv, const Vec4& a = Vec4::Unit(0), const Vec4& b = Vec4::Unit(1),
                         const Vec4& origin = Vec4::Zero()) {
  SurfaceGrid g(Topology::Torus, nu, nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) g.at(i, j) = ChartPoint{0, origin + g.u_param(i) * a + g.v_param(j) * b};
  g.wrap_u = two_pi * a;
  g.wrap_v = two_pi * b;
  return g;
}

// The complex line {(z, s z)} in C^2 over a periodic parameter cell.
inline SurfaceGrid complex_line(int nu, int nv, cplx slope, const Vec4& origin = Vec4::Zero()) {
  const Vec4 a = from_complex(1.0, slope);
  const Vec4 b = from_complex(cplx(0.0, 1.0), cplx(0.0, 1.0) * slope);
  return plane(nu, nv, a, b, origin);
}

// F(u, v) = (u, v, eps sin(p u), eps cos(q v)).
inline SurfaceGrid torus_graph(int nu, int nv, double eps, int p = 1, int q = 1) {
  SurfaceGrid g(Topology::Torus, nu, nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const double u = g.u_param(i), v = g.v_param(j);
      g.at(i, j) = ChartPoint{0, Vec4(u, v, eps * std::sin(p * u), eps * std::cos(q * v))};
    }
  g.wrap_u = Vec4(two_pi, 0, 0, 0);
  g.wrap_v = Vec4(0, two_pi, 0, 0);
  return g;
}

// Round sphere of the given radius in the (x1, y1, x2) slice.
inline SurfaceGrid round_sphere(int nu, int nv, double radius, const Vec4& center = Vec4::Zero()) {
  SurfaceGrid g(Topology::Sphere, nu, nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const double u = g.u_param(i), th = g.v_param(j);
      g.at(i, j) = ChartPoint{
          0, center + radius * Vec4(std::sin(th) * std::cos(u), std::sin(th) * std::sin(u), std::cos(th), 0.0)};
    }
  return g;
}

// (R1 cos u', R1 sin u', R2 cos v, R2 sin v) with u' = u + skew sin u.
inline SurfaceGrid clifford_torus(int nu, int nv, double r1, double r2, double skew = 0.0) {
  SurfaceGrid g(Topology::Torus, nu, nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const double u = g.u_param(i) + skew * std::sin(g.u_param(i)), v = g.v_param(j);
      g.at(i, j) = ChartPoint{0, Vec4(r1 * std::cos(u), r1 * std::sin(u), r2 * std::cos(v), r2 * std::sin(v))};
    }
  return g;
}

namespace detail {

// Lowest-index chart in which the point is comfortable; keeps chart
// interfaces away from the equator of lines through [1:0:0].
inline ChartPoint from_homogeneous(const std::array<cplx, 3>& z) {
  int k = kflow::detail::best_chart(z);
  for (int c = 0; c < 3; ++c) {
    if (std::abs(z[c]) == 0.0) continue;
    if (kflow::detail::max_modulus(kflow::detail::affine_coordinates(z, c)) <= AmbientModel::transition_threshold) {
      k = c;
      break;
    }
  }
  return ChartPoint{k, kflow::detail::affine_coordinates(z, k)};
}

// Orientation making cos(alpha) positive at a mid-latitude node.
inline void orient_symplectic(const AmbientModel& model, SurfaceGrid& g) {
  g.orientation = 1;
  if (kahler_angle_cos(model, g, 0, g.nv / 4) < 0.0) g.orientation = -1;
}

}  // namespace detail

// Lat-long sphere on a projective curve [c : s e^{iu} : w(theta, u)], with
// c = cos(theta/2), s = sin(theta/2).
template <class Third>
SurfaceGrid projective_sphere(const AmbientModel& model, int nu, int nv, Third third) {
  if (model.kind() != ModelKind::FubiniStudyCP2)
    throw Error(ErrorKind::Config, "projective curves need the Fubini-Study-CP2 model");
  SurfaceGrid g(Topology::Sphere, nu, nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const double u = g.u_param(i), th = g.v_param(j);
      const cplx z0 = std::cos(0.5 * th);
      const cplx z1 = std::sin(0.5 * th) * std::polar(1.0, u);
      g.at(i, j) = detail::from_homogeneous({z0, z1, third(th, u, z0, z1)});
    }
  detail::orient_symplectic(model, g);
  return g;
}

// Degree-1 curve z2 = a + b z1.
inline SurfaceGrid cp1(const AmbientModel& model, int nu, int nv, cplx a = 0.0, cplx b = 0.0) {
  return projective_sphere(model, nu, nv, [&](double, double, cplx z0, cplx z1) { return a * z0 + b * z1; });
}

// Normal graph over the line z2 = 0: in the affine chart
//   z2 = delta * (2 conj(z1) / (1 + |z1|^2))^m = delta * sin^m(theta) e^{-i m u},
// a smooth non-holomorphic section of the normal bundle.
inline SurfaceGrid perturbed_cp1(const AmbientModel& model, int nu, int nv, double delta, int m = 2) {
  return projective_sphere(model, nu, nv, [&](double th, double u, cplx z0, cplx) {
    return delta * z0 * std::pow(std::sin(th), m) * std::polar(1.0, -m * u);
  });
}

}  // namespace kflow::surfaces
