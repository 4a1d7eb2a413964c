#pragma once

// Per-node extrinsic geometry of an immersed surface in an ambient model:
// parameter partials, induced metric, adapted frame, second fundamental form,
// mean curvature vector, Kähler angle and |nabla J_Sigma|^2.

#include "kflow/grid.hpp"

#include <optional>
#include <vector>

namespace kflow {

struct NodePartials {
  Vec4 Fu, Fv, Fuu, Fvv, Fuv;
};

// Orthonormal adapted frame (e1, e2 tangent, v1, v2 normal), coordinate
// components in the node's chart.
struct AdaptedFrame {
  Vec4 e1, e2, v1, v2;
};

// h[alpha][i][j] = <II(e_i, e_j), v_alpha>, alpha, i, j in {0, 1}.
struct SecondFundamentalForm {
  std::array<std::array<std::array<double, 2>, 2>, 2> h{};

  double operator()(int alpha, int i, int j) const { return h[alpha][i][j]; }
  double mean(int alpha) const { return h[alpha][0][0] + h[alpha][1][1]; }
  double norm_sq() const {
    double s = 0.0;
    for (const auto& a : h)
      for (const auto& r : a)
        for (double x : r) s += x * x;
    return s;
  }
};

// |nabla J_Sigma|^2 as the four-term sum in the adapted frame, superscript
// (normal) index first:
//   (h^2_11 + h^1_12)^2 + (h^2_21 + h^1_22)^2 + (h^2_12 - h^1_11)^2 + (h^2_22 - h^1_21)^2
inline double nabla_J_squared(const SecondFundamentalForm& s) {
  const auto& h = s.h;
  const double a = h[1][0][0] + h[0][0][1];
  const double b = h[1][1][0] + h[0][1][1];
  const double c = h[1][0][1] - h[0][0][0];
  const double d = h[1][1][1] - h[0][1][0];
  return a * a + b * b + c * c + d * d;
}

// Second fundamental form seen from the frame rotated by theta in the
// tangent plane and psi in the normal plane.
inline SecondFundamentalForm rotate(const SecondFundamentalForm& s, double theta, double psi) {
  const Mat2 rt = (Mat2() << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta)).finished();
  const Mat2 rn = (Mat2() << std::cos(psi), std::sin(psi), -std::sin(psi), std::cos(psi)).finished();
  SecondFundamentalForm out;
  for (int a = 0; a < 2; ++a)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double v = 0.0;
        for (int b = 0; b < 2; ++b)
          for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l) v += rn(a, b) * rt(i, k) * rt(j, l) * s.h[b][k][l];
        out.h[a][i][j] = v;
      }
  return out;
}

inline AdaptedFrame rotate(const AdaptedFrame& f, double theta, double psi) {
  const double ct = std::cos(theta), st = std::sin(theta), cp = std::cos(psi), sp = std::sin(psi);
  return AdaptedFrame{ct * f.e1 + st * f.e2, -st * f.e1 + ct * f.e2, cp * f.v1 + sp * f.v2, -sp * f.v1 + cp * f.v2};
}

struct NodeGeometry {
  NodePartials d;
  Mat4 metric;           // ambient metric at the node
  Mat2 g;                // induced metric in (u, v) order
  Mat2 ginv;
  double area_element = 0.0;
  AdaptedFrame frame;
  SecondFundamentalForm h;
  Vec4 H = Vec4::Zero();  // mean curvature vector, node chart components
  double H_sq = 0.0;
  double cos_alpha = 1.0;
  double nablaJ_sq = 0.0;
  double A_sq = 0.0;
};

struct GeometryOptions {
  double degeneracy_floor = 1e-6;
};

namespace detail {

// Position of grid node (i, j), resolved through seams and poles, in `chart`.
inline Vec4 stencil_point(const AmbientModel& model, const SurfaceGrid& grid, int chart, int i, int j) {
  const auto r = grid.resolve(i, j);
  const ChartPoint& p = grid.nodes[r.node];
  if (p.chart == chart) return p.x + r.offset;
  return model.to_chart(p, chart).x + r.offset;
}

}  // namespace detail

// Fourth-order central differences of F at node (i, j), in the node's chart.
inline NodePartials node_partials(const AmbientModel& model, const SurfaceGrid& grid, const StencilTable& table, int i,
                                  int j) {
  const std::size_t centre = grid.index(i, j);
  const int chart = grid.nodes[centre].chart;
  const auto& st = table.entries[centre];
  std::array<Vec4, 25> x;
  for (int n = 0; n < 25; ++n) {
    const auto& e = st[n];
    const ChartPoint& p = grid.nodes[e.node];
    x[n] = p.chart == chart ? p.x : model.to_chart(p, chart).x;
    if (e.qu != 0) x[n] += e.qu * grid.wrap_u;
    if (e.qv != 0) x[n] += e.qv * grid.wrap_v;
  }
  const double hu = grid.du(), hv = grid.dv();
  NodePartials p;
  p.Fu = p.Fv = p.Fuu = p.Fvv = p.Fuv = Vec4::Zero();
  for (int a = 0; a < 5; ++a) {
    const Vec4& ru = x[a + 10];
    const Vec4& rv = x[2 + 5 * a];
    p.Fu += d1_weights[a] * ru;
    p.Fv += d1_weights[a] * rv;
    p.Fuu += d2_weights[a] * ru;
    p.Fvv += d2_weights[a] * rv;
  }
  for (int b = 0; b < 5; ++b) {
    if (b == 2) continue;
    Vec4 row = Vec4::Zero();
    for (int a = 0; a < 5; ++a)
      if (a != 2) row += d1_weights[a] * x[a + 5 * b];
    p.Fuv += d1_weights[b] * row;
  }
  p.Fu /= hu;
  p.Fv /= hv;
  p.Fuu /= hu * hu;
  p.Fvv /= hv * hv;
  p.Fuv /= hu * hv;
  return p;
}

inline NodePartials node_partials(const AmbientModel& model, const SurfaceGrid& grid, int i, int j) {
  return node_partials(model, grid, stencil_table(grid), i, j);
}

inline double induced_smallest_singular_value(const Mat2& g) {
  const double tr = g.trace(), det = g.determinant();
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  return std::sqrt(std::max(0.0, 0.5 * tr - disc));
}

namespace detail {

// Trace of II with the induced inverse metric, projected to the normal plane.
inline Vec4 normal_trace(const NodePartials& d, const Mat2& ginv, const Vec4& GFu, const Vec4& GFv, const Vec4& IIuu,
                         const Vec4& IIuv, const Vec4& IIvv) {
  const Vec4 trace = ginv(0, 0) * IIuu + 2.0 * ginv(0, 1) * IIuv + ginv(1, 1) * IIvv;
  const Vec2 tang(trace.dot(GFu), trace.dot(GFv));
  const Vec2 coef = ginv * tang;
  return trace - coef[0] * d.Fu - coef[1] * d.Fv;
}

inline Mat2 induced_metric(const NodePartials& d, const Vec4& GFu, const Vec4& GFv) {
  Mat2 g;
  g << d.Fu.dot(GFu), d.Fu.dot(GFv), d.Fu.dot(GFv), d.Fv.dot(GFv);
  return g;
}

inline void require_nondegenerate(const Mat2& g, const GeometryOptions& opt, int i, int j) {
  if (!g.allFinite() || induced_smallest_singular_value(g) < opt.degeneracy_floor)
    throw Error(ErrorKind::DegenerateImmersion,
                "immersion Jacobian below floor at node (" + std::to_string(i) + ", " + std::to_string(j) + ")");
}

inline Mat2 inverse2(const Mat2& g) {
  const double det = g.determinant();
  Mat2 inv;
  inv << g(1, 1) / det, -g(0, 1) / det, -g(1, 0) / det, g(0, 0) / det;
  return inv;
}

}  // namespace detail

// Mean curvature vector alone, for intermediate time-stepping stages.
inline Vec4 node_mean_curvature(const AmbientModel& model, const SurfaceGrid& grid, const StencilTable& table, int i,
                                int j, const GeometryOptions& opt = {}) {
  const ChartPoint& p = grid.at(i, j);
  const NodePartials d = node_partials(model, grid, table, i, j);
  Vec4 GFu = d.Fu, GFv = d.Fv;
  if (!model.is_flat()) {
    const Mat4 G = model.metric_at(p);
    GFu = G * d.Fu;
    GFv = G * d.Fv;
  }
  const Mat2 g = detail::induced_metric(d, GFu, GFv);
  detail::require_nondegenerate(g, opt, i, j);
  const Vec4 IIuu = d.Fuu + model.connection(p, d.Fu, d.Fu);
  const Vec4 IIvv = d.Fvv + model.connection(p, d.Fv, d.Fv);
  const Vec4 IIuv = d.Fuv + model.connection(p, d.Fu, d.Fv);
  return detail::normal_trace(d, detail::inverse2(g), GFu, GFv, IIuu, IIuv, IIvv);
}

inline std::vector<Vec4> mean_curvature_field(const AmbientModel& model, const SurfaceGrid& grid,
                                              const GeometryOptions& opt = {}) {
  std::vector<Vec4> out(grid.size());
  const auto& table = stencil_table(grid);
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) out[grid.index(i, j)] = node_mean_curvature(model, grid, table, i, j, opt);
  return out;
}

// Full geometry at one node given its partials.
inline NodeGeometry node_geometry(const AmbientModel& model, const SurfaceGrid& grid, const StencilTable& table, int i,
                                  int j, const GeometryOptions& opt = {}) {
  const ChartPoint& p = grid.at(i, j);
  NodeGeometry ng;
  ng.d = node_partials(model, grid, table, i, j);
  ng.metric = model.metric_at(p);
  const Mat4& G = ng.metric;
  const bool euclid = model.is_flat();
  auto gmul = [&G, euclid](const Vec4& a) -> Vec4 { return euclid ? a : Vec4(G * a); };
  auto ip = [&](const Vec4& a, const Vec4& b) { return a.dot(gmul(b)); };

  const Vec4 GFu = gmul(ng.d.Fu), GFv = gmul(ng.d.Fv);
  ng.g = detail::induced_metric(ng.d, GFu, GFv);
  detail::require_nondegenerate(ng.g, opt, i, j);
  ng.area_element = std::sqrt(ng.g.determinant());
  ng.ginv = detail::inverse2(ng.g);

  // Oriented tangent basis (t1, t2) and the Gram-Schmidt frame.
  const bool uv = grid.orientation > 0;
  const Vec4& t1 = uv ? ng.d.Fu : ng.d.Fv;
  const Vec4& t2 = uv ? ng.d.Fv : ng.d.Fu;
  const double n1 = std::sqrt(ip(t1, t1));
  AdaptedFrame& f = ng.frame;
  f.e1 = t1 / n1;
  const double c12 = ip(f.e1, t2);
  const Vec4 r2 = t2 - c12 * f.e1;
  const double n2 = std::sqrt(ip(r2, r2));
  if (!(n2 > opt.degeneracy_floor))
    throw Error(ErrorKind::DegenerateImmersion, "Gram-Schmidt pivot below floor");
  f.e2 = r2 / n2;

  // Normal seed: coordinate vector least aligned with the tangent plane.
  const Vec4 Ge1 = gmul(f.e1), Ge2 = gmul(f.e2);
  std::array<Vec4, 4> resid;
  std::array<double, 4> align{};
  for (int k = 0; k < 4; ++k) {
    const Vec4 b = Vec4::Unit(k);
    const double a1 = Ge1[k], a2 = Ge2[k];
    resid[k] = b - a1 * f.e1 - a2 * f.e2;
    align[k] = (a1 * a1 + a2 * a2) / G(k, k);
  }
  int seed = 0;
  for (int k = 1; k < 4; ++k)
    if (align[k] < align[seed]) seed = k;
  const double nv1 = std::sqrt(ip(resid[seed], resid[seed]));
  if (!(nv1 > opt.degeneracy_floor)) throw Error(ErrorKind::DegenerateImmersion, "normal seed pivot below floor");
  f.v1 = resid[seed] / nv1;
  double best = -1.0;
  Vec4 cand;
  for (int k = 0; k < 4; ++k) {
    if (k == seed) continue;
    const Vec4 c = resid[k] - ip(resid[k], f.v1) * f.v1;
    const double n = ip(c, c);
    if (n > best) {
      best = n;
      cand = c;
    }
  }
  f.v2 = cand / std::sqrt(best);
  Mat4 frame_cols;
  frame_cols << f.e1, f.e2, f.v1, f.v2;
  if (frame_cols.determinant() < 0.0) f.v2 = -f.v2;

  // Coordinate second fundamental form, normal components.
  const Vec4 IIuu = ng.d.Fuu + model.connection(p, ng.d.Fu, ng.d.Fu);
  const Vec4 IIvv = ng.d.Fvv + model.connection(p, ng.d.Fv, ng.d.Fv);
  const Vec4 IIuv = ng.d.Fuv + model.connection(p, ng.d.Fu, ng.d.Fv);
  const Vec4 Gv1 = gmul(f.v1), Gv2 = gmul(f.v2);
  const std::array<Vec4, 2> Gv = {Gv1, Gv2};

  // Change of basis from (t1, t2) to (e1, e2).
  Mat2 T;
  T << 1.0 / n1, 0.0, -c12 / (n1 * n2), 1.0 / n2;
  for (int a = 0; a < 2; ++a) {
    Mat2 coord;  // in (t1, t2) order
    const double huu = IIuu.dot(Gv[a]), hvv = IIvv.dot(Gv[a]), huv = IIuv.dot(Gv[a]);
    if (uv)
      coord << huu, huv, huv, hvv;
    else
      coord << hvv, huv, huv, huu;
    const Mat2 ortho = T * coord * T.transpose();
    ng.h.h[a][0][0] = ortho(0, 0);
    ng.h.h[a][1][1] = ortho(1, 1);
    ng.h.h[a][0][1] = ng.h.h[a][1][0] = ortho(0, 1);
  }

  ng.H = detail::normal_trace(ng.d, ng.ginv, GFu, GFv, IIuu, IIuv, IIvv);
  ng.H_sq = ip(ng.H, ng.H);

  ng.cos_alpha = model.omega_with_metric(G, f.e1, f.e2);
  ng.nablaJ_sq = nabla_J_squared(ng.h);
  ng.A_sq = ng.h.norm_sq();
  return ng;
}

inline NodeGeometry node_geometry(const AmbientModel& model, const SurfaceGrid& grid, int i, int j,
                                  const GeometryOptions& opt = {}) {
  return node_geometry(model, grid, stencil_table(grid), i, j, opt);
}

inline std::vector<NodeGeometry> compute_geometry(const AmbientModel& model, const SurfaceGrid& grid,
                                                  const GeometryOptions& opt = {}) {
  std::vector<NodeGeometry> out(grid.size());
  const auto& table = stencil_table(grid);
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) out[grid.index(i, j)] = node_geometry(model, grid, table, i, j, opt);
  return out;
}

inline AdaptedFrame adapted_frame(const AmbientModel& model, const SurfaceGrid& grid, int i, int j) {
  return node_geometry(model, grid, i, j).frame;
}

inline SecondFundamentalForm second_fundamental_form(const AmbientModel& model, const SurfaceGrid& grid, int i,
                                                     int j) {
  return node_geometry(model, grid, i, j).h;
}

inline double kahler_angle_cos(const AmbientModel& model, const SurfaceGrid& grid, int i, int j) {
  return node_geometry(model, grid, i, j).cos_alpha;
}

using ScalarField = std::vector<double>;

// Sum of f * sqrt(det g) * parameter weight, in fixed node order.
inline double integrate_scalar(const SurfaceGrid& grid, const std::vector<NodeGeometry>& geo, const ScalarField& f) {
  const auto w = parameter_weights(grid);
  double s = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) s += f[n] * geo[n].area_element * w[n];
  return s;
}

inline double area(const SurfaceGrid& grid, const std::vector<NodeGeometry>& geo) {
  return integrate_scalar(grid, geo, ScalarField(grid.size(), 1.0));
}

namespace detail {

inline double d1_u(const SurfaceGrid& grid, const StencilTable& t, const ScalarField& f, int i, int j) {
  const auto& st = t.entries[grid.index(i, j)];
  double s = 0.0;
  for (int a = 0; a < 5; ++a)
    if (a != 2) s += d1_weights[a] * f[st[a + 10].node];
  return s / grid.du();
}

inline double d1_v(const SurfaceGrid& grid, const StencilTable& t, const ScalarField& f, int i, int j) {
  const auto& st = t.entries[grid.index(i, j)];
  double s = 0.0;
  for (int a = 0; a < 5; ++a)
    if (a != 2) s += d1_weights[a] * f[st[2 + 5 * a].node];
  return s / grid.dv();
}

}  // namespace detail

// (1/sqrt g) d_a (sqrt g g^{ab} d_b f) in flux form. The latitude flux is
// even across a pole, so ghost rows reuse partner values unchanged.
inline ScalarField laplace_beltrami(const SurfaceGrid& grid, const std::vector<NodeGeometry>& geo,
                                    const ScalarField& f) {
  const std::size_t n = grid.size();
  const auto& t = stencil_table(grid);
  ScalarField wu(n), wv(n), out(n);
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) {
      const std::size_t k = grid.index(i, j);
      const double fu = detail::d1_u(grid, t, f, i, j), fv = detail::d1_v(grid, t, f, i, j);
      const auto& G = geo[k];
      wu[k] = G.area_element * (G.ginv(0, 0) * fu + G.ginv(0, 1) * fv);
      wv[k] = G.area_element * (G.ginv(1, 0) * fu + G.ginv(1, 1) * fv);
    }
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) {
      const std::size_t k = grid.index(i, j);
      out[k] = (detail::d1_u(grid, t, wu, i, j) + detail::d1_v(grid, t, wv, i, j)) / geo[k].area_element;
    }
  return out;
}

// Grid reflection u -> -u with the orientation flag flipped, and cyclic shifts.
inline SurfaceGrid reflect_u(const SurfaceGrid& grid) {
  SurfaceGrid out = grid;
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) {
      const ChartPoint& p = grid.at((grid.nu - i) % grid.nu, j);
      out.at(i, j) = ChartPoint{p.chart, i == 0 ? p.x : Vec4(p.x - grid.wrap_u)};
    }
  out.wrap_u = -grid.wrap_u;
  out.orientation = -grid.orientation;
  return out;
}

inline SurfaceGrid shift_u(const SurfaceGrid& grid, int s) {
  SurfaceGrid out = grid;
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) {
      const int src = i + s;
      const auto r = grid.resolve(src, j);
      const ChartPoint& p = grid.nodes[r.node];
      out.at(i, j) = ChartPoint{p.chart, p.x + r.offset};
    }
  return out;
}

}  // namespace kflow
