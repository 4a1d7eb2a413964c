#pragma once

// Kähler-Einstein ambient models evaluated in coordinate charts.
//
// Conventions (see docs/conventions.md): real coordinates (x1, y1, x2, y2),
// J dx_k = dy_k in every chart, omega(U, V) := g(JU, V). With these choices
// <U, V> = omega(U, JV) holds identically.

#include "kflow/core.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace kflow {

enum class ModelKind { FlatC2, FlatT4, FubiniStudyCP2 };

// gamma[k](i, j) = Gamma^k_{ij}
struct Christoffel {
  std::array<Mat4, 4> gamma;
};

struct Curvature {
  // R^l_{ijk}, stored at index ((l * 4 + i) * 4 + j) * 4 + k, with
  // R(d_i, d_j) d_k = R^l_{ijk} d_l.
  std::array<double, 256> riemann{};
  Mat4 ricci = Mat4::Zero();
  double scalar = 0.0;

  double& at(int l, int i, int j, int k) { return riemann[((l * 4 + i) * 4 + j) * 4 + k]; }
  double at(int l, int i, int j, int k) const { return riemann[((l * 4 + i) * 4 + j) * 4 + k]; }
};

namespace detail {

inline std::array<cplx, 3> homogeneous(const ChartPoint& p) {
  const auto z = to_complex(p.x);
  std::array<cplx, 3> out{};
  int m = 0;
  for (int k = 0; k < 3; ++k) out[k] = (k == p.chart) ? cplx(1.0) : z[m++];
  return out;
}

inline std::array<cplx, 3> homogeneous_tangent(const ChartPoint& p, const Vec4& v) {
  const auto dz = to_complex(v);
  std::array<cplx, 3> out{};
  int m = 0;
  for (int k = 0; k < 3; ++k) out[k] = (k == p.chart) ? cplx(0.0) : dz[m++];
  return out;
}

inline Vec4 affine_coordinates(const std::array<cplx, 3>& z, int chart) {
  std::array<cplx, 2> w{};
  int m = 0;
  for (int k = 0; k < 3; ++k)
    if (k != chart) w[m++] = z[k] / z[chart];
  return from_complex(w[0], w[1]);
}

inline int best_chart(const std::array<cplx, 3>& z) {
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(z[k]) > std::abs(z[best])) best = k;
  return best;
}

inline double max_modulus(const Vec4& x) {
  return std::max(std::hypot(x[0], x[1]), std::hypot(x[2], x[3]));
}

}  // namespace detail

class AmbientModel {
 public:
  static AmbientModel flat_c2() {
    AmbientModel m;
    m.kind_ = ModelKind::FlatC2;
    m.name_ = "flat-C2";
    m.injectivity_ = infinity;
    return m;
  }

  static AmbientModel flat_t4(const Vec4& periods = Vec4::Constant(two_pi)) {
    AmbientModel m;
    m.kind_ = ModelKind::FlatT4;
    m.name_ = "flat-T4";
    m.periods_ = periods;
    m.injectivity_ = 0.5 * periods.minCoeff();
    return m;
  }

  static AmbientModel fubini_study() {
    AmbientModel m;
    m.kind_ = ModelKind::FubiniStudyCP2;
    m.name_ = "Fubini-Study-CP2";
    // Closed geodesics have length pi in this normalization; the bound sits
    // just inside half of that.
    m.injectivity_ = 1.5;
    m.scalar_ = m.curvature_at(ChartPoint{0, Vec4::Zero()}).scalar;
    return m;
  }

  static AmbientModel by_name(const std::string& name, const Vec4& periods = Vec4::Constant(two_pi)) {
    if (name == "flat-C2") return flat_c2();
    if (name == "flat-T4") return flat_t4(periods);
    if (name == "Fubini-Study-CP2") return fubini_study();
    throw Error(ErrorKind::Config, "unknown ambient model '" + name + "'");
  }

  ModelKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  bool is_flat() const { return kind_ != ModelKind::FubiniStudyCP2; }
  double scalar_curvature() const { return scalar_; }
  double injectivity_radius_bound() const { return injectivity_; }
  const Vec4& periods() const { return periods_; }
  int chart_count() const { return kind_ == ModelKind::FubiniStudyCP2 ? 3 : 1; }

  // Largest complex coordinate modulus accepted in a CP2 chart, and the
  // modulus above which a point is moved to its best chart.
  static constexpr double chart_radius = 8.0;
  static constexpr double transition_threshold = 2.0;

  // Test fixture hook: flips the sign of omega without touching g or J.
  void set_omega_sign(double s) { omega_sign_ = s; }

  bool valid(const ChartPoint& p) const {
    if (!p.x.allFinite() || p.chart < 0 || p.chart >= chart_count()) return false;
    if (kind_ == ModelKind::FubiniStudyCP2) return detail::max_modulus(p.x) <= chart_radius;
    return true;
  }

  void require_valid(const ChartPoint& p) const {
    if (!valid(p))
      throw Error(ErrorKind::ChartDomain, "point outside chart " + std::to_string(p.chart) + " of " + name_);
  }

  Mat4 metric_at(const ChartPoint& p) const {
    require_valid(p);
    if (is_flat()) return Mat4::Identity();
    const auto z = to_complex(p.x);
    const double sigma = 1.0 + std::norm(z[0]) + std::norm(z[1]);
    const double inv2 = 1.0 / (sigma * sigma);
    Mat4 g;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const cplx h = ((i == j ? sigma : 0.0) - std::conj(z[i]) * z[j]) * inv2;
        g(2 * i, 2 * j) = h.real();
        g(2 * i + 1, 2 * j + 1) = h.real();
        g(2 * i, 2 * j + 1) = h.imag();
        g(2 * i + 1, 2 * j) = -h.imag();
      }
    }
    return g;
  }

  // Gamma^k_{ij} u^i v^j. For Fubini-Study the holomorphic Christoffels are
  // Gamma^k_{ij} = -(delta^k_i conj(z_j) + delta^k_j conj(z_i)) / (1 + |z|^2).
  Vec4 connection(const ChartPoint& p, const Vec4& u, const Vec4& v) const {
    if (is_flat()) return Vec4::Zero();
    const auto z = to_complex(p.x);
    const auto cu = to_complex(u);
    const auto cv = to_complex(v);
    const double sigma = 1.0 + std::norm(z[0]) + std::norm(z[1]);
    const cplx zu = std::conj(z[0]) * cu[0] + std::conj(z[1]) * cu[1];
    const cplx zv = std::conj(z[0]) * cv[0] + std::conj(z[1]) * cv[1];
    const cplx w0 = -(cu[0] * zv + cv[0] * zu) / sigma;
    const cplx w1 = -(cu[1] * zv + cv[1] * zu) / sigma;
    return from_complex(w0, w1);
  }

  Christoffel christoffel_at(const ChartPoint& p) const {
    require_valid(p);
    Christoffel c;
    for (auto& m : c.gamma) m.setZero();
    if (is_flat()) return c;
    for (int i = 0; i < 4; ++i) {
      for (int j = i; j < 4; ++j) {
        const Vec4 w = connection(p, Vec4::Unit(i), Vec4::Unit(j));
        for (int k = 0; k < 4; ++k) {
          c.gamma[k](i, j) = w[k];
          c.gamma[k](j, i) = w[k];
        }
      }
    }
    return c;
  }

  // Riemann tensor from 4th-order central differences of the Christoffels.
  Curvature curvature_at(const ChartPoint& p) const {
    require_valid(p);
    Curvature out;
    if (is_flat()) return out;
    constexpr double step = 1e-3;
    std::array<std::array<Mat4, 4>, 4> dgamma{};  // dgamma[m][k] = d_m Gamma^k
    for (int m = 0; m < 4; ++m) {
      auto shifted = [&](double s) {
        ChartPoint q = p;
        q.x[m] += s;
        return christoffel_at(q);
      };
      const auto a = shifted(-2 * step), b = shifted(-step), c = shifted(step), d = shifted(2 * step);
      for (int k = 0; k < 4; ++k)
        dgamma[m][k] = (a.gamma[k] - 8.0 * b.gamma[k] + 8.0 * c.gamma[k] - d.gamma[k]) / (12.0 * step);
    }
    const Christoffel g0 = christoffel_at(p);
    for (int l = 0; l < 4; ++l)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int k = 0; k < 4; ++k) {
            double r = dgamma[i][l](j, k) - dgamma[j][l](i, k);
            for (int m = 0; m < 4; ++m)
              r += g0.gamma[l](i, m) * g0.gamma[m](j, k) - g0.gamma[l](j, m) * g0.gamma[m](i, k);
            out.at(l, i, j, k) = r;
          }
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += out.at(i, i, j, k);
        out.ricci(j, k) = s;
      }
    const Mat4 ginv = metric_at(p).inverse();
    out.scalar = (ginv.array() * out.ricci.array()).sum();
    return out;
  }

  Mat4 complex_structure(const ChartPoint& p) const {
    require_valid(p);
    return standard_complex_structure();
  }

  // omega(U, V) = U^T W V with W = J^T G.
  Mat4 omega_matrix(const ChartPoint& p) const {
    return omega_sign_ * (standard_complex_structure().transpose() * metric_at(p));
  }

  double inner(const ChartPoint& p, const Vec4& u, const Vec4& v) const { return u.dot(metric_at(p) * v); }
  double omega(const ChartPoint& p, const Vec4& u, const Vec4& v) const { return u.dot(omega_matrix(p) * v); }
  // omega(U, V) given the metric matrix already evaluated at the base point.
  double omega_with_metric(const Mat4& g, const Vec4& u, const Vec4& v) const {
    return omega_sign_ * (standard_complex_structure() * u).dot(g * v);
  }

  // ---- chart transitions ----

  ChartPoint to_chart(const ChartPoint& p, int target) const {
    if (target == p.chart || kind_ != ModelKind::FubiniStudyCP2) return p;
    const auto z = detail::homogeneous(p);
    if (std::abs(z[target]) < 1e-300)
      throw Error(ErrorKind::ChartDomain, "point at infinity of chart " + std::to_string(target));
    return ChartPoint{target, detail::affine_coordinates(z, target)};
  }

  // Components in chart `target` of the tangent vector v at p.
  Vec4 push_forward(const ChartPoint& p, const Vec4& v, int target) const {
    if (target == p.chart || kind_ != ModelKind::FubiniStudyCP2) return v;
    const auto z = detail::homogeneous(p);
    const auto dz = detail::homogeneous_tangent(p, v);
    std::array<cplx, 2> dw{};
    int m = 0;
    for (int k = 0; k < 3; ++k) {
      if (k == target) continue;
      const cplx w = z[k] / z[target];
      dw[m++] = (dz[k] - w * dz[target]) / z[target];
    }
    return from_complex(dw[0], dw[1]);
  }

  int preferred_chart(const ChartPoint& p) const {
    if (kind_ != ModelKind::FubiniStudyCP2) return p.chart;
    return detail::best_chart(detail::homogeneous(p));
  }

  // Moves a point to its best chart once it leaves the comfortable region.
  ChartPoint settle(const ChartPoint& p) const {
    if (kind_ != ModelKind::FubiniStudyCP2 || detail::max_modulus(p.x) <= transition_threshold) return p;
    return to_chart(p, preferred_chart(p));
  }

  TangentVector settle(const TangentVector& tv) const {
    if (kind_ != ModelKind::FubiniStudyCP2 || detail::max_modulus(tv.base.x) <= transition_threshold) return tv;
    const int target = preferred_chart(tv.base);
    return TangentVector{to_chart(tv.base, target), push_forward(tv.base, tv.v, target)};
  }

  // Coordinate difference q - p expressed in p's chart (flat T4: nearest image).
  Vec4 chart_difference(const ChartPoint& p, const ChartPoint& q) const {
    Vec4 d = to_chart(q, p.chart).x - p.x;
    if (kind_ == ModelKind::FlatT4)
      for (int k = 0; k < 4; ++k) d[k] -= periods_[k] * std::round(d[k] / periods_[k]);
    return d;
  }

  // ---- geodesics ----

  double geodesic_step() const { return injectivity_ / 1000.0; }

  // Geodesic with initial data (p, v) evaluated at parameter s, returning the
  // endpoint together with its velocity.
  TangentVector geodesic(const ChartPoint& p, const Vec4& v, double s) const {
    require_valid(p);
    if (is_flat()) return TangentVector{ChartPoint{p.chart, p.x + s * v}, v};
    const double len = std::sqrt(std::max(0.0, inner(p, v, v))) * std::abs(s);
    const int n = std::max(1, static_cast<int>(std::ceil(len / geodesic_step())));
    const double ds = s / n;
    TangentVector st{p, v};
    for (int k = 0; k < n; ++k) {
      const ChartPoint& b = st.base;
      auto accel = [&](const Vec4& x, const Vec4& y) { return Vec4(-connection(ChartPoint{b.chart, x}, y, y)); };
      const Vec4 x0 = b.x, y0 = st.v;
      const Vec4 k1x = y0, k1y = accel(x0, y0);
      const Vec4 k2x = y0 + 0.5 * ds * k1y, k2y = accel(x0 + 0.5 * ds * k1x, k2x);
      const Vec4 k3x = y0 + 0.5 * ds * k2y, k3y = accel(x0 + 0.5 * ds * k2x, k3x);
      const Vec4 k4x = y0 + ds * k3y, k4y = accel(x0 + ds * k3x, k4x);
      st.base.x = x0 + ds / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      st.v = y0 + ds / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
      if (!st.base.x.allFinite() || !st.v.allFinite())
        throw Error(ErrorKind::GeodesicEscape, "geodesic left every chart of " + name_);
      st = settle(st);
      if (!valid(st.base)) throw Error(ErrorKind::GeodesicEscape, "geodesic left every chart of " + name_);
    }
    return st;
  }

  ChartPoint exp_map(const ChartPoint& p, const Vec4& v, double s = 1.0) const { return geodesic(p, v, s).base; }
  ChartPoint exp_map(const TangentVector& v, double s = 1.0) const { return exp_map(v.base, v.v, s); }

  // Inverse of exp_map by damped-Newton shooting on the initial velocity.
  TangentVector log_map(const ChartPoint& p, const ChartPoint& q) const {
    require_valid(p);
    require_valid(q);
    if (is_flat()) return TangentVector{p, chart_difference(p, q)};

    auto residual = [&](const Vec4& v) { return Vec4(to_chart(exp_map(p, v, 1.0), q.chart).x - q.x); };

    const double d = distance(p, q);
    if (d == 0.0) return TangentVector{p, Vec4::Zero()};
    Vec4 v = minimizing_guess(p, q, d);

    Vec4 r = residual(v);
    double rn = r.norm();
    const double tol = 1e-13 * std::max(1.0, q.x.norm());
    for (int it = 0; it < 50 && rn > tol; ++it) {
      Mat4 jac;
      const double h = 1e-7 * std::max(1.0, v.norm());
      for (int c = 0; c < 4; ++c) {
        Vec4 e = Vec4::Zero();
        e[c] = h;
        jac.col(c) = (residual(v + e) - residual(v - e)) / (2.0 * h);
      }
      const Vec4 dv = jac.partialPivLu().solve(-r);
      double step = 1.0;
      bool improved = false;
      for (int k = 0; k < 30; ++k) {
        const Vec4 trial = v + step * dv;
        const Vec4 rt = residual(trial);
        if (rt.norm() < rn) {
          v = trial;
          r = rt;
          rn = rt.norm();
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
    }
    if (!(rn <= std::max(tol, 1e-11)))
      throw Error(ErrorKind::LogDivergence, "shooting did not converge, residual " + std::to_string(rn));
    if (std::abs(std::sqrt(inner(p, v, v)) - d) > 1e-6 * std::max(1.0, d))
      throw Error(ErrorKind::LogDivergence, "shooting converged to a non-minimizing geodesic");
    return TangentVector{p, v};
  }

  // Closed-form geodesic distance.
  double distance(const ChartPoint& p, const ChartPoint& q) const {
    if (is_flat()) return chart_difference(p, q).norm();
    const auto z = detail::homogeneous(p);
    const auto w = detail::homogeneous(q);
    double nz = 0.0, nw = 0.0;
    for (int k = 0; k < 3; ++k) {
      nz += std::norm(z[k]);
      nw += std::norm(w[k]);
    }
    cplx dot = 0.0;
    for (int k = 0; k < 3; ++k) dot += std::conj(z[k]) * w[k];
    double wedge = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b) wedge += std::norm(z[a] * w[b] - z[b] * w[a]);
    return std::atan2(std::sqrt(wedge / (nz * nw)), std::abs(dot) / std::sqrt(nz * nw));
  }

 private:
  AmbientModel() = default;

  // Initial velocity of the minimizing geodesic from its horizontal lift
  // Z cos s + U sin s, pushed through the chart map of p.
  Vec4 minimizing_guess(const ChartPoint& p, const ChartPoint& q, double d) const {
    auto Z = detail::homogeneous(p);
    auto W = detail::homogeneous(q);
    double nz = 0.0, nw = 0.0;
    for (int k = 0; k < 3; ++k) nz += std::norm(Z[k]), nw += std::norm(W[k]);
    cplx dot = 0.0;
    for (int k = 0; k < 3; ++k) {
      Z[k] /= std::sqrt(nz);
      W[k] /= std::sqrt(nw);
      dot += std::conj(Z[k]) * W[k];
    }
    if (std::abs(dot) < 1e-12) throw Error(ErrorKind::LogDivergence, "target is on the cut locus");
    const cplx phase = std::conj(dot) / std::abs(dot);
    std::array<cplx, 3> U;
    double nu = 0.0;
    for (int k = 0; k < 3; ++k) {
      U[k] = W[k] * phase - std::abs(dot) * Z[k];
      nu += std::norm(U[k]);
    }
    const double eps = 1e-6;
    std::array<cplx, 3> a, b;
    for (int k = 0; k < 3; ++k) {
      a[k] = Z[k] + eps * d * U[k] / std::sqrt(nu);
      b[k] = Z[k] - eps * d * U[k] / std::sqrt(nu);
    }
    return (detail::affine_coordinates(a, p.chart) - detail::affine_coordinates(b, p.chart)) / (2.0 * eps);
  }

  ModelKind kind_ = ModelKind::FlatC2;
  std::string name_;
  double scalar_ = 0.0;
  double injectivity_ = infinity;
  Vec4 periods_ = Vec4::Constant(two_pi);
  double omega_sign_ = 1.0;
};

// Christoffels from 4th-order central differences of the metric with step h;
// an independent route to the closed form used by connection().
inline Christoffel christoffel_from_metric(const AmbientModel& model, const ChartPoint& p, double h = 1e-4) {
  std::array<Mat4, 4> dg;  // dg[m] = d_m g
  for (int m = 0; m < 4; ++m) {
    auto at = [&](double s) {
      ChartPoint q = p;
      q.x[m] += s;
      return model.metric_at(q);
    };
    dg[m] = (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
  }
  const Mat4 ginv = model.metric_at(p).inverse();
  Christoffel c;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (int l = 0; l < 4; ++l) s += ginv(k, l) * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
        c.gamma[k](i, j) = 0.5 * s;
      }
  return c;
}

// Max entry of nabla J for the constant chart J and the given connection.
inline double nabla_J_max(const Mat4& J, const Christoffel& c) {
  double m = 0.0;
  for (int k = 0; k < 4; ++k) {
    Mat4 gk;  // (Gamma_k)^a_c = Gamma^a_{kc}
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) gk(a, b) = c.gamma[a](k, b);
    m = std::max(m, (gk * J - J * gk).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace kflow
