#pragma once

// Parabolic density of the flow: cutoff-weighted backward heat kernel
// integrated over a surface, its r0 calibration and the regularity monitor.

#include "kflow/diagnostics.hpp"
#include "kflow/flow.hpp"

#include <cstdint>
#include <random>

namespace kflow {

// ---- normal coordinates ----

struct NormalChart {
  ChartPoint origin;
  std::array<Vec4, 4> basis;  // g-orthonormal, chart components at origin
  double radius = 0.0;
};

inline NormalChart make_normal_chart(const AmbientModel& model, const ChartPoint& x0, double radius = -1.0) {
  model.require_valid(x0);
  NormalChart c;
  c.origin = x0;
  c.radius = radius > 0.0 ? radius : model.injectivity_radius_bound();
  const Mat4 g = model.metric_at(x0);
  for (int a = 0; a < 4; ++a) {
    Vec4 e = Vec4::Unit(a);
    // two passes of modified Gram-Schmidt
    for (int pass = 0; pass < 2; ++pass)
      for (int b = 0; b < a; ++b) e -= e.dot(g * c.basis[b]) * c.basis[b];
    c.basis[a] = e / std::sqrt(e.dot(g * e));
  }
  return c;
}

inline Vec4 normal_coordinates(const AmbientModel& model, const NormalChart& chart, const ChartPoint& q) {
  const double d = model.distance(chart.origin, q);
  if (!(d < chart.radius))
    throw Error(ErrorKind::OutOfBall,
                "point at distance " + std::to_string(d) + " outside normal ball of radius " + std::to_string(chart.radius));
  if (d == 0.0) return Vec4::Zero();
  const Vec4 v = model.log_map(chart.origin, q).v;
  const Mat4 g = model.metric_at(chart.origin);
  Vec4 f;
  for (int a = 0; a < 4; ++a) f[a] = chart.basis[a].dot(g * v);
  return f;
}

// ---- cutoff ----

// sup of the derivative of the quintic smoothstep
inline constexpr double cutoff_derivative_bound = 15.0 / 8.0;

inline double cutoff(double s, double r) {
  if (s <= r) return 1.0;
  if (s >= 2.0 * r) return 0.0;
  const double w = (s - r) / r;
  return 1.0 - w * w * w * (10.0 - 15.0 * w + 6.0 * w * w);
}

inline double cutoff_derivative(double s, double r) {
  if (s <= r || s >= 2.0 * r) return 0.0;
  const double w = (s - r) / r;
  return -30.0 * w * w * (1.0 - w) * (1.0 - w) / r;
}

// ---- density ----

struct DensityQuery {
  ChartPoint x0;
  double t0 = 0.0;
  double r = 0.5;  // cutoff radius: phi = 1 on B_r, 0 outside B_2r

  void validate(const AmbientModel& model) const {
    model.require_valid(x0);
    if (!(r > 0.0)) throw Error(ErrorKind::Config, "density cutoff radius must be positive");
    if (!(2.0 * r < model.injectivity_radius_bound()))
      throw Error(ErrorKind::Config, "density cutoff radius violates 2r < injectivity radius");
  }
};

namespace detail {

// Precomputed node data for repeated distance queries.
struct DistanceKey {
  Vec4 x = Vec4::Zero();
  std::array<cplx, 3> z{};  // unit homogeneous coordinates (CP2 only)
};

inline DistanceKey distance_key(const AmbientModel& model, const ChartPoint& p) {
  DistanceKey k;
  if (model.is_flat()) {
    k.x = p.x;
    return k;
  }
  k.z = homogeneous(p);
  double n = 0.0;
  for (const auto& c : k.z) n += std::norm(c);
  n = std::sqrt(n);
  for (auto& c : k.z) c /= n;
  return k;
}

inline double key_distance(const AmbientModel& model, const DistanceKey& a, const DistanceKey& b) {
  if (model.kind() == ModelKind::FlatC2) return (b.x - a.x).norm();
  if (model.kind() == ModelKind::FlatT4) {
    Vec4 d = b.x - a.x;
    const Vec4& per = model.periods();
    for (int k = 0; k < 4; ++k) d[k] -= per[k] * std::round(d[k] / per[k]);
    return d.norm();
  }
  cplx dot = 0.0;
  for (int k = 0; k < 3; ++k) dot += std::conj(a.z[k]) * b.z[k];
  double wedge = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) wedge += std::norm(a.z[i] * b.z[j] - a.z[j] * b.z[i]);
  return std::atan2(std::sqrt(wedge), std::abs(dot));
}

struct PreparedSurface {
  std::vector<DistanceKey> keys;
  std::vector<double> weights;  // sqrt(det g) times parameter weight
};

inline PreparedSurface prepare(const AmbientModel& model, const SurfaceGrid& grid, const std::vector<NodeGeometry>& geo) {
  PreparedSurface p;
  const auto w = parameter_weights(grid);
  p.keys.reserve(grid.size());
  p.weights.resize(grid.size());
  for (std::size_t n = 0; n < grid.size(); ++n) {
    p.keys.push_back(distance_key(model, grid.nodes[n]));
    p.weights[n] = geo[n].area_element * w[n];
  }
  return p;
}

// sum of phi(d) exp(-d^2 / (4 tau)) / (4 pi tau) dmu over the surface
inline double density_sum(const AmbientModel& model, const PreparedSurface& s, const DistanceKey& x0, double tau,
                          double r) {
  const double c = 1.0 / (4.0 * pi * tau);
  double acc = 0.0;
  for (std::size_t n = 0; n < s.keys.size(); ++n) {
    const double d = key_distance(model, x0, s.keys[n]);
    if (d >= 2.0 * r) continue;
    acc += cutoff(d, r) * std::exp(-d * d / (4.0 * tau)) * s.weights[n];
  }
  return c * acc;
}

}  // namespace detail

inline double parabolic_density(const AmbientModel& model, const FlowState& s, const DensityQuery& q) {
  q.validate(model);
  if (!(s.t < q.t0)) throw Error(ErrorKind::Config, "density needs t < t0");
  const auto prep = detail::prepare(model, s.grid, s.geometry);
  return detail::density_sum(model, prep, detail::distance_key(model, q.x0), q.t0 - s.t, q.r);
}

// ---- calibration ----

// Largest induced edge length over the grid.
inline double grid_resolution(const FlowState& s) {
  double h = 0.0;
  for (const auto& g : s.geometry)
    h = std::max({h, std::sqrt(g.g(0, 0)) * s.grid.du(), std::sqrt(g.g(1, 1)) * s.grid.dv()});
  return h;
}

struct CalibrationOptions {
  double cutoff_radius = 0.7;
  int random_samples = 100;
  std::uint64_t seed = 1;
  int levels = 64;  // log-spaced candidate radii between the floor and the cap
};

struct CalibrationResult {
  double r0 = 0.0;
  double max_phi = 0.0;  // at r0 over the sample set
  double floor = 0.0;    // 4h
  double cap = 0.0;
  // |Phi - 1| at on-surface points for r0, 0.8 r0, ... down to the floor
  std::vector<std::pair<double, double>> limit_profile;
  bool limit_ok = false;
};

namespace detail {

struct OffsetSample {
  std::size_t node;
  Vec4 dir;     // g-unit at the node
  double frac;  // of the radius
};

inline std::vector<OffsetSample> offset_samples(const AmbientModel& model, const SurfaceGrid& grid, int n,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  std::vector<OffsetSample> out;
  for (int k = 0; k < n; ++k) {
    OffsetSample o;
    o.node = pick(rng);
    Vec4 v(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    o.dir = v / std::sqrt(model.inner(grid.nodes[o.node], v, v));
    o.frac = unif(rng);
    out.push_back(o);
  }
  return out;
}

inline ChartPoint offset_point(const AmbientModel& model, const SurfaceGrid& grid, const OffsetSample& o, double r) {
  return model.settle(model.exp_map(grid.nodes[o.node], o.dir, o.frac * r));
}

// Max initial density over surface nodes and off-surface offsets at kernel scale r.
inline double calibration_max(const AmbientModel& model, const FlowState& s, const PreparedSurface& prep,
                              const std::vector<OffsetSample>& offsets, double r, double r_cut) {
  double m = 0.0;
  for (const auto& k : prep.keys) m = std::max(m, density_sum(model, prep, k, r * r, r_cut));
  for (const auto& o : offsets)
    m = std::max(m, density_sum(model, prep, distance_key(model, offset_point(model, s.grid, o, r)), r * r, r_cut));
  return m;
}

}  // namespace detail

inline CalibrationResult calibrate_r0(const AmbientModel& model, const FlowState& initial, double eps0,
                                      const CalibrationOptions& opt = {}) {
  if (!(eps0 > 0.0)) throw Error(ErrorKind::Config, "eps0 must be positive");
  if (opt.levels < 2) throw Error(ErrorKind::Config, "calibration needs at least two levels");
  DensityQuery{initial.grid.nodes.front(), 1.0, opt.cutoff_radius}.validate(model);

  CalibrationResult res;
  res.floor = 4.0 * grid_resolution(initial);
  // Kernel scales above a third of the cutoff radius lose visible mass to the
  // cutoff (about 0.6% for a plane at the cap).
  res.cap = std::min(0.5 * model.injectivity_radius_bound(), opt.cutoff_radius / 3.0);
  if (!(res.floor < res.cap))
    throw Error(ErrorKind::Calibration, "grid too coarse: floor 4h = " + std::to_string(res.floor) +
                                            " is not below the cap " + std::to_string(res.cap));

  const auto prep = detail::prepare(model, initial.grid, initial.geometry);
  const auto offsets = detail::offset_samples(model, initial.grid, opt.random_samples, opt.seed);
  const double limit = 1.0 + 0.5 * eps0;
  auto radius = [&](int k) { return res.floor * std::pow(res.cap / res.floor, double(k) / (opt.levels - 1)); };
  auto value = [&](int k) { return detail::calibration_max(model, initial, prep, offsets, radius(k), opt.cutoff_radius); };

  int lo = 0, hi = opt.levels - 1;
  double vlo = value(lo);
  if (!(vlo <= limit))
    throw Error(ErrorKind::Calibration, "no admissible r0 above the resolution floor; density " + std::to_string(vlo) +
                                            " at r = " + std::to_string(res.floor));
  const double vhi = value(hi);
  if (vhi <= limit) {
    lo = hi;
    vlo = vhi;
  } else {
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      const double v = value(mid);
      if (v <= limit) {
        lo = mid;
        vlo = v;
      } else {
        hi = mid;
      }
    }
  }
  res.r0 = radius(lo);
  res.max_phi = vlo;

  // On-surface limit: |Phi - 1| should shrink as the kernel scale does.
  const std::size_t stride = std::max<std::size_t>(1, initial.grid.size() / 16);
  res.limit_ok = true;
  double prev = infinity;
  for (double r = res.r0; r >= res.floor * (1.0 - 1e-12); r *= 0.8) {
    double dev = 0.0;
    for (std::size_t n = stride / 2; n < prep.keys.size(); n += stride)
      dev = std::max(dev, std::abs(detail::density_sum(model, prep, prep.keys[n], r * r, opt.cutoff_radius) - 1.0));
    res.limit_profile.emplace_back(r, dev);
    if (dev > prev + 1e-6) res.limit_ok = false;
    prev = dev;
  }
  return res;
}

// ---- regularity monitor ----

struct MonitorOptions {
  double eps0 = 0.1;
  double cutoff_radius = 0.7;
  std::size_t max_node_queries = 500;
  int random_samples = 100;
  std::uint64_t seed = 1;
};

struct MonitorRow {
  double t0 = 0.0;
  std::size_t x0_index = 0;
  double phi = 0.0;
  bool exceeded = false;
};

struct MonitorReport {
  std::vector<MonitorRow> rows;
  double max_phi = 0.0;
  int n_exceedances = 0;
  double r0 = 0.0;
  double eps0 = 0.0;
  double supA_max = 0.0;
  double blowup_threshold = 0.0;
  // No exceedance and sup|A| stayed under the blow-up threshold, or an
  // exceedance was seen at all.
  bool consistent = true;
};

// Query points used for one snapshot, in x0_index order: every k-th
// snapshot node, the initial nodes, random offsets within r0 of the
// snapshot, then curvature centres F + 2H/|H|^2 that lie within reach.
inline std::vector<ChartPoint> monitor_samples(const AmbientModel& model, const FlowState& s,
                                               const SurfaceGrid& initial, double r0, const MonitorOptions& opt) {
  std::vector<ChartPoint> pts;
  const std::size_t n = s.grid.size();
  const std::size_t k = std::max<std::size_t>(1, (n + opt.max_node_queries - 1) / opt.max_node_queries);
  for (std::size_t i = 0; i < n; i += k) pts.push_back(s.grid.nodes[i]);
  for (const auto& p : initial.nodes) pts.push_back(p);
  for (const auto& o : detail::offset_samples(model, s.grid, opt.random_samples, opt.seed))
    pts.push_back(detail::offset_point(model, s.grid, o, r0));
  for (std::size_t i = 0; i < n; i += k) {
    if (s.grid.is_pole_row(int(i / s.grid.nu))) continue;
    const auto& g = s.geometry[i];
    if (!(g.H_sq > 0.0) || 2.0 / std::sqrt(g.H_sq) >= 2.0 * opt.cutoff_radius) continue;
    pts.push_back(model.settle(model.exp_map(s.grid.nodes[i], Vec4(2.0 * g.H / g.H_sq), 1.0)));
  }
  return pts;
}

// Phi(X0, t_s + r0^2, t_s) on each snapshot.
inline MonitorReport monitor_regularity(const AmbientModel& model, const RunResult& run, const SurfaceGrid& initial,
                                        double r0, const MonitorOptions& opt = {}) {
  MonitorReport rep;
  rep.r0 = r0;
  rep.eps0 = opt.eps0;
  rep.blowup_threshold = run.blowup_threshold;
  for (const auto& rec : run.series) rep.supA_max = std::max(rep.supA_max, rec.supA);
  const double limit = 1.0 + opt.eps0;
  for (const auto& snap : run.snapshots) {
    FlowState s;
    try {
      s = make_state(model, snap.grid, snap.t);
    } catch (const Error&) {
      continue;  // degenerate final grid
    }
    const auto prep = detail::prepare(model, s.grid, s.geometry);
    const auto pts = monitor_samples(model, s, initial, r0, opt);
    const double t0 = snap.t + r0 * r0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double phi = detail::density_sum(model, prep, detail::distance_key(model, pts[i]), r0 * r0, opt.cutoff_radius);
      const bool ex = phi > limit;
      rep.rows.push_back(MonitorRow{t0, i, phi, ex});
      rep.max_phi = std::max(rep.max_phi, phi);
      rep.n_exceedances += ex ? 1 : 0;
    }
  }
  rep.consistent = rep.n_exceedances > 0 || rep.supA_max < rep.blowup_threshold;
  return rep;
}

// ---- derivative identity (flat ambients) ----

struct DerivativeQuery {
  Vec4 x0 = Vec4::Zero();
  double r = 0.5;              // kernel scale
  double cutoff_radius = 0.5;  // phi = 1 on B_cutoff
};

struct DerivativeCheck {
  double lhs = 0.0;  // time difference of the fixed-scale density
  double rhs = 0.0;
  std::array<double, 3> terms{};
  double discrepancy = 0.0;
};

namespace detail {

inline Vec4 flat_offset(const AmbientModel& model, const Vec4& x0, const Vec4& x) {
  Vec4 d = x - x0;
  if (model.kind() == ModelKind::FlatT4)
    for (int k = 0; k < 4; ++k) d[k] -= model.periods()[k] * std::round(d[k] / model.periods()[k]);
  return d;
}

inline double fixed_scale_density(const AmbientModel& model, const FlowState& s, const DerivativeQuery& q) {
  const auto w = parameter_weights(s.grid);
  const double c = 1.0 / (4.0 * pi * q.r * q.r);
  double acc = 0.0;
  for (std::size_t n = 0; n < s.grid.size(); ++n) {
    const double d = flat_offset(model, q.x0, s.grid.nodes[n].x).norm();
    acc += cutoff(d, q.cutoff_radius) * std::exp(-d * d / (4.0 * q.r * q.r)) * s.geometry[n].area_element * w[n];
  }
  return c * acc;
}

}  // namespace detail

inline DerivativeCheck density_derivative_check(const AmbientModel& model, const FlowState& a, const FlowState& b,
                                                const FlowState& c, const DerivativeQuery& q) {
  if (!model.is_flat()) throw Error(ErrorKind::NotApplicable, "the density derivative identity is checked on flat models only");
  if (a.redistributed || b.redistributed || c.redistributed)
    throw Error(ErrorKind::NotApplicable, "density derivative check needs redistribution off");
  const double h1 = b.t - a.t, h2 = c.t - b.t;
  if (!(h1 > 0.0 && h2 > 0.0)) throw Error(ErrorKind::Config, "snapshots must be strictly increasing in time");

  DerivativeCheck out;
  const double fa = detail::fixed_scale_density(model, a, q);
  const double fb = detail::fixed_scale_density(model, b, q);
  const double fc = detail::fixed_scale_density(model, c, q);
  out.lhs = -h2 / (h1 * (h1 + h2)) * fa + (h2 - h1) / (h1 * h2) * fb + h1 / (h2 * (h1 + h2)) * fc;

  const auto w = parameter_weights(b.grid);
  const double r2 = q.r * q.r;
  for (std::size_t n = 0; n < b.grid.size(); ++n) {
    const auto& g = b.geometry[n];
    const Vec4 f = detail::flat_offset(model, q.x0, b.grid.nodes[n].x);
    const double d = f.norm();
    const double e = std::exp(-d * d / (4.0 * r2)) * g.area_element * w[n];
    const double phi = cutoff(d, q.cutoff_radius);
    const double fH = f.dot(g.H);
    if (d > 0.0) out.terms[0] += cutoff_derivative(d, q.cutoff_radius) * fH / d * e / (4.0 * pi * r2);
    out.terms[1] -= phi / (8.0 * pi * r2 * r2) * e * fH;
    out.terms[2] -= phi / (4.0 * pi * r2) * e * g.H_sq;
  }
  out.rhs = out.terms[0] + out.terms[1] + out.terms[2];
  out.discrepancy = out.lhs - out.rhs;
  return out;
}

}  // namespace kflow
