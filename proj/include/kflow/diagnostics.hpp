#pragma once

// Scalar functionals along the flow and the inequality checks built on them.

#include "kflow/state.hpp"

#include <optional>

namespace kflow {

inline constexpr double cos_alpha_floor = 1e-8;
inline constexpr double check_slack = 0.05;

struct DiagnosticsRecord {
  double t = 0.0;
  long step_index = 0;
  double area = 0.0;
  double symp_area = 0.0;
  double min_cos_alpha = 1.0;
  double V = 0.0;
  bool V_valid = true;
  double L2H = 0.0;
  double L1H = 0.0;
  double supA = 0.0;
  double maxH = 0.0;
  double cumL1H = 0.0;
  // min over nodes of nablaJ_sq - |H|^2 / 2
  double nablaJ_margin = 0.0;
  std::optional<double> max_residual;
};

using Series = std::vector<DiagnosticsRecord>;

inline DiagnosticsRecord record(const FlowState& s, const DiagnosticsRecord* prev = nullptr) {
  const auto& grid = s.grid;
  const std::size_t n = grid.size();
  ScalarField one(n, 1.0), c(n), v(n), h2(n), h1(n);
  DiagnosticsRecord r;
  r.t = s.t;
  r.step_index = s.step_index;
  r.min_cos_alpha = infinity;
  r.nablaJ_margin = infinity;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& g = s.geometry[k];
    c[k] = g.cos_alpha;
    const double ca = std::max(g.cos_alpha, cos_alpha_floor);
    v[k] = (1.0 - g.cos_alpha * g.cos_alpha) / ca;
    h2[k] = g.H_sq;
    h1[k] = std::sqrt(g.H_sq);
    r.min_cos_alpha = std::min(r.min_cos_alpha, g.cos_alpha);
    r.nablaJ_margin = std::min(r.nablaJ_margin, g.nablaJ_sq - 0.5 * g.H_sq);
  }
  for_interior_nodes(grid, [&](std::size_t k) {
    r.supA = std::max(r.supA, std::sqrt(s.geometry[k].A_sq));
    r.maxH = std::max(r.maxH, h1[k]);
  });
  r.area = integrate_scalar(grid, s.geometry, one);
  r.symp_area = integrate_scalar(grid, s.geometry, c);
  r.V = integrate_scalar(grid, s.geometry, v);
  r.V_valid = r.min_cos_alpha >= cos_alpha_floor;
  r.L2H = integrate_scalar(grid, s.geometry, h2);
  r.L1H = integrate_scalar(grid, s.geometry, h1);
  r.cumL1H = prev ? prev->cumL1H + 0.5 * (r.t - prev->t) * (prev->L1H + r.L1H) : 0.0;
  return r;
}

// ---- checks ----

struct DriftResult {
  bool applicable = true;
  double drift = 0.0;
  // max |symp_area - symp_area(0)| / area(0); defined even when the
  // symplectic area vanishes (closed surfaces in C2)
  double drift_per_area = 0.0;
  bool ok = true;
};

inline DriftResult check_symplectic_area(const Series& series, double threshold = 1e-4) {
  DriftResult d;
  if (series.size() < 2) throw Error(ErrorKind::Config, "symplectic drift needs at least two records");
  const double s0 = series.front().symp_area;
  for (const auto& r : series)
    d.drift_per_area = std::max(d.drift_per_area, std::abs(r.symp_area - s0) / series.front().area);
  if (std::abs(s0) < 1e-14 * std::max(1.0, series.front().area)) {
    d.applicable = false;
    return d;
  }
  for (const auto& r : series) d.drift = std::max(d.drift, std::abs(r.symp_area - s0) / std::abs(s0));
  d.ok = d.drift < threshold;
  return d;
}

struct DecayResult {
  double C0 = 0.0;
  std::optional<double> fitted_rate;
  bool bound_ok = true;
  // Worst V(t) / (C0 exp(-R t)) over the run.
  double worst_ratio = 0.0;
  bool nonincreasing = true;
};

inline DecayResult check_angle_decay(const Series& series, double R, double slack = check_slack) {
  DecayResult d;
  if (series.empty()) return d;
  const double t0 = series.front().t;
  d.C0 = series.front().V;
  if (!(series.front().min_cos_alpha > 0.0))
    throw Error(ErrorKind::NotApplicable, "angle decay needs cos(alpha) > 0 initially");
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& r = series[k];
    const double bound = d.C0 * std::exp(-R * (r.t - t0));
    if (!r.V_valid) d.bound_ok = false;
    if (bound > 0.0) d.worst_ratio = std::max(d.worst_ratio, r.V / bound);
    if (r.V > bound * (1.0 + slack) + 1e-12) d.bound_ok = false;
    if (k > 0 && r.V > series[k - 1].V + 1e-6 * std::max(d.C0, 1e-12)) d.nonincreasing = false;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& r : series) {
    if (!(r.V > 1e-12)) continue;
    const double x = r.t - t0, y = std::log(r.V);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m >= 2) {
    const double den = m * sxx - sx * sx;
    if (den > 0.0) d.fitted_rate = -(m * sxy - sx * sy) / den;
  }
  return d;
}

namespace detail {

// Trapezoid integral of field(record) over [a, b] on the record grid, with
// linear interpolation at the window ends.
template <class Field>
double window_integral(const Series& s, double a, double b, Field f) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const double ta = s[k].t, tb = s[k + 1].t;
    const double lo = std::max(a, ta), hi = std::min(b, tb);
    if (!(hi > lo)) continue;
    const double fa = f(s[k]), fb = f(s[k + 1]);
    auto lerp = [&](double t) { return tb > ta ? fa + (fb - fa) * (t - ta) / (tb - ta) : fa; };
    acc += 0.5 * (hi - lo) * (lerp(lo) + lerp(hi));
  }
  return acc;
}

}  // namespace detail

struct WindowResult {
  bool ok = true;
  int windows = 0;
  double worst_ratio = 0.0;
};

// Every window [t_k, t_k + 1] starting at a record time, truncated at the end
// of the run.
inline WindowResult check_l2_unit_intervals(const Series& series, double R, double slack = check_slack) {
  WindowResult w;
  if (series.size() < 2) return w;
  const double t0 = series.front().t, T = series.back().t, C0 = series.front().V;
  for (const auto& r : series) {
    if (r.t >= T) break;
    const double lhs =
        detail::window_integral(series, r.t, std::min(r.t + 1.0, T), [](const DiagnosticsRecord& x) { return x.L2H; });
    const double rhs = C0 * std::exp(-R * (r.t - t0));
    ++w.windows;
    if (rhs > 0.0) w.worst_ratio = std::max(w.worst_ratio, lhs / rhs);
    if (lhs > rhs * (1.0 + slack) + 1e-14) w.ok = false;
  }
  return w;
}

struct L1Result {
  bool applicable = true;
  double bound = 0.0;
  double value = 0.0;
  bool ok = true;
};

inline double l1_bound_value(double C0, double area0, double R) {
  return std::sqrt(C0) * std::sqrt(area0) / (1.0 - std::exp(-0.5 * R));
}

inline L1Result check_l1_bound(const Series& series, double R, double slack = check_slack) {
  L1Result l;
  if (!(R > 0.0) || series.empty()) {
    l.applicable = false;
    return l;
  }
  l.bound = l1_bound_value(series.front().V, series.front().area, R);
  l.value = series.back().cumL1H;
  l.ok = l.value <= l.bound * (1.0 + slack) + 1e-14;
  return l;
}

// Cauchy-Schwarz chain over integer windows [k, k+1]:
//   Area0^{1/2} sum_k (int int |H|^2)^{1/2} >= cumL1H(T) - slack * bound.
inline bool check_l1_chain(const Series& series, double R, double slack = check_slack) {
  if (series.size() < 2) return true;
  const double t0 = series.front().t, T = series.back().t;
  double sum = 0.0;
  for (double a = t0; a < T; a += 1.0)
    sum += std::sqrt(
        detail::window_integral(series, a, std::min(a + 1.0, T), [](const DiagnosticsRecord& x) { return x.L2H; }));
  const double lhs = std::sqrt(series.front().area) * sum;
  const double b = R > 0.0 ? l1_bound_value(series.front().V, series.front().area, R) : 0.0;
  return lhs >= series.back().cumL1H - slack * b - 1e-14;
}

struct SeriesSummary {
  double C0 = 0.0;
  std::optional<double> fitted_decay_rate;
  bool decay_bound_ok = true;
  double decay_worst_ratio = 0.0;
  bool V_nonincreasing = true;
  std::optional<double> symp_drift;
  double symp_drift_per_area = 0.0;
  std::optional<double> l1_bound_value;
  std::optional<bool> l1_bound_ok;
  bool l2_unit_interval_ok = true;
  double l2_worst_ratio = 0.0;
  bool l1_chain_ok = true;
  double min_cos_alpha = 1.0;
  // record-to-record min cos(alpha) never drops by more than 1e-5
  bool min_cos_nondecreasing = true;
  double max_supA = 0.0;
  double min_nablaJ_margin = 0.0;
};

inline SeriesSummary summarize(const Series& series, double R) {
  SeriesSummary s;
  if (series.empty()) return s;
  if (series.front().min_cos_alpha > 0.0) {
    const auto d = check_angle_decay(series, R);
    s.C0 = d.C0;
    s.fitted_decay_rate = d.fitted_rate;
    s.decay_bound_ok = d.bound_ok;
    s.decay_worst_ratio = d.worst_ratio;
    s.V_nonincreasing = d.nonincreasing;
  } else {
    s.C0 = series.front().V;
    s.decay_bound_ok = false;
  }
  if (series.size() >= 2) {
    const auto sd = check_symplectic_area(series);
    if (sd.applicable) s.symp_drift = sd.drift;
    s.symp_drift_per_area = sd.drift_per_area;
  }
  const auto l1 = check_l1_bound(series, R);
  if (l1.applicable) {
    s.l1_bound_value = l1.bound;
    s.l1_bound_ok = l1.ok;
  }
  const auto w = check_l2_unit_intervals(series, R);
  s.l2_unit_interval_ok = w.ok;
  s.l2_worst_ratio = w.worst_ratio;
  s.l1_chain_ok = check_l1_chain(series, R);
  s.min_cos_alpha = infinity;
  s.min_nablaJ_margin = infinity;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& r = series[k];
    if (k > 0 && r.min_cos_alpha < series[k - 1].min_cos_alpha - 1e-5) s.min_cos_nondecreasing = false;
    s.min_cos_alpha = std::min(s.min_cos_alpha, r.min_cos_alpha);
    s.max_supA = std::max(s.max_supA, r.supA);
    s.min_nablaJ_margin = std::min(s.min_nablaJ_margin, r.nablaJ_margin);
  }
  return s;
}

// ---- Kähler-angle evolution residual ----

struct ResidualResult {
  ScalarField field;  // zero on excluded pole rows
  double max_norm = 0.0;
  double l2_norm = 0.0;
};

// r = [d_t cos(alpha) - Laplace cos(alpha)] - [nablaJ_sq cos(alpha) + kappa sin^2(alpha) cos(alpha)]
// at the middle state, with d_t the second-order difference on the possibly
// nonuniform time levels and kappa the curvature coefficient.
inline ResidualResult evolution_residual(const FlowState& prev, const FlowState& cur, const FlowState& next,
                                         double kappa) {
  if (prev.redistributed || cur.redistributed || next.redistributed)
    throw Error(ErrorKind::NotApplicable, "evolution residual needs a trajectory without redistribution");
  if (prev.grid.size() != cur.grid.size() || next.grid.size() != cur.grid.size())
    throw Error(ErrorKind::Config, "residual states have different grids");
  const double h1 = cur.t - prev.t, h2 = next.t - cur.t;
  if (!(h1 > 0.0 && h2 > 0.0)) throw Error(ErrorKind::Config, "residual states must have increasing times");
  const auto cp = cos_alpha_field(prev), cc = cos_alpha_field(cur), cn = cos_alpha_field(next);
  const auto lap = laplace_beltrami(cur.grid, cur.geometry, cc);
  ResidualResult out;
  out.field.assign(cc.size(), 0.0);
  for_interior_nodes(cur.grid, [&](std::size_t k) {
    const double dt = (h1 * h1 * cn[k] - h2 * h2 * cp[k] - (h1 * h1 - h2 * h2) * cc[k]) / (h1 * h2 * (h1 + h2));
    const double c = cc[k];
    const double rhs = cur.geometry[k].nablaJ_sq * c + kappa * (1.0 - c * c) * c;
    out.field[k] = dt - lap[k] - rhs;
    out.max_norm = std::max(out.max_norm, std::abs(out.field[k]));
  });
  ScalarField sq(out.field.size());
  for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = out.field[k] * out.field[k];
  out.l2_norm = std::sqrt(std::max(0.0, integrate_scalar(cur.grid, cur.geometry, sq)));
  return out;
}

}  // namespace kflow
