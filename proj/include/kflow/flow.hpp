#pragma once

// Mean curvature flow dF/dt = H with explicit RK4 stepping.

#include "kflow/diagnostics.hpp"

#include <functional>
#include <map>

namespace kflow {

struct Redistribution {
  int every = 0;  // 0 = off
  double strength = 0.0;
  bool enabled() const { return every > 0 && strength != 0.0; }
};

struct FlowConfig {
  double cfl_factor = 0.2;
  double t_end = 1.0;
  int snapshot_stride = 100;
  Redistribution redistribution;
  // Threshold on sup|A|; unset means 1e3 / sqrt(initial area).
  std::optional<double> blowup_threshold;
  double converged_H_tol = 1e-4;
  int diagnostics_stride = 1;
  bool polar_filter = true;
  // Longitudinal stencil eigenvalue allowed by the filter, in units of the
  // latitude-direction maximum; larger keeps more modes and shrinks dt.
  double polar_filter_ratio = 1.0;
  // Evaluate the Kähler-angle residual at every recorded interior state.
  bool compute_residual = false;
  GeometryOptions geometry;

  void validate() const {
    if (!(cfl_factor > 0.0 && cfl_factor <= 0.5)) throw Error(ErrorKind::Config, "cfl_factor must lie in (0, 0.5]");
    if (snapshot_stride < 1 || diagnostics_stride < 1) throw Error(ErrorKind::Config, "strides must be at least 1");
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw Error(ErrorKind::Config, "t_end must be finite and >= 0");
    if (redistribution.every < 0) throw Error(ErrorKind::Config, "redistribution interval must be >= 0");
    if (blowup_threshold && !(*blowup_threshold > 0.0))
      throw Error(ErrorKind::Config, "blowup_threshold must be positive");
    if (!(converged_H_tol >= 0.0)) throw Error(ErrorKind::Config, "converged_H_tol must be >= 0");
    if (!(polar_filter_ratio >= 1.0) || !std::isfinite(polar_filter_ratio))
      throw Error(ErrorKind::Config, "polar_filter_ratio must be finite and >= 1");
  }
};

enum class StopReason { ReachedTEnd, Converged, BlowupFlag, DegenerateGrid, Aborted };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::ReachedTEnd: return "reached-t-end";
    case StopReason::Converged: return "converged";
    case StopReason::BlowupFlag: return "blowup-flag";
    case StopReason::DegenerateGrid: return "degenerate-grid";
    case StopReason::Aborted: return "aborted";
  }
  return "unknown";
}

inline std::vector<Vec4> velocity_field(const FlowState& s) {
  std::vector<Vec4> v(s.grid.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = s.geometry[k].H;
  return v;
}

// Longitudinal damping of stiff modes on sphere rows near the poles, applied
// to velocity components expressed in the chart of the row's first node.
class PolarFilter {
 public:
  PolarFilter() = default;
  explicit PolarFilter(const SurfaceGrid& grid, double ratio = 1.0) : nu_(grid.nu) {
    const auto gains = polar_damping(grid, ratio);
    row_kernel_.assign(grid.nv, -1);
    std::map<std::vector<double>, int> seen;
    for (int j = 0; j < grid.nv; ++j) {
      if (!damped_row(gains[j])) continue;
      auto it = seen.find(gains[j]);
      if (it == seen.end()) {
        it = seen.emplace(gains[j], static_cast<int>(kernels_.size())).first;
        kernels_.push_back(circulant(gains[j]));
      }
      row_kernel_[j] = it->second;
    }
  }

  bool active_row(int j) const { return !row_kernel_.empty() && row_kernel_[j] >= 0; }

  void apply(const AmbientModel& model, const SurfaceGrid& grid, std::vector<Vec4>& vel) const {
    if (kernels_.empty()) return;
    Eigen::Matrix<double, 4, Eigen::Dynamic> row(4, nu_), filtered(4, nu_);
    std::vector<ChartPoint> base(nu_);
    for (int j = 0; j < grid.nv; ++j) {
      if (!active_row(j)) continue;
      const int chart = grid.at(0, j).chart;
      for (int i = 0; i < nu_; ++i) {
        const ChartPoint& p = grid.at(i, j);
        row.col(i) = model.push_forward(p, vel[grid.index(i, j)], chart);
        base[i] = model.to_chart(p, chart);
      }
      filtered.noalias() = row * kernels_[row_kernel_[j]];
      for (int i = 0; i < nu_; ++i) {
        const ChartPoint& p = grid.at(i, j);
        vel[grid.index(i, j)] = model.push_forward(base[i], filtered.col(i), p.chart);
      }
    }
  }

 private:
  Eigen::MatrixXd circulant(const std::vector<double>& gains) const {
    const int half = nu_ / 2;
    std::vector<double> c(nu_);
    for (int d = 0; d < nu_; ++d) {
      double s = gains[0];
      for (int k = 1; k <= half; ++k) s += (k == half ? 1.0 : 2.0) * gains[k] * std::cos(two_pi * k * d / nu_);
      c[d] = s / nu_;
    }
    Eigen::MatrixXd P(nu_, nu_);
    for (int m = 0; m < nu_; ++m)
      for (int i = 0; i < nu_; ++i) P(m, i) = c[((i - m) % nu_ + nu_) % nu_];
    return P;
  }

  int nu_ = 0;
  std::vector<int> row_kernel_;
  std::vector<Eigen::MatrixXd> kernels_;
};

// Minimum induced grid spacing, with filtered rows using their effective
// longitudinal spacing.
inline double min_spacing(const FlowState& s, bool polar_filter = true, double ratio = 1.0) {
  const auto& grid = s.grid;
  const auto hu = polar_filter ? effective_u_spacing(grid, ratio) : std::vector<double>(grid.nv, grid.du());
  double h = infinity;
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) {
      const auto& g = s.geometry[grid.index(i, j)].g;
      h = std::min({h, std::sqrt(g(0, 0)) * hu[j], std::sqrt(g(1, 1)) * grid.dv()});
    }
  return h;
}

inline double stable_time_step(const FlowState& s, const FlowConfig& cfg) {
  const double h = min_spacing(s, cfg.polar_filter, cfg.polar_filter_ratio);
  return cfg.cfl_factor * h * h;
}

namespace detail {

inline SurfaceGrid displaced(const SurfaceGrid& grid, const std::vector<Vec4>& k, double scale) {
  SurfaceGrid out = grid;
  for (std::size_t n = 0; n < out.size(); ++n) out.nodes[n].x += scale * k[n];
  return out;
}

inline std::vector<Vec4> stage_velocity(const AmbientModel& model, const SurfaceGrid& grid, std::vector<Vec4> v,
                                        const PolarFilter* filter) {
  if (filter) filter->apply(model, grid, v);
  return v;
}

}  // namespace detail

// One RK4 step of length dt (chart ids frozen within the step, settled after).
inline FlowState step_with_dt(const AmbientModel& model, const FlowState& s, double dt, const FlowConfig& cfg,
                              const PolarFilter* filter = nullptr) {
  const auto& g0 = s.grid;
  const auto k1 = detail::stage_velocity(model, g0, velocity_field(s), filter);
  const auto g1 = detail::displaced(g0, k1, 0.5 * dt);
  const auto k2 = detail::stage_velocity(model, g1, mean_curvature_field(model, g1, cfg.geometry), filter);
  const auto g2 = detail::displaced(g0, k2, 0.5 * dt);
  const auto k3 = detail::stage_velocity(model, g2, mean_curvature_field(model, g2, cfg.geometry), filter);
  const auto g3 = detail::displaced(g0, k3, dt);
  const auto k4 = detail::stage_velocity(model, g3, mean_curvature_field(model, g3, cfg.geometry), filter);
  SurfaceGrid out = g0;
  for (std::size_t n = 0; n < out.size(); ++n) {
    out.nodes[n].x += dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
    if (!out.nodes[n].x.allFinite()) throw Error(ErrorKind::GeodesicEscape, "node coordinates became non-finite");
    out.nodes[n] = model.settle(out.nodes[n]);
    if (!model.valid(out.nodes[n])) throw Error(ErrorKind::GeodesicEscape, "node left every chart");
  }
  FlowState next;
  next.geometry = compute_geometry(model, out, cfg.geometry);
  next.grid = std::move(out);
  next.t = s.t + dt;
  next.step_index = s.step_index + 1;
  next.redistributed = s.redistributed;
  return next;
}

inline FlowState step(const AmbientModel& model, const FlowState& s, const FlowConfig& cfg) {
  std::optional<PolarFilter> filter;
  if (cfg.polar_filter && s.grid.topology == Topology::Sphere) filter.emplace(s.grid, cfg.polar_filter_ratio);
  double dt = stable_time_step(s, cfg);
  if (s.t + dt > cfg.t_end) dt = cfg.t_end - s.t;
  if (!(dt > 0.0)) {
    FlowState n = s;
    ++n.step_index;
    return n;
  }
  return step_with_dt(model, s, dt, cfg, filter ? &*filter : nullptr);
}

// Tangential projection of the parameter-space umbrella displacement.
inline FlowState redistribute(const AmbientModel& model, const FlowState& s, double lambda,
                              const GeometryOptions& opt = {}) {
  if (lambda == 0.0) return s;
  const auto& grid = s.grid;
  SurfaceGrid out = grid;
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) {
      const std::size_t k = grid.index(i, j);
      const ChartPoint& p = grid.at(i, j);
      Vec4 lap = -4.0 * p.x;
      lap += detail::stencil_point(model, grid, p.chart, i + 1, j);
      lap += detail::stencil_point(model, grid, p.chart, i - 1, j);
      lap += detail::stencil_point(model, grid, p.chart, i, j + 1);
      lap += detail::stencil_point(model, grid, p.chart, i, j - 1);
      const auto& ng = s.geometry[k];
      const Vec2 rhs(ng.d.Fu.dot(ng.metric * lap), ng.d.Fv.dot(ng.metric * lap));
      const Vec2 c = ng.ginv * rhs;
      out.nodes[k].x += lambda * (c[0] * ng.d.Fu + c[1] * ng.d.Fv);
      out.nodes[k] = model.settle(out.nodes[k]);
    }
  FlowState n;
  n.geometry = compute_geometry(model, out, opt);
  n.grid = std::move(out);
  n.t = s.t;
  n.step_index = s.step_index;
  n.redistributed = true;
  return n;
}

struct Snapshot {
  double t = 0.0;
  long step_index = 0;
  SurfaceGrid grid;
};

struct RunResult {
  Series series;
  std::vector<Snapshot> snapshots;
  StopReason stop = StopReason::ReachedTEnd;
  std::string stop_detail;
  double blowup_threshold = 0.0;
  // max |1 - cos(alpha)| over interior nodes of the final state
  double holomorphicity_gap = 0.0;
  double max_H_final = 0.0;
  double final_t = 0.0;
  long steps = 0;
  std::optional<FlowState> final_state;
};

struct RunHooks {
  std::function<bool()> should_abort;
  std::function<void(const FlowState&)> on_state;
};

inline double max_H(const FlowState& s) {
  double m = 0.0;
  for_interior_nodes(s.grid, [&](std::size_t k) { m = std::max(m, std::sqrt(s.geometry[k].H_sq)); });
  return m;
}

inline double holomorphicity_gap(const FlowState& s) {
  double m = 0.0;
  for_interior_nodes(s.grid, [&](std::size_t k) { m = std::max(m, std::abs(1.0 - s.geometry[k].cos_alpha)); });
  return m;
}

inline double sup_A(const FlowState& s) {
  double m = 0.0;
  for_interior_nodes(s.grid, [&](std::size_t k) { m = std::max(m, std::sqrt(s.geometry[k].A_sq)); });
  return m;
}

// Curvature coefficient of the Kähler-angle evolution equation for a model.
inline double kahler_angle_coefficient(const AmbientModel& model) { return 0.25 * model.scalar_curvature(); }

inline RunResult run(const AmbientModel& model, SurfaceGrid initial, const FlowConfig& cfg,
                     const RunHooks& hooks = {}) {
  cfg.validate();
  RunResult res;
  std::optional<FlowState> prev;
  FlowState cur;
  try {
    cur = make_state(model, std::move(initial), 0.0, cfg.geometry);
  } catch (const Error& e) {
    res.stop = StopReason::DegenerateGrid;
    res.stop_detail = e.what();
    return res;
  }
  const double area0 = area(cur.grid, cur.geometry);
  res.blowup_threshold = cfg.blowup_threshold.value_or(1e3 / std::sqrt(area0));
  std::optional<PolarFilter> filter;
  if (cfg.polar_filter && cur.grid.topology == Topology::Sphere) filter.emplace(cur.grid, cfg.polar_filter_ratio);
  const bool residual = cfg.compute_residual && !cfg.redistribution.enabled();
  const double kappa = kahler_angle_coefficient(model);

  // Index in the series of the record taken at the current state, if any.
  std::optional<std::size_t> cur_record;
  auto take_record = [&](const FlowState& s) {
    const DiagnosticsRecord* p = res.series.empty() ? nullptr : &res.series.back();
    res.series.push_back(record(s, p));
    cur_record = res.series.size() - 1;
  };
  auto take_snapshot = [&](const FlowState& s) { res.snapshots.push_back(Snapshot{s.t, s.step_index, s.grid}); };

  take_record(cur);
  take_snapshot(cur);
  if (hooks.on_state) hooks.on_state(cur);

  auto finish = [&](StopReason r) {
    res.stop = r;
    if (!cur_record) take_record(cur);
    if (res.snapshots.back().step_index != cur.step_index) take_snapshot(cur);
    res.holomorphicity_gap = holomorphicity_gap(cur);
    res.max_H_final = max_H(cur);
    res.final_t = cur.t;
    res.steps = cur.step_index;
    res.final_state = std::move(cur);
  };

  while (true) {
    if (sup_A(cur) > res.blowup_threshold) {
      finish(StopReason::BlowupFlag);
      break;
    }
    if (max_H(cur) < cfg.converged_H_tol) {
      finish(StopReason::Converged);
      break;
    }
    if (cur.t >= cfg.t_end) {
      finish(StopReason::ReachedTEnd);
      break;
    }
    if (hooks.should_abort && hooks.should_abort()) {
      finish(StopReason::Aborted);
      break;
    }
    FlowState next;
    try {
      double dt = stable_time_step(cur, cfg);
      if (cur.t + dt > cfg.t_end) dt = cfg.t_end - cur.t;
      next = step_with_dt(model, cur, dt, cfg, filter ? &*filter : nullptr);
      if (cfg.redistribution.enabled() && next.step_index % cfg.redistribution.every == 0)
        next = redistribute(model, next, cfg.redistribution.strength, cfg.geometry);
    } catch (const Error& e) {
      res.stop_detail = e.what();
      finish(StopReason::DegenerateGrid);
      break;
    }
    if (residual && prev && cur_record && *cur_record + 1 == res.series.size() &&
        res.series[*cur_record].step_index == cur.step_index)
      res.series[*cur_record].max_residual = evolution_residual(*prev, cur, next, kappa).max_norm;
    prev = std::move(cur);
    cur = std::move(next);
    cur_record.reset();
    if (cur.step_index % cfg.diagnostics_stride == 0) take_record(cur);
    if (cur.step_index % cfg.snapshot_stride == 0) take_snapshot(cur);
    if (hooks.on_state) hooks.on_state(cur);
  }
  return res;
}

}  // namespace kflow
