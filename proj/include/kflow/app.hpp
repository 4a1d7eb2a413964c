#pragma once

// Command implementations behind the kflow executable.

#include "kflow/config.hpp"
#include "kflow/verify.hpp"

#include <cstdlib>
#include <iostream>

namespace kflow::app {

namespace fs = std::filesystem;

enum ExitCode { ok = 0, config_error = 1, blowup = 2, degenerate = 3 };

inline fs::path output_root() {
  const char* env = std::getenv("KFLOW_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path();
}

inline fs::path resolve_dir(const std::string& dir) {
  const fs::path p(dir);
  return p.is_absolute() || output_root().empty() ? p : output_root() / p;
}

inline int exit_code_for(StopReason r) {
  switch (r) {
    case StopReason::BlowupFlag: return blowup;
    case StopReason::DegenerateGrid: return degenerate;
    default: return ok;
  }
}

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::DegenerateImmersion:
    case ErrorKind::GeodesicEscape:
    case ErrorKind::ChartDomain: return degenerate;
    default: return config_error;
  }
}

inline void write_error(const fs::path& dir, const std::string& kind, const std::string& message, int code) {
  try {
    io::write_json(dir / "error.json", json{{"error", kind}, {"message", message}, {"exit_code", code}});
  } catch (const std::exception&) {
    // nothing sensible left to report to
  }
}

// ---- run ----

struct RunArtifacts {
  RunResult result;
  SeriesSummary summary;
  std::optional<CalibrationResult> calibration;
  std::optional<MonitorReport> monitor;
  std::string density_error;
  json summary_json;
  int exit_code = ok;
};

inline json summary_document(const AmbientModel& model, const RunConfig& cfg, const RunArtifacts& a) {
  const auto& r = a.result;
  const auto& s = a.summary;
  double h2 = 1.0;
  for (const auto& rec : r.series) h2 = std::max(h2, rec.maxH * rec.maxH);
  const bool symp_ok = s.symp_drift ? *s.symp_drift < cfg.diagnostics.symp_drift_threshold
                                    : s.symp_drift_per_area < cfg.diagnostics.symp_drift_threshold;
  json checks{{"symplectic_area_ok", symp_ok},
              {"symplectic_preserved", s.min_cos_alpha > 0.0},
              {"min_cos_nondecreasing", s.min_cos_nondecreasing},
              {"decay_bound_ok", s.decay_bound_ok},
              {"l2_unit_interval_ok", s.l2_unit_interval_ok},
              {"l1_bound_ok", io::opt_json(s.l1_bound_ok)},
              {"nablaJ_bound_ok", s.min_nablaJ_margin >= -1e-12 * h2}};
  json density = nullptr;
  if (cfg.density.monitor) {
    density = json{{"eps0", cfg.density.eps0}, {"cutoff_radius", cfg.density.cutoff_radius}};
    if (a.calibration) {
      density["r0"] = a.calibration->r0;
      density["initial_max_phi"] = a.calibration->max_phi;
      density["limit_ok"] = a.calibration->limit_ok;
    }
    if (a.monitor) density["monitor"] = io::monitor_json(*a.monitor);
    if (!a.density_error.empty()) density["error"] = a.density_error;
  }
  return json{{"stop_reason", to_string(r.stop)},
              {"stop_detail", r.stop_detail},
              {"steps", r.steps},
              {"final_t", r.final_t},
              {"holomorphicity_gap", r.holomorphicity_gap},
              {"max_H_final", r.max_H_final},
              {"blowup_threshold", r.blowup_threshold},
              {"R", model.scalar_curvature()},
              {"kahler_angle_coefficient", kahler_angle_coefficient(model)},
              {"series", io::summary_json(s)},
              {"checks", checks},
              {"density", density}};
}

// Runs the flow and writes the run directory.
inline RunArtifacts execute_run(const RunConfig& cfg, const fs::path& dir, const RunHooks& hooks = {}) {
  const AmbientModel model = make_model(cfg);
  const SurfaceGrid initial = make_surface(model, cfg);
  fs::create_directories(dir / "snapshots");
  io::write_json(dir / "config.resolved.json", run_config_json(cfg));

  RunArtifacts a;
  a.result = run(model, initial, cfg.flow, hooks);
  a.summary = summarize(a.result.series, model.scalar_curvature());
  a.exit_code = exit_code_for(a.result.stop);

  io::write_text(dir / "series.csv", io::series_csv(a.result.series));
  for (const auto& snap : a.result.snapshots) io::write_snapshot(dir / "snapshots" / io::snapshot_name(snap), snap);

  if (cfg.density.monitor) {
    try {
      CalibrationOptions co;
      co.cutoff_radius = cfg.density.cutoff_radius;
      co.random_samples = cfg.density.random_samples;
      co.seed = cfg.seed;
      a.calibration = calibrate_r0(model, make_state(model, initial, 0.0, cfg.flow.geometry), cfg.density.eps0, co);
      MonitorOptions mo;
      mo.eps0 = cfg.density.eps0;
      mo.cutoff_radius = cfg.density.cutoff_radius;
      mo.random_samples = cfg.density.random_samples;
      mo.max_node_queries = std::size_t(cfg.density.max_node_queries);
      mo.seed = cfg.seed;
      a.monitor = monitor_regularity(model, a.result, initial, a.calibration->r0, mo);
      io::write_text(dir / "monitor.csv", io::monitor_csv(*a.monitor));
      io::write_json(dir / "monitor.json", io::monitor_json(*a.monitor));
    } catch (const Error& e) {
      a.density_error = e.what();
    }
  }
  a.summary_json = summary_document(model, cfg, a);
  io::write_json(dir / "summary.json", a.summary_json);
  return a;
}

// Output directory named in a raw config, if it can be read at all.
inline fs::path raw_output_dir(const fs::path& config_path, const std::string& fallback) {
  try {
    const json j = io::read_json(config_path);
    if (j.is_object() && j.contains("output_dir") && j["output_dir"].is_string())
      return resolve_dir(j["output_dir"].get<std::string>());
  } catch (const std::exception&) {
  }
  return resolve_dir(fallback);
}

inline int cmd_run(const fs::path& config_path, std::ostream& log = std::cout) {
  RunConfig cfg;
  fs::path dir = raw_output_dir(config_path, ".");
  try {
    cfg = parse_run_config(io::read_json(config_path));
  } catch (const Error& e) {
    write_error(dir, to_string(e.kind()), e.what(), config_error);
    log << "error: " << e.what() << "\n";
    return config_error;
  }
  dir = resolve_dir(cfg.output_dir);
  try {
    const auto a = execute_run(cfg, dir);
    log << "stop: " << to_string(a.result.stop) << " at t = " << a.result.final_t << " after " << a.result.steps
        << " steps; outputs in " << dir.string() << "\n";
    if (a.exit_code != ok) write_error(dir, to_string(a.result.stop), a.result.stop_detail, a.exit_code);
    return a.exit_code;
  } catch (const Error& e) {
    const int code = exit_code_for(e);
    write_error(dir, to_string(e.kind()), e.what(), code);
    log << "error: " << e.what() << "\n";
    return code;
  } catch (const std::exception& e) {
    write_error(dir, "internal", e.what(), config_error);
    log << "error: " << e.what() << "\n";
    return config_error;
  }
}

// ---- verify ----

inline int cmd_verify(VerifyLevel level, bool flip_omega, std::ostream& log = std::cout) {
  VerifyOptions opt;
  opt.level = level;
  opt.omega_sign = flip_omega ? -1.0 : 1.0;
  const auto rep = run_verify(opt);
  log << rep.table();
  log << "\n" << (rep.all_passed() ? "all checks passed" : "some checks FAILED") << " (" << rep.seconds << " s)\n";
  return rep.all_passed() ? ok : config_error;
}

// ---- sweep ----

struct SweepRow {
  double delta = 0.0;
  double C0 = 0.0;
  std::string stop = "error";
  bool converged = false;
  double final_gap = 0.0;
  double min_cos_alpha = 0.0;
  double max_phi = 0.0;
  int n_exceedances = 0;
  double supA_max = 0.0;
  bool decay_bound_ok = false;
  double r0 = 0.0;
  double seconds = 0.0;
  std::string error;
};

inline std::string delta_dir_name(double d) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "delta_%.6g", d);
  return buf;
}

struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::optional<double> largest_clean_delta;  // converged with no exceedance
  bool C0_monotone = true;
  int exit_code = ok;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "delta,C0,stop_reason,converged,final_gap,min_cos_alpha,max_phi,n_exceedances,supA_max,decay_bound_ok,r0,runtime_s,"
      "error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    out += io::fmt(r.delta) + "," + io::fmt(r.C0) + "," + r.stop + "," + (r.converged ? "1" : "0") + "," +
           io::fmt(r.final_gap) + "," + io::fmt(r.min_cos_alpha) + "," + io::fmt(r.max_phi) + "," +
           std::to_string(r.n_exceedances) + "," + io::fmt(r.supA_max) + "," + (r.decay_bound_ok ? "1" : "0") + "," +
           io::fmt(r.r0) + "," + io::fmt(r.seconds) + "," + err + "\n";
  }
  return out;
}

inline SweepOutcome execute_sweep(const SweepSpec& spec, const fs::path& dir, std::ostream& log = std::cout) {
  SweepOutcome out;
  fs::create_directories(dir);
  io::write_json(dir / "sweep.resolved.json", sweep_spec_json(spec));
  for (double delta : spec.deltas) {
    RunConfig rc = spec.base;
    rc.surface.delta = delta;
    rc.density.monitor = true;
    rc.output_dir = (dir / delta_dir_name(delta)).string();
    SweepRow row;
    row.delta = delta;
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    RunHooks hooks;
    hooks.should_abort = [&] { return elapsed() > spec.time_budget_s; };
    try {
      const auto a = execute_run(rc, rc.output_dir, hooks);
      row.C0 = a.summary.C0;
      row.stop = to_string(a.result.stop);
      row.final_gap = a.result.holomorphicity_gap;
      row.converged = a.result.stop == StopReason::Converged && row.final_gap < spec.gap_tol;
      row.min_cos_alpha = a.summary.min_cos_alpha;
      row.supA_max = a.summary.max_supA;
      row.decay_bound_ok = a.summary.decay_bound_ok;
      if (a.calibration) row.r0 = a.calibration->r0;
      if (a.monitor) {
        row.max_phi = a.monitor->max_phi;
        row.n_exceedances = a.monitor->n_exceedances;
      }
      row.error = a.density_error;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.seconds = elapsed();
    log << "delta " << delta << ": " << row.stop << (row.converged ? " (converged)" : "") << ", C0 " << row.C0
        << ", gap " << row.final_gap << ", max phi " << row.max_phi << ", " << row.seconds << " s\n";
    out.rows.push_back(row);
  }
  for (std::size_t k = 1; k < out.rows.size(); ++k)
    if (out.rows[k].C0 < out.rows[k - 1].C0 * (1.0 - 1e-9) - 1e-14) out.C0_monotone = false;
  bool any = false;
  for (const auto& r : out.rows) {
    any = any || r.converged;
    if (r.converged && r.n_exceedances == 0 && r.error.empty()) out.largest_clean_delta = r.delta;
  }
  out.exit_code = any ? ok : config_error;

  io::write_text(dir / "sweep_summary.csv", sweep_csv(out.rows));
  const double r0 = out.rows.empty() ? 0.0 : out.rows.front().r0;
  io::write_json(dir / "sweep_summary.json",
                 json{{"largest_converged_delta_without_exceedance", io::opt_json(out.largest_clean_delta)},
                      {"C0_nondecreasing", out.C0_monotone},
                      {"r0", r0},
                      {"eps0", spec.base.density.eps0},
                      {"r0_pow6", std::pow(r0, 6)},
                      {"gap_tol", spec.gap_tol},
                      {"any_converged", any}});
  return out;
}

inline int cmd_sweep(const fs::path& spec_path, std::ostream& log = std::cout) {
  SweepSpec spec;
  fs::path dir = raw_output_dir(spec_path, ".");
  try {
    spec = parse_sweep_spec(io::read_json(spec_path));
  } catch (const Error& e) {
    write_error(dir, to_string(e.kind()), e.what(), config_error);
    log << "error: " << e.what() << "\n";
    return config_error;
  }
  dir = resolve_dir(spec.output_dir);
  try {
    const auto o = execute_sweep(spec, dir, log);
    if (o.largest_clean_delta)
      log << "largest converged delta without density exceedance: " << *o.largest_clean_delta << "\n";
    return o.exit_code;
  } catch (const Error& e) {
    write_error(dir, to_string(e.kind()), e.what(), config_error);
    log << "error: " << e.what() << "\n";
    return config_error;
  }
}

// ---- density ----

struct DensityRequest {
  ChartPoint x0;
  double t0 = 0.0;
  double r = 0.1;  // kernel scale: evaluates Phi(x0, t0, t0 - r^2)
  std::optional<double> cutoff_radius;
};

inline std::vector<DensityRequest> parse_density_queries(const json& j) {
  detail::StrictObject o(j, "queries");
  const json list = o.require<json>("queries");
  o.finish();
  if (!list.is_array()) throw Error(ErrorKind::Config, "queries.queries: expected an array");
  std::vector<DensityRequest> out;
  for (std::size_t k = 0; k < list.size(); ++k) {
    detail::StrictObject q(list[k], "queries[" + std::to_string(k) + "]");
    DensityRequest r;
    r.x0.chart = q.get("chart", 0);
    r.x0.x = detail::vec4_or(q, "x0", Vec4::Zero());
    r.t0 = q.require<double>("t0");
    r.r = q.require<double>("r");
    if (q.has("cutoff_radius")) r.cutoff_radius = q.get("cutoff_radius", 0.0);
    q.finish();
    if (!(r.r > 0.0)) throw Error(ErrorKind::Config, "queries: r must be positive");
    out.push_back(r);
  }
  return out;
}

inline int cmd_density(const fs::path& run_dir, const std::optional<fs::path>& query_path, std::ostream& log = std::cout) {
  try {
    const RunConfig cfg = parse_run_config(io::read_json(run_dir / "config.resolved.json"));
    const AmbientModel model = make_model(cfg);
    const auto snaps = io::read_snapshots(run_dir / "snapshots");

    if (!query_path) {
      RunResult rr;
      rr.snapshots = snaps;
      for (const auto& s : snaps) rr.series.push_back(record(make_state(model, s.grid, s.t, cfg.flow.geometry)));
      rr.blowup_threshold = cfg.flow.blowup_threshold.value_or(1e3 / std::sqrt(rr.series.front().area));
      CalibrationOptions co;
      co.cutoff_radius = cfg.density.cutoff_radius;
      co.random_samples = cfg.density.random_samples;
      co.seed = cfg.seed;
      const auto cal = calibrate_r0(model, make_state(model, snaps.front().grid, snaps.front().t), cfg.density.eps0, co);
      MonitorOptions mo;
      mo.eps0 = cfg.density.eps0;
      mo.cutoff_radius = cfg.density.cutoff_radius;
      mo.random_samples = cfg.density.random_samples;
      mo.max_node_queries = std::size_t(cfg.density.max_node_queries);
      mo.seed = cfg.seed;
      const auto rep = monitor_regularity(model, rr, snaps.front().grid, cal.r0, mo);
      io::write_text(run_dir / "density_report.csv", io::monitor_csv(rep));
      io::write_json(run_dir / "density_report.json", io::monitor_json(rep));
      log << "monitor: max phi " << rep.max_phi << ", " << rep.n_exceedances << " exceedances, r0 " << cal.r0 << "\n";
      return ok;
    }

    const auto queries = parse_density_queries(io::read_json(*query_path));
    std::string csv = "t0,r,chart,x0_0,x0_1,x0_2,x0_3,snapshot_t,phi,computable\n";
    std::map<std::size_t, FlowState> states;
    for (const auto& q : queries) {
      const double t = q.t0 - q.r * q.r;
      std::optional<std::size_t> pick;
      if (t > snaps.front().t)
        for (std::size_t k = 0; k < snaps.size(); ++k)
          if (snaps[k].t <= t) pick = k;
      std::string phi = "", st = "";
      if (pick) {
        auto it = states.find(*pick);
        if (it == states.end())
          it = states.emplace(*pick, make_state(model, snaps[*pick].grid, snaps[*pick].t, cfg.flow.geometry)).first;
        const double rc = q.cutoff_radius.value_or(cfg.density.cutoff_radius);
        // kernel scale r^2 on the chosen snapshot
        const DensityQuery dq{q.x0, it->second.t + q.r * q.r, rc};
        phi = io::fmt(parabolic_density(model, it->second, dq));
        st = io::fmt(snaps[*pick].t);
      }
      csv += io::fmt(q.t0) + "," + io::fmt(q.r) + "," + std::to_string(q.x0.chart) + "," + io::fmt(q.x0.x[0]) + "," +
             io::fmt(q.x0.x[1]) + "," + io::fmt(q.x0.x[2]) + "," + io::fmt(q.x0.x[3]) + "," + st + "," + phi + "," +
             (pick ? "1" : "0") + "\n";
    }
    io::write_text(run_dir / "density_report.csv", csv);
    log << "wrote " << queries.size() << " density rows\n";
    return ok;
  } catch (const Error& e) {
    write_error(run_dir, to_string(e.kind()), e.what(), config_error);
    log << "error: " << e.what() << "\n";
    return config_error;
  }
}

}  // namespace kflow::app
