#pragma once

// Run and sweep configuration: strict JSON schema, defaults made explicit.

#include "kflow/io.hpp"
#include "kflow/surfaces.hpp"

#include <set>

namespace kflow {

using nlohmann::json;

namespace detail {

// Object reader that remembers which keys were consumed.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::Config, path_ + ": expected an object");
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), key);
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw Error(ErrorKind::Config, path_ + "." + key + ": required");
    return convert<T>(j_.at(key), key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return j_.contains(key) ? j_.at(key) : empty;
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw Error(ErrorKind::Config, path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  template <class T>
  T convert(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw Error(ErrorKind::Config, path_ + "." + key + ": expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw Error(ErrorKind::Config, path_ + "." + key + ": expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw Error(ErrorKind::Config, path_ + "." + key + ": expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw Error(ErrorKind::Config, path_ + "." + key + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Config, path_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Vec4 vec4_or(StrictObject& o, const std::string& key, const Vec4& fallback) {
  if (!o.has(key)) {
    o.get<json>(key, json());
    return fallback;
  }
  try {
    return io::vec_from(o.get<json>(key, json()), o.path(key));
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
}

inline cplx complex_or(StrictObject& o, const std::string& key, cplx fallback) {
  const json v = o.get<json>(key, json::array({fallback.real(), fallback.imag()}));
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw Error(ErrorKind::Config, o.path(key) + ": expected [re, im]");
  return cplx(v[0].get<double>(), v[1].get<double>());
}

}  // namespace detail

struct SurfaceSpec {
  std::string family = "plane";
  // plane
  Vec4 a = Vec4::Unit(0), b = Vec4::Unit(1), origin = Vec4::Zero();
  // torus-graph
  double amplitude = 0.2;
  int p = 1, q = 1;
  // round-sphere
  double radius = 1.0;
  Vec4 center = Vec4::Zero();
  // cp1: z2 = c0 z0 + c1 z1
  cplx c0 = 0.0, c1 = 0.0;
  // perturbed-cp1
  double delta = 0.05;
  int m = 2;
};

struct DensityOptions {
  bool monitor = false;
  double eps0 = 0.1;
  double cutoff_radius = 0.7;
  int random_samples = 100;
  int max_node_queries = 500;
};

struct DiagnosticsOptions {
  double symp_drift_threshold = 1e-4;
};

struct RunConfig {
  std::string model = "flat-C2";
  Vec4 periods = Vec4::Constant(two_pi);
  SurfaceSpec surface;
  int nu = 64, nv = 32;
  FlowConfig flow;
  DiagnosticsOptions diagnostics;
  DensityOptions density;
  std::uint64_t seed = 1;
  std::string output_dir = "kflow-run";
};

inline const std::vector<std::string>& surface_families() {
  static const std::vector<std::string> f = {"plane", "torus-graph", "round-sphere", "cp1", "perturbed-cp1"};
  return f;
}

inline SurfaceSpec parse_surface(const json& j) {
  detail::StrictObject o(j, "surface");
  SurfaceSpec s;
  s.family = o.require<std::string>("family");
  if (s.family == "plane") {
    s.a = detail::vec4_or(o, "a", s.a);
    s.b = detail::vec4_or(o, "b", s.b);
    s.origin = detail::vec4_or(o, "origin", s.origin);
  } else if (s.family == "torus-graph") {
    s.amplitude = o.get("amplitude", s.amplitude);
    s.p = o.get("p", s.p);
    s.q = o.get("q", s.q);
  } else if (s.family == "round-sphere") {
    s.radius = o.get("radius", s.radius);
    s.center = detail::vec4_or(o, "center", s.center);
    if (!(s.radius > 0.0)) throw Error(ErrorKind::Config, "surface.radius must be positive");
  } else if (s.family == "cp1") {
    s.c0 = detail::complex_or(o, "c0", s.c0);
    s.c1 = detail::complex_or(o, "c1", s.c1);
  } else if (s.family == "perturbed-cp1") {
    s.delta = o.get("delta", s.delta);
    s.m = o.get("m", s.m);
    if (!(s.delta >= 0.0)) throw Error(ErrorKind::Config, "surface.delta must be >= 0");
    if (s.m < 1) throw Error(ErrorKind::Config, "surface.m must be >= 1");
  } else {
    throw Error(ErrorKind::Config, "surface.family: unknown family '" + s.family + "'");
  }
  o.finish();
  return s;
}

inline json surface_json(const SurfaceSpec& s) {
  json j{{"family", s.family}};
  auto cj = [](cplx c) { return json::array({c.real(), c.imag()}); };
  if (s.family == "plane") {
    j["a"] = io::vec_json(s.a);
    j["b"] = io::vec_json(s.b);
    j["origin"] = io::vec_json(s.origin);
  } else if (s.family == "torus-graph") {
    j["amplitude"] = s.amplitude;
    j["p"] = s.p;
    j["q"] = s.q;
  } else if (s.family == "round-sphere") {
    j["radius"] = s.radius;
    j["center"] = io::vec_json(s.center);
  } else if (s.family == "cp1") {
    j["c0"] = cj(s.c0);
    j["c1"] = cj(s.c1);
  } else {
    j["delta"] = s.delta;
    j["m"] = s.m;
  }
  return j;
}

inline RunConfig parse_run_config(const json& j) {
  detail::StrictObject o(j, "config");
  RunConfig c;
  c.model = o.get("model", c.model);
  AmbientModel::by_name(c.model);
  c.periods = detail::vec4_or(o, "periods", c.periods);
  if (!(c.periods.minCoeff() > 0.0)) throw Error(ErrorKind::Config, "config.periods must be positive");
  if (!o.has("surface")) throw Error(ErrorKind::Config, "config.surface: required");
  c.surface = parse_surface(o.child("surface"));
  {
    detail::StrictObject g(o.child("grid"), "grid");
    c.nu = g.get("nu", c.nu);
    c.nv = g.get("nv", c.nv);
    g.finish();
    if (c.nu < 5 || c.nv < 5) throw Error(ErrorKind::Config, "grid dimensions must be at least 5");
  }
  {
    detail::StrictObject f(o.child("flow"), "flow");
    auto& fc = c.flow;
    fc.cfl_factor = f.get("cfl_factor", fc.cfl_factor);
    fc.t_end = f.get("t_end", fc.t_end);
    fc.snapshot_stride = f.get("snapshot_stride", fc.snapshot_stride);
    {
      detail::StrictObject r(f.child("redistribution"), "flow.redistribution");
      fc.redistribution.every = r.get("every", fc.redistribution.every);
      fc.redistribution.strength = r.get("strength", fc.redistribution.strength);
      r.finish();
    }
    const json bt = f.get<json>("blowup_threshold", json(nullptr));
    if (!bt.is_null()) {
      if (!bt.is_number()) throw Error(ErrorKind::Config, "flow.blowup_threshold: expected a number or null");
      fc.blowup_threshold = bt.get<double>();
    }
    fc.converged_H_tol = f.get("converged_H_tol", fc.converged_H_tol);
    fc.diagnostics_stride = f.get("diagnostics_stride", fc.diagnostics_stride);
    fc.polar_filter = f.get("polar_filter", fc.polar_filter);
    fc.polar_filter_ratio = f.get("polar_filter_ratio", fc.polar_filter_ratio);
    fc.compute_residual = f.get("compute_residual", fc.compute_residual);
    fc.geometry.degeneracy_floor = f.get("degeneracy_floor", fc.geometry.degeneracy_floor);
    f.finish();
    fc.validate();
  }
  {
    detail::StrictObject d(o.child("diagnostics"), "diagnostics");
    c.diagnostics.symp_drift_threshold = d.get("symp_drift_threshold", c.diagnostics.symp_drift_threshold);
    d.finish();
    if (!(c.diagnostics.symp_drift_threshold > 0.0))
      throw Error(ErrorKind::Config, "diagnostics.symp_drift_threshold must be positive");
  }
  {
    detail::StrictObject d(o.child("density"), "density");
    auto& dc = c.density;
    dc.monitor = d.get("monitor", dc.monitor);
    dc.eps0 = d.get("eps0", dc.eps0);
    dc.cutoff_radius = d.get("cutoff_radius", dc.cutoff_radius);
    dc.random_samples = d.get("random_samples", dc.random_samples);
    dc.max_node_queries = d.get("max_node_queries", dc.max_node_queries);
    d.finish();
    if (!(dc.eps0 > 0.0)) throw Error(ErrorKind::Config, "density.eps0 must be positive");
    if (!(dc.cutoff_radius > 0.0)) throw Error(ErrorKind::Config, "density.cutoff_radius must be positive");
    if (dc.random_samples < 0 || dc.max_node_queries < 1) throw Error(ErrorKind::Config, "density sample counts out of range");
  }
  const auto seed = o.get<std::int64_t>("seed", std::int64_t(c.seed));
  if (seed < 0) throw Error(ErrorKind::Config, "config.seed must be >= 0");
  c.seed = std::uint64_t(seed);
  c.output_dir = o.get("output_dir", c.output_dir);
  o.finish();

  const bool projective = c.surface.family == "cp1" || c.surface.family == "perturbed-cp1";
  if (projective != (c.model == "Fubini-Study-CP2"))
    throw Error(ErrorKind::Config, "surface family '" + c.surface.family + "' is not available on " + c.model);
  return c;
}

inline json run_config_json(const RunConfig& c) {
  const auto& f = c.flow;
  return json{{"model", c.model},
              {"periods", io::vec_json(c.periods)},
              {"surface", surface_json(c.surface)},
              {"grid", {{"nu", c.nu}, {"nv", c.nv}}},
              {"flow",
               {{"cfl_factor", f.cfl_factor},
                {"t_end", f.t_end},
                {"snapshot_stride", f.snapshot_stride},
                {"redistribution", {{"every", f.redistribution.every}, {"strength", f.redistribution.strength}}},
                {"blowup_threshold", io::opt_json(f.blowup_threshold)},
                {"converged_H_tol", f.converged_H_tol},
                {"diagnostics_stride", f.diagnostics_stride},
                {"polar_filter", f.polar_filter},
                {"polar_filter_ratio", f.polar_filter_ratio},
                {"compute_residual", f.compute_residual},
                {"degeneracy_floor", f.geometry.degeneracy_floor}}},
              {"diagnostics",
               {{"symp_drift_threshold", c.diagnostics.symp_drift_threshold}}},
              {"density",
               {{"monitor", c.density.monitor},
                {"eps0", c.density.eps0},
                {"cutoff_radius", c.density.cutoff_radius},
                {"random_samples", c.density.random_samples},
                {"max_node_queries", c.density.max_node_queries}}},
              {"seed", c.seed},
              {"output_dir", c.output_dir}};
}

inline AmbientModel make_model(const RunConfig& c) { return AmbientModel::by_name(c.model, c.periods); }

inline SurfaceGrid make_surface(const AmbientModel& model, const RunConfig& c) {
  const auto& s = c.surface;
  if (s.family == "plane") return surfaces::plane(c.nu, c.nv, s.a, s.b, s.origin);
  if (s.family == "torus-graph") return surfaces::torus_graph(c.nu, c.nv, s.amplitude, s.p, s.q);
  if (s.family == "round-sphere") return surfaces::round_sphere(c.nu, c.nv, s.radius, s.center);
  if (s.family == "cp1") return surfaces::cp1(model, c.nu, c.nv, s.c0, s.c1);
  return surfaces::perturbed_cp1(model, c.nu, c.nv, s.delta, s.m);
}

// ---- sweeps ----

struct SweepSpec {
  RunConfig base;
  std::vector<double> deltas;
  double time_budget_s = 600.0;  // per run
  double gap_tol = 1e-3;         // holomorphicity gap counted as converged
  std::string output_dir = "kflow-sweep";
};

inline SweepSpec parse_sweep_spec(const json& j) {
  detail::StrictObject o(j, "sweep");
  SweepSpec s;
  if (!o.has("base")) throw Error(ErrorKind::Config, "sweep.base: required");
  s.base = parse_run_config(o.child("base"));
  if (s.base.surface.family != "perturbed-cp1")
    throw Error(ErrorKind::Config, "sweep.base must use the perturbed-cp1 family");
  const json d = o.require<json>("deltas");
  if (!d.is_array() || d.empty()) throw Error(ErrorKind::Config, "sweep.deltas: expected a non-empty array");
  for (const auto& v : d) {
    if (!v.is_number()) throw Error(ErrorKind::Config, "sweep.deltas: expected numbers");
    s.deltas.push_back(v.get<double>());
  }
  for (std::size_t k = 0; k < s.deltas.size(); ++k) {
    if (!(s.deltas[k] >= 0.0)) throw Error(ErrorKind::Config, "sweep.deltas must be >= 0");
    if (k > 0 && !(s.deltas[k] > s.deltas[k - 1])) throw Error(ErrorKind::Config, "sweep.deltas must be strictly increasing");
  }
  s.time_budget_s = o.get("time_budget_s", s.time_budget_s);
  if (!(s.time_budget_s > 0.0)) throw Error(ErrorKind::Config, "sweep.time_budget_s must be positive");
  s.gap_tol = o.get("gap_tol", s.gap_tol);
  s.output_dir = o.get("output_dir", s.output_dir);
  o.finish();
  if (make_model(s.base).scalar_curvature() <= 0.0) throw Error(ErrorKind::Config, "sweeps need an ambient with R > 0");
  return s;
}

inline json sweep_spec_json(const SweepSpec& s) {
  return json{{"base", run_config_json(s.base)},
              {"deltas", s.deltas},
              {"time_budget_s", s.time_budget_s},
              {"gap_tol", s.gap_tol},
              {"output_dir", s.output_dir}};
}

}  // namespace kflow
