#pragma once

// Snapshot, series and report files.

#include "kflow/density.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace kflow::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* grid_format = "kflow-grid/1";

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline json vec_json(const Vec4& v) { return json::array({v[0], v[1], v[2], v[3]}); }

inline Vec4 vec_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorKind::Io, what + ": expected an array of 4 numbers");
  Vec4 v;
  for (int k = 0; k < 4; ++k) {
    if (!j[k].is_number()) throw Error(ErrorKind::Io, what + ": expected an array of 4 numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---- grid snapshots ----

inline json snapshot_json(const Snapshot& s) {
  const auto& g = s.grid;
  json nodes = json::array(), charts = json::array();
  for (const auto& p : g.nodes) {
    charts.push_back(p.chart);
    nodes.push_back(vec_json(p.x));
  }
  return json{{"format", grid_format},
              {"t", s.t},
              {"step_index", s.step_index},
              {"topology", to_string(g.topology)},
              {"nu", g.nu},
              {"nv", g.nv},
              {"orientation", g.orientation},
              {"wrap_u", vec_json(g.wrap_u)},
              {"wrap_v", vec_json(g.wrap_v)},
              {"charts", charts},
              {"nodes", nodes}};
}

inline Snapshot snapshot_from_json(const json& j) {
  try {
    if (j.value("format", "") != grid_format) throw Error(ErrorKind::Io, "not a kflow-grid/1 document");
    const std::string topo = j.at("topology").get<std::string>();
    if (topo != "torus" && topo != "sphere") throw Error(ErrorKind::Io, "unknown topology '" + topo + "'");
    Snapshot s;
    s.t = j.at("t").get<double>();
    s.step_index = j.at("step_index").get<long>();
    s.grid = SurfaceGrid(topo == "torus" ? Topology::Torus : Topology::Sphere, j.at("nu").get<int>(), j.at("nv").get<int>());
    s.grid.orientation = j.at("orientation").get<int>();
    s.grid.wrap_u = vec_from(j.at("wrap_u"), "wrap_u");
    s.grid.wrap_v = vec_from(j.at("wrap_v"), "wrap_v");
    const auto& charts = j.at("charts");
    const auto& nodes = j.at("nodes");
    if (charts.size() != s.grid.size() || nodes.size() != s.grid.size())
      throw Error(ErrorKind::Io, "node count does not match nu * nv");
    for (std::size_t n = 0; n < s.grid.size(); ++n)
      s.grid.nodes[n] = ChartPoint{charts[n].get<int>(), vec_from(nodes[n], "node")};
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed snapshot: ") + e.what());
  }
}

inline std::string snapshot_name(const Snapshot& s) { return "t_" + std::to_string(s.step_index) + ".json"; }

inline void write_snapshot(const fs::path& path, const Snapshot& s) { write_text(path, snapshot_json(s).dump() + "\n"); }

inline Snapshot read_snapshot(const fs::path& path) { return snapshot_from_json(json::parse(read_text(path))); }

// Snapshot files of a run directory ordered by step index.
inline std::vector<Snapshot> read_snapshots(const fs::path& dir) {
  std::vector<std::pair<long, fs::path>> files;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "no snapshot directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("t_", 0) != 0 || e.path().extension() != ".json") continue;
    try {
      files.emplace_back(std::stol(name.substr(2)), e.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Snapshot> out;
  for (const auto& f : files) out.push_back(read_snapshot(f.second));
  if (out.empty()) throw Error(ErrorKind::Io, "no snapshots in " + dir.string());
  return out;
}

// ---- series ----

inline constexpr const char* series_header = "t,area,symp_area,min_cos_alpha,V,L2H,supA,cumL1H,max_residual";

inline std::string series_csv(const Series& series) {
  std::string out = std::string(series_header) + "\n";
  for (const auto& r : series) {
    out += fmt(r.t) + "," + fmt(r.area) + "," + fmt(r.symp_area) + "," + fmt(r.min_cos_alpha) + "," +
           (r.V_valid ? fmt(r.V) : std::string("nan")) + "," + fmt(r.L2H) + "," + fmt(r.supA) + "," + fmt(r.cumL1H) +
           "," + (r.max_residual ? fmt(*r.max_residual) : std::string()) + "\n";
  }
  return out;
}

template <class T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json summary_json(const SeriesSummary& s) {
  return json{{"C0", s.C0},
              {"fitted_decay_rate", opt_json(s.fitted_decay_rate)},
              {"decay_bound_ok", s.decay_bound_ok},
              {"decay_worst_ratio", s.decay_worst_ratio},
              {"V_nonincreasing", s.V_nonincreasing},
              {"symp_drift", opt_json(s.symp_drift)},
              {"symp_drift_per_area", s.symp_drift_per_area},
              {"l1_bound_value", opt_json(s.l1_bound_value)},
              {"l1_bound_ok", opt_json(s.l1_bound_ok)},
              {"l2_unit_interval_ok", s.l2_unit_interval_ok},
              {"l2_worst_ratio", s.l2_worst_ratio},
              {"l1_chain_ok", s.l1_chain_ok},
              {"min_cos_alpha", s.min_cos_alpha},
              {"min_cos_nondecreasing", s.min_cos_nondecreasing},
              {"max_supA", s.max_supA},
              {"min_nablaJ_margin", s.min_nablaJ_margin}};
}

// ---- density reports ----

inline std::string monitor_csv(const MonitorReport& r) {
  std::string out = "t0,x0_index,phi,exceeded\n";
  for (const auto& row : r.rows)
    out += fmt(row.t0) + "," + std::to_string(row.x0_index) + "," + fmt(row.phi) + "," + (row.exceeded ? "1" : "0") + "\n";
  return out;
}

inline json monitor_json(const MonitorReport& r) {
  return json{{"max_phi", r.max_phi},
              {"n_exceedances", r.n_exceedances},
              {"r0", r.r0},
              {"eps0", r.eps0},
              {"supA_max", r.supA_max},
              {"blowup_threshold", r.blowup_threshold},
              {"consistent", r.consistent}};
}

}  // namespace kflow::io
