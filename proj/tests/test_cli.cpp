#include "kflow/app.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace kflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kflow-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json plane_config(const fs::path& out) {
  return json{{"model", "flat-C2"},
              {"surface", {{"family", "plane"}}},
              {"grid", {{"nu", 16}, {"nv", 16}}},
              {"flow", {{"t_end", 0.01}}},
              {"output_dir", out.string()}};
}

json cp1_config(const fs::path& out) {
  return json{{"model", "Fubini-Study-CP2"},
              {"surface", {{"family", "perturbed-cp1"}, {"delta", 0.05}}},
              {"grid", {{"nu", 32}, {"nv", 16}}},
              {"flow", {{"t_end", 0.02}, {"snapshot_stride", 10}}},
              {"output_dir", out.string()}};
}

int run_config(const json& cfg, const fs::path& dir) {
  io::write_json(dir / "config.json", cfg);
  std::ostringstream log;
  return app::cmd_run(dir / "config.json", log);
}

int shell(const std::string& args) {
  const int s = std::system((std::string(KFLOW_EXE) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

}  // namespace

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  const auto base = plane_config("x");
  EXPECT_NO_THROW(parse_run_config(base));
  for (const auto& ptr : {"/grdi", "/flow/dtt", "/surface/radius", "/density/eps", "/flow/redistribution/rate"}) {
    json j = base;
    j[json::json_pointer(ptr)] = 1;
    EXPECT_THROW(parse_run_config(j), Error) << ptr;
  }
}

TEST(Config, ValuesAreValidated) {
  auto bad = [](const char* ptr, json v) {
    json j = plane_config("x");
    j[json::json_pointer(ptr)] = v;
    return j;
  };
  EXPECT_THROW(parse_run_config(bad("/grid/nu", 4)), Error);
  EXPECT_THROW(parse_run_config(bad("/grid/nv", 2.5)), Error);
  EXPECT_THROW(parse_run_config(bad("/flow/cfl_factor", 0.9)), Error);
  EXPECT_THROW(parse_run_config(bad("/model", "flat-R4")), Error);
  EXPECT_THROW(parse_run_config(bad("/flow/t_end", "soon")), Error);
  EXPECT_THROW(parse_run_config(bad("/density/eps0", 0.0)), Error);
  EXPECT_THROW(parse_run_config(bad("/surface/family", "cp1")), Error);
  EXPECT_THROW(parse_run_config(json{{"model", "flat-C2"}}), Error);
}

TEST(Config, ResolvedConfigRoundTrips) {
  for (const auto& j : {plane_config("a"), cp1_config("b")}) {
    const auto c = parse_run_config(j);
    const json resolved = run_config_json(c);
    EXPECT_EQ(run_config_json(parse_run_config(resolved)), resolved);
    EXPECT_TRUE(resolved["flow"].contains("polar_filter_ratio"));
    EXPECT_TRUE(resolved["density"].contains("cutoff_radius"));
  }
}

TEST(Config, SweepSpecValidation) {
  json spec{{"base", cp1_config("s")}, {"deltas", {0.0, 0.01, 0.02}}};
  const auto s = parse_sweep_spec(spec);
  EXPECT_EQ(s.deltas.size(), 3u);
  EXPECT_EQ(sweep_spec_json(parse_sweep_spec(sweep_spec_json(s))), sweep_spec_json(s));
  spec["deltas"] = {0.02, 0.01};
  EXPECT_THROW(parse_sweep_spec(spec), Error);
  spec["deltas"] = {-0.01};
  EXPECT_THROW(parse_sweep_spec(spec), Error);
  spec["deltas"] = json::array();
  EXPECT_THROW(parse_sweep_spec(spec), Error);
  EXPECT_THROW(parse_sweep_spec(json{{"base", plane_config("s")}, {"deltas", {0.1}}}), Error);
}

TEST(Io, SnapshotRoundTripIsExact) {
  const auto fs_model = AmbientModel::fubini_study();
  Snapshot s{0.125, 17, surfaces::perturbed_cp1(fs_model, 16, 8, 0.1)};
  const auto back = io::snapshot_from_json(json::parse(io::snapshot_json(s).dump()));
  EXPECT_EQ(back.t, s.t);
  EXPECT_EQ(back.step_index, s.step_index);
  EXPECT_EQ(back.grid.orientation, s.grid.orientation);
  ASSERT_EQ(back.grid.size(), s.grid.size());
  for (std::size_t n = 0; n < s.grid.size(); ++n) {
    EXPECT_EQ(back.grid.nodes[n].chart, s.grid.nodes[n].chart);
    EXPECT_EQ(back.grid.nodes[n].x, s.grid.nodes[n].x);
  }
  const Snapshot p{0.0, 0, surfaces::plane(8, 8)};
  EXPECT_EQ(io::snapshot_from_json(io::snapshot_json(p)).grid.wrap_u, p.grid.wrap_u);
  EXPECT_THROW(io::snapshot_from_json(json{{"format", "other"}}), Error);
}

TEST(Io, SeriesCsvLayout) {
  DiagnosticsRecord r;
  r.t = 0.5;
  r.V_valid = false;
  const auto csv = io::series_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,area,symp_area,min_cos_alpha,V,L2H,supA,cumL1H,max_residual");
  const auto row = csv.substr(csv.find('\n') + 1);
  EXPECT_EQ(row, "0.5,0,0,1,nan,0,0,0,\n");
}

TEST(Cli, RunWritesRunDirectory) {
  const auto dir = scratch("run");
  EXPECT_EQ(run_config(cp1_config(dir / "out"), dir), app::ok);
  for (const char* f : {"config.resolved.json", "series.csv", "summary.json"}) EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "out" / "error.json"));
  const auto snaps = io::read_snapshots(dir / "out" / "snapshots");
  EXPECT_GE(snaps.size(), 2u);
  EXPECT_EQ(snaps.front().step_index, 0);
  const auto summary = io::read_json(dir / "out" / "summary.json");
  EXPECT_EQ(summary["stop_reason"], "reached-t-end");
  EXPECT_TRUE(summary["checks"]["symplectic_preserved"].get<bool>());
  EXPECT_TRUE(summary["checks"]["nablaJ_bound_ok"].get<bool>());
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto dir = scratch("rerun");
  ASSERT_EQ(run_config(cp1_config(dir / "a"), dir), app::ok);
  ASSERT_EQ(run_config(cp1_config(dir / "b"), dir), app::ok);
  for (const char* f : {"series.csv", "summary.json", "snapshots/t_0.json"})
    EXPECT_EQ(io::read_text(dir / "a" / f), io::read_text(dir / "b" / f)) << f;
}

TEST(Cli, ConfigErrorsExitOneWithErrorFile) {
  const auto dir = scratch("bad");
  auto cfg = plane_config(dir / "out");
  cfg["grdi"] = 3;
  EXPECT_EQ(run_config(cfg, dir), app::config_error);
  const auto err = io::read_json(dir / "out" / "error.json");
  EXPECT_EQ(err["exit_code"], 1);
  EXPECT_NE(err["message"].get<std::string>().find("grdi"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out" / "series.csv"));
  std::ostringstream log;
  EXPECT_EQ(app::cmd_run(dir / "missing.json", log), app::config_error);
}

TEST(Cli, BlowupExitsTwo) {
  const auto dir = scratch("blowup");
  json cfg{{"model", "flat-C2"},
           {"surface", {{"family", "round-sphere"}}},
           {"grid", {{"nu", 32}, {"nv", 16}}},
           {"flow", {{"t_end", 0.3}}},
           {"output_dir", (dir / "out").string()}};
  EXPECT_EQ(run_config(cfg, dir), app::blowup);
  EXPECT_EQ(io::read_json(dir / "out" / "summary.json")["stop_reason"], "blowup-flag");
  EXPECT_EQ(io::read_json(dir / "out" / "error.json")["exit_code"], 2);
}

TEST(Cli, DegenerateGridExitsThree) {
  const auto dir = scratch("degenerate");
  json cfg{{"model", "flat-C2"},
           {"surface", {{"family", "plane"}, {"a", {1, 0, 0, 0}}, {"b", {2, 0, 0, 0}}}},
           {"grid", {{"nu", 8}, {"nv", 8}}},
           {"output_dir", (dir / "out").string()}};
  EXPECT_EQ(run_config(cfg, dir), app::degenerate);
}

TEST(Cli, OutputRootEnvironment) {
  const auto dir = scratch("root");
  setenv("KFLOW_OUTPUT_ROOT", dir.c_str(), 1);
  EXPECT_EQ(app::resolve_dir("rel"), dir / "rel");
  EXPECT_EQ(app::resolve_dir("/abs"), fs::path("/abs"));
  EXPECT_EQ(run_config(plane_config("relative-out"), dir), app::ok);
  EXPECT_TRUE(fs::exists(dir / "relative-out" / "summary.json"));
  unsetenv("KFLOW_OUTPUT_ROOT");
  EXPECT_EQ(app::resolve_dir("rel"), fs::path("rel"));
}

TEST(Cli, DensityCommand) {
  const auto dir = scratch("density");
  auto cfg = plane_config(dir / "out");
  cfg["grid"] = {{"nu", 64}, {"nv", 64}};
  ASSERT_EQ(run_config(cfg, dir), app::ok);
  io::write_json(dir / "q.json", json{{"queries",
                                       {{{"x0", {pi, pi, 0.1, 0.0}}, {"t0", 0.02}, {"r", 0.1}},
                                        {{"x0", {pi, pi, 0.0, 0.0}}, {"t0", 0.001}, {"r", 0.1}}}}});
  std::ostringstream log;
  ASSERT_EQ(app::cmd_density(dir / "out", dir / "q.json", log), app::ok);
  std::istringstream csv(io::read_text(dir / "out" / "density_report.csv"));
  std::string header, a, b;
  std::getline(csv, header);
  std::getline(csv, a);
  std::getline(csv, b);
  EXPECT_EQ(header, "t0,r,chart,x0_0,x0_1,x0_2,x0_3,snapshot_t,phi,computable");
  const double phi = std::stod(a.substr(a.rfind(',', a.size() - 3) + 1));
  EXPECT_NEAR(phi, std::exp(-0.25), 1e-6);
  EXPECT_EQ(b.back(), '0');
  EXPECT_EQ(app::cmd_density(dir / "nothing", std::nullopt, log), app::config_error);
  io::write_json(dir / "bad.json", json{{"queries", {{{"t0", 1.0}, {"r", 0.1}, {"radius", 2}}}}});
  EXPECT_EQ(app::cmd_density(dir / "out", dir / "bad.json", log), app::config_error);
}

TEST(Cli, MonitorRunAndDensityReportAgree) {
  const auto dir = scratch("monitor");
  auto cfg = cp1_config(dir / "out");
  cfg["grid"] = {{"nu", 64}, {"nv", 32}};
  cfg["density"] = {{"monitor", true}, {"random_samples", 10}};
  cfg["flow"]["t_end"] = 0.01;
  ASSERT_EQ(run_config(cfg, dir), app::ok);
  const auto summary = io::read_json(dir / "out" / "summary.json");
  ASSERT_TRUE(summary["density"].contains("r0")) << summary.dump();
  EXPECT_EQ(summary["density"]["monitor"]["n_exceedances"], 0);
  std::ostringstream log;
  ASSERT_EQ(app::cmd_density(dir / "out", std::nullopt, log), app::ok);
  EXPECT_EQ(io::read_text(dir / "out" / "density_report.csv"), io::read_text(dir / "out" / "monitor.csv"));
}

TEST(Cli, SweepCommand) {
  const auto dir = scratch("sweep");
  auto base = cp1_config(dir / "ignored");
  base["flow"]["t_end"] = 0.01;
  base["grid"] = {{"nu", 64}, {"nv", 32}};
  io::write_json(dir / "spec.json",
                 json{{"base", base}, {"deltas", {0.0, 0.02}}, {"output_dir", (dir / "sw").string()}});
  std::ostringstream log;
  EXPECT_EQ(app::cmd_sweep(dir / "spec.json", log), app::ok);
  EXPECT_TRUE(fs::exists(dir / "sw" / "delta_0" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "sw" / "delta_0.02" / "monitor.csv"));
  const auto s = io::read_json(dir / "sw" / "sweep_summary.json");
  EXPECT_EQ(s["largest_converged_delta_without_exceedance"], 0.0);
  EXPECT_TRUE(s["C0_nondecreasing"].get<bool>());
}

TEST(Cli, VerifyAndMutationFixture) {
  std::ostringstream log;
  EXPECT_EQ(app::cmd_verify(VerifyLevel::Quick, false, log), app::ok);
  EXPECT_EQ(app::cmd_verify(VerifyLevel::Quick, true, log), app::config_error);
  EXPECT_NE(log.str().find("FAIL"), std::string::npos);
}

TEST(Cli, ExecutableExitCodes) {
  EXPECT_EQ(shell("--help"), 0);
  EXPECT_EQ(shell(""), 1);
  EXPECT_EQ(shell("verify --level quick"), 0);
  EXPECT_EQ(shell("verify --flip-omega"), 1);
  EXPECT_EQ(shell("verify --level medium"), 1);
  EXPECT_EQ(shell("run /nonexistent/config.json"), 1);
  const auto dir = scratch("exe");
  io::write_json(dir / "c.json", plane_config(dir / "out"));
  EXPECT_EQ(shell("run " + (dir / "c.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.json"));
}
