// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance [criterion numbers...]

#include "kflow/app.hpp"

#include <chrono>
#include <cstdio>
#include <set>

using namespace kflow;

namespace {

struct Outcome {
  int id;
  std::string name;
  bool passed;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, const std::string& name, bool passed, const std::string& detail) {
  outcomes.push_back({id, name, passed, detail});
  std::printf("criterion %2d  %s  %s: %s\n", id, passed ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Tracks min(|nabla J|^2 - |H|^2 / 2) over every node of every state seen.
struct MarginTracker {
  double worst = infinity;
  long states = 0;
  void operator()(const FlowState& s) {
    ++states;
    for (const auto& g : s.geometry) worst = std::min(worst, g.nablaJ_sq - 0.5 * g.H_sq);
  }
  std::function<void(const FlowState&)> hook() {
    return [this](const FlowState& s) { (*this)(s); };
  }
};

MarginTracker margins;

// ---- shared runs ----

struct SphereRun {
  RunResult result;
  double worst_rel = 0.0;
  double seconds = 0.0;
  double r_end = 0.0;
};

const SphereRun& shrinking_sphere() {
  static std::optional<SphereRun> cache;
  if (cache) return *cache;
  SphereRun out;
  const auto c2 = AmbientModel::flat_c2();
  FlowConfig cfg;
  cfg.snapshot_stride = 1000000;
  cfg.t_end = (1.0 - 0.3 * 0.3) / 4.0;
  RunHooks hooks;
  hooks.on_state = [&](const FlowState& s) {
    margins(s);
    const double r = std::sqrt(1.0 - 4.0 * s.t);
    for (const auto& p : s.grid.nodes) out.worst_rel = std::max(out.worst_rel, std::abs(p.x.norm() / r - 1.0));
    out.r_end = r;
  };
  const auto start = std::chrono::steady_clock::now();
  out.result = run(c2, surfaces::round_sphere(128, 64, 1.0), cfg, hooks);
  out.seconds = seconds_since(start);
  cache = std::move(out);
  return *cache;
}

struct DecayRun {
  RunResult result;
  SeriesSummary summary;
  double factor = 0.0;  // max of the observed bound ratios
};

const DecayRun& decay_run(int nv) {
  static std::map<int, DecayRun> cache;
  if (auto it = cache.find(nv); it != cache.end()) return it->second;
  const auto fs = AmbientModel::fubini_study();
  FlowConfig cfg;
  cfg.t_end = 5.0 / fs.scalar_curvature();
  cfg.snapshot_stride = 1000000;
  RunHooks hooks;
  hooks.on_state = margins.hook();
  DecayRun out;
  out.result = run(fs, surfaces::perturbed_cp1(fs, 2 * nv, nv, 0.05), cfg, hooks);
  out.summary = summarize(out.result.series, fs.scalar_curvature());
  out.factor = std::max(out.summary.decay_worst_ratio, out.summary.l2_worst_ratio);
  return cache[nv] = std::move(out);
}

struct SweepData {
  app::SweepOutcome outcome;
  double seconds = 0.0;
  std::vector<std::pair<double, bool>> min_cos;  // per delta: min cos(alpha), nondecreasing
};

const SweepData& sweep() {
  static std::optional<SweepData> cache;
  if (cache) return *cache;
  SweepSpec spec;
  spec.base = parse_run_config(json{{"model", "Fubini-Study-CP2"},
                                    {"surface", {{"family", "perturbed-cp1"}}},
                                    {"grid", {{"nu", 64}, {"nv", 32}}},
                                    {"flow", {{"t_end", 3.0}, {"snapshot_stride", 200}}},
                                    {"density", {{"monitor", true}, {"eps0", 0.1}}}});
  spec.deltas = {0.01, 0.02, 0.05, 0.1};
  const auto dir = std::filesystem::temp_directory_path() / "kflow-acceptance-sweep";
  std::filesystem::remove_all(dir);
  std::ostringstream log;
  SweepData out;
  const auto start = std::chrono::steady_clock::now();
  out.outcome = app::execute_sweep(spec, dir, log);
  out.seconds = seconds_since(start);
  for (double d : spec.deltas) {
    const auto j = io::read_json(dir / app::delta_dir_name(d) / "summary.json");
    out.min_cos.emplace_back(j["series"]["min_cos_alpha"].get<double>(), j["checks"]["min_cos_nondecreasing"].get<bool>());
  }
  std::filesystem::remove_all(dir);
  return *(cache = std::move(out));
}

// Residual of the Kähler-angle equation two steps after t*, every state fed to margins.
std::vector<double> residual_sequence(const AmbientModel& m, const std::function<SurfaceGrid(int)>& make,
                                      const std::vector<int>& ns, double tstar) {
  std::vector<double> out;
  for (int n : ns) {
    FlowConfig cfg;
    auto s = make_state(m, make(n));
    std::optional<PolarFilter> f;
    if (s.grid.topology == Topology::Sphere) f.emplace(s.grid, cfg.polar_filter_ratio);
    const PolarFilter* fp = f ? &*f : nullptr;
    margins(s);
    while (s.t < tstar) {
      s = step_with_dt(m, s, std::min(stable_time_step(s, cfg), tstar - s.t), cfg, fp);
      margins(s);
    }
    const double dt = stable_time_step(s, cfg);
    const auto s1 = step_with_dt(m, s, dt, cfg, fp);
    const auto s2 = step_with_dt(m, s1, dt, cfg, fp);
    margins(s1);
    margins(s2);
    out.push_back(evolution_residual(s, s1, s2, kahler_angle_coefficient(m)).max_norm);
  }
  return out;
}

double min_order(const std::vector<double>& e) {
  double m = infinity;
  for (std::size_t k = 1; k < e.size(); ++k) m = std::min(m, std::log2(e[k - 1] / e[k]));
  return m;
}

std::string join(const std::vector<double>& e) {
  std::string s;
  for (double x : e) s += (s.empty() ? "" : " -> ") + sci(x);
  return s;
}

// ---- criteria ----

void criterion1() {
  const auto& r = shrinking_sphere();
  const bool ok = r.worst_rel < 5e-3 && r.seconds < 60.0 && r.r_end <= 0.3 + 1e-9 &&
                  r.result.stop == StopReason::ReachedTEnd;
  report(1, "shrinking sphere r = sqrt(1 - 4t)", ok,
         "max rel deviation " + sci(r.worst_rel) + " down to r = " + std::to_string(r.r_end) + ", " +
             std::to_string(r.result.steps) + " steps in " + std::to_string(r.seconds) + " s");
}

struct ResidualStudy {
  std::vector<double> torus, sphere;
};

const ResidualStudy& residual_study() {
  static std::optional<ResidualStudy> cache;
  if (cache) return *cache;
  const auto t4 = AmbientModel::flat_t4();
  const auto fs = AmbientModel::fubini_study();
  ResidualStudy r;
  r.torus = residual_sequence(t4, [](int n) { return surfaces::torus_graph(n, n, 0.2); }, {32, 64, 128}, 0.01);
  r.sphere = residual_sequence(
      fs, [&](int n) { return surfaces::perturbed_cp1(fs, 2 * n, n, 0.05); }, {32, 64, 128}, 0.002);
  return *(cache = std::move(r));
}

void criterion2() {
  const auto& r = residual_study();
  const double ot = min_order(r.torus), os = min_order(r.sphere);
  report(2, "Kahler-angle residual convergence", ot >= 1.8 && os >= 1.8,
         "torus 32^2..128^2 " + join(r.torus) + " (order " + sci(ot) + "); CP1 64x32..256x128 " + join(r.sphere) +
             " (order " + sci(os) + ")");
}

void criterion3() {
  shrinking_sphere();
  decay_run(32);
  decay_run(64);
  residual_study();
  report(3, "|nabla J|^2 >= |H|^2 / 2", margins.worst >= -1e-12,
         "min margin " + sci(margins.worst) + " over " + std::to_string(margins.states) + " states");
}

void criterion4() {
  detail::Sampler rs(11);
  const auto c2 = AmbientModel::flat_c2();
  const auto t4 = AmbientModel::flat_t4();
  const auto fs = AmbientModel::fubini_study();
  std::vector<std::pair<const AmbientModel*, FlowState>> states;
  states.emplace_back(&t4, make_state(t4, surfaces::torus_graph(32, 32, 0.2)));
  states.emplace_back(&c2, make_state(c2, surfaces::clifford_torus(32, 32, 1.0, 0.7, 0.3)));
  states.emplace_back(&c2, make_state(c2, surfaces::round_sphere(64, 32, 1.0)));
  states.emplace_back(&fs, make_state(fs, surfaces::perturbed_cp1(fs, 64, 32, 0.1)));
  std::array<double, 3> worst{};
  for (int k = 0; k < 1000; ++k) {
    const auto& [m, s] = states[k % states.size()];
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, s.grid.size() - 1)(rs.rng);
    const auto d = detail::rotation_deltas(*m, s.geometry[n], rs.uniform(0, two_pi), rs.uniform(0, two_pi));
    for (int c = 0; c < 3; ++c) worst[c] = std::max(worst[c], d[c]);
  }
  report(4, "frame invariance", std::max({worst[0], worst[1], worst[2]}) < 1e-10,
         "1000 rotations, rel change nablaJ " + sci(worst[0]) + ", cos " + sci(worst[1]) + ", |H| " + sci(worst[2]));
}

void criterion5() {
  const double R = AmbientModel::fubini_study().scalar_curvature();
  const auto& a = decay_run(32);
  const auto& b = decay_run(64);
  bool ok = true;
  std::string d;
  for (const auto* r : {&a, &b}) {
    const auto& s = r->summary;
    const bool rate = s.fitted_decay_rate && *s.fitted_decay_rate >= 0.95 * R;
    ok = ok && s.decay_bound_ok && s.l2_unit_interval_ok && rate;
    d += "[" + std::to_string(r->result.final_state->grid.nu) + "x" + std::to_string(r->result.final_state->grid.nv) +
         ": V ratio " + sci(s.decay_worst_ratio) + ", window ratio " + sci(s.l2_worst_ratio) + ", rate " +
         sci(s.fitted_decay_rate.value_or(0.0)) + "] ";
  }
  const double ea = std::max(0.0, a.factor - 1.0), eb = std::max(0.0, b.factor - 1.0);
  ok = ok && eb <= ea + 1e-12 && b.factor <= 1.05;
  report(5, "angle decay V <= C0 exp(-Rt)", ok, d + "factor " + sci(a.factor) + " -> " + sci(b.factor));
}

void criterion6() {
  bool ok = true;
  std::string d;
  for (int nv : {32, 64}) {
    const auto& r = decay_run(nv);
    const auto l1 = check_l1_bound(r.result.series, AmbientModel::fubini_study().scalar_curvature());
    ok = ok && l1.applicable && l1.ok;
    d += "cumL1H " + sci(l1.value) + " vs bound " + sci(l1.bound) + "; ";
  }
  report(6, "L1 mean curvature bound", ok, d);
}

void criterion7() {
  const auto& sp = shrinking_sphere();
  const auto ds = check_symplectic_area(sp.result.series);
  const auto dp = check_symplectic_area(decay_run(32).result.series);
  const bool ok = ds.drift_per_area < 1e-4 && dp.applicable && dp.drift < 1e-4;
  report(7, "symplectic area constancy", ok,
         "sphere (zero symplectic area) drift/area " + sci(ds.drift_per_area) + ", perturbed CP1 relative drift " +
             sci(dp.drift));
}

// Symplectic runs: both decay runs and every sweep member.
void criterion8() {
  std::vector<std::pair<std::string, std::pair<double, bool>>> runs;
  for (int nv : {32, 64}) {
    const auto& s = decay_run(nv).summary;
    runs.push_back({"cp1 " + std::to_string(2 * nv) + "x" + std::to_string(nv), {s.min_cos_alpha, s.min_cos_nondecreasing}});
  }
  const auto& sw = sweep();
  for (std::size_t k = 0; k < sw.min_cos.size(); ++k)
    runs.push_back({"sweep d " + sci(sw.outcome.rows[k].delta), sw.min_cos[k]});
  bool ok = true;
  std::string d;
  for (const auto& [name, v] : runs) {
    ok = ok && v.first > 0.0 && v.second;
    d += name + " min cos " + sci(v.first) + (v.second ? "" : " (decreased)") + "; ";
  }
  report(8, "symplecticity preserved", ok, d);
}

void criterion9() {
  const auto c2 = AmbientModel::flat_c2();
  const double tau = 0.01, rc = 0.8;
  const auto plane = make_state(c2, surfaces::plane(128, 128));
  double through = 0.0, law = 0.0;
  through = std::abs(parabolic_density(c2, plane, DensityQuery{ChartPoint{0, Vec4(pi, pi, 0, 0)}, tau, rc}) - 1.0);
  for (double ratio : {0.5, 1.0, 2.0}) {
    const double d = ratio * std::sqrt(tau);
    const double phi = parabolic_density(c2, plane, DensityQuery{ChartPoint{0, Vec4(pi, pi, 0, d)}, tau, rc});
    law = std::max(law, std::abs(phi - std::exp(-d * d / (4.0 * tau))));
  }
  const auto other = make_state(c2, surfaces::plane(128, 128, Vec4::Unit(2), Vec4::Unit(3), Vec4(pi, pi, -pi, -pi)));
  const DensityQuery q{ChartPoint{0, Vec4(pi, pi, 0, 0)}, tau, rc};
  const double two = std::abs(parabolic_density(c2, plane, q) + parabolic_density(c2, other, q) - 2.0);
  const auto s1 = make_state(c2, surfaces::round_sphere(64, 32, 1.0));
  const auto s2 = make_state(c2, surfaces::round_sphere(64, 32, 3.0));
  const Vec4 x(0.2, -0.3, 0.1, 0.5);
  const double a = parabolic_density(c2, s1, DensityQuery{ChartPoint{0, x}, 0.05, 0.4});
  const double b = parabolic_density(c2, s2, DensityQuery{ChartPoint{0, 3.0 * x}, 0.45, 1.2});
  const double scale = std::abs(a - b);
  report(9, "density oracles", through < 1e-6 && law < 1e-6 && two < 1e-6 && scale < 1e-8,
         "plane " + sci(through) + ", offset law " + sci(law) + ", transverse " + sci(two) + ", rescaling " +
             sci(scale));
}

void criterion10() {
  const auto c2 = AmbientModel::flat_c2();
  const double eps0 = 0.1;
  const auto coarse = make_state(c2, surfaces::round_sphere(128, 64, 1.0));
  CalibrationOptions co;
  const auto cal = calibrate_r0(c2, coarse, eps0, co);
  // Same condition on the doubled grid: surface nodes plus fresh offsets.
  const auto fine = make_state(c2, surfaces::round_sphere(256, 128, 1.0));
  const auto prep = detail::prepare(c2, fine.grid, fine.geometry);
  const auto offsets = detail::offset_samples(c2, fine.grid, co.random_samples, co.seed + 1);
  const double recheck = detail::calibration_max(c2, fine, prep, offsets, cal.r0, co.cutoff_radius);
  // Small-scale limit on the surface.
  const auto dense = make_state(c2, surfaces::round_sphere(512, 256, 1.0));
  const auto prep2 = detail::prepare(c2, dense.grid, dense.geometry);
  double lim = 0.0;
  for (int j : {32, 96, 128, 200})
    for (int i : {0, 77, 300}) {
      const auto n = dense.grid.index(i, j);
      lim = std::max(lim, std::abs(detail::density_sum(c2, prep2, prep2.keys[n], 0.01 * 0.01, co.cutoff_radius) - 1.0));
    }
  const bool ok = recheck <= 1.0 + 0.5 * eps0 && cal.limit_ok && lim < 1e-3;
  report(10, "r0 calibration", ok,
         "r0 " + sci(cal.r0) + " (max Phi " + sci(cal.max_phi) + "), doubled grid max Phi " + sci(recheck) +
             ", |Phi - 1| at r = 0.01 " + sci(lim));
}

void criterion11() {
  const auto a = detail::density_derivative_study(Vec4::Zero(), "centred");
  const auto b = detail::density_derivative_study(Vec4(0.3, 0.0, 0.2, 0.0), "offset");
  auto vals = [](const RefinementTable& t) {
    std::vector<double> v;
    for (const auto& r : t.rows) v.push_back(r.value);
    return v;
  };
  report(11, "density derivative identity", a.min_order() >= 1.8 && b.min_order() >= 1.8,
         "centred " + join(vals(a)) + " (order " + sci(a.min_order()) + "), offset " + join(vals(b)) + " (order " +
             sci(b.min_order()) + ")");
}

void criterion12() {
  const auto& sw = sweep();
  const auto& rows = sw.outcome.rows;
  int good = 0;
  bool bounded = true;
  std::string d;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const bool clean = r.converged && r.n_exceedances == 0 && r.error.empty() && r.max_phi <= 1.1;
    if (k < 3 && clean) ++good;
    bounded = bounded && std::isfinite(r.supA_max) && r.stop != "blowup-flag";
    d += "[d " + sci(r.delta) + " " + r.stop + " gap " + sci(r.final_gap) + " phi " + sci(r.max_phi) + " supA " +
         sci(r.supA_max) + "] ";
  }
  report(12, "perturbed CP1 sweep", good == 3 && bounded && sw.seconds < 1800.0,
         d + "r0 " + sci(rows.front().r0) + ", " + std::to_string(sw.seconds) + " s");
}

void criterion13() {
  VerifyOptions opt;
  opt.level = VerifyLevel::Quick;
  const auto rep = run_verify(opt);
  std::string d;
  int failed = 0;
  for (const auto& c : rep.checks)
    if (!c.passed) {
      ++failed;
      d += c.name + " ";
    }
  report(13, "ambient battery", rep.all_passed() && rep.seconds < 60.0,
         std::to_string(rep.checks.size()) + " checks, " + std::to_string(failed) + " failed " + d + "in " +
             std::to_string(rep.seconds) + " s");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
  const std::vector<void (*)()> all = {criterion1, criterion2, criterion3, criterion4,  criterion5,
                                       criterion6, criterion7, criterion8, criterion9,  criterion10,
                                       criterion11, criterion12, criterion13};
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (!only.empty() && !only.count(int(k + 1))) continue;
    try {
      all[k]();
    } catch (const std::exception& e) {
      report(int(k + 1), "exception", false, e.what());
    }
  }
  int failed = 0;
  for (const auto& o : outcomes) failed += o.passed ? 0 : 1;
  std::printf("%zu criteria, %d failed, %.1f s\n", outcomes.size(), failed, seconds_since(start));
  return failed == 0 ? 0 : 1;
}
