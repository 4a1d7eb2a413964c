#pragma once

// Identity batteries over all modules, reported as a pass/fail table.

#include "kflow/density.hpp"
#include "kflow/surfaces.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

namespace kflow {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RefinementRow {
  std::string label;
  double value = 0.0;
  std::optional<double> order;
};

struct RefinementTable {
  std::string name;
  std::vector<RefinementRow> rows;
  double min_order() const {
    double m = infinity;
    for (const auto& r : rows)
      if (r.order) m = std::min(m, *r.order);
    return m;
  }
};

enum class VerifyLevel { Quick, Full };

struct VerifyOptions {
  VerifyLevel level = VerifyLevel::Quick;
  // -1 flips omega on every model (mutation fixture).
  double omega_sign = 1.0;
  std::uint64_t seed = 1;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  std::vector<RefinementTable> tables;
  double seconds = 0.0;

  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  std::string table() const {
    std::ostringstream os;
    std::size_t w = 4;
    for (const auto& c : checks) w = std::max(w, c.name.size());
    for (const auto& c : checks) {
      os << c.name << std::string(w - c.name.size() + 2, ' ') << (c.passed ? "PASS" : "FAIL") << "  " << c.detail
         << "\n";
    }
    for (const auto& t : tables) {
      os << "\n" << t.name << "\n";
      for (const auto& r : t.rows) {
        char buf[160];
        if (r.order)
          std::snprintf(buf, sizeof buf, "  %-14s %.6e  order %.3f\n", r.label.c_str(), r.value, *r.order);
        else
          std::snprintf(buf, sizeof buf, "  %-14s %.6e\n", r.label.c_str(), r.value);
        os << buf;
      }
    }
    return os.str();
  }
};

namespace detail {

inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

inline void fill_orders(RefinementTable& t) {
  for (std::size_t k = 1; k < t.rows.size(); ++k)
    t.rows[k].order = std::log2(std::abs(t.rows[k - 1].value / t.rows[k].value));
}

struct Sampler {
  std::mt19937_64 rng;
  explicit Sampler(std::uint64_t seed) : rng(seed) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
  Vec4 vec(double s = 1.0) { return Vec4(uniform(-s, s), uniform(-s, s), uniform(-s, s), uniform(-s, s)); }
  ChartPoint point(const AmbientModel& m) {
    const int c = std::uniform_int_distribution<int>(0, m.chart_count() - 1)(rng);
    return ChartPoint{c, vec(m.is_flat() ? 3.0 : 1.5)};
  }
};

inline std::vector<AmbientModel> battery_models(double omega_sign) {
  std::vector<AmbientModel> ms = {AmbientModel::flat_c2(), AmbientModel::flat_t4(), AmbientModel::fubini_study()};
  for (auto& m : ms) m.set_omega_sign(omega_sign);
  return ms;
}

inline void ambient_checks(VerifyReport& rep, const VerifyOptions& opt, Sampler& rs) {
  const auto models = battery_models(opt.omega_sign);
  for (const auto& m : models) {
    const std::string tag = "ambient." + m.name() + ".";
    double jsq = 0.0, compat = 0.0, omega_def = 0.0, omega_inv = 0.0, positivity = infinity, dw = 0.0;
    for (int k = 0; k < 50; ++k) {
      const ChartPoint p = rs.point(m);
      const Mat4 J = m.complex_structure(p), g = m.metric_at(p);
      jsq = std::max(jsq, (J * J + Mat4::Identity()).cwiseAbs().maxCoeff());
      const Vec4 u = rs.vec(), v = rs.vec();
      const double guv = m.inner(p, u, v);
      compat = std::max(compat, std::abs(m.inner(p, J * u, J * v) - guv) / g.norm());
      omega_def = std::max(omega_def, std::abs(m.omega(p, u, v) - (J * u).dot(g * v)) / g.norm());
      omega_inv = std::max(omega_inv, std::abs(m.omega(p, J * u, J * v) - m.omega(p, u, v)) / g.norm());
      positivity = std::min(positivity, m.omega(p, u, J * u) / m.inner(p, u, u));
      // d omega from 4th-order differences of omega's matrix
      const double h = 1e-3;
      std::array<Mat4, 4> dom;
      for (int a = 0; a < 4; ++a) {
        auto at = [&](double s) {
          ChartPoint q = p;
          q.x[a] += s;
          return m.omega_matrix(q);
        };
        dom[a] = (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h);
      }
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          for (int c = 0; c < 4; ++c) dw = std::max(dw, std::abs(dom[a](b, c) + dom[b](c, a) + dom[c](a, b)));
    }
    rep.checks.push_back({tag + "J_squared", jsq < 1e-14, "max |J^2 + I| = " + sci(jsq)});
    const bool ok = compat < 1e-12 && omega_def < 1e-12 && omega_inv < 1e-12 && positivity > 0.0;
    rep.checks.push_back({tag + "compatibility", ok,
                          "g(J.,J.)-g " + sci(compat) + ", omega-g(J.,.) " + sci(omega_def) + ", min omega(u,Ju)/|u|^2 " +
                              sci(positivity)});
    rep.checks.push_back({tag + "d_omega", dw < 1e-8, "max |d omega| = " + sci(dw)});

    if (m.is_flat()) continue;
    double routes = 0.0, nj = 0.0, einstein = 0.0, rt = 0.0;
    const double expect = m.scalar_curvature() / 4.0;
    RefinementTable order{"nabla J from metric differences (Fubini-Study-CP2)", {}};
    std::array<double, 3> steps = {0.1, 0.05, 0.025};
    std::array<double, 3> err{};
    for (int k = 0; k < 20; ++k) {
      const ChartPoint p = rs.point(m);
      const auto cf = m.christoffel_at(p);
      const auto fd = christoffel_from_metric(m, p);
      for (int c = 0; c < 4; ++c) routes = std::max(routes, (cf.gamma[c] - fd.gamma[c]).cwiseAbs().maxCoeff());
      nj = std::max(nj, nabla_J_max(m.complex_structure(p), cf));
      for (int s = 0; s < 3; ++s)
        err[s] = std::max(err[s], nabla_J_max(m.complex_structure(p), christoffel_from_metric(m, p, steps[s])));
      const auto cur = m.curvature_at(p);
      einstein = std::max(einstein, (cur.ricci - expect * m.metric_at(p)).cwiseAbs().maxCoeff());
      const Vec4 v = rs.vec(0.6);
      const ChartPoint q = m.settle(m.exp_map(p, v));
      const ChartPoint back = m.exp_map(m.log_map(p, q));
      rt = std::max(rt, m.distance(back, q));
    }
    for (int s = 0; s < 3; ++s) order.rows.push_back({"h=" + sci(steps[s]), err[s], {}});
    fill_orders(order);
    rep.checks.push_back({tag + "christoffel_routes", routes < 1e-8, "closed form vs metric differences " + sci(routes)});
    rep.checks.push_back({tag + "nabla_J", nj < 1e-13 && order.min_order() >= 1.8,
                          "closed form " + sci(nj) + ", difference route order " + sci(order.min_order())});
    rep.checks.push_back({tag + "einstein", einstein < 1e-6 && std::abs(m.scalar_curvature() - 24.0) < 1e-6,
                          "max |Ric - (R/4) g| = " + sci(einstein) + ", R = " + std::to_string(m.scalar_curvature())});
    rep.checks.push_back({tag + "exp_log", rt < 1e-8, "max d(exp(log q), q) = " + sci(rt)});
    rep.tables.push_back(order);
  }
}

inline std::vector<std::pair<std::string, FlowState>> battery_surfaces(double omega_sign) {
  auto models = battery_models(omega_sign);
  const auto& c2 = models[0];
  const auto& t4 = models[1];
  const auto& fs = models[2];
  std::vector<std::pair<std::string, FlowState>> out;
  out.emplace_back("torus-graph", make_state(t4, surfaces::torus_graph(32, 32, 0.2)));
  out.emplace_back("clifford-torus", make_state(c2, surfaces::clifford_torus(32, 32, 1.0, 0.7, 0.3)));
  out.emplace_back("round-sphere", make_state(c2, surfaces::round_sphere(64, 32, 1.0)));
  out.emplace_back("perturbed-cp1", make_state(fs, surfaces::perturbed_cp1(fs, 64, 32, 0.05)));
  out.emplace_back("cp1", make_state(fs, surfaces::cp1(fs, 64, 32, cplx(0.2, 0.1), cplx(0.3, -0.2))));
  return out;
}

// Frame-rotation deltas of |nabla J|^2, cos(alpha) and |H| at one node.
inline std::array<double, 3> rotation_deltas(const AmbientModel& m, const NodeGeometry& g, double theta, double psi) {
  const AdaptedFrame r = rotate(g.frame, theta, psi);
  const Mat4& G = g.metric;
  const std::array<Vec4, 2> e = {g.frame.e1, g.frame.e2}, er = {r.e1, r.e2};
  const std::array<Vec4, 2> v = {g.frame.v1, g.frame.v2}, vr = {r.v1, r.v2};
  SecondFundamentalForm h;
  for (int a = 0; a < 2; ++a)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        // II(e'_i, e'_j) reassembled from the original frame, projected on v'_a
        Vec4 II = Vec4::Zero();
        for (int b = 0; b < 2; ++b)
          for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l)
              II += g.h.h[b][k][l] * er[i].dot(G * e[k]) * er[j].dot(G * e[l]) * v[b];
        h.h[a][i][j] = II.dot(G * vr[a]);
      }
  const double cr = m.omega_with_metric(G, r.e1, r.e2);
  const double Hr = std::hypot(h.mean(0), h.mean(1));
  const double H0 = std::sqrt(g.H_sq);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  return {rel(nabla_J_squared(h), g.nablaJ_sq), rel(cr, g.cos_alpha), rel(Hr, H0)};
}

inline void immersion_checks(VerifyReport& rep, const VerifyOptions& opt, Sampler& rs) {
  const auto models = battery_models(opt.omega_sign);
  auto model_for = [&](const std::string& name) -> const AmbientModel& {
    if (name == "torus-graph") return models[1];
    if (name == "perturbed-cp1" || name == "cp1") return models[2];
    return models[0];
  };
  const auto states = battery_surfaces(opt.omega_sign);
  double margin = infinity;
  for (const auto& [name, s] : states)
    for (const auto& g : s.geometry) margin = std::min(margin, g.nablaJ_sq - 0.5 * g.H_sq);
  rep.checks.push_back({"immersion.nablaJ_bound", margin >= -1e-12, "min |nabla J|^2 - |H|^2/2 = " + sci(margin)});

  std::array<double, 3> worst{};
  for (int k = 0; k < 1000; ++k) {
    const auto& [name, s] = states[k % states.size()];
    const std::size_t n = std::uniform_int_distribution<std::size_t>(0, s.grid.size() - 1)(rs.rng);
    const auto d = rotation_deltas(model_for(name), s.geometry[n], rs.uniform(0, two_pi), rs.uniform(0, two_pi));
    for (int c = 0; c < 3; ++c) worst[c] = std::max(worst[c], d[c]);
  }
  rep.checks.push_back({"immersion.frame_invariance", std::max({worst[0], worst[1], worst[2]}) < 1e-10,
                        "rel change nablaJ " + sci(worst[0]) + ", cos " + sci(worst[1]) + ", |H| " + sci(worst[2])});

  // holomorphic curve: totally geodesic, both sides of the bound vanish
  double holo = 0.0;
  for (const auto& g : states.back().second.geometry)
    holo = std::max({holo, g.nablaJ_sq, g.H_sq, std::abs(1.0 - g.cos_alpha)});
  rep.checks.push_back({"immersion.holomorphic_curve", holo < 1e-10, "max of |nabla J|^2, |H|^2, |1-cos| " + sci(holo)});
}

inline void density_checks(VerifyReport& rep, const VerifyOptions& opt) {
  auto c2 = AmbientModel::flat_c2();
  c2.set_omega_sign(opt.omega_sign);
  const double tau = 0.01, r = 0.8;
  const auto plane = make_state(c2, surfaces::plane(128, 128));
  double law = 0.0;
  for (double d : {0.0, 0.5, 1.0, 2.0}) {
    const double off = d * std::sqrt(tau);
    const double phi = parabolic_density(c2, plane, DensityQuery{ChartPoint{0, Vec4(pi, pi, off, 0)}, tau, r});
    law = std::max(law, std::abs(phi - std::exp(-d * d / 4.0)));
  }
  rep.checks.push_back({"density.offset_plane_law", law < 1e-6, "max |Phi - exp(-d^2/4(t0-t))| = " + sci(law)});

  const auto other = make_state(c2, surfaces::plane(128, 128, Vec4::Unit(2), Vec4::Unit(3), Vec4(pi, pi, -pi, -pi)));
  const DensityQuery q{ChartPoint{0, Vec4(pi, pi, 0, 0)}, tau, r};
  const double two = parabolic_density(c2, plane, q) + parabolic_density(c2, other, q);
  rep.checks.push_back({"density.transverse_planes", std::abs(two - 2.0) < 1e-6, "Phi = " + std::to_string(two)});

  const auto s1 = make_state(c2, surfaces::round_sphere(64, 32, 1.0));
  const auto s2 = make_state(c2, surfaces::round_sphere(64, 32, 2.0));
  const Vec4 x = Vec4(0.3, 0.1, 0.2, 0.4);
  const double a = parabolic_density(c2, s1, DensityQuery{ChartPoint{0, x}, 0.09, 0.5});
  const double b = parabolic_density(c2, s2, DensityQuery{ChartPoint{0, 2.0 * x}, 0.36, 1.0});
  rep.checks.push_back({"density.parabolic_scaling", std::abs(a - b) < 1e-8, "|Phi - Phi_lambda| = " + sci(std::abs(a - b))});

  const bool cut = cutoff(0.0, 0.3) == 1.0 && cutoff(0.6, 0.3) == 0.0 && std::abs(cutoff(0.45, 0.3) - 0.5) < 1e-15;
  rep.checks.push_back({"density.cutoff", cut, "phi(0) = 1, phi(2r) = 0, phi(1.5r) = 1/2"});

  const auto fs = AmbientModel::fubini_study();
  const ChartPoint x0{0, Vec4(0.3, -0.2, 0.1, 0.4)};
  const auto chart = make_normal_chart(fs, x0);
  double nc = 0.0;
  Sampler rs(opt.seed + 7);
  for (int k = 0; k < 10; ++k) {
    const ChartPoint y = fs.exp_map(x0, rs.vec(0.5));
    nc = std::max(nc, std::abs(normal_coordinates(fs, chart, y).norm() - fs.distance(x0, y)));
  }
  rep.checks.push_back({"density.normal_coordinates", nc < 1e-8, "max ||F| - d| = " + sci(nc)});
}

inline RefinementTable residual_study(const std::string& name, const AmbientModel& m,
                                      const std::function<SurfaceGrid(int)>& make, const std::vector<int>& ns,
                                      double tstar, const std::function<std::string(int)>& label) {
  RefinementTable t{name, {}};
  const double kappa = kahler_angle_coefficient(m);
  for (int n : ns) {
    FlowConfig cfg;
    cfg.t_end = tstar;
    auto s = make_state(m, make(n));
    std::optional<PolarFilter> f;
    if (s.grid.topology == Topology::Sphere) f.emplace(s.grid, cfg.polar_filter_ratio);
    const PolarFilter* fp = f ? &*f : nullptr;
    while (s.t < tstar) s = step_with_dt(m, s, std::min(stable_time_step(s, cfg), tstar - s.t), cfg, fp);
    const double dt = stable_time_step(s, cfg);
    const auto s1 = step_with_dt(m, s, dt, cfg, fp);
    const auto s2 = step_with_dt(m, s1, dt, cfg, fp);
    t.rows.push_back({label(n), evolution_residual(s, s1, s2, kappa).max_norm, {}});
  }
  fill_orders(t);
  return t;
}

inline RefinementTable density_derivative_study(const Vec4& x0, const std::string& name) {
  const auto c2 = AmbientModel::flat_c2();
  RefinementTable t{name, {}};
  for (int n : {32, 64, 128}) {
    FlowConfig cfg;
    auto s = make_state(c2, surfaces::round_sphere(2 * n, n, 1.0));
    PolarFilter f(s.grid, cfg.polar_filter_ratio);
    const double tstar = 0.05;
    while (s.t < tstar) s = step_with_dt(c2, s, std::min(stable_time_step(s, cfg), tstar - s.t), cfg, &f);
    const double dt = stable_time_step(s, cfg);
    const auto b = step_with_dt(c2, s, dt, cfg, &f);
    const auto c = step_with_dt(c2, b, dt, cfg, &f);
    const auto r = density_derivative_check(c2, s, b, c, DerivativeQuery{x0, 0.5, 0.6});
    t.rows.push_back({std::to_string(2 * n) + "x" + std::to_string(n), std::abs(r.discrepancy), {}});
  }
  fill_orders(t);
  return t;
}

}  // namespace detail

inline VerifyReport run_verify(const VerifyOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  VerifyReport rep;
  detail::Sampler rs(opt.seed);
  detail::ambient_checks(rep, opt, rs);
  detail::immersion_checks(rep, opt, rs);
  detail::density_checks(rep, opt);

  if (opt.level == VerifyLevel::Full) {
    auto t4 = AmbientModel::flat_t4();
    auto fs = AmbientModel::fubini_study();
    t4.set_omega_sign(opt.omega_sign);
    fs.set_omega_sign(opt.omega_sign);
    auto torus = detail::residual_study(
        "kahler-angle residual, torus graph in flat-T4", t4,
        [](int n) { return surfaces::torus_graph(n, n, 0.2); }, {32, 64, 128}, 0.01,
        [](int n) { return std::to_string(n) + "x" + std::to_string(n); });
    auto sphere = detail::residual_study(
        "kahler-angle residual, perturbed CP1", fs, [&](int n) { return surfaces::perturbed_cp1(fs, 2 * n, n, 0.05); },
        {32, 64, 128}, 0.002, [](int n) { return std::to_string(2 * n) + "x" + std::to_string(n); });
    auto dphi = detail::density_derivative_study(Vec4::Zero(), "density derivative identity, centred query");
    auto dphi2 = detail::density_derivative_study(Vec4(0.3, 0.0, 0.2, 0.0), "density derivative identity, offset query");
    for (auto* t : {&torus, &sphere, &dphi, &dphi2}) {
      rep.checks.push_back({"refinement." + t->name, t->min_order() >= 1.8, "min observed order " + detail::sci(t->min_order())});
      rep.tables.push_back(*t);
    }
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace kflow
