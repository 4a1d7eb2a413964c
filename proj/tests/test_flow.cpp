#include "kflow/flow.hpp"
#include "kflow/surfaces.hpp"

#include <gtest/gtest.h>

using namespace kflow;

namespace {

double mean_radius(const SurfaceGrid& g) {
  double s = 0.0;
  for (const auto& p : g.nodes) s += p.x.norm();
  return s / double(g.size());
}

}  // namespace

TEST(Flow, ShrinkingSphereFollowsExactRadius) {
  const auto c2 = AmbientModel::flat_c2();
  FlowConfig cfg;
  cfg.t_end = 0.1;
  double worst = 0.0;
  RunHooks hooks;
  hooks.on_state = [&](const FlowState& s) {
    worst = std::max(worst, std::abs(mean_radius(s.grid) - std::sqrt(1.0 - 4.0 * s.t)));
  };
  const auto r = run(c2, surfaces::round_sphere(48, 24, 1.0), cfg, hooks);
  EXPECT_EQ(r.stop, StopReason::ReachedTEnd);
  EXPECT_DOUBLE_EQ(r.final_t, 0.1);
  EXPECT_LT(worst, 1e-4);
}

TEST(Flow, SphereOffsetFromOriginShrinksAboutItsCentre) {
  const auto c2 = AmbientModel::flat_c2();
  const Vec4 c(0.5, -1.0, 0.25, 2.0);
  FlowConfig cfg;
  cfg.t_end = 0.05;
  const auto r = run(c2, surfaces::round_sphere(32, 16, 1.0, c), cfg);
  double rad = 0.0;
  for (const auto& p : r.final_state->grid.nodes) rad = std::max(rad, std::abs((p.x - c).norm() - std::sqrt(0.8)));
  EXPECT_LT(rad, 1e-3);
}

TEST(Flow, SphereHitsBlowupFlagBeforeExtinction) {
  const auto c2 = AmbientModel::flat_c2();
  FlowConfig cfg;
  cfg.t_end = 0.3;
  const auto r = run(c2, surfaces::round_sphere(32, 16, 1.0), cfg);
  EXPECT_EQ(r.stop, StopReason::BlowupFlag);
  EXPECT_LT(r.final_t, 0.25);
  EXPECT_GT(r.final_t, 0.2);
  EXPECT_NEAR(r.blowup_threshold * std::sqrt(4.0 * pi) / 1e3, 1.0, 1e-3);
}

TEST(Flow, MinimalSurfacesAreStationary) {
  const auto c2 = AmbientModel::flat_c2();
  FlowConfig cfg;
  cfg.t_end = 0.1;
  cfg.converged_H_tol = 0.0;
  const auto g = surfaces::complex_line(16, 16, cplx(0.5, 0.5));
  const auto r = run(c2, g, cfg);
  for (std::size_t n = 0; n < g.size(); ++n) EXPECT_LT((r.final_state->grid.nodes[n].x - g.nodes[n].x).norm(), 1e-12);
}

TEST(Flow, HolomorphicLineConvergesImmediately) {
  const auto fs = AmbientModel::fubini_study();
  const auto r = run(fs, surfaces::cp1(fs, 32, 16), FlowConfig{});
  EXPECT_EQ(r.stop, StopReason::Converged);
  EXPECT_EQ(r.steps, 0);
  EXPECT_LT(r.holomorphicity_gap, 1e-10);
}

TEST(Flow, PerturbedLineFlowsBackToHolomorphic) {
  const auto fs = AmbientModel::fubini_study();
  FlowConfig cfg;
  cfg.t_end = 3.0;
  cfg.snapshot_stride = 50;
  const auto r = run(fs, surfaces::perturbed_cp1(fs, 32, 16, 0.05), cfg);
  ASSERT_EQ(r.stop, StopReason::Converged);
  EXPECT_LT(r.max_H_final, 1e-4);
  EXPECT_LT(r.holomorphicity_gap, 1e-6);
  EXPECT_EQ(r.snapshots.back().step_index, r.steps);
  EXPECT_EQ(r.series.back().step_index, r.steps);
}

TEST(Flow, TimeStepScalesWithSpacingSquared) {
  const auto t4 = AmbientModel::flat_t4();
  FlowConfig cfg;
  const double a = stable_time_step(make_state(t4, surfaces::torus_graph(32, 32, 0.2)), cfg);
  const double b = stable_time_step(make_state(t4, surfaces::torus_graph(64, 64, 0.2)), cfg);
  EXPECT_NEAR(a / b, 4.0, 0.05);
}

TEST(Flow, PolarFilterRelaxesSphereTimeStep) {
  const auto c2 = AmbientModel::flat_c2();
  const auto s = make_state(c2, surfaces::round_sphere(64, 32, 1.0));
  FlowConfig on, off;
  off.polar_filter = false;
  EXPECT_GT(stable_time_step(s, on), 10.0 * stable_time_step(s, off));
  FlowConfig wide;
  wide.polar_filter_ratio = 4.0;
  EXPECT_LT(stable_time_step(s, wide), stable_time_step(s, on));
}

TEST(Flow, RedistributionKeepsTheImage) {
  const auto c2 = AmbientModel::flat_c2();
  const auto s = make_state(c2, surfaces::clifford_torus(32, 32, 1.0, 1.0, 0.3));
  const auto r = redistribute(c2, s, 0.2);
  EXPECT_TRUE(r.redistributed);
  for (const auto& p : r.grid.nodes) {
    EXPECT_NEAR(std::hypot(p.x[0], p.x[1]), 1.0, 2e-3);
    EXPECT_NEAR(std::hypot(p.x[2], p.x[3]), 1.0, 1e-12);
  }
  // evens out the skewed parametrization
  auto spread = [](const FlowState& st) {
    double lo = infinity, hi = 0.0;
    for (const auto& g : st.geometry) lo = std::min(lo, g.g(0, 0)), hi = std::max(hi, g.g(0, 0));
    return hi / lo;
  };
  EXPECT_LT(spread(r), spread(s));
}

TEST(Flow, AbortHookStopsTheRun) {
  const auto c2 = AmbientModel::flat_c2();
  int calls = 0;
  RunHooks hooks;
  hooks.should_abort = [&] { return ++calls > 3; };
  const auto r = run(c2, surfaces::round_sphere(16, 8, 1.0), FlowConfig{}, hooks);
  EXPECT_EQ(r.stop, StopReason::Aborted);
  EXPECT_EQ(r.steps, 3);
}

TEST(Flow, DegenerateInitialGridIsReported) {
  const auto c2 = AmbientModel::flat_c2();
  auto g = surfaces::plane(8, 8);
  for (auto& p : g.nodes) p.x.setZero();
  const auto r = run(c2, g, FlowConfig{});
  EXPECT_EQ(r.stop, StopReason::DegenerateGrid);
  EXPECT_FALSE(r.stop_detail.empty());
}

TEST(Flow, RunsAreDeterministic) {
  const auto fs = AmbientModel::fubini_study();
  FlowConfig cfg;
  cfg.t_end = 0.02;
  const auto a = run(fs, surfaces::perturbed_cp1(fs, 32, 16, 0.1), cfg);
  const auto b = run(fs, surfaces::perturbed_cp1(fs, 32, 16, 0.1), cfg);
  ASSERT_EQ(a.series.size(), b.series.size());
  for (std::size_t k = 0; k < a.series.size(); ++k) {
    EXPECT_EQ(a.series[k].t, b.series[k].t);
    EXPECT_EQ(a.series[k].V, b.series[k].V);
  }
}

TEST(Flow, InvalidConfigurationsAreRejected) {
  FlowConfig c;
  c.cfl_factor = 0.7;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.snapshot_stride = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.polar_filter_ratio = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.blowup_threshold = -1.0;
  EXPECT_THROW(c.validate(), Error);
}
