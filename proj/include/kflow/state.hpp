#pragma once

#include "kflow/geometry.hpp"

namespace kflow {

struct FlowState {
  SurfaceGrid grid;
  double t = 0.0;
  long step_index = 0;
  // Set once any tangential redistribution has touched this trajectory.
  bool redistributed = false;
  std::vector<NodeGeometry> geometry;
};

inline FlowState make_state(const AmbientModel& model, SurfaceGrid grid, double t = 0.0,
                            const GeometryOptions& opt = {}) {
  FlowState s;
  for (const auto& p : grid.nodes) model.require_valid(p);
  s.geometry = compute_geometry(model, grid, opt);
  s.grid = std::move(grid);
  s.t = t;
  return s;
}

inline ScalarField cos_alpha_field(const FlowState& s) {
  ScalarField f(s.grid.size());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = s.geometry[k].cos_alpha;
  return f;
}

// Nodes taking part in max-norm reductions (sphere pole rows excluded).
template <class Fn>
void for_interior_nodes(const SurfaceGrid& grid, Fn&& fn) {
  for (int j = 0; j < grid.nv; ++j) {
    if (grid.is_pole_row(j)) continue;
    for (int i = 0; i < grid.nu; ++i) fn(grid.index(i, j));
  }
}

}  // namespace kflow
