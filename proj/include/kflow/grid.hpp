#pragma once

// Structured parametric grids for closed immersed surfaces.
//
// Node (i, j) has parameters (u_i, v_j): u is always 2*pi periodic. For the
// torus, v is 2*pi periodic too, and coordinate lifts may jump by the wrap
// vectors across the seams. For the sphere, v is colatitude sampled at cell
// centres (j + 1/2) * pi / nv; rows past a pole are ghosts taken from the
// partner row with longitude shifted by half a period.

#include "kflow/ambient.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

namespace kflow {

enum class Topology { Torus, Sphere };

inline const char* to_string(Topology t) { return t == Topology::Torus ? "torus" : "sphere"; }

struct SurfaceGrid {
  Topology topology = Topology::Torus;
  int nu = 0;
  int nv = 0;
  // +1: oriented tangent basis (d_u, d_v); -1: (d_v, d_u).
  int orientation = 1;
  std::vector<ChartPoint> nodes;  // index i + nu * j
  Vec4 wrap_u = Vec4::Zero();
  Vec4 wrap_v = Vec4::Zero();

  SurfaceGrid() = default;
  SurfaceGrid(Topology topo, int nu_, int nv_) : topology(topo), nu(nu_), nv(nv_), nodes(std::size_t(nu_) * nv_) {
    if (nu < 5 || nv < 5) throw Error(ErrorKind::Config, "grid dimensions must be at least 5");
    if (topology == Topology::Sphere && nu % 2 != 0)
      throw Error(ErrorKind::Config, "sphere grids need an even longitude count");
  }

  std::size_t size() const { return nodes.size(); }
  std::size_t index(int i, int j) const { return std::size_t(i) + std::size_t(nu) * std::size_t(j); }
  ChartPoint& at(int i, int j) { return nodes[index(i, j)]; }
  const ChartPoint& at(int i, int j) const { return nodes[index(i, j)]; }

  double du() const { return two_pi / nu; }
  double dv() const { return topology == Topology::Torus ? two_pi / nv : pi / nv; }
  double u_param(int i) const { return i * du(); }
  double v_param(int j) const { return topology == Topology::Torus ? j * dv() : (j + 0.5) * dv(); }

  bool is_pole_row(int j) const { return topology == Topology::Sphere && (j == 0 || j == nv - 1); }

  // Resolves an arbitrary (i, j) to a stored node plus the coordinate offset
  // its lift carries across torus seams.
  struct Ref {
    std::size_t node;
    Vec4 offset;
  };

  Ref resolve(int i, int j) const {
    Vec4 off = Vec4::Zero();
    if (topology == Topology::Torus) {
      const int qi = floor_div(i, nu), qj = floor_div(j, nv);
      i -= qi * nu;
      j -= qj * nv;
      off = qi * wrap_u + qj * wrap_v;
    } else {
      if (j < 0) {
        j = -1 - j;
        i += nu / 2;
      } else if (j >= nv) {
        j = 2 * nv - 1 - j;
        i += nu / 2;
      }
      i = i - floor_div(i, nu) * nu;
    }
    return Ref{index(i, j), off};
  }

  static int floor_div(int a, int b) { return (a >= 0) ? a / b : -((-a + b - 1) / b); }
};

// 5x5 stencil neighbourhoods of every node, entry a + 5 b holding the node
// at offset (a - 2, b - 2) and the seam crossings (qu, qv) of its lift.
struct StencilTable {
  struct Entry {
    std::uint32_t node;
    std::int8_t qu, qv;
  };
  std::vector<std::array<Entry, 25>> entries;
};

inline StencilTable build_stencil_table(const SurfaceGrid& grid) {
  StencilTable t;
  t.entries.resize(grid.size());
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i)
      for (int b = 0; b < 5; ++b)
        for (int a = 0; a < 5; ++a) {
          const int ii = i + a - 2, jj = j + b - 2;
          const auto r = grid.resolve(ii, jj);
          std::int8_t qu = 0, qv = 0;
          if (grid.topology == Topology::Torus) {
            qu = static_cast<std::int8_t>(SurfaceGrid::floor_div(ii, grid.nu));
            qv = static_cast<std::int8_t>(SurfaceGrid::floor_div(jj, grid.nv));
          }
          t.entries[grid.index(i, j)][a + 5 * b] = {static_cast<std::uint32_t>(r.node), qu, qv};
        }
  return t;
}

// Tables depend only on the grid shape; cached per thread.
inline const StencilTable& stencil_table(const SurfaceGrid& grid) {
  thread_local std::map<std::tuple<int, int, int>, StencilTable> cache;
  const auto key = std::make_tuple(static_cast<int>(grid.topology), grid.nu, grid.nv);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_stencil_table(grid)).first;
  return it->second;
}

// Fourth-order central difference weights.
inline constexpr std::array<double, 5> d1_weights = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
inline constexpr std::array<double, 5> d2_weights = {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};

// Latitude quadrature weights for sphere grids: Fejer's first rule in
// x = cos(theta), divided by sin(theta) so that sum_j w_j f(theta_j)
// approximates the integral of f over [0, pi] for f = sin(theta) * smooth.
inline std::vector<double> latitude_weights(int nv) {
  std::vector<double> w(nv);
  for (int j = 0; j < nv; ++j) {
    const double th = (j + 0.5) * pi / nv;
    double s = 0.0;
    for (int k = 1; k <= nv / 2; ++k) s += std::cos(2.0 * k * th) / (4.0 * k * k - 1.0);
    w[j] = (2.0 / nv) * (1.0 - 2.0 * s) / std::sin(th);
  }
  return w;
}

// Parameter-space quadrature weight of each node (multiplies sqrt(det g)).
inline std::vector<double> parameter_weights(const SurfaceGrid& grid) {
  std::vector<double> w(grid.size());
  if (grid.topology == Topology::Torus) {
    std::fill(w.begin(), w.end(), grid.du() * grid.dv());
    return w;
  }
  const auto lat = latitude_weights(grid.nv);
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nu; ++i) w[grid.index(i, j)] = grid.du() * lat[j];
  return w;
}

// Magnitude of the symbol of the d2 stencil at wavenumber k, spacing h.
inline double d2_symbol(int k, double h) {
  const double kh = k * h;
  return (30.0 - 32.0 * std::cos(kh) + 2.0 * std::cos(2.0 * kh)) / (12.0 * h * h);
}

// Polar damping on sphere grids. Longitudinal mode k of row j has stencil
// eigenvalue d2_symbol(k) / sin^2(theta_j) relative to the latitude
// direction; modes above `ratio` times the latitude-direction maximum are
// scaled down to exactly that eigenvalue, so they still relax, just no
// faster than the time step allows. gains[j][k] for k = 0 .. nu/2.
inline std::vector<std::vector<double>> polar_damping(const SurfaceGrid& grid, double ratio = 1.0) {
  std::vector<std::vector<double>> gains(grid.nv, std::vector<double>(grid.nu / 2 + 1, 1.0));
  if (grid.topology != Topology::Sphere) return gains;
  const double limit = ratio * 16.0 / (3.0 * grid.dv() * grid.dv());
  for (int j = 0; j < grid.nv; ++j) {
    const double allowed = limit * std::pow(std::sin(grid.v_param(j)), 2);
    for (int k = 1; k <= grid.nu / 2; ++k) gains[j][k] = std::min(1.0, allowed / d2_symbol(k, grid.du()));
  }
  return gains;
}

inline bool damped_row(const std::vector<double>& gains) {
  return std::any_of(gains.begin(), gains.end(), [](double g) { return g < 1.0; });
}

// Effective longitudinal parameter spacing of each row after damping.
inline std::vector<double> effective_u_spacing(const SurfaceGrid& grid, double ratio = 1.0) {
  const auto gains = polar_damping(grid, ratio);
  std::vector<double> h(grid.nv, grid.du());
  for (int j = 0; j < grid.nv; ++j) {
    if (!damped_row(gains[j])) continue;
    double top = 0.0;
    for (int k = 1; k <= grid.nu / 2; ++k) top = std::max(top, gains[j][k] * d2_symbol(k, grid.du()));
    h[j] = std::sqrt(16.0 / (3.0 * top));
  }
  return h;
}

}  // namespace kflow
