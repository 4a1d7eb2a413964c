#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kflow {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double infinity = std::numeric_limits<double>::infinity();

enum class ErrorKind {
  ChartDomain,
  GeodesicEscape,
  LogDivergence,
  DegenerateImmersion,
  Config,
  OutOfBall,
  NotApplicable,
  Calibration,
  Io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::ChartDomain: return "chart-domain";
    case ErrorKind::GeodesicEscape: return "geodesic-escape";
    case ErrorKind::LogDivergence: return "log-divergence";
    case ErrorKind::DegenerateImmersion: return "degenerate-immersion";
    case ErrorKind::Config: return "config";
    case ErrorKind::OutOfBall: return "out-of-ball";
    case ErrorKind::NotApplicable: return "not-applicable";
    case ErrorKind::Calibration: return "calibration-failure";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// A point of the ambient 4-manifold in a named coordinate chart.
// Real coordinates are ordered (x1, y1, x2, y2) with z_k = x_k + i y_k.
struct ChartPoint {
  int chart = 0;
  Vec4 x = Vec4::Zero();
};

struct TangentVector {
  ChartPoint base;
  Vec4 v = Vec4::Zero();
};

// Complex pair view of a real 4-vector.
inline std::array<cplx, 2> to_complex(const Vec4& x) {
  return {cplx(x[0], x[1]), cplx(x[2], x[3])};
}

inline Vec4 from_complex(const cplx& a, const cplx& b) {
  return Vec4(a.real(), a.imag(), b.real(), b.imag());
}

// The constant complex structure of every shipped chart: J dx_k = dy_k.
inline Mat4 standard_complex_structure() {
  Mat4 j = Mat4::Zero();
  j(1, 0) = 1.0;
  j(0, 1) = -1.0;
  j(3, 2) = 1.0;
  j(2, 3) = -1.0;
  return j;
}

}  // namespace kflow
