#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace occ4d {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  constexpr double squared_norm() const { return dot(*this); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// 3x3 row-major matrix, used for rotations.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }

  double operator()(int r, int c) const { return m[3 * r + c]; }
  double& operator()(int r, int c) { return m[3 * r + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  static Mat3 rotation_z(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Mat3 r;
    r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    return r;
  }
};

/// Rigid transform: p_world = rotation * p + translation.
struct RigidPose {
  Mat3 rotation;
  Vec3 translation;

  static RigidPose identity() { return {}; }

  /// Orthonormality with det +1, tolerance 1e-6.
  bool valid(double tol = 1e-6) const {
    const Mat3 rtr = rotation.transposed() * rotation;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double want = (i == j) ? 1.0 : 0.0;
        if (std::abs(rtr(i, j) - want) > tol) return false;
      }
    return std::abs(rotation.determinant() - 1.0) <= tol && translation.finite();
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transposed() * (p - translation); }

  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transposed();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
};

enum class ClassLabel : std::uint8_t {
  background = 0,
  pedestrian = 1,
  vehicle = 2,
  other_foreground = 3,
};

inline const char* to_string(ClassLabel c) {
  switch (c) {
    case ClassLabel::background: return "background";
    case ClassLabel::pedestrian: return "pedestrian";
    case ClassLabel::vehicle: return "vehicle";
    case ClassLabel::other_foreground: return "other_foreground";
  }
  return "unknown";
}

/// A depth query ray for a future timestep.
struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
  std::optional<double> gt_depth;  // meters, > 0 when present
  int timestep = 0;  // future index, 0-based into the grid's T slices
  std::optional<ClassLabel> class_label;
};

using RayBatch = std::vector<Ray>;

struct VolumeBounds {
  Vec3 min_corner;
  Vec3 max_corner;

  bool valid() const {
    return min_corner.x < max_corner.x && min_corner.y < max_corner.y &&
           min_corner.z < max_corner.z;
  }
  bool contains(const Vec3& p) const {
    return p.x >= min_corner.x && p.x <= max_corner.x && p.y >= min_corner.y &&
           p.y <= max_corner.y && p.z >= min_corner.z && p.z <= max_corner.z;
  }
  Vec3 extent() const { return max_corner - min_corner; }
  double diagonal() const { return extent().norm(); }
};

struct RayInterval {
  double t_near = 0.0;
  double t_far = 0.0;
};

/// Slab intersection of a ray with an axis-aligned box, restricted to t >= 0.
/// An origin inside the box yields t_near = 0. Face grazes count as hits.
inline std::optional<RayInterval> ray_volume_intersection(const Vec3& origin,
                                                          const Vec3& direction,
                                                          const VolumeBounds& bounds) {
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double o = origin[axis];
    const double d = direction[axis];
    const double lo = bounds.min_corner[axis];
    const double hi = bounds.max_corner[axis];
    if (d == 0.0) {
      // axis-parallel: the slab never constrains t, but the ray must lie
      // within it; sitting exactly on a face grazes and counts as inside
      if (o < lo || o > hi) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / d;
    const double t1 = (lo - o) * inv;
    const double t2 = (hi - o) * inv;
    t_near = std::fmax(t_near, std::fmin(t1, t2));
    t_far = std::fmin(t_far, std::fmax(t1, t2));
  }
  if (t_near > t_far || !std::isfinite(t_far)) return std::nullopt;
  return RayInterval{t_near, t_far};
}

struct SphericalCoords {
  double azimuth;    // radians in (-pi, pi], atan2(y, x)
  double elevation;  // radians in [-pi/2, pi/2], asin(z / range)
  double range;      // meters
};

inline std::optional<SphericalCoords> spherical_project(const Vec3& point,
                                                        const Vec3& sensor_origin) {
  const Vec3 d = point - sensor_origin;
  const double r = d.norm();
  if (r == 0.0) return std::nullopt;
  return SphericalCoords{std::atan2(d.y, d.x), std::asin(std::clamp(d.z / r, -1.0, 1.0)), r};
}

inline Vec3 spherical_to_direction(double azimuth, double elevation) {
  const double ce = std::cos(elevation);
  return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
}

inline std::vector<Vec3> transform_points(const RigidPose& pose, const std::vector<Vec3>& points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(pose.apply(p));
  return out;
}

}  // namespace occ4d
