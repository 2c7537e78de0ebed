#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "occ4d/geometry.hpp"
#include "occ4d/grid.hpp"

namespace occ4d {

/// Axis-aligned box moving at constant velocity.
struct MovingBox {
  Vec3 min_corner;  // at t = 0
  Vec3 max_corner;  // at t = 0
  Vec3 velocity;    // m/s

  VolumeBounds bounds_at(double time) const {
    const Vec3 shift = velocity * time;
    return {min_corner + shift, max_corner + shift};
  }
};

/// Analytic world: infinite ground plane (solid below ground_z) plus
/// constant-velocity boxes.
struct Scene {
  double ground_z = 0.0;
  std::vector<MovingBox> boxes;

  bool is_solid(const Vec3& p, double time) const {
    if (p.z < ground_z) return true;
    for (const MovingBox& b : boxes) {
      const VolumeBounds bb = b.bounds_at(time);
      if (bb.contains(p)) return true;
    }
    return false;
  }
};

/// Exact nearest surface hit along a ray, or nothing within max_range.
inline std::optional<double> cast_ray_exact(const Scene& scene, double time, const Vec3& origin,
                                            const Vec3& direction, double max_range) {
  double best = max_range;
  bool hit = false;

  if (direction.z != 0.0) {
    const double t = (scene.ground_z - origin.z) / direction.z;
    if (t > 0.0 && t <= best) {
      best = t;
      hit = true;
    }
  }
  for (const MovingBox& box : scene.boxes) {
    const VolumeBounds bb = box.bounds_at(time);
    if (const auto interval = ray_volume_intersection(origin, direction, bb)) {
      const double t = interval->t_near > 0.0 ? interval->t_near : interval->t_far;
      if (t > 0.0 && t <= best) {
        best = t;
        hit = true;
      }
    }
  }
  if (!hit) return std::nullopt;
  return best;
}

/// LiDAR beam pattern: evenly spaced azimuths, explicit elevation table.
struct LidarModel {
  int azimuth_count = 0;
  std::vector<double> elevation_angles;  // radians, strictly increasing
  double max_range = 100.0;

  bool valid() const {
    if (azimuth_count < 1 || max_range <= 0.0 || elevation_angles.empty()) return false;
    for (std::size_t i = 1; i < elevation_angles.size(); ++i)
      if (elevation_angles[i] <= elevation_angles[i - 1]) return false;
    return true;
  }

  static std::vector<double> linspace_deg(double lo_deg, double hi_deg, int n) {
    std::vector<double> angles(n);
    constexpr double deg = M_PI / 180.0;
    for (int i = 0; i < n; ++i)
      angles[i] = (lo_deg + (hi_deg - lo_deg) * i / (n - 1)) * deg;
    return angles;
  }

  /// 32-beam rotating LiDAR preset.
  static LidarModel hdl32(int azimuth_count = 1024, double max_range = 100.0) {
    return {azimuth_count, linspace_deg(-30.67, 10.67, 32), max_range};
  }
  /// 64-beam rotating LiDAR preset.
  static LidarModel hdl64(int azimuth_count = 2048, double max_range = 120.0) {
    return {azimuth_count, linspace_deg(-24.9, 2.0, 64), max_range};
  }
  /// Two stacked 32-beam units.
  static LidarModel stacked2x32(int azimuth_count = 1024, double max_range = 200.0) {
    std::vector<double> angles = linspace_deg(-25.0, -0.4, 32);
    const std::vector<double> upper = linspace_deg(0.4, 25.0, 32);
    angles.insert(angles.end(), upper.begin(), upper.end());
    return {azimuth_count, std::move(angles), max_range};
  }
};

/// One ray per (azimuth, elevation). Hits become world-frame points; misses
/// are dropped. Optional Gaussian range noise (sigma > 0) for robustness
/// tests; the default is noise-free.
inline std::vector<Vec3> scan(const Scene& scene, double time, const RigidPose& sensor_pose,
                              const LidarModel& lidar, double noise_sigma = 0.0,
                              std::uint64_t noise_seed = 0) {
  if (!lidar.valid()) throw std::invalid_argument("scan: invalid LidarModel");
  std::vector<Vec3> points;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  for (int ai = 0; ai < lidar.azimuth_count; ++ai) {
    const double az = 2.0 * M_PI * ai / lidar.azimuth_count - M_PI;
    for (double el : lidar.elevation_angles) {
      const Vec3 dir_world = sensor_pose.rotation * spherical_to_direction(az, el);
      if (auto depth = cast_ray_exact(scene, time, sensor_pose.translation, dir_world,
                                      lidar.max_range)) {
        double d = *depth;
        if (noise_sigma > 0.0) d = std::max(1e-6, d + noise(rng));
        points.push_back(sensor_pose.translation + d * dir_world);
      }
    }
  }
  return points;
}

struct Frame {
  std::vector<Vec3> points;  // sensor frame
  RigidPose pose;            // world-from-sensor
  double timestamp = 0.0;    // seconds
};

struct SequenceClip {
  std::vector<Frame> past_frames;    // includes the present frame last
  std::vector<Frame> future_frames;  // ground truth
  double frequency = 2.0;            // Hz
};

struct TimedPose {
  RigidPose pose;
  double timestamp = 0.0;
};

/// Scans the scene at each trajectory pose and splits past/future at
/// present_index (past gets frames [0, present_index], exclusive of future).
inline SequenceClip generate_clip(const Scene& scene, const std::vector<TimedPose>& trajectory,
                                  const LidarModel& lidar, int present_index,
                                  double frequency = 2.0) {
  if (trajectory.size() < 2) throw std::invalid_argument("generate_clip: need >= 2 poses");
  if (present_index < 0 || present_index + 1 >= static_cast<int>(trajectory.size()))
    throw std::invalid_argument("generate_clip: present_index out of range");
  SequenceClip clip;
  clip.frequency = frequency;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const TimedPose& tp = trajectory[i];
    Frame frame;
    frame.pose = tp.pose;
    frame.timestamp = tp.timestamp;
    const std::vector<Vec3> world_points = scan(scene, tp.timestamp, tp.pose, lidar);
    frame.points.reserve(world_points.size());
    for (const Vec3& p : world_points) frame.points.push_back(tp.pose.apply_inverse(p));
    if (static_cast<int>(i) <= present_index)
      clip.past_frames.push_back(std::move(frame));
    else
      clip.future_frames.push_back(std::move(frame));
  }
  return clip;
}

/// Binary occupancy by the voxel-center rule: 1 iff the center is inside a
/// box or below ground at the given time.
inline OccupancyGrid4D ground_truth_occupancy(const Scene& scene, double time,
                                              const VolumeBounds& bounds, double voxel_size) {
  OccupancyGrid4D grid(bounds, voxel_size, 1);
  const Vec3 origin = grid.bounds().min_corner;
  for (int ix = 0; ix < grid.nx(); ++ix)
    for (int iy = 0; iy < grid.ny(); ++iy)
      for (int iz = 0; iz < grid.nz(); ++iz) {
        const Vec3 center = origin + Vec3{(ix + 0.5) * voxel_size, (iy + 0.5) * voxel_size,
                                          (iz + 0.5) * voxel_size};
        if (scene.is_solid(center, time)) grid.at(0, ix, iy, iz) = 1.0f;
      }
  return grid;
}

}  // namespace occ4d
