#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "occ4d/geometry.hpp"
#include "occ4d/grid.hpp"

namespace occ4d {

/// Occupancies and stopping distances along one traversed ray.
/// boundary_distances[i] is the entry face of voxel i (rays stop at
/// boundaries, not inside voxels); exit_distance is where the ray leaves
/// the volume.
struct RaySample {
  std::vector<double> occupancies;
  std::vector<double> boundary_distances;
  double exit_distance = 0.0;
  std::optional<double> gt_depth;

  std::size_t size() const { return occupancies.size(); }
};

struct RenderResult {
  double expected_depth = 0.0;
  std::vector<double> stop_probabilities;
  double residual_mass = 1.0;
};

/// p_i = z_i * prod_{j<i}(1 - z_j); residual = prod_j(1 - z_j).
/// The residual is the mass that escapes every traversed voxel, so the
/// distribution sums to one.
inline std::pair<std::vector<double>, double> stop_probabilities(
    const std::vector<double>& occupancies) {
  std::vector<double> p(occupancies.size());
  double transmittance = 1.0;
  for (std::size_t i = 0; i < occupancies.size(); ++i) {
    p[i] = occupancies[i] * transmittance;
    transmittance *= 1.0 - occupancies[i];
  }
  return {std::move(p), transmittance};
}

namespace detail {

inline RenderResult render_with_tail(const RaySample& sample, double tail_depth) {
  auto [p, residual] = stop_probabilities(sample.occupancies);
  double depth = residual * tail_depth;
  for (std::size_t i = 0; i < p.size(); ++i) depth += p[i] * sample.boundary_distances[i];
  return {depth, std::move(p), residual};
}

}  // namespace detail

/// Training mode: escaping mass stops at a virtual point at the ground-truth
/// depth. For an empty sample the render equals the ground truth exactly.
inline RenderResult expected_depth_train(const RaySample& sample) {
  if (!sample.gt_depth) throw std::invalid_argument("expected_depth_train: gt_depth required");
  return detail::render_with_tail(sample, *sample.gt_depth);
}

/// Inference mode: escaping mass stops at the volume boundary. A ray that
/// misses the volume (n == 0) has no depth.
inline std::optional<RenderResult> expected_depth_infer(const RaySample& sample) {
  if (sample.size() == 0) return std::nullopt;
  return detail::render_with_tail(sample, sample.exit_distance);
}

enum class RenderMode { train, infer };

/// Analytic d(expected_depth)/d(z_k), division-free: with prefix
/// transmittance P_k = prod_{j<k}(1-z_j) and conditional tail depth E_k
/// (expected depth given the ray passed voxels 1..k), the partial is
/// P_k * (lambda_k - E_k).
inline std::vector<double> grad_expected_depth(const RaySample& sample,
                                               RenderMode mode = RenderMode::train) {
  const std::size_t n = sample.size();
  if (n == 0) throw std::invalid_argument("grad_expected_depth: empty sample");
  double tail_depth;
  if (mode == RenderMode::train) {
    if (!sample.gt_depth) throw std::invalid_argument("grad_expected_depth: gt_depth required");
    tail_depth = *sample.gt_depth;
  } else {
    tail_depth = sample.exit_distance;
  }
  // tails[k] = expected depth given the ray passed voxels 0..k
  std::vector<double> tails(n);
  tails[n - 1] = tail_depth;
  for (std::size_t k = n - 1; k-- > 0;) {
    tails[k] = sample.occupancies[k + 1] * sample.boundary_distances[k + 1] +
               (1.0 - sample.occupancies[k + 1]) * tails[k + 1];
  }

  std::vector<double> grad(n);
  double prefix = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    grad[k] = prefix * (sample.boundary_distances[k] - tails[k]);
    prefix *= 1.0 - sample.occupancies[k];
  }
  return grad;
}

/// Builds the RaySample of a ray through one temporal slice of the grid.
inline RaySample sample_ray(const OccupancyGrid4D& grid, int timestep, const Ray& ray) {
  if (timestep < 0 || timestep >= grid.n_timesteps())
    throw std::out_of_range("sample_ray: timestep out of range");
  RaySample s;
  const auto steps = grid.traverse(ray.origin, ray.direction);
  s.occupancies.reserve(steps.size());
  s.boundary_distances.reserve(steps.size());
  for (const TraversalStep& st : steps) {
    s.occupancies.push_back(grid.at(timestep, st.voxel));
    s.boundary_distances.push_back(st.entry_distance);
  }
  if (!steps.empty()) s.exit_distance = steps.back().exit_distance;
  s.gt_depth = ray.gt_depth;
  return s;
}

struct L1LossResult {
  double loss_sum = 0.0;   // Eq.-style sum over rays
  double loss_mean = 0.0;  // sum / n_rays
  std::vector<double> per_ray_residuals;  // gt - rendered, signed
};

/// Sum of |gt - rendered| in training mode. Rays missing the volume render
/// at the ground truth and contribute zero.
inline L1LossResult l1_depth_loss(const OccupancyGrid4D& grid, const RayBatch& rays) {
  L1LossResult r;
  r.per_ray_residuals.reserve(rays.size());
  for (const Ray& ray : rays) {
    if (!ray.gt_depth) throw std::invalid_argument("l1_depth_loss: ray without gt_depth");
    const RaySample s = sample_ray(grid, ray.timestep, ray);
    const RenderResult rr = expected_depth_train(s);
    const double residual = *ray.gt_depth - rr.expected_depth;
    r.per_ray_residuals.push_back(residual);
    r.loss_sum += std::abs(residual);
  }
  r.loss_mean = rays.empty() ? 0.0 : r.loss_sum / static_cast<double>(rays.size());
  return r;
}

// --- dense depth images ------------------------------------------------------

constexpr double kDepthSentinel = -1.0;

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depths;  // row-major, kDepthSentinel for misses

  double& at(int x, int y) { return depths[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return depths[static_cast<std::size_t>(y) * width + x]; }
};

/// Pinhole camera ray through a pixel center. Camera frame: +z forward,
/// +x right, +y down; fov is the horizontal full angle.
inline Vec3 pinhole_ray_direction(int px, int py, int width, int height, double fov) {
  const double tan_half = std::tan(fov / 2.0);
  const double u = ((px + 0.5) / width * 2.0 - 1.0) * tan_half;
  const double v = ((py + 0.5) / height * 2.0 - 1.0) * tan_half * height / width;
  return Vec3{u, v, 1.0}.normalized();
}

inline DepthImage render_depth_image(const OccupancyGrid4D& grid, int timestep,
                                     const RigidPose& camera_pose, int width, int height,
                                     double fov) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("render_depth_image: zero image size");
  if (timestep < 0 || timestep >= grid.n_timesteps())
    throw std::out_of_range("render_depth_image: timestep out of range");
  DepthImage img{width, height, std::vector<double>(static_cast<std::size_t>(width) * height)};
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      Ray ray;
      ray.origin = camera_pose.translation;
      ray.direction = camera_pose.rotation * pinhole_ray_direction(px, py, width, height, fov);
      const auto result = expected_depth_infer(sample_ray(grid, timestep, ray));
      img.at(px, py) = result ? result->expected_depth : kDepthSentinel;
    }
  }
  return img;
}

/// 16-bit binary PGM, value = round(depth * 256) clamped, sentinel = 0.
/// A sidecar <path>.scale.txt records the fixed-point scale.
inline void write_depth_pgm(const DepthImage& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "P5\n" << img.width << " " << img.height << "\n65535\n";
  for (double d : img.depths) {
    std::uint16_t v = 0;
    if (d != kDepthSentinel) {
      const double scaled = std::round(d * 256.0);
      v = static_cast<std::uint16_t>(std::clamp(scaled, 0.0, 65535.0));
    }
    // PGM 16-bit samples are most-significant byte first
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
    f.write(bytes, 2);
  }
  if (!f) throw std::runtime_error("write failed: " + path);
  std::ofstream sidecar(path + ".scale.txt");
  sidecar << "depth_scale = 256 (pixel value = depth_m * 256, 0 = no intersection)\n";
}

}  // namespace occ4d
