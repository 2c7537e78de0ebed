#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "occ4d/geometry.hpp"
#include "occ4d/grid.hpp"
#include "occ4d/renderer.hpp"
#include "occ4d/simulator.hpp"

namespace occ4d {

enum class FitVariant { static_grid, dynamic_grid };
enum class Supervision { past_rays, future_rays };

struct FitConfig {
  FitVariant variant = FitVariant::static_grid;
  int iterations = 500;
  double step_size = 1e-2;
  double init_logit = -4.0;  // near-free prior
};

/// Aligned past scans rasterized into one binary grid, replicated across all
/// future timesteps.
inline OccupancyGrid4D raytracing_baseline(const SequenceClip& clip, const VolumeBounds& bounds,
                                           double voxel_size, int t_future) {
  if (clip.past_frames.empty()) throw std::invalid_argument("raytracing_baseline: empty history");
  std::vector<Vec3> world_points;
  for (const Frame& frame : clip.past_frames) {
    for (const Vec3& p : frame.points) world_points.push_back(frame.pose.apply(p));
  }
  const OccupancyGrid4D base = rasterize_points(world_points, bounds, voxel_size);
  OccupancyGrid4D out(bounds, voxel_size, t_future);
  const std::size_t slice = base.voxels_per_slice();
  for (int t = 0; t < t_future; ++t) {
    std::copy(base.values().begin(), base.values().begin() + slice,
              out.values().begin() + t * slice);
  }
  return out;
}

/// Translation extrapolated linearly from the last two poses (per unit time),
/// rotation held at the last pose.
inline std::vector<RigidPose> constant_velocity_poses(const std::vector<TimedPose>& past,
                                                      const std::vector<double>& future_timestamps) {
  if (past.size() < 2) throw std::invalid_argument("constant_velocity_poses: need >= 2 poses");
  const TimedPose& a = past[past.size() - 2];
  const TimedPose& b = past.back();
  const double dt = b.timestamp - a.timestamp;
  if (dt <= 0.0) throw std::invalid_argument("constant_velocity_poses: non-increasing timestamps");
  const Vec3 velocity = (b.pose.translation - a.pose.translation) / dt;
  std::vector<RigidPose> out;
  out.reserve(future_timestamps.size());
  for (double t : future_timestamps) {
    RigidPose p = b.pose;
    p.translation = b.pose.translation + velocity * (t - b.timestamp);
    out.push_back(p);
  }
  return out;
}

/// Supervision rays built from a frame: origin at the sensor, one ray per
/// return with gt_depth = range. timestep -1 means "applies to every slice"
/// (past frames carry no future index).
inline RayBatch rays_from_frame(const Frame& frame, int timestep) {
  RayBatch rays;
  rays.reserve(frame.points.size());
  const Vec3 origin = frame.pose.translation;
  for (const Vec3& p : frame.points) {
    const Vec3 world = frame.pose.apply(p);
    const Vec3 delta = world - origin;
    const double range = delta.norm();
    if (range <= 0.0) continue;
    Ray ray;
    ray.origin = origin;
    ray.direction = delta / range;
    ray.gt_depth = range;
    ray.timestep = timestep;
    rays.push_back(ray);
  }
  return rays;
}

/// Nearest grid timestep for a frame timestamp, given the timestamps the
/// grid's slices represent.
inline int nearest_timestep(double timestamp, const std::vector<double>& slice_times) {
  int best = 0;
  double best_d = std::abs(timestamp - slice_times[0]);
  for (std::size_t i = 1; i < slice_times.size(); ++i) {
    const double d = std::abs(timestamp - slice_times[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

struct FitResult {
  OccupancyGrid4D grid;
  std::vector<double> loss_trace;  // summed L1 per iteration, before each step
};

namespace detail {

struct CachedRay {
  std::vector<std::int32_t> voxels;  // linear index within one slice
  std::vector<double> boundaries;    // entry distances
  double exit = 0.0;
  double gt = 0.0;
  int timestep = -1;  // -1 broadcasts to all slices
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// Gradient descent on logit-parametrized occupancies through the
/// differentiable renderer, minimizing the summed L1 depth loss.
/// supervision = past_rays is the honest forecasting mode; future_rays is an
/// oracle bound for tests.
inline FitResult fit_grid(const SequenceClip& clip, const VolumeBounds& bounds, double voxel_size,
                          int t_future, const FitConfig& config, Supervision supervision) {
  if (config.iterations < 1) throw std::invalid_argument("fit_grid: iterations must be >= 1");
  if (config.step_size < 0.0) throw std::invalid_argument("fit_grid: negative step_size");
  const std::vector<Frame>& frames =
      supervision == Supervision::past_rays ? clip.past_frames : clip.future_frames;
  if (frames.empty()) throw std::invalid_argument("fit_grid: no supervision frames");

  OccupancyGrid4D grid(bounds, voxel_size, t_future);
  const std::size_t slice = grid.voxels_per_slice();
  const int n_slices = config.variant == FitVariant::static_grid ? 1 : t_future;

  // future frames bucket to grid timesteps by nearest timestamp; past frames
  // supervise every slice
  std::vector<double> slice_times(t_future);
  for (int t = 0; t < t_future; ++t) {
    slice_times[t] = t < static_cast<int>(clip.future_frames.size())
                         ? clip.future_frames[t].timestamp
                         : static_cast<double>(t);
  }

  std::vector<detail::CachedRay> cached;
  for (const Frame& frame : frames) {
    const int timestep = supervision == Supervision::future_rays
                             ? nearest_timestep(frame.timestamp, slice_times)
                             : -1;
    for (const Ray& ray : rays_from_frame(frame, timestep)) {
      detail::CachedRay c;
      for (const TraversalStep& st : grid.traverse(ray.origin, ray.direction)) {
        c.voxels.push_back(static_cast<std::int32_t>(
            (static_cast<std::size_t>(st.voxel.ix) * grid.ny() + st.voxel.iy) * grid.nz() +
            st.voxel.iz));
        c.boundaries.push_back(st.entry_distance);
        c.exit = st.exit_distance;
      }
      c.gt = *ray.gt_depth;
      c.timestep = timestep;
      cached.push_back(std::move(c));
    }
  }

  std::vector<double> logits(slice * n_slices, config.init_logit);
  std::vector<double> occ(logits.size());
  std::vector<double> grad(logits.size());
  std::vector<double> tails;

  FitResult result{std::move(grid), {}};
  result.loss_trace.reserve(config.iterations);

  for (int iter = 0; iter < config.iterations; ++iter) {
    for (std::size_t i = 0; i < logits.size(); ++i) occ[i] = detail::sigmoid(logits[i]);
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;

    for (const detail::CachedRay& ray : cached) {
      const std::size_t n = ray.voxels.size();
      int s_begin = 0, s_end = n_slices;
      if (config.variant == FitVariant::dynamic_grid && ray.timestep >= 0) {
        s_begin = ray.timestep;
        s_end = ray.timestep + 1;
      }
      for (int s = s_begin; s < s_end; ++s) {
        const double* z = occ.data() + static_cast<std::size_t>(s) * slice;
        double* g = grad.data() + static_cast<std::size_t>(s) * slice;
        if (n == 0) continue;  // renders at gt, zero loss and gradient

        // forward: expected depth with virtual stop at gt
        tails.assign(n, 0.0);
        double e = ray.gt;
        for (std::size_t k = n; k-- > 0;) {
          tails[k] = e;
          e = z[ray.voxels[k]] * ray.boundaries[k] + (1.0 - z[ray.voxels[k]]) * e;
        }
        const double rendered = e;
        const double residual = ray.gt - rendered;
        loss += std::abs(residual);
        const double dloss = residual > 0.0 ? -1.0 : (residual < 0.0 ? 1.0 : 0.0);

        double prefix = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double zk = z[ray.voxels[k]];
          const double dz = dloss * prefix * (ray.boundaries[k] - tails[k]);
          g[ray.voxels[k]] += dz * zk * (1.0 - zk);
          prefix *= 1.0 - zk;
        }
      }
    }

    if (!std::isfinite(loss)) throw std::runtime_error("fit_grid: loss diverged");
    result.loss_trace.push_back(loss);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= config.step_size * grad[i];
  }

  for (int t = 0; t < t_future; ++t) {
    const std::size_t src = config.variant == FitVariant::static_grid
                                ? 0
                                : static_cast<std::size_t>(t) * slice;
    for (std::size_t i = 0; i < slice; ++i) {
      result.grid.values()[static_cast<std::size_t>(t) * slice + i] =
          static_cast<float>(detail::sigmoid(logits[src + i]));
    }
  }
  return result;
}

}  // namespace occ4d
