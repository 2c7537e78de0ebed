#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "occ4d/geometry.hpp"

namespace occ4d {

struct VoxelIndex {
  int ix = 0;
  int iy = 0;
  int iz = 0;
  bool operator==(const VoxelIndex&) const = default;
};

struct TraversalStep {
  VoxelIndex voxel;
  double entry_distance = 0.0;
  double exit_distance = 0.0;
};

/// Dense per-voxel, per-future-timestep occupancy in [0,1].
/// Memory layout is timestep-major, then x, y, z.
class OccupancyGrid4D {
 public:
  OccupancyGrid4D() = default;

  /// Bounds are expanded outward (max corner) to a whole number of voxels.
  OccupancyGrid4D(const VolumeBounds& requested, double voxel_size, int n_timesteps,
                  double initial_value = 0.0)
      : voxel_size_(voxel_size), n_timesteps_(n_timesteps) {
    if (!requested.valid()) throw std::invalid_argument("OccupancyGrid4D: invalid bounds");
    if (voxel_size <= 0.0) throw std::invalid_argument("OccupancyGrid4D: voxel_size must be > 0");
    if (n_timesteps < 1) throw std::invalid_argument("OccupancyGrid4D: n_timesteps must be >= 1");
    bounds_.min_corner = requested.min_corner;
    const Vec3 ext = requested.extent();
    nx_ = whole_voxels(ext.x, voxel_size);
    ny_ = whole_voxels(ext.y, voxel_size);
    nz_ = whole_voxels(ext.z, voxel_size);
    bounds_.max_corner = bounds_.min_corner +
                         Vec3(nx_ * voxel_size, ny_ * voxel_size, nz_ * voxel_size);
    values_.assign(static_cast<std::size_t>(n_timesteps_) * nx_ * ny_ * nz_,
                   static_cast<float>(initial_value));
  }

  const VolumeBounds& bounds() const { return bounds_; }
  double voxel_size() const { return voxel_size_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  int n_timesteps() const { return n_timesteps_; }
  std::size_t voxels_per_slice() const { return static_cast<std::size_t>(nx_) * ny_ * nz_; }
  double voxel_diagonal() const { return voxel_size_ * std::sqrt(3.0); }

  std::size_t index(int t, int ix, int iy, int iz) const {
    return ((static_cast<std::size_t>(t) * nx_ + ix) * ny_ + iy) * nz_ + iz;
  }
  float at(int t, const VoxelIndex& v) const { return values_[index(t, v.ix, v.iy, v.iz)]; }
  float& at(int t, const VoxelIndex& v) { return values_[index(t, v.ix, v.iy, v.iz)]; }
  float at(int t, int ix, int iy, int iz) const { return values_[index(t, ix, iy, iz)]; }
  float& at(int t, int ix, int iy, int iz) { return values_[index(t, ix, iy, iz)]; }

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& values() { return values_; }

  std::optional<VoxelIndex> world_to_voxel(const Vec3& p) const {
    if (!bounds_.contains(p)) return std::nullopt;
    VoxelIndex v;
    v.ix = clamp_index(static_cast<int>(std::floor((p.x - bounds_.min_corner.x) / voxel_size_)), nx_);
    v.iy = clamp_index(static_cast<int>(std::floor((p.y - bounds_.min_corner.y) / voxel_size_)), ny_);
    v.iz = clamp_index(static_cast<int>(std::floor((p.z - bounds_.min_corner.z) / voxel_size_)), nz_);
    return v;
  }

  /// Amanatides-Woo traversal of one temporal slice. Returns the ordered
  /// voxels the ray crosses with exact shared entry/exit distances.
  std::vector<TraversalStep> traverse(const Vec3& origin, const Vec3& direction) const {
    std::vector<TraversalStep> steps;
    const auto interval = ray_volume_intersection(origin, direction, bounds_);
    if (!interval) return steps;
    const double t_near = interval->t_near;
    const double t_far = interval->t_far;
    if (t_far <= t_near) return steps;

    const Vec3 start = origin + t_near * direction;
    int idx[3];
    int dims[3] = {nx_, ny_, nz_};
    for (int a = 0; a < 3; ++a) {
      double rel = (start[a] - bounds_.min_corner[a]) / voxel_size_;
      idx[a] = clamp_index(static_cast<int>(std::floor(rel)), dims[a]);
      // Entering exactly on a face against the ray direction belongs to the
      // previous voxel.
      if (direction[a] < 0.0 && idx[a] > 0 &&
          start[a] == bounds_.min_corner[a] + idx[a] * voxel_size_) {
        idx[a] -= 1;
      }
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    int step[3];
    double t_max[3], t_delta[3];
    for (int a = 0; a < 3; ++a) {
      const double d = direction[a];
      if (d > 0.0) {
        step[a] = 1;
        const double next = bounds_.min_corner[a] + (idx[a] + 1) * voxel_size_;
        t_max[a] = (next - origin[a]) / d;
        t_delta[a] = voxel_size_ / d;
      } else if (d < 0.0) {
        step[a] = -1;
        const double next = bounds_.min_corner[a] + idx[a] * voxel_size_;
        t_max[a] = (next - origin[a]) / d;
        t_delta[a] = voxel_size_ / -d;
      } else {
        step[a] = 0;
        t_max[a] = kInf;
        t_delta[a] = kInf;
      }
    }

    double t = t_near;
    while (t < t_far) {
      // Ties advance the lowest axis first; the zero-length revisit that
      // follows is dropped below.
      int axis = 0;
      if (t_max[1] < t_max[0]) axis = 1;
      if (t_max[2] < t_max[axis]) axis = 2;
      double t_exit = std::min(t_max[axis], t_far);
      if (t_exit > t) {
        steps.push_back({{idx[0], idx[1], idx[2]}, t, t_exit});
      }
      t = t_exit;
      if (t >= t_far) break;
      idx[axis] += step[axis];
      if (idx[axis] < 0 || idx[axis] >= dims[axis]) break;
      t_max[axis] += t_delta[axis];
    }
    // Pin the last exit to t_far so segment lengths sum to the slab interval.
    if (!steps.empty() && steps.back().exit_distance > t_far) {
      steps.back().exit_distance = t_far;
    }
    return steps;
  }

  // --- OCC4 binary format ---------------------------------------------------

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write("OCC4", 4);
    const std::uint8_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), 1);
    const double header_d[7] = {bounds_.min_corner.x, bounds_.min_corner.y, bounds_.min_corner.z,
                                bounds_.max_corner.x, bounds_.max_corner.y, bounds_.max_corner.z,
                                voxel_size_};
    f.write(reinterpret_cast<const char*>(header_d), sizeof(header_d));
    const std::uint32_t header_u[4] = {static_cast<std::uint32_t>(nx_),
                                       static_cast<std::uint32_t>(ny_),
                                       static_cast<std::uint32_t>(nz_),
                                       static_cast<std::uint32_t>(n_timesteps_)};
    f.write(reinterpret_cast<const char*>(header_u), sizeof(header_u));
    f.write(reinterpret_cast<const char*>(values_.data()),
            static_cast<std::streamsize>(values_.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write failed: " + path);
  }

  static OccupancyGrid4D load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "OCC4", 4) != 0)
      throw std::runtime_error("bad magic in grid file: " + path);
    std::uint8_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 1);
    if (version != 1) throw std::runtime_error("unsupported grid version in: " + path);
    double header_d[7];
    f.read(reinterpret_cast<char*>(header_d), sizeof(header_d));
    std::uint32_t header_u[4];
    f.read(reinterpret_cast<char*>(header_u), sizeof(header_u));
    if (!f) throw std::runtime_error("truncated grid header: " + path);

    OccupancyGrid4D g;
    g.bounds_ = {{header_d[0], header_d[1], header_d[2]}, {header_d[3], header_d[4], header_d[5]}};
    g.voxel_size_ = header_d[6];
    g.nx_ = static_cast<int>(header_u[0]);
    g.ny_ = static_cast<int>(header_u[1]);
    g.nz_ = static_cast<int>(header_u[2]);
    g.n_timesteps_ = static_cast<int>(header_u[3]);
    if (!g.bounds_.valid() || g.voxel_size_ <= 0.0 || g.nx_ < 1 || g.ny_ < 1 || g.nz_ < 1 ||
        g.n_timesteps_ < 1)
      throw std::runtime_error("invalid grid header: " + path);
    g.values_.resize(static_cast<std::size_t>(g.n_timesteps_) * g.nx_ * g.ny_ * g.nz_);
    f.read(reinterpret_cast<char*>(g.values_.data()),
           static_cast<std::streamsize>(g.values_.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated grid payload: " + path);
    return g;
  }

 private:
  static int whole_voxels(double extent, double voxel_size) {
    const int n = static_cast<int>(std::ceil(extent / voxel_size - 1e-9));
    return std::max(n, 1);
  }
  static int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

  VolumeBounds bounds_;
  double voxel_size_ = 1.0;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  int n_timesteps_ = 0;
  std::vector<float> values_;
};

/// Single-timestep binary grid with 1.0 in every voxel that holds a point.
inline OccupancyGrid4D rasterize_points(const std::vector<Vec3>& points,
                                        const VolumeBounds& bounds, double voxel_size) {
  OccupancyGrid4D grid(bounds, voxel_size, 1);
  for (const Vec3& p : points) {
    if (auto v = grid.world_to_voxel(p)) grid.at(0, *v) = 1.0f;
  }
  return grid;
}

}  // namespace occ4d
