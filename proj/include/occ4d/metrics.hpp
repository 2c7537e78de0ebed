#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "occ4d/geometry.hpp"
#include "occ4d/grid.hpp"
#include "occ4d/renderer.hpp"

namespace occ4d {

// --- ray clamping ------------------------------------------------------------

struct ClampResult {
  double clamped_depth = 0.0;
  bool excluded = false;
};

/// Restricts a ray endpoint to the volume: depth clamped to [t_near, t_far].
/// Rays that never touch the volume are excluded (origin and endpoint
/// collapse to the same point, no near-field content).
inline ClampResult clamp_ray(const Vec3& origin, const Vec3& direction, double depth,
                             const VolumeBounds& bounds) {
  const auto interval = ray_volume_intersection(origin, direction, bounds);
  if (!interval) return {0.0, true};
  return {std::clamp(depth, interval->t_near, interval->t_far), false};
}

// --- near-field ray errors ---------------------------------------------------

struct NearFieldErrors {
  double l1_mean = 0.0;      // meters
  double absrel_mean = 0.0;  // percent
  std::size_t n_eval = 0;
  std::size_t n_excluded = 0;
};

/// Mean near-field L1 and relative error over rays. A missing prediction or
/// a ray that misses the volume is excluded and counted.
inline NearFieldErrors nearfield_errors(const RayBatch& rays,
                                        const std::vector<std::optional<double>>& pred_depths,
                                        const VolumeBounds& bounds) {
  if (rays.size() != pred_depths.size())
    throw std::invalid_argument("nearfield_errors: size mismatch");
  NearFieldErrors out;
  double l1_sum = 0.0, rel_sum = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Ray& ray = rays[i];
    if (!ray.gt_depth) throw std::invalid_argument("nearfield_errors: ray without gt_depth");
    if (!pred_depths[i]) {
      ++out.n_excluded;
      continue;
    }
    const ClampResult gt_c = clamp_ray(ray.origin, ray.direction, *ray.gt_depth, bounds);
    if (gt_c.excluded) {
      ++out.n_excluded;
      continue;
    }
    const ClampResult pred_c = clamp_ray(ray.origin, ray.direction, *pred_depths[i], bounds);
    const double eps = std::abs(gt_c.clamped_depth - pred_c.clamped_depth);
    l1_sum += eps;
    if (*ray.gt_depth > 0.0) rel_sum += eps / *ray.gt_depth;
    ++out.n_eval;
  }
  if (out.n_eval == 0) throw std::runtime_error("nearfield_errors: no evaluable rays");
  out.l1_mean = l1_sum / static_cast<double>(out.n_eval);
  out.absrel_mean = 100.0 * rel_sum / static_cast<double>(out.n_eval);
  return out;
}

// --- chamfer distance --------------------------------------------------------

namespace detail {

/// Uniform spatial hash over points; nearest-neighbor queries stay exact by
/// expanding cell rings until the ring lower bound passes the best hit.
class SpatialHashNN {
 public:
  explicit SpatialHashNN(const std::vector<Vec3>& points) : points_(points) {
    if (points.empty()) throw std::invalid_argument("SpatialHashNN: empty point set");
    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    origin_ = lo;
    const double diag = (hi - lo).norm();
    cell_ = diag > 0.0 ? diag / std::cbrt(static_cast<double>(points.size())) : 1.0;
    for (int a = 0; a < 3; ++a)
      dims_[a] = static_cast<int>(std::floor((hi[a] - lo[a]) / cell_)) + 1;
    for (std::size_t i = 0; i < points.size(); ++i)
      cells_[key(cell_of(points[i]))].push_back(static_cast<int>(i));
  }

  /// Squared distance to the nearest point.
  double nearest_sq(const Vec3& q) const {
    const std::array<int, 3> qc = cell_of(q);
    double best = std::numeric_limits<double>::infinity();
    int r_max = 0;
    for (int a = 0; a < 3; ++a)
      r_max = std::max({r_max, qc[a] + dims_[a], dims_[a] - qc[a]});
    for (int r = 0; r <= r_max; ++r) {
      // all points in unscanned rings are farther than (r-1) * cell
      const double bound = (r - 1) * cell_;
      if (best <= bound * bound) break;
      scan_ring(qc, r, q, best);
    }
    return best;
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    return {static_cast<int>(std::floor((p.x - origin_.x) / cell_)),
            static_cast<int>(std::floor((p.y - origin_.y) / cell_)),
            static_cast<int>(std::floor((p.z - origin_.z) / cell_))};
  }
  static std::uint64_t key(const std::array<int, 3>& c) {
    auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)); };
    return (u(c[0]) << 42) ^ (u(c[1]) << 21) ^ u(c[2]);
  }

  void scan_cell(int cx, int cy, int cz, const Vec3& q, double& best) const {
    if (cx < 0 || cy < 0 || cz < 0 || cx >= dims_[0] || cy >= dims_[1] || cz >= dims_[2]) return;
    const auto it = cells_.find(key({cx, cy, cz}));
    if (it == cells_.end()) return;
    for (int i : it->second) best = std::min(best, (points_[i] - q).squared_norm());
  }

  void scan_ring(const std::array<int, 3>& c, int r, const Vec3& q, double& best) const {
    if (r == 0) {
      scan_cell(c[0], c[1], c[2], q, best);
      return;
    }
    for (int dx = -r; dx <= r; ++dx)
      for (int dy = -r; dy <= r; ++dy)
        for (int dz = -r; dz <= r; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          scan_cell(c[0] + dx, c[1] + dy, c[2] + dz, q, best);
        }
  }

  const std::vector<Vec3>& points_;
  Vec3 origin_;
  double cell_ = 1.0;
  int dims_[3] = {1, 1, 1};
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace detail

/// Symmetric mean of squared nearest-neighbor distances (m^2).
inline double chamfer(const std::vector<Vec3>& gt_points, const std::vector<Vec3>& pred_points) {
  if (gt_points.empty() || pred_points.empty())
    throw std::invalid_argument("chamfer: empty point set");
  const detail::SpatialHashNN gt_nn(gt_points);
  const detail::SpatialHashNN pred_nn(pred_points);
  double sum_gt = 0.0;
  for (const Vec3& p : gt_points) sum_gt += pred_nn.nearest_sq(p);
  double sum_pred = 0.0;
  for (const Vec3& p : pred_points) sum_pred += gt_nn.nearest_sq(p);
  return 0.5 * sum_gt / static_cast<double>(gt_points.size()) +
         0.5 * sum_pred / static_cast<double>(pred_points.size());
}

inline std::vector<Vec3> filter_to_bounds(const std::vector<Vec3>& points,
                                          const VolumeBounds& bounds) {
  std::vector<Vec3> out;
  for (const Vec3& p : points)
    if (bounds.contains(p)) out.push_back(p);
  return out;
}

/// Chamfer over the points inside the volume only.
inline double chamfer_nearfield(const std::vector<Vec3>& gt_points,
                                const std::vector<Vec3>& pred_points,
                                const VolumeBounds& bounds) {
  const std::vector<Vec3> gt_in = filter_to_bounds(gt_points, bounds);
  const std::vector<Vec3> pred_in = filter_to_bounds(pred_points, bounds);
  if (gt_in.empty() || pred_in.empty())
    throw std::runtime_error("chamfer_nearfield: no points inside the volume");
  return chamfer(gt_in, pred_in);
}

// --- range-surface fitting ---------------------------------------------------

/// 2D range image over (azimuth, elevation) bins, minimum range per bin.
/// Queries interpolate bilinearly among the valid surrounding bin centers,
/// falling back to the nearest valid bin within 2 bins, else nothing.
class RangeSurface {
 public:
  RangeSurface(const std::vector<Vec3>& points, const std::vector<double>* confidences,
               const Vec3& sensor_origin, int az_bins = 1024, int el_bins = 64,
               double confidence_threshold = 0.05)
      : origin_(sensor_origin), az_bins_(az_bins), el_bins_(el_bins) {
    if (az_bins < 1 || el_bins < 1) throw std::invalid_argument("RangeSurface: bad bin counts");
    ranges_.assign(static_cast<std::size_t>(az_bins) * el_bins,
                   std::numeric_limits<double>::infinity());
    std::size_t kept = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (confidences && (*confidences)[i] < confidence_threshold) continue;
      const auto sph = spherical_project(points[i], sensor_origin);
      if (!sph) continue;
      ++kept;
      double& cell = ranges_[bin_index(az_bin(sph->azimuth), el_bin(sph->elevation))];
      cell = std::min(cell, sph->range);
    }
    if (kept == 0) throw std::runtime_error("RangeSurface: no points after filtering");
  }

  std::optional<double> query(const Vec3& unit_direction) const {
    const double az = std::atan2(unit_direction.y, unit_direction.x);
    const double el = std::asin(std::clamp(unit_direction.z, -1.0, 1.0));

    // bilinear over the four bin centers around (az, el)
    const double daz = 2.0 * M_PI / az_bins_;
    const double del = M_PI / el_bins_;
    const double u = (az + M_PI) / daz - 0.5;
    const double v = (el + M_PI / 2.0) / del - 0.5;
    const int i0 = static_cast<int>(std::floor(u));
    const int j0 = static_cast<int>(std::floor(v));
    const double wu = u - i0;
    const double wv = v - j0;

    double weight_sum = 0.0, value_sum = 0.0;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj) {
        const int i = wrap_az(i0 + di);
        const int j = j0 + dj;
        if (j < 0 || j >= el_bins_) continue;
        const double r = ranges_[bin_index(i, j)];
        if (!std::isfinite(r)) continue;
        const double w = (di == 0 ? 1.0 - wu : wu) * (dj == 0 ? 1.0 - wv : wv);
        weight_sum += w;
        value_sum += w * r;
      }
    if (weight_sum > 0.0) return value_sum / weight_sum;

    // nearest valid bin within a 2-bin search radius
    const int qi = az_bin(az);
    const int qj = el_bin(el);
    double best_dist = std::numeric_limits<double>::infinity();
    double best_range = 0.0;
    for (int di = -2; di <= 2; ++di)
      for (int dj = -2; dj <= 2; ++dj) {
        const int i = wrap_az(qi + di);
        const int j = qj + dj;
        if (j < 0 || j >= el_bins_) continue;
        const double r = ranges_[bin_index(i, j)];
        if (!std::isfinite(r)) continue;
        const double d = static_cast<double>(di * di + dj * dj);
        if (d < best_dist) {
          best_dist = d;
          best_range = r;
        }
      }
    if (std::isfinite(best_dist)) return best_range;
    return std::nullopt;
  }

  const Vec3& sensor_origin() const { return origin_; }

 private:
  int az_bin(double az) const {
    const int i = static_cast<int>(std::floor((az + M_PI) / (2.0 * M_PI) * az_bins_));
    return std::clamp(i, 0, az_bins_ - 1);
  }
  int el_bin(double el) const {
    const int j = static_cast<int>(std::floor((el + M_PI / 2.0) / M_PI * el_bins_));
    return std::clamp(j, 0, el_bins_ - 1);
  }
  int wrap_az(int i) const { return ((i % az_bins_) + az_bins_) % az_bins_; }
  std::size_t bin_index(int i, int j) const {
    return static_cast<std::size_t>(i) * el_bins_ + j;
  }

  Vec3 origin_;
  int az_bins_, el_bins_;
  std::vector<double> ranges_;
};

// --- aggregated report -------------------------------------------------------

struct ClassMetrics {
  double l1_m = 0.0;
  double absrel_pct = 0.0;
  double chamfer_nf_m2 = 0.0;
  double chamfer_vanilla_m2 = 0.0;
};

struct MetricReport {
  double l1_m = 0.0;
  double absrel_pct = 0.0;
  double chamfer_nf_m2 = 0.0;
  double chamfer_vanilla_m2 = 0.0;
  std::size_t n_eval = 0;
  std::size_t n_excluded = 0;
  std::map<std::string, ClassMetrics> per_class;  // ordered for stable output
};

namespace detail {

inline std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

inline std::string to_json(const MetricReport& r) {
  using detail::fmt_g9;
  std::string s = "{";
  s += "\"l1_m\": " + fmt_g9(r.l1_m);
  s += ", \"absrel_pct\": " + fmt_g9(r.absrel_pct);
  s += ", \"chamfer_nf_m2\": " + fmt_g9(r.chamfer_nf_m2);
  s += ", \"chamfer_vanilla_m2\": " + fmt_g9(r.chamfer_vanilla_m2);
  s += ", \"n_eval\": " + std::to_string(r.n_eval);
  s += ", \"n_excluded\": " + std::to_string(r.n_excluded);
  if (!r.per_class.empty()) {
    s += ", \"per_class\": {";
    bool first = true;
    for (const auto& [label, m] : r.per_class) {
      if (!first) s += ", ";
      first = false;
      s += "\"" + label + "\": {\"l1_m\": " + fmt_g9(m.l1_m) +
           ", \"absrel_pct\": " + fmt_g9(m.absrel_pct) +
           ", \"chamfer_nf_m2\": " + fmt_g9(m.chamfer_nf_m2) +
           ", \"chamfer_vanilla_m2\": " + fmt_g9(m.chamfer_vanilla_m2) + "}";
    }
    s += "}";
  }
  s += "}";
  return s;
}

inline std::string csv_header() {
  return "l1_m,absrel_pct,chamfer_nf_m2,chamfer_vanilla_m2,n_eval,n_excluded";
}

inline std::string to_csv_row(const MetricReport& r) {
  using detail::fmt_g9;
  return fmt_g9(r.l1_m) + "," + fmt_g9(r.absrel_pct) + "," + fmt_g9(r.chamfer_nf_m2) + "," +
         fmt_g9(r.chamfer_vanilla_m2) + "," + std::to_string(r.n_eval) + "," +
         std::to_string(r.n_excluded);
}

// --- end-to-end evaluation ---------------------------------------------------

/// Per-timestep predicted point clouds (world frame), optional confidences.
struct PointCloudPrediction {
  std::vector<std::vector<Vec3>> clouds;
  std::vector<std::vector<double>> confidences;  // empty = no confidences
};

namespace detail {

struct RayAnswer {
  std::optional<double> pred_depth;
};

inline MetricReport assemble_report(const RayBatch& rays,
                                    const std::vector<std::optional<double>>& preds,
                                    const std::vector<Vec3>& gt_points,
                                    const std::vector<Vec3>& pred_points,
                                    const VolumeBounds& bounds, bool want_per_class) {
  MetricReport report;
  const NearFieldErrors nf = nearfield_errors(rays, preds, bounds);
  report.l1_m = nf.l1_mean;
  report.absrel_pct = nf.absrel_mean;
  report.n_eval = nf.n_eval;
  report.n_excluded = nf.n_excluded;
  report.chamfer_vanilla_m2 = chamfer(gt_points, pred_points);
  report.chamfer_nf_m2 = chamfer_nearfield(gt_points, pred_points, bounds);

  if (want_per_class) {
    std::map<std::string, RayBatch> class_rays;
    std::map<std::string, std::vector<std::optional<double>>> class_preds;
    for (std::size_t i = 0; i < rays.size(); ++i) {
      if (!rays[i].class_label) continue;
      const std::string label = to_string(*rays[i].class_label);
      class_rays[label].push_back(rays[i]);
      class_preds[label].push_back(preds[i]);
    }
    for (auto& [label, crays] : class_rays) {
      ClassMetrics cm;
      const NearFieldErrors cnf = nearfield_errors(crays, class_preds[label], bounds);
      cm.l1_m = cnf.l1_mean;
      cm.absrel_pct = cnf.absrel_mean;
      std::vector<Vec3> cgt, cpred;
      for (std::size_t i = 0; i < crays.size(); ++i) {
        cgt.push_back(crays[i].origin + *crays[i].gt_depth * crays[i].direction);
        if (class_preds[label][i])
          cpred.push_back(crays[i].origin + *class_preds[label][i] * crays[i].direction);
      }
      if (!cgt.empty() && !cpred.empty()) {
        cm.chamfer_vanilla_m2 = chamfer(cgt, cpred);
        const auto gt_in = filter_to_bounds(cgt, bounds);
        const auto pred_in = filter_to_bounds(cpred, bounds);
        if (!gt_in.empty() && !pred_in.empty()) cm.chamfer_nf_m2 = chamfer(gt_in, pred_in);
      }
      report.per_class[label] = cm;
    }
  }
  return report;
}

}  // namespace detail

/// Grid predictions answer queries with inference-mode rendering; the pred
/// point cloud for chamfer is the rendered ray endpoints.
inline MetricReport evaluate_forecast(const OccupancyGrid4D& grid, const RayBatch& rays,
                                      const VolumeBounds& bounds, bool per_class = false) {
  std::vector<std::optional<double>> preds(rays.size());
  std::vector<Vec3> gt_points, pred_points;
  gt_points.reserve(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Ray& ray = rays[i];
    if (!ray.gt_depth) throw std::invalid_argument("evaluate_forecast: ray without gt_depth");
    gt_points.push_back(ray.origin + *ray.gt_depth * ray.direction);
    const auto rr = expected_depth_infer(sample_ray(grid, ray.timestep, ray));
    if (rr) {
      preds[i] = rr->expected_depth;
      pred_points.push_back(ray.origin + rr->expected_depth * ray.direction);
    }
  }
  return detail::assemble_report(rays, preds, gt_points, pred_points, bounds, per_class);
}

/// Point-cloud predictions answer queries through per-timestep range
/// surfaces; rays with no surface answer are excluded.
inline MetricReport evaluate_forecast(const PointCloudPrediction& prediction, const RayBatch& rays,
                                      const VolumeBounds& bounds, bool per_class = false,
                                      double confidence_threshold = 0.05, int az_bins = 1024,
                                      int el_bins = 64) {
  const int n_t = static_cast<int>(prediction.clouds.size());
  // one surface per timestep, anchored at that timestep's query origin
  std::vector<std::optional<RangeSurface>> surfaces(n_t);
  std::vector<std::optional<double>> preds(rays.size());
  std::vector<Vec3> gt_points;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Ray& ray = rays[i];
    if (!ray.gt_depth) throw std::invalid_argument("evaluate_forecast: ray without gt_depth");
    gt_points.push_back(ray.origin + *ray.gt_depth * ray.direction);
    if (ray.timestep < 0 || ray.timestep >= n_t)
      throw std::out_of_range("evaluate_forecast: ray timestep not covered by prediction");
    auto& surface = surfaces[ray.timestep];
    if (!surface) {
      const std::vector<double>* conf =
          prediction.confidences.empty() ? nullptr : &prediction.confidences[ray.timestep];
      surface.emplace(prediction.clouds[ray.timestep], conf, ray.origin, az_bins, el_bins,
                      confidence_threshold);
    }
    preds[i] = surface->query(ray.direction);
  }
  std::vector<Vec3> pred_points;
  for (const auto& cloud : prediction.clouds)
    pred_points.insert(pred_points.end(), cloud.begin(), cloud.end());
  return detail::assemble_report(rays, preds, gt_points, pred_points, bounds, per_class);
}

}  // namespace occ4d
