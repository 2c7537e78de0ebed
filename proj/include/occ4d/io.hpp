#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "occ4d/forecasters.hpp"
#include "occ4d/geometry.hpp"
#include "occ4d/metrics.hpp"
#include "occ4d/simulator.hpp"

namespace occ4d {

// --- flat config files -------------------------------------------------------

/// Line-oriented `key = value` files with `[section]` headers. Repeated keys
/// accumulate into a list.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    return parse_stream(f, path);
  }

  static ConfigFile parse_string(const std::string& text) {
    std::istringstream f(text);
    return parse_stream(f, "<string>");
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto it = values_.find(section + "." + key);
    return it != values_.end() && !it->second.empty();
  }
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback = "") const {
    const auto it = values_.find(section + "." + key);
    if (it == values_.end() || it->second.empty()) return fallback;
    return it->second.back();
  }
  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string s = get(section, key);
    return s.empty() ? fallback : std::stod(s);
  }
  int get_int(const std::string& section, const std::string& key, int fallback) const {
    const std::string s = get(section, key);
    return s.empty() ? fallback : std::stoi(s);
  }
  std::vector<std::string> get_all(const std::string& section, const std::string& key) const {
    const auto it = values_.find(section + "." + key);
    return it == values_.end() ? std::vector<std::string>{} : it->second;
  }

 private:
  static ConfigFile parse_stream(std::istream& f, const std::string& name) {
    ConfigFile cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[' && trimmed.back() == ']') {
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(name + ":" + std::to_string(lineno) + ": expected key = value");
      cfg.values_[section + "." + trim(trimmed.substr(0, eq))].push_back(
          trim(trimmed.substr(eq + 1)));
    }
    return cfg;
  }
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::vector<std::string>> values_;
};

// --- run configuration -------------------------------------------------------

enum class Horizon { one_second, three_seconds };
enum class ForecasterKind { raytrace, fit_static, fit_dynamic };
enum class PoseSource { ground_truth, constant_velocity };

struct RunConfig {
  VolumeBounds bounds{{-70.0, -70.0, -4.5}, {70.0, 70.0, 4.5}};
  double voxel_size = 0.5;
  Horizon horizon = Horizon::one_second;
  int frames_in = 2;
  int frames_out = 2;
  ForecasterKind forecaster = ForecasterKind::raytrace;
  Supervision supervision = Supervision::past_rays;
  FitConfig fit;
  double confidence_threshold = 0.05;
  PoseSource pose_source = PoseSource::ground_truth;

  static RunConfig from_config(const ConfigFile& cfg) {
    RunConfig rc;
    rc.bounds.min_corner = {cfg.get_double("volume", "min_x", -70.0),
                            cfg.get_double("volume", "min_y", -70.0),
                            cfg.get_double("volume", "min_z", -4.5)};
    rc.bounds.max_corner = {cfg.get_double("volume", "max_x", 70.0),
                            cfg.get_double("volume", "max_y", 70.0),
                            cfg.get_double("volume", "max_z", 4.5)};
    if (!rc.bounds.valid()) throw std::runtime_error("config: invalid volume bounds");
    rc.voxel_size = cfg.get_double("grid", "voxel_size", 0.5);
    if (rc.voxel_size <= 0.0) throw std::runtime_error("config: voxel_size must be > 0");
    const std::string horizon = cfg.get("run", "horizon", "1s");
    if (horizon == "1s") {
      rc.horizon = Horizon::one_second;
      rc.frames_in = cfg.get_int("run", "frames_in", 2);
      rc.frames_out = cfg.get_int("run", "frames_out", 2);
    } else if (horizon == "3s") {
      rc.horizon = Horizon::three_seconds;
      rc.frames_in = cfg.get_int("run", "frames_in", 6);
      rc.frames_out = cfg.get_int("run", "frames_out", 6);
    } else {
      throw std::runtime_error("config: horizon must be 1s or 3s");
    }
    if (rc.frames_in < 1 || rc.frames_out < 1)
      throw std::runtime_error("config: frame counts must be >= 1");
    rc.fit.iterations = cfg.get_int("fit", "iterations", 500);
    rc.fit.step_size = cfg.get_double("fit", "step_size", 1e-2);
    rc.fit.init_logit = cfg.get_double("fit", "init_logit", -4.0);
    rc.confidence_threshold = cfg.get_double("run", "confidence_threshold", 0.05);
    return rc;
  }
};

// --- PCF1 frame files --------------------------------------------------------

inline void save_frame_points(const std::vector<Vec3>& points, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write("PCF1", 4);
  const std::uint8_t version = 1;
  f.write(reinterpret_cast<const char*>(&version), 1);
  const std::uint32_t count = static_cast<std::uint32_t>(points.size());
  f.write(reinterpret_cast<const char*>(&count), 4);
  for (const Vec3& p : points) {
    const float xyz[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                          static_cast<float>(p.z)};
    f.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<Vec3> load_frame_points(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open frame file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "PCF1", 4) != 0)
    throw std::runtime_error("bad magic in frame file: " + path);
  std::uint8_t version = 0;
  f.read(reinterpret_cast<char*>(&version), 1);
  if (version != 1) throw std::runtime_error("unsupported frame version in: " + path);
  std::uint32_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 4);
  if (!f) throw std::runtime_error("truncated header in frame file: " + path);
  std::vector<Vec3> points;
  points.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    float xyz[3];
    f.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    if (!f) throw std::runtime_error("truncated payload in frame file: " + path);
    points.push_back({xyz[0], xyz[1], xyz[2]});
  }
  return points;
}

// --- poses file: per frame, 3x4 row-major world-from-sensor + timestamp ------

inline void save_poses(const std::vector<TimedPose>& poses, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  for (const TimedPose& tp : poses) {
    double row[13];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) row[4 * r + c] = tp.pose.rotation(r, c);
      row[4 * r + 3] = tp.pose.translation[r];
    }
    row[12] = tp.timestamp;
    f.write(reinterpret_cast<const char*>(row), sizeof(row));
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<TimedPose> load_poses(const std::string& path, std::size_t expected_count) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open poses file: " + path);
  std::vector<TimedPose> poses;
  for (std::size_t i = 0; i < expected_count; ++i) {
    double row[13];
    f.read(reinterpret_cast<char*>(row), sizeof(row));
    if (!f) throw std::runtime_error("truncated poses file: " + path);
    TimedPose tp;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) tp.pose.rotation(r, c) = row[4 * r + c];
    tp.pose.translation = {row[3], row[7], row[11]};
    tp.timestamp = row[12];
    if (!tp.pose.valid())
      throw std::runtime_error("non-orthonormal pose at frame " + std::to_string(i) + " in: " +
                               path);
    poses.push_back(tp);
  }
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (poses[i].timestamp <= poses[i - 1].timestamp)
      throw std::runtime_error("non-monotonic timestamps in poses file: " + path);
  }
  return poses;
}

// --- clip manifests ----------------------------------------------------------

inline void save_clip(const SequenceClip& clip, const std::string& dir,
                      const std::string& name = "clip") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<TimedPose> poses;
  std::vector<std::string> frame_names;
  int index = 0;
  auto dump = [&](const Frame& frame) {
    char fname[64];
    std::snprintf(fname, sizeof(fname), "%s_frame_%03d.pcf", name.c_str(), index++);
    save_frame_points(frame.points, (fs::path(dir) / fname).string());
    frame_names.emplace_back(fname);
    poses.push_back({frame.pose, frame.timestamp});
  };
  for (const Frame& f : clip.past_frames) dump(f);
  for (const Frame& f : clip.future_frames) dump(f);
  save_poses(poses, (fs::path(dir) / (name + "_poses.bin")).string());

  std::ofstream m((fs::path(dir) / (name + ".manifest")).string());
  m << "frequency = " << clip.frequency << "\n";
  m << "present_index = " << clip.past_frames.size() - 1 << "\n";
  m << "poses = " << name << "_poses.bin\n";
  for (const std::string& fn : frame_names) m << "frame = " << fn << "\n";
  if (!m) throw std::runtime_error("cannot write manifest in: " + dir);
}

inline SequenceClip load_clip(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const ConfigFile manifest = ConfigFile::parse(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  const std::vector<std::string> frame_files = manifest.get_all("", "frame");
  if (frame_files.empty()) throw std::runtime_error("manifest lists no frames: " + manifest_path);
  const std::string poses_file = manifest.get("", "poses");
  if (poses_file.empty()) throw std::runtime_error("manifest lists no poses file: " + manifest_path);
  const int present_index = manifest.get_int("", "present_index", -1);
  if (present_index < 1)
    throw std::runtime_error("manifest present_index must be >= 1 (no history): " + manifest_path);
  if (present_index + 1 >= static_cast<int>(frame_files.size()))
    throw std::runtime_error("manifest present_index leaves no future frames: " + manifest_path);

  const std::vector<TimedPose> poses =
      load_poses((base / poses_file).string(), frame_files.size());

  SequenceClip clip;
  clip.frequency = manifest.get_double("", "frequency", 2.0);
  for (std::size_t i = 0; i < frame_files.size(); ++i) {
    Frame frame;
    frame.points = load_frame_points((base / frame_files[i]).string());
    frame.pose = poses[i].pose;
    frame.timestamp = poses[i].timestamp;
    if (static_cast<int>(i) <= present_index)
      clip.past_frames.push_back(std::move(frame));
    else
      clip.future_frames.push_back(std::move(frame));
  }
  return clip;
}

// --- scene / lidar / trajectory from config ----------------------------------

inline Scene scene_from_config(const ConfigFile& cfg) {
  Scene scene;
  scene.ground_z = cfg.get_double("scene", "ground_z", 0.0);
  for (const std::string& record : cfg.get_all("scene", "box")) {
    std::istringstream ss(record);
    MovingBox box;
    ss >> box.min_corner.x >> box.min_corner.y >> box.min_corner.z >> box.max_corner.x >>
        box.max_corner.y >> box.max_corner.z >> box.velocity.x >> box.velocity.y >>
        box.velocity.z;
    if (!ss) throw std::runtime_error("config: bad box record: " + record);
    scene.boxes.push_back(box);
  }
  return scene;
}

inline LidarModel lidar_from_config(const ConfigFile& cfg) {
  const std::string preset = cfg.get("lidar", "preset", "hdl32");
  const int az = cfg.get_int("lidar", "azimuth_count", 0);
  const double max_range = cfg.get_double("lidar", "max_range", 0.0);
  LidarModel model;
  if (preset == "hdl32") model = LidarModel::hdl32();
  else if (preset == "hdl64") model = LidarModel::hdl64();
  else if (preset == "stacked2x32") model = LidarModel::stacked2x32();
  else if (preset == "custom") {
    model.elevation_angles = LidarModel::linspace_deg(
        cfg.get_double("lidar", "elevation_min_deg", -25.0),
        cfg.get_double("lidar", "elevation_max_deg", 5.0),
        cfg.get_int("lidar", "elevation_count", 16));
    model.azimuth_count = 512;
    model.max_range = 100.0;
  } else {
    throw std::runtime_error("config: unknown lidar preset: " + preset);
  }
  if (az > 0) model.azimuth_count = az;
  if (max_range > 0.0) model.max_range = max_range;
  return model;
}

inline std::vector<TimedPose> trajectory_from_config(const ConfigFile& cfg) {
  const int n = cfg.get_int("trajectory", "n_frames", 4);
  const double freq = cfg.get_double("trajectory", "frequency", 2.0);
  Vec3 start{cfg.get_double("trajectory", "start_x", 0.0),
             cfg.get_double("trajectory", "start_y", 0.0),
             cfg.get_double("trajectory", "start_z", 2.0)};
  Vec3 velocity{cfg.get_double("trajectory", "vel_x", 0.0),
                cfg.get_double("trajectory", "vel_y", 0.0),
                cfg.get_double("trajectory", "vel_z", 0.0)};
  std::vector<TimedPose> out;
  for (int i = 0; i < n; ++i) {
    const double t = i / freq;
    out.push_back({{Mat3::identity(), start + velocity * t}, t});
  }
  return out;
}

// --- benchmark harness -------------------------------------------------------

struct ClipOutcome {
  std::string manifest;
  bool ok = false;
  std::string error;
  MetricReport report;
};

struct BenchmarkResult {
  MetricReport aggregate;
  std::vector<ClipOutcome> clips;
  std::size_t n_failed = 0;
};

/// Future query rays: one per return in the first frames_out future frames,
/// anchored at the ground-truth or constant-velocity sensor origin.
inline RayBatch build_query_rays(const SequenceClip& clip, int frames_out,
                                 PoseSource pose_source) {
  const int n_t = std::min<int>(frames_out, static_cast<int>(clip.future_frames.size()));
  std::vector<Vec3> origins(n_t);
  if (pose_source == PoseSource::ground_truth) {
    for (int t = 0; t < n_t; ++t) origins[t] = clip.future_frames[t].pose.translation;
  } else {
    std::vector<TimedPose> past;
    for (const Frame& f : clip.past_frames) past.push_back({f.pose, f.timestamp});
    std::vector<double> future_times;
    for (int t = 0; t < n_t; ++t) future_times.push_back(clip.future_frames[t].timestamp);
    const std::vector<RigidPose> cv = constant_velocity_poses(past, future_times);
    for (int t = 0; t < n_t; ++t) origins[t] = cv[t].translation;
  }
  RayBatch rays;
  for (int t = 0; t < n_t; ++t) {
    const Frame& frame = clip.future_frames[t];
    for (const Vec3& p : frame.points) {
      const Vec3 world = frame.pose.apply(p);
      const Vec3 delta = world - origins[t];
      const double range = delta.norm();
      if (range <= 0.0) continue;
      Ray ray;
      ray.origin = origins[t];
      ray.direction = delta / range;
      ray.gt_depth = range;
      ray.timestep = t;
      rays.push_back(ray);
    }
  }
  return rays;
}

inline OccupancyGrid4D run_forecaster(const RunConfig& config, const SequenceClip& clip) {
  const int t_future = std::min<int>(config.frames_out,
                                     static_cast<int>(clip.future_frames.size()));
  switch (config.forecaster) {
    case ForecasterKind::raytrace:
      return raytracing_baseline(clip, config.bounds, config.voxel_size, t_future);
    case ForecasterKind::fit_static: {
      FitConfig fc = config.fit;
      fc.variant = FitVariant::static_grid;
      return fit_grid(clip, config.bounds, config.voxel_size, t_future, fc, config.supervision)
          .grid;
    }
    case ForecasterKind::fit_dynamic: {
      FitConfig fc = config.fit;
      fc.variant = FitVariant::dynamic_grid;
      return fit_grid(clip, config.bounds, config.voxel_size, t_future, fc, config.supervision)
          .grid;
    }
  }
  throw std::logic_error("run_forecaster: unknown forecaster");
}

using ClipLoader = std::function<SequenceClip(const std::string&)>;

inline BenchmarkResult run_benchmark(const RunConfig& config,
                                     const std::vector<std::string>& manifests,
                                     const std::string& output_dir,
                                     const ClipLoader& loader = load_clip) {
  namespace fs = std::filesystem;
  if (manifests.empty()) throw std::invalid_argument("run_benchmark: no clips");
  fs::create_directories(output_dir);

  BenchmarkResult result;
  double l1_acc = 0.0, absrel_acc = 0.0, cnf_acc = 0.0, cv_acc = 0.0;
  std::size_t rays_acc = 0;

  for (std::size_t i = 0; i < manifests.size(); ++i) {
    ClipOutcome outcome;
    outcome.manifest = manifests[i];
    try {
      const SequenceClip clip = loader(manifests[i]);
      const OccupancyGrid4D grid = run_forecaster(config, clip);
      const RayBatch rays = build_query_rays(clip, config.frames_out, config.pose_source);
      outcome.report = evaluate_forecast(grid, rays, config.bounds);
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
      ++result.n_failed;
    }
    if (outcome.ok) {
      const double w = static_cast<double>(outcome.report.n_eval);
      l1_acc += w * outcome.report.l1_m;
      absrel_acc += w * outcome.report.absrel_pct;
      cnf_acc += w * outcome.report.chamfer_nf_m2;
      cv_acc += w * outcome.report.chamfer_vanilla_m2;
      rays_acc += outcome.report.n_eval;
      result.aggregate.n_excluded += outcome.report.n_excluded;

      char fname[32];
      std::snprintf(fname, sizeof(fname), "clip_%03zu.json", i);
      std::ofstream out((fs::path(output_dir) / fname).string(), std::ios::binary);
      out << to_json(outcome.report) << "\n";
    }
    result.clips.push_back(std::move(outcome));
  }
  if (rays_acc > 0) {
    const double w = static_cast<double>(rays_acc);
    result.aggregate.l1_m = l1_acc / w;
    result.aggregate.absrel_pct = absrel_acc / w;
    result.aggregate.chamfer_nf_m2 = cnf_acc / w;
    result.aggregate.chamfer_vanilla_m2 = cv_acc / w;
    result.aggregate.n_eval = rays_acc;
  }
  std::ofstream csv((fs::path(output_dir) / "aggregate.csv").string(), std::ios::binary);
  csv << csv_header() << "\n" << to_csv_row(result.aggregate) << "\n";
  std::ofstream agg((fs::path(output_dir) / "aggregate.json").string(), std::ios::binary);
  agg << to_json(result.aggregate) << "\n";
  return result;
}

}  // namespace occ4d
