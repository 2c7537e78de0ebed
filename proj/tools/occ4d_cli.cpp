#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "occ4d/forecasters.hpp"
#include "occ4d/geometry.hpp"
#include "occ4d/grid.hpp"
#include "occ4d/io.hpp"
#include "occ4d/metrics.hpp"
#include "occ4d/renderer.hpp"
#include "occ4d/simulator.hpp"

namespace fs = std::filesystem;
using namespace occ4d;

namespace {

RunConfig load_run_config(const std::string& config_path) {
  if (config_path.empty()) return RunConfig{};
  return RunConfig::from_config(ConfigFile::parse(config_path));
}

ForecasterKind parse_forecaster(const std::string& s) {
  if (s == "raytrace") return ForecasterKind::raytrace;
  if (s == "fit-static") return ForecasterKind::fit_static;
  if (s == "fit-dynamic") return ForecasterKind::fit_dynamic;
  throw CLI::ValidationError("--forecaster", "expected raytrace|fit-static|fit-dynamic");
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  const ConfigFile cfg = ConfigFile::parse(config_path);
  const Scene scene = scene_from_config(cfg);
  const LidarModel lidar = lidar_from_config(cfg);
  const std::vector<TimedPose> trajectory = trajectory_from_config(cfg);
  const int present_index = cfg.get_int("trajectory", "present_index",
                                        static_cast<int>(trajectory.size()) / 2 - 1);
  const SequenceClip clip = generate_clip(scene, trajectory, lidar, present_index,
                                          cfg.get_double("trajectory", "frequency", 2.0));
  save_clip(clip, out_dir);
  std::cout << "wrote clip with " << clip.past_frames.size() << " past + "
            << clip.future_frames.size() << " future frames to " << out_dir << "\n";
  return 0;
}

int cmd_fit_grid(const RunConfig& base, const std::string& manifest, const std::string& out_dir,
                 Supervision supervision, FitVariant variant) {
  const SequenceClip clip = load_clip(manifest);
  const int t_future = std::min<int>(base.frames_out,
                                     static_cast<int>(clip.future_frames.size()));
  FitConfig fc = base.fit;
  fc.variant = variant;
  if (supervision == Supervision::future_rays) {
    std::cout << "note: supervision=future fits against ground-truth future rays; "
                 "this is an oracle upper bound, not a forecast\n";
  }
  const FitResult result =
      fit_grid(clip, base.bounds, base.voxel_size, t_future, fc, supervision);
  fs::create_directories(out_dir);
  result.grid.save((fs::path(out_dir) / "grid.occ4").string());
  std::ofstream loss_csv((fs::path(out_dir) / "loss.csv").string(), std::ios::binary);
  loss_csv << "iteration,loss\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
    loss_csv << i << "," << detail::fmt_g9(result.loss_trace[i]) << "\n";
  std::cout << "wrote grid.occ4 and loss.csv to " << out_dir << "\n";
  return 0;
}

int cmd_forecast(const RunConfig& config, const std::string& manifest,
                 const std::string& out_dir) {
  const SequenceClip clip = load_clip(manifest);
  const OccupancyGrid4D grid = run_forecaster(config, clip);
  fs::create_directories(out_dir);
  grid.save((fs::path(out_dir) / "grid.occ4").string());
  std::cout << "wrote grid.occ4 to " << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& config, const std::vector<std::string>& manifests,
                 const std::string& out_dir) {
  const BenchmarkResult result = run_benchmark(config, manifests, out_dir);
  for (const ClipOutcome& c : result.clips) {
    if (c.ok)
      std::cout << c.manifest << ": " << to_csv_row(c.report) << "\n";
    else
      std::cerr << c.manifest << ": FAILED: " << c.error << "\n";
  }
  std::cout << "aggregate: " << to_json(result.aggregate) << "\n";
  return result.n_failed == result.clips.size() ? 1 : 0;
}

int cmd_render_depth(const std::string& grid_path, const std::string& out_dir, int timestep,
                     double cam_x, double cam_y, double cam_z, double yaw_deg, int width,
                     int height, double fov_deg, const std::string& pattern) {
  const OccupancyGrid4D grid = OccupancyGrid4D::load(grid_path);
  fs::create_directories(out_dir);

  RigidPose camera;
  camera.translation = {cam_x, cam_y, cam_z};
  // camera +z (forward) points along world yaw direction, +y down
  const double yaw = yaw_deg * M_PI / 180.0;
  const Vec3 forward = {std::cos(yaw), std::sin(yaw), 0.0};
  const Vec3 right = {-std::sin(yaw), std::cos(yaw), 0.0};
  const Vec3 down = {0.0, 0.0, -1.0};
  for (int r = 0; r < 3; ++r) {
    camera.rotation(r, 0) = right[r];
    camera.rotation(r, 1) = down[r];
    camera.rotation(r, 2) = forward[r];
  }

  const DepthImage img =
      render_depth_image(grid, timestep, camera, width, height, fov_deg * M_PI / 180.0);
  const std::string pgm_path = (fs::path(out_dir) / "depth.pgm").string();
  write_depth_pgm(img, pgm_path);
  std::cout << "wrote " << pgm_path << "\n";

  if (!pattern.empty()) {
    LidarModel lidar;
    if (pattern == "hdl32") lidar = LidarModel::hdl32();
    else if (pattern == "hdl64") lidar = LidarModel::hdl64();
    else if (pattern == "stacked2x32") lidar = LidarModel::stacked2x32();
    else throw std::runtime_error("unknown beam pattern: " + pattern);
    std::vector<Vec3> points;
    for (int ai = 0; ai < lidar.azimuth_count; ++ai) {
      const double az = 2.0 * M_PI * ai / lidar.azimuth_count - M_PI;
      for (double el : lidar.elevation_angles) {
        Ray ray;
        ray.origin = camera.translation;
        ray.direction = spherical_to_direction(az, el);
        const auto rr = expected_depth_infer(sample_ray(grid, timestep, ray));
        if (rr) points.push_back(ray.origin + rr->expected_depth * ray.direction);
      }
    }
    const std::string pcf_path = (fs::path(out_dir) / "resampled.pcf").string();
    save_frame_points(points, pcf_path);
    std::cout << "wrote " << pcf_path << " (" << points.size() << " points)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D occupancy forecasting toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::vector<std::string> clips;
  std::string forecaster = "raytrace", supervision = "past", pose_source = "gt";
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run config file");
    sub->add_option("--out", out_dir, "output directory");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic clip from a scene config");
  add_common(simulate);
  simulate->get_option("--config")->required();

  CLI::App* fit = app.add_subcommand("fit-grid", "fit an occupancy grid to a clip by gradient descent");
  add_common(fit);
  fit->add_option("--clips", clips, "clip manifest")->required();
  fit->add_option("--forecaster", forecaster, "fit-static|fit-dynamic");
  fit->add_option("--supervision", supervision, "past|future (future = oracle bound)");

  CLI::App* forecast = app.add_subcommand("forecast", "run a forecaster on a clip, write the grid");
  add_common(forecast);
  forecast->add_option("--clips", clips, "clip manifest")->required();
  forecast->add_option("--forecaster", forecaster, "raytrace|fit-static|fit-dynamic");
  forecast->add_option("--supervision", supervision, "past|future");

  CLI::App* evaluate = app.add_subcommand("evaluate", "run the benchmark over clips");
  add_common(evaluate);
  evaluate->add_option("--clips", clips, "clip manifests")->required();
  evaluate->add_option("--forecaster", forecaster, "raytrace|fit-static|fit-dynamic");
  evaluate->add_option("--supervision", supervision, "past|future");
  evaluate->add_option("--pose-source", pose_source, "gt|cv");
  evaluate->add_option("--seed", seed, "reserved for stochastic extensions");

  std::string grid_path, pattern;
  int timestep = 0, width = 320, height = 240;
  double cam_x = 0, cam_y = 0, cam_z = 2, yaw_deg = 0, fov_deg = 90;
  CLI::App* render = app.add_subcommand("render-depth", "render a dense depth map from a grid");
  render->add_option("--grid", grid_path, "OCC4 grid file")->required();
  render->add_option("--out", out_dir, "output directory");
  render->add_option("--timestep", timestep, "grid timestep");
  render->add_option("--camera-x", cam_x);
  render->add_option("--camera-y", cam_y);
  render->add_option("--camera-z", cam_z);
  render->add_option("--yaw-deg", yaw_deg, "camera heading");
  render->add_option("--width", width);
  render->add_option("--height", height);
  render->add_option("--fov-deg", fov_deg, "horizontal field of view");
  render->add_option("--pattern", pattern, "optional beam pattern resampling: hdl32|hdl64|stacked2x32");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig config = load_run_config(config_path);
    config.forecaster = parse_forecaster(forecaster);
    config.supervision = supervision == "future" ? Supervision::future_rays
                                                 : Supervision::past_rays;
    config.pose_source = pose_source == "cv" ? PoseSource::constant_velocity
                                             : PoseSource::ground_truth;

    if (simulate->parsed()) return cmd_simulate(config_path, out_dir);
    if (fit->parsed()) {
      const FitVariant variant = config.forecaster == ForecasterKind::fit_dynamic
                                     ? FitVariant::dynamic_grid
                                     : FitVariant::static_grid;
      return cmd_fit_grid(config, clips.at(0), out_dir, config.supervision, variant);
    }
    if (forecast->parsed()) return cmd_forecast(config, clips.at(0), out_dir);
    if (evaluate->parsed()) return cmd_evaluate(config, clips, out_dir);
    if (render->parsed())
      return cmd_render_depth(grid_path, out_dir, timestep, cam_x, cam_y, cam_z, yaw_deg, width,
                              height, fov_deg, pattern);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
