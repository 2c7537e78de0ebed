#include <catch2/catch_amalgamated.hpp>

#include "occ4d/forecasters.hpp"
#include "occ4d/io.hpp"
#include "occ4d/metrics.hpp"

using namespace occ4d;

namespace {

SequenceClip static_test_clip(int n_frames = 4, int present_index = 1) {
  Scene scene;
  scene.ground_z = 0.0;
  scene.boxes.push_back({{6, -2, 0}, {8, 2, 2}, {0, 0, 0}});
  scene.boxes.push_back({{-7, 3, 0}, {-5, 6, 1.5}, {0, 0, 0}});
  const LidarModel lidar{96, LidarModel::linspace_deg(-35, -5, 10), 60.0};
  std::vector<TimedPose> traj;
  RigidPose pose;
  pose.translation = {0, 0, 2};
  for (int i = 0; i < n_frames; ++i) traj.push_back({pose, i * 0.5});
  return generate_clip(scene, traj, lidar, present_index);
}

}  // namespace

TEST_CASE("raytracing_baseline", "[forecasters]") {
  SECTION("single point makes one occupied voxel per timestep") {
    SequenceClip clip;
    Frame frame;
    frame.pose = RigidPose::identity();
    frame.points = {{1.5, 1.5, 1.5}};
    clip.past_frames.push_back(frame);
    const auto grid = raytracing_baseline(clip, {{0, 0, 0}, {4, 4, 4}}, 1.0, 3);
    for (int t = 0; t < 3; ++t) {
      int occupied = 0;
      for (int ix = 0; ix < 4; ++ix)
        for (int iy = 0; iy < 4; ++iy)
          for (int iz = 0; iz < 4; ++iz)
            if (grid.at(t, ix, iy, iz) == 1.0f) ++occupied;
      CHECK(occupied == 1);
    }
  }
  SECTION("output is binary and identical across timesteps") {
    const SequenceClip clip = static_test_clip();
    const auto grid = raytracing_baseline(clip, {{-15, -15, -1}, {15, 15, 4}}, 0.5, 2);
    const std::size_t slice = grid.voxels_per_slice();
    for (std::size_t i = 0; i < slice; ++i) {
      const float v = grid.values()[i];
      CHECK((v == 0.0f || v == 1.0f));
      CHECK(grid.values()[slice + i] == v);
    }
  }
  SECTION("empty history throws") {
    CHECK_THROWS(raytracing_baseline(SequenceClip{}, {{0, 0, 0}, {1, 1, 1}}, 0.5, 1));
  }
  SECTION("static scene: near-field L1 stays near discretization error") {
    const SequenceClip clip = static_test_clip();
    const VolumeBounds bounds{{-15, -15, -1}, {15, 15, 4}};
    const double voxel = 0.5;
    const auto grid = raytracing_baseline(clip, bounds, voxel, 2);
    const RayBatch rays = build_query_rays(clip, 2, PoseSource::ground_truth);
    const MetricReport report = evaluate_forecast(grid, rays, bounds);
    // grazing ground rays can stop up to voxel/sin(elevation) early, so the
    // bound is a couple of diagonals, not one
    CHECK(report.l1_m <= 2.0 * voxel * std::sqrt(3.0));
    // and the baseline must beat rendering through an empty grid by a wide
    // margin
    const OccupancyGrid4D empty(bounds, voxel, 2);
    const MetricReport empty_report = evaluate_forecast(empty, rays, bounds);
    CHECK(report.l1_m <= 0.5 * empty_report.l1_m);
  }
}

TEST_CASE("constant_velocity_poses", "[forecasters]") {
  SECTION("stationary history holds the last pose") {
    RigidPose pose;
    pose.translation = {3, 4, 5};
    const auto out = constant_velocity_poses({{pose, 0.0}, {pose, 1.0}}, {2.0, 3.0});
    REQUIRE(out.size() == 2);
    CHECK(out[0].translation == pose.translation);
    CHECK(out[1].translation == pose.translation);
  }
  SECTION("linear motion continues") {
    RigidPose a, b;
    a.translation = {0, 0, 0};
    b.translation = {1, 0, 0};
    const auto out = constant_velocity_poses({{a, 0.0}, {b, 1.0}}, {2.0, 3.0});
    CHECK(out[0].translation.x == Catch::Approx(2.0));
    CHECK(out[1].translation.x == Catch::Approx(3.0));
  }
  SECTION("irregular timestamps use per-unit-time velocity") {
    RigidPose a, b;
    a.translation = {0, 0, 0};
    b.translation = {1, 0, 0};
    // 1 m over 0.5 s -> 2 m/s
    const auto out = constant_velocity_poses({{a, 0.0}, {b, 0.5}}, {1.5});
    CHECK(out[0].translation.x == Catch::Approx(3.0));
  }
  SECTION("fewer than two poses throws") {
    CHECK_THROWS(constant_velocity_poses({{RigidPose{}, 0.0}}, {1.0}));
  }
}

TEST_CASE("fit_grid basics", "[forecasters]") {
  const SequenceClip clip = static_test_clip();
  const VolumeBounds bounds{{-12, -12, -1}, {12, 12, 3}};

  SECTION("zero-step run returns the initialization") {
    FitConfig config;
    config.iterations = 1;
    config.step_size = 0.0;
    config.init_logit = -4.0;
    const FitResult result =
        fit_grid(clip, bounds, 1.0, 2, config, Supervision::past_rays);
    const float expected = static_cast<float>(1.0 / (1.0 + std::exp(4.0)));
    for (float v : result.grid.values()) CHECK(v == Catch::Approx(expected).epsilon(1e-6));
  }

  SECTION("loss trace is non-increasing for a small step") {
    FitConfig config;
    config.iterations = 40;
    config.step_size = 2e-4;
    const FitResult result =
        fit_grid(clip, bounds, 1.0, 2, config, Supervision::past_rays);
    REQUIRE(result.loss_trace.size() == 40);
    for (std::size_t i = 1; i < result.loss_trace.size(); ++i)
      CHECK(result.loss_trace[i] <= result.loss_trace[i - 1] + 1e-9);
    CHECK(result.loss_trace.back() < result.loss_trace.front());
  }

  SECTION("runs are bitwise reproducible") {
    FitConfig config;
    config.iterations = 5;
    config.step_size = 1e-3;
    const FitResult a = fit_grid(clip, bounds, 1.0, 2, config, Supervision::past_rays);
    const FitResult b = fit_grid(clip, bounds, 1.0, 2, config, Supervision::past_rays);
    CHECK(a.grid.values() == b.grid.values());
    CHECK(a.loss_trace == b.loss_trace);
  }
}

TEST_CASE("fit_grid convergence on a static scene", "[forecasters][slow]") {
  const SequenceClip clip = static_test_clip();
  // volume floor at the ground plane, so escaping probability mass exits at
  // the surface rather than rendering meters below it
  const VolumeBounds bounds{{-12, -12, 0}, {12, 12, 3}};
  const double voxel = 0.5;

  FitConfig config;
  config.variant = FitVariant::static_grid;
  config.iterations = 600;
  config.step_size = 1e-1;
  config.init_logit = -2.0;
  const FitResult fit_past =
      fit_grid(clip, bounds, voxel, 2, config, Supervision::past_rays);

  const RayBatch rays = build_query_rays(clip, 2, PoseSource::ground_truth);
  const MetricReport past_report = evaluate_forecast(fit_past.grid, rays, bounds);
  CHECK(past_report.l1_m < voxel);

  SECTION("future-ray supervision is at least as good") {
    const FitResult fit_future =
        fit_grid(clip, bounds, voxel, 2, config, Supervision::future_rays);
    const MetricReport future_report = evaluate_forecast(fit_future.grid, rays, bounds);
    CHECK(future_report.l1_m <= past_report.l1_m + 0.05);
  }

  SECTION("dynamic variant agrees with static on a static scene") {
    FitConfig dyn = config;
    dyn.variant = FitVariant::dynamic_grid;
    const FitResult fit_dyn = fit_grid(clip, bounds, voxel, 2, dyn, Supervision::past_rays);
    int agree = 0, total = 0;
    for (const Ray& ray : rays) {
      const auto a = expected_depth_infer(sample_ray(fit_past.grid, ray.timestep, ray));
      const auto b = expected_depth_infer(sample_ray(fit_dyn.grid, ray.timestep, ray));
      if (!a || !b) continue;
      ++total;
      if (std::abs(a->expected_depth - b->expected_depth) <= voxel) ++agree;
    }
    REQUIRE(total > 100);
    CHECK(static_cast<double>(agree) / total >= 0.95);
  }
}

TEST_CASE("fit_grid validation", "[forecasters]") {
  const SequenceClip clip = static_test_clip();
  FitConfig config;
  config.iterations = 0;
  CHECK_THROWS(fit_grid(clip, {{-5, -5, -1}, {5, 5, 3}}, 1.0, 2, config,
                        Supervision::past_rays));
  config.iterations = 1;
  SequenceClip empty;
  CHECK_THROWS(fit_grid(empty, {{-5, -5, -1}, {5, 5, 3}}, 1.0, 2, config,
                        Supervision::past_rays));
}
