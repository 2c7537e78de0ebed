#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "occ4d/grid.hpp"

using namespace occ4d;

TEST_CASE("grid construction snaps bounds outward", "[grid]") {
  const OccupancyGrid4D g({{0, 0, 0}, {1.7, 2.0, 0.3}}, 0.5, 2);
  CHECK(g.nx() == 4);
  CHECK(g.ny() == 4);
  CHECK(g.nz() == 1);
  CHECK(g.bounds().max_corner.x == Catch::Approx(2.0));
  CHECK(g.bounds().max_corner.z == Catch::Approx(0.5));
  CHECK(g.n_timesteps() == 2);
  CHECK(g.values().size() == 2u * 4 * 4 * 1);
}

TEST_CASE("world_to_voxel", "[grid]") {
  const OccupancyGrid4D g({{0, 0, 0}, {2, 2, 2}}, 1.0, 1);
  SECTION("interior point") {
    const auto v = g.world_to_voxel({0.5, 0.5, 0.5});
    REQUIRE(v);
    CHECK(*v == VoxelIndex{0, 0, 0});
  }
  SECTION("max face maps to last voxel") {
    const auto v = g.world_to_voxel({2.0, 2.0, 2.0});
    REQUIRE(v);
    CHECK(*v == VoxelIndex{1, 1, 1});
  }
  SECTION("outside") {
    CHECK_FALSE(g.world_to_voxel({2.1, 0, 0}));
  }
}

TEST_CASE("traverse hand cases", "[grid]") {
  SECTION("two voxels along x") {
    const OccupancyGrid4D g({{0, 0, 0}, {2, 1, 1}}, 1.0, 1);
    const auto steps = g.traverse({-1, 0.5, 0.5}, {1, 0, 0});
    REQUIRE(steps.size() == 2);
    CHECK(steps[0].voxel == VoxelIndex{0, 0, 0});
    CHECK(steps[0].entry_distance == Catch::Approx(1.0));
    CHECK(steps[0].exit_distance == Catch::Approx(2.0));
    CHECK(steps[1].voxel == VoxelIndex{1, 0, 0});
    CHECK(steps[1].entry_distance == Catch::Approx(2.0));
    CHECK(steps[1].exit_distance == Catch::Approx(3.0));
  }
  SECTION("miss gives empty list") {
    const OccupancyGrid4D g({{0, 0, 0}, {2, 2, 2}}, 1.0, 1);
    CHECK(g.traverse({-1, 5, 0.5}, {1, 0, 0}).empty());
  }
  SECTION("origin inside") {
    const OccupancyGrid4D g({{0, 0, 0}, {2, 2, 2}}, 1.0, 1);
    const auto steps = g.traverse({0.5, 0.5, 0.5}, {1, 0, 0});
    REQUIRE(steps.size() == 2);
    CHECK(steps[0].voxel == VoxelIndex{0, 0, 0});
    CHECK(steps[0].entry_distance == Catch::Approx(0.0).margin(1e-12));
    CHECK(steps[0].exit_distance == Catch::Approx(0.5));
    CHECK(steps[1].voxel == VoxelIndex{1, 0, 0});
    CHECK(steps[1].entry_distance == Catch::Approx(0.5));
    CHECK(steps[1].exit_distance == Catch::Approx(1.5));
  }
  SECTION("diagonal ray shares boundaries") {
    const OccupancyGrid4D g({{0, 0, 0}, {4, 4, 4}}, 1.0, 1);
    const Vec3 dir = Vec3{1, 0.7, 0.3}.normalized();
    const auto steps = g.traverse({-0.5, 0.2, 0.1}, dir);
    REQUIRE_FALSE(steps.empty());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      CHECK(steps[i].entry_distance < steps[i].exit_distance);
      if (i > 0)
        CHECK(steps[i].entry_distance == Catch::Approx(steps[i - 1].exit_distance).margin(1e-9));
    }
  }
}

TEST_CASE("traverse segment-length conservation and determinism", "[grid][property]") {
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> coord(-6.0, 6.0);
  for (int trial = 0; trial < 500; ++trial) {
    const OccupancyGrid4D g({{-3, -3, -3}, {3, 3, 3}}, 0.75, 1);
    const Vec3 origin{coord(rng), coord(rng), coord(rng)};
    Vec3 dir{coord(rng), coord(rng), coord(rng)};
    if (dir.norm() < 1e-6) continue;
    dir = dir.normalized();
    const auto steps = g.traverse(origin, dir);
    const auto interval = ray_volume_intersection(origin, dir, g.bounds());
    if (steps.empty()) continue;
    REQUIRE(interval);
    double total = 0.0;
    for (const auto& s : steps) total += s.exit_distance - s.entry_distance;
    const double expected = interval->t_far - interval->t_near;
    CHECK(std::abs(total - expected) <= 1e-6 * std::max(1.0, expected));

    // bitwise determinism
    const auto steps2 = g.traverse(origin, dir);
    REQUIRE(steps.size() == steps2.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      CHECK(steps[i].voxel == steps2[i].voxel);
      CHECK(steps[i].entry_distance == steps2[i].entry_distance);
      CHECK(steps[i].exit_distance == steps2[i].exit_distance);
    }
  }
}

namespace {

// dense-sampling traversal oracle: voxels visited, in order, with short
// grazing segments dropped
std::vector<VoxelIndex> sampling_oracle(const OccupancyGrid4D& g, const Vec3& origin,
                                        const Vec3& dir) {
  std::vector<VoxelIndex> out;
  const auto interval = ray_volume_intersection(origin, dir, g.bounds());
  if (!interval) return out;
  const double step = g.voxel_size() / 100.0;
  std::optional<VoxelIndex> last;
  for (double t = interval->t_near + step / 2; t < interval->t_far; t += step) {
    const auto v = g.world_to_voxel(origin + t * dir);
    if (!v) continue;
    if (!last || !(*v == *last)) {
      out.push_back(*v);
      last = *v;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("traversal matches the sampling oracle", "[grid][oracle]") {
  std::mt19937 rng(4321);
  std::uniform_real_distribution<double> coord(-8.0, 8.0);
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double vs = 0.5 + 0.5 * (trial % 3);
    const OccupancyGrid4D g({{-4, -4, -4}, {4, 4, 4}}, vs, 1);
    const Vec3 origin{coord(rng), coord(rng), coord(rng)};
    Vec3 dir{coord(rng), coord(rng), coord(rng)};
    if (dir.norm() < 1e-6) continue;
    dir = dir.normalized();

    const auto oracle = sampling_oracle(g, origin, dir);
    const auto steps = g.traverse(origin, dir);
    // drop grazing segments shorter than voxel_size/50 from both sides;
    // sampling may miss or barely catch those
    auto segment_length = [&](const VoxelIndex& v) {
      for (const auto& s : steps)
        if (s.voxel == v) return s.exit_distance - s.entry_distance;
      return 0.0;
    };
    std::vector<VoxelIndex> mine, oracle_kept;
    for (const auto& s : steps)
      if (s.exit_distance - s.entry_distance >= vs / 50.0) mine.push_back(s.voxel);
    for (const auto& v : oracle)
      if (segment_length(v) >= vs / 50.0) oracle_kept.push_back(v);
    REQUIRE(mine == oracle_kept);
    ++compared;
  }
  CHECK(compared > 500);
}

TEST_CASE("rasterize_points", "[grid]") {
  const VolumeBounds bounds{{0, 0, 0}, {2, 2, 2}};
  SECTION("empty input") {
    const auto g = rasterize_points({}, bounds, 1.0);
    for (float v : g.values()) CHECK(v == 0.0f);
  }
  SECTION("single point and idempotence") {
    const auto g = rasterize_points({{0.5, 0.5, 0.5}, {0.6, 0.4, 0.5}}, bounds, 1.0);
    int occupied = 0;
    for (float v : g.values())
      if (v == 1.0f) ++occupied;
    CHECK(occupied == 1);
  }
}

TEST_CASE("OCC4 round trip", "[grid][io]") {
  OccupancyGrid4D g({{-1, -2, -3}, {4, 5, 6}}, 0.7, 3);
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : g.values()) v = u(rng);

  const auto path = std::filesystem::temp_directory_path() / "occ4d_test_grid.occ4";
  g.save(path.string());
  const OccupancyGrid4D back = OccupancyGrid4D::load(path.string());
  CHECK(back.nx() == g.nx());
  CHECK(back.ny() == g.ny());
  CHECK(back.nz() == g.nz());
  CHECK(back.n_timesteps() == g.n_timesteps());
  CHECK(back.voxel_size() == g.voxel_size());
  CHECK(back.values() == g.values());
  std::filesystem::remove(path);
}

TEST_CASE("OCC4 load rejects bad files", "[grid][io]") {
  const auto path = std::filesystem::temp_directory_path() / "occ4d_bad_grid.occ4";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE garbage";
  }
  CHECK_THROWS_WITH(OccupancyGrid4D::load(path.string()),
                    Catch::Matchers::ContainsSubstring("bad magic"));
  std::filesystem::remove(path);
}
