#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "kinegen/pointcloud.hpp"
#include "kinegen/rng.hpp"
#include "support.hpp"

using namespace kinegen;
using namespace kinegen::pc;

namespace {

scene::SceneState unit_cube_scene() {
  scene::SceneState scn;
  auto cube = std::make_shared<scene::RigidObject>();
  cube->name = "cube";
  scene::Shape s;
  s.kind = scene::ShapeKind::box;
  s.half_extents = {0.5, 0.5, 0.5};
  cube->shapes.push_back(s);
  scn.rigid_bodies["cube"] = {cube, Pose::identity()};
  return scn;
}

double cube_surface_distance(const Vec3& p) {
  // Distance to the surface of the unit cube centered at the origin.
  const double dx = 0.5 - std::abs(p.x);
  const double dy = 0.5 - std::abs(p.y);
  const double dz = 0.5 - std::abs(p.z);
  if (dx < 0 || dy < 0 || dz < 0) return 1.0;  // outside counts as far
  return std::min({dx, dy, dz});
}

bool clouds_equal(const PointCloud& a, const PointCloud& b) {
  if (a.points.size() != b.points.size()) return false;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (a.points[i].x != b.points[i].x || a.points[i].y != b.points[i].y ||
        a.points[i].z != b.points[i].z)
      return false;
  }
  return true;
}

double min_pairwise_distance(const PointCloud& c) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.points.size(); ++i)
    for (std::size_t j = i + 1; j < c.points.size(); ++j)
      best = std::min(best, (c.points[i] - c.points[j]).norm());
  return best;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  rng::Stream stream(seed);
  PointCloud out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i)
    out.points.push_back(
        {stream.next_in(-1, 1), stream.next_in(-1, 1), stream.next_in(-1, 1)});
  return out;
}

}  // namespace

TEST_CASE("scene samples lie on the shape surfaces") {
  const scene::SceneState scn = unit_cube_scene();
  const PointCloud cloud = sample_scene(scn, 1000, 42);
  REQUIRE(cloud.size() == 1000);
  for (const Vec3& p : cloud.points) CHECK(cube_surface_distance(p) <= 1e-9);

  const PointCloud again = sample_scene(scn, 1000, 42);
  CHECK(clouds_equal(cloud, again));
  const PointCloud other = sample_scene(scn, 1000, 43);
  CHECK(!clouds_equal(cloud, other));
}

TEST_CASE("opening the drawer shifts the child-link points along its axis") {
  const scene::AssetLibrary lib = testsupport::bundled_library();
  scene::SceneState closed;
  closed.objects["drawer"] = {lib.instantiate("drawer", "drawer_0"),
                              Pose::from_translation({0.55, 0, 0}), 0.0};
  scene::SceneState open = closed;
  open.objects["drawer"].joint_value = 0.08;

  const PointCloud a = sample_scene(closed, 20000, 7);
  const PointCloud b = sample_scene(open, 20000, 7);

  // Identical seeds keep per-point surface assignments, so child points
  // translate exactly; the centroid shift equals the child's area share.
  Vec3 centroid_a{0, 0, 0}, centroid_b{0, 0, 0};
  for (const Vec3& p : a.points) centroid_a += p * (1.0 / a.size());
  for (const Vec3& p : b.points) centroid_b += p * (1.0 / b.size());

  const auto& obj = *closed.objects.at("drawer").object;
  double base_area = 0.0, child_area = 0.0;
  for (const auto& s : obj.base_link) base_area += s.surface_area();
  for (const auto& s : obj.child_link) child_area += s.surface_area();
  const double share = child_area / (base_area + child_area);

  const Vec3 axis_world = closed.objects.at("drawer").base_pose.rotation.rotate(obj.joint.axis);
  const Vec3 expected = axis_world * (0.08 * share);
  CHECK(approx_equal(centroid_b - centroid_a, expected, 1e-12));
}

TEST_CASE("farthest point sampling basics") {
  const PointCloud cloud = random_cloud(128, 5);

  const PointCloud all = farthest_point_sample(cloud, 128, 9);
  std::multiset<double> in, out;
  for (const Vec3& p : cloud.points) in.insert(p.x);
  for (const Vec3& p : all.points) out.insert(p.x);
  CHECK(in == out);  // k = N returns a permutation

  const PointCloud one = farthest_point_sample(cloud, 1, 9);
  REQUIRE(one.size() == 1);
  const std::size_t start = rng::derive(9, 0) % cloud.size();
  CHECK(one.points[0].x == cloud.points[start].x);

  CHECK_THROWS_AS(farthest_point_sample(cloud, 200, 9), KTooLargeError);

  // Subset property.
  const PointCloud some = farthest_point_sample(cloud, 32, 9);
  for (const Vec3& p : some.points) {
    bool found = false;
    for (const Vec3& q : cloud.points)
      found = found || (p.x == q.x && p.y == q.y && p.z == q.z);
    CHECK(found);
  }

  CHECK(clouds_equal(farthest_point_sample(cloud, 32, 9), farthest_point_sample(cloud, 32, 9)));
}

TEST_CASE("fps spreads points farther apart than uniform sampling") {
  const PointCloud cloud = random_cloud(200, 31);
  const std::size_t k = 20;
  const PointCloud fps = farthest_point_sample(cloud, k, 3);
  const PointCloud uni = uniform_sample(cloud, k, 3);
  CHECK(min_pairwise_distance(fps) >= min_pairwise_distance(uni));
}

TEST_CASE("fps coverage radius is within twice the optimum") {
  // Brute-force optimal k-center on small clouds.
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const PointCloud cloud = random_cloud(100, seed);
    const std::size_t n = cloud.size();

    auto radius_for = [&](const std::vector<std::size_t>& centers) {
      double worst = 0.0;
      for (const Vec3& p : cloud.points) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c : centers) best = std::min(best, (p - cloud.points[c]).norm());
        worst = std::max(worst, best);
      }
      return worst;
    };

    for (std::size_t k : {2ul, 3ul}) {
      double optimal = std::numeric_limits<double>::infinity();
      std::vector<std::size_t> centers(k);
      if (k == 2) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j) optimal = std::min(optimal, radius_for({i, j}));
      } else {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t l = j + 1; l < n; ++l)
              optimal = std::min(optimal, radius_for({i, j, l}));
      }
      const PointCloud fps = farthest_point_sample(cloud, k, seed + 100);
      const double fps_radius = coverage_radius(cloud, fps);
      CHECK(fps_radius <= 2.0 * optimal + 1e-12);
    }
  }
}

TEST_CASE("uniform sampling is a seeded draw without replacement") {
  const PointCloud cloud = random_cloud(40, 99);

  const PointCloud all = uniform_sample(cloud, 40, 1);
  std::multiset<double> in, out;
  for (const Vec3& p : cloud.points) in.insert(p.x);
  for (const Vec3& p : all.points) out.insert(p.x);
  CHECK(in == out);

  CHECK(clouds_equal(uniform_sample(cloud, 10, 5), uniform_sample(cloud, 10, 5)));
  CHECK_THROWS_AS(uniform_sample(cloud, 41, 5), KTooLargeError);

  // Inclusion probability of a fixed point is k/N within 3 sigma.
  const std::size_t k = 10;
  const double p = static_cast<double>(k) / cloud.size();
  const int draws = 10000;
  int included = 0;
  const Vec3 target = cloud.points[0];
  for (int s = 0; s < draws; ++s) {
    const PointCloud sub = uniform_sample(cloud, k, 1000 + s);
    for (const Vec3& q : sub.points)
      if (q.x == target.x && q.y == target.y && q.z == target.z) {
        ++included;
        break;
      }
  }
  const double sigma = std::sqrt(p * (1 - p) / draws);
  CHECK(std::abs(included / static_cast<double>(draws) - p) <= 3 * sigma);
}

TEST_CASE("outlier removal drops the planted point and keeps the plane") {
  // Dense plane patch plus one point far away.
  PointCloud cloud;
  rng::Stream stream(7);
  for (int i = 0; i < 400; ++i)
    cloud.points.push_back({stream.next_in(-0.5, 0.5), stream.next_in(-0.5, 0.5), 0.0});
  cloud.points.push_back({10.0, 10.0, 10.0});

  const PointCloud cleaned = remove_outliers(cloud, 16, 2.0);
  CHECK(cleaned.size() >= 397);  // at least 99% of the clean points survive
  for (const Vec3& q : cleaned.points) CHECK(q.z == 0.0);  // the planted point is gone

  // Subset property: order preserved, every output present in the input.
  std::size_t cursor = 0;
  for (const Vec3& q : cleaned.points) {
    while (cursor < cloud.points.size() &&
           !(cloud.points[cursor].x == q.x && cloud.points[cursor].y == q.y &&
             cloud.points[cursor].z == q.z))
      ++cursor;
    CHECK(cursor < cloud.points.size());
  }

  PointCloud tiny;
  tiny.points = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(remove_outliers(tiny, 16, 2.0), TooFewPointsError);
}

TEST_CASE("augmentation applies crop, noise, and exact drops") {
  const PointCloud cloud = random_cloud(1000, 2);

  AugmentSpec drop_only;
  drop_only.drop_fraction = 0.1;
  const PointCloud dropped = augment(cloud, drop_only, 5);
  CHECK(dropped.size() == 900);  // exactly floor(0.1 * 1000) removed

  AugmentSpec identity;
  identity.crop_box = Aabb{{-2, -2, -2}, {2, 2, 2}};
  const PointCloud same = augment(cloud, identity, 5);
  CHECK(clouds_equal(same, cloud));

  AugmentSpec crop_out;
  crop_out.crop_box = Aabb{{10, 10, 10}, {11, 11, 11}};
  CHECK_THROWS_AS(augment(cloud, crop_out, 5), EmptyAfterCropError);

  // Noise std within 10% on a large sample.
  const PointCloud big = random_cloud(100000, 3);
  AugmentSpec noisy;
  noisy.noise_std = 0.005;
  const PointCloud jittered = augment(big, noisy, 6);
  REQUIRE(jittered.size() == big.size());
  for (int dim = 0; dim < 3; ++dim) {
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) {
      const double d = dim == 0   ? jittered.points[i].x - big.points[i].x
                       : dim == 1 ? jittered.points[i].y - big.points[i].y
                                  : jittered.points[i].z - big.points[i].z;
      sum += d;
      sum2 += d * d;
    }
    const double n = static_cast<double>(big.size());
    const double std_dev = std::sqrt(sum2 / n - (sum / n) * (sum / n));
    CHECK(std::abs(std_dev - 0.005) <= 0.1 * 0.005);
  }
}

TEST_CASE("cloud wire format round-trips") {
  const PointCloud cloud = random_cloud(257, 8);
  const std::vector<std::uint8_t> blob = encode_cloud(cloud);
  CHECK(blob.size() == 8 + 257 * 12);
  std::size_t consumed = 0;
  const PointCloud back = decode_cloud(blob.data(), blob.size(), &consumed);
  CHECK(consumed == blob.size());
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    CHECK(back.points[i].x == doctest::Approx(cloud.points[i].x).epsilon(1e-6));
  CHECK_THROWS_AS(decode_cloud(blob.data(), 4, nullptr), ParseError);
}

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  const scene::SceneState scn = unit_cube_scene();
  const PointCloud via_omp = sample_scene(scn, 50000, 21);
  const PointCloud via_ref = ref::sample_scene(scn, 50000, 21);
  CHECK(clouds_equal(via_omp, via_ref));

  const PointCloud big = random_cloud(1 << 18, 22);
  CHECK(clouds_equal(farthest_point_sample(big, 64, 4), ref::farthest_point_sample(big, 64, 4)));

  const PointCloud mid = random_cloud(3000, 23);
  CHECK(clouds_equal(remove_outliers(mid, 16, 2.0), ref::remove_outliers(mid, 16, 2.0)));

  AugmentSpec spec;
  spec.noise_std = 0.01;
  spec.drop_fraction = 0.25;
  CHECK(clouds_equal(augment(mid, spec, 9), ref::augment(mid, spec, 9)));
}
