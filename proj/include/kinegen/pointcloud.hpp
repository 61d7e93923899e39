#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kinegen/geometry.hpp"
#include "kinegen/scene.hpp"

namespace kinegen::pc {

struct PointCloud {
  std::vector<Vec3> points;
  std::uint64_t seed = 0;  // seed that produced this cloud (provenance)

  std::size_t size() const { return points.size(); }
};

struct Aabb {
  Vec3 lo;
  Vec3 hi;
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
};

struct AugmentSpec {
  std::optional<Aabb> crop_box;
  double noise_std = 0.0;      // meters, per coordinate
  double drop_fraction = 0.0;  // in [0, 1)
};

class KTooLargeError : public Error {
public:
  KTooLargeError(std::size_t k, std::size_t n)
      : Error("k=" + std::to_string(k) + " exceeds cloud size " + std::to_string(n)) {}
};
class TooFewPointsError : public Error {
public:
  using Error::Error;
};
class EmptyAfterCropError : public Error {
public:
  EmptyAfterCropError() : Error("crop box removed every point") {}
};

// n points drawn area-weighted from all object shape surfaces under the
// scene's current kinematics; point i depends only on (seed, i).
PointCloud sample_scene(const scene::SceneState& scn, std::size_t n, std::uint64_t seed);

// Greedy farthest point sampling from a seeded start point. Output points
// appear in selection order and form a subset of the input.
PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k, std::uint64_t seed);

// k indices drawn without replacement (seeded partial Fisher-Yates).
PointCloud uniform_sample(const PointCloud& cloud, std::size_t k, std::uint64_t seed);

// Statistical removal: drops points whose mean k-NN distance exceeds the
// global mean by more than std_ratio standard deviations.
PointCloud remove_outliers(const PointCloud& cloud, std::size_t k_neighbors, double std_ratio);

// Crop, then per-coordinate Gaussian noise, then drop exactly
// floor(drop_fraction * N') seeded-random points.
PointCloud augment(const PointCloud& cloud, const AugmentSpec& spec, std::uint64_t seed);

// Wire format used inside dataset blobs: u64 LE count, then N little-endian
// f32 (x, y, z) triples.
std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(const std::uint8_t* data, std::size_t size, std::size_t* consumed);

// Max distance from any input point to its nearest selected point.
double coverage_radius(const PointCloud& cloud, const PointCloud& selected);

}  // namespace kinegen::pc

namespace kinegen::ref {

// Serial reference implementations used by tests and the benchmark to pin
// down the OpenMP kernels; results must match bit for bit.
pc::PointCloud sample_scene(const scene::SceneState& scn, std::size_t n, std::uint64_t seed);
pc::PointCloud farthest_point_sample(const pc::PointCloud& cloud, std::size_t k,
                                     std::uint64_t seed);
pc::PointCloud remove_outliers(const pc::PointCloud& cloud, std::size_t k_neighbors,
                               double std_ratio);
pc::PointCloud augment(const pc::PointCloud& cloud, const pc::AugmentSpec& spec,
                       std::uint64_t seed);

}  // namespace kinegen::ref
