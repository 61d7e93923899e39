#include "kinegen/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kinegen/rng.hpp"

namespace kinegen::pc {

namespace {

constexpr double kPi = 3.14159265358979323846;

// A flat list of parametric surface patches with a cumulative-area table;
// sampling a point is a binary search plus two or three uniforms.
struct Patch {
  enum Kind { rect, lateral, disc } kind = rect;
  Pose pose;       // world pose of the patch frame
  double a = 0.0;  // rect: half extent u; lateral/disc: radius
  double b = 0.0;  // rect: half extent v; lateral: half height
  double area = 0.0;
};

void add_shape_patches(std::vector<Patch>& out, const scene::Shape& shape, const Pose& link_pose) {
  const Pose world = compose(link_pose, shape.local_pose);
  if (shape.kind == scene::ShapeKind::box) {
    const Vec3 h = shape.half_extents;
    struct Face {
      Vec3 normal;
      Vec3 u;
      Vec3 v;
      double hu, hv, off;
    };
    const Face faces[6] = {
        {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, h.y, h.z, h.x},  {{-1, 0, 0}, {0, 1, 0}, {0, 0, 1}, h.y, h.z, h.x},
        {{0, 1, 0}, {1, 0, 0}, {0, 0, 1}, h.x, h.z, h.y},  {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}, h.x, h.z, h.y},
        {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}, h.x, h.y, h.z},  {{0, 0, -1}, {1, 0, 0}, {0, 1, 0}, h.x, h.y, h.z},
    };
    for (const Face& f : faces) {
      Patch p;
      p.kind = Patch::rect;
      // Patch frame: origin at face center, x along u, y along v.
      const Vec3 z = f.normal;
      const Vec3 x = f.u;
      const Vec3 y = z.cross(x);
      (void)y;
      // Encode the face frame as a pose: rotation mapping local axes onto
      // (u, v, normal). Build from the two axis directions.
      Pose face;
      // Quaternion from orthonormal basis (columns x, z.cross(x), z).
      const Vec3 c0 = x, c2 = z, c1 = z.cross(x);
      const double tr = c0.x + c1.y + c2.z;
      UnitQuat q;
      if (tr > 0) {
        const double s = std::sqrt(tr + 1.0) * 2;
        q = UnitQuat(0.25 * s, (c1.z - c2.y) / s, (c2.x - c0.z) / s, (c0.y - c1.x) / s);
      } else if (c0.x > c1.y && c0.x > c2.z) {
        const double s = std::sqrt(1.0 + c0.x - c1.y - c2.z) * 2;
        q = UnitQuat((c1.z - c2.y) / s, 0.25 * s, (c1.x + c0.y) / s, (c2.x + c0.z) / s);
      } else if (c1.y > c2.z) {
        const double s = std::sqrt(1.0 + c1.y - c0.x - c2.z) * 2;
        q = UnitQuat((c2.x - c0.z) / s, (c1.x + c0.y) / s, 0.25 * s, (c2.y + c1.z) / s);
      } else {
        const double s = std::sqrt(1.0 + c2.z - c0.x - c1.y) * 2;
        q = UnitQuat((c0.y - c1.x) / s, (c2.x + c0.z) / s, (c2.y + c1.z) / s, 0.25 * s);
      }
      face.rotation = q;
      face.translation = f.normal * f.off;
      p.pose = compose(world, face);
      p.a = f.hu;
      p.b = f.hv;
      p.area = 4.0 * f.hu * f.hv;
      out.push_back(p);
    }
    return;
  }
  // Cylinder: lateral surface plus two end discs, axis along local z.
  Patch lat;
  lat.kind = Patch::lateral;
  lat.pose = world;
  lat.a = shape.radius;
  lat.b = shape.half_height;
  lat.area = 2.0 * kPi * shape.radius * 2.0 * shape.half_height;
  out.push_back(lat);
  for (int sgn : {1, -1}) {
    Patch disc;
    disc.kind = Patch::disc;
    disc.pose = compose(world, Pose::from_translation({0, 0, sgn * shape.half_height}));
    disc.a = shape.radius;
    disc.area = kPi * shape.radius * shape.radius;
    out.push_back(disc);
  }
}

std::vector<Patch> scene_patches(const scene::SceneState& scn) {
  std::vector<Patch> patches;
  for (const auto& [name, placed] : scn.objects) {
    const scene::LinkPoses fk =
        scene::forward_kinematics(*placed.object, placed.base_pose, placed.joint_value);
    for (const scene::Shape& s : placed.object->base_link) add_shape_patches(patches, s, fk.base);
    for (const scene::Shape& s : placed.object->child_link) add_shape_patches(patches, s, fk.child);
  }
  for (const auto& [name, placed] : scn.rigid_bodies)
    for (const scene::Shape& s : placed.object->shapes) add_shape_patches(patches, s, placed.pose);
  return patches;
}

Vec3 sample_patch(const Patch& p, double u, double v) {
  switch (p.kind) {
    case Patch::rect:
      return p.pose.apply({(2.0 * u - 1.0) * p.a, (2.0 * v - 1.0) * p.b, 0.0});
    case Patch::lateral: {
      const double phi = 2.0 * kPi * u;
      return p.pose.apply({p.a * std::cos(phi), p.a * std::sin(phi), (2.0 * v - 1.0) * p.b});
    }
    case Patch::disc: {
      const double r = p.a * std::sqrt(u);
      const double phi = 2.0 * kPi * v;
      return p.pose.apply({r * std::cos(phi), r * std::sin(phi), 0.0});
    }
  }
  return {};
}

Vec3 sample_point(const std::vector<Patch>& patches, const std::vector<double>& cumulative,
                  std::uint64_t seed, std::uint64_t index) {
  const double pick = rng::to_unit(rng::derive(seed, index, 0)) * cumulative.back();
  const std::size_t patch_ix =
      std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
  const Patch& p = patches[std::min(patch_ix, patches.size() - 1)];
  const double u = rng::to_unit(rng::derive(seed, index, 1));
  const double v = rng::to_unit(rng::derive(seed, index, 2));
  return sample_patch(p, u, v);
}

double sq_dist(const Vec3& a, const Vec3& b) { return (a - b).squared_norm(); }

// Mean distance to the k nearest neighbours, summed in ascending order so
// every implementation agrees bitwise.
double mean_knn_distance(const std::vector<Vec3>& pts, std::size_t i, std::size_t k) {
  std::vector<double> d2;
  d2.reserve(pts.size() - 1);
  for (std::size_t j = 0; j < pts.size(); ++j)
    if (j != i) d2.push_back(sq_dist(pts[i], pts[j]));
  std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
  std::sort(d2.begin(), d2.begin() + k);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += std::sqrt(d2[j]);
  return sum / static_cast<double>(k);
}

// Distances update in parallel inside one long-lived team; the greedy
// argmax runs in a single section so every thread sees the same next anchor.
std::vector<std::size_t> fps_indices(const PointCloud& cloud, std::size_t k, std::uint64_t seed,
                                     bool parallel) {
  const std::size_t n = cloud.size();
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t last = static_cast<std::size_t>(rng::derive(seed, 0) % n);
  picked.push_back(last);

  // Below this size the per-round barrier dominates the distance update.
  constexpr std::size_t kFpsParallelCutoff = 1 << 18;
  if (!parallel || n < kFpsParallelCutoff) {
    for (std::size_t round = 1; round < k; ++round) {
      const Vec3 anchor = cloud.points[last];
      std::size_t best = 0;
      for (std::size_t j = 0; j < n; ++j) {
        dist[j] = std::min(dist[j], sq_dist(cloud.points[j], anchor));
        if (dist[j] > dist[best]) best = j;  // ties keep the smaller index
      }
      picked.push_back(best);
      last = best;
    }
    return picked;
  }

  // One barrier per round: each thread updates its static chunk, records a
  // chunk-local argmax, then every thread derives the same global winner.
  struct Candidate {
    double dist;
    std::size_t index;
  };
  std::vector<Candidate> cand;  // double-buffered per round parity
#ifdef _OPENMP
  const int max_team = omp_get_max_threads();
#else
  const int max_team = 1;
#endif
  cand.resize(2 * max_team);
#pragma omp parallel
  {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
    const int team = omp_get_num_threads();
#else
    const int tid = 0;
    const int team = 1;
#endif
    std::size_t my_last = last;
    for (std::size_t round = 1; round < k; ++round) {
      Candidate* slot = cand.data() + (round % 2) * max_team;
      Candidate local{-1.0, 0};
      const Vec3 anchor = cloud.points[my_last];
#pragma omp for schedule(static) nowait
      for (std::int64_t j = 0; j < static_cast<std::int64_t>(n); ++j) {
        dist[j] = std::min(dist[j], sq_dist(cloud.points[j], anchor));
        if (dist[j] > local.dist) {
          local.dist = dist[j];
          local.index = j;
        }
      }
      slot[tid] = local;
#pragma omp barrier
      Candidate best = slot[0];
      for (int t = 1; t < team; ++t)
        if (slot[t].dist > best.dist || (slot[t].dist == best.dist && slot[t].index < best.index))
          best = slot[t];
      my_last = best.index;
#pragma omp single nowait
      picked.push_back(best.index);
    }
  }
  return picked;
}

PointCloud augment_impl(const PointCloud& cloud, const AugmentSpec& spec, std::uint64_t seed,
                        bool parallel) {
  PointCloud out;
  out.seed = seed;
  if (spec.crop_box) {
    for (const Vec3& p : cloud.points)
      if (spec.crop_box->contains(p)) out.points.push_back(p);
    if (out.points.empty()) throw EmptyAfterCropError();
  } else {
    out.points = cloud.points;
  }

  if (spec.noise_std > 0.0) {
    const std::uint64_t noise_seed = rng::derive(seed, 1);
    const std::int64_t n = static_cast<std::int64_t>(out.points.size());
    if (parallel) {
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < n; ++i) {
        out.points[i].x += spec.noise_std * rng::gaussian_at(noise_seed, 3 * i + 0);
        out.points[i].y += spec.noise_std * rng::gaussian_at(noise_seed, 3 * i + 1);
        out.points[i].z += spec.noise_std * rng::gaussian_at(noise_seed, 3 * i + 2);
      }
    } else {
      for (std::int64_t i = 0; i < n; ++i) {
        out.points[i].x += spec.noise_std * rng::gaussian_at(noise_seed, 3 * i + 0);
        out.points[i].y += spec.noise_std * rng::gaussian_at(noise_seed, 3 * i + 1);
        out.points[i].z += spec.noise_std * rng::gaussian_at(noise_seed, 3 * i + 2);
      }
    }
  }

  const std::size_t n = out.points.size();
  const std::size_t drop = static_cast<std::size_t>(spec.drop_fraction * static_cast<double>(n));
  if (drop > 0) {
    std::vector<std::size_t> index(n);
    for (std::size_t i = 0; i < n; ++i) index[i] = i;
    rng::Stream stream(rng::derive(seed, 2));
    for (std::size_t i = 0; i < drop; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(stream.next_below(n - i));
      std::swap(index[i], index[j]);
    }
    std::vector<bool> dropped(n, false);
    for (std::size_t i = 0; i < drop; ++i) dropped[index[i]] = true;
    std::vector<Vec3> kept;
    kept.reserve(n - drop);
    for (std::size_t i = 0; i < n; ++i)
      if (!dropped[i]) kept.push_back(out.points[i]);
    out.points = std::move(kept);
  }
  return out;
}

PointCloud remove_outliers_impl(const PointCloud& cloud, std::size_t k_neighbors,
                                double std_ratio, bool parallel) {
  const std::size_t n = cloud.size();
  if (n <= k_neighbors)
    throw TooFewPointsError("need more than " + std::to_string(k_neighbors) + " points, have " +
                            std::to_string(n));
  std::vector<double> mean_d(n);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      mean_d[i] = mean_knn_distance(cloud.points, i, k_neighbors);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      mean_d[i] = mean_knn_distance(cloud.points, i, k_neighbors);
  }
  double mean = 0.0;
  for (double d : mean_d) mean += d;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double d : mean_d) var += (d - mean) * (d - mean);
  const double cutoff = mean + std_ratio * std::sqrt(var / static_cast<double>(n));

  PointCloud out;
  out.seed = cloud.seed;
  for (std::size_t i = 0; i < n; ++i)
    if (mean_d[i] <= cutoff) out.points.push_back(cloud.points[i]);
  return out;
}

PointCloud sample_scene_impl(const scene::SceneState& scn, std::size_t n, std::uint64_t seed,
                             bool parallel) {
  if (n < 1) throw Error("sample_scene needs n >= 1");
  const std::vector<Patch> patches = scene_patches(scn);
  if (patches.empty()) throw Error("scene has no shapes to sample");
  std::vector<double> cumulative(patches.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    acc += patches[i].area;
    cumulative[i] = acc;
  }
  PointCloud out;
  out.seed = seed;
  out.points.resize(n);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
      out.points[i] = sample_point(patches, cumulative, seed, i);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.points[i] = sample_point(patches, cumulative, seed, i);
  }
  return out;
}

}  // namespace

PointCloud sample_scene(const scene::SceneState& scn, std::size_t n, std::uint64_t seed) {
  return sample_scene_impl(scn, n, seed, true);
}

PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > cloud.size()) throw KTooLargeError(k, cloud.size());
  PointCloud out;
  out.seed = seed;
  for (std::size_t ix : fps_indices(cloud, k, seed, true)) out.points.push_back(cloud.points[ix]);
  return out;
}

PointCloud uniform_sample(const PointCloud& cloud, std::size_t k, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (k < 1 || k > n) throw KTooLargeError(k, n);
  std::vector<std::size_t> index(n);
  for (std::size_t i = 0; i < n; ++i) index[i] = i;
  rng::Stream stream(seed);
  PointCloud out;
  out.seed = seed;
  out.points.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.next_below(n - i));
    std::swap(index[i], index[j]);
    out.points.push_back(cloud.points[index[i]]);
  }
  return out;
}

PointCloud remove_outliers(const PointCloud& cloud, std::size_t k_neighbors, double std_ratio) {
  return remove_outliers_impl(cloud, k_neighbors, std_ratio, true);
}

PointCloud augment(const PointCloud& cloud, const AugmentSpec& spec, std::uint64_t seed) {
  return augment_impl(cloud, spec, seed, true);
}

std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + cloud.size() * 12);
  const std::uint64_t n = cloud.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((n >> (8 * i)) & 0xff));
  auto push_f32 = [&out](float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
  };
  for (const Vec3& p : cloud.points) {
    push_f32(static_cast<float>(p.x));
    push_f32(static_cast<float>(p.y));
    push_f32(static_cast<float>(p.z));
  }
  return out;
}

PointCloud decode_cloud(const std::uint8_t* data, std::size_t size, std::size_t* consumed) {
  if (size < 8) throw ParseError("cloud blob truncated (missing count)");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(data[i]) << (8 * i);
  const std::size_t need = 8 + n * 12;
  if (size < need) throw ParseError("cloud blob truncated (points)");
  PointCloud out;
  out.points.reserve(n);
  auto read_f32 = [&data](std::size_t off) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(data[off + i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t off = 8 + i * 12;
    out.points.emplace_back(read_f32(off), read_f32(off + 4), read_f32(off + 8));
  }
  if (consumed) *consumed = need;
  return out;
}

double coverage_radius(const PointCloud& cloud, const PointCloud& selected) {
  double worst = 0.0;
  for (const Vec3& p : cloud.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& s : selected.points) best = std::min(best, sq_dist(p, s));
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

}  // namespace kinegen::pc

namespace kinegen::ref {

pc::PointCloud sample_scene(const scene::SceneState& scn, std::size_t n, std::uint64_t seed) {
  return pc::sample_scene_impl(scn, n, seed, false);
}

pc::PointCloud farthest_point_sample(const pc::PointCloud& cloud, std::size_t k,
                                     std::uint64_t seed) {
  if (k < 1 || k > cloud.size()) throw pc::KTooLargeError(k, cloud.size());
  pc::PointCloud out;
  out.seed = seed;
  for (std::size_t ix : pc::fps_indices(cloud, k, seed, false))
    out.points.push_back(cloud.points[ix]);
  return out;
}

pc::PointCloud remove_outliers(const pc::PointCloud& cloud, std::size_t k_neighbors,
                               double std_ratio) {
  return pc::remove_outliers_impl(cloud, k_neighbors, std_ratio, false);
}

pc::PointCloud augment(const pc::PointCloud& cloud, const pc::AugmentSpec& spec,
                       std::uint64_t seed) {
  return pc::augment_impl(cloud, spec, seed, false);
}

}  // namespace kinegen::ref
