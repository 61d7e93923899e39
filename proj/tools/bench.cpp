// Benchmark comparing the OpenMP kernels against their serial reference
// implementations. Outputs one line per kernel with both timings and the
// speedup; also verifies the outputs match exactly.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kinegen/datagen.hpp"
#include "kinegen/kpam.hpp"
#include "kinegen/pointcloud.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/scene.hpp"

using namespace kinegen;

namespace {

template <typename F>
double time_one(F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_cloud(const pc::PointCloud& a, const pc::PointCloud& b) {
  if (a.points.size() != b.points.size()) return false;
  for (std::size_t i = 0; i < a.points.size(); ++i)
    if (std::memcmp(&a.points[i], &b.points[i], sizeof(Vec3)) != 0) return false;
  return true;
}

void report(const char* name, double serial, double parallel, bool match) {
  std::printf("%-24s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name,
              serial * 1e3, parallel * 1e3, serial / parallel, match ? "match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  std::string manifest = "assets/manifest.yaml";
  if (argc > 1) manifest = argv[1];

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP)\n");
#endif

  const scene::AssetLibrary lib = scene::load_asset_library(manifest);
  config::TaskSpec task = config::parse_task_spec(R"({
    "task-name": "open-box",
    "task-description": "open the box lid",
    "assets-used": ["box_rotate"],
    "success-criteria": ["articulated_open"]
  })");
  const scene::SceneState scn = data::build_nominal_scene(task, lib);

  // Scene surface sampling.
  pc::PointCloud cloud_par, cloud_ser;
  const double t_sample_par = time_one([&] { cloud_par = pc::sample_scene(scn, 1 << 19, 7); });
  const double t_sample_ser = time_one([&] { cloud_ser = ref::sample_scene(scn, 1 << 19, 7); });
  report("sample_scene 512k", t_sample_ser, t_sample_par, same_cloud(cloud_par, cloud_ser));

  // Farthest point sampling.
  const pc::PointCloud fps_input = pc::sample_scene(scn, 1 << 19, 11);
  pc::PointCloud fps_par, fps_ser;
  const double t_fps_par =
      time_one([&] { fps_par = pc::farthest_point_sample(fps_input, 512, 3); });
  const double t_fps_ser =
      time_one([&] { fps_ser = ref::farthest_point_sample(fps_input, 512, 3); });
  report("fps 512k->512", t_fps_ser, t_fps_par, same_cloud(fps_par, fps_ser));

  // Outlier removal (brute-force kNN).
  const pc::PointCloud knn_input = pc::sample_scene(scn, 6000, 13);
  pc::PointCloud knn_par, knn_ser;
  const double t_knn_par = time_one([&] { knn_par = pc::remove_outliers(knn_input, 16, 2.0); });
  const double t_knn_ser = time_one([&] { knn_ser = ref::remove_outliers(knn_input, 16, 2.0); });
  report("outliers 6k k=16", t_knn_ser, t_knn_par, same_cloud(knn_par, knn_ser));

  // Gaussian augmentation.
  pc::AugmentSpec aug;
  aug.noise_std = 0.005;
  aug.drop_fraction = 0.1;
  pc::PointCloud aug_par, aug_ser;
  const double t_aug_par = time_one([&] { aug_par = pc::augment(cloud_par, aug, 17); });
  const double t_aug_ser = time_one([&] { aug_ser = ref::augment(cloud_ser, aug, 17); });
  report("augment 512k", t_aug_ser, t_aug_par, same_cloud(aug_par, aug_ser));

  // Episode collection, jobs 1 vs all cores.
  const config::SolverConfig cfg = config::parse_solver_config(R"(
task_name: OpenBox
category_name: Articulated
tool_keypoint_name_list: [tool_head, tool_tail, tool_side]
object_keypoint_name_list: [articulated_object_head]
constraint_list:
- keypoint_name: tool_head
  target_keypoint_name: articulated_object_head
  tolerance: 0.0001
  type: point2point_constraint
- axis_from_keypoint_name: tool_head
  axis_to_keypoint_name: tool_side
  target_axis: [0, 1.0, 0]
  target_axis_frame: object
  tolerance: 0.01
  target_inner_product: 1
  type: frame_axis_parallel
pre_actuation_motions:
- [translate_z, 0.1]
post_actuation_motions:
- [rotate, 1.9]
)");
  data::RandomizationSpec rand_spec;
  data::CollectParams params;
  params.runs = 1;
  params.episodes_per_run = 16;
  params.seed = 5;
  data::CollectResult serial_result, parallel_result;
  params.jobs = 1;
  const double t_collect_ser =
      time_one([&] { serial_result = data::collect(task, cfg, lib, rand_spec, params); });
  params.jobs = 0;  // all cores
  const double t_collect_par =
      time_one([&] { parallel_result = data::collect(task, cfg, lib, rand_spec, params); });
  report("collect 16 episodes", t_collect_ser, t_collect_par,
         serial_result.report.to_yaml() == parallel_result.report.to_yaml() &&
             serial_result.successes == parallel_result.successes);

  return 0;
}
